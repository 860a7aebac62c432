//! The twelve acceptance criteria, one line of output each. Exits non-zero
//! if any criterion fails.

use amoments::arith::{factor, fundamental_discriminants, jacobi_unchecked, Sign};
use amoments::density::{h3_excess_range, h3_expected};
use amoments::moments::{
    check_p_identity, first_moment_lhs, first_moment_rhs, first_moment_sweep, kth_moment_identity_sweep, max_unlinked,
    oscillation_experiment, torsion_moment_experiment, Coefficients, Setting, Weight,
};
use amoments::quadform::ClassGroupOracle;
use amoments::redei::{check_majorization_class, g_detector, g_twisted, g_twisted_eps, rk4_narrow};
use amoments::selmer::{
    build_selmer_matrix, check_majorization_selmer, check_submatrix_selmer, descent_selmer_oracle,
    selmer_condition_kernel, CurveData,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn curves() -> Vec<CurveData> {
    [(0, 1, -1), (0, 1, 2), (0, 2, 5)]
        .iter()
        .map(|&(a, b, c)| CurveData::new(a, b, c).unwrap())
        .collect()
}

fn squarefree(n: i64) -> bool {
    factor(n).unwrap().is_squarefree()
}

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn redei_agreement() -> Outcome {
    let oracle = ClassGroupOracle::new(100_000).unwrap();
    let mut tested = 0;
    let mut bad = Vec::new();
    for (sign, bound) in [(Sign::Negative, 100_000), (Sign::Positive, 10_000)] {
        for d in fundamental_discriminants(bound, sign).unwrap() {
            let m = if d % 4 == 0 { d / 4 } else { d };
            tested += 1;
            if rk4_narrow(m).unwrap() != oracle.class_group(d, true).unwrap().rk_2k(2) {
                bad.push(d);
            }
        }
    }
    ensure(
        bad.is_empty(),
        format!("{} mismatches over {tested} discriminants {bad:?}", bad.len()),
    )
}

fn detector_kernel() -> Outcome {
    let mut cases = 0;
    for a in (1..=3000i64).step_by(2).filter(|&a| squarefree(a)) {
        let primes: Vec<u64> = factor(a).unwrap().primes().collect();
        let r = primes.len();
        for mask in 0u32..(1 << r) {
            let eps: Vec<u8> = (0..r).map(|i| (mask >> i & 1) as u8).collect();
            let g = g_twisted_eps(a, &eps).unwrap();
            if g_detector(a, &eps).unwrap() != BigRational::from_integer(BigInt::from(g)) {
                return Err(format!("a = {a}, ε = {eps:?}"));
            }
            cases += 1;
        }
        // The twist class of an explicit α.
        for alpha in (-40i64..=40).filter(|&x| x != 0 && num_integer::gcd(x, a) == 1) {
            let eps: Vec<u8> = primes
                .iter()
                .map(|&p| (jacobi_unchecked(alpha, p) == -1) as u8)
                .collect();
            if g_twisted(a, alpha).unwrap() != g_twisted_eps(a, &eps).unwrap() {
                return Err(format!("a = {a}, α = {alpha}"));
            }
        }
    }
    Ok(format!("{cases} (a, ε) pairs equal"))
}

fn first_moment() -> Outcome {
    let five_halves = BigRational::new(5.into(), 2.into());
    if first_moment_lhs(3, &Weight::One).unwrap() != five_halves
        || first_moment_rhs(3, &Weight::One).unwrap() != five_halves
    {
        return Err("X = 3 spot value differs from 5/2".into());
    }
    for w in [Weight::One, Weight::TwoOmega, Weight::Tau] {
        if let Some(x) = first_moment_sweep(500, &w).unwrap() {
            return Err(format!("F = {w}: first difference at X = {x}"));
        }
    }
    Ok("lhs = rhs for all X ≤ 500, F ∈ {1, 2^ω, τ}; X = 3 gives 5/2".into())
}

fn kth_moment() -> Outcome {
    let mut runs = vec![(Setting::Class, None, 200, 1), (Setting::Class, None, 60, 2)];
    let cs = curves();
    for c in &cs {
        runs.push((Setting::Selmer, Some(c), 60, 1));
    }
    for (setting, curve, x, k) in runs {
        for w in [Weight::One, Weight::TwoOmega] {
            if let Some(at) = kth_moment_identity_sweep(setting, curve, x, k, &w).unwrap() {
                return Err(format!("{setting} k = {k} F = {w}: differs at X = {at}"));
            }
        }
    }
    Ok("class k=1 X ≤ 200, class k=2 X ≤ 60, selmer k=1 X ≤ 60 on three curves".into())
}

fn selmer_matrix() -> Outcome {
    let mut tested = 0;
    for e in curves() {
        for t in (1..=2000i64).filter(|&t| e.is_coprime_to_omega(t) && squarefree(t)) {
            let lhs = build_selmer_matrix(&e, t, None).unwrap().kernel_size();
            let rhs = selmer_condition_kernel(&e, t).unwrap().len() as u64;
            if lhs != rhs {
                return Err(format!("{e:?}, t = {t}: {lhs} vs {rhs}"));
            }
            tested += 1;
        }
    }
    Ok(format!("{tested} (curve, t) pairs agree"))
}

fn descent_majorization() -> Outcome {
    let e = CurveData::new(0, 1, -1).unwrap();
    let sel1 = descent_selmer_oracle(&e, 1).unwrap();
    if sel1 != 4 {
        return Err(format!("|Sel²(E_1)| = {sel1}"));
    }
    let mut tested = 0;
    for t in (1..=2000i64).filter(|&t| squarefree(t)) {
        for d in [t, -t] {
            let c = check_majorization_selmer(&e, d, 1).unwrap();
            if !c.holds {
                return Err(format!("d = {d}: {c:?}"));
            }
            tested += 1;
        }
    }
    Ok(format!("{tested} twists, no violations; |Sel²(E_1)| = 4"))
}

fn random_majorization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut class_pairs = 0;
    while class_pairs < 1000 {
        let m: i64 = rng.gen_range(-10_000..=10_000);
        let n: i64 = rng.gen_range(-10_000..=10_000);
        if m == 0 || n == 0 || m * n == 1 || num_integer::gcd(m, n) != 1 || !squarefree(m) || !squarefree(n) {
            continue;
        }
        for k in [1, 2] {
            if !check_majorization_class(m, n, k).unwrap().holds {
                return Err(format!("class (m, n) = ({m}, {n}), k = {k}"));
            }
        }
        class_pairs += 1;
    }
    let mut selmer_pairs = 0;
    for e in curves() {
        let mut count = 0;
        while count < 1000 {
            let m: i64 = rng.gen_range(1..=10_000);
            let n: i64 = rng.gen_range(1..=10_000);
            if num_integer::gcd(m, n) != 1 || !e.is_coprime_to_omega(m * n) || !squarefree(m) || !squarefree(n) {
                continue;
            }
            for k in [1, 2] {
                if !check_submatrix_selmer(&e, m, n, k).unwrap().2 {
                    return Err(format!("selmer {e:?} (m, n) = ({m}, {n}), k = {k}"));
                }
            }
            count += 1;
        }
        selmer_pairs += count;
    }
    Ok(format!(
        "{class_pairs} class pairs, {selmer_pairs} Selmer pairs, k ∈ {{1, 2}}"
    ))
}

fn unlinked() -> Outcome {
    for k in 1..=3 {
        let s = max_unlinked(Setting::Class, k).unwrap().size();
        if s != 1 << k {
            return Err(format!("class k = {k}: {s}"));
        }
    }
    for k in 1..=2 {
        let s = max_unlinked(Setting::Selmer, k).unwrap().size();
        if s != 1 << (2 * k) {
            return Err(format!("selmer k = {k}: {s}"));
        }
    }
    for k in 1..=4 {
        if !check_p_identity(k).unwrap() {
            return Err(format!("P identity fails for k = {k}"));
        }
    }
    Ok("class 2, 4, 8; selmer 4, 16; P identity for k ≤ 4".into())
}

fn h3_level() -> Outcome {
    let oracle = ClassGroupOracle::new(1_000_000).unwrap();
    let mut sum = 0;
    let mut lo = 1;
    let mut ratios = Vec::new();
    for x in [10_000u64, 100_000, 1_000_000] {
        sum += h3_excess_range(&oracle, lo, x, 1, Sign::Negative).unwrap();
        lo = x;
        ratios.push(sum as f64 / h3_expected(x, 1, Sign::Negative).unwrap());
    }
    let ok = (ratios[2] - 1.0).abs() <= 0.30
        && (ratios[1] - 1.0).abs() <= 0.40
        && (ratios[2] - 1.0).abs() < (ratios[0] - 1.0).abs();
    ensure(
        ok,
        format!(
            "ratios at 1e4, 1e5, 1e6: {:.4}, {:.4}, {:.4}",
            ratios[0], ratios[1], ratios[2]
        ),
    )
}

fn torsion_moment() -> Outcome {
    let reports = torsion_moment_experiment(&[10_000, 100_000], 1, Sign::Negative).unwrap();
    let (e1, m1, e2, m2) = (&reports[0], &reports[1], &reports[2], &reports[3]);
    let dominated = m1.value.to_f64() >= e1.value.to_f64() && m2.value.to_f64() >= e2.value.to_f64();
    let (a, b) = (e1.normalized(), e2.normalized());
    let spread = (a - b).abs() / a.min(b);
    ensure(
        dominated && spread < 0.5,
        format!(
            "normalized {a:.4} vs {b:.4} (spread {:.1}%), majorant dominates: {dominated}",
            100.0 * spread
        ),
    )
}

fn oscillation() -> Outcome {
    let r = oscillation_experiment(1_000_000, &[10, 100, 1000], Coefficients::Mu2, 3).unwrap();
    let n: Vec<f64> = r.rows.iter().map(|row| row.normalized).collect();
    let ok = n.windows(2).all(|w| w[1] <= w[0]);
    let sums: Vec<i64> = r.rows.iter().map(|row| row.sum).collect();
    ensure(
        ok,
        format!(
            "sums {sums:?}, normalized {}",
            n.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn run_cli(args: &[&str], threads: &str) -> std::process::ExitStatus {
    Command::new(env!("CARGO_BIN_EXE_amoments"))
        .args(args)
        .args(["--threads", threads])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .expect("binary runs")
}

fn args(v: &[String]) -> Vec<&str> {
    v.iter().map(|s| s.as_str()).collect()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_default()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = |name: &str| dir.path().join(name);
    let base = [
        "moment",
        "class",
        "--x",
        "10000,100000",
        "--k",
        "1",
        "--sign",
        "neg",
        "--chunk-size",
        "1000",
    ];
    let with = |extra: &[&str]| -> Vec<String> { base.iter().chain(extra).map(|s| s.to_string()).collect() };

    let one = with(&["--out", out("t1.csv").to_str().unwrap()]);
    let eight = with(&["--out", out("t8.csv").to_str().unwrap()]);
    if !run_cli(&args(&one), "1").success() || !run_cli(&args(&eight), "8").success() {
        return Err("uninterrupted run failed".into());
    }
    let reference = read(&out("t1.csv"));
    if reference.is_empty() || reference != read(&out("t8.csv")) {
        return Err("1 vs 8 threads differ".into());
    }

    // Interrupted at a chunk boundary, then resumed.
    let cp = out("halt.cp");
    let halted = with(&[
        "--out",
        out("halt.csv").to_str().unwrap(),
        "--checkpoint",
        cp.to_str().unwrap(),
    ]);
    let mut first = args(&halted);
    first.extend(["--halt-after", "17"]);
    if run_cli(&first, "2").success() {
        return Err("halted run exited cleanly".into());
    }
    let partial = String::from_utf8(read(&cp)).unwrap_or_default();
    let done = partial.lines().filter(|l| l.starts_with("chunk.")).count();
    if done != 17 || out("halt.csv").exists() {
        return Err(format!("checkpoint after halt holds {done} chunks"));
    }
    if !run_cli(&args(&halted), "8").success() || read(&out("halt.csv")) != reference {
        return Err("resumed run differs".into());
    }

    // A real kill at an arbitrary moment.
    let cp = out("kill.cp");
    let killed = with(&[
        "--out",
        out("kill.csv").to_str().unwrap(),
        "--checkpoint",
        cp.to_str().unwrap(),
    ]);
    let mut child = Command::new(env!("CARGO_BIN_EXE_amoments"))
        .args(args(&killed))
        .args(["--threads", "1"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let start = Instant::now();
    while start.elapsed() < Duration::from_secs(60) {
        if read(&cp).iter().filter(|&&b| b == b'\n').count() > 5 {
            break;
        }
        std::thread::sleep(Duration::from_millis(2));
    }
    let _ = child.kill();
    let _ = child.wait();
    let at_kill = String::from_utf8(read(&cp))
        .unwrap_or_default()
        .lines()
        .filter(|l| l.starts_with("chunk."))
        .count();
    if !run_cli(&args(&killed), "8").success() || read(&out("kill.csv")) != reference {
        return Err("run resumed after kill differs".into());
    }
    Ok(format!(
        "1 vs 8 threads identical; resume after halt at 17 chunks and after kill at {at_kill} chunks identical"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("Rédei 4-rank vs form class groups", redei_agreement),
        ("detector = twisted kernel", detector_kernel),
        ("first-moment identity", first_moment),
        ("k-th moment expansion", kth_moment),
        ("Selmer matrix vs local conditions", selmer_matrix),
        ("descent majorization", descent_majorization),
        ("random majorization pairs", random_majorization),
        ("unlinked maxima and P identity", unlinked),
        ("h3 level of distribution", h3_level),
        ("h6 moment stability", torsion_moment),
        ("oscillation decay", oscillation),
        ("determinism and resumption", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 12 criteria passed");
}
