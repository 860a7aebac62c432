//! Command dispatch. Every command renders CSV (header first) and reports
//! whether its checks passed.

use crate::args::*;
use crate::checkpoint::{config_hash, write_atomic};
use crate::error::CliError;
use crate::parallel::{partition_and_reduce, run_chunks, segmented_chunks, Chunk, RunOptions};
use amoments::arith::{factor, fundamental_discriminants, Sign};
use amoments::density::{check_level_distribution, frobenian_average, h3_excess_range, h3_expected, Poly};
use amoments::moments::{
    first_moment_sweep, fit_exponent, format_sig15, kth_moment_identity_sweep, max_unlinked, oscillation_normalized,
    torsion_moment_partial, torsion_moment_reports, weighted_moment_partial, CharSumTable, Coefficients, MomentReport,
    Normalization, OscillationRow, ReportValue, Setting, Weight,
};
use amoments::quadform::{class_group, write_cache, ClassGroupOracle, FormClassGroup};
use amoments::redei::{check_majorization_class, rk4_narrow};
use amoments::selmer::{
    build_selmer_matrix, check_majorization_selmer, check_submatrix_selmer, selmer_condition_kernel, CurveData,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;

/// The full description of a run: the parsed command line.
pub type ExperimentConfig = Cli;

const DEFAULT_CHUNK: u64 = 2000;

fn threads(cfg: &ExperimentConfig) -> usize {
    cfg.threads
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
        .max(1)
}

fn run_options(cfg: &ExperimentConfig, experiment: &str) -> RunOptions {
    // Output path, thread count and logging do not affect results.
    let canonical = format!("{:?};seed={};chunk_size={:?}", cfg.command, cfg.seed, cfg.chunk_size);
    RunOptions {
        threads: threads(cfg),
        checkpoint: cfg.checkpoint.clone(),
        experiment: experiment.to_string(),
        config_hash: config_hash(&canonical),
        halt_after: cfg.halt_after,
        verbose: cfg.verbose,
    }
}

fn int(v: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

fn as_u64(q: &BigRational) -> u64 {
    q.to_integer().to_u64().unwrap_or(u64::MAX)
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn curve(roots: [i64; 3]) -> Result<CurveData, CliError> {
    Ok(CurveData::new(roots[0], roots[1], roots[2])?)
}

fn emit(cfg: &ExperimentConfig, csv: &str) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => write_atomic(path, csv.as_bytes()),
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| CliError::io("writing stdout", e)),
    }
}

/// Runs one command, writing its CSV. `Ok(false)` means a check failed.
pub fn run(cfg: &ExperimentConfig) -> Result<bool, CliError> {
    let (csv, ok) = match &cfg.command {
        Command::Verify(v) => verify(cfg, v)?,
        Command::Identity(i) => identity(i)?,
        Command::Moment(m) => moment(cfg, m)?,
        Command::Unlinked(u) => unlinked(u)?,
        Command::Charsum(c) => charsum(cfg, c)?,
        Command::Density(d) => density(cfg, d)?,
        Command::Classgroup(c) => classgroup(c)?,
    };
    emit(cfg, &csv)?;
    Ok(ok)
}

fn verify(cfg: &ExperimentConfig, cmd: &VerifyCommand) -> Result<(String, bool), CliError> {
    match cmd {
        VerifyCommand::Redei { dmax, sign } => {
            let oracle = ClassGroupOracle::new((*dmax).max(3) as i64)?;
            let chunks = segmented_chunks(1, &[dmax + 1], cfg.chunk_size.unwrap_or(DEFAULT_CHUNK));
            let sign = sign.sign();
            let parts = run_chunks(&chunks, &run_options(cfg, "verify_redei"), |c| {
                redei_chunk(&oracle, c, sign).map_err(|e| e.to_string())
            })?;
            let mismatches: u64 = parts.iter().map(|p| as_u64(&p[1])).sum();
            let ok = mismatches == 0;
            Ok((format!("check,dmax,result\nredei_agreement,{dmax},{}\n", pass(ok)), ok))
        }
        VerifyCommand::Selmer {
            curve: roots,
            check,
            bound,
        } => {
            let e = curve(*roots)?;
            let chunk = cfg.chunk_size.unwrap_or(100);
            let (name, bad) = match check {
                SelmerCheck::Matrix => {
                    let bad = partition_and_reduce(
                        1..bound + 1,
                        chunk,
                        threads(cfg),
                        0u64,
                        |r| {
                            let mut bad = 0;
                            for t in r {
                                let t = t as i64;
                                if !e.is_coprime_to_omega(t) || !factor(t).map_err(|e| e.to_string())?.is_squarefree() {
                                    continue;
                                }
                                let lhs = build_selmer_matrix(&e, t, None)
                                    .map_err(|e| e.to_string())?
                                    .kernel_size();
                                let rhs = selmer_condition_kernel(&e, t).map_err(|e| e.to_string())?.len() as u64;
                                if lhs != rhs {
                                    eprintln!("mismatch at t = {t}: matrix {lhs}, local conditions {rhs}");
                                    bad += 1;
                                }
                            }
                            Ok(bad)
                        },
                        |a, b| a + b,
                    )?;
                    ("selmer_matrix", bad)
                }
                SelmerCheck::Descent => {
                    let bad = partition_and_reduce(
                        1..bound + 1,
                        chunk,
                        threads(cfg),
                        0u64,
                        |r| {
                            let mut bad = 0;
                            for t in r {
                                let t = t as i64;
                                if !factor(t).map_err(|e| e.to_string())?.is_squarefree() {
                                    continue;
                                }
                                for d in [t, -t] {
                                    let c = check_majorization_selmer(&e, d, 1).map_err(|e| e.to_string())?;
                                    if !c.holds {
                                        eprintln!("violation at d = {d}: {c:?}");
                                        bad += 1;
                                    }
                                }
                            }
                            Ok(bad)
                        },
                        |a, b| a + b,
                    )?;
                    ("selmer_descent", bad)
                }
            };
            let ok = bad == 0;
            Ok((format!("check,bound,result\n{name},{bound},{}\n", pass(ok)), ok))
        }
        VerifyCommand::Majorization {
            setting,
            pairs,
            k,
            bound,
            curve: roots,
        } => {
            if *bound < 2 {
                return Err(CliError::Usage("--bound must be at least 2".into()));
            }
            let e = curve(*roots)?;
            let sample = random_pairs(setting.setting(), &e, *pairs, *bound, cfg.seed)?;
            let bad = partition_and_reduce(
                0..sample.len() as u64,
                50,
                threads(cfg),
                0u64,
                |r| {
                    let mut bad = 0;
                    for i in r {
                        let (m, n) = sample[i as usize];
                        let holds = match setting {
                            SettingArg::Class => check_majorization_class(m, n, *k).map(|c| c.holds),
                            SettingArg::Selmer => check_submatrix_selmer(&e, m, n, *k).map(|c| c.2),
                        }
                        .map_err(|e| format!("({m}, {n}): {e}"))?;
                        if !holds {
                            eprintln!("violation at (m, n) = ({m}, {n})");
                            bad += 1;
                        }
                    }
                    Ok(bad)
                },
                |a, b| a + b,
            )?;
            let ok = bad == 0;
            Ok((
                format!(
                    "check,setting,k,pairs,result\nmajorization,{},{k},{pairs},{}\n",
                    setting.setting(),
                    pass(ok)
                ),
                ok,
            ))
        }
    }
}

fn redei_chunk(oracle: &ClassGroupOracle, c: &Chunk, sign: Sign) -> amoments::Result<Vec<BigRational>> {
    let (mut tested, mut bad) = (0u64, 0u64);
    for d in fundamental_discriminants(c.hi - 1, sign)? {
        if d.unsigned_abs() < c.lo {
            continue;
        }
        let m = if d % 4 == 0 { d / 4 } else { d };
        let redei = rk4_narrow(m)?;
        let forms = oracle.class_group(d, true)?.rk_2k(2);
        tested += 1;
        if redei != forms {
            eprintln!("mismatch at {d}: Rédei {redei}, forms {forms}");
            bad += 1;
        }
    }
    Ok(vec![int(tested), int(bad)])
}

/// Coprime square-free pairs: arbitrary signs for class groups (excluding
/// `m·n = 1`), positive and coprime to `Ω` for Selmer groups.
fn random_pairs(
    setting: Setting,
    e: &CurveData,
    count: u64,
    bound: i64,
    seed: u64,
) -> Result<Vec<(i64, i64)>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let sqf = |x: i64| factor(x).map(|f| f.is_squarefree());
    while (out.len() as u64) < count {
        let (m, n) = match setting {
            Setting::Class => (rng.gen_range(-bound..=bound), rng.gen_range(-bound..=bound)),
            Setting::Selmer => (rng.gen_range(1..=bound), rng.gen_range(1..=bound)),
        };
        if m == 0 || n == 0 || num_integer::gcd(m, n) != 1 || m * n == 1 || !sqf(m)? || !sqf(n)? {
            continue;
        }
        if setting == Setting::Selmer && !(e.is_coprime_to_omega(m) && e.is_coprime_to_omega(n)) {
            continue;
        }
        out.push((m, n));
    }
    Ok(out)
}

fn identity(cmd: &IdentityCommand) -> Result<(String, bool), CliError> {
    match cmd {
        IdentityCommand::FirstMoment { x, weight } => {
            let w: Weight = weight.parse()?;
            let failure = first_moment_sweep(*x, &w)?;
            if let Some(at) = failure {
                eprintln!("first moment identity fails at X = {at}");
            }
            let ok = failure.is_none();
            Ok((format!("check,X,result\nfirst_moment,{x},{}\n", equal(ok)), ok))
        }
        IdentityCommand::KMoment {
            setting,
            x,
            k,
            weight,
            curve: roots,
        } => {
            let w: Weight = weight.parse()?;
            let e = curve(*roots)?;
            let failure = kth_moment_identity_sweep(setting.setting(), Some(&e), *x, *k, &w)?;
            if let Some(at) = failure {
                eprintln!("k-th moment identity fails at X = {at}");
            }
            let ok = failure.is_none();
            Ok((
                format!(
                    "check,setting,k,X,weight,result\nk_moment,{},{k},{x},{},{}\n",
                    setting.setting(),
                    w.name(),
                    equal(ok)
                ),
                ok,
            ))
        }
    }
}

fn equal(ok: bool) -> &'static str {
    if ok {
        "EQUAL"
    } else {
        "UNEQUAL"
    }
}

fn sorted_bounds(xs: &[u64]) -> Result<Vec<u64>, CliError> {
    let mut xs = xs.to_vec();
    xs.sort_unstable();
    xs.dedup();
    if xs.first().is_none_or(|&x| x == 0) {
        return Err(CliError::Usage("need at least one positive X".into()));
    }
    Ok(xs)
}

/// Running totals of the per-chunk partial sums at the end of each segment.
fn segment_totals(
    chunks: &[Chunk],
    parts: &[Vec<BigRational>],
    segments: usize,
    width: usize,
) -> Vec<Vec<BigRational>> {
    let mut acc = vec![BigRational::zero(); width];
    let mut out = Vec::with_capacity(segments);
    let mut next = 0;
    for tag in 0..segments {
        while next < chunks.len() && chunks[next].tag == tag {
            for (a, v) in acc.iter_mut().zip(&parts[next]) {
                *a += v;
            }
            next += 1;
        }
        out.push(acc.clone());
    }
    out
}

fn moment(cfg: &ExperimentConfig, cmd: &MomentCommand) -> Result<(String, bool), CliError> {
    let mut csv = format!("{}\n", MomentReport::CSV_HEADER);
    let mut ok = true;
    match cmd {
        MomentCommand::Class {
            x,
            k,
            sign,
            experiment,
            weight,
        } => {
            let xs = sorted_bounds(x)?;
            let ends: Vec<u64> = xs.iter().map(|x| x + 1).collect();
            let chunks = segmented_chunks(1, &ends, cfg.chunk_size.unwrap_or(DEFAULT_CHUNK));
            match experiment {
                ClassExperiment::Torsion => {
                    let sign = sign.sign();
                    let oracle = ClassGroupOracle::new(xs[xs.len() - 1].max(3) as i64)?;
                    let parts = run_chunks(&chunks, &run_options(cfg, "moment_class_torsion"), |c| {
                        torsion_moment_partial(&oracle, c.lo, c.hi, *k, sign)
                            .map(|(e, m)| vec![int(e), int(m)])
                            .map_err(|e| e.to_string())
                    })?;
                    for (x, tot) in xs.iter().zip(segment_totals(&chunks, &parts, xs.len(), 2)) {
                        let (exact, majorant) = (as_u64(&tot[0]), as_u64(&tot[1]));
                        ok &= majorant >= exact;
                        for r in torsion_moment_reports(*x, *k, sign, exact, majorant) {
                            csv.push_str(&r.csv_row());
                            csv.push('\n');
                        }
                    }
                }
                ClassExperiment::Weighted => {
                    let w: Weight = weight.parse()?;
                    let parts = run_chunks(&chunks, &run_options(cfg, "moment_class_weighted"), |c| {
                        weighted_moment_partial(c.lo, c.hi, *k, &w)
                            .map(|v| vec![v])
                            .map_err(|e| e.to_string())
                    })?;
                    for (x, tot) in xs.iter().zip(segment_totals(&chunks, &parts, xs.len(), 1)) {
                        let r = MomentReport {
                            experiment: "weighted_moment".into(),
                            setting: "class".into(),
                            x: *x,
                            k: *k,
                            sign: None,
                            weight: w.name(),
                            value: ReportValue::Exact(tot[0].clone()),
                            normalization: Normalization::EulerProduct(w.clone()),
                        };
                        csv.push_str(&r.csv_row());
                        csv.push('\n');
                    }
                }
            }
        }
        MomentCommand::Selmer {
            curve: roots,
            poly,
            b,
            k,
        } => {
            let e = curve(*roots)?;
            let p: Poly = poly.parse()?;
            let coeffs = p.univariate_coeffs()?;
            for r in amoments::moments::fibration_experiment(&coeffs, &e, &sorted_bounds(b)?, *k)? {
                csv.push_str(&r.csv_row());
                csv.push('\n');
            }
        }
    }
    Ok((csv, ok))
}

fn unlinked(args: &UnlinkedArgs) -> Result<(String, bool), CliError> {
    let setting = args.setting.setting();
    let set = max_unlinked(setting, args.k)?;
    let bound = 1usize << (setting.block_size() / 2 * args.k);
    let ok = set.size() <= bound;
    if let Some(path) = &args.witness_out {
        let mut w = String::from("index,vector\n");
        for (i, v) in set.witness.iter().enumerate() {
            w.push_str(&format!("{i},{v}\n"));
        }
        write_atomic(path, w.as_bytes())?;
    }
    Ok((
        format!(
            "check,setting,k,size\nmax_unlinked,{setting},{},{}\n",
            args.k,
            set.size()
        ),
        ok,
    ))
}

fn charsum(cfg: &ExperimentConfig, args: &CharsumArgs) -> Result<(String, bool), CliError> {
    let scheme: Coefficients = args.scheme.parse()?;
    let tables = args
        .z
        .iter()
        .map(|&z| CharSumTable::new(args.x, z, scheme))
        .collect::<amoments::Result<Vec<_>>>()?;
    let size = cfg.chunk_size.unwrap_or(DEFAULT_CHUNK).max(1);
    let mut chunks = Vec::new();
    for (tag, t) in tables.iter().enumerate() {
        let (a, b) = t.m2_range();
        let mut lo = a;
        while lo < b {
            let hi = (lo + size).min(b);
            chunks.push(Chunk { tag, lo, hi });
            lo = hi;
        }
    }
    let parts = run_chunks(&chunks, &run_options(cfg, "charsum"), |c| {
        let s = tables[c.tag].partial(c.lo, c.hi);
        Ok(vec![BigRational::from_integer(BigInt::from(s))])
    })?;
    let mut sums = vec![0i64; tables.len()];
    for (c, p) in chunks.iter().zip(&parts) {
        sums[c.tag] += p[0].to_integer().to_i64().unwrap_or(0);
    }
    let mut csv = String::from("X,z,scheme,sum,normalized\n");
    let mut rows = Vec::new();
    for (&z, &sum) in args.z.iter().zip(&sums) {
        let normalized = oscillation_normalized(args.x, z, sum, args.log_power);
        csv.push_str(&format!(
            "{},{z},{},{sum},{}\n",
            args.x,
            scheme.name(),
            format_sig15(normalized)
        ));
        rows.push(OscillationRow { z, sum, normalized });
    }
    if let Some(b) = fit_exponent(&rows) {
        eprintln!("fitted decay exponent {}", format_sig15(b));
    }
    Ok((csv, true))
}

fn density(cfg: &ExperimentConfig, args: &DensityArgs) -> Result<(String, bool), CliError> {
    let mut csv = String::from("quantity,parameter,value\n");
    match args.quantity {
        DensityQuantity::Level => {
            let p: Poly = args.poly.parse()?;
            let r = check_level_distribution(&p, args.pmax, args.b)?;
            let param = format!("pmax={};B={}", args.pmax, args.b);
            for (name, v) in [
                ("max_p_h_p", r.max_p_h_p),
                ("max_p2_h_p2", r.max_p2_h_p2),
                ("max_eps_deviation", r.max_eps_deviation),
                ("max_box_deviation", r.max_box_deviation),
                ("box_constant", r.box_constant),
                ("theta", r.theta),
            ] {
                csv.push_str(&format!("{name},{param},{}\n", format_sig15(v)));
            }
        }
        DensityQuantity::Frobenian => {
            let p: Poly = args.poly.parse()?;
            let r = frobenian_average(&p, args.pmax)?;
            let param = format!("pmax={}", args.pmax);
            csv.push_str(&format!("root_count_average,{param},{}\n", r.average));
            csv.push_str(&format!("prime_count,{param},{}\n", r.prime_count));
            csv.push_str(&format!("irreducible_factors,{param},{}\n", r.factor_count));
        }
        DensityQuantity::H3 => {
            let sign = args.sign.sign();
            let oracle = ClassGroupOracle::new(args.x.max(3) as i64)?;
            let chunks = segmented_chunks(1, &[args.x], cfg.chunk_size.unwrap_or(10_000));
            let parts = run_chunks(&chunks, &run_options(cfg, "density_h3"), |c| {
                h3_excess_range(&oracle, c.lo, c.hi, args.m, sign)
                    .map(|s| vec![int(s)])
                    .map_err(|e| e.to_string())
            })?;
            let sum: u64 = parts.iter().map(|p| as_u64(&p[0])).sum();
            let expected = h3_expected(args.x, args.m, sign)?;
            let param = format!(
                "X={};m={};sign={}",
                args.x,
                args.m,
                if sign == Sign::Negative { "neg" } else { "pos" }
            );
            csv.push_str(&format!("h3_excess_sum,{param},{sum}\n"));
            csv.push_str(&format!("h3_main_term,{param},{}\n", format_sig15(expected)));
            csv.push_str(&format!("h3_ratio,{param},{}\n", format_sig15(sum as f64 / expected)));
        }
    }
    Ok((csv, true))
}

fn classgroup(args: &ClassgroupArgs) -> Result<(String, bool), CliError> {
    let groups: Vec<FormClassGroup> = match (args.d, args.dmax) {
        (Some(d), None) => vec![class_group(d, args.narrow)?],
        (None, Some(dmax)) => {
            let oracle = ClassGroupOracle::new(dmax.max(3) as i64)?;
            fundamental_discriminants(dmax, args.sign.sign())?
                .map(|d| oracle.class_group(d, args.narrow))
                .collect::<amoments::Result<_>>()?
        }
        _ => return Err(CliError::Usage("give exactly one of --d and --dmax".into())),
    };
    if let Some(path) = &args.cache {
        write_cache(path, &groups).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    }
    let mut csv = String::from("delta,narrow,h,invariants\n");
    for g in &groups {
        let inv: Vec<String> = g.invariants.iter().map(|d| d.to_string()).collect();
        csv.push_str(&format!("{},{},{},{}\n", g.disc, g.narrow, g.h, inv.join(" ")));
    }
    Ok((csv, true))
}
