use amoments::arith::{factor, is_fundamental, kronecker};
use amoments::moments::{first_moment_lhs, first_moment_rhs, kth_moment_identity_check, Setting, Weight};
use amoments::quadform::class_group;
use amoments::redei::{g_detector, g_twisted_eps, rk4_narrow};
use amoments::selmer::{
    build_selmer_matrix, descent_selmer_oracle, f_r, full_condition_kernel_size, g_r, selmer_condition_kernel,
    CurveData,
};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use proptest::prelude::*;

fn curves() -> Vec<CurveData> {
    [(0, 1, -1), (0, 1, 2), (0, 2, 5)]
        .iter()
        .map(|&(a, b, c)| CurveData::new(a, b, c).unwrap())
        .collect()
}

fn squarefree(n: i64) -> bool {
    factor(n).unwrap().is_squarefree()
}

/// h(Δ) for Δ < −4 from the analytic class number formula.
fn analytic_h(d: i64) -> i64 {
    let s: i64 = (1..-d).map(|a| a * kronecker(d, a).unwrap() as i64).sum();
    -s / -d
}

#[test]
fn class_numbers_match_analytic_formula() {
    for d in (-3000i64..-4).filter(|&d| is_fundamental(d)) {
        let g = class_group(d, false).unwrap();
        assert_eq!(g.invariants.iter().product::<u64>() as i64, analytic_h(d), "Δ = {d}");
    }
}

#[test]
fn two_rank_is_genus_count() {
    for d in (-5000i64..5000).filter(|&d| d != 1 && is_fundamental(d)) {
        let omega = factor(d).unwrap().omega();
        let g = class_group(d, true).unwrap();
        assert_eq!(g.torsion(2), 1 << (omega - 1), "Δ = {d}");
    }
}

#[test]
fn congruent_number_twists() {
    // y² = x³ − d²x: positive rank for 5, 6, 7, 13, 14, 15; Selmer trivial
    // beyond torsion for primes ≡ 3 mod 8.
    let e = curves().remove(0);
    for d in [5, 6, 7, 13, 14, 15] {
        assert!(descent_selmer_oracle(&e, d).unwrap() >= 8, "d = {d}");
    }
    for p in [3, 11, 19, 43, 59, 67, 83] {
        assert_eq!(descent_selmer_oracle(&e, p).unwrap(), 4, "p = {p}");
    }
}

#[test]
fn index_bound_on_full_kernel() {
    for e in curves() {
        let bound = 1u64 << (2 * (e.omega_primes().len() + 1));
        for t in (1..=500i64).filter(|&t| e.is_coprime_to_omega(t) && squarefree(t)) {
            let sub = selmer_condition_kernel(&e, t).unwrap().len() as u64;
            let full = full_condition_kernel_size(&e, t).unwrap();
            assert!(full <= bound * sub, "{e:?}, t = {t}: {full} > {bound}·{sub}");
        }
    }
}

#[test]
fn descent_bounded_by_matrix_kernel() {
    for e in curves() {
        let bound = 1u64 << (2 * (e.omega_primes().len() + 1));
        for t in (1..=300i64).filter(|&t| squarefree(t)) {
            for d in [t, -t] {
                let sel = descent_selmer_oracle(&e, d).unwrap();
                assert!(sel.is_power_of_two() && sel >= 4, "{e:?}, d = {d}: {sel}");
                assert!(sel <= bound * f_r(&e, d).unwrap(), "{e:?}, d = {d}");
            }
        }
    }
}

fn coprime_squarefree(max: i64) -> impl Strategy<Value = (usize, i64)> {
    (0usize..3, 1..=max).prop_filter("square-free and coprime to Ω", |&(c, t)| {
        curves()[c].is_coprime_to_omega(t) && squarefree(t)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rk4_agrees_with_forms(d in -30_000i64..30_000) {
        prop_assume!(d != 1 && is_fundamental(d));
        let m = if d % 4 == 0 { d / 4 } else { d };
        prop_assert_eq!(rk4_narrow(m).unwrap(), class_group(d, true).unwrap().rk_2k(2));
    }

    #[test]
    fn detector_sums_to_kernel(a in (1i64..5000).prop_map(|a| 2 * a + 1)) {
        prop_assume!(squarefree(a));
        let r = factor(a).unwrap().omega();
        for mask in 0u32..1 << r {
            let eps: Vec<u8> = (0..r).map(|i| (mask >> i & 1) as u8).collect();
            let g = BigRational::from_integer(BigInt::from(g_twisted_eps(a, &eps).unwrap()));
            prop_assert_eq!(g_detector(a, &eps).unwrap(), g);
        }
    }

    #[test]
    fn selmer_kernels_are_subgroups((c, t) in coprime_squarefree(5000)) {
        let e = &curves()[c];
        let k = selmer_condition_kernel(e, t).unwrap();
        prop_assert!(k.len().is_power_of_two());
        prop_assert!(k.contains(&(1, 1)));
        prop_assert_eq!(build_selmer_matrix(e, t, None).unwrap().kernel_size(), k.len() as u64);
        prop_assert_eq!(build_selmer_matrix(e, t, Some(1)).unwrap().kernel_size(), k.len() as u64);
    }

    #[test]
    fn twisted_kernel_is_periodic((c, t) in coprime_squarefree(3000), alpha in -3000i64..3000) {
        prop_assume!(alpha.gcd(&t) == 1);
        let e = &curves()[c];
        prop_assert_eq!(g_r(e, t, alpha).unwrap(), g_r(e, t, alpha + t).unwrap());
        prop_assert_eq!(g_r(e, t, 1).unwrap(), f_r(e, t).unwrap());
        let sq = alpha * alpha;
        prop_assert_eq!(g_r(e, t, sq).unwrap(), f_r(e, t).unwrap());
    }

    #[test]
    fn first_moment_with_rational_weight(p in 0i64..20, q in 1i64..20, x in 1u64..120) {
        let w = Weight::Kappa(BigRational::new(p.into(), q.into()));
        prop_assert_eq!(first_moment_lhs(x, &w).unwrap(), first_moment_rhs(x, &w).unwrap());
    }
}

#[test]
fn class_expansion_with_rational_weight() {
    let w = Weight::Kappa(BigRational::new(3.into(), 7.into()));
    for x in [1, 15, 33, 80] {
        assert!(
            kth_moment_identity_check(Setting::Class, None, x, 1, &w)
                .unwrap()
                .holds(),
            "X = {x}"
        );
    }
    let e = curves().remove(1);
    assert!(kth_moment_identity_check(Setting::Selmer, Some(&e), 40, 1, &w)
        .unwrap()
        .holds());
}
