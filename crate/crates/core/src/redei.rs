//! Rédei matrices, their diagonal twists, and the majorants built from
//! their kernels.

use crate::arith::{
    additive, discriminant, factor, jacobi_unchecked, kronecker_unchecked, prime_discriminant_decompose, FactoredInt,
    PrimeDiscriminant,
};
use crate::error::{Error, Result};
use crate::gf2::Gf2Matrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// The Rédei matrix of a quadratic field together with the data it is
/// built from.
#[derive(Debug, Clone)]
pub struct RedeiSystem {
    pub m: i64,
    pub delta: i64,
    pub primes: Vec<u64>,
    pub rho: Vec<PrimeDiscriminant>,
    pub matrix: Gf2Matrix,
}

/// Builds `R(m)` for square-free `m ∉ {0, 1}`.
///
/// Entry `(i, j)` with `i ≠ j` is the additive value of `ρ_j` at the
/// Frobenius of `p_i`; diagonal entries make every row sum to zero.
pub fn build_redei(m: i64) -> Result<RedeiSystem> {
    let delta = discriminant(m)?;
    let rho = prime_discriminant_decompose(delta)?;
    let r = rho.len();
    let mut matrix = Gf2Matrix::zeros(r, r);
    for i in 0..r {
        let p = rho[i].prime as i64;
        let mut diag = false;
        for j in 0..r {
            if i != j {
                let e = additive(kronecker_unchecked(rho[j].value, p)) == 1;
                matrix.set(i, j, e);
                diag ^= e;
            }
        }
        matrix.set(i, i, diag);
    }
    Ok(RedeiSystem {
        m,
        delta,
        primes: rho.iter().map(|q| q.prime).collect(),
        rho,
        matrix,
    })
}

/// 4-rank of the narrow class group of `ℚ(√m)`, read off from `R(m)`.
///
/// ```
/// use amoments::redei::rk4_narrow;
/// assert_eq!(rk4_narrow(-14).unwrap(), 1);
/// assert_eq!(rk4_narrow(-5).unwrap(), 0);
/// ```
pub fn rk4_narrow(m: i64) -> Result<u32> {
    let sys = build_redei(m)?;
    Ok((sys.primes.len() - 1 - sys.matrix.rank()) as u32)
}

/// The twisted matrix `R(a, α)`, recorded through the twist class `ε`.
#[derive(Debug, Clone)]
pub struct TwistedRedei {
    pub a: i64,
    pub primes: Vec<u64>,
    pub epsilon: Vec<u8>,
    pub matrix: Gf2Matrix,
}

/// Odd primes of the square-free part of `a`.
pub fn twist_primes(a: i64) -> Result<Vec<u64>> {
    let f = factor(a)?;
    Ok(odd_squarefree_primes(&f))
}

fn odd_squarefree_primes(f: &FactoredInt) -> Vec<u64> {
    f.factors()
        .iter()
        .filter(|&&(p, e)| p != 2 && e % 2 == 1)
        .map(|&(p, _)| p)
        .collect()
}

impl TwistedRedei {
    /// The twist of `a` by an integer `α` coprime to `a`.
    pub fn new(a: i64, alpha: i64) -> Result<Self> {
        if a == 0 {
            return Err(Error::Zero);
        }
        if a.gcd(&alpha) != 1 {
            return Err(Error::NotCoprime(a, alpha));
        }
        let primes = twist_primes(a)?;
        let epsilon = primes.iter().map(|&q| additive(jacobi_unchecked(alpha, q))).collect();
        Ok(Self::from_primes(a, primes, epsilon))
    }

    /// The twist of `a` by the class `ε ∈ GF(2)^r` directly.
    pub fn with_epsilon(a: i64, epsilon: &[u8]) -> Result<Self> {
        if a == 0 {
            return Err(Error::Zero);
        }
        let primes = twist_primes(a)?;
        if primes.len() != epsilon.len() {
            return Err(Error::Dimension {
                expected: primes.len(),
                got: epsilon.len(),
            });
        }
        Ok(Self::from_primes(a, primes, epsilon.to_vec()))
    }

    pub(crate) fn from_primes(a: i64, primes: Vec<u64>, epsilon: Vec<u8>) -> Self {
        let r = primes.len();
        let mut matrix = Gf2Matrix::zeros(r, r);
        for i in 0..r {
            let mut diag = epsilon[i] & 1 == 1;
            for j in 0..r {
                if i != j {
                    let e = additive(jacobi_unchecked(primes[j] as i64, primes[i])) == 1;
                    matrix.set(i, j, e);
                    diag ^= e;
                }
            }
            matrix.set(i, i, diag);
        }
        TwistedRedei {
            a,
            primes,
            epsilon,
            matrix,
        }
    }

    pub fn kernel_size(&self) -> u64 {
        self.matrix.kernel_size().expect("at most 15 primes at supported sizes")
    }
}

/// `g(a, α) = |ker R(a, α)|`.
///
/// ```
/// use amoments::redei::g_twisted;
/// assert_eq!(g_twisted(15, 1).unwrap(), 2);
/// assert_eq!(g_twisted(15, 7).unwrap(), 1);
/// ```
pub fn g_twisted(a: i64, alpha: i64) -> Result<u64> {
    Ok(TwistedRedei::new(a, alpha)?.kernel_size())
}

/// `g(a, ε)` for a twist class given directly.
pub fn g_twisted_eps(a: i64, epsilon: &[u8]) -> Result<u64> {
    Ok(TwistedRedei::with_epsilon(a, epsilon)?.kernel_size())
}

fn check_odd_squarefree(a: i64) -> Result<FactoredInt> {
    if a <= 0 || a % 2 == 0 {
        return Err(Error::Invalid(format!("{a} must be odd and positive")));
    }
    let f = factor(a)?;
    if !f.is_squarefree() {
        return Err(Error::NotSquarefree(a));
    }
    Ok(f)
}

/// Evaluates `g(a, ε)` through the divisor-sum detector
/// `Σ_{d | a} 2^{-r} ∏_{p | d} (1 + t_p ((a/d)/p)) ∏_{p | a/d} (1 + (d/p))`
/// with `t_p = (−1)^{ε_p}`.
///
/// ```
/// use amoments::redei::g_detector;
/// use num_rational::BigRational;
/// assert_eq!(g_detector(3, &[0]).unwrap(), BigRational::from_integer(2.into()));
/// assert_eq!(g_detector(3, &[1]).unwrap(), BigRational::from_integer(1.into()));
/// ```
pub fn g_detector(a: i64, epsilon: &[u8]) -> Result<BigRational> {
    let f = check_odd_squarefree(a)?;
    let primes: Vec<u64> = f.primes().collect();
    if primes.len() != epsilon.len() {
        return Err(Error::Dimension {
            expected: primes.len(),
            got: epsilon.len(),
        });
    }
    let r = primes.len();
    let mut total: i64 = 0;
    for mask in 0u32..(1 << r) {
        let d: i64 = (0..r)
            .filter(|&i| mask >> i & 1 == 1)
            .map(|i| primes[i] as i64)
            .product();
        let rest = a / d;
        let mut term: i64 = 1;
        for (i, &p) in primes.iter().enumerate() {
            let factor = if mask >> i & 1 == 1 {
                let t: i64 = if epsilon[i] & 1 == 1 { -1 } else { 1 };
                1 + t * jacobi_unchecked(rest, p) as i64
            } else {
                1 + jacobi_unchecked(d, p) as i64
            };
            term *= factor;
            if term == 0 {
                break;
            }
        }
        total += term;
    }
    Ok(BigRational::new(BigInt::from(total), BigInt::from(1i64 << r)))
}

/// `f_k^*(m) = (2^{-r} Σ_ε g(m, ε))^k` for odd square-free `m > 0`.
///
/// ```
/// use amoments::redei::f_star;
/// use num_rational::BigRational;
/// let three_halves = BigRational::new(3.into(), 2.into());
/// assert_eq!(f_star(3, 1).unwrap(), three_halves);
/// ```
pub fn f_star(m: i64, k: u32) -> Result<BigRational> {
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    let f = check_odd_squarefree(m)?;
    let avg = average_g(&f);
    Ok(num_traits::pow(avg, k as usize))
}

/// `2^{-r} Σ_ε g(m, ε)^k`: the twist average of the `k`-th power.
pub fn average_g_power(m: i64, k: u32) -> Result<BigRational> {
    let f = check_odd_squarefree(m)?;
    let primes: Vec<u64> = f.primes().collect();
    let r = primes.len();
    let mut sum = BigInt::zero();
    for mask in 0u64..(1 << r) {
        let eps: Vec<u8> = (0..r).map(|i| (mask >> i & 1) as u8).collect();
        let g = TwistedRedei::from_primes(m, primes.clone(), eps).kernel_size();
        sum += BigInt::from(g).pow(k);
    }
    Ok(BigRational::new(sum, BigInt::one() << r))
}

fn average_g(f: &FactoredInt) -> BigRational {
    let primes: Vec<u64> = f.primes().collect();
    let r = primes.len();
    let mut sum: u64 = 0;
    for mask in 0u64..(1 << r) {
        let eps: Vec<u8> = (0..r).map(|i| (mask >> i & 1) as u8).collect();
        sum += TwistedRedei::from_primes(f.value(), primes.clone(), eps).kernel_size();
    }
    BigRational::new(BigInt::from(sum), BigInt::one() << r)
}

/// Result of one class-group majorization check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMajorization {
    pub rk4: u32,
    pub g: u64,
    pub omega_n: u32,
    pub holds: bool,
}

/// Checks `2^{k·rk₄ Cl⁺(ℚ(√mn))} ≤ g(m, n)^k · 2^{kω(n) + k}` for coprime
/// nonzero `m, n` whose product has a square-free part `≠ 1`.
pub fn check_majorization_class(m: i64, n: i64, k: u32) -> Result<ClassMajorization> {
    if m == 0 || n == 0 {
        return Err(Error::Zero);
    }
    if m.gcd(&n) != 1 {
        return Err(Error::NotCoprime(m, n));
    }
    let fm = factor(m)?;
    let fn_ = factor(n)?;
    let mn = fm.squarefree_part() * fn_.squarefree_part();
    if mn == 1 {
        return Err(Error::Invalid("m·n must not be a square".into()));
    }
    let rk4 = rk4_narrow(mn)?;
    let g = g_twisted(m, n)?;
    let omega_n = fn_.omega();
    let lhs = BigInt::one() << (k * rk4);
    let rhs = BigInt::from(g).pow(k) << (k * omega_n + k);
    Ok(ClassMajorization {
        rk4,
        g,
        omega_n,
        holds: lhs <= rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn redei_examples() {
        let s = build_redei(5).unwrap();
        assert_eq!(s.matrix, Gf2Matrix::zeros(1, 1));
        let s = build_redei(-14).unwrap();
        assert_eq!(s.delta, -56);
        assert_eq!(s.rho.iter().map(|q| q.value).collect::<Vec<_>>(), vec![8, -7]);
        assert_eq!(s.matrix.rank(), 0);
        let s = build_redei(-5).unwrap();
        assert_eq!(s.matrix.rank(), 1);
        assert!(build_redei(12).is_err());
        assert!(build_redei(1).is_err());
    }

    #[test]
    fn rk4_examples() {
        assert_eq!(rk4_narrow(5), Ok(0));
        assert_eq!(rk4_narrow(-14), Ok(1));
        assert_eq!(rk4_narrow(-5), Ok(0));
    }

    #[test]
    fn rows_sum_to_zero() {
        for m in -2000i64..2000 {
            if m == 0 || m == 1 || !factor(m).unwrap().is_squarefree() {
                continue;
            }
            let s = build_redei(m).unwrap();
            for i in 0..s.matrix.rows() {
                let ones = (0..s.matrix.cols()).filter(|&j| s.matrix.get(i, j)).count();
                assert_eq!(ones % 2, 0, "m={m} row {i}");
            }
            assert_eq!(s.primes.len(), factor(s.delta).unwrap().omega() as usize);
        }
    }

    #[test]
    fn twisted_examples() {
        assert_eq!(g_twisted(1, 5), Ok(1));
        assert_eq!(g_twisted(15, 1), Ok(2));
        assert_eq!(g_twisted(15, 7), Ok(1));
        let t = TwistedRedei::new(15, 1).unwrap();
        assert_eq!(t.matrix, Gf2Matrix::from_rows(&[vec![1, 1], vec![1, 1]]).unwrap());
        let t = TwistedRedei::new(15, 7).unwrap();
        assert_eq!(t.matrix, Gf2Matrix::from_rows(&[vec![1, 1], vec![1, 0]]).unwrap());
        assert_eq!(g_twisted(15, 3), Err(Error::NotCoprime(15, 3)));
    }

    #[test]
    fn twist_ignores_even_part_and_squares() {
        for a in 1..400i64 {
            for alpha in [1i64, -1, 7, -11, 13] {
                if a.gcd(&alpha) != 1 {
                    continue;
                }
                let base = g_twisted(a, alpha).unwrap();
                assert_eq!(g_twisted(2 * a, alpha).unwrap(), base);
                if (9 * a).gcd(&alpha) == 1 {
                    assert_eq!(g_twisted(9 * a, alpha).unwrap(), base);
                }
                assert_eq!(g_twisted(-a, alpha).unwrap(), base);
            }
        }
    }

    #[test]
    fn detector_examples() {
        let int = |n: i64| BigRational::from_integer(n.into());
        assert_eq!(g_detector(3, &[0]).unwrap(), int(2));
        assert_eq!(g_detector(3, &[1]).unwrap(), int(1));
        assert_eq!(g_detector(1, &[]).unwrap(), int(1));
        for mask in 0..4u8 {
            let eps = [mask & 1, mask >> 1];
            assert_eq!(
                g_detector(15, &eps).unwrap(),
                int(g_twisted_eps(15, &eps).unwrap() as i64)
            );
        }
        assert!(g_detector(6, &[0, 0]).is_err());
        assert!(g_detector(9, &[0]).is_err());
    }

    #[test]
    fn f_star_examples() {
        assert_eq!(f_star(1, 3).unwrap(), BigRational::one());
        assert_eq!(f_star(3, 1).unwrap(), BigRational::new(3.into(), 2.into()));
        let avg = (0..4u8)
            .map(|m| g_twisted_eps(15, &[m & 1, m >> 1]).unwrap())
            .sum::<u64>();
        assert_eq!(f_star(15, 1).unwrap(), BigRational::new((avg as i64).into(), 4.into()));
        assert_eq!(f_star(15, 2).unwrap(), num_traits::pow(f_star(15, 1).unwrap(), 2));
    }

    #[test]
    fn majorization_examples() {
        for p in [3i64, 5, 7, -3, -7, 13] {
            let c = check_majorization_class(p, 1, 2).unwrap();
            assert_eq!(c.rk4, 0);
            assert!(c.holds);
        }
        let c = check_majorization_class(5, -3, 1).unwrap();
        assert_eq!(c.rk4, 0);
        assert!(c.holds);
        assert!(check_majorization_class(6, 3, 1).is_err());
    }

    proptest! {
        #[test]
        fn g_is_periodic(a in 1i64..5000, alpha in -5000i64..5000, shift in -3i64..3) {
            prop_assume!(a.gcd(&alpha) == 1);
            let f = factor(a).unwrap();
            let period: i64 = odd_squarefree_primes(&f).iter().map(|&p| p as i64).product();
            let beta = alpha + shift * period;
            prop_assume!(a.gcd(&beta) == 1);
            prop_assert_eq!(g_twisted(a, alpha).unwrap(), g_twisted(a, beta).unwrap());
        }

        #[test]
        fn detector_matches_kernel(idx in 0usize..600, eps_mask in any::<u32>()) {
            let a = 2 * idx as i64 + 1;
            let f = factor(a).unwrap();
            prop_assume!(f.is_squarefree());
            let r = f.omega() as usize;
            let eps: Vec<u8> = (0..r).map(|i| (eps_mask >> i & 1) as u8).collect();
            let g = g_twisted_eps(a, &eps).unwrap();
            prop_assert_eq!(g_detector(a, &eps).unwrap(), BigRational::from_integer((g as i64).into()));
        }
    }
}
