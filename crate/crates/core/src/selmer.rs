//! 2-Selmer machinery for the quadratic twists `E_d : d·y² = (x−r₁)(x−r₂)(x−r₃)`.
//!
//! Square classes are identified with square-free integers. The
//! matrix-side objects (`M′_r(t)`, `f_r`, `g_r`) only see primes coprime to
//! `Ω = 2δ₁₂δ₁₃δ₂₃`; [`descent_selmer_group`] is an independent full
//! 2-descent used to check them.

use crate::arith::{additive, factor, hilbert_i128, jacobi_unchecked, FactoredInt, Place};
use crate::error::{Error, Result};
use crate::gf2::Gf2Matrix;
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::One;

/// Largest `|d|` accepted by the descent oracle.
pub const DESCENT_BOUND: i64 = 10_000;

/// The roots `r₁, r₂, r₃` of a curve with full rational 2-torsion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurveData {
    r: [i64; 3],
    omega: i64,
    omega_primes: Vec<u64>,
}

impl CurveData {
    /// Fails unless the roots are distinct with square-free gcd.
    ///
    /// ```
    /// use amoments::selmer::CurveData;
    /// let e = CurveData::new(0, 1, -1).unwrap();
    /// assert_eq!(e.omega(), -4);
    /// assert_eq!(e.omega_primes(), &[2]);
    /// ```
    pub fn new(r1: i64, r2: i64, r3: i64) -> Result<Self> {
        if r1 == r2 || r1 == r3 || r2 == r3 {
            return Err(Error::Invalid(format!("roots ({r1}, {r2}, {r3}) are not distinct")));
        }
        let g = r1.gcd(&r2).gcd(&r3);
        if g != 0 && !factor(g)?.is_squarefree() {
            return Err(Error::NotSquarefree(g));
        }
        let omega = 2 * (r1 - r2) * (r1 - r3) * (r2 - r3);
        let omega_primes = factor(omega)?.primes().collect();
        Ok(CurveData {
            r: [r1, r2, r3],
            omega,
            omega_primes,
        })
    }

    pub fn roots(&self) -> [i64; 3] {
        self.r
    }

    /// `δ_{i,j} = r_i − r_j` with 1-based indices.
    pub fn delta(&self, i: usize, j: usize) -> i64 {
        self.r[i - 1] - self.r[j - 1]
    }

    pub fn omega(&self) -> i64 {
        self.omega
    }

    pub fn omega_primes(&self) -> &[u64] {
        &self.omega_primes
    }

    pub fn is_coprime_to_omega(&self, n: i64) -> bool {
        n.gcd(&self.omega) == 1
    }

    /// The curve with roots `(c·r₁, c·r₂, c·r₃)`.
    pub fn scaled(&self, c: i64) -> Result<Self> {
        let [r1, r2, r3] = self.r;
        CurveData::new(c * r1, c * r2, c * r3)
    }

    /// The collection `𝒞`: scalings by square-free `c` of either sign
    /// supported on the primes of `Ω`.
    pub fn twist_family(&self) -> Result<Vec<CurveData>> {
        let n = self.omega_primes.len();
        let mut out = Vec::with_capacity(2 << n);
        for sign in [1i64, -1] {
            for mask in 0u32..(1 << n) {
                let c: i64 = (0..n)
                    .filter(|&i| mask >> i & 1 == 1)
                    .map(|i| self.omega_primes[i] as i64)
                    .product();
                out.push(self.scaled(sign * c)?);
            }
        }
        Ok(out)
    }

    fn check_t(&self, t: i64) -> Result<FactoredInt> {
        if t <= 0 {
            return Err(Error::Invalid(format!("t = {t} must be positive")));
        }
        if !self.is_coprime_to_omega(t) {
            return Err(Error::NotCoprime(t, self.omega));
        }
        let f = factor(t)?;
        if !f.is_squarefree() {
            return Err(Error::NotSquarefree(t));
        }
        Ok(f)
    }
}

fn legendre_bit(a: i64, p: u64) -> bool {
    additive(jacobi_unchecked(a, p)) == 1
}

fn hilbert_bit(a: i64, b: i64, p: u64) -> u8 {
    additive(hilbert_i128(a as i128, b as i128, Place::Prime(p)))
}

/// A local condition `L_{d,v}` listed by square-free representatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalCondition {
    pub prime: u64,
    pub elements: Vec<(i64, i64)>,
}

/// `L_{d,v}` for a prime `v ∤ Ω`: the unramified classes when `v ∤ d`,
/// otherwise the four classes cut out by the 2-torsion.
///
/// ```
/// use amoments::selmer::{local_conditions, CurveData};
/// let e = CurveData::new(0, 1, 2).unwrap();
/// let l = local_conditions(&e, 5, 5).unwrap();
/// assert_eq!(l.elements, vec![(1, 1), (2, -5), (5, -1), (10, 5)]);
/// ```
pub fn local_conditions(curve: &CurveData, d: i64, v: u64) -> Result<LocalCondition> {
    if !crate::arith::is_prime(v) {
        return Err(Error::NotPrime(v));
    }
    if curve.omega % v as i64 == 0 {
        return Err(Error::NotCoprime(v as i64, curve.omega));
    }
    curve.check_t(d)?;
    let d12 = curve.delta(1, 2);
    let d13 = curve.delta(1, 3);
    let d21 = curve.delta(2, 1);
    let d23 = curve.delta(2, 3);
    let d31 = curve.delta(3, 1);
    let d32 = curve.delta(3, 2);
    let elements = if d % v as i64 == 0 {
        vec![(1, 1), (d12 * d13, d * d12), (d * d21, d21 * d23), (d * d31, d * d32)]
    } else {
        let u = (2..v as i64).find(|&u| legendre_bit(u, v)).unwrap_or(1);
        vec![(1, 1), (u, 1), (1, u), (u, u)]
    };
    let elements = elements
        .into_iter()
        .map(|(a, b)| (squarefree_kernel(a), squarefree_kernel(b)))
        .collect();
    Ok(LocalCondition { prime: v, elements })
}

fn squarefree_kernel(a: i64) -> i64 {
    factor(a).expect("nonzero").squarefree_part()
}

/// `φ_v(x₁, x₂)` as a pair of bits: the two Hilbert-symbol products
/// `(x₁, tδ₁₂)_v (x₂, δ₁₂δ₁₃)_v` and `(x₁, δ₂₁δ₂₃)_v (x₂, tδ₂₁)_v`.
pub fn phi_v(curve: &CurveData, t: i64, v: u64, x1: i64, x2: i64) -> Result<(u8, u8)> {
    curve.check_t(t)?;
    if t % v as i64 != 0 || !crate::arith::is_prime(v) {
        return Err(Error::Invalid(format!("{v} is not a prime divisor of {t}")));
    }
    if x1 == 0 || x2 == 0 {
        return Err(Error::Zero);
    }
    Ok(phi_v_unchecked(curve, t, v, x1, x2))
}

fn phi_v_unchecked(curve: &CurveData, t: i64, v: u64, x1: i64, x2: i64) -> (u8, u8) {
    let d12 = curve.delta(1, 2);
    let d13 = curve.delta(1, 3);
    let d21 = curve.delta(2, 1);
    let d23 = curve.delta(2, 3);
    let first = hilbert_bit(x1, t * d12, v) ^ hilbert_bit(x2, d12 * d13, v);
    let second = hilbert_bit(x1, d21 * d23, v) ^ hilbert_bit(x2, t * d21, v);
    (first, second)
}

/// `W′ ∩ K`: pairs of positive divisors of `t` killed by every `φ_v`,
/// found by direct enumeration.
///
/// ```
/// use amoments::selmer::{selmer_condition_kernel, CurveData};
/// let e = CurveData::new(0, 1, 2).unwrap();
/// assert_eq!(selmer_condition_kernel(&e, 1).unwrap(), vec![(1, 1)]);
/// assert_eq!(selmer_condition_kernel(&e, 5).unwrap().len(), 2);
/// ```
pub fn selmer_condition_kernel(curve: &CurveData, t: i64) -> Result<Vec<(i64, i64)>> {
    let f = curve.check_t(t)?;
    let primes: Vec<u64> = f.primes().collect();
    let divisors: Vec<i64> = f.divisors().into_iter().map(|x| x as i64).collect();
    let mut out = Vec::new();
    for &x1 in &divisors {
        for &x2 in &divisors {
            if primes.iter().all(|&v| phi_v_unchecked(curve, t, v, x1, x2) == (0, 0)) {
                out.push((x1, x2));
            }
        }
    }
    Ok(out)
}

/// `|K|`: the Selmer structure `Sel_r(M, t)` inside the full space `W` of
/// pairs supported on `−1`, the primes of `Ω` and the primes of `t`.
pub fn full_condition_kernel_size(curve: &CurveData, t: i64) -> Result<u64> {
    let f = curve.check_t(t)?;
    let tprimes: Vec<u64> = f.primes().collect();
    let mut gens: Vec<i64> = vec![-1];
    gens.extend(curve.omega_primes.iter().map(|&p| p as i64));
    gens.extend(tprimes.iter().map(|&p| p as i64));
    let n = gens.len();
    let mut m = Gf2Matrix::zeros(2 * tprimes.len(), 2 * n);
    for (row, &v) in tprimes.iter().enumerate() {
        for (j, &g) in gens.iter().enumerate() {
            let (a, b) = phi_v_unchecked(curve, t, v, g, 1);
            m.set(2 * row, j, a == 1);
            m.set(2 * row + 1, j, b == 1);
            let (a, b) = phi_v_unchecked(curve, t, v, 1, g);
            m.set(2 * row, n + j, a == 1);
            m.set(2 * row + 1, n + j, b == 1);
        }
    }
    m.kernel_size()
}

/// `M′_r(t, α)` with its prime data. The kernel vector `(e; f)` stands for
/// `x₁ = ∏ p_i^{e_i}`, `x₂ = ∏ p_i^{f_i}`.
#[derive(Debug, Clone)]
pub struct SelmerSystem {
    pub curve: CurveData,
    pub t: i64,
    pub primes: Vec<u64>,
    /// Twist class: `ε_i = 1` iff `(α/p_i) = −1`.
    pub epsilon: Vec<u8>,
    pub matrix: Gf2Matrix,
}

impl SelmerSystem {
    fn from_primes(curve: &CurveData, t: i64, primes: Vec<u64>, epsilon: Vec<u8>) -> Self {
        let r = primes.len();
        let d12 = curve.delta(1, 2);
        let d13 = curve.delta(1, 3);
        let d21 = curve.delta(2, 1);
        let d23 = curve.delta(2, 3);
        let mut m = Gf2Matrix::zeros(2 * r, 2 * r);
        for i in 0..r {
            let p = primes[i];
            let mut offsum = false;
            for j in 0..r {
                if i != j {
                    let e = legendre_bit(primes[j] as i64, p);
                    m.set(i, j, e);
                    m.set(r + i, r + j, e);
                    offsum ^= e;
                }
            }
            let tw = epsilon[i] & 1 == 1;
            m.set(i, i, legendre_bit(d21, p) ^ offsum ^ tw);
            m.set(r + i, r + i, legendre_bit(d12, p) ^ offsum ^ tw);
            m.set(i, r + i, legendre_bit(d12 * d13, p));
            m.set(r + i, i, legendre_bit(d21 * d23, p));
        }
        SelmerSystem {
            curve: curve.clone(),
            t,
            primes,
            epsilon,
            matrix: m,
        }
    }

    pub fn kernel_size(&self) -> u64 {
        self.matrix.kernel_size().expect("supported sizes")
    }

    /// Whether the pair `(x₁, x₂)` of divisors of `t` lies in the kernel.
    pub fn contains(&self, x1: i64, x2: i64) -> bool {
        let r = self.primes.len();
        let mut bits = vec![0u8; 2 * r];
        for (i, &p) in self.primes.iter().enumerate() {
            bits[i] = (x1 % p as i64 == 0) as u8;
            bits[r + i] = (x2 % p as i64 == 0) as u8;
        }
        self.matrix.mul_vec(&crate::gf2::Gf2Vector::from_bits(&bits)).is_zero()
    }
}

/// `M′_r(t)` or, with `alpha`, the twisted `M′_r(t, α)`.
///
/// ```
/// use amoments::selmer::{build_selmer_matrix, CurveData};
/// let e = CurveData::new(0, 1, 2).unwrap();
/// let s = build_selmer_matrix(&e, 5, None).unwrap();
/// assert_eq!(s.kernel_size(), 2);
/// assert!(s.matrix.get(0, 1) && !s.matrix.get(0, 0) && !s.matrix.get(1, 1));
/// ```
pub fn build_selmer_matrix(curve: &CurveData, t: i64, alpha: Option<i64>) -> Result<SelmerSystem> {
    let f = curve.check_t(t)?;
    let primes: Vec<u64> = f.primes().collect();
    let epsilon = match alpha {
        None => vec![0; primes.len()],
        Some(a) => {
            if a.gcd(&t) != 1 {
                return Err(Error::NotCoprime(t, a));
            }
            primes.iter().map(|&p| additive(jacobi_unchecked(a, p))).collect()
        }
    };
    Ok(SelmerSystem::from_primes(curve, t, primes, epsilon))
}

/// `M′_r(t, α)` for a twist class `ε` given directly.
pub fn build_selmer_matrix_eps(curve: &CurveData, t: i64, epsilon: &[u8]) -> Result<SelmerSystem> {
    let f = curve.check_t(t)?;
    let primes: Vec<u64> = f.primes().collect();
    if primes.len() != epsilon.len() {
        return Err(Error::Dimension {
            expected: primes.len(),
            got: epsilon.len(),
        });
    }
    Ok(SelmerSystem::from_primes(curve, t, primes, epsilon.to_vec()))
}

/// Positive square-free part of `d` with the primes of `Ω` removed.
fn reduce_for_f(curve: &CurveData, d: i64) -> Result<i64> {
    if d == 0 {
        return Err(Error::Zero);
    }
    let f = factor(d)?;
    Ok(f.factors()
        .iter()
        .filter(|&&(p, e)| e % 2 == 1 && curve.omega % p as i64 != 0)
        .map(|&(p, _)| p as i64)
        .product())
}

/// Largest square-free positive divisor of `d` coprime to `Ω`.
fn reduce_for_g(curve: &CurveData, d: i64) -> Result<i64> {
    if d == 0 {
        return Err(Error::Zero);
    }
    let f = factor(d)?;
    Ok(f.primes()
        .filter(|&p| curve.omega % p as i64 != 0)
        .map(|p| p as i64)
        .product())
}

/// `f_r(d) = |ker M′_r(t)|`, extended to all `d ≠ 0` by ignoring signs,
/// square factors and primes of `Ω`.
///
/// ```
/// use amoments::selmer::{f_r, CurveData};
/// let e = CurveData::new(0, 1, 2).unwrap();
/// assert_eq!(f_r(&e, 5).unwrap(), 2);
/// assert_eq!(f_r(&e, -20).unwrap(), 2);
/// ```
pub fn f_r(curve: &CurveData, d: i64) -> Result<u64> {
    let t = reduce_for_f(curve, d)?;
    Ok(build_selmer_matrix(curve, t, None)?.kernel_size())
}

/// `g_r(d, α) = |ker M′_r(t, α)|`, where `t = rad(d)` with the primes of
/// `Ω` removed.
///
/// ```
/// use amoments::selmer::{f_r, g_r, CurveData};
/// let e = CurveData::new(0, 1, -1).unwrap();
/// assert_eq!(g_r(&e, 1, 7).unwrap(), 1);
/// assert_eq!(g_r(&e, 65, 1).unwrap(), f_r(&e, 65).unwrap());
/// ```
pub fn g_r(curve: &CurveData, d: i64, alpha: i64) -> Result<u64> {
    if d.gcd(&alpha) != 1 {
        return Err(Error::NotCoprime(d, alpha));
    }
    let t = reduce_for_g(curve, d)?;
    Ok(build_selmer_matrix(curve, t, Some(alpha))?.kernel_size())
}

/// `g_r(m, ε)` for `m` positive, square-free and coprime to `Ω`.
pub fn g_r_eps(curve: &CurveData, m: i64, epsilon: &[u8]) -> Result<u64> {
    Ok(build_selmer_matrix_eps(curve, m, epsilon)?.kernel_size())
}

/// Indicator product `F₁F₂F₃F₄` for the split `m = D₁D₂D₃D₄`: nonzero
/// exactly when `(x₁, x₂) = (D₁D₂, D₁D₃)` is killed by `M′_r(m, ε)`. Returned
/// as the integer `4^{ω(m)}·F₁F₂F₃F₄`.
pub fn selmer_detector(curve: &CurveData, m: i64, epsilon: &[u8], parts: [i64; 4]) -> Result<i64> {
    let f = curve.check_t(m)?;
    let primes: Vec<u64> = f.primes().collect();
    if primes.len() != epsilon.len() {
        return Err(Error::Dimension {
            expected: primes.len(),
            got: epsilon.len(),
        });
    }
    if parts.iter().any(|&x| x <= 0) || parts.iter().product::<i64>() != m {
        return Err(Error::Invalid(format!("{parts:?} is not a factorization of {m}")));
    }
    let [d1, d2, d3, d4] = parts;
    let dl = |i, j| curve.delta(i, j);
    let mut total = 1i64;
    for (i, &p) in primes.iter().enumerate() {
        let pi = p as i64;
        let t = if epsilon[i] & 1 == 1 { -1 } else { 1 };
        let j = |a: i64| jacobi_unchecked(a, p) as i64;
        let factor = if d1 % pi == 0 {
            1 + t * j(dl(3, 1) * d3 * d4) + t * j(dl(3, 2) * d2 * d4) + j(dl(3, 1) * dl(3, 2) * d2 * d3)
        } else if d2 % pi == 0 {
            1 + t * j(dl(2, 1) * d3 * d4) + j(dl(2, 1) * dl(2, 3) * d1 * d3) + t * j(dl(2, 3) * d1 * d4)
        } else if d3 % pi == 0 {
            1 + j(dl(1, 2) * dl(1, 3) * d1 * d2) + t * j(dl(1, 2) * d2 * d4) + t * j(dl(1, 3) * d1 * d4)
        } else {
            1 + j(d1 * d2) + j(d1 * d3) + j(d2 * d3)
        };
        total *= factor;
        if total == 0 {
            break;
        }
    }
    Ok(total)
}

/// `2^{-ω(m)} Σ_ε g_r(m, ε)^k` as an exact fraction `(numerator, 2^{ω(m)})`.
pub fn average_g_r_power(curve: &CurveData, m: i64, k: u32) -> Result<(BigInt, BigInt)> {
    let f = curve.check_t(m)?;
    let primes: Vec<u64> = f.primes().collect();
    let r = primes.len();
    let mut sum = BigInt::from(0);
    for mask in 0u64..(1 << r) {
        let eps: Vec<u8> = (0..r).map(|i| (mask >> i & 1) as u8).collect();
        let g = SelmerSystem::from_primes(curve, m, primes.clone(), eps).kernel_size();
        sum += BigInt::from(g).pow(k);
    }
    Ok((sum, BigInt::one() << r))
}

/// Bit encoding of `ℚ_v^*/ℚ_v^{*2}`: one bit at infinity, two at odd
/// primes (valuation parity, non-residue), three at 2 (valuation parity and
/// the unit modulo 8).
fn local_class(x: i128, v: Place) -> u8 {
    debug_assert!(x != 0);
    match v {
        Place::Infinity => (x < 0) as u8,
        Place::Prime(2) => {
            let (val, u) = split(x, 2);
            let u8_ = u.rem_euclid(8);
            (val & 1) as u8 | ((u8_ % 4 == 3) as u8) << 1 | (matches!(u8_, 3 | 5) as u8) << 2
        }
        Place::Prime(p) => {
            let (val, u) = split(x, p as i128);
            let nonres = jacobi_unchecked(u.rem_euclid(p as i128) as i64, p) == -1;
            (val & 1) as u8 | (nonres as u8) << 1
        }
    }
}

fn class_width(v: Place) -> u32 {
    match v {
        Place::Infinity => 1,
        Place::Prime(2) => 3,
        Place::Prime(_) => 2,
    }
}

fn split(mut x: i128, p: i128) -> (u32, i128) {
    let mut v = 0;
    while x % p == 0 {
        x /= p;
        v += 1;
    }
    (v, x)
}

/// The Kummer image of `E(ℚ_v)/2E(ℚ_v)` for `Y² = (X−e₁)(X−e₂)(X−e₃)`,
/// as a bitmask over encoded pair classes.
fn local_image(e: [i128; 3], v: Place) -> Result<u64> {
    let w = class_width(v);
    let pair = |a: i128, b: i128| local_class(a, v) as u32 | (local_class(b, v) as u32) << w;
    let target = match v {
        Place::Infinity => 2,
        Place::Prime(2) => 8,
        Place::Prime(_) => 4,
    };
    let mut elems: Vec<u32> = vec![0];
    let add = |g: u32, elems: &mut Vec<u32>| {
        if !elems.contains(&g) {
            let extra: Vec<u32> = elems.iter().map(|&x| x ^ g).collect();
            elems.extend(extra);
        }
    };
    let [e1, e2, e3] = e;
    add(pair((e1 - e2) * (e1 - e3), e1 - e2), &mut elems);
    add(pair(e2 - e1, (e2 - e1) * (e2 - e3)), &mut elems);
    add(pair(e3 - e1, e3 - e2), &mut elems);
    let p = match v {
        Place::Infinity => {
            return finish(elems, target, v);
        }
        Place::Prime(p) => p as i128,
    };
    // Points with x = a/p^{2s}; for odd p the non-integral points lie in a
    // 2-divisible subgroup, so s = 0 suffices there.
    let smax = if p == 2 { 3 } else { 0 };
    let amax: i128 = if p == 2 { 1 << 12 } else { (p * p * p * p).min(1 << 20) };
    'outer: for s in 0..=smax {
        let scale = p.pow(2 * s);
        for a0 in 0..amax {
            for a in [a0, -a0 - 1] {
                if s > 0 && a % p == 0 {
                    continue;
                }
                let v1 = a - e1 * scale;
                let v2 = a - e2 * scale;
                let v3 = a - e3 * scale;
                if v1 == 0 || v2 == 0 || v3 == 0 {
                    continue;
                }
                let (c1, c2, c3) = (local_class(v1, v), local_class(v2, v), local_class(v3, v));
                if c1 ^ c2 ^ c3 != 0 {
                    continue;
                }
                add(c1 as u32 | (c2 as u32) << w, &mut elems);
                if elems.len() == target {
                    break 'outer;
                }
            }
        }
    }
    finish(elems, target, v)
}

fn finish(elems: Vec<u32>, target: usize, v: Place) -> Result<u64> {
    if elems.len() != target {
        return Err(Error::Invalid(format!(
            "local image at {v:?} has {} elements, expected {target}",
            elems.len()
        )));
    }
    Ok(elems.iter().fold(0u64, |m, &x| m | 1 << x))
}

/// The 2-Selmer group of `E_d` by a full 2-descent, as pairs of square-free
/// integers `(b₁, b₂)`, the classes of `(x − d·r₁, x − d·r₂)`.
pub fn descent_selmer_group(curve: &CurveData, d: i64) -> Result<Vec<(i64, i64)>> {
    if d == 0 {
        return Err(Error::Zero);
    }
    if d.abs() > DESCENT_BOUND {
        return Err(Error::OutOfRange(d as i128));
    }
    let fd = factor(d)?;
    if !fd.is_squarefree() {
        return Err(Error::NotSquarefree(d));
    }
    let e: [i128; 3] = curve.r.map(|r| d as i128 * r as i128);
    let mut primes: Vec<u64> = fd.primes().chain(curve.omega_primes.iter().copied()).collect();
    primes.sort_unstable();
    primes.dedup();
    let mut gens: Vec<i64> = vec![-1];
    gens.extend(primes.iter().map(|&p| p as i64));
    let places: Vec<Place> = std::iter::once(Place::Infinity)
        .chain(primes.iter().map(|&p| Place::Prime(p)))
        .collect();
    let images: Vec<u64> = places.iter().map(|&v| local_image(e, v)).collect::<Result<_>>()?;
    let n = gens.len();
    // gen_class[j][v]: local pair class of the j-th generator of the 2n-dim space.
    let gen_class: Vec<Vec<u32>> = (0..2 * n)
        .map(|j| {
            places
                .iter()
                .map(|&v| {
                    let c = local_class(gens[j % n] as i128, v) as u32;
                    if j < n {
                        c
                    } else {
                        c << class_width(v)
                    }
                })
                .collect()
        })
        .collect();
    let mut cls = vec![0u32; places.len()];
    let mut out = Vec::new();
    let total = 1u64 << (2 * n);
    let mut prev_gray = 0u64;
    for i in 0..total {
        let gray = i ^ (i >> 1);
        if i > 0 {
            let j = (gray ^ prev_gray).trailing_zeros() as usize;
            for (c, g) in cls.iter_mut().zip(&gen_class[j]) {
                *c ^= g;
            }
        }
        prev_gray = gray;
        if cls.iter().zip(&images).all(|(&c, &img)| img >> c & 1 == 1) {
            let pick = |mask: u64| -> i64 { (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| gens[k]).product() };
            out.push((pick(gray), pick(gray >> n)));
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// `|Sel²(E_d)|` for square-free `d` with `|d| ≤` [`DESCENT_BOUND`].
///
/// ```
/// use amoments::selmer::{descent_selmer_oracle, CurveData};
/// let e = CurveData::new(0, 1, -1).unwrap();
/// assert_eq!(descent_selmer_oracle(&e, 1).unwrap(), 4);
/// ```
pub fn descent_selmer_oracle(curve: &CurveData, d: i64) -> Result<u64> {
    Ok(descent_selmer_group(curve, d)?.len() as u64)
}

/// Result of one Selmer majorization check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelmerMajorization {
    pub selmer: u64,
    pub max_f: u64,
    pub omega_count: u32,
    pub holds: bool,
}

/// Checks `|Sel²(E_d)|^k ≤ 4^{k·ω(Ω)+k} max_{𝒞} f_r(d)^k`.
pub fn check_majorization_selmer(curve: &CurveData, d: i64, k: u32) -> Result<SelmerMajorization> {
    if k == 0 {
        return Err(Error::Invalid("k must be at least 1".into()));
    }
    let [r1, r2, r3] = curve.r;
    if r1.gcd(&r2).gcd(&r3) != 1 {
        return Err(Error::Invalid("roots must have gcd 1".into()));
    }
    let selmer = descent_selmer_oracle(curve, d)?;
    let mut max_f = 0;
    for c in curve.twist_family()? {
        max_f = max_f.max(f_r(&c, d)?);
    }
    let omega_count = curve.omega_primes.len() as u32;
    let lhs = BigInt::from(selmer).pow(k);
    let rhs = (BigInt::one() << (2 * k * (omega_count + 1))) * BigInt::from(max_f).pow(k);
    Ok(SelmerMajorization {
        selmer,
        max_f,
        omega_count,
        holds: lhs <= rhs,
    })
}

/// Checks `f_r(mn)^k ≤ g_r(m, n)^k 4^{k·ω(n)}` for coprime nonzero `m, n`;
/// returns `(f_r(mn), g_r(m, n), holds)`.
pub fn check_submatrix_selmer(curve: &CurveData, m: i64, n: i64, k: u32) -> Result<(u64, u64, bool)> {
    if m == 0 || n == 0 {
        return Err(Error::Zero);
    }
    if m.gcd(&n) != 1 {
        return Err(Error::NotCoprime(m, n));
    }
    let f = f_r(curve, m.checked_mul(n).ok_or(Error::OutOfRange(m as i128 * n as i128))?)?;
    let g = g_r(curve, m, n)?;
    let omega_n = factor(n)?.omega();
    let lhs = BigInt::from(f).pow(k);
    let rhs = BigInt::from(g).pow(k) << (2 * k * omega_n);
    Ok((f, g, lhs <= rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn curves() -> Vec<CurveData> {
        [(0, 1, -1), (0, 1, 2), (0, 2, 5)]
            .iter()
            .map(|&(a, b, c)| CurveData::new(a, b, c).unwrap())
            .collect()
    }

    fn coprime_sqf(curve: &CurveData, limit: i64) -> impl Iterator<Item = i64> + '_ {
        (1..=limit).filter(move |&t| curve.is_coprime_to_omega(t) && factor(t).unwrap().is_squarefree())
    }

    #[test]
    fn curve_data_validation() {
        assert!(CurveData::new(0, 0, 1).is_err());
        assert!(CurveData::new(0, 4, 8).is_err());
        let e = CurveData::new(0, 1, 2).unwrap();
        assert_eq!(e.delta(1, 2), -1);
        assert_eq!(e.delta(2, 1), 1);
        assert_eq!(e.omega(), -4);
        assert_eq!(e.twist_family().unwrap().len(), 4);
        assert_eq!(CurveData::new(0, 2, 5).unwrap().omega_primes(), &[2, 3, 5]);
    }

    #[test]
    fn selmer_matrix_examples() {
        let e = &curves()[1];
        let s = build_selmer_matrix(e, 5, None).unwrap();
        let rows: Vec<Vec<bool>> = (0..2).map(|i| (0..2).map(|j| s.matrix.get(i, j)).collect()).collect();
        assert_eq!(rows, vec![vec![false, true], vec![false, false]]);
        assert_eq!(s.kernel_size(), 2);
        assert_eq!(build_selmer_matrix(e, 1, None).unwrap().kernel_size(), 1);
        assert!(build_selmer_matrix(e, 6, None).is_err());
        assert!(build_selmer_matrix(e, 5, Some(10)).is_err());
        // α a square modulo every p | t gives the untwisted matrix.
        let t = 3 * 7 * 11;
        let plain = build_selmer_matrix(e, t, None).unwrap();
        for alpha in [1, 4, t + 1, 4 * t + 1] {
            assert_eq!(plain.matrix, build_selmer_matrix(e, t, Some(alpha)).unwrap().matrix);
        }
    }

    #[test]
    fn f_and_g_examples() {
        for e in curves() {
            assert_eq!(f_r(&e, 1).unwrap(), 1);
            assert_eq!(f_r(&e, -1).unwrap(), 1);
            assert!(f_r(&e, 0).is_err());
            for d in coprime_sqf(&e, 200) {
                let f = f_r(&e, d).unwrap();
                assert_eq!(f_r(&e, -d).unwrap(), f);
                assert_eq!(f_r(&e, 2 * d).unwrap(), f);
                assert_eq!(f_r(&e, 9 * d).unwrap(), f);
                assert_eq!(g_r(&e, d, 1).unwrap(), f);
                assert_eq!(g_r(&e, 1, d).unwrap(), 1);
            }
        }
        assert_eq!(f_r(&curves()[1], 5).unwrap(), 2);
    }

    #[test]
    fn g_is_periodic_in_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for e in curves() {
            let ts: Vec<i64> = coprime_sqf(&e, 3000).collect();
            for _ in 0..300 {
                let t = ts[rng.gen_range(0..ts.len())];
                let alpha = loop {
                    let a: i64 = rng.gen_range(-10_000..10_000);
                    if a != 0 && a.gcd(&t) == 1 {
                        break a;
                    }
                };
                assert_eq!(g_r(&e, t, alpha).unwrap(), g_r(&e, t, alpha + t).unwrap());
                if t % 7 != 0 {
                    assert_eq!(g_r(&e, t, alpha).unwrap(), g_r(&e, t, alpha * 49).unwrap());
                }
            }
        }
    }

    #[test]
    fn local_condition_example_and_structure() {
        let e = &curves()[1];
        let l = local_conditions(e, 5, 5).unwrap();
        assert_eq!(l.elements, vec![(1, 1), (2, -5), (5, -1), (10, 5)]);
        assert!(local_conditions(e, 5, 2).is_err());
        let u = local_conditions(e, 5, 7).unwrap();
        assert_eq!(u.elements, vec![(1, 1), (3, 1), (1, 3), (3, 3)]);
        for e in curves() {
            for v in crate::arith::primes_up_to(100) {
                if e.omega() % v as i64 == 0 {
                    continue;
                }
                for d in [v as i64, v as i64 * 7, 1, 11] {
                    if !e.is_coprime_to_omega(d) || !factor(d).unwrap().is_squarefree() {
                        continue;
                    }
                    let l = local_conditions(&e, d, v).unwrap();
                    let classes: Vec<u32> = l
                        .elements
                        .iter()
                        .map(|&(a, b)| {
                            let pv = Place::Prime(v);
                            local_class(a as i128, pv) as u32 | (local_class(b as i128, pv) as u32) << 2
                        })
                        .collect();
                    // Four distinct classes closed under multiplication.
                    for (i, &x) in classes.iter().enumerate() {
                        assert!(!classes[..i].contains(&x), "{d} at {v}");
                        for &y in &classes {
                            assert!(classes.contains(&(x ^ y)));
                        }
                    }
                    // Isotropic under (x₁, x₂′)_v (x₂, x₁′)_v, hence self-dual.
                    for &(a1, a2) in &l.elements {
                        for &(b1, b2) in &l.elements {
                            assert_eq!(hilbert_bit(a1, b2, v) ^ hilbert_bit(a2, b1, v), 0, "{d} at {v}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn phi_v_properties() {
        let e = &curves()[0];
        let t = 5 * 13;
        assert_eq!(phi_v(e, t, 5, 1, 1).unwrap(), (0, 0));
        assert!(phi_v(e, t, 7, 1, 1).is_err());
        for v in [5u64, 13] {
            for &(x1, x2, y1, y2) in &[(5, 13, 65, 1), (-1, 2, 3, -7), (10, 26, 13, 5)] {
                let p = phi_v(e, t, v, x1, x2).unwrap();
                let q = phi_v(e, t, v, y1, y2).unwrap();
                let pq = phi_v(e, t, v, x1 * y1, x2 * y2).unwrap();
                assert_eq!(pq, (p.0 ^ q.0, p.1 ^ q.1));
            }
        }
    }

    #[test]
    fn matrix_kernel_equals_condition_kernel() {
        for e in curves() {
            for t in coprime_sqf(&e, 600) {
                let sys = build_selmer_matrix(&e, t, None).unwrap();
                let k = selmer_condition_kernel(&e, t).unwrap();
                assert_eq!(sys.kernel_size(), k.len() as u64, "t = {t}");
                assert!(k.iter().all(|&(x1, x2)| sys.contains(x1, x2)));
            }
        }
    }

    #[test]
    fn full_kernel_index_bound() {
        for e in curves() {
            let bound = 1u64 << (2 * (e.omega_primes().len() as u32 + 1));
            for t in coprime_sqf(&e, 500) {
                let full = full_condition_kernel_size(&e, t).unwrap();
                let restricted = f_r(&e, t).unwrap();
                assert!(full >= restricted);
                assert!(full <= bound * restricted, "t = {t}");
            }
        }
    }

    #[test]
    fn detector_matches_kernel_membership() {
        for e in curves() {
            for m in coprime_sqf(&e, 400) {
                let f = factor(m).unwrap();
                let primes: Vec<u64> = f.primes().collect();
                let r = primes.len();
                for mask in 0u32..(1 << r) {
                    let eps: Vec<u8> = (0..r).map(|i| (mask >> i & 1) as u8).collect();
                    let sys = build_selmer_matrix_eps(&e, m, &eps).unwrap();
                    let mut count = 0;
                    for split in 0u32..(1 << (2 * r)) {
                        let mut parts = [1i64; 4];
                        for (i, &p) in primes.iter().enumerate() {
                            parts[(split >> (2 * i) & 3) as usize] *= p as i64;
                        }
                        let det = selmer_detector(&e, m, &eps, parts).unwrap();
                        let inside = sys.contains(parts[0] * parts[1], parts[0] * parts[2]);
                        assert_eq!(det, if inside { 1 << (2 * r) } else { 0 }, "m={m} {parts:?}");
                        count += inside as u64;
                    }
                    assert_eq!(count, sys.kernel_size());
                }
            }
        }
    }

    #[test]
    fn descent_congruent_number_curve() {
        let e = &curves()[0];
        for d in [1, 2, 3, 10, 11, -1, -2] {
            assert_eq!(descent_selmer_oracle(e, d).unwrap(), 4, "d = {d}");
        }
        for d in [5, 6, 7, 13, 14, 15] {
            assert_eq!(descent_selmer_oracle(e, d).unwrap(), 8, "d = {d}");
        }
        assert!(descent_selmer_oracle(e, 12).is_err());
        assert!(descent_selmer_oracle(e, 10_007).is_err());
    }

    #[test]
    fn descent_parity_matches_root_number() {
        // For y² = x³ − n²x the root number is −1 exactly when
        // n ≡ 5, 6, 7 mod 8; 2-Selmer parity follows it.
        let e = &curves()[0];
        for n in 1..=400i64 {
            if !factor(n).unwrap().is_squarefree() {
                continue;
            }
            let s = descent_selmer_oracle(e, n).unwrap();
            assert!(s.is_power_of_two() && s >= 4);
            let odd = (s.trailing_zeros() - 2) % 2 == 1;
            assert_eq!(odd, matches!(n % 8, 5 | 6 | 7), "n = {n}");
        }
    }

    #[test]
    fn descent_inside_selmer_structure() {
        for e in curves() {
            for d in coprime_sqf(&e, 300) {
                let sel = descent_selmer_group(&e, d).unwrap();
                assert!(sel.len().is_power_of_two() && sel.len() >= 4);
                let full = full_condition_kernel_size(&e, d).unwrap();
                assert!(sel.len() as u64 <= full, "d = {d}");
                // Each element satisfies every φ_v.
                let primes: Vec<u64> = factor(d).unwrap().primes().collect();
                for &(b1, b2) in &sel {
                    for &v in &primes {
                        assert_eq!(phi_v(&e, d, v, b1, b2).unwrap(), (0, 0), "d = {d}");
                    }
                }
                let bound = 1u64 << (2 * (e.omega_primes().len() as u32 + 1));
                assert!(sel.len() as u64 <= bound * f_r(&e, d).unwrap());
            }
        }
    }

    #[test]
    fn selmer_majorization_small() {
        let e = &curves()[0];
        for d in -300i64..=300 {
            if d == 0 || !factor(d).unwrap().is_squarefree() {
                continue;
            }
            for k in [1, 2] {
                assert!(check_majorization_selmer(e, d, k).unwrap().holds, "d = {d}");
            }
        }
        let r = check_majorization_selmer(e, 1, 1).unwrap();
        assert_eq!(r.selmer, 4);
    }

    #[test]
    fn submatrix_inequality_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for e in curves() {
            let pool: Vec<i64> = coprime_sqf(&e, 5000).collect();
            for _ in 0..300 {
                let m = pool[rng.gen_range(0..pool.len())];
                let n = pool[rng.gen_range(0..pool.len())];
                if m.gcd(&n) != 1 {
                    continue;
                }
                for k in [1, 2] {
                    assert!(check_submatrix_selmer(&e, m, n, k).unwrap().2, "{m} {n}");
                }
            }
        }
    }
}
