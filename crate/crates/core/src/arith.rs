//! Integer arithmetic: factorization, residue symbols, quadratic
//! discriminants and Hilbert symbols.
//!
//! Symbols are returned multiplicatively as `-1`, `0` or `1`. Use
//! [`additive`] to move a `±1` value into GF(2).

use crate::error::{Error, Result};
use num_integer::Integer;
use num_rational::Ratio;

/// Converts a multiplicative sign `±1` to its additive image in GF(2).
#[inline]
pub fn additive(s: i8) -> u8 {
    (s < 0) as u8
}

/// A nonzero integer together with its prime factorization.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactoredInt {
    value: i64,
    factors: Vec<(u64, u32)>,
}

impl FactoredInt {
    /// Builds a factored integer from a sign and a list of prime powers.
    /// Primes are not re-checked; callers must supply sorted distinct primes.
    pub fn from_parts(sign: i8, factors: Vec<(u64, u32)>) -> Self {
        debug_assert!(factors.windows(2).all(|w| w[0].0 < w[1].0));
        let mut value: i64 = if sign < 0 { -1 } else { 1 };
        for &(p, e) in &factors {
            value *= (p as i64).pow(e);
        }
        FactoredInt { value, factors }
    }

    pub fn value(&self) -> i64 {
        self.value
    }

    pub fn sign(&self) -> i8 {
        if self.value < 0 {
            -1
        } else {
            1
        }
    }

    pub fn factors(&self) -> &[(u64, u32)] {
        &self.factors
    }

    pub fn primes(&self) -> impl Iterator<Item = u64> + '_ {
        self.factors.iter().map(|&(p, _)| p)
    }

    /// Number of distinct prime divisors.
    pub fn omega(&self) -> u32 {
        self.factors.len() as u32
    }

    /// Number of prime divisors counted with multiplicity.
    pub fn big_omega(&self) -> u32 {
        self.factors.iter().map(|&(_, e)| e).sum()
    }

    pub fn is_squarefree(&self) -> bool {
        self.factors.iter().all(|&(_, e)| e == 1)
    }

    /// Möbius function of `|value|`.
    pub fn mobius(&self) -> i8 {
        if !self.is_squarefree() {
            0
        } else if self.factors.len() % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// Number of positive divisors of `|value|`.
    pub fn tau(&self) -> u64 {
        self.factors.iter().map(|&(_, e)| e as u64 + 1).product()
    }

    pub fn largest_prime(&self) -> Option<u64> {
        self.factors.last().map(|&(p, _)| p)
    }

    pub fn smallest_prime(&self) -> Option<u64> {
        self.factors.first().map(|&(p, _)| p)
    }

    /// Signed square-free part: the unique square-free `s` with `value = s·k²`.
    pub fn squarefree_part(&self) -> i64 {
        let mut s: i64 = self.sign() as i64;
        for &(p, e) in &self.factors {
            if e % 2 == 1 {
                s *= p as i64;
            }
        }
        s
    }

    /// Product of the distinct primes (always positive).
    pub fn radical(&self) -> u64 {
        self.factors.iter().map(|&(p, _)| p).product()
    }

    /// Positive divisors of `|value|`, in increasing order.
    pub fn divisors(&self) -> Vec<u64> {
        let mut out = vec![1u64];
        for &(p, e) in &self.factors {
            let len = out.len();
            let mut pk = 1u64;
            for _ in 0..e {
                pk *= p;
                for i in 0..len {
                    out.push(out[i] * pk);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

const MAX_MAGNITUDE: u64 = (1u64 << 63) - 1;

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Deterministic primality test, valid for all 64-bit integers.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n % p == 0 {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for a in [2u64, 325, 9375, 28178, 450775, 9780504, 1795265022] {
        let a = a % n;
        if a == 0 {
            continue;
        }
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn pollard_brent(n: u64) -> u64 {
    if n % 2 == 0 {
        return 2;
    }
    let mut c = 1u64;
    loop {
        let f = |x: u64| (mul_mod(x, x, n) + c) % n;
        let (mut x, mut y, mut g, mut q) = (2u64, 2u64, 1u64, 1u64);
        let mut ys = 2u64;
        let mut r = 1u64;
        let m = 128u64;
        while g == 1 {
            x = y;
            for _ in 0..r {
                y = f(y);
            }
            let mut k = 0;
            while k < r && g == 1 {
                ys = y;
                for _ in 0..m.min(r - k) {
                    y = f(y);
                    q = mul_mod(q, x.abs_diff(y), n);
                }
                g = q.gcd(&n);
                k += m;
            }
            r *= 2;
        }
        if g == n {
            loop {
                ys = f(ys);
                g = x.abs_diff(ys).gcd(&n);
                if g > 1 {
                    break;
                }
            }
        }
        if g != n {
            return g;
        }
        c += 1;
    }
}

fn factor_rec(n: u64, out: &mut Vec<u64>) {
    if n == 1 {
        return;
    }
    if is_prime(n) {
        out.push(n);
        return;
    }
    let d = pollard_brent(n);
    factor_rec(d, out);
    factor_rec(n / d, out);
}

/// Factors a nonzero integer with `|n| < 2^63`.
///
/// ```
/// use amoments::arith::factor;
/// let f = factor(-56).unwrap();
/// assert_eq!(f.sign(), -1);
/// assert_eq!(f.factors(), &[(2, 3), (7, 1)]);
/// ```
pub fn factor(n: i64) -> Result<FactoredInt> {
    if n == 0 {
        return Err(Error::Zero);
    }
    if n == i64::MIN {
        return Err(Error::OutOfRange(n as i128));
    }
    let mut m = n.unsigned_abs();
    debug_assert!(m <= MAX_MAGNITUDE);
    let mut primes = Vec::new();
    let mut p = 2u64;
    while p * p <= m && p <= 1_000_000 {
        while m % p == 0 {
            primes.push(p);
            m /= p;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if m > 1 {
        factor_rec(m, &mut primes);
    }
    primes.sort_unstable();
    let mut factors: Vec<(u64, u32)> = Vec::new();
    for q in primes {
        match factors.last_mut() {
            Some((last, e)) if *last == q => *e += 1,
            _ => factors.push((q, 1)),
        }
    }
    Ok(FactoredInt { value: n, factors })
}

/// Smallest-prime-factor table for fast repeated factorization of small
/// integers.
#[derive(Debug, Clone)]
pub struct SpfSieve {
    spf: Vec<u32>,
}

impl SpfSieve {
    pub fn new(limit: u64) -> Self {
        let n = limit as usize + 1;
        let mut spf = vec![0u32; n.max(2)];
        for i in 2..n {
            if spf[i] == 0 {
                spf[i] = i as u32;
                let mut j = i * i;
                while j < n {
                    if spf[j] == 0 {
                        spf[j] = i as u32;
                    }
                    j += i;
                }
            }
        }
        SpfSieve { spf }
    }

    pub fn limit(&self) -> u64 {
        self.spf.len() as u64 - 1
    }

    /// Factors `n` (with `1 ≤ |n| ≤ limit`) by table lookup.
    pub fn factor(&self, n: i64) -> FactoredInt {
        let mut m = n.unsigned_abs() as usize;
        assert!(m >= 1 && m < self.spf.len(), "{n} outside sieve range");
        let mut factors: Vec<(u64, u32)> = Vec::new();
        while m > 1 {
            let p = self.spf[m] as usize;
            let mut e = 0;
            while m % p == 0 {
                m /= p;
                e += 1;
            }
            factors.push((p as u64, e));
        }
        FactoredInt { value: n, factors }
    }

    pub fn is_prime(&self, n: u64) -> bool {
        n >= 2 && self.spf[n as usize] as u64 == n
    }
}

/// All primes up to and including `limit`.
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let n = limit as usize + 1;
    let mut composite = vec![false; n];
    let mut out = Vec::new();
    for i in 2..n {
        if !composite[i] {
            out.push(i as u64);
            let mut j = i * i;
            while j < n {
                composite[j] = true;
                j += i;
            }
        }
    }
    out
}

/// Jacobi symbol for odd positive `n`, without argument checks.
pub fn jacobi_unchecked(a: i64, n: u64) -> i8 {
    debug_assert!(n % 2 == 1);
    let mut a = a.rem_euclid(n as i64) as u64;
    let mut n = n;
    let mut t = 1i8;
    while a != 0 {
        let z = a.trailing_zeros();
        a >>= z;
        if z % 2 == 1 && (n % 8 == 3 || n % 8 == 5) {
            t = -t;
        }
        if a % 4 == 3 && n % 4 == 3 {
            t = -t;
        }
        std::mem::swap(&mut a, &mut n);
        a %= n;
    }
    if n == 1 {
        t
    } else {
        0
    }
}

/// Jacobi symbol `(a/n)` for odd `n ≥ 1`.
///
/// ```
/// use amoments::arith::jacobi;
/// assert_eq!(jacobi(2, 15).unwrap(), 1);
/// assert_eq!(jacobi(3, 5).unwrap(), -1);
/// ```
pub fn jacobi(a: i64, n: i64) -> Result<i8> {
    if n <= 0 || n % 2 == 0 {
        return Err(Error::BadModulus(n));
    }
    Ok(jacobi_unchecked(a, n as u64))
}

/// Kronecker symbol `(a/n)` for nonzero `n`.
pub fn kronecker(a: i64, n: i64) -> Result<i8> {
    if n == 0 {
        return Err(Error::Zero);
    }
    Ok(kronecker_unchecked(a, n))
}

pub(crate) fn kronecker_unchecked(a: i64, n: i64) -> i8 {
    let mut t = 1i8;
    if n < 0 && a < 0 {
        t = -t;
    }
    let mut m = n.unsigned_abs();
    let z = m.trailing_zeros();
    if z > 0 {
        if a % 2 == 0 {
            return 0;
        }
        let r = a.rem_euclid(8);
        if z % 2 == 1 && (r == 3 || r == 5) {
            t = -t;
        }
        m >>= z;
    }
    t * jacobi_unchecked(a, m)
}

fn is_squarefree_u64(n: u64) -> bool {
    match factor(n as i64) {
        Ok(f) => f.is_squarefree(),
        Err(_) => false,
    }
}

/// Discriminant of `ℚ(√n)` for square-free `n ∉ {0, 1}`.
pub fn discriminant(n: i64) -> Result<i64> {
    if n == 0 || n == 1 {
        return Err(Error::Invalid(format!("{n} does not define a quadratic field")));
    }
    if !is_squarefree_u64(n.unsigned_abs()) {
        return Err(Error::NotSquarefree(n));
    }
    if n.rem_euclid(4) == 1 {
        Ok(n)
    } else {
        n.checked_mul(4).ok_or(Error::OutOfRange(n as i128 * 4))
    }
}

/// The unique `n*` with `|n*| = |n|` and `n* ≡ 1 mod 4`, for odd `n`.
pub fn star(n: i64) -> Result<i64> {
    if n % 2 == 0 {
        return Err(Error::NotOdd(n));
    }
    Ok(if n.rem_euclid(4) == 1 { n } else { -n })
}

/// Whether `d` is the discriminant of a quadratic field (so `d ≠ 1`).
pub fn is_fundamental(d: i64) -> bool {
    if d == 0 || d == 1 {
        return false;
    }
    match d.rem_euclid(4) {
        1 => is_squarefree_u64(d.unsigned_abs()),
        0 => {
            let m = d / 4;
            matches!(m.rem_euclid(4), 2 | 3) && is_squarefree_u64(m.unsigned_abs())
        }
        _ => false,
    }
}

/// A fundamental discriminant with a single prime divisor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeDiscriminant {
    pub value: i64,
    pub prime: u64,
}

/// Splits a fundamental discriminant into prime discriminants, ordered by
/// their prime.
///
/// ```
/// use amoments::arith::prime_discriminant_decompose;
/// let parts: Vec<i64> = prime_discriminant_decompose(-56).unwrap()
///     .iter().map(|q| q.value).collect();
/// assert_eq!(parts, vec![8, -7]);
/// ```
pub fn prime_discriminant_decompose(delta: i64) -> Result<Vec<PrimeDiscriminant>> {
    if !is_fundamental(delta) {
        return Err(Error::NotFundamental(delta));
    }
    let f = factor(delta)?;
    let mut out = Vec::with_capacity(f.factors().len());
    let mut odd_product: i64 = 1;
    for &(p, _) in f.factors() {
        if p != 2 {
            let q = star(p as i64)?;
            odd_product *= q;
            out.push(PrimeDiscriminant { value: q, prime: p });
        }
    }
    if delta % 2 == 0 {
        out.insert(
            0,
            PrimeDiscriminant {
                value: delta / odd_product,
                prime: 2,
            },
        );
    }
    Ok(out)
}

/// A place of ℚ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Place {
    Infinity,
    Prime(u64),
}

fn split_valuation(mut a: i128, p: i128) -> (u32, i128) {
    let mut v = 0;
    while a % p == 0 {
        a /= p;
        v += 1;
    }
    (v, a)
}

pub(crate) fn hilbert_i128(a: i128, b: i128, v: Place) -> i8 {
    debug_assert!(a != 0 && b != 0);
    match v {
        Place::Infinity => {
            if a < 0 && b < 0 {
                -1
            } else {
                1
            }
        }
        Place::Prime(2) => {
            let (alpha, u) = split_valuation(a, 2);
            let (beta, w) = split_valuation(b, 2);
            let eps = |x: i128| (x.rem_euclid(4) == 3) as u32;
            let omg = |x: i128| matches!(x.rem_euclid(8), 3 | 5) as u32;
            let e = eps(u) * eps(w) + alpha * omg(w) + beta * omg(u);
            if e % 2 == 1 {
                -1
            } else {
                1
            }
        }
        Place::Prime(p) => {
            let pi = p as i128;
            let (alpha, u) = split_valuation(a, pi);
            let (beta, w) = split_valuation(b, pi);
            let mut s = 1i8;
            if alpha % 2 == 1 && beta % 2 == 1 && p % 4 == 3 {
                s = -s;
            }
            if beta % 2 == 1 {
                s *= jacobi_unchecked(u.rem_euclid(pi) as i64, p);
            }
            if alpha % 2 == 1 {
                s *= jacobi_unchecked(w.rem_euclid(pi) as i64, p);
            }
            s
        }
    }
}

fn check_place(v: Place) -> Result<()> {
    match v {
        Place::Prime(p) if !is_prime(p) => Err(Error::NotPrime(p)),
        _ => Ok(()),
    }
}

/// Hilbert symbol `(a, b)_v` of two nonzero integers.
///
/// ```
/// use amoments::arith::{hilbert_symbol, Place};
/// assert_eq!(hilbert_symbol(-1, -1, Place::Infinity).unwrap(), -1);
/// assert_eq!(hilbert_symbol(-1, -1, Place::Prime(2)).unwrap(), -1);
/// assert_eq!(hilbert_symbol(-1, -1, Place::Prime(3)).unwrap(), 1);
/// ```
pub fn hilbert_symbol(a: i64, b: i64, v: Place) -> Result<i8> {
    if a == 0 || b == 0 {
        return Err(Error::Zero);
    }
    check_place(v)?;
    Ok(hilbert_i128(a as i128, b as i128, v))
}

/// Hilbert symbol of two nonzero rationals. Only square classes matter, so
/// `x/y` is replaced by `x·y`.
pub fn hilbert_symbol_rational(a: Ratio<i64>, b: Ratio<i64>, v: Place) -> Result<i8> {
    if a.numer() == &0 || b.numer() == &0 {
        return Err(Error::Zero);
    }
    check_place(v)?;
    let a = *a.numer() as i128 * *a.denom() as i128;
    let b = *b.numer() as i128 * *b.denom() as i128;
    Ok(hilbert_i128(a, b, v))
}

/// The decomposition `a = α²βγ` with `βγ` square-free, `β | α` and
/// `gcd(αβ, γ) = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SqfDecomposition {
    pub alpha: u64,
    pub beta: u64,
    pub gamma: u64,
}

pub fn sqf_decompose(a: i64) -> Result<SqfDecomposition> {
    if a < 1 {
        return Err(Error::Invalid(format!("sqf_decompose needs a ≥ 1, got {a}")));
    }
    let f = factor(a)?;
    let (mut alpha, mut beta, mut gamma) = (1u64, 1u64, 1u64);
    for &(p, e) in f.factors() {
        if e == 1 {
            gamma *= p;
        } else {
            alpha *= p.pow(e / 2);
            if e % 2 == 1 {
                beta *= p;
            }
        }
    }
    Ok(SqfDecomposition { alpha, beta, gamma })
}

/// Sign of the discriminants produced by [`fundamental_discriminants`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn as_i64(self) -> i64 {
        match self {
            Sign::Positive => 1,
            Sign::Negative => -1,
        }
    }
}

const SEGMENT: u64 = 1 << 16;

/// Iterator over fundamental discriminants of one sign with `|Δ| ≤ X`, in
/// increasing order of `|Δ|`. Square-freeness comes from a segmented sieve.
pub struct FundamentalDiscriminants {
    limit: u64,
    sign: i64,
    small_primes: Vec<u64>,
    lo: u64,
    buf: Vec<i64>,
    pos: usize,
}

/// Fundamental discriminants `Δ ≠ 1` of the given sign with `|Δ| ≤ x`.
///
/// ```
/// use amoments::arith::{fundamental_discriminants, Sign};
/// let v: Vec<i64> = fundamental_discriminants(20, Sign::Positive).unwrap().collect();
/// assert_eq!(v, vec![5, 8, 12, 13, 17]);
/// ```
pub fn fundamental_discriminants(x: u64, sign: Sign) -> Result<FundamentalDiscriminants> {
    if x < 3 {
        return Err(Error::Invalid(format!("discriminant bound must be ≥ 3, got {x}")));
    }
    if x > MAX_MAGNITUDE / 4 {
        return Err(Error::OutOfRange(x as i128));
    }
    let r = (x as f64).sqrt() as u64 + 2;
    Ok(FundamentalDiscriminants {
        limit: x,
        sign: sign.as_i64(),
        small_primes: primes_up_to(r),
        lo: 1,
        buf: Vec::new(),
        pos: 0,
    })
}

fn squarefree_segment(lo: u64, hi: u64, primes: &[u64]) -> Vec<bool> {
    let mut flags = vec![true; (hi - lo) as usize];
    for &p in primes {
        let q = p * p;
        if q >= hi {
            break;
        }
        let mut j = lo.div_ceil(q) * q;
        while j < hi {
            flags[(j - lo) as usize] = false;
            j += q;
        }
    }
    flags
}

impl FundamentalDiscriminants {
    fn refill(&mut self) {
        self.buf.clear();
        self.pos = 0;
        while self.buf.is_empty() && self.lo <= self.limit {
            let lo = self.lo;
            let hi = (lo + SEGMENT).min(self.limit + 1);
            let odd = squarefree_segment(lo, hi, &self.small_primes);
            let qlo = lo / 4;
            let qhi = (hi - 1) / 4 + 1;
            let quarter = squarefree_segment(qlo.max(1), qhi.max(2), &self.small_primes);
            for n in lo..hi {
                let d = self.sign * n as i64;
                if d == 1 {
                    continue;
                }
                let ok = match d.rem_euclid(4) {
                    1 => odd[(n - lo) as usize],
                    0 => {
                        let m = d / 4;
                        matches!(m.rem_euclid(4), 2 | 3) && quarter[(n / 4 - qlo.max(1)) as usize]
                    }
                    _ => false,
                };
                if ok {
                    self.buf.push(d);
                }
            }
            self.lo = hi;
        }
    }
}

impl Iterator for FundamentalDiscriminants {
    type Item = i64;

    fn next(&mut self) -> Option<i64> {
        if self.pos >= self.buf.len() {
            self.refill();
            if self.buf.is_empty() {
                return None;
            }
        }
        let d = self.buf[self.pos];
        self.pos += 1;
        Some(d)
    }
}

/// Integer square root.
pub fn isqrt(n: u64) -> u64 {
    if n < 2 {
        return n;
    }
    let mut r = (n as f64).sqrt() as u64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}
