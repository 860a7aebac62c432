//! Index calculus over `F₂^{2k}` and `F₂^{4k}`, the exact moment identities
//! built on it, and the large-`X` experiments.
//!
//! Class-group indices are bit masks with block `i` occupying bits `2i` and
//! `2i+1` (`u_{2i+1}`, `u_{2i+2}`). Selmer indices use four bits per block,
//! `u₁` in the lowest bit.

use crate::arith::{factor, fundamental_discriminants, jacobi_unchecked, primes_up_to, Sign, SpfSieve};
use crate::density::to_f64;
use crate::error::{Error, Result};
use crate::quadform::ClassGroupOracle;
use crate::redei::{average_g_power, rk4_narrow};
use crate::selmer::{average_g_r_power, f_r, CurveData};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// Largest `X` for the exact first-moment sums.
pub const MAX_EXACT_X: u64 = 10_000;
/// Largest `X` for tuple enumeration in [`s_moment`].
pub const MAX_TUPLE_X: u64 = 500;
/// Largest `X` for [`kth_moment_identity_check`].
pub const MAX_IDENTITY_X: u64 = 200;
/// Largest `X` for [`selmer_first_moment_expand`].
pub const MAX_SELMER_EXPAND_X: u64 = 2000;
/// Largest `X` for the ε-summed pre-average expansions.
pub const MAX_PREAVERAGE_X: u64 = 100;

/// A multiplicative weight `F`, evaluated on square-free arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Weight {
    One,
    TwoOmega,
    Tau,
    /// `κ^{ω(m)}` for a non-negative rational `κ`.
    Kappa(BigRational),
}

impl Weight {
    /// `F(m)` for square-free `m` with `ω(m)` prime factors.
    pub fn at_squarefree(&self, omega: u32) -> BigRational {
        match self {
            Weight::One => BigRational::one(),
            Weight::TwoOmega | Weight::Tau => BigRational::from_integer(BigInt::one() << omega),
            Weight::Kappa(k) => num_traits::pow(k.clone(), omega as usize),
        }
    }

    /// `F(p)` at a prime.
    pub fn at_prime(&self) -> f64 {
        to_f64(&self.at_squarefree(1))
    }

    pub fn name(&self) -> String {
        match self {
            Weight::One => "one".into(),
            Weight::TwoOmega => "2^omega".into(),
            Weight::Tau => "tau".into(),
            Weight::Kappa(k) => format!("kappa:{k}"),
        }
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Weight {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" | "1" => Ok(Weight::One),
            "2^omega" | "two-omega" => Ok(Weight::TwoOmega),
            "tau" => Ok(Weight::Tau),
            _ => {
                let Some(k) = s.strip_prefix("kappa:") else {
                    return Err(Error::Invalid(format!("unsupported weight {s:?}")));
                };
                let k: BigRational = k.parse().map_err(|_| Error::Invalid(format!("bad kappa in {s:?}")))?;
                if k.is_negative() {
                    return Err(Error::Invalid("kappa must be non-negative".into()));
                }
                Ok(Weight::Kappa(k))
            }
        }
    }
}

/// Which linkage form an index vector is read with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Setting {
    Class,
    Selmer,
}

impl Setting {
    pub fn block_size(self) -> usize {
        match self {
            Setting::Class => 2,
            Setting::Selmer => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Setting::Class => "class",
            Setting::Selmer => "selmer",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class" => Ok(Setting::Class),
            "selmer" => Ok(Setting::Selmer),
            _ => Err(Error::Invalid(format!("unknown setting {s:?}"))),
        }
    }
}

const MAX_INDEX_BITS: usize = 24;

/// An element of `F₂^{2k}` or `F₂^{4k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexVector {
    setting: Setting,
    k: usize,
    bits: u32,
}

impl IndexVector {
    pub fn from_mask(setting: Setting, k: usize, bits: u32) -> Result<Self> {
        let len = setting.block_size() * k;
        if k == 0 || len > MAX_INDEX_BITS {
            return Err(Error::OutOfRange(k as i128));
        }
        if bits >> len != 0 {
            return Err(Error::Dimension {
                expected: len,
                got: 32 - bits.leading_zeros() as usize,
            });
        }
        Ok(IndexVector { setting, k, bits })
    }

    /// From coordinates `u₁, u₂, …`.
    pub fn new(setting: Setting, k: usize, coords: &[u8]) -> Result<Self> {
        let len = setting.block_size() * k;
        if coords.len() != len {
            return Err(Error::Dimension {
                expected: len,
                got: coords.len(),
            });
        }
        let bits = coords
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, &c)| acc | ((c & 1) as u32) << i);
        IndexVector::from_mask(setting, k, bits)
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn mask(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.setting.block_size() * self.k
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self) -> Vec<u8> {
        (0..self.len()).map(|i| (self.bits >> i & 1) as u8).collect()
    }

    /// The projection `π_i` (0-based block), as a block mask.
    pub fn block(&self, i: usize) -> u32 {
        block_of(self.setting, self.bits, i)
    }

    pub fn s1(&self) -> u8 {
        s1_mask(self.setting, self.k, self.bits)
    }
}

impl fmt::Display for IndexVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in self.coords() {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

fn block_of(setting: Setting, bits: u32, i: usize) -> u32 {
    let w = setting.block_size();
    bits >> (w * i) & ((1 << w) - 1)
}

/// The bijection `B : F₂² → {1, 2, 3, 4}`.
///
/// ```
/// use amoments::moments::bijection_b;
/// assert_eq!(bijection_b(0, 0), 1);
/// assert_eq!(bijection_b(1, 1), 3);
/// assert_eq!(bijection_b(1, 0), 4);
/// ```
pub fn bijection_b(x: u8, y: u8) -> u8 {
    match (x & 1, y & 1) {
        (0, 0) => 1,
        (0, 1) => 2,
        (1, 1) => 3,
        _ => 4,
    }
}

fn b_of_block(block: u32) -> u8 {
    bijection_b((block & 1) as u8, (block >> 1 & 1) as u8)
}

/// `ψ(u, v) = v₁(u₄ + v₄) + v₃(u₂ + v₂)` on 4-bit blocks.
fn psi(u: u32, v: u32) -> u8 {
    let c = |w: u32, i: u32| (w >> (i - 1) & 1) as u8;
    (c(v, 1) & (c(u, 4) ^ c(v, 4))) ^ (c(v, 3) & (c(u, 2) ^ c(v, 2)))
}

fn phi_block(setting: Setting, u: u32, v: u32) -> u8 {
    match setting {
        Setting::Class => matches!((b_of_block(u), b_of_block(v)), (1, 4) | (3, 2)) as u8,
        Setting::Selmer => psi(u, v),
    }
}

fn phi_mask(setting: Setting, k: usize, u: u32, v: u32) -> u8 {
    (0..k).fold(0, |acc, i| {
        acc ^ phi_block(setting, block_of(setting, u, i), block_of(setting, v, i))
    })
}

const fn b4(s: &[u8; 4]) -> u32 {
    (s[0] - b'0') as u32 | ((s[1] - b'0') as u32) << 1 | ((s[2] - b'0') as u32) << 2 | ((s[3] - b'0') as u32) << 3
}

/// Selmer blocks counted by `S₁`: the labels of `D₁₂, D₁₃, D₂₁, D₂₃, D₃₁, D₃₂`.
const SELMER_S1_BLOCKS: [u32; 6] = [
    b4(b"1011"),
    b4(b"1001"),
    b4(b"1110"),
    b4(b"0110"),
    b4(b"1101"),
    b4(b"0111"),
];

/// The sixteen variables `D_{ij}` (`j = 0` is the trivial term) and their
/// labels in `F₂⁴`.
pub const SELMER_LABELS: [(u8, u8, u32); 16] = [
    (1, 0, b4(b"0001")),
    (1, 2, b4(b"1011")),
    (1, 3, b4(b"1001")),
    (1, 4, b4(b"0011")),
    (2, 0, b4(b"0100")),
    (2, 1, b4(b"1110")),
    (2, 3, b4(b"0110")),
    (2, 4, b4(b"1100")),
    (3, 0, b4(b"0101")),
    (3, 1, b4(b"1101")),
    (3, 2, b4(b"0111")),
    (3, 4, b4(b"1111")),
    (4, 0, b4(b"0000")),
    (4, 1, b4(b"0010")),
    (4, 2, b4(b"1000")),
    (4, 3, b4(b"1010")),
];

fn selmer_label(i: u8, j: u8) -> u32 {
    SELMER_LABELS
        .iter()
        .find(|&&(a, b, _)| a == i && b == j)
        .map(|&(_, _, l)| l)
        .expect("label table covers all (i, j)")
}

fn s1_mask(setting: Setting, k: usize, bits: u32) -> u8 {
    let count = (0..k)
        .filter(|&i| {
            let b = block_of(setting, bits, i);
            match setting {
                Setting::Class => b == 0,
                Setting::Selmer => SELMER_S1_BLOCKS.contains(&b),
            }
        })
        .count();
    (count % 2) as u8
}

/// `φ(u, v) = Σ_i φ_i(π_i u, π_i v)`.
///
/// ```
/// use amoments::moments::{phi, IndexVector, Setting};
/// let u = IndexVector::new(Setting::Class, 1, &[0, 0]).unwrap();
/// let v = IndexVector::new(Setting::Class, 1, &[1, 0]).unwrap();
/// assert_eq!(phi(&u, &v).unwrap(), 1);
/// assert_eq!(phi(&v, &u).unwrap(), 0);
/// ```
pub fn phi(u: &IndexVector, v: &IndexVector) -> Result<u8> {
    if u.setting != v.setting || u.k != v.k {
        return Err(Error::Dimension {
            expected: u.len(),
            got: v.len(),
        });
    }
    Ok(phi_mask(u.setting, u.k, u.bits, v.bits))
}

/// `P(w) = Σ_j w_{2j+1}(w_{2j+1} + w_{2j+2})` on `F₂^{2k}`.
pub fn p_form(k: usize, w: u32) -> u8 {
    (0..k).fold(0, |acc, j| {
        let a = (w >> (2 * j) & 1) as u8;
        let b = (w >> (2 * j + 1) & 1) as u8;
        acc ^ (a & (a ^ b))
    })
}

/// Exhaustively checks `P(u + v) = φ(u, v) + φ(v, u)` on `F₂^{2k}`.
///
/// ```
/// assert!(amoments::moments::check_p_identity(2).unwrap());
/// ```
pub fn check_p_identity(k: usize) -> Result<bool> {
    if k == 0 || k > 4 {
        return Err(Error::OutOfRange(k as i128));
    }
    let n = 1u32 << (2 * k);
    for u in 0..n {
        for v in 0..n {
            let lhs = p_form(k, u ^ v);
            let rhs = phi_mask(Setting::Class, k, u, v) ^ phi_mask(Setting::Class, k, v, u);
            if lhs != rhs {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// A largest set of pairwise unlinked index vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnlinkedSet {
    pub setting: Setting,
    pub k: usize,
    pub witness: Vec<IndexVector>,
}

impl UnlinkedSet {
    pub fn size(&self) -> usize {
        self.witness.len()
    }
}

/// Whether `φ(u, v) = 0` for every ordered pair from `set`.
pub fn is_unlinked(set: &[IndexVector]) -> Result<bool> {
    for u in set {
        for v in set {
            if phi(u, v)? == 1 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Exact maximum size of an unlinked set, by branch and bound on the
/// compatibility graph.
///
/// ```
/// use amoments::moments::{max_unlinked, Setting};
/// assert_eq!(max_unlinked(Setting::Class, 2).unwrap().size(), 4);
/// ```
pub fn max_unlinked(setting: Setting, k: usize) -> Result<UnlinkedSet> {
    let limit = match setting {
        Setting::Class => 3,
        Setting::Selmer => 2,
    };
    if k == 0 || k > limit {
        return Err(Error::OutOfRange(k as i128));
    }
    let n = 1usize << (setting.block_size() * k);
    let words = n.div_ceil(64);
    let mut adj = vec![vec![0u64; words]; n];
    for u in 0..n {
        for v in 0..n {
            if u != v && phi_mask(setting, k, u as u32, v as u32) == 0 && phi_mask(setting, k, v as u32, u as u32) == 0
            {
                adj[u][v / 64] |= 1 << (v % 64);
            }
        }
    }
    let mut all = vec![0u64; words];
    for v in 0..n {
        all[v / 64] |= 1 << (v % 64);
    }
    let mut best = Vec::new();
    expand_clique(&adj, &mut Vec::new(), all, &mut best);
    best.sort_unstable();
    let witness = best
        .into_iter()
        .map(|b| IndexVector::from_mask(setting, k, b as u32))
        .collect::<Result<Vec<_>>>()?;
    Ok(UnlinkedSet { setting, k, witness })
}

fn bits_iter(set: &[u64]) -> impl Iterator<Item = usize> + '_ {
    set.iter().enumerate().flat_map(|(w, &word)| {
        let mut x = word;
        std::iter::from_fn(move || {
            if x == 0 {
                return None;
            }
            let b = x.trailing_zeros() as usize;
            x &= x - 1;
            Some(w * 64 + b)
        })
    })
}

fn expand_clique(adj: &[Vec<u64>], current: &mut Vec<usize>, mut cand: Vec<u64>, best: &mut Vec<usize>) {
    // Greedy colouring gives an upper bound for each prefix of the order.
    let mut order = Vec::new();
    let mut uncolored = cand.clone();
    let mut color = 0;
    while uncolored.iter().any(|&w| w != 0) {
        color += 1;
        let mut q = uncolored.clone();
        loop {
            let Some(v) = bits_iter(&q).next() else { break };
            uncolored[v / 64] &= !(1 << (v % 64));
            q[v / 64] &= !(1 << (v % 64));
            for (qw, aw) in q.iter_mut().zip(&adj[v]) {
                *qw &= !aw;
            }
            order.push((v, color));
        }
    }
    for &(v, c) in order.iter().rev() {
        if current.len() + c <= best.len() {
            return;
        }
        current.push(v);
        let next: Vec<u64> = cand.iter().zip(&adj[v]).map(|(a, b)| a & b).collect();
        if next.iter().all(|&w| w == 0) {
            if current.len() > best.len() {
                *best = current.clone();
            }
        } else {
            expand_clique(adj, current, next, best);
        }
        current.pop();
        cand[v / 64] &= !(1 << (v % 64));
    }
}

/// Odd square-free `m ≤ x` coprime to `modulus`, with their primes.
fn squarefree_upto(x: u64, modulus: u64) -> Vec<(u64, Vec<u64>)> {
    let sieve = SpfSieve::new(x.max(1));
    let mut out = Vec::new();
    for m in (1..=x).step_by(2) {
        let f = sieve.factor(m as i64);
        if !f.is_squarefree() || num_integer::gcd(m, modulus) != 1 {
            continue;
        }
        out.push((m, f.primes().collect()));
    }
    out
}

fn check_x(x: u64, max: u64) -> Result<()> {
    if x > max {
        return Err(Error::OutOfRange(x as i128));
    }
    Ok(())
}

/// `Σ_{m ≤ X} μ(2m)² f₁*(m) F(m)` with `f₁*` the twist average of `g`.
///
/// ```
/// use amoments::moments::{first_moment_lhs, Weight};
/// use num_rational::BigRational;
/// assert_eq!(first_moment_lhs(3, &Weight::One).unwrap(), BigRational::new(5.into(), 2.into()));
/// ```
pub fn first_moment_lhs(x: u64, weight: &Weight) -> Result<BigRational> {
    check_x(x, MAX_EXACT_X)?;
    let mut total = BigRational::zero();
    for (m, primes) in squarefree_upto(x, 2) {
        total += lhs_term(m, &primes, weight)?;
    }
    Ok(total)
}

/// `Σ_{def ≤ X} μ(2def)² F(def) 2^{-ω(def)} (d/e)`.
pub fn first_moment_rhs(x: u64, weight: &Weight) -> Result<BigRational> {
    check_x(x, MAX_EXACT_X)?;
    let mut total = BigRational::zero();
    for (m, primes) in squarefree_upto(x, 2) {
        total += rhs_term(m, &primes, weight);
    }
    Ok(total)
}

/// Compares both sides of the first-moment identity at every `X ≤ x`;
/// returns the first `X` where they differ.
pub fn first_moment_sweep(x: u64, weight: &Weight) -> Result<Option<u64>> {
    check_x(x, MAX_EXACT_X)?;
    for (m, primes) in squarefree_upto(x, 2) {
        if lhs_term(m, &primes, weight)? != rhs_term(m, &primes, weight) {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

fn lhs_term(m: u64, primes: &[u64], weight: &Weight) -> Result<BigRational> {
    Ok(weight.at_squarefree(primes.len() as u32) * average_g_power(m as i64, 1)?)
}

fn rhs_term(m: u64, primes: &[u64], weight: &Weight) -> BigRational {
    let divisors = divisors_of(primes);
    let mut inner = 0i64;
    for &d in &divisors {
        for &e in &divisors {
            if (m / d) % e == 0 {
                inner += jacobi_unchecked(d as i64, e) as i64;
            }
        }
    }
    let scale = BigRational::new(BigInt::from(inner), BigInt::one() << primes.len());
    weight.at_squarefree(primes.len() as u32) * scale
}

fn divisors_of(primes: &[u64]) -> Vec<u64> {
    let mut out = vec![1u64];
    for &p in primes {
        let n = out.len();
        for i in 0..n {
            out.push(out[i] * p);
        }
    }
    out
}

/// Calls `f` with every assignment of `r` primes to `n` slots.
fn for_each_assignment(r: usize, n: usize, mut f: impl FnMut(&[usize])) {
    let mut a = vec![0usize; r];
    loop {
        f(&a);
        let mut i = 0;
        while i < r {
            a[i] += 1;
            if a[i] < n {
                break;
            }
            a[i] = 0;
            i += 1;
        }
        if i == r {
            return;
        }
    }
}

/// The index set and congruence modulus of a moment expansion.
#[derive(Debug, Clone)]
pub struct MomentSpace {
    setting: Setting,
    k: usize,
    indices: Vec<u32>,
    modulus: u64,
    curve: Option<CurveData>,
}

impl MomentSpace {
    /// Class-group expansion: indices in `F₂^{2k}` with `S₁` even, classes
    /// modulo 4.
    pub fn class(k: usize) -> Result<Self> {
        if k == 0 || k > 3 {
            return Err(Error::OutOfRange(k as i128));
        }
        Ok(MomentSpace {
            setting: Setting::Class,
            k,
            indices: even_indices(Setting::Class, k),
            modulus: 4,
            curve: None,
        })
    }

    /// Selmer expansion: indices in `F₂^{4k}` with `S₁` even, classes
    /// modulo `8|Ω|`.
    pub fn selmer(curve: &CurveData, k: usize) -> Result<Self> {
        if k == 0 || k > 2 {
            return Err(Error::OutOfRange(k as i128));
        }
        Ok(MomentSpace {
            setting: Setting::Selmer,
            k,
            indices: even_indices(Setting::Selmer, k),
            modulus: 8 * curve.omega().unsigned_abs(),
            curve: Some(curve.clone()),
        })
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn indices(&self) -> Vec<IndexVector> {
        self.indices
            .iter()
            .map(|&b| IndexVector {
                setting: self.setting,
                k: self.k,
                bits: b,
            })
            .collect()
    }

    fn weight_base(&self) -> u32 {
        match self.setting {
            Setting::Class => 1,
            Setting::Selmer => 2,
        }
    }

    fn phi_table(&self) -> Vec<u8> {
        let idx = &self.indices;
        let n = idx.len();
        let mut t = vec![0u8; n * n];
        for a in 0..n {
            for b in 0..n {
                t[a * n + b] = phi_mask(self.setting, self.k, idx[a], idx[b]);
            }
        }
        t
    }

    fn coprime_modulus(&self) -> u64 {
        match &self.curve {
            Some(c) => c.omega().unsigned_abs(),
            None => 2,
        }
    }
}

fn even_indices(setting: Setting, k: usize) -> Vec<u32> {
    let n = 1u32 << (setting.block_size() * k);
    (0..n).filter(|&u| s1_mask(setting, k, u) == 0).collect()
}

/// `S(X, k, a)` for every residue tuple `a` that occurs, keyed by the
/// tuple (one entry per index of `space`, in order).
pub fn s_moment_classes(space: &MomentSpace, x: u64, weight: &Weight) -> Result<BTreeMap<Vec<u64>, BigRational>> {
    check_x(x, MAX_TUPLE_X)?;
    let phi_table = space.phi_table();
    let mut out: BTreeMap<Vec<u64>, BigRational> = BTreeMap::new();
    for (_, primes) in squarefree_upto(x, space.coprime_modulus()) {
        for (class, v) in tuple_sums(space, &phi_table, &primes, weight) {
            *out.entry(class).or_insert_with(BigRational::zero) += v;
        }
    }
    out.retain(|_, v| !v.is_zero());
    Ok(out)
}

/// Contribution of the tuples with `∏ D_u = m` to each `S(X, k, a)`.
fn tuple_sums(
    space: &MomentSpace,
    phi_table: &[u8],
    primes: &[u64],
    weight: &Weight,
) -> BTreeMap<Vec<u64>, BigRational> {
    let n = space.indices.len();
    let r = primes.len();
    let w = weight.at_squarefree(r as u32)
        / BigRational::from_integer(BigInt::one() << (space.k as u32 * space.weight_base() * r as u32));
    let leg: Vec<i64> = primes
        .iter()
        .flat_map(|&q| {
            primes.iter().map(move |&p| {
                if p == q {
                    0
                } else {
                    jacobi_unchecked(q as i64, p) as i64
                }
            })
        })
        .collect();
    let mut sums: BTreeMap<Vec<u64>, i64> = BTreeMap::new();
    for_each_assignment(r, n, |assign| {
        let mut sign = 1i64;
        for a in 0..r {
            for b in 0..r {
                if a != b && phi_table[assign[a] * n + assign[b]] == 1 {
                    sign *= leg[a * r + b];
                }
            }
        }
        let mut class = vec![1u64; n];
        for (a, &slot) in assign.iter().enumerate() {
            class[slot] = class[slot] * (primes[a] % space.modulus) % space.modulus;
        }
        *sums.entry(class).or_insert(0) += sign;
    });
    sums.into_iter()
        .filter(|&(_, s)| s != 0)
        .map(|(c, s)| (c, &w * BigRational::from_integer(s.into())))
        .collect()
}

/// `S(X, k, a)` for one residue tuple `a`.
///
/// ```
/// use amoments::moments::{s_moment, MomentSpace, Weight};
/// use num_rational::BigRational;
/// let space = MomentSpace::class(1).unwrap();
/// let v = s_moment(&space, 1, &[1, 1, 1], &Weight::One).unwrap();
/// assert_eq!(v, BigRational::from_integer(1.into()));
/// ```
pub fn s_moment(space: &MomentSpace, x: u64, a: &[u64], weight: &Weight) -> Result<BigRational> {
    if a.len() != space.indices.len() {
        return Err(Error::Dimension {
            expected: space.indices.len(),
            got: a.len(),
        });
    }
    if let Some(&bad) = a
        .iter()
        .find(|&&r| r >= space.modulus || num_integer::gcd(r, space.modulus) != 1)
    {
        return Err(Error::NotCoprime(bad as i64, space.modulus as i64));
    }
    let all = s_moment_classes(space, x, weight)?;
    Ok(all.get(a).cloned().unwrap_or_else(BigRational::zero))
}

/// Per-block count of unordered `B`-pairs `{1,3}`, `{1,4}`, `{2,3}`,
/// modulo 2: the reciprocity exponent between the literal Rédei symbols
/// and the `φ` form.
fn reciprocity_exponent(k: usize, u: u32, v: u32) -> u8 {
    (0..k).fold(0, |acc, i| {
        let a = b_of_block(block_of(Setting::Class, u, i));
        let b = b_of_block(block_of(Setting::Class, v, i));
        let pair = (a.min(b), a.max(b));
        acc ^ matches!(pair, (1, 3) | (1, 4) | (2, 3)) as u8
    })
}

/// The sign attached to `S(X, k, a)` in the class-group expansion.
pub fn class_sign(space: &MomentSpace, a: &[u64]) -> i64 {
    let idx = &space.indices;
    let mut s = 1;
    for i in 0..idx.len() {
        for j in i + 1..idx.len() {
            if a[i] % 4 == 3 && a[j] % 4 == 3 && reciprocity_exponent(space.k, idx[i], idx[j]) == 1 {
                s = -s;
            }
        }
    }
    s
}

/// `λ′(a) = (δ₃₁δ₃₂/a_{14})(δ₂₁δ₂₃/a_{24})(δ₁₂δ₁₃/a_{34})` for the `k = 1`
/// Selmer expansion.
pub fn selmer_lambda(curve: &CurveData, space: &MomentSpace, a: &[u64]) -> i64 {
    let pos = |i, j| {
        let l = selmer_label(i, j);
        space.indices.iter().position(|&b| b == l).expect("label is S1-even")
    };
    let d = |i, j| curve.delta(i, j);
    jacobi_unchecked(d(3, 1) * d(3, 2), a[pos(1, 4)]) as i64
        * jacobi_unchecked(d(2, 1) * d(2, 3), a[pos(2, 4)]) as i64
        * jacobi_unchecked(d(1, 2) * d(1, 3), a[pos(3, 4)]) as i64
}

/// Exact values of both sides of a `k`-th moment identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityReport {
    pub setting: Setting,
    pub x: u64,
    pub k: usize,
    pub direct: BigRational,
    pub expansion: BigRational,
}

impl IdentityReport {
    pub fn holds(&self) -> bool {
        self.direct == self.expansion
    }
}

/// The direct moment `Σ_m F(m)·2^{-r}Σ_ε g(m, ε)^k` over odd square-free
/// `m ≤ X` (class), or `Σ_m F(m)·2^{-r}Σ_ε g_r(m, ε)^k` over square-free
/// `m ≤ X` coprime to `Ω` (Selmer).
pub fn direct_moment(
    setting: Setting,
    curve: Option<&CurveData>,
    x: u64,
    k: u32,
    weight: &Weight,
) -> Result<BigRational> {
    let modulus = match (setting, curve) {
        (Setting::Class, _) => 2,
        (Setting::Selmer, Some(c)) => c.omega().unsigned_abs(),
        (Setting::Selmer, None) => return Err(Error::Invalid("selmer moment needs a curve".into())),
    };
    let mut total = BigRational::zero();
    for (m, primes) in squarefree_upto(x, modulus) {
        total += direct_moment_term(setting, curve, m, &primes, k, weight)?;
    }
    Ok(total)
}

fn direct_moment_term(
    setting: Setting,
    curve: Option<&CurveData>,
    m: u64,
    primes: &[u64],
    k: u32,
    weight: &Weight,
) -> Result<BigRational> {
    let f = weight.at_squarefree(primes.len() as u32);
    Ok(match (setting, curve) {
        (Setting::Selmer, Some(c)) => {
            let (num, den) = average_g_r_power(c, m as i64, k)?;
            f * BigRational::new(num, den)
        }
        _ => f * average_g_power(m as i64, k)?,
    })
}

/// Compares the direct moment with the signed sum of `S(X, k, a)` over all
/// residue tuples: `Σ_a σ(a) S(X, k, a)` for class groups and
/// `Σ_a λ′(a) S(X, 1, a)` for Selmer groups.
///
/// ```
/// use amoments::moments::{kth_moment_identity_check, Setting, Weight};
/// let r = kth_moment_identity_check(Setting::Class, None, 30, 2, &Weight::One).unwrap();
/// assert!(r.holds());
/// ```
pub fn kth_moment_identity_check(
    setting: Setting,
    curve: Option<&CurveData>,
    x: u64,
    k: usize,
    weight: &Weight,
) -> Result<IdentityReport> {
    let space = identity_space(setting, curve, x, k)?;
    let mut expansion = BigRational::zero();
    for (a, s) in s_moment_classes(&space, x, weight)? {
        expansion += BigRational::from_integer(expansion_sign(&space, &a).into()) * s;
    }
    Ok(IdentityReport {
        setting,
        x,
        k,
        direct: direct_moment(setting, curve, x, k as u32, weight)?,
        expansion,
    })
}

/// Runs the `k`-th moment identity at every `X ≤ x` by comparing the
/// contributions of each `m`; returns the first `X` where they differ.
pub fn kth_moment_identity_sweep(
    setting: Setting,
    curve: Option<&CurveData>,
    x: u64,
    k: usize,
    weight: &Weight,
) -> Result<Option<u64>> {
    let space = identity_space(setting, curve, x, k)?;
    let phi_table = space.phi_table();
    for (m, primes) in squarefree_upto(x, space.coprime_modulus()) {
        let mut expansion = BigRational::zero();
        for (a, s) in tuple_sums(&space, &phi_table, &primes, weight) {
            expansion += BigRational::from_integer(expansion_sign(&space, &a).into()) * s;
        }
        let direct = direct_moment_term(setting, curve, m, &primes, k as u32, weight)?;
        if direct != expansion {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

fn identity_space(setting: Setting, curve: Option<&CurveData>, x: u64, k: usize) -> Result<MomentSpace> {
    check_x(x, MAX_IDENTITY_X)?;
    let (space, max_k) = match setting {
        Setting::Class => (MomentSpace::class(k)?, 2),
        Setting::Selmer => {
            let c = curve.ok_or_else(|| Error::Invalid("selmer moment needs a curve".into()))?;
            (MomentSpace::selmer(c, k)?, 1)
        }
    };
    if k > max_k {
        return Err(Error::OutOfRange(k as i128));
    }
    Ok(space)
}

fn expansion_sign(space: &MomentSpace, a: &[u64]) -> i64 {
    match &space.curve {
        None => class_sign(space, a),
        Some(c) => selmer_lambda(c, space, a),
    }
}

/// The class-group `k`-th moment expanded over all `4^k` indices with the
/// twist characters kept, summed over every `ε` and divided by `2^r`.
/// Written directly in terms of the divisors `d_{i,1} … d_{i,4}` of each
/// factorization.
pub fn class_preaverage_sum(x: u64, k: usize, weight: &Weight) -> Result<BigRational> {
    check_x(x, MAX_PREAVERAGE_X)?;
    if k == 0 || k > 2 {
        return Err(Error::OutOfRange(k as i128));
    }
    let n = 1usize << (2 * k);
    let mut total = BigRational::zero();
    for (_, primes) in squarefree_upto(x, 2) {
        let r = primes.len();
        let mut sum = 0i64;
        for eps in 0u32..(1 << r) {
            for_each_assignment(r, n, |assign| {
                let mut d = vec![[1i64; 5]; k];
                let mut t = 1i64;
                for (a, &u) in assign.iter().enumerate() {
                    for (i, di) in d.iter_mut().enumerate() {
                        let j = b_of_block(block_of(Setting::Class, u as u32, i)) as usize;
                        di[j] *= primes[a] as i64;
                        if j == 1 && eps >> a & 1 == 1 {
                            t = -t;
                        }
                    }
                }
                let mut term = t;
                for di in &d {
                    term *= jacobi_unchecked(di[3] * di[4], di[1] as u64) as i64;
                    term *= jacobi_unchecked(di[1] * di[2], di[3] as u64) as i64;
                }
                sum += term;
            });
        }
        let den = BigInt::one() << (r as u32 * (k as u32 + 1));
        total += weight.at_squarefree(r as u32) * BigRational::new(sum.into(), den);
    }
    Ok(total)
}

/// Numerator constant `δ` attached to `D_{ij}` in the Selmer detector.
fn selmer_delta(curve: &CurveData, i: u8, j: u8) -> i64 {
    let d = |a, b| curve.delta(a, b);
    match (i, j) {
        (1, 2) => d(3, 1),
        (1, 3) => d(3, 2),
        (1, 4) => d(3, 1) * d(3, 2),
        (2, 1) => d(2, 1),
        (2, 3) => d(2, 3),
        (2, 4) => d(2, 1) * d(2, 3),
        (3, 1) => d(1, 2),
        (3, 2) => d(1, 3),
        (3, 4) => d(1, 2) * d(1, 3),
        _ => 1,
    }
}

/// Evaluates `∏_{(i,j), j ≠ 0} (c_{ij}·∏_{k ∉ {i,j}} D_k / D_{ij})` for
/// the variables in `vals` (indexed like [`SELMER_LABELS`]); `c_{ij}` is
/// the detector constant when `with_delta`, else 1.
fn selmer_symbols(curve: &CurveData, vals: &[i64; 16], with_delta: bool) -> i64 {
    let mut big_d = [1i64; 5];
    for (slot, &(i, _, _)) in SELMER_LABELS.iter().enumerate() {
        big_d[i as usize] *= vals[slot];
    }
    let mut s = 1i64;
    for (slot, &(i, j, _)) in SELMER_LABELS.iter().enumerate() {
        if j == 0 || vals[slot] == 1 {
            continue;
        }
        let mut num: i64 = (1..=4u8)
            .filter(|&k| k != i && k != j)
            .map(|k| big_d[k as usize])
            .product();
        if with_delta {
            num *= selmer_delta(curve, i, j);
        }
        s *= jacobi_unchecked(num, vals[slot] as u64) as i64;
        if s == 0 {
            break;
        }
    }
    s
}

fn has_twist(i: u8, j: u8) -> bool {
    i <= 3 && (1..=3).contains(&j)
}

/// The Selmer first moment expanded over all sixteen `D_{ij}` with the
/// twist characters kept, summed over every `ε` and divided by `2^r`.
pub fn selmer_preaverage_sum(curve: &CurveData, x: u64, weight: &Weight) -> Result<BigRational> {
    check_x(x, MAX_PREAVERAGE_X)?;
    let mut total = BigRational::zero();
    for (_, primes) in squarefree_upto(x, curve.omega().unsigned_abs()) {
        let r = primes.len();
        let mut sum = 0i64;
        for eps in 0u32..(1 << r) {
            for_each_assignment(r, 16, |assign| {
                let mut vals = [1i64; 16];
                let mut t = 1i64;
                for (a, &slot) in assign.iter().enumerate() {
                    vals[slot] *= primes[a] as i64;
                    let (i, j, _) = SELMER_LABELS[slot];
                    if has_twist(i, j) && eps >> a & 1 == 1 {
                        t = -t;
                    }
                }
                sum += t * selmer_symbols(curve, &vals, true);
            });
        }
        let den = BigInt::one() << (3 * r as u32);
        total += weight.at_squarefree(r as u32) * BigRational::new(sum.into(), den);
    }
    Ok(total)
}

/// `Σ_{m ≤ X} F(m) f₁*(m)` for the Selmer majorant, with `f₁*(m)` written
/// as `4^{-ω(m)} Σ_{m = D₁D₂D₃D₄} λ′(D) ∏ (D_{kl}/D_{ij})` under
/// `D₁₂D₁₃D₂₁D₂₃D₃₁D₃₂ = 1`.
///
/// ```
/// use amoments::moments::{direct_moment, selmer_first_moment_expand, Setting, Weight};
/// use amoments::selmer::CurveData;
/// let e = CurveData::new(0, 1, 2).unwrap();
/// let lhs = selmer_first_moment_expand(&e, 30, &Weight::One).unwrap();
/// assert_eq!(lhs, direct_moment(Setting::Selmer, Some(&e), 30, 1, &Weight::One).unwrap());
/// ```
pub fn selmer_first_moment_expand(curve: &CurveData, x: u64, weight: &Weight) -> Result<BigRational> {
    check_x(x, MAX_SELMER_EXPAND_X)?;
    let allowed: Vec<usize> = (0..16)
        .filter(|&s| {
            let (i, j, _) = SELMER_LABELS[s];
            !has_twist(i, j)
        })
        .collect();
    let pos = |i, j| {
        SELMER_LABELS
            .iter()
            .position(|&(a, b, _)| a == i && b == j)
            .expect("label")
    };
    let (p14, p24, p34) = (pos(1, 4), pos(2, 4), pos(3, 4));
    let lambda_num = [
        selmer_delta(curve, 1, 4),
        selmer_delta(curve, 2, 4),
        selmer_delta(curve, 3, 4),
    ];
    let mut total = BigRational::zero();
    for (_, primes) in squarefree_upto(x, curve.omega().unsigned_abs()) {
        let r = primes.len();
        let mut sum = 0i64;
        for_each_assignment(r, allowed.len(), |assign| {
            let mut vals = [1i64; 16];
            for (a, &c) in assign.iter().enumerate() {
                vals[allowed[c]] *= primes[a] as i64;
            }
            let lambda = jacobi_unchecked(lambda_num[0], vals[p14] as u64) as i64
                * jacobi_unchecked(lambda_num[1], vals[p24] as u64) as i64
                * jacobi_unchecked(lambda_num[2], vals[p34] as u64) as i64;
            sum += lambda * selmer_symbols(curve, &vals, false);
        });
        let den = BigInt::one() << (2 * r as u32);
        total += weight.at_squarefree(r as u32) * BigRational::new(sum.into(), den);
    }
    Ok(total)
}

/// Formats `v` with 15 significant digits, in plain decimal notation when
/// that stays short.
pub fn format_sig15(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    if (-5..15).contains(&mag) {
        let decimals = (14 - mag).max(0) as usize;
        let s = format!("{v:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{v:.14e}")
    }
}

/// Either an exact rational or a float.
#[derive(Debug, Clone, PartialEq)]
pub enum ReportValue {
    Exact(BigRational),
    Approx(f64),
}

impl ReportValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            ReportValue::Exact(q) => to_f64(q),
            ReportValue::Approx(v) => *v,
        }
    }
}

impl fmt::Display for ReportValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReportValue::Exact(q) => write!(f, "{q}"),
            ReportValue::Approx(v) => f.write_str(&format_sig15(*v)),
        }
    }
}

/// How a report value is scaled.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalization {
    /// `X log X`.
    XLogX,
    /// `X/log X · ∏_{p ≤ X}(1 + F(p)/p)`.
    EulerProduct(Weight),
    /// `B^n`.
    BoxVolume(u32),
}

impl Normalization {
    pub fn scale(&self, x: u64) -> f64 {
        let xf = x as f64;
        match self {
            Normalization::XLogX => xf * xf.ln(),
            Normalization::EulerProduct(w) => {
                let fp = w.at_prime();
                let prod: f64 = primes_up_to(x).iter().map(|&p| 1.0 + fp / p as f64).product();
                xf / xf.ln() * prod
            }
            Normalization::BoxVolume(n) => xf.powi(*n as i32),
        }
    }
}

/// One row of moment output.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub experiment: String,
    pub setting: String,
    pub x: u64,
    pub k: u32,
    pub sign: Option<Sign>,
    pub weight: String,
    pub value: ReportValue,
    pub normalization: Normalization,
}

impl MomentReport {
    pub const CSV_HEADER: &'static str = "experiment,setting,X,k,sign,weight,value,normalized";

    pub fn normalized(&self) -> f64 {
        self.value.to_f64() / self.normalization.scale(self.x)
    }

    pub fn csv_row(&self) -> String {
        let sign = match self.sign {
            Some(Sign::Negative) => "neg",
            Some(Sign::Positive) => "pos",
            None => "none",
        };
        format!(
            "{},{},{},{},{},{},{},{}",
            self.experiment,
            self.setting,
            self.x,
            self.k,
            sign,
            self.weight,
            self.value,
            format_sig15(self.normalized())
        )
    }
}

/// `Σ F(m)·2^{-r}Σ_ε g(m, ε)^k` over odd square-free `m` in `[lo, hi)`.
pub fn weighted_moment_partial(lo: u64, hi: u64, k: u32, weight: &Weight) -> Result<BigRational> {
    let mut total = BigRational::zero();
    let mut m = lo.max(1) | 1;
    while m < hi {
        let f = factor(m as i64)?;
        if f.is_squarefree() {
            total += weight.at_squarefree(f.omega()) * average_g_power(m as i64, k)?;
        }
        m += 2;
    }
    Ok(total)
}

/// The weighted class moment at each `X` in `xs`, normalized by the
/// Euler-product scale.
pub fn weighted_moment(xs: &[u64], k: u32, weight: &Weight) -> Result<Vec<MomentReport>> {
    let mut sorted = xs.to_vec();
    sorted.sort_unstable();
    let mut total = BigRational::zero();
    let mut done = 1;
    let mut out = Vec::new();
    for x in sorted {
        total += weighted_moment_partial(done, x + 1, k, weight)?;
        done = x + 1;
        out.push(MomentReport {
            experiment: "weighted_moment".into(),
            setting: "class".into(),
            x,
            k,
            sign: None,
            weight: weight.name(),
            value: ReportValue::Exact(total.clone()),
            normalization: Normalization::EulerProduct(weight.clone()),
        });
    }
    Ok(out)
}

/// `(Σ h_{3·2^k}(Δ), Σ h₃(Δ) 2^{ω(Δ)} 2^{k·rk₄(Δ)})` over fundamental
/// discriminants of the given sign with `lo ≤ |Δ| < hi`.
pub fn torsion_moment_partial(oracle: &ClassGroupOracle, lo: u64, hi: u64, k: u32, sign: Sign) -> Result<(u64, u64)> {
    if k == 0 || k > 4 {
        return Err(Error::OutOfRange(k as i128));
    }
    let (mut exact, mut majorant) = (0u64, 0u64);
    if hi <= 1 {
        return Ok((0, 0));
    }
    for d in fundamental_discriminants(hi - 1, sign)? {
        if d.unsigned_abs() < lo {
            continue;
        }
        let (h2k, h3) = if d < 0 && k == 1 {
            oracle.h2_h3_imaginary(d)?
        } else {
            let g = oracle.class_group(d, false)?;
            (g.torsion(1 << k), g.torsion(3))
        };
        exact += h2k * h3;
        let m = if d % 4 == 0 { d / 4 } else { d };
        let rk4 = rk4_narrow(m)?;
        let omega = factor(d)?.omega();
        majorant += h3 << (omega + k * rk4);
    }
    Ok((exact, majorant))
}

/// Exact and majorant sums of `h_{3·2^k}` up to each `X` in `xs`, each
/// normalized by `X log X`.
pub fn torsion_moment_experiment(xs: &[u64], k: u32, sign: Sign) -> Result<Vec<MomentReport>> {
    let mut sorted = xs.to_vec();
    sorted.sort_unstable();
    let Some(&max) = sorted.last() else {
        return Ok(Vec::new());
    };
    let oracle = ClassGroupOracle::new(max.max(3) as i64)?;
    let (mut exact, mut majorant) = (0u64, 0u64);
    let mut done = 1;
    let mut out = Vec::new();
    for x in sorted {
        let (e, m) = torsion_moment_partial(&oracle, done, x + 1, k, sign)?;
        exact += e;
        majorant += m;
        done = x + 1;
        out.extend(torsion_moment_reports(x, k, sign, exact, majorant));
    }
    Ok(out)
}

/// The exact/majorant report pair for one `X`.
pub fn torsion_moment_reports(x: u64, k: u32, sign: Sign, exact: u64, majorant: u64) -> [MomentReport; 2] {
    let row = |setting: &str, weight: &str, v: u64| MomentReport {
        experiment: "torsion_moment".into(),
        setting: setting.into(),
        x,
        k,
        sign: Some(sign),
        weight: weight.into(),
        value: ReportValue::Exact(BigRational::from_integer(v.into())),
        normalization: Normalization::XLogX,
    };
    [row("exact", "one", exact), row("majorant", "2^omega", majorant)]
}

/// `Σ f_r(P(t))^k` over `t ∈ [lo, hi)` with `P(t) ≠ 0`, for a univariate
/// polynomial given by its coefficients (constant term first).
pub fn fibration_partial(coeffs: &[i64], curve: &CurveData, k: u32, lo: i64, hi: i64) -> Result<u128> {
    let mut total = 0u128;
    for t in lo..hi {
        let mut v: i128 = 0;
        for &c in coeffs.iter().rev() {
            v = v
                .checked_mul(t as i128)
                .and_then(|w| w.checked_add(c as i128))
                .ok_or(Error::OutOfRange(t as i128))?;
        }
        if v == 0 {
            continue;
        }
        let v = i64::try_from(v).map_err(|_| Error::OutOfRange(v))?;
        total += (f_r(curve, v)? as u128).pow(k);
    }
    Ok(total)
}

/// `Σ_{|t| ≤ B, P(t) ≠ 0} f_r(P(t))^k / B` for each `B` in `bs`.
pub fn fibration_experiment(coeffs: &[i64], curve: &CurveData, bs: &[u64], k: u32) -> Result<Vec<MomentReport>> {
    if coeffs.len() > 4 {
        return Err(Error::Invalid("degree at most 3".into()));
    }
    if coeffs.iter().all(|&c| c == 0) {
        return Err(Error::Zero);
    }
    let mut out = Vec::new();
    for &b in bs {
        if b == 0 || b > 10_000 {
            return Err(Error::OutOfRange(b as i128));
        }
        let b_i = b as i64;
        let total = fibration_partial(coeffs, curve, k, -b_i, b_i + 1)?;
        out.push(MomentReport {
            experiment: "fibration".into(),
            setting: "selmer".into(),
            x: b,
            k,
            sign: None,
            weight: format!("{}^rank", 1u64 << k),
            value: ReportValue::Exact(BigRational::from_integer(BigInt::from(total))),
            normalization: Normalization::BoxVolume(1),
        });
    }
    Ok(out)
}

/// Coefficient scheme for the bilinear character sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coefficients {
    /// `α = β = μ²` on odd integers.
    Mu2,
    /// `α = β = τ·μ²` on odd integers.
    TauMu2,
}

impl Coefficients {
    pub fn name(self) -> &'static str {
        match self {
            Coefficients::Mu2 => "mu2",
            Coefficients::TauMu2 => "tau-mu2",
        }
    }
}

impl FromStr for Coefficients {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu2" => Ok(Coefficients::Mu2),
            "tau-mu2" => Ok(Coefficients::TauMu2),
            _ => Err(Error::Invalid(format!("unknown coefficient scheme {s:?}"))),
        }
    }
}

/// Coefficient table for `Σ_{m₁m₂ ≤ X, m₁, m₂ > z} α(m₁)β(m₂)(m₁/m₂)`.
#[derive(Debug, Clone)]
pub struct CharSumTable {
    x: u64,
    z: u64,
    coeff: Vec<u32>,
}

impl CharSumTable {
    pub fn new(x: u64, z: u64, scheme: Coefficients) -> Result<Self> {
        if x > 10_000_000 {
            return Err(Error::OutOfRange(x as i128));
        }
        let n = if z >= x { 0 } else { (x / (z + 1)) as usize };
        let mut coeff = vec![0u32; n + 1];
        for c in coeff.iter_mut().skip(1).step_by(2) {
            *c = 1;
        }
        let mut p = 3;
        while p * p <= n {
            let q = p * p;
            let mut j = q;
            while j <= n {
                coeff[j] = 0;
                j += q;
            }
            p += 2;
        }
        if scheme == Coefficients::TauMu2 {
            for p in primes_up_to(n as u64).into_iter().skip(1) {
                let p = p as usize;
                let mut j = p;
                while j <= n {
                    coeff[j] *= 2;
                    j += p;
                }
            }
        }
        Ok(CharSumTable { x, z, coeff })
    }

    /// Range of `m₂` that can contribute: `z < m₂ ≤ X/(z+1)`.
    pub fn m2_range(&self) -> (u64, u64) {
        (self.z + 1, self.coeff.len() as u64)
    }

    /// Contribution of `m₂ ∈ [lo, hi)`.
    pub fn partial(&self, lo: u64, hi: u64) -> i64 {
        let (a, b) = self.m2_range();
        let mut total = 0i64;
        for m2 in lo.max(a)..hi.min(b) {
            let beta = self.coeff[m2 as usize] as i64;
            if beta == 0 {
                continue;
            }
            let top = (self.x / m2) as usize;
            let mut inner = 0i64;
            for m1 in (self.z as usize + 1)..=top.min(self.coeff.len() - 1) {
                let alpha = self.coeff[m1];
                if alpha != 0 {
                    inner += alpha as i64 * jacobi_unchecked(m1 as i64, m2) as i64;
                }
            }
            total += beta * inner;
        }
        total
    }

    pub fn total(&self) -> i64 {
        let (a, b) = self.m2_range();
        self.partial(a, b)
    }
}

/// One `z` of an oscillation sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillationRow {
    pub z: u64,
    pub sum: i64,
    /// `|sum|·z^{1/20}/(X (log X)^c)`.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationReport {
    pub x: u64,
    pub scheme: Coefficients,
    pub log_power: i32,
    pub rows: Vec<OscillationRow>,
    /// `b` in a least-squares fit `|sum| ≈ C z^{-b}` over the nonzero rows.
    pub fitted_exponent: Option<f64>,
}

/// Normalization `|sum|·z^{1/20}/(X (log X)^c)`.
pub fn oscillation_normalized(x: u64, z: u64, sum: i64, log_power: i32) -> f64 {
    let xf = x as f64;
    (sum.unsigned_abs() as f64) * (z as f64).powf(0.05) / (xf * xf.ln().powi(log_power))
}

/// Bilinear sums over a grid of `z`.
///
/// ```
/// use amoments::moments::{oscillation_experiment, Coefficients};
/// let r = oscillation_experiment(1000, &[1000], Coefficients::Mu2, 3).unwrap();
/// assert_eq!(r.rows[0].sum, 0);
/// ```
pub fn oscillation_experiment(x: u64, zs: &[u64], scheme: Coefficients, log_power: i32) -> Result<OscillationReport> {
    let mut rows = Vec::new();
    for &z in zs {
        let sum = CharSumTable::new(x, z, scheme)?.total();
        rows.push(OscillationRow {
            z,
            sum,
            normalized: oscillation_normalized(x, z, sum, log_power),
        });
    }
    Ok(OscillationReport {
        x,
        scheme,
        log_power,
        fitted_exponent: fit_exponent(&rows),
        rows,
    })
}

/// `b` in the least-squares fit `|sum| ≈ C z^{-b}` over rows with a nonzero sum.
pub fn fit_exponent(rows: &[OscillationRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.sum != 0 && r.z > 0)
        .map(|r| ((r.z as f64).ln(), (r.sum.unsigned_abs() as f64).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(-sxy / sxx)
}

/// Converts an exact value to `f64`, saturating on overflow.
pub fn rational_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or_else(|| to_f64(q))
}
