//! Class groups of binary quadratic forms of fundamental discriminant.
//!
//! Imaginary discriminants use the unique reduced representative of each
//! class. Real discriminants group reduced forms into cycles of the
//! reduction operator; the cycles are the narrow classes, and the ordinary
//! group is the quotient by the class of the negated principal form.

use crate::arith::{factor, is_fundamental, isqrt};
use crate::error::{Error, Result};
use num_integer::Integer;
use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;

/// Largest `|Δ|` the oracle accepts.
pub const MAX_DISC: i64 = 10_000_000;

/// A binary quadratic form `ax² + bxy + cy²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuadForm {
    pub a: i64,
    pub b: i64,
    pub c: i64,
}

fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    if b == 0 {
        if a < 0 {
            (-a, -1, 0)
        } else {
            (a, 1, 0)
        }
    } else {
        let (g, x, y) = ext_gcd(b, a % b);
        (g, y, x - (a / b) * y)
    }
}

impl QuadForm {
    pub fn new(a: i64, b: i64, c: i64) -> Self {
        QuadForm { a, b, c }
    }

    pub fn disc(&self) -> i64 {
        self.b * self.b - 4 * self.a * self.c
    }

    /// The principal form of discriminant `d`.
    pub fn principal(d: i64) -> Self {
        let b = d.rem_euclid(2);
        QuadForm::new(1, b, (b * b - d) / 4).reduce()
    }

    pub fn inverse(&self) -> Self {
        QuadForm::new(self.a, -self.b, self.c)
    }

    /// The form with all coefficients negated. For a real discriminant this
    /// represents the narrow class of a principal ideal of negative norm
    /// when applied to the principal form.
    pub fn negate(&self) -> Self {
        QuadForm::new(-self.a, self.b, -self.c)
    }

    /// Dirichlet composition (not reduced).
    pub fn compose(&self, other: &QuadForm) -> QuadForm {
        let d = self.disc() as i128;
        let (a1, b1) = (self.a as i128, self.b as i128);
        let (a2, b2) = (other.a as i128, other.b as i128);
        let beta = (b1 + b2) / 2;
        let (g1, x, y) = ext_gcd(a1, a2);
        let (e, s, t) = ext_gcd(g1, beta);
        let (mu, nu, om) = (s * x, s * y, t);
        let a3 = a1 * a2 / (e * e);
        let b3_num = mu * a1 * b2 + nu * a2 * b1 + om * (b1 * b2 + d) / 2;
        let mut b3 = b3_num / e;
        let m = 2 * a3.abs();
        b3 = b3.rem_euclid(m);
        if b3 > a3.abs() {
            b3 -= m;
        }
        let c3 = (b3 * b3 - d) / (4 * a3);
        QuadForm::new(a3 as i64, b3 as i64, c3 as i64)
    }

    /// Reduced representative in the same proper class (imaginary) or a
    /// reduced form in the same cycle (real).
    pub fn reduce(&self) -> QuadForm {
        if self.disc() < 0 {
            self.reduce_imaginary()
        } else {
            let mut f = *self;
            let s = isqrt(f.disc() as u64) as i64;
            let mut steps = 0;
            while !f.is_reduced() {
                f = f.rho(s);
                steps += 1;
                debug_assert!(steps < 10_000, "reduction did not terminate");
            }
            f
        }
    }

    fn reduce_imaginary(&self) -> QuadForm {
        let d = self.disc() as i128;
        let (mut a, mut b, mut c) = (self.a as i128, self.b as i128, self.c as i128);
        if a < 0 {
            a = -a;
            b = -b;
            c = -c;
        }
        loop {
            if !(-a < b && b <= a) {
                let m = 2 * a;
                b = b.rem_euclid(m);
                if b > a {
                    b -= m;
                }
                c = (b * b - d) / (4 * a);
            }
            if a > c {
                std::mem::swap(&mut a, &mut c);
                b = -b;
                continue;
            }
            if a == c && b < 0 {
                b = -b;
            }
            break;
        }
        QuadForm::new(a as i64, b as i64, c as i64)
    }

    /// One step of the reduction operator for an indefinite form.
    pub fn rho(&self, s: i64) -> QuadForm {
        let d = self.disc();
        let c = self.c;
        let m = 2 * c.abs();
        let b = if c.abs() <= s {
            s - (s + self.b).rem_euclid(m)
        } else {
            let mut r = (-self.b).rem_euclid(m);
            if r > c.abs() {
                r -= m;
            }
            r
        };
        QuadForm::new(c, b, (b * b - d) / (4 * c))
    }

    pub fn is_reduced(&self) -> bool {
        let d = self.disc();
        if d < 0 {
            let (a, b, c) = (self.a, self.b, self.c);
            a > 0 && b.abs() <= a && a <= c && !((b.abs() == a || a == c) && b < 0)
        } else {
            let s = isqrt(d as u64) as i64;
            let a2 = 2 * self.a.abs();
            0 < self.b && self.b <= s && s - self.b < a2 && a2 <= s + self.b
        }
    }
}

/// Reduced positive definite forms of discriminant `d < 0`.
pub fn reduced_forms_imaginary(d: i64) -> Vec<QuadForm> {
    let amax = isqrt((-d / 3) as u64) as i64;
    let mut out = Vec::new();
    for a in 1..=amax {
        let mut b = d.rem_euclid(2);
        while b <= a {
            let num = b * b - d;
            if num % (4 * a) == 0 {
                let c = num / (4 * a);
                if c >= a {
                    out.push(QuadForm::new(a, b, c));
                    if b > 0 && b < a && a < c {
                        out.push(QuadForm::new(a, -b, c));
                    }
                }
            }
            b += 2;
        }
    }
    out
}

/// Reduced indefinite forms of discriminant `d > 0`, both signs of `a`.
pub fn reduced_forms_real(d: i64) -> Vec<QuadForm> {
    let s = isqrt(d as u64) as i64;
    let mut out = Vec::new();
    let mut b = if d % 2 == s % 2 { s } else { s - 1 };
    while b > 0 {
        let n = (d - b * b) / 4;
        for a in factor(n).expect("n > 0").divisors() {
            let a = a as i64;
            if s - b < 2 * a && 2 * a <= s + b {
                out.push(QuadForm::new(a, b, -n / a));
                out.push(QuadForm::new(-a, b, n / a));
            }
        }
        b -= 2;
    }
    out
}

/// Precomputed square roots modulo `4a`, which speed up repeated
/// enumeration of reduced forms for many imaginary discriminants.
#[derive(Debug, Clone)]
pub struct ImaginaryEnumerator {
    amax: i64,
    offsets: Vec<Vec<u32>>,
    roots: Vec<Vec<u32>>,
}

impl ImaginaryEnumerator {
    /// Tables valid for all `|Δ| ≤ bound`.
    pub fn new(bound: i64) -> Self {
        let amax = isqrt((bound / 3).max(1) as u64) as i64;
        let mut offsets = Vec::with_capacity(amax as usize + 1);
        let mut roots = Vec::with_capacity(amax as usize + 1);
        offsets.push(Vec::new());
        roots.push(Vec::new());
        for a in 1..=amax {
            let m = 4 * a;
            let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); m as usize];
            for b in 0..=a {
                buckets[((b * b) % m) as usize].push(b as u32);
            }
            let mut off = Vec::with_capacity(m as usize + 1);
            let mut flat = Vec::new();
            off.push(0u32);
            for bucket in buckets {
                flat.extend(bucket);
                off.push(flat.len() as u32);
            }
            offsets.push(off);
            roots.push(flat);
        }
        ImaginaryEnumerator { amax, offsets, roots }
    }

    pub fn reduced_forms(&self, d: i64) -> Vec<QuadForm> {
        let amax = isqrt((-d / 3) as u64) as i64;
        assert!(amax <= self.amax, "discriminant {d} exceeds enumerator bound");
        let mut out = Vec::new();
        for a in 1..=amax {
            let m = 4 * a;
            let r = d.rem_euclid(m) as usize;
            let off = &self.offsets[a as usize];
            for &b in &self.roots[a as usize][off[r] as usize..off[r + 1] as usize] {
                let b = b as i64;
                let c = (b * b - d) / m;
                if c >= a {
                    out.push(QuadForm::new(a, b, c));
                    if b > 0 && b < a && a < c {
                        out.push(QuadForm::new(a, -b, c));
                    }
                }
            }
        }
        out
    }
}

/// Narrow classes of a discriminant with group operations.
#[derive(Debug, Clone)]
pub struct FormClasses {
    disc: i64,
    reps: Vec<QuadForm>,
    lookup: HashMap<(i64, i64), u32>,
    identity: usize,
}

impl FormClasses {
    pub fn new(d: i64) -> Result<Self> {
        validate(d)?;
        if d < 0 {
            Ok(Self::from_imaginary(d, reduced_forms_imaginary(d)))
        } else {
            Ok(Self::from_real(d))
        }
    }

    pub(crate) fn from_imaginary(d: i64, reps: Vec<QuadForm>) -> Self {
        let lookup = reps.iter().enumerate().map(|(i, f)| ((f.a, f.b), i as u32)).collect();
        let mut fc = FormClasses {
            disc: d,
            reps,
            lookup,
            identity: 0,
        };
        fc.identity = fc.class_of(&QuadForm::principal(d));
        fc
    }

    fn from_real(d: i64) -> Self {
        let forms = reduced_forms_real(d);
        let s = isqrt(d as u64) as i64;
        let mut lookup: HashMap<(i64, i64), u32> = HashMap::with_capacity(forms.len());
        let mut reps = Vec::new();
        for f in &forms {
            if lookup.contains_key(&(f.a, f.b)) {
                continue;
            }
            let id = reps.len() as u32;
            reps.push(*f);
            let mut g = *f;
            loop {
                lookup.insert((g.a, g.b), id);
                g = g.rho(s);
                if g == *f {
                    break;
                }
            }
        }
        let mut fc = FormClasses {
            disc: d,
            reps,
            lookup,
            identity: 0,
        };
        fc.identity = fc.class_of(&QuadForm::principal(d));
        fc
    }

    pub fn disc(&self) -> i64 {
        self.disc
    }

    /// Number of narrow classes.
    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn identity(&self) -> usize {
        self.identity
    }

    pub fn representative(&self, i: usize) -> QuadForm {
        self.reps[i]
    }

    pub fn class_of(&self, f: &QuadForm) -> usize {
        let r = f.reduce();
        self.lookup[&(r.a, r.b)] as usize
    }

    pub fn mul(&self, i: usize, j: usize) -> usize {
        self.class_of(&self.reps[i].compose(&self.reps[j]))
    }

    pub fn pow(&self, i: usize, mut n: u64) -> usize {
        let mut result = self.identity;
        let mut base = i;
        while n > 0 {
            if n & 1 == 1 {
                result = self.mul(result, base);
            }
            n >>= 1;
            if n > 0 {
                base = self.mul(base, base);
            }
        }
        result
    }

    /// Class of the negated principal form; trivial exactly when the
    /// fundamental unit has norm −1. For imaginary discriminants this is the
    /// identity by convention.
    pub fn negative_unit_class(&self) -> usize {
        if self.disc < 0 {
            self.identity
        } else {
            self.class_of(&QuadForm::principal(self.disc).negate())
        }
    }

    /// `#{x : x^n ∈ H}` where `H` is the subgroup generated by `h`.
    fn count_into_subgroup(&self, n: u64, h: usize) -> u64 {
        (0..self.len())
            .filter(|&x| {
                let y = self.pow(x, n);
                y == self.identity || y == h
            })
            .count() as u64
    }

    /// Number of `n`-torsion elements of the narrow group (`narrow = true`) or
    /// of the ordinary group.
    pub fn torsion_count(&self, n: u64, narrow: bool) -> u64 {
        let h = if narrow {
            self.identity
        } else {
            self.negative_unit_class()
        };
        let sub = if h == self.identity { 1 } else { 2 };
        self.count_into_subgroup(n, h) / sub
    }

    /// Cyclic invariants `d₁ | d₂ | …` of the narrow or ordinary group.
    pub fn invariants(&self, narrow: bool) -> Vec<u64> {
        let sub = if narrow || self.negative_unit_class() == self.identity {
            1
        } else {
            2
        };
        let order = self.len() as u64 / sub;
        let mut prime_parts: Vec<Vec<u64>> = Vec::new();
        let f = if order > 1 {
            factor(order as i64).expect("positive").factors().to_vec()
        } else {
            Vec::new()
        };
        for (p, e) in f {
            // c[j] = log_p #G[p^j]; the number of cyclic factors of exponent
            // at least j is c[j] − c[j−1].
            let mut c = vec![0u32];
            let mut pj = 1u64;
            while *c.last().unwrap() < e {
                pj *= p;
                let t = self.torsion_count(pj, narrow);
                c.push(t.ilog(p));
            }
            let jmax = c.len() - 1;
            let mut exps: Vec<u32> = Vec::new();
            for j in 1..=jmax {
                let ge_j = c[j] - c[j - 1];
                let ge_next = if j < jmax { c[j + 1] - c[j] } else { 0 };
                for _ in 0..(ge_j - ge_next) {
                    exps.push(j as u32);
                }
            }
            exps.sort_unstable_by(|a, b| b.cmp(a));
            prime_parts.push(exps.iter().map(|&k| p.pow(k)).collect());
        }
        let len = prime_parts.iter().map(Vec::len).max().unwrap_or(0);
        let mut inv: Vec<u64> = (0..len)
            .map(|i| prime_parts.iter().map(|pp| pp.get(i).copied().unwrap_or(1)).product())
            .collect();
        inv.sort_unstable();
        inv
    }
}

fn validate(d: i64) -> Result<()> {
    if d.abs() > MAX_DISC {
        return Err(Error::OutOfRange(d as i128));
    }
    if !is_fundamental(d) {
        return Err(Error::NotFundamental(d));
    }
    Ok(())
}

/// Structure of a class group as cyclic invariants.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FormClassGroup {
    pub disc: i64,
    pub narrow: bool,
    pub invariants: Vec<u64>,
    pub h: u64,
}

impl FormClassGroup {
    /// `#Cl[n] = ∏ gcd(n, dᵢ)`.
    pub fn torsion(&self, n: u64) -> u64 {
        self.invariants.iter().map(|&d| d.gcd(&n)).product()
    }

    /// `dim_{F₂} 2^{k−1}(Cl[2^k])`.
    pub fn rk_2k(&self, k: u32) -> u32 {
        self.invariants.iter().filter(|&&d| d % (1u64 << k) == 0).count() as u32
    }
}

/// Class group (narrow or ordinary) of a fundamental discriminant.
///
/// ```
/// use amoments::quadform::class_group;
/// assert_eq!(class_group(-23, false).unwrap().invariants, vec![3]);
/// assert_eq!(class_group(-56, false).unwrap().invariants, vec![4]);
/// assert_eq!(class_group(5, true).unwrap().h, 1);
/// ```
pub fn class_group(delta: i64, narrow: bool) -> Result<FormClassGroup> {
    let fc = FormClasses::new(delta)?;
    Ok(group_from_classes(&fc, narrow))
}

fn group_from_classes(fc: &FormClasses, narrow: bool) -> FormClassGroup {
    let invariants = fc.invariants(narrow);
    let h = invariants.iter().product();
    FormClassGroup {
        disc: fc.disc(),
        narrow,
        invariants,
        h,
    }
}

/// `h_n(Δ) = #Cl(ℚ(√Δ))[n]` for the ordinary class group.
pub fn h_torsion(delta: i64, n: u64) -> Result<u64> {
    if n == 0 {
        return Err(Error::Invalid("n must be positive".into()));
    }
    Ok(class_group(delta, false)?.torsion(n))
}

/// Norm of the fundamental unit from the parity of the continued-fraction
/// period of `(1 + √Δ)/2` (odd `Δ`) or `√(Δ/4)` (even `Δ`).
///
/// ```
/// use amoments::quadform::fundamental_unit_norm;
/// assert_eq!(fundamental_unit_norm(5).unwrap(), -1);
/// assert_eq!(fundamental_unit_norm(12).unwrap(), 1);
/// ```
pub fn fundamental_unit_norm(delta: i64) -> Result<i8> {
    if delta <= 0 {
        return Err(Error::Invalid(format!("{delta} is not positive")));
    }
    validate(delta)?;
    // x = (P + √D)/Q with Q | D − P².
    let (dd, mut p, mut q) = if delta % 4 == 1 {
        (delta, 1i64, 2i64)
    } else {
        (delta / 4, 0, 1)
    };
    let s = isqrt(dd as u64) as i64;
    let mut seen: HashMap<(i64, i64), usize> = HashMap::new();
    let mut i = 0usize;
    loop {
        if let Some(&start) = seen.get(&(p, q)) {
            let period = i - start;
            return Ok(if period % 2 == 0 { 1 } else { -1 });
        }
        seen.insert((p, q), i);
        let a = (p + s).div_euclid(q);
        p = a * q - p;
        q = (dd - p * p) / q;
        i += 1;
    }
}

/// Batch oracle for sweeps over many discriminants.
#[derive(Debug, Clone)]
pub struct ClassGroupOracle {
    bound: i64,
    imaginary: ImaginaryEnumerator,
}

impl ClassGroupOracle {
    pub fn new(bound: i64) -> Result<Self> {
        if bound < 3 || bound > MAX_DISC {
            return Err(Error::OutOfRange(bound as i128));
        }
        Ok(ClassGroupOracle {
            bound,
            imaginary: ImaginaryEnumerator::new(bound),
        })
    }

    pub fn bound(&self) -> i64 {
        self.bound
    }

    pub fn classes(&self, d: i64) -> Result<FormClasses> {
        if d.abs() > self.bound {
            return Err(Error::OutOfRange(d as i128));
        }
        validate(d)?;
        if d < 0 {
            Ok(FormClasses::from_imaginary(d, self.imaginary.reduced_forms(d)))
        } else {
            Ok(FormClasses::from_real(d))
        }
    }

    pub fn class_group(&self, d: i64, narrow: bool) -> Result<FormClassGroup> {
        Ok(group_from_classes(&self.classes(d)?, narrow))
    }

    /// `h₃(Δ)` for `Δ < 0`, counting forms whose cube is principal. Each
    /// class and its inverse are handled together.
    pub fn h3_imaginary(&self, d: i64) -> Result<u64> {
        if d >= 0 {
            return Err(Error::Invalid("h3_imaginary needs Δ < 0".into()));
        }
        let fc = self.classes(d)?;
        Ok(h3_of(&fc))
    }

    /// `(h₂, h₃)` for `Δ < 0`: `h₂` counts ambiguous reduced forms.
    pub fn h2_h3_imaginary(&self, d: i64) -> Result<(u64, u64)> {
        if d >= 0 {
            return Err(Error::Invalid("h2_h3_imaginary needs Δ < 0".into()));
        }
        let fc = self.classes(d)?;
        let h2 = fc.reps.iter().filter(|f| f.b == 0 || f.b == f.a || f.a == f.c).count() as u64;
        Ok((h2, h3_of(&fc)))
    }
}

fn h3_of(fc: &FormClasses) -> u64 {
    if fc.len() % 3 != 0 {
        return 1;
    }
    let id = fc.identity();
    let mut count = 0;
    for (i, f) in fc.reps.iter().enumerate() {
        if f.b < 0 {
            continue;
        }
        let sq = fc.mul(i, i);
        if fc.mul(sq, i) == id {
            let self_inverse = f.b == 0 || f.b == f.a || f.a == f.c;
            count += if self_inverse { 1 } else { 2 };
        }
    }
    count
}

/// Writes class-group invariants as `delta<TAB>narrow<TAB>d1,d2,...`,
/// sorted by `|delta|` then sign then flag.
pub fn write_cache(path: &Path, groups: &[FormClassGroup]) -> io::Result<()> {
    let mut sorted: Vec<&FormClassGroup> = groups.iter().collect();
    sorted.sort_by_key(|g| (g.disc.abs(), g.disc, g.narrow));
    let mut out = io::BufWriter::new(fs::File::create(path)?);
    for g in sorted {
        let inv: Vec<String> = g.invariants.iter().map(u64::to_string).collect();
        writeln!(out, "{}\t{}\t{}", g.disc, g.narrow as u8, inv.join(","))?;
    }
    out.flush()
}

/// Reads a cache written by [`write_cache`].
pub fn read_cache(path: &Path) -> io::Result<Vec<FormClassGroup>> {
    let bad = |line: &str| io::Error::new(io::ErrorKind::InvalidData, format!("bad cache line: {line}"));
    let mut out = Vec::new();
    for line in io::BufReader::new(fs::File::open(path)?).lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(d), Some(n), Some(inv), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(bad(&line));
        };
        let disc: i64 = d.parse().map_err(|_| bad(&line))?;
        let narrow = match n {
            "0" => false,
            "1" => true,
            _ => return Err(bad(&line)),
        };
        let invariants: Vec<u64> = if inv.is_empty() {
            Vec::new()
        } else {
            inv.split(',')
                .map(|x| x.parse().map_err(|_| bad(&line)))
                .collect::<io::Result<_>>()?
        };
        let h = invariants.iter().product();
        out.push(FormClassGroup {
            disc,
            narrow,
            invariants,
            h,
        });
    }
    Ok(out)
}
