//! Local densities: the multiplicative function `δ` governing averages of
//! `h₃ − 1`, and congruence densities `h(a, ε)` of integer polynomials.

use crate::arith::{factor, fundamental_discriminants, is_prime, jacobi_unchecked, primes_up_to, Sign};
use crate::error::{Error, Result};
use crate::quadform::ClassGroupOracle;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;

/// Most variables a [`Poly`] may have.
pub const MAX_VARS: usize = 3;
/// Largest number of residue tuples enumerated for one density.
pub const MAX_ENUMERATION: u64 = 1_000_000;

/// `δ(m)`: multiplicative with `δ(p) = 1/(p+1)`, `δ(p^e) = 0` for odd `p`,
/// `e ≥ 2`, and `δ(4) = 1/3`, `δ(8) = 1/6`, `δ(2^e) = 0` for `e ≥ 4`.
///
/// ```
/// use amoments::density::delta;
/// use num_rational::BigRational;
/// let q = |a: i64, b: i64| BigRational::new(a.into(), b.into());
/// assert_eq!(delta(3).unwrap(), q(1, 4));
/// assert_eq!(delta(24).unwrap(), q(1, 24));
/// assert_eq!(delta(9).unwrap(), q(0, 1));
/// ```
pub fn delta(m: u64) -> Result<BigRational> {
    if m == 0 {
        return Err(Error::Zero);
    }
    let f = factor(m as i64)?;
    let mut out = BigRational::one();
    for &(p, e) in f.factors() {
        let local = match (p, e) {
            (_, 1) => BigRational::new(BigInt::one(), BigInt::from(p + 1)),
            (2, 2) => BigRational::new(1.into(), 3.into()),
            (2, 3) => BigRational::new(1.into(), 6.into()),
            _ => BigRational::zero(),
        };
        out *= local;
    }
    Ok(out)
}

/// A polynomial in at most three variables with `i64` coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<[u32; MAX_VARS], i64>,
}

impl Poly {
    pub fn constant(c: i64) -> Self {
        let mut terms = BTreeMap::new();
        if c != 0 {
            terms.insert([0; MAX_VARS], c);
        }
        Poly { nvars: 0, terms }
    }

    pub fn var(i: usize) -> Result<Self> {
        if i >= MAX_VARS {
            return Err(Error::Invalid(format!("at most {MAX_VARS} variables")));
        }
        let mut e = [0; MAX_VARS];
        e[i] = 1;
        Ok(Poly {
            nvars: i + 1,
            terms: BTreeMap::from([(e, 1)]),
        })
    }

    /// Univariate polynomial from coefficients in increasing degree.
    pub fn from_coeffs(coeffs: &[i64]) -> Self {
        let terms = coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(i, &c)| ([i as u32, 0, 0], c))
            .collect();
        Poly { nvars: 1, terms }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    fn checked_add(&self, other: &Poly, sign: i64) -> Result<Poly> {
        let mut terms = self.terms.clone();
        for (e, &c) in &other.terms {
            let entry = terms.entry(*e).or_insert(0);
            *entry = c
                .checked_mul(sign)
                .and_then(|c| entry.checked_add(c))
                .ok_or_else(overflow)?;
        }
        terms.retain(|_, c| *c != 0);
        Ok(Poly {
            nvars: self.nvars.max(other.nvars),
            terms,
        })
    }

    pub fn add(&self, other: &Poly) -> Result<Poly> {
        self.checked_add(other, 1)
    }

    pub fn sub(&self, other: &Poly) -> Result<Poly> {
        self.checked_add(other, -1)
    }

    pub fn mul(&self, other: &Poly) -> Result<Poly> {
        let mut terms: BTreeMap<[u32; MAX_VARS], i64> = BTreeMap::new();
        for (e1, &c1) in &self.terms {
            for (e2, &c2) in &other.terms {
                let e = [e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2]];
                let c = c1.checked_mul(c2).ok_or_else(overflow)?;
                let entry = terms.entry(e).or_insert(0);
                *entry = entry.checked_add(c).ok_or_else(overflow)?;
            }
        }
        terms.retain(|_, c| *c != 0);
        Ok(Poly {
            nvars: self.nvars.max(other.nvars),
            terms,
        })
    }

    pub fn pow(&self, n: u32) -> Result<Poly> {
        let mut out = Poly::constant(1);
        for _ in 0..n {
            out = out.mul(self)?;
        }
        out.nvars = out.nvars.max(self.nvars);
        Ok(out)
    }

    /// `∂P/∂t_i`.
    pub fn derivative(&self, i: usize) -> Poly {
        let mut terms = BTreeMap::new();
        for (e, &c) in &self.terms {
            if e[i] > 0 {
                let mut e2 = *e;
                e2[i] -= 1;
                terms.insert(e2, c * e[i] as i64);
            }
        }
        Poly {
            nvars: self.nvars,
            terms,
        }
    }

    /// Exact value at an integer point.
    pub fn eval(&self, t: &[i64]) -> Result<i128> {
        let mut total: i128 = 0;
        for (e, &c) in &self.terms {
            let mut term = c as i128;
            for (i, &k) in e.iter().enumerate() {
                if k > 0 {
                    let x = *t.get(i).ok_or(Error::Dimension {
                        expected: self.nvars,
                        got: t.len(),
                    })? as i128;
                    term = x
                        .checked_pow(k)
                        .and_then(|p| term.checked_mul(p))
                        .ok_or_else(overflow)?;
                }
            }
            total = total.checked_add(term).ok_or_else(overflow)?;
        }
        Ok(total)
    }

    /// Value modulo `m > 0`, in `[0, m)`.
    pub fn eval_mod(&self, t: &[i64], m: u64) -> u64 {
        let m = m as i128;
        let mut total: i128 = 0;
        for (e, &c) in &self.terms {
            let mut term = (c as i128).rem_euclid(m);
            for (i, &k) in e.iter().enumerate().filter(|(_, &k)| k > 0) {
                let x = (t[i] as i128).rem_euclid(m);
                for _ in 0..k {
                    term = term * x % m;
                }
            }
            total = (total + term) % m;
        }
        total as u64
    }

    /// Coefficients in increasing degree; fails for more than one variable.
    pub fn univariate_coeffs(&self) -> Result<Vec<i64>> {
        if self.nvars > 1 {
            return Err(Error::Invalid("polynomial is not univariate".into()));
        }
        let mut out = vec![0i64; self.degree() as usize + 1];
        for (e, &c) in &self.terms {
            out[e[0] as usize] = c;
        }
        Ok(out)
    }

    /// Restriction to the line `t_i = a_i + b_i s`, as a univariate
    /// polynomial in `s` with rational coefficients.
    fn restrict_to_line(&self, a: &[i64], b: &[i64]) -> Vec<BigRational> {
        let mut out = vec![BigRational::zero(); self.degree() as usize + 1];
        for (e, &c) in &self.terms {
            let mut poly = vec![BigInt::from(c)];
            for i in 0..MAX_VARS {
                for _ in 0..e[i] {
                    let mut next = vec![BigInt::zero(); poly.len() + 1];
                    for (j, x) in poly.iter().enumerate() {
                        next[j] += x * a.get(i).copied().unwrap_or(0);
                        next[j + 1] += x * b.get(i).copied().unwrap_or(0);
                    }
                    poly = next;
                }
            }
            for (j, x) in poly.into_iter().enumerate() {
                out[j] += BigRational::from_integer(x);
            }
        }
        trim(&mut out);
        out
    }

    /// Whether `P` has no repeated factor over `ℚ`. Univariate: `gcd(P, P′)`
    /// is constant. Several variables: some line restriction of full degree
    /// is square-free.
    pub fn is_separable(&self) -> bool {
        let deg = self.degree() as usize;
        if deg == 0 {
            return false;
        }
        const LINES: [([i64; 3], [i64; 3]); 6] = [
            ([0, 0, 0], [1, 0, 0]),
            ([0, 1, 2], [1, 3, 7]),
            ([3, -2, 5], [2, 5, -3]),
            ([-7, 11, 1], [5, -1, 13]),
            ([13, 4, -9], [17, 29, 2]),
            ([1, -17, 23], [-11, 7, 19]),
        ];
        let lines: &[([i64; 3], [i64; 3])] = if self.nvars <= 1 { &LINES[..1] } else { &LINES[1..] };
        lines.iter().any(|(a, b)| {
            let r = self.restrict_to_line(a, b);
            r.len() == deg + 1 && {
                let d = poly_derivative_q(&r);
                poly_gcd_q(&r, &d).len() == 1
            }
        })
    }

    /// Number of distinct rational roots of a univariate polynomial.
    pub fn rational_root_count(&self) -> Result<u32> {
        let mut c = self.univariate_coeffs()?;
        if self.is_zero() {
            return Err(Error::Zero);
        }
        let mut count = 0;
        if c[0] == 0 {
            count += 1;
            while c[0] == 0 {
                c.remove(0);
            }
        }
        let lead = *c.last().unwrap();
        let f0 = factor(c[0])?;
        let fl = factor(lead)?;
        let mut roots = std::collections::BTreeSet::new();
        for p in f0.divisors() {
            for q in fl.divisors() {
                for s in [1i64, -1] {
                    let num = s * p as i64;
                    let den = q as i64;
                    // Σ c_i num^i den^{n−i} = 0
                    let n = c.len() - 1;
                    let mut acc = BigInt::zero();
                    for (i, &ci) in c.iter().enumerate() {
                        acc +=
                            BigInt::from(ci) * BigInt::from(num).pow(i as u32) * BigInt::from(den).pow((n - i) as u32);
                    }
                    if acc.is_zero() {
                        roots.insert(BigRational::new(num.into(), den.into()));
                    }
                }
            }
        }
        Ok(count + roots.len() as u32)
    }

    /// Number of distinct irreducible factors over `ℚ` of a separable
    /// univariate polynomial of degree at most 3.
    pub fn irreducible_factor_count(&self) -> Result<u32> {
        let deg = self.degree();
        if self.nvars > 1 || deg > 3 || deg == 0 {
            return Err(Error::Invalid(
                "factor count needs a univariate polynomial of degree 1 to 3".into(),
            ));
        }
        let r = self.rational_root_count()?;
        Ok(r + u32::from(deg > r))
    }
}

fn overflow() -> Error {
    Error::Invalid("coefficient overflow".into())
}

fn trim(p: &mut Vec<BigRational>) {
    while p.len() > 1 && p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
    if p.len() == 1 && p[0].is_zero() {
        p.clear();
    }
}

fn poly_derivative_q(p: &[BigRational]) -> Vec<BigRational> {
    let mut d: Vec<BigRational> = p
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * BigRational::from_integer(BigInt::from(i)))
        .collect();
    trim(&mut d);
    d
}

fn poly_rem_q(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
    let mut r = a.to_vec();
    let lb = b.last().unwrap();
    while r.len() >= b.len() && !r.is_empty() {
        let shift = r.len() - b.len();
        let q = r.last().unwrap() / lb;
        for (i, c) in b.iter().enumerate() {
            r[shift + i] -= &q * c;
        }
        r.pop();
        trim(&mut r);
    }
    r
}

fn poly_gcd_q(a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    while !b.is_empty() {
        let r = poly_rem_q(&a, &b);
        a = b;
        b = r;
    }
    a
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        const NAMES: [&str; 3] = ["t1", "t2", "t3"];
        let single = self.nvars <= 1;
        let mut first = true;
        for (e, &c) in self.terms.iter().rev() {
            let mut mono = String::new();
            for (i, &k) in e.iter().enumerate() {
                if k == 0 {
                    continue;
                }
                if !mono.is_empty() {
                    mono.push('*');
                }
                mono.push_str(if single { "t" } else { NAMES[i] });
                if k > 1 {
                    mono.push_str(&format!("^{k}"));
                }
            }
            let abs = c.unsigned_abs();
            let body = match (mono.is_empty(), abs) {
                (true, _) => abs.to_string(),
                (false, 1) => mono,
                (false, _) => format!("{abs}*{mono}"),
            };
            match (first, c < 0) {
                (true, true) => write!(f, "-{body}")?,
                (true, false) => write!(f, "{body}")?,
                (false, true) => write!(f, " - {body}")?,
                (false, false) => write!(f, " + {body}")?,
            }
            first = false;
        }
        Ok(())
    }
}

impl std::str::FromStr for Poly {
    type Err = Error;

    /// Parses expressions in `t` (or `t1, t2, t3`, or `x, y, z`) with
    /// integers, `+ - *`, `^` and parentheses.
    ///
    /// ```
    /// use amoments::density::Poly;
    /// let p: Poly = "t*(t-1)*(t+2)".parse().unwrap();
    /// assert_eq!(p.univariate_coeffs().unwrap(), vec![0, -2, 1, 1]);
    /// assert_eq!(p.to_string(), "t^3 + t^2 - 2*t");
    /// ```
    fn from_str(s: &str) -> Result<Poly> {
        let tokens = tokenize(s)?;
        let mut parser = Parser { tokens, pos: 0 };
        let p = parser.expr()?;
        if parser.pos != parser.tokens.len() {
            return Err(Error::Invalid(format!("trailing input in {s:?}")));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(i64),
    Var(usize),
    Op(char),
}

fn tokenize(s: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = s.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Token::Num(text.parse().map_err(|_| overflow())?));
        } else if "+-*^()".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            let name: String = chars[start..i].iter().collect();
            let idx = match name.as_str() {
                "t" | "t1" | "x" => 0,
                "t2" | "y" => 1,
                "t3" | "z" => 2,
                _ => return Err(Error::Invalid(format!("unknown variable {name:?}"))),
            };
            out.push(Token::Var(idx));
        } else {
            return Err(Error::Invalid(format!("unexpected character {c:?}")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn expr(&mut self) -> Result<Poly> {
        let mut acc = self.term()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if c == '+' { acc.add(&rhs)? } else { acc.sub(&rhs)? };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Poly> {
        let mut acc = self.factor()?;
        loop {
            match self.peek() {
                Some(Token::Op('*')) => {
                    self.pos += 1;
                    acc = acc.mul(&self.factor()?)?;
                }
                Some(Token::Var(_)) | Some(Token::Op('(')) => {
                    acc = acc.mul(&self.factor()?)?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn factor(&mut self) -> Result<Poly> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Poly::constant(0).sub(&self.factor()?);
        }
        let base = match self.tokens.get(self.pos).cloned() {
            Some(Token::Num(n)) => Poly::constant(n),
            Some(Token::Var(i)) => Poly::var(i)?,
            Some(Token::Op('(')) => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(&Token::Op(')')) {
                    return Err(Error::Invalid("unbalanced parentheses".into()));
                }
                inner
            }
            other => return Err(Error::Invalid(format!("unexpected token {other:?}"))),
        };
        self.pos += 1;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            match self.tokens.get(self.pos) {
                Some(&Token::Num(k)) if k <= 64 => {
                    self.pos += 1;
                    return base.pow(k as u32);
                }
                _ => return Err(Error::Invalid("exponent must be a small integer".into())),
            }
        }
        Ok(base)
    }
}

/// Odd primes of `a` in increasing order.
fn odd_primes(a: u64) -> Result<Vec<u64>> {
    Ok(factor(a as i64)?.primes().filter(|&p| p != 2).collect())
}

fn check_eps(a: u64, eps: &[i8]) -> Result<Vec<u64>> {
    let qs = odd_primes(a)?;
    if qs.len() != eps.len() {
        return Err(Error::Dimension {
            expected: qs.len(),
            got: eps.len(),
        });
    }
    if eps.iter().any(|e| !(-1..=1).contains(e)) {
        return Err(Error::Invalid("ε entries must lie in {-1, 0, 1}".into()));
    }
    Ok(qs)
}

/// Visits every residue tuple modulo `n`, or for univariate `P`, only the
/// lifts of roots modulo the smallest prime of `a`.
fn count_residues(p: &Poly, a: u64, n: u64, mut accept: impl FnMut(u64) -> bool) -> Result<u64> {
    let vars = p.nvars().max(1) as u32;
    if vars == 1 && a > 1 {
        let q = factor(a as i64)?.smallest_prime().expect("a > 1");
        let cost = q + (n / q) * p.degree().max(1) as u64;
        if cost > 50 * MAX_ENUMERATION {
            return Err(Error::OutOfRange(n as i128));
        }
        let roots: Vec<u64> = (0..q).filter(|&r| p.eval_mod(&[r as i64], q) == 0).collect();
        let mut count = 0;
        for r in roots {
            for s in 0..n / q {
                let t = r + q * s;
                let v = p.eval_mod(&[t as i64], n);
                if v % a == 0 && accept(v) {
                    count += 1;
                }
            }
        }
        return Ok(count);
    }
    let total = (n as u128).pow(vars);
    if total > MAX_ENUMERATION as u128 {
        return Err(Error::OutOfRange(total as i128));
    }
    let mut count = 0;
    let mut t = vec![0i64; vars as usize];
    for idx in 0..total as u64 {
        let mut rest = idx;
        for x in t.iter_mut() {
            *x = (rest % n) as i64;
            rest /= n;
        }
        let v = p.eval_mod(&t, n);
        if v % a == 0 && accept(v) {
            count += 1;
        }
    }
    Ok(count)
}

/// `h(a) = #{t ∈ (ℤ/a)^n : a | P(t)} / a^n`.
///
/// ```
/// use amoments::density::{poly_density, Poly};
/// use num_rational::BigRational;
/// let p: Poly = "t^2 - 2".parse().unwrap();
/// assert_eq!(poly_density(&p, 7, None).unwrap(), BigRational::new(2.into(), 7.into()));
/// ```
pub fn poly_density(p: &Poly, a: u64, eps: Option<&[i8]>) -> Result<BigRational> {
    if a == 0 {
        return Err(Error::Zero);
    }
    let vars = p.nvars().max(1) as u32;
    if vars as usize > MAX_VARS {
        return Err(Error::Invalid("too many variables".into()));
    }
    match eps {
        None => {
            let count = count_residues(p, a, a, |_| true)?;
            Ok(BigRational::new(count.into(), BigInt::from(a).pow(vars)))
        }
        Some(eps) => {
            let qs = check_eps(a, eps)?;
            let n = a * qs.iter().product::<u64>();
            let count = count_residues(p, a, n, |v| {
                let w = v / a;
                qs.iter()
                    .zip(eps)
                    .all(|(&q, &e)| jacobi_unchecked((w % q) as i64, q) == e)
            })?;
            Ok(BigRational::new(count.into(), BigInt::from(n).pow(vars)))
        }
    }
}

/// All `ε ∈ {−1, 0, 1}^r` for the odd primes of `a`.
pub fn epsilon_vectors(a: u64) -> Result<Vec<Vec<i8>>> {
    let r = odd_primes(a)?.len();
    let mut out = vec![Vec::new()];
    for _ in 0..r {
        out = out
            .into_iter()
            .flat_map(|v| {
                [-1i8, 0, 1].into_iter().map(move |e| {
                    let mut w = v.clone();
                    w.push(e);
                    w
                })
            })
            .collect();
    }
    Ok(out)
}

/// Count of `t` with `max |t_i| ≤ B`, `a | P(t)` and the `ε` conditions.
pub fn box_count(p: &Poly, a: u64, eps: &[i8], b: i64) -> Result<u64> {
    let qs = check_eps(a, eps)?;
    let vars = p.nvars().max(1);
    let side = (2 * b + 1) as u64;
    if (side as u128).pow(vars as u32) > 100 * MAX_ENUMERATION as u128 {
        return Err(Error::OutOfRange(b as i128));
    }
    let n = a * qs.iter().product::<u64>();
    let mut count = 0;
    let mut t = vec![0i64; vars];
    for idx in 0..side.pow(vars as u32) {
        let mut rest = idx;
        for x in t.iter_mut() {
            *x = (rest % side) as i64 - b;
            rest /= side;
        }
        let v = p.eval_mod(&t, n);
        if v % a == 0 {
            let w = v / a;
            if qs
                .iter()
                .zip(eps)
                .all(|(&q, &e)| jacobi_unchecked((w % q) as i64, q) == e)
            {
                count += 1;
            }
        }
    }
    Ok(count)
}

/// Empirical constants for the local density bounds and the box count.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    /// `max_p p·h(p)` over odd `p ≤ pmax`.
    pub max_p_h_p: f64,
    /// `max_p p²·h(p²)`.
    pub max_p2_h_p2: f64,
    /// `max_p max_{ε = ±1} p²·|h(p, ε) − h(p)/2|`.
    pub max_eps_deviation: f64,
    /// `max_{a ≤ B^θ, ε} |count − h(a, ε)(2B)^n|`.
    pub max_box_deviation: f64,
    /// The box deviation divided by `B^{n−θ}`.
    pub box_constant: f64,
    pub theta: f64,
}

/// Exponent used for the level `a ≤ B^θ` in [`check_level_distribution`].
pub const THETA: f64 = 0.2;

/// Computes [`LevelReport`] for a separable `P`, odd primes up to `pmax`
/// and box size `B`.
pub fn check_level_distribution(p: &Poly, pmax: u64, b: i64) -> Result<LevelReport> {
    check_level_distribution_with_bound(p, pmax, b, ((b as f64).powf(THETA)).floor() as u64)
}

/// As [`check_level_distribution`] with an explicit bound on `a`.
pub fn check_level_distribution_with_bound(p: &Poly, pmax: u64, b: i64, amax: u64) -> Result<LevelReport> {
    if !p.is_separable() {
        return Err(Error::Invalid(format!("{p} is not separable")));
    }
    let mut max_p_h_p: f64 = 0.0;
    let mut max_p2_h_p2: f64 = 0.0;
    let mut max_eps_deviation: f64 = 0.0;
    for q in primes_up_to(pmax).into_iter().filter(|&q| q != 2) {
        let qf = BigRational::from_integer(q.into());
        let h = poly_density(p, q, None)?;
        max_p_h_p = max_p_h_p.max(to_f64(&(&h * &qf)));
        let h2 = poly_density(p, q * q, None)?;
        max_p2_h_p2 = max_p2_h_p2.max(to_f64(&(&h2 * &qf * &qf)));
        let half = &h / BigRational::from_integer(2.into());
        for e in [-1i8, 1] {
            let he = poly_density(p, q, Some(&[e]))?;
            let dev = (&he - &half).abs() * &qf * &qf;
            max_eps_deviation = max_eps_deviation.max(to_f64(&dev));
        }
    }
    let vars = p.nvars().max(1) as i32;
    let mut max_box_deviation: f64 = 0.0;
    for a in 1..=amax.max(1) {
        for eps in epsilon_vectors(a)? {
            let h = poly_density(p, a, Some(&eps))?;
            let expected = to_f64(&h) * (2.0 * b as f64).powi(vars);
            let count = box_count(p, a, &eps, b)? as f64;
            max_box_deviation = max_box_deviation.max((count - expected).abs());
        }
    }
    let box_constant = max_box_deviation / (b as f64).powf(vars as f64 - THETA);
    Ok(LevelReport {
        max_p_h_p,
        max_p2_h_p2,
        max_eps_deviation,
        max_box_deviation,
        box_constant,
        theta: THETA,
    })
}

pub(crate) fn to_f64(q: &BigRational) -> f64 {
    q.numer().to_f64().unwrap_or(f64::NAN) / q.denom().to_f64().unwrap_or(f64::NAN)
}

/// Number of distinct roots of a univariate `P` modulo a prime `p`, from
/// `deg gcd(x^p − x, P mod p)`; `p` if `P ≡ 0 mod p`.
pub fn root_count_mod_p(p: &Poly, q: u64) -> Result<u64> {
    if !is_prime(q) {
        return Err(Error::NotPrime(q));
    }
    let c = p.univariate_coeffs()?;
    let mut f: Vec<u64> = c.iter().map(|&x| x.rem_euclid(q as i64) as u64).collect();
    trim_mod(&mut f);
    if f.is_empty() {
        return Ok(q);
    }
    if f.len() == 1 {
        return Ok(0);
    }
    // x^q mod f, then gcd(x^q − x, f).
    let mut xq = powmod_x(q, &f, q);
    while xq.len() < 2 {
        xq.push(0);
    }
    xq[1] = (xq[1] + q - 1) % q;
    trim_mod(&mut xq);
    let g = gcd_mod(f, xq, q);
    Ok(g.len().saturating_sub(1) as u64)
}

fn trim_mod(f: &mut Vec<u64>) {
    while f.last() == Some(&0) {
        f.pop();
    }
}

fn inv_mod(a: u64, q: u64) -> u64 {
    let mut r = 1u64;
    let (mut b, mut e) = (a % q, q - 2);
    while e > 0 {
        if e & 1 == 1 {
            r = (r as u128 * b as u128 % q as u128) as u64;
        }
        b = (b as u128 * b as u128 % q as u128) as u64;
        e >>= 1;
    }
    r
}

fn rem_mod(a: &[u64], f: &[u64], q: u64) -> Vec<u64> {
    let mut r = a.to_vec();
    trim_mod(&mut r);
    let inv = inv_mod(*f.last().unwrap(), q);
    while r.len() >= f.len() {
        let shift = r.len() - f.len();
        let c = (*r.last().unwrap() as u128 * inv as u128 % q as u128) as u64;
        for (i, &fi) in f.iter().enumerate() {
            let sub = (c as u128 * fi as u128 % q as u128) as u64;
            r[shift + i] = (r[shift + i] + q - sub) % q;
        }
        trim_mod(&mut r);
    }
    r
}

fn mul_mod(a: &[u64], b: &[u64], q: u64) -> Vec<u64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0u64; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = ((out[i + j] as u128 + x as u128 * y as u128) % q as u128) as u64;
        }
    }
    out
}

fn powmod_x(mut e: u64, f: &[u64], q: u64) -> Vec<u64> {
    let mut result = rem_mod(&[1], f, q);
    let mut base = rem_mod(&[0, 1], f, q);
    while e > 0 {
        if e & 1 == 1 {
            result = rem_mod(&mul_mod(&result, &base, q), f, q);
        }
        base = rem_mod(&mul_mod(&base, &base, q), f, q);
        e >>= 1;
    }
    result
}

fn gcd_mod(mut a: Vec<u64>, mut b: Vec<u64>, q: u64) -> Vec<u64> {
    while !b.is_empty() {
        let r = rem_mod(&a, &b, q);
        a = b;
        b = r;
    }
    a
}

/// Average of `c_P(p)` over primes up to `pmax`, next to the number of
/// irreducible factors of `P` over `ℚ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrobenianReport {
    pub average: BigRational,
    pub prime_count: u64,
    pub factor_count: u32,
}

/// `(Σ_{p ≤ pmax} c_P(p)) / π(pmax)` where `c_P(p)` is the number of
/// distinct roots of `P` modulo `p`.
///
/// ```
/// use amoments::density::{frobenian_average, Poly};
/// let p: Poly = "t*(t-1)".parse().unwrap();
/// let r = frobenian_average(&p, 100).unwrap();
/// assert_eq!(r.factor_count, 2);
/// ```
pub fn frobenian_average(p: &Poly, pmax: u64) -> Result<FrobenianReport> {
    let factor_count = p.irreducible_factor_count()?;
    let primes = primes_up_to(pmax);
    if primes.is_empty() {
        return Err(Error::Invalid("no primes below the bound".into()));
    }
    let mut sum = 0u64;
    for &q in &primes {
        sum += root_count_mod_p(p, q)?;
    }
    Ok(FrobenianReport {
        average: BigRational::new(sum.into(), (primes.len() as u64).into()),
        prime_count: primes.len() as u64,
        factor_count,
    })
}

/// `Σ (h₃ − 1)` over fundamental discriminants `0 < ±Δ < X` whose
/// square-free kernel is divisible by `m`, with the predicted main term
/// `c·X·δ(m)/π²` (`c = 3` for negative, `1` for positive discriminants).
#[derive(Debug, Clone, PartialEq)]
pub struct H3Level {
    pub x: u64,
    pub m: u64,
    pub sign: Sign,
    pub sum: u64,
    pub expected: f64,
}

impl H3Level {
    pub fn ratio(&self) -> f64 {
        self.sum as f64 / self.expected
    }
}

/// Partial `Σ (h₃ − 1)` over discriminants in `lo ≤ |Δ| < hi`.
pub fn h3_excess_range(oracle: &ClassGroupOracle, lo: u64, hi: u64, m: u64, sign: Sign) -> Result<u64> {
    let mut sum = 0u64;
    for d in fundamental_discriminants(hi.saturating_sub(1), sign)? {
        if d.unsigned_abs() < lo {
            continue;
        }
        let n = if d % 4 == 0 { d / 4 } else { d };
        if n % m as i64 != 0 {
            continue;
        }
        let h3 = if d < 0 {
            oracle.h3_imaginary(d)?
        } else {
            oracle.class_group(d, false)?.torsion(3)
        };
        sum += h3 - 1;
    }
    Ok(sum)
}

/// Main term `c·X·δ(m)/π²` of the `h₃` level sum.
pub fn h3_expected(x: u64, m: u64, sign: Sign) -> Result<f64> {
    let c = match sign {
        Sign::Negative => 3.0,
        Sign::Positive => 1.0,
    };
    Ok(c * x as f64 * to_f64(&delta(m)?) / std::f64::consts::PI.powi(2))
}

/// The full level sum for `0 < ±Δ < X`.
pub fn h3_level(x: u64, m: u64, sign: Sign) -> Result<H3Level> {
    let oracle = ClassGroupOracle::new(x as i64)?;
    let sum = h3_excess_range(&oracle, 1, x, m, sign)?;
    Ok(H3Level {
        x,
        m,
        sign,
        sum,
        expected: h3_expected(x, m, sign)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn poly(s: &str) -> Poly {
        s.parse().unwrap()
    }

    #[test]
    fn delta_table() {
        assert_eq!(delta(1).unwrap(), q(1, 1));
        assert_eq!(delta(3).unwrap(), q(1, 4));
        assert_eq!(delta(2).unwrap(), q(1, 3));
        assert_eq!(delta(4).unwrap(), q(1, 3));
        assert_eq!(delta(8).unwrap(), q(1, 6));
        assert_eq!(delta(16).unwrap(), q(0, 1));
        assert_eq!(delta(9).unwrap(), q(0, 1));
        assert!(delta(0).is_err());
    }

    #[test]
    fn delta_is_multiplicative() {
        for m in 1..=1000u64 {
            for n in 1..=1000u64 {
                if num_integer::gcd(m, n) == 1 && (m * n) % 7 == 1 {
                    assert_eq!(delta(m * n).unwrap(), delta(m).unwrap() * delta(n).unwrap());
                }
            }
        }
    }

    #[test]
    fn parser_and_display() {
        let p = poly("t^2 - 2");
        assert_eq!(p.univariate_coeffs().unwrap(), vec![-2, 0, 1]);
        assert_eq!(poly("-(t-1)^2").univariate_coeffs().unwrap(), vec![-1, 2, -1]);
        assert_eq!(poly("2t + 3").univariate_coeffs().unwrap(), vec![3, 2]);
        let m = poly("x*y - z^2 + 1");
        assert_eq!(m.nvars(), 3);
        assert_eq!(m.eval(&[2, 3, 1]).unwrap(), 6);
        assert_eq!(poly(&m.to_string()), m);
        assert!("t +".parse::<Poly>().is_err());
        assert!("(t".parse::<Poly>().is_err());
        assert!("w".parse::<Poly>().is_err());
    }

    #[test]
    fn density_examples() {
        let t = poly("t");
        for p in [3u64, 5, 7, 11] {
            assert_eq!(poly_density(&t, p, None).unwrap(), q(1, p as i64));
        }
        assert_eq!(poly_density(&t, 5, Some(&[1])).unwrap(), q(2, 25));
        assert_eq!(poly_density(&poly("t^2 - 2"), 7, None).unwrap(), q(2, 7));
        assert!(poly_density(&t, 15, Some(&[1])).is_err());
        assert!(poly_density(&poly("x*y*z"), 1009, None).is_err());
    }

    #[test]
    fn densities_sum_over_epsilon() {
        for s in ["t", "t^2 - 2", "t*(t-1)*(t+2)", "x^2 + y^2 - 5", "x*y - 3"] {
            let p = poly(s);
            for a in 1..=30u64 {
                let h = poly_density(&p, a, None);
                let Ok(h) = h else { continue };
                let mut total = BigRational::zero();
                for eps in epsilon_vectors(a).unwrap() {
                    let he = poly_density(&p, a, Some(&eps)).unwrap();
                    assert!(he >= BigRational::zero() && he <= BigRational::one());
                    total += he;
                }
                assert_eq!(total, h, "{s} at a = {a}");
            }
        }
    }

    #[test]
    fn univariate_fast_path_matches_enumeration() {
        let p = poly("t^3 - 3*t + 7");
        for a in [9u64, 25, 27, 45, 49, 121, 343] {
            let fast = poly_density(&p, a, None).unwrap();
            let slow = (0..a).filter(|&t| p.eval_mod(&[t as i64], a) == 0).count() as i64;
            assert_eq!(fast, q(slow, a as i64));
        }
    }

    #[test]
    fn separability() {
        assert!(poly("t").is_separable());
        assert!(poly("t*(t-1)*(t+2)").is_separable());
        assert!(!poly("(t-1)^2*(t+3)").is_separable());
        assert!(!poly("5").is_separable());
        assert!(poly("x^2 + y^2 - 1").is_separable());
        assert!(!poly("(x + y)^2*(x - 1)").is_separable());
        assert!(poly("x*y*z - 2").is_separable());
    }

    #[test]
    fn factor_counts() {
        assert_eq!(poly("t").irreducible_factor_count().unwrap(), 1);
        assert_eq!(poly("t^2 - 2").irreducible_factor_count().unwrap(), 1);
        assert_eq!(poly("t^2 - 4").irreducible_factor_count().unwrap(), 2);
        assert_eq!(poly("t*(t-1)*(t+2)").irreducible_factor_count().unwrap(), 3);
        assert_eq!(poly("t*(t^2+1)").irreducible_factor_count().unwrap(), 2);
        assert_eq!(poly("2*t^3 - 3*t^2 + 1 - 0*t").rational_root_count().unwrap(), 2);
        assert_eq!(poly("t^3 - 2").irreducible_factor_count().unwrap(), 1);
    }

    #[test]
    fn root_count_matches_brute_force() {
        for s in ["t^2 - 2", "t^3 - t + 1", "6*t^2 - 5*t + 1", "t*(t-1)*(t+2)", "3*t"] {
            let p = poly(s);
            for q in primes_up_to(200) {
                let brute = (0..q).filter(|&t| p.eval_mod(&[t as i64], q) == 0).count() as u64;
                assert_eq!(root_count_mod_p(&p, q).unwrap(), brute, "{s} mod {q}");
            }
        }
    }

    #[test]
    fn frobenian_examples() {
        assert_eq!(frobenian_average(&poly("t"), 1000).unwrap().average, q(1, 1));
        let two = frobenian_average(&poly("t*(t-1)"), 1000).unwrap();
        // p = 2 has roots 0 and 1 as well.
        assert_eq!(two.average, q(2, 1));
        let r = frobenian_average(&poly("t^2 - 2"), 100_000).unwrap();
        let avg = to_f64(&r.average);
        assert!((0.95..=1.05).contains(&avg), "{avg}");
        assert_eq!(r.factor_count, 1);
    }

    #[test]
    fn level_constants() {
        let r = check_level_distribution(&poly("t"), 100, 1000).unwrap();
        assert_eq!(r.max_p_h_p, 1.0);
        let r = check_level_distribution(&poly("t*(t-1)*(t+2)"), 100, 1000).unwrap();
        assert_eq!(r.max_p_h_p, 3.0);
        let r = check_level_distribution(&poly("t^2 - 2"), 100, 1000).unwrap();
        assert!(r.max_eps_deviation <= 1.0, "{r:?}");
        assert!(r.max_p2_h_p2 <= 2.0);
        assert!(check_level_distribution(&poly("(t-1)^2"), 10, 10).is_err());
    }

    #[test]
    fn box_equidistribution() {
        let p = poly("t*(t-1)*(t+2)");
        let b = 1000;
        let r = check_level_distribution_with_bound(&p, 3, b, 30).unwrap();
        assert!(r.max_box_deviation <= 5.0 * (b as f64).powf(0.9), "{r:?}");
    }

    #[test]
    fn h3_level_small() {
        let l = h3_level(20_000, 1, Sign::Negative).unwrap();
        assert!((0.6..1.4).contains(&l.ratio()), "{l:?}");
        let l = h3_level(20_000, 3, Sign::Negative).unwrap();
        assert!(l.sum > 0);
    }
}
