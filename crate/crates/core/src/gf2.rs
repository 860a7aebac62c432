//! Dense bit-packed matrices over GF(2).

use crate::error::{Error, Result};
use std::fmt;

/// Largest supported row or column count.
pub const MAX_DIM: usize = 4096;

/// A vector over GF(2), packed into 64-bit words.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Gf2Vector {
    len: usize,
    words: Vec<u64>,
}

impl Gf2Vector {
    pub fn zeros(len: usize) -> Self {
        Gf2Vector {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b & 1 == 1);
        }
        v
    }

    /// Builds a vector of length `len ≤ 64` from the low bits of `mask`.
    pub fn from_mask(len: usize, mask: u64) -> Self {
        assert!(len <= 64);
        let mut v = Self::zeros(len);
        if len > 0 {
            v.words[0] = if len == 64 { mask } else { mask & ((1u64 << len) - 1) };
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, b: bool) {
        assert!(i < self.len);
        let m = 1u64 << (i % 64);
        if b {
            self.words[i / 64] |= m;
        } else {
            self.words[i / 64] &= !m;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn xor_assign(&mut self, other: &Gf2Vector) {
        assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn dot(&self, other: &Gf2Vector) -> bool {
        assert_eq!(self.len, other.len);
        let ones: u32 = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum();
        ones % 2 == 1
    }

    pub fn bits(&self) -> Vec<u8> {
        (0..self.len).map(|i| self.get(i) as u8).collect()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

impl fmt::Debug for Gf2Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            write!(f, "{}", self.get(i) as u8)?;
        }
        Ok(())
    }
}

/// A `rows × cols` matrix over GF(2), stored row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Gf2Matrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl Gf2Matrix {
    /// The zero matrix. Panics if a dimension exceeds [`MAX_DIM`].
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows <= MAX_DIM && cols <= MAX_DIM, "matrix too large");
        let stride = cols.div_ceil(64);
        Gf2Matrix {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                if f(i, j) {
                    m.set(i, j, true);
                }
            }
        }
        m
    }

    /// Builds a matrix from rows of 0/1 entries; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::Dimension {
                expected: cols,
                got: bad.len(),
            });
        }
        if rows.len() > MAX_DIM || cols > MAX_DIM {
            return Err(Error::OutOfRange(rows.len().max(cols) as i128));
        }
        Ok(Self::from_fn(rows.len(), cols, |i, j| rows[i][j] & 1 == 1))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        assert!(i < self.rows && j < self.cols);
        self.data[i * self.stride + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, j: usize, b: bool) {
        assert!(i < self.rows && j < self.cols);
        let w = &mut self.data[i * self.stride + j / 64];
        let m = 1u64 << (j % 64);
        if b {
            *w |= m;
        } else {
            *w &= !m;
        }
    }

    pub fn toggle(&mut self, i: usize, j: usize) {
        assert!(i < self.rows && j < self.cols);
        self.data[i * self.stride + j / 64] ^= 1u64 << (j % 64);
    }

    pub fn row(&self, i: usize) -> Gf2Vector {
        Gf2Vector {
            len: self.cols,
            words: self.data[i * self.stride..(i + 1) * self.stride].to_vec(),
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// The submatrix on the given row and column indices, in the given order.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self.get(rows[i], cols[j]))
    }

    pub fn mul_vec(&self, v: &Gf2Vector) -> Gf2Vector {
        assert_eq!(v.len, self.cols);
        let mut out = Gf2Vector::zeros(self.rows);
        for i in 0..self.rows {
            let row = &self.data[i * self.stride..(i + 1) * self.stride];
            let ones: u32 = row.iter().zip(&v.words).map(|(a, b)| (a & b).count_ones()).sum();
            out.set(i, ones % 2 == 1);
        }
        out
    }

    /// Reduced row echelon form of a copy; returns the pivot columns.
    fn echelon(&self) -> (Vec<u64>, Vec<usize>) {
        let s = self.stride;
        let mut a = self.data.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let (w, bit) = (c / 64, 1u64 << (c % 64));
            let Some(p) = (r..self.rows).find(|&i| a[i * s + w] & bit != 0) else {
                continue;
            };
            if p != r {
                for k in 0..s {
                    a.swap(p * s + k, r * s + k);
                }
            }
            for i in 0..self.rows {
                if i != r && a[i * s + w] & bit != 0 {
                    for k in w..s {
                        let x = a[r * s + k];
                        a[i * s + k] ^= x;
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        (a, pivots)
    }

    /// Rank over GF(2).
    ///
    /// ```
    /// use amoments::gf2::Gf2Matrix;
    /// let ones = Gf2Matrix::from_rows(&[vec![1, 1], vec![1, 1]]).unwrap();
    /// assert_eq!(ones.rank(), 1);
    /// ```
    pub fn rank(&self) -> usize {
        if self.stride == 1 {
            return rank_single_word(&self.data, self.cols);
        }
        self.echelon().1.len()
    }

    /// Number of vectors in the right kernel, `2^(cols − rank)`.
    pub fn kernel_size(&self) -> Result<u64> {
        let dim = self.cols - self.rank();
        if dim > 62 {
            return Err(Error::KernelOverflow(dim));
        }
        Ok(1u64 << dim)
    }

    pub fn kernel_dim(&self) -> usize {
        self.cols - self.rank()
    }

    /// A basis of the right kernel `{v : Mv = 0}`.
    pub fn kernel_basis(&self) -> Vec<Gf2Vector> {
        let (a, pivots) = self.echelon();
        let s = self.stride;
        let mut is_pivot = vec![false; self.cols];
        for &c in &pivots {
            is_pivot[c] = true;
        }
        let mut basis = Vec::new();
        for free in (0..self.cols).filter(|&c| !is_pivot[c]) {
            let mut v = Gf2Vector::zeros(self.cols);
            v.set(free, true);
            for (r, &pc) in pivots.iter().enumerate() {
                if a[r * s + free / 64] >> (free % 64) & 1 == 1 {
                    v.set(pc, true);
                }
            }
            basis.push(v);
        }
        basis
    }
}

fn rank_single_word(rows: &[u64], cols: usize) -> usize {
    let mut buf = [0u64; 64];
    let mut heap;
    let a: &mut [u64] = if rows.len() <= 64 {
        buf[..rows.len()].copy_from_slice(rows);
        &mut buf[..rows.len()]
    } else {
        heap = rows.to_vec();
        &mut heap
    };
    let mut r = 0;
    for c in 0..cols {
        let bit = 1u64 << c;
        let Some(p) = (r..a.len()).find(|&i| a[i] & bit != 0) else {
            continue;
        };
        a.swap(p, r);
        let pr = a[r];
        for x in a[r + 1..].iter_mut() {
            if *x & bit != 0 {
                *x ^= pr;
            }
        }
        r += 1;
        if r == a.len() {
            break;
        }
    }
    r
}

impl fmt::Debug for Gf2Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Gf2Matrix {}x{}", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        Ok(())
    }
}
