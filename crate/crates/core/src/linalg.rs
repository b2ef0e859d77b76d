//! Small dense/sparse complex linear-algebra helpers.
//!
//! Dense work goes through `nalgebra`; the propagator only needs a
//! compressed-row matrix with a dense right-hand side, which lives here.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Frobenius norm of `m†m - reference`.
pub fn gram_residual(m: &CMatrix, reference: &CMatrix) -> f64 {
    (m.adjoint() * m - reference).norm()
}

/// Kronecker product of two dense matrices.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Compressed-row sparse complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl SparseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![ONE; n])
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        Self::from_triplets(
            diag.len(),
            diag.len(),
            diag.iter().enumerate().map(|(i, &v)| (i, i, v)),
        )
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros are dropped.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, C64)>,
    ) -> Self {
        let mut entries: Vec<(usize, usize, C64)> = triplets.into_iter().collect();
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, C64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|&(_, _, v)| v != ZERO);

        let mut row_ptr = vec![0; nrows + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx: merged.iter().map(|e| e.1).collect(),
            values: merged.iter().map(|e| e.2).collect(),
        }
    }

    pub fn from_dense(m: &CMatrix) -> Self {
        let triplets = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| (r, c, m[(r, c)]));
        Self::from_triplets(m.nrows(), m.ncols(), triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over stored `(row, col, value)` entries in row order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[range.clone()].binary_search(&col) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => ZERO,
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.iter() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(
            self.ncols,
            self.nrows,
            self.iter().map(|(r, c, v)| (c, r, v.conj())),
        )
    }

    pub fn scale(&self, factor: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }

    pub fn add(&self, other: &SparseMatrix) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::Dimension {
                expected: format!("{}x{}", self.nrows, self.ncols),
                found: format!("{}x{}", other.nrows, other.ncols),
            });
        }
        Ok(Self::from_triplets(
            self.nrows,
            self.ncols,
            self.iter().chain(other.iter()),
        ))
    }

    pub fn kron(&self, other: &SparseMatrix) -> Self {
        let (p, q) = (other.nrows, other.ncols);
        let triplets = self.iter().flat_map(|(r1, c1, v1)| {
            other
                .iter()
                .map(move |(r2, c2, v2)| (r1 * p + r2, c1 * q + c2, v1 * v2))
        });
        Self::from_triplets(self.nrows * p, self.ncols * q, triplets)
    }

    /// Largest deviation `|A_ij - conj(A_ji)|` over the stored pattern.
    pub fn hermiticity_defect(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        self.iter()
            .map(|(r, c, v)| (v - self.get(c, r).conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Dense product `self * x`.
    pub fn mul_dense(&self, x: &CMatrix) -> CMatrix {
        assert_eq!(self.ncols, x.nrows(), "sparse-dense product shape mismatch");
        let mut out = CMatrix::zeros(self.nrows, x.ncols());
        for j in 0..x.ncols() {
            let xcol = x.column(j);
            let mut ocol = out.column_mut(j);
            for r in 0..self.nrows {
                let mut acc = ZERO;
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += self.values[k] * xcol[self.col_idx[k]];
                }
                ocol[r] = acc;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_merge_and_drop_zeros() {
        let m = SparseMatrix::from_triplets(
            2,
            2,
            [(0, 1, ONE), (0, 1, ONE), (1, 0, ONE), (1, 0, -ONE)],
        );
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), C64::new(2.0, 0.0));
        assert_eq!(m.get(1, 0), ZERO);
    }

    #[test]
    fn kron_matches_dense() {
        let a = SparseMatrix::from_triplets(2, 2, [(0, 1, I), (1, 1, ONE)]);
        let b = SparseMatrix::from_triplets(3, 3, [(0, 0, ONE), (2, 1, C64::new(2.0, -1.0))]);
        assert_eq!(a.kron(&b).to_dense(), kron(&a.to_dense(), &b.to_dense()));
    }

    #[test]
    fn mul_dense_matches_dense_product() {
        let a = SparseMatrix::from_triplets(
            3,
            3,
            [
                (0, 0, ONE),
                (0, 2, I),
                (1, 1, C64::new(0.5, 0.5)),
                (2, 0, -I),
            ],
        );
        let x = CMatrix::from_fn(3, 2, |r, c| C64::new(r as f64 + 1.0, c as f64 - 0.5));
        let diff = a.mul_dense(&x) - a.to_dense() * &x;
        assert!(max_abs(&diff) < 1e-15);
    }

    #[test]
    fn hermiticity_detects_asymmetry() {
        let h = SparseMatrix::from_triplets(2, 2, [(0, 1, I), (1, 0, -I)]);
        assert!(h.is_hermitian(0.0));
        let nh = SparseMatrix::from_triplets(2, 2, [(0, 1, I), (1, 0, I)]);
        assert!(!nh.is_hermitian(1e-12));
    }
}
