//! Dense and column-compressed sparse matrices plus the handful of vector
//! kernels the solvers need. Deliberately minimal: row-major dense storage,
//! CSC sparse storage, power iteration for spectral norms, and an LU solve
//! used by the reference oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

pub fn nrm2_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

pub fn nrm2<T: Scalar>(a: &[T]) -> T {
    nrm2_sq(a).sqrt()
}

/// y += alpha * x
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

pub fn linf<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> DenseMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMat { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Structural(format!(
                "dense matrix {}x{} expects {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(DenseMat { rows, cols, data })
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    /// out += M x
    pub fn matvec_add(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for r in 0..self.rows {
            out[r] += dot(self.row(r), x);
        }
    }

    /// out = M^T v (overwrites)
    pub fn tr_matvec_into(&self, v: &[T], out: &mut [T]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for o in out.iter_mut() {
            *o = T::zero();
        }
        for r in 0..self.rows {
            let row = self.row(r);
            let vr = v[r];
            for (o, m) in out.iter_mut().zip(row) {
                *o += *m * vr;
            }
        }
    }
}

/// Column-compressed sparse matrix. Row indices are strictly increasing
/// within each column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CscMat<T> {
    pub rows: usize,
    pub cols: usize,
    pub colptr: Vec<usize>,
    pub rowidx: Vec<usize>,
    pub vals: Vec<T>,
}

impl<T: Scalar> CscMat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CscMat { rows, cols, colptr: vec![0; cols + 1], rowidx: Vec::new(), vals: Vec::new() }
    }

    /// Build from per-column (row, value) lists; rows must be strictly
    /// increasing within a column.
    pub fn from_columns(rows: usize, columns: Vec<Vec<(usize, T)>>) -> Result<Self> {
        let cols = columns.len();
        let mut colptr = Vec::with_capacity(cols + 1);
        let mut rowidx = Vec::new();
        let mut vals = Vec::new();
        colptr.push(0);
        for (c, col) in columns.iter().enumerate() {
            let mut last: Option<usize> = None;
            for &(r, v) in col {
                if r >= rows {
                    return Err(Error::Structural(format!(
                        "sparse column {c}: row {r} out of bounds ({rows} rows)"
                    )));
                }
                if let Some(prev) = last {
                    if r <= prev {
                        return Err(Error::Structural(format!(
                            "sparse column {c}: row indices not strictly increasing"
                        )));
                    }
                }
                last = Some(r);
                rowidx.push(r);
                vals.push(v);
            }
            colptr.push(rowidx.len());
        }
        Ok(CscMat { rows, cols, colptr, rowidx, vals })
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    pub fn col(&self, c: usize) -> (&[usize], &[T]) {
        let lo = self.colptr[c];
        let hi = self.colptr[c + 1];
        (&self.rowidx[lo..hi], &self.vals[lo..hi])
    }

    /// out += M x, O(nnz)
    pub fn matvec_add(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for c in 0..self.cols {
            let xc = x[c];
            if xc == T::zero() {
                continue;
            }
            let (ri, vs) = self.col(c);
            for (r, v) in ri.iter().zip(vs) {
                out[*r] += *v * xc;
            }
        }
    }

    /// out = M^T v (overwrites), O(nnz)
    pub fn tr_matvec_into(&self, v: &[T], out: &mut [T]) {
        debug_assert_eq!(v.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for c in 0..self.cols {
            let (ri, vs) = self.col(c);
            let mut acc = T::zero();
            for (r, val) in ri.iter().zip(vs) {
                acc += *val * v[*r];
            }
            out[c] = acc;
        }
    }
}

/// Power-iteration budget: fixed round cap or relative change below this
/// tolerance, whichever comes first.
pub const POWER_MAX_ROUNDS: usize = 50;
pub const POWER_REL_TOL: f64 = 1e-8;
/// Cached squared spectral norms are inflated by this factor so they stay
/// upper bounds despite the iteration stopping early.
pub const SPECTRAL_INFLATION: f64 = 1.001;

/// Largest eigenvalue of a symmetric positive semidefinite operator on
/// R^dim, by power iteration with a deterministic start vector.
pub fn power_iter_sym<T: Scalar, F>(dim: usize, apply: F) -> T
where
    F: FnMut(&[T], &mut [T]),
{
    power_iter_sym_with(dim, POWER_MAX_ROUNDS, POWER_REL_TOL, apply)
}

/// Power iteration with an explicit budget. Lipschitz estimation uses a much
/// deeper budget than the constraint-norm cache because its consumers demand
/// 1e-6 relative accuracy without an inflation factor.
pub fn power_iter_sym_with<T: Scalar, F>(
    dim: usize,
    max_rounds: usize,
    rel_tol: f64,
    mut apply: F,
) -> T
where
    F: FnMut(&[T], &mut [T]),
{
    if dim == 0 {
        return T::zero();
    }
    // Deterministic, mildly uneven start so it is not orthogonal to the top
    // eigenvector of structured matrices.
    let mut v: Vec<T> = (0..dim)
        .map(|j| T::cast(1.0 + 0.5 * ((j % 7) as f64) / 7.0))
        .collect();
    let nv = nrm2(&v);
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut av = vec![T::zero(); dim];
    let mut lambda = T::zero();
    for round in 0..max_rounds {
        for x in av.iter_mut() {
            *x = T::zero();
        }
        apply(&v, &mut av);
        let rayleigh = dot(&v, &av);
        let norm = nrm2(&av);
        if norm == T::zero() {
            return T::zero();
        }
        for (vi, ai) in v.iter_mut().zip(&av) {
            *vi = *ai / norm;
        }
        let prev = lambda;
        lambda = rayleigh.max(T::zero());
        if round > 0 && (lambda - prev).abs() <= T::cast(rel_tol) * lambda.max(T::one()) {
            break;
        }
    }
    lambda
}

/// Solve A x = b for dense square A by LU with partial pivoting.
/// Returns None when A is numerically singular.
pub fn solve_dense<T: Scalar>(a: &DenseMat<T>, b: &[T]) -> Option<Vec<T>> {
    assert_eq!(a.rows, a.cols, "solve_dense needs a square matrix");
    assert_eq!(b.len(), a.rows);
    let n = a.rows;
    let mut lu = a.data.clone();
    let mut x: Vec<T> = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut piv = k;
        let mut best = lu[perm[k] * n + k].abs();
        for r in (k + 1)..n {
            let v = lu[perm[r] * n + k].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == T::zero() {
            return None;
        }
        perm.swap(k, piv);
        let pk = perm[k];
        let diag = lu[pk * n + k];
        for r in (k + 1)..n {
            let pr = perm[r];
            let f = lu[pr * n + k] / diag;
            lu[pr * n + k] = f;
            for c in (k + 1)..n {
                let upd = lu[pk * n + c];
                lu[pr * n + c] = lu[pr * n + c] - f * upd;
            }
        }
    }
    // forward substitution on permuted rows
    let mut y = vec![T::zero(); n];
    for r in 0..n {
        let pr = perm[r];
        let mut acc = x[pr];
        for c in 0..r {
            acc -= lu[pr * n + c] * y[c];
        }
        y[r] = acc;
    }
    // back substitution
    for r in (0..n).rev() {
        let pr = perm[r];
        let mut acc = y[r];
        for c in (r + 1)..n {
            acc -= lu[pr * n + c] * x[c];
        }
        x[r] = acc / lu[pr * n + r];
    }
    Some(x)
}
