//! Problem model: a block-separable objective `f(x) + sum_i g_i(x_i)` over a
//! partitioned variable, coupled by affine constraints `sum_i A_i x_i = b`.
//!
//! The smooth part is a closed set of forms (zero, explicit dense quadratic,
//! implicit Gram quadratic) so gradients and objective values stay exact and
//! cheap to audit. Per-block squared spectral norms of the constraint blocks
//! are estimated once at construction and cached, since every stepsize plan
//! consumes them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CscMat, DenseMat, SPECTRAL_INFLATION};
use crate::scalar::Scalar;

/// Contiguous partition of `0..total_dim` into blocks. `starts` has one
/// entry per block plus a trailing `total_dim`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub total_dim: usize,
    pub starts: Vec<usize>,
}

impl BlockPartition {
    pub fn uniform(block_count: usize, block_dim: usize) -> Self {
        let starts = (0..=block_count).map(|i| i * block_dim).collect();
        BlockPartition { total_dim: block_count * block_dim, starts }
    }

    pub fn from_starts(starts: Vec<usize>) -> Result<Self> {
        if starts.len() < 2 || starts[0] != 0 {
            return Err(Error::Structural(
                "partition needs starts [0, ..., total_dim] with at least one block".into(),
            ));
        }
        for w in starts.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Structural(format!(
                    "partition starts must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let total_dim = *starts.last().unwrap();
        Ok(BlockPartition { total_dim, starts })
    }

    #[inline]
    pub fn block_count(&self) -> usize {
        self.starts.len() - 1
    }

    #[inline]
    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        self.starts[i]..self.starts[i + 1]
    }

    #[inline]
    pub fn block_dim(&self, i: usize) -> usize {
        self.starts[i + 1] - self.starts[i]
    }
}

/// One constraint block `A_i`, either dense or column-compressed sparse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BlockMatrix<T> {
    Dense(DenseMat<T>),
    Sparse(CscMat<T>),
}

impl<T: Scalar> BlockMatrix<T> {
    pub fn rows(&self) -> usize {
        match self {
            BlockMatrix::Dense(m) => m.rows,
            BlockMatrix::Sparse(m) => m.rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            BlockMatrix::Dense(m) => m.cols,
            BlockMatrix::Sparse(m) => m.cols,
        }
    }

    /// out += A_i x
    pub fn matvec_add(&self, x: &[T], out: &mut [T]) {
        match self {
            BlockMatrix::Dense(m) => m.matvec_add(x, out),
            BlockMatrix::Sparse(m) => m.matvec_add(x, out),
        }
    }

    /// out = A_i^T v
    pub fn tr_matvec_into(&self, v: &[T], out: &mut [T]) {
        match self {
            BlockMatrix::Dense(m) => m.tr_matvec_into(v, out),
            BlockMatrix::Sparse(m) => m.tr_matvec_into(v, out),
        }
    }

    /// Upper bound on ||A_i||^2 (largest eigenvalue of A_i^T A_i), by power
    /// iteration inflated by a fixed safety factor.
    pub fn sq_norm_estimate(&self) -> T {
        let n = self.cols();
        let q = self.rows();
        let mut tmp = vec![T::zero(); q];
        let raw = linalg::power_iter_sym(n, |v, out| {
            for t in tmp.iter_mut() {
                *t = T::zero();
            }
            self.matvec_add(v, &mut tmp);
            let mut back = vec![T::zero(); n];
            self.tr_matvec_into(&tmp, &mut back);
            for (o, b) in out.iter_mut().zip(&back) {
                *o += *b;
            }
        });
        raw * T::cast(SPECTRAL_INFLATION)
    }
}

/// The coupling constraint `sum_i A_i x_i = b` stored block by block, with
/// cached squared spectral norms per block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintBlocks<T> {
    pub blocks: Vec<BlockMatrix<T>>,
    pub rhs: Vec<T>,
    pub per_block_sq_norm: Vec<T>,
}

impl<T: Scalar> ConstraintBlocks<T> {
    pub fn new(blocks: Vec<BlockMatrix<T>>, rhs: Vec<T>) -> Result<Self> {
        let q = rhs.len();
        for (i, b) in blocks.iter().enumerate() {
            if b.rows() != q {
                return Err(Error::Structural(format!(
                    "constraint block {i} has {} rows, rhs has {q}",
                    b.rows()
                )));
            }
        }
        let per_block_sq_norm = blocks.iter().map(|b| b.sq_norm_estimate()).collect();
        Ok(ConstraintBlocks { blocks, rhs, per_block_sq_norm })
    }

    #[inline]
    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    /// out += A x, looping blocks in index order.
    pub fn apply_add(&self, partition: &BlockPartition, x: &[T], out: &mut [T]) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.matvec_add(&x[partition.block_range(i)], out);
        }
    }

    /// out = A^T v
    pub fn tr_apply_into(&self, partition: &BlockPartition, v: &[T], out: &mut [T]) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.tr_matvec_into(v, &mut out[partition.block_range(i)]);
        }
    }

    /// Upper bound on ||A||^2 for the full stacked operator.
    pub fn full_sq_norm_estimate(&self, partition: &BlockPartition) -> T {
        let n = partition.total_dim;
        let q = self.num_rows();
        let mut tmp = vec![T::zero(); q];
        let raw = linalg::power_iter_sym(n, |v, out| {
            for t in tmp.iter_mut() {
                *t = T::zero();
            }
            self.apply_add(partition, v, &mut tmp);
            let mut back = vec![T::zero(); n];
            self.tr_apply_into(partition, &tmp, &mut back);
            for (o, b) in out.iter_mut().zip(&back) {
                *o += *b;
            }
        });
        raw * T::cast(SPECTRAL_INFLATION)
    }
}

/// Shape of the smooth objective term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OracleForm<T> {
    /// f = 0
    Zero,
    /// f(x) = 1/2 x^T Q x + c^T x with symmetric Q
    DenseQuadratic { q: DenseMat<T>, c: Vec<T> },
    /// f(x) = 1/2 ||W x||^2 + lin^T x, with W stored explicitly so the Gram
    /// matrix W^T W never materializes
    GramQuadratic { w: CscMat<T>, lin: Vec<T> },
}

/// Smooth part of the objective together with the Lipschitz data every
/// stepsize plan needs: per-block gradient constants and the cross-block
/// constant of the full gradient map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothOracle<T> {
    pub form: OracleForm<T>,
    pub lipschitz_blocks: Vec<T>,
    pub lipschitz_cross: T,
}

impl<T: Scalar> SmoothOracle<T> {
    pub fn zero(block_count: usize) -> Self {
        SmoothOracle {
            form: OracleForm::Zero,
            lipschitz_blocks: vec![T::zero(); block_count],
            lipschitz_cross: T::zero(),
        }
    }

    pub fn new(form: OracleForm<T>, lipschitz_blocks: Vec<T>, lipschitz_cross: T) -> Result<Self> {
        if lipschitz_cross < T::zero() || lipschitz_blocks.iter().any(|l| *l < T::zero()) {
            return Err(Error::Parameter("Lipschitz constants must be nonnegative".into()));
        }
        Ok(SmoothOracle { form, lipschitz_blocks, lipschitz_cross })
    }

    pub fn value(&self, x: &[T]) -> T {
        match &self.form {
            OracleForm::Zero => T::zero(),
            OracleForm::DenseQuadratic { q, c } => {
                let mut qx = vec![T::zero(); x.len()];
                q.matvec_add(x, &mut qx);
                T::cast(0.5) * linalg::dot(x, &qx) + linalg::dot(c, x)
            }
            OracleForm::GramQuadratic { w, lin } => {
                let mut wx = vec![T::zero(); w.rows];
                w.matvec_add(x, &mut wx);
                T::cast(0.5) * linalg::nrm2_sq(&wx) + linalg::dot(lin, x)
            }
        }
    }

    /// out = gradient of f restricted to block `i`, evaluated at the full
    /// point `x`.
    pub fn block_grad_at(&self, partition: &BlockPartition, x: &[T], i: usize, out: &mut [T]) {
        let range = partition.block_range(i);
        debug_assert_eq!(out.len(), range.len());
        match &self.form {
            OracleForm::Zero => {
                for o in out.iter_mut() {
                    *o = T::zero();
                }
            }
            OracleForm::DenseQuadratic { q, c } => {
                for (o, r) in out.iter_mut().zip(range.clone()) {
                    *o = linalg::dot(q.row(r), x) + c[r];
                }
            }
            OracleForm::GramQuadratic { w, lin } => {
                let mut wx = vec![T::zero(); w.rows];
                w.matvec_add(x, &mut wx);
                for (o, cidx) in out.iter_mut().zip(range.clone()) {
                    let (ri, vs) = w.col(cidx);
                    let mut acc = T::zero();
                    for (r, v) in ri.iter().zip(vs) {
                        acc += *v * wx[*r];
                    }
                    *o = acc + lin[cidx];
                }
            }
        }
    }

    /// out = full gradient of f at x (overwrites).
    pub fn grad_into(&self, x: &[T], out: &mut [T]) {
        match &self.form {
            OracleForm::Zero => {
                for o in out.iter_mut() {
                    *o = T::zero();
                }
            }
            OracleForm::DenseQuadratic { q, c } => {
                for (r, o) in out.iter_mut().enumerate() {
                    *o = linalg::dot(q.row(r), x) + c[r];
                }
            }
            OracleForm::GramQuadratic { w, lin } => {
                let mut wx = vec![T::zero(); w.rows];
                w.matvec_add(x, &mut wx);
                w.tr_matvec_into(&wx, out);
                for (o, l) in out.iter_mut().zip(lin) {
                    *o += *l;
                }
            }
        }
    }
}

/// Per-block nonsmooth term `g_i`. Box and NonNeg are indicator functions:
/// they steer the prox step and contribute zero to reported objective
/// values, since iterates stay feasible by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ProxTerm<T> {
    Zero,
    L1 { weight: T },
    Box { lo: T, hi: T },
    NonNeg,
}

impl<T: Scalar> ProxTerm<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            ProxTerm::L1 { weight } if *weight < T::zero() => {
                Err(Error::Parameter("L1 weight must be nonnegative".into()))
            }
            ProxTerm::Box { lo, hi } if !(lo < hi) => {
                Err(Error::Parameter("box bounds need lo < hi".into()))
            }
            _ => Ok(()),
        }
    }

    /// Penalty value. Indicators report zero inside their set and the
    /// +infinity marker outside it. A hair of relative slack keeps points
    /// that are feasible up to float roundoff (ergodic averages of clamped
    /// iterates) from flipping the objective to infinity.
    pub fn value(&self, x: &[T]) -> T {
        match self {
            ProxTerm::L1 { weight } => {
                let mut acc = T::zero();
                for v in x {
                    acc += v.abs();
                }
                *weight * acc
            }
            ProxTerm::Box { lo, hi } => {
                let tol = T::cast(1e-9) * (T::one() + lo.abs() + hi.abs());
                if self.feasible(x, tol) {
                    T::zero()
                } else {
                    T::infinity()
                }
            }
            ProxTerm::NonNeg => {
                if self.feasible(x, T::cast(1e-9)) {
                    T::zero()
                } else {
                    T::infinity()
                }
            }
            ProxTerm::Zero => T::zero(),
        }
    }

    /// Whether x satisfies the indicator constraint to within `tol`.
    pub fn feasible(&self, x: &[T], tol: T) -> bool {
        match self {
            ProxTerm::Box { lo, hi } => x.iter().all(|v| *v >= *lo - tol && *v <= *hi + tol),
            ProxTerm::NonNeg => x.iter().all(|v| *v >= -tol),
            _ => true,
        }
    }
}

/// Known optimum data attached to generated instances when available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum<T> {
    pub x: Option<Vec<T>>,
    pub f: Option<T>,
    pub lambda: Option<Vec<T>>,
}

/// A fully specified instance. `meta` carries generator provenance for
/// bookkeeping and is ignored by the solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance<T> {
    pub partition: BlockPartition,
    pub constraint: ConstraintBlocks<T>,
    pub smooth: SmoothOracle<T>,
    pub prox_terms: Vec<ProxTerm<T>>,
    pub optimum: Option<Optimum<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
}

impl<T: Scalar> ProblemInstance<T> {
    pub fn validate(&self) -> Result<()> {
        let m = self.partition.block_count();
        if self.partition.starts.last() != Some(&self.partition.total_dim) {
            return Err(Error::Structural("partition starts do not end at total_dim".into()));
        }
        if self.constraint.blocks.len() != m {
            return Err(Error::Structural(format!(
                "{} constraint blocks for {m} partition blocks",
                self.constraint.blocks.len()
            )));
        }
        let q = self.constraint.num_rows();
        for (i, b) in self.constraint.blocks.iter().enumerate() {
            if b.rows() != q {
                return Err(Error::Structural(format!("constraint block {i} row mismatch")));
            }
            if b.cols() != self.partition.block_dim(i) {
                return Err(Error::Structural(format!(
                    "constraint block {i} has {} cols, partition block has {}",
                    b.cols(),
                    self.partition.block_dim(i)
                )));
            }
        }
        if self.constraint.per_block_sq_norm.len() != m {
            return Err(Error::Structural("per-block norm cache length mismatch".into()));
        }
        if self.constraint.per_block_sq_norm.iter().any(|v| !(*v >= T::zero())) {
            return Err(Error::Structural("per-block norm cache has negative entries".into()));
        }
        if self.smooth.lipschitz_blocks.len() != m {
            return Err(Error::Structural(format!(
                "{} block Lipschitz constants for {m} blocks",
                self.smooth.lipschitz_blocks.len()
            )));
        }
        if self.smooth.lipschitz_cross < T::zero()
            || self.smooth.lipschitz_blocks.iter().any(|l| *l < T::zero())
        {
            return Err(Error::Parameter("Lipschitz constants must be nonnegative".into()));
        }
        let n = self.partition.total_dim;
        match &self.smooth.form {
            OracleForm::Zero => {}
            OracleForm::DenseQuadratic { q: qm, c } => {
                if qm.rows != n || qm.cols != n || c.len() != n {
                    return Err(Error::Structural("dense quadratic dimension mismatch".into()));
                }
            }
            OracleForm::GramQuadratic { w, lin } => {
                if w.cols != n || lin.len() != n {
                    return Err(Error::Structural("Gram quadratic dimension mismatch".into()));
                }
            }
        }
        if self.prox_terms.len() != m {
            return Err(Error::Structural(format!(
                "{} prox terms for {m} blocks",
                self.prox_terms.len()
            )));
        }
        for t in &self.prox_terms {
            t.validate()?;
        }
        if let Some(opt) = &self.optimum {
            if let Some(x) = &opt.x {
                if x.len() != n {
                    return Err(Error::Structural("optimum x dimension mismatch".into()));
                }
            }
            if let Some(l) = &opt.lambda {
                if l.len() != q {
                    return Err(Error::Structural("optimum lambda dimension mismatch".into()));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn block_count(&self) -> usize {
        self.partition.block_count()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.partition.total_dim
    }

    #[inline]
    pub fn num_rows(&self) -> usize {
        self.constraint.num_rows()
    }

    /// A x - b, accumulated block by block in index order.
    pub fn residual(&self, x: &[T]) -> Vec<T> {
        let mut r = vec![T::zero(); self.num_rows()];
        self.constraint.apply_add(&self.partition, x, &mut r);
        for (ri, bi) in r.iter_mut().zip(&self.constraint.rhs) {
            *ri -= *bi;
        }
        r
    }

    /// f(x) + sum_i g_i(x_i); a violated indicator makes this +infinity.
    pub fn objective(&self, x: &[T]) -> T {
        let mut v = self.smooth.value(x);
        for (i, t) in self.prox_terms.iter().enumerate() {
            v += t.value(&x[self.partition.block_range(i)]);
        }
        v
    }

    pub fn block_grad_at(&self, x: &[T], i: usize, out: &mut [T]) {
        self.smooth.block_grad_at(&self.partition, x, i, out);
    }

    /// Order-independent structural hash of the instance (FNV-1a over a
    /// fixed serialization of dimensions and coefficient bits), echoed into
    /// trace files so runs can be matched to the instance that produced
    /// them.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.eat_usize(self.partition.total_dim);
        for s in &self.partition.starts {
            h.eat_usize(*s);
        }
        for b in &self.constraint.blocks {
            match b {
                BlockMatrix::Dense(m) => {
                    h.eat_u8(1);
                    h.eat_usize(m.rows);
                    h.eat_usize(m.cols);
                    for v in &m.data {
                        h.eat_f64(v.as_f64());
                    }
                }
                BlockMatrix::Sparse(m) => {
                    h.eat_u8(2);
                    h.eat_usize(m.rows);
                    h.eat_usize(m.cols);
                    for p in &m.colptr {
                        h.eat_usize(*p);
                    }
                    for r in &m.rowidx {
                        h.eat_usize(*r);
                    }
                    for v in &m.vals {
                        h.eat_f64(v.as_f64());
                    }
                }
            }
        }
        for v in &self.constraint.rhs {
            h.eat_f64(v.as_f64());
        }
        match &self.smooth.form {
            OracleForm::Zero => h.eat_u8(10),
            OracleForm::DenseQuadratic { q, c } => {
                h.eat_u8(11);
                h.eat_usize(q.rows);
                for v in &q.data {
                    h.eat_f64(v.as_f64());
                }
                for v in c {
                    h.eat_f64(v.as_f64());
                }
            }
            OracleForm::GramQuadratic { w, lin } => {
                h.eat_u8(12);
                h.eat_usize(w.rows);
                h.eat_usize(w.cols);
                for p in &w.colptr {
                    h.eat_usize(*p);
                }
                for r in &w.rowidx {
                    h.eat_usize(*r);
                }
                for v in &w.vals {
                    h.eat_f64(v.as_f64());
                }
                for v in lin {
                    h.eat_f64(v.as_f64());
                }
            }
        }
        for l in &self.smooth.lipschitz_blocks {
            h.eat_f64(l.as_f64());
        }
        h.eat_f64(self.smooth.lipschitz_cross.as_f64());
        for t in &self.prox_terms {
            match t {
                ProxTerm::Zero => h.eat_u8(20),
                ProxTerm::L1 { weight } => {
                    h.eat_u8(21);
                    h.eat_f64(weight.as_f64());
                }
                ProxTerm::Box { lo, hi } => {
                    h.eat_u8(22);
                    h.eat_f64(lo.as_f64());
                    h.eat_f64(hi.as_f64());
                }
                ProxTerm::NonNeg => h.eat_u8(23),
            }
        }
        h.finish()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let inst: ProblemInstance<T> =
            serde_json::from_reader(std::io::BufReader::new(file))?;
        inst.validate()?;
        Ok(inst)
    }
}

struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf29ce484222325)
    }

    fn eat_u8(&mut self, b: u8) {
        self.0 ^= b as u64;
        self.0 = self.0.wrapping_mul(0x100000001b3);
    }

    fn eat_usize(&mut self, v: usize) {
        for b in (v as u64).to_le_bytes() {
            self.eat_u8(b);
        }
    }

    fn eat_f64(&mut self, v: f64) {
        for b in v.to_bits().to_le_bytes() {
            self.eat_u8(b);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_instance() -> ProblemInstance<f64> {
        // two 1-d blocks, constraint x1 + x2 = 1, f = 0, g = |.|
        let partition = BlockPartition::uniform(2, 1);
        let blocks = vec![
            BlockMatrix::Dense(DenseMat::from_rows(1, 1, vec![1.0]).unwrap()),
            BlockMatrix::Dense(DenseMat::from_rows(1, 1, vec![1.0]).unwrap()),
        ];
        let constraint = ConstraintBlocks::new(blocks, vec![1.0]).unwrap();
        ProblemInstance {
            partition,
            constraint,
            smooth: SmoothOracle::zero(2),
            prox_terms: vec![ProxTerm::L1 { weight: 1.0 }, ProxTerm::L1 { weight: 1.0 }],
            optimum: None,
            meta: None,
        }
    }

    #[test]
    fn validates_and_reports_residual() {
        let inst = tiny_instance();
        inst.validate().unwrap();
        let r = inst.residual(&[0.25, 0.5]);
        assert_eq!(r, vec![-0.25]);
        assert_eq!(inst.objective(&[3.0, -0.5]), 3.5);
    }

    #[test]
    fn violated_indicator_marks_objective_infinite() {
        let mut inst = tiny_instance();
        inst.prox_terms = vec![ProxTerm::NonNeg, ProxTerm::NonNeg];
        assert_eq!(inst.objective(&[0.5, 0.5]), 0.0);
        assert!(inst.objective(&[0.5, -0.5]).is_infinite());
        // roundoff-scale undershoot stays finite
        assert_eq!(inst.objective(&[0.5, -1e-12]), 0.0);
        let boxed: ProxTerm<f64> = ProxTerm::Box { lo: 0.0, hi: 10.0 };
        assert!(boxed.value(&[-1.0, 4.0]).is_infinite());
        assert!(boxed.value(&[1.0, 12.0]).is_infinite());
        assert_eq!(boxed.value(&[0.0, 10.0]), 0.0);
    }

    #[test]
    fn dense_quadratic_gradient_blocks_match_full() {
        let partition = BlockPartition::from_starts(vec![0, 2, 3]).unwrap();
        let q = DenseMat::from_rows(
            3,
            3,
            vec![2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0],
        )
        .unwrap();
        let c = vec![0.1, -0.2, 0.3];
        let smooth = SmoothOracle::new(
            OracleForm::DenseQuadratic { q, c },
            vec![3.5, 1.0],
            4.0,
        )
        .unwrap();
        let x = [1.0, -1.0, 2.0];
        let mut full = vec![0.0; 3];
        smooth.grad_into(&x, &mut full);
        let mut b0 = vec![0.0; 2];
        smooth.block_grad_at(&partition, &x, 0, &mut b0);
        let mut b1 = vec![0.0; 1];
        smooth.block_grad_at(&partition, &x, 1, &mut b1);
        assert_eq!(&full[0..2], &b0[..]);
        assert_eq!(&full[2..3], &b1[..]);
    }

    #[test]
    fn gram_quadratic_matches_dense_expansion() {
        // W = [[1, 2], [0, 1]] as CSC
        let w = CscMat::from_columns(2, vec![vec![(0, 1.0)], vec![(0, 2.0), (1, 1.0)]]).unwrap();
        let lin = vec![-1.0, -1.0];
        let smooth: SmoothOracle<f64> =
            SmoothOracle::new(OracleForm::GramQuadratic { w, lin }, vec![1.0, 5.0], 6.0).unwrap();
        let x = [0.5, -0.25];
        // Wx = [0, -0.25]; f = 0.5 * 0.0625 - 0.25 = -0.21875
        assert!((smooth.value(&x) - (-0.21875)).abs() < 1e-15);
        let mut g = vec![0.0; 2];
        smooth.grad_into(&x, &mut g);
        // W^T W = [[1,2],[2,5]]; grad = [1*0.5+2*(-0.25)-1, 2*0.5+5*(-0.25)-1]
        assert!((g[0] - (-1.0)).abs() < 1e-15);
        assert!((g[1] - (-1.25)).abs() < 1e-15);
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a = tiny_instance();
        let b = tiny_instance();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let mut c = tiny_instance();
        c.constraint.rhs[0] = 2.0;
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn save_load_roundtrip_exact() {
        let inst = tiny_instance();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inst.json");
        inst.save(&path).unwrap();
        let back: ProblemInstance<f64> = ProblemInstance::load(&path).unwrap();
        assert_eq!(inst, back);
        assert_eq!(inst.fingerprint(), back.fingerprint());
    }

    #[test]
    fn validate_rejects_mismatches() {
        let mut inst = tiny_instance();
        inst.prox_terms.pop();
        assert!(inst.validate().is_err());
        let mut inst = tiny_instance();
        inst.smooth.lipschitz_blocks = vec![1.0];
        assert!(inst.validate().is_err());
        let mut inst = tiny_instance();
        inst.prox_terms[0] = ProxTerm::Box { lo: 1.0, hi: 1.0 };
        assert!(inst.validate().is_err());
    }
}
