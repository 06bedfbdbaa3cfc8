//! Instance lab: reproducible generators for the three benchmark families,
//! a LIBSVM reader, and an independent reference solver.
//!
//! Every generator consumes its RNG in a documented, fixed order, so a
//! (family, dims, seed) triple pins the instance bit for bit across runs
//! and platforms.

pub mod libsvm;
pub mod reference;

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CscMat, DenseMat};
use crate::problem::{
    BlockMatrix, BlockPartition, ConstraintBlocks, Optimum, OracleForm, ProblemInstance, ProxTerm,
    SmoothOracle,
};
use crate::sampling::sample_block;
use crate::scalar::Scalar;
use crate::stepsize::estimate_lipschitz;

pub use libsvm::{parse_libsvm, read_libsvm, write_libsvm, SvmDataset};
pub use reference::{reference_solve, ReferenceSolution};

/// Box cap applied to the dual SVM family when none is configured.
pub const DEFAULT_SVM_CAP: f64 = 10.0;

/// Which benchmark family to generate, with its family-specific dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// min ||x||_1 s.t. Ax = b with a planted sparse signal.
    BasisPursuit { q: usize, n: usize, nnz: usize },
    /// Nonnegative QP with slack identity columns: A = [B, I].
    Ncqp { q_b: usize, n: usize },
    /// Box-constrained SVM dual built from a LIBSVM file.
    DualSvm { source: PathBuf },
}

/// Declarative recipe for one instance: family, seed, and block shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_width: Option<usize>,
    /// Box cap for the SVM dual; `None` means [`DEFAULT_SVM_CAP`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svm_cap: Option<f64>,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        match &self.family {
            Family::BasisPursuit { q, n, nnz } => {
                if *q == 0 || *n == 0 {
                    return Err(Error::Parameter("basis pursuit needs q >= 1 and n >= 1".into()));
                }
                if nnz > n {
                    return Err(Error::Parameter(format!(
                        "planted support {nnz} exceeds dimension {n}"
                    )));
                }
                if self.block_count.is_some() && self.block_width.is_some() {
                    return Err(Error::Parameter(
                        "set block_count or block_width, not both".into(),
                    ));
                }
                if let Some(w) = self.block_width {
                    if w == 0 || n % w != 0 {
                        return Err(Error::Parameter(format!(
                            "block_width {w} must divide n = {n}"
                        )));
                    }
                }
                if let Some(c) = self.block_count {
                    if c == 0 || n % c != 0 {
                        return Err(Error::Parameter(format!(
                            "block_count {c} must divide n = {n}"
                        )));
                    }
                }
                if self.svm_cap.is_some() {
                    return Err(Error::Parameter("svm_cap only applies to dual_svm".into()));
                }
            }
            Family::Ncqp { q_b, n } => {
                if *q_b == 0 {
                    return Err(Error::Parameter("ncqp needs q_b >= 1".into()));
                }
                if n <= q_b {
                    return Err(Error::Parameter(format!(
                        "ncqp needs n > q_b so slack columns fit, got n = {n}, q_b = {q_b}"
                    )));
                }
                if self.block_count.is_some() || self.block_width.is_some() {
                    return Err(Error::Parameter(
                        "ncqp always uses coordinate blocks; drop the block shape".into(),
                    ));
                }
                if self.svm_cap.is_some() {
                    return Err(Error::Parameter("svm_cap only applies to dual_svm".into()));
                }
            }
            Family::DualSvm { .. } => {
                if self.block_count.is_some() {
                    return Err(Error::Parameter(
                        "dual_svm blocks are sized by block_width, not block_count".into(),
                    ));
                }
                if self.block_width.map_or(true, |w| w == 0) {
                    return Err(Error::Parameter("dual_svm needs block_width >= 1".into()));
                }
                if let Some(cap) = self.svm_cap {
                    if !(cap > 0.0 && cap.is_finite()) {
                        return Err(Error::Parameter(format!(
                            "svm box cap must be positive and finite, got {cap}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn build<T: Scalar>(&self) -> Result<ProblemInstance<T>> {
        self.validate()?;
        match &self.family {
            Family::BasisPursuit { q, n, nnz } => {
                let block_count = match (self.block_count, self.block_width) {
                    (Some(c), None) => c,
                    (None, Some(w)) => n / w,
                    (None, None) => *n,
                    (Some(_), Some(_)) => unreachable!("rejected by validate"),
                };
                gen_basis_pursuit(*q, *n, *nnz, block_count, self.seed)
            }
            Family::Ncqp { q_b, n } => gen_ncqp(*q_b, *n, self.seed),
            Family::DualSvm { source } => {
                let data: SvmDataset<T> = read_libsvm(source)?;
                let cap = T::cast(self.svm_cap.unwrap_or(DEFAULT_SVM_CAP));
                gen_dual_svm(&data, cap, self.block_width.expect("validated"))
            }
        }
    }
}

/// Basis pursuit with a planted signal.
///
/// Draw order: (1) sensing matrix entries, row major, standard normal;
/// rows are then scaled to unit Euclidean norm. (2) support of the planted
/// signal by partial Fisher-Yates over 0..n. (3) support values, standard
/// normal, in draw order. The right-hand side is accumulated through the
/// same block-ordered apply that `residual` uses, so the planted point is
/// feasible to the last bit.
pub fn gen_basis_pursuit<T: Scalar>(
    q: usize,
    n: usize,
    nnz: usize,
    block_count: usize,
    seed: u64,
) -> Result<ProblemInstance<T>> {
    if q == 0 || n == 0 || block_count == 0 {
        return Err(Error::Parameter(
            "basis pursuit needs positive q, n, and block_count".into(),
        ));
    }
    if nnz > n {
        return Err(Error::Parameter(format!("planted support {nnz} exceeds dimension {n}")));
    }
    if n % block_count != 0 {
        return Err(Error::Parameter(format!("block_count {block_count} must divide n = {n}")));
    }
    let width = n / block_count;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut a = DenseMat::zeros(q, n);
    for r in 0..q {
        for v in a.row_mut(r) {
            *v = T::standard_normal(&mut rng);
        }
    }
    for r in 0..q {
        let row = a.row_mut(r);
        let norm = linalg::nrm2(row);
        if norm > T::zero() {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }

    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..nnz {
        let j = i + sample_block(&mut rng, n - i);
        idx.swap(i, j);
    }
    let mut x0 = vec![T::zero(); n];
    for s in idx.iter().take(nnz) {
        x0[*s] = T::standard_normal(&mut rng);
    }

    let partition = BlockPartition::uniform(block_count, width);
    let mut blocks = Vec::with_capacity(block_count);
    for i in 0..block_count {
        let mut data = Vec::with_capacity(q * width);
        for r in 0..q {
            data.extend_from_slice(&a.row(r)[i * width..(i + 1) * width]);
        }
        blocks.push(BlockMatrix::Dense(DenseMat::from_rows(q, width, data)?));
    }
    let mut constraint = ConstraintBlocks::new(blocks, vec![T::zero(); q])?;
    let mut b = vec![T::zero(); q];
    constraint.apply_add(&partition, &x0, &mut b);
    constraint.rhs = b;

    let optimum = if nnz == 0 {
        // b = 0, so the zero point is feasible and minimizes the l1 norm
        Some(Optimum {
            x: Some(vec![T::zero(); n]),
            f: Some(T::zero()),
            lambda: Some(vec![T::zero(); q]),
        })
    } else {
        None
    };

    let mut planted: Vec<(usize, f64)> =
        idx.iter().take(nnz).map(|s| (*s, x0[*s].as_f64())).collect();
    planted.sort_by_key(|p| p.0);
    let support: Vec<usize> = planted.iter().map(|p| p.0).collect();
    let values: Vec<f64> = planted.iter().map(|p| p.1).collect();

    let inst = ProblemInstance {
        partition,
        constraint,
        smooth: SmoothOracle::zero(block_count),
        prox_terms: vec![ProxTerm::L1 { weight: T::one() }; block_count],
        optimum,
        meta: Some(serde_json::json!({
            "family": "basis_pursuit",
            "q": q,
            "n": n,
            "nnz": nnz,
            "block_count": block_count,
            "seed": seed,
            "row_norm": "euclidean",
            "planted_support": support,
            "planted_values": values,
        })),
    };
    inst.validate()?;
    Ok(inst)
}

/// Nonnegative QP with slack identity columns: min 1/2 x'Qx + c'x over
/// x >= 0 subject to [B, I] x = b, with Q = HH' for a square normal H.
///
/// Draw order: (1) H entries, row major. (2) c entries. (3) B entries,
/// column major, one column per structural variable. (4) b entries,
/// uniform on [0, 1). Q is assembled exactly symmetric by mirroring the
/// upper triangle. Blocks are single coordinates.
pub fn gen_ncqp<T: Scalar>(q_b: usize, n: usize, seed: u64) -> Result<ProblemInstance<T>> {
    if q_b == 0 {
        return Err(Error::Parameter("ncqp needs q_b >= 1".into()));
    }
    if n <= q_b {
        return Err(Error::Parameter(format!(
            "ncqp needs n > q_b so slack columns fit, got n = {n}, q_b = {q_b}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut h = DenseMat::zeros(n, n);
    for r in 0..n {
        for v in h.row_mut(r) {
            *v = T::standard_normal(&mut rng);
        }
    }
    let mut qm = DenseMat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = linalg::dot(h.row(i), h.row(j));
            qm.data[i * n + j] = v;
            qm.data[j * n + i] = v;
        }
    }
    let c: Vec<T> = (0..n).map(|_| T::standard_normal(&mut rng)).collect();

    let structural = n - q_b;
    let mut blocks = Vec::with_capacity(n);
    for _ in 0..structural {
        let col: Vec<T> = (0..q_b).map(|_| T::standard_normal(&mut rng)).collect();
        blocks.push(BlockMatrix::Dense(DenseMat::from_rows(q_b, 1, col)?));
    }
    for r in 0..q_b {
        blocks.push(BlockMatrix::Sparse(CscMat::from_columns(q_b, vec![vec![(r, T::one())]])?));
    }
    let b: Vec<T> = (0..q_b).map(|_| T::unit_uniform(&mut rng)).collect();

    let partition = BlockPartition::uniform(n, 1);
    let constraint = ConstraintBlocks::new(blocks, b)?;
    let smooth =
        SmoothOracle::new(OracleForm::DenseQuadratic { q: qm, c }, vec![T::zero(); n], T::zero())?;
    let mut inst = ProblemInstance {
        partition,
        constraint,
        smooth,
        prox_terms: vec![ProxTerm::NonNeg; n],
        optimum: None,
        meta: Some(serde_json::json!({
            "family": "ncqp",
            "q_b": q_b,
            "n": n,
            "seed": seed,
        })),
    };
    let (lb, lc) = estimate_lipschitz(&inst);
    inst.smooth.lipschitz_blocks = lb;
    inst.smooth.lipschitz_cross = lc;
    inst.validate()?;
    Ok(inst)
}

/// SVM dual: min 1/2 ||W theta||^2 - e'theta over 0 <= theta <= cap
/// subject to y'theta = 0, where W = X diag(y) holds one scaled sample per
/// column. The Gram matrix W'W never materializes. Samples are grouped
/// into blocks of `block_width`, the last block absorbing the remainder.
pub fn gen_dual_svm<T: Scalar>(
    data: &SvmDataset<T>,
    cap: T,
    block_width: usize,
) -> Result<ProblemInstance<T>> {
    let nsamp = data.num_samples();
    if nsamp == 0 {
        return Err(Error::Parameter("dual_svm needs a nonempty dataset".into()));
    }
    if block_width == 0 {
        return Err(Error::Parameter("dual_svm needs block_width >= 1".into()));
    }
    if !(cap > T::zero()) || !cap.is_finite() {
        return Err(Error::Parameter(format!(
            "svm box cap must be positive and finite, got {cap}"
        )));
    }
    for (i, y) in data.labels.iter().enumerate() {
        if !(*y == T::one() || *y == -T::one()) {
            return Err(Error::Ingestion {
                line: i + 1,
                msg: format!("sample {}: label must be +1 or -1, got {y}", i + 1),
            });
        }
    }

    let cols: Vec<Vec<(usize, T)>> = data
        .samples
        .iter()
        .zip(&data.labels)
        .map(|(s, y)| s.iter().map(|(r, v)| (*r, *v * *y)).collect())
        .collect();
    let w = CscMat::from_columns(data.num_features, cols)?;
    let lin = vec![-T::one(); nsamp];

    let m = (nsamp / block_width).max(1);
    let mut starts: Vec<usize> = (0..m).map(|i| i * block_width).collect();
    starts.push(nsamp);
    let partition = BlockPartition::from_starts(starts)?;

    let mut blocks = Vec::with_capacity(m);
    for i in 0..m {
        let range = partition.block_range(i);
        blocks.push(BlockMatrix::Dense(DenseMat::from_rows(
            1,
            range.len(),
            data.labels[range].to_vec(),
        )?));
    }
    let constraint = ConstraintBlocks::new(blocks, vec![T::zero()])?;
    let smooth =
        SmoothOracle::new(OracleForm::GramQuadratic { w, lin }, vec![T::zero(); m], T::zero())?;
    let mut inst = ProblemInstance {
        partition,
        constraint,
        smooth,
        prox_terms: vec![ProxTerm::Box { lo: T::zero(), hi: cap }; m],
        optimum: None,
        meta: Some(serde_json::json!({
            "family": "dual_svm",
            "samples": nsamp,
            "features": data.num_features,
            "box_cap": cap.as_f64(),
            "block_width": block_width,
            "block_count": m,
        })),
    };
    let (lb, lc) = estimate_lipschitz(&inst);
    inst.smooth.lipschitz_blocks = lb;
    inst.smooth.lipschitz_cross = lc;
    inst.validate()?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rebuild_planted(inst: &ProblemInstance<f64>) -> Vec<f64> {
        let meta = inst.meta.as_ref().unwrap();
        let support = meta["planted_support"].as_array().unwrap();
        let values = meta["planted_values"].as_array().unwrap();
        let mut x0 = vec![0.0; inst.dim()];
        for (s, v) in support.iter().zip(values) {
            x0[s.as_u64().unwrap() as usize] = v.as_f64().unwrap();
        }
        x0
    }

    #[test]
    fn bp_unit_rows_and_exact_planted_feasibility() {
        let inst: ProblemInstance<f64> = gen_basis_pursuit(8, 24, 5, 6, 7).unwrap();
        assert_eq!(inst.block_count(), 6);
        assert_eq!(inst.dim(), 24);
        assert_eq!(inst.num_rows(), 8);
        assert!(matches!(inst.smooth.form, OracleForm::Zero));
        assert!(inst
            .prox_terms
            .iter()
            .all(|t| matches!(t, ProxTerm::L1 { weight } if *weight == 1.0)));

        // rows of the stacked sensing matrix have unit Euclidean norm
        for r in 0..8 {
            let mut sq = 0.0;
            for blk in &inst.constraint.blocks {
                let BlockMatrix::Dense(mat) = blk else { panic!("bp blocks are dense") };
                sq += linalg::nrm2_sq(mat.row(r));
            }
            assert!((sq - 1.0).abs() < 1e-12);
        }

        // the planted signal is feasible to the last bit
        let x0 = rebuild_planted(&inst);
        assert_eq!(x0.iter().filter(|v| **v != 0.0).count(), 5);
        for c in inst.residual(&x0) {
            assert_eq!(c, 0.0);
        }
    }

    #[test]
    fn bp_empty_support_ships_trivial_optimum() {
        let inst: ProblemInstance<f64> = gen_basis_pursuit(4, 12, 0, 3, 1).unwrap();
        assert!(inst.constraint.rhs.iter().all(|v| *v == 0.0));
        let opt = inst.optimum.as_ref().unwrap();
        assert_eq!(opt.f, Some(0.0));
        assert!(opt.x.as_ref().unwrap().iter().all(|v| *v == 0.0));
        assert!(opt.lambda.as_ref().unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bp_is_deterministic_per_seed() {
        let a: ProblemInstance<f64> = gen_basis_pursuit(6, 20, 4, 5, 42).unwrap();
        let b: ProblemInstance<f64> = gen_basis_pursuit(6, 20, 4, 5, 42).unwrap();
        assert_eq!(a, b);
        let c: ProblemInstance<f64> = gen_basis_pursuit(6, 20, 4, 5, 43).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn bp_rejects_bad_shapes() {
        assert!(gen_basis_pursuit::<f64>(4, 10, 11, 2, 0).is_err());
        assert!(gen_basis_pursuit::<f64>(4, 10, 2, 3, 0).is_err());
        assert!(gen_basis_pursuit::<f64>(0, 10, 2, 2, 0).is_err());
    }

    #[test]
    fn ncqp_structure_and_slack_feasibility() {
        let inst: ProblemInstance<f64> = gen_ncqp(3, 9, 11).unwrap();
        assert_eq!(inst.block_count(), 9);
        assert!(inst.prox_terms.iter().all(|t| matches!(t, ProxTerm::NonNeg)));
        let OracleForm::DenseQuadratic { q, .. } = &inst.smooth.form else {
            panic!("ncqp is a dense quadratic");
        };
        for i in 0..9 {
            for j in 0..9 {
                assert_eq!(q.data[i * 9 + j], q.data[j * 9 + i]);
            }
            // coordinate blocks make L_i the diagonal entry
            let qii = q.data[i * 9 + i];
            assert!((inst.smooth.lipschitz_blocks[i] - qii).abs() <= 1e-12 * qii.abs());
        }
        // x = (0, .., 0, b) rides the slack identity exactly
        let mut x = vec![0.0; 9];
        x[6..9].copy_from_slice(&inst.constraint.rhs);
        for c in inst.residual(&x) {
            assert_eq!(c, 0.0);
        }
        assert!(inst.constraint.rhs.iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn ncqp_rejects_slim_shapes() {
        assert!(gen_ncqp::<f64>(5, 5, 0).is_err());
        assert!(gen_ncqp::<f64>(0, 3, 0).is_err());
    }

    fn toy_svm() -> SvmDataset<f64> {
        SvmDataset {
            labels: vec![1.0, -1.0, 1.0, -1.0, 1.0],
            samples: vec![
                vec![(0, 1.0), (2, 0.5)],
                vec![(1, -1.0)],
                vec![(0, 0.25), (1, 2.0)],
                vec![(2, -0.75)],
                vec![(1, 0.5), (2, 1.0)],
            ],
            num_features: 3,
        }
    }

    #[test]
    fn svm_dual_shape_and_objective() {
        let inst = gen_dual_svm(&toy_svm(), 10.0, 2).unwrap();
        // 5 samples at width 2: blocks [0,2), [2,5) with the tail absorbed
        assert_eq!(inst.block_count(), 2);
        assert_eq!(inst.partition.starts, vec![0, 2, 5]);
        assert_eq!(inst.num_rows(), 1);
        assert_eq!(inst.constraint.rhs, vec![0.0]);
        assert!(inst
            .prox_terms
            .iter()
            .all(|t| matches!(t, ProxTerm::Box { lo, hi } if *lo == 0.0 && *hi == 10.0)));

        // constraint row is y', so y'theta at theta = e is sum of labels
        let theta = vec![1.0; 5];
        assert_eq!(inst.residual(&theta), vec![1.0]);

        // f(theta) = 1/2 ||sum_i y_i x_i theta_i||^2 - sum theta
        let mut wx = vec![0.0; 3];
        let data = toy_svm();
        for i in 0..5 {
            for (r, v) in &data.samples[i] {
                wx[*r] += data.labels[i] * *v * theta[i];
            }
        }
        let expect = 0.5 * linalg::nrm2_sq(&wx) - 5.0;
        assert!((inst.objective(&theta) - expect).abs() < 1e-12);
    }

    #[test]
    fn svm_rejects_bad_labels_and_shapes() {
        let mut bad = toy_svm();
        bad.labels[2] = 0.0;
        match gen_dual_svm(&bad, 10.0, 2) {
            Err(Error::Ingestion { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(gen_dual_svm(&toy_svm(), 0.0, 2).is_err());
        assert!(gen_dual_svm(&toy_svm(), 10.0, 0).is_err());
        let empty = SvmDataset::<f64> { labels: vec![], samples: vec![], num_features: 0 };
        assert!(gen_dual_svm(&empty, 10.0, 2).is_err());
    }

    #[test]
    fn svm_wide_block_folds_to_one() {
        let inst = gen_dual_svm(&toy_svm(), 1.0, 50).unwrap();
        assert_eq!(inst.block_count(), 1);
        assert_eq!(inst.partition.starts, vec![0, 5]);
    }

    #[test]
    fn spec_dispatch_and_validation() {
        let spec = GeneratorSpec {
            family: Family::BasisPursuit { q: 4, n: 12, nnz: 2 },
            seed: 5,
            block_count: Some(3),
            block_width: None,
            svm_cap: None,
        };
        let inst: ProblemInstance<f64> = spec.build().unwrap();
        assert_eq!(inst.block_count(), 3);
        assert_eq!(inst, gen_basis_pursuit(4, 12, 2, 3, 5).unwrap());

        // width route resolves to n / width blocks
        let by_width = GeneratorSpec { block_count: None, block_width: Some(4), ..spec.clone() };
        let inst: ProblemInstance<f64> = by_width.build().unwrap();
        assert_eq!(inst.block_count(), 3);

        // defaults to coordinate blocks
        let bare = GeneratorSpec { block_count: None, ..spec.clone() };
        let inst: ProblemInstance<f64> = bare.build().unwrap();
        assert_eq!(inst.block_count(), 12);

        let both = GeneratorSpec { block_width: Some(4), ..spec.clone() };
        assert!(both.validate().is_err());

        let ncqp = GeneratorSpec {
            family: Family::Ncqp { q_b: 2, n: 6 },
            seed: 0,
            block_count: None,
            block_width: None,
            svm_cap: None,
        };
        ncqp.validate().unwrap();
        assert!(GeneratorSpec { block_count: Some(3), ..ncqp.clone() }.validate().is_err());
        assert!(GeneratorSpec { svm_cap: Some(5.0), ..ncqp.clone() }.validate().is_err());

        let svm = GeneratorSpec {
            family: Family::DualSvm { source: "nowhere.libsvm".into() },
            seed: 0,
            block_count: None,
            block_width: None,
            svm_cap: None,
        };
        // width is mandatory for the svm family
        assert!(svm.validate().is_err());
        assert!(GeneratorSpec { block_width: Some(2), ..svm.clone() }.validate().unwrap() == ());
        assert!(GeneratorSpec { block_width: Some(2), svm_cap: Some(-1.0), ..svm.clone() }
            .validate()
            .is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = GeneratorSpec {
            family: Family::Ncqp { q_b: 20, n: 120 },
            seed: 9,
            block_count: None,
            block_width: None,
            svm_cap: None,
        };
        let text = serde_json::to_string(&spec).unwrap();
        let back: GeneratorSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }
}
