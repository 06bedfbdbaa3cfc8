//! Shared numerical oracles for integration tests: a cyclic Jacobi
//! eigensolver, central finite differences, 1-D ternary search, and tiny
//! instance builders. Everything here is deliberately independent of the
//! crate's own linear algebra hot paths.
#![allow(dead_code)]

use bcu::linalg::DenseMat;
use bcu::{
    BlockMatrix, BlockPartition, ConstraintBlocks, OracleForm, ProblemInstance, ProxTerm,
    SmoothOracle, SvmDataset,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations,
/// ascending. O(n^3) per sweep; plenty for desk-scale oracles.
pub fn jacobi_eigenvalues(a: &DenseMat<f64>) -> Vec<f64> {
    let n = a.rows;
    assert_eq!(a.rows, a.cols);
    let mut m = a.data.clone();
    let scale: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    for _sweep in 0..200 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).unwrap());
    eig
}

/// Central finite-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Minimizer of a strictly unimodal function on [lo, hi] by ternary search.
pub fn ternary_min(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    assert!(lo <= hi);
    for _ in 0..300 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    0.5 * (lo + hi)
}

/// Row-major random normal matrix as a flat vector.
pub fn random_dense(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    (0..rows * cols).map(|_| normal(rng)).collect()
}

/// r = A x - b computed with plain row dot products (the oracle side).
pub fn dense_residual(a: &[f64], rows: usize, cols: usize, x: &[f64], b: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| {
            let mut acc = -b[r];
            for c in 0..cols {
                acc += a[r * cols + c] * x[c];
            }
            acc
        })
        .collect()
}

/// Instance with dense constraint blocks sliced out of a flat row-major A,
/// a dense quadratic objective, and the given per-block prox terms.
/// Lipschitz data is filled by the crate's estimator.
pub fn quadratic_instance(
    starts: Vec<usize>,
    a: &[f64],
    b: Vec<f64>,
    qmat: Vec<f64>,
    c: Vec<f64>,
    prox: Vec<ProxTerm<f64>>,
) -> ProblemInstance<f64> {
    let partition = BlockPartition::from_starts(starts).unwrap();
    let n = partition.total_dim;
    let q = b.len();
    assert_eq!(a.len(), q * n);
    let mut blocks = Vec::new();
    for i in 0..partition.block_count() {
        let range = partition.block_range(i);
        let w = range.len();
        let mut data = Vec::with_capacity(q * w);
        for r in 0..q {
            data.extend_from_slice(&a[r * n + range.start..r * n + range.end]);
        }
        blocks.push(BlockMatrix::Dense(DenseMat::from_rows(q, w, data).unwrap()));
    }
    let constraint = ConstraintBlocks::new(blocks, b).unwrap();
    let m = partition.block_count();
    let form = if qmat.iter().all(|v| *v == 0.0) && c.iter().all(|v| *v == 0.0) {
        OracleForm::Zero
    } else {
        OracleForm::DenseQuadratic { q: DenseMat::from_rows(n, n, qmat).unwrap(), c }
    };
    let smooth = SmoothOracle::new(form, vec![0.0; m], 0.0).unwrap();
    let mut inst = ProblemInstance {
        partition,
        constraint,
        smooth,
        prox_terms: prox,
        optimum: None,
        meta: None,
    };
    let (lb, lc) = bcu::estimate_lipschitz(&inst);
    inst.smooth.lipschitz_blocks = lb;
    inst.smooth.lipschitz_cross = lc;
    inst.validate().unwrap();
    inst
}

/// Random symmetric PSD matrix H H' as flat row-major data.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let h = random_dense(rng, n, n);
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += h[i * n + k] * h[j * n + k];
            }
            q[i * n + j] = acc;
            q[j * n + i] = acc;
        }
    }
    q
}

/// Synthetic labeled sparse dataset with values in [-1, 1] and balanced
/// labels, for SVM-dual tests that should not depend on external files.
pub fn synthetic_svm(seed: u64, samples: usize, features: usize, nnz_per: usize) -> SvmDataset<f64> {
    let mut r = rng(seed);
    let mut labels = Vec::with_capacity(samples);
    let mut rows = Vec::with_capacity(samples);
    for i in 0..samples {
        labels.push(if i % 2 == 0 { 1.0 } else { -1.0 });
        let mut feats: Vec<usize> = (0..features).collect();
        for k in 0..nnz_per.min(features) {
            let j = k + r.gen_range(0..features - k);
            feats.swap(k, j);
        }
        let mut entries: Vec<(usize, f64)> = feats[..nnz_per.min(features)]
            .iter()
            .map(|f| (*f, 2.0 * r.gen::<f64>() - 1.0))
            .collect();
        entries.sort_by_key(|e| e.0);
        rows.push(entries);
    }
    SvmDataset { labels, samples: rows, num_features: features }
}
