//! Generator and ingestion checks: planted-signal identities, PSD
//! verification against an independent eigensolver, implicit-Gram probes,
//! LIBSVM grammar and round-trips, and cross-method agreement between the
//! reference solver and the block engine.

mod common;

use std::io::Cursor;

use bcu::{
    gen_basis_pursuit, gen_dual_svm, gen_ncqp, parse_libsvm, read_libsvm, reference_solve,
    run as run_serial, serial_plan, write_libsvm, Error, OracleForm, ProxTerm, RunConfig,
    SvmDataset,
};
use common::jacobi_eigenvalues;

fn nrm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// planted support/values travel in the instance metadata
fn planted_signal(inst: &bcu::Instance, n: usize) -> Vec<f64> {
    let meta = inst.meta.as_ref().unwrap();
    let support = meta["planted_support"].as_array().unwrap();
    let values = meta["planted_values"].as_array().unwrap();
    let mut x = vec![0.0; n];
    for (s, v) in support.iter().zip(values) {
        x[s.as_u64().unwrap() as usize] = v.as_f64().unwrap();
    }
    x
}

#[test]
fn basis_pursuit_bench_shape_and_planted_identities() {
    let (q, n, nnz, blocks) = (300usize, 1000usize, 30usize, 100usize);
    let inst = gen_basis_pursuit::<f64>(q, n, nnz, blocks, 11).unwrap();
    assert_eq!(inst.partition.block_count(), blocks);
    assert_eq!(inst.partition.block_dim(0), n / blocks);
    assert_eq!(inst.dim(), n);
    assert_eq!(inst.num_rows(), q);
    assert!(inst.prox_terms.iter().all(|t| matches!(t, ProxTerm::L1 { weight } if *weight == 1.0)));

    let x0 = planted_signal(&inst, n);
    assert_eq!(x0.iter().filter(|v| **v != 0.0).count(), nnz);
    // b was produced by the same block-ordered apply that residual() uses,
    // so the planted point is feasible to the last bit
    assert!(inst.residual(&x0).iter().all(|r| *r == 0.0));
    // rows have unit Euclidean norm; reassemble them across the blocks
    for r in 0..q {
        let mut row_sq = 0.0;
        for i in 0..blocks {
            if let bcu::BlockMatrix::Dense(blk) = &inst.constraint.blocks[i] {
                row_sq += blk.row(r).iter().map(|v| v * v).sum::<f64>();
            } else {
                panic!("basis pursuit blocks are dense");
            }
        }
        assert!((row_sq.sqrt() - 1.0).abs() <= 1e-12, "row {r} norm {}", row_sq.sqrt());
    }
    // l1 objective of the planted point is its absolute sum
    let l1: f64 = x0.iter().map(|v| v.abs()).sum();
    assert!((inst.objective(&x0) - l1).abs() <= 1e-12 * (1.0 + l1));
}

#[test]
fn basis_pursuit_construction_identity_at_desk_scale() {
    let inst = gen_basis_pursuit::<f64>(40, 100, 5, 20, 3).unwrap();
    let x0 = planted_signal(&inst, 100);
    assert_eq!(nrm2(&inst.residual(&x0)), 0.0);
}

#[test]
fn basis_pursuit_empty_support_is_the_zero_problem() {
    let inst = gen_basis_pursuit::<f64>(40, 100, 0, 20, 5).unwrap();
    assert!(inst.constraint.rhs.iter().all(|v| *v == 0.0));
    let opt = inst.optimum.as_ref().unwrap();
    assert_eq!(opt.f, Some(0.0));
    assert!(opt.x.as_ref().unwrap().iter().all(|v| *v == 0.0));
    // the reference route agrees without iterating
    let sol = reference_solve(&inst, 1e-10).unwrap();
    assert!(sol.x_star.iter().all(|v| *v == 0.0));
    assert_eq!(sol.f_star, 0.0);
}

#[test]
fn ncqp_hessian_is_psd_by_jacobi_oracle() {
    let inst = gen_ncqp::<f64>(5, 24, 17).unwrap();
    let OracleForm::DenseQuadratic { q, .. } = &inst.smooth.form else {
        panic!("ncqp stores a dense quadratic");
    };
    let eigs = jacobi_eigenvalues(q);
    assert!(
        eigs[0] >= -1e-10,
        "min eigenvalue {} of a Gram-built Hessian must not be negative",
        eigs[0]
    );
}

#[test]
fn ncqp_slack_coordinates_give_an_exactly_feasible_point() {
    let (q_b, n) = (20usize, 120usize);
    let inst = gen_ncqp::<f64>(q_b, n, 23).unwrap();
    assert_eq!(inst.partition.block_count(), n);
    let mut x = vec![0.0; n];
    x[n - q_b..].copy_from_slice(&inst.constraint.rhs);
    // identity slack columns move b across unchanged: residual is 0.0 exact
    assert!(inst.residual(&x).iter().all(|r| *r == 0.0));
    // b >= 0, so the point also satisfies the nonnegativity domain
    assert!(inst.objective(&x).is_finite());
}

#[test]
fn ncqp_benchmark_scale_shapes() {
    let (q_b, n) = (200usize, 2000usize);
    let inst = gen_ncqp::<f64>(q_b, n, 7).unwrap();
    assert_eq!(inst.partition.block_count(), n);
    assert_eq!(inst.num_rows(), q_b);
    assert!(matches!(inst.constraint.blocks[n - 1], bcu::BlockMatrix::Sparse(_)));
    assert!(matches!(inst.constraint.blocks[0], bcu::BlockMatrix::Dense(_)));
    assert!(inst.prox_terms.iter().all(|t| matches!(t, ProxTerm::NonNeg)));
}

#[test]
fn svm_identity_pair_matches_the_dense_gram() {
    // two samples on orthogonal unit features with opposite labels:
    // Diag(y) X' X Diag(y) is the 2x2 identity, so f(th) = ||th||^2/2 - sum(th)
    let data = SvmDataset {
        labels: vec![1.0, -1.0],
        samples: vec![vec![(0, 1.0)], vec![(1, 1.0)]],
        num_features: 2,
    };
    let inst = gen_dual_svm(&data, 10.0, 1).unwrap();
    assert_eq!(inst.partition.block_count(), 2);

    // the trivial point first
    assert_eq!(inst.objective(&[0.0, 0.0]), 0.0);
    assert!(inst.residual(&[0.0, 0.0]).iter().all(|r| *r == 0.0));

    let mut r = common::rng(29);
    for _ in 0..20 {
        let th = [common::normal(&mut r).abs(), common::normal(&mut r).abs()];
        let want_obj = 0.5 * (th[0] * th[0] + th[1] * th[1]) - th[0] - th[1];
        assert!((inst.objective(&th) - want_obj).abs() <= 1e-12 * (1.0 + want_obj.abs()));
        for i in 0..2 {
            let mut g = [0.0];
            inst.block_grad_at(&th, i, &mut g);
            assert!((g[0] - (th[i] - 1.0)).abs() <= 1e-12);
        }
        // constraint row is y itself
        let res = inst.residual(&th);
        assert!((res[0] - (th[0] - th[1])).abs() <= 1e-12);
    }
}

#[test]
fn rcv1_ingestion_matches_published_metadata() {
    // only runs where the dataset was provided; paths are never downloaded
    let Ok(path) = std::env::var("BCU_RCV1_PATH") else {
        eprintln!("BCU_RCV1_PATH not set; skipping rcv1 metadata check");
        return;
    };
    let data: SvmDataset<f64> = read_libsvm(path).unwrap();
    assert_eq!(data.num_samples(), 20_242);
    assert_eq!(data.num_features, 47_236);
}

#[test]
fn libsvm_grammar_single_line_and_empty_input() {
    let data: SvmDataset<f64> = parse_libsvm(Cursor::new("+1 3:0.5 7:2\n")).unwrap();
    assert_eq!(data.labels, vec![1.0]);
    assert_eq!(data.samples, vec![vec![(2, 0.5), (6, 2.0)]]);
    assert_eq!(data.num_features, 7);

    let empty: SvmDataset<f64> = parse_libsvm(Cursor::new("")).unwrap();
    assert_eq!(empty.num_samples(), 0);
    assert_eq!(empty.num_features, 0);

    // blank lines and trailing comments are ignored
    let commented: SvmDataset<f64> =
        parse_libsvm(Cursor::new("\n-1 1:2.5 # trailing note\n\n")).unwrap();
    assert_eq!(commented.labels, vec![-1.0]);
    assert_eq!(commented.samples, vec![vec![(0, 2.5)]]);
}

#[test]
fn libsvm_errors_name_the_offending_line() {
    let bad_order = parse_libsvm::<f64, _>(Cursor::new("+1 1:1\n-1 5:1 3:2\n"));
    match bad_order {
        Err(Error::Ingestion { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected an ingestion error, got {other:?}"),
    }
    let bad_token = parse_libsvm::<f64, _>(Cursor::new("+1 1:1\n+1 2:abc\n"));
    match bad_token {
        Err(Error::Ingestion { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected an ingestion error, got {other:?}"),
    }
}

#[test]
fn libsvm_round_trip_is_identity() {
    let data = common::synthetic_svm(101, 40, 60, 7);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("round_trip.svm");
    write_libsvm(&path, &data).unwrap();
    let back: SvmDataset<f64> = read_libsvm(&path).unwrap();
    assert_eq!(back.labels, data.labels);
    assert_eq!(back.samples, data.samples);
    assert_eq!(back.num_features, data.num_features);
}

#[test]
fn reference_solver_matches_the_analytic_kkt_point() {
    // min 0.5||x||^2 + c'x  s.t. x1 + x2 = 2, x >= 0 with both coordinates
    // strictly interior at the optimum: stationarity x + c = A'lam and
    // feasibility give lam = -0.5, x = (1.5, 0.5), f = -2.25.
    let inst = common::quadratic_instance(
        vec![0, 1, 2],
        &[1.0, 1.0],
        vec![2.0],
        vec![1.0, 0.0, 0.0, 1.0],
        vec![-2.0, -1.0],
        vec![bcu::ProxTerm::NonNeg, bcu::ProxTerm::NonNeg],
    );
    let sol = reference_solve(&inst, 1e-10).unwrap();
    assert!((sol.x_star[0] - 1.5).abs() <= 1e-8);
    assert!((sol.x_star[1] - 0.5).abs() <= 1e-8);
    assert!((sol.lambda_star[0] + 0.5).abs() <= 1e-8);
    assert!((sol.f_star + 2.25).abs() <= 1e-8);
    assert!(sol.kkt_residual <= 1e-10 * (1.0 + 2.0));
}

#[test]
fn reference_and_block_solver_agree_on_a_desk_ncqp() {
    let inst = gen_ncqp::<f64>(4, 20, 67).unwrap();
    let sol = reference_solve(&inst, 1e-9).unwrap();

    let plan = serial_plan(&inst, 2f64.sqrt()).unwrap();
    let mut config = RunConfig::new(plan, 6000, 13);
    config.trace_every = 6000;
    let (state, _) = run_serial(&inst, &config).unwrap();
    let f_long = inst.objective(&state.x);
    assert!(
        (f_long - sol.f_star).abs() <= 1e-6 * (1.0 + sol.f_star.abs()),
        "block solver reached {f_long}, reference says {}",
        sol.f_star
    );
}
