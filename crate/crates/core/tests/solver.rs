use rand::Rng;
use scibdvp::bdvp::{BaggedConfig, Precision};
use scibdvp::harness::{gen_synthetic, SyntheticKind, SyntheticSpec};
use scibdvp::metrics::psnr;
use scibdvp::rng::{stream, Purpose};
use scibdvp::solver::{descent_gd, mean_frame_analysis, recover, recover_e2e, SolverConfig};
use scibdvp::{gen_mask, Error, MaskCube, SensingOperator, VideoCube};

fn smooth(n: usize, frames: usize) -> VideoCube {
    gen_synthetic(&SyntheticSpec::new(SyntheticKind::ShiftingGradient, n, n, frames, 1.0, 3)).unwrap()
}

fn ones_mask(n: usize, frames: usize) -> MaskCube {
    MaskCube::from_bits(n, n, frames, vec![1; n * n * frames], 1.0, 0).unwrap()
}

fn random_cube(n1: usize, n2: usize, b: usize, seed: u64) -> VideoCube {
    let mut rng = stream(seed, Purpose::Synthetic);
    VideoCube::from_fn(n1, n2, b, |_, _, _| rng.gen::<f64>())
}

fn small_bagged(n: usize, iters: usize) -> BaggedConfig {
    let mut cfg = BaggedConfig::with_schedule((n, n), &[n / 2, n], iters);
    cfg.lr = 0.01;
    cfg.warm_start = true;
    cfg
}

#[test]
fn single_frame_all_ones_is_recovered() {
    let x = smooth(16, 1);
    let op = SensingOperator::new(ones_mask(16, 1));
    let y = op.forward(&x).unwrap();
    let cfg = SolverConfig::gap(small_bagged(16, 150), 4);
    let (x_hat, trace) = recover(&y, &op, &cfg, Some(&x)).unwrap();
    let db = psnr(&x, &x_hat.clamped01()).unwrap();
    assert!(db >= 40.0, "PSNR {db}");
    assert_eq!(trace.len(), 4);
}

#[test]
fn e2e_single_frame_all_ones_fits_snapshot() {
    let x = smooth(16, 1);
    let op = SensingOperator::new(ones_mask(16, 1));
    let y = op.forward(&x).unwrap();
    let mut cfg = small_bagged(16, 600);
    cfg.omega = 1.0;
    let x_hat = recover_e2e(&y, &op, &cfg).unwrap();
    let db = psnr(&x, &x_hat.clamped01()).unwrap();
    assert!(db >= 35.0, "PSNR {db}");
}

#[test]
fn one_step_without_projection_is_feasible() {
    let x = random_cube(8, 8, 4, 1);
    let op = SensingOperator::new(gen_mask(8, 8, 4, 0.4, 2).unwrap());
    let y = op.forward(&x).unwrap();
    let mut cfg = SolverConfig::gap(small_bagged(8, 5), 1);
    cfg.alpha = 1.0;
    let (x_hat, _) = recover(&y, &op, &cfg, None).unwrap();
    let r = op.residual(&x_hat, &y).unwrap();
    for (v, g) in r.data().iter().zip(op.gram_diag()) {
        if *g > 0.0 {
            assert!(v.abs() <= 1e-12);
        }
    }
}

#[test]
fn diverging_step_reports_iteration() {
    let x = random_cube(8, 8, 4, 4);
    let op = SensingOperator::new(gen_mask(8, 8, 4, 0.5, 5).unwrap());
    let y = op.forward(&x).unwrap();
    let mut cfg = SolverConfig::gd(small_bagged(8, 1), 400);
    cfg.alpha = 1.0;
    cfg.mu = 1e300;
    match recover(&y, &op, &cfg, None) {
        Err(Error::NonFinite { iteration }) => assert!(iteration >= 1),
        other => panic!("expected a non-finite failure, got {other:?}"),
    }
}

#[test]
fn gd_step_reduces_residual() {
    for seed in 0..10 {
        let op = SensingOperator::new(gen_mask(8, 8, 4, 0.5, seed).unwrap());
        let y = op.forward(&random_cube(8, 8, 4, seed + 50)).unwrap();
        let x = random_cube(8, 8, 4, seed + 90);
        let before = op.residual(&x, &y).unwrap().norm();
        let after = op.residual(&descent_gd(&x, &y, &op, 0.1).unwrap(), &y).unwrap().norm();
        assert!(after < before);
    }
}

#[test]
fn recovery_is_deterministic_in_both_precisions() {
    let x = smooth(16, 2);
    let op = SensingOperator::new(gen_mask(16, 16, 2, 0.5, 9).unwrap());
    let y = op.forward(&x).unwrap();
    for precision in [Precision::F32, Precision::F64] {
        let mut bagged = small_bagged(16, 10);
        bagged.precision = precision;
        let cfg = SolverConfig::gap(bagged, 2);
        let a = recover(&y, &op, &cfg, Some(&x)).unwrap();
        let b = recover(&y, &op, &cfg, Some(&x)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.records.len(), b.1.records.len());
    }
}

#[test]
fn mean_frame_triangle_on_random_pairs() {
    for seed in 0..20 {
        let x = random_cube(6, 5, 3, seed);
        let x_hat = random_cube(6, 5, 3, seed + 1000);
        assert!(mean_frame_analysis(&x, &x_hat).unwrap().triangle_holds());
    }
}
