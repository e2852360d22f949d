use rand::Rng;
use scibdvp::nn::{train_dvp, DvpArchitecture, DvpModel, FitProblem};
use scibdvp::rng::{stream, Purpose};
use scibdvp::{gen_mask, SensingOperator, VideoCube};

fn random_cube(n1: usize, n2: usize, b: usize, seed: u64) -> VideoCube {
    let mut rng = stream(seed, Purpose::Synthetic);
    VideoCube::from_fn(n1, n2, b, |_, _, _| rng.gen::<f64>())
}

/// Central differences, step 1e-5, compared coordinate-wise to the analytic gradient.
fn max_relative_gradient_error(model: &DvpModel<f64>, problem: &FitProblem<'_>) -> f64 {
    let analytic = model.loss_and_grad(problem).unwrap().grad;
    let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    for k in 0..analytic.len() {
        let orig = probe.theta()[k];
        probe.theta_mut()[k] = orig + h;
        let up = probe.loss(problem).unwrap();
        probe.theta_mut()[k] = orig - h;
        let down = probe.loss(problem).unwrap();
        probe.theta_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[k].abs().max(numeric.abs()).max(1e-6 * scale);
        worst = worst.max((analytic[k] - numeric).abs() / denom);
    }
    worst
}

#[test]
fn gradients_match_central_differences() {
    let arch = DvpArchitecture::new(16, 16, 2, 4, 3).unwrap();
    for seed in [1u64, 2, 3] {
        let model = DvpModel::<f64>::init(arch, seed).unwrap();
        let target = random_cube(16, 16, 2, seed + 10);
        let mask = gen_mask(12, 12, 2, 0.5, seed).unwrap();
        let op = SensingOperator::new(mask);
        let y = op.forward(&random_cube(12, 12, 2, seed + 20)).unwrap();
        let problem = FitProblem::target(&target).with_measurement(&y, &op, (2, 2), 0.1);
        let err = max_relative_gradient_error(&model, &problem);
        assert!(err <= 1e-4, "seed {seed}: max relative error {err}");
    }
}

#[test]
fn zero_weights_give_half() {
    let arch = DvpArchitecture::new(8, 8, 3, 2, 2).unwrap();
    let mut model = DvpModel::<f64>::init(arch, 5).unwrap();
    model.theta_mut().iter_mut().for_each(|v| *v = 0.0);
    let out = model.forward();
    assert_eq!(out.dims(), (8, 8, 3));
    assert!(out.data().iter().all(|&v| v == 0.5));

    // constant 0.5 target is fit exactly at init, and gradients vanish
    let target = VideoCube::filled(8, 8, 3, 0.5);
    let lg = model.loss_and_grad(&FitProblem::target(&target)).unwrap();
    assert_eq!(lg.loss, 0.0);
    assert!(lg.grad.iter().all(|&g| g == 0.0));
}

#[test]
fn single_block_forward_by_hand() {
    // latent: one channel, one pixel; upsampled to 2x2 then conv, then output conv.
    let arch = DvpArchitecture::new(2, 2, 1, 1, 1).unwrap();
    let w1 = [0.1, -0.2, 0.3, 0.4, 0.5, -0.6, 0.7, 0.8, -0.9];
    let b1 = 0.05;
    let w2 = [0.2, 0.1, -0.1, 0.3, 1.5, 0.2, -0.4, 0.6, 0.25];
    let b2 = -0.3;
    let u = 0.8;
    let mut theta = w1.to_vec();
    theta.push(b1);
    theta.extend_from_slice(&w2);
    theta.push(b2);
    let model = DvpModel::from_parts(arch, theta, vec![u]).unwrap();

    // Inside a 2x2 map with zero padding, pixel (r, c) sees taps (ky, kx) with
    // r+ky-1 and c+kx-1 in {0, 1}.
    let taps = |r: usize, c: usize| -> Vec<usize> {
        let mut t = Vec::new();
        for ky in 0..3usize {
            for kx in 0..3usize {
                let (sr, sc) = (r as isize + ky as isize - 1, c as isize + kx as isize - 1);
                if (0..2).contains(&sr) && (0..2).contains(&sc) {
                    t.push(ky * 3 + kx);
                }
            }
        }
        t
    };
    let mut hidden = [[0.0; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            hidden[r][c] = b1 + taps(r, c).iter().map(|&k| w1[k] * u).sum::<f64>();
        }
    }
    let out = model.forward();
    for r in 0..2 {
        for c in 0..2 {
            let mut z = b2;
            for ky in 0..3usize {
                for kx in 0..3usize {
                    let (sr, sc) = (r as isize + ky as isize - 1, c as isize + kx as isize - 1);
                    if (0..2).contains(&sr) && (0..2).contains(&sc) {
                        z += w2[ky * 3 + kx] * hidden[sr as usize][sc as usize];
                    }
                }
            }
            let expect = 1.0 / (1.0 + (-z).exp());
            assert!((out.get(r, c, 0) - expect).abs() < 1e-14);
        }
    }
    // pixel (0,0): taps 4,5,7,8 -> 0.5 - 0.6 + 0.8 - 0.9 = -0.2; hidden = 0.05 - 0.16
    assert!((hidden[0][0] - (0.05 - 0.16)).abs() < 1e-15);
}

#[test]
fn omega_enters_linearly() {
    let arch = DvpArchitecture::new(8, 8, 2, 3, 2).unwrap();
    let model = DvpModel::<f64>::init(arch, 9).unwrap();
    let target = random_cube(8, 8, 2, 1);
    let op = SensingOperator::new(gen_mask(8, 8, 2, 0.5, 2).unwrap());
    let y = op.forward(&random_cube(8, 8, 2, 3)).unwrap();
    let l0 = model.loss(&FitProblem::target(&target).with_measurement(&y, &op, (0, 0), 0.0)).unwrap();
    let l1 = model.loss(&FitProblem::target(&target).with_measurement(&y, &op, (0, 0), 0.1)).unwrap();
    let r = op.residual(&model.forward(), &y).unwrap();
    assert!(((l1 - l0) - 0.1 * r.dot(&r)).abs() < 1e-12);
}

#[test]
fn outputs_stay_in_open_unit_interval() {
    let arch = DvpArchitecture::new(8, 8, 2, 4, 3).unwrap();
    let mut model = DvpModel::<f64>::init(arch, 4).unwrap();
    model.theta_mut().iter_mut().for_each(|v| *v *= 5.0);
    assert!(model.forward().data().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn training_is_deterministic_and_keeps_latent() {
    let arch = DvpArchitecture::new(16, 16, 2, 4, 3).unwrap();
    let target = random_cube(16, 16, 2, 8);
    let run = || {
        let mut m = DvpModel::<f64>::init(arch, 12).unwrap();
        let report = train_dvp(&mut m, &FitProblem::target(&target), 30, 0.01).unwrap();
        (m, report)
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert_eq!(a.latent(), DvpModel::<f64>::init(arch, 12).unwrap().latent());
    assert!(ra.ends_below_start());
    assert_ne!(DvpModel::<f64>::init(arch, 13).unwrap().latent(), a.latent());
}

#[test]
fn rejects_mismatched_target() {
    let arch = DvpArchitecture::new(8, 8, 2, 2, 1).unwrap();
    let model = DvpModel::<f64>::init(arch, 1).unwrap();
    let bad = VideoCube::zeros(8, 8, 3);
    assert!(model.loss_and_grad(&FitProblem::target(&bad)).is_err());
    assert!(DvpModel::<f64>::init(DvpArchitecture { out_h: 60, out_w: 64, out_frames: 8, channels: 4, n_blocks: 3 }, 1).is_err());
}
