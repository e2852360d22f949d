use proptest::prelude::*;
use scibdvp::theory::{
    argmin_p, bound_noisefree, bound_noisy_meanframe, bound_noisy_recon, expected_energy, frame_limit, mc_event_check,
    mc_expected_energy, open_grid, BoundInputs,
};
use scibdvp::VideoCube;

fn instance(n_log: u32, frames: usize, k: usize, delta: f64, sigma_z: f64) -> BoundInputs {
    BoundInputs { delta, lipschitz: 1.0, sigma_z, ..BoundInputs::new(1usize << n_log, frames, k, 0.5) }
}

/// Mean of `(Σ Dᵢ uᵢ)²` over all `2^B` masks, weighted by their probability.
fn exhaustive_energy(u: &[f64], p: f64) -> f64 {
    let b = u.len();
    (0u32..1 << b)
        .map(|m| {
            let on = m.count_ones() as i32;
            let weight = p.powi(on) * (1.0 - p).powi(b as i32 - on);
            let s: f64 = (0..b).filter(|i| m >> i & 1 == 1).map(|i| u[i]).sum();
            weight * s * s
        })
        .sum()
}

#[test]
fn energy_matches_enumeration() {
    assert_eq!(exhaustive_energy(&[1.0, 1.0], 0.5), 1.5);
    assert_eq!(expected_energy(&[1.0, 1.0], 0.5), 1.5);
    let cases: [&[f64]; 4] = [&[0.3], &[1.0, -2.0], &[0.5, 0.25, -1.5], &[2.0, 2.0, 2.0]];
    for u in cases {
        for p in [0.0, 0.1, 0.37, 0.5, 0.9, 1.0] {
            let a = exhaustive_energy(u, p);
            assert!((expected_energy(u, p) - a).abs() <= 1e-12 * a.max(1.0), "u {u:?} p {p}");
        }
    }
}

#[test]
fn energy_estimate_degenerate_masks() {
    let u = [0.5, -1.0, 2.0];
    let one = mc_expected_energy(&u, 1.0, 100, 3).unwrap();
    assert_eq!(one.mean, 2.25);
    assert_eq!(one.std_err, 0.0);
    let zero = mc_expected_energy(&u, 0.0, 100, 3).unwrap();
    assert_eq!(zero.mean, 0.0);
}

#[test]
fn energy_estimate_is_calibrated() {
    let u = [0.7, -0.2, 1.1, 0.4];
    let hits = (0..40u64).filter(|&s| mc_expected_energy(&u, 0.3, 2000, s).unwrap().within(3.0)).count();
    assert!(hits >= 38, "{hits}/40 within three standard errors");
}

#[test]
fn event_check_against_hoeffding() {
    let x = VideoCube::from_fn(16, 16, 4, |r, c, i| ((r * 7 + c * 3 + i * 5) % 11) as f64 / 10.0);
    let x_tilde = VideoCube::from_fn(16, 16, 4, |r, c, i| ((r + c * 5 + i * 2) % 7) as f64 / 6.0);
    let (n, b) = (256.0f64, 4.0f64);
    // exp(−2nε²/B²) = 0.05
    let eps = (b * b * (1.0f64 / 0.05).ln() / (2.0 * n)).sqrt();
    let check = mc_event_check(&x, &x_tilde, 0.5, eps, 10_000, 11).unwrap();
    assert!((check.hoeffding - 0.95).abs() < 1e-12);
    assert!(1.0 - check.frequency <= 0.08, "failure rate {}", 1.0 - check.frequency);

    assert_eq!(mc_event_check(&x, &x, 0.5, 0.0, 200, 1).unwrap().frequency, 1.0);
    assert_eq!(mc_event_check(&x, &x_tilde, 0.5, 1e6, 200, 1).unwrap().frequency, 1.0);
}

#[test]
fn frame_limit_examples() {
    assert_eq!(frame_limit(1 << 16, 1000).unwrap(), 1);
    for log in 4..24 {
        let n = 1usize << log;
        assert_eq!(frame_limit(n, n).unwrap(), 0);
    }
}

#[test]
fn larger_delta_moves_optimum_down() {
    let grid = open_grid(99);
    let mut last = 1.0;
    for delta in [0.01, 0.05, 0.1] {
        let (p, _) = argmin_p(bound_noisefree, &instance(16, 8, 1000, delta, 0.0), &grid).unwrap();
        assert!(p < 0.5 && p <= last + 1e-12, "delta {delta}: p* {p}");
        last = p;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noisefree_symmetric_without_delta(n_log in 8u32..30, frames in 1usize..32, k in 1usize..100_000, p in 0.01f64..0.99) {
        let inp = BoundInputs { lipschitz: 0.0, ..instance(n_log, frames, k, 0.0, 0.0) };
        let a = bound_noisefree(&inp.with_p(p)).unwrap();
        let b = bound_noisefree(&inp.with_p(1.0 - p)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs());
    }

    #[test]
    fn noisefree_optimum_below_half(n_log in 8u32..30, frames in 1usize..32, k in 1usize..10_000, delta in 0.001f64..0.5) {
        let (p, _) = argmin_p(bound_noisefree, &instance(n_log, frames, k, delta, 0.0), &open_grid(99)).unwrap();
        prop_assert!(p < 0.5);
    }

    #[test]
    fn noisy_recon_optimum_below_half(n_log in 8u32..30, frames in 1usize..32, k in 1usize..10_000,
                                      delta in 0.001f64..0.5, sigma_z in 0.0f64..0.5) {
        let (p, _) = argmin_p(bound_noisy_recon, &instance(n_log, frames, k, delta, sigma_z), &open_grid(99)).unwrap();
        prop_assert!(p < 0.5);
    }

    #[test]
    fn noisy_recon_increases_with_noise(n_log in 8u32..30, frames in 1usize..32, k in 1usize..10_000,
                                        delta in 0.0f64..0.5, s in 0.0f64..0.5, extra in 0.001f64..0.5, p in 0.01f64..0.99) {
        let lo = bound_noisy_recon(&instance(n_log, frames, k, delta, s).with_p(p)).unwrap();
        let hi = bound_noisy_recon(&instance(n_log, frames, k, delta, s + extra).with_p(p)).unwrap();
        prop_assert!(hi > lo);
    }

    #[test]
    fn meanframe_strictly_decreasing(n_log in 8u32..30, frames in 1usize..32, k in 1usize..10_000,
                                     delta in 0.0f64..0.5, sigma_z in 0.0f64..0.5) {
        let inp = instance(n_log, frames, k, delta, sigma_z);
        let values: Vec<f64> = (1..=100).map(|i| bound_noisy_meanframe(&inp.with_p(i as f64 / 100.0)).unwrap()).collect();
        for w in values.windows(2) {
            prop_assert!(w[0] > w[1]);
        }
    }

    #[test]
    fn frame_limit_monotone(n_log in 4u32..40, k in 1usize..1_000_000) {
        let n = 1usize << n_log;
        prop_assert!(frame_limit(n, 2 * k).unwrap() <= frame_limit(n, k).unwrap());
        prop_assert!(frame_limit(2 * n, k).unwrap() >= frame_limit(n, k).unwrap());
    }

    #[test]
    fn energy_closed_form_matches_enumeration(u in prop::collection::vec(-3.0f64..3.0, 1..=3), p in 0.0f64..=1.0) {
        let a = exhaustive_energy(&u, p);
        prop_assert!((expected_energy(&u, p) - a).abs() <= 1e-12 * a.max(1.0));
    }
}
