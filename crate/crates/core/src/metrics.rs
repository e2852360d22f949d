//! PSNR and SSIM on `[0, 1]` video cubes, computed per frame and averaged.

use crate::cube::VideoCube;
use crate::error::{argument, Result};

/// Returned by [`psnr`] when the signals are identical.
pub const PSNR_IDENTICAL: f64 = f64::INFINITY;

const PEAK: f64 = 1.0;
const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = (0.01 * PEAK) * (0.01 * PEAK);
pub const SSIM_C2: f64 = (0.03 * PEAK) * (0.03 * PEAK);

fn frame_psnr(a: &[f64], b: &[f64]) -> f64 {
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        PSNR_IDENTICAL
    } else {
        10.0 * (PEAK * PEAK / mse).log10()
    }
}

/// Per-frame PSNR in dB.
pub fn psnr_frames(x: &VideoCube, x_hat: &VideoCube) -> Result<Vec<f64>> {
    x.ensure_same_dims(x_hat)?;
    Ok((0..x.frames()).map(|i| frame_psnr(x.frame(i), x_hat.frame(i))).collect())
}

/// Mean per-frame PSNR in dB, with peak 1.
pub fn psnr(x: &VideoCube, x_hat: &VideoCube) -> Result<f64> {
    let f = psnr_frames(x, x_hat)?;
    Ok(f.iter().sum::<f64>() / f.len() as f64)
}

/// Normalized 1D Gaussian taps; their outer product is the 2D SSIM window.
pub fn gaussian_window() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let half = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable "valid" filtering of an `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - WINDOW + 1, w - WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..WINDOW).map(|t| k[t] * plane[r * w + c + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..WINDOW).map(|t| k[t] * rows[(r + t) * ow + c]).sum();
        }
    }
    out
}

fn frame_ssim(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    let k = gaussian_window();
    let prod = |f: &dyn Fn(f64, f64) -> f64| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>();
    let mu_a = filter_valid(a, h, w, &k);
    let mu_b = filter_valid(b, h, w, &k);
    let aa = filter_valid(&prod(&|x, _| x * x), h, w, &k);
    let bb = filter_valid(&prod(&|_, y| y * y), h, w, &k);
    let ab = filter_valid(&prod(&|x, y| x * y), h, w, &k);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|j| {
            let (ma, mb) = (mu_a[j], mu_b[j]);
            let va = aa[j] - ma * ma;
            let vb = bb[j] - mb * mb;
            let cov = ab[j] - ma * mb;
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2))
        })
        .sum();
    total / n as f64
}

/// Per-frame single-scale SSIM (Gaussian window, σ = 1.5, valid region).
pub fn ssim_frames(x: &VideoCube, x_hat: &VideoCube) -> Result<Vec<f64>> {
    x.ensure_same_dims(x_hat)?;
    if x.n1() < WINDOW || x.n2() < WINDOW {
        return argument(format!("SSIM needs frames of at least {WINDOW}x{WINDOW}, got {}x{}", x.n1(), x.n2()));
    }
    Ok((0..x.frames()).map(|i| frame_ssim(x.frame(i), x_hat.frame(i), x.n1(), x.n2())).collect())
}

/// Mean per-frame SSIM.
pub fn ssim(x: &VideoCube, x_hat: &VideoCube) -> Result<f64> {
    let f = ssim_frames(x, x_hat)?;
    Ok(f.iter().sum::<f64>() / f.len() as f64)
}

/// PSNR and SSIM of a reconstruction; the estimate is clamped to `[0, 1]` before scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub psnr_per_frame: Vec<f64>,
    pub ssim_per_frame: Vec<f64>,
    pub clamped: bool,
}

impl MetricsReport {
    pub fn compute(reference: &VideoCube, estimate: &VideoCube) -> Result<Self> {
        let est = estimate.clamped01();
        let psnr_per_frame = psnr_frames(reference, &est)?;
        let ssim_per_frame = if reference.n1() >= WINDOW && reference.n2() >= WINDOW {
            ssim_frames(reference, &est)?
        } else {
            vec![f64::NAN; reference.frames()]
        };
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        Ok(Self {
            psnr_db: mean(&psnr_per_frame),
            ssim: mean(&ssim_per_frame),
            psnr_per_frame,
            ssim_per_frame,
            clamped: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_closed_forms() {
        let x = VideoCube::zeros(4, 4, 2);
        assert!((psnr(&x, &VideoCube::filled(4, 4, 2, 0.1)).unwrap() - 20.0).abs() < 1e-12);
        assert!(psnr(&x, &VideoCube::filled(4, 4, 2, 1.0)).unwrap().abs() < 1e-12);
        assert_eq!(psnr(&x, &x).unwrap(), PSNR_IDENTICAL);
        assert!(psnr(&x, &VideoCube::zeros(4, 4, 3)).is_err());
    }

    #[test]
    fn ssim_constant_images() {
        let x = VideoCube::zeros(16, 16, 1);
        let y = VideoCube::filled(16, 16, 1, 1.0);
        let want = SSIM_C1 / (1.0 + SSIM_C1);
        assert!((ssim(&x, &y).unwrap() - want).abs() < 1e-15);
        assert!((want - 9.999e-5).abs() < 1e-8);
        assert_eq!(ssim(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn window_is_normalized() {
        let k = gaussian_window();
        let total: f64 = k.iter().flat_map(|a| k.iter().map(move |b| a * b)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_rejects_small_frames() {
        let x = VideoCube::zeros(10, 16, 1);
        assert!(ssim(&x, &x).is_err());
    }
}
