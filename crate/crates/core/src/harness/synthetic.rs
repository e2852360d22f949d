//! Smooth, temporally coherent test videos.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;

use crate::cube::VideoCube;
use crate::error::{argument, Error, Result};
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    MovingBlob,
    ShiftingGradient,
    BouncingRects,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 3] = [Self::MovingBlob, Self::ShiftingGradient, Self::BouncingRects];

    pub fn name(self) -> &'static str {
        match self {
            Self::MovingBlob => "moving_blob",
            Self::ShiftingGradient => "shifting_gradient",
            Self::BouncingRects => "bouncing_rects",
        }
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moving_blob" => Ok(Self::MovingBlob),
            "shifting_gradient" => Ok(Self::ShiftingGradient),
            "bouncing_rects" => Ok(Self::BouncingRects),
            other => argument(format!("unknown synthetic video kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n1: usize,
    pub n2: usize,
    pub frames: usize,
    /// Motion in pixels per frame.
    pub amplitude: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(kind: SyntheticKind, n1: usize, n2: usize, frames: usize, amplitude: f64, seed: u64) -> Self {
        Self { kind, n1, n2, frames, amplitude, seed }
    }
}

fn smoothstep(edge: f64, width: f64, v: f64) -> f64 {
    let t = ((v - edge) / width + 0.5).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Triangle-wave reflection of `v` into `[lo, hi]`.
fn bounce(v: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if span <= 0.0 {
        return lo;
    }
    let m = (v - lo).rem_euclid(2.0 * span);
    lo + if m > span { 2.0 * span - m } else { m }
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<VideoCube> {
    let SyntheticSpec { kind, n1, n2, frames, amplitude, seed } = *spec;
    if n1 == 0 || n2 == 0 || frames == 0 {
        return argument("synthetic video dimensions must be positive");
    }
    if !amplitude.is_finite() {
        return argument("motion amplitude must be finite");
    }
    let mut rng = stream(seed, Purpose::Synthetic);
    let (h, w) = (n1 as f64, n2 as f64);
    let scale = h.min(w);
    let cube = match kind {
        SyntheticKind::MovingBlob => {
            let bg_angle = rng.gen::<f64>() * 2.0 * PI;
            let blobs: Vec<(f64, f64, f64, f64, f64, f64)> = (0..3)
                .map(|_| {
                    let dir = rng.gen::<f64>() * 2.0 * PI;
                    (
                        rng.gen_range(0.25..0.75) * h,
                        rng.gen_range(0.25..0.75) * w,
                        dir.cos(),
                        dir.sin(),
                        rng.gen_range(0.08..0.16) * scale,
                        rng.gen_range(0.3..0.6),
                    )
                })
                .collect();
            VideoCube::from_fn(n1, n2, frames, |r, c, i| {
                let t = i as f64 * amplitude;
                let (rf, cf) = (r as f64, c as f64);
                let bg = 0.2 + 0.15 * ((rf * bg_angle.cos() + cf * bg_angle.sin()) / scale);
                let mut v = bg;
                for &(r0, c0, dr, dc, s, a) in &blobs {
                    let (br, bc) = (r0 + dr * t, c0 + dc * t);
                    v += a * (-((rf - br).powi(2) + (cf - bc).powi(2)) / (2.0 * s * s)).exp();
                }
                v
            })
        }
        SyntheticKind::ShiftingGradient => {
            let angle = rng.gen::<f64>() * PI;
            let period = rng.gen_range(0.6..0.9) * scale;
            let phase = rng.gen::<f64>() * 2.0 * PI;
            let angle2 = angle + PI / 2.0 + rng.gen_range(-0.3..0.3);
            VideoCube::from_fn(n1, n2, frames, |r, c, i| {
                let t = i as f64 * amplitude;
                let (rf, cf) = (r as f64, c as f64);
                let s = rf * angle.cos() + cf * angle.sin() - t;
                let s2 = rf * angle2.cos() + cf * angle2.sin() + 0.5 * t;
                0.5 + 0.3 * (2.0 * PI * s / period + phase).sin() + 0.12 * (2.0 * PI * s2 / (1.7 * period)).cos()
            })
        }
        SyntheticKind::BouncingRects => {
            let rects: Vec<(f64, f64, f64, f64, f64, f64, f64)> = (0..3)
                .map(|_| {
                    let dir = rng.gen::<f64>() * 2.0 * PI;
                    (
                        rng.gen_range(0.15..0.3) * h,
                        rng.gen_range(0.15..0.3) * w,
                        rng.gen::<f64>() * h,
                        rng.gen::<f64>() * w,
                        dir.cos(),
                        dir.sin(),
                        rng.gen_range(0.2..0.45),
                    )
                })
                .collect();
            VideoCube::from_fn(n1, n2, frames, |r, c, i| {
                let t = i as f64 * amplitude;
                let (rf, cf) = (r as f64, c as f64);
                let mut v = 0.15 + 0.1 * cf / w;
                for &(rh, rw, r0, c0, dr, dc, a) in &rects {
                    let top = bounce(r0 + dr * t, 0.0, h - rh);
                    let left = bounce(c0 + dc * t, 0.0, w - rw);
                    let inside_r = smoothstep(top, 2.0, rf) * (1.0 - smoothstep(top + rh, 2.0, rf));
                    let inside_c = smoothstep(left, 2.0, cf) * (1.0 - smoothstep(left + rw, 2.0, cf));
                    v += a * inside_r * inside_c;
                }
                v
            })
        }
    };
    let data = cube.into_data().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    VideoCube::new(n1, n2, frames, data)
}

/// The three-video desk corpus: one video per kind, `n × n × frames`.
pub fn corpus(n: usize, frames: usize, amplitude: f64, seed: u64) -> Result<Vec<(SyntheticKind, VideoCube)>> {
    SyntheticKind::ALL
        .iter()
        .enumerate()
        .map(|(k, &kind)| {
            let spec = SyntheticSpec::new(kind, n, n, frames, amplitude, seed.wrapping_add(k as u64));
            Ok((kind, gen_synthetic(&spec)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_mse(x: &VideoCube, i: usize) -> f64 {
        let (a, b) = (x.frame(i), x.frame(i + 1));
        a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn zero_amplitude_is_static() {
        for kind in SyntheticKind::ALL {
            let x = gen_synthetic(&SyntheticSpec::new(kind, 16, 16, 4, 0.0, 3)).unwrap();
            for i in 1..4 {
                assert_eq!(x.frame(0), x.frame(i));
            }
        }
    }

    #[test]
    fn values_in_unit_range_and_deterministic() {
        for kind in SyntheticKind::ALL {
            let spec = SyntheticSpec::new(kind, 32, 24, 5, 3.0, 8);
            let x = gen_synthetic(&spec).unwrap();
            assert!(x.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert_eq!(x, gen_synthetic(&spec).unwrap());
        }
        assert!(gen_synthetic(&SyntheticSpec::new(SyntheticKind::MovingBlob, 0, 4, 1, 1.0, 0)).is_err());
    }

    #[test]
    fn moving_blob_motion_is_steady() {
        let x = gen_synthetic(&SyntheticSpec::new(SyntheticKind::MovingBlob, 64, 64, 8, 2.0, 1)).unwrap();
        let mses: Vec<f64> = (0..7).map(|i| frame_mse(&x, i)).collect();
        let lo = mses.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = mses.iter().copied().fold(0.0, f64::max);
        assert!(lo > 1e-5, "{mses:?}");
        assert!(hi / lo < 3.0, "{mses:?}");
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in SyntheticKind::ALL {
            assert_eq!(kind.name().parse::<SyntheticKind>().unwrap(), kind);
        }
        assert!("nope".parse::<SyntheticKind>().is_err());
    }
}
