//! Projected gradient recovery: descent step, bagged projection, skip connection.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::bdvp::{BaggedConfig, BaggedProjector, Precision, ProjectionInputs};
use crate::cube::{Measurement, VideoCube};
use crate::error::{argument, Error, Result};
use crate::measurement::SensingOperator;
use crate::metrics::{psnr, MetricsReport};
use crate::nn::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Generalized alternating projection; for noise-free snapshots.
    Gap,
    /// Plain gradient descent on `‖y − Hx‖²`; for noisy snapshots.
    Gd,
    /// No outer loop: decoders fitted to the measurement directly.
    E2e,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Gap => "gap",
            Mode::Gd => "gd",
            Mode::E2e => "e2e",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gap" => Ok(Mode::Gap),
            "gd" => Ok(Mode::Gd),
            "e2e" => Ok(Mode::E2e),
            other => argument(format!("unknown mode `{other}` (expected gap, gd or e2e)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub mode: Mode,
    /// Descent step size.
    pub mu: f64,
    /// Weight of the descent output in the skip connection.
    pub alpha: f64,
    pub outer_iters: usize,
    pub bagged: BaggedConfig,
    /// Start from raw `Hᵀy` instead of the coverage-normalized back-projection.
    pub raw_init: bool,
}

impl SolverConfig {
    /// Noise-free defaults: GAP, μ = 1.
    pub fn gap(bagged: BaggedConfig, outer_iters: usize) -> Self {
        Self { mode: Mode::Gap, mu: 1.0, alpha: 0.5, outer_iters, bagged, raw_init: false }
    }

    /// Noisy defaults: GD, μ = 0.1.
    pub fn gd(bagged: BaggedConfig, outer_iters: usize) -> Self {
        Self { mode: Mode::Gd, mu: 0.1, ..Self::gap(bagged, outer_iters) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return argument(format!("step size must be positive, got {}", self.mu));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return argument(format!("skip weight must lie in [0, 1], got {}", self.alpha));
        }
        if self.outer_iters == 0 {
            return argument("at least one outer iteration is required");
        }
        Ok(())
    }
}

/// GAP step `x + μ Hᵀ (H Hᵀ)⁺ (y − H x)`.
pub fn descent_gap(x: &VideoCube, y: &Measurement, op: &SensingOperator, mu: f64) -> Result<VideoCube> {
    let r = op.gram_apply_inverse(&op.residual(x, y)?)?;
    x.lincomb(1.0, &op.adjoint(&r)?, mu)
}

/// Gradient step `x + μ Hᵀ (y − H x)`.
pub fn descent_gd(x: &VideoCube, y: &Measurement, op: &SensingOperator, mu: f64) -> Result<VideoCube> {
    let r = op.residual(x, y)?;
    x.lincomb(1.0, &op.adjoint(&r)?, mu)
}

/// `α x_g + (1 − α) x_p`.
pub fn skip_combine(x_g: &VideoCube, x_p: &VideoCube, alpha: f64) -> Result<VideoCube> {
    if !(0.0..=1.0).contains(&alpha) {
        return argument(format!("skip weight must lie in [0, 1], got {alpha}"));
    }
    x_g.lincomb(alpha, x_p, 1.0 - alpha)
}

/// Back-projection `Hᵀy`, optionally divided by per-pixel coverage.
pub fn initial_estimate(y: &Measurement, op: &SensingOperator, raw: bool) -> Result<VideoCube> {
    let mut x = op.adjoint(y)?;
    if !raw {
        let n = x.pixels();
        let gram = op.gram_diag().to_vec();
        for i in 0..x.frames() {
            for (v, g) in x.frame_mut(i).iter_mut().zip(&gram) {
                *v /= g.max(1.0);
            }
        }
        debug_assert_eq!(gram.len(), n);
    }
    Ok(x)
}

/// Distances between a video, its reconstruction and its repeated mean frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFrameAnalysis {
    pub psnr_x_xhat: f64,
    pub psnr_x_mean: f64,
    pub psnr_xhat_mean: f64,
    pub dist_x_xhat: f64,
    pub dist_x_mean: f64,
    pub dist_mean_xhat: f64,
}

impl MeanFrameAnalysis {
    /// `‖x − x̂‖ ≤ ‖x − x̄_B‖ + ‖x̄_B − x̂‖`, with a rounding allowance.
    pub fn triangle_holds(&self) -> bool {
        self.dist_x_xhat <= self.dist_x_mean + self.dist_mean_xhat + 1e-12 * (1.0 + self.dist_x_xhat)
    }
}

pub fn mean_frame_analysis(x: &VideoCube, x_hat: &VideoCube) -> Result<MeanFrameAnalysis> {
    x.ensure_same_dims(x_hat)?;
    let mean = x.mean_frame().repeat_frame(x.frames());
    Ok(MeanFrameAnalysis {
        psnr_x_xhat: psnr(x, x_hat)?,
        psnr_x_mean: psnr(x, &mean)?,
        psnr_xhat_mean: psnr(x_hat, &mean)?,
        dist_x_xhat: x.distance(x_hat)?,
        dist_x_mean: x.distance(&mean)?,
        dist_mean_xhat: mean.distance(x_hat)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    /// `‖y − H x_t‖`.
    pub residual: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    /// PSNR of the iterate against the ground truth's repeated mean frame.
    pub psnr_vs_meanframe: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

pub const TRACE_HEADER: [&str; 6] = ["iter", "residual", "psnr", "ssim", "psnr_vs_meanframe", "seconds"];

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub(crate) fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.6}")
    }
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV text; wall time is left blank unless `timing` is set so that
    /// repeated runs produce identical bytes.
    pub fn to_csv(&self, timing: bool) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Format(e.to_string());
        w.write_record(TRACE_HEADER).map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                fmt_num(r.residual),
                fmt_opt(r.psnr),
                fmt_opt(r.ssim),
                fmt_opt(r.psnr_vs_meanframe),
                if timing { format!("{:.3}", r.seconds) } else { String::new() },
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn record(iter: usize, x: &VideoCube, y: &Measurement, op: &SensingOperator, truth: Option<&VideoCube>, start: Instant) -> Result<TraceRecord> {
    let residual = op.residual(x, y)?.norm();
    let (psnr_v, ssim_v, mean_v) = match truth {
        Some(t) => {
            let m = MetricsReport::compute(t, x)?;
            let mean = t.mean_frame().repeat_frame(t.frames());
            let ssim = if m.ssim.is_nan() { None } else { Some(m.ssim) };
            (Some(m.psnr_db), ssim, Some(psnr(&mean, &x.clamped01())?))
        }
        None => (None, None, None),
    };
    Ok(TraceRecord { iter, residual, psnr: psnr_v, ssim: ssim_v, psnr_vs_meanframe: mean_v, seconds: start.elapsed().as_secs_f64() })
}

/// Runs the recovery loop; `ground_truth` only feeds the trace.
pub fn recover(y: &Measurement, op: &SensingOperator, cfg: &SolverConfig, ground_truth: Option<&VideoCube>) -> Result<(VideoCube, RunTrace)> {
    cfg.validate()?;
    match cfg.bagged.precision {
        Precision::F32 => recover_impl::<f32>(y, op, cfg, ground_truth),
        Precision::F64 => recover_impl::<f64>(y, op, cfg, ground_truth),
    }
}

fn recover_impl<T: Real>(y: &Measurement, op: &SensingOperator, cfg: &SolverConfig, truth: Option<&VideoCube>) -> Result<(VideoCube, RunTrace)> {
    let (n1, n2, frames) = op.dims();
    if let Some(t) = truth {
        crate::error::check_dims(op.dims(), t.dims())?;
    }
    let start = Instant::now();
    if cfg.mode == Mode::E2e {
        let x = e2e_impl::<T>(y, op, &cfg.bagged)?;
        let trace = RunTrace { records: vec![record(1, &x, y, op, truth, start)?] };
        return Ok((x, trace));
    }
    if cfg.mode == Mode::Gap && y.sigma > 0.0 {
        log::warn!("GAP descent on a noisy snapshot (sigma = {}); GD is the usual choice", y.sigma);
    }
    let mut projector = BaggedProjector::<T>::new(cfg.bagged.clone(), n1, n2)?;
    let mut x = initial_estimate(y, op, cfg.raw_init)?;
    let mut trace = RunTrace::default();
    for t in 1..=cfg.outer_iters {
        let x_g = match cfg.mode {
            Mode::Gap => descent_gap(&x, y, op, cfg.mu)?,
            _ => descent_gd(&x, y, op, cfg.mu)?,
        };
        if !x_g.is_finite() {
            return Err(Error::NonFinite { iteration: t });
        }
        x = if cfg.alpha >= 1.0 {
            x_g
        } else {
            let inputs = ProjectionInputs { target: Some(&x_g), data: Some((y, op)), frame: (n1, n2, frames) };
            let x_p = projector.project(inputs)?.bagged;
            skip_combine(&x_g, &x_p, cfg.alpha)?
        };
        if !x.is_finite() {
            return Err(Error::NonFinite { iteration: t });
        }
        trace.records.push(record(t, &x, y, op, truth, start)?);
    }
    Ok((x, trace))
}

fn e2e_impl<T: Real>(y: &Measurement, op: &SensingOperator, cfg: &BaggedConfig) -> Result<VideoCube> {
    let (n1, n2, frames) = op.dims();
    let mut e2e = cfg.clone();
    if e2e.omega == 0.0 {
        return argument("end-to-end fitting needs a positive measurement weight");
    }
    e2e.warm_start = false;
    let mut projector = BaggedProjector::<T>::new(e2e, n1, n2)?;
    let x = projector.project(ProjectionInputs { target: None, data: Some((y, op)), frame: (n1, n2, frames) })?.bagged;
    Ok(x)
}

/// Fits decoders to the snapshot alone (no outer loop) and bags them.
pub fn recover_e2e(y: &Measurement, op: &SensingOperator, cfg: &BaggedConfig) -> Result<VideoCube> {
    match cfg.precision {
        Precision::F32 => e2e_impl::<f32>(y, op, cfg),
        Precision::F64 => e2e_impl::<f64>(y, op, cfg),
    }
}
