//! Recovery runs and parameter sweeps with CSV output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::bdvp::{bag, BaggedConfig, BaggedProjector, Precision, ProjectionInputs};
use crate::cube::{Measurement, VideoCube};
use crate::error::{check_dims, Error, Result};
use crate::harness::config::{ExperimentConfig, MaskSource, VideoSource};
use crate::harness::synthetic::gen_synthetic;
use crate::io;
use crate::measurement::{add_noise, add_noise_cube, gen_mask, MaskCube, SensingOperator};
use crate::metrics::psnr;
use crate::nn::Real;
use crate::par::Exec;
use crate::rng::derive_seed;
use crate::solver::{fmt_num, fmt_opt, recover, RunTrace, SolverConfig};
use crate::theory::{argmin_p, bound_noisefree, bound_noisy_meanframe, bound_noisy_recon, BoundInputs};

/// Seed of the mask and noise draws for one `(p, seed)` point.
pub fn point_seed(seed: u64, p: f64) -> u64 {
    derive_seed(seed, &[p.to_bits()])
}

/// Ground truth, operator and snapshot of one experiment.
#[derive(Debug, Clone)]
pub struct Scene {
    pub truth: VideoCube,
    pub op: SensingOperator,
    pub y: Measurement,
}

pub fn load_video(src: &VideoSource) -> Result<VideoCube> {
    match src {
        VideoSource::Synthetic(spec) => gen_synthetic(spec),
        VideoSource::File(path) => io::load_cube(path).map_err(|e| with_path(e, path)),
    }
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Io(io) => Error::Argument(format!("{}: {io}", path.display())),
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    }
}

pub fn load_mask(src: &MaskSource, dims: (usize, usize, usize)) -> Result<MaskCube> {
    let mask = match src {
        MaskSource::Random { p, seed } => gen_mask(dims.0, dims.1, dims.2, *p, point_seed(*seed, *p))?,
        MaskSource::File(path) => io::load_mask(path).map_err(|e| with_path(e, path))?,
    };
    check_dims(dims, mask.dims())?;
    Ok(mask)
}

/// Simulates the snapshot `y = Σ Dᵢ xᵢ + z` for a config.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Scene> {
    let truth = load_video(&cfg.video)?;
    let mask = load_mask(&cfg.mask, truth.dims())?;
    let noise_seed = match cfg.mask {
        MaskSource::Random { p, seed } => point_seed(seed, p),
        MaskSource::File(_) => cfg.seed,
    };
    let op = SensingOperator::new(mask);
    let y = add_noise(&op.forward(&truth)?, cfg.sigma, noise_seed)?;
    Ok(Scene { truth, op, y })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoverSummary {
    pub psnr: f64,
    pub ssim: Option<f64>,
    pub psnr_vs_meanframe: Option<f64>,
    /// PSNR of the repeated mean frame itself against the truth.
    pub meanframe_psnr: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct RecoverOutcome {
    pub estimate: VideoCube,
    pub trace: RunTrace,
    pub summary: RecoverSummary,
    pub files: Vec<PathBuf>,
}

fn summarize(scene: &Scene, estimate: &VideoCube, trace: &RunTrace) -> Result<RecoverSummary> {
    let last = trace.records.last().ok_or_else(|| Error::Argument("empty trace".into()))?;
    let mean = scene.truth.mean_frame().repeat_frame(scene.truth.frames());
    Ok(RecoverSummary {
        psnr: last.psnr.unwrap_or_else(|| psnr(&scene.truth, &estimate.clamped01()).unwrap_or(f64::NAN)),
        ssim: last.ssim,
        psnr_vs_meanframe: last.psnr_vs_meanframe,
        meanframe_psnr: psnr(&scene.truth, &mean)?,
        residual: last.residual,
    })
}

/// Runs one recovery on a prepared scene without touching the filesystem.
pub fn recover_scene(scene: &Scene, solver: &SolverConfig) -> Result<(VideoCube, RunTrace, RecoverSummary)> {
    let (estimate, trace) = recover(&scene.y, &scene.op, solver, Some(&scene.truth))?;
    let summary = summarize(scene, &estimate, &trace)?;
    Ok((estimate, trace, summary))
}

pub const METRICS_HEADER: &str = "psnr,ssim,psnr_vs_meanframe,meanframe_psnr,residual";

fn metrics_csv(s: &RecoverSummary) -> String {
    format!(
        "{METRICS_HEADER}\n{},{},{},{},{}\n",
        fmt_num(s.psnr),
        fmt_opt(s.ssim),
        fmt_opt(s.psnr_vs_meanframe),
        fmt_num(s.meanframe_psnr),
        fmt_num(s.residual)
    )
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    io::atomic_write(path, |w| {
        std::io::Write::write_all(w, text.as_bytes())?;
        Ok(())
    })
}

/// Measures, recovers and writes `recon.scic`, `trace.csv` and
/// `metrics.csv` under `cfg.out`. Nothing is written unless the run succeeds.
pub fn run_recover(cfg: &ExperimentConfig) -> Result<RecoverOutcome> {
    let scene = prepare(cfg)?;
    let (estimate, trace, summary) = recover_scene(&scene, &cfg.solver)?;
    let trace_csv = trace.to_csv(cfg.timing)?;
    std::fs::create_dir_all(&cfg.out)?;
    let files = vec![cfg.out.join("recon.scic"), cfg.out.join("trace.csv"), cfg.out.join("metrics.csv")];
    io::save_cube(&files[0], &estimate)?;
    write_text(&files[1], &trace_csv)?;
    write_text(&files[2], &metrics_csv(&summary))?;
    Ok(RecoverOutcome { estimate, trace, summary, files })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSweepRow {
    pub p: f64,
    pub sigma: f64,
    pub psnr: f64,
    pub ssim: Option<f64>,
    pub psnr_vs_meanframe: Option<f64>,
}

pub const MASK_SWEEP_HEADER: &str = "p,sigma,psnr,ssim,psnr_vs_meanframe";

fn fmt_param(v: f64) -> String {
    format!("{v}")
}

pub fn mask_sweep_csv(rows: &[MaskSweepRow]) -> String {
    let mut s = format!("{MASK_SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_param(r.p),
            fmt_param(r.sigma),
            fmt_num(r.psnr),
            fmt_opt(r.ssim),
            fmt_opt(r.psnr_vs_meanframe)
        );
    }
    s
}

/// Sweep points run as independent jobs; the inner projections then run
/// sequentially so the job pool is the only level of parallelism.
fn job_solver(cfg: &ExperimentConfig) -> (Exec, SolverConfig) {
    let mut solver = cfg.solver.clone();
    let exec = solver.bagged.exec;
    solver.bagged.exec = Exec::Sequential;
    (exec, solver)
}

/// One recovery per `p` with a fresh mask per `(p, seed)`.
pub fn sweep_mask(cfg: &ExperimentConfig, p_list: &[f64]) -> Result<Vec<MaskSweepRow>> {
    let (exec, solver) = job_solver(cfg);
    exec.try_map(p_list.to_vec(), |p| {
        let mut point = cfg.clone();
        point.mask = MaskSource::Random { p, seed: cfg.seed };
        let scene = prepare(&point)?;
        let (_, _, s) = recover_scene(&scene, &solver)?;
        Ok(MaskSweepRow { p, sigma: cfg.sigma, psnr: s.psnr, ssim: s.ssim, psnr_vs_meanframe: s.psnr_vs_meanframe })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSweepRow {
    pub value: f64,
    pub psnr: f64,
    pub ssim: Option<f64>,
}

pub fn param_sweep_csv(name: &str, rows: &[ParamSweepRow]) -> String {
    let mut s = format!("{name},psnr,ssim\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", fmt_param(r.value), fmt_num(r.psnr), fmt_opt(r.ssim));
    }
    s
}

fn sweep_param(cfg: &ExperimentConfig, values: &[f64], set: impl Fn(&mut SolverConfig, f64) + Sync) -> Result<Vec<ParamSweepRow>> {
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let scene = prepare(cfg)?;
    let (exec, solver) = job_solver(cfg);
    exec.try_map(values.to_vec(), |v| {
        let mut s = solver.clone();
        set(&mut s, v);
        let (_, _, sum) = recover_scene(&scene, &s)?;
        Ok(ParamSweepRow { value: v, psnr: sum.psnr, ssim: sum.ssim })
    })
}

/// Skip-connection weight sweep on one scene.
pub fn sweep_alpha(cfg: &ExperimentConfig, alphas: &[f64]) -> Result<Vec<ParamSweepRow>> {
    sweep_param(cfg, alphas, |s, a| s.alpha = a)
}

/// Measurement-term weight sweep on one scene.
pub fn sweep_omega(cfg: &ExperimentConfig, omegas: &[f64]) -> Result<Vec<ParamSweepRow>> {
    sweep_param(cfg, omegas, |s, w| s.bagged.omega = w)
}

/// PSNR curves of a bagged denoiser and of each of its scales.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseTrace {
    /// Patch height of each scale.
    pub scales: Vec<usize>,
    pub iters: Vec<usize>,
    pub bagged: Vec<f64>,
    /// `per_scale[k][t]`.
    pub per_scale: Vec<Vec<f64>>,
    /// PSNR of the noisy input.
    pub noisy_psnr: f64,
}

impl DenoiseTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,bagged");
        for sc in &self.scales {
            let _ = write!(s, ",scale_{sc}");
        }
        s.push('\n');
        for (t, it) in self.iters.iter().enumerate() {
            let _ = write!(s, "{it},{}", fmt_num(self.bagged[t]));
            for k in &self.per_scale {
                let _ = write!(s, ",{}", fmt_num(k[t]));
            }
            s.push('\n');
        }
        s
    }
}

/// Sum of absolute successive differences.
pub fn total_variation(series: &[f64]) -> f64 {
    series.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Denoises `x + z` (no masking) with the bagged decoders, all scales run
/// for the same number of steps, recording PSNR every `record_every` steps.
pub fn denoise_demo(x: &VideoCube, sigma: f64, bagged: &BaggedConfig, record_every: usize, seed: u64) -> Result<DenoiseTrace> {
    let noisy = add_noise_cube(x, sigma, seed)?;
    let steps = bagged.inner_iters.iter().copied().max().unwrap_or(1);
    let mut cfg = bagged.clone();
    cfg.inner_iters = vec![steps; cfg.scales.len()];
    cfg.warm_start = false;
    let every = record_every.clamp(1, steps);
    let (n1, n2, frames) = x.dims();
    let inputs = ProjectionInputs { target: Some(&noisy), data: None, frame: (n1, n2, frames) };
    let snaps = match cfg.precision {
        Precision::F32 => tracked::<f32>(&cfg, inputs, every, n1, n2)?,
        Precision::F64 => tracked::<f64>(&cfg, inputs, every, n1, n2)?,
    };
    let points = snaps[0].len();
    let mut iters: Vec<usize> = (1..points).map(|i| i * every).collect();
    iters.push(steps);
    let per_scale = snaps
        .iter()
        .map(|s| s.iter().map(|c| psnr(x, &c.clamped01())).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut bagged_curve = Vec::with_capacity(points);
    for t in 0..points {
        let at: Vec<VideoCube> = snaps.iter().map(|s| s[t].clone()).collect();
        bagged_curve.push(psnr(x, &bag(&at)?.clamped01())?);
    }
    Ok(DenoiseTrace {
        scales: cfg.scales.iter().map(|s| s.patch_h).collect(),
        iters,
        bagged: bagged_curve,
        per_scale,
        noisy_psnr: psnr(x, &noisy)?,
    })
}

fn tracked<T: Real>(cfg: &BaggedConfig, inputs: ProjectionInputs<'_>, every: usize, n1: usize, n2: usize) -> Result<Vec<Vec<VideoCube>>> {
    let mut projector = BaggedProjector::<T>::new(cfg.clone(), n1, n2)?;
    let (_, snaps) = projector.project_tracked(inputs, every)?;
    Ok(snaps)
}

pub const THEORY_HEADER: &str = "p,bound_noisefree,bound_noisy_recon,bound_noisy_meanframe";

/// Bound values over `grid` followed by an `argmin` row.
pub fn theory_bounds_csv(inputs: &BoundInputs, grid: &[f64]) -> Result<String> {
    let mut s = format!("{THEORY_HEADER}\n");
    for &p in grid {
        let at = inputs.with_p(p);
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_param(p),
            fmt_num(bound_noisefree(&at)?),
            fmt_num(bound_noisy_recon(&at)?),
            fmt_num(bound_noisy_meanframe(&at)?)
        );
    }
    let (a, _) = argmin_p(bound_noisefree, inputs, grid)?;
    let (b, _) = argmin_p(bound_noisy_recon, inputs, grid)?;
    let (c, _) = argmin_p(bound_noisy_meanframe, inputs, grid)?;
    let _ = writeln!(s, "argmin,{a:.6},{b:.6},{c:.6}");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_of_series() {
        assert_eq!(total_variation(&[1.0, 3.0, 2.0, 2.0]), 3.0);
        assert_eq!(total_variation(&[5.0]), 0.0);
    }

    #[test]
    fn empty_param_sweep_is_header_only() {
        let cfg = ExperimentConfig::from_map(&Default::default()).unwrap();
        let rows = sweep_omega(&cfg, &[]).unwrap();
        assert_eq!(param_sweep_csv("omega", &rows), "omega,psnr,ssim\n");
    }

    #[test]
    fn point_seeds_differ_by_p() {
        assert_ne!(point_seed(1, 0.3), point_seed(1, 0.4));
        assert_eq!(point_seed(1, 0.3), point_seed(1, 0.3));
    }

    #[test]
    fn theory_csv_shape() {
        let inp = BoundInputs { delta: 0.01, sigma_z: 0.05, lipschitz: 1.0, ..BoundInputs::new(1 << 16, 8, 1000, 0.5) };
        let grid = crate::theory::open_grid(9);
        let csv = theory_bounds_csv(&inp, &grid).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0], THEORY_HEADER);
        assert!(lines[10].starts_with("argmin,"));
    }
}
