//! Bagged multi-scale projection onto the range of untrained decoders.
//!
//! At every scale the frame is tiled into non-overlapping patches (all frames
//! deep). Each patch is mirror-padded, fitted by its own decoder with its own
//! latent, cropped and written back. The per-scale estimates are then averaged.

use crate::cube::{Measurement, Region, VideoCube};
use crate::error::{argument, Result};
use crate::measurement::SensingOperator;
use crate::nn::{train_with, DvpArchitecture, DvpModel, FitProblem, Real};
use crate::par::Exec;
use crate::rng::derive_seed;

/// Patch size of one bagging scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ScaleSpec {
    pub patch_h: usize,
    pub patch_w: usize,
}

/// Mirror padding on each side of a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub fn uniform(pad: usize) -> Self {
        Self { top: pad, bottom: pad, left: pad, right: pad }
    }
}

impl ScaleSpec {
    pub fn square(size: usize) -> Self {
        Self { patch_h: size, patch_w: size }
    }

    pub fn pad_h(&self) -> usize {
        self.patch_h / 8
    }

    pub fn pad_w(&self) -> usize {
        self.patch_w / 8
    }

    /// Padding around a patch so the padded size is divisible by `2^n_blocks`:
    /// `patch/8` on every side plus whatever the bottom/right edges need.
    pub fn padding(&self, n_blocks: usize) -> Padding {
        let f = 1usize << n_blocks;
        let round = |v: usize| v.div_ceil(f) * f;
        let (ph, pw) = (self.pad_h(), self.pad_w());
        let out_h = round(self.patch_h + 2 * ph);
        let out_w = round(self.patch_w + 2 * pw);
        Padding { top: ph, bottom: out_h - self.patch_h - ph, left: pw, right: out_w - self.patch_w - pw }
    }
}

/// Non-overlapping tiling of an `n1 × n2` frame, row-major.
pub fn partition(n1: usize, n2: usize, scale: ScaleSpec) -> Result<Vec<Region>> {
    if scale.patch_h == 0 || scale.patch_w == 0 || n1 % scale.patch_h != 0 || n2 % scale.patch_w != 0 {
        return argument(format!(
            "{}x{} patches do not tile a {n1}x{n2} frame",
            scale.patch_h, scale.patch_w
        ));
    }
    let mut regions = Vec::with_capacity((n1 / scale.patch_h) * (n2 / scale.patch_w));
    for r in (0..n1).step_by(scale.patch_h) {
        for c in (0..n2).step_by(scale.patch_w) {
            regions.push(Region::new(r, c, scale.patch_h, scale.patch_w));
        }
    }
    Ok(regions)
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * (n - 1);
    if period == 0 {
        return 0;
    }
    let m = i.rem_euclid(period);
    (if m >= n { period - m } else { m }) as usize
}

/// Reflection padding of every frame (edge samples are not repeated).
pub fn mirror_pad_sides(x: &VideoCube, pad: Padding) -> Result<VideoCube> {
    let (h, w, b) = x.dims();
    if pad.top.max(pad.bottom) >= h || pad.left.max(pad.right) >= w {
        return argument(format!("padding {pad:?} too large for a {h}x{w} patch"));
    }
    let (oh, ow) = (h + pad.top + pad.bottom, w + pad.left + pad.right);
    Ok(VideoCube::from_fn(oh, ow, b, |r, c, i| {
        let sr = reflect(r as isize - pad.top as isize, h);
        let sc = reflect(c as isize - pad.left as isize, w);
        x.get(sr, sc, i)
    }))
}

pub fn mirror_pad(x: &VideoCube, pad: usize) -> Result<VideoCube> {
    mirror_pad_sides(x, Padding::uniform(pad))
}

pub fn crop_pad_sides(x: &VideoCube, pad: Padding) -> Result<VideoCube> {
    let (h, w, _) = x.dims();
    if pad.top + pad.bottom >= h || pad.left + pad.right >= w {
        return argument(format!("cannot crop {pad:?} from a {h}x{w} patch"));
    }
    x.slice(Region::new(pad.top, pad.left, h - pad.top - pad.bottom, w - pad.left - pad.right))
}

pub fn crop_pad(x: &VideoCube, pad: usize) -> Result<VideoCube> {
    crop_pad_sides(x, Padding::uniform(pad))
}

/// Pointwise mean of equally shaped estimates, summed in list order.
pub fn bag(estimates: &[VideoCube]) -> Result<VideoCube> {
    let Some(first) = estimates.first() else {
        return argument("cannot bag an empty list of estimates");
    };
    let mut acc = first.clone();
    for e in &estimates[1..] {
        acc.ensure_same_dims(e)?;
        for (a, v) in acc.data_mut().iter_mut().zip(e.data()) {
            *a += v;
        }
    }
    let k = estimates.len() as f64;
    acc.data_mut().iter_mut().for_each(|v| *v /= k);
    Ok(acc)
}

/// Numeric type used for decoder training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaggedConfig {
    pub scales: Vec<ScaleSpec>,
    /// Inner iterations per scale, same order as `scales`.
    pub inner_iters: Vec<usize>,
    /// Weight of the measurement term.
    pub omega: f64,
    pub lr: f64,
    pub channels: usize,
    pub n_blocks: usize,
    /// Keep each decoder's weights across outer iterations instead of re-initializing.
    pub warm_start: bool,
    pub precision: Precision,
    pub exec: Exec,
    pub seed: u64,
}

impl BaggedConfig {
    /// Square scales with the full-frame scale trained for twice `base_iters`.
    pub fn with_schedule(frame: (usize, usize), patch_sizes: &[usize], base_iters: usize) -> Self {
        let scales: Vec<ScaleSpec> = patch_sizes
            .iter()
            .map(|&s| if s >= frame.0 && s >= frame.1 { ScaleSpec { patch_h: frame.0, patch_w: frame.1 } } else { ScaleSpec::square(s) })
            .collect();
        let inner_iters = scales
            .iter()
            .map(|s| if (s.patch_h, s.patch_w) == frame { 2 * base_iters } else { base_iters })
            .collect();
        Self {
            scales,
            inner_iters,
            omega: 0.1,
            lr: 0.004,
            channels: 16,
            n_blocks: 3,
            warm_start: false,
            precision: Precision::F32,
            exec: Exec::Parallel,
            seed: 0,
        }
    }

    /// Only the full-frame scale.
    pub fn single_full_frame(&self, frame: (usize, usize)) -> Self {
        let full = ScaleSpec { patch_h: frame.0, patch_w: frame.1 };
        let iters = self
            .scales
            .iter()
            .zip(&self.inner_iters)
            .find(|(s, _)| **s == full)
            .map(|(_, &i)| i)
            .unwrap_or_else(|| self.inner_iters.iter().copied().max().unwrap_or(1));
        Self { scales: vec![full], inner_iters: vec![iters], ..self.clone() }
    }

    /// Keeps only scale `k`.
    pub fn only_scale(&self, k: usize) -> Self {
        Self { scales: vec![self.scales[k]], inner_iters: vec![self.inner_iters[k]], ..self.clone() }
    }

    pub fn validate(&self, n1: usize, n2: usize) -> Result<()> {
        if self.scales.is_empty() {
            return argument("at least one bagging scale is required");
        }
        if self.scales.len() != self.inner_iters.len() {
            return argument("one inner iteration count is required per scale");
        }
        if self.inner_iters.iter().any(|&i| i == 0) {
            return argument("inner iteration counts must be positive");
        }
        if !(self.omega >= 0.0) {
            return argument(format!("omega must be non-negative, got {}", self.omega));
        }
        if !(self.lr > 0.0) {
            return argument("learning rate must be positive");
        }
        for s in &self.scales {
            partition(n1, n2, *s)?;
        }
        Ok(())
    }

    fn arch(&self, scale: ScaleSpec, frames: usize) -> Result<DvpArchitecture> {
        let pad = scale.padding(self.n_blocks);
        DvpArchitecture::new(
            scale.patch_h + pad.top + pad.bottom,
            scale.patch_w + pad.left + pad.right,
            frames,
            self.channels,
            self.n_blocks,
        )
    }
}

/// Per-scale estimates and their average.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub bagged: VideoCube,
    pub per_scale: Vec<VideoCube>,
}

struct Job<T: Real> {
    scale: usize,
    region: Region,
    model: Option<DvpModel<T>>,
    seed: u64,
}

struct JobOutput<T: Real> {
    scale: usize,
    region: Region,
    model: DvpModel<T>,
    patch: VideoCube,
    snapshots: Vec<VideoCube>,
}

/// What each decoder is fitted to.
#[derive(Debug, Clone, Copy)]
pub struct ProjectionInputs<'a> {
    /// Target cube `x^G`; `None` drops the target term (end-to-end fitting).
    pub target: Option<&'a VideoCube>,
    /// Measurement and operator for the `ω`-weighted data term.
    pub data: Option<(&'a Measurement, &'a SensingOperator)>,
    pub frame: (usize, usize, usize),
}

/// Stateful projector; holds decoders between calls when warm-starting.
#[derive(Debug, Clone)]
pub struct BaggedProjector<T: Real> {
    cfg: BaggedConfig,
    models: Vec<Vec<Option<DvpModel<T>>>>,
    calls: u64,
}

impl<T: Real> BaggedProjector<T> {
    pub fn new(cfg: BaggedConfig, n1: usize, n2: usize) -> Result<Self> {
        cfg.validate(n1, n2)?;
        let models = cfg
            .scales
            .iter()
            .map(|s| partition(n1, n2, *s).map(|r| vec![None; r.len()]))
            .collect::<Result<_>>()?;
        Ok(Self { cfg, models, calls: 0 })
    }

    pub fn config(&self) -> &BaggedConfig {
        &self.cfg
    }

    /// One projection with the full bagged ensemble.
    pub fn project(&mut self, inputs: ProjectionInputs<'_>) -> Result<Projection> {
        let (p, _) = self.project_tracked(inputs, 0)?;
        Ok(p)
    }

    /// As [`project`](Self::project), additionally returning per-scale
    /// snapshots every `record_every` inner steps (none when 0).
    pub fn project_tracked(&mut self, inputs: ProjectionInputs<'_>, record_every: usize) -> Result<(Projection, Vec<Vec<VideoCube>>)> {
        let (n1, n2, frames) = inputs.frame;
        if let Some(t) = inputs.target {
            crate::error::check_dims((n1, n2, frames), t.dims())?;
        }
        if let Some((y, op)) = inputs.data {
            crate::error::check_dims((n1, n2, frames), op.dims())?;
            crate::error::check_dims((n1, n2, 1), (y.n1(), y.n2(), 1))?;
        }
        if inputs.target.is_none() && inputs.data.is_none() {
            return argument("projection needs a target, a measurement, or both");
        }
        let call = self.calls;
        self.calls += 1;

        let mut jobs = Vec::new();
        for (k, scale) in self.cfg.scales.iter().enumerate() {
            for (i, region) in partition(n1, n2, *scale)?.into_iter().enumerate() {
                let model = if self.cfg.warm_start { self.models[k][i].take() } else { None };
                let seed = derive_seed(self.cfg.seed, &[call, k as u64, i as u64]);
                jobs.push(Job { scale: k, region, model, seed });
            }
        }

        let cfg = &self.cfg;
        let outputs = cfg.exec.try_map(jobs, |job| fit_region(cfg, &inputs, job, record_every))?;

        let mut per_scale = vec![VideoCube::zeros(n1, n2, frames); cfg.scales.len()];
        let mut snaps: Vec<Vec<VideoCube>> = vec![Vec::new(); cfg.scales.len()];
        let mut region_idx = vec![0usize; cfg.scales.len()];
        for out in outputs {
            per_scale[out.scale].write_region(out.region, &out.patch)?;
            if record_every > 0 {
                let s = &mut snaps[out.scale];
                if s.is_empty() {
                    s.resize(out.snapshots.len(), VideoCube::zeros(n1, n2, frames));
                }
                for (dst, src) in s.iter_mut().zip(&out.snapshots) {
                    dst.write_region(out.region, src)?;
                }
            }
            if cfg.warm_start {
                self.models[out.scale][region_idx[out.scale]] = Some(out.model);
            }
            region_idx[out.scale] += 1;
        }
        let bagged = bag(&per_scale)?;
        Ok((Projection { bagged, per_scale }, snaps))
    }
}

fn fit_region<T: Real>(cfg: &BaggedConfig, inputs: &ProjectionInputs<'_>, job: Job<T>, record_every: usize) -> Result<JobOutput<T>> {
    let _ftz = crate::nn::FlushDenormals::enable();
    let scale = cfg.scales[job.scale];
    let pad = scale.padding(cfg.n_blocks);
    let arch = cfg.arch(scale, inputs.frame.2)?;
    let mut model = match job.model {
        Some(m) => m,
        None => DvpModel::<T>::init(arch, job.seed)?,
    };
    let target = inputs.target.map(|t| t.slice(job.region).and_then(|s| mirror_pad_sides(&s, pad))).transpose()?;
    let local = inputs.data.map(|(y, op)| op.restrict(y, job.region)).transpose()?;
    let mut problem = match &target {
        Some(t) => FitProblem::target(t),
        None => FitProblem { target: None, data: None, omega: 0.0 },
    };
    if let Some((op, y)) = &local {
        problem = problem.with_measurement(y, op, (pad.top, pad.left), cfg.omega);
    }
    let mut snapshots = Vec::new();
    let iters = cfg.inner_iters[job.scale];
    train_with(&mut model, &problem, iters, cfg.lr, |step, _, out| {
        if record_every > 0 && step > 0 && step % record_every == 0 {
            let full = crate::nn::model::to_cube(&arch, out);
            snapshots.push(crop_pad_sides(&full, pad).expect("crop of a padded patch"));
        }
    })?;
    let patch = crop_pad_sides(&model.forward(), pad)?;
    if record_every > 0 {
        snapshots.push(patch.clone());
    }
    Ok(JobOutput { scale: job.scale, region: job.region, model, patch, snapshots })
}

/// Projects `x_g` at a single scale and returns that scale's assembled estimate.
pub fn project_scale(x_g: &VideoCube, y: &Measurement, op: &SensingOperator, scale: ScaleSpec, cfg: &BaggedConfig) -> Result<VideoCube> {
    let k = cfg.scales.iter().position(|s| *s == scale);
    let single = match k {
        Some(k) => cfg.only_scale(k),
        None => BaggedConfig { scales: vec![scale], inner_iters: vec![cfg.inner_iters.iter().copied().max().unwrap_or(1)], ..cfg.clone() },
    };
    let mut p = bdvp_project(x_g, y, op, &single)?;
    Ok(p.per_scale.remove(0))
}

/// One cold-start bagged projection of `x_g`.
pub fn bdvp_project(x_g: &VideoCube, y: &Measurement, op: &SensingOperator, cfg: &BaggedConfig) -> Result<Projection> {
    let (n1, n2, b) = x_g.dims();
    let inputs = ProjectionInputs { target: Some(x_g), data: Some((y, op)), frame: (n1, n2, b) };
    match cfg.precision {
        Precision::F32 => BaggedProjector::<f32>::new(cfg.clone(), n1, n2)?.project(inputs),
        Precision::F64 => BaggedProjector::<f64>::new(cfg.clone(), n1, n2)?.project(inputs),
    }
}
