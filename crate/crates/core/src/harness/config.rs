//! Experiment configuration: presets, flat `key = value` files and overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bdvp::{BaggedConfig, Precision, ScaleSpec};
use crate::error::{argument, Error, Result};
use crate::harness::synthetic::{SyntheticKind, SyntheticSpec};
use crate::nn::{FULL_BLOCKS, FULL_CHANNELS};
use crate::solver::{Mode, SolverConfig};

/// Iteration and network budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    /// Small networks and short schedules; CPU scale.
    #[default]
    Desk,
    /// Schedules and network width of the reference experiments.
    Full,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "full" => Ok(Self::Full),
            other => argument(format!("unknown profile `{other}` (expected desk or full)")),
        }
    }
}

impl Profile {
    /// Patch sizes for an `n1 × n2` frame, smallest first.
    pub fn patch_sizes(frame: (usize, usize)) -> Vec<usize> {
        let side = frame.0.min(frame.1);
        let mut sizes: Vec<usize> = [4, 2, 1].iter().map(|d| side / d).filter(|&s| s >= 8).collect();
        sizes.dedup();
        sizes
    }

    /// Inner iterations at the smaller scales; the full-frame scale gets twice this.
    pub fn base_inner_iters(self, noisy: bool) -> usize {
        match (self, noisy) {
            (Profile::Desk, _) => 30,
            (Profile::Full, false) => 2000,
            (Profile::Full, true) => 900,
        }
    }

    pub fn outer_iters(self, noisy: bool) -> usize {
        match (self, noisy) {
            (Profile::Desk, _) => 40,
            (Profile::Full, false) => 75,
            (Profile::Full, true) => 35,
        }
    }

    pub fn bagged(self, frame: (usize, usize), noisy: bool) -> BaggedConfig {
        let mut cfg = BaggedConfig::with_schedule(frame, &Self::patch_sizes(frame), self.base_inner_iters(noisy));
        if self == Profile::Full {
            cfg.channels = FULL_CHANNELS;
            cfg.n_blocks = FULL_BLOCKS;
            cfg.lr = 0.01;
        } else {
            cfg.warm_start = true;
        }
        cfg
    }

    /// GAP for clean snapshots, GD for noisy ones.
    pub fn solver(self, frame: (usize, usize), sigma: f64) -> SolverConfig {
        let noisy = sigma > 0.0;
        let bagged = self.bagged(frame, noisy);
        if noisy {
            SolverConfig::gd(bagged, self.outer_iters(true))
        } else {
            SolverConfig::gap(bagged, self.outer_iters(false))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VideoSource {
    Synthetic(SyntheticSpec),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskSource {
    /// Fresh `Bern(p)` mask drawn from `(p, seed)`.
    Random { p: f64, seed: u64 },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub video: VideoSource,
    pub mask: MaskSource,
    /// Noise level on the 0–255 scale.
    pub sigma: f64,
    pub seed: u64,
    pub solver: SolverConfig,
    pub out: PathBuf,
    pub profile: Profile,
    /// Write wall-clock seconds into the trace (breaks byte-identical reruns).
    pub timing: bool,
}

/// Every key accepted in a config file or as a flag.
pub const KEYS: &[&str] = &[
    "profile", "video", "n1", "n2", "frames", "amplitude", "input", "mask", "p", "sigma", "seed", "mode", "mu", "alpha",
    "omega", "scales", "inner_iters", "outer_iters", "lr", "channels", "blocks", "warm_start", "precision", "raw_init",
    "sequential", "out", "timing",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return argument(format!("line {}: expected key = value, got `{raw}`", no + 1));
        };
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return argument(format!("line {}: unknown key `{}`", no + 1, k.trim()));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

pub fn load_kv(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Argument(format!("config {}: {e}", path.display())))?;
    parse_kv(&text)
}

fn get<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    map.get(key)
        .map(|v| v.parse::<T>().map_err(|_| Error::Argument(format!("invalid value `{v}` for `{key}`"))))
        .transpose()
}

fn get_bool(map: &BTreeMap<String, String>, key: &str) -> Result<Option<bool>> {
    match map.get(key).map(String::as_str) {
        None => Ok(None),
        Some("1" | "true" | "yes" | "on") => Ok(Some(true)),
        Some("0" | "false" | "no" | "off") => Ok(Some(false)),
        Some(v) => argument(format!("invalid boolean `{v}` for `{key}`")),
    }
}

pub fn parse_list<T: FromStr>(s: &str, key: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<T>().map_err(|_| Error::Argument(format!("invalid entry `{v}` in `{key}`"))))
        .collect()
}

impl ExperimentConfig {
    /// Builds a config from merged settings; unspecified keys take the
    /// profile's defaults.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        for k in map.keys() {
            if !KEYS.contains(&k.as_str()) {
                return argument(format!("unknown key `{k}`"));
            }
        }
        let profile: Profile = get(map, "profile")?.unwrap_or_default();
        let seed: u64 = get(map, "seed")?.unwrap_or(0);
        let sigma: f64 = get(map, "sigma")?.unwrap_or(0.0);
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return argument(format!("sigma must be finite and nonnegative, got {sigma}"));
        }

        let video = match map.get("input") {
            Some(path) => VideoSource::File(PathBuf::from(path)),
            None => {
                let kind: SyntheticKind = get(map, "video")?.unwrap_or(SyntheticKind::MovingBlob);
                let n1 = get(map, "n1")?.unwrap_or(64);
                let n2 = get(map, "n2")?.unwrap_or(n1);
                let frames = get(map, "frames")?.unwrap_or(8);
                let amplitude = get(map, "amplitude")?.unwrap_or(2.0);
                VideoSource::Synthetic(SyntheticSpec::new(kind, n1, n2, frames, amplitude, seed))
            }
        };
        let mask = match map.get("mask") {
            Some(path) => MaskSource::File(PathBuf::from(path)),
            None => MaskSource::Random { p: get(map, "p")?.unwrap_or(0.5), seed },
        };

        // The frame size is only known up front for synthetic input; file
        // input is rescheduled once loaded (see `resolve_frame`).
        let frame = match &video {
            VideoSource::Synthetic(s) => (s.n1, s.n2),
            VideoSource::File(_) => (64, 64),
        };
        let mut solver = profile.solver(frame, sigma);
        apply_solver_overrides(&mut solver, map, frame)?;
        solver.bagged.seed = seed;

        Ok(Self {
            video,
            mask,
            sigma,
            seed,
            solver,
            out: PathBuf::from(map.get("out").map(String::as_str).unwrap_or("out")),
            profile,
            timing: get_bool(map, "timing")?.unwrap_or(false),
        })
    }

    /// Re-derives the schedule for a frame size learned after loading,
    /// keeping explicit overrides.
    pub fn resolve_frame(&mut self, frame: (usize, usize), map: &BTreeMap<String, String>) -> Result<()> {
        let mut solver = self.profile.solver(frame, self.sigma);
        apply_solver_overrides(&mut solver, map, frame)?;
        solver.bagged.seed = self.seed;
        self.solver = solver;
        Ok(())
    }
}

fn apply_solver_overrides(solver: &mut SolverConfig, map: &BTreeMap<String, String>, frame: (usize, usize)) -> Result<()> {
    if let Some(mode) = get::<Mode>(map, "mode")? {
        if mode != solver.mode {
            let mu = if mode == Mode::Gap { 1.0 } else { 0.1 };
            solver.mode = mode;
            solver.mu = mu;
        }
    }
    if let Some(mu) = get(map, "mu")? {
        solver.mu = mu;
    }
    if let Some(alpha) = get(map, "alpha")? {
        solver.alpha = alpha;
    }
    if let Some(t) = get(map, "outer_iters")? {
        solver.outer_iters = t;
    }
    if let Some(raw) = get_bool(map, "raw_init")? {
        solver.raw_init = raw;
    }
    let b = &mut solver.bagged;
    if let Some(s) = map.get("scales") {
        let sizes: Vec<usize> = parse_list(s, "scales")?;
        let base = b.inner_iters.iter().copied().min().unwrap_or(1);
        let rebuilt = BaggedConfig::with_schedule(frame, &sizes, base);
        b.scales = rebuilt.scales;
        b.inner_iters = rebuilt.inner_iters;
    }
    if let Some(s) = map.get("inner_iters") {
        let iters: Vec<usize> = parse_list(s, "inner_iters")?;
        b.inner_iters = match iters.len() {
            1 => b.scales.iter().map(|sc| if (sc.patch_h, sc.patch_w) == frame { 2 * iters[0] } else { iters[0] }).collect(),
            n if n == b.scales.len() => iters,
            n => return argument(format!("{n} inner iteration counts for {} scales", b.scales.len())),
        };
    }
    if let Some(v) = get(map, "omega")? {
        b.omega = v;
    }
    if let Some(v) = get(map, "lr")? {
        b.lr = v;
    }
    if let Some(v) = get(map, "channels")? {
        b.channels = v;
    }
    if let Some(v) = get(map, "blocks")? {
        b.n_blocks = v;
    }
    if let Some(v) = get_bool(map, "warm_start")? {
        b.warm_start = v;
    }
    if let Some(v) = map.get("precision") {
        b.precision = match v.as_str() {
            "f32" => Precision::F32,
            "f64" => Precision::F64,
            other => return argument(format!("unknown precision `{other}`")),
        };
    }
    if get_bool(map, "sequential")? == Some(true) {
        b.exec = crate::par::Exec::Sequential;
    }
    Ok(())
}

/// Scale list of a config, as patch heights.
pub fn scale_sizes(cfg: &BaggedConfig) -> Vec<usize> {
    cfg.scales.iter().map(|s: &ScaleSpec| s.patch_h).collect()
}
