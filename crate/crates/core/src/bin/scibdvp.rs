use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use scibdvp::harness::config::{load_kv, parse_list};
use scibdvp::harness::experiments::{load_video, point_seed, write_text};
use scibdvp::harness::*;
use scibdvp::io;
use scibdvp::theory::{open_grid, BoundInputs};
use scibdvp::{gen_mask, VideoCube};

#[derive(Parser)]
#[command(name = "scibdvp", version, about = "Snapshot compressive video recovery with bagged untrained video priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a Bernoulli mask cube.
    GenMask(Common),
    /// Render a synthetic test video.
    GenVideo(Common),
    /// Write the mask and snapshot of a video.
    Measure(Common),
    /// Measure and recover a video; writes recon.scic, trace.csv and metrics.csv.
    Recover(Common),
    /// Recovery PSNR over mask densities.
    SweepMask(Sweep),
    /// Recovery PSNR over skip-connection weights.
    SweepAlpha(Sweep),
    /// Recovery PSNR over measurement-term weights.
    SweepOmega(Sweep),
    /// Bagged vs per-scale denoising curves on x + z.
    DenoiseDemo(Denoise),
    /// Bound values and their minimizers over a p grid.
    TheoryBounds(Theory),
    /// Convert between a folder of grayscale frames and an SCIC cube.
    Convert(Convert),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<f64>,
    /// Noise level on the 0-255 scale.
    #[arg(long)]
    sigma: Option<f64>,
    /// gap, gd or e2e.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    /// Comma-separated patch sizes.
    #[arg(long)]
    scales: Option<String>,
    /// One count (full frame gets twice it) or one per scale.
    #[arg(long)]
    inner_iters: Option<String>,
    #[arg(long)]
    outer_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, conflicts_with = "full")]
    desk: bool,
    #[arg(long)]
    full: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock seconds in trace.csv.
    #[arg(long)]
    timing: bool,
    /// moving_blob, shifting_gradient or bouncing_rects.
    #[arg(long)]
    video: Option<String>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    amplitude: Option<f64>,
    /// SCIC video instead of a synthetic one.
    #[arg(long)]
    input: Option<PathBuf>,
    /// SCIC mask instead of a random one.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    warm_start: Option<bool>,
    /// Run every loop on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct Sweep {
    #[command(flatten)]
    common: Common,
    /// Comma-separated values; defaults depend on the sweep.
    #[arg(long)]
    values: Option<String>,
}

#[derive(Args)]
struct Denoise {
    #[command(flatten)]
    common: Common,
    /// Record PSNR every this many steps.
    #[arg(long, default_value_t = 10)]
    record_every: usize,
}

#[derive(Args)]
struct Theory {
    /// Pixels per frame.
    #[arg(long, default_value_t = 1 << 16)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    frames: usize,
    /// Decoder parameter count.
    #[arg(long, default_value_t = 1000)]
    k: usize,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    lipschitz: f64,
    /// Noise level on the [0, 1] scale.
    #[arg(long, default_value_t = 0.05)]
    sigma_z: f64,
    #[arg(long, default_value_t = 99)]
    grid_points: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct Convert {
    /// A folder of PNG/PGM frames or an .scic file.
    input: PathBuf,
    /// An .scic file or a folder to write PNG frames into.
    output: PathBuf,
}

impl Common {
    fn settings(&self) -> Result<BTreeMap<String, String>> {
        let mut map = match &self.config {
            Some(path) => load_kv(path)?,
            None => BTreeMap::new(),
        };
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        };
        set("p", self.p.map(|v| v.to_string()));
        set("sigma", self.sigma.map(|v| v.to_string()));
        set("mode", self.mode.clone());
        set("mu", self.mu.map(|v| v.to_string()));
        set("alpha", self.alpha.map(|v| v.to_string()));
        set("omega", self.omega.map(|v| v.to_string()));
        set("scales", self.scales.clone());
        set("inner_iters", self.inner_iters.clone());
        set("outer_iters", self.outer_iters.map(|v| v.to_string()));
        set("seed", self.seed.map(|v| v.to_string()));
        set("profile", self.full.then(|| "full".into()).or(self.desk.then(|| "desk".into())));
        set("out", self.out.as_ref().map(|p| p.display().to_string()));
        set("timing", self.timing.then(|| "true".into()));
        set("video", self.video.clone());
        set("n1", self.n1.map(|v| v.to_string()));
        set("n2", self.n2.map(|v| v.to_string()));
        set("frames", self.frames.map(|v| v.to_string()));
        set("amplitude", self.amplitude.map(|v| v.to_string()));
        set("input", self.input.as_ref().map(|p| p.display().to_string()));
        set("mask", self.mask.as_ref().map(|p| p.display().to_string()));
        set("lr", self.lr.map(|v| v.to_string()));
        set("channels", self.channels.map(|v| v.to_string()));
        set("warm_start", self.warm_start.map(|v| v.to_string()));
        set("sequential", self.sequential.then(|| "true".into()));
        Ok(map)
    }

    fn config(&self) -> Result<ExperimentConfig> {
        let map = self.settings()?;
        let mut cfg = ExperimentConfig::from_map(&map)?;
        if let VideoSource::File(_) = cfg.video {
            let (n1, n2, _) = load_video(&cfg.video)?.dims();
            cfg.resolve_frame((n1, n2), &map)?;
        }
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::GenMask(c) => gen_mask_cmd(&c),
        Command::GenVideo(c) => gen_video_cmd(&c),
        Command::Measure(c) => measure_cmd(&c),
        Command::Recover(c) => recover_cmd(&c),
        Command::SweepMask(s) => sweep_cmd(&s, "sweep_mask.csv"),
        Command::SweepAlpha(s) => sweep_cmd(&s, "sweep_alpha.csv"),
        Command::SweepOmega(s) => sweep_cmd(&s, "sweep_omega.csv"),
        Command::DenoiseDemo(d) => denoise_cmd(&d),
        Command::TheoryBounds(t) => theory_cmd(&t),
        Command::Convert(c) => convert_cmd(&c),
    }
}

fn out_file(dir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir.join(name))
}

fn gen_mask_cmd(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    let (n1, n2, frames) = match &cfg.video {
        VideoSource::Synthetic(s) => (s.n1, s.n2, s.frames),
        VideoSource::File(_) => load_video(&cfg.video)?.dims(),
    };
    let MaskSource::Random { p, seed } = cfg.mask else {
        bail!("gen-mask draws a random mask; drop --mask");
    };
    let mask = gen_mask(n1, n2, frames, p, point_seed(seed, p))?;
    let path = out_file(&cfg.out, "mask.scic")?;
    io::save_mask(&path, &mask)?;
    println!("{}", path.display());
    Ok(())
}

fn gen_video_cmd(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    let VideoSource::Synthetic(spec) = &cfg.video else {
        bail!("gen-video renders a synthetic video; drop --input");
    };
    let x = gen_synthetic(spec)?;
    let path = out_file(&cfg.out, "video.scic")?;
    io::save_cube(&path, &x)?;
    println!("{}", path.display());
    Ok(())
}

fn measure_cmd(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    let scene = prepare(&cfg)?;
    let mask_path = out_file(&cfg.out, "mask.scic")?;
    let y_path = cfg.out.join("measurement.scic");
    io::save_mask(&mask_path, scene.op.mask())?;
    io::save_measurement(&y_path, &scene.y)?;
    println!("{}\n{}", mask_path.display(), y_path.display());
    Ok(())
}

fn recover_cmd(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    let outcome = run_recover(&cfg)?;
    let s = &outcome.summary;
    println!(
        "psnr {:.2} dB  ssim {}  mean-frame psnr {:.2} dB",
        s.psnr,
        s.ssim.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into()),
        s.meanframe_psnr
    );
    for f in &outcome.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn sweep_cmd(s: &Sweep, name: &str) -> Result<()> {
    let cfg = s.common.config()?;
    let defaults = match name {
        "sweep_mask.csv" => "0.2,0.3,0.4,0.5,0.6,0.7,0.8",
        "sweep_alpha.csv" => "0.1,0.3,0.5,0.7,1.0",
        _ => "0,0.05,0.1,0.5",
    };
    let values: Vec<f64> = parse_list(s.values.as_deref().unwrap_or(defaults), "values")?;
    let csv = match name {
        "sweep_mask.csv" => mask_sweep_csv(&sweep_mask(&cfg, &values)?),
        "sweep_alpha.csv" => param_sweep_csv("alpha", &sweep_alpha(&cfg, &values)?),
        _ => param_sweep_csv("omega", &sweep_omega(&cfg, &values)?),
    };
    let path = out_file(&cfg.out, name)?;
    write_text(&path, &csv)?;
    print!("{csv}");
    Ok(())
}

fn denoise_cmd(d: &Denoise) -> Result<()> {
    let mut common = d.common.clone();
    // The demo is defined on additive noise only; default to σ = 25.
    if common.sigma.is_none() {
        common.sigma = Some(25.0);
    }
    let cfg = common.config()?;
    let x = load_video(&cfg.video)?;
    let trace = denoise_demo(&x, cfg.sigma, &cfg.solver.bagged, d.record_every, cfg.seed)?;
    let csv = trace.to_csv();
    let path = out_file(&cfg.out, "denoise.csv")?;
    write_text(&path, &csv)?;
    print!("{csv}");
    Ok(())
}

fn theory_cmd(t: &Theory) -> Result<()> {
    let inputs = BoundInputs { delta: t.delta, lipschitz: t.lipschitz, sigma_z: t.sigma_z, ..BoundInputs::new(t.n, t.frames, t.k, 0.5) };
    let csv = theory_bounds_csv(&inputs, &open_grid(t.grid_points))?;
    let path = out_file(&t.out, "theory_bounds.csv")?;
    write_text(&path, &csv)?;
    print!("{csv}");
    Ok(())
}

fn convert_cmd(c: &Convert) -> Result<()> {
    if c.input.is_dir() {
        let cube = read_frames(&c.input)?;
        io::save_cube(&c.output, &cube)?;
        println!("{}", c.output.display());
    } else {
        let cube = io::load_cube(&c.input).with_context(|| format!("reading {}", c.input.display()))?;
        write_frames(&cube, &c.output)?;
    }
    Ok(())
}

fn read_frames(dir: &Path) -> Result<VideoCube> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("png" | "pgm" | "pnm")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .png or .pgm frames in {}", dir.display());
    }
    let mut data = Vec::new();
    let mut dims = None;
    for p in &paths {
        let img = image::open(p).with_context(|| format!("reading {}", p.display()))?.into_luma16();
        let (w, h) = img.dimensions();
        if *dims.get_or_insert((h, w)) != (h, w) {
            bail!("{} is {}x{}, expected {:?}", p.display(), h, w, dims.unwrap());
        }
        data.extend(img.pixels().map(|px| px.0[0] as f64 / 65535.0));
    }
    let (h, w) = dims.expect("at least one frame");
    Ok(VideoCube::new(h as usize, w as usize, paths.len(), data)?)
}

fn write_frames(cube: &VideoCube, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (n1, n2, frames) = cube.dims();
    for i in 0..frames {
        let px: Vec<u8> = cube.frame(i).iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        let img = image::GrayImage::from_raw(n2 as u32, n1 as u32, px).expect("buffer matches dimensions");
        let path = dir.join(format!("frame_{i:04}.png"));
        img.save(&path).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}
