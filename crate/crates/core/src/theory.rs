//! Closed-form recovery bounds, the optimal-`p` search, and Monte-Carlo
//! checks of the concentration identities behind them.
//!
//! All logarithms are base 2.

use rand::Rng;

use crate::cube::{VideoCube, RHO};
use crate::error::{argument, Error, Result};
use crate::par::Exec;
use crate::rng::{derive_seed, stream, Purpose};

/// Lower-order terms of the noisy bounds. The theorems only give their
/// growth rates; [`Vanishing::leading`] substitutes the leading orders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vanishing {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub upsilon: f64,
}

impl Vanishing {
    /// `α_n = 1/√log n`, `β_n = γ_n = 0`, `υ_n = (log n)^{-1/8}`.
    pub fn leading(n: usize) -> Self {
        let ln = (n as f64).log2();
        Self { alpha: 1.0 / ln.sqrt(), beta: 0.0, gamma: 0.0, upsilon: ln.powf(-0.125) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInputs {
    /// Pixels per frame.
    pub n: usize,
    pub frames: usize,
    /// Decoder parameter count.
    pub k: usize,
    pub p: f64,
    /// Representation error of the decoder class.
    pub delta: f64,
    /// Lipschitz constant of the decoder in its parameters.
    pub lipschitz: f64,
    pub rho: f64,
    /// Noise standard deviation on the `[0, 1]` scale.
    pub sigma_z: f64,
    /// `None` uses [`Vanishing::leading`].
    pub vanishing: Option<Vanishing>,
}

impl BoundInputs {
    pub fn new(n: usize, frames: usize, k: usize, p: f64) -> Self {
        Self { n, frames, k, p, delta: 0.0, lipschitz: 0.0, rho: RHO, sigma_z: 0.0, vanishing: None }
    }

    pub fn with_p(&self, p: f64) -> Self {
        Self { p, ..*self }
    }

    fn vanishing(&self) -> Vanishing {
        self.vanishing.unwrap_or_else(|| Vanishing::leading(self.n))
    }

    fn check(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::Domain(format!("n = {} is too small for log log n", self.n)));
        }
        if self.frames == 0 || self.k == 0 {
            return argument("frames and k must be positive");
        }
        let nonneg = [self.delta, self.lipschitz, self.rho, self.sigma_z];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return argument("delta, L, rho and sigma_z must be finite and nonnegative");
        }
        Ok(())
    }

    fn check_open_p(&self) -> Result<()> {
        self.check()?;
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::Domain(format!("bound diverges at p = {}", self.p)));
        }
        Ok(())
    }

    fn logs(&self) -> (f64, f64) {
        let ln = (self.n as f64).log2();
        (ln, ln.log2())
    }
}

/// `h(p) = p + (B−1)p²`.
pub fn h_of_p(p: f64, frames: usize) -> f64 {
    p + (frames as f64 - 1.0) * p * p
}

/// Noise-free reconstruction bound on `‖x − x̂‖/√(nB)`.
pub fn bound_noisefree(inp: &BoundInputs) -> Result<f64> {
    inp.check_open_p()?;
    let (n, b, k, p) = (inp.n as f64, inp.frames as f64, inp.k as f64, inp.p);
    let (ln, lln) = inp.logs();
    let spread = (p * (1.0 - p)).sqrt();
    let rep = (1.0 + b * p / (1.0 - p)).sqrt() * inp.delta;
    let net = 2.0 * inp.rho / spread * (k * b * b * lln / n).powf(0.25);
    let lip = inp.lipschitz / ln * (k / (n * b)).sqrt() * (b / spread + 1.0);
    Ok(rep + net + lip)
}

/// Largest frame count the noise-free guarantee covers: `⌊√(n/(k log n log log n))⌋`.
pub fn frame_limit(n: usize, k: usize) -> Result<usize> {
    if n < 4 || k == 0 {
        return argument("frame_limit needs n ≥ 4 and k ≥ 1");
    }
    let ln = (n as f64).log2();
    let v = (n as f64 / (k as f64 * ln * ln.log2())).sqrt();
    Ok(v.floor() as usize)
}

/// Noisy reconstruction bound on `‖x − x̂‖/√(nB)`.
pub fn bound_noisy_recon(inp: &BoundInputs) -> Result<f64> {
    inp.check_open_p()?;
    let (b, p) = (inp.frames as f64, inp.p);
    let (ln, _) = inp.logs();
    let v = inp.vanishing();
    let q = p * (1.0 - p);
    let rep = inp.delta * (1.0 + b * p / (1.0 - p)).sqrt();
    let noise = 3.0 * inp.sigma_z / q * (1.0 / ln).sqrt();
    let cross = (8.0 / ln).powf(0.25) * (inp.delta * inp.sigma_z / q).sqrt() * (1.0 + v.alpha);
    let net = (1.0 / q).sqrt() * inp.rho / ln.powf(0.125) * (1.0 + v.beta);
    Ok(rep + noise + cross + net + v.gamma)
}

/// Bound on the error of the temporal mean `‖x̄ − x̂̄‖/√n`. Defined at `p = 1`.
pub fn bound_noisy_meanframe(inp: &BoundInputs) -> Result<f64> {
    inp.check()?;
    if !(inp.p > 0.0 && inp.p <= 1.0) {
        return Err(Error::Domain(format!("mean-frame bound needs 0 < p ≤ 1, got {}", inp.p)));
    }
    let (n, b, k, p) = (inp.n as f64, inp.frames as f64, inp.k as f64, inp.p);
    let (ln, lln) = inp.logs();
    let v = inp.vanishing();
    let rep = inp.delta * (1.0 + 1.0 / (p * b)).sqrt();
    let noise = (2.0 * inp.rho * inp.sigma_z / b).sqrt() / p * (k * lln * h_of_p(p, inp.frames) / n).powf(0.25);
    let net = v.upsilon / (p * b.sqrt());
    let lip = inp.lipschitz / ln * (k / (n * b)).sqrt();
    Ok(rep + noise + net + lip)
}

/// Minimizes `bound` over `p`: best grid point, then golden-section search
/// on the neighbouring cells to `1e-4`. Ties go to the smaller `p`.
pub fn argmin_p(bound: impl Fn(&BoundInputs) -> Result<f64>, inputs: &BoundInputs, grid: &[f64]) -> Result<(f64, f64)> {
    if grid.len() < 3 {
        return argument("argmin_p needs at least three grid points");
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) || grid[0] <= 0.0 || grid[grid.len() - 1] >= 1.0 {
        return argument("grid must be strictly increasing inside (0, 1)");
    }
    let eval = |p: f64| bound(&inputs.with_p(p));
    let mut best = (0, eval(grid[0])?);
    for (i, &p) in grid.iter().enumerate().skip(1) {
        let v = eval(p)?;
        if v < best.1 {
            best = (i, v);
        }
    }
    let (i, grid_val) = best;
    let (mut lo, mut hi) = (grid[i.saturating_sub(1)], grid[(i + 1).min(grid.len() - 1)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut c = lo + g * (hi - lo);
    let (mut fa, mut fc) = (eval(a)?, eval(c)?);
    while hi - lo > 1e-5 {
        if fa <= fc {
            hi = c;
            c = a;
            fc = fa;
            a = hi - g * (hi - lo);
            fa = eval(a)?;
        } else {
            lo = a;
            a = c;
            fa = fc;
            c = lo + g * (hi - lo);
            fc = eval(c)?;
        }
    }
    let p_ref = 0.5 * (lo + hi);
    let v_ref = eval(p_ref)?;
    if v_ref < grid_val {
        Ok((p_ref, v_ref))
    } else {
        Ok((grid[i], grid_val))
    }
}

/// Evenly spaced grid `(1..=count)/(count+1)`.
pub fn open_grid(count: usize) -> Vec<f64> {
    (1..=count).map(|i| i as f64 / (count + 1) as f64).collect()
}

/// `E[(Σ Dᵢ uᵢ)²] = p²(Σu)² + (p − p²)Σu²` for i.i.d. `Dᵢ ~ Bern(p)`.
pub fn expected_energy(u: &[f64], p: f64) -> f64 {
    let s: f64 = u.iter().sum();
    let s2: f64 = u.iter().map(|v| v * v).sum();
    p * p * s * s + (p - p * p) * s2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub analytic: f64,
}

impl EnergyEstimate {
    /// `|mean − analytic| ≤ z·std_err`; exact agreement passes at zero variance.
    pub fn within(&self, z: f64) -> bool {
        (self.mean - self.analytic).abs() <= z * self.std_err + 1e-12 * self.analytic.abs().max(1.0)
    }
}

const BATCH: usize = 4096;

fn batches(trials: usize) -> Vec<(u64, usize)> {
    (0..trials.div_ceil(BATCH)).map(|b| (b as u64, BATCH.min(trials - b * BATCH))).collect()
}

/// Monte-Carlo estimate of `E[(Σ Dᵢ uᵢ)²]` next to its closed form.
pub fn mc_expected_energy(u: &[f64], p: f64, trials: usize, seed: u64) -> Result<EnergyEstimate> {
    mc_expected_energy_with(u, p, trials, seed, Exec::default())
}

pub fn mc_expected_energy_with(u: &[f64], p: f64, trials: usize, seed: u64, exec: Exec) -> Result<EnergyEstimate> {
    if trials == 0 {
        return argument("at least one trial is required");
    }
    if !(0.0..=1.0).contains(&p) {
        return argument(format!("p must lie in [0, 1], got {p}"));
    }
    // Welford per batch, merged in batch order.
    let parts = exec.map(batches(trials), |(b, count)| {
        let mut rng = stream(derive_seed(seed, &[b]), Purpose::MonteCarlo);
        let (mut mean, mut m2) = (0.0, 0.0);
        for i in 0..count {
            let proj: f64 = u.iter().filter(|_| rng.gen::<f64>() < p).sum();
            let e = proj * proj;
            let d = e - mean;
            mean += d / (i + 1) as f64;
            m2 += d * (e - mean);
        }
        (count as f64, mean, m2)
    });
    let (t, mean, m2) = parts.into_iter().fold((0.0, 0.0, 0.0), |(na, ma, sa), (nb, mb, sb)| {
        let n = na + nb;
        let d = mb - ma;
        (n, ma + d * nb / n, sa + sb + d * d * na * nb / n)
    });
    let var = if trials > 1 { m2 / (t - 1.0) } else { 0.0 };
    Ok(EnergyEstimate { mean, std_err: (var / t).sqrt(), analytic: expected_energy(u, p) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventCheck {
    /// Fraction of trials in which the event held.
    pub frequency: f64,
    /// Hoeffding lower bound `1 − exp(−2nε₁²/B²)` on that probability.
    pub hoeffding: f64,
}

/// Frequency of `‖H(x−x̃)‖²/n ≤ p²‖Σ(xᵢ−x̃ᵢ)‖²/n + (p−p²)‖x−x̃‖²/n + Bρ²ε₁`
/// over freshly drawn `Bern(p)` masks.
pub fn mc_event_check(x: &VideoCube, x_tilde: &VideoCube, p: f64, epsilon1: f64, trials: usize, seed: u64) -> Result<EventCheck> {
    mc_event_check_with(x, x_tilde, p, epsilon1, trials, seed, Exec::default())
}

pub fn mc_event_check_with(
    x: &VideoCube,
    x_tilde: &VideoCube,
    p: f64,
    epsilon1: f64,
    trials: usize,
    seed: u64,
    exec: Exec,
) -> Result<EventCheck> {
    x.ensure_same_dims(x_tilde)?;
    if trials == 0 {
        return argument("at least one trial is required");
    }
    if !(0.0..=1.0).contains(&p) {
        return argument(format!("p must lie in [0, 1], got {p}"));
    }
    let (n1, n2, frames) = x.dims();
    let n = n1 * n2;
    let diff = x.lincomb(1.0, x_tilde, -1.0)?;
    let d = diff.data();
    let sum_sq: f64 = (0..n).map(|j| (0..frames).map(|i| d[i * n + j]).sum::<f64>().powi(2)).sum();
    let rhs = p * p * sum_sq / n as f64 + (p - p * p) * diff.dot(&diff) / n as f64 + frames as f64 * RHO * RHO * epsilon1;
    let held = exec.map(batches(trials), |(b, count)| {
        let mut rng = stream(derive_seed(seed, &[b]), Purpose::MonteCarlo);
        let mut ok = 0usize;
        for _ in 0..count {
            let mut lhs = 0.0;
            for j in 0..n {
                let mut v = 0.0;
                for i in 0..frames {
                    if rng.gen::<f64>() < p {
                        v += d[i * n + j];
                    }
                }
                lhs += v * v;
            }
            if lhs / n as f64 <= rhs {
                ok += 1;
            }
        }
        ok
    });
    let held: usize = held.into_iter().sum();
    let b = frames as f64;
    Ok(EventCheck {
        frequency: held as f64 / trials as f64,
        hoeffding: 1.0 - (-2.0 * n as f64 * epsilon1 * epsilon1 / (b * b)).exp(),
    })
}
