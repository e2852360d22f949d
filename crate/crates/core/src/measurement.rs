//! The snapshot forward model `y = Σᵢ Dᵢ xᵢ + z` with binary masks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cube::{Measurement, Region, VideoCube};
use crate::error::{argument, check_dims, Result};
use crate::rng::{stream, Purpose};

/// A binary `n1 × n2 × frames` modulation cube with the Bernoulli parameter it was drawn with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskCube {
    n1: usize,
    n2: usize,
    frames: usize,
    bits: Vec<u8>,
    /// Bernoulli parameter stored as raw bits so the struct stays `Eq`.
    p_bits: u64,
    pub seed: u64,
}

impl MaskCube {
    pub fn from_bits(n1: usize, n2: usize, frames: usize, bits: Vec<u8>, p: f64, seed: u64) -> Result<Self> {
        if n1 == 0 || n2 == 0 || frames == 0 {
            return argument("mask dimensions must be positive");
        }
        if bits.len() != n1 * n2 * frames {
            return argument(format!("mask needs {} entries, got {}", n1 * n2 * frames, bits.len()));
        }
        if bits.iter().any(|&b| b > 1) {
            return argument("mask entries must be 0 or 1");
        }
        Ok(Self { n1, n2, frames, bits, p_bits: p.to_bits(), seed })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n1, self.n2, self.frames)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn pixels(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn p(&self) -> f64 {
        f64::from_bits(self.p_bits)
    }

    pub fn frame(&self, i: usize) -> &[u8] {
        let n = self.pixels();
        &self.bits[i * n..(i + 1) * n]
    }

    pub fn density(&self) -> f64 {
        self.bits.iter().map(|&b| b as usize).sum::<usize>() as f64 / self.bits.len() as f64
    }

    fn slice(&self, region: Region) -> MaskCube {
        let mut bits = Vec::with_capacity(region.h * region.w * self.frames);
        for i in 0..self.frames {
            for r in 0..region.h {
                let start = (i * self.n1 + region.row + r) * self.n2 + region.col;
                bits.extend_from_slice(&self.bits[start..start + region.w]);
            }
        }
        MaskCube { n1: region.h, n2: region.w, frames: self.frames, bits, p_bits: self.p_bits, seed: self.seed }
    }
}

/// Draws an i.i.d. Bernoulli(`p`) mask from the seed's mask stream.
pub fn gen_mask(n1: usize, n2: usize, frames: usize, p: f64, seed: u64) -> Result<MaskCube> {
    if !(0.0..=1.0).contains(&p) {
        return argument(format!("mask probability must lie in [0, 1], got {p}"));
    }
    if n1 == 0 || n2 == 0 || frames == 0 {
        return argument("mask dimensions must be positive");
    }
    let mut rng = stream(seed, Purpose::Mask);
    let bits = (0..n1 * n2 * frames).map(|_| u8::from(rng.gen::<f64>() < p)).collect();
    MaskCube::from_bits(n1, n2, frames, bits, p, seed)
}

/// The sensing matrix `H = [D₁, …, D_B]` in structured form.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingOperator {
    mask: MaskCube,
    gram_diag: Vec<f64>,
}

impl SensingOperator {
    pub fn new(mask: MaskCube) -> Self {
        let n = mask.pixels();
        let mut gram_diag = vec![0.0; n];
        for i in 0..mask.frames {
            for (g, &b) in gram_diag.iter_mut().zip(mask.frame(i)) {
                *g += b as f64;
            }
        }
        Self { mask, gram_diag }
    }

    pub fn mask(&self) -> &MaskCube {
        &self.mask
    }

    /// Diagonal of `H Hᵀ`: the number of active frames at each pixel.
    pub fn gram_diag(&self) -> &[f64] {
        &self.gram_diag
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.mask.dims()
    }

    pub fn max_gram(&self) -> f64 {
        self.gram_diag.iter().copied().fold(0.0, f64::max)
    }

    fn check_frame(&self, y: &Measurement) -> Result<()> {
        check_dims((self.mask.n1, self.mask.n2, 1), (y.n1(), y.n2(), 1))
    }

    /// `H x`, noise-free.
    pub fn forward(&self, x: &VideoCube) -> Result<Measurement> {
        check_dims(self.dims(), x.dims())?;
        let mut y = vec![0.0; self.mask.pixels()];
        for i in 0..self.mask.frames {
            for ((acc, &b), &v) in y.iter_mut().zip(self.mask.frame(i)).zip(x.frame(i)) {
                if b != 0 {
                    *acc += v;
                }
            }
        }
        Ok(Measurement::from_raw(self.mask.n1, self.mask.n2, y, 0.0))
    }

    /// `Hᵀ y`: frame `i` is `Cᵢ ⊙ Y`.
    pub fn adjoint(&self, y: &Measurement) -> Result<VideoCube> {
        self.check_frame(y)?;
        let (n1, n2, frames) = self.dims();
        let mut out = VideoCube::zeros(n1, n2, frames);
        for i in 0..frames {
            for ((o, &b), &v) in out.frame_mut(i).iter_mut().zip(self.mask.frame(i)).zip(y.data()) {
                *o = if b != 0 { v } else { 0.0 };
            }
        }
        Ok(out)
    }

    /// `(H Hᵀ)⁺ r`, with zero-coverage pixels mapped to 0.
    pub fn gram_apply_inverse(&self, r: &Measurement) -> Result<Measurement> {
        self.check_frame(r)?;
        let data = r
            .data()
            .iter()
            .zip(&self.gram_diag)
            .map(|(&v, &g)| if g > 0.0 { v / g } else { 0.0 })
            .collect();
        Ok(Measurement::from_raw(r.n1(), r.n2(), data, r.sigma))
    }

    /// `y − H x`.
    pub fn residual(&self, x: &VideoCube, y: &Measurement) -> Result<Measurement> {
        self.check_frame(y)?;
        let mut hx = self.forward(x)?;
        for (h, &v) in hx.data_mut().iter_mut().zip(y.data()) {
            *h = v - *h;
        }
        hx.sigma = y.sigma;
        Ok(hx)
    }

    /// Sub-operator and co-located measurement over `region` (all frames).
    pub fn restrict(&self, y: &Measurement, region: Region) -> Result<(SensingOperator, Measurement)> {
        self.check_frame(y)?;
        if !region.fits(self.mask.n1, self.mask.n2) {
            return argument(format!(
                "region {region:?} outside a {}x{} frame",
                self.mask.n1, self.mask.n2
            ));
        }
        Ok((SensingOperator::new(self.mask.slice(region)), y.slice(region)?))
    }
}

fn perturb(data: &mut [f64], sigma: f64, seed: u64) -> Result<()> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return argument(format!("noise sigma must be finite and non-negative, got {sigma}"));
    }
    if sigma == 0.0 {
        return Ok(());
    }
    let std = sigma / 255.0;
    let mut rng = stream(seed, Purpose::Noise);
    for v in data {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += std * z;
    }
    Ok(())
}

/// Adds i.i.d. Gaussian noise of standard deviation `sigma / 255`.
pub fn add_noise(y: &Measurement, sigma: f64, seed: u64) -> Result<Measurement> {
    let mut out = y.clone();
    perturb(out.data_mut(), sigma, seed)?;
    out.sigma = sigma;
    Ok(out)
}

/// `x + z` with the same noise model as [`add_noise`]; no masking.
pub fn add_noise_cube(x: &VideoCube, sigma: f64, seed: u64) -> Result<VideoCube> {
    let mut out = x.clone();
    perturb(out.data_mut(), sigma, seed)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Explicit `n × nB` matrix `[D₁, …, D_B]`.
    fn dense_h(mask: &MaskCube) -> Vec<Vec<f64>> {
        let n = mask.pixels();
        let mut h = vec![vec![0.0; n * mask.frames()]; n];
        for i in 0..mask.frames() {
            for j in 0..n {
                h[j][i * n + j] = mask.frame(i)[j] as f64;
            }
        }
        h
    }

    fn random_cube(n1: usize, n2: usize, b: usize, seed: u64) -> VideoCube {
        let mut rng = stream(seed, Purpose::Synthetic);
        VideoCube::from_fn(n1, n2, b, |_, _, _| rng.gen::<f64>())
    }

    #[test]
    fn degenerate_masks() {
        assert!(gen_mask(2, 2, 2, 1.0, 7).unwrap().bits().iter().all(|&b| b == 1));
        assert!(gen_mask(2, 2, 2, 0.0, 7).unwrap().bits().iter().all(|&b| b == 0));
        assert!(gen_mask(2, 2, 2, 1.5, 7).is_err());
        assert!(gen_mask(0, 2, 2, 0.5, 7).is_err());
    }

    #[test]
    fn mask_density_within_binomial_interval() {
        let m = gen_mask(64, 64, 8, 0.5, 1).unwrap();
        let tol = 3.0 * (0.25f64 / 32768.0).sqrt();
        assert!((m.density() - 0.5).abs() <= tol, "density {}", m.density());
        assert_eq!(m, gen_mask(64, 64, 8, 0.5, 1).unwrap());
    }

    #[test]
    fn forward_small_cases() {
        let op = SensingOperator::new(gen_mask(3, 3, 1, 1.0, 0).unwrap());
        let x = random_cube(3, 3, 1, 4);
        assert_eq!(op.forward(&x).unwrap().data(), x.data());

        let op = SensingOperator::new(MaskCube::from_bits(1, 1, 2, vec![1, 1], 1.0, 0).unwrap());
        let x = VideoCube::new(1, 1, 2, vec![0.2, 0.3]).unwrap();
        assert!((op.forward(&x).unwrap().data()[0] - 0.5).abs() < 1e-15);
        assert!(op.forward(&VideoCube::zeros(1, 1, 3)).is_err());
    }

    #[test]
    fn adjoint_small_cases() {
        let y = Measurement::new(2, 2, vec![0.1, 0.2, 0.3, 0.4], 0.0).unwrap();
        let ones = SensingOperator::new(gen_mask(2, 2, 3, 1.0, 0).unwrap());
        let a = ones.adjoint(&y).unwrap();
        for i in 0..3 {
            assert_eq!(a.frame(i), y.data());
        }
        let zeros = SensingOperator::new(gen_mask(2, 2, 3, 0.0, 0).unwrap());
        assert!(zeros.adjoint(&y).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gram_inverse_conventions() {
        let op = SensingOperator::new(MaskCube::from_bits(1, 2, 3, vec![1, 0, 1, 0, 1, 0], 0.5, 0).unwrap());
        assert_eq!(op.gram_diag(), &[3.0, 0.0]);
        let r = Measurement::new(1, 2, vec![0.6, 5.0], 0.0).unwrap();
        let g = op.gram_apply_inverse(&r).unwrap();
        assert!((g.data()[0] - 0.2).abs() < 1e-15);
        assert_eq!(g.data()[1], 0.0);

        let id = SensingOperator::new(gen_mask(3, 2, 1, 1.0, 0).unwrap());
        let r = Measurement::new(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6], 0.0).unwrap();
        assert_eq!(id.gram_apply_inverse(&r).unwrap(), r);
    }

    #[test]
    fn matches_dense_oracle_on_small_instances() {
        let mut seed = 0;
        for n1 in 1..=4 {
            for n2 in 1..=4 {
                for b in 1..=3 {
                    seed += 1;
                    let mask = gen_mask(n1, n2, b, 0.5, seed).unwrap();
                    let op = SensingOperator::new(mask.clone());
                    let h = dense_h(&mask);
                    let x = random_cube(n1, n2, b, seed + 1000);
                    let y = op.forward(&x).unwrap();
                    for (j, row) in h.iter().enumerate() {
                        let d: f64 = row.iter().zip(x.data()).map(|(a, b)| a * b).sum();
                        assert!((d - y.data()[j]).abs() <= 1e-12 * d.abs().max(1.0));
                        let g: f64 = row.iter().map(|a| a * a).sum();
                        assert_eq!(g, op.gram_diag()[j]);
                    }
                    let at = op.adjoint(&y).unwrap();
                    for col in 0..n1 * n2 * b {
                        let d: f64 = (0..n1 * n2).map(|j| h[j][col] * y.data()[j]).sum();
                        assert!((d - at.data()[col]).abs() <= 1e-12 * d.abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn restrict_matches_slicing_and_tiles() {
        let mask = gen_mask(6, 6, 2, 0.5, 9).unwrap();
        let op = SensingOperator::new(mask.clone());
        let x = random_cube(6, 6, 2, 10);
        let y = op.forward(&x).unwrap();

        let (full_op, full_y) = op.restrict(&y, Region::full(6, 6)).unwrap();
        assert_eq!(full_op, op);
        assert_eq!(full_y, y);

        let reg = Region::new(2, 3, 3, 3);
        let (sub, ysub) = op.restrict(&y, reg).unwrap();
        assert_eq!(sub.forward(&x.slice(reg).unwrap()).unwrap().data(), ysub.data());
        // dense oracle: rows of the region, columns of the region in every frame
        let h = dense_h(&mask);
        let hs = dense_h(sub.mask());
        for r in 0..3 {
            for c in 0..3 {
                let j = (reg.row + r) * 6 + reg.col + c;
                let js = r * 3 + c;
                for i in 0..2 {
                    assert_eq!(hs[js][i * 9 + js], h[j][i * 36 + j]);
                }
            }
        }

        let mut tiled = vec![0.0; 36];
        for tr in 0..2 {
            for tc in 0..2 {
                let reg = Region::new(tr * 3, tc * 3, 3, 3);
                let (sub, _) = op.restrict(&y, reg).unwrap();
                let part = sub.forward(&x.slice(reg).unwrap()).unwrap();
                for r in 0..3 {
                    for c in 0..3 {
                        tiled[(reg.row + r) * 6 + reg.col + c] = part.get(r, c);
                    }
                }
            }
        }
        assert_eq!(tiled.as_slice(), y.data());
        assert!(op.restrict(&y, Region::new(4, 4, 3, 3)).is_err());
    }

    #[test]
    fn noise_statistics_and_determinism() {
        let y = Measurement::zeros(64, 64);
        assert_eq!(add_noise(&y, 0.0, 3).unwrap().data(), y.data());
        let a = add_noise(&y, 25.0, 3).unwrap();
        let b = add_noise(&y, 25.0, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sigma, 25.0);
        let n = a.data().len() as f64;
        let mean = a.data().iter().sum::<f64>() / n;
        let sd = (a.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd / (25.0 / 255.0) - 1.0).abs() < 0.05, "sd {sd}");
        assert!(add_noise(&y, -1.0, 3).is_err());
    }

    #[test]
    fn expected_energy_identity_monte_carlo() {
        // E[(Σ Dᵢuᵢ)²] = p²(Σuᵢ)² + (p − p²)Σuᵢ², checked per pixel over many masks.
        let u = [0.3, -0.7, 0.5, 0.9];
        let p = 0.35;
        let s: f64 = u.iter().sum();
        let s2: f64 = u.iter().map(|v| v * v).sum();
        let analytic = p * p * s * s + (p - p * p) * s2;
        let x = VideoCube::from_fn(32, 32, 4, |_, _, i| u[i]);
        let mut samples = Vec::new();
        for seed in 0..20 {
            let op = SensingOperator::new(gen_mask(32, 32, 4, p, seed).unwrap());
            samples.extend(op.forward(&x).unwrap().data().iter().map(|v| v * v));
        }
        let m = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / m;
        let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        assert!((mean - analytic).abs() <= 3.0 * (var / m).sqrt());
    }

    proptest! {
        #[test]
        fn adjoint_identity(seed in 0u64..1000, n1 in 1usize..8, n2 in 1usize..8, b in 1usize..5) {
            let op = SensingOperator::new(gen_mask(n1, n2, b, 0.5, seed).unwrap());
            let x = random_cube(n1, n2, b, seed ^ 77);
            let yc = random_cube(n1, n2, 1, seed ^ 99);
            let y = Measurement::new(n1, n2, yc.data().to_vec(), 0.0).unwrap();
            let lhs = op.forward(&x).unwrap().dot(&y);
            let rhs = x.dot(&op.adjoint(&y).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-10 * x.norm() * y.norm());
        }

        #[test]
        fn energy_bounded_by_frames(seed in 0u64..1000, b in 1usize..6) {
            let op = SensingOperator::new(gen_mask(5, 5, b, 0.6, seed).unwrap());
            let mut rng = stream(seed, Purpose::Synthetic);
            let u = VideoCube::from_fn(5, 5, b, |_, _, _| rng.gen::<f64>() * 2.0 - 1.0);
            let hu = op.forward(&u).unwrap().norm();
            prop_assert!(hu * hu <= b as f64 * u.dot(&u) + 1e-12);
        }
    }
}
