//! Data cubes and 2D measurement frames.

use crate::error::{argument, check_dims, Error, Result};

/// Peak amplitude of signals normalized to `[0, 1]` (so `‖x‖∞ ≤ RHO / 2`).
pub const RHO: f64 = 2.0;

/// An `n1 × n2 × frames` real cube, stored frame-major, row-major within a frame.
///
/// Ground-truth videos live in `[0, 1]`; intermediate iterates of the solver
/// may leave that range and are only required to be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoCube {
    n1: usize,
    n2: usize,
    frames: usize,
    data: Vec<f64>,
}

/// A rectangle of pixels inside a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub h: usize,
    pub w: usize,
}

impl Region {
    pub fn new(row: usize, col: usize, h: usize, w: usize) -> Self {
        Self { row, col, h, w }
    }

    pub fn full(n1: usize, n2: usize) -> Self {
        Self::new(0, 0, n1, n2)
    }

    pub fn fits(&self, n1: usize, n2: usize) -> bool {
        self.h > 0 && self.w > 0 && self.row + self.h <= n1 && self.col + self.w <= n2
    }

    fn check(&self, n1: usize, n2: usize) -> Result<()> {
        if self.fits(n1, n2) {
            Ok(())
        } else {
            argument(format!("region {self:?} does not fit a {n1}x{n2} frame"))
        }
    }
}

fn check_finite(data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        argument("cube contains non-finite values")
    }
}

impl VideoCube {
    pub fn new(n1: usize, n2: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        if n1 == 0 || n2 == 0 || frames == 0 {
            return argument(format!("cube dimensions must be positive, got {n1}x{n2}x{frames}"));
        }
        if data.len() != n1 * n2 * frames {
            return argument(format!(
                "cube {n1}x{n2}x{frames} needs {} values, got {}",
                n1 * n2 * frames,
                data.len()
            ));
        }
        check_finite(&data)?;
        Ok(Self { n1, n2, frames, data })
    }

    pub fn filled(n1: usize, n2: usize, frames: usize, value: f64) -> Self {
        assert!(n1 > 0 && n2 > 0 && frames > 0, "cube dimensions must be positive");
        Self { n1, n2, frames, data: vec![value; n1 * n2 * frames] }
    }

    pub fn zeros(n1: usize, n2: usize, frames: usize) -> Self {
        Self::filled(n1, n2, frames, 0.0)
    }

    /// Builds a cube from `f(row, col, frame)`.
    pub fn from_fn(n1: usize, n2: usize, frames: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut cube = Self::zeros(n1, n2, frames);
        for i in 0..frames {
            for r in 0..n1 {
                for c in 0..n2 {
                    cube.data[(i * n1 + r) * n2 + c] = f(r, c, i);
                }
            }
        }
        cube
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Pixels per frame.
    pub fn pixels(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n1, self.n2, self.frames)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.pixels();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn frame_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.pixels();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn get(&self, row: usize, col: usize, frame: usize) -> f64 {
        self.data[(frame * self.n1 + row) * self.n2 + col]
    }

    pub fn set(&mut self, row: usize, col: usize, frame: usize, value: f64) {
        self.data[(frame * self.n1 + row) * self.n2 + col] = value;
    }

    pub fn ensure_same_dims(&self, other: &VideoCube) -> Result<()> {
        check_dims(self.dims(), other.dims())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the pixels of `region` across all frames.
    pub fn slice(&self, region: Region) -> Result<VideoCube> {
        region.check(self.n1, self.n2)?;
        Ok(VideoCube::from_fn(region.h, region.w, self.frames, |r, c, i| {
            self.get(region.row + r, region.col + c, i)
        }))
    }

    /// Writes `patch` into `region`; the patch must span all frames.
    pub fn write_region(&mut self, region: Region, patch: &VideoCube) -> Result<()> {
        region.check(self.n1, self.n2)?;
        check_dims((region.h, region.w, self.frames), patch.dims())?;
        for i in 0..self.frames {
            for r in 0..region.h {
                let dst = (i * self.n1 + region.row + r) * self.n2 + region.col;
                let src = (i * region.h + r) * region.w;
                self.data[dst..dst + region.w].copy_from_slice(&patch.data[src..src + region.w]);
            }
        }
        Ok(())
    }

    /// Per-pixel temporal average, as a one-frame cube.
    pub fn mean_frame(&self) -> VideoCube {
        let n = self.pixels();
        let mut mean = vec![0.0; n];
        for i in 0..self.frames {
            for (m, v) in mean.iter_mut().zip(self.frame(i)) {
                *m += v;
            }
        }
        let scale = 1.0 / self.frames as f64;
        mean.iter_mut().for_each(|m| *m *= scale);
        VideoCube { n1: self.n1, n2: self.n2, frames: 1, data: mean }
    }

    /// Repeats frame 0 of `self` `frames` times.
    pub fn repeat_frame(&self, frames: usize) -> VideoCube {
        let f = self.frame(0);
        let mut data = Vec::with_capacity(f.len() * frames);
        for _ in 0..frames {
            data.extend_from_slice(f);
        }
        VideoCube { n1: self.n1, n2: self.n2, frames, data }
    }

    pub fn clamped01(&self) -> VideoCube {
        VideoCube { data: self.data.iter().map(|v| v.clamp(0.0, 1.0)).collect(), ..*self }
    }

    pub fn dot(&self, other: &VideoCube) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &VideoCube) -> Result<f64> {
        self.ensure_same_dims(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
    }

    /// Pointwise `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &VideoCube, b: f64) -> Result<VideoCube> {
        self.ensure_same_dims(other)?;
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        Ok(VideoCube { data, ..*self })
    }
}

impl Default for VideoCube {
    fn default() -> Self {
        Self::zeros(1, 1, 1)
    }
}

/// A single 2D snapshot `y` with the noise level it was synthesized with.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    n1: usize,
    n2: usize,
    data: Vec<f64>,
    /// Noise standard deviation on the 0–255 scale.
    pub sigma: f64,
}

impl Measurement {
    pub fn new(n1: usize, n2: usize, data: Vec<f64>, sigma: f64) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return argument("measurement dimensions must be positive");
        }
        if data.len() != n1 * n2 {
            return Err(Error::DimensionMismatch {
                expected: format!("{} values", n1 * n2),
                actual: format!("{} values", data.len()),
            });
        }
        check_finite(&data)?;
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return argument(format!("sigma must be finite and non-negative, got {sigma}"));
        }
        Ok(Self { n1, n2, data, sigma })
    }

    pub fn zeros(n1: usize, n2: usize) -> Self {
        Self { n1, n2, data: vec![0.0; n1 * n2], sigma: 0.0 }
    }

    pub(crate) fn from_raw(n1: usize, n2: usize, data: Vec<f64>, sigma: f64) -> Self {
        debug_assert_eq!(data.len(), n1 * n2);
        Self { n1, n2, data, sigma }
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n2 + col]
    }

    pub fn slice(&self, region: Region) -> Result<Measurement> {
        region.check(self.n1, self.n2)?;
        let mut data = Vec::with_capacity(region.h * region.w);
        for r in 0..region.h {
            let start = (region.row + r) * self.n2 + region.col;
            data.extend_from_slice(&self.data[start..start + region.w]);
        }
        Ok(Measurement { n1: region.h, n2: region.w, data, sigma: self.sigma })
    }

    pub fn dot(&self, other: &Measurement) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// As a one-frame cube (shares the container layout).
    pub fn to_cube(&self) -> VideoCube {
        VideoCube { n1: self.n1, n2: self.n2, frames: 1, data: self.data.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(VideoCube::new(0, 2, 2, vec![]).is_err());
        assert!(VideoCube::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(VideoCube::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(Measurement::new(1, 1, vec![0.0], -1.0).is_err());
    }

    #[test]
    fn slice_and_write_round_trip() {
        let x = VideoCube::from_fn(4, 5, 2, |r, c, i| (r * 10 + c + 100 * i) as f64);
        let reg = Region::new(1, 2, 2, 3);
        let s = x.slice(reg).unwrap();
        assert_eq!(s.get(0, 0, 1), 112.0);
        let mut y = VideoCube::zeros(4, 5, 2);
        y.write_region(reg, &s).unwrap();
        assert_eq!(y.get(2, 4, 1), x.get(2, 4, 1));
        assert_eq!(y.get(0, 0, 0), 0.0);
        assert!(x.slice(Region::new(3, 3, 2, 2)).is_err());
    }

    #[test]
    fn mean_frame_of_complementary_pair_is_half() {
        let f = VideoCube::from_fn(3, 3, 2, |r, c, i| {
            let v = (r * 3 + c) as f64 / 9.0;
            if i == 0 { v } else { 1.0 - v }
        });
        assert!(f.mean_frame().data().iter().all(|&m| (m - 0.5).abs() < 1e-15));
    }
}
