use crate::error::{argument, Result};

/// Channel width used by the reference network.
pub const FULL_CHANNELS: usize = 128;
/// Number of upsampling blocks in the reference network.
pub const FULL_BLOCKS: usize = 3;

/// Shape of a decoder: `n_blocks` × [upsample ×2 → ReLU → conv3×3], then a
/// conv3×3 to `out_frames` channels and a logistic output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DvpArchitecture {
    pub out_h: usize,
    pub out_w: usize,
    pub out_frames: usize,
    pub channels: usize,
    pub n_blocks: usize,
}

/// Location of one conv layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayout {
    pub c_in: usize,
    pub c_out: usize,
    pub weight: usize,
    pub bias: usize,
}

impl ConvLayout {
    pub fn weight_len(&self) -> usize {
        self.c_out * self.c_in * 9
    }
}

impl DvpArchitecture {
    pub fn new(out_h: usize, out_w: usize, out_frames: usize, channels: usize, n_blocks: usize) -> Result<Self> {
        let arch = Self { out_h, out_w, out_frames, channels, n_blocks };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_h == 0 || self.out_w == 0 || self.out_frames == 0 || self.channels == 0 {
            return argument(format!("degenerate architecture {self:?}"));
        }
        let f = 1usize << self.n_blocks;
        if self.out_h % f != 0 || self.out_w % f != 0 {
            return argument(format!(
                "output {}x{} is not divisible by 2^{} = {f}",
                self.out_h, self.out_w, self.n_blocks
            ));
        }
        Ok(())
    }

    pub fn latent_h(&self) -> usize {
        self.out_h >> self.n_blocks
    }

    pub fn latent_w(&self) -> usize {
        self.out_w >> self.n_blocks
    }

    pub fn latent_len(&self) -> usize {
        self.channels * self.latent_h() * self.latent_w()
    }

    /// Conv layers in forward order: the block convs, then the output conv.
    pub fn layers(&self) -> Vec<ConvLayout> {
        let mut offset = 0;
        let mut layers = Vec::with_capacity(self.n_blocks + 1);
        for b in 0..=self.n_blocks {
            let c_out = if b == self.n_blocks { self.out_frames } else { self.channels };
            let weight = offset;
            let bias = weight + c_out * self.channels * 9;
            offset = bias + c_out;
            layers.push(ConvLayout { c_in: self.channels, c_out, weight, bias });
        }
        layers
    }

    /// Number of trainable parameters `k`.
    pub fn param_count(&self) -> usize {
        let c = self.channels;
        self.n_blocks * (c * c * 9 + c) + (c * self.out_frames * 9 + self.out_frames)
    }
}
