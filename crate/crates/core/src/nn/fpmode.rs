//! Scoped flush-to-zero for the training loops.
//!
//! Sigmoid outputs pinned near 0 or 1 drive gradients into the subnormal
//! range, where x86 arithmetic runs one to two orders of magnitude slower.

/// Sets FTZ and DAZ on the current thread until dropped. No-op off x86-64.
#[must_use]
pub struct FlushDenormals {
    #[cfg(target_arch = "x86_64")]
    saved: u32,
}

#[cfg(target_arch = "x86_64")]
#[allow(deprecated)]
impl FlushDenormals {
    const FTZ: u32 = 1 << 15;
    const DAZ: u32 = 1 << 6;

    pub fn enable() -> Self {
        use std::arch::x86_64::{_mm_getcsr, _mm_setcsr};
        // SAFETY: SSE is baseline on x86-64; only the denormal-handling bits change.
        let saved = unsafe { _mm_getcsr() };
        unsafe { _mm_setcsr(saved | Self::FTZ | Self::DAZ) };
        Self { saved }
    }
}

#[cfg(target_arch = "x86_64")]
#[allow(deprecated)]
impl Drop for FlushDenormals {
    fn drop(&mut self) {
        // SAFETY: restores the value read in `enable`.
        unsafe { std::arch::x86_64::_mm_setcsr(self.saved) };
    }
}

#[cfg(not(target_arch = "x86_64"))]
impl FlushDenormals {
    pub fn enable() -> Self {
        Self {}
    }
}
