//! Tensor kernels on `channels × h × w` buffers.

use super::real::Real;

/// Nearest-neighbour ×2 upsampling.
pub fn upsample2<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let mut out = vec![T::zero(); c * 4 * h * w];
    upsample2_into(x, c, h, w, &mut out);
    out
}

pub fn upsample2_into<T: Real>(x: &[T], c: usize, h: usize, w: usize, out: &mut [T]) {
    let (h2, w2) = (2 * h, 2 * w);
    for ch in 0..c {
        for r in 0..h {
            let src = &x[(ch * h + r) * w..(ch * h + r + 1) * w];
            let row0 = (ch * h2 + 2 * r) * w2;
            for (cc, &v) in src.iter().enumerate() {
                out[row0 + 2 * cc] = v;
                out[row0 + 2 * cc + 1] = v;
            }
            out.copy_within(row0..row0 + w2, row0 + w2);
        }
    }
}

/// Adjoint of [`upsample2`]: sums each 2×2 block.
pub fn upsample2_backward<T: Real>(g: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let mut out = vec![T::zero(); c * h * w];
    upsample2_backward_into(g, c, h, w, &mut out);
    out
}

pub fn upsample2_backward_into<T: Real>(g: &[T], c: usize, h: usize, w: usize, out: &mut [T]) {
    let (h2, w2) = (2 * h, 2 * w);
    out.fill(T::zero());
    for ch in 0..c {
        for r in 0..h2 {
            let src = &g[(ch * h2 + r) * w2..(ch * h2 + r + 1) * w2];
            let dst = &mut out[(ch * h + r / 2) * w..(ch * h + r / 2 + 1) * w];
            for (cc, d) in dst.iter_mut().enumerate() {
                *d += src[2 * cc] + src[2 * cc + 1];
            }
        }
    }
}

/// Unrolls 3×3 zero-padded neighbourhoods into a `(c·9) × (h·w)` matrix.
pub fn im2col3<T: Real>(x: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let mut cols = vec![T::zero(); c * 9 * h * w];
    im2col3_into(x, c, h, w, &mut cols);
    cols
}

pub fn im2col3_into<T: Real>(x: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    cols.fill(T::zero());
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ch * 9) + ky * 3 + kx) * hw..((ch * 9) + ky * 3 + kx + 1) * hw];
                let (x_lo, x_hi) = (if kx == 0 { 1 } else { 0 }, if kx == 2 { w - 1 } else { w });
                for r in 0..h {
                    let sr = r as isize + ky as isize - 1;
                    if sr < 0 || sr >= h as isize {
                        continue;
                    }
                    let sr = sr as usize;
                    let dst = &mut row[r * w + x_lo..r * w + x_hi];
                    let s0 = sr * w + x_lo + kx - 1;
                    dst.copy_from_slice(&plane[s0..s0 + (x_hi - x_lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col3`]: scatters columns back onto a `c × h × w` buffer.
pub fn col2im3<T: Real>(cols: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let mut out = vec![T::zero(); c * h * w];
    col2im3_into(cols, c, h, w, &mut out);
    out
}

pub fn col2im3_into<T: Real>(cols: &[T], c: usize, h: usize, w: usize, out: &mut [T]) {
    let hw = h * w;
    out.fill(T::zero());
    for ch in 0..c {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ch * 9) + ky * 3 + kx) * hw..((ch * 9) + ky * 3 + kx + 1) * hw];
                let (x_lo, x_hi) = (if kx == 0 { 1 } else { 0 }, if kx == 2 { w - 1 } else { w });
                for r in 0..h {
                    let sr = r as isize + ky as isize - 1;
                    if sr < 0 || sr >= h as isize {
                        continue;
                    }
                    let sr = sr as usize;
                    let s0 = sr * w + x_lo + kx - 1;
                    let src = &row[r * w + x_lo..r * w + x_hi];
                    for (d, &v) in plane[s0..s0 + (x_hi - x_lo)].iter_mut().zip(src) {
                        *d += v;
                    }
                }
            }
        }
    }
}

/// 3×3 same-size convolution given unrolled input columns.
pub fn conv3_forward<T: Real>(cols: &[T], weight: &[T], bias: &[T], c_out: usize, c_in: usize, hw: usize) -> Vec<T> {
    let mut out = vec![T::zero(); c_out * hw];
    conv3_forward_into(cols, weight, bias, c_out, c_in, hw, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
pub fn conv3_forward_into<T: Real>(cols: &[T], weight: &[T], bias: &[T], c_out: usize, c_in: usize, hw: usize, out: &mut [T]) {
    for (o, &b) in bias.iter().enumerate() {
        out[o * hw..(o + 1) * hw].iter_mut().for_each(|v| *v = b);
    }
    T::gemm(c_out, c_in * 9, hw, weight, false, cols, false, T::one(), out);
}

/// Accumulates weight and bias gradients; writes the input-column gradient into `dcols` when given.
#[allow(clippy::too_many_arguments)]
pub fn conv3_backward<T: Real>(
    grad_out: &[T],
    cols: &[T],
    weight: &[T],
    c_out: usize,
    c_in: usize,
    hw: usize,
    grad_w: &mut [T],
    grad_b: &mut [T],
    dcols: Option<&mut [T]>,
) {
    T::gemm(c_out, hw, c_in * 9, grad_out, false, cols, true, T::one(), grad_w);
    for (o, gb) in grad_b.iter_mut().enumerate() {
        *gb += grad_out[o * hw..(o + 1) * hw].iter().copied().sum::<T>();
    }
    if let Some(dcols) = dcols {
        T::gemm(c_in * 9, c_out, hw, weight, true, grad_out, false, T::zero(), dcols);
    }
}

pub fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}
