//! Bicubic image resampling.
//!
//! Separable Keys cubic convolution (`a = -0.5`). When shrinking, the kernel
//! is stretched by `1/scale` so that it also acts as the anti-aliasing
//! low-pass filter, and the weights of each output sample are renormalized
//! to sum to one. Pixel centers are aligned (`x_in = (x_out + ½)/scale - ½`)
//! and out-of-range taps are clamped to the border.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::field::{Field, Grid, RealField};

/// Keys cubic convolution kernel with `a = -0.5`.
#[inline]
pub fn cubic(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        (1.5 * x - 2.5) * x * x + 1.0
    } else if x < 2.0 {
        ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0
    } else {
        0.0
    }
}

/// Output length of an axis of `n` samples resampled by `scale`.
pub fn scaled_len(n: usize, scale: f64) -> usize {
    ((n as f64 * scale).ceil() as usize).max(1)
}

/// Tap indices and weights for every output sample of one axis.
fn axis_weights(n_in: usize, n_out: usize, scale: f64) -> Vec<Vec<(usize, f64)>> {
    let stretch = if scale < 1.0 { 1.0 / scale } else { 1.0 };
    let support = 2.0 * stretch;
    (0..n_out)
        .map(|i| {
            let u = (i as f64 + 0.5) / scale - 0.5;
            let first = (u - support).floor() as i64;
            let last = (u + support).ceil() as i64;
            let mut taps: Vec<(usize, f64)> = Vec::new();
            let mut total = 0.0;
            for j in first..=last {
                let w = cubic((u - j as f64) / stretch);
                if w == 0.0 {
                    continue;
                }
                let idx = j.clamp(0, n_in as i64 - 1) as usize;
                total += w;
                match taps.iter_mut().find(|(k, _)| *k == idx) {
                    Some(t) => t.1 += w,
                    None => taps.push((idx, w)),
                }
            }
            for t in &mut taps {
                t.1 /= total;
            }
            taps
        })
        .collect()
}

/// Resamples `f` by `scale` in both axes. The output pixel pitch grows by
/// `1/scale`.
pub fn resize_bicubic(f: &RealField, scale: f64) -> Result<RealField> {
    if !(scale > 0.0 && scale.is_finite()) {
        bail!(
            InvalidInput,
            "scale must be positive and finite, got {scale}"
        );
    }
    let (w, h) = (f.width(), f.height());
    let (ow, oh) = (scaled_len(w, scale), scaled_len(h, scale));
    let wx = axis_weights(w, ow, scale);
    let wy = axis_weights(h, oh, scale);
    let src = f.as_slice();
    let mut tmp = Vec::with_capacity(ow * h);
    for row in 0..h {
        let line = &src[row * w..(row + 1) * w];
        tmp.extend(
            wx.iter()
                .map(|taps| taps.iter().map(|&(j, wt)| line[j] * wt).sum::<f64>()),
        );
    }
    let mut out = Vec::with_capacity(ow * oh);
    for taps in &wy {
        for col in 0..ow {
            out.push(
                taps.iter()
                    .map(|&(j, wt)| tmp[j * ow + col] * wt)
                    .sum::<f64>(),
            );
        }
    }
    let grid = Grid::new(ow, oh, f.grid().pixel_pitch / scale)?;
    Field::from_vec(grid, out)
}
