//! Quality measures used to compare reconstructions with ground truth.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::field::{check_same_grid, ComplexField, RealField};
use crate::unwrap::wrap;

/// RMSE of `a - b` over `mask` after removing the mean difference there.
pub fn masked_rmse(a: &RealField, b: &RealField, mask: &[bool]) -> Result<f64> {
    check_same_grid(&a.grid(), &b.grid())?;
    if mask.len() != a.grid().len() {
        bail!(
            GridMismatch,
            "mask has {} samples, field {}",
            mask.len(),
            a.grid().len()
        );
    }
    let d: Vec<f64> = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((x, y), _)| x - y)
        .collect();
    if d.is_empty() {
        bail!(InvalidInput, "empty mask");
    }
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    Ok((d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d.len() as f64).sqrt())
}

/// Phase RMSE between two complex fields over `mask`, insensitive to a
/// global phase offset and to 2π wraps: the pointwise phase difference
/// `arg(a b*)` is taken relative to its circular mean.
pub fn masked_phase_rmse(a: &ComplexField, b: &ComplexField, mask: &[bool]) -> Result<f64> {
    check_same_grid(&a.grid(), &b.grid())?;
    if mask.len() != a.grid().len() {
        bail!(
            GridMismatch,
            "mask has {} samples, field {}",
            mask.len(),
            a.grid().len()
        );
    }
    let prods: Vec<_> = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((x, y), _)| x * y.conj())
        .collect();
    if prods.is_empty() {
        bail!(InvalidInput, "empty mask");
    }
    let sum = prods
        .iter()
        .fold(num_complex::Complex64::new(0.0, 0.0), |acc, p| {
            acc + p / p.norm().max(f64::MIN_POSITIVE)
        });
    let offset = sum.im.atan2(sum.re);
    let ms = prods
        .iter()
        .map(|p| wrap(p.arg() - offset).powi(2))
        .sum::<f64>()
        / prods.len() as f64;
    Ok(ms.sqrt())
}

/// 10–90 % rise distance of a profile that runs from a high plateau (its
/// first `plateau` samples) down to a low plateau (its last `plateau`
/// samples). Levels are linearly interpolated between samples; the first
/// downward crossing of each level counts. `None` when the plateaus do not
/// differ or a level is never crossed.
pub fn edge_width(profile: &[f64], plateau: usize) -> Option<f64> {
    if plateau == 0 || 2 * plateau > profile.len() {
        return None;
    }
    let hi = profile[..plateau].iter().sum::<f64>() / plateau as f64;
    let lo = profile[profile.len() - plateau..].iter().sum::<f64>() / plateau as f64;
    let span = hi - lo;
    if !(span.abs() > f64::EPSILON * hi.abs().max(lo.abs()).max(1.0)) {
        return None;
    }
    let p: Vec<f64> = profile.iter().map(|v| (v - lo) / span).collect();
    let cross = |level: f64| {
        p.windows(2)
            .position(|w| w[0] >= level && level > w[1])
            .map(|i| i as f64 + (p[i] - level) / (p[i] - p[i + 1]))
    };
    Some(cross(0.1)? - cross(0.9)?)
}

/// Mean [`edge_width`] of the four axis-aligned profiles that start at
/// `center` (row, col) and run `length` pixels right, left, down and up.
pub fn radial_edge_width(
    phase: &RealField,
    center: (usize, usize),
    length: usize,
    plateau: usize,
) -> Result<f64> {
    let (r0, c0) = center;
    let (w, h) = (phase.width(), phase.height());
    if c0 + length >= w || c0 < length || r0 + length >= h || r0 < length {
        bail!(
            InvalidInput,
            "profiles of length {length} from ({r0}, {c0}) leave the {w}x{h} grid"
        );
    }
    let profiles: [Vec<f64>; 4] = [
        (0..length).map(|k| phase.get(r0, c0 + k)).collect(),
        (0..length).map(|k| phase.get(r0, c0 - k)).collect(),
        (0..length).map(|k| phase.get(r0 + k, c0)).collect(),
        (0..length).map(|k| phase.get(r0 - k, c0)).collect(),
    ];
    let mut total = 0.0;
    for prof in &profiles {
        match edge_width(prof, plateau) {
            Some(v) => total += v,
            None => bail!(
                Degenerate,
                "edge profile from ({r0}, {c0}) has no 10-90% transition"
            ),
        }
    }
    Ok(total / 4.0)
}
