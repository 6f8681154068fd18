//! Least-squares phase unwrapping.
//!
//! The unwrapped surface `u` minimizes `Σ |∇u - W(∇ψ)|²`, where `W` re-wraps
//! the forward differences of the wrapped input `ψ` into `(-π, π]`. Its
//! normal equations are a Neumann Poisson problem, solved exactly in the
//! cosine basis. The cosine transform is realized as an FFT of the
//! half-sample mirror extension, on which the periodic 5-point Laplacian
//! coincides with the Neumann one.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::fft::Fft2;
use crate::field::{divergence, gradient, Field, RealField};

/// A phase image in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    values: RealField,
    wrapped: bool,
}

impl PhaseMap {
    /// Wraps a field whose values already lie in `(-π, π]`.
    pub fn wrapped(values: RealField) -> Result<Self> {
        if let Some(v) = values.as_slice().iter().find(|&&v| !(v > -PI && v <= PI)) {
            bail!(InvalidInput, "wrapped phase value {v} outside (-pi, pi]");
        }
        Ok(Self {
            values,
            wrapped: true,
        })
    }

    pub fn unwrapped(values: RealField) -> Self {
        Self {
            values,
            wrapped: false,
        }
    }

    pub fn values(&self) -> &RealField {
        &self.values
    }

    pub fn into_values(self) -> RealField {
        self.values
    }

    pub fn is_wrapped(&self) -> bool {
        self.wrapped
    }
}

/// Reduces an angle into `(-π, π]`.
#[inline]
pub fn wrap(angle: f64) -> f64 {
    let w = angle - 2.0 * PI * ((angle + PI) / (2.0 * PI)).floor();
    // floor puts exact odd multiples of π at -π.
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Wraps every sample of a continuous phase field.
pub fn wrap_field(phase: &RealField) -> PhaseMap {
    PhaseMap {
        values: phase.map(wrap),
        wrapped: true,
    }
}

pub fn unwrap_phase(w: &PhaseMap) -> Result<PhaseMap> {
    if !w.wrapped {
        bail!(InvalidInput, "unwrap_phase expects a wrapped phase map");
    }
    let psi = &w.values;
    let grid = psi.grid();
    let (gx, gy) = gradient(psi);
    let (wx, wy) = (gx.map(wrap), gy.map(wrap));
    // Last row/column differences are zero by construction; wrap keeps them 0.
    let rho = divergence(&wx, &wy)?;

    let (w0, h0) = (grid.width, grid.height);
    let (w2, h2) = (2 * w0, 2 * h0);
    let mut ext = vec![Complex64::new(0.0, 0.0); w2 * h2];
    for r in 0..h2 {
        let sr = if r < h0 { r } else { h2 - 1 - r };
        for c in 0..w2 {
            let sc = if c < w0 { c } else { w2 - 1 - c };
            ext[r * w2 + c] = Complex64::new(rho.get(sr, sc), 0.0);
        }
    }
    let plan = Fft2::new(w2, h2)?;
    plan.forward(&mut ext);
    let lx: Vec<f64> = (0..w2)
        .map(|k| 2.0 * (2.0 * PI * k as f64 / w2 as f64).cos() - 2.0)
        .collect();
    let ly: Vec<f64> = (0..h2)
        .map(|k| 2.0 * (2.0 * PI * k as f64 / h2 as f64).cos() - 2.0)
        .collect();
    for (ky, &ey) in ly.iter().enumerate() {
        for (kx, &ex) in lx.iter().enumerate() {
            let i = ky * w2 + kx;
            let eig = ex + ey;
            ext[i] = if eig == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                ext[i] / eig
            };
        }
    }
    plan.inverse(&mut ext);

    let data = (0..grid.len())
        .map(|i| ext[(i / w0) * w2 + i % w0].re)
        .collect();
    let mut out = Field::from_vec(grid, data)?;
    normalize_offset(&mut out);
    Ok(PhaseMap::unwrapped(out))
}

/// Shifts the field so that the mean of its lowest decile (at least one
/// pixel) is zero: the background of a nucleus ROI sits at ≈ 0 rad.
pub fn normalize_offset(phase: &mut RealField) {
    let mut sorted = phase.as_slice().to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len().div_ceil(10).max(1);
    let offset = sorted[..k].iter().sum::<f64>() / k as f64;
    for v in phase.as_mut_slice() {
        *v -= offset;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;

    fn max_dev_after_offset(a: &RealField, b: &RealField) -> f64 {
        let d: Vec<f64> = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| x - y)
            .collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        d.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap(PI), PI);
        assert_eq!(wrap(-PI), PI);
        assert!((wrap(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap(0.5 + 4.0 * PI) - 0.5).abs() < 1e-12);
        assert!((wrap(-0.5 - 6.0 * PI) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_unwrapped_input() {
        let p = PhaseMap::unwrapped(RealField::zeros(Grid::square(4)));
        assert!(unwrap_phase(&p).is_err());
        assert!(PhaseMap::wrapped(RealField::filled(Grid::square(2), 4.0)).is_err());
    }

    #[test]
    fn constant_field_becomes_zero() {
        let p = PhaseMap::wrapped(RealField::filled(Grid::square(8), 1.25)).unwrap();
        let u = unwrap_phase(&p).unwrap();
        assert!(u.values().as_slice().iter().all(|v| v.abs() < 1e-12));
        assert!(!u.is_wrapped());
    }

    #[test]
    fn smooth_small_field_is_unchanged_up_to_offset() {
        let g = Grid::new(40, 30, 1.0).unwrap();
        let truth = RealField::from_fn(g, |r, c| {
            2.0 * ((r as f64 / 7.0).sin() * (c as f64 / 9.0).cos()) * 0.9
        });
        let u = unwrap_phase(&PhaseMap::wrapped(truth.clone()).unwrap()).unwrap();
        assert!(max_dev_after_offset(u.values(), &truth) < 1e-9);
    }

    #[test]
    fn steep_ramp_is_recovered() {
        let g = Grid::square(256);
        let truth = RealField::from_fn(g, |_, c| 0.3 * c as f64);
        let u = unwrap_phase(&wrap_field(&truth)).unwrap();
        assert!(max_dev_after_offset(u.values(), &truth) < 1e-6);
    }

    #[test]
    fn normalization_is_idempotent() {
        let mut f = RealField::from_fn(Grid::square(9), |r, c| (r * c) as f64 * 0.1 - 3.0);
        normalize_offset(&mut f);
        let once = f.clone();
        normalize_offset(&mut f);
        assert!(max_dev_after_offset(&f, &once) < 1e-12);
        let diff = f
            .as_slice()
            .iter()
            .zip(once.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }
}
