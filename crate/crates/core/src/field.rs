//! Sampled 2D fields on a pixel grid and the discrete difference operators
//! shared by the reconstruction and the morphometry code.
//!
//! Storage is row-major: pixel `(row, col)` lives at `row * width + col`.
//! The `x` axis runs along columns, `y` along rows.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{bail, Result};

/// Sensor grid geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    /// Pixel pitch in micrometers.
    pub pixel_pitch: f64,
}

impl Grid {
    pub const DEFAULT_PITCH_UM: f64 = 3.5;

    pub fn new(width: usize, height: usize, pixel_pitch: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            bail!(
                InvalidInput,
                "grid must be at least 1x1, got {width}x{height}"
            );
        }
        if !(pixel_pitch > 0.0 && pixel_pitch.is_finite()) {
            bail!(
                InvalidInput,
                "pixel pitch must be positive, got {pixel_pitch}"
            );
        }
        Ok(Self {
            width,
            height,
            pixel_pitch,
        })
    }

    /// Square grid with the default 3.5 µm pitch.
    pub fn square(n: usize) -> Self {
        Self::new(n, n, Self::DEFAULT_PITCH_UM).expect("square grid")
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Same pixel dimensions (pitch is not compared).
    pub fn same_shape(&self, other: &Grid) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Scalar types that fields can hold.
pub trait Sample:
    Copy
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
{
    const ZERO: Self;
    fn is_finite_sample(&self) -> bool;
    /// Real inner-product contribution `Re(conj(a) * b)`.
    fn real_dot(a: Self, b: Self) -> f64;
    fn norm_sqr(self) -> f64;
}

impl Sample for f64 {
    const ZERO: Self = 0.0;
    #[inline]
    fn is_finite_sample(&self) -> bool {
        self.is_finite()
    }
    #[inline]
    fn real_dot(a: Self, b: Self) -> f64 {
        a * b
    }
    #[inline]
    fn norm_sqr(self) -> f64 {
        self * self
    }
}

impl Sample for Complex64 {
    const ZERO: Self = Complex64::new(0.0, 0.0);
    #[inline]
    fn is_finite_sample(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    #[inline]
    fn real_dot(a: Self, b: Self) -> f64 {
        a.re * b.re + a.im * b.im
    }
    #[inline]
    fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

/// A 2D field of samples on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: Grid,
    data: Vec<T>,
}

pub type RealField = Field<f64>;
pub type ComplexField = Field<Complex64>;

impl<T: Sample> Field<T> {
    pub fn from_vec(grid: Grid, data: Vec<T>) -> Result<Self> {
        if data.len() != grid.len() {
            bail!(
                InvalidInput,
                "expected {} samples for a {}x{} grid, got {}",
                grid.len(),
                grid.width,
                grid.height,
                data.len()
            );
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite_sample()) {
            bail!(InvalidInput, "non-finite sample at index {i}");
        }
        Ok(Self { grid, data })
    }

    pub fn filled(grid: Grid, value: T) -> Self {
        Self {
            grid,
            data: vec![value; grid.len()],
        }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::filled(grid, T::ZERO)
    }

    /// Builds a field from `f(row, col)`.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(grid.len());
        for row in 0..grid.height {
            for col in 0..grid.width {
                data.push(f(row, col));
            }
        }
        Self { grid, data }
    }

    /// Like [`Field::from_vec`] but skips the finiteness scan. Used for
    /// internal intermediates whose finiteness is checked elsewhere.
    pub(crate) fn from_raw(grid: Grid, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), grid.len());
        Self { grid, data }
    }

    #[inline]
    pub fn grid(&self) -> Grid {
        self.grid
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.height
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[self.grid.index(row, col)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        let i = self.grid.index(row, col);
        self.data[i] = value;
    }

    pub fn map<U: Sample>(&self, f: impl Fn(T) -> U) -> Field<U> {
        Field {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<U: Sample, V: Sample>(
        &self,
        other: &Field<U>,
        f: impl Fn(T, U) -> V,
    ) -> Result<Field<V>> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(Field {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Real inner product `Σ Re(conj(a) b)`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| T::real_dot(a, b))
            .sum())
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Copies the `height x width` window whose top-left pixel is `(row0, col0)`.
    pub fn crop(&self, row0: usize, col0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || row0 + height > self.height() || col0 + width > self.width()
        {
            bail!(
                InvalidInput,
                "crop {width}x{height} at ({row0},{col0}) exceeds {}x{} field",
                self.width(),
                self.height()
            );
        }
        let grid = Grid {
            width,
            height,
            pixel_pitch: self.grid.pixel_pitch,
        };
        let mut data = Vec::with_capacity(grid.len());
        for r in row0..row0 + height {
            let start = self.grid.index(r, col0);
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Ok(Self { grid, data })
    }
}

impl RealField {
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn to_complex(&self) -> ComplexField {
        self.map(|v| Complex64::new(v, 0.0))
    }
}

pub(crate) fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if !a.same_shape(b) {
        bail!(
            GridMismatch,
            "{}x{} vs {}x{}",
            a.width,
            a.height,
            b.width,
            b.height
        );
    }
    Ok(())
}

/// Forward differences with a replicated (Neumann) boundary:
/// `gx[i,j] = f[i,j+1] - f[i,j]`, `gy[i,j] = f[i+1,j] - f[i,j]`, and zero in the
/// last column / row respectively.
pub fn gradient<T: Sample>(f: &Field<T>) -> (Field<T>, Field<T>) {
    let (w, h) = (f.width(), f.height());
    let src = f.as_slice();
    let mut gx = vec![T::ZERO; src.len()];
    let mut gy = vec![T::ZERO; src.len()];
    for r in 0..h {
        let row = r * w;
        for c in 0..w - 1 {
            gx[row + c] = src[row + c + 1] - src[row + c];
        }
    }
    for r in 0..h.saturating_sub(1) {
        let row = r * w;
        for c in 0..w {
            gy[row + c] = src[row + w + c] - src[row + c];
        }
    }
    (Field::from_raw(f.grid(), gx), Field::from_raw(f.grid(), gy))
}

/// Negative adjoint of [`gradient`]: `<gradient(a), (gx, gy)> = -<a, divergence(gx, gy)>`.
pub fn divergence<T: Sample>(gx: &Field<T>, gy: &Field<T>) -> Result<Field<T>> {
    check_same_grid(&gx.grid(), &gy.grid())?;
    let grid = gx.grid();
    let mut out = vec![T::ZERO; grid.len()];
    divergence_into(grid, gx.as_slice(), gy.as_slice(), &mut out);
    Ok(Field::from_raw(grid, out))
}

pub(crate) fn divergence_into<T: Sample>(grid: Grid, gx: &[T], gy: &[T], out: &mut [T]) {
    let (w, h) = (grid.width, grid.height);
    for r in 0..h {
        let row = r * w;
        for c in 0..w {
            let i = row + c;
            let mut d = T::ZERO;
            if c + 1 < w {
                d = d + gx[i];
            }
            if c > 0 {
                d = d - gx[i - 1];
            }
            if r + 1 < h {
                d = d + gy[i];
            }
            if r > 0 {
                d = d - gy[i - w];
            }
            out[i] = d;
        }
    }
}

/// Pointwise `sqrt(|gx|² + |gy|²)`.
pub fn gradient_magnitude<T: Sample>(f: &Field<T>) -> RealField {
    #[allow(unused_imports)]
    use num_traits::Float;
    let (gx, gy) = gradient(f);
    let data = gx
        .as_slice()
        .iter()
        .zip(gy.as_slice())
        .map(|(&a, &b)| (a.norm_sqr() + b.norm_sqr()).sqrt())
        .collect();
    Field::from_raw(f.grid(), data)
}

/// 8-bit RGB image, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            bail!(
                InvalidInput,
                "rgb image {width}x{height} with {} pixels",
                data.len()
            );
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            data: vec![rgb; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[u8; 3]] {
        &mut self.data
    }

    pub fn get(&self, row: usize, col: usize) -> [u8; 3] {
        self.data[row * self.width + col]
    }

    pub fn crop(&self, row0: usize, col0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || row0 + height > self.height || col0 + width > self.width {
            bail!(
                InvalidInput,
                "crop {width}x{height} at ({row0},{col0}) exceeds {}x{} image",
                self.width,
                self.height
            );
        }
        let mut data = Vec::with_capacity(width * height);
        for r in row0..row0 + height {
            let start = r * self.width + col0;
            data.extend_from_slice(&self.data[start..start + width]);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use rand_core::{RngCore, SeedableRng};

    fn uniform(rng: &mut ChaCha8Rng) -> f64 {
        (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    fn random_real(n: usize, seed: u64) -> RealField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::from_fn(Grid::square(n), |_, _| uniform(&mut rng))
    }

    fn random_complex(n: usize, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Field::from_fn(Grid::square(n), |_, _| {
            Complex64::new(uniform(&mut rng), uniform(&mut rng))
        })
    }

    #[test]
    fn grid_rejects_empty_and_bad_pitch() {
        assert!(Grid::new(0, 3, 1.0).is_err());
        assert!(Grid::new(3, 3, 0.0).is_err());
        assert!(Grid::new(3, 3, f64::NAN).is_err());
    }

    #[test]
    fn field_rejects_wrong_length_and_nan() {
        let g = Grid::square(2);
        assert!(RealField::from_vec(g, vec![0.0; 3]).is_err());
        assert!(RealField::from_vec(g, vec![0.0, 1.0, f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let f = RealField::filled(Grid::square(5), 3.25);
        let (gx, gy) = gradient(&f);
        assert!(gx.as_slice().iter().chain(gy.as_slice()).all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_of_unit_ramp() {
        let f = RealField::from_fn(Grid::new(6, 4, 1.0).unwrap(), |_, c| c as f64);
        let (gx, gy) = gradient(&f);
        for r in 0..4 {
            for c in 0..6 {
                assert_eq!(gx.get(r, c), if c == 5 { 0.0 } else { 1.0 });
                assert_eq!(gy.get(r, c), 0.0);
            }
        }
    }

    #[test]
    fn gradient_matches_index_oracle() {
        let f = random_real(6, 11);
        let (gx, gy) = gradient(&f);
        for r in 0..6 {
            for c in 0..6 {
                let ex = if c < 5 {
                    f.get(r, c + 1) - f.get(r, c)
                } else {
                    0.0
                };
                let ey = if r < 5 {
                    f.get(r + 1, c) - f.get(r, c)
                } else {
                    0.0
                };
                assert_eq!(gx.get(r, c), ex);
                assert_eq!(gy.get(r, c), ey);
            }
        }
    }

    #[test]
    fn divergence_of_zero_is_zero() {
        let z = RealField::zeros(Grid::square(4));
        assert!(divergence(&z, &z)
            .unwrap()
            .as_slice()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn divergence_rejects_mismatch() {
        let a = RealField::zeros(Grid::square(4));
        let b = RealField::zeros(Grid::square(5));
        assert!(divergence(&a, &b).is_err());
    }

    #[test]
    fn divergence_is_negative_adjoint_real_and_complex() {
        for seed in 0..5 {
            let a = random_real(5, seed);
            let bx = random_real(5, seed + 100);
            let by = random_real(5, seed + 200);
            let (gx, gy) = gradient(&a);
            let lhs = gx.inner(&bx).unwrap() + gy.inner(&by).unwrap();
            let rhs = -a.inner(&divergence(&bx, &by).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");

            let a = random_complex(5, seed);
            let bx = random_complex(5, seed + 100);
            let by = random_complex(5, seed + 200);
            let (gx, gy) = gradient(&a);
            let lhs = gx.inner(&bx).unwrap() + gy.inner(&by).unwrap();
            let rhs = -a.inner(&divergence(&bx, &by).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn div_grad_is_five_point_laplacian_inside() {
        let f = random_real(7, 3);
        let (gx, gy) = gradient(&f);
        let lap = divergence(&gx, &gy).unwrap();
        for r in 1..6 {
            for c in 1..6 {
                let stencil = f.get(r - 1, c) + f.get(r + 1, c) + f.get(r, c - 1) + f.get(r, c + 1)
                    - 4.0 * f.get(r, c);
                assert!((lap.get(r, c) - stencil).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn crop_extracts_window() {
        let f = RealField::from_fn(Grid::new(5, 4, 1.0).unwrap(), |r, c| (r * 10 + c) as f64);
        let w = f.crop(1, 2, 3, 2).unwrap();
        assert_eq!(w.as_slice(), &[12.0, 13.0, 14.0, 22.0, 23.0, 24.0]);
        assert!(f.crop(3, 0, 5, 2).is_err());
    }
}
