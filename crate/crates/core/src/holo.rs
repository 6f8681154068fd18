//! Phantom nuclei and off-axis image-plane hologram synthesis.
//!
//! A phantom is a disk-shaped nucleus whose projected phase is a smooth dome
//! (or a flat top, for edge-resolution tests) plus optional band-limited
//! texture. The object wave is `a · A · exp(iφ)` with `a` the illumination
//! amplitude and `A` the nucleus transmittance (1 outside). The hologram is
//! `|R + O|²` with a tilted plane reference `R = R₀ exp(i2π(f_x x + f_y y))`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Result};
use crate::field::{check_same_grid, ComplexField, Field, Grid, RealField, RgbImage};
use crate::segment::NucleusMask;
use crate::unwrap::PhaseMap;

/// RNG stream ids so each random component of a phantom is independent of
/// the others for a given seed.
const STREAM_TEXTURE: u64 = 1;
const STREAM_BRIGHTFIELD: u64 = 2;
const STREAM_HOLOGRAM: u64 = 3;

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Plane reference wave `R₀ exp(i2π(f_x x + f_y y))`, tilt in cycles per pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceBeam {
    pub amplitude: f64,
    pub tilt_x: f64,
    pub tilt_y: f64,
    /// Constant phase of the wave at pixel (0, 0), radians.
    pub phase: f64,
}

impl ReferenceBeam {
    pub fn new(amplitude: f64, tilt_x: f64, tilt_y: f64) -> Self {
        Self {
            amplitude,
            tilt_x,
            tilt_y,
            phase: 0.0,
        }
    }

    /// The same wave seen from a window whose top-left pixel is `(row0, col0)`.
    pub fn shifted(&self, row0: usize, col0: usize) -> Self {
        let phase = self.phase + 2.0 * PI * (self.tilt_x * col0 as f64 + self.tilt_y * row0 as f64);
        Self {
            phase: crate::unwrap::wrap(phase),
            ..*self
        }
    }

    /// Distance of the cross-term lobe from DC, in cycles per pixel.
    pub fn carrier_frequency(&self) -> f64 {
        self.tilt_x.hypot(self.tilt_y)
    }
}

/// Instrument parameters of the simulated microscope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalConfig {
    pub wavelength_nm: f64,
    pub grid: Grid,
    pub reference_amplitude: f64,
    /// Amplitude of the unobstructed object wave, in √counts. Balanced arms
    /// mean this equals `reference_amplitude`.
    pub object_amplitude: f64,
    pub tilt_x: f64,
    pub tilt_y: f64,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        Self {
            wavelength_nm: 650.0,
            grid: Grid::square(256),
            reference_amplitude: 10.0,
            object_amplitude: 10.0,
            tilt_x: 0.15,
            tilt_y: 0.15,
        }
    }
}

impl OpticalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength_nm > 0.0) {
            bail!(
                InvalidConfig,
                "wavelength must be positive, got {}",
                self.wavelength_nm
            );
        }
        let t = self.tilt_x.abs() + self.tilt_y.abs();
        if !(t > 0.0 && t < 1.0) {
            bail!(InvalidConfig, "|f_x| + |f_y| must lie in (0, 1), got {t}");
        }
        if !(self.reference_amplitude > 0.0) || !(self.object_amplitude > 0.0) {
            bail!(InvalidConfig, "beam amplitudes must be positive");
        }
        Grid::new(self.grid.width, self.grid.height, self.grid.pixel_pitch)?;
        Ok(())
    }

    pub fn reference(&self) -> ReferenceBeam {
        ReferenceBeam::new(self.reference_amplitude, self.tilt_x, self.tilt_y)
    }

    /// Phase (radians) corresponding to an optical path difference in nanometers.
    pub fn phase_from_opd(&self, opd_nm: f64) -> f64 {
        2.0 * PI * opd_nm / self.wavelength_nm
    }
}

/// Morphological class of a phantom nucleus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhantomClass {
    SmoothSmall,
    SmoothLarge,
    TexturedAbnormal,
}

impl PhantomClass {
    pub const ALL: [PhantomClass; 3] =
        [Self::SmoothSmall, Self::SmoothLarge, Self::TexturedAbnormal];

    pub fn label(&self) -> &'static str {
        match self {
            Self::SmoothSmall => "smooth-small",
            Self::SmoothLarge => "smooth-large",
            Self::TexturedAbnormal => "textured-abnormal",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == label)
    }
}

/// Radial phase profile of the nucleus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseProfile {
    /// `cos²(πr / 2r₀)`: 1 at the center, 0 with zero slope at the rim.
    #[default]
    Dome,
    /// Constant inside the disk; a sharp phase step at the rim.
    FlatTop,
}

impl PhaseProfile {
    fn value(&self, r_norm: f64) -> f64 {
        if r_norm >= 1.0 {
            return 0.0;
        }
        match self {
            Self::Dome => {
                let c = (PI * r_norm / 2.0).cos();
                c * c
            }
            Self::FlatTop => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub class: PhantomClass,
    pub profile: PhaseProfile,
    /// Disk radius in pixels; pixels whose center lies strictly inside belong
    /// to the nucleus.
    pub nucleus_radius: f64,
    pub peak_phase: f64,
    /// RMS of the texture component, radians.
    pub texture_amplitude: f64,
    /// Gaussian smoothing length of the texture, pixels.
    pub texture_correlation_length: f64,
    pub nucleus_color: [u8; 3],
    pub background_color: [u8; 3],
    pub inner_transmittance: f64,
    pub brightfield_noise_sigma: f64,
    /// Nucleus center `(x, y)` in pixels; `None` puts it at the grid center.
    pub center: Option<[f64; 2]>,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self {
            class: PhantomClass::SmoothSmall,
            profile: PhaseProfile::Dome,
            nucleus_radius: 30.0,
            peak_phase: 2.5,
            texture_amplitude: 0.0,
            texture_correlation_length: 2.0,
            nucleus_color: [90, 60, 140],
            background_color: [215, 205, 225],
            inner_transmittance: 0.9,
            brightfield_noise_sigma: 2.0,
            center: None,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.nucleus_radius > 2.0) {
            bail!(
                InvalidInput,
                "nucleus radius must exceed 2 px, got {}",
                self.nucleus_radius
            );
        }
        if !(self.peak_phase >= 0.0) || !(self.texture_amplitude >= 0.0) {
            bail!(
                InvalidInput,
                "peak phase and texture amplitude must be non-negative"
            );
        }
        if self.texture_amplitude > 0.0 && !(self.texture_correlation_length > 0.0) {
            bail!(InvalidInput, "texture correlation length must be positive");
        }
        if !(self.inner_transmittance > 0.0 && self.inner_transmittance <= 1.0) {
            bail!(
                InvalidInput,
                "inner transmittance must lie in (0, 1], got {}",
                self.inner_transmittance
            );
        }
        if !(self.brightfield_noise_sigma >= 0.0) {
            bail!(InvalidInput, "brightfield noise sigma must be non-negative");
        }
        Ok(())
    }
}

/// Ground truth for one simulated nucleus.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomTruth {
    pub object_field: ComplexField,
    pub brightfield: RgbImage,
    pub mask: NucleusMask,
    /// Unwrapped phase used to build `object_field`, radians.
    pub phase_truth: PhaseMap,
    /// `(x, y)` in pixels.
    pub nucleus_center: [f64; 2],
}

/// `R₀ exp(i2π(f_x x + f_y y))` sampled at pixel `(x = col, y = row)`.
pub fn make_reference(grid: Grid, beam: ReferenceBeam) -> ComplexField {
    Field::from_fn(grid, |row, col| {
        let a = beam.phase + 2.0 * PI * (beam.tilt_x * col as f64 + beam.tilt_y * row as f64);
        Complex64::from_polar(beam.amplitude, a)
    })
}

/// Unobstructed object wave used for reference calibration.
pub fn empty_object(cfg: &OpticalConfig) -> ComplexField {
    ComplexField::filled(cfg.grid, Complex64::new(cfg.object_amplitude, 0.0))
}

pub fn make_phantom(spec: &PhantomSpec, seed: u64, cfg: &OpticalConfig) -> Result<PhantomTruth> {
    spec.validate()?;
    let grid = cfg.grid;
    let [cx, cy] = spec.center.unwrap_or([
        (grid.width - 1) as f64 / 2.0,
        (grid.height - 1) as f64 / 2.0,
    ]);
    let r0 = spec.nucleus_radius;
    if cx - r0 < 0.0
        || cy - r0 < 0.0
        || cx + r0 > (grid.width - 1) as f64
        || cy + r0 > (grid.height - 1) as f64
    {
        bail!(
            InvalidInput,
            "nucleus of radius {r0} at ({cx}, {cy}) does not fit a {}x{} grid",
            grid.width,
            grid.height
        );
    }

    let inside: Vec<bool> = (0..grid.len())
        .map(|i| {
            let (row, col) = (i / grid.width, i % grid.width);
            (col as f64 - cx).hypot(row as f64 - cy) < r0
        })
        .collect();

    let texture = if spec.texture_amplitude > 0.0 {
        smooth_noise(grid, spec.texture_correlation_length, seed)
    } else {
        vec![0.0; grid.len()]
    };

    let phase: Vec<f64> = (0..grid.len())
        .map(|i| {
            if !inside[i] {
                return 0.0;
            }
            let (row, col) = (i / grid.width, i % grid.width);
            let r = (col as f64 - cx).hypot(row as f64 - cy);
            spec.peak_phase * spec.profile.value(r / r0) + spec.texture_amplitude * texture[i]
        })
        .collect();

    let object: Vec<Complex64> = phase
        .iter()
        .zip(&inside)
        .map(|(&p, &m)| {
            let amp = cfg.object_amplitude * if m { spec.inner_transmittance } else { 1.0 };
            Complex64::from_polar(amp, p)
        })
        .collect();

    let mut rng = seeded_rng(seed, STREAM_BRIGHTFIELD);
    let sigma = spec.brightfield_noise_sigma;
    let pixels: Vec<[u8; 3]> = inside
        .iter()
        .map(|&m| {
            let base = if m {
                spec.nucleus_color
            } else {
                spec.background_color
            };
            let mut px = [0u8; 3];
            for (out, &b) in px.iter_mut().zip(&base) {
                let noise: f64 = if sigma > 0.0 {
                    sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng)
                } else {
                    0.0
                };
                *out = (b as f64 + noise).round().clamp(0.0, 255.0) as u8;
            }
            px
        })
        .collect();

    Ok(PhantomTruth {
        object_field: Field::from_vec(grid, object)?,
        brightfield: RgbImage::new(grid.width, grid.height, pixels)?,
        mask: NucleusMask::from_bools(grid, inside)?,
        phase_truth: PhaseMap::unwrapped(Field::from_vec(grid, phase)?),
        nucleus_center: [cx, cy],
    })
}

/// White Gaussian noise smoothed by a Gaussian kernel of standard deviation
/// `length` pixels, rescaled to unit RMS over the grid.
fn smooth_noise(grid: Grid, length: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed, STREAM_TEXTURE);
    let white: Vec<f64> = (0..grid.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let half = (3.0 * length).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half)
        .map(|k| (-(k * k) as f64 / (2.0 * length * length)).exp())
        .collect();
    let (w, h) = (grid.width as isize, grid.height as isize);
    let clamp = |v: isize, n: isize| v.clamp(0, n - 1) as usize;

    let mut tmp = vec![0.0; grid.len()];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * white[r as usize * grid.width + clamp(c + k as isize - half, w)];
            }
            tmp[r as usize * grid.width + c as usize] = acc;
        }
    }
    let mut out = vec![0.0; grid.len()];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[clamp(r + k as isize - half, h) * grid.width + c as usize];
            }
            out[r as usize * grid.width + c as usize] = acc;
        }
    }
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    let rms = (out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / out.len() as f64).sqrt();
    for v in out.iter_mut() {
        *v = (*v - mean) / rms;
    }
    out
}

/// `H = |R + O|²` plus seeded Gaussian noise, clamped at zero.
pub fn synthesize_hologram(
    object: &ComplexField,
    reference: &ComplexField,
    noise_sigma: f64,
    seed: u64,
) -> Result<RealField> {
    check_same_grid(&object.grid(), &reference.grid())?;
    if !(noise_sigma >= 0.0) {
        bail!(
            InvalidInput,
            "noise sigma must be non-negative, got {noise_sigma}"
        );
    }
    let mut rng = seeded_rng(seed, STREAM_HOLOGRAM);
    let data = object
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(&o, &r)| {
            let clean = (r + o).norm_sqr();
            let noise: f64 = if noise_sigma > 0.0 {
                noise_sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng)
            } else {
                0.0
            };
            (clean + noise).max(0.0)
        })
        .collect();
    Field::from_vec(object.grid(), data)
}
