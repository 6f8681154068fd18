//! Morphometry of one nucleus: ten brightfield measurements from the RGB
//! ROI and the mask, nine phase measurements from the unwrapped phase.
//!
//! Conventions shared by all functions:
//!
//! * pixel coordinates are `(x, y) = (col, row)`;
//! * variances are population variances;
//! * gradient-based phase features use the mask eroded by one pixel, so the
//!   step between the nucleus and the background does not count as
//!   roughness.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Error, Result};
use crate::field::{gradient_magnitude, Grid, RealField, RgbImage};
use crate::linalg::Matrix;
use crate::resample::resize_bicubic;
use crate::segment::{luma, NucleusMask, BT601, MIN_MASK_PIXELS};
use crate::unwrap::PhaseMap;

pub const FEATURE_COUNT: usize = 19;
/// The first `BRIGHTFIELD_COUNT` columns only need the brightfield image.
pub const BRIGHTFIELD_COUNT: usize = 10;
pub const ROUGHNESS_SCALES: [f64; 4] = [0.75, 0.5, 0.25, 0.125];

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "area",
    "perimeter",
    "perimeter_per_area",
    "mean_luma",
    "mean_r",
    "mean_g",
    "mean_b",
    "var_r",
    "var_g",
    "var_b",
    "optical_volume",
    "roughness_per_area",
    "roughness_scale_0_75",
    "roughness_scale_0_5",
    "roughness_scale_0_25",
    "roughness_scale_0_125",
    "phase_variance",
    "centroid_shift",
    "moment_of_inertia",
];

#[derive(Debug, Clone, PartialEq)]
pub struct NucleusFeatures {
    pub nucleus_id: String,
    pub area: f64,
    pub perimeter: f64,
    pub perimeter_per_area: f64,
    pub mean_luma: f64,
    pub mean_rgb: [f64; 3],
    pub var_rgb: [f64; 3],
    pub optical_volume: f64,
    pub roughness_per_area: f64,
    /// At [`ROUGHNESS_SCALES`].
    pub roughness_scaled: [f64; 4],
    pub phase_variance: f64,
    pub centroid_shift: f64,
    pub moment_of_inertia: f64,
}

impl NucleusFeatures {
    /// Values in [`FEATURE_NAMES`] order.
    pub fn values(&self) -> [f64; FEATURE_COUNT] {
        let [r1, r2, r3, r4] = self.roughness_scaled;
        [
            self.area,
            self.perimeter,
            self.perimeter_per_area,
            self.mean_luma,
            self.mean_rgb[0],
            self.mean_rgb[1],
            self.mean_rgb[2],
            self.var_rgb[0],
            self.var_rgb[1],
            self.var_rgb[2],
            self.optical_volume,
            self.roughness_per_area,
            r1,
            r2,
            r3,
            r4,
            self.phase_variance,
            self.centroid_shift,
            self.moment_of_inertia,
        ]
    }
}

/// Stacked feature rows with their nucleus ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    columns: Vec<String>,
    values: Matrix,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, columns: Vec<String>, values: Matrix) -> Result<Self> {
        if ids.len() != values.rows() || columns.len() != values.cols() {
            bail!(
                InvalidInput,
                "{} ids and {} column names for a {}x{} matrix",
                ids.len(),
                columns.len(),
                values.rows(),
                values.cols()
            );
        }
        if !values.is_finite() {
            bail!(InvalidInput, "feature matrix has non-finite entries");
        }
        Ok(Self {
            ids,
            columns,
            values,
        })
    }

    pub fn from_features(rows: &[NucleusFeatures]) -> Result<Self> {
        let data = rows.iter().flat_map(|r| r.values()).collect();
        Self::new(
            rows.iter().map(|r| r.nucleus_id.clone()).collect(),
            FEATURE_NAMES.iter().map(|s| String::from(*s)).collect(),
            Matrix::new(rows.len(), FEATURE_COUNT, data)?,
        )
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols()
    }

    /// Keeps the columns with the given names, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let mut idx = Vec::with_capacity(names.len());
        for name in names {
            match self.columns.iter().position(|c| c == name) {
                Some(i) => idx.push(i),
                None => bail!(InvalidInput, "no feature column named {name}"),
            }
        }
        Ok(Self {
            ids: self.ids.clone(),
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
            values: self.values.select_columns(&idx)?,
        })
    }

    pub fn brightfield(&self) -> Result<Self> {
        self.select(&FEATURE_NAMES[..BRIGHTFIELD_COUNT])
    }
}

fn undefined(feature: &'static str, reason: impl Into<String>) -> Error {
    Error::FeatureUndefined {
        feature,
        reason: reason.into(),
    }
}

fn check_grid(a: Grid, b: Grid) -> Result<()> {
    if a.width != b.width || a.height != b.height {
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

pub fn area(m: &NucleusMask) -> f64 {
    m.area() as f64
}

/// `Σ |∇M|` of the mask as a {0, 1} field.
pub fn perimeter(m: &NucleusMask) -> f64 {
    gradient_magnitude(&m.to_real()).as_slice().iter().sum()
}

pub fn perimeter_per_area(m: &NucleusMask) -> f64 {
    perimeter(m) / area(m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityStats {
    pub mean_luma: f64,
    pub mean_rgb: [f64; 3],
    pub var_rgb: [f64; 3],
}

pub fn intensity_stats(rgb: &RgbImage, m: &NucleusMask) -> Result<IntensityStats> {
    check_grid(
        Grid {
            width: rgb.width(),
            height: rgb.height(),
            pixel_pitch: 1.0,
        },
        m.grid(),
    )?;
    let n = m.area() as f64;
    let mut sum = [0.0; 3];
    let mut sum_luma = 0.0;
    let selected = || {
        rgb.pixels()
            .iter()
            .zip(m.bits())
            .filter(|(_, &b)| b)
            .map(|(p, _)| p)
    };
    for p in selected() {
        for c in 0..3 {
            sum[c] += p[c] as f64;
        }
        sum_luma += luma(*p, BT601);
    }
    let mean_rgb = sum.map(|s| s / n);
    let mut var_rgb = [0.0; 3];
    for p in selected() {
        for c in 0..3 {
            let d = p[c] as f64 - mean_rgb[c];
            var_rgb[c] += d * d;
        }
    }
    Ok(IntensityStats {
        mean_luma: sum_luma / n,
        mean_rgb,
        var_rgb: var_rgb.map(|v| v / n),
    })
}

/// `Σ φ M`.
pub fn optical_volume(phi: &RealField, m: &NucleusMask) -> Result<f64> {
    check_grid(phi.grid(), m.grid())?;
    Ok(masked(phi, m.bits()).sum())
}

fn masked<'a>(phi: &'a RealField, bits: &'a [bool]) -> impl Iterator<Item = f64> + 'a {
    phi.as_slice()
        .iter()
        .zip(bits)
        .filter(|(_, &b)| b)
        .map(|(&v, _)| v)
}

/// 4-neighbour erosion; pixels outside the grid count as background.
pub fn erode(grid: Grid, bits: &[bool]) -> Vec<bool> {
    let (w, h) = (grid.width, grid.height);
    (0..w * h)
        .map(|i| {
            let (r, c) = (i / w, i % w);
            bits[i]
                && r > 0
                && c > 0
                && r + 1 < h
                && c + 1 < w
                && bits[i - 1]
                && bits[i + 1]
                && bits[i - w]
                && bits[i + w]
        })
        .collect()
}

fn roughness_bits(phi: &RealField, bits: &[bool]) -> Result<f64> {
    let inner = erode(phi.grid(), bits);
    let count = inner.iter().filter(|&&b| b).count();
    if count == 0 {
        return Err(undefined(
            "roughness_per_area",
            "mask vanishes after one-pixel erosion",
        ));
    }
    let p = gradient_magnitude(phi);
    Ok(masked(&p, &inner).sum::<f64>() / count as f64)
}

/// Mean gradient magnitude `Σ |∇φ| M' / Σ M'` over the eroded mask `M'`.
pub fn roughness_per_area(phi: &RealField, m: &NucleusMask) -> Result<f64> {
    check_grid(phi.grid(), m.grid())?;
    roughness_bits(phi, m.bits())
}

/// [`roughness_per_area`] after bicubic downscaling of φ and of the mask
/// (re-binarized at 0.5) by each of [`ROUGHNESS_SCALES`]. Slopes are
/// converted back to radians per original pixel so the four values share
/// units with the full-scale roughness.
pub fn multiscale_roughness(phi: &RealField, m: &NucleusMask) -> Result<[f64; 4]> {
    check_grid(phi.grid(), m.grid())?;
    let mask = m.to_real();
    let mut out = [0.0; 4];
    for (slot, &scale) in out.iter_mut().zip(&ROUGHNESS_SCALES) {
        let small = resize_bicubic(phi, scale)?;
        let bits: Vec<bool> = resize_bicubic(&mask, scale)?
            .as_slice()
            .iter()
            .map(|&v| v >= 0.5)
            .collect();
        let count = bits.iter().filter(|&&b| b).count();
        if count < MIN_MASK_PIXELS {
            return Err(undefined(
                "multiscale_roughness",
                alloc::format!(
                    "mask keeps {count} pixels at scale {scale}, need {MIN_MASK_PIXELS}"
                ),
            ));
        }
        *slot = roughness_bits(&small, &bits)? * scale;
    }
    Ok(out)
}

pub fn phase_variance(phi: &RealField, m: &NucleusMask) -> Result<f64> {
    check_grid(phi.grid(), m.grid())?;
    let n = m.area() as f64;
    let mean = masked(phi, m.bits()).sum::<f64>() / n;
    Ok(masked(phi, m.bits())
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n)
}

/// Phase-weighted centroid `(x, y)` and `Σ φ M`; undefined when that sum is
/// not positive.
fn phase_centroid(
    phi: &RealField,
    bits: &[bool],
    feature: &'static str,
) -> Result<([f64; 2], f64)> {
    let w = phi.width();
    let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
    for (i, (&v, &b)) in phi.as_slice().iter().zip(bits).enumerate() {
        if b {
            sx += v * (i % w) as f64;
            sy += v * (i / w) as f64;
            s += v;
        }
    }
    if !(s > 0.0) {
        return Err(undefined(
            feature,
            alloc::format!("masked phase sum {s} is not positive"),
        ));
    }
    Ok(([sx / s, sy / s], s))
}

/// Distance between the phase-weighted and the geometric centroid of the
/// mask, in pixels.
pub fn centroid_shift(phi: &RealField, m: &NucleusMask) -> Result<f64> {
    check_grid(phi.grid(), m.grid())?;
    let ([px, py], _) = phase_centroid(phi, m.bits(), "centroid_shift")?;
    let w = phi.width();
    let (mut gx, mut gy) = (0.0, 0.0);
    for (i, _) in m.bits().iter().enumerate().filter(|(_, &b)| b) {
        gx += (i % w) as f64;
        gy += (i / w) as f64;
    }
    let n = m.area() as f64;
    Ok((px - gx / n).hypot(py - gy / n))
}

/// `Σ φ M r² + Σ φ M d²` with `r` the distance of each pixel from the ROI
/// center and `d` the distance of the phase centroid from it. The second
/// term is added, as in the parallel-axis form it is written in, rather
/// than subtracted.
pub fn moment_of_inertia(phi: &RealField, m: &NucleusMask) -> Result<f64> {
    check_grid(phi.grid(), m.grid())?;
    let ([px, py], s) = phase_centroid(phi, m.bits(), "moment_of_inertia")?;
    let (w, h) = (phi.width(), phi.height());
    let (ox, oy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut acc = 0.0;
    for (i, (&v, &b)) in phi.as_slice().iter().zip(m.bits()).enumerate() {
        if b {
            let (dx, dy) = ((i % w) as f64 - ox, (i / w) as f64 - oy);
            acc += v * (dx * dx + dy * dy);
        }
    }
    let d2 = (px - ox).powi(2) + (py - oy).powi(2);
    Ok(acc + s * d2)
}

/// All nineteen measurements of one nucleus. `phase` must be unwrapped.
pub fn extract_all(
    rgb: &RgbImage,
    phase: &PhaseMap,
    m: &NucleusMask,
    id: &str,
) -> Result<NucleusFeatures> {
    if phase.is_wrapped() {
        bail!(InvalidInput, "phase features need an unwrapped phase map");
    }
    let phi = phase.values();
    let stats = intensity_stats(rgb, m)?;
    let (area, perimeter) = (area(m), perimeter(m));
    Ok(NucleusFeatures {
        nucleus_id: String::from(id),
        area,
        perimeter,
        perimeter_per_area: perimeter / area,
        mean_luma: stats.mean_luma,
        mean_rgb: stats.mean_rgb,
        var_rgb: stats.var_rgb,
        optical_volume: optical_volume(phi, m)?,
        roughness_per_area: roughness_per_area(phi, m)?,
        roughness_scaled: multiscale_roughness(phi, m)?,
        phase_variance: phase_variance(phi, m)?,
        centroid_shift: centroid_shift(phi, m)?,
        moment_of_inertia: moment_of_inertia(phi, m)?,
    })
}
