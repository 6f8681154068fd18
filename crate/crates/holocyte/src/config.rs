//! Declarative pipeline configuration (TOML). Every field has a default, so
//! an empty file is a valid configuration.

use std::path::{Path, PathBuf};

use holocyte_core::holo::{OpticalConfig, PhantomClass, PhaseProfile};
use holocyte_core::recon::ReconConfig;
use holocyte_core::segment::SegmentParams;
use holocyte_core::Grid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Used when no `--out` is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub optical: OpticalSection,
    pub recon: ReconSection,
    pub segmentation: SegmentSection,
    pub analysis: AnalysisSection,
    pub population: Vec<PopulationEntry>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: None,
            optical: OpticalSection::default(),
            recon: ReconSection::default(),
            segmentation: SegmentSection::default(),
            analysis: AnalysisSection::default(),
            population: PhantomClass::ALL
                .iter()
                .map(|&c| PopulationEntry::for_class(c, 50))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticalSection {
    pub wavelength_nm: f64,
    pub width: usize,
    pub height: usize,
    pub pixel_pitch_um: f64,
    pub reference_amplitude: f64,
    pub object_amplitude: f64,
    pub tilt_x: f64,
    pub tilt_y: f64,
    /// Additive Gaussian sensor noise on every hologram, counts.
    pub hologram_noise_sigma: f64,
}

impl Default for OpticalSection {
    fn default() -> Self {
        let o = OpticalConfig::default();
        Self {
            wavelength_nm: o.wavelength_nm,
            width: o.grid.width,
            height: o.grid.height,
            pixel_pitch_um: o.grid.pixel_pitch,
            reference_amplitude: o.reference_amplitude,
            object_amplitude: o.object_amplitude,
            tilt_x: o.tilt_x,
            tilt_y: o.tilt_y,
            hologram_noise_sigma: 0.0,
        }
    }
}

impl OpticalSection {
    pub fn to_core(&self) -> Result<OpticalConfig> {
        let grid = Grid::new(self.width, self.height, self.pixel_pitch_um).map_err(config_err)?;
        let cfg = OpticalConfig {
            wavelength_nm: self.wavelength_nm,
            grid,
            reference_amplitude: self.reference_amplitude,
            object_amplitude: self.object_amplitude,
            tilt_x: self.tilt_x,
            tilt_y: self.tilt_y,
        };
        cfg.validate().map_err(config_err)?;
        if !(self.hologram_noise_sigma >= 0.0) {
            return Err(Error::input("optical.hologram_noise_sigma must be >= 0"));
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSection {
    pub delta_factor: f64,
    pub max_outer_iterations: usize,
    pub c1_steps: usize,
    pub c2_steps: usize,
    pub relative_cost_tolerance: f64,
    /// Cycles per pixel; half the carrier frequency when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fourier_filter_radius: Option<f64>,
    pub refresh_delta: bool,
}

impl Default for ReconSection {
    fn default() -> Self {
        let r = ReconConfig::default();
        Self {
            delta_factor: r.delta_factor,
            max_outer_iterations: r.max_outer_iterations,
            c1_steps: r.c1_steps,
            c2_steps: r.c2_steps,
            relative_cost_tolerance: r.relative_cost_tolerance,
            fourier_filter_radius: r.fourier_filter_radius,
            refresh_delta: r.refresh_delta,
        }
    }
}

impl ReconSection {
    pub fn to_core(&self) -> Result<ReconConfig> {
        let r = ReconConfig {
            delta_factor: self.delta_factor,
            max_outer_iterations: self.max_outer_iterations,
            c1_steps: self.c1_steps,
            c2_steps: self.c2_steps,
            relative_cost_tolerance: self.relative_cost_tolerance,
            fourier_filter_radius: self.fourier_filter_radius,
            refresh_delta: self.refresh_delta,
        };
        r.validate().map_err(config_err)?;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    pub luma_weights: [f64; 3],
    pub median_window: usize,
    pub init_low_percentile: f64,
    pub init_high_percentile: f64,
    pub max_iterations: usize,
}

impl Default for SegmentSection {
    fn default() -> Self {
        let s = SegmentParams::default();
        Self {
            luma_weights: s.luma_weights,
            median_window: s.median_window,
            init_low_percentile: s.init_low_percentile,
            init_high_percentile: s.init_high_percentile,
            max_iterations: s.max_iterations,
        }
    }
}

impl SegmentSection {
    pub fn to_core(&self) -> Result<SegmentParams> {
        if self.median_window < 3 || self.median_window % 2 == 0 {
            return Err(Error::input(
                "segmentation.median_window must be odd and >= 3",
            ));
        }
        let (lo, hi) = (self.init_low_percentile, self.init_high_percentile);
        if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo >= hi {
            return Err(Error::input(
                "segmentation percentiles must satisfy 0 <= low < high <= 100",
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::input("segmentation.max_iterations must be >= 1"));
        }
        Ok(SegmentParams {
            luma_weights: self.luma_weights,
            median_window: self.median_window,
            init_low_percentile: lo,
            init_high_percentile: hi,
            max_iterations: self.max_iterations,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    /// Principal components kept for scores, scatter and silhouette.
    pub components: usize,
    pub stability_threshold: f64,
    /// A run fails when more than this fraction of nuclei is dropped.
    pub max_drop_fraction: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            components: 2,
            stability_threshold: 0.005,
            max_drop_fraction: 0.2,
        }
    }
}

/// A fixed value or a closed `[low, high]` range sampled uniformly per
/// nucleus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Jitter {
    Fixed(f64),
    Range([f64; 2]),
}

impl Jitter {
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Self::Fixed(v) => (v, v),
            Self::Range([a, b]) => (a, b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileName {
    Dome,
    FlatTop,
}

impl From<ProfileName> for PhaseProfile {
    fn from(p: ProfileName) -> Self {
        match p {
            ProfileName::Dome => PhaseProfile::Dome,
            ProfileName::FlatTop => PhaseProfile::FlatTop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationEntry {
    /// `smooth-small`, `smooth-large` or `textured-abnormal`.
    pub class: String,
    pub count: usize,
    pub profile: ProfileName,
    pub nucleus_radius: Jitter,
    pub peak_phase: Jitter,
    pub texture_amplitude: Jitter,
    pub texture_correlation_length: Jitter,
    pub inner_transmittance: Jitter,
    pub nucleus_color: [u8; 3],
    pub background_color: [u8; 3],
    /// Per-channel uniform offset of the nucleus color, ± counts.
    pub color_jitter: f64,
    pub brightfield_noise_sigma: f64,
    /// Uniform offset of the nucleus center from the ROI center, ± pixels.
    pub center_jitter: f64,
}

impl Default for PopulationEntry {
    fn default() -> Self {
        Self::for_class(PhantomClass::SmoothSmall, 1)
    }
}

impl PopulationEntry {
    /// Classes share every brightfield parameter and differ in phase only.
    pub fn for_class(class: PhantomClass, count: usize) -> Self {
        let (peak, texture) = match class {
            PhantomClass::SmoothSmall => ([1.0, 1.4], 0.0),
            PhantomClass::SmoothLarge => ([2.6, 3.0], 0.0),
            PhantomClass::TexturedAbnormal => ([1.8, 2.2], 0.25),
        };
        Self {
            class: class.label().to_string(),
            count,
            profile: ProfileName::Dome,
            nucleus_radius: Jitter::Range([40.0, 48.0]),
            peak_phase: Jitter::Range(peak),
            texture_amplitude: Jitter::Fixed(texture),
            texture_correlation_length: Jitter::Fixed(2.0),
            inner_transmittance: Jitter::Fixed(0.9),
            nucleus_color: [90, 60, 140],
            background_color: [215, 205, 225],
            color_jitter: 6.0,
            brightfield_noise_sigma: 2.0,
            center_jitter: 4.0,
        }
    }

    pub fn phantom_class(&self) -> Result<PhantomClass> {
        PhantomClass::from_label(&self.class)
            .ok_or_else(|| Error::input(format!("unknown phantom class `{}`", self.class)))
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::read(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.optical.to_core()?;
        self.recon.to_core()?;
        self.segmentation.to_core()?;
        let a = &self.analysis;
        if a.components == 0 {
            return Err(Error::input("analysis.components must be >= 1"));
        }
        if !(a.stability_threshold > 0.0) || !(0.0..=1.0).contains(&a.max_drop_fraction) {
            return Err(Error::input(
                "analysis thresholds must be positive fractions",
            ));
        }
        if self.population.is_empty() {
            return Err(Error::input("population is empty"));
        }
        for p in &self.population {
            p.phantom_class()?;
            if p.count == 0 {
                return Err(Error::input(format!(
                    "population `{}` has count 0",
                    p.class
                )));
            }
            for (name, j) in [
                ("nucleus_radius", p.nucleus_radius),
                ("peak_phase", p.peak_phase),
                ("texture_amplitude", p.texture_amplitude),
                ("texture_correlation_length", p.texture_correlation_length),
                ("inner_transmittance", p.inner_transmittance),
            ] {
                let (lo, hi) = j.bounds();
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::input(format!(
                        "population `{}`: {name} range [{lo}, {hi}] is invalid",
                        p.class
                    )));
                }
            }
            if !(p.color_jitter >= 0.0
                && p.center_jitter >= 0.0
                && p.brightfield_noise_sigma >= 0.0)
            {
                return Err(Error::input(format!(
                    "population `{}`: jitters and noise must be >= 0",
                    p.class
                )));
            }
        }
        Ok(())
    }

    pub fn total_nuclei(&self) -> usize {
        self.population.iter().map(|p| p.count).sum()
    }

    /// SHA-256 of the canonical JSON form, excluding the output location so
    /// that identical runs in different directories share a hash.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex(&Sha256::digest(&json))
    }
}

fn config_err(e: holocyte_core::Error) -> Error {
    Error::input(format!("invalid configuration: {e}"))
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(c, PipelineConfig::default());
        c.validate().unwrap();
        assert_eq!(c.total_nuclei(), 150);
    }

    #[test]
    fn jitter_accepts_scalar_and_range() {
        let c: PipelineConfig = toml::from_str(
            r#"
            seed = 3
            [optical]
            width = 128
            height = 128
            [[population]]
            class = "textured-abnormal"
            count = 4
            nucleus_radius = 20.0
            peak_phase = [1.5, 2.0]
            "#,
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.population[0].nucleus_radius, Jitter::Fixed(20.0));
        assert_eq!(c.population[0].peak_phase, Jitter::Range([1.5, 2.0]));
        assert_eq!(c.optical.tilt_x, 0.15);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(toml::from_str::<PipelineConfig>("sed = 1").is_err());
        let mut c = PipelineConfig::default();
        c.population[0].class = "giant".into();
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.recon.delta_factor = 0.0;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let mut c = PipelineConfig::default();
        c.population[1].peak_phase = Jitter::Range([2.0, 1.0]);
        assert!(c.validate().is_err());
    }

    #[test]
    fn digest_ignores_output_dir_only() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        assert_eq!(a.digest(), b.digest());
        b.seed = 1;
        assert_ne!(a.digest(), b.digest());
    }
}
