//! Expansion of the configured population into per-nucleus phantom specs.

use holocyte_core::holo::{PhantomClass, PhantomSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Jitter, PipelineConfig};
use crate::error::Result;
use crate::manifest::{NucleusRecord, NucleusStatus};

/// One nucleus to simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct NucleusPlan {
    pub id: String,
    pub class: PhantomClass,
    pub spec: PhantomSpec,
    pub phantom_seed: u64,
    pub hologram_seed: u64,
}

impl NucleusPlan {
    pub fn record(&self) -> NucleusRecord {
        NucleusRecord {
            id: self.id.clone(),
            class_label: self.class.label().to_string(),
            phantom_seed: self.phantom_seed,
            hologram_seed: self.hologram_seed,
            center: self.spec.center.expect("planned nuclei have a center"),
            status: NucleusStatus::Ok,
            dropped_at: None,
            reason: None,
        }
    }
}

pub fn nucleus_id(i: usize) -> String {
    format!("n{i:04}")
}

fn draw(rng: &mut ChaCha8Rng, j: Jitter) -> f64 {
    let (lo, hi) = j.bounds();
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Deterministic in `(config, seed)`: nuclei are numbered in configuration
/// order and every random draw comes from one seeded stream.
pub fn plan(cfg: &PipelineConfig) -> Result<Vec<NucleusPlan>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, h) = (cfg.optical.width as f64, cfg.optical.height as f64);
    let mut out = Vec::with_capacity(cfg.total_nuclei());
    for entry in &cfg.population {
        let class = entry.phantom_class()?;
        for _ in 0..entry.count {
            let radius = draw(&mut rng, entry.nucleus_radius);
            let peak = draw(&mut rng, entry.peak_phase);
            let texture = draw(&mut rng, entry.texture_amplitude);
            let corr = draw(&mut rng, entry.texture_correlation_length);
            let transmittance = draw(&mut rng, entry.inner_transmittance);
            let cj = entry.color_jitter;
            let mut color = entry.nucleus_color;
            for c in color.iter_mut() {
                let shift = if cj > 0.0 {
                    rng.random_range(-cj..=cj)
                } else {
                    0.0
                };
                *c = (*c as f64 + shift).round().clamp(0.0, 255.0) as u8;
            }
            let dj = entry.center_jitter;
            let mut center = [(w - 1.0) / 2.0, (h - 1.0) / 2.0];
            if dj > 0.0 {
                for v in center.iter_mut() {
                    *v += rng.random_range(-dj..=dj);
                }
            }
            let spec = PhantomSpec {
                class,
                profile: entry.profile.into(),
                nucleus_radius: radius,
                peak_phase: peak,
                texture_amplitude: texture,
                texture_correlation_length: corr,
                nucleus_color: color,
                background_color: entry.background_color,
                inner_transmittance: transmittance,
                brightfield_noise_sigma: entry.brightfield_noise_sigma,
                center: Some(center),
            };
            spec.validate()?;
            out.push(NucleusPlan {
                id: nucleus_id(out.len()),
                class,
                spec,
                phantom_seed: rng.random(),
                hologram_seed: rng.random(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_is_seeded_and_ordered() {
        let cfg = PipelineConfig::default();
        let a = plan(&cfg).unwrap();
        assert_eq!(a.len(), 150);
        assert_eq!(a, plan(&cfg).unwrap());
        assert_eq!(a[0].id, "n0000");
        assert_eq!(a[149].class, PhantomClass::TexturedAbnormal);
        let mut other = cfg.clone();
        other.seed = 1;
        assert_ne!(a[0].phantom_seed, plan(&other).unwrap()[0].phantom_seed);
        for p in &a {
            let (lo, hi) = (40.0, 48.0);
            assert!(p.spec.nucleus_radius >= lo && p.spec.nucleus_radius <= hi);
            let c = p.spec.center.unwrap();
            assert!((c[0] - 127.5).abs() <= 4.0 && (c[1] - 127.5).abs() <= 4.0);
        }
    }
}
