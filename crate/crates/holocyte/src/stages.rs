//! Pipeline stages. Each works on directories of files, processes nuclei on
//! a worker pool and returns what it read and wrote in input order, so the
//! outputs do not depend on scheduling.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use holocyte_core::features::{extract_all, FeatureMatrix, NucleusFeatures};
use holocyte_core::holo::{empty_object, make_phantom, make_reference, synthesize_hologram};
use holocyte_core::recon::{
    calibrate_reference, fourier_reconstruct, optimize_reconstruct, wrapped_phase, ReconConfig,
};
use holocyte_core::segment::{segment_nucleus_with, NucleusMask, RoiSpec, SegmentParams};
use holocyte_core::unwrap::{unwrap_phase, PhaseMap};
use holocyte_core::RgbImage;
use log::{info, warn};
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::config::{AnalysisSection, PipelineConfig};
use crate::error::{Error, Result};
use crate::images;
use crate::manifest::{digest_all, Manifest, NucleusRecord, RunStatus, StageRecord};
use crate::population::plan;
use crate::qpif;
use crate::report;
use crate::tables::{self, FeatureTable};

pub const CALIBRATION: &str = "calibration.qpif";
pub const BRIGHTFIELD: &str = "brightfield.png";
pub const HOLOGRAM: &str = "hologram.qpif";
pub const PHASE_TRUTH: &str = "phase_truth.qpif";
pub const MASK_TRUTH: &str = "mask_truth.png";
pub const PHASE: &str = "phase.qpif";
pub const TRACE: &str = "cost_trace.csv";
pub const MASK: &str = "mask.png";
pub const MASK_FIELD: &str = "mask.qpif";
pub const FEATURES: &str = "features.csv";

/// Stream id separating the calibration hologram's noise from the nuclei.
const CALIBRATION_SEED_SALT: u64 = 0x6361_6c69_6272_6174;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Opt,
    Fourier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Columns {
    All,
    Brightfield,
}

impl Columns {
    pub fn name(self) -> &'static str {
        match self {
            Self::All => "all",
            Self::Brightfield => "brightfield",
        }
    }
}

/// Files a stage read and wrote.
#[derive(Debug, Default)]
pub struct StageFiles {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl StageFiles {
    pub fn record(&self, name: &str, root: &Path) -> Result<StageRecord> {
        Ok(StageRecord {
            name: name.to_string(),
            inputs: digest_all(root, &self.inputs)?,
            outputs: digest_all(root, &self.outputs)?,
        })
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::write(dir, e))
}

fn par_map<T: Sync, R: Send>(
    pool: &ThreadPool,
    items: &[T],
    f: impl Fn(&T) -> R + Sync + Send,
) -> Vec<R> {
    pool.install(|| items.par_iter().map(f).collect())
}

fn ok_indices(nuclei: &[NucleusRecord]) -> Vec<usize> {
    (0..nuclei.len()).filter(|&i| nuclei[i].is_ok()).collect()
}

/// Records per-nucleus failures as drops and keeps the successful outputs.
fn settle<T>(
    stage: &str,
    nuclei: &mut [NucleusRecord],
    idx: &[usize],
    results: Vec<Result<T>>,
) -> Vec<(usize, T)> {
    let mut kept = Vec::new();
    for (&i, r) in idx.iter().zip(results) {
        match r {
            Ok(v) => kept.push((i, v)),
            Err(e) => {
                warn!("{stage}: dropping {}: {e}", nuclei[i].id);
                nuclei[i].drop_with(stage, e.to_string());
            }
        }
    }
    kept
}

/// Fails the stage when more than `max_fraction` of all nuclei are dropped.
pub fn check_drops(nuclei: &[NucleusRecord], max_fraction: f64) -> Result<()> {
    let dropped = nuclei.iter().filter(|n| !n.is_ok()).count();
    if dropped as f64 > max_fraction * nuclei.len() as f64 {
        return Err(Error::Output(format!(
            "{dropped} of {} nuclei dropped, more than {:.0}%",
            nuclei.len(),
            100.0 * max_fraction
        )));
    }
    Ok(())
}

pub fn simulate(
    cfg: &PipelineConfig,
    out: &Path,
    pool: &ThreadPool,
) -> Result<(StageFiles, Vec<NucleusRecord>)> {
    let optical = cfg.optical.to_core()?;
    let plans = plan(cfg)?;
    mkdir(out)?;
    let noise = cfg.optical.hologram_noise_sigma;
    let reference = make_reference(optical.grid, optical.reference());

    let cal_path = out.join(CALIBRATION);
    let cal = synthesize_hologram(
        &empty_object(&optical),
        &reference,
        noise,
        cfg.seed ^ CALIBRATION_SEED_SALT,
    )?;
    qpif::write_real(&cal_path, &cal, "counts")?;

    let written = par_map(pool, &plans, |p| -> Result<Vec<PathBuf>> {
        let truth = make_phantom(&p.spec, p.phantom_seed, &optical)?;
        let h = synthesize_hologram(&truth.object_field, &reference, noise, p.hologram_seed)?;
        let dir = out.join(&p.id);
        mkdir(&dir)?;
        let paths = [
            dir.join(BRIGHTFIELD),
            dir.join(HOLOGRAM),
            dir.join(PHASE_TRUTH),
            dir.join(MASK_TRUTH),
        ];
        images::write_rgb(&paths[0], &truth.brightfield)?;
        qpif::write_real(&paths[1], &h, "counts")?;
        qpif::write_real(&paths[2], truth.phase_truth.values(), "rad")?;
        images::write_mask(&paths[3], truth.mask.grid(), truth.mask.bits())?;
        Ok(paths.to_vec())
    });
    let mut files = StageFiles {
        inputs: Vec::new(),
        outputs: vec![cal_path],
    };
    for (p, w) in plans.iter().zip(written) {
        files
            .outputs
            .extend(w.map_err(|e| Error::Output(format!("{}: {e}", p.id)))?);
    }
    info!(
        "simulate: {} nuclei written to {}",
        plans.len(),
        out.display()
    );
    Ok((files, plans.iter().map(|p| p.record()).collect()))
}

pub fn reconstruct(
    dataset: &Path,
    nuclei: &mut [NucleusRecord],
    out: &Path,
    method: Method,
    recon: &ReconConfig,
    pool: &ThreadPool,
) -> Result<StageFiles> {
    let cal_path = dataset.join(CALIBRATION);
    if !cal_path.is_file() {
        return Err(Error::input(format!(
            "missing calibration hologram {}",
            cal_path.display()
        )));
    }
    let cal = qpif::read_real(&cal_path)?;
    let beam = calibrate_reference(&cal)?.beam;
    info!(
        "calibrated reference: tilt ({:.6}, {:.6}) cycles/px, amplitude {:.4}",
        beam.tilt_x, beam.tilt_y, beam.amplitude
    );
    mkdir(out)?;
    let idx = ok_indices(nuclei);
    let ids: Vec<String> = idx.iter().map(|&i| nuclei[i].id.clone()).collect();
    let start = Instant::now();
    let results = par_map(pool, &ids, |id| -> Result<(PathBuf, Vec<PathBuf>)> {
        let h_path = dataset.join(id).join(HOLOGRAM);
        let h = qpif::read_real(&h_path)?;
        if h.width() != cal.width() || h.height() != cal.height() {
            return Err(Error::input("hologram and calibration sizes differ"));
        }
        let dir = out.join(id);
        mkdir(&dir)?;
        let mut written = Vec::new();
        let field = match method {
            Method::Fourier => fourier_reconstruct(&h, &beam, recon.filter_radius(&beam))?,
            Method::Opt => {
                let rec = optimize_reconstruct(&h, &beam, recon)?;
                let trace = dir.join(TRACE);
                tables::write_trace(&trace, &rec.trace)?;
                written.push(trace);
                rec.field
            }
        };
        let (wrapped, _) = wrapped_phase(&field);
        let phase = unwrap_phase(&wrapped)?;
        let p = dir.join(PHASE);
        qpif::write_real(&p, phase.values(), "rad")?;
        written.insert(0, p);
        Ok((h_path, written))
    });
    let mut files = StageFiles {
        inputs: vec![cal_path],
        outputs: Vec::new(),
    };
    for (_, (input, written)) in settle("reconstruct", nuclei, &idx, results) {
        files.inputs.push(input);
        files.outputs.extend(written);
    }
    info!(
        "reconstruct ({method:?}): {} ROIs in {:.1?}",
        ids.len(),
        start.elapsed()
    );
    Ok(files)
}

/// ROI centers by image id; nuclei without an entry use their full frame.
pub type RoiTable = BTreeMap<String, [usize; 2]>;

pub fn load_rois(path: &Path) -> Result<RoiTable> {
    Ok(tables::read_rois(path)?
        .into_iter()
        .map(|(id, cx, cy)| (id, [cx, cy]))
        .collect())
}

fn roi_for(id: &str, width: usize, height: usize, size: Option<usize>, rois: &RoiTable) -> RoiSpec {
    let full = width.min(height);
    let size = size.unwrap_or(full).min(full);
    RoiSpec {
        image_id: id.to_string(),
        center: rois.get(id).copied().unwrap_or([size / 2, size / 2]),
        size,
    }
}

pub fn segment(
    dataset: &Path,
    nuclei: &mut [NucleusRecord],
    out: &Path,
    params: &SegmentParams,
    rois: &RoiTable,
    roi_size: Option<usize>,
    pitch: f64,
    pool: &ThreadPool,
) -> Result<StageFiles> {
    mkdir(out)?;
    let idx = ok_indices(nuclei);
    let ids: Vec<String> = idx.iter().map(|&i| nuclei[i].id.clone()).collect();
    let results = par_map(pool, &ids, |id| -> Result<(PathBuf, Vec<PathBuf>)> {
        let bf_path = dataset.join(id).join(BRIGHTFIELD);
        let img = images::read_rgb(&bf_path)?;
        let roi = roi_for(id, img.width(), img.height(), roi_size, rois);
        let mask = segment_nucleus_with(&img, &roi, params)?;
        let dir = out.join(id);
        mkdir(&dir)?;
        let (png, field) = (dir.join(MASK), dir.join(MASK_FIELD));
        images::write_mask(&png, mask.grid(), mask.bits())?;
        let mut real = mask.to_real();
        real = holocyte_core::Field::from_vec(
            holocyte_core::Grid::new(real.width(), real.height(), pitch)?,
            real.into_vec(),
        )?;
        qpif::write_real(&field, &real, "mask")?;
        Ok((bf_path, vec![png, field]))
    });
    let mut files = StageFiles::default();
    for (_, (input, written)) in settle("segment", nuclei, &idx, results) {
        files.inputs.push(input);
        files.outputs.extend(written);
    }
    info!("segment: {} ROIs", ids.len());
    Ok(files)
}

fn crop_rgb_to(img: &RgbImage, roi: &RoiSpec) -> Result<RgbImage> {
    if img.width() == roi.size && img.height() == roi.size {
        Ok(img.clone())
    } else {
        Ok(roi.crop_rgb(img)?)
    }
}

#[allow(clippy::too_many_arguments)]
pub fn features(
    dataset: &Path,
    phase_dir: &Path,
    mask_dir: &Path,
    nuclei: &mut [NucleusRecord],
    out: &Path,
    rois: &RoiTable,
    pitch: f64,
    pool: &ThreadPool,
) -> Result<StageFiles> {
    mkdir(out)?;
    let idx = ok_indices(nuclei);
    let ids: Vec<String> = idx.iter().map(|&i| nuclei[i].id.clone()).collect();
    let results = par_map(
        pool,
        &ids,
        |id| -> Result<(Vec<PathBuf>, NucleusFeatures)> {
            let bf_path = dataset.join(id).join(BRIGHTFIELD);
            let ph_path = phase_dir.join(id).join(PHASE);
            let mk_path = mask_dir.join(id).join(MASK);
            let img = images::read_rgb(&bf_path)?;
            let phase = qpif::read_real(&ph_path)?;
            let mask = NucleusMask::new(images::read_mask(&mk_path, pitch)?)?;
            let size = mask.grid().width;
            let roi = roi_for(id, img.width(), img.height(), Some(size), rois);
            let rgb = crop_rgb_to(&img, &roi)?;
            let phase = if phase.width() == size && phase.height() == size {
                phase
            } else {
                roi.crop_field(&phase)?
            };
            let f = extract_all(&rgb, &PhaseMap::unwrapped(phase), &mask, id)?;
            Ok((vec![bf_path, ph_path, mk_path], f))
        },
    );
    let mut files = StageFiles::default();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, (inputs, f)) in settle("features", nuclei, &idx, results) {
        files.inputs.extend(inputs);
        labels.push(nuclei[i].class_label.clone());
        rows.push(f);
    }
    if rows.len() < 2 {
        return Err(Error::Output(format!(
            "only {} nuclei have features",
            rows.len()
        )));
    }
    let table = FeatureTable {
        matrix: FeatureMatrix::from_features(&rows)?,
        labels,
    };
    let path = out.join(FEATURES);
    tables::write_features(&path, &table)?;
    files.outputs.push(path);
    info!("features: {} rows", rows.len());
    Ok(files)
}

pub fn analyze(
    features_csv: &Path,
    out: &Path,
    columns: Columns,
    cfg: &AnalysisSection,
    seed: u64,
) -> Result<(StageFiles, report::Report)> {
    let table = tables::read_features(features_csv)?;
    let table = match columns {
        Columns::All => table,
        Columns::Brightfield => FeatureTable {
            matrix: table.matrix.brightfield()?,
            labels: table.labels,
        },
    };
    mkdir(out)?;
    let a = report::analyze(&table, cfg, seed)?;
    let title = format!(
        "PC1 vs PC2, {} features ({}), silhouette {:.3}",
        table.matrix.n_cols(),
        columns.name(),
        a.report.silhouette.value
    );
    let outputs = report::write_analysis(out, &table, &a, &title)?;
    info!(
        "analyze ({}): {} x {}, silhouette {:.4}, first {} PCs explain {:.1}%",
        columns.name(),
        table.matrix.n_rows(),
        table.matrix.n_cols(),
        a.report.silhouette.value,
        a.report.silhouette.components,
        100.0 * a.report.explained_by_components
    );
    Ok((
        StageFiles {
            inputs: vec![features_csv.to_path_buf()],
            outputs,
        },
        a.report,
    ))
}

pub const SIMULATE_DIR: &str = "simulate";
pub const RECONSTRUCT_DIR: &str = "reconstruct";
pub const SEGMENT_DIR: &str = "segment";
pub const FEATURES_DIR: &str = "features";
pub const ANALYZE_ALL_DIR: &str = "analyze/all";
pub const ANALYZE_BRIGHTFIELD_DIR: &str = "analyze/brightfield";

/// simulate → reconstruct (optimization) → segment → features →
/// analyze (all columns) → analyze (brightfield columns), under one
/// manifest in `out`.
pub fn pipeline(cfg: &PipelineConfig, out: &Path, pool: &ThreadPool) -> Result<Manifest> {
    cfg.validate()?;
    mkdir(out)?;
    let recon = cfg.recon.to_core()?;
    let params = cfg.segmentation.to_core()?;
    let pitch = cfg.optical.pixel_pitch_um;
    let nuclei = plan(cfg)?.iter().map(|p| p.record()).collect();
    let mut m = Manifest::new(cfg.digest(), cfg.seed, nuclei);
    m.write(out)?;
    let start = Instant::now();
    let max_drop = cfg.analysis.max_drop_fraction;

    let result = (|| -> Result<()> {
        let sim = out.join(SIMULATE_DIR);
        let rec = out.join(RECONSTRUCT_DIR);
        let seg = out.join(SEGMENT_DIR);
        let feat = out.join(FEATURES_DIR);
        let rois = RoiTable::new();

        run_stage(&mut m, out, "simulate", |m| {
            let (files, nuclei) = simulate(cfg, &sim, pool)?;
            m.nuclei = nuclei;
            Ok(files)
        })?;
        run_stage(&mut m, out, "reconstruct", |m| {
            let f = reconstruct(&sim, &mut m.nuclei, &rec, Method::Opt, &recon, pool)?;
            check_drops(&m.nuclei, max_drop)?;
            Ok(f)
        })?;
        run_stage(&mut m, out, "segment", |m| {
            let f = segment(&sim, &mut m.nuclei, &seg, &params, &rois, None, pitch, pool)?;
            check_drops(&m.nuclei, max_drop)?;
            Ok(f)
        })?;
        run_stage(&mut m, out, "features", |m| {
            let f = features(&sim, &rec, &seg, &mut m.nuclei, &feat, &rois, pitch, pool)?;
            check_drops(&m.nuclei, max_drop)?;
            Ok(f)
        })?;
        let csv = feat.join(FEATURES);
        run_stage(&mut m, out, "analyze-all", |_| {
            Ok(analyze(
                &csv,
                &out.join(ANALYZE_ALL_DIR),
                Columns::All,
                &cfg.analysis,
                cfg.seed,
            )?
            .0)
        })?;
        run_stage(&mut m, out, "analyze-brightfield", |_| {
            Ok(analyze(
                &csv,
                &out.join(ANALYZE_BRIGHTFIELD_DIR),
                Columns::Brightfield,
                &cfg.analysis,
                cfg.seed,
            )?
            .0)
        })?;
        Ok(())
    })();

    match result {
        Ok(()) => {
            m.status = RunStatus::Complete;
            m.write(out)?;
            info!("pipeline finished in {:.1?}", start.elapsed());
            Ok(m)
        }
        Err(e) => {
            m.status = RunStatus::Failed;
            m.error = Some(e.to_string());
            m.write(out)?;
            Err(e)
        }
    }
}

/// Runs one stage, records its files and rewrites the manifest; errors are
/// tagged with the stage name.
fn run_stage(
    m: &mut Manifest,
    root: &Path,
    name: &'static str,
    f: impl FnOnce(&mut Manifest) -> Result<StageFiles>,
) -> Result<()> {
    let files = f(m).map_err(|e| e.in_stage(name))?;
    m.stages
        .push(files.record(name, root).map_err(|e| e.in_stage(name))?);
    m.write(root)
}
