//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::error;
use rayon::ThreadPool;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::manifest::{Manifest, RunStatus};
use crate::stages::{self, Columns, Method, RoiTable};

#[derive(Debug, Parser)]
#[command(
    name = "holocyte",
    version,
    about = "Simulate, reconstruct and analyze off-axis holograms of cell nuclei"
)]
pub struct Cli {
    /// Worker threads for per-nucleus stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate phantom nuclei, their holograms and a calibration hologram.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Recover unwrapped phase maps from a simulated dataset.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Directory written by `simulate`.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Opt)]
        method: Method,
    },
    /// Segment nuclei in the brightfield images.
    Segment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// CSV of `image_id,cx,cy`; nuclei not listed use their full frame.
        #[arg(long)]
        rois: Option<PathBuf>,
        /// ROI side in pixels (default: the full frame).
        #[arg(long)]
        roi_size: Option<usize>,
    },
    /// Measure the nineteen features of every nucleus.
    Features {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Directory written by `reconstruct`.
        #[arg(long)]
        phase: PathBuf,
        /// Directory written by `segment`.
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        rois: Option<PathBuf>,
    },
    /// PCA, KMO, stability and silhouette of a feature table.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// `features.csv` written by `features`.
        #[arg(long)]
        features: PathBuf,
        #[arg(long, value_enum, default_value_t = Columns::All)]
        columns: Columns,
    },
    /// All stages under one manifest.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &PipelineConfig) -> Result<PathBuf> {
    common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::input("no output directory: pass --out or set output_dir"))
}

pub fn thread_pool(threads: Option<usize>) -> Result<ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::input("--threads must be at least 1"));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Output(e.to_string()))
}

/// Writes a one-stage manifest for a standalone subcommand.
fn finish_standalone(
    out: &Path,
    cfg: &PipelineConfig,
    name: &'static str,
    nuclei: Vec<crate::manifest::NucleusRecord>,
    files: &stages::StageFiles,
) -> Result<()> {
    let mut m = Manifest::new(cfg.digest(), cfg.seed, nuclei);
    m.stages.push(files.record(name, out)?);
    m.status = RunStatus::Complete;
    m.write(out)
}

fn dataset_nuclei(dataset: &Path) -> Result<Vec<crate::manifest::NucleusRecord>> {
    Ok(Manifest::read(dataset)
        .map_err(|e| Error::input(format!("{e} (is this a simulate output?)")))?
        .nuclei)
}

fn rois(path: &Option<PathBuf>) -> Result<RoiTable> {
    match path {
        Some(p) => stages::load_rois(p),
        None => Ok(RoiTable::new()),
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let pool = thread_pool(cli.threads)?;
    match cli.command {
        Command::Simulate { common } => {
            let cfg = load_config(&common)?;
            let out = out_dir(&common, &cfg)?;
            let (files, nuclei) =
                stages::simulate(&cfg, &out, &pool).map_err(|e| e.in_stage("simulate"))?;
            finish_standalone(&out, &cfg, "simulate", nuclei, &files)
        }
        Command::Reconstruct {
            common,
            dataset,
            method,
        } => {
            let cfg = load_config(&common)?;
            let out = out_dir(&common, &cfg)?;
            let mut nuclei = dataset_nuclei(&dataset)?;
            let recon = cfg.recon.to_core()?;
            let files = stages::reconstruct(&dataset, &mut nuclei, &out, method, &recon, &pool)
                .and_then(|f| {
                    stages::check_drops(&nuclei, cfg.analysis.max_drop_fraction).map(|_| f)
                })
                .map_err(|e| e.in_stage("reconstruct"))?;
            finish_standalone(&out, &cfg, "reconstruct", nuclei, &files)
        }
        Command::Segment {
            common,
            dataset,
            rois: roi_path,
            roi_size,
        } => {
            let cfg = load_config(&common)?;
            let out = out_dir(&common, &cfg)?;
            let mut nuclei = dataset_nuclei(&dataset)?;
            let params = cfg.segmentation.to_core()?;
            let table = rois(&roi_path)?;
            let files = stages::segment(
                &dataset,
                &mut nuclei,
                &out,
                &params,
                &table,
                roi_size,
                cfg.optical.pixel_pitch_um,
                &pool,
            )
            .and_then(|f| stages::check_drops(&nuclei, cfg.analysis.max_drop_fraction).map(|_| f))
            .map_err(|e| e.in_stage("segment"))?;
            finish_standalone(&out, &cfg, "segment", nuclei, &files)
        }
        Command::Features {
            common,
            dataset,
            phase,
            masks,
            rois: roi_path,
        } => {
            let cfg = load_config(&common)?;
            let out = out_dir(&common, &cfg)?;
            let mut nuclei = dataset_nuclei(&dataset)?;
            // Nuclei dropped by earlier stages have no phase or mask.
            for n in nuclei.iter_mut().filter(|n| n.is_ok()) {
                if !phase.join(&n.id).join(stages::PHASE).is_file() {
                    n.drop_with("reconstruct", "no phase map");
                } else if !masks.join(&n.id).join(stages::MASK).is_file() {
                    n.drop_with("segment", "no mask");
                }
            }
            let table = rois(&roi_path)?;
            let files = stages::features(
                &dataset,
                &phase,
                &masks,
                &mut nuclei,
                &out,
                &table,
                cfg.optical.pixel_pitch_um,
                &pool,
            )
            .and_then(|f| stages::check_drops(&nuclei, cfg.analysis.max_drop_fraction).map(|_| f))
            .map_err(|e| e.in_stage("features"))?;
            finish_standalone(&out, &cfg, "features", nuclei, &files)
        }
        Command::Analyze {
            common,
            features,
            columns,
        } => {
            let cfg = load_config(&common)?;
            let out = out_dir(&common, &cfg)?;
            if !features.is_file() {
                return Err(Error::input(format!(
                    "missing feature table {}",
                    features.display()
                )));
            }
            let (files, _) = stages::analyze(&features, &out, columns, &cfg.analysis, cfg.seed)
                .map_err(|e| e.in_stage("analyze"))?;
            finish_standalone(&out, &cfg, "analyze", Vec::new(), &files)
        }
        Command::Pipeline { common } => {
            let cfg = load_config(&common)?;
            let out = out_dir(&common, &cfg)?;
            stages::pipeline(&cfg, &out, &pool).map(|_| ())
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
