//! PCA organization of a feature table: report JSON, scores CSV and the
//! PC1/PC2 scatter.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use holocyte_core::analyze::{
    explained_variance, kmo, pca, project, silhouette, stability_curve, PcaModel,
};
use holocyte_core::linalg::Matrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::AnalysisSection;
use crate::error::{Error, Result};
use crate::svg;
use crate::tables::{self, FeatureTable};

pub const KMO_FORMULA: &str = "KMO = sum_{j!=k} r_jk^2 / (sum_{j!=k} r_jk^2 + sum_{j!=k} q_jk^2), \
q_jk = -c_jk / sqrt(c_jj c_kk), C = inverse of the correlation matrix";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmoReport {
    pub formula: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_variable: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub shuffle_seed: u64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settled_at: Option<usize>,
    pub n: Vec<usize>,
    pub s: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteReport {
    pub metric: String,
    pub components: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub columns: Vec<String>,
    pub n_nuclei: usize,
    pub class_counts: BTreeMap<String, usize>,
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub explained_fraction: Vec<f64>,
    pub explained_by_components: f64,
    /// First `components` eigenvectors, one row per feature.
    pub loadings: Vec<Vec<f64>>,
    pub kmo: KmoReport,
    pub stability: StabilityReport,
    pub silhouette: SilhouetteReport,
}

pub struct Analysis {
    pub report: Report,
    pub model: PcaModel,
    pub scores: Matrix,
}

fn label_indices(labels: &[String]) -> Vec<usize> {
    let mut names: Vec<&String> = labels.iter().collect();
    names.sort();
    names.dedup();
    labels
        .iter()
        .map(|l| names.binary_search(&l).expect("label present"))
        .collect()
}

pub fn analyze(table: &FeatureTable, cfg: &AnalysisSection, seed: u64) -> Result<Analysis> {
    let m = &table.matrix;
    let d = m.values();
    let (n, p) = (d.rows(), d.cols());
    let k = cfg.components.min(p);
    let model = pca(d, m.columns())?;
    let z = model.standardize(d)?;
    let scores = project(&z, &model, k)?;
    let sil = silhouette(&scores, &label_indices(&table.labels))?;

    let kmo = match kmo(d) {
        Ok(r) => KmoReport {
            formula: KMO_FORMULA.into(),
            overall: Some(r.overall),
            per_variable: Some(r.per_variable),
            error: None,
        },
        Err(e) => KmoReport {
            formula: KMO_FORMULA.into(),
            overall: None,
            per_variable: None,
            error: Some(e.to_string()),
        },
    };

    // The stability curve depends on row order; rows are shuffled with a
    // seed derived from the run seed.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let shuffled = Matrix::from_fn(n, p, |i, j| d.get(order[i], j));
    let stability = match stability_curve(&shuffled, p.max(2)) {
        Ok(t) => StabilityReport {
            shuffle_seed: seed,
            threshold: cfg.stability_threshold,
            settled_at: t.settled_at(cfg.stability_threshold),
            n: t.n,
            s: t.s,
            error: None,
        },
        Err(e) => StabilityReport {
            shuffle_seed: seed,
            threshold: cfg.stability_threshold,
            settled_at: None,
            n: Vec::new(),
            s: Vec::new(),
            error: Some(e.to_string()),
        },
    };

    let mut class_counts = BTreeMap::new();
    for l in &table.labels {
        *class_counts.entry(l.clone()).or_insert(0) += 1;
    }
    let report = Report {
        columns: m.columns().to_vec(),
        n_nuclei: n,
        class_counts,
        column_means: model.column_means.clone(),
        column_stds: model.column_stds.clone(),
        eigenvalues: model.eigenvalues.clone(),
        explained_fraction: model.explained_fraction.clone(),
        explained_by_components: explained_variance(&model, k),
        loadings: (0..p)
            .map(|i| (0..k).map(|c| model.eigenvectors.get(i, c)).collect())
            .collect(),
        kmo,
        stability,
        silhouette: SilhouetteReport {
            metric: "euclidean".into(),
            components: k,
            value: sil,
        },
    };
    Ok(Analysis {
        report,
        model,
        scores,
    })
}

pub const REPORT_NAME: &str = "report.json";
pub const SCORES_NAME: &str = "scores.csv";
pub const SCATTER_NAME: &str = "scatter.svg";

/// Writes report, scores and scatter into `dir`; returns the paths written.
pub fn write_analysis(
    dir: &Path,
    table: &FeatureTable,
    analysis: &Analysis,
    title: &str,
) -> Result<Vec<PathBuf>> {
    let report_path = dir.join(REPORT_NAME);
    let mut text = serde_json::to_string_pretty(&analysis.report).expect("report serializes");
    text.push('\n');
    std::fs::write(&report_path, text).map_err(|e| Error::write(&report_path, e))?;
    let scores_path = dir.join(SCORES_NAME);
    tables::write_scores(
        &scores_path,
        table.matrix.ids(),
        &analysis.scores,
        &table.labels,
    )?;
    let svg_path = dir.join(SCATTER_NAME);
    let s = &analysis.scores;
    let ys: Vec<f64> = if s.cols() > 1 {
        s.column(1)
    } else {
        vec![0.0; s.rows()]
    };
    let doc = svg::scatter(&s.column(0), &ys, &table.labels, title);
    std::fs::write(&svg_path, doc).map_err(|e| Error::write(&svg_path, e))?;
    Ok(vec![report_path, scores_path, svg_path])
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::read(path, e))
}
