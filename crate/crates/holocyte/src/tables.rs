//! CSV tables: feature rows, PCA scores and optimization traces. Numbers
//! are written as plain decimals rounded to nine significant digits.

use std::path::Path;

use holocyte_core::features::FeatureMatrix;
use holocyte_core::linalg::Matrix;
use holocyte_core::recon::IterationRecord;

use crate::error::{Error, Result};

/// `v` rounded to nine significant digits, printed without an exponent.
pub fn fmt9(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::write(path, e))
}

fn finish(path: &Path, mut w: csv::Writer<std::fs::File>) -> Result<()> {
    w.flush().map_err(|e| Error::write(path, e))
}

/// A feature table with per-row class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub matrix: FeatureMatrix,
    pub labels: Vec<String>,
}

pub fn write_features(path: &Path, table: &FeatureTable) -> Result<()> {
    let mut w = writer(path)?;
    let m = &table.matrix;
    let mut header = vec!["nucleus_id".to_string(), "class_label".to_string()];
    header.extend(m.columns().iter().cloned());
    w.write_record(&header).map_err(|e| Error::write(path, e))?;
    for (i, id) in m.ids().iter().enumerate() {
        let mut rec = vec![id.clone(), table.labels[i].clone()];
        rec.extend(m.values().row(i).iter().map(|&v| fmt9(v)));
        w.write_record(&rec).map_err(|e| Error::write(path, e))?;
    }
    finish(path, w)
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::read(path, e))?;
    let header = r.headers().map_err(|e| Error::read(path, e))?.clone();
    if header.len() < 3 || &header[0] != "nucleus_id" || &header[1] != "class_label" {
        return Err(Error::read(
            path,
            "expected columns nucleus_id, class_label, then features",
        ));
    }
    let columns: Vec<String> = header.iter().skip(2).map(String::from).collect();
    let (mut ids, mut labels, mut data) = (Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| Error::read(path, e))?;
        if rec.len() != header.len() {
            return Err(Error::read(
                path,
                format!("row {} has {} fields", line + 2, rec.len()),
            ));
        }
        ids.push(rec[0].to_string());
        labels.push(rec[1].to_string());
        for v in rec.iter().skip(2) {
            data.push(
                v.parse::<f64>()
                    .map_err(|e| Error::read(path, format!("row {}: `{v}`: {e}", line + 2)))?,
            );
        }
    }
    let values = Matrix::new(ids.len(), columns.len(), data).map_err(|e| Error::read(path, e))?;
    let matrix = FeatureMatrix::new(ids, columns, values).map_err(|e| Error::read(path, e))?;
    Ok(FeatureTable { matrix, labels })
}

pub fn write_scores(path: &Path, ids: &[String], scores: &Matrix, labels: &[String]) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["nucleus_id".to_string()];
    header.extend((1..=scores.cols()).map(|k| format!("PC{k}")));
    header.push("class_label".into());
    w.write_record(&header).map_err(|e| Error::write(path, e))?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(scores.row(i).iter().map(|&v| fmt9(v)));
        rec.push(labels[i].clone());
        w.write_record(&rec).map_err(|e| Error::write(path, e))?;
    }
    finish(path, w)
}

pub fn write_trace(path: &Path, trace: &[IterationRecord]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "iteration",
        "c1",
        "c2",
        "total",
        "delta",
        "c1_step",
        "c2_step",
    ])
    .map_err(|e| Error::write(path, e))?;
    for t in trace {
        w.write_record([
            t.iteration.to_string(),
            fmt9(t.cost.c1),
            fmt9(t.cost.c2),
            fmt9(t.cost.total),
            fmt9(t.delta),
            fmt9(t.c1_step),
            fmt9(t.c2_step),
        ])
        .map_err(|e| Error::write(path, e))?;
    }
    finish(path, w)
}

/// Total-cost column of a trace file.
pub fn read_trace_totals(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::read(path, e))?;
    let col = r
        .headers()
        .map_err(|e| Error::read(path, e))?
        .iter()
        .position(|h| h == "total")
        .ok_or_else(|| Error::read(path, "no `total` column"))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::read(path, e))?;
            rec[col].parse().map_err(|e| Error::read(path, e))
        })
        .collect()
}

/// `(image_id, cx, cy)` rows of an ROI list.
pub fn read_rois(path: &Path) -> Result<Vec<(String, usize, usize)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::read(path, e))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::read(path, e))?;
            if rec.len() != 3 {
                return Err(Error::read(path, "expected image_id,cx,cy"));
            }
            let n = |s: &str| s.trim().parse::<usize>().map_err(|e| Error::read(path, e));
            Ok((rec[0].to_string(), n(&rec[1])?, n(&rec[2])?))
        })
        .collect()
}
