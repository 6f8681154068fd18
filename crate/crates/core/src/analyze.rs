//! Unsupervised organization of a feature matrix: correlation PCA,
//! eigenvector stability as rows are added, Kaiser-Meyer-Olkin sampling
//! adequacy and silhouette scores of labelled projections.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{bail, Error, Result};
use crate::linalg::{symmetric_eigen, Matrix};

/// Column-standardized data with the statistics used.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub data: Matrix,
    pub means: Vec<f64>,
    /// Population standard deviations.
    pub stds: Vec<f64>,
}

/// Subtracts column means and divides by population standard deviations.
/// `names` labels columns in the zero-variance error; it may be empty.
pub fn standardize(d: &Matrix, names: &[String]) -> Result<Standardized> {
    let (n, p) = (d.rows(), d.cols());
    if n < 2 {
        return Err(Error::InsufficientRows { needed: 2, got: n });
    }
    if !d.is_finite() {
        bail!(InvalidInput, "data matrix has non-finite entries");
    }
    let mut means = vec![0.0; p];
    let mut stds = vec![0.0; p];
    for j in 0..p {
        let col = d.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        // relative test: a column of identical large values leaves rounding noise
        if !(std > 1e-12 * mean.abs().max(f64::MIN_POSITIVE)) {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
            return Err(Error::DegenerateColumn(name));
        }
        means[j] = mean;
        stds[j] = std;
    }
    let data = Matrix::from_fn(n, p, |i, j| (d.get(i, j) - means[j]) / stds[j]);
    Ok(Standardized { data, means, stds })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
    /// Unit eigenvectors as columns, ordered by descending eigenvalue; each
    /// is signed so that its largest-magnitude entry is positive.
    pub eigenvectors: Matrix,
    pub eigenvalues: Vec<f64>,
    pub explained_fraction: Vec<f64>,
}

impl PcaModel {
    pub fn n_features(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Standardizes raw rows with the fitted statistics.
    pub fn standardize(&self, d: &Matrix) -> Result<Matrix> {
        if d.cols() != self.n_features() {
            bail!(
                InvalidInput,
                "model has {} features, data {}",
                self.n_features(),
                d.cols()
            );
        }
        Ok(Matrix::from_fn(d.rows(), d.cols(), |i, j| {
            (d.get(i, j) - self.column_means[j]) / self.column_stds[j]
        }))
    }
}

/// `DᵀD / n` of standardized data: the correlation matrix.
pub fn correlation_matrix(z: &Matrix) -> Matrix {
    z.gram(z.rows() as f64)
}

/// Principal components of the correlation matrix of `d`. Raw data is
/// standardized first; standardized data passes through unchanged.
pub fn pca(d: &Matrix, names: &[String]) -> Result<PcaModel> {
    let st = standardize(d, names)?;
    let eig = symmetric_eigen(&correlation_matrix(&st.data))?;
    // rounding can leave the null space slightly negative
    let eigenvalues: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    let explained_fraction = eigenvalues.iter().map(|v| v / total).collect();
    Ok(PcaModel {
        column_means: st.means,
        column_stds: st.stds,
        eigenvectors: eig.vectors,
        eigenvalues,
        explained_fraction,
    })
}

/// Scores of standardized rows on the first `k` components.
pub fn project(z: &Matrix, model: &PcaModel, k: usize) -> Result<Matrix> {
    let p = model.n_features();
    if k == 0 || k > p {
        bail!(InvalidInput, "cannot project on {k} of {p} components");
    }
    let idx: Vec<usize> = (0..k).collect();
    z.matmul(&model.eigenvectors.select_columns(&idx)?)
}

/// Fraction of total variance carried by the first `k` components.
pub fn explained_variance(model: &PcaModel, k: usize) -> f64 {
    model.explained_fraction.iter().take(k).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityTrace {
    pub n: Vec<usize>,
    pub s: Vec<f64>,
}

impl StabilityTrace {
    /// Smallest `n₀` of the trace such that every `s(n)` with `n ≥ n₀` is at
    /// most `threshold`.
    pub fn settled_at(&self, threshold: f64) -> Option<usize> {
        let last_bad = self.s.iter().rposition(|&s| s > threshold);
        match last_bad {
            None => self.n.first().copied(),
            Some(i) => self.n.get(i + 1).copied(),
        }
    }
}

/// Relative Frobenius change between two eigenvector matrices after
/// flipping each column of `next` to agree in sign with the same column of
/// `prev`.
pub fn eigenvector_change(prev: &Matrix, next: &Matrix) -> f64 {
    let (p, q) = (prev.rows(), prev.cols());
    let mut num = 0.0;
    for k in 0..q {
        let dot: f64 = (0..p).map(|i| prev.get(i, k) * next.get(i, k)).sum();
        let sign = if dot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..p {
            let d = sign * next.get(i, k) - prev.get(i, k);
            num += d * d;
        }
    }
    num.sqrt() / prev.frobenius_norm()
}

/// `s(n) = ‖U⁽ⁿ⁺¹⁾ − U⁽ⁿ⁾‖ / ‖U⁽ⁿ⁾‖` for `n = start_n .. N-1`, with
/// `U⁽ⁿ⁾` the eigenvectors of the PCA of the first `n` rows. Rows should be
/// shuffled beforehand.
pub fn stability_curve(d: &Matrix, start_n: usize) -> Result<StabilityTrace> {
    let (rows, p) = (d.rows(), d.cols());
    let start = start_n;
    if start < p.max(2) {
        return Err(Error::InsufficientRows {
            needed: p.max(2),
            got: start,
        });
    }
    if rows <= start {
        return Err(Error::InsufficientRows {
            needed: start + 1,
            got: rows,
        });
    }
    let mut trace = StabilityTrace {
        n: Vec::new(),
        s: Vec::new(),
    };
    let mut prev = pca(&d.head(start), &[])?.eigenvectors;
    for n in start..rows {
        let next = pca(&d.head(n + 1), &[])?.eigenvectors;
        trace.n.push(n);
        trace.s.push(eigenvector_change(&prev, &next));
        prev = next;
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmoResult {
    pub overall: f64,
    pub per_variable: Vec<f64>,
}

/// Largest accepted condition number of the correlation matrix.
pub const KMO_MAX_CONDITION: f64 = 1e12;

/// Kaiser-Meyer-Olkin sampling adequacy from the anti-image correlations:
/// with `R` the correlation matrix and `C = R⁻¹`, the partial correlations
/// are `q_jk = -c_jk / sqrt(c_jj c_kk)` and
/// `KMO = Σ r²_jk / (Σ r²_jk + Σ q²_jk)` over `j ≠ k`. Per-variable scores
/// restrict the sums to row `j`.
pub fn kmo(d: &Matrix) -> Result<KmoResult> {
    let st = standardize(d, &[])?;
    let r = correlation_matrix(&st.data);
    let p = r.rows();
    if p < 2 {
        bail!(InvalidInput, "KMO needs at least two variables");
    }
    let eig = symmetric_eigen(&r)?;
    let (max, min) = (eig.values[0], eig.values[p - 1]);
    if !(min > max / KMO_MAX_CONDITION) {
        bail!(
            SingularMatrix,
            "correlation matrix condition number exceeds {KMO_MAX_CONDITION:e}"
        );
    }
    let u = &eig.vectors;
    let inv = Matrix::from_fn(p, p, |i, j| {
        (0..p)
            .map(|k| u.get(i, k) * u.get(j, k) / eig.values[k])
            .sum()
    });
    let mut per_variable = Vec::with_capacity(p);
    let (mut r2_all, mut q2_all) = (0.0, 0.0);
    for j in 0..p {
        let (mut r2, mut q2) = (0.0, 0.0);
        for k in (0..p).filter(|&k| k != j) {
            let q = -inv.get(j, k) / (inv.get(j, j) * inv.get(k, k)).sqrt();
            r2 += r.get(j, k).powi(2);
            q2 += q * q;
        }
        per_variable.push(if r2 + q2 > 0.0 { r2 / (r2 + q2) } else { 0.0 });
        r2_all += r2;
        q2_all += q2;
    }
    let overall = if r2_all + q2_all > 0.0 {
        r2_all / (r2_all + q2_all)
    } else {
        0.0
    };
    Ok(KmoResult {
        overall,
        per_variable,
    })
}

/// Mean silhouette of the rows of `scores` under `labels`, with Euclidean
/// distances. A point alone in its cluster scores 0.
pub fn silhouette(scores: &Matrix, labels: &[usize]) -> Result<f64> {
    let n = scores.rows();
    if labels.len() != n {
        bail!(InvalidInput, "{} labels for {n} rows", labels.len());
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        bail!(Degenerate, "silhouette needs at least two distinct labels");
    }
    let slot = |l: usize| classes.binary_search(&l).expect("label listed");
    let mut sizes = vec![0usize; classes.len()];
    for &l in labels {
        sizes[slot(l)] += 1;
    }
    let dist = |a: usize, b: usize| {
        scores
            .row(a)
            .iter()
            .zip(scores.row(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };
    let mut total = 0.0;
    let mut sums = vec![0.0; classes.len()];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[slot(labels[j])] += dist(i, j);
            }
        }
        let own = slot(labels[i]);
        if sizes[own] < 2 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..classes.len())
            .filter(|&c| c != own)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardize_two_values() {
        let d = Matrix::new(2, 1, vec![1.0, 3.0]).unwrap();
        let st = standardize(&d, &[]).unwrap();
        assert_eq!(st.data.as_slice(), &[-1.0, 1.0]);
        assert_eq!(st.stds, [1.0]);
    }

    #[test]
    fn standardize_names_degenerate_column() {
        let d = Matrix::new(3, 2, vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0]).unwrap();
        let err = standardize(&d, &["a".into(), "b".into()]).unwrap_err();
        assert_eq!(err, Error::DegenerateColumn("b".into()));
        assert!(matches!(
            standardize(&d.head(1), &[]),
            Err(Error::InsufficientRows { .. })
        ));
    }

    #[test]
    fn perfectly_correlated_pair() {
        let d = Matrix::new(4, 2, vec![1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 5.0, 10.0]).unwrap();
        let m = pca(&d, &[]).unwrap();
        assert!((m.eigenvalues[0] - 2.0).abs() < 1e-12 && m.eigenvalues[1].abs() < 1e-12);
        let s = core::f64::consts::FRAC_1_SQRT_2;
        assert!((m.eigenvectors.get(0, 0) - s).abs() < 1e-12);
        assert!((explained_variance(&m, 1) - 1.0).abs() < 1e-12);
        let z = standardize(&d, &[]).unwrap().data;
        let scores = project(&z, &m, 2).unwrap();
        assert!(scores.column(1).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn single_column_has_unit_eigenvalue() {
        let d = Matrix::new(3, 1, vec![1.0, 4.0, 2.0]).unwrap();
        let m = pca(&d, &[]).unwrap();
        assert!((m.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert_eq!(explained_variance(&m, 1), 1.0);
    }

    #[test]
    fn kmo_two_columns_is_half() {
        let d = Matrix::new(4, 2, vec![1.0, 2.0, 2.0, 1.0, 3.0, 5.0, 4.0, 3.0]).unwrap();
        assert!((kmo(&d).unwrap().overall - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kmo_rejects_collinear() {
        let d = Matrix::new(
            4,
            3,
            vec![1.0, 2.0, 0.0, 2.0, 4.0, 1.0, 3.0, 6.0, 0.0, 4.0, 8.0, 2.0],
        )
        .unwrap();
        assert!(matches!(kmo(&d), Err(Error::SingularMatrix(_))));
    }

    #[test]
    fn silhouette_cases() {
        let scores = Matrix::new(4, 1, vec![0.0, 0.1, 10.0, 10.1]).unwrap();
        let s = silhouette(&scores, &[0, 0, 1, 1]).unwrap();
        assert!(s > 0.95);
        assert!(silhouette(&scores, &[1, 1, 1, 1]).is_err());
        assert!(silhouette(&scores, &[0, 1]).is_err());
        // a singleton cluster contributes 0
        let s = silhouette(&scores, &[0, 0, 0, 1]).unwrap();
        assert!(s < 1.0);
    }

    #[test]
    fn stability_zero_for_duplicated_rows() {
        let base = Matrix::new(4, 2, vec![1.0, 2.0, 2.0, 1.0, 3.0, 5.0, 4.0, 3.0]).unwrap();
        let mut rows: Vec<Vec<f64>> = (0..4).map(|i| base.row(i).to_vec()).collect();
        for _ in 0..3 {
            rows.extend((0..4).map(|i| base.row(i).to_vec()));
        }
        // after every full copy the correlation matrix is identical
        let d = Matrix::from_rows(&rows).unwrap();
        let t = stability_curve(&d, 4).unwrap();
        assert_eq!(t.n[0], 4);
        assert!(t.s.iter().all(|s| s.is_finite()));
        let settled = StabilityTrace {
            n: vec![1, 2, 3],
            s: vec![0.1, 0.001, 0.002],
        };
        assert_eq!(settled.settled_at(0.005), Some(2));
        assert!(matches!(
            stability_curve(&d, 1),
            Err(Error::InsufficientRows { .. })
        ));
    }
}
