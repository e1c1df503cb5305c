//! Compositional dataset ingestion and derived design matrices.
//!
//! A [`Dataset`] holds a strictly positive feature matrix; a [`LogDesign`] is
//! its elementwise logarithm with optional centering/scaling. Ratio columns
//! `log(x_j / x_k) = W_j - W_k` are materialized on demand by
//! [`expand_ratios`], restricted to a feature subset when only a screened
//! support is of interest.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Response family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Binomial,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Gaussian => write!(f, "gaussian"),
            Family::Binomial => write!(f, "binomial"),
        }
    }
}

/// A positive feature matrix with response and metadata.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// n x p matrix of strictly positive values.
    pub x: Array2<f64>,
    /// Length-n response.
    pub y: Array1<f64>,
    /// Length-p feature names, unique.
    pub feature_names: Vec<String>,
    /// Optional per-row group labels for blocked cross-validation.
    pub group_ids: Option<Vec<String>>,
    pub family: Family,
}

impl Dataset {
    /// Validates and builds a dataset.
    pub fn new(
        x: Array2<f64>,
        y: Array1<f64>,
        feature_names: Vec<String>,
        group_ids: Option<Vec<String>>,
        family: Family,
    ) -> Result<Self> {
        let (n, p) = (x.nrows(), x.ncols());
        if n < 2 || p < 2 {
            return Err(Error::Domain(format!(
                "need n >= 2 and p >= 2, got n = {n}, p = {p}"
            )));
        }
        if y.len() != n {
            return Err(Error::Dimension(format!(
                "response length {} != n = {n}",
                y.len()
            )));
        }
        if feature_names.len() != p {
            return Err(Error::Dimension(format!(
                "{} feature names for p = {p}",
                feature_names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Domain(format!("duplicate feature name '{name}'")));
            }
        }
        if let Some(g) = &group_ids {
            if g.len() != n {
                return Err(Error::Dimension(format!(
                    "{} group labels for n = {n}",
                    g.len()
                )));
            }
        }
        for ((i, j), &v) in x.indexed_iter() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Domain(format!(
                    "feature '{}' at row {} is {v}; all entries must be strictly positive",
                    feature_names[j],
                    i + 1
                )));
            }
        }
        if family == Family::Binomial {
            for (i, &v) in y.iter().enumerate() {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Domain(format!(
                        "binomial response at row {} is {v}; must be 0 or 1",
                        i + 1
                    )));
                }
            }
        }
        Ok(Dataset {
            x,
            y,
            feature_names,
            group_ids,
            family,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Re-validates the response under a new family.
    pub fn with_family(mut self, family: Family) -> Result<Self> {
        self.family = family;
        Dataset::new(
            self.x,
            self.y,
            self.feature_names,
            self.group_ids,
            family,
        )
    }
}

/// Name given to the all-ones feature appended by [`augment_ones`].
pub const ONES_FEATURE: &str = "_one";

/// Appends a constant-one feature so that ratios against it reproduce
/// unpaired log terms: `log(x_j / 1) = log(x_j)`.
pub fn augment_ones(d: &Dataset) -> Result<Dataset> {
    if d.feature_names.iter().any(|n| n == ONES_FEATURE) {
        return Err(Error::Domain(format!(
            "feature name '{ONES_FEATURE}' already present; dataset is already augmented"
        )));
    }
    let (n, p) = (d.n(), d.p());
    let mut x = Array2::zeros((n, p + 1));
    x.slice_mut(ndarray::s![.., ..p]).assign(&d.x);
    x.column_mut(p).fill(1.0);
    let mut names = d.feature_names.clone();
    names.push(ONES_FEATURE.to_string());
    Dataset::new(x, d.y.clone(), names, d.group_ids.clone(), d.family)
}

/// Elementwise-log design matrix with optional centering and scaling.
#[derive(Debug, Clone)]
pub struct LogDesign {
    /// n x p log-feature matrix after any centering/scaling.
    pub w: Array2<f64>,
    /// Sample column means of log(X) (subtracted when `centered`).
    pub column_means: Array1<f64>,
    /// Sample column standard deviations of log(X) (divided out when `scaled`).
    pub column_sds: Array1<f64>,
    pub centered: bool,
    pub scaled: bool,
}

impl LogDesign {
    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn p(&self) -> usize {
        self.w.ncols()
    }

    /// Wraps an already-log-scale matrix, computing its column statistics and
    /// applying the requested transforms. Used when the log design is
    /// generated directly rather than derived from a positive matrix.
    pub fn from_log_matrix(mut w: Array2<f64>, center: bool, scale: bool) -> Result<Self> {
        let (n, p) = (w.nrows(), w.ncols());
        if n < 2 || p < 1 {
            return Err(Error::Domain(format!(
                "log design needs n >= 2 and p >= 1, got n = {n}, p = {p}"
            )));
        }
        let mut means = Array1::zeros(p);
        let mut sds = Array1::zeros(p);
        for j in 0..p {
            let col = w.column(j);
            let m = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
            means[j] = m;
            sds[j] = (ss / (n as f64 - 1.0)).sqrt();
        }
        if center {
            for j in 0..p {
                let m = means[j];
                w.column_mut(j).mapv_inplace(|v| v - m);
            }
        }
        if scale {
            for j in 0..p {
                if sds[j] < 1e-12 {
                    return Err(Error::DegenerateColumn(format!("column {}", j + 1)));
                }
                let s = sds[j];
                w.column_mut(j).mapv_inplace(|v| v / s);
            }
        }
        Ok(LogDesign {
            w,
            column_means: means,
            column_sds: sds,
            centered: center,
            scaled: scale,
        })
    }

    /// Mean of the raw (uncentered, unscaled) ratio column `W_j - W_k`; used
    /// to back-transform intercepts fitted on transformed columns.
    pub fn ratio_mean(&self, j: usize, k: usize) -> f64 {
        self.column_means[j] - self.column_means[k]
    }

    /// Raw (uncentered, unscaled) ratio column `log(x_j) - log(x_k)` minus its
    /// mean, i.e. the centered ratio column in natural units.
    pub fn centered_ratio_column(&self, j: usize, k: usize) -> Array1<f64> {
        let n = self.n();
        let mut col = Array1::zeros(n);
        let (sj, sk) = if self.scaled {
            (self.column_sds[j], self.column_sds[k])
        } else {
            (1.0, 1.0)
        };
        // The stored columns are ((w - m) / s) when transformed; undo the
        // scaling but keep the centering.
        for i in 0..n {
            let wj = self.w[[i, j]] * sj + if self.centered { 0.0 } else { -self.column_means[j] };
            let wk = self.w[[i, k]] * sk + if self.centered { 0.0 } else { -self.column_means[k] };
            col[i] = wj - wk;
        }
        col
    }
}

/// Takes the elementwise logarithm of the feature matrix.
pub fn log_design(d: &Dataset, center: bool, scale: bool) -> Result<LogDesign> {
    let w = d.x.mapv(f64::ln);
    match LogDesign::from_log_matrix(w, center, scale) {
        Err(Error::DegenerateColumn(c)) => {
            // report by name instead of position
            let idx: usize = c
                .trim_start_matches("column ")
                .parse::<usize>()
                .map(|v| v - 1)
                .unwrap_or(0);
            Err(Error::DegenerateColumn(d.feature_names[idx].clone()))
        }
        other => other,
    }
}

/// Ratio matrix with its pair index.
pub type RatioExpansion = (Array2<f64>, Vec<(usize, usize)>);

/// Expands ratio columns `W_j - W_k` over all pairs `j < k`, optionally
/// restricted to a feature subset (pairs within the stage-one support).
///
/// Returns the n x m ratio matrix and its pair index in lexicographic order.
/// Indices are zero-based.
pub fn expand_ratios(d: &LogDesign, support: Option<&[usize]>) -> Result<RatioExpansion> {
    let p = d.p();
    let mut feats: Vec<usize> = match support {
        Some(s) => {
            for &j in s {
                if j >= p {
                    return Err(Error::Index { index: j, p });
                }
            }
            let mut v = s.to_vec();
            v.sort_unstable();
            v.dedup();
            v
        }
        None => (0..p).collect(),
    };
    feats.shrink_to_fit();
    let q = feats.len();
    let m = q * q.saturating_sub(1) / 2;
    let n = d.n();
    let mut z = Array2::zeros((n, m));
    let mut pairs = Vec::with_capacity(m);
    let mut c = 0;
    for a in 0..q {
        for b in (a + 1)..q {
            let (j, k) = (feats[a], feats[b]);
            for i in 0..n {
                z[[i, c]] = d.w[[i, j]] - d.w[[i, k]];
            }
            pairs.push((j, k));
            c += 1;
        }
    }
    Ok((z, pairs))
}

/// Loads a dataset from a CSV file with a header row.
///
/// All columns other than the response and optional group column are treated
/// as features, in file order. `pseudocount` is added to every feature cell
/// before the positivity check, matching the usual handling of zero
/// intensities.
pub fn load_csv(
    path: &Path,
    response_column: &str,
    group_column: Option<&str>,
    pseudocount: f64,
) -> Result<Dataset> {
    if pseudocount < 0.0 || !pseudocount.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "pseudocount must be a nonnegative real, got {pseudocount}"
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Domain(format!("cannot open {}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            column: "<header>".into(),
            message: e.to_string(),
        })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();

    let resp_idx = headers
        .iter()
        .position(|h| h == response_column)
        .ok_or_else(|| Error::Domain(format!("response column '{response_column}' not found")))?;
    let group_idx = match group_column {
        Some(g) => Some(
            headers
                .iter()
                .position(|h| h == g)
                .ok_or_else(|| Error::Domain(format!("group column '{g}' not found")))?,
        ),
        None => None,
    };

    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| i != resp_idx && Some(i) != group_idx)
        .collect();
    let feature_names: Vec<String> = feature_cols.iter().map(|&i| headers[i].clone()).collect();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut y = Vec::new();
    let mut groups = Vec::new();
    for (ri, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: ri + 1,
            column: "<record>".into(),
            message: e.to_string(),
        })?;
        let parse_cell = |ci: usize| -> Result<f64> {
            let raw = record.get(ci).ok_or_else(|| Error::Parse {
                row: ri + 1,
                column: headers[ci].clone(),
                message: "missing cell".into(),
            })?;
            raw.trim().parse::<f64>().map_err(|_| Error::Parse {
                row: ri + 1,
                column: headers[ci].clone(),
                message: format!("non-numeric cell '{raw}'"),
            })
        };
        y.push(parse_cell(resp_idx)?);
        if let Some(gi) = group_idx {
            groups.push(
                record
                    .get(gi)
                    .ok_or_else(|| Error::Parse {
                        row: ri + 1,
                        column: headers[gi].clone(),
                        message: "missing cell".into(),
                    })?
                    .trim()
                    .to_string(),
            );
        }
        let mut row = Vec::with_capacity(feature_cols.len());
        for &ci in &feature_cols {
            let v = parse_cell(ci)?;
            if v < 0.0 {
                return Err(Error::Parse {
                    row: ri + 1,
                    column: headers[ci].clone(),
                    message: format!("negative feature value {v}"),
                });
            }
            let shifted = v + pseudocount;
            if shifted <= 0.0 {
                return Err(Error::Domain(format!(
                    "feature '{}' at row {} is {v}; still nonpositive after pseudocount {pseudocount}",
                    headers[ci],
                    ri + 1
                )));
            }
            row.push(shifted);
        }
        rows.push(row);
    }

    let n = rows.len();
    let p = feature_cols.len();
    let mut x = Array2::zeros((n, p));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    Dataset::new(
        x,
        Array1::from_vec(y),
        feature_names,
        if groups.is_empty() { None } else { Some(groups) },
        Family::Gaussian,
    )
}

/// Writes a dataset back to CSV (response column named `y` unless a name is
/// given). Raw feature values are written as-is; no pseudocount is removed.
pub fn write_csv(d: &Dataset, path: &Path, response_name: &str) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Domain(format!("cannot write {}: {e}", path.display())))?;
    let mut header: Vec<String> = vec![response_name.to_string()];
    header.extend(d.feature_names.iter().cloned());
    if d.group_ids.is_some() {
        header.push("group".into());
    }
    writer
        .write_record(&header)
        .map_err(|e| Error::Domain(e.to_string()))?;
    for i in 0..d.n() {
        let mut rec: Vec<String> = vec![format!("{}", d.y[i])];
        for j in 0..d.p() {
            rec.push(format!("{}", d.x[[i, j]]));
        }
        if let Some(g) = &d.group_ids {
            rec.push(g[i].clone());
        }
        writer
            .write_record(&rec)
            .map_err(|e| Error::Domain(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}
