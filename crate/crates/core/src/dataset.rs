//! Time-series ingestion, consecutiveness-aware lagged designs and
//! standardization.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw multivariate series. Missing cells are stored as `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    values: DMatrix<f64>,
    labels: Vec<String>,
    time_norm: Option<Vec<f64>>,
    beep: Option<Vec<u32>>,
    day: Option<Vec<u32>>,
}

impl TimeSeriesDataset {
    pub fn new(
        values: DMatrix<f64>,
        labels: Vec<String>,
        time_norm: Option<Vec<f64>>,
        beep: Option<Vec<u32>>,
        day: Option<Vec<u32>>,
    ) -> Result<Self> {
        if let Some(t) = &time_norm {
            if t.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::data("time_norm must be non-decreasing"));
            }
        }
        Self::new_unordered(values, labels, time_norm, beep, day)
    }

    /// Like [`TimeSeriesDataset::new`] but allows timestamps out of order.
    /// Block-bootstrap replicates keep each occasion's original timestamp.
    pub(crate) fn new_unordered(
        values: DMatrix<f64>,
        labels: Vec<String>,
        time_norm: Option<Vec<f64>>,
        beep: Option<Vec<u32>>,
        day: Option<Vec<u32>>,
    ) -> Result<Self> {
        let (n, p) = values.shape();
        if n < 2 || p < 1 {
            return Err(Error::data(format!("need n >= 2 and p >= 1, got n={n}, p={p}")));
        }
        if labels.len() != p {
            return Err(Error::data(format!("{} labels for {p} columns", labels.len())));
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::data("values must be finite or missing"));
        }
        if let Some(t) = &time_norm {
            if t.len() != n {
                return Err(Error::data("time_norm length differs from row count"));
            }
            if t.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::data("time_norm must lie in [0, 1]"));
            }
        }
        match (&beep, &day) {
            (Some(b), Some(d)) => {
                if b.len() != n || d.len() != n {
                    return Err(Error::data("beep/day length differs from row count"));
                }
                if b.iter().chain(d.iter()).any(|&x| x == 0) {
                    return Err(Error::data("beep and day must be positive integers"));
                }
            }
            (None, None) => {}
            _ => return Err(Error::data("beep and day must be given together")),
        }
        Ok(Self { values, labels, time_norm, beep, day })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn time_norm(&self) -> Option<&[f64]> {
        self.time_norm.as_deref()
    }

    pub fn beep(&self) -> Option<&[u32]> {
        self.beep.as_deref()
    }

    pub fn day(&self) -> Option<&[u32]> {
        self.day.as_deref()
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.values[(row, col)].is_nan()
    }

    pub fn row_complete(&self, row: usize) -> bool {
        self.values.row(row).iter().all(|v| !v.is_nan())
    }

    /// Timestamps on [0, 1]. Synthesized as equally spaced over all `n`
    /// occasions when absent, so gaps keep their temporal width.
    pub fn timestamps(&self) -> Vec<f64> {
        match &self.time_norm {
            Some(t) => t.clone(),
            None => {
                let n = self.n();
                (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
            }
        }
    }

    /// Whether occasion `t - 1` directly precedes occasion `t`.
    pub fn consecutive(&self, t: usize) -> bool {
        if t == 0 {
            return false;
        }
        match (&self.beep, &self.day) {
            (Some(b), Some(d)) => d[t] == d[t - 1] && b[t] == b[t - 1] + 1,
            _ => true,
        }
    }

    /// Write the dataset as CSV. `comments` become `#`-prefixed header lines.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = self.labels.clone();
        if self.time_norm.is_some() {
            header.push("time_norm".into());
        }
        if self.beep.is_some() {
            header.push("beep".into());
            header.push("day".into());
        }
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let mut rec: Vec<String> = self
                .values
                .row(i)
                .iter()
                .map(|v| if v.is_nan() { "NA".to_string() } else { format!("{v}") })
                .collect();
            if let Some(t) = &self.time_norm {
                rec.push(format!("{}", t[i]));
            }
            if let (Some(b), Some(d)) = (&self.beep, &self.day) {
                rec.push(b[i].to_string());
                rec.push(d[i].to_string());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Which CSV columns play which role. An empty `values` list selects every
/// column not claimed by another role.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnRoles {
    #[serde(default)]
    pub values: Vec<String>,
    #[serde(default)]
    pub time: Option<String>,
    #[serde(default)]
    pub beep: Option<String>,
    #[serde(default)]
    pub day: Option<String>,
}

pub fn load_csv(path: impl AsRef<Path>, roles: &ColumnRoles) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    read_csv(file, roles)
}

fn is_missing_cell(s: &str) -> bool {
    let s = s.trim();
    s.is_empty() || s == "NA"
}

pub fn read_csv<R: Read>(reader: R, roles: &ColumnRoles) -> Result<TimeSeriesDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("column '{name}' not found in header")))
    };
    let time_idx = roles.time.as_deref().map(find).transpose()?;
    let beep_idx = roles.beep.as_deref().map(find).transpose()?;
    let day_idx = roles.day.as_deref().map(find).transpose()?;
    if beep_idx.is_some() != day_idx.is_some() {
        return Err(Error::data("beep and day columns must be given together"));
    }
    let value_idx: Vec<usize> = if roles.values.is_empty() {
        let claimed = [time_idx, beep_idx, day_idx];
        (0..headers.len()).filter(|i| !claimed.contains(&Some(*i))).collect()
    } else {
        roles.values.iter().map(|v| find(v)).collect::<Result<_>>()?
    };
    if value_idx.is_empty() {
        return Err(Error::data("no value columns"));
    }

    let p = value_idx.len();
    let mut vals = Vec::new();
    let mut times = Vec::new();
    let mut beeps = Vec::new();
    let mut days = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line + 1;
        for &c in &value_idx {
            let cell = rec.get(c).unwrap_or("");
            if is_missing_cell(cell) {
                vals.push(f64::NAN);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::data(format!("row {row}, column '{}': non-numeric value '{cell}'", headers[c]))
                })?;
                if !v.is_finite() {
                    return Err(Error::data(format!("row {row}, column '{}': non-finite value", headers[c])));
                }
                vals.push(v);
            }
        }
        if let Some(c) = time_idx {
            let cell = rec.get(c).unwrap_or("");
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::data(format!("row {row}: bad timestamp '{cell}'")))?;
            times.push(v);
        }
        for (idx, out, what) in [(beep_idx, &mut beeps, "beep"), (day_idx, &mut days, "day")] {
            if let Some(c) = idx {
                let cell = rec.get(c).unwrap_or("");
                let v: i64 = cell
                    .parse()
                    .map_err(|_| Error::data(format!("row {row}: {what} '{cell}' is not an integer")))?;
                if v <= 0 || v > u32::MAX as i64 {
                    return Err(Error::data(format!("row {row}: {what} must be a positive integer, got {v}")));
                }
                out.push(v as u32);
            }
        }
    }
    let n = vals.len() / p;
    let values = DMatrix::from_row_slice(n, p, &vals);
    let labels = value_idx.iter().map(|&i| headers[i].clone()).collect();
    TimeSeriesDataset::new(
        values,
        labels,
        time_idx.map(|_| times),
        beep_idx.map(|_| beeps),
        day_idx.map(|_| days),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub mean: f64,
    pub sd: f64,
}

/// Per-column scaling applied to a design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub predictors: Vec<ColumnScale>,
    pub responses: Vec<ColumnScale>,
}

/// Regression-ready lagged rows.
///
/// Predictor columns are lag-major: the first `p` columns hold lag
/// `lags[0]`, the next `p` hold `lags[1]`, and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedDesign {
    pub predictors: DMatrix<f64>,
    pub responses: DMatrix<f64>,
    pub response_times: Vec<f64>,
    /// Occasion index (0-based, in the source dataset) of each response row.
    pub response_rows: Vec<usize>,
    pub lags: Vec<usize>,
    pub labels: Vec<String>,
    /// Number of candidate pairs before filtering (`n - 1`).
    pub total_rows: usize,
    pub scaling: Option<Scaling>,
}

impl LaggedDesign {
    pub fn included_rows(&self) -> usize {
        self.responses.nrows()
    }

    pub fn p(&self) -> usize {
        self.responses.ncols()
    }

    pub fn n_predictors(&self) -> usize {
        self.predictors.ncols()
    }

    /// Number of occasions in the source series.
    pub fn n_occasions(&self) -> usize {
        self.total_rows + 1
    }

    /// Keep only the given rows (in the given order).
    pub fn select_rows(&self, rows: &[usize]) -> LaggedDesign {
        LaggedDesign {
            predictors: self.predictors.select_rows(rows),
            responses: self.responses.select_rows(rows),
            response_times: rows.iter().map(|&r| self.response_times[r]).collect(),
            response_rows: rows.iter().map(|&r| self.response_rows[r]).collect(),
            lags: self.lags.clone(),
            labels: self.labels.clone(),
            total_rows: self.total_rows,
            scaling: self.scaling.clone(),
        }
    }

    /// Undo standardization, returning the design on its original scale.
    pub fn unscaled(&self) -> LaggedDesign {
        let mut out = self.clone();
        if let Some(s) = &self.scaling {
            apply_inverse(&mut out.predictors, &s.predictors);
            apply_inverse(&mut out.responses, &s.responses);
        }
        out.scaling = None;
        out
    }
}

fn apply_inverse(m: &mut DMatrix<f64>, scales: &[ColumnScale]) {
    for (j, sc) in scales.iter().enumerate() {
        for v in m.column_mut(j).iter_mut() {
            *v = *v * sc.sd + sc.mean;
        }
    }
}

/// Row `t` is usable iff every link in the chain `t - max_lag .. t` passes
/// the consecutiveness rule and every occasion that is actually used
/// (`t` and `t - l` for each lag) is complete.
fn row_usable(data: &TimeSeriesDataset, t: usize, lags: &[usize], max_lag: usize) -> bool {
    if t < max_lag {
        return false;
    }
    if !(0..max_lag).all(|k| data.consecutive(t - k)) {
        return false;
    }
    data.row_complete(t) && lags.iter().all(|&l| data.row_complete(t - l))
}

pub fn build_lagged_design(data: &TimeSeriesDataset, lags: &[usize]) -> Result<LaggedDesign> {
    if lags.is_empty() {
        return Err(Error::invalid("lag set is empty"));
    }
    if lags.contains(&0) {
        return Err(Error::invalid("lags must be positive integers"));
    }
    let mut lags = lags.to_vec();
    lags.sort_unstable();
    lags.dedup();
    let max_lag = *lags.last().unwrap();
    let (n, p) = (data.n(), data.p());
    let rows: Vec<usize> = (0..n).filter(|&t| row_usable(data, t, &lags, max_lag)).collect();
    let q = p * lags.len();
    if rows.len() < q + 2 {
        return Err(Error::ident(format!(
            "only {} usable lagged rows; need at least {} (number of predictors + 2)",
            rows.len(),
            q + 2
        )));
    }
    let m = rows.len();
    let vals = data.values();
    let responses = DMatrix::from_fn(m, p, |r, j| vals[(rows[r], j)]);
    let predictors = DMatrix::from_fn(m, q, |r, c| {
        let (li, j) = (c / p, c % p);
        vals[(rows[r] - lags[li], j)]
    });
    let ts = data.timestamps();
    Ok(LaggedDesign {
        predictors,
        responses,
        response_times: rows.iter().map(|&t| ts[t]).collect(),
        response_rows: rows,
        lags,
        labels: data.labels().to_vec(),
        total_rows: n - 1,
        scaling: None,
    })
}

fn column_scale(col: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let m = col.clone().count() as f64;
    let mean = col.clone().sum::<f64>() / m;
    let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

fn scale_columns(m: &mut DMatrix<f64>, names: &[String], what: &str) -> Result<Vec<ColumnScale>> {
    let mut out = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let (mean, sd) = column_scale(m.column(j).iter().copied());
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::data(format!("{what} column '{}' has zero variance", names[j])));
        }
        for v in m.column_mut(j).iter_mut() {
            *v = (*v - mean) / sd;
        }
        out.push(ColumnScale { mean, sd });
    }
    Ok(out)
}

/// Column-standardize predictors and responses (sample sd, divisor `m - 1`).
///
/// Standardizing an already standardized design composes the scalings, so the
/// stored scaling always maps back to the original units.
pub fn standardize(design: &LaggedDesign) -> Result<LaggedDesign> {
    let p = design.p();
    let pred_names: Vec<String> = (0..design.n_predictors())
        .map(|c| format!("{} (lag {})", design.labels[c % p], design.lags[c / p]))
        .collect();
    let mut out = design.clone();
    let pred = scale_columns(&mut out.predictors, &pred_names, "predictor")?;
    let resp = scale_columns(&mut out.responses, &design.labels, "response")?;
    let compose = |new: Vec<ColumnScale>, old: Option<&Vec<ColumnScale>>| -> Vec<ColumnScale> {
        match old {
            None => new,
            Some(old) => new
                .iter()
                .zip(old)
                .map(|(n, o)| ColumnScale { mean: o.mean + o.sd * n.mean, sd: o.sd * n.sd })
                .collect(),
        }
    };
    out.scaling = Some(Scaling {
        predictors: compose(pred, design.scaling.as_ref().map(|s| &s.predictors)),
        responses: compose(resp, design.scaling.as_ref().map(|s| &s.responses)),
    });
    Ok(out)
}
