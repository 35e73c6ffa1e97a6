//! Block-bootstrap sampling distributions and nodewise prediction errors.
//!
//! Bootstrap quantiles summarize sampling variability of the estimates. With
//! ℓ1-penalized estimators the estimates are biased towards zero, so the
//! bands are not confidence intervals around the true parameter.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{build_lagged_design, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::kernel::gaussian_weight;
use crate::model::{EstimationSpec, Method, TimeVaryingVarModel};
use crate::seed;

pub const DEFAULT_N_BOOT: usize = 50;
pub const DEFAULT_BLOCKS: usize = 10;
pub const DEFAULT_QUANTILES: [f64; 2] = [0.05, 0.95];
/// Largest tolerated share of failed replicates.
pub const MAX_FAILURE_SHARE: f64 = 0.2;

/// Contiguous near-equal blocks over `n` occasions; the first `n % blocks`
/// blocks get one extra occasion.
pub fn block_ranges(n: usize, blocks: usize) -> Result<Vec<std::ops::Range<usize>>> {
    if blocks < 2 {
        return Err(Error::invalid("need at least 2 blocks"));
    }
    if blocks > n {
        return Err(Error::invalid(format!("{blocks} blocks exceed the {n} occasions")));
    }
    let (base, extra) = (n / blocks, n % blocks);
    let mut start = 0;
    Ok((0..blocks)
        .map(|b| {
            let len = base + usize::from(b < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

/// Block indices drawn with replacement for one replicate.
pub fn draw_blocks(seed: u64, blocks: usize) -> Vec<usize> {
    let mut rng = seed::rng(seed);
    (0..blocks).map(|_| rng.random_range(0..blocks)).collect()
}

/// Per-replicate seeds derived from a master seed.
pub fn bootstrap_seeds(master: u64, n_boot: usize) -> Vec<u64> {
    (0..n_boot).map(|r| seed::derive(master, &[r as u64])).collect()
}

/// Concatenate the given blocks in draw order.
///
/// Rows keep their original timestamps and beeps. Days are renumbered so a
/// new day starts wherever two neighbouring rows were not adjacent in the
/// source or came from different source days; no lagged pair spans a seam.
pub fn resample_blocks(data: &TimeSeriesDataset, blocks: usize, draws: &[usize]) -> Result<TimeSeriesDataset> {
    let ranges = block_ranges(data.n(), blocks)?;
    if let Some(&d) = draws.iter().find(|&&d| d >= blocks) {
        return Err(Error::invalid(format!("block index {d} out of range")));
    }
    let rows: Vec<usize> = draws.iter().flat_map(|&d| ranges[d].clone()).collect();
    let times = data.timestamps();
    let src_beep: Vec<u32> = match data.beep() {
        Some(b) => b.to_vec(),
        None => (1..=data.n() as u32).collect(),
    };
    let src_day = data.day();
    let mut day = Vec::with_capacity(rows.len());
    let mut current = 1u32;
    for (k, &r) in rows.iter().enumerate() {
        if k > 0 {
            let prev = rows[k - 1];
            let same_day = src_day.is_none_or(|d| d[r] == d[prev]);
            if r != prev + 1 || !same_day {
                current += 1;
            }
        }
        day.push(current);
    }
    TimeSeriesDataset::new_unordered(
        data.values().select_rows(&rows),
        data.labels().to_vec(),
        Some(rows.iter().map(|&r| times[r]).collect()),
        Some(rows.iter().map(|&r| src_beep[r]).collect()),
        Some(day),
    )
}

/// Type-7 sample quantile of `sorted` (ascending).
pub fn quantile_type7(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDistribution {
    pub method: Method,
    pub labels: Vec<String>,
    pub lags: Vec<usize>,
    pub est_points: Vec<f64>,
    pub n_boot: usize,
    pub blocks: usize,
    pub seeds: Vec<u64>,
    /// Replicates that produced a fit, in seed order.
    pub succeeded: Vec<usize>,
    pub failures: Vec<ReplicateFailure>,
    pub probs: Vec<f64>,
    /// `samples[i][j][l][e][r]` over successful replicates.
    pub samples: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
    /// `quantiles[i][j][l][e][q]` for `probs[q]`.
    pub quantiles: Vec<Vec<Vec<Vec<Vec<f64>>>>>,
}

impl BootstrapDistribution {
    /// Long-format quantile table: coefficient, est_point, prob, value.
    pub fn write_quantiles_csv<W: Write>(&self, w: W, comments: &[String]) -> Result<()> {
        let mut w = w;
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["coefficient", "est_point", "prob", "value"])?;
        let p = self.labels.len();
        for i in 0..p {
            for j in 0..p {
                for (l, lag) in self.lags.iter().enumerate() {
                    let name = format!("{}->{}@{}", self.labels[j], self.labels[i], lag);
                    for (e, t) in self.est_points.iter().enumerate() {
                        for (q, prob) in self.probs.iter().enumerate() {
                            csv.write_record([
                                name.clone(),
                                t.to_string(),
                                prob.to_string(),
                                self.quantiles[i][j][l][e][q].to_string(),
                            ])?;
                        }
                    }
                }
            }
        }
        csv.flush()?;
        Ok(())
    }
}

pub fn block_bootstrap(
    data: &TimeSeriesDataset,
    spec: &EstimationSpec,
    blocks: usize,
    seeds: &[u64],
    probs: &[f64],
) -> Result<BootstrapDistribution> {
    if seeds.is_empty() {
        return Err(Error::invalid("need at least one bootstrap replicate"));
    }
    if probs.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::invalid("quantile probabilities must lie in [0, 1]"));
    }
    block_ranges(data.n(), blocks)?;
    let fits: Vec<Result<TimeVaryingVarModel>> = seeds
        .par_iter()
        .map(|&s| resample_blocks(data, blocks, &draw_blocks(s, blocks)).and_then(|d| spec.fit(&d)))
        .collect();
    summarize(data.labels().to_vec(), spec, blocks, seeds, probs, fits)
}

fn summarize(
    labels: Vec<String>,
    spec: &EstimationSpec,
    blocks: usize,
    seeds: &[u64],
    probs: &[f64],
    fits: Vec<Result<TimeVaryingVarModel>>,
) -> Result<BootstrapDistribution> {
    let mut models = Vec::new();
    let mut succeeded = Vec::new();
    let mut failures = Vec::new();
    for (r, f) in fits.into_iter().enumerate() {
        match f {
            Ok(m) => {
                succeeded.push(r);
                models.push(m);
            }
            Err(e @ (Error::InvalidInput(_) | Error::Io(_))) => return Err(e),
            Err(e) => failures.push(ReplicateFailure { replicate: r, seed: seeds[r], message: e.to_string() }),
        }
    }
    if failures.len() as f64 > MAX_FAILURE_SHARE * seeds.len() as f64 || models.is_empty() {
        return Err(Error::ident(format!(
            "{} of {} bootstrap replicates failed; first: {}",
            failures.len(),
            seeds.len(),
            failures.first().map(|f| f.message.as_str()).unwrap_or("")
        )));
    }
    let p = labels.len();
    let (nl, ne) = (spec.lags.len(), spec.est_points.len());
    let mut samples = vec![vec![vec![vec![Vec::with_capacity(models.len()); ne]; nl]; p]; p];
    let mut quantiles = vec![vec![vec![vec![Vec::new(); ne]; nl]; p]; p];
    for i in 0..p {
        for j in 0..p {
            for l in 0..nl {
                for e in 0..ne {
                    let draws: Vec<f64> = models.iter().map(|m| m.coeffs[i][j][l][e]).collect();
                    let mut sorted = draws.clone();
                    sorted.sort_by(f64::total_cmp);
                    quantiles[i][j][l][e] = probs.iter().map(|&q| quantile_type7(&sorted, q)).collect();
                    samples[i][j][l][e] = draws;
                }
            }
        }
    }
    Ok(BootstrapDistribution {
        method: spec.method,
        labels,
        lags: spec.lags.clone(),
        est_points: spec.est_points.clone(),
        n_boot: seeds.len(),
        blocks,
        seeds: seeds.to_vec(),
        succeeded,
        failures,
        probs: probs.to_vec(),
        samples,
        quantiles,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combination {
    /// Kernel-weighted average of all slice predictions.
    Weighted,
    /// Prediction from the nearest estimation point.
    Closest,
}

impl std::str::FromStr for Combination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weighted" => Ok(Combination::Weighted),
            "closest" => Ok(Combination::Closest),
            _ => Err(Error::invalid(format!("unknown combination '{s}' (expected weighted or closest)"))),
        }
    }
}

impl Combination {
    pub fn name(self) -> &'static str {
        match self {
            Combination::Weighted => "weighted",
            Combination::Closest => "closest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointErrors {
    pub est_point: f64,
    pub rmse: Vec<f64>,
    pub r2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionErrorReport {
    pub combination: Combination,
    pub labels: Vec<String>,
    pub rmse: Vec<f64>,
    pub r2: Vec<f64>,
    pub included_rows: usize,
    pub per_point: Vec<PointErrors>,
}

impl PredictionErrorReport {
    /// Plain-text table: one row per variable with RMSE and R2.
    pub fn to_table(&self) -> String {
        let width = self.labels.iter().map(|l| l.len()).max().unwrap_or(0).max("Variable".len());
        let mut s = format!("{:<width$} {:>6} {:>6}\n", "Variable", "RMSE", "R2");
        for (k, l) in self.labels.iter().enumerate() {
            s += &format!("{:<width$} {:>6.3} {:>6.3}\n", l, self.rmse[k], self.r2[k]);
        }
        s
    }
}

/// Slice weights used to combine predictions at time `t`.
fn slice_weights(model: &TimeVaryingVarModel, t: f64, how: Combination) -> Result<Vec<f64>> {
    let ne = model.n_est();
    match how {
        Combination::Closest => {
            let best = (0..ne).fold(0, |b, e| {
                if (model.est_points[e] - t).abs() < (model.est_points[b] - t).abs() {
                    e
                } else {
                    b
                }
            });
            let mut w = vec![0.0; ne];
            w[best] = 1.0;
            Ok(w)
        }
        Combination::Weighted => {
            let raw: Vec<f64> = match model.bandwidth {
                Some(b) => model.est_points.iter().map(|&e| gaussian_weight(t, e, b)).collect(),
                None if model.is_constant_over_time() => vec![1.0; ne],
                None => {
                    return Err(Error::invalid(
                        "weighted combination needs a kernel bandwidth; use the closest combination",
                    ))
                }
            };
            let total: f64 = raw.iter().sum();
            if !(total > 0.0) {
                return Err(Error::numerical(format!("all slice weights vanish at t = {t}")));
            }
            Ok(raw.into_iter().map(|w| w / total).collect())
        }
    }
}

fn r2_rmse(y: &[f64], yhat: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let sw: f64 = w.iter().sum();
    if !(sw > 0.0) {
        return None;
    }
    let mean = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let ss_tot: f64 = y.iter().zip(w).map(|(y, w)| w * (y - mean).powi(2)).sum();
    let ss_res: f64 = y.iter().zip(yhat).zip(w).map(|((y, f), w)| w * (y - f).powi(2)).sum();
    Some((1.0 - ss_res / ss_tot, (ss_res / sw).sqrt()))
}

pub fn compute_prediction_errors(
    model: &TimeVaryingVarModel,
    data: &TimeSeriesDataset,
    how: Combination,
) -> Result<PredictionErrorReport> {
    let p = model.p();
    if data.p() != p {
        return Err(Error::invalid(format!("model has {p} variables, data has {}", data.p())));
    }
    let design = build_lagged_design(data, &model.lags)?;
    let m = design.included_rows();
    let orig = model.to_original_scale();

    let mut preds = vec![vec![0.0; m]; p];
    for r in 0..m {
        let x: Vec<f64> = design.predictors.row(r).iter().copied().collect();
        let w = slice_weights(model, design.response_times[r], how)?;
        for (i, pred) in preds.iter_mut().enumerate() {
            pred[r] = w.iter().enumerate().filter(|(_, &we)| we > 0.0).map(|(e, we)| we * orig.predict(i, e, &x)).sum();
        }
    }

    // Standardize observed and predicted responses by the observed moments.
    let mut ys = vec![vec![0.0; m]; p];
    for i in 0..p {
        let col = design.responses.column(i);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0)).sqrt();
        if !(sd > 0.0) {
            return Err(Error::data(format!("variable '{}' is constant; R2 is undefined", model.labels[i])));
        }
        for r in 0..m {
            ys[i][r] = (col[r] - mean) / sd;
            preds[i][r] = (preds[i][r] - mean) / sd;
        }
    }

    let ones = vec![1.0; m];
    let (mut rmse, mut r2) = (Vec::with_capacity(p), Vec::with_capacity(p));
    for i in 0..p {
        let (a, b) = r2_rmse(&ys[i], &preds[i], &ones).expect("nonempty design");
        r2.push(a);
        rmse.push(b);
    }

    let per_point = model
        .est_points
        .iter()
        .map(|&te| {
            let w: Vec<f64> = match model.bandwidth {
                Some(b) => design.response_times.iter().map(|&t| gaussian_weight(t, te, b)).collect(),
                None => ones.clone(),
            };
            let mut pe = PointErrors { est_point: te, rmse: vec![], r2: vec![] };
            for i in 0..p {
                let (a, b) = r2_rmse(&ys[i], &preds[i], &w).unwrap_or((f64::NAN, f64::NAN));
                pe.r2.push(a);
                pe.rmse.push(b);
            }
            pe
        })
        .collect();

    Ok(PredictionErrorReport { combination: how, labels: model.labels.clone(), rmse, r2, included_rows: m, per_point })
}
