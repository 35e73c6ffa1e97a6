//! Scoring estimated models against simulated ground truth.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::quantile_type7;
use crate::model::{Method, TimeVaryingVarModel};
use crate::simulation::{CoefficientArray, KindCategory};

/// Quantile presets.
pub const QUARTILES: [f64; 2] = [0.25, 0.75];
pub const DECILES: [f64; 2] = [0.10, 0.90];

/// `|estimate - truth|` as `[i][j][e]` for the lag-1 coefficients, on the
/// data-generating scale; truth is interpolated to the estimation points.
pub fn absolute_error(model: &TimeVaryingVarModel, truth: &CoefficientArray) -> Result<Vec<Vec<Vec<f64>>>> {
    if model.p() != truth.p {
        return Err(Error::invalid(format!("model has {} variables, truth has {}", model.p(), truth.p)));
    }
    let l = model
        .lags
        .iter()
        .position(|&l| l == 1)
        .ok_or_else(|| Error::invalid("model has no lag-1 coefficients"))?;
    let m = model.to_original_scale();
    Ok((0..m.p())
        .map(|i| {
            (0..m.p())
                .map(|j| {
                    m.est_points
                        .iter()
                        .enumerate()
                        .map(|(e, &t)| (m.coeffs[i][j][l][e] - truth.value_at(i, j, t)).abs())
                        .collect()
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureRecovery {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    /// `None` when the truth has no nonzero parameter.
    pub sensitivity: Option<f64>,
    /// `None` when nothing is estimated nonzero.
    pub precision: Option<f64>,
}

/// An estimate counts as nonzero if `|value| > zero_tol` at any estimation point.
pub fn structure_recovery(model: &TimeVaryingVarModel, truth: &CoefficientArray, zero_tol: f64) -> Result<StructureRecovery> {
    if model.p() != truth.p {
        return Err(Error::invalid(format!("model has {} variables, truth has {}", model.p(), truth.p)));
    }
    let l = model.lags.iter().position(|&l| l == 1).ok_or_else(|| Error::invalid("model has no lag-1 coefficients"))?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for i in 0..truth.p {
        for j in 0..truth.p {
            let est = model.coeffs[i][j][l].iter().any(|v| v.abs() > zero_tol);
            let real = !truth.specs[i][j].kind.is_zero();
            match (real, est) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    Ok(StructureRecovery {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        sensitivity: (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64),
        precision: (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64),
    })
}

/// Errors and recovery of one fitted model against its truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub method: Method,
    pub n: usize,
    /// `errors[i][j][e]`.
    pub errors: Vec<Vec<Vec<f64>>>,
    pub kinds: Vec<Vec<KindCategory>>,
    pub recovery: StructureRecovery,
}

pub fn evaluate_run(model: &TimeVaryingVarModel, truth: &CoefficientArray, zero_tol: f64) -> Result<Run> {
    Ok(Run {
        method: model.method,
        n: truth.n,
        errors: absolute_error(model, truth)?,
        kinds: truth.specs.iter().map(|r| r.iter().map(|s| s.kind.category()).collect()).collect(),
        recovery: structure_recovery(model, truth, zero_tol)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: KindCategory,
    pub mean: f64,
    /// Per-estimation-point quantiles over iterations and parameters, averaged over time.
    pub quantiles: Vec<f64>,
    pub parameters: usize,
}

/// Mean and time-averaged quantiles of absolute error per merged kind.
/// Kinds absent from every run are omitted.
pub fn aggregate_errors(runs: &[&Run], probs: &[f64]) -> Result<Vec<KindSummary>> {
    let first = runs.first().ok_or_else(|| Error::invalid("no runs to aggregate"))?;
    let ne = first.errors.first().and_then(|r| r.first()).map_or(0, |v| v.len());
    if ne == 0 || runs.iter().any(|r| r.errors.iter().flatten().any(|v| v.len() != ne)) {
        return Err(Error::invalid("runs disagree on the number of estimation points"));
    }
    if probs.iter().any(|q| !(0.0..=1.0).contains(q)) {
        return Err(Error::invalid("quantile probabilities must lie in [0, 1]"));
    }
    let mut out = Vec::new();
    for kind in KindCategory::ALL {
        let series: Vec<&Vec<f64>> = runs
            .iter()
            .flat_map(|r| {
                r.errors
                    .iter()
                    .zip(&r.kinds)
                    .flat_map(|(er, kr)| er.iter().zip(kr).filter(|(_, k)| **k == kind).map(|(e, _)| e))
            })
            .collect();
        if series.is_empty() {
            continue;
        }
        let total: f64 = series.iter().map(|s| s.iter().sum::<f64>()).sum();
        let mean = total / (series.len() * ne) as f64;
        let mut quantiles = vec![0.0; probs.len()];
        for e in 0..ne {
            let mut col: Vec<f64> = series.iter().map(|s| s[e]).collect();
            col.sort_by(f64::total_cmp);
            for (q, &prob) in probs.iter().enumerate() {
                quantiles[q] += quantile_type7(&col, prob) / ne as f64;
            }
        }
        out.push(KindSummary { kind, mean, quantiles, parameters: series.len() });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub sensitivity: Option<f64>,
    /// Mean over iterations where precision is defined.
    pub precision: Option<f64>,
    pub precision_undefined: usize,
    /// The estimator is dense, so precision only reflects true density.
    pub dense: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub method: Method,
    pub n: usize,
    pub iterations: usize,
    pub kinds: Vec<KindSummary>,
    pub recovery: RecoverySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub probs: Vec<f64>,
    pub cells: Vec<Cell>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl EvaluationReport {
    /// Group runs by (method, n) and summarize each cell.
    pub fn from_runs(runs: &[Run], probs: &[f64]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::invalid("no runs to evaluate"));
        }
        let mut groups: BTreeMap<(Method, usize), Vec<&Run>> = BTreeMap::new();
        for r in runs {
            groups.entry((r.method, r.n)).or_default().push(r);
        }
        let cells = groups
            .into_iter()
            .map(|((method, n), rs)| {
                Ok(Cell {
                    method,
                    n,
                    iterations: rs.len(),
                    kinds: aggregate_errors(&rs, probs)?,
                    recovery: RecoverySummary {
                        sensitivity: mean_of(rs.iter().filter_map(|r| r.recovery.sensitivity)),
                        precision: mean_of(rs.iter().filter_map(|r| r.recovery.precision)),
                        precision_undefined: rs.iter().filter(|r| r.recovery.precision.is_none()).count(),
                        dense: method.is_dense(),
                    },
                })
            })
            .collect::<Result<_>>()?;
        Ok(EvaluationReport { probs: probs.to_vec(), cells })
    }

    pub fn cell(&self, method: Method, n: usize) -> Option<&Cell> {
        self.cells.iter().find(|c| c.method == method && c.n == n)
    }

    /// Long format: method, n, kind, stat, prob, value.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["method", "n", "kind", "stat", "prob", "value"])?;
        for c in &self.cells {
            let (method, n) = (c.method.tag(), c.n.to_string());
            let mut row = |kind: &str, stat: &str, prob: String, value: String| {
                csv.write_record([method, n.as_str(), kind, stat, prob.as_str(), value.as_str()])
            };
            row("all", "iterations", String::new(), c.iterations.to_string())?;
            for k in &c.kinds {
                row(k.kind.name(), "mean", String::new(), k.mean.to_string())?;
                for (q, prob) in self.probs.iter().enumerate() {
                    row(k.kind.name(), "quantile", prob.to_string(), k.quantiles[q].to_string())?;
                }
            }
            let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
            row("all", "sensitivity", String::new(), opt(c.recovery.sensitivity))?;
            row("all", "precision", String::new(), opt(c.recovery.precision))?;
            row("all", "precision_undefined", String::new(), c.recovery.precision_undefined.to_string())?;
            row("all", "dense", String::new(), u8::from(c.recovery.dense).to_string())?;
        }
        csv.flush()?;
        Ok(())
    }
}
