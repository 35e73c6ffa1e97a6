//! Fitted VAR models and the estimation configuration that produced them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{build_lagged_design, standardize, LaggedDesign, Scaling, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::kernel::equispaced_points;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Glm,
    GlmL1,
    Ks,
    KsL1,
    Gam,
    GamSt,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Glm, Method::GlmL1, Method::Ks, Method::KsL1, Method::Gam, Method::GamSt];

    pub fn is_stationary(self) -> bool {
        matches!(self, Method::Glm | Method::GlmL1)
    }

    pub fn is_kernel(self) -> bool {
        matches!(self, Method::Ks | Method::KsL1)
    }

    pub fn is_spline(self) -> bool {
        matches!(self, Method::Gam | Method::GamSt)
    }

    pub fn is_regularized(self) -> bool {
        matches!(self, Method::GlmL1 | Method::KsL1)
    }

    /// Methods that return nonzero estimates with probability one.
    pub fn is_dense(self) -> bool {
        matches!(self, Method::Glm | Method::Ks | Method::Gam)
    }

    /// Tag used on the command line and in files.
    pub fn tag(self) -> &'static str {
        match self {
            Method::Glm => "glm",
            Method::GlmL1 => "glm-l1",
            Method::Ks => "ks",
            Method::KsL1 => "ks-l1",
            Method::Gam => "gam",
            Method::GamSt => "gam-st",
        }
    }

    /// Human-readable label, e.g. `KS(L1)`.
    pub fn label(self) -> &'static str {
        match self {
            Method::Glm => "GLM",
            Method::GlmL1 => "GLM(L1)",
            Method::Ks => "KS",
            Method::KsL1 => "KS(L1)",
            Method::Gam => "GAM",
            Method::GamSt => "GAM(st)",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['(', '_'], "-").replace(')', "");
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == norm)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}' (expected one of glm, glm-l1, ks, ks-l1, gam, gam-st)")))
    }
}

/// A stationary VAR fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarCoefficients {
    pub lags: Vec<usize>,
    pub intercepts: Vec<f64>,
    /// `coeffs[l][i][j]`: effect of variable `j` at lag `lags[l]` on variable `i`.
    pub coeffs: Vec<Vec<Vec<f64>>>,
    /// Selected penalty per equation (regularized fits only).
    pub lambdas: Option<Vec<f64>>,
    pub scaling: Option<Scaling>,
}

/// Per-smooth diagnostics of a spline fit, stored per equation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineDiagnostics {
    pub k: usize,
    /// `edf[i][s]`: effective degrees of freedom of smooth `s` (0 = intercept) in equation `i`.
    pub edf: Vec<Vec<f64>>,
    pub gcv: Vec<f64>,
    pub smoothing: Vec<Vec<f64>>,
    pub sigma2: Vec<f64>,
    pub converged: Vec<bool>,
    /// `bands[i][s]` at the estimation points.
    pub bands: Vec<Vec<Band>>,
    pub warnings: Vec<String>,
}

/// Pointwise credible band of one smooth at the estimation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: Vec<f64>,
    pub point: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Intercepts and lagged coefficients at a sequence of estimation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeVaryingVarModel {
    pub method: Method,
    pub labels: Vec<String>,
    pub lags: Vec<usize>,
    pub est_points: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    /// `intercepts[i][e]`.
    pub intercepts: Vec<Vec<f64>>,
    /// `coeffs[i][j][l][e]`: effect of variable `j` at lag `lags[l]` on `i` at estimation point `e`.
    pub coeffs: Vec<Vec<Vec<Vec<f64>>>>,
    /// `lambdas[i][e]` for regularized methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<Vec<f64>>>,
    /// Scaling of the design the model was fitted on; coefficients are on that scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<Scaling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spline: Option<SplineDiagnostics>,
    /// Configuration that reproduces this fit from raw data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<EstimationSpec>,
}

impl TimeVaryingVarModel {
    pub fn p(&self) -> usize {
        self.labels.len()
    }

    pub fn n_est(&self) -> usize {
        self.est_points.len()
    }

    pub fn coeff(&self, i: usize, j: usize, lag_idx: usize, e: usize) -> f64 {
        self.coeffs[i][j][lag_idx][e]
    }

    /// Replicate a stationary fit across `est_points`.
    pub fn from_stationary(method: Method, labels: Vec<String>, fit: &VarCoefficients, est_points: &[f64]) -> Self {
        let p = fit.intercepts.len();
        let ne = est_points.len();
        let coeffs = (0..p)
            .map(|i| (0..p).map(|j| (0..fit.lags.len()).map(|l| vec![fit.coeffs[l][i][j]; ne]).collect()).collect())
            .collect();
        TimeVaryingVarModel {
            method,
            labels,
            lags: fit.lags.clone(),
            est_points: est_points.to_vec(),
            bandwidth: None,
            intercepts: fit.intercepts.iter().map(|&b| vec![b; ne]).collect(),
            coeffs,
            lambdas: fit.lambdas.as_ref().map(|ls| ls.iter().map(|&l| vec![l; ne]).collect()),
            scaling: fit.scaling.clone(),
            spline: None,
            spec: None,
        }
    }

    /// One-step prediction of variable `i` from slice `e` given lag-major
    /// predictors (on the model's scale).
    pub fn predict(&self, i: usize, e: usize, predictors: &[f64]) -> f64 {
        let p = self.p();
        let mut y = self.intercepts[i][e];
        for (l, _) in self.lags.iter().enumerate() {
            for j in 0..p {
                y += self.coeffs[i][j][l][e] * predictors[l * p + j];
            }
        }
        y
    }

    /// Express the model on the original (unstandardized) data scale.
    pub fn to_original_scale(&self) -> TimeVaryingVarModel {
        let Some(sc) = &self.scaling else {
            return self.clone();
        };
        let p = self.p();
        let mut out = self.clone();
        for i in 0..p {
            let ry = sc.responses[i];
            for e in 0..self.n_est() {
                let mut shift = 0.0;
                for l in 0..self.lags.len() {
                    for j in 0..p {
                        let rx = sc.predictors[l * p + j];
                        let b = self.coeffs[i][j][l][e] * ry.sd / rx.sd;
                        out.coeffs[i][j][l][e] = b;
                        shift += b * rx.mean;
                    }
                }
                out.intercepts[i][e] = ry.mean + ry.sd * self.intercepts[i][e] - shift;
            }
        }
        out.scaling = None;
        out
    }

    /// Whether every slice is identical (stationary fits).
    pub fn is_constant_over_time(&self) -> bool {
        let same = |v: &Vec<f64>| v.windows(2).all(|w| w[0] == w[1]);
        self.intercepts.iter().all(same) && self.coeffs.iter().flatten().flatten().all(same)
    }
}

fn default_lags() -> Vec<usize> {
    vec![1]
}

fn default_true() -> bool {
    true
}

fn default_folds() -> usize {
    crate::penalized_regression::DEFAULT_FOLDS
}

fn default_k_max() -> usize {
    crate::spline_estimator::DEFAULT_K_MAX
}

/// Everything needed to refit a model on new data (used by the bootstrap).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationSpec {
    pub method: Method,
    #[serde(default = "default_lags")]
    pub lags: Vec<usize>,
    pub est_points: Vec<f64>,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    /// Basis dimension for spline methods; `None` selects it from the data.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_true")]
    pub standardize: bool,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
}

impl EstimationSpec {
    pub fn new(method: Method, n_est: usize) -> Self {
        EstimationSpec {
            method,
            lags: default_lags(),
            est_points: equispaced_points(n_est),
            bandwidth: None,
            k: None,
            k_max: default_k_max(),
            standardize: true,
            folds: default_folds(),
            seed: 0,
        }
    }

    pub fn with_bandwidth(mut self, b: f64) -> Self {
        self.bandwidth = Some(b);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Build the (optionally standardized) design this spec fits on.
    pub fn design(&self, data: &TimeSeriesDataset) -> Result<LaggedDesign> {
        let d = build_lagged_design(data, &self.lags)?;
        if self.standardize {
            standardize(&d)
        } else {
            Ok(d)
        }
    }

    pub fn fit_design(&self, design: &LaggedDesign) -> Result<TimeVaryingVarModel> {
        use crate::ks_estimator::{fit_stationary_var, fit_tv_var_ks, KsOptions};
        use crate::spline_estimator::{fit_tv_var_gam, GamOptions};
        let opts = KsOptions { folds: self.folds, ..KsOptions::default() };
        let mut model = match self.method {
            Method::Glm | Method::GlmL1 => {
                let fit = fit_stationary_var(design, self.method.is_regularized(), self.seed, &opts)?;
                TimeVaryingVarModel::from_stationary(self.method, design.labels.clone(), &fit, &self.est_points)
            }
            Method::Ks | Method::KsL1 => {
                let b = self
                    .bandwidth
                    .ok_or_else(|| Error::invalid("kernel methods need a bandwidth"))?;
                fit_tv_var_ks(design, &self.est_points, b, self.method.is_regularized(), self.seed, &opts)?
            }
            Method::Gam | Method::GamSt => {
                let gopts = GamOptions { k: self.k, k_max: self.k_max, ..GamOptions::default() };
                fit_tv_var_gam(design, &self.est_points, self.method == Method::GamSt, &gopts)?
            }
        };
        model.spec = Some(self.clone());
        Ok(model)
    }

    pub fn fit(&self, data: &TimeSeriesDataset) -> Result<TimeVaryingVarModel> {
        if self.est_points.is_empty() || self.est_points.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::invalid("estimation points must be nonempty and lie in [0, 1]"));
        }
        self.fit_design(&self.design(data)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ColumnScale;

    #[test]
    fn method_parsing() {
        assert_eq!("ks-l1".parse::<Method>().unwrap(), Method::KsL1);
        assert_eq!("KS(L1)".parse::<Method>().unwrap(), Method::KsL1);
        assert_eq!("gam_st".parse::<Method>().unwrap(), Method::GamSt);
        assert!("lasso".parse::<Method>().is_err());
    }

    #[test]
    fn original_scale_conversion() {
        let fit = VarCoefficients {
            lags: vec![1],
            intercepts: vec![0.1, -0.2],
            coeffs: vec![vec![vec![0.5, 0.0], vec![0.25, -0.4]]],
            lambdas: None,
            scaling: Some(Scaling {
                predictors: vec![ColumnScale { mean: 1.0, sd: 2.0 }, ColumnScale { mean: -3.0, sd: 0.5 }],
                responses: vec![ColumnScale { mean: 1.5, sd: 4.0 }, ColumnScale { mean: 0.0, sd: 1.0 }],
            }),
        };
        let m = TimeVaryingVarModel::from_stationary(Method::Glm, vec!["a".into(), "b".into()], &fit, &[0.0, 1.0]);
        let o = m.to_original_scale();
        // Predictions must agree once inputs/outputs are mapped between scales.
        let raw = [2.0, -1.0];
        let std: Vec<f64> = raw
            .iter()
            .zip(&fit.scaling.as_ref().unwrap().predictors)
            .map(|(x, s)| (x - s.mean) / s.sd)
            .collect();
        for i in 0..2 {
            let ry = fit.scaling.as_ref().unwrap().responses[i];
            let via_std = m.predict(i, 0, &std) * ry.sd + ry.mean;
            let direct = o.predict(i, 1, &raw);
            assert!((via_std - direct).abs() < 1e-12);
        }
        assert!(o.scaling.is_none());
        assert!(m.is_constant_over_time());
    }
}
