//! Stationary (GLM, GLM(L1)) and kernel-smoothed (KS, KS(L1)) VAR estimators
//! plus time-stratified bandwidth selection.
//!
//! Every equation is fitted separately. A kernel fit at estimation point
//! `t_e` weights each design row by the Gaussian kernel of its response time;
//! one bandwidth is shared by all equations. Regularized fits re-select the
//! penalty by cross-validation for every equation and estimation point, using
//! a fold partition seeded per equation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LaggedDesign;
use crate::error::{Error, Result};
use crate::kernel::kernel_weights;
use crate::model::{Method, TimeVaryingVarModel, VarCoefficients};
use crate::penalized_regression::{
    cross_validate_lambda_with, weighted_least_squares, LassoOptions, RegressionProblem, DEFAULT_FOLDS,
    DEFAULT_N_LAMBDA,
};
use crate::seed;

/// Candidate bandwidths used in the reference simulation study.
pub const PAPER_BANDWIDTH_GRID: [f64; 12] =
    [0.01, 0.045, 0.08, 0.115, 0.185, 0.22, 0.225, 0.29, 0.325, 0.430, 0.465, 0.5];

/// Minimum rows for a regularized stationary fit (one per CV fold).
const MIN_ROWS_REGULARIZED: usize = 10;

#[derive(Debug, Clone, Copy)]
pub struct KsOptions {
    pub folds: usize,
    pub n_lambda: usize,
    pub lasso: LassoOptions,
}

impl Default for KsOptions {
    fn default() -> Self {
        Self { folds: DEFAULT_FOLDS, n_lambda: DEFAULT_N_LAMBDA, lasso: LassoOptions::default() }
    }
}

/// Ten equally spaced values in [0.01, 1].
pub fn default_bandwidth_grid() -> Vec<f64> {
    (0..10).map(|i| 0.01 + i as f64 * 0.11).collect()
}

/// Default number of held-out occasions: `ceil((0.2 n)^(2/3))`.
pub fn default_foldsize(n: usize) -> usize {
    (0.2 * n as f64).powf(2.0 / 3.0).ceil() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LocalFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub lambda: Option<f64>,
}

fn equation_seed(seed: u64, eq: usize) -> u64 {
    seed::derive(seed, &[eq as u64])
}

/// Fit equation `eq` with observation weights `w` over the rows of `design`.
pub(crate) fn fit_equation(
    x: &DMatrix<f64>,
    y: DVector<f64>,
    w: DVector<f64>,
    regularized: bool,
    cv_seed: u64,
    opts: &KsOptions,
) -> Result<LocalFit> {
    let problem = RegressionProblem::new(x.clone(), y, w)?;
    if !regularized {
        let s = weighted_least_squares(&problem)?;
        return Ok(LocalFit { intercept: s.intercept, slopes: s.slopes, lambda: None });
    }
    let problem = problem.positive_weight_rows();
    let folds = opts.folds.min(problem.m());
    if folds < 3 {
        return Err(Error::ident(format!("only {} positively weighted rows for cross-validation", problem.m())));
    }
    let cv = cross_validate_lambda_with(&problem, folds, cv_seed, opts.n_lambda, opts.lasso)?;
    Ok(LocalFit { intercept: cv.solution.intercept, slopes: cv.solution.slopes, lambda: Some(cv.lambda_hat) })
}

fn slopes_to_coeffs(fits: &[LocalFit], p: usize, n_lags: usize) -> Vec<Vec<Vec<f64>>> {
    (0..n_lags)
        .map(|l| (0..p).map(|i| (0..p).map(|j| fits[i].slopes[l * p + j]).collect()).collect())
        .collect()
}

pub fn fit_stationary_var(
    design: &LaggedDesign,
    regularized: bool,
    seed: u64,
    opts: &KsOptions,
) -> Result<VarCoefficients> {
    let (m, p, q) = (design.included_rows(), design.p(), design.n_predictors());
    if !regularized && m <= q + 1 {
        return Err(Error::ident(format!(
            "GLM needs more than {} rows (predictors + 1), design has {m}",
            q + 1
        )));
    }
    if regularized && m < MIN_ROWS_REGULARIZED.max(opts.folds) {
        return Err(Error::ident(format!(
            "GLM(L1) needs at least {} rows for cross-validation, design has {m}",
            MIN_ROWS_REGULARIZED.max(opts.folds)
        )));
    }
    let fits: Vec<LocalFit> = (0..p)
        .into_par_iter()
        .map(|i| {
            fit_equation(
                &design.predictors,
                design.responses.column(i).into_owned(),
                DVector::from_element(m, 1.0),
                regularized,
                equation_seed(seed, i),
                opts,
            )
            .map_err(|e| tag_equation(e, i))
        })
        .collect::<Result<_>>()?;
    Ok(VarCoefficients {
        lags: design.lags.clone(),
        intercepts: fits.iter().map(|f| f.intercept).collect(),
        coeffs: slopes_to_coeffs(&fits, p, design.lags.len()),
        lambdas: regularized.then(|| fits.iter().map(|f| f.lambda.unwrap_or(0.0)).collect()),
        scaling: design.scaling.clone(),
    })
}

fn tag_equation(e: Error, i: usize) -> Error {
    match e {
        Error::Identification(m) => Error::Identification(format!("equation {}: {m}", i + 1)),
        Error::Numerical(m) => Error::Numerical(format!("equation {}: {m}", i + 1)),
        other => other,
    }
}

pub fn fit_tv_var_ks(
    design: &LaggedDesign,
    est_points: &[f64],
    bandwidth: f64,
    regularized: bool,
    seed: u64,
    opts: &KsOptions,
) -> Result<TimeVaryingVarModel> {
    if est_points.is_empty() {
        return Err(Error::invalid("no estimation points"));
    }
    if est_points.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::invalid("estimation points must lie in [0, 1]"));
    }
    let (p, q) = (design.p(), design.n_predictors());
    let weights: Vec<_> = est_points
        .iter()
        .map(|&te| kernel_weights(te, &design.response_times, bandwidth))
        .collect::<Result<_>>()?;
    if !regularized {
        for (e, w) in weights.iter().enumerate() {
            if w.n_util <= (q + 1) as f64 {
                return Err(Error::ident(format!(
                    "estimation point {} (t = {:.3}): effective sample size {:.2} does not exceed {} (predictors + 1)",
                    e + 1,
                    est_points[e],
                    w.n_util,
                    q + 1
                )));
            }
        }
    }
    let ne = est_points.len();
    let tasks: Vec<(usize, usize)> = (0..ne).flat_map(|e| (0..p).map(move |i| (e, i))).collect();
    let fits: Vec<LocalFit> = tasks
        .par_iter()
        .map(|&(e, i)| {
            fit_equation(
                &design.predictors,
                design.responses.column(i).into_owned(),
                DVector::from_vec(weights[e].weights.clone()),
                regularized,
                equation_seed(seed, i),
                opts,
            )
            .map_err(|err| match tag_equation(err, i) {
                Error::Identification(m) => Error::Identification(format!("estimation point {}: {m}", e + 1)),
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let fit = |e: usize, i: usize| &fits[e * p + i];
    let n_lags = design.lags.len();
    Ok(TimeVaryingVarModel {
        method: if regularized { Method::KsL1 } else { Method::Ks },
        labels: design.labels.clone(),
        lags: design.lags.clone(),
        est_points: est_points.to_vec(),
        bandwidth: Some(bandwidth),
        intercepts: (0..p).map(|i| (0..ne).map(|e| fit(e, i).intercept).collect()).collect(),
        coeffs: (0..p)
            .map(|i| {
                (0..p)
                    .map(|j| (0..n_lags).map(|l| (0..ne).map(|e| fit(e, i).slopes[l * p + j]).collect()).collect())
                    .collect()
            })
            .collect(),
        lambdas: regularized.then(|| (0..p).map(|i| (0..ne).map(|e| fit(e, i).lambda.unwrap_or(0.0)).collect()).collect()),
        scaling: design.scaling.clone(),
        spline: None,
        spec: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub bandwidth: f64,
    pub candidates: Vec<f64>,
    /// Mean absolute prediction error per candidate; `None` if no fit was possible.
    pub mean_errors: Vec<Option<f64>>,
    pub folds: usize,
    pub foldsize: usize,
    /// Held-out design rows per fold.
    pub test_rows: Vec<Vec<usize>>,
}

impl BandwidthSelection {
    /// True when the minimum sits at the smallest or largest candidate.
    pub fn at_endpoint(&self) -> bool {
        let lo = self.candidates.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.candidates.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.bandwidth == lo || self.bandwidth == hi
    }
}

/// One stratified test set: `foldsize` rows, one drawn uniformly from each of
/// `foldsize` equal-width strata over the included rows.
fn stratified_test_rows(m: usize, foldsize: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..foldsize)
        .map(|s| {
            let lo = s * m / foldsize;
            let hi = ((s + 1) * m / foldsize).max(lo + 1);
            rng.random_range(lo..hi)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct BandwidthOptions {
    pub folds: usize,
    /// Held-out occasions per fold; defaults to `ceil((0.2 n)^(2/3))`.
    pub foldsize: Option<usize>,
    pub regularized: bool,
    pub seed: u64,
    pub ks: KsOptions,
}

impl Default for BandwidthOptions {
    fn default() -> Self {
        Self { folds: 1, foldsize: None, regularized: true, seed: 0, ks: KsOptions::default() }
    }
}

pub fn select_bandwidth(design: &LaggedDesign, candidates: &[f64], opts: &BandwidthOptions) -> Result<BandwidthSelection> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate bandwidths"));
    }
    if let Some(b) = candidates.iter().find(|&&b| !(b > 0.0) || !b.is_finite()) {
        return Err(Error::invalid(format!("candidate bandwidth {b} is not positive")));
    }
    if opts.folds == 0 {
        return Err(Error::invalid("need at least one fold"));
    }
    let m = design.included_rows();
    let foldsize = opts.foldsize.unwrap_or_else(|| default_foldsize(design.n_occasions()));
    if foldsize < 2 {
        return Err(Error::invalid("foldsize must be at least 2"));
    }
    if foldsize >= m {
        return Err(Error::invalid(format!("foldsize {foldsize} leaves no training rows out of {m}")));
    }
    let p = design.p();
    let test_rows: Vec<Vec<usize>> = (0..opts.folds)
        .map(|f| stratified_test_rows(m, foldsize, &mut seed::child_rng(opts.seed, &[f as u64])))
        .collect();

    let errors: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|&b| {
            let mut total = 0.0;
            let mut count = 0usize;
            for (f, test) in test_rows.iter().enumerate() {
                let train: Vec<usize> = (0..m).filter(|r| !test.contains(r)).collect();
                let td = design.select_rows(&train);
                for &r in test {
                    let te = design.response_times[r];
                    let w = kernel_weights(te, &td.response_times, b).ok()?;
                    if !opts.regularized && w.n_util <= (td.n_predictors() + 1) as f64 {
                        return None;
                    }
                    let x_test: Vec<f64> = design.predictors.row(r).iter().copied().collect();
                    for i in 0..p {
                        let cv_seed = seed::derive(opts.seed, &[f as u64, r as u64, i as u64]);
                        let fit = fit_equation(
                            &td.predictors,
                            td.responses.column(i).into_owned(),
                            DVector::from_vec(w.weights.clone()),
                            opts.regularized,
                            cv_seed,
                            &opts.ks,
                        )
                        .ok()?;
                        let pred = fit.intercept + fit.slopes.iter().zip(&x_test).map(|(a, b)| a * b).sum::<f64>();
                        total += (design.responses[(r, i)] - pred).abs();
                        count += 1;
                    }
                }
            }
            Some(total / count as f64)
        })
        .collect();

    let best = errors
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.map(|v| (i, v)))
        .fold(None, |acc: Option<(usize, f64)>, (i, v)| match acc {
            Some((_, bv)) if bv <= v => acc,
            _ => Some((i, v)),
        })
        .ok_or_else(|| Error::ident("no candidate bandwidth yields an identified model"))?;
    Ok(BandwidthSelection {
        bandwidth: candidates[best.0],
        candidates: candidates.to_vec(),
        mean_errors: errors,
        folds: opts.folds,
        foldsize,
        test_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_lagged_design, standardize};
    use crate::simulation::{default_sigma, generate_truth, simulate_tv_var, StructureDesign};

    fn sim_design(p: usize, n: usize, seed: u64) -> LaggedDesign {
        let truth = generate_truth(&StructureDesign::RandomGraph { p, n_edges: p }, n, 0.35, default_sigma(), seed).unwrap();
        let data = simulate_tv_var(&truth, seed + 1).unwrap();
        standardize(&build_lagged_design(&data, &[1]).unwrap()).unwrap()
    }

    #[test]
    fn foldsize_rule() {
        assert_eq!(default_foldsize(103), 8);
        assert_eq!(default_foldsize(530), 23);
    }

    #[test]
    fn default_grid() {
        let g = default_bandwidth_grid();
        assert_eq!(g.len(), 10);
        assert!((g[0] - 0.01).abs() < 1e-12 && (g[9] - 1.0).abs() < 1e-12);
        assert!((g[3] - 0.34).abs() < 1e-12);
    }

    #[test]
    fn stationary_identification() {
        let d = sim_design(3, 60, 2);
        let small = d.select_rows(&[0, 1, 2, 3]);
        assert!(matches!(
            fit_stationary_var(&small, false, 0, &KsOptions::default()),
            Err(Error::Identification(_))
        ));
        assert!(matches!(
            fit_stationary_var(&d.select_rows(&(0..8).collect::<Vec<_>>()), true, 0, &KsOptions::default()),
            Err(Error::Identification(_))
        ));
    }

    #[test]
    fn single_point_equals_direct_solver() {
        let d = sim_design(3, 80, 5);
        let model = fit_tv_var_ks(&d, &[0.5], 0.2, false, 0, &KsOptions::default()).unwrap();
        let w = kernel_weights(0.5, &d.response_times, 0.2).unwrap();
        for i in 0..3 {
            let prob = RegressionProblem::new(
                d.predictors.clone(),
                d.responses.column(i).into_owned(),
                DVector::from_vec(w.weights.clone()),
            )
            .unwrap();
            let s = weighted_least_squares(&prob).unwrap();
            assert_eq!(model.intercepts[i][0], s.intercept);
            for j in 0..3 {
                assert_eq!(model.coeffs[i][j][0][0], s.slopes[j]);
            }
        }
    }

    #[test]
    fn wide_kernel_approaches_stationary_fit() {
        let d = sim_design(3, 200, 11);
        let opts = KsOptions::default();
        let stat = fit_stationary_var(&d, false, 0, &opts).unwrap();
        let deviation = |b: f64| {
            let tv = fit_tv_var_ks(&d, &[0.0, 0.5, 1.0], b, false, 0, &opts).unwrap();
            let mut worst: f64 = 0.0;
            for i in 0..3 {
                for e in 0..3 {
                    worst = worst.max((tv.intercepts[i][e] - stat.intercepts[i]).abs());
                    for j in 0..3 {
                        worst = worst.max((tv.coeffs[i][j][0][e] - stat.coeffs[0][i][j]).abs());
                    }
                }
            }
            worst
        };
        // Weights deviate from one by at most 1 - exp(-1 / (2 b^2)).
        let (d10, d100) = (deviation(10.0), deviation(100.0));
        assert!(d10 < 5e-3, "{d10}");
        assert!(d100 < 1e-4, "{d100}");
        assert!(d100 < d10 / 10.0);
    }

    #[test]
    fn permuting_est_points_permutes_slices() {
        let d = sim_design(2, 80, 7);
        let pts = [0.1, 0.6, 0.9];
        let perm = [0.9, 0.1, 0.6];
        for reg in [false, true] {
            let a = fit_tv_var_ks(&d, &pts, 0.3, reg, 4, &KsOptions::default()).unwrap();
            let b = fit_tv_var_ks(&d, &perm, 0.3, reg, 4, &KsOptions::default()).unwrap();
            let map = [2usize, 0, 1];
            for i in 0..2 {
                for (eb, &ea) in map.iter().enumerate() {
                    assert_eq!(a.intercepts[i][ea], b.intercepts[i][eb]);
                    for j in 0..2 {
                        assert_eq!(a.coeffs[i][j][0][ea], b.coeffs[i][j][0][eb]);
                    }
                }
            }
        }
    }

    #[test]
    fn unidentified_point_is_reported() {
        let d = sim_design(3, 40, 1);
        match fit_tv_var_ks(&d, &[0.0, 0.5], 0.005, false, 0, &KsOptions::default()) {
            Err(Error::Identification(msg)) => assert!(msg.contains("estimation point 1")),
            other => panic!("expected identification error, got {other:?}"),
        }
    }

    #[test]
    fn ks_is_deterministic() {
        let d = sim_design(3, 100, 3);
        let pts = crate::kernel::equispaced_points(5);
        let a = fit_tv_var_ks(&d, &pts, 0.25, true, 11, &KsOptions::default()).unwrap();
        let b = fit_tv_var_ks(&d, &pts, 0.25, true, 11, &KsOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.lambdas.is_some());
    }

    #[test]
    fn bandwidth_argument_checks() {
        let d = sim_design(2, 60, 3);
        let opts = BandwidthOptions::default();
        assert!(select_bandwidth(&d, &[], &opts).is_err());
        assert!(select_bandwidth(&d, &[0.1, -0.2], &opts).is_err());
        let big = BandwidthOptions { foldsize: Some(100), ..opts };
        assert!(select_bandwidth(&d, &[0.1], &big).is_err());
    }

    #[test]
    fn bandwidth_selection_is_deterministic() {
        let d = sim_design(3, 120, 9);
        let opts = BandwidthOptions { seed: 5, ..BandwidthOptions::default() };
        let a = select_bandwidth(&d, &[0.1, 0.3, 1.0], &opts).unwrap();
        let b = select_bandwidth(&d, &[0.1, 0.3, 1.0], &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.foldsize, default_foldsize(120));
        assert_eq!(a.test_rows[0].len(), a.foldsize);
    }
}
