//! Weighted least squares and weighted lasso with an unpenalized intercept.
//!
//! Both solvers minimize
//!
//! ```text
//! (1/m) * sum_j w_j (y_j - b0 - x_j' b)^2 + lambda * ||b||_1
//! ```
//!
//! with `m` the number of rows. The lasso runs coordinate descent on the
//! weighted covariance of the centered predictors, so each sweep costs
//! `O(q^2)` regardless of `m`.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_MAX_SWEEPS: usize = 10_000;
pub const DEFAULT_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_N_LAMBDA: usize = 50;
pub const DEFAULT_FOLDS: usize = 10;
const MAX_CONDITION: f64 = 1e12;
const PATH_RATIO: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub w: DVector<f64>,
}

impl RegressionProblem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, w: DVector<f64>) -> Result<Self> {
        let m = x.nrows();
        if m == 0 {
            return Err(Error::invalid("regression problem has no rows"));
        }
        if y.len() != m || w.len() != m {
            return Err(Error::invalid(format!(
                "dimension mismatch: X has {m} rows, y {}, w {}",
                y.len(),
                w.len()
            )));
        }
        if w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        if w.iter().all(|&v| v == 0.0) {
            return Err(Error::invalid("all observation weights are zero"));
        }
        Ok(Self { x, y, w })
    }

    pub fn uniform(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let m = x.nrows();
        Self::new(x, y, DVector::from_element(m, 1.0))
    }

    pub fn m(&self) -> usize {
        self.x.nrows()
    }

    pub fn q(&self) -> usize {
        self.x.ncols()
    }

    /// Rows with positive weight only. The minimizer set is unchanged up to
    /// the `1/m` rescaling of lambda.
    pub fn positive_weight_rows(&self) -> RegressionProblem {
        let keep: Vec<usize> = (0..self.m()).filter(|&i| self.w[i] > 0.0).collect();
        self.select(&keep)
    }

    fn select(&self, rows: &[usize]) -> RegressionProblem {
        RegressionProblem {
            x: self.x.select_rows(rows),
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.y[r])),
            w: DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.w[r])),
        }
    }

    pub fn predict(&self, intercept: f64, slopes: &[f64], row: usize) -> f64 {
        intercept + self.x.row(row).iter().zip(slopes).map(|(a, b)| a * b).sum::<f64>()
    }

    /// The penalized objective at `(intercept, slopes)`.
    pub fn objective(&self, intercept: f64, slopes: &[f64], lambda: f64) -> f64 {
        let loss: f64 = (0..self.m())
            .map(|j| self.w[j] * (self.y[j] - self.predict(intercept, slopes, j)).powi(2))
            .sum();
        loss / self.m() as f64 + lambda * slopes.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// Gradient of the smooth part of the objective with respect to the slopes.
    pub fn loss_gradient(&self, intercept: f64, slopes: &[f64]) -> Vec<f64> {
        let scale = -2.0 / self.m() as f64;
        let resid: Vec<f64> = (0..self.m())
            .map(|j| self.w[j] * (self.y[j] - self.predict(intercept, slopes, j)))
            .collect();
        (0..self.q())
            .map(|k| scale * (0..self.m()).map(|j| resid[j] * self.x[(j, k)]).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSolution {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub lambda: f64,
    pub objective: f64,
}

/// Largest violation of the lasso optimality conditions at `sol`.
pub fn kkt_violation(p: &RegressionProblem, sol: &RegressionSolution) -> f64 {
    let g = p.loss_gradient(sol.intercept, &sol.slopes);
    g.iter()
        .zip(&sol.slopes)
        .map(|(&gk, &bk)| {
            if bk != 0.0 {
                (gk + sol.lambda * bk.signum()).abs()
            } else {
                (gk.abs() - sol.lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

pub fn weighted_least_squares(p: &RegressionProblem) -> Result<RegressionSolution> {
    let (m, q) = (p.m(), p.q());
    let rows: Vec<usize> = (0..m).filter(|&i| p.w[i] > 0.0).collect();
    if rows.len() < q + 1 {
        return Err(Error::ident(format!(
            "{} positively weighted rows cannot identify {} coefficients",
            rows.len(),
            q + 1
        )));
    }
    let a = DMatrix::from_fn(rows.len(), q + 1, |r, c| {
        let s = p.w[rows[r]].sqrt();
        if c == 0 {
            s
        } else {
            s * p.x[(rows[r], c - 1)]
        }
    });
    let b = DVector::from_iterator(rows.len(), rows.iter().map(|&r| p.w[r].sqrt() * p.y[r]));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 0.0) || smax / smin > MAX_CONDITION {
        return Err(Error::numerical(format!(
            "weighted design is singular or ill-conditioned (condition {:.3e})",
            smax / smin
        )));
    }
    let beta = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::numerical(format!("least-squares solve failed: {e}")))?;
    let intercept = beta[0];
    let slopes: Vec<f64> = beta.iter().skip(1).copied().collect();
    let objective = p.objective(intercept, &slopes, 0.0);
    Ok(RegressionSolution { intercept, slopes, lambda: 0.0, objective })
}

/// Weighted sufficient statistics of the centered problem.
#[derive(Debug, Clone)]
struct Gram {
    g: DMatrix<f64>,
    c: DVector<f64>,
    yy: f64,
    xbar: DVector<f64>,
    ybar: f64,
    /// `2 / m`, the derivative scale of the `1/m` loss.
    a: f64,
}

impl Gram {
    fn new(p: &RegressionProblem) -> Result<Self> {
        let (m, q) = (p.m(), p.q());
        let sw: f64 = p.w.sum();
        if !(sw > 0.0) {
            return Err(Error::invalid("total observation weight is zero"));
        }
        let ybar = p.w.dot(&p.y) / sw;
        let xbar = DVector::from_fn(q, |k, _| p.w.dot(&p.x.column(k)) / sw);
        let xs = DMatrix::from_fn(m, q, |j, k| p.w[j].sqrt() * (p.x[(j, k)] - xbar[k]));
        let ys = DVector::from_fn(m, |j, _| p.w[j].sqrt() * (p.y[j] - ybar));
        Ok(Self {
            g: xs.transpose() * &xs,
            c: xs.transpose() * &ys,
            yy: ys.norm_squared(),
            xbar,
            ybar,
            a: 2.0 / m as f64,
        })
    }

    fn lambda_max(&self) -> f64 {
        self.a * self.c.amax()
    }

    fn objective(&self, beta: &DVector<f64>, lambda: f64) -> f64 {
        let quad = self.yy - 2.0 * self.c.dot(beta) + beta.dot(&(&self.g * beta));
        0.5 * self.a * quad.max(0.0) + lambda * beta.lp_norm(1)
    }

    /// Coordinate descent from `beta`, in place. Returns the number of sweeps.
    fn solve(&self, beta: &mut DVector<f64>, lambda: f64, tol: f64, max_sweeps: usize) -> Result<usize> {
        let q = beta.len();
        // r = c - G beta
        let mut r = &self.c - &self.g * &*beta;
        for sweep in 1..=max_sweeps {
            let mut max_delta = 0.0f64;
            for k in 0..q {
                let gkk = self.g[(k, k)];
                if gkk <= 0.0 {
                    if beta[k] != 0.0 {
                        let delta = -beta[k];
                        beta[k] = 0.0;
                        r.axpy(-delta, &self.g.column(k), 1.0);
                        max_delta = max_delta.max(delta.abs());
                    }
                    continue;
                }
                let z = self.a * (r[k] + gkk * beta[k]);
                let new = soft_threshold(z, lambda) / (self.a * gkk);
                let delta = new - beta[k];
                if delta != 0.0 {
                    beta[k] = new;
                    r.axpy(-delta, &self.g.column(k), 1.0);
                    max_delta = max_delta.max(delta.abs());
                }
            }
            if max_delta < tol {
                return Ok(sweep);
            }
        }
        Err(Error::numerical(format!(
            "lasso coordinate descent did not converge in {max_sweeps} sweeps (lambda {lambda:.3e})"
        )))
    }

    fn solution(&self, beta: &DVector<f64>, lambda: f64) -> RegressionSolution {
        RegressionSolution {
            intercept: self.ybar - self.xbar.dot(beta),
            slopes: beta.iter().copied().collect(),
            lambda,
            objective: self.objective(beta, lambda),
        }
    }
}

#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LassoOptions {
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self { tolerance: DEFAULT_TOLERANCE, max_sweeps: DEFAULT_MAX_SWEEPS }
    }
}

pub fn weighted_lasso(p: &RegressionProblem, lambda: f64) -> Result<RegressionSolution> {
    weighted_lasso_with(p, lambda, LassoOptions::default())
}

pub fn weighted_lasso_with(p: &RegressionProblem, lambda: f64, opts: LassoOptions) -> Result<RegressionSolution> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("lambda must be nonnegative, got {lambda}")));
    }
    let gram = Gram::new(p)?;
    let mut beta = DVector::zeros(p.q());
    gram.solve(&mut beta, lambda, opts.tolerance, opts.max_sweeps)?;
    let mut sol = gram.solution(&beta, lambda);
    sol.objective = p.objective(sol.intercept, &sol.slopes, lambda);
    Ok(sol)
}

/// Objective value after each coordinate-descent sweep, starting from zero.
/// Exposed for monotonicity checks.
pub fn lasso_objective_trace(p: &RegressionProblem, lambda: f64, sweeps: usize) -> Result<Vec<f64>> {
    let gram = Gram::new(p)?;
    let mut beta = DVector::zeros(p.q());
    let mut trace = vec![gram.objective(&beta, lambda)];
    for _ in 0..sweeps {
        // One sweep with an unreachable tolerance always "fails"; we only want the update.
        let _ = gram.solve(&mut beta, lambda, -1.0, 1);
        trace.push(gram.objective(&beta, lambda));
    }
    Ok(trace)
}

/// Smallest lambda at which every slope is zero.
pub fn lambda_max(p: &RegressionProblem) -> Result<f64> {
    let gram = Gram::new(p)?;
    let lm = gram.lambda_max();
    if !(lm > 0.0) {
        return Err(Error::invalid("response is degenerate (no covariance with any predictor)"));
    }
    Ok(lm)
}

/// Geometric sequence from `lambda_max` down to `lambda_max * 1e-4`.
pub fn lambda_path(p: &RegressionProblem, n_lambda: usize) -> Result<Vec<f64>> {
    if n_lambda < 2 {
        return Err(Error::invalid("lambda path needs at least two values"));
    }
    if p.y.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("response is identically zero"));
    }
    let lm = lambda_max(p)?;
    Ok(geometric_path(lm, n_lambda))
}

fn geometric_path(lmax: f64, n: usize) -> Vec<f64> {
    let ratio = PATH_RATIO.powf(1.0 / (n - 1) as f64);
    (0..n).map(|i| lmax * ratio.powi(i as i32)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda_hat: f64,
    pub lambdas: Vec<f64>,
    pub cv_errors: Vec<f64>,
    /// Fit on all rows at `lambda_hat`.
    pub solution: RegressionSolution,
}

/// Select lambda by K-fold cross-validation on seeded random folds.
///
/// The error for each lambda is the mean over folds of the held-out
/// weighted mean squared error.
pub fn cross_validate_lambda(p: &RegressionProblem, folds: usize, seed: u64) -> Result<CvResult> {
    cross_validate_lambda_with(p, folds, seed, DEFAULT_N_LAMBDA, LassoOptions::default())
}

pub fn cross_validate_lambda_with(
    p: &RegressionProblem,
    folds: usize,
    seed: u64,
    n_lambda: usize,
    opts: LassoOptions,
) -> Result<CvResult> {
    let m = p.m();
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    if m < folds {
        return Err(Error::invalid(format!("{m} rows cannot fill {folds} folds")));
    }
    let lambdas = lambda_path(p, n_lambda)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut seed::rng(seed));
    let mut fold_of = vec![0usize; m];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % folds;
    }

    let mut sums = vec![0.0; lambdas.len()];
    for f in 0..folds {
        let train: Vec<usize> = (0..m).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..m).filter(|&i| fold_of[i] == f).collect();
        let test_w: f64 = test.iter().map(|&i| p.w[i]).sum();
        if !(test_w > 0.0) {
            return Err(Error::invalid(format!("cross-validation fold {f} has zero total weight")));
        }
        let tp = p.select(&train);
        let gram = Gram::new(&tp)?;
        let mut beta = DVector::zeros(p.q());
        for (li, &lambda) in lambdas.iter().enumerate() {
            gram.solve(&mut beta, lambda, opts.tolerance, opts.max_sweeps)?;
            let b0 = gram.ybar - gram.xbar.dot(&beta);
            let sse: f64 = test
                .iter()
                .map(|&i| {
                    let pred = b0 + p.x.row(i).iter().zip(beta.iter()).map(|(a, b)| a * b).sum::<f64>();
                    p.w[i] * (p.y[i] - pred).powi(2)
                })
                .sum();
            sums[li] += sse / test_w;
        }
    }
    let cv_errors: Vec<f64> = sums.iter().map(|s| s / folds as f64).collect();
    let best = cv_errors
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &e)| if e < acc.1 { (i, e) } else { acc })
        .0;
    let lambda_hat = lambdas[best];

    // Refit on all rows with warm starts down to lambda_hat.
    let gram = Gram::new(p)?;
    let mut beta = DVector::zeros(p.q());
    for &lambda in &lambdas[..=best] {
        gram.solve(&mut beta, lambda, opts.tolerance, opts.max_sweeps)?;
    }
    let mut solution = gram.solution(&beta, lambda_hat);
    solution.objective = p.objective(solution.intercept, &solution.slopes, lambda_hat);
    Ok(CvResult { lambda_hat, lambdas, cv_errors, solution })
}
