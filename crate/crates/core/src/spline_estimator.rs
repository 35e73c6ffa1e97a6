//! Varying-coefficient VAR estimation with penalized thin-plate regression
//! splines in time (GAM) and its credible-band thresholded variant (GAM(st)).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::LaggedDesign;
use crate::error::{Error, Result};
use crate::model::{Band, Method, SplineDiagnostics, TimeVaryingVarModel};

pub const DEFAULT_K_MAX: usize = 10;
pub const DEFAULT_LEVEL: f64 = 0.95;
/// Knots beyond this count are thinned to an evenly spaced subset of the unique times.
pub const DEFAULT_MAX_KNOTS: usize = 300;
pub const LOG_LAMBDA_MIN: f64 = -8.0;
pub const LOG_LAMBDA_MAX: f64 = 12.0;
const GRID_POINTS: usize = 100;
const MAX_CYCLES: usize = 30;
const GCV_TOL: f64 = 1e-7;

/// Largest `k` with `k (p + 1) < n`, capped at `k_max`; fails below 3.
pub fn select_k(n: usize, p: usize, k_max: usize) -> Result<usize> {
    if n == 0 || p == 0 {
        return Err(Error::invalid("n and p must be positive"));
    }
    let k = ((n - 1) / (p + 1)).min(k_max);
    if k < 3 {
        return Err(Error::ident(format!(
            "spline model not identified: need n > 3 (p + 1) = {} observations, have {n}",
            3 * (p + 1)
        )));
    }
    Ok(k)
}

/// Low-rank thin-plate regression spline basis in one covariate.
///
/// Columns are `1`, `t`, then `k - 2` penalized eigenfunctions ordered by
/// increasing penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis {
    pub k: usize,
    /// Basis evaluated at the fitting times (m × k).
    pub b: DMatrix<f64>,
    /// Penalty in basis coordinates (k × k).
    pub s: DMatrix<f64>,
    pub nullspace_dim: usize,
    knots: Vec<f64>,
    /// Radial weights of each penalized function (knots × (k - 2)).
    delta: DMatrix<f64>,
    /// Affine correction `a + b t` subtracted from each penalized function.
    affine: Vec<(f64, f64)>,
}

fn radial(r: f64) -> f64 {
    let r = r.abs();
    r * r * r
}

impl SplineBasis {
    /// Evaluate every basis function at `times`.
    pub fn evaluate(&self, times: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(times.len(), self.k);
        for (r, &t) in times.iter().enumerate() {
            out[(r, 0)] = 1.0;
            out[(r, 1)] = t;
            for j in 0..self.k - 2 {
                let mut v = 0.0;
                for (a, &x) in self.knots.iter().enumerate() {
                    v += self.delta[(a, j)] * radial(t - x);
                }
                let (c0, c1) = self.affine[j];
                out[(r, j + 2)] = v - c0 - c1 * t;
            }
        }
        out
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
}

pub fn tprs_basis(times: &[f64], k: usize) -> Result<SplineBasis> {
    tprs_basis_with(times, k, DEFAULT_MAX_KNOTS)
}

pub fn tprs_basis_with(times: &[f64], k: usize, max_knots: usize) -> Result<SplineBasis> {
    if k < 3 {
        return Err(Error::invalid("basis dimension k must be at least 3"));
    }
    if k >= times.len() {
        return Err(Error::ident(format!("basis dimension {k} needs more than {k} observations, have {}", times.len())));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("non-finite time"));
    }
    let mut uniq = times.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    if uniq.len() < 2 {
        return Err(Error::invalid("all times identical"));
    }
    if uniq.len() < k {
        return Err(Error::ident(format!("basis dimension {k} exceeds the {} distinct times", uniq.len())));
    }
    let knots: Vec<f64> = if uniq.len() > max_knots.max(k) {
        let u = max_knots.max(k);
        (0..u).map(|i| uniq[(i * (uniq.len() - 1) + (u - 1) / 2) / (u - 1)]).collect()
    } else {
        uniq
    };
    let u = knots.len();
    let e = DMatrix::from_fn(u, u, |a, b| radial(knots[a] - knots[b]));

    // Orthonormal basis of span{1, t} at the knots.
    let mean = knots.iter().sum::<f64>() / u as f64;
    let p1 = DVector::from_element(u, 1.0 / (u as f64).sqrt());
    let mut p2 = DVector::from_iterator(u, knots.iter().map(|x| x - mean));
    p2 /= p2.norm();
    let proj = |v: &DVector<f64>| v - &p1 * p1.dot(v) - &p2 * p2.dot(v);
    let mut pe = DMatrix::zeros(u, u);
    for c in 0..u {
        let col = proj(&e.column(c).into_owned());
        pe.set_column(c, &col);
    }
    for r in 0..u {
        let row = proj(&pe.row(r).transpose());
        pe.set_row(r, &row.transpose());
    }
    let pe = (&pe + pe.transpose()) * 0.5;
    let eig = SymmetricEigen::new(pe);
    let mut order: Vec<usize> = (0..u).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let scale = (u as f64).sqrt();
    let mut delta = DMatrix::zeros(u, k - 2);
    let mut affine = Vec::with_capacity(k - 2);
    let mut s = DMatrix::zeros(k, k);
    for j in 0..k - 2 {
        let lam = eig.eigenvalues[order[j]];
        if !(lam > 0.0) {
            return Err(Error::numerical("thin-plate penalty lost positive definiteness"));
        }
        let v = eig.eigenvectors.column(order[j]);
        let d = v * (scale / lam);
        // Values at knots, then strip their affine part so the function equals scale * v there.
        let g = &e * &d;
        let sum_g: f64 = g.sum();
        let sxg: f64 = g.iter().zip(&knots).map(|(g, x)| g * (x - mean)).sum();
        let sxx: f64 = knots.iter().map(|x| (x - mean) * (x - mean)).sum();
        let slope = sxg / sxx;
        let icept = sum_g / u as f64 - slope * mean;
        delta.set_column(j, &d);
        affine.push((icept, slope));
        s[(j + 2, j + 2)] = u as f64 / lam;
    }
    let mut basis = SplineBasis { k, b: DMatrix::zeros(0, k), s, nullspace_dim: 2, knots, delta, affine };
    basis.b = basis.evaluate(times);
    Ok(basis)
}

/// `m RSS / (m - edf)^2`.
pub fn gcv_score(m: usize, rss: f64, edf_total: f64) -> Result<f64> {
    let denom = m as f64 - edf_total;
    if !(denom > 0.0) {
        return Err(Error::numerical(format!("edf {edf_total:.3} not below sample size {m}")));
    }
    Ok(m as f64 * rss / (denom * denom))
}

/// Cross products of one equation's varying-coefficient design.
///
/// Smooth 0 is the intercept; smooth `s > 0` multiplies predictor column `s - 1`.
#[derive(Debug, Clone)]
pub struct PenalizedSystem {
    pub m: usize,
    pub k: usize,
    pub n_smooth: usize,
    gram: DMatrix<f64>,
    zty: DVector<f64>,
    yty: f64,
    /// Diagonal penalty per smooth, already normalized to the smooth's data scale.
    penalty: Vec<DVector<f64>>,
}

/// A penalized fit at fixed smoothing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GamEquationFit {
    pub k: usize,
    pub m: usize,
    /// Spline coefficients, smooth-major (`k` per smooth).
    pub theta: DVector<f64>,
    pub lambdas: Vec<f64>,
    pub rss: f64,
    pub gcv: f64,
    pub edf: Vec<f64>,
    pub edf_total: f64,
    pub sigma2: f64,
    /// Posterior covariance of `theta`.
    pub cov: DMatrix<f64>,
    pub converged: bool,
}

impl GamEquationFit {
    pub fn n_smooth(&self) -> usize {
        self.theta.len() / self.k
    }

    pub fn smooth_coefficients(&self, s: usize) -> DVector<f64> {
        self.theta.rows(s * self.k, self.k).into_owned()
    }
}

impl PenalizedSystem {
    pub fn new(design: &LaggedDesign, eq: usize, basis: &SplineBasis) -> Result<Self> {
        let m = design.included_rows();
        let q = design.n_predictors();
        let k = basis.k;
        if basis.b.nrows() != m {
            return Err(Error::invalid("basis rows do not match the design"));
        }
        if eq >= design.p() {
            return Err(Error::invalid(format!("equation index {eq} out of range")));
        }
        let ns = q + 1;
        if m <= k * ns {
            return Err(Error::ident(format!(
                "equation {}: spline model needs more than k (p + 1) = {} rows, design has {m}",
                eq + 1,
                k * ns
            )));
        }
        let z = DMatrix::from_fn(m, k * ns, |r, c| {
            let (s, j) = (c / k, c % k);
            let x = if s == 0 { 1.0 } else { design.predictors[(r, s - 1)] };
            basis.b[(r, j)] * x
        });
        let y = design.responses.column(eq);
        let gram = z.transpose() * &z;
        let zty = z.transpose() * y;
        let yty = y.dot(&y);
        let s_norm = basis.s.norm();
        let penalty = (0..ns)
            .map(|s| {
                let block = gram.view((s * k, s * k), (k, k));
                let c = if s_norm > 0.0 { block.norm() / s_norm } else { 1.0 };
                basis.s.diagonal() * c
            })
            .collect();
        Ok(PenalizedSystem { m, k, n_smooth: ns, gram, zty, yty, penalty })
    }

    fn penalized(&self, lambdas: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let mut a = self.gram.clone();
        for (s, &l) in lambdas.iter().enumerate() {
            for j in 0..self.k {
                a[(s * self.k + j, s * self.k + j)] += l * self.penalty[s][j];
            }
        }
        let inv = a
            .cholesky()
            .ok_or_else(|| Error::numerical("penalized normal equations are not positive definite"))?
            .inverse();
        let theta = &inv * &self.zty;
        Ok((inv, theta))
    }

    fn rss(&self, theta: &DVector<f64>) -> f64 {
        (self.yty - 2.0 * theta.dot(&self.zty) + theta.dot(&(&self.gram * theta))).max(0.0)
    }

    /// GCV at the given smoothing parameters.
    pub fn gcv(&self, lambdas: &[f64]) -> Result<f64> {
        let (inv, theta) = self.penalized(lambdas)?;
        let edf = inv.component_mul(&self.gram).sum();
        gcv_score(self.m, self.rss(&theta), edf)
    }

    /// Full fit (edf per smooth, covariance) at the given smoothing parameters.
    pub fn fit(&self, lambdas: &[f64]) -> Result<GamEquationFit> {
        if lambdas.len() != self.n_smooth {
            return Err(Error::invalid("one smoothing parameter per smooth required"));
        }
        let (inv, theta) = self.penalized(lambdas)?;
        let hat = &inv * &self.gram;
        let edf: Vec<f64> =
            (0..self.n_smooth).map(|s| (0..self.k).map(|j| hat[(s * self.k + j, s * self.k + j)]).sum()).collect();
        let edf_total: f64 = edf.iter().sum();
        let rss = self.rss(&theta);
        let gcv = gcv_score(self.m, rss, edf_total)?;
        let sigma2 = rss / (self.m as f64 - edf_total);
        Ok(GamEquationFit {
            k: self.k,
            m: self.m,
            cov: inv * sigma2,
            theta,
            lambdas: lambdas.to_vec(),
            rss,
            gcv,
            edf,
            edf_total,
            sigma2,
            converged: true,
        })
    }

    fn gcv_log(&self, log_lambdas: &[f64]) -> f64 {
        let l: Vec<f64> = log_lambdas.iter().map(|v| 10f64.powf(*v)).collect();
        self.gcv(&l).unwrap_or(f64::INFINITY)
    }

    /// Best common log10 smoothing parameter on a 100-point grid over the search range.
    pub fn grid_search(&self) -> (f64, f64) {
        (0..GRID_POINTS)
            .map(|g| LOG_LAMBDA_MIN + (LOG_LAMBDA_MAX - LOG_LAMBDA_MIN) * g as f64 / (GRID_POINTS - 1) as f64)
            .map(|l| (l, self.gcv_log(&vec![l; self.n_smooth])))
            .fold((LOG_LAMBDA_MIN, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
    }

    /// Minimize GCV over per-smooth log10 smoothing parameters.
    pub fn optimize(&self) -> Result<GamEquationFit> {
        let (l0, mut best) = self.grid_search();
        if !best.is_finite() {
            return Err(Error::numerical("GCV undefined over the whole smoothing grid"));
        }
        let mut ll = vec![l0; self.n_smooth];
        let mut converged = false;
        for cycle in 0..MAX_CYCLES {
            let start = best;
            for s in 0..self.n_smooth {
                let base = ll.clone();
                let mut eval = |v: f64| {
                    let mut trial = base.clone();
                    trial[s] = v;
                    self.gcv_log(&trial)
                };
                let (lo, hi) = if cycle == 0 {
                    // Coarse scan over the whole range, then refine around the best node.
                    let nodes: Vec<f64> = (0..=20).map(|i| LOG_LAMBDA_MIN + i as f64).collect();
                    let vals: Vec<f64> = nodes.iter().map(|&v| eval(v)).collect();
                    let i = (0..nodes.len()).fold(0, |b, i| if vals[i] < vals[b] { i } else { b });
                    if vals[i] < best {
                        best = vals[i];
                        ll[s] = nodes[i];
                    }
                    (nodes[i.saturating_sub(1)], nodes[(i + 1).min(nodes.len() - 1)])
                } else {
                    ((ll[s] - 1.0).max(LOG_LAMBDA_MIN), (ll[s] + 1.0).min(LOG_LAMBDA_MAX))
                };
                let (v, g) = golden_section(lo, hi, 1e-5, &mut eval);
                if g < best {
                    best = g;
                    ll[s] = v;
                }
            }
            if start - best <= GCV_TOL * best.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        let lambdas: Vec<f64> = ll.iter().map(|v| 10f64.powf(*v)).collect();
        let mut fit = self.fit(&lambdas)?;
        fit.converged = converged;
        Ok(fit)
    }
}

fn golden_section(mut a: f64, mut b: f64, tol: f64, f: &mut impl FnMut(f64) -> f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

pub fn fit_gam_equation(design: &LaggedDesign, eq: usize, basis: &SplineBasis) -> Result<GamEquationFit> {
    PenalizedSystem::new(design, eq, basis)?.optimize()
}

/// Standard normal quantile for a two-sided band at `level`.
pub fn band_multiplier(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("credible level must lie in (0, 1)"));
    }
    Ok(Normal::standard().inverse_cdf((1.0 + level) / 2.0))
}

/// Pointwise credible bands of every smooth at `eval_times`.
pub fn credible_bands(fit: &GamEquationFit, basis: &SplineBasis, eval_times: &[f64], level: f64) -> Result<Vec<Band>> {
    let z = band_multiplier(level)?;
    let be = basis.evaluate(eval_times);
    let k = fit.k;
    (0..fit.n_smooth())
        .map(|s| {
            let theta = fit.smooth_coefficients(s);
            let cov = fit.cov.view((s * k, s * k), (k, k));
            let point = &be * theta;
            let mut band = Band { lower: vec![], point: point.iter().copied().collect(), upper: vec![] };
            for e in 0..eval_times.len() {
                let row = be.row(e);
                let var = (row * cov * row.transpose())[(0, 0)];
                if !(var >= 0.0) || !var.is_finite() {
                    return Err(Error::numerical("posterior covariance is not positive definite"));
                }
                let half = z * var.sqrt();
                band.lower.push(point[e] - half);
                band.upper.push(point[e] + half);
            }
            Ok(band)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct GamOptions {
    /// Basis dimension; `None` selects it from the number of design rows.
    pub k: Option<usize>,
    pub k_max: usize,
    pub level: f64,
    pub max_knots: usize,
}

impl Default for GamOptions {
    fn default() -> Self {
        Self { k: None, k_max: DEFAULT_K_MAX, level: DEFAULT_LEVEL, max_knots: DEFAULT_MAX_KNOTS }
    }
}

pub fn fit_tv_var_gam(
    design: &LaggedDesign,
    est_points: &[f64],
    threshold: bool,
    opts: &GamOptions,
) -> Result<TimeVaryingVarModel> {
    if est_points.is_empty() {
        return Err(Error::invalid("no estimation points"));
    }
    let (m, p, q) = (design.included_rows(), design.p(), design.n_predictors());
    let k = match opts.k {
        Some(k) => k,
        None => select_k(m, q, opts.k_max)?,
    };
    let basis = tprs_basis_with(&design.response_times, k, opts.max_knots)?;
    let fits: Vec<GamEquationFit> = (0..p)
        .into_par_iter()
        .map(|i| fit_gam_equation(design, i, &basis))
        .collect::<Result<_>>()?;
    let bands: Vec<Vec<Band>> = fits
        .iter()
        .map(|f| credible_bands(f, &basis, est_points, opts.level))
        .collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    for (i, f) in fits.iter().enumerate() {
        if !f.converged {
            warnings.push(format!("equation {}: smoothing parameter search did not converge", i + 1));
        }
        for (s, &edf) in f.edf.iter().enumerate() {
            if edf > 0.9 * k as f64 {
                warnings.push(format!(
                    "equation {}, smooth {s}: edf {edf:.2} is close to k = {k}; consider a larger basis",
                    i + 1
                ));
            }
        }
    }

    let n_lags = design.lags.len();
    let coeffs = (0..p)
        .map(|i| {
            (0..p)
                .map(|j| {
                    (0..n_lags)
                        .map(|l| {
                            let band = &bands[i][1 + l * p + j];
                            (0..est_points.len())
                                .map(|e| {
                                    if threshold && band.lower[e] <= 0.0 && band.upper[e] >= 0.0 {
                                        0.0
                                    } else {
                                        band.point[e]
                                    }
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(TimeVaryingVarModel {
        method: if threshold { Method::GamSt } else { Method::Gam },
        labels: design.labels.clone(),
        lags: design.lags.clone(),
        est_points: est_points.to_vec(),
        bandwidth: None,
        intercepts: bands.iter().map(|b| b[0].point.clone()).collect(),
        coeffs,
        lambdas: None,
        scaling: design.scaling.clone(),
        spline: Some(SplineDiagnostics {
            k,
            edf: fits.iter().map(|f| f.edf.clone()).collect(),
            gcv: fits.iter().map(|f| f.gcv).collect(),
            smoothing: fits.iter().map(|f| f.lambdas.clone()).collect(),
            sigma2: fits.iter().map(|f| f.sigma2).collect(),
            converged: fits.iter().map(|f| f.converged).collect(),
            bands,
            warnings,
        }),
        spec: None,
    })
}
