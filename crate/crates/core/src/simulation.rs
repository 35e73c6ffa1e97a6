//! Ground-truth time-varying VAR(1) models and data generation.
//!
//! A truth is a `p x p` matrix of parameter functions on the time grid
//! `t_k = k / n`, `k = 1..n`. Structures are either a random graph (all
//! autoregressive effects plus a fixed number of cross-lagged edges) or the
//! upper-triangular pattern. Truths whose VAR matrix is unstable at any time
//! slice are redrawn wholesale.

use nalgebra::linalg::Schur;
use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_THETA: f64 = 0.35;
/// Noise variance 0.1, i.e. standard deviation sqrt(0.1).
pub const DEFAULT_NOISE_VARIANCE: f64 = 0.1;
pub const SIGMOID_STEEPNESS: f64 = 15.0;
pub const CHANGE_POINT: f64 = 0.5;
pub const MAX_REDRAWS: usize = 1000;
const OVERFLOW_GUARD: f64 = 1e8;

/// Series lengths used in the reference simulation study.
pub const N_GRID: [usize; 12] = [20, 30, 36, 69, 103, 155, 234, 352, 530, 798, 1201, 1808];

pub fn default_sigma() -> f64 {
    DEFAULT_NOISE_VARIANCE.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionKind {
    ConstantNonzero,
    LinearUp,
    LinearDown,
    SigmoidUp,
    SigmoidDown,
    StepUp,
    StepDown,
    Zero,
}

impl FunctionKind {
    pub const NONZERO: [FunctionKind; 7] = [
        FunctionKind::ConstantNonzero,
        FunctionKind::LinearUp,
        FunctionKind::LinearDown,
        FunctionKind::SigmoidUp,
        FunctionKind::SigmoidDown,
        FunctionKind::StepUp,
        FunctionKind::StepDown,
    ];

    pub fn eval(self, t: f64, theta: f64) -> f64 {
        let sigmoid = |x: f64| 1.0 / (1.0 + (-SIGMOID_STEEPNESS * (x - 0.5)).exp());
        match self {
            FunctionKind::ConstantNonzero => theta,
            FunctionKind::LinearUp => theta * t,
            FunctionKind::LinearDown => theta * (1.0 - t),
            FunctionKind::SigmoidUp => theta * sigmoid(t),
            FunctionKind::SigmoidDown => theta * sigmoid(1.0 - t),
            FunctionKind::StepUp => {
                if t < CHANGE_POINT {
                    0.0
                } else {
                    theta
                }
            }
            FunctionKind::StepDown => {
                if t < CHANGE_POINT {
                    theta
                } else {
                    0.0
                }
            }
            FunctionKind::Zero => 0.0,
        }
    }

    pub fn is_zero(self) -> bool {
        self == FunctionKind::Zero
    }

    /// Symmetric up/down pairs collapse into one reporting category.
    pub fn category(self) -> KindCategory {
        match self {
            FunctionKind::ConstantNonzero => KindCategory::Constant,
            FunctionKind::LinearUp | FunctionKind::LinearDown => KindCategory::Linear,
            FunctionKind::SigmoidUp | FunctionKind::SigmoidDown => KindCategory::Sigmoid,
            FunctionKind::StepUp | FunctionKind::StepDown => KindCategory::Step,
            FunctionKind::Zero => KindCategory::Zero,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindCategory {
    Constant,
    Linear,
    Sigmoid,
    Step,
    Zero,
}

impl KindCategory {
    pub const ALL: [KindCategory; 5] =
        [KindCategory::Constant, KindCategory::Linear, KindCategory::Sigmoid, KindCategory::Step, KindCategory::Zero];

    pub fn name(self) -> &'static str {
        match self {
            KindCategory::Constant => "constant",
            KindCategory::Linear => "linear",
            KindCategory::Sigmoid => "sigmoid",
            KindCategory::Step => "step",
            KindCategory::Zero => "zero",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterFunctionSpec {
    pub kind: FunctionKind,
    pub theta: f64,
}

impl ParameterFunctionSpec {
    pub fn eval(&self, t: f64) -> f64 {
        self.kind.eval(t, self.theta)
    }
}

/// 0/1 adjacency of lagged effects: `structure[i][j] == 1` means variable `j`
/// at `t - 1` affects variable `i` at `t`.
pub type Structure = Vec<Vec<u8>>;

pub fn generate_graph_structure(p: usize, n_edges: usize, seed: u64) -> Result<Structure> {
    let off = p * p - p;
    if n_edges > off {
        return Err(Error::invalid(format!("{n_edges} edges exceed the {off} off-diagonal slots")));
    }
    let mut s = vec![vec![0u8; p]; p];
    for (i, row) in s.iter_mut().enumerate() {
        row[i] = 1;
    }
    let slots: Vec<(usize, usize)> = (0..p).flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let mut rng = seed::rng(seed);
    for k in index::sample(&mut rng, off, n_edges) {
        let (i, j) = slots[k];
        s[i][j] = 1;
    }
    Ok(s)
}

pub fn upper_triangular_structure(p: usize) -> Structure {
    (0..p).map(|i| (0..p).map(|j| u8::from(j >= i)).collect()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureStats {
    pub nonzero: usize,
    pub off_diagonal_edges: usize,
    pub off_diagonal_density: f64,
    pub mean_indegree: f64,
}

pub fn structure_stats(s: &Structure) -> StructureStats {
    let p = s.len();
    let nonzero: usize = s.iter().flatten().map(|&v| v as usize).sum();
    let diag: usize = (0..p).map(|i| s[i][i] as usize).sum();
    let off = nonzero - diag;
    StructureStats {
        nonzero,
        off_diagonal_edges: off,
        off_diagonal_density: if p > 1 { off as f64 / (p * p - p) as f64 } else { 0.0 },
        mean_indegree: nonzero as f64 / p as f64,
    }
}

pub fn assign_parameter_functions(structure: &Structure, theta: f64, seed: u64) -> Vec<Vec<ParameterFunctionSpec>> {
    let mut rng = seed::rng(seed);
    structure
        .iter()
        .map(|row| {
            row.iter()
                .map(|&e| {
                    let kind = if e == 0 {
                        FunctionKind::Zero
                    } else {
                        FunctionKind::NONZERO[rng.random_range(0..FunctionKind::NONZERO.len())]
                    };
                    ParameterFunctionSpec { kind, theta }
                })
                .collect()
        })
        .collect()
}

/// Where the lagged-effect pattern of a truth comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum StructureDesign {
    RandomGraph { p: usize, n_edges: usize },
    UpperTriangular { p: usize },
    Fixed { structure: Structure },
}

impl StructureDesign {
    /// Random graph with p = 10 and 26 cross-lagged edges.
    pub fn sim_a() -> Self {
        StructureDesign::RandomGraph { p: 10, n_edges: 26 }
    }

    /// Upper-triangular pattern with p = 20.
    pub fn sim_b() -> Self {
        StructureDesign::UpperTriangular { p: 20 }
    }

    fn draw(&self, seed: u64) -> Result<Structure> {
        match self {
            StructureDesign::RandomGraph { p, n_edges } => generate_graph_structure(*p, *n_edges, seed),
            StructureDesign::UpperTriangular { p } => Ok(upper_triangular_structure(*p)),
            StructureDesign::Fixed { structure } => Ok(structure.clone()),
        }
    }
}

/// Ground-truth time-varying coefficients. Values are regenerated from the
/// function specs, so the serialized form stays small.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientArray {
    pub p: usize,
    pub n: usize,
    pub theta: f64,
    /// Noise standard deviation.
    pub sigma: f64,
    pub seed: u64,
    pub redraws: usize,
    pub specs: Vec<Vec<ParameterFunctionSpec>>,
}

impl CoefficientArray {
    /// Grid time of occasion `k` (1-based).
    pub fn grid_time(&self, k: usize) -> f64 {
        k as f64 / self.n as f64
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.specs[i][j].eval(self.grid_time(k))
    }

    /// The VAR matrix at occasion `k` (1-based).
    pub fn slice(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.p, self.p, |i, j| self.value(i, j, k))
    }

    /// All `n` slices.
    pub fn values(&self) -> Vec<DMatrix<f64>> {
        (1..=self.n).map(|k| self.slice(k)).collect()
    }

    /// Truth at an arbitrary time, linearly interpolated on the `k / n` grid
    /// and held constant outside it.
    pub fn value_at(&self, i: usize, j: usize, t: f64) -> f64 {
        let n = self.n as f64;
        let pos = (t * n).clamp(1.0, n);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(self.n);
        let frac = pos - lo as f64;
        let a = self.value(i, j, lo);
        if frac == 0.0 || hi == lo {
            a
        } else {
            a + frac * (self.value(i, j, hi) - a)
        }
    }

    pub fn structure(&self) -> Structure {
        self.specs.iter().map(|row| row.iter().map(|s| u8::from(!s.kind.is_zero())).collect()).collect()
    }

    /// Largest spectral radius over all time slices.
    pub fn max_spectral_radius(&self) -> f64 {
        (1..=self.n).map(|k| spectral_radius(&self.slice(k))).fold(0.0, f64::max)
    }

    pub fn signal_to_noise(&self) -> f64 {
        self.theta / (self.sigma * self.sigma)
    }
}

/// Largest eigenvalue modulus. Uses a bounded Schur iteration and falls back
/// to Gelfand's formula if it does not converge.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    match Schur::try_new(m.clone(), f64::EPSILON, 10_000) {
        Some(s) => s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        None => gelfand_radius(m),
    }
}

/// `||m^(2^i)||^(1 / 2^i)` for large `i`, rescaled at each squaring.
fn gelfand_radius(m: &DMatrix<f64>) -> f64 {
    let mut a = m.clone();
    let mut log_scale = 0.0;
    let mut est = f64::INFINITY;
    for i in 0..40 {
        let norm = a.norm();
        if norm == 0.0 {
            return 0.0;
        }
        a /= norm;
        log_scale += norm.ln();
        est = (log_scale / 2f64.powi(i)).exp();
        a = &a * &a;
        log_scale *= 2.0;
    }
    est
}

pub fn render_coefficient_array(
    specs: Vec<Vec<ParameterFunctionSpec>>,
    n: usize,
    theta: f64,
    sigma: f64,
    seed: u64,
) -> Result<CoefficientArray> {
    if n < 2 {
        return Err(Error::invalid("need n >= 2 time points"));
    }
    let p = specs.len();
    if p == 0 || specs.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("parameter specs must form a square matrix"));
    }
    Ok(CoefficientArray { p, n, theta, sigma, seed, redraws: 0, specs })
}

/// Draw structure and function assignments until the VAR matrix is stable
/// at every time slice.
pub fn generate_truth(design: &StructureDesign, n: usize, theta: f64, sigma: f64, seed: u64) -> Result<CoefficientArray> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta must be positive"));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    for attempt in 0..MAX_REDRAWS {
        let structure = design.draw(seed::derive(seed, &[attempt as u64, 0]))?;
        let specs = assign_parameter_functions(&structure, theta, seed::derive(seed, &[attempt as u64, 1]));
        let mut truth = render_coefficient_array(specs, n, theta, sigma, seed)?;
        if truth.max_spectral_radius() < 1.0 {
            truth.redraws = attempt;
            return Ok(truth);
        }
    }
    Err(Error::invalid(format!("no stable VAR matrix after {MAX_REDRAWS} redraws")))
}

/// Simulate `X_t = B_t X_{t-1} + e_t` with iid `N(0, sigma^2)` noise and zero
/// intercepts. Timestamps are the truth grid `k / n`.
pub fn simulate_tv_var(truth: &CoefficientArray, seed: u64) -> Result<TimeSeriesDataset> {
    let (p, n) = (truth.p, truth.n);
    let normal = Normal::new(0.0, truth.sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = seed::rng(seed);
    let mut x = DMatrix::zeros(n, p);
    for j in 0..p {
        x[(0, j)] = normal.sample(&mut rng);
    }
    for k in 1..n {
        let b = truth.slice(k + 1);
        let prev = x.row(k - 1).transpose();
        let mean = &b * prev;
        for j in 0..p {
            let v = mean[j] + normal.sample(&mut rng);
            if !v.is_finite() || v.abs() > OVERFLOW_GUARD {
                return Err(Error::numerical(format!("simulated series diverged at occasion {}", k + 1)));
            }
            x[(k, j)] = v;
        }
    }
    let labels = (1..=p).map(|j| format!("V{j}")).collect();
    let times = (1..=n).map(|k| truth.grid_time(k)).collect();
    TimeSeriesDataset::new(x, labels, Some(times), None, None)
}
