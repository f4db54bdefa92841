//! Weighted fits of `P(τ)` data to the closed-form coincidence model.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lm::{self, LeastSquares};
use crate::error::{Error, Result};
use crate::model::{probability_with_gradient, BeamSplitter};
use crate::rng::{substream, Domain};
use crate::shaping::DetectorIRF;

/// Upper bound on `T1` accepted by the fitter.
pub const T1_MAX_PS: f64 = 1e5;
/// Data whose every delay exceeds this many `T1_MAX_PS` carries no
/// information on the dip.
const UNIDENTIFIABLE_DELAY_FACTOR: f64 = 5.0;
pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub tau_ps: f64,
    pub p: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub label: String,
    pub points: Vec<DataPoint>,
}

impl Dataset {
    pub fn new(label: impl Into<String>, points: Vec<DataPoint>) -> Self {
        Self { label: label.into(), points }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum CurveModel {
    #[default]
    Eq2,
    /// Closed form averaged over a Gaussian delay uncertainty.
    Eq2ConvolvedIRF(DetectorIRF),
}

/// Which of `T1` and `T2` are common to all datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SharedParameters {
    pub t1: bool,
    pub t2: bool,
}

impl SharedParameters {
    pub const NONE: Self = Self { t1: false, t2: false };
    pub const T2: Self = Self { t1: false, t2: true };
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitProblem {
    pub datasets: Vec<Dataset>,
    pub model: CurveModel,
    pub shared: SharedParameters,
    pub bs: BeamSplitter,
}

impl FitProblem {
    pub fn single(dataset: Dataset) -> Self {
        Self {
            datasets: vec![dataset],
            model: CurveModel::Eq2,
            shared: SharedParameters::NONE,
            bs: BeamSplitter::balanced(),
        }
    }

    pub fn joint_t2(datasets: Vec<Dataset>) -> Self {
        Self {
            datasets,
            model: CurveModel::Eq2,
            shared: SharedParameters::T2,
            bs: BeamSplitter::balanced(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::param("datasets", "at least one dataset is required"));
        }
        for ds in &self.datasets {
            if ds.points.len() < MIN_POINTS {
                return Err(Error::InsufficientStatistics(format!(
                    "dataset `{}` has {} points, need at least {MIN_POINTS}",
                    ds.label,
                    ds.points.len()
                )));
            }
            for p in &ds.points {
                if !(p.sigma.is_finite() && p.sigma > 0.0) {
                    return Err(Error::param("sigma", format!("must be > 0, got {}", p.sigma)));
                }
                if !(p.tau_ps.is_finite() && p.p.is_finite()) {
                    return Err(Error::param("data", "non-finite value"));
                }
            }
            let limit = UNIDENTIFIABLE_DELAY_FACTOR * T1_MAX_PS;
            if ds.points.iter().all(|p| p.tau_ps.abs() > limit) {
                return Err(Error::Unidentifiable(format!(
                    "every delay in `{}` exceeds {limit} ps; T2 cannot be determined",
                    ds.label
                )));
            }
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        Layout { n: self.datasets.len(), shared: self.shared }
    }

    fn n_residuals(&self) -> usize {
        self.datasets.iter().map(|d| d.points.len()).sum()
    }

    /// Model value and derivatives with respect to `(T1, T2)` at `τ`.
    fn model_with_gradient(&self, tau: f64, t1: f64, t2: f64) -> (f64, f64, f64) {
        match self.model {
            CurveModel::Eq2 => probability_with_gradient(tau, t1, t2, &self.bs),
            CurveModel::Eq2ConvolvedIRF(irf) => {
                let sigma = irf.sigma();
                let (nodes, weights) = gauss_nodes();
                let mut acc = (0.0, 0.0, 0.0);
                for (u, w) in nodes.iter().zip(weights.iter()) {
                    let (p, d1, d2) = probability_with_gradient(tau - u * sigma, t1, t2, &self.bs);
                    acc.0 += w * p;
                    acc.1 += w * d1;
                    acc.2 += w * d2;
                }
                acc
            }
        }
    }

    /// Model `P(τ)` for parameters `(t1, t2)`.
    pub fn model_value(&self, tau: f64, t1: f64, t2: f64) -> f64 {
        self.model_with_gradient(tau, t1, t2).0
    }

    /// Weighted sum of squared residuals in fit coordinates.
    pub fn objective(&self, theta: &[f64]) -> Result<f64> {
        let r = Objective { problem: self }.residuals(&DVector::from_column_slice(theta))?;
        Ok(r.norm_squared())
    }

    /// Analytic gradient `2·Jᵀr` of [`Self::objective`].
    pub fn objective_gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let obj = Objective { problem: self };
        let t = DVector::from_column_slice(theta);
        let r = obj.residuals(&t)?;
        let j = obj.jacobian(&t)?;
        Ok((2.0 * j.transpose() * r).iter().copied().collect())
    }

    /// Fit coordinates for per-dataset `(T1_j, T2_j)`; shared values are
    /// taken from the first dataset.
    pub fn to_fit_coordinates(&self, params: &[(f64, f64)]) -> Result<Vec<f64>> {
        self.layout().encode(params)
    }

    pub fn from_fit_coordinates(&self, theta: &[f64]) -> Vec<(f64, f64)> {
        self.layout().decode(theta).into_iter().map(|(p, _)| p).collect()
    }

    fn starting_point(&self) -> Vec<(f64, f64)> {
        let mut guesses: Vec<(f64, f64)> =
            self.datasets.iter().map(|d| initial_guess(d, &self.bs)).collect();
        if self.shared.t2 {
            let t2 = guesses.iter().map(|g| g.1).sum::<f64>() / guesses.len() as f64;
            for g in guesses.iter_mut() {
                g.0 = g.0.max(0.51 * t2);
                g.1 = t2;
            }
        }
        if self.shared.t1 {
            let t1 = guesses.iter().map(|g| g.0).sum::<f64>() / guesses.len() as f64;
            for g in guesses.iter_mut() {
                g.0 = t1;
                g.1 = g.1.min(1.98 * t1);
            }
        }
        guesses
    }
}

/// 33-point trapezoid rule for a unit Gaussian over ±4σ.
fn gauss_nodes() -> (Vec<f64>, Vec<f64>) {
    const N: usize = 33;
    let h = 8.0 / (N - 1) as f64;
    let nodes: Vec<f64> = (0..N).map(|i| -4.0 + i as f64 * h).collect();
    let mut weights: Vec<f64> = nodes.iter().map(|u| (-0.5 * u * u).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    (nodes, weights)
}

/// Heuristic start: `T2/(2T1)` from the depth at the smallest delay, `T1`
/// from the delay at which `P` recovers to 0.45.
fn initial_guess(ds: &Dataset, bs: &BeamSplitter) -> (f64, f64) {
    let mut pts = ds.points.clone();
    pts.sort_by(|a, b| a.tau_ps.abs().total_cmp(&b.tau_ps.abs()));
    let k = 0.5 * bs.visibility_factor();
    let depth = ((0.5 - pts[0].p) / k).clamp(0.05, 0.95);
    let level = 0.5 - k * 0.1;
    let tau45 = pts
        .windows(2)
        .find(|w| w[0].p < level && w[1].p >= level)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            a.tau_ps.abs()
                + (level - a.p) / (b.p - a.p) * (b.tau_ps.abs() - a.tau_ps.abs())
        })
        .unwrap_or_else(|| pts.last().map(|p| p.tau_ps.abs()).unwrap_or(1000.0));
    let t1 = if depth > 0.1 {
        2.0 * tau45 / (depth / 0.1).ln().max(0.4)
    } else {
        tau45.max(1.0)
    };
    let t1 = t1.clamp(1.0, T1_MAX_PS);
    (t1, 2.0 * t1 * depth)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Maps unconstrained fit coordinates to `(T1_j, T2_j)` with
/// `0 < T2_j ≤ 2·T1_j` built in.
///
/// - nothing or T1 shared: `ln T1`, `logit(T2/(2T1))` per block
/// - T2 shared: `ln T2` once, then `ln(2T1_j/T2 - 1)` per dataset
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
    shared: SharedParameters,
}

/// Partial derivatives `∂T1_j/∂θ_k` and `∂T2_j/∂θ_k` as sparse lists.
type Partials = (Vec<(usize, f64)>, Vec<(usize, f64)>);

impl Layout {
    fn n_params(&self) -> usize {
        match (self.shared.t1, self.shared.t2) {
            (true, true) => 2,
            (false, false) => 2 * self.n,
            _ => 1 + self.n,
        }
    }

    fn decode(&self, theta: &[f64]) -> Vec<((f64, f64), Partials)> {
        (0..self.n)
            .map(|j| match (self.shared.t1, self.shared.t2) {
                (false, true) => {
                    let t2 = theta[0].exp();
                    let e = theta[1 + j].exp();
                    let t1 = 0.5 * t2 * (1.0 + e);
                    ((t1, t2), (vec![(0, t1), (1 + j, 0.5 * t2 * e)], vec![(0, t2)]))
                }
                (s1, s2) => {
                    let (i1, i2) = match (s1, s2) {
                        (true, true) => (0, 1),
                        (true, false) => (0, 1 + j),
                        _ => (2 * j, 2 * j + 1),
                    };
                    let t1 = theta[i1].exp();
                    let s = logistic(theta[i2]);
                    let t2 = 2.0 * t1 * s;
                    ((t1, t2), (vec![(i1, t1)], vec![(i1, t2), (i2, 2.0 * t1 * s * (1.0 - s))]))
                }
            })
            .collect()
    }

    fn encode(&self, params: &[(f64, f64)]) -> Result<Vec<f64>> {
        if params.len() != self.n {
            return Err(Error::param("params", "one (T1, T2) pair per dataset is required"));
        }
        for &(t1, t2) in params {
            if !(t1 > 0.0 && t2 > 0.0 && t2 < 2.0 * t1) {
                return Err(Error::param("params", format!("need 0 < T2 < 2·T1, got ({t1}, {t2})")));
            }
        }
        let mut theta = vec![0.0; self.n_params()];
        match (self.shared.t1, self.shared.t2) {
            (false, true) => {
                let t2 = params[0].1;
                theta[0] = t2.ln();
                for (j, &(t1, _)) in params.iter().enumerate() {
                    theta[1 + j] = (2.0 * t1 / t2 - 1.0).max(1e-9).ln();
                }
            }
            (true, true) => {
                theta[0] = params[0].0.ln();
                theta[1] = logit(params[0].1 / (2.0 * params[0].0));
            }
            (true, false) => {
                theta[0] = params[0].0.ln();
                for (j, &(t1, t2)) in params.iter().enumerate() {
                    theta[1 + j] = logit(t2 / (2.0 * t1));
                }
            }
            (false, false) => {
                for (j, &(t1, t2)) in params.iter().enumerate() {
                    theta[2 * j] = t1.ln();
                    theta[2 * j + 1] = logit(t2 / (2.0 * t1));
                }
            }
        }
        Ok(theta)
    }
}

struct Objective<'a> {
    problem: &'a FitProblem,
}

impl Objective<'_> {
    fn check_theta(&self, theta: &DVector<f64>) -> Result<Vec<((f64, f64), Partials)>> {
        let layout = self.problem.layout();
        if theta.len() != layout.n_params() {
            return Err(Error::param("theta", format!("expected {} values", layout.n_params())));
        }
        let decoded = layout.decode(theta.as_slice());
        for ((t1, t2), _) in &decoded {
            if !(t1.is_finite() && t2.is_finite() && *t1 > 0.0 && *t2 > 0.0) {
                return Err(Error::Numerical("parameters left the representable range".into()));
            }
        }
        Ok(decoded)
    }
}

impl LeastSquares for Objective<'_> {
    fn n_params(&self) -> usize {
        self.problem.layout().n_params()
    }

    fn n_residuals(&self) -> usize {
        self.problem.n_residuals()
    }

    fn residuals(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let decoded = self.check_theta(theta)?;
        let mut r = Vec::with_capacity(self.n_residuals());
        for (ds, ((t1, t2), _)) in self.problem.datasets.iter().zip(&decoded) {
            for p in &ds.points {
                r.push((self.problem.model_value(p.tau_ps, *t1, *t2) - p.p) / p.sigma);
            }
        }
        Ok(DVector::from_vec(r))
    }

    fn jacobian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let decoded = self.check_theta(theta)?;
        let mut jac = DMatrix::zeros(self.n_residuals(), self.n_params());
        let mut row = 0;
        for (ds, ((t1, t2), (d1, d2))) in self.problem.datasets.iter().zip(&decoded) {
            for p in &ds.points {
                let (_, g1, g2) = self.problem.model_with_gradient(p.tau_ps, *t1, *t2);
                for &(k, v) in d1 {
                    jac[(row, k)] += g1 * v / p.sigma;
                }
                for &(k, v) in d2 {
                    jac[(row, k)] += g2 * v / p.sigma;
                }
                row += 1;
            }
        }
        Ok(jac)
    }
}

/// Bootstrap spread of the fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub resamples: usize,
    pub t1_std: Vec<f64>,
    pub t2_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// One lifetime per dataset.
    pub t1: Vec<f64>,
    /// One coherence time per dataset (repeated when shared).
    pub t2: Vec<f64>,
    pub t1_err: Vec<f64>,
    pub t2_err: Vec<f64>,
    /// Covariance of `T1_j` and `T2_j`.
    pub t1_t2_cov: Vec<f64>,
    pub chi2: f64,
    pub chi2_reduced: f64,
    pub converged: bool,
    pub n_iterations: usize,
    pub bootstrap: Option<BootstrapSummary>,
}

impl FitResult {
    pub fn indistinguishability(&self, dataset: usize) -> f64 {
        self.t2[dataset] / (2.0 * self.t1[dataset])
    }

    /// `P(0)` of one dataset with its propagated standard error.
    pub fn p_at_zero(&self, dataset: usize, bs: &BeamSplitter) -> (f64, f64) {
        let k = 0.5 * bs.visibility_factor();
        let (t1, t2) = (self.t1[dataset], self.t2[dataset]);
        let p = 0.5 - k * t2 / (2.0 * t1);
        let d1 = k * t2 / (2.0 * t1 * t1);
        let d2 = -k / (2.0 * t1);
        let var = d1 * d1 * self.t1_err[dataset].powi(2)
            + d2 * d2 * self.t2_err[dataset].powi(2)
            + 2.0 * d1 * d2 * self.t1_t2_cov[dataset];
        (p, var.max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    pub bootstrap_resamples: usize,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { bootstrap_resamples: 0, seed: 0 }
    }
}

/// Default resample count when a bootstrap is requested.
pub const BOOTSTRAP_RESAMPLES: usize = 200;

pub fn fit_coincidence_curve(problem: &FitProblem) -> Result<FitResult> {
    fit_coincidence_curve_with(problem, &FitOptions::default())
}

pub fn fit_coincidence_curve_with(problem: &FitProblem, options: &FitOptions) -> Result<FitResult> {
    problem.validate()?;
    let start = problem.starting_point();
    let theta0 = problem.layout().encode(&start)?;
    let outcome = run(problem, DVector::from_vec(theta0))?;
    let mut result = summarize(problem, &outcome)?;
    if options.bootstrap_resamples > 0 {
        result.bootstrap = Some(bootstrap(problem, &outcome, options)?);
    }
    Ok(result)
}

fn run(problem: &FitProblem, theta0: DVector<f64>) -> Result<lm::LmOutcome> {
    lm::minimize(&Objective { problem }, theta0)
}

fn summarize(problem: &FitProblem, outcome: &lm::LmOutcome) -> Result<FitResult> {
    let layout = problem.layout();
    let decoded = layout.decode(outcome.theta.as_slice());
    let cov = lm::covariance(&outcome.jacobian);
    if !cov.iter().all(|v| v.is_finite()) {
        return Err(Error::Unidentifiable("curvature matrix is not invertible".into()));
    }
    let mut t1 = Vec::new();
    let mut t2 = Vec::new();
    let mut t1_err = Vec::new();
    let mut t2_err = Vec::new();
    let covar = |x: &[(usize, f64)], y: &[(usize, f64)]| {
        let mut v = 0.0;
        for &(a, da) in x {
            for &(b, db) in y {
                v += da * db * cov[(a, b)];
            }
        }
        v
    };
    let mut t1_t2_cov = Vec::new();
    for ((a, b), (d1, d2)) in &decoded {
        if *a > T1_MAX_PS {
            return Err(Error::Unidentifiable(format!(
                "fitted T1 = {a} ps exceeds the {T1_MAX_PS} ps bound"
            )));
        }
        t1.push(*a);
        t2.push(*b);
        t1_err.push(covar(d1, d1).max(0.0).sqrt());
        t2_err.push(covar(d2, d2).max(0.0).sqrt());
        t1_t2_cov.push(covar(d1, d2));
    }
    let dof = problem.n_residuals().saturating_sub(layout.n_params()).max(1);
    Ok(FitResult {
        t1,
        t2,
        t1_err,
        t2_err,
        t1_t2_cov,
        chi2: outcome.chi2,
        chi2_reduced: outcome.chi2 / dof as f64,
        converged: outcome.converged,
        n_iterations: outcome.iterations,
        bootstrap: None,
    })
}

/// Residual bootstrap: whitened residuals are resampled with replacement,
/// added back to the fitted curve, and the fit is repeated from the optimum.
fn bootstrap(problem: &FitProblem, outcome: &lm::LmOutcome, options: &FitOptions) -> Result<BootstrapSummary> {
    let obj = Objective { problem };
    let residuals = obj.residuals(&outcome.theta)?;
    let decoded = problem.layout().decode(outcome.theta.as_slice());
    let fitted: Vec<Vec<f64>> = problem
        .datasets
        .iter()
        .zip(&decoded)
        .map(|(ds, ((t1, t2), _))| ds.points.iter().map(|p| problem.model_value(p.tau_ps, *t1, *t2)).collect())
        .collect();
    let n_res = residuals.len();
    let samples: Vec<Vec<(f64, f64)>> = (0..options.bootstrap_resamples as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(options.seed, Domain::Bootstrap, b);
            let mut resampled = problem.clone();
            for (ds, model) in resampled.datasets.iter_mut().zip(&fitted) {
                for (p, m) in ds.points.iter_mut().zip(model) {
                    let e = residuals[rng.random_range(0..n_res)];
                    p.p = m + e * p.sigma;
                }
            }
            let out = run(&resampled, outcome.theta.clone())?;
            Ok(resampled.layout().decode(out.theta.as_slice()).into_iter().map(|(p, _)| p).collect())
        })
        .collect::<Result<_>>()?;
    let n = samples.len() as f64;
    let spread = |f: &dyn Fn(&(f64, f64)) -> f64, j: usize| {
        let vals: Vec<f64> = samples.iter().map(|s| f(&s[j])).collect();
        let mean = vals.iter().sum::<f64>() / n;
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
    };
    let m = problem.datasets.len();
    Ok(BootstrapSummary {
        resamples: samples.len(),
        t1_std: (0..m).map(|j| spread(&|p| p.0, j)).collect(),
        t2_std: (0..m).map(|j| spread(&|p| p.1, j)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{coincidence_probability, EmitterParams};

    fn synthetic(t1: f64, t2: f64, n: usize, span: f64) -> Dataset {
        let e = EmitterParams::ideal(t1, t2).unwrap();
        let bs = BeamSplitter::balanced();
        let points = (0..n)
            .map(|i| {
                let tau = -span + 2.0 * span * i as f64 / (n - 1) as f64;
                DataPoint { tau_ps: tau, p: coincidence_probability(tau, &e, &bs), sigma: 0.01 }
            })
            .collect();
        Dataset::new("synthetic", points)
    }

    #[test]
    fn noiseless_round_trip() {
        let r = fit_coincidence_curve(&FitProblem::single(synthetic(800.0, 450.0, 15, 2000.0))).unwrap();
        assert!(r.converged);
        assert!((r.t1[0] / 800.0 - 1.0).abs() < 1e-3, "{:?}", r);
        assert!((r.t2[0] / 450.0 - 1.0).abs() < 1e-3, "{:?}", r);
    }

    #[test]
    fn joint_round_trip_shares_t2() {
        let p = FitProblem::joint_t2(vec![synthetic(375.0, 270.0, 15, 1500.0), synthetic(220.0, 270.0, 15, 1500.0)]);
        let r = fit_coincidence_curve(&p).unwrap();
        assert!((r.t1[0] / 375.0 - 1.0).abs() < 1e-4);
        assert!((r.t1[1] / 220.0 - 1.0).abs() < 1e-4);
        assert!((r.t2[0] / 270.0 - 1.0).abs() < 1e-4);
        assert_eq!(r.t2[0], r.t2[1]);
    }

    #[test]
    fn coordinates_round_trip() {
        for shared in [SharedParameters::NONE, SharedParameters::T2] {
            let mut p = FitProblem::joint_t2(vec![synthetic(375.0, 270.0, 6, 1500.0), synthetic(220.0, 270.0, 6, 1500.0)]);
            p.shared = shared;
            let params = [(375.0, 270.0), (220.0, 270.0)];
            let theta = p.to_fit_coordinates(&params).unwrap();
            for (a, b) in p.from_fit_coordinates(&theta).iter().zip(params) {
                assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn far_delays_are_unidentifiable() {
        let mut ds = synthetic(800.0, 450.0, 6, 2000.0);
        for (i, p) in ds.points.iter_mut().enumerate() {
            p.tau_ps = 6e5 + i as f64;
            p.p = 0.5;
        }
        assert!(matches!(
            fit_coincidence_curve(&FitProblem::single(ds)),
            Err(Error::Unidentifiable(_))
        ));
    }

    #[test]
    fn too_few_points() {
        let ds = synthetic(800.0, 450.0, 3, 2000.0);
        assert!(fit_coincidence_curve(&FitProblem::single(ds)).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = FitProblem::single(synthetic(800.0, 450.0, 15, 2000.0));
        let theta = p.to_fit_coordinates(&[(650.0, 500.0)]).unwrap();
        let g = p.objective_gradient(&theta).unwrap();
        for k in 0..theta.len() {
            let h = 1e-5;
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (p.objective(&up).unwrap() - p.objective(&dn).unwrap()) / (2.0 * h);
            assert!((g[k] - fd).abs() <= 1e-6 * fd.abs().max(1e-3), "{k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn convolved_model_reduces_to_plain_for_sharp_irf() {
        let mut p = FitProblem::single(synthetic(375.0, 270.0, 6, 1500.0));
        let plain = p.model_value(100.0, 375.0, 270.0);
        p.model = CurveModel::Eq2ConvolvedIRF(DetectorIRF::new(0.1).unwrap());
        assert!((p.model_value(100.0, 375.0, 270.0) - plain).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_is_reproducible() {
        let p = FitProblem::single(synthetic(800.0, 450.0, 15, 2000.0));
        let opts = FitOptions { bootstrap_resamples: 20, seed: 4 };
        let a = fit_coincidence_curve_with(&p, &opts).unwrap();
        let b = fit_coincidence_curve_with(&p, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bootstrap.unwrap().resamples, 20);
    }
}
