//! Shape of peak A as a function of the detection-time difference.
//!
//! For photons triggered together, opposite-port coincidences at detection
//! time difference `Δ` follow
//!
//! ```text
//! G(Δ) = exp(-|Δ|/T1) - w·exp(-2|Δ|/T2)
//! ```
//!
//! where the second term is the two-photon interference and `w` its weight
//! (1 for ideal parallel polarization, 0 for orthogonal). The fitted model is
//! `N·G` convolved with a Gaussian timing response and averaged over each bin.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{self, LeastSquares};
use crate::error::{Error, Result};
use crate::shaping::DetectorIRF;
use crate::special::laplace_gauss;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DipMode {
    Parallel,
    Orthogonal,
}

/// Histogram counts around peak A, delays relative to the peak center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipData {
    pub bin_width_ps: f64,
    pub points: Vec<(f64, f64)>,
}

/// Expected `G ⊛ IRF` at `delta`, averaged over a bin by Simpson's rule.
pub fn dip_profile(delta: f64, t1: f64, t2: f64, weight: f64, irf_sigma: f64, bin_width: f64) -> f64 {
    let g = |x: f64| laplace_gauss(1.0 / t1, irf_sigma, x) - weight * laplace_gauss(2.0 / t2, irf_sigma, x);
    let h = 0.5 * bin_width;
    (g(delta - h) + 4.0 * g(delta) + g(delta + h)) / 6.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipFit {
    pub mode: DipMode,
    /// Counts per ps at `Δ → 0` without interference.
    pub amplitude: f64,
    pub t1: f64,
    pub t1_err: f64,
    pub t2: Option<f64>,
    pub t2_err: Option<f64>,
    pub weight: Option<f64>,
    pub weight_err: Option<f64>,
    pub chi2: f64,
    pub chi2_reduced: f64,
    pub converged: bool,
    pub n_iterations: usize,
}

/// Starting values for the fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipGuess {
    pub t1: f64,
    pub t2: f64,
}

struct DipObjective<'a> {
    data: &'a DipData,
    mode: DipMode,
    irf_sigma: f64,
}

impl DipObjective<'_> {
    fn decode(&self, theta: &[f64]) -> (f64, f64, f64, f64) {
        let n = theta[0].exp();
        let t1 = theta[1].exp();
        match self.mode {
            DipMode::Orthogonal => (n, t1, t1, 0.0),
            DipMode::Parallel => {
                let s = 1.0 / (1.0 + (-theta[2]).exp());
                (n, t1, 2.0 * t1 * s, theta[3])
            }
        }
    }

    fn expected(&self, theta: &[f64]) -> Vec<f64> {
        let (n, t1, t2, w) = self.decode(theta);
        let b = self.data.bin_width_ps;
        self.data
            .points
            .iter()
            .map(|(x, _)| n * b * dip_profile(*x, t1, t2, w, self.irf_sigma, b))
            .collect()
    }
}

impl LeastSquares for DipObjective<'_> {
    fn n_params(&self) -> usize {
        match self.mode {
            DipMode::Orthogonal => 2,
            DipMode::Parallel => 4,
        }
    }

    fn n_residuals(&self) -> usize {
        self.data.points.len()
    }

    fn residuals(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.expected(theta.as_slice());
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("dip model is not finite".into()));
        }
        Ok(DVector::from_iterator(
            m.len(),
            m.iter().zip(&self.data.points).map(|(m, (_, c))| (m - c) / c.max(1.0).sqrt()),
        ))
    }

    fn jacobian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        lm::numeric_jacobian(|t| self.residuals(t), theta, self.n_residuals())
    }
}

/// Fits the peak-A profile. The data must extend to at least `±3·T1`
/// (judged with the starting lifetime).
pub fn fit_dip_shape(
    data: &DipData,
    guess: DipGuess,
    irf: Option<&DetectorIRF>,
    mode: DipMode,
) -> Result<DipFit> {
    if !(data.bin_width_ps > 0.0) {
        return Err(Error::param("bin_width", "must be > 0"));
    }
    if !(guess.t1 > 0.0 && guess.t2 > 0.0 && guess.t2 <= 2.0 * guess.t1) {
        return Err(Error::param("guess", "need 0 < T2 <= 2·T1"));
    }
    let lo = data.points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = data.points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let need = 3.0 * guess.t1 - data.bin_width_ps;
    if data.points.is_empty() || lo > -need || hi < need {
        return Err(Error::WindowOutOfRange(format!(
            "slice [{lo}, {hi}] ps does not cover ±3·T1 = ±{} ps",
            3.0 * guess.t1
        )));
    }
    let irf_sigma = irf.map(|i| i.sigma()).unwrap_or(0.0);
    let obj = DipObjective { data, mode, irf_sigma };

    let total: f64 = data.points.iter().map(|p| p.1).sum();
    let mut theta = vec![0.0, guess.t1.ln()];
    if mode == DipMode::Parallel {
        let s = (guess.t2 / (2.0 * guess.t1)).clamp(0.02, 0.98);
        theta.push((s / (1.0 - s)).ln());
        theta.push(0.5);
    }
    let shape_sum: f64 = {
        let probe = DVector::from_vec(theta.clone());
        obj.expected(probe.as_slice()).iter().sum()
    };
    if !(total > 0.0 && shape_sum > 0.0) {
        return Err(Error::InsufficientStatistics("no counts in the slice".into()));
    }
    theta[0] = (total / shape_sum).ln();

    let out = lm::minimize(&obj, DVector::from_vec(theta))?;
    let cov = lm::covariance(&out.jacobian);
    let (n, t1, t2, w) = obj.decode(out.theta.as_slice());
    let dof = data.points.len().saturating_sub(obj.n_params()).max(1);
    let sd = |k: usize| cov[(k, k)].max(0.0).sqrt();
    let mut fit = DipFit {
        mode,
        amplitude: n,
        t1,
        t1_err: t1 * sd(1),
        t2: None,
        t2_err: None,
        weight: None,
        weight_err: None,
        chi2: out.chi2,
        chi2_reduced: out.chi2 / dof as f64,
        converged: out.converged,
        n_iterations: out.iterations,
    };
    if mode == DipMode::Parallel {
        let s = t2 / (2.0 * t1);
        // T2 = 2·T1·s(θ2): propagate both log-lifetime and logit terms
        let d1 = t2;
        let d2 = 2.0 * t1 * s * (1.0 - s);
        let var = d1 * d1 * cov[(1, 1)] + d2 * d2 * cov[(2, 2)] + 2.0 * d1 * d2 * cov[(1, 2)];
        fit.t2 = Some(t2);
        fit.t2_err = Some(var.max(0.0).sqrt());
        fit.weight = Some(w);
        fit.weight_err = Some(sd(3));
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(t1: f64, t2: f64, w: f64, irf: Option<&DetectorIRF>, scale: f64) -> DipData {
        let b = 10.0;
        let sigma = irf.map(|i| i.sigma()).unwrap_or(0.0);
        let points = (-200..200)
            .map(|i| {
                let x = (i as f64 + 0.5) * b;
                (x, scale * b * dip_profile(x, t1, t2, w, sigma, b))
            })
            .collect();
        DipData { bin_width_ps: b, points }
    }

    #[test]
    fn parallel_round_trip() {
        let d = synthetic(375.0, 270.0, 1.0, None, 100.0);
        let f = fit_dip_shape(&d, DipGuess { t1: 300.0, t2: 300.0 }, None, DipMode::Parallel).unwrap();
        assert!((f.t1 / 375.0 - 1.0).abs() < 1e-4, "{f:?}");
        assert!((f.t2.unwrap() / 270.0 - 1.0).abs() < 1e-4, "{f:?}");
        assert!((f.weight.unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn orthogonal_has_no_dip() {
        let d = synthetic(375.0, 270.0, 0.0, None, 100.0);
        let f = fit_dip_shape(&d, DipGuess { t1: 300.0, t2: 300.0 }, None, DipMode::Orthogonal).unwrap();
        assert!((f.t1 / 375.0 - 1.0).abs() < 1e-4);
        assert!(f.weight.is_none());
    }

    #[test]
    fn narrow_slice_is_rejected() {
        let mut d = synthetic(375.0, 270.0, 1.0, None, 100.0);
        d.points.retain(|p| p.0.abs() < 500.0);
        assert!(matches!(
            fit_dip_shape(&d, DipGuess { t1: 375.0, t2: 270.0 }, None, DipMode::Parallel),
            Err(Error::WindowOutOfRange(_))
        ));
    }

    #[test]
    fn irf_raises_the_minimum() {
        let irf = DetectorIRF::new(35.0).unwrap();
        let sharp = dip_profile(0.0, 375.0, 270.0, 1.0, 0.0, 1.0);
        let blurred = dip_profile(0.0, 375.0, 270.0, 1.0, irf.sigma(), 1.0);
        assert!(blurred > sharp);
    }
}
