//! Damped Gauss-Newton (Levenberg-Marquardt) for weighted least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) const MAX_ITERATIONS: usize = 500;
pub(crate) const PARAM_TOLERANCE: f64 = 1e-8;

/// Whitened residuals `r_i = (model_i - data_i)/σ_i` and their Jacobian.
pub(crate) trait LeastSquares {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    fn residuals(&self, theta: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>>;
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub theta: DVector<f64>,
    pub chi2: f64,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn minimize<P: LeastSquares + ?Sized>(problem: &P, theta0: DVector<f64>) -> Result<LmOutcome> {
    let mut theta = theta0;
    let mut r = problem.residuals(&theta)?;
    let mut chi2 = r.norm_squared();
    if !chi2.is_finite() {
        return Err(Error::Numerical("objective is not finite at the starting point".into()));
    }
    let mut jac = problem.jacobian(&theta)?;
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&(-&grad)),
                None => match a.lu().solve(&(-&grad)) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                },
            };
            let trial = &theta + &step;
            let r_trial = match problem.residuals(&trial) {
                Ok(v) => v,
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let chi2_trial = r_trial.norm_squared();
            if chi2_trial.is_finite() && chi2_trial <= chi2 {
                let small = step.norm() <= PARAM_TOLERANCE * (theta.norm() + PARAM_TOLERANCE);
                theta = trial;
                r = r_trial;
                chi2 = chi2_trial;
                jac = problem.jacobian(&theta)?;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // no downhill step at any damping: stationary to working precision
            converged = true;
            break;
        }
    }
    Ok(LmOutcome { theta, chi2, jacobian: jac, iterations, converged })
}

/// `(JᵀJ)⁻¹`, falling back to the pseudo-inverse when singular.
pub(crate) fn covariance(jac: &DMatrix<f64>) -> DMatrix<f64> {
    let jtj = jac.transpose() * jac;
    if let Some(inv) = jtj.clone().try_inverse() {
        if inv.iter().all(|v| v.is_finite()) && (0..inv.nrows()).all(|k| inv[(k, k)] >= 0.0) {
            return inv;
        }
    }
    jtj.pseudo_inverse(1e-12)
        .unwrap_or_else(|_| DMatrix::from_element(jac.ncols(), jac.ncols(), f64::NAN))
}

/// Central-difference Jacobian.
pub(crate) fn numeric_jacobian<F>(f: F, theta: &DVector<f64>, m: usize) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut jac = DMatrix::zeros(m, theta.len());
    for k in 0..theta.len() {
        let h = 1e-6 * theta[k].abs().max(1.0);
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[k] += h;
        dn[k] -= h;
        let d = (f(&up)? - f(&dn)?) / (2.0 * h);
        jac.set_column(k, &d);
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Line {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquares for Line {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            self.x.len()
        }
        fn residuals(&self, t: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(DVector::from_iterator(
                self.x.len(),
                self.x.iter().zip(&self.y).map(|(x, y)| t[0] * (t[1] * x).exp() - y),
            ))
        }
        fn jacobian(&self, t: &DVector<f64>) -> Result<DMatrix<f64>> {
            numeric_jacobian(|t| self.residuals(t), t, self.x.len())
        }
    }

    #[test]
    fn recovers_exponential() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|x| 2.5 * (-1.3 * x).exp()).collect();
        let p = Line { x, y };
        let out = minimize(&p, DVector::from_vec(vec![1.0, -0.2])).unwrap();
        assert!(out.converged);
        assert!((out.theta[0] - 2.5).abs() < 1e-7);
        assert!((out.theta[1] + 1.3).abs() < 1e-7);
        assert_eq!(p.n_params(), out.theta.len());
    }
}
