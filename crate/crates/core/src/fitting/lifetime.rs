//! Maximum-likelihood lifetime from arrival times.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

pub const MIN_SAMPLES: usize = 100;
/// Mass kept on each side: the fit uses the 5%..95% quantile window.
const TAIL_MASS: f64 = 0.05;
const SHAPE_BINS: usize = 20;
/// Below this p-value the exponential shape is flagged as inconsistent.
pub const SHAPE_P_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    pub lifetime_ps: f64,
    pub std_err_ps: f64,
    pub window_start_ps: f64,
    pub window_len_ps: f64,
    pub n_used: usize,
    pub chi2: f64,
    pub shape_p_value: f64,
    /// False when a 20-bin χ² test rejects the exponential shape.
    pub shape_consistent: bool,
}

/// Mean of an exponential with rate `lambda` truncated to `[0, l]`.
fn truncated_mean(lambda: f64, l: f64) -> f64 {
    let x = lambda * l;
    if x < 1e-6 {
        l / 2.0 - lambda * l * l / 12.0
    } else {
        1.0 / lambda - l / x.exp_m1()
    }
}

fn truncated_variance(lambda: f64, l: f64) -> f64 {
    let x = lambda * l;
    if x < 1e-4 {
        l * l / 12.0
    } else {
        let s = (x / 2.0).sinh();
        1.0 / (lambda * lambda) - l * l / (4.0 * s * s)
    }
}

/// Fits a single exponential to the central 90% of `samples`.
///
/// Rejects data that show no decay across the window (flat or rising
/// distributions, or a lifetime more than ten window lengths).
pub fn fit_exponential_lifetime(samples: &[f64]) -> Result<LifetimeFit> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::InsufficientStatistics(format!(
            "{} arrival times, need at least {MIN_SAMPLES}",
            samples.len()
        )));
    }
    if samples.iter().any(|t| !t.is_finite()) {
        return Err(Error::param("samples", "non-finite arrival time"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((p * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)];
    let (lo, hi) = (q(TAIL_MASS), q(1.0 - TAIL_MASS));
    let l = hi - lo;
    if !(l > 0.0) {
        return Err(Error::ModelMismatch("arrival times have no spread".into()));
    }
    let used: Vec<f64> = sorted.iter().filter(|&&t| t >= lo && t <= hi).map(|t| t - lo).collect();
    let n = used.len();
    let mean = used.iter().sum::<f64>() / n as f64;
    if mean >= l / 2.0 {
        return Err(Error::ModelMismatch(format!(
            "no decay: mean {mean:.3} ps within a {l:.3} ps window is not below its midpoint"
        )));
    }
    // truncated_mean falls monotonically from l/2 to 0 as λ grows
    let (mut a, mut b) = (0.0f64, 1.0 / l);
    while truncated_mean(b, l) > mean {
        b *= 2.0;
        if b > 1e12 / l {
            return Err(Error::Numerical("lifetime bracket diverged".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if truncated_mean(mid, l) > mean {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= 1e-15 * b {
            break;
        }
    }
    let lambda = 0.5 * (a + b);
    let tau = 1.0 / lambda;
    if tau > 10.0 * l {
        return Err(Error::ModelMismatch(format!(
            "no decay: fitted lifetime {tau:.1} ps exceeds ten window lengths ({l:.1} ps)"
        )));
    }
    let sigma_lambda = 1.0 / (n as f64 * truncated_variance(lambda, l)).sqrt();

    let width = l / SHAPE_BINS as f64;
    let mut observed = [0u64; SHAPE_BINS];
    for &x in &used {
        observed[((x / width) as usize).min(SHAPE_BINS - 1)] += 1;
    }
    let norm = -(-lambda * l).exp_m1();
    let chi2: f64 = observed
        .iter()
        .enumerate()
        .map(|(i, &o)| {
            let p = ((-lambda * i as f64 * width).exp() - (-lambda * (i + 1) as f64 * width).exp()) / norm;
            let e = p * n as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((SHAPE_BINS - 2) as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    let p_value = 1.0 - dist.cdf(chi2);
    Ok(LifetimeFit {
        lifetime_ps: tau,
        std_err_ps: sigma_lambda * tau * tau,
        window_start_ps: lo,
        window_len_ps: l,
        n_used: n,
        chi2,
        shape_p_value: p_value,
        shape_consistent: p_value >= SHAPE_P_THRESHOLD,
    })
}
