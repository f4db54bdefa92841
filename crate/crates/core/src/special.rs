use statrs::function::erf::erfc;

/// Scaled complementary error function `exp(z²)·erfc(z)`.
pub(crate) fn erfcx(z: f64) -> f64 {
    if z < 25.0 {
        (z * z).exp() * erfc(z)
    } else {
        // asymptotic series; relative error below 1e-12 for z >= 25
        let z2 = z * z;
        let inv = 1.0 / (2.0 * z2);
        (1.0 - inv + 3.0 * inv * inv - 15.0 * inv * inv * inv) / (z * std::f64::consts::PI.sqrt())
    }
}

/// Two-sided exponential `exp(-λ|x|)` convolved with a unit-area centred
/// Gaussian of standard deviation `sigma`.
pub(crate) fn laplace_gauss(lambda: f64, sigma: f64, x: f64) -> f64 {
    if sigma <= 0.0 {
        return (-lambda * x.abs()).exp();
    }
    let s2 = std::f64::consts::SQRT_2 * sigma;
    let half = |x: f64| {
        // exp(λ²σ²/2 - λx)·erfc((λσ² - x)/(σ√2))
        let z = (lambda * sigma * sigma - x) / s2;
        if z > 0.0 {
            (-(x * x) / (2.0 * sigma * sigma)).exp() * erfcx(z)
        } else {
            (lambda * lambda * sigma * sigma / 2.0 - lambda * x).exp() * erfc(z)
        }
    };
    0.5 * (half(x) + half(-x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfcx_is_continuous_at_switch() {
        let a = erfcx(25.0 - 1e-9);
        let b = erfcx(25.0 + 1e-9);
        assert!((a - b).abs() / a < 1e-10, "{a} {b}");
        assert!((erfcx(0.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn laplace_gauss_matches_quadrature() {
        let (lambda, sigma) = (1.0 / 375.0, 35.0 / 2.354_820_045);
        for x in [-400.0, -30.0, 0.0, 12.0, 150.0, 2000.0] {
            let n = 20_000;
            let lim = 10.0 * sigma;
            let h = 2.0 * lim / n as f64;
            let mut acc = 0.0;
            for i in 0..=n {
                let u = -lim + i as f64 * h;
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                let g = (-(u * u) / (2.0 * sigma * sigma)).exp()
                    / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                acc += w * g * (-lambda * (x - u).abs()).exp();
            }
            acc *= h;
            let got = laplace_gauss(lambda, sigma, x);
            assert!((got - acc).abs() < 1e-8, "x={x}: {got} vs {acc}");
        }
    }
}
