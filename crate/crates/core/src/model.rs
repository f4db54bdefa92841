//! Domain types and the closed-form two-photon coincidence model.
//!
//! The coincidence probability for photons with exponential lifetime `T1` and
//! exponential coherence time `T2` (pure dephasing) arriving with delay `τ` on
//! a splitter with reflectance `R` and transmittance `T` is
//!
//! ```text
//! P(τ) = 1/2 - 1/2 · 2RT/(1-2RT) · V(τ)
//! V(τ) = T2/(2T1-T2) · [exp(-2|τ|/T1) - T2/(2T1) · exp(-4|τ|/T2)]
//! ```
//!
//! `V` is evaluated in the regrouped form
//! `V = r·exp(-a)·(1 + a·φ(x))` with `r = T2/(2T1)`, `a = 2|τ|/T1`,
//! `x = 4|τ|/T2 - 2|τ|/T1` and `φ(x) = (1 - exp(-x))/x`, which is exact and has
//! no `0/0` at `T2 = 2T1`.

use nalgebra::Complex;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radiative lifetime of the biexciton feeding the exciton in the cascade.
pub const BIEXCITON_CASCADE_LIFETIME_PS: f64 = 370.0;
/// Phonon relaxation step of quasi-resonant pumping.
pub const QUASI_RESONANT_RELAXATION_PS: f64 = 3.0;
/// Relaxation jitter assumed for above-band pumping. Not a measured value.
pub const ABOVE_BAND_JITTER_PS: f64 = 1000.0;
/// Laser pulse length before the stretcher.
pub const DEFAULT_PUMP_PULSE_PS: f64 = 2.5;

/// Random delay between the excitation trigger and the start of emission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum JitterModel {
    #[default]
    None,
    Gaussian { sigma_ps: f64 },
    Exponential { tau_ps: f64 },
}

impl JitterModel {
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            JitterModel::None => return Ok(()),
            JitterModel::Gaussian { sigma_ps } => ("jitter.sigma_ps", sigma_ps),
            JitterModel::Exponential { tau_ps } => ("jitter.tau_ps", tau_ps),
        };
        if v.is_finite() && v >= 0.0 {
            Ok(())
        } else {
            Err(Error::param(name, format!("must be finite and >= 0, got {v}")))
        }
    }

    /// True when every draw is exactly zero.
    pub fn is_trivial(&self) -> bool {
        match *self {
            JitterModel::None => true,
            JitterModel::Gaussian { sigma_ps } => sigma_ps == 0.0,
            JitterModel::Exponential { tau_ps } => tau_ps == 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            _ if self.is_trivial() => 0.0,
            JitterModel::Gaussian { sigma_ps } => {
                Normal::new(0.0, sigma_ps).expect("validated sigma").sample(rng)
            }
            JitterModel::Exponential { tau_ps } => {
                Exp::new(1.0 / tau_ps).expect("validated tau").sample(rng)
            }
            JitterModel::None => 0.0,
        }
    }

    /// Standard deviation of the delay distribution.
    pub fn std_dev(&self) -> f64 {
        match *self {
            JitterModel::None => 0.0,
            JitterModel::Gaussian { sigma_ps } => sigma_ps,
            JitterModel::Exponential { tau_ps } => tau_ps,
        }
    }
}

/// Which quantum-dot transition the detected photon comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EmissionLine {
    #[default]
    Exciton,
    Biexciton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExcitationScheme {
    AboveBand,
    QuasiResonant,
    TwoPhotonResonant,
}

impl ExcitationScheme {
    /// Default emission-time jitter for this pumping scheme.
    ///
    /// `pump_pulse_ps` only matters for the directly pumped biexciton, whose
    /// emission cannot start before the pump pulse has passed.
    pub fn jitter_preset(&self, line: EmissionLine, pump_pulse_ps: f64) -> JitterModel {
        match (self, line) {
            (ExcitationScheme::AboveBand, _) => {
                JitterModel::Gaussian { sigma_ps: ABOVE_BAND_JITTER_PS }
            }
            (ExcitationScheme::QuasiResonant, _) => {
                JitterModel::Gaussian { sigma_ps: QUASI_RESONANT_RELAXATION_PS }
            }
            (ExcitationScheme::TwoPhotonResonant, EmissionLine::Exciton) => {
                JitterModel::Exponential { tau_ps: BIEXCITON_CASCADE_LIFETIME_PS }
            }
            (ExcitationScheme::TwoPhotonResonant, EmissionLine::Biexciton) => {
                JitterModel::Gaussian { sigma_ps: pump_pulse_ps }
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ExcitationScheme::AboveBand => "above-band",
            ExcitationScheme::QuasiResonant => "quasi-resonant",
            ExcitationScheme::TwoPhotonResonant => "two-photon-resonant",
        }
    }
}

/// Physical description of the single-photon source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterParams {
    t1: f64,
    t2: f64,
    jitter: JitterModel,
    efficiency: f64,
}

impl EmitterParams {
    /// Lifetime and coherence time in ps. Rejects `T2 > 2·T1`.
    pub fn new(t1_ps: f64, t2_ps: f64, jitter: JitterModel, efficiency: f64) -> Result<Self> {
        if !(t1_ps.is_finite() && t1_ps > 0.0) {
            return Err(Error::param("t1", format!("must be > 0, got {t1_ps}")));
        }
        if !(t2_ps.is_finite() && t2_ps > 0.0) {
            return Err(Error::param("t2", format!("must be > 0, got {t2_ps}")));
        }
        if t2_ps > 2.0 * t1_ps * (1.0 + 1e-12) {
            return Err(Error::param(
                "t2",
                format!("T2 = {t2_ps} ps exceeds the physical bound 2·T1 = {} ps", 2.0 * t1_ps),
            ));
        }
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::param(
                "emission_efficiency",
                format!("must lie in [0, 1], got {efficiency}"),
            ));
        }
        jitter.validate()?;
        Ok(Self { t1: t1_ps, t2: t2_ps.min(2.0 * t1_ps), jitter, efficiency })
    }

    /// Jitter-free emitter with unit efficiency.
    pub fn ideal(t1_ps: f64, t2_ps: f64) -> Result<Self> {
        Self::new(t1_ps, t2_ps, JitterModel::None, 1.0)
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn t2(&self) -> f64 {
        self.t2
    }

    pub fn jitter(&self) -> JitterModel {
        self.jitter
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    pub fn with_jitter(mut self, jitter: JitterModel) -> Result<Self> {
        jitter.validate()?;
        self.jitter = jitter;
        Ok(self)
    }

    pub fn with_efficiency(self, efficiency: f64) -> Result<Self> {
        Self::new(self.t1, self.t2, self.jitter, efficiency)
    }

    /// Pure-dephasing rate `γ* = 1/T2 - 1/(2·T1)` in 1/ps.
    pub fn pure_dephasing_rate(&self) -> f64 {
        (1.0 / self.t2 - 0.5 / self.t1).max(0.0)
    }
}

/// Lossless splitter, `R + T = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSplitter {
    reflectance: f64,
    transmittance: f64,
}

impl BeamSplitter {
    pub fn new(reflectance: f64, transmittance: f64) -> Result<Self> {
        if !(reflectance >= 0.0 && transmittance >= 0.0) {
            return Err(Error::param("beamsplitter", "R and T must be >= 0"));
        }
        if (reflectance + transmittance - 1.0).abs() > 1e-9 {
            return Err(Error::param(
                "beamsplitter",
                format!("R + T must equal 1, got {}", reflectance + transmittance),
            ));
        }
        Ok(Self { reflectance, transmittance: 1.0 - reflectance })
    }

    pub fn from_reflectance(reflectance: f64) -> Result<Self> {
        Self::new(reflectance, 1.0 - reflectance)
    }

    pub fn balanced() -> Self {
        Self { reflectance: 0.5, transmittance: 0.5 }
    }

    pub fn reflectance(&self) -> f64 {
        self.reflectance
    }

    pub fn transmittance(&self) -> f64 {
        self.transmittance
    }

    /// `2RT/(1-2RT)`, unity for a balanced splitter.
    pub fn visibility_factor(&self) -> f64 {
        let rt2 = 2.0 * self.reflectance * self.transmittance;
        rt2 / (1.0 - rt2)
    }

    /// Range over which the closed-form normalization is meaningful.
    pub fn is_near_balanced(&self) -> bool {
        (0.3..=0.7).contains(&self.reflectance)
    }
}

/// Pump and analysis interferometer delays and the laser period, in ps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterferometerGeometry {
    pump_delay: f64,
    hom_delay: f64,
    rep_period: f64,
    integration_halfwidth: f64,
}

impl InterferometerGeometry {
    pub fn new(
        pump_delay_ps: f64,
        hom_delay_ps: f64,
        rep_period_ps: f64,
        integration_halfwidth_ps: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("pump_delay", pump_delay_ps),
            ("hom_delay", hom_delay_ps),
            ("rep_period", rep_period_ps),
            ("integration_halfwidth", integration_halfwidth_ps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGeometry(format!("{name} must be > 0, got {v}")));
            }
        }
        let limit = pump_delay_ps.min(hom_delay_ps).min(rep_period_ps - 2.0 * hom_delay_ps) / 2.0;
        if integration_halfwidth_ps >= limit {
            return Err(Error::InvalidGeometry(format!(
                "integration_halfwidth {integration_halfwidth_ps} ps must be below \
                 min(pump_delay, hom_delay, rep_period - 2·hom_delay)/2 = {limit} ps"
            )));
        }
        Ok(Self {
            pump_delay: pump_delay_ps,
            hom_delay: hom_delay_ps,
            rep_period: rep_period_ps,
            integration_halfwidth: integration_halfwidth_ps,
        })
    }

    /// Geometry with boundary units: delays in ns, repetition rate in MHz.
    pub fn from_ns(
        pump_delay_ns: f64,
        hom_delay_ns: f64,
        rep_rate_mhz: f64,
        integration_halfwidth_ns: f64,
    ) -> Result<Self> {
        Self::new(
            pump_delay_ns * 1e3,
            hom_delay_ns * 1e3,
            1e6 / rep_rate_mhz,
            integration_halfwidth_ns * 1e3,
        )
    }

    pub fn pump_delay(&self) -> f64 {
        self.pump_delay
    }

    pub fn hom_delay(&self) -> f64 {
        self.hom_delay
    }

    pub fn rep_period(&self) -> f64 {
        self.rep_period
    }

    pub fn integration_halfwidth(&self) -> f64 {
        self.integration_halfwidth
    }

    pub fn with_integration_halfwidth(&self, halfwidth_ps: f64) -> Result<Self> {
        Self::new(self.pump_delay, self.hom_delay, self.rep_period, halfwidth_ps)
    }

    /// Arrival-time mismatch of the interfering photons, `pump_delay - hom_delay`.
    pub fn photon_delay(&self) -> f64 {
        self.pump_delay - self.hom_delay
    }

    /// Time from the first to the last possible arrival of one pulse pair.
    pub fn cluster_span(&self) -> f64 {
        self.pump_delay + self.hom_delay
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldAmplitudePair {
    pub a1: Complex<f64>,
    pub a2: Complex<f64>,
}

impl FieldAmplitudePair {
    pub fn new(a1: Complex<f64>, a2: Complex<f64>) -> Self {
        Self { a1, a2 }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.a1.norm_sqr() + self.a2.norm_sqr()
    }
}

/// Lossless splitter: `a3 = √T·a1 + i√R·a2`, `a4 = √T·a2 + i√R·a1`.
pub fn beamsplitter_transform(input: FieldAmplitudePair, bs: &BeamSplitter) -> FieldAmplitudePair {
    let t = Complex::new(bs.transmittance.sqrt(), 0.0);
    let ir = Complex::new(0.0, bs.reflectance.sqrt());
    FieldAmplitudePair { a1: t * input.a1 + ir * input.a2, a2: t * input.a2 + ir * input.a1 }
}

/// Ensemble-averaged squared wavepacket overlap `V(τ)`.
pub fn mean_squared_overlap(tau_ps: f64, emitter: &EmitterParams) -> f64 {
    overlap_with_gradient(tau_ps, emitter.t1, emitter.t2).0
}

/// Probability of a coincidence between opposite outputs, normalized so that
/// distinguishable photons give 1/2.
pub fn coincidence_probability(tau_ps: f64, emitter: &EmitterParams, bs: &BeamSplitter) -> f64 {
    probability_from_overlap(mean_squared_overlap(tau_ps, emitter), bs)
}

pub(crate) fn probability_from_overlap(overlap: f64, bs: &BeamSplitter) -> f64 {
    0.5 - 0.5 * bs.visibility_factor() * overlap
}

/// `T2/(2·T1)`, equal to `1 - 2·P(0)` at a balanced splitter.
pub fn indistinguishability(emitter: &EmitterParams) -> f64 {
    emitter.t2 / (2.0 * emitter.t1)
}

/// `(1 - e^{-x})/x` and its derivative, accurate down to `x = 0`.
fn phi_and_derivative(x: f64) -> (f64, f64) {
    if x.abs() < 1e-3 {
        let phi = 1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0;
        let dphi = -0.5 + x / 3.0 - x * x / 8.0 + x * x * x / 30.0;
        (phi, dphi)
    } else {
        let em1 = (-x).exp_m1();
        let phi = -em1 / x;
        let dphi = (x * (-x).exp() + em1) / (x * x);
        (phi, dphi)
    }
}

/// `V(τ)` with its partial derivatives with respect to `T1` and `T2`.
pub(crate) fn overlap_with_gradient(tau_ps: f64, t1: f64, t2: f64) -> (f64, f64, f64) {
    let s = tau_ps.abs();
    let r = t2 / (2.0 * t1);
    let a = 2.0 * s / t1;
    // φ is smooth through x = 0, so points just past T2 = 2T1 stay well defined.
    let x = 4.0 * s / t2 - 2.0 * s / t1;
    let (phi, dphi) = phi_and_derivative(x);
    let e = (-a).exp();
    let b = 1.0 + a * phi;
    let v = r * e * b;

    let a_t1 = -a / t1;
    let x_t1 = 2.0 * s / (t1 * t1);
    let x_t2 = -4.0 * s / (t2 * t2);
    let dv_dt1 = -v / t1 + r * e * (-a_t1 * b + a_t1 * phi + a * dphi * x_t1);
    let dv_dt2 = v / t2 + r * e * a * dphi * x_t2;
    (v, dv_dt1, dv_dt2)
}

/// `P(τ)` and its derivatives with respect to `T1` and `T2`.
pub(crate) fn probability_with_gradient(
    tau_ps: f64,
    t1: f64,
    t2: f64,
    bs: &BeamSplitter,
) -> (f64, f64, f64) {
    let k = 0.5 * bs.visibility_factor();
    let (v, dv1, dv2) = overlap_with_gradient(tau_ps, t1, t2);
    (0.5 - k * v, -k * dv1, -k * dv2)
}
