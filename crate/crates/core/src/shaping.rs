//! Intensity-modulator gating and detector timing response.
//!
//! The gate acts on photons before the analysis interferometer. Two views are
//! provided and agree on every intensity observable: on amplitudes (`√g·ψ`,
//! needed for interference) and on detection events (survival with
//! probability `g`).

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{EmitterParams, InterferometerGeometry};
use crate::montecarlo::DetectionEvent;
use crate::rng::{substream, Domain};

/// FWHM of a Gaussian divided by its standard deviation, `2·√(2·ln 2)`.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_4;

/// Gaussian transmission window synchronized to the excitation pulses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalGate {
    fwhm: f64,
    delay: f64,
    peak_transmission: f64,
}

impl TemporalGate {
    /// `delay_ps` is the window centre measured from the pulse trigger.
    pub fn new(fwhm_ps: f64, delay_ps: f64, peak_transmission: f64) -> Result<Self> {
        if !(fwhm_ps.is_finite() && fwhm_ps > 0.0) {
            return Err(Error::param("gate.fwhm", format!("must be > 0, got {fwhm_ps}")));
        }
        if !delay_ps.is_finite() {
            return Err(Error::param("gate.delay", "must be finite"));
        }
        if !(0.0..=1.0).contains(&peak_transmission) {
            return Err(Error::param(
                "gate.peak_transmission",
                format!("must lie in [0, 1], got {peak_transmission}"),
            ));
        }
        Ok(Self { fwhm: fwhm_ps, delay: delay_ps, peak_transmission })
    }

    /// Gate centred one FWHM after the trigger, full peak transmission.
    pub fn with_default_delay(fwhm_ps: f64) -> Result<Self> {
        Self::new(fwhm_ps, fwhm_ps, 1.0)
    }

    pub fn fwhm(&self) -> f64 {
        self.fwhm
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn peak_transmission(&self) -> f64 {
        self.peak_transmission
    }

    pub fn sigma(&self) -> f64 {
        self.fwhm / FWHM_PER_SIGMA
    }

    /// Intensity transmission `g` at time `t_ps` after the trigger.
    pub fn transmission(&self, t_ps: f64) -> f64 {
        let z = (t_ps - self.delay) / self.sigma();
        self.peak_transmission * (-0.5 * z * z).exp()
    }
}

/// Gaussian detector timing response; `resolution` is its FWHM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorIRF {
    resolution: f64,
}

impl DetectorIRF {
    pub fn new(resolution_fwhm_ps: f64) -> Result<Self> {
        if !(resolution_fwhm_ps.is_finite() && resolution_fwhm_ps > 0.0) {
            return Err(Error::param(
                "irf.resolution",
                format!("must be > 0, got {resolution_fwhm_ps}"),
            ));
        }
        Ok(Self { resolution: resolution_fwhm_ps })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn sigma(&self) -> f64 {
        self.resolution / FWHM_PER_SIGMA
    }
}

/// Uniformly sampled real function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCurve {
    pub start_ps: f64,
    pub step_ps: f64,
    pub values: Vec<f64>,
}

impl SampledCurve {
    pub fn new(start_ps: f64, step_ps: f64, values: Vec<f64>) -> Self {
        Self { start_ps, step_ps, values }
    }

    /// Samples `f` at `start + i·step` for `i in 0..n`.
    pub fn from_fn(start_ps: f64, step_ps: f64, n: usize, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..n).map(|i| f(start_ps + i as f64 * step_ps)).collect();
        Self { start_ps, step_ps, values }
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start_ps + i as f64 * self.step_ps
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(|i| self.time(i))
    }

    /// Trapezoid integral of `f(values)`.
    pub fn integrate_with(&self, f: impl Fn(f64) -> f64) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let inner: f64 = self.values[1..n - 1].iter().map(|&v| f(v)).sum();
        (inner + 0.5 * (f(self.values[0]) + f(self.values[n - 1]))) * self.step_ps
    }

    pub fn integral(&self) -> f64 {
        self.integrate_with(|v| v)
    }

    /// Intensity-weighted mean time of an amplitude profile.
    pub fn mean_time(&self) -> f64 {
        let norm = self.integrate_with(|v| v * v);
        let weighted: f64 =
            self.values.iter().enumerate().map(|(i, v)| self.time(i) * v * v).sum::<f64>()
                * self.step_ps;
        weighted / norm
    }

    /// Intensity-weighted RMS duration of an amplitude profile.
    pub fn rms_duration(&self) -> f64 {
        let norm = self.integrate_with(|v| v * v);
        let mean = self.mean_time();
        let var: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| (self.time(i) - mean).powi(2) * v * v)
            .sum::<f64>()
            * self.step_ps
            / norm;
        var.sqrt()
    }

    /// Index and value of the smallest sample.
    pub fn argmin(&self) -> (usize, f64) {
        self.values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best })
    }
}

/// Trigger time of each pulse index in an event stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseClock {
    pub period_ps: f64,
    pub offset_ps: f64,
}

impl PulseClock {
    pub fn from_geometry(geometry: &InterferometerGeometry) -> Self {
        Self { period_ps: geometry.rep_period(), offset_ps: 0.0 }
    }

    pub fn trigger(&self, pulse_index: u64) -> f64 {
        self.offset_ps + pulse_index as f64 * self.period_ps
    }
}

/// Keeps each event independently with probability `g(t_event - t_trigger)`.
///
/// The survival draw for the `k`-th event of pulse `p` comes from the
/// substream `(seed, p)`, so the result is independent of how the stream was
/// chunked or ordered.
pub fn apply_gate_to_events(
    events: &[DetectionEvent],
    gate: &TemporalGate,
    clock: &PulseClock,
    seed: u64,
) -> Vec<DetectionEvent> {
    let mut streams: HashMap<u64, rand_chacha::ChaCha8Rng> = HashMap::new();
    events
        .iter()
        .filter(|ev| {
            let rng = streams
                .entry(ev.pulse_index)
                .or_insert_with(|| substream(seed, Domain::Gate, ev.pulse_index));
            let u: f64 = rng.random();
            u < gate.transmission(ev.timestamp_ps - clock.trigger(ev.pulse_index))
        })
        .copied()
        .collect()
}

/// Amplitude profile `√g(t)·ψ(t)` of a jitter-free photon emitted at the
/// trigger, renormalized to unit intensity. Sampled from the trigger over
/// `8·T1` plus the gate extent.
pub fn apply_gate_to_wavepacket(
    emitter: &EmitterParams,
    gate: &TemporalGate,
    step_ps: f64,
) -> Result<SampledCurve> {
    let t1 = emitter.t1();
    let span = 8.0 * t1;
    let n = (span / step_ps).ceil() as usize + 1;
    let mut profile = SampledCurve::from_fn(0.0, step_ps, n, |t| {
        (gate.transmission(t) / t1).sqrt() * (-t / (2.0 * t1)).exp()
    });
    let norm = profile.integrate_with(|v| v * v);
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::ZeroProfile);
    }
    let scale = norm.sqrt().recip();
    profile.values.iter_mut().for_each(|v| *v *= scale);
    Ok(profile)
}

/// Convolution with the Gaussian detector response. Edges are extended with
/// their boundary value.
pub fn convolve_with_irf(curve: &SampledCurve, irf: &DetectorIRF) -> Result<SampledCurve> {
    let step = curve.step_ps;
    if !(step > 0.0) || step > irf.resolution() / 5.0 {
        return Err(Error::InsufficientResolution(format!(
            "sampling step {step} ps exceeds resolution/5 = {} ps",
            irf.resolution() / 5.0
        )));
    }
    let sigma = irf.sigma();
    let half = (6.0 * sigma / step).ceil() as isize;
    let mut kernel: Vec<f64> = (-half..=half)
        .map(|j| {
            let u = j as f64 * step / sigma;
            (-0.5 * u * u).exp()
        })
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|w| *w /= total);

    let n = curve.values.len() as isize;
    let at = |i: isize| curve.values[i.clamp(0, n - 1) as usize];
    let values = (0..n)
        .map(|i| kernel.iter().enumerate().map(|(k, w)| w * at(i + k as isize - half)).sum())
        .collect();
    Ok(SampledCurve { start_ps: curve.start_ps, step_ps: step, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::Detector;

    fn events_at(times: &[f64]) -> Vec<DetectionEvent> {
        times
            .iter()
            .enumerate()
            .map(|(i, &t)| DetectionEvent {
                detector: Detector::D1,
                timestamp_ps: t + i as f64 * 1e4,
                pulse_index: i as u64,
            })
            .collect()
    }

    #[test]
    fn wide_open_gate_keeps_everything() {
        let ev = events_at(&[0.0, 10.0, 500.0, 3000.0]);
        let gate = TemporalGate::new(1e6, 0.0, 1.0).unwrap();
        let clock = PulseClock { period_ps: 1e4, offset_ps: 0.0 };
        assert_eq!(apply_gate_to_events(&ev, &gate, &clock, 1).len(), ev.len());
    }

    #[test]
    fn closed_gate_blocks_everything() {
        let ev = events_at(&[0.0, 10.0, 500.0]);
        let gate = TemporalGate::new(200.0, 0.0, 0.0).unwrap();
        let clock = PulseClock { period_ps: 1e4, offset_ps: 0.0 };
        assert!(apply_gate_to_events(&ev, &gate, &clock, 1).is_empty());
    }

    #[test]
    fn survival_frequency_matches_transmission() {
        let gate = TemporalGate::new(200.0, 100.0, 0.8).unwrap();
        let clock = PulseClock { period_ps: 1e4, offset_ps: 0.0 };
        for dt in [0.0, 100.0, 250.0] {
            let n = 200_000;
            let ev = events_at(&vec![dt; n]);
            let kept = apply_gate_to_events(&ev, &gate, &clock, 9).len() as f64 / n as f64;
            let p = gate.transmission(dt);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((kept - p).abs() < 4.0 * se + 1e-12, "dt={dt}: {kept} vs {p}");
        }
    }

    #[test]
    fn identity_gate_leaves_profile_unchanged() {
        let e = EmitterParams::ideal(375.0, 270.0).unwrap();
        let gate = TemporalGate::new(1e9, 0.0, 1.0).unwrap();
        let p = apply_gate_to_wavepacket(&e, &gate, 1.0).unwrap();
        assert!((p.integrate_with(|v| v * v) - 1.0).abs() < 1e-12);
        for (i, t) in p.times().enumerate().step_by(97) {
            let want = (-t / 750.0).exp() / 375f64.sqrt();
            assert!((p.values[i] - want).abs() < 2e-3 * want.max(1e-6), "{t}");
        }
    }

    #[test]
    fn narrow_gate_concentrates_profile() {
        let e = EmitterParams::ideal(375.0, 270.0).unwrap();
        let gate = TemporalGate::new(20.0, 300.0, 1.0).unwrap();
        let p = apply_gate_to_wavepacket(&e, &gate, 0.5).unwrap();
        assert!((p.mean_time() - 300.0).abs() < 2.0);
        // intensity |√g|² is Gaussian with the gate's own sigma
        assert!((p.rms_duration() - gate.sigma()).abs() < 0.05 * gate.sigma());
    }

    #[test]
    fn zero_gate_profile_is_an_error() {
        let e = EmitterParams::ideal(375.0, 270.0).unwrap();
        let gate = TemporalGate::new(200.0, 0.0, 0.0).unwrap();
        assert_eq!(apply_gate_to_wavepacket(&e, &gate, 1.0), Err(Error::ZeroProfile));
    }

    #[test]
    fn spike_becomes_gaussian() {
        let irf = DetectorIRF::new(35.0).unwrap();
        let mut c = SampledCurve::new(-500.0, 1.0, vec![0.0; 1001]);
        c.values[500] = 1.0;
        let out = convolve_with_irf(&c, &irf).unwrap();
        let s = irf.sigma();
        for (i, t) in out.times().enumerate() {
            let want = (-(t * t) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
            assert!((out.values[i] - want).abs() < 1e-6, "{t}");
        }
    }

    #[test]
    fn constant_is_a_fixed_point() {
        let irf = DetectorIRF::new(35.0).unwrap();
        let c = SampledCurve::new(0.0, 5.0, vec![2.5; 300]);
        let out = convolve_with_irf(&c, &irf).unwrap();
        assert!(out.values.iter().all(|v| (v - 2.5).abs() < 1e-9));
    }

    #[test]
    fn coarse_sampling_rejected() {
        let irf = DetectorIRF::new(35.0).unwrap();
        let c = SampledCurve::new(0.0, 8.0, vec![1.0; 10]);
        assert!(matches!(convolve_with_irf(&c, &irf), Err(Error::InsufficientResolution(_))));
    }

    #[test]
    fn interior_integral_preserved() {
        let irf = DetectorIRF::new(35.0).unwrap();
        let c = SampledCurve::from_fn(-2000.0, 2.0, 2001, |t| (-(t / 300.0).powi(2)).exp());
        let out = convolve_with_irf(&c, &irf).unwrap();
        assert!((out.integral() - c.integral()).abs() < 1e-3 * c.integral());
    }

    #[test]
    fn event_and_amplitude_pictures_agree_on_survival() {
        // mean of g over the exponential decay = ∫|√g ψ|² before renormalization
        let e = EmitterParams::ideal(375.0, 270.0).unwrap();
        let gate = TemporalGate::new(200.0, 100.0, 1.0).unwrap();
        let step = 0.5;
        let n = (8.0 * 375.0 / step) as usize + 1;
        let raw = SampledCurve::from_fn(0.0, step, n, |t| {
            (gate.transmission(t) / 375.0).sqrt() * (-t / 750.0).exp()
        });
        let amplitude_survival = raw.integrate_with(|v| v * v);

        let mut rng = crate::rng::substream(3, Domain::Gate, 0);
        let m = 400_000;
        let kept = (0..m)
            .filter(|_| {
                let t: f64 = rand_distr::Distribution::sample(
                    &rand_distr::Exp::new(1.0 / e.t1()).unwrap(),
                    &mut rng,
                );
                rng.random::<f64>() < gate.transmission(t)
            })
            .count() as f64
            / m as f64;
        let se = (kept * (1.0 - kept) / m as f64).sqrt();
        assert!((kept - amplitude_survival).abs() < 4.0 * se, "{kept} vs {amplitude_survival}");
    }
}
