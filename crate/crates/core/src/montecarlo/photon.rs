//! Single-photon realizations and per-pair interference.
//!
//! A realization is a normalized exponential envelope starting at the
//! emission time together with a Wiener phase trajectory of variance rate
//! `2γ*`. Both live on the absolute lattice `t = n·step`, so any two photons
//! sampled with the same step are aligned without interpolation.

use nalgebra::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{BeamSplitter, EmitterParams};
use crate::shaping::TemporalGate;

/// Length of the sampled wavepacket in units of `T1`.
pub const WINDOW_LIFETIMES: f64 = 8.0;
/// Minimum number of lattice points under an envelope.
pub const MIN_ENVELOPE_SAMPLES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonRealization {
    pulse_time: f64,
    emission_time: f64,
    step: f64,
    first_index: i64,
    amplitudes: Vec<f64>,
    phases: Vec<f64>,
}

impl PhotonRealization {
    /// Nominal trigger this photon belongs to (after any path delay).
    pub fn pulse_time(&self) -> f64 {
        self.pulse_time
    }

    pub fn emission_time(&self) -> f64 {
        self.emission_time
    }

    pub fn grid_step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn first_index(&self) -> i64 {
        self.first_index
    }

    pub fn time(&self, i: usize) -> f64 {
        (self.first_index + i as i64) as f64 * self.step
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Complex amplitude at absolute lattice index `n`; zero off the support.
    pub fn field_at(&self, n: i64) -> Complex<f64> {
        let i = n - self.first_index;
        if i < 0 || i as usize >= self.amplitudes.len() {
            return Complex::new(0.0, 0.0);
        }
        let i = i as usize;
        Complex::from_polar(self.amplitudes[i], self.phases[i])
    }

    /// Cumulative trapezoid intensity weights, for sampling detection times.
    pub(crate) fn intensity_cdf(&self) -> Vec<f64> {
        let n = self.amplitudes.len();
        let mut acc = 0.0;
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
                acc += w * a * a;
                acc
            })
            .collect()
    }
}

/// Draws realizations of one emitter on a fixed lattice, optionally through
/// a temporal gate.
#[derive(Debug, Clone)]
pub struct PhotonSampler {
    emitter: EmitterParams,
    step: f64,
    gate: Option<TemporalGate>,
    n_samples: usize,
    phase_sd: f64,
}

impl PhotonSampler {
    pub fn new(emitter: EmitterParams, grid_step_ps: f64, gate: Option<TemporalGate>) -> Result<Self> {
        if !(grid_step_ps.is_finite() && grid_step_ps > 0.0) {
            return Err(Error::param("time_grid_step", format!("must be > 0, got {grid_step_ps}")));
        }
        let n_samples = (WINDOW_LIFETIMES * emitter.t1() / grid_step_ps).ceil() as usize + 1;
        if n_samples < MIN_ENVELOPE_SAMPLES {
            return Err(Error::InsufficientResolution(format!(
                "{n_samples} lattice points under an {} ps envelope with step {grid_step_ps} ps; \
                 need at least {MIN_ENVELOPE_SAMPLES}",
                WINDOW_LIFETIMES * emitter.t1()
            )));
        }
        let phase_sd = (2.0 * emitter.pure_dephasing_rate() * grid_step_ps).sqrt();
        Ok(Self { emitter, step: grid_step_ps, gate, n_samples, phase_sd })
    }

    pub fn emitter(&self) -> &EmitterParams {
        &self.emitter
    }

    pub fn grid_step(&self) -> f64 {
        self.step
    }

    /// Realization triggered at `pulse_time` with jitter drawn from the emitter.
    pub fn sample<R: Rng + ?Sized>(&self, pulse_time: f64, rng: &mut R) -> Result<PhotonRealization> {
        let emission = pulse_time + self.emitter.jitter().sample(rng);
        self.sample_emitted_at(pulse_time, emission, rng)
    }

    /// Realization with an explicit emission time.
    pub fn sample_emitted_at<R: Rng + ?Sized>(
        &self,
        pulse_time: f64,
        emission_time: f64,
        rng: &mut R,
    ) -> Result<PhotonRealization> {
        let t1 = self.emitter.t1();
        let first_index = (emission_time / self.step).ceil() as i64;
        let n = self.n_samples;
        let mut amplitudes = Vec::with_capacity(n);
        for i in 0..n {
            let t = (first_index + i as i64) as f64 * self.step;
            let mut a = (-(t - emission_time) / (2.0 * t1)).exp();
            if let Some(g) = &self.gate {
                a *= g.transmission(t - pulse_time).sqrt();
            }
            amplitudes.push(a);
        }
        let norm = trapezoid_sum(&amplitudes, |a| a * a) * self.step;
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::ZeroProfile);
        }
        let scale = norm.sqrt().recip();
        amplitudes.iter_mut().for_each(|a| *a *= scale);

        let mut phases = Vec::with_capacity(n);
        let mut phi = 0.0;
        phases.push(phi);
        if self.phase_sd > 0.0 {
            for _ in 1..n {
                let z: f64 = StandardNormal.sample(rng);
                phi += self.phase_sd * z;
                phases.push(phi);
            }
        } else {
            phases.resize(n, 0.0);
        }
        Ok(PhotonRealization {
            pulse_time,
            emission_time,
            step: self.step,
            first_index,
            amplitudes,
            phases,
        })
    }
}

fn trapezoid_sum(values: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        _ => {
            values[1..n - 1].iter().map(|&v| f(v)).sum::<f64>()
                + 0.5 * (f(values[0]) + f(values[n - 1]))
        }
    }
}

/// Ungated realization of `emitter` triggered at `pulse_time`.
pub fn sample_photon<R: Rng + ?Sized>(
    pulse_time: f64,
    emitter: &EmitterParams,
    grid_step_ps: f64,
    rng: &mut R,
) -> Result<PhotonRealization> {
    PhotonSampler::new(*emitter, grid_step_ps, None)?.sample(pulse_time, rng)
}

/// `|∫ψ1*(t)ψ2(t)dt|²` by trapezoid quadrature on the shared lattice.
pub fn pair_overlap(p1: &PhotonRealization, p2: &PhotonRealization) -> Result<f64> {
    if (p1.step - p2.step).abs() > 1e-12 * p1.step.max(p2.step) {
        return Err(Error::param(
            "grid_step",
            format!("photons sampled on different lattices ({} vs {} ps)", p1.step, p2.step),
        ));
    }
    for p in [p1, p2] {
        if p.len() < MIN_ENVELOPE_SAMPLES {
            return Err(Error::InsufficientResolution(format!(
                "{} lattice points under the envelope, need at least {MIN_ENVELOPE_SAMPLES}",
                p.len()
            )));
        }
    }
    let lo = p1.first_index.max(p2.first_index);
    let hi = (p1.first_index + p1.len() as i64).min(p2.first_index + p2.len() as i64) - 1;
    if lo >= hi {
        return Ok(0.0);
    }
    let o1 = (lo - p1.first_index) as usize;
    let o2 = (lo - p2.first_index) as usize;
    let m = (hi - lo + 1) as usize;
    let a1 = &p1.amplitudes[o1..o1 + m];
    let a2 = &p2.amplitudes[o2..o2 + m];
    let f1 = &p1.phases[o1..o1 + m];
    let f2 = &p2.phases[o2..o2 + m];
    let mut re = 0.0;
    let mut im = 0.0;
    for i in 0..m {
        let w = if i == 0 || i + 1 == m { 0.5 } else { 1.0 };
        let amp = w * a1[i] * a2[i];
        let (s, c) = (f2[i] - f1[i]).sin_cos();
        re += amp * c;
        im += amp * s;
    }
    let step = p1.step;
    Ok(((re * re + im * im) * step * step).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairOutcome {
    OppositePorts,
    SamePort,
}

/// `R² + T² - 2RT·|⟨ψ1|ψ2⟩|²`.
pub fn opposite_port_probability(overlap_sq: f64, bs: &BeamSplitter) -> f64 {
    let (r, t) = (bs.reflectance(), bs.transmittance());
    (r * r + t * t - 2.0 * r * t * overlap_sq).clamp(0.0, 1.0)
}

pub fn hom_pair_outcome<R: Rng + ?Sized>(overlap_sq: f64, bs: &BeamSplitter, rng: &mut R) -> PairOutcome {
    if rng.random::<f64>() < opposite_port_probability(overlap_sq, bs) {
        PairOutcome::OppositePorts
    } else {
        PairOutcome::SamePort
    }
}

fn sample_index<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let total = *cdf.last().expect("non-empty envelope");
    let u = rng.random::<f64>() * total;
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Joint detection times `(t_D1, t_D2)` of an interfering pair conditioned on
/// opposite-port detection. `input1` enters the port that transmits to D1.
///
/// Rejection sampling from `|T·ξ1(t)ξ2(s) - R·ξ2(t)ξ1(s)|²`. Returns `None`
/// when the acceptance rate is too low to finish (near-perfect bunching).
pub(crate) fn sample_coincidence_times<R: Rng + ?Sized>(
    input1: &PhotonRealization,
    input2: &PhotonRealization,
    bs: &BeamSplitter,
    rng: &mut R,
) -> Option<(f64, f64)> {
    const MAX_TRIES: usize = 100_000;
    let (r, t) = (bs.reflectance(), bs.transmittance());
    let cdf1 = input1.intensity_cdf();
    let cdf2 = input2.intensity_cdf();
    let p_direct = t * t / (t * t + r * r);
    for _ in 0..MAX_TRIES {
        let (n_d1, n_d2) = if rng.random::<f64>() < p_direct {
            (
                input1.first_index + sample_index(&cdf1, rng) as i64,
                input2.first_index + sample_index(&cdf2, rng) as i64,
            )
        } else {
            (
                input2.first_index + sample_index(&cdf2, rng) as i64,
                input1.first_index + sample_index(&cdf1, rng) as i64,
            )
        };
        let direct = input1.field_at(n_d1) * input2.field_at(n_d2);
        let swapped = input2.field_at(n_d1) * input1.field_at(n_d2);
        let target = (direct * t - swapped * r).norm_sqr();
        let envelope = 2.0 * (t * t * direct.norm_sqr() + r * r * swapped.norm_sqr());
        if envelope > 0.0 && rng.random::<f64>() * envelope < target {
            let step = input1.step;
            let jitter = |rng: &mut R| (rng.random::<f64>() - 0.5) * step;
            return Some((n_d1 as f64 * step + jitter(rng), n_d2 as f64 * step + jitter(rng)));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mean_squared_overlap, JitterModel};
    use crate::rng::{substream, Domain};

    #[test]
    fn jitter_free_emission_is_at_trigger() {
        let e = EmitterParams::ideal(375.0, 270.0).unwrap();
        let mut rng = substream(1, Domain::PulsePair, 0);
        let p = sample_photon(0.0, &e, 5.0, &mut rng).unwrap();
        assert_eq!(p.emission_time(), 0.0);
        assert!(p.time(p.len() - 1) >= 8.0 * 375.0);
    }

    #[test]
    fn gaussian_jitter_statistics() {
        let e = EmitterParams::new(375.0, 270.0, JitterModel::Gaussian { sigma_ps: 3.0 }, 1.0).unwrap();
        let mut rng = substream(2, Domain::PulsePair, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| e.jitter().sample(&mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(mean.abs() < 3.0 * 3.0 / (n as f64).sqrt());
        assert!((sd - 3.0).abs() < 0.02 * 3.0);
    }

    #[test]
    fn exponential_jitter_mean() {
        let e = EmitterParams::new(800.0, 450.0, JitterModel::Exponential { tau_ps: 370.0 }, 1.0)
            .unwrap();
        let mut rng = substream(3, Domain::PulsePair, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| e.jitter().sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 370.0).abs() < 0.02 * 370.0);
        let sampler = PhotonSampler::new(e, 10.0, None).unwrap();
        for _ in 0..100 {
            let p = sampler.sample(50.0, &mut rng).unwrap();
            assert!(p.emission_time() >= 50.0);
        }
    }

    #[test]
    fn identical_realizations_overlap_fully() {
        let e = EmitterParams::ideal(375.0, 270.0).unwrap();
        let mut rng = substream(4, Domain::PulsePair, 0);
        let p = sample_photon(123.4, &e, 5.0, &mut rng).unwrap();
        assert!((pair_overlap(&p, &p).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn distant_photons_do_not_overlap() {
        let e = EmitterParams::ideal(375.0, 270.0).unwrap();
        let mut rng = substream(5, Domain::PulsePair, 0);
        let a = sample_photon(0.0, &e, 5.0, &mut rng).unwrap();
        let b = sample_photon(20.0 * 375.0, &e, 5.0, &mut rng).unwrap();
        assert!(pair_overlap(&a, &b).unwrap() < 1e-8);
    }

    #[test]
    fn coarse_lattice_is_rejected() {
        let e = EmitterParams::ideal(10.0, 5.0).unwrap();
        assert!(matches!(
            PhotonSampler::new(e, 10.0, None),
            Err(Error::InsufficientResolution(_))
        ));
    }

    #[test]
    fn mismatched_lattices_are_rejected() {
        let e = EmitterParams::ideal(375.0, 270.0).unwrap();
        let mut rng = substream(6, Domain::PulsePair, 0);
        let a = sample_photon(0.0, &e, 5.0, &mut rng).unwrap();
        let b = sample_photon(0.0, &e, 4.0, &mut rng).unwrap();
        assert!(pair_overlap(&a, &b).is_err());
    }

    #[test]
    fn outcome_probabilities() {
        let bs = BeamSplitter::balanced();
        assert_eq!(opposite_port_probability(1.0, &bs), 0.0);
        assert_eq!(opposite_port_probability(0.0, &bs), 0.5);
        assert!((opposite_port_probability(0.36, &bs) - 0.32).abs() < 1e-15);
        let mut rng = substream(7, Domain::PulsePair, 0);
        assert!((0..10_000).all(|_| hom_pair_outcome(1.0, &bs, &mut rng) == PairOutcome::SamePort));
    }

    #[test]
    fn mean_overlap_at_zero_delay_matches_closed_form() {
        let e = EmitterParams::ideal(375.0, 270.0).unwrap();
        let sampler = PhotonSampler::new(e, 270.0 / 50.0, None).unwrap();
        let n = 100_000;
        let mut rng = substream(8, Domain::PulsePair, 0);
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                let a = sampler.sample(0.0, &mut rng).unwrap();
                let b = sampler.sample(0.0, &mut rng).unwrap();
                pair_overlap(&a, &b).unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let se = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            / (n as f64).sqrt();
        let want = mean_squared_overlap(0.0, &e);
        assert!((mean - want).abs() < 3.0 * se, "{mean} vs {want} (se {se})");
    }
}
