//! Stochastic forward model of the double-pulse HOM experiment.
//!
//! Each pulse pair is simulated from its own random substream. Within a pair
//! the early pulse fires at 0 and the late pulse at `pump_delay`; each photon
//! picks the short (0) or long (`hom_delay`) arm of the analysis
//! interferometer. The short arm feeds input 1 of the final splitter and the
//! long arm input 2, so the early-long and late-short photons are the only
//! pair that can meet and interfere. Everything else leaves towards D1 with
//! the splitter's marginal probability.

mod photon;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BeamSplitter, EmitterParams, InterferometerGeometry, JitterModel};
use crate::rng::{substream, Domain};
use crate::shaping::{DetectorIRF, TemporalGate};

pub use photon::{
    hom_pair_outcome, opposite_port_probability, pair_overlap, sample_photon, PairOutcome,
    PhotonRealization, PhotonSampler, MIN_ENVELOPE_SAMPLES, WINDOW_LIFETIMES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Detector {
    D1,
    D2,
}

impl Detector {
    pub fn label(&self) -> &'static str {
        match self {
            Detector::D1 => "D1",
            Detector::D2 => "D2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub detector: Detector,
    pub timestamp_ps: f64,
    pub pulse_index: u64,
}

/// How detection timestamps inside a pulse are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrivalTiming {
    /// Photon arrives at trigger + path delay + jitter. Cheap; peaks are
    /// narrow and their areas carry all the information.
    #[default]
    Trigger,
    /// Adds the radiative decay delay. Interfering pairs that exit through
    /// opposite ports get joint times from the two-photon amplitude, which
    /// resolves the dip shape inside peak A.
    Wavepacket,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SourceStatistics {
    #[default]
    SinglePhoton,
    /// Photon number per pulse drawn from a Poisson law; no two-photon
    /// interference. Stands in for uncorrelated (classical) light.
    Poissonian { mean_photons: f64 },
}

/// A fraction of excitations that go through an incoherent channel with
/// its own timing jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncoherentExcitation {
    pub fraction: f64,
    pub jitter: JitterModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub emitter: EmitterParams,
    pub bs: BeamSplitter,
    pub geometry: InterferometerGeometry,
    pub n_pulse_pairs: u64,
    pub seed: u64,
    pub time_grid_step: f64,
    pub gate: Option<TemporalGate>,
    pub irf: Option<DetectorIRF>,
    pub dark_count_rate_hz: f64,
    pub timing: ArrivalTiming,
    pub source: SourceStatistics,
    /// Replaces the sampled pair overlap by a constant.
    pub overlap_override: Option<f64>,
    pub incoherent: Option<IncoherentExcitation>,
}

impl SimulationConfig {
    pub fn new(
        emitter: EmitterParams,
        bs: BeamSplitter,
        geometry: InterferometerGeometry,
        n_pulse_pairs: u64,
        seed: u64,
    ) -> Self {
        Self {
            time_grid_step: default_grid_step(&emitter),
            emitter,
            bs,
            geometry,
            n_pulse_pairs,
            seed,
            gate: None,
            irf: None,
            dark_count_rate_hz: 0.0,
            timing: ArrivalTiming::default(),
            source: SourceStatistics::default(),
            overlap_override: None,
            incoherent: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.pump_delay() >= g.rep_period() {
            return Err(Error::InvalidGeometry(format!(
                "pump_delay must be shorter than rep_period (pulses would collide): {} ps >= {} ps",
                g.pump_delay(),
                g.rep_period()
            )));
        }
        if g.cluster_span() >= g.rep_period() {
            return Err(Error::InvalidGeometry(format!(
                "pump_delay + hom_delay must be shorter than rep_period: {} ps >= {} ps",
                g.cluster_span(),
                g.rep_period()
            )));
        }
        let step = self.time_grid_step;
        let limit = self.emitter.t1().min(self.emitter.t2()) / 20.0;
        if !(step.is_finite() && step > 0.0) || step > limit {
            return Err(Error::InsufficientResolution(format!(
                "time_grid_step {step} ps must be in (0, min(T1, T2)/20 = {limit} ps]"
            )));
        }
        if !(self.dark_count_rate_hz.is_finite() && self.dark_count_rate_hz >= 0.0) {
            return Err(Error::param("dark_count_rate_hz", "must be finite and >= 0"));
        }
        if let Some(v) = self.overlap_override {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param("overlap_override", format!("must lie in [0, 1], got {v}")));
            }
        }
        if let SourceStatistics::Poissonian { mean_photons } = self.source {
            if !(mean_photons.is_finite() && mean_photons > 0.0) {
                return Err(Error::param("mean_photons", "must be finite and > 0"));
            }
        }
        if let Some(inc) = &self.incoherent {
            if !(0.0..=1.0).contains(&inc.fraction) {
                return Err(Error::param("incoherent.fraction", "must lie in [0, 1]"));
            }
            inc.jitter.validate()?;
        }
        Ok(())
    }
}

/// Lattice step used when none is configured: `min(T1, T2)/50`.
pub fn default_grid_step(emitter: &EmitterParams) -> f64 {
    emitter.t1().min(emitter.t2()) / 50.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arm {
    Short,
    Long,
}

#[derive(Debug, Clone, Copy)]
struct Photon {
    trigger: f64,
    arm: Arm,
    jitter: f64,
    decay: f64,
}

impl Photon {
    fn path_delay(&self, g: &InterferometerGeometry) -> f64 {
        match self.arm {
            Arm::Short => 0.0,
            Arm::Long => g.hom_delay(),
        }
    }
}

struct PairContext<'a> {
    cfg: &'a SimulationConfig,
    sampler: Option<PhotonSampler>,
    decay: Exp<f64>,
    irf: Option<Normal<f64>>,
}

impl<'a> PairContext<'a> {
    fn new(cfg: &'a SimulationConfig) -> Result<Self> {
        let needs_wavepackets = cfg.overlap_override.is_none()
            && matches!(cfg.source, SourceStatistics::SinglePhoton);
        let sampler = if needs_wavepackets {
            Some(PhotonSampler::new(cfg.emitter, cfg.time_grid_step, cfg.gate)?)
        } else {
            None
        };
        let irf = cfg
            .irf
            .map(|irf| Normal::new(0.0, irf.sigma()).map_err(|e| Error::Numerical(e.to_string())))
            .transpose()?;
        Ok(Self {
            cfg,
            sampler,
            decay: Exp::new(1.0 / cfg.emitter.t1()).map_err(|e| Error::Numerical(e.to_string()))?,
            irf,
        })
    }

    /// Draws whether a photon is emitted and survives the gate.
    fn draw_photon<R: Rng + ?Sized>(&self, trigger: f64, rng: &mut R) -> Option<Photon> {
        let cfg = self.cfg;
        let jitter_model = match &cfg.incoherent {
            Some(inc) if rng.random::<f64>() < inc.fraction => inc.jitter,
            _ => cfg.emitter.jitter(),
        };
        let jitter = jitter_model.sample(rng);
        let arm = if rng.random::<bool>() { Arm::Long } else { Arm::Short };
        let decay = self.decay.sample(rng);
        if let Some(gate) = &cfg.gate {
            if rng.random::<f64>() >= gate.transmission(jitter + decay) {
                return None;
            }
        }
        Some(Photon { trigger, arm, jitter, decay })
    }

    fn arrival(&self, p: &Photon) -> f64 {
        let base = p.trigger + p.path_delay(&self.cfg.geometry) + p.jitter;
        match self.cfg.timing {
            ArrivalTiming::Trigger => base,
            ArrivalTiming::Wavepacket => base + p.decay,
        }
    }

    fn route<R: Rng + ?Sized>(&self, arm: Arm, rng: &mut R) -> Detector {
        let p_d1 = match arm {
            Arm::Short => self.cfg.bs.transmittance(),
            Arm::Long => self.cfg.bs.reflectance(),
        };
        if rng.random::<f64>() < p_d1 {
            Detector::D1
        } else {
            Detector::D2
        }
    }

    fn simulate(&self, k: u64) -> Result<Vec<DetectionEvent>> {
        let cfg = self.cfg;
        let g = &cfg.geometry;
        let mut rng = substream(cfg.seed, Domain::PulsePair, k);
        let mut hits: Vec<(Detector, f64)> = Vec::with_capacity(4);

        match cfg.source {
            SourceStatistics::SinglePhoton => {
                let mut photons = [None, None];
                for (slot, trigger) in photons.iter_mut().zip([0.0, g.pump_delay()]) {
                    let emitted = rng.random::<f64>() < cfg.emitter.efficiency();
                    let p = self.draw_photon(trigger, &mut rng);
                    if emitted {
                        *slot = p;
                    }
                }
                match photons {
                    [Some(early), Some(late)] if early.arm == Arm::Long && late.arm == Arm::Short => {
                        self.interfere(&early, &late, &mut rng, &mut hits)?;
                    }
                    _ => {
                        for p in photons.iter().flatten() {
                            let d = self.route(p.arm, &mut rng);
                            hits.push((d, self.arrival(p)));
                        }
                    }
                }
            }
            SourceStatistics::Poissonian { mean_photons } => {
                let law = Poisson::new(mean_photons).map_err(|e| Error::Numerical(e.to_string()))?;
                for trigger in [0.0, g.pump_delay()] {
                    let n = law.sample(&mut rng) as u64;
                    for _ in 0..n {
                        if let Some(p) = self.draw_photon(trigger, &mut rng) {
                            let d = self.route(p.arm, &mut rng);
                            hits.push((d, self.arrival(&p)));
                        }
                    }
                }
            }
        }

        if let Some(irf) = &self.irf {
            for (_, t) in hits.iter_mut() {
                *t += irf.sample(&mut rng);
            }
        }

        if cfg.dark_count_rate_hz > 0.0 {
            let mut drng = substream(cfg.seed, Domain::DarkCounts, k);
            let mean = cfg.dark_count_rate_hz * g.rep_period() * 1e-12;
            let law = Poisson::new(mean).map_err(|e| Error::Numerical(e.to_string()))?;
            for d in [Detector::D1, Detector::D2] {
                let n = law.sample(&mut drng) as u64;
                for _ in 0..n {
                    hits.push((d, drng.random::<f64>() * g.rep_period()));
                }
            }
        }

        let offset = k as f64 * g.rep_period();
        Ok(hits
            .into_iter()
            .map(|(detector, t)| DetectionEvent { detector, timestamp_ps: offset + t, pulse_index: k })
            .collect())
    }

    fn interfere<R: Rng + ?Sized>(
        &self,
        early: &Photon,
        late: &Photon,
        rng: &mut R,
        hits: &mut Vec<(Detector, f64)>,
    ) -> Result<()> {
        let cfg = self.cfg;
        let g = &cfg.geometry;
        // early photon took the long arm (input 2), late one the short arm (input 1)
        let realizations = match &self.sampler {
            Some(s) => {
                let e = s.sample_emitted_at(g.hom_delay(), g.hom_delay() + early.jitter, rng)?;
                let l = s.sample_emitted_at(g.pump_delay(), g.pump_delay() + late.jitter, rng)?;
                Some((e, l))
            }
            None => None,
        };
        let overlap = match (&realizations, cfg.overlap_override) {
            (_, Some(v)) => v,
            (Some((e, l)), None) => pair_overlap(e, l)?,
            (None, None) => unreachable!("sampler exists whenever overlap is not overridden"),
        };
        let t_early = self.arrival(early);
        let t_late = self.arrival(late);
        match hom_pair_outcome(overlap, &cfg.bs, rng) {
            PairOutcome::SamePort => {
                let d = if rng.random::<bool>() { Detector::D1 } else { Detector::D2 };
                hits.push((d, t_early));
                hits.push((d, t_late));
            }
            PairOutcome::OppositePorts => {
                if let (ArrivalTiming::Wavepacket, Some((e, l))) = (cfg.timing, &realizations) {
                    if let Some((t1, t2)) = photon::sample_coincidence_times(l, e, &cfg.bs, rng) {
                        hits.push((Detector::D1, t1));
                        hits.push((Detector::D2, t2));
                        return Ok(());
                    }
                }
                let (r, t) = (cfg.bs.reflectance(), cfg.bs.transmittance());
                let direct = (t * t - r * t * overlap).max(0.0);
                let swapped = (r * r - r * t * overlap).max(0.0);
                let p_late_d1 = if direct + swapped > 0.0 { direct / (direct + swapped) } else { 0.5 };
                if rng.random::<f64>() < p_late_d1 {
                    hits.push((Detector::D1, t_late));
                    hits.push((Detector::D2, t_early));
                } else {
                    hits.push((Detector::D2, t_late));
                    hits.push((Detector::D1, t_early));
                }
            }
        }
        Ok(())
    }
}

const CHUNK: u64 = 2048;

/// Full detection-event stream, sorted by timestamp then detector then
/// pulse index. Output is independent of the rayon pool size.
pub fn generate_event_stream(config: &SimulationConfig) -> Result<Vec<DetectionEvent>> {
    config.validate()?;
    let ctx = PairContext::new(config)?;
    let n_chunks = config.n_pulse_pairs.div_ceil(CHUNK);
    let chunks: Vec<Vec<DetectionEvent>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(config.n_pulse_pairs);
            let mut out = Vec::with_capacity(((hi - lo) * 2) as usize);
            for k in lo..hi {
                out.extend(ctx.simulate(k)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut events: Vec<DetectionEvent> = chunks.into_iter().flatten().collect();
    events.par_sort_by(compare_events);
    Ok(events)
}

/// Total order used for every event stream.
pub fn compare_events(a: &DetectionEvent, b: &DetectionEvent) -> std::cmp::Ordering {
    a.timestamp_ps
        .total_cmp(&b.timestamp_ps)
        .then(a.detector.cmp(&b.detector))
        .then(a.pulse_index.cmp(&b.pulse_index))
}

/// Sample mean of the pair overlap with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: u64,
}

/// Monte Carlo estimate of `E|⟨ψ1|ψ2⟩|²` for two photons whose triggers are
/// `tau_ps` apart, optionally through a gate.
pub fn estimate_mean_overlap(
    emitter: &EmitterParams,
    gate: Option<TemporalGate>,
    tau_ps: f64,
    n_pairs: u64,
    grid_step_ps: f64,
    seed: u64,
) -> Result<OverlapEstimate> {
    if n_pairs < 2 {
        return Err(Error::InsufficientStatistics("need at least two pairs".into()));
    }
    let sampler = PhotonSampler::new(*emitter, grid_step_ps, gate)?;
    let values: Vec<f64> = (0..n_pairs)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, Domain::PulsePair, k);
            let a = sampler.sample(0.0, &mut rng)?;
            let b = sampler.sample(tau_ps, &mut rng)?;
            pair_overlap(&a, &b)
        })
        .collect::<Result<_>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(OverlapEstimate { mean, std_err: (var / n).sqrt(), n: n_pairs })
}

/// Arrival times, relative to each trigger, of photons that pass the gate in
/// a direct lifetime measurement (no interferometer). `n_pulses` excitations
/// are attempted.
pub fn simulate_decay_arrivals(
    emitter: &EmitterParams,
    gate: Option<&TemporalGate>,
    n_pulses: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    let decay = Exp::new(1.0 / emitter.t1()).map_err(|e| Error::Numerical(e.to_string()))?;
    let n_chunks = n_pulses.div_ceil(CHUNK);
    let chunks: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(n_pulses);
            let mut rng = substream(seed, Domain::PulsePair, c);
            let mut out = Vec::with_capacity((hi - lo) as usize);
            for _ in lo..hi {
                if rng.random::<f64>() >= emitter.efficiency() {
                    continue;
                }
                let t = emitter.jitter().sample(&mut rng) + decay.sample(&mut rng);
                let keep = match gate {
                    Some(g) => rng.random::<f64>() < g.transmission(t),
                    None => true,
                };
                if keep {
                    out.push(t);
                }
            }
            out
        })
        .collect();
    Ok(chunks.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry() -> InterferometerGeometry {
        InterferometerGeometry::from_ns(3.0, 3.0, 81.0, 1.0).unwrap()
    }

    fn config(n: u64) -> SimulationConfig {
        let e = EmitterParams::ideal(375.0, 270.0).unwrap();
        SimulationConfig::new(e, BeamSplitter::balanced(), geometry(), n, 11)
    }

    #[test]
    fn deterministic_emission_gives_two_events_per_pair() {
        let ev = generate_event_stream(&config(10_000)).unwrap();
        assert_eq!(ev.len(), 20_000);
    }

    #[test]
    fn stream_is_sorted() {
        let ev = generate_event_stream(&config(2_000)).unwrap();
        assert!(ev.windows(2).all(|w| w[0].timestamp_ps <= w[1].timestamp_ps));
    }

    #[test]
    fn efficiency_thins_the_stream() {
        let mut c = config(20_000);
        c.emitter = c.emitter.with_efficiency(0.5).unwrap();
        let n = generate_event_stream(&c).unwrap().len() as f64;
        assert!((n - 20_000.0).abs() < 4.0 * (40_000.0f64 * 0.25).sqrt());
    }

    #[test]
    fn pump_delay_beyond_period_is_rejected() {
        let g = InterferometerGeometry::new(20_000.0, 3000.0, 12_345.0, 500.0);
        if let Ok(g) = g {
            let mut c = config(10);
            c.geometry = g;
            assert!(matches!(generate_event_stream(&c), Err(Error::InvalidGeometry(_))));
        }
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let mut c = config(10);
        c.time_grid_step = 20.0;
        assert!(matches!(c.validate(), Err(Error::InsufficientResolution(_))));
    }

    #[test]
    fn same_stream_for_any_pool_size() {
        let mut c = config(5_000);
        c.timing = ArrivalTiming::Wavepacket;
        c.dark_count_rate_hz = 1e6;
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| generate_event_stream(&c).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(3));
        assert_eq!(a, run(8));
    }

    #[test]
    fn dark_counts_add_events() {
        let mut c = config(10_000);
        c.dark_count_rate_hz = 1e6;
        let n = generate_event_stream(&c).unwrap().len() as f64;
        let expected = 20_000.0 + 2.0 * 1e6 * 10_000.0 * c.geometry.rep_period() * 1e-12;
        assert!((n - expected).abs() < 5.0 * (expected - 20_000.0).sqrt(), "{n} vs {expected}");
    }

    #[test]
    fn jitter_lowers_mean_overlap() {
        let step = 270.0 / 50.0;
        let mut last = f64::INFINITY;
        let mut last_se = 0.0;
        for sigma in [0.0, 375.0 / 8.0, 375.0 / 2.0] {
            let e = EmitterParams::new(375.0, 270.0, JitterModel::Gaussian { sigma_ps: sigma }, 1.0)
                .unwrap();
            let est = estimate_mean_overlap(&e, None, 0.0, 20_000, step, 5).unwrap();
            let se = (est.std_err.powi(2) + last_se * last_se).sqrt();
            assert!(est.mean < last - 3.0 * se || last.is_infinite(), "sigma={sigma}");
            last = est.mean;
            last_se = est.std_err;
        }
    }

    #[test]
    fn decay_arrivals_have_lifetime_mean() {
        let e = EmitterParams::ideal(375.0, 270.0).unwrap();
        let t = simulate_decay_arrivals(&e, None, 200_000, 3).unwrap();
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        assert!((mean - 375.0).abs() < 4.0 * 375.0 / (t.len() as f64).sqrt());
    }
}
