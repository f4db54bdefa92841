//! Experiment configuration files.
//!
//! ```toml
//! [emitter]
//! t1_ps = 800.0
//! t2_ps = 450.0
//! scheme = "quasi-resonant"
//!
//! [optics]
//! pump_delay_ns = 3.0
//! hom_delay_ns = 3.0
//!
//! [run]
//! n_pulse_pairs = 100000
//! seed = 7
//! ```
//!
//! Unknown keys are rejected. Geometry is given in ns, emitter times in ps
//! and detuning in GHz.

use homsim_core::model::{
    BeamSplitter, EmissionLine, EmitterParams, ExcitationScheme, InterferometerGeometry,
    JitterModel, ABOVE_BAND_JITTER_PS, DEFAULT_PUMP_PULSE_PS,
};
use homsim_core::montecarlo::{
    default_grid_step, ArrivalTiming, IncoherentExcitation, SimulationConfig, SourceStatistics,
};
use homsim_core::shaping::{DetectorIRF, TemporalGate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub emitter: EmitterSection,
    #[serde(default)]
    pub optics: OpticsSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub shaping: ShapingSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qualitative: Option<QualitativeSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSection {
    pub t1_ps: f64,
    pub t2_ps: f64,
    #[serde(default)]
    pub line: EmissionLine,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<ExcitationScheme>,
    /// Overrides the scheme preset when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<JitterModel>,
    #[serde(default = "one")]
    pub efficiency: f64,
    #[serde(default = "default_pump_pulse")]
    pub pump_pulse_ps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticsSection {
    #[serde(default = "half")]
    pub reflectance: f64,
    #[serde(default = "half")]
    pub transmittance: f64,
    #[serde(default = "three")]
    pub pump_delay_ns: f64,
    /// Extra pump delay, so that the photon delay is `τ = pump - hom`.
    #[serde(default)]
    pub delay_offset_ps: f64,
    #[serde(default = "three")]
    pub hom_delay_ns: f64,
    #[serde(default = "default_rep_rate")]
    pub rep_rate_mhz: f64,
}

impl Default for OpticsSection {
    fn default() -> Self {
        Self {
            reflectance: 0.5,
            transmittance: 0.5,
            pump_delay_ns: 3.0,
            delay_offset_ps: 0.0,
            hom_delay_ns: 3.0,
            rep_rate_mhz: 81.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_pairs")]
    pub n_pulse_pairs: u64,
    #[serde(default = "one_u64")]
    pub seed: u64,
    #[serde(default = "default_bin")]
    pub bin_width_ps: f64,
    #[serde(default = "default_range")]
    pub range_ns: f64,
    #[serde(default = "one")]
    pub integration_halfwidth_ns: f64,
    #[serde(default)]
    pub timing: ArrivalTiming,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_grid_step_ps: Option<f64>,
    #[serde(default)]
    pub dark_count_rate_hz: f64,
    #[serde(default)]
    pub source: SourceStatistics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap_override: Option<f64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            n_pulse_pairs: default_pairs(),
            seed: 1,
            bin_width_ps: default_bin(),
            range_ns: default_range(),
            integration_halfwidth_ns: 1.0,
            timing: ArrivalTiming::default(),
            time_grid_step_ps: None,
            dark_count_rate_hz: 0.0,
            source: SourceStatistics::default(),
            overlap_override: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapingSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irf: Option<IrfSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSection {
    pub fwhm_ps: f64,
    /// Defaults to one FWHM after the trigger.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ps: Option<f64>,
    #[serde(default = "one")]
    pub peak_transmission: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrfSection {
    /// FWHM of the Gaussian timing response.
    pub resolution_ps: f64,
}

/// Phenomenological knobs for the detuning and pulse-length scans. Their
/// output is qualitative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualitativeSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning_ghz: Option<f64>,
    #[serde(default = "default_detuning_width")]
    pub detuning_width_ghz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_length_ps: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EventFormat {
    #[default]
    Text,
    Binary,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default)]
    pub events_format: EventFormat,
    #[serde(default = "yes")]
    pub write_events: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: None, events_format: EventFormat::Text, write_events: true }
    }
}

fn one() -> f64 {
    1.0
}
fn one_u64() -> u64 {
    1
}
fn half() -> f64 {
    0.5
}
fn three() -> f64 {
    3.0
}
fn yes() -> bool {
    true
}
fn default_pump_pulse() -> f64 {
    DEFAULT_PUMP_PULSE_PS
}
fn default_rep_rate() -> f64 {
    81.0
}
fn default_pairs() -> u64 {
    100_000
}
fn default_bin() -> f64 {
    homsim_core::histogram::DEFAULT_BIN_WIDTH_PS
}
fn default_range() -> f64 {
    homsim_core::histogram::DEFAULT_RANGE_PS / 1e3
}
fn default_detuning_width() -> f64 {
    60.0
}

/// Fraction of excitations attributed to incoherent pumping at a detuning.
pub fn incoherent_fraction(detuning_ghz: f64, width_ghz: f64) -> f64 {
    1.0 - (-0.5 * (detuning_ghz / width_ghz).powi(2)).exp()
}

fn field_error(field: &str, err: impl std::fmt::Display) -> CliError {
    CliError::config(format!("{field}: {err}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    /// Fills every default explicitly: scheme presets become a concrete
    /// jitter, the gate delay and lattice step are written out.
    pub fn normalized(&self) -> Self {
        let mut cfg = self.clone();
        if cfg.emitter.jitter.is_none() {
            let jitter = match cfg.emitter.scheme {
                Some(s) => s.jitter_preset(cfg.emitter.line, cfg.emitter.pump_pulse_ps),
                None => JitterModel::None,
            };
            cfg.emitter.jitter = Some(jitter);
        }
        if let Some(g) = cfg.shaping.gate.as_mut() {
            g.delay_ps.get_or_insert(g.fwhm_ps);
        }
        if cfg.run.time_grid_step_ps.is_none() && cfg.emitter.t1_ps > 0.0 && cfg.emitter.t2_ps > 0.0 {
            let e = EmitterParams::ideal(cfg.emitter.t1_ps, cfg.emitter.t2_ps);
            if let Ok(e) = e {
                cfg.run.time_grid_step_ps = Some(default_grid_step(&e));
            }
        }
        cfg
    }

    /// SHA-256 over the normalized physics and run sections (the output
    /// section is excluded), hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut n = self.normalized();
        n.output = OutputSection::default();
        let mut h = Sha256::new();
        h.update(n.to_toml().as_bytes());
        h.update(format!("\nseed = {}\n", n.run.seed).as_bytes());
        hex::encode(h.finalize())
    }

    pub fn emitter_params(&self) -> Result<EmitterParams, CliError> {
        let n = self.normalized();
        let e = &n.emitter;
        let mut jitter = e.jitter.unwrap_or_default();
        if let Some(q) = &n.qualitative {
            if let Some(len) = q.pulse_length_ps {
                if !(len.is_finite() && len >= 0.0) {
                    return Err(field_error("qualitative.pulse_length_ps", "must be finite and >= 0"));
                }
                jitter = JitterModel::Gaussian { sigma_ps: len };
            }
        }
        EmitterParams::new(e.t1_ps, e.t2_ps, jitter, e.efficiency).map_err(|err| field_error("emitter", err))
    }

    pub fn beamsplitter(&self) -> Result<BeamSplitter, CliError> {
        BeamSplitter::new(self.optics.reflectance, self.optics.transmittance)
            .map_err(|err| field_error("optics", err))
    }

    pub fn geometry(&self) -> Result<InterferometerGeometry, CliError> {
        let o = &self.optics;
        if !(o.rep_rate_mhz.is_finite() && o.rep_rate_mhz > 0.0) {
            return Err(field_error("optics.rep_rate_mhz", "must be > 0"));
        }
        InterferometerGeometry::new(
            o.pump_delay_ns * 1e3 + o.delay_offset_ps,
            o.hom_delay_ns * 1e3,
            1e6 / o.rep_rate_mhz,
            self.run.integration_halfwidth_ns * 1e3,
        )
        .map_err(|err| field_error("optics", err))
    }

    pub fn gate(&self) -> Result<Option<TemporalGate>, CliError> {
        self.normalized()
            .shaping
            .gate
            .map(|g| {
                TemporalGate::new(g.fwhm_ps, g.delay_ps.unwrap_or(g.fwhm_ps), g.peak_transmission)
                    .map_err(|err| field_error("shaping.gate", err))
            })
            .transpose()
    }

    pub fn irf(&self) -> Result<Option<DetectorIRF>, CliError> {
        self.shaping
            .irf
            .as_ref()
            .map(|i| DetectorIRF::new(i.resolution_ps).map_err(|err| field_error("shaping.irf", err)))
            .transpose()
    }

    pub fn range_ps(&self) -> f64 {
        self.run.range_ns * 1e3
    }

    /// Simulation settings; also checks every cross-field invariant.
    pub fn simulation(&self) -> Result<SimulationConfig, CliError> {
        let n = self.normalized();
        let emitter = n.emitter_params()?;
        let mut sim = SimulationConfig::new(emitter, n.beamsplitter()?, n.geometry()?, n.run.n_pulse_pairs, n.run.seed);
        if let Some(step) = n.run.time_grid_step_ps {
            sim.time_grid_step = step;
        }
        sim.gate = n.gate()?;
        sim.irf = n.irf()?;
        sim.dark_count_rate_hz = n.run.dark_count_rate_hz;
        sim.timing = n.run.timing;
        sim.source = n.run.source;
        sim.overlap_override = n.run.overlap_override;
        if let Some(q) = &n.qualitative {
            if let Some(d) = q.detuning_ghz {
                if !(d.is_finite() && q.detuning_width_ghz > 0.0) {
                    return Err(field_error("qualitative.detuning_ghz", "needs a finite detuning and a positive width"));
                }
                sim.incoherent = Some(IncoherentExcitation {
                    fraction: incoherent_fraction(d, q.detuning_width_ghz),
                    jitter: JitterModel::Gaussian { sigma_ps: ABOVE_BAND_JITTER_PS },
                });
            }
        }
        sim.validate().map_err(|err| field_error("run", err))?;
        if n.run.n_pulse_pairs == 0 {
            return Err(field_error("run.n_pulse_pairs", "must be > 0"));
        }
        homsim_core::histogram::CoincidenceHistogram::new(n.run.bin_width_ps, n.range_ps())
            .map_err(|err| field_error("run.bin_width_ps", err))?;
        if n.geometry()?.cluster_span() + n.geometry()?.integration_halfwidth() > n.range_ps() {
            return Err(field_error("run.range_ns", "histogram range must cover ±(pump_delay + hom_delay + integration_halfwidth)"));
        }
        Ok(sim)
    }

    /// Full validation without running anything.
    pub fn validate(&self) -> Result<(), CliError> {
        self.simulation().map(|_| ())
    }

    /// Free-form scheme label for reports.
    pub fn scheme_label(&self) -> String {
        let line = match self.emitter.line {
            EmissionLine::Exciton => "exciton",
            EmissionLine::Biexciton => "biexciton",
        };
        match self.emitter.scheme {
            Some(s) => format!("{} {line}", s.label()),
            None => format!("custom {line}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[emitter]\nt1_ps = 800.0\nt2_ps = 450.0\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.optics, OpticsSection::default());
        assert_eq!(c.run.seed, 1);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = ExperimentConfig::parse("[emitter]\nt1_ps = 800.0\nt2_ps = 450.0\ncolour = 1\n").unwrap_err();
        assert!(err.message.contains("colour"), "{}", err.message);
        assert!(err.message.contains("line 4"), "{}", err.message);
    }

    #[test]
    fn normalize_round_trip_is_idempotent() {
        let text = format!("{MINIMAL}scheme = \"two-photon-resonant\"\n[shaping.gate]\nfwhm_ps = 200.0\n");
        let a = ExperimentConfig::parse(&text).unwrap().normalized();
        let b = ExperimentConfig::parse(&a.to_toml()).unwrap().normalized();
        assert_eq!(a, b);
        assert_eq!(a.to_toml(), b.to_toml());
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn fingerprint_ignores_output_but_not_seed() {
        let a = ExperimentConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output.dir = Some("elsewhere".into());
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.run.seed = 2;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn pump_delay_beyond_period_names_invariant() {
        let text = format!("{MINIMAL}[optics]\npump_delay_ns = 13.0\nhom_delay_ns = 3.0\n");
        let err = ExperimentConfig::parse(&text).unwrap().validate().unwrap_err();
        assert!(err.message.contains("pump_delay must be shorter than rep_period"), "{}", err.message);
    }

    #[test]
    fn qualitative_mapping() {
        assert_eq!(incoherent_fraction(0.0, 60.0), 0.0);
        assert!(incoherent_fraction(140.0, 60.0) > incoherent_fraction(60.0, 60.0));
        let text = format!("{MINIMAL}[qualitative]\npulse_length_ps = 8.0\ndetuning_ghz = 40.0\n");
        let sim = ExperimentConfig::parse(&text).unwrap().simulation().unwrap();
        assert_eq!(sim.emitter.jitter(), JitterModel::Gaussian { sigma_ps: 8.0 });
        assert!(sim.incoherent.unwrap().fraction > 0.0);
    }
}
