//! Parameter sweeps.
//!
//! ```toml
//! parameter = "optics.delay_offset_ps"
//! linspace = { start = -1500.0, stop = 1500.0, num = 15 }
//! n_pulse_pairs = 200000
//! ```
//!
//! `values = [0.0, 100.0, "none"]` may replace `linspace`; `"none"` removes
//! the section that holds the parameter (for example the gate).

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Sweeping this path moves the photon delay `τ`; such sweeps end with a fit.
pub const DELAY_PARAMETER: &str = "optics.delay_offset_ps";

/// Most points a single sweep may request.
pub const MAX_SWEEP_POINTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Number(f64),
    Label(String),
}

impl SweepValue {
    pub fn label(&self) -> String {
        match self {
            SweepValue::Number(v) => v.to_string(),
            SweepValue::Label(s) => s.clone(),
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            SweepValue::Number(v) => Some(*v),
            SweepValue::Label(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linspace {
    pub start: f64,
    pub stop: f64,
    pub num: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<SweepValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linspace: Option<Linspace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_pulse_pairs: Option<u64>,
    /// Fit the resulting P(τ) curve; only meaningful for delay sweeps.
    #[serde(default = "yes")]
    pub fit: bool,
}

fn yes() -> bool {
    true
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let spec: Self = toml::from_str(text).map_err(|e| CliError::config(format!("sweep spec: {e}")))?;
        spec.points()?;
        Ok(spec)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| e.context(path.display()))
    }

    pub fn points(&self) -> Result<Vec<SweepValue>, CliError> {
        let pts = match (&self.values, &self.linspace) {
            (Some(v), None) => v.clone(),
            (None, Some(l)) => {
                if l.num < 2 || !(l.start.is_finite() && l.stop.is_finite()) {
                    return Err(CliError::config("sweep spec: linspace needs finite bounds and num >= 2"));
                }
                if l.num > MAX_SWEEP_POINTS {
                    return Err(CliError::config(format!("sweep spec: num exceeds {MAX_SWEEP_POINTS}")));
                }
                (0..l.num)
                    .map(|i| SweepValue::Number(l.start + (l.stop - l.start) * i as f64 / (l.num - 1) as f64))
                    .collect()
            }
            _ => return Err(CliError::config("sweep spec: give exactly one of `values` or `linspace`")),
        };
        if pts.len() < 2 {
            return Err(CliError::config("sweep spec: at least two sweep points are required"));
        }
        if pts.len() > MAX_SWEEP_POINTS {
            return Err(CliError::config(format!("sweep spec: more than {MAX_SWEEP_POINTS} points")));
        }
        for p in &pts {
            match p {
                SweepValue::Number(v) if !v.is_finite() => {
                    return Err(CliError::config("sweep spec: values must be finite"))
                }
                SweepValue::Label(s) if s != "none" => {
                    return Err(CliError::config(format!("sweep spec: unknown label `{s}` (only \"none\")")))
                }
                _ => {}
            }
        }
        Ok(pts)
    }

    pub fn is_delay_sweep(&self) -> bool {
        self.parameter == DELAY_PARAMETER
    }
}

/// Copy of `base` with `path` set to `value`; the result is re-validated
/// against the schema so unknown paths are rejected.
pub fn apply(base: &ExperimentConfig, path: &str, value: &SweepValue) -> Result<ExperimentConfig, CliError> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.len() < 2 || keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::config(format!("sweep parameter `{path}`: expected `section.key`")));
    }
    let mut root = toml::Value::try_from(base.normalized())
        .map_err(|e| CliError::runtime(format!("cannot re-encode configuration: {e}")))?;
    let (leaf, parents) = keys.split_last().expect("at least two keys");
    let mut table = root.as_table_mut().expect("configuration is a table");
    if let SweepValue::Label(_) = value {
        let (section, grand) = parents.split_last().expect("at least one parent");
        for k in grand {
            match table.get_mut(*k).and_then(|v| v.as_table_mut()) {
                Some(t) => table = t,
                None => return Ok(base.clone()),
            }
        }
        table.remove(*section);
    } else {
        for k in parents {
            table = table
                .entry(k.to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()))
                .as_table_mut()
                .ok_or_else(|| CliError::config(format!("sweep parameter `{path}`: `{k}` is not a section")))?;
        }
        let v = value.as_number().expect("numeric value");
        if table.contains_key("kind") {
            match *leaf {
                "sigma_ps" => {
                    table.insert("kind".into(), toml::Value::String("gaussian".into()));
                    table.remove("tau_ps");
                }
                "tau_ps" => {
                    table.insert("kind".into(), toml::Value::String("exponential".into()));
                    table.remove("sigma_ps");
                }
                _ => {}
            }
        }
        let existing = table.get(*leaf).cloned();
        let new = match existing {
            Some(toml::Value::Integer(_)) if v.fract() == 0.0 => toml::Value::Integer(v as i64),
            _ => toml::Value::Float(v),
        };
        table.insert(leaf.to_string(), new);
    }
    let text = toml::to_string(&root).map_err(|e| CliError::runtime(e.to_string()))?;
    ExperimentConfig::parse(&text).map_err(|e| CliError::config(format!("sweep parameter `{path}`: {}", e.message)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig::parse("[emitter]\nt1_ps = 375.0\nt2_ps = 270.0\n").unwrap()
    }

    #[test]
    fn linspace_points() {
        let s = SweepSpec::parse("parameter = \"optics.delay_offset_ps\"\nlinspace = { start = -10.0, stop = 10.0, num = 5 }\n").unwrap();
        let p = s.points().unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p[1], SweepValue::Number(-5.0));
        assert!(s.is_delay_sweep());
    }

    #[test]
    fn single_point_is_rejected() {
        assert!(SweepSpec::parse("parameter = \"emitter.t1_ps\"\nvalues = [1.0]\n").is_err());
    }

    #[test]
    fn unknown_parameter_is_rejected() {
        let err = apply(&base(), "emitter.colour", &SweepValue::Number(1.0)).unwrap_err();
        assert!(err.message.contains("colour"));
    }

    #[test]
    fn gate_can_be_added_and_removed() {
        let with = apply(&base(), "shaping.gate.fwhm_ps", &SweepValue::Number(200.0)).unwrap();
        assert_eq!(with.shaping.gate.as_ref().unwrap().fwhm_ps, 200.0);
        let without = apply(&with, "shaping.gate.fwhm_ps", &SweepValue::Label("none".into())).unwrap();
        assert!(without.shaping.gate.is_none());
    }

    #[test]
    fn jitter_sigma_switches_kind() {
        let c = apply(&base(), "emitter.jitter.sigma_ps", &SweepValue::Number(100.0)).unwrap();
        assert_eq!(
            c.emitter.jitter,
            Some(homsim_core::model::JitterModel::Gaussian { sigma_ps: 100.0 })
        );
    }

    #[test]
    fn integer_fields_stay_integers() {
        let c = apply(&base(), "run.n_pulse_pairs", &SweepValue::Number(5000.0)).unwrap();
        assert_eq!(c.run.n_pulse_pairs, 5000);
    }
}
