//! JSON result records written next to every run.

use homsim_core::fitting::FitResult;
use homsim_core::histogram::{PeakAreas, ProbabilityEstimate};
use homsim_core::model::InterferometerGeometry;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryInfo {
    pub pump_delay_ps: f64,
    pub hom_delay_ps: f64,
    pub rep_period_ps: f64,
    pub integration_halfwidth_ps: f64,
}

impl From<&InterferometerGeometry> for GeometryInfo {
    fn from(g: &InterferometerGeometry) -> Self {
        Self {
            pump_delay_ps: g.pump_delay(),
            hom_delay_ps: g.hom_delay(),
            rep_period_ps: g.rep_period(),
            integration_halfwidth_ps: g.integration_halfwidth(),
        }
    }
}

impl GeometryInfo {
    /// Same interferometer up to the pump delay, which sweeps vary.
    pub fn compatible(&self, other: &Self) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0);
        close(self.hom_delay_ps, other.hom_delay_ps)
            && close(self.rep_period_ps, other.rep_period_ps)
            && close(self.integration_halfwidth_ps, other.integration_halfwidth_ps)
            && close(self.pump_delay_ps, other.pump_delay_ps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub result: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    pub events: u64,
    /// The only field that differs between identical reruns.
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub fingerprint: String,
    pub command: String,
    pub label: String,
    pub qualitative: bool,
    pub seed: u64,
    pub t1_ps: f64,
    pub t2_ps: f64,
    pub geometry: GeometryInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peaks: Option<PeakAreas>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<ProbabilityEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
    pub metadata: Metadata,
}

impl ResultRecord {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("records serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::config(format!("record: {e}")))
    }

    /// `T2/(2T1)` from a fit when present, else `1 - 2·P(0)` from the peaks.
    pub fn indistinguishability(&self) -> Option<f64> {
        if let Some(f) = &self.fit {
            return Some(f.result.indistinguishability(0));
        }
        self.probability.map(|p| 1.0 - 2.0 * p.value)
    }
}
