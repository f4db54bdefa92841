//! Hong-Ou-Mandel interference of photons from a pulsed single-photon emitter.
//!
//! The crate is organised the way the measurement is:
//!
//! - [`model`]: domain types and the closed-form coincidence probability.
//! - [`montecarlo`]: dephasing trajectories, per-pair interference and full
//!   detection-event streams for the double-pulse pump / imbalanced-Michelson
//!   analysis setup.
//! - [`histogram`]: start-stop coincidence histograms and five-peak integration.
//! - [`shaping`]: intensity-modulator gating and detector response convolution.
//! - [`fitting`]: weighted least-squares recovery of T1 and T2.
//!
//! All times are picoseconds (`f64`) unless a field name says otherwise.

pub mod error;
pub mod fitting;
pub mod histogram;
pub mod model;
pub mod montecarlo;
pub mod rng;
pub mod shaping;
mod special;

pub use error::{Error, Result};
pub use histogram::{
    build_histogram, integrate_peaks, normalized_opposite_probability, CoincidenceHistogram,
    PeakAreas,
};
pub use model::{
    beamsplitter_transform, coincidence_probability, indistinguishability, mean_squared_overlap,
    BeamSplitter, EmissionLine, EmitterParams, ExcitationScheme, FieldAmplitudePair,
    InterferometerGeometry, JitterModel,
};
pub use montecarlo::{
    generate_event_stream, hom_pair_outcome, pair_overlap, sample_photon, ArrivalTiming,
    DetectionEvent, Detector, PairOutcome, PhotonRealization, SimulationConfig, SourceStatistics,
};
pub use shaping::{
    apply_gate_to_events, apply_gate_to_wavepacket, convolve_with_irf, DetectorIRF, TemporalGate,
};
