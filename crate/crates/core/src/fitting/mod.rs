//! Parameter recovery from coincidence curves, dip shapes and decay traces.

mod curve;
mod dip;
mod lifetime;
mod lm;

pub use curve::{
    fit_coincidence_curve, fit_coincidence_curve_with, BootstrapSummary, CurveModel, DataPoint,
    Dataset, FitOptions, FitProblem, FitResult, SharedParameters, BOOTSTRAP_RESAMPLES, MIN_POINTS,
    T1_MAX_PS,
};
pub use dip::{dip_profile, fit_dip_shape, DipData, DipFit, DipGuess, DipMode};
pub use lifetime::{fit_exponential_lifetime, LifetimeFit, MIN_SAMPLES, SHAPE_P_THRESHOLD};
