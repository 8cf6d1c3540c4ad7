//! Laws of the driving pairs `(A_n, B_n)`: specification, sampling,
//! Lyapunov exponent, calibration to criticality and hypothesis checks.

mod hypotheses;
mod lyapunov;
mod spec;

pub use hypotheses::{
    check_hypotheses, log_spectral_radius, spectral_radius, A2Verdict, HypothesisReport, A2_CAVEAT,
    A2_MAX_PRODUCT, A4_TOL,
};
pub use lyapunov::{
    calibrate_critical, estimate_lyapunov, expanding_fraction, Calibration, LyapunovEstimate,
    DEFAULT_TARGET_TOL, Z95,
};
pub use spec::{Atom, AtomFile, EnsembleSpec, Generator, GeneratorFile, Law, Sampler, SpecFile};
