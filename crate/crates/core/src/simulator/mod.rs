//! Log-domain simulation of the chain and of matrix products, stopping
//! times, ladder blocks and trajectory observers.

mod ladder;
mod observers;
mod state;
mod stopping;

pub use ladder::{
    ladder_decomposition, ladder_study, BlockKs, LadderBlock, LadderSample, LadderStudy, DEFAULT_LADDER_CAP,
    LADDER_NORM_TOL,
};
pub use observers::{
    default_eps, default_k_bound, observer_study, run_trajectory, BernoulliConfig, BernoulliReport, ConservativityReport,
    ContractivityConfig, ContractivityReport, ObserverReports, ObserverSet, ObserverStudy, PathSummary, OBSERVER_NAMES,
    PREPASS_STEPS,
};
pub use state::{LogSum, ProductBundle, SignedLogVec, TrajectoryState};
pub use stopping::{
    paired_stopping_times, stopping_time, StopMode, StopOutcome, BARRIER_SLACK, DEFAULT_STOPPING_CAP,
};
pub(crate) use stopping::check_level;
