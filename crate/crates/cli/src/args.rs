use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Simulate critical affine recursions on the nonnegative cone and check
/// their structural properties.
#[derive(Debug, Parser)]
#[command(name = "critmat", version)]
pub struct Cli {
    /// Ensemble spec (JSON).
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,

    /// Master seed; the CRITMAT_SEED environment variable takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "critmat-out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the standing hypotheses on a sample of the law.
    CheckHypotheses {
        /// Sample size.
        #[arg(long, default_value_t = 10_000)]
        n: usize,
    },
    /// Estimate the Lyapunov exponent by independent replicates.
    EstimateLyapunov {
        /// Steps per replicate.
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        reps: usize,
    },
    /// Rescale the law to zero Lyapunov exponent and write the new spec.
    Calibrate {
        #[arg(long, default_value_t = critmat::ensemble::DEFAULT_TARGET_TOL)]
        tol: f64,
    },
    /// Survival curves of the matrix-norm stopping time.
    Survival(SurvivalArgs),
    /// Central limit normalization of the log matrix norm.
    Clt {
        #[arg(long, default_value_t = 1_000)]
        n: usize,
        #[arg(long, default_value_t = 1_000)]
        reps: usize,
    },
    /// Ladder-time block decomposition.
    Ladder(LadderArgs),
    /// Conservativity, local contractivity and Bernoulli divergence.
    Contractivity(ContractivityArgs),
    /// Occupation histogram estimate of the invariant measure.
    InvariantMeasure(MeasureArgs),
    /// Slow-variation and sandwich diagnostics of the radial tail.
    TailReport {
        /// Histogram CSV from `invariant-measure`; simulated afresh if absent.
        #[arg(long)]
        histogram: Option<PathBuf>,
        #[command(flatten)]
        measure: MeasureArgs,
    },
    /// Empirical stopping-time survival against the exact first-passage law
    /// of the rank-one reduction.
    OracleCompare {
        #[arg(long, default_value_t = 2.0)]
        a: f64,
        /// Largest step compared.
        #[arg(long, default_value_t = 1_000)]
        n: usize,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
    },
}

#[derive(Debug, Args)]
pub struct SurvivalArgs {
    /// Levels `a`, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub a: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 10_000)]
    pub cap: u64,
    /// Steps at which survival is recorded; defaults to 10 points per decade.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<u64>>,
    /// Start vector for the vector-mode time; paired with the norm-mode time.
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct LadderArgs {
    #[arg(long, default_value_t = 2.0)]
    pub a: f64,
    /// Blocks per sample.
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Samples.
    #[arg(long, default_value_t = 1_000)]
    pub reps: usize,
    #[arg(long, default_value_t = 1_000_000)]
    pub cap: u64,
    /// Start vector; defaults to the first basis vector.
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ContractivityArgs {
    /// Steps per path.
    #[arg(long, default_value_t = 1_000_000)]
    pub n: u64,
    /// Paths.
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Start vector; defaults to the first basis vector.
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
    /// Partner start vector; defaults to 5 times the last basis vector.
    #[arg(long, value_delimiter = ',')]
    pub y0: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    /// Steps per chain.
    #[arg(long, default_value_t = 10_000_000)]
    pub n: u64,
    /// Independent chains, merged.
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    /// Start vector; defaults to the first basis vector.
    #[arg(long, value_delimiter = ',')]
    pub x0: Option<Vec<f64>>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CheckHypotheses { .. } => "check-hypotheses",
            Command::EstimateLyapunov { .. } => "estimate-lyapunov",
            Command::Calibrate { .. } => "calibrate",
            Command::Survival(_) => "survival",
            Command::Clt { .. } => "clt",
            Command::Ladder(_) => "ladder",
            Command::Contractivity(_) => "contractivity",
            Command::InvariantMeasure(_) => "invariant-measure",
            Command::TailReport { .. } => "tail-report",
            Command::OracleCompare { .. } => "oracle-compare",
        }
    }

    /// Whether the command can run without `--spec`.
    pub fn spec_optional(&self) -> bool {
        matches!(self, Command::TailReport { histogram: Some(_), .. })
    }
}
