use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("confinement-induced resonance: 1.4603 * a_s/u_perp = {0} >= 1")]
    ConfinementResonance(f64),

    #[error("non-finite field at step {step} (t = {t}); step too large or box too small")]
    NonFinite { step: u64, t: f64 },

    #[error("time step {dt} does not land on the imprint time {t_imprint}")]
    ImprintMisaligned { dt: f64, t_imprint: f64 },

    #[error("time range [{start}, {end}] is invalid for this protocol")]
    InvalidTimeRange { start: f64, end: f64 },

    #[error("stationary solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("parity violation {deviation:e} exceeds tolerance")]
    ParityViolation { deviation: f64 },

    #[error("series window too short: spans {span} but {required} required")]
    WindowTooShort { span: f64, required: f64 },

    #[error("time series invalid: {0}")]
    InvalidSeries(String),

    #[error("two-mode norm drift {drift:e} exceeds bound")]
    NormDrift { drift: f64 },

    #[error("no instability onset in d range [{lo}, {hi}]")]
    NoOnset { lo: f64, hi: f64 },

    #[error("lowest BdG frequency changed by {relative_change:.3e} under grid refinement")]
    DiscretizationDependent { relative_change: f64 },

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("correlation length {corr_length} not resolved by grid spacing {dx}")]
    UnresolvedCorrelation { corr_length: f64, dx: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Io { .. } => 4,
            Error::Config(_)
            | Error::InvalidParameter { .. }
            | Error::InvalidGrid(_)
            | Error::ImprintMisaligned { .. }
            | Error::InvalidTimeRange { .. }
            | Error::ConfinementResonance(_)
            | Error::UnresolvedCorrelation { .. } => 2,
            _ => 3,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
