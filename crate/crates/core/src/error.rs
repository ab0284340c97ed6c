use thiserror::Error;

/// Everything that can go wrong inside the library.
///
/// The CLI maps these onto process exit codes through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("state does not fit the boson cutoff: {0}")]
    Cutoff(String),

    #[error("cutoff tail {tail:.3e} exceeds threshold {threshold:.1e} (n_max = {n_max})")]
    CutoffTail {
        tail: f64,
        threshold: f64,
        n_max: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported generator: {0}")]
    UnsupportedGenerator(String),

    #[error("angle grid of {points} points aliases offsets up to {m_max} (need at least {required})")]
    Aliasing {
        points: usize,
        m_max: usize,
        required: usize,
    },

    #[error("no exponential window: {0}")]
    NoExponentialWindow(String),

    #[error("insufficient statistics: {levels} levels (need {required})")]
    InsufficientStatistics { levels: usize, required: usize },

    #[error("step size underflow at t = {t} ms")]
    StepUnderflow { t: f64 },

    #[error("resource ceiling exceeded: {0}")]
    ResourceLimit(String),

    #[error("{}", config_message(*.line, .key.as_deref(), .message))]
    Config {
        line: Option<usize>,
        key: Option<String>,
        message: String,
    },

    #[error("LAPACK {routine} failed with info = {info}")]
    Lapack { routine: &'static str, info: i32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn config_message(line: Option<usize>, key: Option<&str>, message: &str) -> String {
    match (line, key) {
        (Some(l), Some(k)) => format!("config line {l}, key `{k}`: {message}"),
        (Some(l), None) => format!("config line {l}: {message}"),
        (None, Some(k)) => format!("config key `{k}`: {message}"),
        (None, None) => format!("config: {message}"),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Exit code used by the command-line front end.
    ///
    /// 2 for anything caught by validation before computing, 3 for numerical
    /// contract violations found while computing, 1 for I/O trouble.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter { .. }
            | Error::Cutoff(_)
            | Error::UnsupportedGenerator(_)
            | Error::Aliasing { .. }
            | Error::ResourceLimit(_)
            | Error::Config { .. } => 2,
            Error::CutoffTail { .. }
            | Error::Contract(_)
            | Error::Numerical(_)
            | Error::NoExponentialWindow(_)
            | Error::InsufficientStatistics { .. }
            | Error::StepUnderflow { .. }
            | Error::Lapack { .. } => 3,
            Error::Io(_) | Error::Json(_) => 1,
        }
    }
}
