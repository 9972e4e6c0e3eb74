use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate geometry: {0}")]
    Geometry(String),

    #[error("patch design error: {0}")]
    Design(String),

    #[error("quadrature did not converge: relative change {achieved:.3e} exceeds {tolerance:.1e}")]
    Quadrature { achieved: f64, tolerance: f64 },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("channel entry (m = {m}, k = {k}): {source}")]
    ChannelEntry {
        m: usize,
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "{discarded} of {total} Monte Carlo draws hit a singular precoder (limit {limit_percent}%)"
    )]
    StatisticalValidity {
        discarded: usize,
        total: usize,
        limit_percent: f64,
    },

    #[error("user drop infeasible: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that come from the numerical pipeline rather than
    /// from configuration or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Geometry(_)
                | Error::Design(_)
                | Error::Quadrature { .. }
                | Error::Singular { .. }
                | Error::ChannelEntry { .. }
                | Error::StatisticalValidity { .. }
                | Error::Infeasible(_)
        )
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Json(_) | Error::Parse(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
