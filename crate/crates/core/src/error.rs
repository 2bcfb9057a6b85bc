use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid case: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("power flow did not converge after {iterations} iterations (max mismatch {max_mismatch:.3e} p.u.)")]
    NonConvergence { iterations: usize, max_mismatch: f64 },

    #[error("singular power-flow jacobian at iteration {iteration}")]
    SingularJacobian { iteration: usize },

    #[error("singular {what} (condition estimate {condition:.3e})")]
    SingularMatrix { what: &'static str, condition: f64 },

    #[error("clearing line {from}-{to} islands buses {island:?}")]
    Island {
        from: usize,
        to: usize,
        island: Vec<usize>,
    },

    #[error("machine {machine} lost synchronism at t = {t:.4} s (omega = {omega:.5} p.u.)")]
    Instability { machine: usize, t: f64, omega: f64 },

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("covariance factorization failed after jitter {jitter:e}")]
    Factorization { jitter: f64 },

    #[error("zero reconstructed voltage at bus {bus}")]
    ZeroVoltage { bus: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn at_frame(self, index: usize) -> Self {
        Error::Frame {
            index,
            source: Box::new(self),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
