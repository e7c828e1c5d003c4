use thiserror::Error;

#[derive(Debug, Error)]
pub enum KdvError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("band factorization is singular at row {row}")]
    Singular { row: usize },
    #[error("non-finite value produced at time step {step}")]
    NonFinite { step: usize },
    #[error("inner Picard iteration did not converge at time step {step} (increment {increment:.3e})")]
    InnerPicard { step: usize, increment: f64 },
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("missing required keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("{phase}: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<KdvError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, KdvError>;

pub(crate) fn check_len(v: &[f64], n: usize) -> Result<()> {
    if v.len() == n {
        Ok(())
    } else {
        Err(KdvError::Dimension { expected: n, got: v.len() })
    }
}
