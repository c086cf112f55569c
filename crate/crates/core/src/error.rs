//! Error type shared by all engine modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// A constructor or operation argument violated its precondition.
    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: String, message: String },

    /// Field or operator does not belong to the expected grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Dense operator assembly above the configured node budget.
    #[error("dense assembly rejected: {nodes} nodes exceeds budget of {budget}")]
    DenseBudgetExceeded { nodes: usize, budget: usize },

    /// Matrix-free storage requires a compactly supported kernel.
    #[error("matrix-free storage requires a compactly supported kernel (shape {0})")]
    NonCompactKernel(String),

    /// Radial quadrature failed to converge under refinement.
    #[error("radial quadrature did not converge: {0}")]
    QuadratureDiverged(String),

    /// Reaction metadata required by a checker is absent.
    #[error("reaction `{system}` does not declare {what}")]
    MissingMetadata { system: String, what: String },

    /// A sampled growth fit did not settle on a polynomial degree.
    #[error("degree estimate did not converge: {0}")]
    DegreeFitDiverged(String),

    /// Lp energy terms would overflow f64 range.
    #[error("Lp energy overflow: {0}; rescale the field before computing the energy")]
    EnergyOverflow(String),

    /// Multi-index enumeration above the configured cap.
    #[error("multi-index enumeration for m={m}, p={p} needs {terms} terms (cap {cap})")]
    TermCapExceeded { m: usize, p: u32, terms: u128, cap: u128 },

    /// Positive-definiteness certification did not terminate.
    #[error("theta certification failed after {0} doublings")]
    ThetaCertification(u32),

    /// I/O error while importing or exporting fields.
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed CSV input.
    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: usize, message: String },
}

impl CoreError {
    pub fn invalid(name: &str, message: impl Into<String>) -> Self {
        CoreError::InvalidParameter {
            name: name.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
