use thiserror::Error;

use crate::circuit::ValidationReport;

pub type Result<T, E = QnnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QnnError {
    #[error("invalid circuit:\n{0}")]
    InvalidCircuit(ValidationReport),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("local Hilbert space of qubit {qubit} spans {local_qubits} qubits, above the cap of {cap}")]
    Capacity {
        qubit: usize,
        local_qubits: usize,
        cap: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("family construction failed: {0}")]
    Construction(String),

    #[error("kernel block is ill-conditioned (condition number {condition:.3e})")]
    Conditioning { condition: f64 },

    #[error("non-finite value encountered at step {step}")]
    NumericFault { step: usize },

    #[error("flow integrator rejected step {step}: loss rose by {increase:.3e}; try a smaller step")]
    StepRejected { step: usize, increase: f64 },
}
