use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A converter parameter violates its invariant.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular Jacobian at the current iterate")]
    SingularJacobian,

    #[error("step size underflow at t = {time:.6e} s (h = {step:.3e} s)")]
    StepSizeUnderflow { time: f64, step: f64 },

    #[error("diode current changed sign more than once within one step at t = {time:.6e} s")]
    EventDetection { time: f64 },

    #[error(
        "cycle {index} is not contained in the recorded waveform ({available} cycles available)"
    )]
    CycleOutOfRange { index: usize, available: usize },
}
