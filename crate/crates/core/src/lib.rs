//! Averaged circuit models of two-switch DC-DC converters (SEPIC and Cuk).
//!
//! The MOSFET/diode pair is replaced by one averaged two-port that covers
//! both continuous and discontinuous conduction through the combined duty
//! law `μ = max(D, 1/(1 + Re·I1/V2))`. On top of it the crate provides
//!
//! * DC operating points with automatic mode resolution ([`dc`]),
//! * large-signal transients with duty ramps and parameter steps ([`transient`]),
//! * small-signal `Gvd`/`Gvg` frequency responses and stability margins ([`small_signal`]),
//! * a cycle-by-cycle switched simulation used as ground truth ([`switched`]).

pub mod averaged;
pub mod converter;
pub mod dc;
pub mod error;
pub mod network;
mod numeric;
pub mod small_signal;
pub mod state;
pub mod switched;
pub mod transient;

pub use averaged::{AveragedPortState, Mode, SwitchIntervalDuties};
pub use converter::{
    ConverterKind, ConverterSpec, OperatingPointRequest, Parasitics, SteppedParameter,
};
pub use dc::{solve_dc, sweep_duty, OperatingPoint};
pub use error::{Error, Result};
pub use small_signal::{
    frequency_response, linearize, FrequencyResponse, LinearModel, Margins, TransferInput,
};
pub use state::StateVector;
pub use switched::{cycle_average, run_switched, SwitchedRunConfig};
pub use transient::{simulate, PiecewiseLinear, Stimulus, Waveform};
