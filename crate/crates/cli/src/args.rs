//! Command-line syntax.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "twoswitch",
    version,
    about = "Averaged-switch analysis of SEPIC and Cuk converters"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the DC operating point.
    Dc(DcArgs),
    /// Simulate the averaged model in time and write the waveform CSV.
    Tran(TranArgs),
    /// Small-signal frequency response with stability margins.
    Ac(AcArgs),
    /// Operating points over a range of duty cycles.
    Sweep(SweepArgs),
    /// Averaged model against the cycle-by-cycle switched circuit.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct ConverterArgs {
    /// Bundled configuration name (sepic_table1, cuk_table2) or file path.
    #[arg(long, short = 'c')]
    pub config: String,
    /// Force all parasitics to zero.
    #[arg(long)]
    pub ideal: bool,
}

#[derive(Debug, Args)]
pub struct DcArgs {
    #[command(flatten)]
    pub converter: ConverterArgs,
    /// Duty cycle; defaults to `D` from the configuration.
    #[arg(long, short = 'd')]
    pub duty: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitialState {
    /// All inductor currents and capacitor voltages zero.
    Zero,
    /// DC operating point at the initial duty.
    Dc,
}

#[derive(Debug, Args)]
pub struct TranArgs {
    #[command(flatten)]
    pub converter: ConverterArgs,
    #[arg(long, short = 'd')]
    pub duty: Option<f64>,
    /// End time in seconds.
    #[arg(long, default_value_t = 0.5)]
    pub t_end: f64,
    /// Ramp the duty linearly to this value.
    #[arg(long)]
    pub ramp_to: Option<f64>,
    /// Time at which the ramp ends; defaults to the end time.
    #[arg(long)]
    pub ramp_time: Option<f64>,
    /// Parameter step `TIME:PARAM:VALUE` with PARAM one of R_L1, R_L2, R
    /// (SI units); may be repeated.
    #[arg(long = "step", value_name = "TIME:PARAM:VALUE")]
    pub steps: Vec<String>,
    #[arg(long, value_enum, default_value_t = InitialState::Zero)]
    pub initial: InitialState,
    #[arg(long, default_value_t = 1e-6)]
    pub atol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub rtol: f64,
    /// Waveform CSV path; standard output when omitted.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AcInput {
    /// Duty to output voltage (Gvd).
    Duty,
    /// Source to output voltage (Gvg).
    Source,
}

#[derive(Debug, Args)]
pub struct AcArgs {
    #[command(flatten)]
    pub converter: ConverterArgs,
    #[arg(long, short = 'd')]
    pub duty: Option<f64>,
    #[arg(long, value_enum, default_value_t = AcInput::Duty)]
    pub input: AcInput,
    /// Lowest frequency in Hz.
    #[arg(long, default_value_t = 10.0)]
    pub f_start: f64,
    /// Highest frequency in Hz; defaults to half the switching frequency.
    #[arg(long)]
    pub f_stop: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub points_per_decade: usize,
    /// Bode CSV path; standard output when omitted.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub converter: ConverterArgs,
    #[arg(long, default_value_t = 0.2)]
    pub from: f64,
    #[arg(long, default_value_t = 0.9)]
    pub to: f64,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub converter: ConverterArgs,
    #[arg(long, short = 'd')]
    pub duty: Option<f64>,
    /// Switching periods to simulate.
    #[arg(long, default_value_t = 2000)]
    pub cycles: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps_per_cycle: usize,
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}
