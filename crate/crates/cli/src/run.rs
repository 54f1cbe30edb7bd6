use std::fs::File;
use std::io::Write;
use std::path::Path;

use twoswitch_core::converter::dcm_predicted;
use twoswitch_core::dc::sweep_duty;
use twoswitch_core::network::evaluate;
use twoswitch_core::small_signal::{default_grid, log_grid, Margins};
use twoswitch_core::transient::{simulate_with, TransientOptions};
use twoswitch_core::{
    cycle_average, frequency_response, linearize, run_switched, solve_dc, ConverterSpec,
    OperatingPoint, OperatingPointRequest, PiecewiseLinear, StateVector, SteppedParameter,
    Stimulus, SwitchedRunConfig, TransferInput,
};

use crate::args::{
    AcArgs, AcInput, Cli, Command, CompareArgs, ConverterArgs, DcArgs, InitialState, SweepArgs,
    TranArgs,
};
use crate::config::{load_config, Config};
use crate::CliError;

/// Scientific notation with 12 significant digits.
fn num(v: f64) -> String {
    format!("{v:.11e}")
}

fn io_error(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn csv_error(context: &str, e: csv::Error) -> CliError {
    CliError::Io {
        context: context.to_string(),
        source: std::io::Error::other(e.to_string()),
    }
}

fn write_csv(
    sink: &mut dyn Write,
    header: &[&str],
    rows: &[Vec<String>],
    context: &str,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header).map_err(|e| csv_error(context, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(context, e))?;
    }
    w.flush().map_err(io_error(context))
}

/// Writes the CSV to `output` (or `out` when absent) and the summary to the
/// other stream, so that standard output stays parseable either way.
fn emit(
    output: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
    header: &[&str],
    rows: &[Vec<String>],
    summary: &str,
) -> Result<(), CliError> {
    match output {
        Some(path) => {
            let context = format!("writing {}", path.display());
            let mut file = File::create(path).map_err(io_error(context.clone()))?;
            write_csv(&mut file, header, rows, &context)?;
            out.write_all(summary.as_bytes())
                .map_err(io_error("writing summary"))
        }
        None => {
            write_csv(out, header, rows, "writing CSV")?;
            err.write_all(summary.as_bytes())
                .map_err(io_error("writing summary"))
        }
    }
}

fn load(args: &ConverterArgs) -> Result<Config, CliError> {
    let mut cfg = load_config(&args.config)?;
    if args.ideal {
        cfg.spec = cfg.spec.as_ideal();
    }
    Ok(cfg)
}

fn duty_of(cfg: &Config, duty: Option<f64>) -> Result<f64, CliError> {
    duty.or(cfg.defaults.duty).ok_or_else(|| {
        CliError::Usage("no --duty given and the configuration sets no default `D`".into())
    })
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Dc(a) => dc(a, out),
        Command::Tran(a) => tran(a, out, err),
        Command::Ac(a) => ac(a, out, err),
        Command::Sweep(a) => sweep(a, out, err),
        Command::Compare(a) => compare(a, out, err),
    }
}

fn operating_point(spec: &ConverterSpec, duty: f64) -> Result<OperatingPoint, CliError> {
    Ok(solve_dc(&OperatingPointRequest::new(spec.clone(), duty)?)?)
}

fn dc(a: &DcArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(&a.converter)?;
    let duty = duty_of(&cfg, a.duty)?;
    let spec = &cfg.spec;
    let op = operating_point(spec, duty)?;
    let x = &op.state;
    let p = &op.ports;
    let text = format!(
        "converter = {}\nideal = {}\nduty = {duty}\nV0 = {:.6} V\niL1 = {:.6} A\niL2 = {:.6} A\nvC1 = {:.6} V\nvC2 = {:.6} V\n\
         mu = {:.6}\nmode = {}\npredicted_mode = {}\nV1 = {:.6} V\nV2 = {:.6} V\nI1 = {:.6} A\nI2 = {:.6} A\niterations = {}\n",
        spec.kind,
        spec.ideal,
        op.v_out,
        x.i_l1,
        x.i_l2,
        x.v_c1,
        x.v_c2,
        op.mu,
        op.mode,
        if dcm_predicted(spec, duty) { "DCM" } else { "CCM" },
        p.v1,
        p.v2,
        p.i1,
        p.i2,
        op.iterations,
    );
    out.write_all(text.as_bytes())
        .map_err(io_error("writing summary"))
}

fn parse_step(text: &str) -> Result<(f64, SteppedParameter, f64), CliError> {
    let bad = || {
        CliError::Usage(format!(
            "invalid --step `{text}`, expected TIME:PARAM:VALUE"
        ))
    };
    let parts: Vec<&str> = text.split(':').collect();
    let [time, param, value] = parts[..] else {
        return Err(bad());
    };
    let parameter = match param.trim() {
        "R_L1" => SteppedParameter::InductorEsr1,
        "R_L2" => SteppedParameter::InductorEsr2,
        "R" => SteppedParameter::Load,
        _ => {
            return Err(CliError::Usage(format!(
                "unknown step parameter `{param}` (R_L1, R_L2 or R)"
            )))
        }
    };
    let time: f64 = time.trim().parse().map_err(|_| bad())?;
    let value: f64 = value.trim().parse().map_err(|_| bad())?;
    Ok((time, parameter, value))
}

fn tran(a: &TranArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(&a.converter)?;
    let spec = &cfg.spec;
    let d0 = duty_of(&cfg, a.duty)?;
    let duty = match a.ramp_to {
        Some(d1) => PiecewiseLinear::ramp(0.0, d0, a.ramp_time.unwrap_or(a.t_end), d1)?,
        None => PiecewiseLinear::constant(d0),
    };
    let mut stimulus = Stimulus {
        duty,
        parameter_steps: Vec::new(),
    };
    for s in &a.steps {
        let (time, parameter, value) = parse_step(s)?;
        stimulus = stimulus.with_step(time, parameter, value);
    }
    stimulus
        .parameter_steps
        .sort_by(|x, y| x.time.total_cmp(&y.time));
    let initial = match a.initial {
        InitialState::Zero => StateVector::ZERO,
        InitialState::Dc => operating_point(spec, d0)?.state,
    };
    let opts = TransientOptions {
        atol: a.atol,
        rtol: a.rtol,
        ..TransientOptions::default()
    };
    let w = simulate_with(spec, &stimulus, a.t_end, initial, &opts)?;
    let rows: Vec<Vec<String>> = (0..w.len())
        .map(|k| {
            let x = &w.states[k];
            vec![
                num(w.times[k]),
                num(x.i_l1),
                num(x.i_l2),
                num(x.v_c1),
                num(x.v_c2),
                num(w.v_out[k]),
                num(w.mu[k]),
                w.modes[k].to_string(),
            ]
        })
        .collect();
    let last = w.len() - 1;
    let summary = format!(
        "samples = {}\nt_end = {}\nfinal_V0 = {:.6} V\nfinal_mode = {}\n",
        w.len(),
        w.times[last],
        w.v_out[last],
        w.modes[last]
    );
    emit(
        a.output.as_deref(),
        out,
        err,
        &["t", "iL1", "iL2", "vC1", "vC2", "V0", "mu", "mode"],
        &rows,
        &summary,
    )
}

fn margin_line(name: &str, v: Option<f64>, absent: &str) -> String {
    format!("{name} = {}\n", v.map_or(absent.to_string(), num))
}

fn margins_block(m: &Margins) -> String {
    [
        margin_line("gain_margin_dB", m.gain_margin_db, "inf"),
        margin_line("phase_margin_deg", m.phase_margin_deg, "inf"),
        margin_line("gain_crossover_Hz", m.gain_crossover_hz, "none"),
        margin_line("phase_crossover_Hz", m.phase_crossover_hz, "none"),
    ]
    .concat()
}

fn ac(a: &AcArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(&a.converter)?;
    let spec = &cfg.spec;
    let duty = duty_of(&cfg, a.duty)?;
    let grid = match a.f_stop {
        None if a.f_start == 10.0 && a.points_per_decade == 100 => default_grid(spec)?,
        f_stop => log_grid(
            a.f_start,
            f_stop.unwrap_or(spec.f_s / 2.0),
            a.points_per_decade,
        )?,
    };
    let op = operating_point(spec, duty)?;
    let model = linearize(spec, &op)?;
    let input = match a.input {
        AcInput::Duty => TransferInput::Duty,
        AcInput::Source => TransferInput::Source,
    };
    let resp = frequency_response(&model, input, &grid)?;
    let mag = resp.magnitude_db();
    let phase = resp.phase_deg();
    let rows: Vec<Vec<String>> = resp
        .points
        .iter()
        .enumerate()
        .map(|(k, (f, _))| vec![num(*f), num(mag[k]), num(phase[k])])
        .collect();
    let mut summary = format!("transfer = {}\n", resp.name);
    summary.push_str(&margins_block(&resp.margins));
    if model.on_mode_boundary {
        summary
            .push_str("note = operating point on the CCM/DCM boundary, one-sided linearization\n");
    }
    if !resp.singular.is_empty() {
        summary.push_str(&format!("singular_points = {}\n", resp.singular.len()));
    }
    emit(
        a.output.as_deref(),
        out,
        err,
        &["f_Hz", "mag_dB", "phase_deg"],
        &rows,
        &summary,
    )
}

fn sweep(a: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(&a.converter)?;
    let points = sweep_duty(&cfg.spec, a.from, a.to, a.step)?;
    let mut rows = Vec::with_capacity(points.len());
    let mut failures = Vec::new();
    for p in &points {
        match &p.outcome {
            Ok(op) => rows.push(vec![
                num(p.duty),
                num(op.v_out),
                num(op.state.i_l1),
                num(op.state.i_l2),
                op.mode.to_string(),
            ]),
            Err(e) => failures.push(format!("D = {}: {e}", p.duty)),
        }
    }
    if rows.is_empty() {
        return Err(CliError::Analysis(
            points
                .into_iter()
                .find_map(|p| p.outcome.err())
                .expect("an empty sweep grid is rejected earlier"),
        ));
    }
    let mut summary = format!("points = {}\nfailed = {}\n", points.len(), failures.len());
    for f in &failures {
        summary.push_str(&format!("failure = {f}\n"));
    }
    emit(
        a.output.as_deref(),
        out,
        err,
        &["D", "V0", "iL1", "iL2", "mode"],
        &rows,
        &summary,
    )
}

fn compare(a: &CompareArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load(&a.converter)?;
    let spec = &cfg.spec;
    let duty = duty_of(&cfg, a.duty)?;
    let op = operating_point(spec, duty)?;
    let mut config =
        SwitchedRunConfig::new(spec.clone(), duty, a.cycles, a.steps_per_cycle, op.state)?;
    config.stop_at_steady_state = false;
    config.record_cycles = 1;
    let run = run_switched(&config)?;
    let last = run.cycles.len() - 1;
    let c = cycle_average(&run.waveform, last)?;
    let at_state = evaluate(spec, &c.state, duty, spec.vg);
    let avg_d2 = twoswitch_core::SwitchIntervalDuties::from_mu(duty, op.mu, op.mode).d2;

    let pct = |avg: f64, sw: f64| 100.0 * (sw - avg) / avg.abs();
    let table = [
        ("V0", op.v_out, c.v_out),
        ("iL1", op.state.i_l1, c.state.i_l1),
        ("iL2", op.state.i_l2, c.state.i_l2),
        ("vC1", op.state.v_c1, c.state.v_c1),
        ("vC2", op.state.v_c2, c.state.v_c2),
        ("V1", at_state.ports.v1, c.v1),
        ("V2", at_state.ports.v2, c.v2),
        ("I1", at_state.ports.i1, c.i1),
        ("I2", at_state.ports.i2, c.i2),
        ("D2", avg_d2, c.duties.d2),
    ];
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|(name, avg, sw)| vec![name.to_string(), num(*avg), num(*sw), num(pct(*avg, *sw))])
        .collect();
    let summary = format!(
        "converter = {}\nduty = {duty}\ncycles = {}\nmeasured_D1 = {:.6}\nmeasured_D2 = {:.6}\nmeasured_D3 = {:.6}\nV0_error_pct = {:.4}\n",
        spec.kind,
        run.cycles.len(),
        c.duties.d1,
        c.duties.d2,
        c.duties.d3,
        pct(op.v_out, c.v_out),
    );
    emit(
        a.output.as_deref(),
        out,
        err,
        &["quantity", "averaged", "switched", "error_pct"],
        &rows,
        &summary,
    )
}
