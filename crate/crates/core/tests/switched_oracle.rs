use twoswitch_core::converter::equivalent_inductance;
use twoswitch_core::switched::SwitchedRun;
use twoswitch_core::{
    cycle_average, run_switched, solve_dc, ConverterKind, ConverterSpec, OperatingPointRequest,
    StateVector, SwitchedRunConfig,
};

fn steady_run(
    spec: &ConverterSpec,
    duty: f64,
    cycles: usize,
    steps: usize,
    initial: StateVector,
) -> SwitchedRun {
    let mut config = SwitchedRunConfig::new(spec.clone(), duty, cycles, steps, initial).unwrap();
    config.stop_at_steady_state = false;
    config.record_cycles = 1;
    run_switched(&config).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn sepic_settles_near_averaged_output_in_dcm() {
    let spec = ConverterSpec::reference_sepic();
    let duty = ConverterSpec::reference_duty(ConverterKind::Sepic);
    let run = steady_run(&spec, duty, 2000, 1000, StateVector::ZERO);
    let c = run.last_cycle();
    let op = solve_dc(&OperatingPointRequest::new(spec, duty).unwrap()).unwrap();
    assert!(rel(c.v_out, op.v_out) < 0.02, "{} vs {}", c.v_out, op.v_out);
    assert!(c.duties.d3 > 0.05, "d3 = {}", c.duties.d3);
    let sum = c.duties.d1 + c.duties.d2 + c.duties.d3;
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn steady_cycle_balances_inductor_flux() {
    for (spec, kind) in [
        (ConverterSpec::reference_sepic(), ConverterKind::Sepic),
        (ConverterSpec::reference_cuk(), ConverterKind::Cuk),
    ] {
        let duty = ConverterSpec::reference_duty(kind);
        let op = solve_dc(&OperatingPointRequest::new(spec.clone(), duty).unwrap()).unwrap();
        let run = steady_run(&spec, duty, 2000, 1000, op.state);
        let c = run.last_cycle();
        for (k, f) in c.flux_imbalance.iter().enumerate() {
            assert!(f.abs() < 1e-3, "{kind:?} L{}: {f}", k + 1);
        }
    }
}

#[test]
fn doubling_resolution_keeps_cycle_averages() {
    let spec = ConverterSpec::reference_cuk();
    let duty = ConverterSpec::reference_duty(ConverterKind::Cuk);
    let op = solve_dc(&OperatingPointRequest::new(spec.clone(), duty).unwrap()).unwrap();
    let settled = steady_run(&spec, duty, 2000, 1000, op.state).final_state;
    let coarse = steady_run(&spec, duty, 100, 1000, settled);
    let fine = steady_run(&spec, duty, 100, 2000, settled);
    let (a, b) = (coarse.last_cycle(), fine.last_cycle());
    for (name, x, y) in [
        ("V0", a.v_out, b.v_out),
        ("I1", a.i1, b.i1),
        ("I2", a.i2, b.i2),
        ("V1", a.v1, b.v1),
        ("V2", a.v2, b.v2),
    ] {
        assert!(rel(x, y) < 1e-3, "{name}: {x} vs {y}");
    }
}

#[test]
fn ideal_sepic_input_current_follows_dcm_charge_law() {
    // The closed form assumes a ripple-free coupling capacitor.
    let mut spec = ConverterSpec::reference_sepic().as_ideal();
    spec.c1 = 50e-6;
    let duty = ConverterSpec::reference_duty(ConverterKind::Sepic);
    let op = solve_dc(&OperatingPointRequest::new(spec.clone(), duty).unwrap()).unwrap();
    let run = steady_run(&spec, duty, 2000, 1000, op.state);
    let c = run.last_cycle();
    let predicted = duty * duty * c.v1 * spec.period() / (2.0 * equivalent_inductance(&spec));
    assert!(rel(c.i1, predicted) < 0.01, "I1 {} vs {}", c.i1, predicted);
}

#[test]
fn unrecorded_cycle_is_an_error() {
    let spec = ConverterSpec::reference_sepic();
    let run = steady_run(&spec, 0.2, 10, 1000, StateVector::ZERO);
    assert!(cycle_average(&run.waveform, 5).is_err());
    assert_eq!(cycle_average(&run.waveform, 9).unwrap(), *run.last_cycle());
}
