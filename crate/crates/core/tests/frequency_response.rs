use twoswitch_core::small_signal::{default_grid, log_grid};
use twoswitch_core::{
    frequency_response, linearize, solve_dc, ConverterKind, ConverterSpec, FrequencyResponse,
    OperatingPointRequest, TransferInput,
};

fn references() -> [(ConverterSpec, f64); 2] {
    [
        (
            ConverterSpec::reference_sepic(),
            ConverterSpec::reference_duty(ConverterKind::Sepic),
        ),
        (
            ConverterSpec::reference_cuk(),
            ConverterSpec::reference_duty(ConverterKind::Cuk),
        ),
    ]
}

fn response(
    spec: &ConverterSpec,
    duty: f64,
    input: TransferInput,
    grid: &[f64],
) -> FrequencyResponse {
    let op = solve_dc(&OperatingPointRequest::new(spec.clone(), duty).unwrap()).unwrap();
    let model = linearize(spec, &op).unwrap();
    frequency_response(&model, input, grid).unwrap()
}

fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs() <= tol * b.abs(),
        (None, None) => true,
        _ => false,
    }
}

#[test]
fn margins_are_stable_under_grid_refinement() {
    for (spec, duty) in references() {
        let base = response(
            &spec,
            duty,
            TransferInput::Duty,
            &log_grid(10.0, spec.f_s / 2.0, 50).unwrap(),
        )
        .margins;
        for ppd in [100, 200, 400] {
            let fine = response(
                &spec,
                duty,
                TransferInput::Duty,
                &log_grid(10.0, spec.f_s / 2.0, ppd).unwrap(),
            )
            .margins;
            assert!(
                close(base.gain_margin_db, fine.gain_margin_db, 5e-3),
                "{base:?} vs {fine:?}"
            );
            assert!(
                close(base.phase_margin_deg, fine.phase_margin_deg, 5e-3),
                "{base:?} vs {fine:?}"
            );
            assert!(
                close(base.gain_crossover_hz, fine.gain_crossover_hz, 5e-3),
                "{base:?} vs {fine:?}"
            );
            assert!(
                close(base.phase_crossover_hz, fine.phase_crossover_hz, 5e-3),
                "{base:?} vs {fine:?}"
            );
        }
    }
}

#[test]
fn unwrapped_phase_has_no_jumps_on_default_grid() {
    for (spec, duty) in references() {
        for input in [TransferInput::Duty, TransferInput::Source] {
            let phase = response(&spec, duty, input, &default_grid(&spec).unwrap()).phase_deg();
            for w in phase.windows(2) {
                assert!(
                    (w[1] - w[0]).abs() < 180.0,
                    "{:?} {}: {} -> {}",
                    spec.kind,
                    input.name(),
                    w[0],
                    w[1]
                );
            }
        }
    }
}

#[test]
fn low_frequency_gain_matches_operating_point_sensitivity() {
    for (spec, duty) in references() {
        let h = 1e-3;
        let v = |d: f64| {
            solve_dc(&OperatingPointRequest::new(spec.clone(), d).unwrap())
                .unwrap()
                .v_out
        };
        let slope = (v(duty + h) - v(duty - h)) / (2.0 * h);
        let resp = response(
            &spec,
            duty,
            TransferInput::Duty,
            &log_grid(1e-3, 1e-2, 10).unwrap(),
        );
        let g = resp.points[0].1;
        assert!(
            (g.re - slope).abs() < 5e-3 * slope.abs(),
            "{:?}: {} vs {slope}",
            spec.kind,
            g.re
        );
        assert!(g.im.abs() < 1e-3 * slope.abs());
    }
}

#[test]
fn source_gain_vanishes_without_switching() {
    let spec = ConverterSpec::reference_sepic().as_ideal();
    // Zero duty itself is outside the solver domain.
    let op = solve_dc(&OperatingPointRequest::new(spec.clone(), 1e-9).unwrap()).unwrap();
    let model = linearize(&spec, &op).unwrap();
    let gvg = model.dc_gain(TransferInput::Source).unwrap();
    assert!(gvg.abs() < 1e-6, "{gvg}");
}
