//! Averaged-model DC operating point by damped Newton iteration.
//!
//! The unknowns are the four states; `μ` is resolved inside the residual,
//! so the Jacobian stays 4×4 and mode selection happens as part of the
//! solve.

use nalgebra::Vector4;

use crate::averaged::{AveragedPortState, Mode};
use crate::converter::{
    dcm_predicted, effective_resistance, ConverterKind, ConverterSpec, OperatingPointRequest,
};
use crate::error::{Error, Result};
use crate::network::{evaluate, NetworkEvaluation};
use crate::numeric::{central_jacobian, relative_step};
use crate::state::StateVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcOptions {
    pub max_iterations: usize,
    /// Bound on both the relative Newton step and the relative residual.
    pub tolerance: f64,
    pub max_halvings: usize,
    /// Relative finite-difference step for the Jacobian.
    pub jacobian_step: f64,
}

impl Default for DcOptions {
    fn default() -> Self {
        DcOptions {
            max_iterations: 200,
            tolerance: 1e-9,
            max_halvings: 20,
            jacobian_step: 1e-6,
        }
    }
}

/// A solved equilibrium of the averaged model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub duty: f64,
    pub state: StateVector,
    /// Load voltage (negative for the Cuk).
    pub v_out: f64,
    pub mu: f64,
    pub mode: Mode,
    pub ports: AveragedPortState,
    /// Max-norm of the scaled residual at the solution.
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Voltage and current scales used to make residuals and steps relative.
#[derive(Debug, Clone, Copy)]
struct Scales {
    voltage: f64,
    current: f64,
}

impl Scales {
    fn of(spec: &ConverterSpec) -> Self {
        let voltage = spec.vg.abs().max(1.0);
        Scales {
            voltage,
            current: voltage / spec.load,
        }
    }

    fn state(&self) -> [f64; 4] {
        [self.current, self.current, self.voltage, self.voltage]
    }
}

fn scaled_residual(spec: &ConverterSpec, scales: &Scales, ev: &NetworkEvaluation) -> Vector4<f64> {
    let [v1, v2, i1, i2] = ev.storage_drive(spec);
    Vector4::new(
        v1 / scales.voltage,
        v2 / scales.voltage,
        i1 / scales.current,
        i2 / scales.current,
    )
}

/// Starting point from the lossless closed-form solution: DCM uses the
/// loss-free-resistor ratio `D/sqrt(K)`, CCM uses `D/(1−D)`.
pub fn initial_guess(spec: &ConverterSpec, duty: f64) -> StateVector {
    let ratio = if dcm_predicted(spec, duty) {
        let re = effective_resistance(spec, duty).unwrap_or(f64::INFINITY);
        (spec.load / re).sqrt()
    } else {
        duty / (1.0 - duty)
    };
    let v0 = ratio * spec.vg;
    let i_out = v0 / spec.load;
    match spec.kind {
        ConverterKind::Sepic => StateVector::new(ratio * i_out, i_out, spec.vg, v0),
        ConverterKind::Cuk => StateVector::new(ratio * i_out, i_out, spec.vg + v0, -v0),
    }
}

pub fn solve_dc(request: &OperatingPointRequest) -> Result<OperatingPoint> {
    let guess = initial_guess(&request.spec, request.duty);
    solve_dc_from(request, guess, &DcOptions::default())
}

/// Newton solve from an explicit starting state.
pub fn solve_dc_from(
    request: &OperatingPointRequest,
    initial: StateVector,
    options: &DcOptions,
) -> Result<OperatingPoint> {
    let spec = &request.spec;
    let duty = request.duty;
    let scales = Scales::of(spec);
    let state_scale = scales.state();
    let residual = |x: &Vector4<f64>| {
        let ev = evaluate(spec, &StateVector::from_vector(x), duty, spec.vg);
        scaled_residual(spec, &scales, &ev)
    };

    let mut x = initial.to_vector();
    let mut r = residual(&x);
    let mut r_norm = r.amax();
    for iteration in 1..=options.max_iterations {
        let steps: [f64; 4] =
            std::array::from_fn(|j| relative_step(x[j], state_scale[j], options.jacobian_step));
        let jac = central_jacobian(residual, &x, &steps);
        let dx = jac.lu().solve(&(-r)).ok_or(Error::SingularJacobian)?;
        if !dx.iter().all(|v| v.is_finite()) {
            return Err(Error::SingularJacobian);
        }

        let mut lambda = 1.0;
        let mut next = x + dx;
        let mut r_next = residual(&next);
        for _ in 0..options.max_halvings {
            let n = r_next.amax();
            if n.is_finite() && (n < r_norm || n <= options.tolerance) {
                break;
            }
            lambda *= 0.5;
            next = x + dx * lambda;
            r_next = residual(&next);
        }

        let step_norm = (0..4)
            .map(|j| (lambda * dx[j]).abs() / x[j].abs().max(state_scale[j]))
            .fold(0.0, f64::max);
        x = next;
        r = r_next;
        r_norm = r.amax();
        if step_norm.max(r_norm) <= options.tolerance {
            let state = StateVector::from_vector(&x);
            let ev = evaluate(spec, &state, duty, spec.vg);
            return Ok(OperatingPoint {
                duty,
                state,
                v_out: ev.v_out,
                mu: ev.ports.mu,
                mode: ev.ports.mode,
                ports: ev.ports,
                residual_norm: r_norm,
                iterations: iteration,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: options.max_iterations,
        residual: r_norm,
    })
}

/// One point of a duty sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub duty: f64,
    pub outcome: Result<OperatingPoint>,
}

/// Duty grid `from, from+step, …, ≤ to`.
pub fn duty_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(from > 0.0 && from <= to && to < 1.0) {
        return Err(Error::Domain(format!(
            "sweep bounds must satisfy 0 < from <= to < 1, got from = {from}, to = {to}"
        )));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!(
            "sweep step must be positive, got {step}"
        )));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| from + k as f64 * step).collect())
}

/// Solves each duty of the grid, seeding every point with the previous
/// converged solution. Failed points are recorded and the sweep goes on.
pub fn sweep_duty(spec: &ConverterSpec, from: f64, to: f64, step: f64) -> Result<Vec<SweepPoint>> {
    let grid = duty_grid(from, to, step)?;
    let options = DcOptions::default();
    let mut previous: Option<StateVector> = None;
    let mut points = Vec::with_capacity(grid.len());
    for duty in grid {
        let request = OperatingPointRequest::new(spec.clone(), duty)?;
        let seed = previous.unwrap_or_else(|| initial_guess(spec, duty));
        let outcome = solve_dc_from(&request, seed, &options).or_else(|_| solve_dc(&request));
        if let Ok(op) = &outcome {
            previous = Some(op.state);
        }
        points.push(SweepPoint { duty, outcome });
    }
    Ok(points)
}
