//! Time-domain simulation of the averaged model.
//!
//! Adaptive TR-BDF2 integration (a trapezoidal stage followed by a BDF2
//! stage) with step-doubling error control.
//! Integration restarts at every duty breakpoint and parameter step so that
//! kinks and jumps in the right-hand side never fall inside a step.

use nalgebra::{Matrix4, Vector4};

use crate::averaged::Mode;
use crate::converter::{ConverterSpec, SteppedParameter};
use crate::error::{Error, Result};
use crate::network::evaluate;
use crate::numeric::{central_jacobian, relative_step};
use crate::state::StateVector;

/// Piecewise-linear function of time, held constant outside its
/// breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    points: Vec<(f64, f64)>,
}

impl PiecewiseLinear {
    /// `points` are `(time, value)` pairs with non-decreasing times; two
    /// points at the same time describe a jump.
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain(
                "piecewise-linear function needs at least one point".into(),
            ));
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::Domain(
                "piecewise-linear points must be finite".into(),
            ));
        }
        if points.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(Error::Domain(
                "piecewise-linear times must be non-decreasing".into(),
            ));
        }
        Ok(PiecewiseLinear { points })
    }

    pub fn constant(value: f64) -> Self {
        PiecewiseLinear {
            points: vec![(0.0, value)],
        }
    }

    /// Holds `v0` until `t0`, ramps linearly to `v1` at `t1`, then holds.
    pub fn ramp(t0: f64, v0: f64, t1: f64, v1: f64) -> Result<Self> {
        Self::new(vec![(t0, v0), (t1, v1)])
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Value at `t`; at a jump the later value applies.
    pub fn value(&self, t: f64) -> f64 {
        let pts = &self.points;
        let idx = pts.partition_point(|p| p.0 <= t);
        if idx == 0 {
            return pts[0].1;
        }
        if idx == pts.len() {
            return pts[idx - 1].1;
        }
        let (t0, v0) = pts[idx - 1];
        let (t1, v1) = pts[idx];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }

    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    fn range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.1), hi.max(p.1))
            })
    }
}

/// Step change of one circuit parameter at `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterStep {
    pub time: f64,
    pub parameter: SteppedParameter,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stimulus {
    pub duty: PiecewiseLinear,
    /// Applied in order; times must be non-decreasing.
    pub parameter_steps: Vec<ParameterStep>,
}

impl Stimulus {
    pub fn constant_duty(duty: f64) -> Self {
        Stimulus {
            duty: PiecewiseLinear::constant(duty),
            parameter_steps: Vec::new(),
        }
    }

    pub fn with_step(mut self, time: f64, parameter: SteppedParameter, value: f64) -> Self {
        self.parameter_steps.push(ParameterStep {
            time,
            parameter,
            value,
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.duty.range();
        // A zero duty is admitted: it models a converter that is never switched on.
        if !(lo >= 0.0 && hi < 1.0) {
            return Err(Error::Domain(format!(
                "duty must stay within [0, 1), got range [{lo}, {hi}]"
            )));
        }
        if self
            .parameter_steps
            .windows(2)
            .any(|w| w[1].time < w[0].time)
        {
            return Err(Error::Domain(
                "parameter step times must be non-decreasing".into(),
            ));
        }
        if self
            .parameter_steps
            .iter()
            .any(|s| !s.time.is_finite() || s.time < 0.0)
        {
            return Err(Error::Domain(
                "parameter step times must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Sampled trajectory; all vectors have equal length and `times` is
/// strictly increasing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Waveform {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    /// Load voltage including the output capacitor ESR drop.
    pub v_out: Vec<f64>,
    pub mu: Vec<f64>,
    pub modes: Vec<Mode>,
}

impl Waveform {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_v_out(&self) -> Option<f64> {
        self.v_out.last().copied()
    }

    fn push(&mut self, spec: &ConverterSpec, t: f64, x: &Vector4<f64>, duty: f64) {
        let state = StateVector::from_vector(x);
        let ev = evaluate(spec, &state, duty, spec.vg);
        self.times.push(t);
        self.states.push(state);
        self.v_out.push(ev.v_out);
        self.mu.push(ev.ports.mu);
        self.modes.push(ev.ports.mode);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientOptions {
    pub atol: f64,
    pub rtol: f64,
    /// First step of every segment.
    pub initial_step: f64,
    /// Upper bound on the step; `None` leaves it to the error control.
    pub max_step: Option<f64>,
    pub max_steps: usize,
    pub max_newton_iterations: usize,
}

impl Default for TransientOptions {
    fn default() -> Self {
        TransientOptions {
            atol: 1e-6,
            rtol: 1e-6,
            initial_step: 1e-7,
            max_step: None,
            max_steps: 5_000_000,
            max_newton_iterations: 12,
        }
    }
}

struct Rhs<'a> {
    spec: &'a ConverterSpec,
    duty: &'a PiecewiseLinear,
    floors: [f64; 4],
}

impl Rhs<'_> {
    fn eval(&self, t: f64, x: &Vector4<f64>) -> Vector4<f64> {
        let d = self.duty.value(t);
        evaluate(self.spec, &StateVector::from_vector(x), d, self.spec.vg)
            .derivative
            .to_vector()
    }

    fn jacobian(&self, t: f64, x: &Vector4<f64>) -> Matrix4<f64> {
        let steps = std::array::from_fn(|j| relative_step(x[j], self.floors[j], 1e-7));
        central_jacobian(|v| self.eval(t, v), x, &steps)
    }
}

impl TransientOptions {
    fn weight(&self, a: &Vector4<f64>, b: &Vector4<f64>, j: usize) -> f64 {
        self.atol + self.rtol * a[j].abs().max(b[j].abs())
    }
}

/// Trapezoidal stage fraction of a TR-BDF2 step.
const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;

/// Solves `y − c·h·f(t1, y) = rhs` by modified Newton, with `lu` the
/// factorization of `I − c·h·J`.
fn implicit_solve(
    rhs: &Rhs,
    opts: &TransientOptions,
    lu: &nalgebra::LU<f64, nalgebra::U4, nalgebra::U4>,
    t1: f64,
    ch: f64,
    target: &Vector4<f64>,
    guess: Vector4<f64>,
) -> Option<Vector4<f64>> {
    let mut y = guess;
    for _ in 0..opts.max_newton_iterations {
        let residual = y - rhs.eval(t1, &y) * ch - target;
        let delta = lu.solve(&residual)?;
        y -= delta;
        if !y.iter().all(|v| v.is_finite()) {
            return None;
        }
        let size = (0..4)
            .map(|j| delta[j].abs() / opts.weight(target, &y, j))
            .fold(0.0, f64::max);
        if size <= 1e-3 {
            return Some(y);
        }
    }
    None
}

/// One TR-BDF2 step from `(t, x)`: a trapezoidal stage to `t + γh`
/// followed by a BDF2 stage to `t + h`. Both stages share the iteration
/// matrix `I − (γ/2)·h·J`; the scheme is second order and damps stiff
/// modes instead of letting them ring.
fn tr_bdf2(
    rhs: &Rhs,
    opts: &TransientOptions,
    t: f64,
    x: &Vector4<f64>,
    fx: &Vector4<f64>,
    jac: &Matrix4<f64>,
    h: f64,
) -> Option<Vector4<f64>> {
    let ch = 0.5 * GAMMA * h;
    let lu = (Matrix4::identity() - jac * ch).lu();
    let target = x + fx * ch;
    let stage = implicit_solve(
        rhs,
        opts,
        &lu,
        t + GAMMA * h,
        ch,
        &target,
        x + fx * (GAMMA * h),
    )?;
    let a = 1.0 / (GAMMA * (2.0 - GAMMA));
    let b = (1.0 - GAMMA).powi(2) / (GAMMA * (2.0 - GAMMA));
    let target = stage * a - x * b;
    let guess = x + (stage - x) / GAMMA;
    implicit_solve(rhs, opts, &lu, t + h, ch, &target, guess)
}

/// Integrates over `[t0, t1]`, appending accepted samples after `t0`.
/// Returns the state at `t1` and the step to try next.
#[allow(clippy::too_many_arguments)]
fn integrate_segment(
    rhs: &Rhs,
    opts: &TransientOptions,
    wave: &mut Waveform,
    steps_taken: &mut usize,
    t0: f64,
    t1: f64,
    mut x: Vector4<f64>,
    mut h: f64,
) -> Result<(Vector4<f64>, f64)> {
    let mut t = t0;
    let h_cap = opts.max_step.unwrap_or(f64::INFINITY);
    while t1 - t > 1e-12 * t1.abs().max(1e-9) {
        let h_min = 1e-14_f64.max(1e-12 * t.abs());
        h = h.min(h_cap);
        let last = h >= t1 - t;
        if last {
            h = t1 - t;
        }
        *steps_taken += 1;
        if *steps_taken > opts.max_steps {
            return Err(Error::NonConvergence {
                iterations: opts.max_steps,
                residual: t1 - t,
            });
        }
        let fx = rhs.eval(t, &x);
        let jac = rhs.jacobian(t, &x);
        let full = tr_bdf2(rhs, opts, t, &x, &fx, &jac, h);
        let halves = tr_bdf2(rhs, opts, t, &x, &fx, &jac, 0.5 * h).and_then(|mid| {
            let tm = t + 0.5 * h;
            let fm = rhs.eval(tm, &mid);
            tr_bdf2(rhs, opts, tm, &mid, &fm, &jac, 0.5 * h)
        });
        let (Some(full), Some(fine)) = (full, halves) else {
            h *= 0.25;
            if h < h_min {
                return Err(Error::StepSizeUnderflow { time: t, step: h });
            }
            continue;
        };
        let err = (0..4)
            .map(|j| (full[j] - fine[j]).abs() / (3.0 * opts.weight(&x, &fine, j)))
            .fold(0.0, f64::max);
        let factor = if err > 0.0 {
            (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 2.0)
        } else {
            2.0
        };
        if err <= 1.0 {
            t = if last { t1 } else { t + h };
            x = fine;
            wave.push(rhs.spec, t, &x, rhs.duty.value(t));
            h *= factor;
        } else {
            h *= factor;
            if h < h_min {
                return Err(Error::StepSizeUnderflow { time: t, step: h });
            }
        }
    }
    Ok((x, h))
}

/// Simulates the averaged model from `initial` over `[0, t_end]`.
pub fn simulate(
    spec: &ConverterSpec,
    stimulus: &Stimulus,
    t_end: f64,
    initial: StateVector,
) -> Result<Waveform> {
    simulate_with(spec, stimulus, t_end, initial, &TransientOptions::default())
}

pub fn simulate_with(
    spec: &ConverterSpec,
    stimulus: &Stimulus,
    t_end: f64,
    initial: StateVector,
    opts: &TransientOptions,
) -> Result<Waveform> {
    spec.validate()?;
    stimulus.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Domain(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    if !initial.is_finite() {
        return Err(Error::Domain("initial state must be finite".into()));
    }
    if !(opts.atol > 0.0 && opts.rtol >= 0.0 && opts.initial_step > 0.0) {
        return Err(Error::Domain(
            "tolerances and initial step must be positive".into(),
        ));
    }

    let mut spec = spec.clone();
    let mut boundaries: Vec<f64> = stimulus
        .duty
        .breakpoints()
        .chain(stimulus.parameter_steps.iter().map(|s| s.time))
        .filter(|&t| t > 0.0 && t < t_end)
        .collect();
    boundaries.push(t_end);
    boundaries.sort_by(f64::total_cmp);
    boundaries.dedup();

    let mut wave = Waveform::default();
    let mut x = initial.to_vector();
    wave.push(&spec, 0.0, &x, stimulus.duty.value(0.0));
    let mut pending = stimulus.parameter_steps.iter().peekable();
    let mut steps_taken = 0;
    let mut t = 0.0;
    let mut h = opts.initial_step;
    for &t_next in &boundaries {
        while let Some(step) = pending.next_if(|s| s.time <= t) {
            spec.set_parameter(step.parameter, step.value)?;
        }
        let v_scale = spec.vg.abs().max(1.0);
        let i_scale = v_scale / spec.load;
        let rhs = Rhs {
            spec: &spec,
            duty: &stimulus.duty,
            floors: [i_scale, i_scale, v_scale, v_scale],
        };
        let (x_end, h_next) =
            integrate_segment(&rhs, opts, &mut wave, &mut steps_taken, t, t_next, x, h)?;
        x = x_end;
        // Restart small after an event; carry the step otherwise.
        let event = stimulus.parameter_steps.iter().any(|s| s.time == t_next);
        h = if event { opts.initial_step } else { h_next };
        t = t_next;
    }
    Ok(wave)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::converter::OperatingPointRequest;
    use crate::dc::solve_dc;
    use approx::assert_relative_eq;

    #[test]
    fn piecewise_linear_interpolates_and_holds() {
        let pwl = PiecewiseLinear::new(vec![(1.0, 0.2), (2.0, 0.4), (2.0, 0.6)]).unwrap();
        assert_eq!(pwl.value(0.0), 0.2);
        assert_relative_eq!(pwl.value(1.5), 0.3, max_relative = 1e-15);
        assert_eq!(pwl.value(2.0), 0.6);
        assert_eq!(pwl.value(9.0), 0.6);
        assert!(PiecewiseLinear::new(vec![(1.0, 0.2), (0.5, 0.3)]).is_err());
        assert!(PiecewiseLinear::new(vec![]).is_err());
    }

    #[test]
    fn stimulus_validation() {
        assert!(Stimulus::constant_duty(1.0).validate().is_err());
        assert!(Stimulus::constant_duty(-0.1).validate().is_err());
        assert!(Stimulus::constant_duty(0.0).validate().is_ok());
        let unordered = Stimulus::constant_duty(0.3)
            .with_step(0.2, SteppedParameter::Load, 10.0)
            .with_step(0.1, SteppedParameter::Load, 20.0);
        assert!(unordered.validate().is_err());
    }

    #[test]
    fn zero_excitation_stays_at_rest() {
        let mut spec = ConverterSpec::reference_sepic().as_ideal();
        spec.vg = 0.0;
        let w = simulate(
            &spec,
            &Stimulus::constant_duty(0.0),
            1e-3,
            StateVector::ZERO,
        )
        .unwrap();
        assert!(w.states.iter().all(|x| *x == StateVector::ZERO));
        assert!(w.times.windows(2).all(|p| p[1] > p[0]));
    }

    #[test]
    fn constant_duty_settles_to_operating_point() {
        let spec = ConverterSpec::reference_cuk();
        let op = solve_dc(&OperatingPointRequest::new(spec.clone(), 0.42).unwrap()).unwrap();
        let w = simulate(
            &spec,
            &Stimulus::constant_duty(0.42),
            0.5,
            StateVector::ZERO,
        )
        .unwrap();
        assert_relative_eq!(w.final_v_out().unwrap(), op.v_out, max_relative = 5e-3);
        assert_eq!(*w.times.last().unwrap(), 0.5);
        assert_eq!(w.len(), w.v_out.len());
        assert_eq!(w.len(), w.modes.len());
    }

    #[test]
    fn parameter_step_lands_on_a_sample() {
        let spec = ConverterSpec::reference_sepic();
        let stim = Stimulus::constant_duty(0.2).with_step(0.01, SteppedParameter::Load, 26.0);
        let op = solve_dc(&OperatingPointRequest::new(spec.clone(), 0.2).unwrap()).unwrap();
        let w = simulate(&spec, &stim, 0.02, op.state).unwrap();
        assert!(w.times.contains(&0.01));
        let k = w.times.iter().position(|&t| t == 0.01).unwrap();
        // Held at equilibrium before the step.
        assert_relative_eq!(w.v_out[k], op.v_out, max_relative = 1e-6);
        assert!(w.v_out.last().unwrap() < &op.v_out);
    }

    #[test]
    fn rejects_bad_horizon() {
        let spec = ConverterSpec::reference_sepic();
        assert!(simulate(&spec, &Stimulus::constant_duty(0.2), 0.0, StateVector::ZERO).is_err());
        assert!(simulate(
            &spec,
            &Stimulus::constant_duty(0.2),
            f64::NAN,
            StateVector::ZERO
        )
        .is_err());
    }

    #[test]
    fn ideal_steady_state_balances_power() {
        let spec = ConverterSpec::reference_sepic().as_ideal();
        let w = simulate(&spec, &Stimulus::constant_duty(0.3), 0.5, StateVector::ZERO).unwrap();
        let x = w.states.last().unwrap();
        let v0 = w.final_v_out().unwrap();
        assert_relative_eq!(spec.vg * x.i_l1, v0 * v0 / spec.load, max_relative = 5e-3);
    }

    #[test]
    fn halving_tolerance_moves_final_output_less_than_tolerance() {
        let spec = ConverterSpec::reference_sepic();
        let stim = Stimulus::constant_duty(0.2);
        let run = |tol: f64| {
            let opts = TransientOptions {
                atol: tol,
                rtol: tol,
                ..TransientOptions::default()
            };
            simulate_with(&spec, &stim, 0.5, StateVector::ZERO, &opts)
                .unwrap()
                .final_v_out()
                .unwrap()
        };
        let (coarse, fine) = (run(1e-6), run(5e-7));
        assert!((coarse - fine).abs() / fine.abs() < 1e-6);
    }

    #[test]
    fn derivative_norm_decays_under_constant_duty() {
        for spec in [
            ConverterSpec::reference_sepic(),
            ConverterSpec::reference_cuk(),
        ] {
            let d = ConverterSpec::reference_duty(spec.kind);
            let w = simulate(&spec, &Stimulus::constant_duty(d), 0.5, StateVector::ZERO).unwrap();
            let norm =
                |x: &StateVector| evaluate(&spec, x, d, spec.vg).derivative.to_vector().norm();
            let ratio = norm(w.states.last().unwrap()) / norm(&w.states[0]);
            assert!(ratio < 1e-6, "{}: ratio {ratio:e}", spec.kind);
        }
    }

    #[test]
    fn duty_ramp_raises_sepic_output_and_input_current() {
        let spec = ConverterSpec::reference_sepic();
        let op = solve_dc(&OperatingPointRequest::new(spec.clone(), 0.2).unwrap()).unwrap();
        let stim = Stimulus {
            duty: PiecewiseLinear::ramp(0.0, 0.2, 2.0, 0.9).unwrap(),
            parameter_steps: Vec::new(),
        };
        let w = simulate(&spec, &stim, 2.0, op.state).unwrap();
        for k in 1..w.len() {
            assert!(
                w.v_out[k] >= w.v_out[k - 1] - 1e-6,
                "V0 fell at t = {}",
                w.times[k]
            );
        }
        // The input current rings briefly where the mode changes; its
        // envelope on a coarse grid still rises.
        let at = |t: f64| {
            let k = w.times.partition_point(|&s| s < t).max(1);
            let (t0, t1) = (w.times[k - 1], w.times[k]);
            let (i0, i1) = (w.states[k - 1].i_l1, w.states[k].i_l1);
            i0 + (i1 - i0) * (t - t0) / (t1 - t0)
        };
        let coarse: Vec<f64> = (1..=20).map(|k| at(0.1 * k as f64)).collect();
        assert!(coarse.windows(2).all(|p| p[1] > p[0]), "{coarse:?}");
        assert!(w.states.last().unwrap().i_l2 > 0.0);
    }
}
