//! Cycle-by-cycle simulation of the switched (non-averaged) converter.
//!
//! Each switching period is split into the MOSFET-on interval of length
//! `D·Ts`, a diode interval that lasts while `i_L1 + i_L2 > 0`, and an
//! interval with both switches open that holds until the next period. Every
//! interval is a linear circuit, integrated with fixed-step trapezoidal
//! steps; the diode turn-off instant is located by linear interpolation
//! of the switch-cell current inside the step.
//!
//! This module derives its circuit equations independently of
//! [`crate::network`] and serves as the reference for the averaged model.

use nalgebra::{Matrix4, Vector4};

use crate::averaged::SwitchIntervalDuties;
use crate::converter::{ConverterKind, ConverterSpec, Parasitics};
use crate::error::{Error, Result};
use crate::state::StateVector;

/// Relative change of the cycle-average output voltage below which two
/// consecutive cycles count as steady.
pub const STEADY_STATE_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedRunConfig {
    pub spec: ConverterSpec,
    pub duty: f64,
    pub n_cycles: usize,
    pub steps_per_cycle: usize,
    pub initial: StateVector,
    /// Stop as soon as the steady-state test passes instead of running all
    /// `n_cycles`.
    pub stop_at_steady_state: bool,
    /// Number of trailing cycles kept at full resolution in the waveform.
    pub record_cycles: usize,
}

impl SwitchedRunConfig {
    pub fn new(
        spec: ConverterSpec,
        duty: f64,
        n_cycles: usize,
        steps_per_cycle: usize,
        initial: StateVector,
    ) -> Result<Self> {
        let config = SwitchedRunConfig {
            spec,
            duty,
            n_cycles,
            steps_per_cycle,
            initial,
            stop_at_steady_state: true,
            record_cycles: 4,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(Error::Domain(format!(
                "duty must lie in (0, 1), got {}",
                self.duty
            )));
        }
        if self.n_cycles < 1 {
            return Err(Error::Domain("at least one cycle is required".into()));
        }
        if self.steps_per_cycle < 1000 {
            return Err(Error::Domain(format!(
                "steps_per_cycle must be at least 1000, got {}",
                self.steps_per_cycle
            )));
        }
        if !self.initial.is_finite() {
            return Err(Error::Domain("initial state must be finite".into()));
        }
        Ok(())
    }
}

/// Switch configuration during one part of the period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Interval {
    MosfetOn,
    DiodeOn,
    BothOff,
}

/// Instantaneous switch-port quantities, with the same orientation as the
/// averaged two-port.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PortSample {
    pub v1: f64,
    pub i1: f64,
    pub v2: f64,
    pub i2: f64,
    pub v_out: f64,
}

/// Piecewise-linear circuit equations of one converter.
#[derive(Debug, Clone)]
struct Circuit {
    kind: ConverterKind,
    p: Parasitics,
    vg: f64,
    load: f64,
    l1: f64,
    l2: f64,
    c1: f64,
    c2: f64,
}

impl Circuit {
    fn new(spec: &ConverterSpec) -> Self {
        Circuit {
            kind: spec.kind,
            p: spec.parasitics(),
            vg: spec.vg,
            load: spec.load,
            l1: spec.l1,
            l2: spec.l2,
            c1: spec.c1,
            c2: spec.c2,
        }
    }

    /// Output capacitor current and load voltage given the current fed
    /// into the output node.
    fn output(&self, feed: f64, v_c2: f64) -> (f64, f64) {
        let i_c2 = (feed - v_c2 / self.load) / (1.0 + self.p.r_c2 / self.load);
        (i_c2, v_c2 + self.p.r_c2 * i_c2)
    }

    /// Derivative and port quantities at `x` in `interval`.
    fn eval(&self, interval: Interval, x: &StateVector) -> (StateVector, PortSample) {
        let p = &self.p;
        let i_cell = x.switch_current();
        match (self.kind, interval) {
            (ConverterKind::Sepic, Interval::MosfetOn) => {
                let v_a = p.r_on * i_cell;
                let i_c1 = -x.i_l2;
                let v_b = v_a - x.v_c1 - p.r_c1 * i_c1;
                let (i_c2, v_out) = self.output(0.0, x.v_c2);
                let d = StateVector::new(
                    (self.vg - p.r_l1 * x.i_l1 - v_a) / self.l1,
                    (-v_b - p.r_l2 * x.i_l2) / self.l2,
                    i_c1 / self.c1,
                    i_c2 / self.c2,
                );
                (
                    d,
                    PortSample {
                        v1: v_a,
                        i1: i_cell,
                        v2: v_out - v_b,
                        i2: 0.0,
                        v_out,
                    },
                )
            }
            (ConverterKind::Sepic, Interval::DiodeOn) => {
                let (i_c2, v_out) = self.output(i_cell, x.v_c2);
                let v_b = v_out + p.v_d + p.r_d * i_cell;
                let i_c1 = x.i_l1;
                let v_a = v_b + x.v_c1 + p.r_c1 * i_c1;
                let d = StateVector::new(
                    (self.vg - p.r_l1 * x.i_l1 - v_a) / self.l1,
                    (-v_b - p.r_l2 * x.i_l2) / self.l2,
                    i_c1 / self.c1,
                    i_c2 / self.c2,
                );
                (
                    d,
                    PortSample {
                        v1: v_a,
                        i1: 0.0,
                        v2: v_out - v_b,
                        i2: i_cell,
                        v_out,
                    },
                )
            }
            (ConverterKind::Sepic, Interval::BothOff) => {
                // Series loop source–L1–C1–L2 with i_L2 = −i_L1.
                let i = x.i_l1;
                let r_loop = p.r_l1 + p.r_c1 + p.r_l2;
                let di = (self.vg - x.v_c1 - r_loop * i) / (self.l1 + self.l2);
                let (i_c2, v_out) = self.output(0.0, x.v_c2);
                let v_b = self.l2 * di + p.r_l2 * i;
                let v_a = self.vg - p.r_l1 * i - self.l1 * di;
                let d = StateVector::new(di, -di, i / self.c1, i_c2 / self.c2);
                (
                    d,
                    PortSample {
                        v1: v_a,
                        i1: 0.0,
                        v2: v_out - v_b,
                        i2: 0.0,
                        v_out,
                    },
                )
            }
            (ConverterKind::Cuk, Interval::MosfetOn) => {
                let v_a = p.r_on * i_cell;
                let i_c1 = -x.i_l2;
                let v_b = v_a - x.v_c1 - p.r_c1 * i_c1;
                let (i_c2, v_out) = self.output(-x.i_l2, x.v_c2);
                let d = StateVector::new(
                    (self.vg - p.r_l1 * x.i_l1 - v_a) / self.l1,
                    (v_out - v_b - p.r_l2 * x.i_l2) / self.l2,
                    i_c1 / self.c1,
                    i_c2 / self.c2,
                );
                (
                    d,
                    PortSample {
                        v1: v_a,
                        i1: i_cell,
                        v2: -v_b,
                        i2: 0.0,
                        v_out,
                    },
                )
            }
            (ConverterKind::Cuk, Interval::DiodeOn) => {
                let v_b = p.v_d + p.r_d * i_cell;
                let i_c1 = x.i_l1;
                let v_a = v_b + x.v_c1 + p.r_c1 * i_c1;
                let (i_c2, v_out) = self.output(-x.i_l2, x.v_c2);
                let d = StateVector::new(
                    (self.vg - p.r_l1 * x.i_l1 - v_a) / self.l1,
                    (v_out - v_b - p.r_l2 * x.i_l2) / self.l2,
                    i_c1 / self.c1,
                    i_c2 / self.c2,
                );
                (
                    d,
                    PortSample {
                        v1: v_a,
                        i1: 0.0,
                        v2: -v_b,
                        i2: i_cell,
                        v_out,
                    },
                )
            }
            (ConverterKind::Cuk, Interval::BothOff) => {
                // Series loop source–L1–C1–L2–output with i_L2 = −i_L1.
                let i = x.i_l1;
                let (i_c2, v_out) = self.output(i, x.v_c2);
                let r_loop = p.r_l1 + p.r_c1 + p.r_l2;
                let di = (self.vg - x.v_c1 - v_out - r_loop * i) / (self.l1 + self.l2);
                let v_b = v_out + self.l2 * di + p.r_l2 * i;
                let v_a = self.vg - p.r_l1 * i - self.l1 * di;
                let d = StateVector::new(di, -di, i / self.c1, i_c2 / self.c2);
                (
                    d,
                    PortSample {
                        v1: v_a,
                        i1: 0.0,
                        v2: -v_b,
                        i2: 0.0,
                        v_out,
                    },
                )
            }
        }
    }

    fn derivative(&self, interval: Interval, x: &Vector4<f64>) -> Vector4<f64> {
        self.eval(interval, &StateVector::from_vector(x))
            .0
            .to_vector()
    }

    /// `dx/dt = A·x + b` for one interval, read off by probing the affine
    /// derivative.
    fn affine(&self, interval: Interval) -> (Matrix4<f64>, Vector4<f64>) {
        let b = self.derivative(interval, &Vector4::zeros());
        let mut a = Matrix4::zeros();
        for j in 0..4 {
            let mut e = Vector4::zeros();
            e[j] = 1.0;
            a.set_column(j, &(self.derivative(interval, &e) - b));
        }
        (a, b)
    }
}

/// Precomputed trapezoidal update `x1 = P·x0 + q` for one interval and
/// step length.
#[derive(Debug, Clone, Copy)]
struct TrapezoidStep {
    p: Matrix4<f64>,
    q: Vector4<f64>,
}

impl TrapezoidStep {
    fn new(a: &Matrix4<f64>, b: &Vector4<f64>, h: f64) -> Self {
        let lhs = Matrix4::identity() - a * (0.5 * h);
        let inv = lhs
            .try_inverse()
            .expect("trapezoidal iteration matrix of a passive network is invertible");
        TrapezoidStep {
            p: inv * (Matrix4::identity() + a * (0.5 * h)),
            q: inv * b * h,
        }
    }

    fn apply(&self, x: &Vector4<f64>) -> Vector4<f64> {
        self.p * x + self.q
    }
}

struct IntervalSystem {
    a: Matrix4<f64>,
    b: Vector4<f64>,
    full: TrapezoidStep,
}

impl IntervalSystem {
    fn new(circuit: &Circuit, interval: Interval, h: f64) -> Self {
        let (a, b) = circuit.affine(interval);
        IntervalSystem {
            a,
            b,
            full: TrapezoidStep::new(&a, &b, h),
        }
    }

    fn step(&self, x: &Vector4<f64>, tau: f64, h: f64) -> Vector4<f64> {
        if (tau - h).abs() <= 1e-12 * h {
            self.full.apply(x)
        } else {
            TrapezoidStep::new(&self.a, &self.b, tau).apply(x)
        }
    }
}

/// Samples of the switched simulation. Sample `k` starts a segment that
/// runs in `intervals[k]` until sample `k + 1`; states are continuous at
/// switching instants so each instant is stored once.
#[derive(Debug, Clone)]
pub struct SwitchedWaveform {
    pub spec: ConverterSpec,
    pub duty: f64,
    pub period: f64,
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    pub intervals: Vec<Interval>,
    /// `(cycle index, first sample, last sample)` of each recorded cycle.
    pub cycles: Vec<(usize, usize, usize)>,
}

impl SwitchedWaveform {
    /// Port quantities at sample `k`, taken on the segment that starts there
    /// (the right-hand limit at a switching instant).
    pub fn ports(&self, k: usize) -> PortSample {
        Circuit::new(&self.spec)
            .eval(self.intervals[k], &self.states[k])
            .1
    }

    pub fn output_voltage(&self) -> Vec<f64> {
        (0..self.times.len()).map(|k| self.ports(k).v_out).collect()
    }
}

/// Period averages of the switch-port quantities over one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleAverage {
    pub cycle: usize,
    pub i1: f64,
    pub i2: f64,
    pub v1: f64,
    pub v2: f64,
    pub v_out: f64,
    /// Period average of the states.
    pub state: StateVector,
    /// Measured interval fractions; `d3` closes the partition.
    pub duties: SwitchIntervalDuties,
    /// Peak switch-cell current within the cycle.
    pub i_cell_peak: f64,
    /// Net change of `i_L1`, `i_L2` over the cycle relative to their
    /// intra-cycle swing, i.e. the residual volt-seconds of each inductor.
    pub flux_imbalance: [f64; 2],
}

fn average_segment(
    circuit: &Circuit,
    period: f64,
    cycle: usize,
    times: &[f64],
    states: &[StateVector],
    intervals: &[Interval],
) -> CycleAverage {
    let mut acc = [0.0f64; 5];
    let mut state_acc = [0.0f64; 4];
    let mut on_time = 0.0;
    let mut diode_time = 0.0;
    let mut peak = f64::NEG_INFINITY;
    let mut min_i = [f64::INFINITY; 2];
    let mut max_i = [f64::NEG_INFINITY; 2];
    for k in 0..times.len() {
        let x = &states[k];
        peak = peak.max(x.switch_current());
        for (j, v) in [x.i_l1, x.i_l2].into_iter().enumerate() {
            min_i[j] = min_i[j].min(v);
            max_i[j] = max_i[j].max(v);
        }
        if k + 1 == times.len() {
            break;
        }
        let dt = times[k + 1] - times[k];
        let interval = intervals[k];
        let (_, a) = circuit.eval(interval, &states[k]);
        let (_, b) = circuit.eval(interval, &states[k + 1]);
        let pairs = [
            (a.i1, b.i1),
            (a.i2, b.i2),
            (a.v1, b.v1),
            (a.v2, b.v2),
            (a.v_out, b.v_out),
        ];
        for (slot, (fa, fb)) in acc.iter_mut().zip(pairs) {
            *slot += 0.5 * (fa + fb) * dt;
        }
        let (sa, sb) = (states[k].as_array(), states[k + 1].as_array());
        for j in 0..4 {
            state_acc[j] += 0.5 * (sa[j] + sb[j]) * dt;
        }
        match interval {
            Interval::MosfetOn => on_time += dt,
            Interval::DiodeOn => diode_time += dt,
            Interval::BothOff => {}
        }
    }
    let span = times[times.len() - 1] - times[0];
    let scale = if span > 0.0 { 1.0 / span } else { 0.0 };
    let first = states[0];
    let last = states[states.len() - 1];
    let imbalance = |j: usize, delta: f64| {
        let swing = max_i[j] - min_i[j];
        if swing > 0.0 {
            delta.abs() / swing
        } else {
            0.0
        }
    };
    let d1 = on_time / period;
    let d2 = diode_time / period;
    CycleAverage {
        cycle,
        i1: acc[0] * scale,
        i2: acc[1] * scale,
        v1: acc[2] * scale,
        v2: acc[3] * scale,
        v_out: acc[4] * scale,
        state: StateVector::from(state_acc.map(|v| v * scale)),
        duties: SwitchIntervalDuties {
            d1,
            d2,
            d3: 1.0 - d1 - d2,
        },
        i_cell_peak: peak,
        flux_imbalance: [
            imbalance(0, last.i_l1 - first.i_l1),
            imbalance(1, last.i_l2 - first.i_l2),
        ],
    }
}

/// Averages over one recorded cycle of `w`.
pub fn cycle_average(w: &SwitchedWaveform, cycle_index: usize) -> Result<CycleAverage> {
    let &(cycle, start, end) =
        w.cycles
            .iter()
            .find(|(c, _, _)| *c == cycle_index)
            .ok_or(Error::CycleOutOfRange {
                index: cycle_index,
                available: w.cycles.len(),
            })?;
    Ok(average_segment(
        &Circuit::new(&w.spec),
        w.period,
        cycle,
        &w.times[start..=end],
        &w.states[start..=end],
        &w.intervals[start..=end],
    ))
}

/// Output of [`run_switched`].
#[derive(Debug, Clone)]
pub struct SwitchedRun {
    /// Full-resolution samples of the trailing cycles.
    pub waveform: SwitchedWaveform,
    /// Averages of every simulated cycle.
    pub cycles: Vec<CycleAverage>,
    /// First cycle whose average output differs from the previous one by
    /// less than [`STEADY_STATE_TOLERANCE`].
    pub steady_state_cycle: Option<usize>,
    pub final_state: StateVector,
}

impl SwitchedRun {
    pub fn last_cycle(&self) -> &CycleAverage {
        self.cycles.last().expect("at least one cycle is simulated")
    }
}

/// Samples of the cycle being integrated.
#[derive(Default)]
struct CycleBuffer {
    times: Vec<f64>,
    states: Vec<StateVector>,
    intervals: Vec<Interval>,
}

impl CycleBuffer {
    fn push(&mut self, t: f64, x: &Vector4<f64>, interval: Interval) {
        self.times.push(t);
        self.states.push(StateVector::from_vector(x));
        self.intervals.push(interval);
    }

    fn clear(&mut self) {
        self.times.clear();
        self.states.clear();
        self.intervals.clear();
    }
}

struct Integrator {
    h: f64,
    on: IntervalSystem,
    diode: IntervalSystem,
    off: IntervalSystem,
    l1: f64,
    l2: f64,
}

impl Integrator {
    fn system(&self, interval: Interval) -> &IntervalSystem {
        match interval {
            Interval::MosfetOn => &self.on,
            Interval::DiodeOn => &self.diode,
            Interval::BothOff => &self.off,
        }
    }

    /// Integrates `duration` in a fixed topology, appending samples.
    fn hold(
        &self,
        buf: &mut CycleBuffer,
        t: &mut f64,
        x: &mut Vector4<f64>,
        interval: Interval,
        duration: f64,
    ) {
        let end = *t + duration;
        while end - *t > 1e-9 * self.h {
            let tau = self.h.min(end - *t);
            *x = self.system(interval).step(x, tau, self.h);
            *t = if tau < self.h { end } else { *t + tau };
            *buf.intervals
                .last_mut()
                .expect("buffer starts with a sample") = interval;
            buf.push(*t, x, interval);
        }
    }

    /// Integrates in `interval` until either `duration` elapses or the
    /// switch-cell current crosses zero in direction `sign` (`-1` for a
    /// falling crossing). Returns the time left over after the event.
    fn until_zero_current(
        &self,
        buf: &mut CycleBuffer,
        t: &mut f64,
        x: &mut Vector4<f64>,
        interval: Interval,
        duration: f64,
        sign: f64,
    ) -> Result<f64> {
        let end = *t + duration;
        let cell = |v: &Vector4<f64>| sign * (v[0] + v[1]);
        while end - *t > 1e-9 * self.h {
            let tau = self.h.min(end - *t);
            let sys = self.system(interval);
            let next = sys.step(x, tau, self.h);
            *buf.intervals
                .last_mut()
                .expect("buffer starts with a sample") = interval;
            if cell(&next) > 0.0 {
                *x = next;
                *t = if tau < self.h { end } else { *t + tau };
                buf.push(*t, x, interval);
                continue;
            }
            // Linear interpolation of the crossing, then one secant refinement.
            let s0 = cell(x);
            let s1 = cell(&next);
            let mut tz = tau * s0 / (s0 - s1);
            let mut xz = sys.step(x, tz, self.h);
            let sz = cell(&xz);
            if sz.abs() > 0.0 {
                let (ta, sa, tb, sb) = if sz > 0.0 {
                    (tz, sz, tau, s1)
                } else {
                    (0.0, s0, tz, sz)
                };
                if sa != sb {
                    tz = ta + (tb - ta) * sa / (sa - sb);
                    xz = sys.step(x, tz, self.h);
                }
            }
            let residual = xz[0] + xz[1];
            let swing = s0.abs().max(s1.abs()).max(1e-12);
            if residual.abs() > 1e-2 * swing {
                return Err(Error::EventDetection { time: *t + tz });
            }
            // Remove the remaining current sum with the least change in
            // stored magnetic energy.
            let total = self.l1 + self.l2;
            xz[0] -= residual * self.l2 / total;
            xz[1] -= residual * self.l1 / total;
            *x = xz;
            *t += tz;
            buf.push(*t, x, interval);
            return Ok((end - *t).max(0.0));
        }
        Ok(0.0)
    }
}

/// Runs the switched converter cycle by cycle.
pub fn run_switched(config: &SwitchedRunConfig) -> Result<SwitchedRun> {
    config.validate()?;
    let circuit = Circuit::new(&config.spec);
    let period = config.spec.period();
    let h = period / config.steps_per_cycle as f64;
    let integrator = Integrator {
        h,
        on: IntervalSystem::new(&circuit, Interval::MosfetOn, h),
        diode: IntervalSystem::new(&circuit, Interval::DiodeOn, h),
        off: IntervalSystem::new(&circuit, Interval::BothOff, h),
        l1: config.spec.l1,
        l2: config.spec.l2,
    };
    let on_time = config.duty * period;
    let off_time = period - on_time;

    let mut x = config.initial.to_vector();
    let mut buf = CycleBuffer::default();
    let mut waveform = SwitchedWaveform {
        spec: config.spec.clone(),
        duty: config.duty,
        period,
        times: Vec::new(),
        states: Vec::new(),
        intervals: Vec::new(),
        cycles: Vec::new(),
    };
    let mut cycles: Vec<CycleAverage> = Vec::with_capacity(config.n_cycles);
    let mut recorded: Vec<(usize, CycleBuffer)> = Vec::new();
    let mut steady_state_cycle = None;

    for n in 0..config.n_cycles {
        let t0 = n as f64 * period;
        let mut t = t0;
        buf.clear();
        buf.push(t, &x, Interval::MosfetOn);

        integrator.hold(&mut buf, &mut t, &mut x, Interval::MosfetOn, on_time);
        t = t0 + on_time;

        let mut left = off_time;
        if x[0] + x[1] < 0.0 {
            // Reverse current keeps flowing through the MOSFET body diode
            // until the switch-cell current returns to zero.
            left = integrator.until_zero_current(
                &mut buf,
                &mut t,
                &mut x,
                Interval::MosfetOn,
                left,
                -1.0,
            )?;
        } else if x[0] + x[1] > 0.0 {
            left = integrator.until_zero_current(
                &mut buf,
                &mut t,
                &mut x,
                Interval::DiodeOn,
                left,
                1.0,
            )?;
        }
        if left > 0.0 {
            integrator.hold(&mut buf, &mut t, &mut x, Interval::BothOff, left);
        }
        // Pin the cycle end exactly on the period grid.
        if let Some(last) = buf.times.last_mut() {
            *last = t0 + period;
        }

        let avg = average_segment(&circuit, period, n, &buf.times, &buf.states, &buf.intervals);
        if let Some(prev) = cycles.last() {
            let rel = (avg.v_out - prev.v_out).abs() / avg.v_out.abs().max(f64::MIN_POSITIVE);
            if steady_state_cycle.is_none() && rel < STEADY_STATE_TOLERANCE {
                steady_state_cycle = Some(n);
            }
        }
        cycles.push(avg);

        if config.record_cycles > 0 {
            if recorded.len() == config.record_cycles {
                recorded.remove(0);
            }
            recorded.push((n, std::mem::take(&mut buf)));
        }
        if config.stop_at_steady_state && steady_state_cycle.is_some() {
            break;
        }
    }

    for (n, cycle) in recorded {
        // Consecutive cycles share their boundary sample.
        let start = if waveform.times.last() == cycle.times.first() {
            waveform.times.len() - 1
        } else {
            waveform.times.len()
        };
        let skip = waveform.times.len() - start;
        waveform.times.extend_from_slice(&cycle.times[skip..]);
        waveform.states.extend_from_slice(&cycle.states[skip..]);
        if skip == 1 {
            waveform.intervals.pop();
        }
        waveform.intervals.extend_from_slice(&cycle.intervals);
        waveform.cycles.push((n, start, waveform.times.len() - 1));
    }

    Ok(SwitchedRun {
        waveform,
        cycles,
        steady_state_cycle,
        final_state: StateVector::from_vector(&x),
    })
}
