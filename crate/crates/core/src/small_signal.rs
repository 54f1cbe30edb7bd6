//! Linearization of the averaged model and frequency responses.

use nalgebra::{Complex, Matrix4, RowVector4, Vector4};
use num_complex::Complex64;

use crate::averaged::Mode;
use crate::converter::ConverterSpec;
use crate::dc::OperatingPoint;
use crate::error::{Error, Result};
use crate::network::{evaluate, NetworkEvaluation};
use crate::numeric::relative_step;
use crate::state::StateVector;

const RELATIVE_STEP: f64 = 1e-6;

/// `dx/dt = A·x + B_d·d + B_g·v_g`, `v_out = C·x + D_d·d + D_g·v_g` around
/// an operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: Matrix4<f64>,
    pub b_d: Vector4<f64>,
    pub b_g: Vector4<f64>,
    pub c: RowVector4<f64>,
    pub d_d: f64,
    pub d_g: f64,
    /// The operating point sits on the CCM/DCM kink of the duty law; some
    /// columns were taken one-sided on the side of the resolved mode.
    pub on_mode_boundary: bool,
}

/// Input of a transfer function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferInput {
    /// Duty perturbation, giving `Gvd`.
    Duty,
    /// Source voltage perturbation, giving `Gvg`.
    Source,
}

impl TransferInput {
    pub fn name(self) -> &'static str {
        match self {
            TransferInput::Duty => "Gvd",
            TransferInput::Source => "Gvg",
        }
    }
}

impl LinearModel {
    fn input(&self, input: TransferInput) -> (Vector4<f64>, f64) {
        match input {
            TransferInput::Duty => (self.b_d, self.d_d),
            TransferInput::Source => (self.b_g, self.d_g),
        }
    }

    /// Zero-frequency gain `D − C·A⁻¹·B`.
    pub fn dc_gain(&self, input: TransferInput) -> Result<f64> {
        let (b, d) = self.input(input);
        let x = self.a.lu().solve(&b).ok_or(Error::SingularJacobian)?;
        Ok(d - (self.c * x)[0])
    }

    /// `C·(sI − A)⁻¹·B + D` at a complex frequency; `None` when the
    /// resolvent is singular.
    pub fn transfer(&self, input: TransferInput, s: Complex64) -> Option<Complex64> {
        let (b, d) = self.input(input);
        let m: Matrix4<Complex64> =
            Matrix4::from_diagonal_element(s) - self.a.map(|v| Complex::new(v, 0.0));
        let rhs = b.map(|v| Complex::new(v, 0.0));
        let x = m.lu().solve(&rhs)?;
        let g = self.c.map(|v| Complex::new(v, 0.0)) * x;
        let g = g[0] + d;
        (g.re.is_finite() && g.im.is_finite()).then_some(g)
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        self.a.complex_eigenvalues().iter().copied().collect()
    }

    pub fn is_stable(&self) -> bool {
        self.eigenvalues().iter().all(|e| e.re < 0.0)
    }
}

/// Derivative and output at a perturbed point, with the resolved mode.
fn probe(spec: &ConverterSpec, x: &Vector4<f64>, duty: f64, vg: f64) -> (Vector4<f64>, f64, Mode) {
    let ev: NetworkEvaluation = evaluate(spec, &StateVector::from_vector(x), duty, vg);
    (ev.derivative.to_vector(), ev.v_out, ev.ports.mode)
}

/// Linearizes the averaged network at `op` by finite differences.
pub fn linearize(spec: &ConverterSpec, op: &OperatingPoint) -> Result<LinearModel> {
    spec.validate()?;
    if !op.state.is_finite() {
        return Err(Error::Domain("operating point state must be finite".into()));
    }
    let vg = spec.vg;
    let duty = op.duty;
    let x0 = op.state.to_vector();
    let (_, _, mode0) = probe(spec, &x0, duty, vg);

    let v_scale = vg.abs().max(1.0);
    let i_scale = v_scale / spec.load;
    let floors = [i_scale, i_scale, v_scale, v_scale];

    let mut boundary = false;
    // Column of (derivative, output) sensitivities with respect to one
    // perturbed coordinate; `at(h)` evaluates the model at offset `h`.
    let mut column =
        |at: &dyn Fn(f64) -> (Vector4<f64>, f64, Mode), h: f64| -> (Vector4<f64>, f64) {
            let (fp, yp, mp) = at(h);
            let (fm, ym, mm) = at(-h);
            if mp == mode0 && mm == mode0 {
                return ((fp - fm) / (2.0 * h), (yp - ym) / (2.0 * h));
            }
            boundary = true;
            let (f0, y0, _) = at(0.0);
            if mp == mode0 {
                ((fp - f0) / h, (yp - y0) / h)
            } else {
                ((f0 - fm) / h, (y0 - ym) / h)
            }
        };

    let mut a = Matrix4::zeros();
    let mut c = RowVector4::zeros();
    for j in 0..4 {
        let h = relative_step(x0[j], floors[j], RELATIVE_STEP);
        let at = |dh: f64| {
            let mut x = x0;
            x[j] += dh;
            probe(spec, &x, duty, vg)
        };
        let (col, dy) = column(&at, h);
        a.set_column(j, &col);
        c[j] = dy;
    }
    let hd = relative_step(duty, 1e-3, RELATIVE_STEP);
    let (b_d, d_d) = column(&|dh: f64| probe(spec, &x0, duty + dh, vg), hd);
    let hg = relative_step(vg, 1.0, RELATIVE_STEP);
    let (b_g, d_g) = column(&|dh: f64| probe(spec, &x0, duty, vg + dh), hg);

    let model = LinearModel {
        a,
        b_d,
        b_g,
        c,
        d_d,
        d_g,
        on_mode_boundary: boundary,
    };
    if !(model
        .a
        .iter()
        .chain(model.b_d.iter())
        .chain(model.b_g.iter())
        .chain(model.c.iter())
        .all(|v| v.is_finite())
        && d_d.is_finite()
        && d_g.is_finite())
    {
        return Err(Error::Domain(
            "linearization produced non-finite entries".into(),
        ));
    }
    Ok(model)
}

/// Logarithmic grid from `f_start` to `f_stop` inclusive.
pub fn log_grid(f_start: f64, f_stop: f64, points_per_decade: usize) -> Result<Vec<f64>> {
    if !(f_start > 0.0 && f_stop > f_start && f_stop.is_finite()) {
        return Err(Error::Domain(format!(
            "frequency range must satisfy 0 < start < stop, got {f_start}..{f_stop}"
        )));
    }
    if points_per_decade == 0 {
        return Err(Error::Domain("points_per_decade must be positive".into()));
    }
    let decades = (f_stop / f_start).log10();
    let n = (decades * points_per_decade as f64).ceil().max(1.0) as usize;
    let mut grid: Vec<f64> = (0..=n)
        .map(|k| f_start * 10f64.powf(decades * k as f64 / n as f64))
        .collect();
    grid[n] = f_stop;
    Ok(grid)
}

/// 10 Hz to half the switching frequency at 100 points per decade.
pub fn default_grid(spec: &ConverterSpec) -> Result<Vec<f64>> {
    log_grid(10.0, spec.f_s / 2.0, 100)
}

/// Stability margins; `None` when the crossover is not in the swept range
/// (an absent phase crossover means an infinite gain margin).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Margins {
    pub gain_margin_db: Option<f64>,
    pub phase_margin_deg: Option<f64>,
    pub gain_crossover_hz: Option<f64>,
    pub phase_crossover_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    pub name: String,
    /// `(frequency in Hz, complex gain)` in increasing frequency.
    pub points: Vec<(f64, Complex64)>,
    /// Grid frequencies dropped because the resolvent was singular there.
    pub singular: Vec<f64>,
    pub margins: Margins,
}

impl FrequencyResponse {
    pub fn frequencies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0).collect()
    }

    pub fn magnitude_db(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| 20.0 * p.1.norm().log10())
            .collect()
    }

    /// Continuous phase in degrees; see [`unwrap_phase`].
    pub fn phase_deg(&self) -> Vec<f64> {
        unwrap_phase(&self.points)
    }
}

/// Phase in degrees, continued along the grid by the nearest multiple of
/// 360°. The first sample is placed on the branch nearest the asymptotic
/// phase implied by the low-frequency magnitude slope (−90° per
/// −20 dB/decade, plus 180° for an inverting gain).
pub fn unwrap_phase(points: &[(f64, Complex64)]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len());
    let Some(&(f0, g0)) = points.first() else {
        return out;
    };
    let order = match points.get(1) {
        Some(&(f1, g1)) if g0.norm() > 0.0 && g1.norm() > 0.0 => {
            let slope = 20.0 * (g1.norm() / g0.norm()).log10() / (f1 / f0).log10();
            (-slope / 20.0).round() as i32
        }
        _ => 0,
    };
    let rotated = g0 * Complex64::i().powi(order);
    let anchor = -90.0 * order as f64 + if rotated.re < 0.0 { 180.0 } else { 0.0 };
    let nearest = |raw: f64, target: f64| raw + 360.0 * ((target - raw) / 360.0).round();
    let mut prev = nearest(g0.arg().to_degrees(), anchor);
    out.push(prev);
    for &(_, g) in &points[1..] {
        prev = nearest(g.arg().to_degrees(), prev);
        out.push(prev);
    }
    out
}

/// Reads gain/phase margins off a sampled response.
///
/// The phase crossover is the first −180° crossing of the continued phase;
/// the gain crossover is the last 0 dB crossing. Both are interpolated
/// linearly in log-frequency. The phase margin is not folded into
/// (−180°, 180°].
pub fn extract_margins(points: &[(f64, Complex64)]) -> Margins {
    let phase = unwrap_phase(points);
    let mag: Vec<f64> = points.iter().map(|p| 20.0 * p.1.norm().log10()).collect();
    let logf: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
    let lerp = |k: usize, t: f64, v: &[f64]| v[k] + t * (v[k + 1] - v[k]);
    // Fraction along segment k where `v` reaches `level`, if it does.
    let crossing = |k: usize, v: &[f64], level: f64| -> Option<f64> {
        let (a, b) = (v[k] - level, v[k + 1] - level);
        if a == 0.0 {
            Some(0.0)
        } else if a * b < 0.0 || b == 0.0 {
            Some(a / (a - b))
        } else {
            None
        }
    };

    let mut margins = Margins::default();
    for k in 0..points.len().saturating_sub(1) {
        if let Some(t) = crossing(k, &phase, -180.0) {
            margins.phase_crossover_hz = Some(10f64.powf(lerp(k, t, &logf)));
            margins.gain_margin_db = Some(-lerp(k, t, &mag));
            break;
        }
    }
    for k in (0..points.len().saturating_sub(1)).rev() {
        if let Some(t) = crossing(k, &mag, 0.0) {
            margins.gain_crossover_hz = Some(10f64.powf(lerp(k, t, &logf)));
            margins.phase_margin_deg = Some(180.0 + lerp(k, t, &phase));
            break;
        }
    }
    margins
}

/// Samples `G(j2πf)` over `grid` and extracts margins.
pub fn frequency_response(
    model: &LinearModel,
    input: TransferInput,
    grid: &[f64],
) -> Result<FrequencyResponse> {
    if grid.is_empty() || grid[0] <= 0.0 || !grid.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::Domain(
            "frequency grid must be positive and strictly increasing".into(),
        ));
    }
    let mut points = Vec::with_capacity(grid.len());
    let mut singular = Vec::new();
    for &f in grid {
        let s = Complex64::new(0.0, 2.0 * std::f64::consts::PI * f);
        match model.transfer(input, s) {
            Some(g) => points.push((f, g)),
            None => singular.push(f),
        }
    }
    let margins = extract_margins(&points);
    Ok(FrequencyResponse {
        name: input.name().to_string(),
        points,
        singular,
        margins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::converter::{ConverterKind, OperatingPointRequest};
    use crate::dc::solve_dc;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn sampled(grid: &[f64], g: impl Fn(Complex64) -> Complex64) -> Vec<(f64, Complex64)> {
        grid.iter()
            .map(|&f| (f, g(Complex64::new(0.0, 2.0 * PI * f))))
            .collect()
    }

    /// A single first-order lag embedded in the first state.
    fn first_order(tau: f64, k: f64) -> LinearModel {
        let mut a = Matrix4::zeros();
        a[(0, 0)] = -1.0 / tau;
        for j in 1..4 {
            a[(j, j)] = -1.0;
        }
        let mut b_d = Vector4::zeros();
        b_d[0] = k / tau;
        let mut c = RowVector4::zeros();
        c[0] = 1.0;
        LinearModel {
            a,
            b_d,
            b_g: Vector4::zeros(),
            c,
            d_d: 0.0,
            d_g: 0.0,
            on_mode_boundary: false,
        }
    }

    #[test]
    fn first_order_magnitude_matches_closed_form() {
        let (tau, k) = (1e-3, 3.0);
        let grid = log_grid(1.0, 1e5, 50).unwrap();
        let resp = frequency_response(&first_order(tau, k), TransferInput::Duty, &grid).unwrap();
        for (f, g) in &resp.points {
            let expected = k / (1.0 + (2.0 * PI * f * tau).powi(2)).sqrt();
            assert_relative_eq!(g.norm(), expected, max_relative = 1e-12);
        }
        // A lag with gain above 1 crosses 0 dB where |G| = 1.
        let fc = resp.margins.gain_crossover_hz.unwrap();
        assert_relative_eq!(
            fc,
            (k * k - 1.0).sqrt() / (2.0 * PI * tau),
            max_relative = 1e-3
        );
        assert!(resp.margins.phase_crossover_hz.is_none());
    }

    #[test]
    fn flat_gain_has_no_crossovers() {
        let grid = log_grid(1.0, 1e4, 100).unwrap();
        let m = extract_margins(&sampled(&grid, |_| Complex64::new(10.0, 0.0)));
        assert_eq!(m, Margins::default());
    }

    #[test]
    fn triple_integrator_phase_margin_is_minus_ninety() {
        let w0 = 2.0 * PI * 1e3;
        let grid = log_grid(10.0, 1e5, 100).unwrap();
        let pts = sampled(&grid, |s| (s / w0).powi(-3));
        let phase = unwrap_phase(&pts);
        assert!(phase.iter().all(|p| (p + 270.0).abs() < 1e-9));
        let m = extract_margins(&pts);
        assert_relative_eq!(m.gain_crossover_hz.unwrap(), 1e3, max_relative = 1e-9);
        assert_relative_eq!(m.phase_margin_deg.unwrap(), -90.0, epsilon = 1e-9);
    }

    #[test]
    fn third_order_lag_gain_margin_matches_closed_form() {
        // G = k/(1+s/w)^3 reaches −180° at w·√3 with |G| = k/8.
        let (k, w) = (4.0, 2.0 * PI * 100.0);
        let grid = log_grid(1.0, 1e5, 200).unwrap();
        let m = extract_margins(&sampled(&grid, |s| k / (1.0 + s / w).powi(3)));
        assert_relative_eq!(
            m.phase_crossover_hz.unwrap(),
            100.0 * 3f64.sqrt(),
            max_relative = 1e-3
        );
        assert_relative_eq!(
            m.gain_margin_db.unwrap(),
            -20.0 * (k / 8.0f64).log10(),
            epsilon = 1e-3
        );
    }

    #[test]
    fn inverting_gain_starts_at_plus_180() {
        let grid = log_grid(1.0, 10.0, 10).unwrap();
        let phase = unwrap_phase(&sampled(&grid, |_| Complex64::new(-2.0, 0.0)));
        assert!(phase.iter().all(|p| (p - 180.0).abs() < 1e-12));
    }

    #[test]
    fn log_grid_endpoints_and_density() {
        let g = log_grid(10.0, 1e4, 100).unwrap();
        assert_eq!(g.len(), 301);
        assert_eq!(g[0], 10.0);
        assert_eq!(g[300], 1e4);
        assert!(log_grid(0.0, 1.0, 10).is_err());
        assert!(log_grid(10.0, 1.0, 10).is_err());
    }

    #[test]
    fn rejects_non_increasing_grid() {
        let m = first_order(1.0, 1.0);
        assert!(frequency_response(&m, TransferInput::Duty, &[1.0, 1.0]).is_err());
        assert!(frequency_response(&m, TransferInput::Duty, &[]).is_err());
    }

    #[test]
    fn reference_plants_are_stable() {
        for spec in [
            ConverterSpec::reference_sepic(),
            ConverterSpec::reference_cuk(),
        ] {
            let d = ConverterSpec::reference_duty(spec.kind);
            let op = solve_dc(&OperatingPointRequest::new(spec.clone(), d).unwrap()).unwrap();
            let model = linearize(&spec, &op).unwrap();
            assert!(model.is_stable(), "{:?}", model.eigenvalues());
            assert!(!model.on_mode_boundary);
        }
    }

    fn dc_gain_by_difference(spec: &ConverterSpec, duty: f64, dd: f64) -> f64 {
        let v = |d: f64| {
            solve_dc(&OperatingPointRequest::new(spec.clone(), d).unwrap())
                .unwrap()
                .v_out
        };
        (v(duty + dd) - v(duty - dd)) / (2.0 * dd)
    }

    #[test]
    fn duty_gain_at_dc_matches_operating_point_difference() {
        for spec in [
            ConverterSpec::reference_sepic(),
            ConverterSpec::reference_cuk(),
        ] {
            let d = ConverterSpec::reference_duty(spec.kind);
            let op = solve_dc(&OperatingPointRequest::new(spec.clone(), d).unwrap()).unwrap();
            let model = linearize(&spec, &op).unwrap();
            let g0 = model.dc_gain(TransferInput::Duty).unwrap();
            assert_relative_eq!(
                g0,
                dc_gain_by_difference(&spec, d, 1e-3),
                max_relative = 5e-3
            );
            let low = model
                .transfer(TransferInput::Duty, Complex64::new(0.0, 2.0 * PI * 1e-3))
                .unwrap();
            assert_relative_eq!(low.re, g0, max_relative = 1e-6);
        }
    }

    #[test]
    fn ideal_ccm_source_gain_is_conversion_ratio() {
        let mut spec = ConverterSpec::reference_sepic().as_ideal();
        spec.load = 0.5;
        let d = 0.4;
        let op = solve_dc(&OperatingPointRequest::new(spec.clone(), d).unwrap()).unwrap();
        assert_eq!(op.mode, Mode::Ccm);
        let model = linearize(&spec, &op).unwrap();
        assert_relative_eq!(
            model.dc_gain(TransferInput::Source).unwrap(),
            d / (1.0 - d),
            max_relative = 1e-6
        );
    }

    #[test]
    fn cuk_duty_gain_is_inverting() {
        let spec = ConverterSpec::reference_cuk();
        assert_eq!(spec.kind, ConverterKind::Cuk);
        let op = solve_dc(&OperatingPointRequest::new(spec.clone(), 0.42).unwrap()).unwrap();
        let model = linearize(&spec, &op).unwrap();
        assert!(model.dc_gain(TransferInput::Duty).unwrap() < 0.0);
    }
}
