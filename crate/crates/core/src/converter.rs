//! Converter topologies, component values and the derived scalars every
//! analysis consumes (equivalent inductance, effective resistance, the
//! CCM/DCM boundary).
//!
//! All quantities are SI base units: V, A, H, F, Ω, Hz, s.

use std::fmt;

use crate::error::{Error, Result};

/// The two fourth-order topologies covered by the averaged switch network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConverterKind {
    Sepic,
    Cuk,
}

impl fmt::Display for ConverterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConverterKind::Sepic => f.write_str("SEPIC"),
            ConverterKind::Cuk => f.write_str("Cuk"),
        }
    }
}

/// Conduction parasitics of the passive parts and both switches.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Parasitics {
    /// ESR of `L1`.
    pub r_l1: f64,
    /// ESR of `L2`.
    pub r_l2: f64,
    /// MOSFET on-resistance.
    pub r_on: f64,
    /// Diode forward drop.
    pub v_d: f64,
    /// Diode forward resistance.
    pub r_d: f64,
    /// ESR of `C1`.
    pub r_c1: f64,
    /// ESR of `C2`.
    pub r_c2: f64,
}

impl Parasitics {
    pub const ZERO: Parasitics = Parasitics {
        r_l1: 0.0,
        r_l2: 0.0,
        r_on: 0.0,
        v_d: 0.0,
        r_d: 0.0,
        r_c1: 0.0,
        r_c2: 0.0,
    };

    fn fields(&self) -> [(&'static str, f64); 7] {
        [
            ("R_L1", self.r_l1),
            ("R_L2", self.r_l2),
            ("R_on1", self.r_on),
            ("V_d", self.v_d),
            ("R_d", self.r_d),
            ("R_C1", self.r_c1),
            ("R_C2", self.r_c2),
        ]
    }
}

/// Parameters that may be changed while a transient is running.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SteppedParameter {
    /// ESR of `L1`.
    InductorEsr1,
    /// ESR of `L2`.
    InductorEsr2,
    /// Load resistance.
    Load,
}

/// Component values of one converter.
///
/// The parasitic values are held as given, but when `ideal` is set every
/// accessor reports them as exactly zero, so the ideal and non-ideal
/// variants share one code path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverterSpec {
    pub kind: ConverterKind,
    /// Input voltage.
    pub vg: f64,
    /// Load resistance.
    pub load: f64,
    pub l1: f64,
    pub l2: f64,
    pub c1: f64,
    pub c2: f64,
    /// Switching frequency.
    pub f_s: f64,
    pub ideal: bool,
    parasitics: Parasitics,
}

impl ConverterSpec {
    /// Builds and validates a spec.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: ConverterKind,
        vg: f64,
        load: f64,
        l1: f64,
        l2: f64,
        c1: f64,
        c2: f64,
        f_s: f64,
        parasitics: Parasitics,
        ideal: bool,
    ) -> Result<Self> {
        let spec = ConverterSpec {
            kind,
            vg,
            load,
            l1,
            l2,
            c1,
            c2,
            f_s,
            ideal,
            parasitics,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Non-ideal SEPIC of the reference design: 62 V in, 52 Ω load,
    /// 50 kHz, nominal duty 0.2, about 22 V out.
    pub fn reference_sepic() -> Self {
        ConverterSpec {
            kind: ConverterKind::Sepic,
            vg: 62.0,
            load: 52.0,
            l1: 13e-3,
            l2: 166e-6,
            c1: 0.5e-6,
            c2: 1000e-6,
            f_s: 50e3,
            ideal: false,
            parasitics: Parasitics {
                r_l1: 0.130,
                r_l2: 0.110,
                r_on: 0.031,
                v_d: 0.7,
                r_d: 0.12,
                r_c1: 0.270,
                r_c2: 0.110,
            },
        }
    }

    /// Non-ideal Cuk of the reference design: 25 V in, 100 Ω load,
    /// 20 kHz, nominal duty 0.42, about −21 V out.
    pub fn reference_cuk() -> Self {
        ConverterSpec {
            kind: ConverterKind::Cuk,
            vg: 25.0,
            load: 100.0,
            l1: 1e-3,
            l2: 1e-3,
            c1: 850e-6,
            c2: 47e-6,
            f_s: 20e3,
            ideal: false,
            parasitics: Parasitics {
                r_l1: 0.15,
                r_l2: 0.2,
                r_on: 0.031,
                v_d: 0.75,
                r_d: 0.11,
                r_c1: 0.2,
                r_c2: 0.3,
            },
        }
    }

    /// Nominal duty of the reference designs.
    pub fn reference_duty(kind: ConverterKind) -> f64 {
        match kind {
            ConverterKind::Sepic => 0.2,
            ConverterKind::Cuk => 0.42,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.vg.is_finite() {
            return Err(invalid("Vg", "must be finite"));
        }
        for (name, value) in [
            ("R", self.load),
            ("L1", self.l1),
            ("L2", self.l2),
            ("C1", self.c1),
            ("C2", self.c2),
            ("f_s", self.f_s),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(
                    name,
                    format!("must be strictly positive, got {value}"),
                ));
            }
        }
        for (name, value) in self.parasitics.fields() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(invalid(name, format!("must be non-negative, got {value}")));
            }
        }
        Ok(())
    }

    /// Effective parasitics: all zero when the spec is ideal.
    pub fn parasitics(&self) -> Parasitics {
        if self.ideal {
            Parasitics::ZERO
        } else {
            self.parasitics
        }
    }

    /// Parasitics as stored, regardless of the `ideal` flag.
    pub fn stored_parasitics(&self) -> Parasitics {
        self.parasitics
    }

    pub fn set_parasitics(&mut self, parasitics: Parasitics) {
        self.parasitics = parasitics;
    }

    /// Copy of this spec with the `ideal` flag set.
    pub fn as_ideal(&self) -> Self {
        ConverterSpec {
            ideal: true,
            ..self.clone()
        }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.f_s
    }

    pub fn parameter(&self, parameter: SteppedParameter) -> f64 {
        match parameter {
            SteppedParameter::InductorEsr1 => self.parasitics().r_l1,
            SteppedParameter::InductorEsr2 => self.parasitics().r_l2,
            SteppedParameter::Load => self.load,
        }
    }

    /// Changes one steppable parameter. Setting an ESR on an ideal spec
    /// stores the value but it stays invisible until `ideal` is cleared.
    pub fn set_parameter(&mut self, parameter: SteppedParameter, value: f64) -> Result<()> {
        let mut next = self.clone();
        match parameter {
            SteppedParameter::InductorEsr1 => next.parasitics.r_l1 = value,
            SteppedParameter::InductorEsr2 => next.parasitics.r_l2 = value,
            SteppedParameter::Load => next.load = value,
        }
        next.validate()?;
        *self = next;
        Ok(())
    }
}

fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// A converter together with the MOSFET duty cycle to solve at.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPointRequest {
    pub spec: ConverterSpec,
    pub duty: f64,
}

impl OperatingPointRequest {
    pub fn new(spec: ConverterSpec, duty: f64) -> Result<Self> {
        spec.validate()?;
        if !(duty > 0.0 && duty < 1.0) {
            return Err(Error::Domain(format!(
                "duty must lie in (0, 1), got {duty}"
            )));
        }
        Ok(OperatingPointRequest { spec, duty })
    }
}

/// Parallel combination `L1·L2/(L1+L2)` seen by the sum of the inductor
/// currents.
pub fn equivalent_inductance(spec: &ConverterSpec) -> f64 {
    spec.l1 * spec.l2 / (spec.l1 + spec.l2)
}

/// Loss-free resistance `2·L·f_s/D²` presented by the MOSFET port in DCM.
pub fn effective_resistance(spec: &ConverterSpec, duty: f64) -> Result<f64> {
    if !(duty > 0.0 && duty <= 1.0) {
        return Err(Error::Domain(format!(
            "effective resistance needs duty in (0, 1], got {duty}"
        )));
    }
    Ok(2.0 * equivalent_inductance(spec) * spec.f_s / (duty * duty))
}

/// Dimensionless conduction parameter `K = 2·L·f_s/R`.
pub fn conduction_parameter(spec: &ConverterSpec) -> f64 {
    2.0 * equivalent_inductance(spec) * spec.f_s / spec.load
}

/// Whether the converter runs discontinuous at `duty`.
///
/// Evaluates the DCM branch of the duty law at the lossless CCM operating
/// point, which reduces to `K < (1−D)²`. Conduction losses are not taken
/// into account.
pub fn dcm_predicted(spec: &ConverterSpec, duty: f64) -> bool {
    let d_off = 1.0 - duty;
    conduction_parameter(spec) < d_off * d_off
}
