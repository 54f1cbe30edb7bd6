//! The averaged two-switch network.
//!
//! The MOSFET/diode pair is replaced by a two-port whose port quantities are
//! switching-period averages:
//!
//! * port 1 (MOSFET): voltage `V1` across the switch, current `I1` through it;
//! * port 2 (diode): reverse voltage `V2` across the diode, forward current `I2`.
//!
//! CCM and DCM are covered by one `(1−μ):μ` transformer whose effective duty
//! `μ` follows the combined law `μ = max(D, 1/(1 + Re·I1/V2))`. In DCM this
//! makes the MOSFET port a loss-free resistor `Re` and the diode port a
//! power sink. In CCM `μ = D` and the ordinary averaged-switch relations
//! are recovered.

use crate::converter::{ConverterKind, ConverterSpec, Parasitics};
use crate::state::StateVector;

/// Upper guard on `μ`, keeping `(1−μ)/μ` finite.
pub const MU_CEILING_GUARD: f64 = 1e-9;

/// Conduction mode of the switch network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Ccm,
    Dcm,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Ccm => "CCM",
            Mode::Dcm => "DCM",
        })
    }
}

/// Averaged port quantities of the switch network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AveragedPortState {
    pub v1: f64,
    pub v2: f64,
    pub i1: f64,
    pub i2: f64,
    /// Effective duty, `μ ≥ D`.
    pub mu: f64,
    pub mode: Mode,
}

/// Fractions of the switching period spent in each sub-interval:
/// MOSFET on (`d1`), diode on (`d2`), both off (`d3`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchIntervalDuties {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl SwitchIntervalDuties {
    /// CCM partition `(D, 1−D, 0)`.
    pub fn ccm(duty: f64) -> Self {
        SwitchIntervalDuties {
            d1: duty,
            d2: 1.0 - duty,
            d3: 0.0,
        }
    }

    /// Partition implied by an effective duty: `μ = D1/(D1+D2)`.
    pub fn from_mu(duty: f64, mu: f64, mode: Mode) -> Self {
        match mode {
            Mode::Ccm => Self::ccm(duty),
            Mode::Dcm => {
                let d2 = duty * (1.0 - mu) / mu;
                SwitchIntervalDuties {
                    d1: duty,
                    d2,
                    d3: (1.0 - duty - d2).max(0.0),
                }
            }
        }
    }

    /// Effective duty `D1/(D1+D2)`.
    pub fn mu(&self) -> f64 {
        self.d1 / (self.d1 + self.d2)
    }

    pub fn mode(&self) -> Mode {
        if self.d3 > 0.0 {
            Mode::Dcm
        } else {
            Mode::Ccm
        }
    }
}

/// Outcome of one evaluation of the combined duty law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuLaw {
    pub mu: f64,
    pub mode: Mode,
    /// Value of the DCM branch `1/(1 + Re·I1/V2)` (NaN on fallback).
    pub dcm_branch: f64,
    /// Set when the DCM branch was undefined (`V2 ≤ 0` or `I1 < 0`) and
    /// the CCM value was returned instead.
    pub fallback: bool,
}

/// Combined CCM/DCM duty law `μ = max(D, 1/(1 + Re·I1/V2))`.
///
/// `port_voltage` is the averaged diode-port voltage `V2`. The result is
/// clamped to `[D, 1−ε]`. Exactly on the boundary the CCM branch wins.
pub fn mu_combined(duty: f64, re: f64, i1: f64, port_voltage: f64) -> MuLaw {
    if !(port_voltage > 0.0 && i1 >= 0.0 && re.is_finite()) {
        return MuLaw {
            mu: duty,
            mode: Mode::Ccm,
            dcm_branch: f64::NAN,
            fallback: true,
        };
    }
    let branch = 1.0 / (1.0 + re * i1 / port_voltage);
    if branch > duty {
        MuLaw {
            mu: branch.min(1.0 - MU_CEILING_GUARD).max(duty),
            mode: Mode::Dcm,
            dcm_branch: branch,
            fallback: false,
        }
    } else {
        MuLaw {
            mu: duty,
            mode: Mode::Ccm,
            dcm_branch: branch,
            fallback: false,
        }
    }
}

/// Transformer realization of the switch network:
/// `V1 = ((1−μ)/μ)·V2`, `I2 = ((1−μ)/μ)·I1`.
///
/// Power is conserved identically, `V1·I1 = V2·I2`.
pub fn port_relations(mu: f64, v2: f64, i1: f64) -> (f64, f64) {
    debug_assert!(mu > 0.0 && mu < 1.0, "mu must lie in (0, 1), got {mu}");
    let ratio = (1.0 - mu) / mu;
    (ratio * v2, ratio * i1)
}

/// Interval-weighted port averages of the lossless switch pair.
///
/// Port currents use the switch-cell current averaged over the conducting
/// sub-intervals, `(i_L1+i_L2)/(D1+D2)`, which is the plain sum in CCM.
pub fn average_switch_waveforms_ideal(
    spec: &ConverterSpec,
    duties: &SwitchIntervalDuties,
    state: &StateVector,
) -> AveragedPortState {
    interval_average(spec.kind, &Parasitics::ZERO, duties, state)
}

/// Interval-weighted port averages including MOSFET on-resistance and the
/// diode drop and forward resistance. Reduces exactly to
/// [`average_switch_waveforms_ideal`] when those parasitics vanish.
pub fn average_switch_waveforms_nonideal(
    spec: &ConverterSpec,
    duties: &SwitchIntervalDuties,
    state: &StateVector,
) -> AveragedPortState {
    interval_average(spec.kind, &spec.parasitics(), duties, state)
}

fn interval_average(
    kind: ConverterKind,
    p: &Parasitics,
    duties: &SwitchIntervalDuties,
    x: &StateVector,
) -> AveragedPortState {
    let SwitchIntervalDuties { d1, d2, d3 } = *duties;
    let conducting = d1 + d2;
    let i_cell = if conducting > 0.0 {
        x.switch_current() / conducting
    } else {
        0.0
    };
    let mosfet_drop = p.r_on * i_cell;
    let diode_drop = p.v_d + p.r_d * i_cell;
    let (v1, v2) = match kind {
        ConverterKind::Sepic => (
            d1 * mosfet_drop + d2 * (x.v_c1 + x.v_c2 + diode_drop) + d3 * x.v_c1,
            d1 * (x.v_c1 + x.v_c2 - mosfet_drop) - d2 * diode_drop + d3 * x.v_c2,
        ),
        ConverterKind::Cuk => (
            d1 * mosfet_drop + d2 * (x.v_c1 + diode_drop) + d3 * (x.v_c1 + x.v_c2),
            d1 * (x.v_c1 - mosfet_drop) - d2 * diode_drop - d3 * x.v_c2,
        ),
    };
    AveragedPortState {
        v1,
        v2,
        i1: d1 * i_cell,
        i2: d2 * i_cell,
        mu: if conducting > 0.0 {
            d1 / conducting
        } else {
            d1
        },
        mode: duties.mode(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::converter::{effective_resistance, equivalent_inductance};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn mu_law_examples() {
        // Re·I1/V2 = 1
        let law = mu_combined(0.3, 10.0, 1.0, 10.0);
        assert_eq!(law.mu, 0.5);
        assert_eq!(law.mode, Mode::Dcm);
        // Re·I1/V2 = 9
        let law = mu_combined(0.3, 90.0, 1.0, 10.0);
        assert_eq!(law.mu, 0.3);
        assert_eq!(law.mode, Mode::Ccm);
    }

    #[test]
    fn mu_law_falls_back_to_ccm_where_undefined() {
        for (i1, v2) in [(1.0, 0.0), (1.0, -3.0), (-0.1, 5.0), (1.0, f64::NAN)] {
            let law = mu_combined(0.4, 50.0, i1, v2);
            assert!(law.fallback);
            assert_eq!(law.mu, 0.4);
            assert_eq!(law.mode, Mode::Ccm);
        }
    }

    #[test]
    fn mu_law_is_capped_below_one() {
        let law = mu_combined(0.3, 50.0, 0.0, 10.0);
        assert_eq!(law.mu, 1.0 - MU_CEILING_GUARD);
        assert!(!law.fallback);
    }

    #[test]
    fn boundary_tie_reports_ccm() {
        // 1/(1 + 4) = 0.2 exactly equals D.
        let law = mu_combined(0.2, 4.0, 1.0, 1.0);
        assert_eq!(law.mode, Mode::Ccm);
        assert_eq!(law.mu, 0.2);
    }

    #[test]
    fn port_relation_examples() {
        assert_eq!(port_relations(0.5, 10.0, 2.0), (10.0, 2.0));
        let (v1, i2) = port_relations(0.25, 10.0, 1.0);
        assert_relative_eq!(v1, 30.0, max_relative = 1e-15);
        assert_relative_eq!(i2, 3.0, max_relative = 1e-15);
    }

    #[test]
    fn triangular_peak_reproduces_loss_free_resistor() {
        // Inductor sum ramps from zero with slope V1/L over D1·Ts; the port
        // current average is D1·peak/2 = D1²·V1·Ts/(2L) = V1/Re.
        let spec = ConverterSpec::reference_sepic().as_ideal();
        let l = equivalent_inductance(&spec);
        let ts = spec.period();
        let (d1, v1) = (0.2, 62.0);
        let peak = v1 * d1 * ts / l;
        let i1 = d1 * peak / 2.0;
        assert_relative_eq!(i1, d1 * d1 * v1 * ts / (2.0 * l), max_relative = 1e-14);
        assert_relative_eq!(
            i1,
            v1 / effective_resistance(&spec, d1).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn volt_second_balance_fixes_second_interval() {
        // Ideal steady DCM state of the reference SEPIC: Vc1 = Vg, Vc2 = V0.
        let spec = ConverterSpec::reference_sepic().as_ideal();
        let (vg, v0, d1) = (62.0, 22.086_381_127_864_783, 0.2);
        let d2 = d1 * vg / v0;
        let duties = SwitchIntervalDuties {
            d1,
            d2,
            d3: 1.0 - d1 - d2,
        };
        let x = StateVector::new(0.151_305_28, 0.424_738_1, vg, v0);
        let ports = average_switch_waveforms_ideal(&spec, &duties, &x);
        assert_relative_eq!(ports.v1, vg, max_relative = 1e-12);
        assert_relative_eq!(ports.v2, v0, max_relative = 1e-12);
        assert_relative_eq!(d1 * ports.v1, d2 * ports.v2, max_relative = 1e-12);
        assert_eq!(ports.mode, Mode::Dcm);
    }

    #[test]
    fn zero_switch_current_gives_zero_port_currents() {
        let spec = ConverterSpec::reference_cuk();
        let x = StateVector::new(0.7, -0.7, 40.0, -15.0);
        let duties = SwitchIntervalDuties {
            d1: 0.4,
            d2: 0.3,
            d3: 0.3,
        };
        for ports in [
            average_switch_waveforms_ideal(&spec, &duties, &x),
            average_switch_waveforms_nonideal(&spec, &duties, &x),
        ] {
            assert_eq!(ports.i1, 0.0);
            assert_eq!(ports.i2, 0.0);
        }
    }

    #[test]
    fn cuk_port_currents_follow_interval_weights_in_ccm() {
        let spec = ConverterSpec::reference_cuk();
        let x = StateVector::new(0.3, 0.25, 48.0, -22.0);
        let duties = SwitchIntervalDuties::ccm(0.42);
        let ports = average_switch_waveforms_nonideal(&spec, &duties, &x);
        assert_relative_eq!(ports.i1, 0.55 * 0.42, max_relative = 1e-14);
        assert_relative_eq!(ports.i2, 0.55 * 0.58, max_relative = 1e-14);
    }

    #[test]
    fn duties_from_mu_partition_the_period() {
        let d = SwitchIntervalDuties::from_mu(0.2, 0.262_663, Mode::Dcm);
        assert_relative_eq!(d.d1 + d.d2 + d.d3, 1.0, max_relative = 1e-15);
        assert!(d.d3 > 0.0);
        assert_relative_eq!(d.mu(), 0.262_663, max_relative = 1e-12);
        let c = SwitchIntervalDuties::from_mu(0.6, 0.6, Mode::Ccm);
        assert_eq!(c.d3, 0.0);
        assert_eq!(c.mode(), Mode::Ccm);
    }

    proptest! {
        #[test]
        fn mu_law_bounds(d in 0.01f64..0.99, re in 1e-3f64..1e5, i1 in -1.0f64..10.0, v2 in -10.0f64..100.0) {
            let law = mu_combined(d, re, i1, v2);
            prop_assert!(law.mu >= d && law.mu < 1.0);
            if !law.fallback {
                prop_assert_eq!(law.mu == d, law.dcm_branch <= d);
            }
        }

        #[test]
        fn transformer_conserves_power(mu in 1e-3f64..0.999, v2 in -100.0f64..100.0, i1 in -10.0f64..10.0) {
            let (v1, i2) = port_relations(mu, v2, i1);
            let scale = (v1 * i1).abs().max(1e-300);
            prop_assert!((v1 * i1 - v2 * i2).abs() <= 1e-13 * scale);
        }

        #[test]
        fn nonideal_reduces_to_ideal_without_parasitics(
            il1 in -2.0f64..2.0, il2 in -2.0f64..2.0, vc1 in 0.0f64..100.0, vc2 in -50.0f64..50.0,
            d1 in 0.05f64..0.9, frac in 0.0f64..1.0, cuk in proptest::bool::ANY,
        ) {
            let mut spec = if cuk { ConverterSpec::reference_cuk() } else { ConverterSpec::reference_sepic() };
            spec.set_parasitics(Parasitics::ZERO);
            let d2 = (1.0 - d1) * frac;
            let duties = SwitchIntervalDuties { d1, d2, d3: 1.0 - d1 - d2 };
            let x = StateVector::new(il1, il2, vc1, vc2);
            prop_assert_eq!(
                average_switch_waveforms_nonideal(&spec, &duties, &x),
                average_switch_waveforms_ideal(&spec, &duties, &x)
            );
        }
    }
}
