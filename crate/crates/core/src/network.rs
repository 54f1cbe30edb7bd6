//! Large-signal averaged state equations of SEPIC and Cuk with the switch
//! pair replaced by the averaged two-port of [`crate::averaged`].
//!
//! Node conventions (MOSFET from node A to ground, `C1` from A to B):
//!
//! * SEPIC: `L1` from the source to A, `L2` from ground to B, diode from B
//!   to the output. `i_L2` flows from ground into B.
//! * Cuk: `L1` from the source to A, diode from B to ground, `L2` from the
//!   output to B. `i_L2` flows from the output into B; the output is negative.
//!
//! With these directions both switches carry `i_L1 + i_L2`, and KCL/KVL give
//! `I1 + I2 = i_L1 + i_L2` and `V1 + V2 = V_off`, where `V_off` is the
//! voltage a blocking switch sees (including capacitor ESR drops).

use crate::averaged::{
    mu_combined, port_relations, AveragedPortState, Mode, MuLaw, MU_CEILING_GUARD,
};
use crate::converter::{effective_resistance, ConverterKind, ConverterSpec, Parasitics};
use crate::state::StateVector;

/// Result of evaluating the averaged network at one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkEvaluation {
    /// Time derivative of the state.
    pub derivative: StateVector,
    pub ports: AveragedPortState,
    /// Load voltage including the output capacitor ESR drop.
    pub v_out: f64,
    /// The duty law hit its undefined region and fell back to CCM.
    pub mu_fallback: bool,
    /// Value of the DCM branch of the duty law at the resolved `μ`.
    pub dcm_branch: f64,
}

impl NetworkEvaluation {
    /// Inductor voltages and capacitor currents, i.e. the derivative scaled
    /// by the storage elements. Zero at an equilibrium.
    pub fn storage_drive(&self, spec: &ConverterSpec) -> [f64; 4] {
        let d = &self.derivative;
        [
            d.i_l1 * spec.l1,
            d.i_l2 * spec.l2,
            d.v_c1 * spec.c1,
            d.v_c2 * spec.c2,
        ]
    }
}

/// Currents and voltages set by the passive network once the port currents
/// are known.
#[derive(Debug, Clone, Copy)]
struct Terminal {
    i_c1: f64,
    i_c2: f64,
    v_out: f64,
    v_off: f64,
}

fn terminal(spec: &ConverterSpec, p: &Parasitics, x: &StateVector, i1: f64, i2: f64) -> Terminal {
    let i_c1 = x.i_l1 - i1;
    let r = spec.load;
    let load_feed = match spec.kind {
        ConverterKind::Sepic => i2,
        ConverterKind::Cuk => -x.i_l2,
    };
    let i_c2 = (load_feed - x.v_c2 / r) / (1.0 + p.r_c2 / r);
    let v_out = x.v_c2 + p.r_c2 * i_c2;
    let v_off = match spec.kind {
        ConverterKind::Sepic => v_out + x.v_c1 + p.r_c1 * i_c1,
        ConverterKind::Cuk => x.v_c1 + p.r_c1 * i_c1,
    };
    Terminal {
        i_c1,
        i_c2,
        v_out,
        v_off,
    }
}

/// Port quantities for a given effective duty.
fn ports_at(
    spec: &ConverterSpec,
    p: &Parasitics,
    x: &StateVector,
    duty: f64,
    mu: f64,
) -> (AveragedPortState, Terminal) {
    let i_cell = x.switch_current();
    let i1 = mu * i_cell;
    let i2 = (1.0 - mu) * i_cell;
    let term = terminal(spec, p, x, i1, i2);
    let core_v2 = mu * term.v_off;
    let core_v1 = if mu > 0.0 {
        port_relations(mu, core_v2, i1).0
    } else {
        term.v_off
    };
    // Diode conduction interval; equals 1 − D when μ = D.
    let d2 = if mu > 0.0 {
        duty * (1.0 - mu) / mu
    } else {
        1.0
    };
    let drop = p.r_on * i1 + p.r_d * i2 + p.v_d * d2;
    let ports = AveragedPortState {
        v1: core_v1 + drop,
        v2: core_v2 - drop,
        i1,
        i2,
        mu,
        mode: Mode::Ccm,
    };
    (ports, term)
}

/// Solves `μ = max(D, 1/(1 + Re·I1(μ)/V2(μ)))` for the effective duty.
fn resolve_mu(spec: &ConverterSpec, p: &Parasitics, x: &StateVector, duty: f64) -> MuLaw {
    if duty <= 0.0 {
        return MuLaw {
            mu: 0.0,
            mode: Mode::Ccm,
            dcm_branch: 0.0,
            fallback: false,
        };
    }
    let re = match effective_resistance(spec, duty) {
        Ok(re) => re,
        Err(_) => {
            return MuLaw {
                mu: duty,
                mode: Mode::Ccm,
                dcm_branch: f64::NAN,
                fallback: true,
            }
        }
    };
    let law_at = |mu: f64| {
        let (ports, _) = ports_at(spec, p, x, duty, mu);
        mu_combined(duty, re, ports.i1, ports.v2)
    };

    // Without conduction drops the DCM branch does not depend on μ, so the
    // iteration below settles in one or two passes.
    let mut mu = duty;
    for _ in 0..100 {
        let law = law_at(mu);
        if law.fallback {
            return law;
        }
        if (law.mu - mu).abs() <= 1e-15 {
            return law;
        }
        mu = law.mu;
    }

    // Bisection on g(μ) = μ − law(μ) over [D, 1−ε]; g(D) ≤ 0 ≤ g(1−ε).
    let (mut lo, mut hi) = (duty, 1.0 - MU_CEILING_GUARD);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let law = law_at(mid);
        if law.fallback {
            return law;
        }
        if mid - law.mu > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 {
            break;
        }
    }
    law_at(0.5 * (lo + hi))
}

/// Evaluates the averaged state equations at `x` for duty `duty` and input
/// voltage `vg`.
pub fn evaluate(spec: &ConverterSpec, x: &StateVector, duty: f64, vg: f64) -> NetworkEvaluation {
    let p = spec.parasitics();
    let law = resolve_mu(spec, &p, x, duty);
    let (mut ports, term) = ports_at(spec, &p, x, duty, law.mu);
    ports.mode = law.mode;

    let di_l1 = (vg - p.r_l1 * x.i_l1 - ports.v1) / spec.l1;
    let di_l2 = match spec.kind {
        ConverterKind::Sepic => {
            let v_b = ports.v1 - x.v_c1 - p.r_c1 * term.i_c1;
            (-v_b - p.r_l2 * x.i_l2) / spec.l2
        }
        ConverterKind::Cuk => (term.v_out + ports.v2 - p.r_l2 * x.i_l2) / spec.l2,
    };
    NetworkEvaluation {
        derivative: StateVector::new(di_l1, di_l2, term.i_c1 / spec.c1, term.i_c2 / spec.c2),
        ports,
        v_out: term.v_out,
        mu_fallback: law.fallback,
        dcm_branch: law.dcm_branch,
    }
}
