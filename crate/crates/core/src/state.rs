use nalgebra::Vector4;

/// The four energy-storage states of a two-switch fourth-order converter.
///
/// Current directions are chosen so that `i_l1 + i_l2` is the current
/// shared by the MOSFET and the diode. For the Cuk converter `v_c2` is the
/// (negative) output capacitor voltage with respect to input ground.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StateVector {
    pub i_l1: f64,
    pub i_l2: f64,
    pub v_c1: f64,
    pub v_c2: f64,
}

impl StateVector {
    pub const ZERO: StateVector = StateVector {
        i_l1: 0.0,
        i_l2: 0.0,
        v_c1: 0.0,
        v_c2: 0.0,
    };

    pub fn new(i_l1: f64, i_l2: f64, v_c1: f64, v_c2: f64) -> Self {
        StateVector {
            i_l1,
            i_l2,
            v_c1,
            v_c2,
        }
    }

    /// Total switch-cell current `i_L1 + i_L2`.
    pub fn switch_current(&self) -> f64 {
        self.i_l1 + self.i_l2
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.i_l1, self.i_l2, self.v_c1, self.v_c2]
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.i_l1, self.i_l2, self.v_c1, self.v_c2)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        StateVector::new(v[0], v[1], v[2], v[3])
    }
}

impl From<[f64; 4]> for StateVector {
    fn from(a: [f64; 4]) -> Self {
        StateVector::new(a[0], a[1], a[2], a[3])
    }
}
