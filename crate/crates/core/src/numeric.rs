//! Small numerical helpers shared by the solvers.

use nalgebra::{SMatrix, SVector};

/// Central-difference Jacobian of `f` at `x` with per-variable steps.
pub(crate) fn central_jacobian<const N: usize, const M: usize>(
    f: impl Fn(&SVector<f64, N>) -> SVector<f64, M>,
    x: &SVector<f64, N>,
    steps: &[f64; N],
) -> SMatrix<f64, M, N> {
    let mut jac = SMatrix::<f64, M, N>::zeros();
    for j in 0..N {
        let h = steps[j];
        let mut xp = *x;
        let mut xm = *x;
        xp[j] += h;
        xm[j] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Relative perturbation `rel·max(|x|, floor)`.
pub(crate) fn relative_step(x: f64, floor: f64, rel: f64) -> f64 {
    rel * x.abs().max(floor)
}
