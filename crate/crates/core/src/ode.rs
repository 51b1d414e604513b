use alloc::vec::Vec;
use nalgebra::DVector;

use crate::error::Result;

/// Classic fourth-order Runge-Kutta on `[0, s_end]` with `steps` equal steps.
///
/// Returns the state at every node, `states[k]` at `s = k * s_end / steps`.
/// `project` runs after each completed step (e.g. to restore a symmetry the
/// stage arithmetic only preserves up to round-off).
pub(crate) fn rk4<F, P>(
    y0: DVector<f64>,
    s_end: f64,
    steps: usize,
    mut rhs: F,
    mut project: P,
) -> Result<Vec<DVector<f64>>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
    P: FnMut(&mut DVector<f64>),
{
    let h = s_end / steps as f64;
    let mut states = Vec::with_capacity(steps + 1);
    let mut y = y0;
    states.push(y.clone());
    for k in 0..steps {
        let s = k as f64 * h;
        let k1 = rhs(s, &y)?;
        let k2 = rhs(s + 0.5 * h, &(&y + &k1 * (0.5 * h)))?;
        let k3 = rhs(s + 0.5 * h, &(&y + &k2 * (0.5 * h)))?;
        let k4 = rhs(s + h, &(&y + &k3 * h))?;
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        project(&mut y);
        states.push(y.clone());
    }
    Ok(states)
}
