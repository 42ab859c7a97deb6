//! Projected Gauss–Newton step on the simplex with backtracking, shared by
//! the alternating nonlinear solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::qp::{self, Constraints};

pub(crate) const MAX_HALVINGS: usize = 50;

/// One α-block update for `min ‖r − f(α)‖²` over the simplex.
///
/// `residual` is `r − f(α)` and `jac` is `∂f/∂α` at the current `alpha`;
/// `objective` evaluates `‖r − f(·)‖²`. Returns the accepted point and its
/// objective, which never exceeds `current`.
pub(crate) fn simplex_step(
    alpha: &[f64],
    residual: &DVector<f64>,
    jac: &DMatrix<f64>,
    current: f64,
    tol: f64,
    objective: impl Fn(&[f64]) -> f64,
) -> Result<(Vec<f64>, f64)> {
    let r = alpha.len();
    let a = DVector::from_column_slice(alpha);
    let jtj = jac.tr_mul(jac);
    let damping = 1e-12 * (jtj.trace() / r as f64).max(1e-300);
    let h = &jtj + DMatrix::identity(r, r) * damping;
    let c = -(jac.tr_mul(&(residual + jac * &a))) - &a * damping;
    let target = qp::solve(&h, &c, &Constraints::simplex(), tol)?.x;
    let d: Vec<f64> = target.iter().zip(alpha).map(|(t, x)| t - x).collect();
    let dv = DVector::from_column_slice(&d);
    let predicted = current - (residual - jac * &dv).norm_squared();

    let mut t = 1.0;
    for _ in 0..=MAX_HALVINGS {
        let trial: Vec<f64> = alpha.iter().zip(&d).map(|(x, s)| (x + t * s).max(0.0)).collect();
        let value = objective(&trial);
        if value.is_finite() && value <= current {
            return Ok((trial, value));
        }
        t *= 0.5;
    }
    // A model that promised a real decrease but no step along it delivers one
    // means the iteration has broken down; otherwise we are at a stationary point.
    if predicted > 1e-6 * current && current > 1e-20 {
        return Err(Error::Numerical(format!(
            "no decrease after {MAX_HALVINGS} step halvings"
        )));
    }
    Ok((alpha.to_vec(), current))
}
