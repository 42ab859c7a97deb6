use nalgebra::{DMatrix, DVector};

use super::gauss_newton::simplex_step;
use super::linear::LinearSolver;
use super::{Extras, SolverConfig, SolverOutput};
use crate::error::{Error, Result};
use crate::model::EndmemberMatrix;

/// Polynomial post-nonlinear model `r_ℓ ≈ Σ_{k=1}^{p} w_k·x_ℓᵏ`, `x = Mα`,
/// with `w_1 = 1`.
#[derive(Debug, Clone)]
pub struct PlinearSolver {
    linear: LinearSolver,
    order: usize,
    max_iter: usize,
    tol: f64,
}

fn poly(x: f64, w: &[f64]) -> f64 {
    // w[0] = w_1 multiplies x¹
    w.iter().rev().fold(0.0, |acc, &c| (acc + c) * x)
}

fn poly_derivative(x: f64, w: &[f64]) -> f64 {
    w.iter()
        .enumerate()
        .rev()
        .fold(0.0, |acc, (k, &c)| acc * x + (k + 1) as f64 * c)
}

impl PlinearSolver {
    pub fn new(endmembers: &EndmemberMatrix, cfg: &SolverConfig) -> Self {
        Self {
            linear: LinearSolver::new(endmembers, true, cfg),
            order: cfg.p_order,
            max_iter: cfg.max_iter,
            tol: cfg.tol,
        }
    }

    pub fn bands(&self) -> usize {
        self.linear.bands()
    }

    fn linear_part(&self, alpha: &[f64]) -> DVector<f64> {
        self.linear.matrix() * DVector::from_column_slice(alpha)
    }

    fn objective(&self, r: &DVector<f64>, alpha: &[f64], w: &[f64]) -> f64 {
        let x = self.linear_part(alpha);
        r.iter().zip(x.iter()).map(|(rv, xv)| (rv - poly(*xv, w)).powi(2)).sum()
    }

    /// Least-squares fit of `w_2..w_p` to `r − x` on the columns `x^k`.
    fn fit_coeffs(&self, r: &DVector<f64>, alpha: &[f64]) -> Result<Vec<f64>> {
        let x = self.linear_part(alpha);
        let extra = self.order - 1;
        let a = DMatrix::from_fn(x.len(), extra, |l, k| x[l].powi(k as i32 + 2));
        let b = r - &x;
        let sol = a
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| Error::Numerical(format!("polynomial fit: {e}")))?;
        Ok(std::iter::once(1.0).chain(sol.iter().copied()).collect())
    }

    pub fn solve(&self, r: &[f64]) -> Result<SolverOutput> {
        let (mut alpha, linear_obj) = self.linear.fit(r)?;
        if self.order == 1 {
            return Ok(SolverOutput::new(
                alpha,
                true,
                Extras::Plinear { coeffs: vec![1.0] },
                vec![linear_obj],
            ));
        }
        let rv = DVector::from_column_slice(r);
        let mut w = vec![0.0; self.order];
        w[0] = 1.0;
        let mut current = self.objective(&rv, &alpha, &w);
        let mut trace = vec![current];

        for _ in 0..self.max_iter {
            let previous = current;

            let fitted = self.fit_coeffs(&rv, &alpha)?;
            let value = self.objective(&rv, &alpha, &fitted);
            if value <= current {
                w = fitted;
                current = value;
            }

            let x = self.linear_part(&alpha);
            let residual = DVector::from_iterator(x.len(), rv.iter().zip(x.iter()).map(|(a, b)| a - poly(*b, &w)));
            let mut jac = self.linear.matrix().clone();
            for (l, xv) in x.iter().enumerate() {
                jac.row_mut(l).scale_mut(poly_derivative(*xv, &w));
            }
            let (next, value) = simplex_step(&alpha, &residual, &jac, current, self.tol, |a| {
                self.objective(&rv, a, &w)
            })?;
            alpha = next;
            current = value;

            if !current.is_finite() {
                return Err(Error::Numerical("p-linear objective is not finite".into()));
            }
            trace.push(current);
            if previous - current <= self.tol * previous || current <= 1e-28 {
                break;
            }
        }
        Ok(SolverOutput::new(alpha, true, Extras::Plinear { coeffs: w }, trace))
    }
}
