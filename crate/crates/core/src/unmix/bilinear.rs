use nalgebra::{DMatrix, DVector};

use super::gauss_newton::simplex_step;
use super::linear::LinearSolver;
use super::{Extras, SolverConfig, SolverOutput};
use crate::error::{Error, Result};
use crate::model::EndmemberMatrix;
use crate::qp::{self, Constraints};
use crate::simulate::DEFAULT_GAMMA;

/// Generalised bilinear model
/// `r ≈ Mα + Σ_{i<j} γ_ij·α_i·α_j·(m_i ⊙ m_j)`, `α` on the simplex,
/// `γ ∈ [0, 1]`, fitted by alternating exact γ and Gauss–Newton α blocks.
#[derive(Debug, Clone)]
pub struct GbmSolver {
    linear: LinearSolver,
    pairs: Vec<(usize, usize)>,
    /// Column `p` holds `m_i ⊙ m_j` for `pairs[p]`.
    products: DMatrix<f64>,
    max_iter: usize,
    tol: f64,
}

impl GbmSolver {
    pub fn new(endmembers: &EndmemberMatrix, cfg: &SolverConfig) -> Result<Self> {
        let r = endmembers.count();
        if r < 2 {
            return Err(Error::Dimension("bilinear model needs at least two endmembers".into()));
        }
        let m = endmembers.matrix();
        let pairs: Vec<(usize, usize)> = (0..r).flat_map(|i| (i + 1..r).map(move |j| (i, j))).collect();
        let products = DMatrix::from_fn(m.nrows(), pairs.len(), |l, p| {
            let (i, j) = pairs[p];
            m[(l, i)] * m[(l, j)]
        });
        Ok(Self {
            linear: LinearSolver::new(endmembers, true, cfg),
            pairs,
            products,
            max_iter: cfg.max_iter,
            tol: cfg.tol,
        })
    }

    pub fn bands(&self) -> usize {
        self.linear.bands()
    }

    fn interaction_columns(&self, alpha: &[f64]) -> DMatrix<f64> {
        let mut q = self.products.clone();
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            q.column_mut(p).scale_mut(alpha[i] * alpha[j]);
        }
        q
    }

    fn forward(&self, alpha: &[f64], gamma: &[f64]) -> DVector<f64> {
        let a = DVector::from_column_slice(alpha);
        let g = DVector::from_column_slice(gamma);
        self.linear.matrix() * a + self.interaction_columns(alpha) * g
    }

    fn jacobian(&self, alpha: &[f64], gamma: &[f64]) -> DMatrix<f64> {
        let mut jac = self.linear.matrix().clone();
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            let col = self.products.column(p);
            jac.column_mut(i).axpy(gamma[p] * alpha[j], &col, 1.0);
            jac.column_mut(j).axpy(gamma[p] * alpha[i], &col, 1.0);
        }
        jac
    }

    pub fn solve(&self, r: &[f64]) -> Result<SolverOutput> {
        let rv = DVector::from_column_slice(r);
        let objective = |alpha: &[f64], gamma: &[f64]| (&rv - self.forward(alpha, gamma)).norm_squared();

        let (mut alpha, _) = self.linear.fit(r)?;
        let mut gamma = vec![DEFAULT_GAMMA; self.pairs.len()];
        let mut current = objective(&alpha, &gamma);
        let mut trace = vec![current];
        let upper = vec![1.0; self.pairs.len()];

        for _ in 0..self.max_iter {
            let previous = current;

            // γ-block: box-constrained least squares on the interaction columns.
            let q = self.interaction_columns(&alpha);
            let target = &rv - self.linear.matrix() * DVector::from_column_slice(&alpha);
            let c = -(q.tr_mul(&target));
            let sol = qp::solve(&q.tr_mul(&q), &c, &Constraints::boxed(upper.clone()), self.tol)?;
            let value = objective(&alpha, &sol.x);
            if value <= current {
                gamma = sol.x;
                current = value;
            }

            // α-block.
            let residual = &rv - self.forward(&alpha, &gamma);
            let jac = self.jacobian(&alpha, &gamma);
            let (next, value) = simplex_step(&alpha, &residual, &jac, current, self.tol, |a| objective(a, &gamma))?;
            alpha = next;
            current = value;

            if !current.is_finite() {
                return Err(Error::Numerical("bilinear objective is not finite".into()));
            }
            trace.push(current);
            if previous - current <= self.tol * previous || current <= 1e-28 {
                break;
            }
        }
        Ok(SolverOutput::new(alpha, true, Extras::Gbm { gamma }, trace))
    }
}
