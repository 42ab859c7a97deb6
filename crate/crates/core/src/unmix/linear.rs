use nalgebra::{DMatrix, DVector};

use super::{Extras, SolverConfig, SolverOutput};
use crate::error::Result;
use crate::model::EndmemberMatrix;
use crate::qp::{self, Constraints};

/// NCLS / FCLS with the Gram matrix cached.
#[derive(Debug, Clone)]
pub struct LinearSolver {
    m: DMatrix<f64>,
    gram: DMatrix<f64>,
    sum_to_one: bool,
    tol: f64,
}

impl LinearSolver {
    pub fn new(endmembers: &EndmemberMatrix, sum_to_one: bool, cfg: &SolverConfig) -> Self {
        Self::from_matrix(endmembers.matrix().clone(), sum_to_one, cfg.tol)
    }

    pub(crate) fn from_matrix(m: DMatrix<f64>, sum_to_one: bool, tol: f64) -> Self {
        let gram = m.transpose() * &m;
        Self {
            m,
            gram,
            sum_to_one,
            tol,
        }
    }

    pub fn bands(&self) -> usize {
        self.m.nrows()
    }

    pub fn count(&self) -> usize {
        self.m.ncols()
    }

    pub(crate) fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Minimiser of `‖r − Mα‖²` and its squared residual.
    pub(crate) fn fit(&self, r: &[f64]) -> Result<(Vec<f64>, f64)> {
        let rv = DVector::from_column_slice(r);
        let c = -(self.m.tr_mul(&rv));
        let cons = if self.sum_to_one {
            Constraints::simplex()
        } else {
            Constraints::nonneg()
        };
        let sol = qp::solve(&self.gram, &c, &cons, self.tol)?;
        let residual = &rv - &self.m * DVector::from_column_slice(&sol.x);
        Ok((sol.x, residual.norm_squared()))
    }

    pub fn solve(&self, r: &[f64]) -> Result<SolverOutput> {
        let (alpha, objective) = self.fit(r)?;
        Ok(SolverOutput::new(alpha, self.sum_to_one, Extras::None, vec![objective]))
    }
}
