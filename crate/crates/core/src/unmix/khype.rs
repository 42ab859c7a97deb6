use nalgebra::{DMatrix, DVector};

use super::{Extras, SolverConfig, SolverOutput};
use crate::error::{Error, Result};
use crate::model::EndmemberMatrix;
use crate::qp::{self, Constraints};

/// Jitter added before the positive-semidefiniteness check of the kernel.
const KERNEL_JITTER: f64 = 1e-10;

/// Linear mixture plus a Gaussian-kernel fluctuation over endmember band rows.
///
/// With `S = (K + λI)⁻¹` the fluctuation coefficients have the closed form
/// `β = S(r − Mα)`, which leaves the simplex QP
/// `min ½αᵀ(I + MᵀSM)α − (MᵀSr)ᵀα` for the abundances.
#[derive(Debug, Clone)]
pub struct KhypeSolver {
    m: DMatrix<f64>,
    s: DMatrix<f64>,
    sm: DMatrix<f64>,
    hessian: DMatrix<f64>,
    lambda: f64,
    tol: f64,
}

/// Gaussian kernel matrix over the rows of `m`.
pub(crate) fn kernel_matrix(m: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let l = m.nrows();
    let denom = 2.0 * sigma * sigma;
    DMatrix::from_fn(l, l, |i, j| {
        let d2: f64 = m.row(i).iter().zip(m.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        (-d2 / denom).exp()
    })
}

impl KhypeSolver {
    pub fn new(endmembers: &EndmemberMatrix, cfg: &SolverConfig) -> Result<Self> {
        let m = endmembers.matrix().clone();
        let l = m.nrows();
        let k = kernel_matrix(&m, cfg.kernel_sigma);
        if (&k + DMatrix::identity(l, l) * KERNEL_JITTER).cholesky().is_none() {
            return Err(Error::Numerical("kernel matrix is not positive semidefinite".into()));
        }
        let lambda = cfg.reg_lambda;
        let s = (k + DMatrix::identity(l, l) * lambda)
            .cholesky()
            .ok_or_else(|| Error::Numerical("K + λI is not positive definite".into()))?
            .inverse();
        let sm = &s * &m;
        let r = m.ncols();
        let hessian = DMatrix::identity(r, r) + m.tr_mul(&sm);
        Ok(Self {
            m,
            s,
            sm,
            hessian,
            lambda,
            tol: cfg.tol,
        })
    }

    pub fn bands(&self) -> usize {
        self.m.nrows()
    }

    pub fn solve(&self, r: &[f64]) -> Result<SolverOutput> {
        let rv = DVector::from_column_slice(r);
        let c = -(self.sm.tr_mul(&rv));
        let sol = qp::solve(&self.hessian, &c, &Constraints::simplex(), self.tol)?;
        let alpha = DVector::from_column_slice(&sol.x);
        let e = &rv - &self.m * &alpha;
        let beta = &self.s * &e;
        // Kβ = e − λβ, so the fit residual r − Mα − Kβ is λβ.
        let k_beta = &e - &beta * self.lambda;
        let energy = beta.dot(&k_beta).max(0.0);
        let lam = self.lambda;
        let objective = 0.5 * lam * (alpha.norm_squared() + energy) + 0.5 * lam * lam * beta.norm_squared();
        Ok(SolverOutput::new(
            sol.x,
            true,
            Extras::Khype { nonlinear_energy: energy },
            vec![objective],
        ))
    }
}
