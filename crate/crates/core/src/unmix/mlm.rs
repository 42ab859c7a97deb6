use log::warn;
use nalgebra::{DMatrix, DVector};

use super::linear::LinearSolver;
use super::{Extras, SolverConfig, SolverOutput};
use crate::error::{Error, Result};
use crate::model::EndmemberMatrix;

/// Upper end of the scattering-probability search interval.
pub const MLM_P_MAX: f64 = 0.99;

const GOLDEN_TOL: f64 = 1e-6;

/// `(1 − P)·x / (1 − P·x)`.
pub fn mlm_forward(x: f64, p: f64) -> f64 {
    (1.0 - p) * x / (1.0 - p * x)
}

/// `r / (1 − P + P·r)`, the inverse of [`mlm_forward`].
pub fn mlm_inverse(r: f64, p: f64) -> f64 {
    r / (1.0 - p + p * r)
}

/// Multilinear mixing model fitted by golden-section search over `P` with
/// an FCLS solve on the linearised pixel at each trial `P`.
#[derive(Debug, Clone)]
pub struct MlmSolver {
    linear: LinearSolver,
    tol: f64,
}

struct Trial {
    p: f64,
    alpha: Vec<f64>,
    objective: f64,
}

impl MlmSolver {
    pub fn new(endmembers: &EndmemberMatrix, cfg: &SolverConfig) -> Self {
        Self {
            linear: LinearSolver::new(endmembers, true, cfg),
            tol: cfg.tol,
        }
    }

    pub fn bands(&self) -> usize {
        self.linear.bands()
    }

    fn evaluate(&self, linear: &LinearSolver, r: &[f64], p: f64) -> Result<Trial> {
        let x: Vec<f64> = r.iter().map(|&v| mlm_inverse(v, p)).collect();
        let (alpha, _) = linear.fit(&x)?;
        let y = linear.matrix() * DVector::from_column_slice(&alpha);
        let mut objective = 0.0;
        for (rv, yv) in r.iter().zip(y.iter()) {
            if 1.0 - p * yv <= 0.0 {
                objective = f64::INFINITY;
                break;
            }
            objective += (rv - mlm_forward(*yv, p)).powi(2);
        }
        Ok(Trial { p, alpha, objective })
    }

    pub fn solve(&self, r: &[f64]) -> Result<SolverOutput> {
        let keep: Vec<usize> = (0..r.len()).filter(|&l| r[l] < 1.0).collect();
        if keep.is_empty() {
            return Err(Error::OutOfModel("every band has reflectance >= 1".into()));
        }
        let subset;
        let (linear, r): (&LinearSolver, Vec<f64>) = if keep.len() == r.len() {
            (&self.linear, r.to_vec())
        } else {
            warn!("excluding {} band(s) with reflectance >= 1 from MLM fit", r.len() - keep.len());
            let m = self.linear.matrix();
            let rows = DMatrix::from_fn(keep.len(), m.ncols(), |i, j| m[(keep[i], j)]);
            subset = LinearSolver::from_matrix(rows, true, self.tol);
            (&subset, keep.iter().map(|&l| r[l]).collect())
        };

        let mut best = self.evaluate(linear, &r, 0.0)?;
        let mut trace = vec![best.objective];
        let consider = |t: Trial, best: &mut Trial, trace: &mut Vec<f64>| {
            if t.objective < best.objective {
                *best = t;
            }
            trace.push(best.objective);
        };
        let upper = self.evaluate(linear, &r, MLM_P_MAX)?;
        consider(upper, &mut best, &mut trace);

        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.0, MLM_P_MAX);
        let mut c = b - ratio * (b - a);
        let mut d = a + ratio * (b - a);
        let mut fc = self.evaluate(linear, &r, c)?;
        let mut fd = self.evaluate(linear, &r, d)?;
        while b - a > GOLDEN_TOL {
            if fc.objective <= fd.objective {
                b = d;
                d = c;
                c = b - ratio * (b - a);
                let next = self.evaluate(linear, &r, c)?;
                consider(std::mem::replace(&mut fd, std::mem::replace(&mut fc, next)), &mut best, &mut trace);
            } else {
                a = c;
                c = d;
                d = a + ratio * (b - a);
                let next = self.evaluate(linear, &r, d)?;
                consider(std::mem::replace(&mut fc, std::mem::replace(&mut fd, next)), &mut best, &mut trace);
            }
        }
        consider(fc, &mut best, &mut trace);
        consider(fd, &mut best, &mut trace);

        if !best.objective.is_finite() {
            return Err(Error::Numerical("MLM objective is infinite for every P".into()));
        }
        Ok(SolverOutput::new(best.alpha, true, Extras::Mlm { p: best.p }, trace))
    }
}
