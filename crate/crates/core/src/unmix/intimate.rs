use super::linear::LinearSolver;
use super::{Extras, SolverConfig, SolverOutput};
use crate::error::Result;
use crate::hapke::{reflectance_to_albedo, reflectance_to_albedo_clamped, HapkeGeometry};
use crate::model::EndmemberMatrix;

/// FCLS on single-scattering albedos.
#[derive(Debug, Clone)]
pub struct HapkeSolver {
    albedo: LinearSolver,
    geom: HapkeGeometry,
    clamp: bool,
}

impl HapkeSolver {
    pub fn new(endmembers: &EndmemberMatrix, cfg: &SolverConfig) -> Result<Self> {
        let geom = cfg.geom;
        let clamp = cfg.clamp_reflectance;
        let mut m = endmembers.matrix().clone();
        for v in m.iter_mut() {
            *v = to_albedo(*v, geom, clamp)?;
        }
        Ok(Self {
            albedo: LinearSolver::from_matrix(m, true, cfg.tol),
            geom,
            clamp,
        })
    }

    pub fn bands(&self) -> usize {
        self.albedo.bands()
    }

    pub fn solve(&self, r: &[f64]) -> Result<SolverOutput> {
        let w = r
            .iter()
            .map(|&v| to_albedo(v, self.geom, self.clamp))
            .collect::<Result<Vec<f64>>>()?;
        let (alpha, objective) = self.albedo.fit(&w)?;
        Ok(SolverOutput::new(alpha, true, Extras::None, vec![objective]))
    }
}

fn to_albedo(r: f64, geom: HapkeGeometry, clamp: bool) -> Result<f64> {
    if clamp {
        reflectance_to_albedo_clamped(r, geom)
    } else {
        reflectance_to_albedo(r, geom)
    }
}
