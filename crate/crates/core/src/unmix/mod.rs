//! Per-pixel abundance estimation under linear and nonlinear mixing models.
//!
//! Each algorithm has a *prepared* form that caches everything depending only
//! on the endmembers and configuration (Gram matrices, kernel inverses,
//! albedo conversions), so [`unmix_cube`] pays that cost once per cube.

mod bilinear;
mod gauss_newton;
mod intimate;
mod khype;
mod linear;
mod mlm;
mod plinear;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::hapke::HapkeGeometry;
use crate::model::{AbundanceMap, AbundanceVector, EndmemberMatrix, HyperCube, PixelStatus};

pub use bilinear::GbmSolver;
pub use intimate::HapkeSolver;
pub use khype::KhypeSolver;
pub use linear::LinearSolver;
pub use mlm::{mlm_forward, mlm_inverse, MlmSolver, MLM_P_MAX};
pub use plinear::PlinearSolver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algo {
    Ncls,
    Fcls,
    Khype,
    Gbm,
    Plinear,
    Mlm,
    Hapke,
}

impl Algo {
    pub const ALL: [Algo; 7] = [
        Algo::Fcls,
        Algo::Ncls,
        Algo::Khype,
        Algo::Gbm,
        Algo::Plinear,
        Algo::Mlm,
        Algo::Hapke,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Ncls => "ncls",
            Algo::Fcls => "fcls",
            Algo::Khype => "khype",
            Algo::Gbm => "gbm",
            Algo::Plinear => "plinear",
            Algo::Mlm => "mlm",
            Algo::Hapke => "hapke",
        }
    }

    /// Whether the estimate lies on the simplex.
    pub fn enforces_asc(self) -> bool {
        self != Algo::Ncls
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s || (s == "k-hype" && *a == Algo::Khype) || (s == "bilinear" && *a == Algo::Gbm))
            .ok_or_else(|| {
                Error::Value(format!(
                    "unknown algorithm '{s}' (expected one of {})",
                    Algo::ALL.map(Algo::name).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub algo: Algo,
    /// Gaussian kernel bandwidth σ (K-Hype).
    pub kernel_sigma: f64,
    /// Regularisation weight λ (K-Hype).
    pub reg_lambda: f64,
    /// Polynomial order p (p-linear).
    pub p_order: usize,
    /// Illumination/viewing geometry (Hapke).
    pub geom: HapkeGeometry,
    pub max_iter: usize,
    pub tol: f64,
    /// Clamp reflectances into `[0, 1 − 1e−6]` before albedo conversion
    /// instead of failing.
    pub clamp_reflectance: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            algo: Algo::Fcls,
            kernel_sigma: 2.0,
            reg_lambda: 1e-2,
            p_order: 4,
            geom: HapkeGeometry::default(),
            max_iter: 500,
            tol: 1e-8,
            clamp_reflectance: true,
        }
    }
}

impl SolverConfig {
    pub fn new(algo: Algo) -> Self {
        Self {
            algo,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kernel_sigma > 0.0) {
            return Err(Error::Value(format!("kernel_sigma must be > 0, got {}", self.kernel_sigma)));
        }
        if !(self.reg_lambda > 0.0) {
            return Err(Error::Value(format!("reg_lambda must be > 0, got {}", self.reg_lambda)));
        }
        if self.p_order < 1 {
            return Err(Error::Value("p_order must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Value(format!("tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Value("max_iter must be >= 1".into()));
        }
        HapkeGeometry::new(self.geom.mu0, self.geom.mu)?;
        Ok(())
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("algo", self.algo);
        kv.set("kernel_sigma", self.kernel_sigma);
        kv.set("reg_lambda", self.reg_lambda);
        kv.set("p_order", self.p_order);
        kv.set("mu0", self.geom.mu0);
        kv.set("mu", self.geom.mu);
        kv.set("max_iter", self.max_iter);
        kv.set("tol", self.tol);
        kv.set("clamp_reflectance", self.clamp_reflectance);
        kv
    }

    /// Missing keys take their defaults.
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = SolverConfig::default();
        let cfg = SolverConfig {
            algo: kv.get_or("algo", d.algo)?,
            kernel_sigma: kv.get_or("kernel_sigma", d.kernel_sigma)?,
            reg_lambda: kv.get_or("reg_lambda", d.reg_lambda)?,
            p_order: kv.get_or("p_order", d.p_order)?,
            geom: HapkeGeometry {
                mu0: kv.get_or("mu0", d.geom.mu0)?,
                mu: kv.get_or("mu", d.geom.mu)?,
            },
            max_iter: kv.get_or("max_iter", d.max_iter)?,
            tol: kv.get_or("tol", d.tol)?,
            clamp_reflectance: kv.get_or("clamp_reflectance", d.clamp_reflectance)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Model parameters estimated alongside the abundances.
#[derive(Debug, Clone, PartialEq)]
pub enum Extras {
    None,
    /// `βᵀKβ` of the fitted nonlinear fluctuation.
    Khype { nonlinear_energy: f64 },
    /// Pairwise interaction weights in `(0,1), (0,2), …` order.
    Gbm { gamma: Vec<f64> },
    /// Polynomial coefficients `w_1..w_p` (`w_1 = 1`).
    Plinear { coeffs: Vec<f64> },
    /// Scattering probability.
    Mlm { p: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOutput {
    pub abundance: AbundanceVector,
    pub extras: Extras,
    /// Objective value after each outer iteration (non-increasing).
    pub trace: Vec<f64>,
    /// The pixel was degenerate (all zero).
    pub degenerate: bool,
}

impl SolverOutput {
    pub(crate) fn new(fractions: Vec<f64>, asc: bool, extras: Extras, trace: Vec<f64>) -> Self {
        Self {
            abundance: AbundanceVector::new(fractions, asc),
            extras,
            trace,
            degenerate: false,
        }
    }

    pub fn fractions(&self) -> &[f64] {
        &self.abundance.fractions
    }
}

/// A solver with all endmember-dependent work done.
#[derive(Debug, Clone)]
pub enum PreparedSolver {
    Linear(LinearSolver),
    Khype(KhypeSolver),
    Gbm(GbmSolver),
    Plinear(PlinearSolver),
    Mlm(MlmSolver),
    Hapke(HapkeSolver),
}

impl PreparedSolver {
    pub fn new(endmembers: &EndmemberMatrix, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if endmembers.bands() < endmembers.count() {
            return Err(Error::Dimension(format!(
                "need L >= R, got L={}, R={}",
                endmembers.bands(),
                endmembers.count()
            )));
        }
        if endmembers.matrix().iter().any(|v| !v.is_finite()) {
            return Err(Error::Value("non-finite endmember value".into()));
        }
        Ok(match cfg.algo {
            Algo::Ncls => PreparedSolver::Linear(LinearSolver::new(endmembers, false, cfg)),
            Algo::Fcls => PreparedSolver::Linear(LinearSolver::new(endmembers, true, cfg)),
            Algo::Khype => PreparedSolver::Khype(KhypeSolver::new(endmembers, cfg)?),
            Algo::Gbm => PreparedSolver::Gbm(GbmSolver::new(endmembers, cfg)?),
            Algo::Plinear => PreparedSolver::Plinear(PlinearSolver::new(endmembers, cfg)),
            Algo::Mlm => PreparedSolver::Mlm(MlmSolver::new(endmembers, cfg)),
            Algo::Hapke => PreparedSolver::Hapke(HapkeSolver::new(endmembers, cfg)?),
        })
    }

    pub fn bands(&self) -> usize {
        match self {
            PreparedSolver::Linear(s) => s.bands(),
            PreparedSolver::Khype(s) => s.bands(),
            PreparedSolver::Gbm(s) => s.bands(),
            PreparedSolver::Plinear(s) => s.bands(),
            PreparedSolver::Mlm(s) => s.bands(),
            PreparedSolver::Hapke(s) => s.bands(),
        }
    }

    pub fn solve(&self, r: &[f64]) -> Result<SolverOutput> {
        check_pixel(r, self.bands())?;
        let mut out = match self {
            PreparedSolver::Linear(s) => s.solve(r),
            PreparedSolver::Khype(s) => s.solve(r),
            PreparedSolver::Gbm(s) => s.solve(r),
            PreparedSolver::Plinear(s) => s.solve(r),
            PreparedSolver::Mlm(s) => s.solve(r),
            PreparedSolver::Hapke(s) => s.solve(r),
        }?;
        out.degenerate = r.iter().all(|&v| v == 0.0);
        Ok(out)
    }
}

pub(crate) fn check_pixel(r: &[f64], bands: usize) -> Result<()> {
    if r.len() != bands {
        return Err(Error::Dimension(format!(
            "pixel has {} bands, endmembers {bands}",
            r.len()
        )));
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::Value("non-finite pixel value".into()));
    }
    Ok(())
}

/// Nonnegatively constrained least squares.
pub fn ncls(r: &[f64], m: &EndmemberMatrix, cfg: &SolverConfig) -> Result<AbundanceVector> {
    let cfg = SolverConfig { algo: Algo::Ncls, ..cfg.clone() };
    Ok(PreparedSolver::new(m, &cfg)?.solve(r)?.abundance)
}

/// Fully constrained (nonnegative, sum-to-one) least squares.
pub fn fcls(r: &[f64], m: &EndmemberMatrix, cfg: &SolverConfig) -> Result<AbundanceVector> {
    let cfg = SolverConfig { algo: Algo::Fcls, ..cfg.clone() };
    Ok(PreparedSolver::new(m, &cfg)?.solve(r)?.abundance)
}

/// Linear mixture plus kernel nonlinear fluctuation; returns `(α, βᵀKβ)`.
pub fn khype(r: &[f64], m: &EndmemberMatrix, cfg: &SolverConfig) -> Result<(AbundanceVector, f64)> {
    let cfg = SolverConfig { algo: Algo::Khype, ..cfg.clone() };
    let out = PreparedSolver::new(m, &cfg)?.solve(r)?;
    match out.extras {
        Extras::Khype { nonlinear_energy } => Ok((out.abundance, nonlinear_energy)),
        _ => unreachable!(),
    }
}

/// Generalised bilinear model; returns `(α, γ)`.
pub fn gbm(r: &[f64], m: &EndmemberMatrix, cfg: &SolverConfig) -> Result<(AbundanceVector, Vec<f64>)> {
    let cfg = SolverConfig { algo: Algo::Gbm, ..cfg.clone() };
    let out = PreparedSolver::new(m, &cfg)?.solve(r)?;
    match out.extras {
        Extras::Gbm { gamma } => Ok((out.abundance, gamma)),
        _ => unreachable!(),
    }
}

/// Polynomial post-nonlinear model; returns `(α, w)`.
pub fn plinear(r: &[f64], m: &EndmemberMatrix, cfg: &SolverConfig) -> Result<(AbundanceVector, Vec<f64>)> {
    let cfg = SolverConfig { algo: Algo::Plinear, ..cfg.clone() };
    let out = PreparedSolver::new(m, &cfg)?.solve(r)?;
    match out.extras {
        Extras::Plinear { coeffs } => Ok((out.abundance, coeffs)),
        _ => unreachable!(),
    }
}

/// Multilinear mixing model; returns `(α, P)`.
pub fn mlm(r: &[f64], m: &EndmemberMatrix, cfg: &SolverConfig) -> Result<(AbundanceVector, f64)> {
    let cfg = SolverConfig { algo: Algo::Mlm, ..cfg.clone() };
    let out = PreparedSolver::new(m, &cfg)?.solve(r)?;
    match out.extras {
        Extras::Mlm { p } => Ok((out.abundance, p)),
        _ => unreachable!(),
    }
}

/// Fully constrained least squares in the Hapke albedo domain.
pub fn hapke_unmix(r: &[f64], m: &EndmemberMatrix, cfg: &SolverConfig) -> Result<AbundanceVector> {
    let cfg = SolverConfig { algo: Algo::Hapke, ..cfg.clone() };
    Ok(PreparedSolver::new(m, &cfg)?.solve(r)?.abundance)
}

/// How [`unmix_cube`] distributes pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Serial,
    /// Rayon's global pool.
    #[default]
    Auto,
    /// A dedicated pool with this many workers.
    Threads(usize),
}

/// Run the configured solver on every pixel, using the cube's valid bands.
///
/// Pixel failures are recorded in the map status (with a uniform placeholder
/// vector) and do not abort the run.
pub fn unmix_cube(
    cube: &HyperCube,
    endmembers: &EndmemberMatrix,
    cfg: &SolverConfig,
    parallelism: Parallelism,
) -> Result<AbundanceMap> {
    if cube.bands() != endmembers.bands() {
        return Err(Error::Dimension(format!(
            "cube has {} bands, endmembers {}",
            cube.bands(),
            endmembers.bands()
        )));
    }
    let valid = cube.valid_bands();
    let m = if valid.len() == cube.bands() {
        endmembers.clone()
    } else {
        endmembers.select_bands(&valid)?
    };
    let solver = PreparedSolver::new(&m, cfg)?;
    let count = m.count();
    let solve_pixel = |i: usize| -> (Vec<f64>, PixelStatus) {
        let r = cube.pixel_bands(i, &valid);
        match solver.solve(&r) {
            Ok(out) => {
                let status = if out.degenerate {
                    PixelStatus::Degenerate
                } else {
                    PixelStatus::Ok
                };
                (out.abundance.fractions, status)
            }
            Err(e) => (vec![1.0 / count as f64; count], PixelStatus::Failed(e.to_string())),
        }
    };
    let n = cube.pixel_count();
    let results: Vec<(Vec<f64>, PixelStatus)> = match parallelism {
        Parallelism::Serial => (0..n).map(solve_pixel).collect(),
        Parallelism::Auto => (0..n).into_par_iter().map(solve_pixel).collect(),
        Parallelism::Threads(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Value(format!("thread pool: {e}")))?;
            pool.install(|| (0..n).into_par_iter().map(solve_pixel).collect())
        }
    };
    let mut fractions = Vec::with_capacity(n * count);
    let mut status = Vec::with_capacity(n);
    for (f, s) in results {
        fractions.extend(f);
        status.push(s);
    }
    AbundanceMap::new(cube.width(), cube.height(), count, fractions, cfg.algo.enforces_asc())?
        .with_status(status)
}
