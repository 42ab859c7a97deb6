//! Simplified isotropic Hapke relation between single-scattering albedo and
//! bidirectional reflectance:
//!
//! ```text
//! R(w) = w / [(1 + 2·μ₀·√(1−w)) · (1 + 2·μ·√(1−w))]
//! ```
//!
//! Intimate mixtures combine linearly in albedo `w`, not in reflectance.

use crate::error::{Error, Result};

/// Clamp target used when reflectances at or above one are clamped.
pub const REFLECTANCE_CLAMP: f64 = 1.0 - 1e-6;

/// Cosines of the incidence (`mu0`) and emergence (`mu`) angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HapkeGeometry {
    pub mu0: f64,
    pub mu: f64,
}

impl Default for HapkeGeometry {
    /// Nadir camera with near-vertical lamps.
    fn default() -> Self {
        Self { mu0: 1.0, mu: 1.0 }
    }
}

impl HapkeGeometry {
    pub fn new(mu0: f64, mu: f64) -> Result<Self> {
        let ok = |c: f64| c > 0.0 && c <= 1.0;
        if !ok(mu0) || !ok(mu) {
            return Err(Error::Value(format!(
                "geometry cosines must lie in (0, 1], got mu0={mu0}, mu={mu}"
            )));
        }
        Ok(Self { mu0, mu })
    }
}

/// Forward relation `w → r` for `w ∈ [0, 1)`.
pub fn albedo_to_reflectance(w: f64, geom: HapkeGeometry) -> Result<f64> {
    if !(0.0..1.0).contains(&w) {
        return Err(Error::Value(format!("albedo {w} outside [0, 1)")));
    }
    let t = (1.0 - w).sqrt();
    Ok(w / ((1.0 + 2.0 * geom.mu0 * t) * (1.0 + 2.0 * geom.mu * t)))
}

/// Inverse relation `r → w` for `r ∈ [0, 1)`.
///
/// With `t = √(1−w)` the relation becomes the quadratic
/// `(1 + 4rμ₀μ)·t² + 2r(μ₀+μ)·t + (r − 1) = 0`, whose positive root is taken
/// in the cancellation-free form `t = 2(1−r) / (b + √(b² + 4a(1−r)))`.
pub fn reflectance_to_albedo(r: f64, geom: HapkeGeometry) -> Result<f64> {
    if r.is_nan() || r < 0.0 {
        return Err(Error::Value(format!("reflectance {r} is negative or NaN")));
    }
    if r >= 1.0 {
        return Err(Error::OutOfModel(format!("reflectance {r} >= 1")));
    }
    let a = 1.0 + 4.0 * r * geom.mu0 * geom.mu;
    let b = 2.0 * r * (geom.mu0 + geom.mu);
    let c = 1.0 - r;
    let t = 2.0 * c / (b + (b * b + 4.0 * a * c).sqrt());
    Ok(((1.0 - t) * (1.0 + t)).clamp(0.0, 1.0))
}

/// [`reflectance_to_albedo`] after clamping `r` into `[0, 1 − 1e−6]`.
pub fn reflectance_to_albedo_clamped(r: f64, geom: HapkeGeometry) -> Result<f64> {
    if r.is_nan() {
        return Err(Error::Value("reflectance is NaN".into()));
    }
    reflectance_to_albedo(r.clamp(0.0, REFLECTANCE_CLAMP), geom)
}
