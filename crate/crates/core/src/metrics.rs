//! Abundance and endmember quality measures.

use log::warn;

use crate::error::{Error, Result};
use crate::model::{AbundanceMap, GroundTruth};

/// Offset applied to non-positive entries before computing SID.
pub const SID_OFFSET: f64 = 1e-12;

/// How the per-pixel norm enters the RMSE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RmseMode {
    /// `sqrt(Σ‖α − α̂‖² / (N·R))`.
    #[default]
    Squared,
    /// `sqrt(Σ‖α − α̂‖ / (N·R))`, the norm without the square.
    Literal,
}

/// Abundance RMSE over all pixels of `estimate`.
pub fn rmse(truth: &GroundTruth, estimate: &AbundanceMap) -> Result<f64> {
    rmse_with(truth, estimate, RmseMode::Squared)
}

pub fn rmse_with(truth: &GroundTruth, estimate: &AbundanceMap, mode: RmseMode) -> Result<f64> {
    if truth.count() != estimate.count() {
        return Err(Error::Dimension(format!(
            "truth has {} endmembers, estimate {}",
            truth.count(),
            estimate.count()
        )));
    }
    if let GroundTruth::Spatial(m) = truth {
        if m.width() != estimate.width() || m.height() != estimate.height() {
            return Err(Error::Dimension(format!(
                "truth is {}x{}, estimate {}x{}",
                m.width(),
                m.height(),
                estimate.width(),
                estimate.height()
            )));
        }
    }
    let n = estimate.pixel_count();
    let mut acc = 0.0;
    for i in 0..n {
        let sq: f64 = truth
            .fractions_at(i)
            .iter()
            .zip(estimate.fractions(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        acc += match mode {
            RmseMode::Squared => sq,
            RmseMode::Literal => sq.sqrt(),
        };
    }
    Ok((acc / (n * estimate.count()) as f64).sqrt())
}

/// RMSE between two vectors of equal length (single pixel).
pub fn rmse_vectors(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::Dimension(format!(
            "vector lengths {} and {}",
            truth.len(),
            estimate.len()
        )));
    }
    let sq: f64 = truth.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / truth.len() as f64).sqrt())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Spectral angle distance in degrees.
pub fn sad(m: &[f64], m_hat: &[f64]) -> Result<f64> {
    if m.len() != m_hat.len() {
        return Err(Error::Dimension(format!(
            "spectra have {} and {} bands",
            m.len(),
            m_hat.len()
        )));
    }
    let (a, b) = (norm(m), norm(m_hat));
    if a == 0.0 || b == 0.0 {
        return Err(Error::Value("spectral angle of a zero vector".into()));
    }
    // arccos(cos θ) loses ~1e-8 rad near θ = 0; the half-angle form
    // 2·atan2(‖u − v‖, ‖u + v‖) on unit vectors is the same angle without that loss.
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in m.iter().zip(m_hat) {
        let (u, v) = (x / a, y / b);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Ok((2.0 * diff.sqrt().atan2(sum.sqrt())).to_degrees())
}

fn to_distribution(m: &[f64]) -> Result<Vec<f64>> {
    let mut v = m.to_vec();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Value("non-finite spectral value".into()));
    }
    if v.iter().any(|&x| x <= 0.0) {
        warn!("SID input has non-positive entries; offsetting by {SID_OFFSET:e}");
        v.iter_mut().filter(|x| **x <= 0.0).for_each(|x| *x += SID_OFFSET);
        if v.iter().any(|&x| x <= 0.0) {
            return Err(Error::Value("SID requires positive spectra".into()));
        }
    }
    let total: f64 = v.iter().sum();
    Ok(v.into_iter().map(|x| x / total).collect())
}

/// Spectral information divergence `Σ p_j ln(p_j / p̂_j)` (directed).
pub fn sid(m: &[f64], m_hat: &[f64]) -> Result<f64> {
    if m.len() != m_hat.len() || m.is_empty() {
        return Err(Error::Dimension(format!(
            "spectra have {} and {} bands",
            m.len(),
            m_hat.len()
        )));
    }
    let p = to_distribution(m)?;
    let q = to_distribution(m_hat)?;
    Ok(p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum())
}

/// Reconstruction error `‖r − r̂‖/√L` and spectral angle (degrees).
pub fn reconstruction_error(r: &[f64], r_hat: &[f64]) -> Result<(f64, f64)> {
    if r.len() != r_hat.len() || r.is_empty() {
        return Err(Error::Dimension(format!(
            "spectra have {} and {} bands",
            r.len(),
            r_hat.len()
        )));
    }
    let diff: Vec<f64> = r.iter().zip(r_hat).map(|(a, b)| a - b).collect();
    let re = norm(&diff) / (r.len() as f64).sqrt();
    Ok((re, sad(r, r_hat)?))
}
