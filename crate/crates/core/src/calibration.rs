//! Black/white frame normalisation of raw intensity cubes.

use crate::error::{Error, Result};
use crate::model::HyperCube;

/// Dark and white reference spectra, one value per band.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFrames {
    pub black: Vec<f64>,
    pub white: Vec<f64>,
}

impl CalibrationFrames {
    pub fn new(black: Vec<f64>, white: Vec<f64>) -> Result<Self> {
        if black.len() != white.len() {
            return Err(Error::Dimension(format!(
                "black frame has {} bands, white frame {}",
                black.len(),
                white.len()
            )));
        }
        Ok(Self { black, white })
    }

    pub fn bands(&self) -> usize {
        self.black.len()
    }

    /// Bands where `white - black` is strictly positive.
    pub fn usable_bands(&self) -> Vec<bool> {
        self.black
            .iter()
            .zip(&self.white)
            .map(|(b, w)| w - b > 0.0)
            .collect()
    }
}

/// Constant dark level and a lamp profile as white frame.
///
/// A lamp equal to the dark level is accepted; that band is invalidated by
/// [`bw_normalize`].
pub fn simulate_frames(bands: usize, dark_level: f64, lamp_profile: &[f64]) -> Result<CalibrationFrames> {
    if lamp_profile.len() != bands {
        return Err(Error::Dimension(format!(
            "lamp profile has {} bands, expected {bands}",
            lamp_profile.len()
        )));
    }
    if let Some((b, l)) = lamp_profile.iter().enumerate().find(|(_, &l)| l < dark_level) {
        return Err(Error::Value(format!(
            "lamp intensity {l} below dark level {dark_level} in band {b}"
        )));
    }
    CalibrationFrames::new(vec![dark_level; bands], lamp_profile.to_vec())
}

/// `(raw − black) / (white − black)` per band.
///
/// Bands with `white − black ≤ 0` are flagged invalid in the output mask and
/// their values are set to zero.
pub fn bw_normalize(raw: &HyperCube, frames: &CalibrationFrames) -> Result<HyperCube> {
    if frames.bands() != raw.bands() {
        return Err(Error::Dimension(format!(
            "frames have {} bands, cube has {}",
            frames.bands(),
            raw.bands()
        )));
    }
    let usable = frames.usable_bands();
    let plane = raw.pixel_count();
    let mut data = Vec::with_capacity(raw.as_bsq().len());
    for b in 0..raw.bands() {
        let values = raw.band_plane(b);
        if usable[b] {
            let black = frames.black[b];
            let span = frames.white[b] - black;
            data.extend(values.iter().map(|v| (v - black) / span));
        } else {
            data.extend(std::iter::repeat_n(0.0, plane));
        }
    }
    let mask = raw
        .band_mask()
        .iter()
        .zip(&usable)
        .map(|(&m, &u)| m && u)
        .collect();
    HyperCube::from_bsq(raw.width(), raw.height(), raw.wavelengths().to_vec(), data)?
        .with_band_mask(mask)
}

/// Raw intensities `black + r·(white − black)` that normalise back to `reflectance`.
pub fn compose_raw(reflectance: &HyperCube, frames: &CalibrationFrames) -> Result<HyperCube> {
    if frames.bands() != reflectance.bands() {
        return Err(Error::Dimension(format!(
            "frames have {} bands, cube has {}",
            frames.bands(),
            reflectance.bands()
        )));
    }
    let mut data = Vec::with_capacity(reflectance.as_bsq().len());
    for b in 0..reflectance.bands() {
        let black = frames.black[b];
        let span = frames.white[b] - black;
        data.extend(reflectance.band_plane(b).iter().map(|r| black + r * span));
    }
    HyperCube::from_bsq(
        reflectance.width(),
        reflectance.height(),
        reflectance.wavelengths().to_vec(),
        data,
    )?
    .with_band_mask(reflectance.band_mask().to_vec())
}
