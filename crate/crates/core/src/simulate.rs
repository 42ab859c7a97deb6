//! Forward models producing labelled cubes with exact ground truth.
//!
//! Noise is additive i.i.d. Gaussian per band in the reflectance domain, applied
//! after the (possibly nonlinear) forward model. Each pixel draws from its own
//! ChaCha stream `(seed, pixel_index)`, so output does not depend on how pixels
//! are scheduled across threads.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hapke::{albedo_to_reflectance, reflectance_to_albedo, HapkeGeometry};
use crate::metrics::sad;
use crate::model::{
    default_wavelengths, satisfies_asc, AbundanceMap, AbundanceVector, EndmemberMatrix, GroundTruth,
    HyperCube,
};

/// Minimum pairwise spectral angle (degrees) between synthetic endmembers.
pub const MIN_SEPARATION_DEG: f64 = 5.0;
const MAX_RESAMPLES: usize = 100;
/// Tolerance on Σα = 1 for mixture rows fed to the generators.
pub const MIXTURE_SUM_TOL: f64 = 1e-6;
/// Default interaction weight of reflection scenes.
pub const DEFAULT_GAMMA: f64 = 0.5;
/// Default signal-to-noise ratio of generated scenes (dB).
pub const DEFAULT_SNR_DB: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    Checkerboard,
    IntimateUniform,
    IntimatePattern,
    Reflection,
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SceneKind::Checkerboard => "checkerboard",
            SceneKind::IntimateUniform => "intimate_uniform",
            SceneKind::IntimatePattern => "intimate_pattern",
            SceneKind::Reflection => "reflection",
        })
    }
}

impl FromStr for SceneKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "checkerboard" => Ok(SceneKind::Checkerboard),
            "intimate_uniform" => Ok(SceneKind::IntimateUniform),
            "intimate_pattern" => Ok(SceneKind::IntimatePattern),
            "reflection" => Ok(SceneKind::Reflection),
            _ => Err(Error::Value(format!("unknown scene kind '{s}'"))),
        }
    }
}

/// Target signal-to-noise ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Snr {
    Noiseless,
    Db(f64),
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Snr::Noiseless => f.write_str("none"),
            Snr::Db(db) => write!(f, "{db}"),
        }
    }
}

impl FromStr for Snr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("noiseless") {
            return Ok(Snr::Noiseless);
        }
        match s.parse::<f64>() {
            Ok(db) if db.is_finite() => Ok(Snr::Db(db)),
            _ => Err(Error::Value(format!("invalid SNR '{s}' (dB or 'none')"))),
        }
    }
}

/// Spatial abundance layouts of the patterned intimate mixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Pattern {
    /// Left/right halves with a 6-pixel linear seam.
    A,
    /// Disk of material 1 (radius 0.3·side) in material 2, 4-pixel blend annulus.
    B,
    /// Three sectors about the centre, each a third of the area.
    C,
    /// Three equal-area diagonal bands.
    D,
}

/// Fraction of the `[-1, 1]²` square swept counter-clockwise from the +x axis
/// to the direction of `(x, y)`.
fn swept_area_fraction(x: f64, y: f64) -> f64 {
    let theta = y.atan2(x).rem_euclid(2.0 * PI);
    let octant = ((theta / (PI / 4.0)) as usize).min(7);
    let phi = theta - octant as f64 * PI / 4.0;
    // each octant of the square is a right triangle of area 1/2
    let partial = if octant.is_multiple_of(2) {
        phi.tan() / 2.0
    } else {
        0.5 - (PI / 4.0 - phi).tan() / 2.0
    };
    (octant as f64 * 0.5 + partial) / 4.0
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [Pattern::A, Pattern::B, Pattern::C, Pattern::D];

    pub fn material_count(self) -> usize {
        match self {
            Pattern::A | Pattern::B => 2,
            Pattern::C | Pattern::D => 3,
        }
    }

    /// Abundances at pixel `(row, col)` of a `width × height` field.
    pub fn fractions(self, row: usize, col: usize, width: usize, height: usize) -> Vec<f64> {
        let (w, h) = (width as f64, height as f64);
        let x = col as f64 + 0.5;
        let y = row as f64 + 0.5;
        match self {
            Pattern::A => {
                let right = ((x - w / 2.0) / 6.0 + 0.5).clamp(0.0, 1.0);
                vec![1.0 - right, right]
            }
            Pattern::B => {
                let radius = 0.3 * w.min(h);
                let d = ((x - w / 2.0).powi(2) + (y - h / 2.0).powi(2)).sqrt();
                let inside = ((radius + 2.0 - d) / 4.0).clamp(0.0, 1.0);
                vec![inside, 1.0 - inside]
            }
            Pattern::C => {
                // Angles of a square are not area-uniform, so sectors are cut at
                // equal thirds of the swept area rather than at raw 120° steps.
                let u = swept_area_fraction((x - w / 2.0) / (w / 2.0), -(y - h / 2.0) / (h / 2.0));
                let k = ((u * 3.0) as usize).min(2);
                one_hot(3, k)
            }
            Pattern::D => {
                // corner triangles of area 1/3 each: 2s² = 1/3
                let s = (x / w + y / h) / 2.0;
                let edge = (1.0f64 / 6.0).sqrt();
                let k = if s < edge {
                    0
                } else if s > 1.0 - edge {
                    2
                } else {
                    1
                };
                one_hot(3, k)
            }
        }
    }
}

fn one_hot(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Pattern::A),
            "B" => Ok(Pattern::B),
            "C" => Ok(Pattern::C),
            "D" => Ok(Pattern::D),
            _ => Err(Error::Value(format!("unknown pattern '{s}' (expected A, B, C or D)"))),
        }
    }
}

/// Abundance recipe of a scene.
#[derive(Debug, Clone, PartialEq)]
pub enum Mixture {
    Fractions(Vec<f64>),
    Pattern(Pattern),
}

/// Declarative recipe for one generated scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub kind: SceneKind,
    pub endmembers: EndmemberMatrix,
    pub mixture: Mixture,
    pub snr: Snr,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    /// Optional per-band multiplier of the noise standard deviation.
    pub noise_profile: Option<Vec<f64>>,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, endmembers: EndmemberMatrix, mixture: Mixture) -> Self {
        Self {
            kind,
            endmembers,
            mixture,
            snr: Snr::Db(DEFAULT_SNR_DB),
            seed: 0,
            width: 60,
            height: 60,
            noise_profile: None,
        }
    }

    pub fn with_snr(mut self, snr: Snr) -> Self {
        self.snr = snr;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_extent(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    fn check_kind(&self, expected: SceneKind) -> Result<()> {
        if self.kind != expected {
            return Err(Error::Value(format!(
                "scene kind {} given to the {expected} generator",
                self.kind
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Dimension("scene extent must be positive".into()));
        }
        if let Some(p) = &self.noise_profile {
            if p.len() != self.endmembers.bands() {
                return Err(Error::Dimension(format!(
                    "noise profile has {} bands, endmembers {}",
                    p.len(),
                    self.endmembers.bands()
                )));
            }
        }
        Ok(())
    }

    fn uniform_fractions(&self) -> Result<&[f64]> {
        let Mixture::Fractions(f) = &self.mixture else {
            return Err(Error::Value("this scene kind needs mixture fractions, not a pattern".into()));
        };
        if f.len() != self.endmembers.count() {
            return Err(Error::Dimension(format!(
                "{} fractions for {} endmembers",
                f.len(),
                self.endmembers.count()
            )));
        }
        if f.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return Err(Error::Value(format!("mixture fractions outside [0,1]: {f:?}")));
        }
        if !satisfies_asc(f, MIXTURE_SUM_TOL) {
            return Err(Error::Value(format!(
                "mixture fractions sum to {}, not 1",
                f.iter().sum::<f64>()
            )));
        }
        Ok(f)
    }
}

/// Pairwise second-order interaction weights `γ_ij`, `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionWeights {
    count: usize,
    weights: Vec<f64>,
}

impl InteractionWeights {
    pub fn uniform(count: usize, gamma: f64) -> Self {
        Self {
            count,
            weights: vec![gamma; count * count.saturating_sub(1) / 2],
        }
    }

    /// Weights in pair order `(0,1), (0,2), …, (1,2), …`.
    pub fn from_pairs(count: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != count * count.saturating_sub(1) / 2 {
            return Err(Error::Dimension(format!(
                "{} weights for {count} endmembers",
                weights.len()
            )));
        }
        Ok(Self { count, weights })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.count;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        self.weights[pair_index(self.count, i, j)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = self.weights.iter().find(|g| !(0.0..=1.0).contains(*g)) {
            return Err(Error::Value(format!("interaction weight {g} outside [0,1]")));
        }
        Ok(())
    }
}

pub(crate) fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Smooth positive spectra built from Gaussian bumps, rescaled into [0.05, 0.95],
/// with every pair at least [`MIN_SEPARATION_DEG`] apart.
pub fn synth_endmembers(count: usize, bands: usize, seed: u64) -> Result<EndmemberMatrix> {
    if count == 0 || bands < count {
        return Err(Error::Dimension(format!(
            "need 1 <= R <= L, got R={count}, L={bands}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut resamples = 0;
    while columns.len() < count {
        let candidate = bump_spectrum(&mut rng, bands);
        let separated = columns
            .iter()
            .all(|c| sad(c, &candidate).is_ok_and(|a| a >= MIN_SEPARATION_DEG));
        if separated {
            columns.push(candidate);
        } else {
            resamples += 1;
            if resamples > MAX_RESAMPLES {
                return Err(Error::Generation(format!(
                    "could not separate {count} spectra over {bands} bands by {MIN_SEPARATION_DEG} degrees"
                )));
            }
        }
    }
    let names = (1..=count).map(|i| format!("em{i}")).collect();
    EndmemberMatrix::new(columns, names, default_wavelengths(bands))
}

fn bump_spectrum(rng: &mut ChaCha8Rng, bands: usize) -> Vec<f64> {
    let bumps = rng.random_range(2..=5);
    let base = rng.random_range(0.0..0.3);
    let params: Vec<(f64, f64, f64)> = (0..bumps)
        .map(|_| {
            (
                rng.random_range(-0.5..1.0),
                rng.random_range(-0.1..1.1),
                rng.random_range(0.05..0.3),
            )
        })
        .collect();
    let lo = rng.random_range(0.05..0.35);
    let hi = rng.random_range(0.6..0.95);
    let raw: Vec<f64> = (0..bands)
        .map(|l| {
            let x = if bands > 1 { l as f64 / (bands - 1) as f64 } else { 0.5 };
            base + params
                .iter()
                .map(|&(a, c, w)| a * (-(x - c).powi(2) / (2.0 * w * w)).exp())
                .sum::<f64>()
        })
        .collect();
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max - min < 1e-12 {
        return vec![0.5 * (lo + hi); bands];
    }
    raw.iter()
        .map(|v| lo + (hi - lo) * (v - min) / (max - min))
        .collect()
}

/// Adds noise to per-pixel clean spectra and assembles the cube.
fn finish_cube(
    spec: &SceneSpec,
    clean: Vec<Vec<f64>>,
) -> Result<HyperCube> {
    let sigma = noise_sigma(spec, &clean);
    let wavelengths = spec.endmembers.wavelengths().to_vec();
    let pixels = match sigma {
        None => clean,
        Some(sigmas) => {
            let seed = spec.seed;
            clean
                .into_par_iter()
                .enumerate()
                .map(|(i, mut p)| {
                    let mut rng = pixel_rng(seed, i as u64);
                    for (v, s) in p.iter_mut().zip(&sigmas) {
                        let z: f64 = rng.sample(StandardNormal);
                        *v += s * z;
                    }
                    p
                })
                .collect()
        }
    };
    HyperCube::from_pixels(spec.width, spec.height, wavelengths, &pixels)
}

/// Independent RNG stream for one pixel.
pub fn pixel_rng(seed: u64, pixel_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pixel_index);
    rng
}

fn noise_sigma(spec: &SceneSpec, clean: &[Vec<f64>]) -> Option<Vec<f64>> {
    let Snr::Db(db) = spec.snr else {
        return None;
    };
    let bands = spec.endmembers.bands();
    let n = (clean.len() * bands) as f64;
    let power: f64 = clean.iter().flatten().map(|v| v * v).sum::<f64>() / n;
    let sigma = (power / 10f64.powf(db / 10.0)).sqrt();
    Some(match &spec.noise_profile {
        Some(profile) => profile.iter().map(|p| sigma * p).collect(),
        None => vec![sigma; bands],
    })
}

/// Empirical SNR in dB: `10·log10(Σ clean² / Σ (noisy − clean)²)`.
pub fn measure_snr_db(clean: &HyperCube, noisy: &HyperCube) -> Result<f64> {
    if clean.as_bsq().len() != noisy.as_bsq().len() {
        return Err(Error::Dimension("cubes differ in extent".into()));
    }
    let signal: f64 = clean.as_bsq().iter().map(|v| v * v).sum();
    let noise: f64 = clean
        .as_bsq()
        .iter()
        .zip(noisy.as_bsq())
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    Ok(10.0 * (signal / noise).log10())
}

/// Checkerboard (linear) scene: every pixel is `M·α + n` with one shared `α`.
pub fn gen_linear_scene(spec: &SceneSpec) -> Result<(HyperCube, GroundTruth)> {
    spec.check_kind(SceneKind::Checkerboard)?;
    let alpha = spec.uniform_fractions()?;
    let x = spec.endmembers.mix(alpha);
    let clean = vec![x; spec.width * spec.height];
    let cube = finish_cube(spec, clean)?;
    Ok((cube, GroundTruth::Uniform(AbundanceVector::new(alpha.to_vec(), true))))
}

/// `M·α + Σ_{i<j} γ_ij·α_i·α_j·(m_i ⊙ m_j)` for one abundance vector.
pub fn bilinear_mix(endmembers: &EndmemberMatrix, alpha: &[f64], gamma: &InteractionWeights) -> Vec<f64> {
    let mut x = endmembers.mix(alpha);
    for (i, j) in gamma.pairs() {
        let w = gamma.get(i, j) * alpha[i] * alpha[j];
        for ((v, a), b) in x
            .iter_mut()
            .zip(endmembers.column(i))
            .zip(endmembers.column(j))
        {
            *v += w * a * b;
        }
    }
    x
}

/// Reflection scene: linear mixture plus pairwise bilinear interactions.
pub fn gen_bilinear_scene(
    spec: &SceneSpec,
    gamma: &InteractionWeights,
) -> Result<(HyperCube, GroundTruth)> {
    spec.check_kind(SceneKind::Reflection)?;
    gamma.validate()?;
    if gamma.count() != spec.endmembers.count() {
        return Err(Error::Dimension(format!(
            "interaction weights for {} endmembers, scene has {}",
            gamma.count(),
            spec.endmembers.count()
        )));
    }
    let alpha = spec.uniform_fractions()?;
    let x = bilinear_mix(&spec.endmembers, alpha, gamma);
    let clean = vec![x; spec.width * spec.height];
    let cube = finish_cube(spec, clean)?;
    Ok((cube, GroundTruth::Uniform(AbundanceVector::new(alpha.to_vec(), true))))
}

/// Endmember albedos, band-major: `out[ℓ][i]`.
fn endmember_albedos(endmembers: &EndmemberMatrix, geom: HapkeGeometry) -> Result<Vec<Vec<f64>>> {
    (0..endmembers.bands())
        .map(|l| {
            endmembers
                .band_row(l)
                .into_iter()
                .map(|r| reflectance_to_albedo(r, geom))
                .collect()
        })
        .collect()
}

fn intimate_pixel(albedos: &[Vec<f64>], alpha: &[f64], geom: HapkeGeometry) -> Result<Vec<f64>> {
    albedos
        .iter()
        .map(|row| {
            let w: f64 = row.iter().zip(alpha).map(|(w, a)| w * a).sum();
            albedo_to_reflectance(w.min(1.0 - f64::EPSILON), geom)
        })
        .collect()
}

/// Intimate mixture of one reflectance vector per endmember (albedo-domain mixing).
pub fn intimate_mix(endmembers: &EndmemberMatrix, alpha: &[f64], geom: HapkeGeometry) -> Result<Vec<f64>> {
    intimate_pixel(&endmember_albedos(endmembers, geom)?, alpha, geom)
}

/// Spatially uniform intimate mixture.
pub fn gen_intimate_scene(spec: &SceneSpec, geom: HapkeGeometry) -> Result<(HyperCube, GroundTruth)> {
    spec.check_kind(SceneKind::IntimateUniform)?;
    let alpha = spec.uniform_fractions()?;
    let x = intimate_mix(&spec.endmembers, alpha, geom)?;
    let clean = vec![x; spec.width * spec.height];
    let cube = finish_cube(spec, clean)?;
    Ok((cube, GroundTruth::Uniform(AbundanceVector::new(alpha.to_vec(), true))))
}

/// Intimate mixture whose abundances follow a spatial pattern.
pub fn gen_pattern_scene(
    spec: &SceneSpec,
    pattern: Pattern,
    geom: HapkeGeometry,
) -> Result<(HyperCube, GroundTruth)> {
    spec.check_kind(SceneKind::IntimatePattern)?;
    if spec.endmembers.count() != pattern.material_count() {
        return Err(Error::Dimension(format!(
            "pattern {pattern} mixes {} materials, scene has {} endmembers",
            pattern.material_count(),
            spec.endmembers.count()
        )));
    }
    let albedos = endmember_albedos(&spec.endmembers, geom)?;
    let (w, h) = (spec.width, spec.height);
    let fields: Vec<Vec<f64>> = (0..w * h)
        .map(|i| pattern.fractions(i / w, i % w, w, h))
        .collect();
    let clean = fields
        .par_iter()
        .map(|alpha| intimate_pixel(&albedos, alpha, geom))
        .collect::<Result<Vec<_>>>()?;
    let cube = finish_cube(spec, clean)?;
    let vectors: Vec<AbundanceVector> = fields
        .into_iter()
        .map(|f| AbundanceVector::new(f, true))
        .collect();
    let map = AbundanceMap::from_vectors(w, h, &vectors)?;
    Ok((cube, GroundTruth::Spatial(map)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> EndmemberMatrix {
        synth_endmembers(3, 64, 7).unwrap()
    }

    #[test]
    fn synth_is_deterministic_and_bounded() {
        let a = synth_endmembers(3, 256, 42).unwrap();
        let b = synth_endmembers(3, 256, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.matrix().iter().all(|&v| (0.05..=0.95).contains(&v)));
        let one = synth_endmembers(1, 16, 3).unwrap();
        assert_eq!(one.count(), 1);
        assert!(synth_endmembers(5, 4, 1).is_err());
        assert!(synth_endmembers(0, 4, 1).is_err());
    }

    #[test]
    fn synth_four_are_separated() {
        let m = synth_endmembers(4, 256, 11).unwrap();
        for i in 0..4 {
            for j in i + 1..4 {
                assert!(sad(m.column(i), m.column(j)).unwrap() >= MIN_SEPARATION_DEG);
            }
        }
    }

    #[test]
    fn pair_index_enumerates_upper_triangle() {
        let g = InteractionWeights::from_pairs(4, (0..6).map(|v| v as f64 / 10.0).collect()).unwrap();
        let order: Vec<(usize, usize)> = g.pairs().collect();
        assert_eq!(order, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        for (k, (i, j)) in order.into_iter().enumerate() {
            assert_eq!(g.get(i, j), k as f64 / 10.0);
            assert_eq!(g.get(j, i), k as f64 / 10.0);
        }
    }

    #[test]
    fn linear_noiseless_pure_pixel() {
        let m = three();
        let spec = SceneSpec::new(SceneKind::Checkerboard, m.clone(), Mixture::Fractions(vec![1.0, 0.0, 0.0]))
            .with_snr(Snr::Noiseless)
            .with_extent(4, 3);
        let (cube, truth) = gen_linear_scene(&spec).unwrap();
        for i in 0..12 {
            assert_eq!(cube.pixel_at(i), m.column(0));
        }
        assert_eq!(truth, GroundTruth::Uniform(AbundanceVector::new(vec![1.0, 0.0, 0.0], true)));
    }

    #[test]
    fn linear_rejects_bad_rows() {
        let m = three();
        let bad = SceneSpec::new(SceneKind::Checkerboard, m.clone(), Mixture::Fractions(vec![0.5, 0.4, 0.0]));
        assert!(matches!(gen_linear_scene(&bad), Err(Error::Value(_))));
        let wrong_kind = SceneSpec::new(SceneKind::Reflection, m, Mixture::Fractions(vec![0.5, 0.5, 0.0]));
        assert!(gen_linear_scene(&wrong_kind).is_err());
    }

    #[test]
    fn linear_snr_is_on_target() {
        let m = synth_endmembers(3, 256, 42).unwrap();
        let alpha = vec![1.0 / 3.0; 3];
        let spec = SceneSpec::new(SceneKind::Checkerboard, m, Mixture::Fractions(alpha))
            .with_snr(Snr::Db(40.0))
            .with_seed(42);
        let (noisy, _) = gen_linear_scene(&spec).unwrap();
        let (clean, _) = gen_linear_scene(&spec.clone().with_snr(Snr::Noiseless)).unwrap();
        let snr = measure_snr_db(&clean, &noisy).unwrap();
        assert!((snr - 40.0).abs() <= 1.0, "measured {snr}");
    }

    #[test]
    fn noise_profile_scales_bands() {
        let m = synth_endmembers(2, 8, 5).unwrap();
        let mut spec = SceneSpec::new(SceneKind::Checkerboard, m, Mixture::Fractions(vec![0.5, 0.5]))
            .with_snr(Snr::Db(20.0))
            .with_extent(30, 30);
        let mut profile = vec![1.0; 8];
        profile[0] = 0.0;
        spec.noise_profile = Some(profile);
        let (noisy, _) = gen_linear_scene(&spec).unwrap();
        let (clean, _) = gen_linear_scene(&spec.clone().with_snr(Snr::Noiseless)).unwrap();
        assert_eq!(noisy.band_plane(0), clean.band_plane(0));
        assert_ne!(noisy.band_plane(1), clean.band_plane(1));
    }

    #[test]
    fn bilinear_zero_gamma_matches_linear() {
        let m = three();
        let alpha = vec![0.2, 0.3, 0.5];
        let lin = SceneSpec::new(SceneKind::Checkerboard, m.clone(), Mixture::Fractions(alpha.clone()))
            .with_seed(9)
            .with_extent(8, 8);
        let mut bil = lin.clone();
        bil.kind = SceneKind::Reflection;
        let (a, _) = gen_linear_scene(&lin).unwrap();
        let (b, _) = gen_bilinear_scene(&bil, &InteractionWeights::uniform(3, 0.0)).unwrap();
        assert!(a.as_bsq().iter().zip(b.as_bsq()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn bilinear_hand_expansion() {
        let m = EndmemberMatrix::from_columns(vec![vec![0.2, 0.6, 0.9], vec![0.7, 0.3, 0.5]]).unwrap();
        let spec = SceneSpec::new(SceneKind::Reflection, m.clone(), Mixture::Fractions(vec![0.5, 0.5]))
            .with_snr(Snr::Noiseless)
            .with_extent(1, 1);
        let (cube, _) = gen_bilinear_scene(&spec, &InteractionWeights::uniform(2, 1.0)).unwrap();
        for l in 0..3 {
            let (a, b) = (m.column(0)[l], m.column(1)[l]);
            let expected = 0.5 * a + 0.5 * b + 0.25 * a * b;
            assert!((cube.get(0, 0, l) - expected).abs() < 1e-15);
        }
        assert!(gen_bilinear_scene(&spec, &InteractionWeights::uniform(2, 1.5)).is_err());
    }

    #[test]
    fn intimate_single_and_nonlinear() {
        let m = synth_endmembers(4, 32, 2).unwrap();
        let g = HapkeGeometry::default();
        let spec = SceneSpec::new(
            SceneKind::IntimateUniform,
            m.clone(),
            Mixture::Fractions(vec![1.0, 0.0, 0.0, 0.0]),
        )
        .with_snr(Snr::Noiseless)
        .with_extent(2, 2);
        let (cube, _) = gen_intimate_scene(&spec, g).unwrap();
        for (a, b) in cube.pixel_at(0).iter().zip(m.column(0)) {
            assert!((a - b).abs() < 1e-12);
        }
        let half = intimate_mix(&m, &[0.5, 0.5, 0.0, 0.0], g).unwrap();
        for l in 0..32 {
            let (a, b) = (m.column(0)[l], m.column(1)[l]);
            if (a - b).abs() > 1e-3 {
                assert!((half[l] - 0.5 * (a + b)).abs() > 1e-6, "band {l}");
            }
        }
    }

    #[test]
    fn intimate_rejects_bright_endmember() {
        let m = EndmemberMatrix::from_columns(vec![vec![0.5, 1.0], vec![0.2, 0.3]]).unwrap();
        let spec = SceneSpec::new(SceneKind::IntimateUniform, m, Mixture::Fractions(vec![0.5, 0.5]));
        assert!(matches!(
            gen_intimate_scene(&spec, HapkeGeometry::default()),
            Err(Error::OutOfModel(_))
        ));
    }

    #[test]
    fn identical_endmembers_degenerate() {
        let col = vec![0.3, 0.5, 0.7];
        let m = EndmemberMatrix::from_columns(vec![col.clone(), col.clone(), col.clone()]).unwrap();
        let x = intimate_mix(&m, &[0.2, 0.5, 0.3], HapkeGeometry::default()).unwrap();
        for (a, b) in x.iter().zip(&col) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pattern_a_endpoints() {
        for row in 0..60 {
            assert_eq!(Pattern::A.fractions(row, 0, 60, 60), vec![1.0, 0.0]);
            assert_eq!(Pattern::A.fractions(row, 59, 60, 60), vec![0.0, 1.0]);
        }
        // seam spans six columns
        let blended = (0..60)
            .filter(|&c| {
                let f = Pattern::A.fractions(0, c, 60, 60);
                f[0] > 0.0 && f[1] > 0.0
            })
            .count();
        assert_eq!(blended, 6);
    }

    #[test]
    fn pattern_b_disk() {
        assert_eq!(Pattern::B.fractions(30, 30, 60, 60), vec![1.0, 0.0]);
        assert_eq!(Pattern::B.fractions(0, 0, 60, 60), vec![0.0, 1.0]);
    }

    #[test]
    fn pattern_sector_areas_balanced() {
        // D's corner triangles hold a triangular number of pixels, so 60×60
        // cannot split evenly; check it on a finer grid.
        for (pattern, side) in [(Pattern::C, 60), (Pattern::D, 600)] {
            let mut counts = [0usize; 3];
            for row in 0..side {
                for col in 0..side {
                    let f = pattern.fractions(row, col, side, side);
                    counts[f.iter().position(|&v| v == 1.0).unwrap()] += 1;
                }
            }
            let mean = (side * side) as f64 / 3.0;
            for c in counts {
                assert!((c as f64 - mean).abs() / mean <= 0.02, "{pattern}: {counts:?}");
            }
        }
    }

    #[test]
    fn pattern_scene_truth_sums_to_one() {
        let m = synth_endmembers(3, 16, 4).unwrap();
        for pattern in [Pattern::C, Pattern::D] {
            let spec = SceneSpec::new(SceneKind::IntimatePattern, m.clone(), Mixture::Pattern(pattern))
                .with_extent(20, 20);
            let (_, truth) = gen_pattern_scene(&spec, pattern, HapkeGeometry::default()).unwrap();
            let GroundTruth::Spatial(map) = truth else { panic!() };
            for i in 0..map.pixel_count() {
                assert!((map.fractions(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let spec = SceneSpec::new(SceneKind::IntimatePattern, m, Mixture::Pattern(Pattern::A));
        assert!(gen_pattern_scene(&spec, Pattern::A, HapkeGeometry::default()).is_err());
        assert!("E".parse::<Pattern>().is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let m = synth_endmembers(3, 32, 1).unwrap();
        let spec = SceneSpec::new(SceneKind::Checkerboard, m, Mixture::Fractions(vec![0.2, 0.2, 0.6]))
            .with_seed(77)
            .with_extent(10, 10);
        assert_eq!(gen_linear_scene(&spec).unwrap(), gen_linear_scene(&spec).unwrap());
    }
}
