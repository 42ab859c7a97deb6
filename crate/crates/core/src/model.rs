//! Domain data model: spectra, cubes, endmember matrices and abundances.
//!
//! Cubes are stored band-sequential (one `height × width` plane per band),
//! matching the default on-disk layout. Every accessor takes `(row, col, band)`
//! so the layout never leaks to callers.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Tolerance for the abundance non-negativity constraint.
pub const ANC_TOL: f64 = 1e-9;
/// Tolerance for the abundance sum-to-one constraint.
pub const ASC_TOL: f64 = 1e-6;
/// Sum-to-one tolerance for ground truth.
pub const TRUTH_TOL: f64 = 1e-9;
/// Clip side used by the published clipped scenes.
pub const DEFAULT_CLIP_SIDE: usize = 60;

fn check_wavelengths(wavelengths: &[f64]) -> Result<()> {
    if wavelengths.iter().any(|w| !w.is_finite()) {
        return Err(Error::Value("non-finite wavelength".into()));
    }
    if wavelengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Value("wavelengths must be strictly increasing".into()));
    }
    Ok(())
}

/// Uniform wavelength grid over `[lo, hi]` nm with `bands` samples.
pub fn uniform_wavelengths(bands: usize, lo: f64, hi: f64) -> Vec<f64> {
    match bands {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Default grid of the camera: 400–1000 nm.
pub fn default_wavelengths(bands: usize) -> Vec<f64> {
    uniform_wavelengths(bands, 400.0, 1000.0)
}

/// A single reflectance spectrum on a wavelength grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    values: Vec<f64>,
    wavelengths: Vec<f64>,
}

impl Spectrum {
    pub fn new(values: Vec<f64>, wavelengths: Vec<f64>) -> Result<Self> {
        if values.len() != wavelengths.len() {
            return Err(Error::Dimension(format!(
                "spectrum has {} values but {} wavelengths",
                values.len(),
                wavelengths.len()
            )));
        }
        check_wavelengths(&wavelengths)?;
        Ok(Self {
            values,
            wavelengths,
        })
    }

    /// Spectrum on the default 400–1000 nm grid.
    pub fn from_values(values: Vec<f64>) -> Self {
        let wavelengths = default_wavelengths(values.len());
        Self {
            values,
            wavelengths,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// A `height × width × bands` reflectance volume.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    width: usize,
    height: usize,
    bands: usize,
    data: Vec<f64>,
    wavelengths: Vec<f64>,
    band_mask: Vec<bool>,
}

impl HyperCube {
    /// Build a cube from band-sequential data: index `band * (height * width) + row * width + col`.
    pub fn from_bsq(
        width: usize,
        height: usize,
        wavelengths: Vec<f64>,
        data: Vec<f64>,
    ) -> Result<Self> {
        let bands = wavelengths.len();
        if width == 0 || height == 0 || bands == 0 {
            return Err(Error::Dimension(format!(
                "cube extent must be positive, got {width}x{height}x{bands}"
            )));
        }
        if data.len() != width * height * bands {
            return Err(Error::Dimension(format!(
                "cube data has {} values, expected {}x{}x{} = {}",
                data.len(),
                width,
                height,
                bands,
                width * height * bands
            )));
        }
        check_wavelengths(&wavelengths)?;
        Ok(Self {
            width,
            height,
            bands,
            data,
            wavelengths,
            band_mask: vec![true; bands],
        })
    }

    /// Build a cube by evaluating `f(row, col, band)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        wavelengths: Vec<f64>,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let bands = wavelengths.len();
        let mut data = Vec::with_capacity(width * height * bands);
        for b in 0..bands {
            for row in 0..height {
                for col in 0..width {
                    data.push(f(row, col, b));
                }
            }
        }
        Self::from_bsq(width, height, wavelengths, data)
    }

    /// Build a cube from per-pixel spectra listed in row-major pixel order.
    pub fn from_pixels(
        width: usize,
        height: usize,
        wavelengths: Vec<f64>,
        pixels: &[Vec<f64>],
    ) -> Result<Self> {
        let bands = wavelengths.len();
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "expected {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| p.len() != bands) {
            return Err(Error::Dimension(format!(
                "pixel has {} bands, expected {bands}",
                p.len()
            )));
        }
        let plane = width * height;
        let mut data = vec![0.0; plane * bands];
        for (i, p) in pixels.iter().enumerate() {
            for (b, &v) in p.iter().enumerate() {
                data[b * plane + i] = v;
            }
        }
        Self::from_bsq(width, height, wavelengths, data)
    }

    pub fn with_band_mask(mut self, band_mask: Vec<bool>) -> Result<Self> {
        if band_mask.len() != self.bands {
            return Err(Error::Dimension(format!(
                "band mask has {} entries, cube has {} bands",
                band_mask.len(),
                self.bands
            )));
        }
        self.band_mask = band_mask;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn band_mask(&self) -> &[bool] {
        &self.band_mask
    }

    /// Indices of bands flagged valid.
    pub fn valid_bands(&self) -> Vec<usize> {
        (0..self.bands).filter(|&b| self.band_mask[b]).collect()
    }

    /// Raw band-sequential storage.
    pub fn as_bsq(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, band: usize) -> f64 {
        debug_assert!(row < self.height && col < self.width && band < self.bands);
        self.data[band * self.width * self.height + row * self.width + col]
    }

    /// One band as a row-major `height × width` plane.
    pub fn band_plane(&self, band: usize) -> &[f64] {
        let plane = self.width * self.height;
        &self.data[band * plane..(band + 1) * plane]
    }

    pub fn pixel(&self, row: usize, col: usize) -> Vec<f64> {
        self.pixel_at(row * self.width + col)
    }

    /// Spectrum of the pixel with row-major index `index`.
    pub fn pixel_at(&self, index: usize) -> Vec<f64> {
        let plane = self.width * self.height;
        (0..self.bands).map(|b| self.data[b * plane + index]).collect()
    }

    /// Spectrum of a pixel restricted to `bands`.
    pub fn pixel_bands(&self, index: usize, bands: &[usize]) -> Vec<f64> {
        let plane = self.width * self.height;
        bands.iter().map(|&b| self.data[b * plane + index]).collect()
    }

    pub fn spectrum(&self, row: usize, col: usize) -> Spectrum {
        Spectrum {
            values: self.pixel(row, col),
            wavelengths: self.wavelengths.clone(),
        }
    }

    /// Multiply every value by `factor`.
    pub fn scaled(&self, factor: f64) -> HyperCube {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Centered `side × side` sub-cube. With an odd remainder the extra
    /// pixel of margin goes to the right/bottom.
    pub fn clip_center(&self, side: usize) -> Result<HyperCube> {
        if side == 0 || side > self.width.min(self.height) {
            return Err(Error::Dimension(format!(
                "clip side {side} does not fit a {}x{} cube",
                self.width, self.height
            )));
        }
        let col0 = (self.width - side) / 2;
        let row0 = (self.height - side) / 2;
        let mut data = Vec::with_capacity(side * side * self.bands);
        for b in 0..self.bands {
            for row in row0..row0 + side {
                for col in col0..col0 + side {
                    data.push(self.get(row, col, b));
                }
            }
        }
        Ok(HyperCube {
            width: side,
            height: side,
            bands: self.bands,
            data,
            wavelengths: self.wavelengths.clone(),
            band_mask: self.band_mask.clone(),
        })
    }

    /// Restrict the cube to the inclusive band interval `[lo, hi]`.
    pub fn apply_band_mask(&self, lo: usize, hi: usize) -> Result<HyperCube> {
        if lo > hi {
            return Err(Error::Dimension(format!("empty band interval [{lo}, {hi}]")));
        }
        if hi >= self.bands {
            return Err(Error::Dimension(format!(
                "band interval [{lo}, {hi}] exceeds {} bands",
                self.bands
            )));
        }
        let plane = self.width * self.height;
        Ok(HyperCube {
            width: self.width,
            height: self.height,
            bands: hi - lo + 1,
            data: self.data[lo * plane..(hi + 1) * plane].to_vec(),
            wavelengths: self.wavelengths[lo..=hi].to_vec(),
            band_mask: self.band_mask[lo..=hi].to_vec(),
        })
    }
}

/// `L × R` matrix whose columns are endmember signatures.
#[derive(Debug, Clone, PartialEq)]
pub struct EndmemberMatrix {
    matrix: DMatrix<f64>,
    names: Vec<String>,
    wavelengths: Vec<f64>,
}

impl EndmemberMatrix {
    pub fn new(columns: Vec<Vec<f64>>, names: Vec<String>, wavelengths: Vec<f64>) -> Result<Self> {
        let r = columns.len();
        if r == 0 {
            return Err(Error::Dimension("endmember matrix needs at least one column".into()));
        }
        if names.len() != r {
            return Err(Error::Dimension(format!(
                "{} names for {} endmembers",
                names.len(),
                r
            )));
        }
        let l = wavelengths.len();
        if let Some(c) = columns.iter().find(|c| c.len() != l) {
            return Err(Error::Dimension(format!(
                "endmember has {} bands, grid has {l}",
                c.len()
            )));
        }
        check_wavelengths(&wavelengths)?;
        let flat: Vec<f64> = columns.into_iter().flatten().collect();
        Ok(Self {
            matrix: DMatrix::from_vec(l, r, flat),
            names,
            wavelengths,
        })
    }

    /// Columns on the default grid, named `em1..emR`.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let l = columns.first().map_or(0, |c| c.len());
        let names = (1..=columns.len()).map(|i| format!("em{i}")).collect();
        Self::new(columns, names, default_wavelengths(l))
    }

    pub fn from_matrix(matrix: DMatrix<f64>, names: Vec<String>, wavelengths: Vec<f64>) -> Result<Self> {
        let columns = (0..matrix.ncols())
            .map(|j| matrix.column(j).iter().copied().collect())
            .collect();
        Self::new(columns, names, wavelengths)
    }

    /// Number of bands `L`.
    pub fn bands(&self) -> usize {
        self.matrix.nrows()
    }

    /// Number of endmembers `R`.
    pub fn count(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let l = self.bands();
        &self.matrix.as_slice()[i * l..(i + 1) * l]
    }

    pub fn spectrum(&self, i: usize) -> Spectrum {
        Spectrum {
            values: self.column(i).to_vec(),
            wavelengths: self.wavelengths.clone(),
        }
    }

    /// Row `ℓ`: the endmember signatures at one wavelength.
    pub fn band_row(&self, band: usize) -> Vec<f64> {
        self.matrix.row(band).iter().copied().collect()
    }

    /// Keep only the listed bands (rows).
    pub fn select_bands(&self, bands: &[usize]) -> Result<EndmemberMatrix> {
        if let Some(&b) = bands.iter().find(|&&b| b >= self.bands()) {
            return Err(Error::Dimension(format!("band {b} out of range")));
        }
        let columns = (0..self.count())
            .map(|j| bands.iter().map(|&b| self.matrix[(b, j)]).collect())
            .collect();
        let wl = bands.iter().map(|&b| self.wavelengths[b]).collect();
        Self::new(columns, self.names.clone(), wl)
    }

    /// Keep (and reorder) the listed columns.
    pub fn select_columns(&self, cols: &[usize]) -> Result<EndmemberMatrix> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.count()) {
            return Err(Error::Dimension(format!("endmember {c} out of range")));
        }
        let columns = cols.iter().map(|&c| self.column(c).to_vec()).collect();
        let names = cols.iter().map(|&c| self.names[c].clone()).collect();
        Self::new(columns, names, self.wavelengths.clone())
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.count() {
            return Err(Error::Dimension(format!(
                "{} names for {} endmembers",
                names.len(),
                self.count()
            )));
        }
        self.names = names;
        Ok(self)
    }

    /// `M α`.
    pub fn mix(&self, fractions: &[f64]) -> Vec<f64> {
        let l = self.bands();
        let mut out = vec![0.0; l];
        for (j, &a) in fractions.iter().enumerate() {
            for (o, &m) in out.iter_mut().zip(self.column(j)) {
                *o += a * m;
            }
        }
        out
    }
}

/// Abundance fractions of one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceVector {
    pub fractions: Vec<f64>,
    /// Whether the sum-to-one constraint was imposed when estimating.
    pub asc_enforced: bool,
}

impl AbundanceVector {
    pub fn new(fractions: Vec<f64>, asc_enforced: bool) -> Self {
        Self {
            fractions,
            asc_enforced,
        }
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.fractions.iter().sum()
    }

    /// All fractions ≥ −`tol`.
    pub fn satisfies_anc(&self, tol: f64) -> bool {
        satisfies_anc(&self.fractions, tol)
    }

    /// |Σ fractions − 1| ≤ `tol`.
    pub fn satisfies_asc(&self, tol: f64) -> bool {
        satisfies_asc(&self.fractions, tol)
    }

    /// The invariants this vector claims: ANC always, ASC when enforced.
    pub fn is_valid(&self) -> bool {
        self.satisfies_anc(ANC_TOL) && (!self.asc_enforced || self.satisfies_asc(ASC_TOL))
    }
}

pub fn satisfies_anc(fractions: &[f64], tol: f64) -> bool {
    fractions.iter().all(|&a| a >= -tol)
}

pub fn satisfies_asc(fractions: &[f64], tol: f64) -> bool {
    (fractions.iter().sum::<f64>() - 1.0).abs() <= tol
}

/// Outcome of the per-pixel solve.
#[derive(Debug, Clone, PartialEq)]
pub enum PixelStatus {
    Ok,
    /// Solved, but the input was degenerate (e.g. an all-zero pixel).
    Degenerate,
    /// The solver failed; the stored fractions are a uniform placeholder.
    Failed(String),
}

/// Per-pixel abundances over a `height × width` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AbundanceMap {
    width: usize,
    height: usize,
    count: usize,
    fractions: Vec<f64>,
    asc_enforced: bool,
    status: Vec<PixelStatus>,
}

impl AbundanceMap {
    /// `fractions` is pixel-major: pixel `i` occupies `[i*R, (i+1)*R)`.
    pub fn new(
        width: usize,
        height: usize,
        count: usize,
        fractions: Vec<f64>,
        asc_enforced: bool,
    ) -> Result<Self> {
        if width == 0 || height == 0 || count == 0 {
            return Err(Error::Dimension("abundance map extent must be positive".into()));
        }
        if fractions.len() != width * height * count {
            return Err(Error::Dimension(format!(
                "abundance map has {} values, expected {}",
                fractions.len(),
                width * height * count
            )));
        }
        Ok(Self {
            width,
            height,
            count,
            fractions,
            asc_enforced,
            status: vec![PixelStatus::Ok; width * height],
        })
    }

    pub fn from_vectors(width: usize, height: usize, vectors: &[AbundanceVector]) -> Result<Self> {
        let count = vectors.first().map_or(0, |v| v.len());
        if vectors.iter().any(|v| v.len() != count) {
            return Err(Error::Dimension("abundance vectors differ in length".into()));
        }
        let asc = vectors.iter().all(|v| v.asc_enforced);
        let flat = vectors.iter().flat_map(|v| v.fractions.iter().copied()).collect();
        Self::new(width, height, count, flat, asc)
    }

    /// Same vector at every pixel.
    pub fn uniform(width: usize, height: usize, vector: &AbundanceVector) -> Result<Self> {
        let flat = (0..width * height)
            .flat_map(|_| vector.fractions.iter().copied())
            .collect();
        Self::new(width, height, vector.len(), flat, vector.asc_enforced)
    }

    pub fn with_status(mut self, status: Vec<PixelStatus>) -> Result<Self> {
        if status.len() != self.width * self.height {
            return Err(Error::Dimension("status length does not match pixel count".into()));
        }
        self.status = status;
        Ok(self)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Number of endmembers `R`.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn asc_enforced(&self) -> bool {
        self.asc_enforced
    }

    pub fn fractions(&self, index: usize) -> &[f64] {
        &self.fractions[index * self.count..(index + 1) * self.count]
    }

    pub fn vector(&self, index: usize) -> AbundanceVector {
        AbundanceVector::new(self.fractions(index).to_vec(), self.asc_enforced)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.fractions
    }

    pub fn status(&self) -> &[PixelStatus] {
        &self.status
    }

    pub fn failed_count(&self) -> usize {
        self.status
            .iter()
            .filter(|s| matches!(s, PixelStatus::Failed(_)))
            .count()
    }

    /// Plane of endmember `k` in row-major pixel order.
    pub fn plane(&self, k: usize) -> Vec<f64> {
        (0..self.pixel_count())
            .map(|i| self.fractions[i * self.count + k])
            .collect()
    }

    /// Mean abundance per endmember over non-failed pixels.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.count];
        let mut n = 0usize;
        for i in 0..self.pixel_count() {
            if matches!(self.status[i], PixelStatus::Failed(_)) {
                continue;
            }
            n += 1;
            for (a, &f) in acc.iter_mut().zip(self.fractions(i)) {
                *a += f;
            }
        }
        if n > 0 {
            acc.iter_mut().for_each(|a| *a /= n as f64);
        }
        acc
    }

    /// Reorder endmember columns: output column `k` is input column `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Result<AbundanceMap> {
        if perm.len() != self.count {
            return Err(Error::Dimension("permutation length mismatch".into()));
        }
        let flat = (0..self.pixel_count())
            .flat_map(|i| perm.iter().map(move |&p| (i, p)))
            .map(|(i, p)| self.fractions[i * self.count + p])
            .collect();
        let mut out = AbundanceMap::new(self.width, self.height, self.count, flat, self.asc_enforced)?;
        out.status = self.status.clone();
        Ok(out)
    }

    /// Every non-failed pixel satisfies its abundance invariants.
    pub fn is_valid(&self) -> bool {
        (0..self.pixel_count()).all(|i| {
            matches!(self.status[i], PixelStatus::Failed(_)) || self.vector(i).is_valid()
        })
    }
}

/// Known abundances of a scene.
#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth {
    /// One composition shared by every pixel of the mixture.
    Uniform(AbundanceVector),
    /// Per-pixel composition.
    Spatial(AbundanceMap),
}

impl GroundTruth {
    pub fn count(&self) -> usize {
        match self {
            GroundTruth::Uniform(v) => v.len(),
            GroundTruth::Spatial(m) => m.count(),
        }
    }

    pub fn fractions_at(&self, index: usize) -> &[f64] {
        match self {
            GroundTruth::Uniform(v) => &v.fractions,
            GroundTruth::Spatial(m) => m.fractions(index),
        }
    }

    /// Materialise as a map of the given extent.
    pub fn to_map(&self, width: usize, height: usize) -> Result<AbundanceMap> {
        match self {
            GroundTruth::Uniform(v) => AbundanceMap::uniform(width, height, v),
            GroundTruth::Spatial(m) => {
                if m.width() != width || m.height() != height {
                    return Err(Error::Dimension(format!(
                        "ground truth is {}x{}, expected {width}x{height}",
                        m.width(),
                        m.height()
                    )));
                }
                Ok(m.clone())
            }
        }
    }

    /// Fractions lie in [0, 1] and sum to one within [`TRUTH_TOL`].
    pub fn validate(&self) -> Result<()> {
        let check = |f: &[f64]| -> Result<()> {
            if f.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
                return Err(Error::Value(format!("ground-truth fraction outside [0,1]: {f:?}")));
            }
            if !satisfies_asc(f, TRUTH_TOL) {
                return Err(Error::Value(format!("ground-truth fractions do not sum to 1: {f:?}")));
            }
            Ok(())
        };
        match self {
            GroundTruth::Uniform(v) => check(&v.fractions),
            GroundTruth::Spatial(m) => (0..m.pixel_count()).try_for_each(|i| check(m.fractions(i))),
        }
    }
}
