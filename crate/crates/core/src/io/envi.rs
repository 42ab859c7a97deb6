//! Subset of the ENVI header + flat binary raster format.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};

use crate::error::{Error, Result};
use crate::model::{default_wavelengths, AbundanceMap, EndmemberMatrix, HyperCube};

/// Extensions tried, in order, for the raster next to a header.
const RAW_EXTENSIONS: [&str; 6] = ["raw", "img", "dat", "bsq", "bil", "bip"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataType {
    /// Code 4, 32-bit IEEE float.
    F32,
    /// Code 12, 16-bit unsigned integer.
    U16,
}

impl DataType {
    pub fn code(self) -> u32 {
        match self {
            DataType::F32 => 4,
            DataType::U16 => 12,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            4 => Ok(DataType::F32),
            12 => Ok(DataType::U16),
            other => Err(Error::Format(format!(
                "unsupported data type {other} (expected 4 or 12)"
            ))),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DataType::F32 => 4,
            DataType::U16 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interleave {
    Bsq,
    Bil,
    Bip,
}

impl Interleave {
    /// Position of sample `(row, col, band)` in the file, in values.
    fn offset(self, row: usize, col: usize, band: usize, w: usize, h: usize, l: usize) -> usize {
        match self {
            Interleave::Bsq => (band * h + row) * w + col,
            Interleave::Bil => (row * l + band) * w + col,
            Interleave::Bip => (row * w + col) * l + band,
        }
    }
}

impl fmt::Display for Interleave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Interleave::Bsq => "bsq",
            Interleave::Bil => "bil",
            Interleave::Bip => "bip",
        })
    }
}

impl FromStr for Interleave {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bsq" => Ok(Interleave::Bsq),
            "bil" => Ok(Interleave::Bil),
            "bip" => Ok(Interleave::Bip),
            other => Err(Error::Format(format!("unknown interleave '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnviHeader {
    pub samples: usize,
    pub lines: usize,
    pub bands: usize,
    pub header_offset: usize,
    pub data_type: DataType,
    pub interleave: Interleave,
    pub wavelength: Option<Vec<f64>>,
    /// Bad-band list; `false` marks an unusable band.
    pub bbl: Option<Vec<bool>>,
    /// Other keys this reader does not interpret, kept verbatim.
    pub extras: BTreeMap<String, String>,
}

impl EnviHeader {
    pub fn new(samples: usize, lines: usize, bands: usize) -> Self {
        Self {
            samples,
            lines,
            bands,
            header_offset: 0,
            data_type: DataType::F32,
            interleave: Interleave::Bsq,
            wavelength: None,
            bbl: None,
            extras: BTreeMap::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().peekable();
        match lines.peek() {
            Some(first) if first.trim() == "ENVI" => {
                lines.next();
            }
            _ => warn!("header does not start with 'ENVI'"),
        }
        let mut entries: Vec<(String, String)> = Vec::new();
        while let Some(line) = lines.next() {
            let line = line.trim();
            if line.is_empty() || line.starts_with(';') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("header line without '=': {line}")))?;
            let mut value = value.trim().to_string();
            if value.starts_with('{') {
                while !value.contains('}') {
                    let next = lines
                        .next()
                        .ok_or_else(|| Error::Format(format!("unterminated '{{' for key '{}'", key.trim())))?;
                    value.push(' ');
                    value.push_str(next.trim());
                }
            }
            entries.push((key.trim().to_ascii_lowercase(), value));
        }

        let mut samples = None;
        let mut lines_n = None;
        let mut bands = None;
        let mut header = EnviHeader::new(0, 0, 0);
        let mut data_type = None;
        let mut interleave = None;
        for (key, value) in entries {
            match key.as_str() {
                "samples" => samples = Some(parse_num::<usize>(&key, &value)?),
                "lines" => lines_n = Some(parse_num::<usize>(&key, &value)?),
                "bands" => bands = Some(parse_num::<usize>(&key, &value)?),
                "header offset" => header.header_offset = parse_num(&key, &value)?,
                "data type" => data_type = Some(DataType::from_code(parse_num(&key, &value)?)?),
                "interleave" => interleave = Some(value.parse::<Interleave>()?),
                "byte order" => {
                    let order: u32 = parse_num(&key, &value)?;
                    if order != 0 {
                        return Err(Error::Format(format!(
                            "byte order {order} (big-endian) is not supported"
                        )));
                    }
                }
                "wavelength" => header.wavelength = Some(parse_list(&key, &value)?),
                "bbl" => {
                    let flags: Vec<f64> = parse_list(&key, &value)?;
                    header.bbl = Some(flags.into_iter().map(|f| f != 0.0).collect());
                }
                "description" | "file type" | "sensor type" | "wavelength units" | "band names"
                | "spectra names" | "x start" | "y start" | "default bands" => {
                    header.extras.insert(key, value);
                }
                _ => {
                    info!("ignoring header key '{key}'");
                    header.extras.insert(key, value);
                }
            }
        }
        let missing = |k: &str| Error::Format(format!("header is missing required key '{k}'"));
        header.samples = samples.ok_or_else(|| missing("samples"))?;
        header.lines = lines_n.ok_or_else(|| missing("lines"))?;
        header.bands = bands.ok_or_else(|| missing("bands"))?;
        header.data_type = data_type.ok_or_else(|| missing("data type"))?;
        header.interleave = interleave.ok_or_else(|| missing("interleave"))?;
        if let Some(w) = &header.wavelength {
            if w.len() != header.bands {
                return Err(Error::Format(format!(
                    "{} wavelengths for {} bands",
                    w.len(),
                    header.bands
                )));
            }
        }
        if let Some(b) = &header.bbl {
            if b.len() != header.bands {
                return Err(Error::Format(format!("{} bbl entries for {} bands", b.len(), header.bands)));
            }
        }
        Ok(header)
    }

    pub fn value_count(&self) -> usize {
        self.samples * self.lines * self.bands
    }

    /// Braced list entry from [`extras`](Self::extras), e.g. `band names`.
    pub fn extra_list(&self, key: &str) -> Option<Vec<String>> {
        self.extras.get(key).map(|v| {
            v.trim_matches(|c| c == '{' || c == '}' || char::is_whitespace(c))
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
    }
}

impl fmt::Display for EnviHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ENVI")?;
        writeln!(f, "samples = {}", self.samples)?;
        writeln!(f, "lines = {}", self.lines)?;
        writeln!(f, "bands = {}", self.bands)?;
        writeln!(f, "header offset = {}", self.header_offset)?;
        writeln!(f, "data type = {}", self.data_type.code())?;
        writeln!(f, "interleave = {}", self.interleave)?;
        writeln!(f, "byte order = 0")?;
        if let Some(w) = &self.wavelength {
            writeln!(f, "wavelength units = nm")?;
            writeln!(f, "wavelength = {{{}}}", join(w.iter()))?;
        }
        if let Some(b) = &self.bbl {
            writeln!(f, "bbl = {{{}}}", join(b.iter().map(|&v| u8::from(v))))?;
        }
        for (k, v) in &self.extras {
            if k == "wavelength units" && self.wavelength.is_some() {
                continue;
            }
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

fn join<T: fmt::Display>(items: impl Iterator<Item = T>) -> String {
    let mut out = String::new();
    for (i, v) in items.enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write!(out, "{v}").unwrap();
    }
    out
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("header key '{key}': cannot parse '{value}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let inner = value.trim();
    let inner = inner
        .strip_prefix('{')
        .and_then(|v| v.strip_suffix('}'))
        .ok_or_else(|| Error::Format(format!("header key '{key}': expected {{...}} list")))?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

/// Header path for a dataset path given either as `x.hdr` or as `x`/`x.raw`.
pub fn header_path(path: &Path) -> PathBuf {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("hdr")) {
        path.to_path_buf()
    } else {
        path.with_extension("hdr")
    }
}

fn find_raw(header: &Path) -> Result<PathBuf> {
    let stem = header.with_extension("");
    if stem.is_file() {
        return Ok(stem);
    }
    RAW_EXTENSIONS
        .iter()
        .map(|ext| header.with_extension(ext))
        .find(|p| p.is_file())
        .ok_or_else(|| {
            Error::Format(format!(
                "no raster file next to {} (tried {})",
                header.display(),
                RAW_EXTENSIONS.join(", ")
            ))
        })
}

/// Header plus samples in band-sequential order.
pub fn read_raw(path: &Path) -> Result<(EnviHeader, Vec<f64>)> {
    let hdr_path = header_path(path);
    let text = fs::read_to_string(&hdr_path).map_err(|e| Error::io(&hdr_path, e))?;
    let header = EnviHeader::parse(&text)?;
    let raw_path = find_raw(&hdr_path)?;
    let bytes = fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    let size = header.data_type.size();
    let expected = header.header_offset + header.value_count() * size;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: expected {expected} bytes, found {}",
            raw_path.display(),
            bytes.len()
        )));
    }
    let body = &bytes[header.header_offset..];
    let (w, h, l) = (header.samples, header.lines, header.bands);
    let value = |k: usize| -> f64 {
        let b = &body[k * size..(k + 1) * size];
        match header.data_type {
            DataType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            DataType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
        }
    };
    let mut data = Vec::with_capacity(w * h * l);
    for band in 0..l {
        for row in 0..h {
            for col in 0..w {
                data.push(value(header.interleave.offset(row, col, band, w, h, l)));
            }
        }
    }
    Ok((header, data))
}

/// Load a cube from an ENVI header (or its raster path).
pub fn read_cube(path: &Path) -> Result<HyperCube> {
    let (header, data) = read_raw(path)?;
    let wavelengths = header
        .wavelength
        .clone()
        .unwrap_or_else(|| default_wavelengths(header.bands));
    let cube = HyperCube::from_bsq(header.samples, header.lines, wavelengths, data)?;
    match header.bbl {
        Some(mask) => cube.with_band_mask(mask),
        None => Ok(cube),
    }
}

fn write_raw(path: &Path, mut header: EnviHeader, bsq: &[f64]) -> Result<PathBuf> {
    let hdr_path = header_path(path);
    let raw_path = hdr_path.with_extension("raw");
    if let Some(dir) = hdr_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    header.data_type = DataType::F32;
    header.header_offset = 0;
    let (w, h, l) = (header.samples, header.lines, header.bands);
    let mut bytes = vec![0u8; w * h * l * 4];
    let plane = w * h;
    for band in 0..l {
        for row in 0..h {
            for col in 0..w {
                let v = bsq[band * plane + row * w + col] as f32;
                let k = header.interleave.offset(row, col, band, w, h, l);
                bytes[k * 4..k * 4 + 4].copy_from_slice(&v.to_le_bytes());
            }
        }
    }
    fs::write(&hdr_path, header.to_string()).map_err(|e| Error::io(&hdr_path, e))?;
    fs::write(&raw_path, bytes).map_err(|e| Error::io(&raw_path, e))?;
    Ok(hdr_path)
}

/// Write `x.hdr` + `x.raw` (32-bit float, band-sequential); returns the header path.
pub fn write_cube(cube: &HyperCube, path: &Path) -> Result<PathBuf> {
    write_cube_as(cube, path, Interleave::Bsq)
}

pub fn write_cube_as(cube: &HyperCube, path: &Path, interleave: Interleave) -> Result<PathBuf> {
    let mut header = EnviHeader::new(cube.width(), cube.height(), cube.bands());
    header.interleave = interleave;
    header.wavelength = Some(cube.wavelengths().to_vec());
    if cube.band_mask().iter().any(|&v| !v) {
        header.bbl = Some(cube.band_mask().to_vec());
    }
    write_raw(path, header, cube.as_bsq())
}

/// Endmembers as a one-line image, one pixel per endmember, names in
/// `spectra names`.
pub fn write_endmembers(m: &EndmemberMatrix, path: &Path) -> Result<PathBuf> {
    let mut header = EnviHeader::new(m.count(), 1, m.bands());
    header.wavelength = Some(m.wavelengths().to_vec());
    header
        .extras
        .insert("spectra names".into(), format!("{{{}}}", m.names().join(", ")));
    let (r, l) = (m.count(), m.bands());
    let mut bsq = vec![0.0; r * l];
    for k in 0..r {
        for (b, &v) in m.column(k).iter().enumerate() {
            bsq[b * r + k] = v;
        }
    }
    write_raw(path, header, &bsq)
}

/// Every pixel of the file becomes an endmember column; names come from
/// `spectra names` when present.
pub fn read_endmembers(path: &Path) -> Result<EndmemberMatrix> {
    let (header, data) = read_raw(path)?;
    let n = header.samples * header.lines;
    let l = header.bands;
    let columns: Vec<Vec<f64>> = (0..n).map(|i| (0..l).map(|b| data[b * n + i]).collect()).collect();
    let names = match header.extra_list("spectra names") {
        Some(names) if names.len() == n => names,
        _ => (1..=n).map(|k| format!("em{k}")).collect(),
    };
    let wavelengths = header.wavelength.unwrap_or_else(|| default_wavelengths(l));
    EndmemberMatrix::new(columns, names, wavelengths)
}

/// Abundance map as an `R`-band cube, band names from `materials`.
pub fn write_abundance_map(map: &AbundanceMap, materials: &[String], path: &Path) -> Result<PathBuf> {
    let mut header = EnviHeader::new(map.width(), map.height(), map.count());
    if materials.len() == map.count() {
        header
            .extras
            .insert("band names".into(), format!("{{{}}}", materials.join(", ")));
    }
    header
        .extras
        .insert("description".into(), format!("{{abundance map, asc = {}}}", map.asc_enforced()));
    let bsq: Vec<f64> = (0..map.count()).flat_map(|k| map.plane(k)).collect();
    write_raw(path, header, &bsq)
}

pub fn read_abundance_map(path: &Path) -> Result<AbundanceMap> {
    let (header, data) = read_raw(path)?;
    let n = header.samples * header.lines;
    let r = header.bands;
    let flat = (0..n).flat_map(|i| (0..r).map(move |k| (i, k))).map(|(i, k)| data[k * n + i]).collect();
    let asc = header
        .extras
        .get("description")
        .is_some_and(|d| d.contains("asc = true"));
    AbundanceMap::new(header.samples, header.lines, r, flat, asc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cube(w: usize, h: usize, l: usize, seed: u64) -> HyperCube {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HyperCube::from_fn(w, h, default_wavelengths(l), |_, _, _| rng.random::<f32>() as f64).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cube = random_cube(7, 5, 9, 1);
        let hdr = write_cube(&cube, &dir.path().join("scene.hdr")).unwrap();
        let back = read_cube(&hdr).unwrap();
        assert_eq!(back, cube);
        // again, through the raster path
        let again = read_cube(&dir.path().join("scene.raw")).unwrap();
        assert_eq!(again, cube);
    }

    #[test]
    fn full_size_header() {
        let dir = tempfile::tempdir().unwrap();
        let cube = random_cube(60, 60, 256, 2);
        let hdr = write_cube(&cube, &dir.path().join("big")).unwrap();
        let back = read_cube(&hdr).unwrap();
        assert_eq!((back.width(), back.height(), back.bands()), (60, 60, 256));
    }

    #[test]
    fn tiny_cube_and_double_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cube = HyperCube::from_fn(1, 1, vec![550.0], |_, _, _| 0.25).unwrap();
        let a = read_cube(&write_cube(&cube, &dir.path().join("a.hdr")).unwrap()).unwrap();
        let b = read_cube(&write_cube(&a, &dir.path().join("b.hdr")).unwrap()).unwrap();
        assert_eq!(a, cube);
        assert_eq!(b, cube);
    }

    #[test]
    fn interleaves_agree() {
        let dir = tempfile::tempdir().unwrap();
        let cube = random_cube(4, 3, 5, 3);
        let bsq = read_cube(&write_cube(&cube, &dir.path().join("q.hdr")).unwrap()).unwrap();
        for (name, il) in [("l.hdr", Interleave::Bil), ("p.hdr", Interleave::Bip)] {
            let path = write_cube_as(&cube, &dir.path().join(name), il).unwrap();
            assert_eq!(read_cube(&path).unwrap(), bsq);
        }
        // the bil raster really is laid out row, band, column
        let bytes = fs::read(dir.path().join("l.raw")).unwrap();
        let second = f32::from_le_bytes(bytes[4 * 4..4 * 4 + 4].try_into().unwrap()) as f64;
        assert_eq!(second, cube.get(0, 0, 1));
    }

    #[test]
    fn short_raster_names_byte_counts() {
        let dir = tempfile::tempdir().unwrap();
        let cube = random_cube(3, 2, 4, 4);
        let hdr = write_cube(&cube, &dir.path().join("s.hdr")).unwrap();
        let raw = dir.path().join("s.raw");
        let bytes = fs::read(&raw).unwrap();
        fs::write(&raw, &bytes[..bytes.len() - 4]).unwrap();
        let err = read_cube(&hdr).unwrap_err().to_string();
        assert!(err.contains("expected 96 bytes") && err.contains("found 92"), "{err}");
    }

    #[test]
    fn header_dialect() {
        let text = "ENVI\ndescription = {\n  captured}\nsamples = 2\nlines=1\nbands = 3\nheader offset = 0\n\
                    file type = ENVI Standard\ndata type = 12\ninterleave = BIP\nbyte order = 0\n\
                    wavelength = {400.5, 500,\n 600}\nbbl = {1, 0, 1}\nsensor gain = 2\n";
        let h = EnviHeader::parse(text).unwrap();
        assert_eq!(h.data_type, DataType::U16);
        assert_eq!(h.interleave, Interleave::Bip);
        assert_eq!(h.wavelength, Some(vec![400.5, 500.0, 600.0]));
        assert_eq!(h.bbl, Some(vec![true, false, true]));
        assert!(h.extras.contains_key("sensor gain"));

        let bad = text.replace("data type = 12", "data type = 5");
        assert!(matches!(EnviHeader::parse(&bad), Err(Error::Format(_))));
        let bad = text.replace("BIP", "xyz");
        assert!(matches!(EnviHeader::parse(&bad), Err(Error::Format(_))));
        let bad = text.replace("byte order = 0", "byte order = 1");
        assert!(matches!(EnviHeader::parse(&bad), Err(Error::Format(_))));
        let bad = text.replace("samples = 2\n", "");
        assert!(EnviHeader::parse(&bad).is_err());
    }

    #[test]
    fn u16_raster_with_offset_and_default_wavelengths() {
        let dir = tempfile::tempdir().unwrap();
        let hdr = dir.path().join("counts.hdr");
        fs::write(
            &hdr,
            "ENVI\nsamples = 2\nlines = 1\nbands = 2\nheader offset = 3\ndata type = 12\ninterleave = bsq\nbyte order = 0\n",
        )
        .unwrap();
        let mut bytes = vec![9u8, 9, 9];
        for v in [10u16, 20, 30, 4000] {
            bytes.extend(v.to_le_bytes());
        }
        fs::write(dir.path().join("counts.img"), bytes).unwrap();
        let cube = read_cube(&hdr).unwrap();
        assert_eq!(cube.pixel(0, 1), vec![20.0, 4000.0]);
        assert_eq!(cube.wavelengths(), &[400.0, 1000.0]);
    }

    #[test]
    fn band_mask_survives() {
        let dir = tempfile::tempdir().unwrap();
        let cube = random_cube(2, 2, 4, 5)
            .with_band_mask(vec![true, false, true, true])
            .unwrap();
        let back = read_cube(&write_cube(&cube, &dir.path().join("m")).unwrap()).unwrap();
        assert_eq!(back.band_mask(), cube.band_mask());
    }

    #[test]
    fn endmember_and_abundance_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = EndmemberMatrix::new(
            vec![vec![0.25, 0.5, 0.75], vec![0.125, 0.375, 0.625]],
            vec!["red".into(), "blue".into()],
            vec![450.0, 550.0, 650.0],
        )
        .unwrap();
        let back = read_endmembers(&write_endmembers(&m, &dir.path().join("em")).unwrap()).unwrap();
        assert_eq!(back, m);

        let map = AbundanceMap::new(2, 1, 2, vec![0.25, 0.75, 1.0, 0.0], true).unwrap();
        let path = write_abundance_map(&map, m.names(), &dir.path().join("ab")).unwrap();
        assert_eq!(read_abundance_map(&path).unwrap(), map);
    }
}
