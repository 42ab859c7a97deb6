//! Benchmark harness: regenerate every mixture of a suite, run each solver and
//! collect mean abundances and RMSE into a [`Report`].

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use sha2::{Digest, Sha256};

use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::io::{write_abundance_png, Report, ReportRow};
use crate::model::{AbundanceMap, PixelStatus};
use crate::scenes::{SceneId, SceneRequest, DEFAULT_BANDS, DEFAULT_EXTENT};
use crate::simulate::{Snr, DEFAULT_SNR_DB};
use crate::unmix::{unmix_cube, Algo, Parallelism, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Scene1,
    Scene2,
    Scene2Pattern,
    Scene3,
    All,
}

impl Suite {
    pub fn scenes(self) -> Vec<SceneId> {
        match self {
            Suite::Scene1 => vec![SceneId::One],
            Suite::Scene2 => vec![SceneId::Two],
            Suite::Scene2Pattern => vec![SceneId::TwoPattern],
            Suite::Scene3 => vec![SceneId::Three],
            Suite::All => SceneId::ALL.to_vec(),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Suite::All => f.write_str("all"),
            s => f.write_str(s.scenes()[0].suite_name()),
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "scene1" => Ok(Suite::Scene1),
            "scene2" => Ok(Suite::Scene2),
            "scene2-pattern" => Ok(Suite::Scene2Pattern),
            "scene3" => Ok(Suite::Scene3),
            "all" => Ok(Suite::All),
            _ => Err(Error::Value(format!(
                "unknown suite '{s}' (expected scene1, scene2, scene2-pattern, scene3 or all)"
            ))),
        }
    }
}

/// Parse a comma-separated algorithm list; empty lists and duplicates are errors.
pub fn parse_algos(list: &str) -> Result<Vec<Algo>> {
    let mut algos = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let a: Algo = name.parse()?;
        if algos.contains(&a) {
            return Err(Error::Value(format!("algorithm '{name}' listed twice")));
        }
        algos.push(a);
    }
    if algos.is_empty() {
        return Err(Error::Value("empty algorithm list".into()));
    }
    Ok(algos)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub suite: Suite,
    pub algos: Vec<Algo>,
    pub snr: Snr,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    /// Solver parameters; `algo` is overridden per run.
    pub solver: SolverConfig,
    pub parallelism: Parallelism,
    pub stamp: Option<String>,
}

impl BenchConfig {
    pub fn new(suite: Suite, algos: Vec<Algo>) -> Self {
        Self {
            suite,
            algos,
            snr: Snr::Db(DEFAULT_SNR_DB),
            seed: 0,
            width: DEFAULT_EXTENT,
            height: DEFAULT_EXTENT,
            bands: DEFAULT_BANDS,
            solver: SolverConfig::default(),
            parallelism: Parallelism::Auto,
            stamp: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algos.is_empty() {
            return Err(Error::Value("empty algorithm list".into()));
        }
        if self.width == 0 || self.height == 0 || self.bands == 0 {
            return Err(Error::Dimension("bench extent and bands must be positive".into()));
        }
        self.solver.validate()
    }

    /// Every setting that affects the numbers (not parallelism or stamp).
    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("suite", self.suite);
        let names: Vec<&str> = self.algos.iter().map(|a| a.name()).collect();
        kv.set("algos", names.join(","));
        kv.set("snr", self.snr);
        kv.set("seed", self.seed);
        kv.set("width", self.width);
        kv.set("height", self.height);
        kv.set("bands", self.bands);
        let solver = self.solver.to_kv();
        for k in solver.keys().filter(|k| *k != "algo") {
            kv.set(k, solver.get(k).unwrap());
        }
        kv
    }

    /// First 16 hex digits of SHA-256 over [`BenchConfig::to_kv`].
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_kv().to_string().as_bytes());
        hex::encode(&digest[..8])
    }
}

/// Estimated map of one pattern mixture, kept for image output.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureMap {
    pub scene: SceneId,
    pub mixture: String,
    pub algo: Algo,
    pub materials: Vec<String>,
    pub map: AbundanceMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutput {
    pub report: Report,
    pub maps: Vec<MixtureMap>,
}

impl BenchOutput {
    /// One grayscale PNG per (pattern mixture, algorithm, material).
    pub fn write_pngs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for m in &self.maps {
            for (k, name) in m.materials.iter().enumerate() {
                let path = dir.join(format!("{}_{}_{}_{}.png", m.scene.suite_name(), m.mixture, m.algo, name));
                write_abundance_png(&m.map, k, &path)?;
                written.push(path);
            }
        }
        Ok(written)
    }

    pub fn failed(&self) -> bool {
        !self.report.failures.is_empty()
    }
}

/// Run the suite. Sub-run failures are recorded in the report, not returned.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchOutput> {
    cfg.validate()?;
    let mut report = Report {
        seed: cfg.seed,
        config_hash: cfg.config_hash(),
        stamp: cfg.stamp.clone(),
        ..Report::default()
    };
    let mut maps = Vec::new();
    for scene in cfg.suite.scenes() {
        for mixture in scene.mixture_ids() {
            let mut req = SceneRequest::new(scene, mixture.clone())
                .with_snr(cfg.snr)
                .with_seed(cfg.seed)
                .with_extent(cfg.width, cfg.height)
                .with_bands(cfg.bands);
            req.geom = cfg.solver.geom;
            let tag = format!("{}/{}", scene.suite_name(), mixture);
            let generated = req.resolve().and_then(|r| r.generate().map(|g| (r, g)));
            let (resolved, (cube, truth)) = match generated {
                Ok(v) => v,
                Err(e) => {
                    report.failures.push(format!("{tag}: {e}"));
                    continue;
                }
            };
            let endmembers = &resolved.spec.endmembers;
            for &algo in &cfg.algos {
                info!("bench {tag} {algo}");
                let solver = SolverConfig {
                    algo,
                    ..cfg.solver.clone()
                };
                let map = match unmix_cube(&cube, endmembers, &solver, cfg.parallelism) {
                    Ok(m) => m,
                    Err(e) => {
                        report.failures.push(format!("{tag}/{algo}: {e}"));
                        continue;
                    }
                };
                let failed: Vec<&str> = map
                    .status()
                    .iter()
                    .filter_map(|s| match s {
                        PixelStatus::Failed(msg) => Some(msg.as_str()),
                        _ => None,
                    })
                    .collect();
                if let Some(first) = failed.first() {
                    report.failures.push(format!(
                        "{tag}/{algo}: {} of {} pixels failed ({first})",
                        failed.len(),
                        map.pixel_count()
                    ));
                }
                let score = match resolved.score(&truth, &map) {
                    Ok(s) => s,
                    Err(e) => {
                        report.failures.push(format!("{tag}/{algo}: {e}"));
                        continue;
                    }
                };
                for (name, mean) in endmembers.names().iter().zip(map.mean()) {
                    report.rows.push(ReportRow {
                        scene: scene.suite_name().into(),
                        mixture: mixture.clone(),
                        algo: algo.name().into(),
                        material: name.clone(),
                        mean_abundance: mean,
                        rmse: score,
                    });
                }
                if scene == SceneId::TwoPattern {
                    maps.push(MixtureMap {
                        scene,
                        mixture: mixture.clone(),
                        algo,
                        materials: endmembers.names().to_vec(),
                        map,
                    });
                }
            }
        }
    }
    report.sort();
    Ok(BenchOutput { report, maps })
}

/// Mean over mixtures of the RMSE of `algo` in `scene` (one value per mixture).
pub fn mean_rmse(report: &Report, scene: SceneId, algo: Algo) -> Option<f64> {
    let mut seen: Vec<(&str, f64)> = Vec::new();
    for r in &report.rows {
        if r.scene == scene.suite_name() && r.algo == algo.name() && !seen.iter().any(|(m, _)| *m == r.mixture) {
            seen.push((&r.mixture, r.rmse));
        }
    }
    if seen.is_empty() {
        return None;
    }
    Some(seen.iter().map(|(_, v)| v).sum::<f64>() / seen.len() as f64)
}
