use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use unmixlab::bench::{parse_algos, run_bench, BenchConfig, Suite};
use unmixlab::config::KvConfig;
use unmixlab::endmembers::{match_endmembers, nfindr, vca};
use unmixlab::io::{
    parse_report_csv, read_abundance_map, read_cube, read_endmembers, write_abundance_map, write_abundance_png,
    write_cube, write_endmembers, Report, ReportRow, TruthTable,
};
use unmixlab::metrics::{rmse, sad, sid};
use unmixlab::model::{GroundTruth, PixelStatus};
use unmixlab::scenes::{SceneId, SceneRequest, DEFAULT_BANDS};
use unmixlab::simulate::Snr;
use unmixlab::unmix::{unmix_cube, Algo, Parallelism, SolverConfig};
use unmixlab::Error;

/// Exit status of a run.
enum Failure {
    /// Bad flags, unreadable inputs, inconsistent data: exit 2.
    Usage(String),
    /// The run completed but some sub-runs failed: exit 1.
    Partial(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

#[derive(Parser)]
#[command(name = "unmixlab", version, about = "Hyperspectral unmixing laboratory")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scene cube with its ground truth.
    Simulate(SimulateArgs),
    /// Estimate abundances of every pixel of a cube.
    Unmix(UnmixArgs),
    /// Extract endmembers from a cube.
    Extract(ExtractArgs),
    /// Run solvers over whole scene suites and write the comparison report.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene family: 1, 2, 2p or 3.
    #[arg(long)]
    scene: String,
    /// Mixture id from the scene table, or pattern A-D for scene 2p.
    #[arg(long)]
    mixture: String,
    /// Signal-to-noise ratio in dB, or "none".
    #[arg(long, default_value = "40")]
    snr: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Width x height in pixels.
    #[arg(long, default_value = "60x60")]
    extent: String,
    #[arg(long, default_value_t = DEFAULT_BANDS)]
    bands: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct UnmixArgs {
    /// Input cube header.
    cube: PathBuf,
    #[arg(long)]
    algo: Option<String>,
    /// Endmember file (one pixel per endmember).
    #[arg(long)]
    endmembers: PathBuf,
    /// Solver settings (key = value); --algo overrides its algo key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ground-truth abundance map; enables report rows.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Scene label for report rows.
    #[arg(long, default_value = "custom")]
    scene: String,
    /// Mixture label for report rows (defaults to the cube file stem).
    #[arg(long)]
    mixture: Option<String>,
    /// Also write one PNG per endmember.
    #[arg(long)]
    png: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Input cube header.
    cube: PathBuf,
    /// vca or nfindr.
    #[arg(long)]
    algo: String,
    /// Number of endmembers.
    #[arg(short = 'R', long = "count")]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reference endmembers to match against and score.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Output endmember header.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// scene1, scene2, scene2-pattern, scene3 or all.
    #[arg(long)]
    suite: String,
    /// Comma-separated algorithm list.
    #[arg(long)]
    algos: String,
    #[arg(long, default_value = "40")]
    snr: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "60x60")]
    extent: String,
    #[arg(long, default_value_t = DEFAULT_BANDS)]
    bands: usize,
    /// Solver settings shared by every algorithm.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Record this label in the report (off by default for byte-identical reruns).
    #[arg(long)]
    stamp: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_extent(s: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::Usage(format!("extent '{s}' is not WIDTHxHEIGHT"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn solver_config(path: Option<&Path>, algo: Option<&str>) -> Result<SolverConfig, Failure> {
    let mut kv = match path {
        Some(p) => KvConfig::read(p)?,
        None => KvConfig::new(),
    };
    if let Some(a) = algo {
        kv.set("algo", a.parse::<Algo>()?);
    }
    Ok(SolverConfig::from_kv(&kv)?)
}

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    let scene: SceneId = args.scene.parse()?;
    let (width, height) = parse_extent(&args.extent)?;
    let req = SceneRequest::new(scene, args.mixture.trim())
        .with_snr(args.snr.parse::<Snr>()?)
        .with_seed(args.seed)
        .with_extent(width, height)
        .with_bands(args.bands);
    let resolved = req.resolve()?;
    let (cube, truth) = resolved.generate()?;
    create_dir(&args.out)?;
    let names = resolved.spec.endmembers.names().to_vec();
    write_cube(&cube, &args.out.join("cube"))?;
    write_endmembers(&resolved.spec.endmembers, &args.out.join("endmembers"))?;
    write_abundance_map(&truth.to_map(width, height)?, &names, &args.out.join("truth"))?;
    if let GroundTruth::Uniform(v) = &truth {
        let table = TruthTable {
            materials: names,
            mixtures: vec![(req.mixture.clone(), v.fractions.clone())],
            ..TruthTable::default()
        };
        table.write(&args.out.join("truth.csv"))?;
    }
    req.to_kv()?.write(&args.out.join("scene.cfg"))?;
    info!("wrote scene {} mixture {} to {}", scene, req.mixture, args.out.display());
    Ok(())
}

fn cmd_unmix(args: UnmixArgs) -> CliResult {
    let cfg = solver_config(args.config.as_deref(), args.algo.as_deref())?;
    let cube = read_cube(&args.cube)?;
    let endmembers = read_endmembers(&args.endmembers)?;
    if cube.bands() != endmembers.bands() {
        return Err(Failure::Usage(format!(
            "cube has {} bands but the endmembers have {}",
            cube.bands(),
            endmembers.bands()
        )));
    }
    let truth = args.truth.as_deref().map(read_abundance_map).transpose()?;
    let map = unmix_cube(&cube, &endmembers, &cfg, Parallelism::Auto)?;

    create_dir(&args.out)?;
    let names = endmembers.names().to_vec();
    write_abundance_map(&map, &names, &args.out.join(format!("abundance_{}", cfg.algo)))?;
    cfg.to_kv().write(&args.out.join("solver.cfg"))?;
    if args.png {
        for (k, name) in names.iter().enumerate() {
            write_abundance_png(&map, k, &args.out.join(format!("abundance_{}_{name}.png", cfg.algo)))?;
        }
    }

    if let Some(truth) = truth {
        let score = rmse(&GroundTruth::Spatial(truth), &map)?;
        println!("{} RMSE {score:.4}", cfg.algo);
        let stem = args.out.join("report");
        let mut report = Report::default();
        if let Ok(text) = fs::read_to_string(stem.with_extension("csv")) {
            report.rows = parse_report_csv(&text)?;
        }
        let mixture = args.mixture.clone().unwrap_or_else(|| {
            args.cube.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        });
        report.rows.retain(|r| !(r.scene == args.scene && r.mixture == mixture && r.algo == cfg.algo.name()));
        for (name, mean) in names.iter().zip(map.mean()) {
            report.rows.push(ReportRow {
                scene: args.scene.clone(),
                mixture: mixture.clone(),
                algo: cfg.algo.name().into(),
                material: name.clone(),
                mean_abundance: mean,
                rmse: score,
            });
        }
        report.sort();
        report.write(&stem)?;
    }

    let failed = map.status().iter().filter(|s| matches!(s, PixelStatus::Failed(_))).count();
    if failed > 0 {
        return Err(Failure::Partial(format!("{failed} of {} pixels failed", map.pixel_count())));
    }
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> CliResult {
    if args.count == 0 {
        return Err(Failure::Usage("-R must be at least 1".into()));
    }
    let cube = read_cube(&args.cube)?;
    let mut extracted = match args.algo.as_str() {
        "vca" => vca(&cube, args.count, args.seed)?,
        "nfindr" | "n-findr" => nfindr(&cube, args.count, args.seed)?,
        other => return Err(Failure::Usage(format!("unknown extractor '{other}' (expected vca or nfindr)"))),
    };
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    if let Some(path) = &args.reference {
        let reference = read_endmembers(path)?;
        if reference.count() != extracted.count() || reference.bands() != extracted.bands() {
            return Err(Failure::Usage(format!(
                "reference is {} endmembers over {} bands, extracted {} over {}",
                reference.count(),
                reference.bands(),
                extracted.count(),
                extracted.bands()
            )));
        }
        let perm = match_endmembers(&extracted, &reference)?;
        extracted = extracted
            .select_columns(&perm)?
            .with_names(reference.names().to_vec())?;
        let mut table = String::from("material,sad_deg,sid\n");
        for (j, name) in reference.names().iter().enumerate() {
            let a = sad(reference.column(j), extracted.column(j))?;
            let d = sid(reference.column(j), extracted.column(j))?;
            println!("{name}: SAD {a:.6} deg, SID {d:.6e}");
            table.push_str(&format!("{name},{a:.6e},{d:.6e}\n"));
        }
        write_text(&args.out.with_extension("quality.csv"), &table)?;
    }
    write_endmembers(&extracted, &args.out)?;
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CliResult {
    let suite: Suite = args.suite.parse()?;
    let algos = parse_algos(&args.algos)?;
    let (width, height) = parse_extent(&args.extent)?;
    let cfg = BenchConfig {
        snr: args.snr.parse()?,
        seed: args.seed,
        width,
        height,
        bands: args.bands,
        solver: solver_config(args.config.as_deref(), None)?,
        stamp: args.stamp.clone(),
        ..BenchConfig::new(suite, algos)
    };
    cfg.validate()?;
    let output = run_bench(&cfg)?;
    create_dir(&args.out)?;
    let mut kv = cfg.to_kv();
    kv.set("config_hash", cfg.config_hash());
    kv.write(&args.out.join("bench.cfg"))?;
    output.report.write(&args.out.join("report"))?;
    if !output.maps.is_empty() {
        output.write_pngs(&args.out.join("maps"))?;
    }
    if output.failed() {
        for f in &output.report.failures {
            warn!("{f}");
        }
        return Err(Failure::Partial(format!("{} sub-runs failed", output.report.failures.len())));
    }
    Ok(())
}

/// Cap the global worker pool from `HSU_THREADS` (0 or unset = automatic).
fn configure_threads() -> Result<(), Failure> {
    let Ok(value) = std::env::var("HSU_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| Failure::Usage(format!("HSU_THREADS='{value}' is not a count")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = configure_threads().and_then(|()| match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Unmix(a) => cmd_unmix(a),
        Command::Extract(a) => cmd_extract(a),
        Command::Bench(a) => cmd_bench(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Partial(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
