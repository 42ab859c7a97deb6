use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn unmixlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unmixlab"))
        .args(args)
        .env_remove("HSU_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, scene: &str, mixture: &str, snr: &str) -> Output {
    unmixlab(&[
        "simulate", "--scene", scene, "--mixture", mixture, "--snr", snr, "--seed", "42", "--extent", "12x10",
        "--bands", "64", "--out", path(dir),
    ])
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&simulate(&a, "1", "7", "40")), 0);
    assert_eq!(code(&simulate(&b, "1", "7", "40")), 0);
    for f in ["cube.hdr", "cube.raw", "truth.csv", "truth.raw", "scene.cfg", "endmembers.raw"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let cfg = fs::read_to_string(a.join("scene.cfg")).unwrap();
    assert!(cfg.contains("mixture = 7"));
    assert!(cfg.contains("snr = 40"));
}

#[test]
fn simulate_uses_table_rows() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&simulate(tmp.path(), "2", "10", "none")), 0);
    let truth = fs::read_to_string(tmp.path().join("truth.csv")).unwrap();
    assert!(truth.contains("10,red,0.25"), "{truth}");
    assert!(truth.contains("10,white,0.25"), "{truth}");
}

#[test]
fn unknown_mixture_exits_2_with_valid_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(tmp.path(), "1", "99", "40");
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("1, 2, 3, 4, 5, 6, 7, 8, 9, 10"), "{err}");
}

#[test]
fn unmix_noiseless_scene_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    assert_eq!(code(&simulate(&scene, "1", "4", "none")), 0);
    let out_dir = tmp.path().join("out");
    let run = |algo: &str| {
        unmixlab(&[
            "unmix",
            path(&scene.join("cube.hdr")),
            "--algo",
            algo,
            "--endmembers",
            path(&scene.join("endmembers.hdr")),
            "--truth",
            path(&scene.join("truth.hdr")),
            "--mixture",
            "4",
            "--png",
            "--out",
            path(&out_dir),
        ])
    };
    assert_eq!(code(&run("fcls")), 0);
    assert_eq!(code(&run("ncls")), 0);
    let report = fs::read_to_string(out_dir.join("report.csv")).unwrap();
    let rows: Vec<&str> = report.lines().skip(1).collect();
    assert_eq!(rows.len(), 6, "{report}");
    for row in &rows {
        let rmse: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!(rmse < 1e-6, "{row}");
    }
    assert!(rows[0].starts_with("custom,4,fcls,magenta,0.8889"), "{report}");
    let fcls = fs::read_to_string(out_dir.join("abundance_fcls.hdr")).unwrap();
    let ncls = fs::read_to_string(out_dir.join("abundance_ncls.hdr")).unwrap();
    assert!(fcls.contains("asc = true"));
    assert!(ncls.contains("asc = false"));
    assert!(out_dir.join("abundance_fcls_cyan.png").exists());
    assert!(out_dir.join("solver.cfg").exists());
}

#[test]
fn unmix_input_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    assert_eq!(code(&simulate(&a, "1", "1", "none")), 0);
    let missing = unmixlab(&[
        "unmix",
        path(&a.join("cube.hdr")),
        "--algo",
        "fcls",
        "--endmembers",
        path(&tmp.path().join("nope.hdr")),
        "--out",
        path(&tmp.path().join("o")),
    ]);
    assert_eq!(code(&missing), 2);

    // endmembers over a different band count
    let b = tmp.path().join("b");
    let out = unmixlab(&[
        "simulate", "--scene", "1", "--mixture", "1", "--extent", "4x4", "--bands", "32", "--out", path(&b),
    ]);
    assert_eq!(code(&out), 0);
    let mismatch = unmixlab(&[
        "unmix",
        path(&a.join("cube.hdr")),
        "--algo",
        "fcls",
        "--endmembers",
        path(&b.join("endmembers.hdr")),
        "--out",
        path(&tmp.path().join("o")),
    ]);
    assert_eq!(code(&mismatch), 2);
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("bands"));
}

#[test]
fn extract_recovers_planted_endmembers() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("p");
    // pattern C has pure regions of all three materials
    let out = unmixlab(&[
        "simulate", "--scene", "2p", "--mixture", "C", "--snr", "none", "--extent", "30x30", "--bands", "64",
        "--out", path(&scene),
    ]);
    assert_eq!(code(&out), 0);
    for algo in ["vca", "nfindr"] {
        let dest = tmp.path().join("em").join(format!("{algo}.hdr"));
        let run = || {
            unmixlab(&[
                "extract",
                path(&scene.join("cube.hdr")),
                "--algo",
                algo,
                "-R",
                "3",
                "--seed",
                "5",
                "--reference",
                path(&scene.join("endmembers.hdr")),
                "--out",
                path(&dest),
            ])
        };
        assert_eq!(code(&run()), 0);
        let quality = fs::read_to_string(dest.with_extension("quality.csv")).unwrap();
        for line in quality.lines().skip(1) {
            let sad: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
            assert!(sad < 1e-6, "{algo}: {line}");
        }
        let first = fs::read(dest.with_extension("raw")).unwrap();
        assert_eq!(code(&run()), 0);
        assert_eq!(first, fs::read(dest.with_extension("raw")).unwrap());
    }
    let zero = unmixlab(&["extract", path(&scene.join("cube.hdr")), "--algo", "vca", "-R", "0", "--out", "x.hdr"]);
    assert_eq!(code(&zero), 2);
    let too_many = unmixlab(&[
        "extract",
        path(&scene.join("cube.hdr")),
        "--algo",
        "nfindr",
        "-R",
        "8",
        "--out",
        path(&tmp.path().join("n.hdr")),
    ]);
    assert_eq!(code(&too_many), 2);
}

fn bench(dir: &Path, suite: &str, algos: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "bench", "--suite", suite, "--algos", algos, "--snr", "30", "--seed", "1", "--extent", "8x8", "--bands", "48",
        "--out", path(dir),
    ];
    args.extend_from_slice(extra);
    unmixlab(&args)
}

#[test]
fn bench_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&bench(&a, "scene1", "fcls,ncls", &[])), 0);
    let threaded = Command::new(env!("CARGO_BIN_EXE_unmixlab"))
        .args(["bench", "--suite", "scene1", "--algos", "fcls,ncls", "--snr", "30", "--seed", "1"])
        .args(["--extent", "8x8", "--bands", "48", "--out", path(&b)])
        .env("HSU_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&threaded), 0);
    for f in ["report.csv", "report.json", "bench.cfg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let json = fs::read_to_string(a.join("report.json")).unwrap();
    assert!(json.contains("\"config_hash\""));
    assert!(!json.contains("stamp"));

    let c = tmp.path().join("c");
    assert_eq!(code(&bench(&c, "scene1", "fcls,ncls", &["--stamp", "run-1"])), 0);
    assert!(fs::read_to_string(c.join("report.json")).unwrap().contains("\"stamp\": \"run-1\""));
}

#[test]
fn bench_pattern_suite_writes_maps() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&bench(tmp.path(), "scene2-pattern", "hapke", &[])), 0);
    let maps: Vec<_> = fs::read_dir(tmp.path().join("maps")).unwrap().collect();
    assert_eq!(maps.len(), 10);
}

#[test]
fn bench_all_covers_36_mixtures() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&bench(tmp.path(), "all", "fcls", &[])), 0);
    let report = fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    let mut mixtures: Vec<(String, String)> = report
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    mixtures.dedup();
    assert_eq!(mixtures.len(), 36);
}

#[test]
fn bench_usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&bench(tmp.path(), "scene2", "", &[])), 2);
    assert_eq!(code(&bench(tmp.path(), "scene9", "fcls", &[])), 2);
    assert_eq!(code(&bench(tmp.path(), "scene2", "fcls,magic", &[])), 2);
    let bad_threads = Command::new(env!("CARGO_BIN_EXE_unmixlab"))
        .args(["bench", "--suite", "scene1", "--algos", "fcls", "--out", path(tmp.path())])
        .env("HSU_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&bad_threads), 2);
    assert_eq!(code(&unmixlab(&["bench"])), 2);
}

#[test]
fn bench_failures_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    // without clamping, noisy pixels near the bright board leave the Hapke domain
    let cfg = tmp.path().join("solver.cfg");
    fs::write(&cfg, "clamp_reflectance = false\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_unmixlab"))
        .args(["bench", "--suite", "scene3", "--algos", "hapke", "--snr", "10", "--extent", "8x8"])
        .args(["--bands", "48", "--config", path(&cfg), "--out", path(&tmp.path().join("o"))])
        .output()
        .unwrap();
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let json = fs::read_to_string(tmp.path().join("o").join("report.json")).unwrap();
    assert!(json.contains("pixels failed"), "{json}");
}
