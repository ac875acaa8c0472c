use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(args)
        .env_remove("LAB_THREADS")
        .output()
        .expect("lab runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn run_dirs(out: &Path, experiment: &str) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(out.join(experiment))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    dirs.sort();
    dirs
}

const SMALL_HEAT: [&str; 2] = ["--set", "params.trials=30"];

#[test]
fn run_writes_layout_and_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let o = lab(&[
        "heat-projection",
        "--out",
        out,
        "--seed",
        "3",
        "--plot",
        SMALL_HEAT[0],
        SMALL_HEAT[1],
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = &run_dirs(tmp.path(), "heat-projection")[0];
    for f in ["config.toml", "rows.csv", "report.json", "plot.svg"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let cfg = fs::read_to_string(dir.join("config.toml")).unwrap();
    assert!(cfg.contains("experiment = \"heat-projection\"") && cfg.contains("seeds = [3]"));
    let report = dir.join("report.json");
    assert_eq!(code(&lab(&["verify", report.to_str().unwrap()])), 0);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    for _ in 0..2 {
        assert_eq!(
            code(&lab(&[
                "heat-projection",
                "--out",
                out,
                SMALL_HEAT[0],
                SMALL_HEAT[1]
            ])),
            0
        );
    }
    let dirs = run_dirs(tmp.path(), "heat-projection");
    assert_eq!(dirs.len(), 2);
    assert_eq!(
        fs::read(dirs[0].join("rows.csv")).unwrap(),
        fs::read(dirs[1].join("rows.csv")).unwrap()
    );
}

#[test]
fn tampered_rows_fail_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(
        code(&lab(&[
            "heat-projection",
            "--out",
            out,
            SMALL_HEAT[0],
            SMALL_HEAT[1]
        ])),
        0
    );
    let dir = &run_dirs(tmp.path(), "heat-projection")[0];
    let rows = fs::read_to_string(dir.join("rows.csv")).unwrap();
    let mut lines: Vec<String> = rows.lines().map(str::to_string).collect();
    let last = lines[1].rfind(',').unwrap();
    lines[1] = format!("{},0.5", &lines[1][..last]);
    fs::write(dir.join("rows.csv"), lines.join("\n") + "\n").unwrap();
    let o = lab(&["verify", dir.join("report.json").to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL projection exact"));
}

#[test]
fn threshold_failure_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lab(&[
        "mfc-convergence",
        "--out",
        tmp.path().to_str().unwrap(),
        "--set",
        "params.ns=[2, 4]",
        "--set",
        "params.reference_n=32",
        "--set",
        "params.atoms=64",
        "--set",
        "params.lipschitz_pairs=0",
        "--set",
        "params.final_ratio=1e-12",
    ]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL seed 0 final gap"));
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "seeds = []\n").unwrap();
    let o = lab(&["heat-projection", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seeds must be nonempty"));

    let o = lab(&["simultaneous-tradeoff", "--set", "params.n=7"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not divisible"));

    let o = lab(&["quantization-rates", "--set", "params.sweeps=[]"]);
    assert_eq!(code(&o), 2);

    let o = lab(&[
        "example-gap",
        "--config",
        tmp.path().join("missing.toml").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);

    let o = Command::new(env!("CARGO_BIN_EXE_lab"))
        .args([
            "heat-projection",
            "--set",
            "params.trials=1",
            "--out",
            tmp.path().to_str().unwrap(),
        ])
        .env("LAB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn templates_print_and_plot_subcommand_draws() {
    let o = lab(&["template", "example-gap"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with('#') && text.contains("experiment = \"example-gap\""));
    assert_eq!(code(&lab(&["template", "nope"])), 2);

    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lab"))
        .args([
            "heat-projection",
            "--set",
            "params.trials=5",
            "--out",
            tmp.path().to_str().unwrap(),
        ])
        .env("LAB_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let dir = &run_dirs(tmp.path(), "heat-projection")[0];
    assert_eq!(code(&lab(&["plot", dir.to_str().unwrap()])), 0);
    assert!(fs::read_to_string(dir.join("plot.svg"))
        .unwrap()
        .contains("<polyline"));
}
