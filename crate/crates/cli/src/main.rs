use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use quantlab_cli::config::{apply_override, read_table};
use quantlab_cli::output::{read_report, PLOT_FILE, REPORT_FILE, ROWS_FILE};
use quantlab_cli::{plot, template, verify_report, write_run, ExperimentConfig, ExperimentKind};
use quantlab_core::LabError;

const PASS: u8 = 0;
const THRESHOLD_FAIL: u8 = 1;
const CONFIG_ERROR: u8 = 2;
const RUNTIME_ERROR: u8 = 3;

#[derive(Parser)]
#[command(
    name = "lab",
    version,
    about = "Run and verify quantization and mean-field experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantization error sweeps on uniform grids.
    QuantizationRates(RunArgs),
    /// Alpha sweep of simultaneous quantization of two variables.
    SimultaneousTradeoff(RunArgs),
    /// Particle vs mean-field gap of the example problem.
    ExampleGap(RunArgs),
    /// Convergence of particle values toward a large-N reference.
    MfcConvergence(RunArgs),
    /// Shared-seed projection check in the heat case.
    HeatProjection(RunArgs),
    /// Recompute the verdicts of a stored run.
    Verify { report: PathBuf },
    /// Draw plot.svg for a stored run directory.
    Plot { run_dir: PathBuf },
    /// Print the commented template config for an experiment.
    Template { experiment: String },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Override any config key, e.g. `--set params.n=256`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Also write plot.svg into the run directory.
    #[arg(long)]
    plot: bool,
}

fn exit_for(e: &LabError) -> u8 {
    match e {
        LabError::Config(_) | LabError::InvalidInput(_) | LabError::Unsupported(_) => CONFIG_ERROR,
        _ => RUNTIME_ERROR,
    }
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, LabError> {
    let mut table = match &args.config {
        Some(p) => read_table(p)?,
        None => toml::Table::new(),
    };
    for s in &args.set {
        apply_override(&mut table, s)?;
    }
    let mut cfg = ExperimentConfig::from_table(table)?;
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if let Some(r) = args.restarts {
        cfg.restarts = r;
    }
    Ok(cfg)
}

fn run_experiment(kind: ExperimentKind, args: &RunArgs) -> Result<u8, LabError> {
    let cfg = load(args)?;
    let out = quantlab_cli::run(kind, &cfg)?;
    let dir = write_run(&out, &cfg)?;
    if args.plot {
        std::fs::write(dir.join(PLOT_FILE), plot::render_svg(kind, &out.rows_csv)?)?;
    }
    for v in &out.verdicts {
        println!(
            "{} {}: {}",
            if v.passed { "PASS" } else { "FAIL" },
            v.name,
            v.detail
        );
    }
    println!("wrote {}", dir.display());
    Ok(if out.passed() { PASS } else { THRESHOLD_FAIL })
}

fn verify(path: PathBuf) -> Result<u8, LabError> {
    let v = verify_report(&path)?;
    for r in &v.recomputed {
        println!(
            "{} {}: {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    if !v.consistent() {
        eprintln!("stored verdicts differ from the ones recomputed from {ROWS_FILE}");
    }
    Ok(if v.passed() { PASS } else { THRESHOLD_FAIL })
}

fn plot_dir(dir: PathBuf) -> Result<u8, LabError> {
    let report = read_report(&dir.join(REPORT_FILE))?;
    let rows = std::fs::read_to_string(dir.join(&report.rows))?;
    let target = dir.join(PLOT_FILE);
    std::fs::write(&target, plot::render_svg(report.experiment, &rows)?)?;
    println!("wrote {}", target.display());
    Ok(PASS)
}

fn init_threads() -> Result<(), LabError> {
    let Ok(raw) = std::env::var("LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        LabError::Config(format!(
            "LAB_THREADS must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| LabError::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::QuantizationRates(a) => run_experiment(ExperimentKind::QuantizationRates, &a),
        Command::SimultaneousTradeoff(a) => {
            run_experiment(ExperimentKind::SimultaneousTradeoff, &a)
        }
        Command::ExampleGap(a) => run_experiment(ExperimentKind::ExampleGap, &a),
        Command::MfcConvergence(a) => run_experiment(ExperimentKind::MfcConvergence, &a),
        Command::HeatProjection(a) => run_experiment(ExperimentKind::HeatProjection, &a),
        Command::Verify { report } => verify(report),
        Command::Plot { run_dir } => plot_dir(run_dir),
        Command::Template { experiment } => experiment.parse::<ExperimentKind>().map(|k| {
            print!("{}", template(k));
            PASS
        }),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
