use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use horolab::config::{ExperimentConfig, KEYS};
use horolab::harness::{emit_summary, run_experiment, run_verify, ExperimentKind};
use horolab::Error;

fn config_help() -> String {
    let mut s = String::from("Config keys (flat `key = value`, `#` comments, comma lists):\n");
    for (k, v) in KEYS {
        s += &format!("  {k:<26} {v}\n");
    }
    s += "\nExit codes: 0 success, 1 numeric failure, 2 config/admissibility error.";
    s
}

#[derive(Parser)]
#[command(name = "horolab", version, about = "Time-changed horocycle flows on SL(2,Z)\\SL(2,R)", after_help = config_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of worker threads.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run the lemma-tagged invariant suite.
    Verify(Common),
    /// Correlations of f and g under the unipotent and time-changed flows.
    Correlate(Common),
    /// Shear exceedance statistics.
    Shear(Common),
    /// L² growth of ergodic integrals, with the non-zero-mean control.
    L2growth(Common),
    /// Exceedance sets of ergodic integrals.
    Exceedance(Common),
    /// Fit decay exponents from a CSV written by `correlate` or `l2growth`.
    Summarize {
        /// CSV to summarize.
        csv: PathBuf,
        /// Configuration file (for `noise_mult`).
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn experiment(common: &Common, kind: ExperimentKind) -> Result<(), Error> {
    let cfg = load(common)?;
    let out = run_experiment(&cfg, kind, &common.out)?;
    println!(
        "{}: {} rows -> {} (manifest {})",
        kind.name(),
        out.rows,
        out.csv.display(),
        out.manifest.display()
    );
    Ok(())
}

fn summarize(csv: &Path, config: Option<&Path>) -> Result<(), Error> {
    let noise = match config {
        Some(p) => ExperimentConfig::load(p)?.noise_mult,
        None => ExperimentConfig::default().noise_mult,
    };
    let summary = emit_summary(csv, noise)?;
    print!("{}", summary.text);
    let json = serde_json::to_string_pretty(&summary.primary_json())?;
    println!("{json}");
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("summary");
    std::fs::write(csv.with_file_name(format!("{stem}_summary.json")), json + "\n")?;
    Ok(())
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Verify(common) => {
            let cfg = load(&common)?;
            let report = run_verify(&cfg)?;
            for c in &report.checks {
                println!("{} {:<24} {}", if c.passed { "PASS" } else { "FAIL" }, c.tag, c.detail);
            }
            if report.passed() {
                Ok(0)
            } else {
                eprintln!("failing: {}", report.failing_tags().join(", "));
                Ok(1)
            }
        }
        Command::Correlate(c) => experiment(&c, ExperimentKind::Correlate).map(|_| 0),
        Command::Shear(c) => experiment(&c, ExperimentKind::Shear).map(|_| 0),
        Command::L2growth(c) => experiment(&c, ExperimentKind::L2Growth).map(|_| 0),
        Command::Exceedance(c) => experiment(&c, ExperimentKind::Exceedance).map(|_| 0),
        Command::Summarize { csv, config } => summarize(&csv, config.as_deref()).map(|_| 0),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
