//! `vlab`: runs scenario documents and writes `summary.json`, CSV data and `report.md`.
//!
//! Exit status: 0 all assertions pass, 1 runtime error, 2 config error, 3 assertion failure.

mod error;
mod opspec;
mod pipelines;
mod report;
mod scenario;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use error::{CliError, Result, EXIT_ASSERTION};
use report::Run;
use scenario::{Kind, Overrides, Scenario};

/// Environment variable that replaces the default output directory.
const OUT_DIR_ENV: &str = "VLAB_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "vlab-out";

#[derive(Parser)]
#[command(name = "vlab", version, about = "Scenario runner for the Volterra operator laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Identity suite: commutators, derivation, Leibniz, orbit inequality chain, intertwining.
    Verify(RunArgs),
    /// Log-domain orbits, angle statistics, weak-null and quasinilpotency probes.
    Orbit(RunArgs),
    /// Gaussian certificate that a point is outside the weak closure of a growing set.
    Certify(RunArgs),
    /// Density search, projective obstruction and two-term fits for Kronecker multipliers.
    Kronecker(RunArgs),
    /// Dimension of the joint commutant of two operators.
    Commutant(RunArgs),
    /// Orbit inequality for witness families, optionally through the scaled-set pipeline.
    Witness(RunArgs),
    /// Runs several scenario files and writes an aggregate report.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// Seed, overriding the scenario's own.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $VLAB_OUT_DIR, else ./vlab-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid size, overriding the scenario's own.
    #[arg(long)]
    grid: Option<usize>,
    /// Print nothing on success.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON; defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ReportArgs {
    /// Scenario JSON files.
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    #[command(flatten)]
    common: Common,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { seed: self.seed, grid: self.grid }
    }

    fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

#[derive(Serialize)]
struct RunInfo {
    version: &'static str,
    elapsed_seconds: f64,
}

/// Runs one scenario into `dir`, writing every output file.
fn execute(sc: &Scenario, dir: &Path) -> Result<(Run, String)> {
    std::fs::create_dir_all(dir)?;
    let start = Instant::now();
    let mut run = Run::new(dir);
    pipelines::run(sc, &mut run)?;
    report::write_json(&dir.join("summary.json"), &report::summary(sc, &run))?;
    let section = report::markdown_section(sc, &run);
    std::fs::write(dir.join("report.md"), format!("# vlab report\n\n{section}"))?;
    let info = RunInfo { version: env!("CARGO_PKG_VERSION"), elapsed_seconds: start.elapsed().as_secs_f64() };
    report::write_json(&dir.join("run_info.json"), &info)?;
    Ok((run, section))
}

fn print_run(sc: &Scenario, run: &Run) {
    for a in &run.assertions {
        println!(
            "[{}] {}: {} {} {}",
            if a.pass { "PASS" } else { "FAIL" },
            a.name,
            report::fmt_value(a.measured),
            a.relation.symbol(),
            report::fmt_value(a.tolerance)
        );
    }
    if run.assertions.is_empty() {
        println!("[FLAGGED] {}: no assertions", sc.name);
    }
    println!("{}: {}", sc.name, report::verdict(run.passed()));
}

fn single(kind: Kind, args: &RunArgs) -> Result<bool> {
    let ov = args.common.overrides();
    let sc = match &args.config {
        Some(path) => Scenario::from_path(path, ov)?,
        None => Scenario::default_for(kind, ov)?,
    };
    if sc.kind != kind {
        return Err(CliError::config(format!(
            "scenario `{}` has kind `{}` but was run with `{}`",
            sc.name,
            sc.kind.as_str(),
            kind.as_str()
        )));
    }
    let (run, _) = execute(&sc, &args.common.out_dir())?;
    if !args.common.quiet || !run.passed() {
        print_run(&sc, &run);
    }
    Ok(run.passed())
}

#[derive(Serialize)]
struct ScenarioEntry<'a> {
    scenario: &'a str,
    kind: &'a str,
    verdict: &'static str,
    summary: String,
}

#[derive(Serialize)]
struct Aggregate<'a> {
    verdict: &'static str,
    scenarios: Vec<ScenarioEntry<'a>>,
}

fn aggregate(args: &ReportArgs) -> Result<bool> {
    let ov = args.common.overrides();
    // validate every document before anything is written
    let scenarios = args.configs.iter().map(|p| Scenario::from_path(p, ov)).collect::<Result<Vec<_>>>()?;
    let mut names = BTreeSet::new();
    for sc in &scenarios {
        if !names.insert(sc.name.as_str()) {
            return Err(CliError::config(format!("duplicate scenario name `{}`", sc.name)));
        }
    }
    let out = args.common.out_dir();
    // scenarios own their directories and share nothing, so they run side by side
    let results: Vec<Result<(Run, String)>> = std::thread::scope(|s| {
        let handles: Vec<_> = scenarios.iter().map(|sc| s.spawn(|| execute(sc, &out.join(&sc.name)))).collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    });
    let mut entries = Vec::new();
    let mut md = String::from("# vlab report\n\n");
    let mut all = true;
    for (sc, res) in scenarios.iter().zip(results) {
        let (run, section) = res?;
        all &= run.passed();
        if !args.common.quiet || !run.passed() {
            print_run(sc, &run);
        }
        entries.push(ScenarioEntry {
            scenario: &sc.name,
            kind: sc.kind.as_str(),
            verdict: report::verdict(run.passed()),
            summary: format!("{}/summary.json", sc.name),
        });
        md.push_str(&section);
        md.push('\n');
    }
    md.push_str(&format!("**Aggregate verdict: {}**\n", report::verdict(all).to_uppercase()));
    std::fs::write(out.join("report.md"), md)?;
    report::write_json(&out.join("summary.json"), &Aggregate { verdict: report::verdict(all), scenarios: entries })?;
    Ok(all)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Verify(a) => single(Kind::Verify, a),
        Command::Orbit(a) => single(Kind::Orbit, a),
        Command::Certify(a) => single(Kind::Certify, a),
        Command::Kronecker(a) => single(Kind::Kronecker, a),
        Command::Commutant(a) => single(Kind::Commutant, a),
        Command::Witness(a) => single(Kind::Witness, a),
        Command::Report(a) => aggregate(a),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_ASSERTION as u8),
        Err(e) => {
            eprintln!("vlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
