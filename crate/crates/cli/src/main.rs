use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use filtration_core::checks::{self, Report, Verdict};
use filtration_core::fuzz::{self, FuzzParams};
use filtration_core::random::TreeParams;
use filtration_core::scenario::{sha256_hex, Scenario};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "filtration-lab", version, about = "Exact checks for martingale representation and filtration enlargement on finite event trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Seed for randomized checks; overrides the scenario's own seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Subcommand)]
enum Command {
    /// Run the checks listed in a scenario file.
    Run {
        scenario: PathBuf,
        /// Comma-separated check names replacing the scenario's list.
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
    },
    /// Run a seeded campaign over random instances.
    Fuzz(FuzzArgs),
    /// Rank test of the scenario's basis with multiplicity and jump-constraint tables.
    CheckMrp { scenario: PathBuf },
    /// Deflator audit of the scenario's price under its enlargement.
    Viability { scenario: PathBuf },
    /// Print what a check asserts and when it passes.
    Explain { check: String },
}

#[derive(Args)]
struct FuzzArgs {
    /// Seed range `start..end`.
    #[arg(long, default_value = "0..100")]
    seeds: String,
    #[arg(long, default_value_t = 3)]
    horizon: usize,
    #[arg(long, default_value_t = 4)]
    branching: usize,
    #[arg(long, default_value_t = 6)]
    denom: u32,
    /// Number of distinct insider labels in the random enlargement.
    #[arg(long, default_value_t = 2)]
    labels: usize,
    /// Root gets d+2 children against a d-dimensional basis.
    #[arg(long)]
    overbranch: bool,
    /// Comma-separated check names; defaults to every invariant check.
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<String>>,
    /// Directory receiving reproducer scenarios of failing seeds.
    #[arg(long, default_value = "reproducers")]
    repro_dir: PathBuf,
}

/// Input or I/O problem; always exit code 2.
struct Failure(String);

const EXIT_FAIL: u8 = 1;
const EXIT_INPUT: u8 = 2;

fn read_scenario(path: &Path) -> Result<(Scenario, String), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let scenario = Scenario::from_json(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    Ok((scenario, sha256_hex(text.as_bytes())))
}

fn emit(common: &Common, text: &str) -> Result<(), Failure> {
    match &common.out {
        Some(path) => fs::write(path, text).map_err(|e| Failure(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_report(common: &Common, report: &Report) -> Result<u8, Failure> {
    let text = match common.format {
        Format::Json => report.to_json(),
        Format::Table => report.to_table(),
    };
    emit(common, &text)?;
    Ok(if report.verdict == Verdict::Fail { EXIT_FAIL } else { 0 })
}

fn parse_range(s: &str) -> Result<std::ops::Range<u64>, Failure> {
    let bad = || Failure(format!("seed range {s:?} is not of the form start..end"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let start: u64 = a.trim().parse().map_err(|_| bad())?;
    let end: u64 = b.trim().parse().map_err(|_| bad())?;
    if end < start {
        return Err(bad());
    }
    Ok(start..end)
}

fn mrp_table(v: &Value) -> String {
    let mut out = format!("mrp: {}\n", v["mrp"]);
    if !v["failing_atom"].is_null() {
        out += &format!("failing atom: {}\n", v["failing_atom"]);
    }
    out += "t  node             children rank\n";
    for row in v["multiplicity_table"].as_array().into_iter().flatten() {
        out += &format!(
            "{:<2} {:<16} {:<8} {}\n",
            row["t"],
            row["node"].as_str().unwrap_or(""),
            row["children"],
            row["rank"]
        );
    }
    for row in v["constraint_table"].as_array().into_iter().flatten() {
        out += &format!("alpha t={} atom={}: {}\n", row["t"], row["atom"], row["alpha"]);
    }
    out
}

fn execute(cli: &Cli) -> Result<u8, Failure> {
    let common = &cli.common;
    let input = |e: filtration_core::Error| Failure(e.to_string());
    match &cli.command {
        Command::Run { scenario, checks } => {
            let (s, hash) = read_scenario(scenario)?;
            let report = checks::run_scenario(&s, &hash, checks.as_deref(), common.seed).map_err(input)?;
            emit_report(common, &report)
        }
        Command::Viability { scenario } => {
            let (s, hash) = read_scenario(scenario)?;
            let report = checks::viability_audit(&s, &hash, common.seed).map_err(input)?;
            emit_report(common, &report)
        }
        Command::CheckMrp { scenario } => {
            let (s, _) = read_scenario(scenario)?;
            let loaded = s.load().map_err(input)?;
            let basis = loaded.basis.as_ref().ok_or_else(|| Failure("scenario names no basis".into()))?;
            let v = checks::mrp_json(&loaded.tree, basis).map_err(input)?;
            let text = match common.format {
                Format::Json => serde_json::to_string_pretty(&v).expect("json") + "\n",
                Format::Table => mrp_table(&v),
            };
            emit(common, &text)?;
            Ok(if v["mrp"] == Value::Bool(true) { 0 } else { EXIT_FAIL })
        }
        Command::Explain { check } => {
            emit(common, &checks::explain(check).map_err(input)?)?;
            Ok(0)
        }
        Command::Fuzz(args) => {
            let seeds = parse_range(&args.seeds)?;
            if let Some(seed) = common.seed {
                // a single seed narrows the campaign to that instance
                return run_fuzz(common, args, seed..seed + 1);
            }
            run_fuzz(common, args, seeds)
        }
    }
}

fn run_fuzz(common: &Common, args: &FuzzArgs, seeds: std::ops::Range<u64>) -> Result<u8, Failure> {
    let params = FuzzParams {
        seeds,
        tree: TreeParams { max_branching: args.branching, horizon: args.horizon, denom_bound: args.denom },
        checks: args.checks.clone().unwrap_or_else(checks::invariant_check_names),
        overbranch: args.overbranch,
        labels: args.labels,
    };
    let campaign = fuzz::fuzz(&params).map_err(|e| Failure(e.to_string()))?;
    if !campaign.reproducers.is_empty() {
        fs::create_dir_all(&args.repro_dir).map_err(|e| Failure(format!("{}: {e}", args.repro_dir.display())))?;
        for r in &campaign.reproducers {
            let path = args.repro_dir.join(&r.file_name);
            fs::write(&path, r.scenario.to_json()).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
            eprintln!("reproducer written to {}", path.display());
        }
    }
    let text = match common.format {
        Format::Json => campaign.report.to_json(),
        Format::Table => campaign.report.to_table(),
    };
    emit(common, &text)?;
    Ok(if campaign.report.verdict == Verdict::Fail { EXIT_FAIL } else { 0 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let started = Instant::now();
    let code = match execute(&cli) {
        Ok(code) => code,
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INPUT
        }
    };
    eprintln!("elapsed: {:.3}s", started.elapsed().as_secs_f64());
    ExitCode::from(code)
}
