//! Command-line front end: parameter lab, scenario runner, trace checker,
//! replayer, and report emitter.
//!
//! Exit codes: 0 success/valid, 1 usage or configuration error, 2 a check
//! or validation failed, 3 checks could not run to completion (exhaustive
//! search cap exceeded somewhere).

use anyhow::{anyhow, bail, Context, Result};
use ccreg::checker::{check_all, CheckReport, Verdict};
use ccreg::engine::{replay, run};
use ccreg::params::{
    beta_interval, gamma_interval, table1, validate_algo, validate_system, validate_table1_row,
    AlgoParams, SystemParams, ValidationReport,
};
use ccreg::rational::{parse_rational, to_f64, Rat};
use ccreg::report::{aggregate, build_report, RunReport};
use ccreg::scenarios::{presets, ScenarioConfig};
use ccreg::trace::Trace;
use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;
use rayon::prelude::*;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ccreg", version, about = "Churn-tolerant atomic register: simulator, checker, and parameter lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate system/algorithm parameters and print feasible intervals.
    Params(ParamsArgs),
    /// Run a scenario, write its trace, and optionally check it inline.
    Run(RunArgs),
    /// Check a recorded trace.
    Check(CheckArgs),
    /// Re-execute a recorded trace and verify it reproduces itself.
    Replay(ReplayArgs),
    /// Summarize run reports into tables and plot data files.
    Report(ReportArgs),
}

#[derive(Args)]
struct ParamsArgs {
    /// Churn rate, e.g. 0.04 (exact decimal or n/d).
    #[arg(long)]
    alpha: Option<String>,
    /// Failure fraction, e.g. 0.06.
    #[arg(long)]
    delta: Option<String>,
    /// Minimum system size.
    #[arg(long)]
    nmin: Option<u64>,
    /// Join bound to validate.
    #[arg(long)]
    gamma: Option<String>,
    /// Quorum bound to validate.
    #[arg(long)]
    beta: Option<String>,
    /// Boundary tolerance; values this close to a violated boundary grade
    /// as marginal, which still counts as valid.
    #[arg(long, default_value = "0.001")]
    eps: String,
    /// Validate the three built-in known-good parameter rows.
    #[arg(long)]
    table1: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario: calm, maxchurn-row1/2/3, violation.
    #[arg(long)]
    preset: Option<String>,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the trace (single-run mode).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the run report JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Run all checkers on the trace and fold the verdict into the exit
    /// code.
    #[arg(long)]
    check: bool,
    /// Exhaustive-oracle size cap.
    #[arg(long, default_value_t = 8)]
    bruteforce_cap: usize,
    /// Run this many seeds (seed, seed+1, ...) and emit an aggregate
    /// report.
    #[arg(long)]
    seeds: Option<u64>,
    /// Directory for batch traces and reports; defaults to $CCREG_OUT_DIR.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Check atomicity only.
    #[arg(long)]
    atomicity: bool,
    /// Check join/op liveness only.
    #[arg(long)]
    liveness: bool,
    /// Check model bounds only.
    #[arg(long)]
    model: bool,
    /// Check everything (default).
    #[arg(long)]
    all: bool,
    #[arg(long, default_value_t = 8)]
    bruteforce_cap: usize,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Write the regenerated trace here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run-report JSON files.
    #[arg(long, num_args = 1.., required = true)]
    inputs: Vec<PathBuf>,
    /// Write the aggregate summary JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write latency histogram and latency-vs-churn CSV data files here.
    #[arg(long)]
    csv_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Params(args) => cmd_params(args),
        Command::Run(args) => cmd_run(args),
        Command::Check(args) => cmd_check(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Report(args) => cmd_report(args),
    };
    match code {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn parse_rat(s: &str, what: &str) -> Result<BigRational> {
    parse_rational(s).map_err(|e| anyhow!("bad {what}: {e}"))
}

fn print_validation_table(report: &ValidationReport) {
    println!("{:<6} {:<14} {:>14} {:>14}  {}", "rule", "verdict", "value", "bound", "constraint");
    for c in &report.constraints {
        let verdict = match c.verdict {
            ccreg::params::Verdict::Satisfied => "satisfied",
            ccreg::params::Verdict::Marginal => "marginal",
            ccreg::params::Verdict::Violated => "VIOLATED",
        };
        let label = if c.informational { format!("{} (info)", c.id) } else { c.id.clone() };
        println!(
            "{:<6} {:<14} {:>14.9} {:>14.9}  {}",
            label,
            verdict,
            to_f64(&c.value.0),
            to_f64(&c.bound.0),
            c.description
        );
    }
    println!("overall: {}", if report.valid { "valid" } else { "INVALID" });
}

fn cmd_params(args: ParamsArgs) -> Result<u8> {
    let eps = parse_rat(&args.eps, "--eps")?;
    if args.table1 {
        let mut all_valid = true;
        let mut rows_json = Vec::new();
        for (i, row) in table1().iter().enumerate() {
            let report = validate_table1_row(row, &eps)?;
            println!(
                "row {}: alpha={} delta={} n_min={} gamma={} beta={} -> {}",
                i + 1,
                row.alpha,
                row.delta,
                row.n_min.map(|n| n.to_string()).unwrap_or_else(|| "n/a".into()),
                row.gamma.as_ref().map(|g| g.to_string()).unwrap_or_else(|| "n/a".into()),
                row.beta,
                if report.valid { "valid" } else { "INVALID" }
            );
            all_valid &= report.valid;
            rows_json.push(serde_json::json!({ "row": row, "report": report }));
        }
        println!("{}", serde_json::to_string(&serde_json::json!({ "rows": rows_json }))?);
        return Ok(if all_valid { 0 } else { 2 });
    }

    let alpha = Rat(parse_rat(args.alpha.as_deref().context("--alpha required")?, "--alpha")?);
    let delta = Rat(parse_rat(args.delta.as_deref().context("--delta required")?, "--delta")?);

    let beta_iv = beta_interval(&alpha.0, &delta.0);
    let mut json = serde_json::json!({
        "alpha": alpha,
        "delta": delta,
        "eps": Rat(eps.clone()),
        "beta_interval": beta_iv,
    });
    let report;
    match args.nmin {
        Some(n_min) => {
            let system = SystemParams::new(alpha.clone(), delta.clone(), n_min, 1000)?;
            let gamma_iv = gamma_interval(&system)?;
            json["n_min"] = serde_json::json!(n_min);
            json["gamma_interval"] = serde_json::json!(gamma_iv);
            match (&args.gamma, &args.beta) {
                (Some(g), Some(b)) => {
                    let algo = AlgoParams::new(Rat(parse_rat(g, "--gamma")?), Rat(parse_rat(b, "--beta")?))?;
                    report = validate_algo(&system, &algo, &eps)?;
                }
                (None, None) => report = validate_system(&system)?,
                _ => bail!("--gamma and --beta go together"),
            }
            println!("gamma interval: {gamma_iv}");
        }
        None => {
            if args.gamma.is_some() {
                bail!("validating --gamma requires --nmin");
            }
            bail!("--nmin required (omit it only with --table1)");
        }
    }
    println!("beta  interval: {beta_iv}");
    print_validation_table(&report);
    json["report"] = serde_json::json!(report);
    println!("{}", serde_json::to_string(&json)?);
    Ok(if report.valid { 0 } else { 2 })
}

fn load_config(args: &RunArgs) -> Result<ScenarioConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), None) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            serde_json::from_reader(BufReader::new(f))
                .with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(name)) => presets::by_name(name, args.seed.unwrap_or(0))
            .ok_or_else(|| anyhow!("unknown preset {name}; have {:?}", presets::NAMES))?,
        _ => bail!("exactly one of --config or --preset is required"),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(args: &RunArgs) -> Option<PathBuf> {
    args.out_dir
        .clone()
        .or_else(|| std::env::var_os("CCREG_OUT_DIR").map(PathBuf::from))
}

fn write_trace(trace: &Trace, path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    trace.write_jsonl(BufWriter::new(f))?;
    Ok(())
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

fn verdict_line(name: &str, v: &Verdict) -> String {
    match v {
        Verdict::Pass => format!("{name}: pass"),
        Verdict::Fail { witness } => format!("{name}: FAIL - {witness}"),
        Verdict::NotChecked { reason } => format!("{name}: not checked - {reason}"),
    }
}

fn print_check_report(report: &CheckReport) {
    for (name, v) in [
        ("churn window", &report.schedule_window),
        ("failure fraction", &report.schedule_delta),
        ("size floor", &report.schedule_floor),
        ("signal uniqueness", &report.schedule_uniqueness),
        ("counting bounds", &report.counting_bounds),
        ("active witness", &report.active_witness),
        ("view bands", &report.view_bands),
        ("join liveness", &report.join_liveness),
        ("op liveness", &report.op_liveness),
        ("atomicity (witness)", &report.atomicity_witness),
        ("atomicity (exhaustive)", &report.atomicity_bruteforce),
    ] {
        println!("{}", verdict_line(name, v));
    }
    println!(
        "exhaustive fragments: {} checked, {} skipped",
        report.bruteforce_fragments_checked, report.bruteforce_fragments_skipped
    );
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let cfg = load_config(&args)?;
    let dir = out_dir(&args);

    if let Some(n) = args.seeds {
        let seeds: Vec<u64> = (cfg.seed..cfg.seed + n).collect();
        let results: Vec<Result<(u64, RunReport, u8)>> = seeds
            .par_iter()
            .map(|&seed| {
                let mut c = cfg.clone();
                c.seed = seed;
                let trace = run(&c).map_err(|e| anyhow!("seed {seed}: {e}"))?;
                let checks = if args.check {
                    Some(check_all(&trace, args.bruteforce_cap)?)
                } else {
                    None
                };
                let code = checks.as_ref().map(|c| c.exit_code() as u8).unwrap_or(0);
                let report = build_report(&trace, checks);
                if let Some(dir) = &dir {
                    std::fs::create_dir_all(dir)?;
                    write_trace(&trace, &dir.join(format!("trace-seed{seed}.jsonl")))?;
                    write_json(&report, &dir.join(format!("report-seed{seed}.json")))?;
                }
                Ok((seed, report, code))
            })
            .collect();
        let mut reports = Vec::new();
        let mut worst = 0u8;
        for r in results {
            let (seed, report, code) = r?;
            if code != 0 {
                eprintln!("seed {seed}: exit {code}");
            }
            worst = worst.max(code);
            reports.push(report);
        }
        let agg = aggregate(&reports).ok_or_else(|| anyhow!("no runs"))?;
        println!("{}", serde_json::to_string_pretty(&agg)?);
        if let Some(dir) = &dir {
            write_json(&agg, &dir.join("aggregate.json"))?;
        }
        return Ok(worst);
    }

    let trace = run(&cfg).map_err(|e| anyhow!("{e}"))?;
    let checks = if args.check { Some(check_all(&trace, args.bruteforce_cap)?) } else { None };
    let code = checks.as_ref().map(|c| c.exit_code() as u8).unwrap_or(0);
    if let Some(c) = &checks {
        print_check_report(c);
    }
    let report = build_report(&trace, checks);
    let trace_path = args.out.clone().or_else(|| dir.as_ref().map(|d| d.join("trace.jsonl")));
    if let Some(path) = &trace_path {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        write_trace(&trace, path)?;
        eprintln!("trace: {}", path.display());
    }
    if let Some(path) = &args.report {
        write_json(&report, path)?;
    } else {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    Ok(code)
}

fn cmd_check(args: CheckArgs) -> Result<u8> {
    let f = File::open(&args.trace).with_context(|| format!("opening {}", args.trace.display()))?;
    let trace = Trace::read_jsonl(BufReader::new(f))?;
    trace.validate().map_err(|e| anyhow!("malformed trace: {e}"))?;

    let report = check_all(&trace, args.bruteforce_cap)?;
    let pick_all = args.all || (!args.atomicity && !args.liveness && !args.model);

    let mut verdicts: Vec<(&str, &Verdict)> = Vec::new();
    if pick_all || args.model {
        verdicts.extend([
            ("churn window", &report.schedule_window),
            ("failure fraction", &report.schedule_delta),
            ("size floor", &report.schedule_floor),
            ("signal uniqueness", &report.schedule_uniqueness),
            ("counting bounds", &report.counting_bounds),
            ("active witness", &report.active_witness),
            ("view bands", &report.view_bands),
        ]);
    }
    if pick_all || args.liveness {
        verdicts.extend([
            ("join liveness", &report.join_liveness),
            ("op liveness", &report.op_liveness),
        ]);
    }
    if pick_all || args.atomicity {
        verdicts.extend([
            ("atomicity (witness)", &report.atomicity_witness),
            ("atomicity (exhaustive)", &report.atomicity_bruteforce),
        ]);
    }
    let mut code = 0u8;
    for (name, v) in &verdicts {
        println!("{}", verdict_line(name, v));
        match v {
            Verdict::Pass => {}
            Verdict::Fail { .. } => code = 2,
            Verdict::NotChecked { .. } => {
                if code == 0 {
                    code = 3;
                }
            }
        }
    }
    Ok(code)
}

fn cmd_replay(args: ReplayArgs) -> Result<u8> {
    let f = File::open(&args.trace).with_context(|| format!("opening {}", args.trace.display()))?;
    let trace = Trace::read_jsonl(BufReader::new(f))?;
    match replay(&trace) {
        Ok(regen) => {
            if let Some(path) = &args.out {
                write_trace(&regen, path)?;
            }
            println!("replay: fixed point over {} records", regen.records.len());
            Ok(0)
        }
        Err(e) => {
            eprintln!("replay: {e}");
            Ok(2)
        }
    }
}

fn histogram_csv(samples: &[f64], bin_width: f64) -> String {
    let mut out = String::from("bin_lo_d,bin_hi_d,count\n");
    if samples.is_empty() {
        return out;
    }
    let max = samples.iter().cloned().fold(0.0f64, f64::max);
    let bins = ((max / bin_width).ceil() as usize + 1).max(1);
    let mut counts = vec![0u64; bins];
    for &s in samples {
        let idx = ((s / bin_width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    for (i, c) in counts.iter().enumerate() {
        out.push_str(&format!("{:.2},{:.2},{}\n", i as f64 * bin_width, (i + 1) as f64 * bin_width, c));
    }
    out
}

fn cmd_report(args: ReportArgs) -> Result<u8> {
    let mut reports = Vec::new();
    for path in &args.inputs {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let r: RunReport = serde_json::from_reader(BufReader::new(f))
            .with_context(|| format!("parsing {}", path.display()))?;
        reports.push(r);
    }
    let agg = aggregate(&reports).ok_or_else(|| anyhow!("no input reports"))?;
    println!(
        "runs: {}  ops: {}/{} completed  entrants joined: {}/{}",
        agg.runs,
        agg.counts.ops_completed,
        agg.counts.ops_invoked,
        agg.counts.joined_entrants,
        agg.counts.entered
    );
    println!("{:<14} {:>8} {:>8} {:>8} {:>8}", "latency (D)", "count", "min", "median", "max");
    for (name, s) in [
        ("join", &agg.join_latency),
        ("read phase", &agg.read_phase_latency),
        ("write phase", &agg.write_phase_latency),
        ("operation", &agg.op_latency),
    ] {
        println!(
            "{:<14} {:>8} {:>8.3} {:>8.3} {:>8.3}",
            name, s.count, s.min_d, s.median_d, s.max_d
        );
    }
    if let Some(u) = agg.max_churn_utilization {
        println!("max churn utilization: {u:.3}");
    }
    if agg.check_failures + agg.check_incomplete > 0 {
        println!(
            "checks: {} failed, {} incomplete",
            agg.check_failures, agg.check_incomplete
        );
    }
    if let Some(path) = &args.out {
        write_json(&agg, path)?;
    }
    if let Some(dir) = &args.csv_dir {
        std::fs::create_dir_all(dir)?;
        let joins: Vec<f64> = reports.iter().filter(|r| r.join_latency.count > 0).map(|r| r.join_latency.median_d).collect();
        let ops: Vec<f64> = reports.iter().filter(|r| r.op_latency.count > 0).map(|r| r.op_latency.median_d).collect();
        std::fs::write(dir.join("join_latency_hist.csv"), histogram_csv(&joins, 0.1))?;
        std::fs::write(dir.join("op_latency_hist.csv"), histogram_csv(&ops, 0.1))?;
        let mut scatter = String::from("churn_utilization,median_op_latency_d\n");
        for r in &reports {
            if let Some(u) = r.churn_utilization {
                scatter.push_str(&format!("{:.4},{:.4}\n", u, r.op_latency.median_d));
            }
        }
        std::fs::write(dir.join("latency_vs_churn.csv"), scatter)?;
        eprintln!("csv data: {}", dir.display());
    }
    Ok(0)
}
