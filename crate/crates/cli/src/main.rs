//! Command line driver: generate traces, replay policies, compare them,
//! sweep parameters, and audit the amortized-cost bounds. Every output is
//! CSV (or NDJSON for traces); plotting is left to external scripts.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 integrity or
//! audit failure.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use partsim_core::config::{presets, WorkloadConfig};
use partsim_core::harness::{
    self, PolicyKind, RunOptions, RunReport, DD_DEFAULT_CAP, DD_DEFAULT_THRESHOLD,
};
use partsim_core::potential::{
    audit_trace, random_trace, stacked_pool_trace, AuditReport, C_AUDIT, C_TOTAL,
};
use partsim_core::workload::{generate_trace, write_trace_ndjson};
use partsim_core::{Result, SimError};

#[derive(Parser)]
#[command(name = "partsim", version, about = "Micro-partition reclustering simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a config's deterministic ingest/query trace as NDJSON.
    Generate {
        /// Config JSON path, or a preset name (dynamic, stable, two-population).
        config: String,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Override the config's random seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay one policy over a config and write per-batch metrics CSV.
    Run {
        config: String,
        /// Policy name (NR, QD, NN, DD, WAIR, WAIR-fixed-key,
        /// WAIR-fixed-window, GREEDY, GREEDY-ADJUSTED, ORACLE-SORTED).
        #[arg(long)]
        policy: String,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Also write the policy's decision log CSV here.
        #[arg(long)]
        decisions: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Plan reclustering after every query instead of once per batch.
        #[arg(long)]
        per_query: bool,
        /// Depth threshold for the DD policy.
        #[arg(long, default_value_t = DD_DEFAULT_THRESHOLD)]
        dd_threshold: usize,
        /// Per-batch partition cap for the DD policy.
        #[arg(long, default_value_t = DD_DEFAULT_CAP)]
        dd_cap: usize,
    },
    /// Replay several policies over one config; write metrics, summary and
    /// decision CSVs into a directory.
    Compare {
        config: String,
        /// Comma-separated policy names.
        #[arg(long, value_delimiter = ',', required = true)]
        policies: Vec<String>,
        /// Output directory (created if missing).
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        per_query: bool,
        /// Grid-search DD so its recluster spend matches WAIR's within 10%.
        #[arg(long)]
        budget_matched_dd: bool,
        #[arg(long, default_value_t = DD_DEFAULT_THRESHOLD)]
        dd_threshold: usize,
        #[arg(long, default_value_t = DD_DEFAULT_CAP)]
        dd_cap: usize,
    },
    /// Vary one parameter over a value list and write the sensitivity
    /// matrix CSV into a directory.
    Sweep {
        config: String,
        /// Parameter: start_batch, shifting_rate, skewness,
        /// predicate_columns_per_query, selectivity.
        #[arg(long)]
        param: String,
        /// Comma-separated values; distributions for skewness
        /// (e.g. uniform,zipf:1.5,gauss:2), numbers otherwise.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        policies: Vec<String>,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Audit the greedy cost bounds over a config's workload (or over
    /// random traces) and write per-step rows; exits 2 on any violation.
    Audit {
        config: String,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Audit this many random traces plus an adversarial stacked pool
        /// instead of the config's workload.
        #[arg(long)]
        random: Option<usize>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                let _ = e.print();
                std::process::exit(1);
            }
            let _ = e.print();
            std::process::exit(0);
        }
    };
    match dispatch(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                SimError::Integrity(_) | SimError::Audit(_) => 2,
                _ => 1,
            };
            std::process::exit(code);
        }
    }
}

/// Resolve the config argument: an existing JSON file wins, otherwise a
/// preset name; `--seed` overrides either.
fn load_config(spec: &str, seed: Option<u64>) -> Result<WorkloadConfig> {
    let path = Path::new(spec);
    let mut cfg = if path.exists() {
        WorkloadConfig::from_path(path)?
    } else {
        presets::by_name(spec, 0).map_err(|_| {
            SimError::Config(format!(
                "'{spec}' is neither a config file nor a preset \
                 (dynamic, stable, two-population)"
            ))
        })?
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(fs::File::create(path)?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn parse_policies(names: &[String], dd_threshold: usize, dd_cap: usize) -> Result<Vec<PolicyKind>> {
    let mut kinds = Vec::new();
    for name in names {
        let mut kind = PolicyKind::parse(name)?;
        if let PolicyKind::Dd { .. } = kind {
            kind = PolicyKind::Dd { threshold: dd_threshold, cap: dd_cap };
        }
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        return Err(SimError::Usage("no policies given".into()));
    }
    Ok(kinds)
}

fn decisions_file_name(policy: &str) -> String {
    format!("decisions-{}.csv", policy.to_ascii_lowercase())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Generate { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            let trace = generate_trace(&cfg)?;
            let mut w = sink(&out)?;
            write_trace_ndjson(&trace, &mut w)?;
            w.flush()?;
            Ok(())
        }
        Cmd::Run { config, policy, out, decisions, seed, per_query, dd_threshold, dd_cap } => {
            let cfg = load_config(&config, seed)?;
            let mut kind = PolicyKind::parse(&policy)?;
            if let PolicyKind::Dd { .. } = kind {
                kind = PolicyKind::Dd { threshold: dd_threshold, cap: dd_cap };
            }
            let opts = RunOptions { per_query_wair: per_query, ..RunOptions::default() };
            let report = harness::run(&cfg, kind, &opts)?;
            let mut w = sink(&out)?;
            harness::write_metrics_csv(&[&report], &mut w)?;
            w.flush()?;
            if let Some(path) = decisions {
                let mut w = BufWriter::new(fs::File::create(path)?);
                harness::write_decisions_csv(&report, &mut w)?;
                w.flush()?;
            }
            Ok(())
        }
        Cmd::Compare {
            config,
            policies,
            out,
            seed,
            per_query,
            budget_matched_dd,
            dd_threshold,
            dd_cap,
        } => {
            let cfg = load_config(&config, seed)?;
            let mut kinds = parse_policies(&policies, dd_threshold, dd_cap)?;
            let opts = RunOptions { per_query_wair: per_query, ..RunOptions::default() };
            if budget_matched_dd {
                let wair = harness::run(&cfg, PolicyKind::Wair, &opts)?;
                let (threshold, cap, _) =
                    harness::budget_matched_dd(&cfg, wair.total_recluster_cost, &opts)?;
                eprintln!(
                    "budget-matched DD: threshold={threshold} cap={cap} \
                     (target recluster cost {:.0})",
                    wair.total_recluster_cost
                );
                let matched = PolicyKind::Dd { threshold, cap };
                match kinds.iter_mut().find(|k| matches!(k, PolicyKind::Dd { .. })) {
                    Some(slot) => *slot = matched,
                    None => kinds.push(matched),
                }
            }
            let report = harness::compare(&cfg, &kinds, &opts)?;
            fs::create_dir_all(&out)?;
            let refs: Vec<&RunReport> = report.runs.iter().collect();
            let mut w = BufWriter::new(fs::File::create(out.join("metrics.csv"))?);
            harness::write_metrics_csv(&refs, &mut w)?;
            w.flush()?;
            let mut w = BufWriter::new(fs::File::create(out.join("summary.csv"))?);
            harness::write_summary_csv(&report, &mut w)?;
            w.flush()?;
            for run in &report.runs {
                if run.decisions.is_empty() {
                    continue;
                }
                let name = decisions_file_name(run.policy);
                let mut w = BufWriter::new(fs::File::create(out.join(name))?);
                harness::write_decisions_csv(run, &mut w)?;
                w.flush()?;
            }
            Ok(())
        }
        Cmd::Sweep { config, param, values, policies, out, seed } => {
            let cfg = load_config(&config, seed)?;
            let kinds = parse_policies(&policies, DD_DEFAULT_THRESHOLD, DD_DEFAULT_CAP)?;
            let cells = harness::sweep(&cfg, &param, &values, &kinds, &RunOptions::default())?;
            fs::create_dir_all(&out)?;
            let mut w = BufWriter::new(fs::File::create(out.join("sweep.csv"))?);
            harness::write_sweep_csv(&cells, &mut w)?;
            w.flush()?;
            Ok(())
        }
        Cmd::Audit { config, out, seed, random } => {
            let cfg = load_config(&config, seed)?;
            match random {
                None => {
                    let outcome = harness::audit_workload(&cfg)?;
                    let mut w = sink(&out)?;
                    harness::write_audit_csv(&outcome.report, &mut w)?;
                    w.flush()?;
                    for v in &outcome.adjusted_violations {
                        eprintln!("adjusted-greedy violation: {v}");
                    }
                    if !outcome.ok() {
                        for v in &outcome.report.violations {
                            eprintln!("bound violation: {v}");
                        }
                        return Err(SimError::Audit(format!(
                            "{} per-step violations, {} adjusted-greedy violations",
                            outcome.report.violations.len(),
                            outcome.adjusted_violations.len()
                        )));
                    }
                    eprintln!(
                        "audit ok: {} steps, max step ratio {:.3}, total ratio {:.3}, \
                         held {}/{} partitions",
                        outcome.report.steps.len(),
                        outcome.report.step_ratio(),
                        outcome.report.total_ratio(),
                        outcome.max_held,
                        outcome.k_max
                    );
                    Ok(())
                }
                Some(n) => {
                    let mut reports: Vec<AuditReport> = Vec::with_capacity(n + 1);
                    for i in 0..n as u64 {
                        let trace = random_trace(cfg.seed.wrapping_add(i), 200, 100, 16);
                        reports.push(audit_trace(&trace, C_AUDIT, C_TOTAL)?);
                    }
                    let pool = stacked_pool_trace(cfg.seed, 64, 50, 16);
                    reports.push(audit_trace(&pool, C_AUDIT, C_TOTAL)?);
                    let mut w = sink(&out)?;
                    let mut violations = 0usize;
                    for r in &reports {
                        violations += r.violations.len();
                    }
                    for (i, r) in reports.iter().enumerate() {
                        if i == 0 {
                            harness::write_audit_csv(r, &mut w)?;
                        } else {
                            // Skip the repeated header on concatenation.
                            let mut buf = Vec::new();
                            harness::write_audit_csv(r, &mut buf)?;
                            let text = String::from_utf8_lossy(&buf);
                            for line in text.lines().skip(1) {
                                writeln!(w, "{line}")?;
                            }
                        }
                    }
                    w.flush()?;
                    if violations > 0 {
                        return Err(SimError::Audit(format!(
                            "{violations} per-step violations across {} traces",
                            reports.len()
                        )));
                    }
                    eprintln!("audit ok: {} traces, zero violations", reports.len());
                    Ok(())
                }
            }
        }
    }
}
