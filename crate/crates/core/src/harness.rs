//! Experiment harness: the per-batch ingest/query/recluster loop, policy
//! drivers, metric aggregation, comparisons, sweeps, and bound audits.
//!
//! Every policy replays the identical deterministic trace for a config, so
//! runs differ only in their reclustering behavior. Per-batch metrics roll
//! up into a run report carrying totals, the workload-aware policy's
//! decision log, and an end-of-run content-conservation check.

use std::collections::{BTreeSet, HashSet};
use std::io::Write;

use crate::baselines::{dd_batch, nn_batch, qd_rebuild};
use crate::config::WorkloadConfig;
use crate::greedy::{greedy_query_step, recluster_set, AdjustedGreedy, SortCostModel};
use crate::hybrid::{assign_layouts, compute_signatures, recluster_hybrid, HybridParams};
use crate::policy::{Policy, PolicyConfig, ReclusterPlan};
use crate::potential::{audit_trace, AuditOp, AuditReport, AuditTrace, C_AUDIT, C_TOTAL};
use crate::query::{execute, QueryStats, RangeQuery, ScanConfig};
use crate::table::{ContentDigest, PartitionId, Table};
use crate::workload::{gen_batch_rows, gen_query_mix};
use crate::{Result, SimError};

/// The comparison policies the harness can drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// Never recluster.
    Nr,
    /// Rebuild the whole table through a query-driven tree at period starts.
    Qd,
    /// Sort each batch's new partitions by the period oracle key.
    Nn,
    /// Depth-driven maintenance under a per-batch budget.
    Dd { threshold: usize, cap: usize },
    /// Workload-aware reclustering with hybrid layouts.
    Wair,
    /// Workload-aware gating, but always sorting on one fixed key.
    WairFixedKey,
    /// Workload-aware with the window frozen at its initial size.
    WairFixedWindow,
    /// Boundary greedy on the period oracle key after every query.
    Greedy,
    /// Boundary greedy with memory cap, warm-start budget and key
    /// reselection.
    GreedyAdjusted,
    /// Clairvoyant baseline: fully sorted before each batch's queries at
    /// zero charged cost; the optimality-gap denominator.
    OracleSorted,
}

pub const DD_DEFAULT_THRESHOLD: usize = 4;
pub const DD_DEFAULT_CAP: usize = 8;

impl PolicyKind {
    /// Case-insensitive name lookup; hyphens and underscores are equal.
    pub fn parse(name: &str) -> Result<PolicyKind> {
        match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "nr" => Ok(PolicyKind::Nr),
            "qd" => Ok(PolicyKind::Qd),
            "nn" => Ok(PolicyKind::Nn),
            "dd" => Ok(PolicyKind::Dd {
                threshold: DD_DEFAULT_THRESHOLD,
                cap: DD_DEFAULT_CAP,
            }),
            "wair" => Ok(PolicyKind::Wair),
            "wair-fixed-key" => Ok(PolicyKind::WairFixedKey),
            "wair-fixed-window" => Ok(PolicyKind::WairFixedWindow),
            "greedy" => Ok(PolicyKind::Greedy),
            "greedy-adjusted" => Ok(PolicyKind::GreedyAdjusted),
            "oracle-sorted" => Ok(PolicyKind::OracleSorted),
            other => Err(SimError::Config(format!("unknown policy '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Nr => "NR",
            PolicyKind::Qd => "QD",
            PolicyKind::Nn => "NN",
            PolicyKind::Dd { .. } => "DD",
            PolicyKind::Wair => "WAIR",
            PolicyKind::WairFixedKey => "WAIR-fixed-key",
            PolicyKind::WairFixedWindow => "WAIR-fixed-window",
            PolicyKind::Greedy => "GREEDY",
            PolicyKind::GreedyAdjusted => "GREEDY-ADJUSTED",
            PolicyKind::OracleSorted => "ORACLE-SORTED",
        }
    }
}

/// Knobs shared by every run; defaults mirror the documented policy
/// defaults.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub scan: ScanConfig,
    /// Workload-aware policy configuration (window sizes, cost mode).
    pub wair: PolicyConfig,
    /// Plan after every query instead of once per batch.
    pub per_query_wair: bool,
    pub hybrid: HybridParams,
}

/// One row of the shared per-batch metrics CSV.
#[derive(Debug, Clone)]
pub struct BatchMetrics {
    pub batch: u32,
    pub policy: &'static str,
    pub query_cost: f64,
    pub recluster_cost: f64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub mean_pruning_rate: f64,
    pub partitions_total: usize,
    pub snapshot_id: u64,
}

/// One row of the workload-aware decision log.
#[derive(Debug, Clone)]
pub struct DecisionRecord {
    pub batch: u32,
    /// Queries observed so far when the plan was made.
    pub query_seq: u64,
    pub decision: &'static str,
    pub cut: usize,
    pub est_cost: f64,
    pub est_savings: f64,
    pub w: usize,
    pub credit: f64,
}

/// Everything one policy run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub policy: &'static str,
    pub batches: Vec<BatchMetrics>,
    pub total_query_cost: f64,
    pub total_recluster_cost: f64,
    pub total_bytes_read: u64,
    pub total_bytes_written: u64,
    /// Mean over batches that issued queries of the batch-mean pruning rate.
    pub mean_pruning_rate: f64,
    /// Sum of matched bytes over all queries; equal across policies on the
    /// same trace because layout never changes results.
    pub total_bytes_matched: u64,
    /// Plan log; empty for policies without a planner.
    pub decisions: Vec<DecisionRecord>,
}

impl RunReport {
    pub fn total_cost(&self) -> f64 {
        self.total_query_cost + self.total_recluster_cost
    }
}

/// How a workload-aware run turns a chosen candidate set into a rewrite.
enum WairLayout {
    Hybrid,
    FixedKey(usize),
}

enum Driver {
    Nr,
    Qd,
    Nn,
    Dd { threshold: usize, cap: usize },
    Wair { policy: Box<Policy>, layout: WairLayout },
    Greedy,
    GreedyAdjusted { state: Option<AdjustedGreedy> },
    Oracle,
}

fn first_query_period(cfg: &WorkloadConfig) -> usize {
    cfg.initial_pool_periods as usize
}

/// Key a clairvoyant fixed-key policy would commit to before the run: the
/// oracle key of the first querying period. It cannot adapt afterwards.
fn fixed_key(cfg: &WorkloadConfig) -> usize {
    cfg.periods[first_query_period(cfg)].effective_oracle_key()
}

struct BatchTotals {
    recluster_cost: f64,
    bytes_read: u64,
    bytes_written: u64,
}

/// Plan with the workload-aware policy and, on go, rewrite the chosen
/// partitions under the configured layout family.
#[allow(clippy::too_many_arguments)]
fn wair_plan_and_execute(
    table: &mut Table,
    policy: &mut Policy,
    layout: &WairLayout,
    model: &SortCostModel,
    opts: &RunOptions,
    batch: u32,
    query_seq: u64,
    decisions: &mut Vec<DecisionRecord>,
    totals: &mut BatchTotals,
) -> Result<()> {
    let plan: ReclusterPlan = policy.plan(table, model)?;
    decisions.push(DecisionRecord {
        batch,
        query_seq,
        decision: plan.decision.label(),
        cut: plan.cut,
        est_cost: plan.est_cost,
        est_savings: plan.est_savings,
        w: policy.window.w(),
        credit: policy.ledger.credit(),
    });
    if !plan.decision.is_go() {
        return Ok(());
    }
    let chosen = plan.chosen();
    let dims = table.dims();
    let mut replaced = Vec::with_capacity(chosen.len());
    for &p in &chosen {
        let part = table.partition(p)?;
        let ranges: Vec<(i64, i64)> = (0..dims).map(|c| part.zonemap().range(c)).collect();
        replaced.push((ranges, part.rows()));
    }
    let base = table.newest_snapshot();
    let outcome = match layout {
        WairLayout::FixedKey(key) => recluster_set(table, base, *key, &chosen, model, batch)?,
        WairLayout::Hybrid => {
            let set: BTreeSet<PartitionId> = chosen.iter().copied().collect();
            let signatures = compute_signatures(&policy.window, &set, dims);
            let assignments = assign_layouts(&signatures, dims, &opts.hybrid);
            let window_queries: Vec<RangeQuery> =
                policy.window.entries().map(|e| e.query.clone()).collect();
            recluster_hybrid(
                table,
                base,
                &assignments,
                &window_queries,
                model,
                &opts.hybrid,
                batch,
            )?
        }
    };
    if outcome.outputs.is_empty() {
        // Every chosen partition fell out during layout assignment; nothing
        // was rewritten, so nothing is charged or measured.
        return Ok(());
    }
    totals.recluster_cost += outcome.cost;
    totals.bytes_read += outcome.bytes_read;
    totals.bytes_written += outcome.bytes_written;
    let outputs: HashSet<PartitionId> = outcome.outputs.iter().copied().collect();
    policy.note_execution(&plan, outcome.cost, replaced, outputs)?;
    Ok(())
}

/// Replay one policy over the config's trace.
pub fn run(cfg: &WorkloadConfig, kind: PolicyKind, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let mut table = Table::new(cfg.columns, cfg.partition_capacity)?;
    let model = SortCostModel::for_capacity(cfg.partition_capacity);
    let mut expected = ContentDigest::empty(cfg.columns);

    let mut driver = match kind {
        PolicyKind::Nr => Driver::Nr,
        PolicyKind::Qd => Driver::Qd,
        PolicyKind::Nn => Driver::Nn,
        PolicyKind::Dd { threshold, cap } => Driver::Dd { threshold, cap },
        PolicyKind::Wair | PolicyKind::WairFixedKey | PolicyKind::WairFixedWindow => {
            let mut pc = opts.wair.clone();
            if kind == PolicyKind::WairFixedWindow {
                pc.adaptive_window = false;
            }
            let layout = if kind == PolicyKind::WairFixedKey {
                WairLayout::FixedKey(fixed_key(cfg))
            } else {
                WairLayout::Hybrid
            };
            Driver::Wair { policy: Box::new(Policy::new(pc)), layout }
        }
        PolicyKind::Greedy => Driver::Greedy,
        PolicyKind::GreedyAdjusted => Driver::GreedyAdjusted { state: None },
        PolicyKind::OracleSorted => Driver::Oracle,
    };

    let mut batches = Vec::with_capacity(cfg.total_batches() as usize);
    let mut decisions = Vec::new();
    let mut prev_mix: Option<Vec<RangeQuery>> = None;
    let mut period_queries: Vec<RangeQuery> = Vec::new();
    let mut query_seq: u64 = 0;
    let mut rate_sum = 0.0;
    let mut rate_batches = 0usize;
    let mut bytes_matched: u64 = 0;

    for batch in 0..cfg.total_batches() {
        let period = cfg.period_of(batch);
        let period_start = batch % cfg.batches_per_period == 0;
        let may_recluster = batch >= cfg.recluster_start_batch;
        let oracle_key = cfg.periods[period].effective_oracle_key();
        let mut totals = BatchTotals { recluster_cost: 0.0, bytes_read: 0, bytes_written: 0 };

        if period_start && batch > 0 {
            let prev_period = std::mem::take(&mut period_queries);
            // The periodic rebuilder rewrites the whole table from the
            // previous period's queries before the new period begins.
            if let Driver::Qd = driver {
                if may_recluster && !prev_period.is_empty() {
                    let base = table.newest_snapshot();
                    let out = qd_rebuild(&mut table, base, &prev_period, &model, batch)?;
                    totals.recluster_cost += out.cost;
                    totals.bytes_read += out.bytes_read;
                    totals.bytes_written += out.bytes_written;
                }
            }
        }

        let rows = gen_batch_rows(cfg, batch);
        for r in &rows {
            expected.add_row(r);
        }
        let before: HashSet<PartitionId> = if matches!(driver, Driver::Nn) {
            table.snapshot_partitions(table.newest_snapshot())?.iter().copied().collect()
        } else {
            HashSet::new()
        };
        let after_ingest = table.ingest_batch(&rows, batch)?;
        let new_parts: Vec<PartitionId> = if matches!(driver, Driver::Nn) {
            table
                .snapshot_partitions(after_ingest)?
                .iter()
                .copied()
                .filter(|p| !before.contains(p))
                .collect()
        } else {
            Vec::new()
        };

        // The clairvoyant baseline queries a perfectly sorted table and is
        // charged nothing for the privilege.
        if let Driver::Oracle = driver {
            let base = table.newest_snapshot();
            let ids = table.snapshot_partitions(base)?.to_vec();
            recluster_set(&mut table, base, oracle_key, &ids, &model, batch)?;
        }

        let mix = gen_query_mix(cfg, batch, prev_mix.as_deref())?;
        let mut query_cost = 0.0;
        let mut query_bytes: u64 = 0;
        let mut rates = Vec::with_capacity(mix.len());
        for q in &mix {
            let snapshot = table.newest_snapshot();
            let (_, stats): (_, QueryStats) = execute(&table, snapshot, q, &opts.scan)?;
            query_cost += stats.cost;
            query_bytes += stats.bytes_read;
            bytes_matched += stats.bytes_matched;
            rates.push(stats.pruning_rate());
            query_seq += 1;

            match &mut driver {
                Driver::Greedy => {
                    if may_recluster && q.predicate_on(oracle_key).is_some() {
                        let out = greedy_query_step(&mut table, oracle_key, q, &model, batch)?;
                        totals.recluster_cost += out.cost;
                        totals.bytes_read += out.bytes_read;
                        totals.bytes_written += out.bytes_written;
                    }
                }
                Driver::GreedyAdjusted { state } => {
                    if may_recluster {
                        let ag = state
                            .get_or_insert_with(|| AdjustedGreedy::new(&table, fixed_key(cfg)));
                        let out = ag.step(&mut table, q, &stats, &model, batch)?;
                        totals.recluster_cost += out.cost;
                        totals.bytes_read += out.bytes_read;
                        totals.bytes_written += out.bytes_written;
                    }
                }
                Driver::Wair { policy, layout } => {
                    policy.observe_query(q, &stats);
                    if opts.per_query_wair && may_recluster {
                        wair_plan_and_execute(
                            &mut table,
                            policy,
                            layout,
                            &model,
                            opts,
                            batch,
                            query_seq,
                            &mut decisions,
                            &mut totals,
                        )?;
                    }
                }
                _ => {}
            }
        }
        period_queries.extend(mix.iter().cloned());

        // End-of-batch reclustering phase.
        if may_recluster {
            match &mut driver {
                Driver::Nn => {
                    let base = table.newest_snapshot();
                    let out = nn_batch(&mut table, base, &new_parts, oracle_key, &model, batch)?;
                    totals.recluster_cost += out.cost;
                    totals.bytes_read += out.bytes_read;
                    totals.bytes_written += out.bytes_written;
                }
                Driver::Dd { threshold, cap } => {
                    let base = table.newest_snapshot();
                    let out =
                        dd_batch(&mut table, base, oracle_key, *threshold, *cap, &model, batch)?;
                    totals.recluster_cost += out.cost;
                    totals.bytes_read += out.bytes_read;
                    totals.bytes_written += out.bytes_written;
                }
                Driver::Wair { policy, layout } => {
                    if !opts.per_query_wair {
                        wair_plan_and_execute(
                            &mut table,
                            policy,
                            layout,
                            &model,
                            opts,
                            batch,
                            query_seq,
                            &mut decisions,
                            &mut totals,
                        )?;
                    }
                }
                _ => {}
            }
        }

        table.gc_snapshots();
        let newest = table.newest_snapshot();
        let mean_rate = if rates.is_empty() {
            0.0
        } else {
            rates.iter().sum::<f64>() / rates.len() as f64
        };
        if !rates.is_empty() {
            rate_sum += mean_rate;
            rate_batches += 1;
        }
        batches.push(BatchMetrics {
            batch,
            policy: kind.name(),
            query_cost,
            recluster_cost: totals.recluster_cost,
            bytes_read: query_bytes + totals.bytes_read,
            bytes_written: totals.bytes_written,
            mean_pruning_rate: mean_rate,
            partitions_total: table.snapshot_partitions(newest)?.len(),
            snapshot_id: newest.0,
        });
        prev_mix = Some(mix);
    }

    let newest = table.newest_snapshot();
    if table.content_digest(newest)? != expected {
        return Err(SimError::Integrity(format!(
            "policy {} lost or invented rows: newest snapshot digest differs from ingests",
            kind.name()
        )));
    }

    Ok(RunReport {
        policy: kind.name(),
        total_query_cost: batches.iter().map(|b| b.query_cost).sum(),
        total_recluster_cost: batches.iter().map(|b| b.recluster_cost).sum(),
        total_bytes_read: batches.iter().map(|b| b.bytes_read).sum(),
        total_bytes_written: batches.iter().map(|b| b.bytes_written).sum(),
        mean_pruning_rate: if rate_batches == 0 { 0.0 } else { rate_sum / rate_batches as f64 },
        total_bytes_matched: bytes_matched,
        decisions,
        batches,
    })
}

/// Per-policy roll-up of a comparison.
#[derive(Debug, Clone)]
pub struct PolicySummary {
    pub policy: &'static str,
    pub total_query_cost: f64,
    pub total_recluster_cost: f64,
    pub total_cost: f64,
    pub mean_pruning_rate: f64,
    /// NR total over this policy's total; exactly 1 for NR itself.
    pub speedup_vs_nr: Option<f64>,
    /// This policy's total over the clairvoyant baseline's total.
    pub gap_vs_oracle: Option<f64>,
}

#[derive(Debug)]
pub struct CompareReport {
    pub runs: Vec<RunReport>,
    pub summary: Vec<PolicySummary>,
}

/// Run each policy over the same trace and summarize.
pub fn compare(
    cfg: &WorkloadConfig,
    kinds: &[PolicyKind],
    opts: &RunOptions,
) -> Result<CompareReport> {
    let runs: Vec<RunReport> =
        kinds.iter().map(|&k| run(cfg, k, opts)).collect::<Result<_>>()?;
    let nr_total = runs
        .iter()
        .find(|r| r.policy == "NR")
        .map(|r| r.total_cost());
    let oracle_total = runs
        .iter()
        .find(|r| r.policy == "ORACLE-SORTED")
        .map(|r| r.total_cost());
    let summary = runs
        .iter()
        .map(|r| PolicySummary {
            policy: r.policy,
            total_query_cost: r.total_query_cost,
            total_recluster_cost: r.total_recluster_cost,
            total_cost: r.total_cost(),
            mean_pruning_rate: r.mean_pruning_rate,
            speedup_vs_nr: nr_total.map(|nr| nr / r.total_cost()),
            gap_vs_oracle: oracle_total.map(|oracle| r.total_cost() / oracle),
        })
        .collect();
    Ok(CompareReport { runs, summary })
}

pub const DD_THRESHOLD_GRID: [usize; 4] = [2, 4, 8, 16];
pub const DD_CAP_GRID: [usize; 7] = [2, 4, 8, 16, 32, 64, 128];

/// Grid-search depth-driven maintenance so its total recluster cost lands
/// within ±10% of `target`; among qualifying cells the cheapest total cost
/// wins. If no cell qualifies, the nearest recluster cost wins. For a fixed
/// threshold the spend grows with the cap, so caps past the first overshoot
/// are skipped.
pub fn budget_matched_dd(
    cfg: &WorkloadConfig,
    target: f64,
    opts: &RunOptions,
) -> Result<(usize, usize, RunReport)> {
    let mut qualifying: Option<(f64, usize, usize, RunReport)> = None;
    let mut nearest: Option<(f64, usize, usize, RunReport)> = None;
    for &threshold in &DD_THRESHOLD_GRID {
        for &cap in &DD_CAP_GRID {
            let report = run(cfg, PolicyKind::Dd { threshold, cap }, opts)?;
            let spent = report.total_recluster_cost;
            let distance = (spent - target).abs();
            let within = target <= 0.0 || distance <= 0.10 * target;
            if within {
                let total = report.total_cost();
                if qualifying.as_ref().is_none_or(|(best, ..)| total < *best) {
                    qualifying = Some((total, threshold, cap, report));
                }
            } else {
                if nearest.as_ref().is_none_or(|(best, ..)| distance < *best) {
                    nearest = Some((distance, threshold, cap, report));
                }
                if spent > 1.10 * target {
                    break;
                }
            }
        }
    }
    let (_, threshold, cap, report) = qualifying
        .or(nearest)
        .ok_or_else(|| SimError::Usage("empty depth-driven search grid".into()))?;
    Ok((threshold, cap, report))
}

/// One cell of a sensitivity sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub parameter: String,
    pub value: String,
    pub policy: &'static str,
    pub mean_pruning_rate: f64,
    pub total_cost: f64,
}

/// Vary one parameter across `values`, running every policy per value.
pub fn sweep(
    cfg: &WorkloadConfig,
    parameter: &str,
    values: &[String],
    kinds: &[PolicyKind],
    opts: &RunOptions,
) -> Result<Vec<SweepCell>> {
    let mut cells = Vec::new();
    for (label, swept) in crate::config::sweep_config(cfg, parameter, values)? {
        for &kind in kinds {
            let report = run(&swept, kind, opts)?;
            cells.push(SweepCell {
                parameter: parameter.to_string(),
                value: label.clone(),
                policy: report.policy,
                mean_pruning_rate: report.mean_pruning_rate,
                total_cost: report.total_cost(),
            });
        }
    }
    Ok(cells)
}

/// Outcome of the bound audit over one workload.
#[derive(Debug)]
pub struct AuditOutcome {
    /// Per-step audit of the plain greedy replay.
    pub report: AuditReport,
    /// Constraint violations from the adjusted-greedy replay.
    pub adjusted_violations: Vec<String>,
    pub max_held: usize,
    pub k_max: usize,
}

impl AuditOutcome {
    pub fn ok(&self) -> bool {
        self.report.ok() && self.adjusted_violations.is_empty()
    }
}

/// Project a workload onto its audit key: ingest events plus the range
/// queries that predicate on that key.
pub fn workload_audit_trace(cfg: &WorkloadConfig) -> Result<AuditTrace> {
    cfg.validate()?;
    let key = fixed_key(cfg);
    let mut ops = Vec::new();
    let mut prev: Option<Vec<RangeQuery>> = None;
    for batch in 0..cfg.total_batches() {
        ops.push(AuditOp::Ingest(gen_batch_rows(cfg, batch)));
        let mix = gen_query_mix(cfg, batch, prev.as_deref())?;
        for q in &mix {
            if let Some(p) = q.predicate_on(key) {
                ops.push(AuditOp::Query { lo: p.lo, hi: p.hi });
            }
        }
        prev = Some(mix);
    }
    Ok(AuditTrace { dims: cfg.columns, capacity: cfg.partition_capacity, key, ops })
}

/// Audit both greedy variants over the workload: per-rewrite and total cost
/// bounds for the plain greedy, memory and warm-start constraints for the
/// adjusted variant.
pub fn audit_workload(cfg: &WorkloadConfig) -> Result<AuditOutcome> {
    let trace = workload_audit_trace(cfg)?;
    let report = audit_trace(&trace, C_AUDIT, C_TOTAL)?;

    let mut table = Table::new(cfg.columns, cfg.partition_capacity)?;
    let model = SortCostModel::for_capacity(cfg.partition_capacity);
    let scan = ScanConfig::default();
    let mut violations = Vec::new();
    let mut ag: Option<AdjustedGreedy> = None;
    let mut prev: Option<Vec<RangeQuery>> = None;
    for batch in 0..cfg.total_batches() {
        table.ingest_batch(&gen_batch_rows(cfg, batch), batch)?;
        let mix = gen_query_mix(cfg, batch, prev.as_deref())?;
        for q in &mix {
            let snapshot = table.newest_snapshot();
            let (_, stats) = execute(&table, snapshot, q, &scan)?;
            let state = ag.get_or_insert_with(|| AdjustedGreedy::new(&table, fixed_key(cfg)));
            state.step(&mut table, q, &stats, &model, batch)?;
            if state.max_held() > state.k_max() {
                violations.push(format!(
                    "step {}: rewrite held {} partitions, cap {}",
                    state.steps(),
                    state.max_held(),
                    state.k_max()
                ));
            }
            if state.in_warm_phase() {
                let allowed = state.warm_rate() * state.steps() as f64;
                if state.spent() > allowed * (1.0 + 1e-9) {
                    violations.push(format!(
                        "step {}: warm spend {} exceeds budget {}",
                        state.steps(),
                        state.spent(),
                        allowed
                    ));
                }
            }
        }
        table.gc_snapshots();
        prev = Some(mix);
    }
    let (max_held, k_max) = ag.map_or((0, 0), |a| (a.max_held(), a.k_max()));
    Ok(AuditOutcome { report, adjusted_violations: violations, max_held, k_max })
}

/// Exact shared header of the per-batch metrics CSV.
pub const METRICS_CSV_HEADER: &str =
    "batch,policy,query_cost,recluster_cost,bytes_read,bytes_written,mean_pruning_rate,partitions_total,snapshot_id";

/// Write one or more runs' per-batch metrics as CSV.
pub fn write_metrics_csv<W: Write>(runs: &[&RunReport], mut out: W) -> Result<()> {
    writeln!(out, "{METRICS_CSV_HEADER}")?;
    for r in runs {
        for b in &r.batches {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                b.batch,
                b.policy,
                b.query_cost,
                b.recluster_cost,
                b.bytes_read,
                b.bytes_written,
                b.mean_pruning_rate,
                b.partitions_total,
                b.snapshot_id
            )?;
        }
    }
    Ok(())
}

/// Write a run's decision log as CSV.
pub fn write_decisions_csv<W: Write>(report: &RunReport, mut out: W) -> Result<()> {
    writeln!(out, "batch,query_seq,decision,cut,est_cost,est_savings,W,credit")?;
    for d in &report.decisions {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            d.batch, d.query_seq, d.decision, d.cut, d.est_cost, d.est_savings, d.w, d.credit
        )?;
    }
    Ok(())
}

/// Write the per-step audit rows as CSV.
pub fn write_audit_csv<W: Write>(report: &AuditReport, mut out: W) -> Result<()> {
    writeln!(out, "step,op_kind,k,delta_phi,amortized_cost,bound_value")?;
    for s in &report.steps {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            s.step, s.op, s.k, s.delta_phi, s.amortized, s.bound
        )?;
    }
    Ok(())
}

/// Write sweep cells as CSV.
pub fn write_sweep_csv<W: Write>(cells: &[SweepCell], mut out: W) -> Result<()> {
    writeln!(out, "parameter,value,policy,mean_pruning_rate,total_cost")?;
    for c in cells {
        writeln!(
            out,
            "{},{},{},{},{}",
            c.parameter, c.value, c.policy, c.mean_pruning_rate, c.total_cost
        )?;
    }
    Ok(())
}

/// Write the comparison summary as CSV.
pub fn write_summary_csv<W: Write>(report: &CompareReport, mut out: W) -> Result<()> {
    writeln!(
        out,
        "policy,total_query_cost,total_recluster_cost,total_cost,mean_pruning_rate,speedup_vs_nr,gap_vs_oracle"
    )?;
    for s in &report.summary {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.policy,
            s.total_query_cost,
            s.total_recluster_cost,
            s.total_cost,
            s.mean_pruning_rate,
            opt(s.speedup_vs_nr),
            opt(s.gap_vs_oracle)
        )?;
    }
    Ok(())
}
