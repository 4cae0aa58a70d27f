//! Cost-based reclustering policy.
//!
//! The policy watches queries through a sliding window, estimates for every
//! scanned partition how much of its read cost a rewrite would have saved,
//! and periodically plans a reclustering: candidates are ranked by aggregated
//! estimated savings, every prefix cut is evaluated, and the best cut is
//! executed only when estimated savings beat the (scaled) rewrite cost, the
//! window's reclustering debt stays under the cost limit and, when credits
//! are enabled, accumulated credit covers the spend.
//!
//! The window adapts after every completed window of queries that carried
//! savings predictions from an executed rewrite: measured savings above
//! the floored prediction double it, otherwise it halves, clamped to
//! `[w_min, w_max]`. A completed window with nothing under measurement
//! grows instead, aggregating more history until something clears the bar.

use std::collections::{HashMap, HashSet, VecDeque};

use crate::greedy::SortCostModel;
use crate::query::{QueryStats, RangeQuery};
use crate::table::{PartitionId, SnapshotId, Table};
use crate::{Result, SimError};

/// Decision gates: the plain model or the extended one (savings scaling,
/// performance bonus, credit budget).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostMode {
    Standard,
    Extended { alpha: f64, beta: f64, credits: bool, credit_per_query: f64 },
}

impl CostMode {
    fn alpha(&self) -> f64 {
        match self {
            CostMode::Standard => 1.0,
            CostMode::Extended { alpha, .. } => *alpha,
        }
    }

    fn beta(&self) -> f64 {
        match self {
            CostMode::Standard => 0.0,
            CostMode::Extended { beta, .. } => *beta,
        }
    }

    fn credits(&self) -> bool {
        matches!(self, CostMode::Extended { credits: true, .. })
    }

    fn credit_per_query(&self) -> f64 {
        match self {
            CostMode::Standard => 0.0,
            CostMode::Extended { credit_per_query, .. } => *credit_per_query,
        }
    }
}

/// Tunables for the policy.
#[derive(Debug, Clone, Copy)]
pub struct PolicyConfig {
    pub w0: usize,
    pub w_min: usize,
    pub w_max: usize,
    /// Fraction of the window's query cost allowed as outstanding debt.
    pub cost_limit_fraction: f64,
    /// A prediction counts as accurate while measured savings stay above
    /// this fraction of it. Realized savings systematically land a little
    /// under the estimate (output boundary waste, query drift between
    /// estimation and measurement), so exact comparison would shrink the
    /// window after almost every rewrite.
    pub accuracy_floor: f64,
    pub mode: CostMode,
    /// When false the window never adapts (stays at `w0`).
    pub adaptive_window: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            w0: 16,
            w_min: 4,
            w_max: 1024,
            cost_limit_fraction: 0.5,
            accuracy_floor: 0.5,
            mode: CostMode::Standard,
            adaptive_window: true,
        }
    }
}

/// Estimated read cost a query would have saved on one scanned partition:
/// the unused fraction of the partition, scaled by the partition's share of
/// the query's read volume, applied to the query's read cost.
pub fn estimate_query_saving(
    utilization: f64,
    partition_bytes: u64,
    query_bytes: u64,
    query_cost: f64,
) -> f64 {
    if query_bytes == 0 {
        return 0.0;
    }
    (1.0 - utilization) * (partition_bytes as f64 / query_bytes as f64) * query_cost
}

/// Estimated cost of rewriting a set of partitions, full width.
pub fn estimate_recluster_cost(
    table: &Table,
    ids: &[PartitionId],
    model: &SortCostModel,
) -> Result<f64> {
    if ids.is_empty() {
        return Err(SimError::Usage("recluster cost of an empty set".into()));
    }
    let mut rows = 0usize;
    for &p in ids {
        rows += table.partition(p)?.rows();
    }
    let bytes = (rows * table.dims()) as u64 * crate::table::COL_WIDTH;
    Ok(model.cost(bytes, rows))
}

/// One observed query inside the window.
#[derive(Debug, Clone)]
pub struct WindowEntry {
    pub query: RangeQuery,
    pub scanned: Vec<crate::query::ScannedPartition>,
    pub cost: f64,
    pub bytes_read: u64,
    /// Measured savings attributed to this query by earlier rewrites.
    pub realized_saving: f64,
    /// Savings earlier rewrites predicted for this query.
    pub predicted_saving: f64,
}

/// Sliding window of recent queries with adaptation accumulators.
#[derive(Debug)]
pub struct SlidingWindow {
    w: usize,
    w_min: usize,
    w_max: usize,
    entries: VecDeque<WindowEntry>,
    since_adapt: usize,
    actual_acc: f64,
    predicted_acc: f64,
}

impl SlidingWindow {
    pub fn new(cfg: &PolicyConfig) -> Self {
        let w = cfg.w0.clamp(cfg.w_min, cfg.w_max);
        SlidingWindow {
            w,
            w_min: cfg.w_min,
            w_max: cfg.w_max,
            entries: VecDeque::new(),
            since_adapt: 0,
            actual_acc: 0.0,
            predicted_acc: 0.0,
        }
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &WindowEntry> {
        self.entries.iter()
    }

    /// Total query cost currently inside the window.
    pub fn query_cost(&self) -> f64 {
        self.entries.iter().map(|e| e.cost).sum()
    }

    /// Total measured savings of the queries inside the window.
    pub fn realized_savings(&self) -> f64 {
        self.entries.iter().map(|e| e.realized_saving).sum()
    }

    pub fn push(&mut self, entry: WindowEntry) {
        self.actual_acc += entry.realized_saving;
        self.predicted_acc += entry.predicted_saving;
        self.entries.push_back(entry);
        while self.entries.len() > self.w {
            self.entries.pop_front();
        }
        self.since_adapt += 1;
    }

    /// Whether a full window of queries has completed since the last
    /// adaptation.
    pub fn completed(&self) -> bool {
        self.since_adapt >= self.w
    }

    /// Accumulated (actual, predicted) savings since the last adaptation.
    pub fn accumulators(&self) -> (f64, f64) {
        (self.actual_acc, self.predicted_acc)
    }

    /// Grow after a window that carried no predictions: nothing fired at
    /// this size, so aggregate more history. Without this a window halved
    /// below the break-even size could never recover, because regrowth
    /// otherwise needs an executed rewrite to judge.
    pub fn grow_idle(&mut self) {
        self.w = (self.w * 2).min(self.w_max);
        self.since_adapt = 0;
        self.actual_acc = 0.0;
        self.predicted_acc = 0.0;
    }

    /// Adapt the window size: measured savings above prediction double it,
    /// otherwise it halves; always clamped to `[w_min, w_max]`. Excess old
    /// entries are evicted when the window shrinks.
    pub fn adapt(&mut self, actual: f64, predicted: f64) {
        if actual > predicted {
            self.w = (self.w * 2).min(self.w_max);
        } else {
            self.w = self.w.div_ceil(2).max(self.w_min);
        }
        while self.entries.len() > self.w {
            self.entries.pop_front();
        }
        self.since_adapt = 0;
        self.actual_acc = 0.0;
        self.predicted_acc = 0.0;
    }
}

/// Spend/savings accounting for the policy.
#[derive(Debug)]
pub struct CostLedger {
    mode: CostMode,
    /// Rewrite costs executed recently, tagged by the query counter at
    /// execution time (for the window debt check).
    recent_spend: VecDeque<(u64, f64)>,
    pub spent_total: f64,
    pub realized_total: f64,
    pub queries_seen: u64,
    credit: f64,
}

impl CostLedger {
    pub fn new(mode: CostMode) -> Self {
        CostLedger {
            mode,
            recent_spend: VecDeque::new(),
            spent_total: 0.0,
            realized_total: 0.0,
            queries_seen: 0,
            credit: 0.0,
        }
    }

    /// Credit available right now: realized savings minus spend plus the
    /// per-query allowance.
    pub fn credit(&self) -> f64 {
        self.credit
    }

    /// Account one executed query and the savings measured for it.
    pub fn note_query(&mut self, realized_saving: f64) {
        self.queries_seen += 1;
        self.realized_total += realized_saving;
        self.credit += self.mode.credit_per_query() + realized_saving;
    }

    /// Account an executed plan. With credits enabled the caller must have
    /// checked the credit gate; spending more than the available credit is a
    /// usage error.
    pub fn note_execution(&mut self, cost: f64) -> Result<()> {
        if self.mode.credits() && cost > self.credit + 1e-9 {
            return Err(SimError::Usage(format!(
                "plan spends {cost:.1} with only {:.1} credit",
                self.credit
            )));
        }
        self.spent_total += cost;
        self.credit -= cost;
        self.recent_spend.push_back((self.queries_seen, cost));
        Ok(())
    }

    /// Rewrite cost spent within the last `window` queries.
    pub fn window_recluster_cost(&mut self, window: usize) -> f64 {
        let cutoff = self.queries_seen.saturating_sub(window as u64);
        while let Some(&(at, _)) = self.recent_spend.front() {
            if at < cutoff {
                self.recent_spend.pop_front();
            } else {
                break;
            }
        }
        self.recent_spend.iter().map(|(_, c)| c).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Go,
    NoGo(NoGoReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoGoReason {
    /// Nothing was scanned in the window (or nothing scanned still exists).
    NoCandidates,
    /// Candidates exist but none carries positive estimated savings.
    NoEstimatedBenefit,
    /// Best cut's savings do not beat the scaled cost.
    InsufficientSavings,
    /// The window debt bound would be exceeded.
    DebtLimit,
    /// Credits are enabled and the plan costs more than the balance.
    CreditExhausted,
}

impl Decision {
    pub fn is_go(&self) -> bool {
        matches!(self, Decision::Go)
    }

    /// Stable label for logs.
    pub fn label(&self) -> &'static str {
        match self {
            Decision::Go => "go",
            Decision::NoGo(NoGoReason::NoCandidates) => "no-go:no-candidates",
            Decision::NoGo(NoGoReason::NoEstimatedBenefit) => "no-go:no-estimated-benefit",
            Decision::NoGo(NoGoReason::InsufficientSavings) => "no-go:insufficient-savings",
            Decision::NoGo(NoGoReason::DebtLimit) => "no-go:debt-limit",
            Decision::NoGo(NoGoReason::CreditExhausted) => "no-go:credit-exhausted",
        }
    }
}

/// A planned reclustering: ranked candidates, the chosen prefix cut and the
/// gate outcome. Gate levels are recorded so a bonus adjustment can re-decide
/// without replaying the window.
#[derive(Debug, Clone)]
pub struct ReclusterPlan {
    /// Candidates with positive aggregated savings, best first.
    pub candidates: Vec<(PartitionId, f64)>,
    /// Chosen prefix length; 0 when there is nothing to do.
    pub cut: usize,
    pub est_cost: f64,
    pub est_savings: f64,
    pub decision: Decision,
    pub alpha: f64,
    /// Largest cost Eq-style debt gate admits.
    pub debt_allowance: f64,
    /// Credit balance at plan time, when the credit gate applies.
    pub credit_cap: Option<f64>,
}

impl ReclusterPlan {
    pub fn chosen(&self) -> Vec<PartitionId> {
        self.candidates[..self.cut].iter().map(|(p, _)| *p).collect()
    }

    fn no_go(reason: NoGoReason, alpha: f64, debt_allowance: f64, credit_cap: Option<f64>) -> Self {
        ReclusterPlan {
            candidates: Vec::new(),
            cut: 0,
            est_cost: 0.0,
            est_savings: 0.0,
            decision: Decision::NoGo(reason),
            alpha,
            debt_allowance,
            credit_cap,
        }
    }
}

fn decide(
    savings: f64,
    cost: f64,
    alpha: f64,
    standard: bool,
    debt_allowance: f64,
    credit_cap: Option<f64>,
) -> Decision {
    let enough = if standard { savings > cost } else { savings > alpha * cost };
    if !enough {
        return Decision::NoGo(NoGoReason::InsufficientSavings);
    }
    if cost >= debt_allowance {
        return Decision::NoGo(NoGoReason::DebtLimit);
    }
    if let Some(credit) = credit_cap {
        if cost > credit {
            return Decision::NoGo(NoGoReason::CreditExhausted);
        }
    }
    Decision::Go
}

/// Plan a reclustering from the window. Candidates are the partitions
/// scanned at least once in the window and still visible in `snapshot`;
/// their savings are summed over the window's queries. Every prefix of the
/// savings-ranked candidate list is costed and the cut with the lowest
/// net cost (cost minus savings) wins, ties to the smallest cut.
pub fn plan_recluster(
    table: &Table,
    snapshot: SnapshotId,
    window: &SlidingWindow,
    ledger: &mut CostLedger,
    cfg: &PolicyConfig,
    model: &SortCostModel,
) -> Result<ReclusterPlan> {
    let cost_limit = cfg.cost_limit_fraction * window.query_cost();
    let window_debt = ledger.window_recluster_cost(window.w());
    let debt_allowance = cost_limit - window_debt + window.realized_savings();
    let credit_cap = if cfg.mode.credits() { Some(ledger.credit()) } else { None };
    let alpha = cfg.mode.alpha();
    let standard = matches!(cfg.mode, CostMode::Standard);

    let visible: HashSet<PartitionId> =
        table.snapshot_partitions(snapshot)?.iter().copied().collect();
    let beta = cfg.mode.beta();
    let capacity = table.capacity() as f64;
    let mut agg: HashMap<PartitionId, f64> = HashMap::new();
    let mut scanned_any = false;
    for entry in window.entries() {
        for sp in &entry.scanned {
            if !visible.contains(&sp.id) {
                continue;
            }
            scanned_any = true;
            let mut saving =
                estimate_query_saving(sp.utilization, sp.bytes, entry.bytes_read, entry.cost);
            if beta > 0.0 {
                // Bonus for partitions the rewrite would push fully outside
                // the query range: unused rows repacked elsewhere.
                let extra_pruned = (1.0 - sp.utilization) * sp.rows as f64 / capacity;
                saving += beta * extra_pruned;
            }
            *agg.entry(sp.id).or_insert(0.0) += saving;
        }
    }

    if !scanned_any {
        return Ok(ReclusterPlan::no_go(NoGoReason::NoCandidates, alpha, debt_allowance, credit_cap));
    }
    let mut candidates: Vec<(PartitionId, f64)> =
        agg.into_iter().filter(|(_, s)| *s > 0.0).collect();
    if candidates.is_empty() {
        return Ok(ReclusterPlan::no_go(
            NoGoReason::NoEstimatedBenefit,
            alpha,
            debt_allowance,
            credit_cap,
        ));
    }
    candidates.sort_unstable_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0))
    });

    // Evaluate every prefix cut; net = cost - savings, ties to smallest cut.
    let dims = table.dims();
    let mut best_cut = 1usize;
    let mut best_net = f64::INFINITY;
    let mut best_cost = 0.0;
    let mut best_savings = 0.0;
    let mut rows_acc = 0usize;
    let mut savings_acc = 0.0;
    for (i, (pid, saving)) in candidates.iter().enumerate() {
        rows_acc += table.partition(*pid)?.rows();
        savings_acc += saving;
        let bytes = (rows_acc * dims) as u64 * crate::table::COL_WIDTH;
        let cost = model.cost(bytes, rows_acc);
        let net = cost - savings_acc;
        if net < best_net {
            best_net = net;
            best_cut = i + 1;
            best_cost = cost;
            best_savings = savings_acc;
        }
    }

    let decision = decide(best_savings, best_cost, alpha, standard, debt_allowance, credit_cap);
    Ok(ReclusterPlan {
        candidates,
        cut: best_cut,
        est_cost: best_cost,
        est_savings: best_savings,
        decision,
        alpha,
        debt_allowance,
        credit_cap,
    })
}

/// Augment a plan's estimated savings with a per-query bonus of
/// `beta * |extra pruned partitions|` and re-decide against the same gates.
/// The candidate ranking and cut are unchanged: the bonus models extra
/// skipping the rewrite enables, not a different rewrite.
pub fn performance_bonus(
    plan: &ReclusterPlan,
    beta: f64,
    extra_pruned_per_query: &[f64],
) -> ReclusterPlan {
    let mut adjusted = plan.clone();
    if plan.cut == 0 {
        return adjusted;
    }
    let bonus: f64 = beta * extra_pruned_per_query.iter().map(|p| p.abs()).sum::<f64>();
    adjusted.est_savings += bonus;
    adjusted.decision = decide(
        adjusted.est_savings,
        adjusted.est_cost,
        plan.alpha,
        false,
        plan.debt_allowance,
        plan.credit_cap,
    );
    adjusted
}

/// A rewrite currently being measured: the replaced partitions' key ranges
/// stay retained so later queries can be priced against the old layout.
#[derive(Debug)]
pub struct ActiveRecluster {
    /// (per-column ranges, rows) of every replaced partition.
    pub replaced: Vec<(Vec<(i64, i64)>, usize)>,
    pub outputs: HashSet<PartitionId>,
    /// Queries left in the attribution horizon.
    pub remaining: usize,
    /// Prediction spread over the horizon.
    pub predicted_per_query: f64,
}

impl ActiveRecluster {
    /// Measured saving of one query against this rewrite: bytes the old
    /// layout would have scanned minus bytes actually read from the rewrite's
    /// outputs.
    fn measure(&self, query: &RangeQuery, stats: &QueryStats) -> f64 {
        let width = query.row_width();
        let mut would_read = 0u64;
        for (ranges, rows) in &self.replaced {
            let hit = query.predicates.iter().all(|p| {
                let (min, max) = ranges[p.column];
                min <= p.hi && p.lo <= max
            });
            if hit {
                would_read += *rows as u64 * width;
            }
        }
        let mut did_read = 0u64;
        for sp in &stats.scanned {
            if self.outputs.contains(&sp.id) {
                did_read += sp.bytes;
            }
        }
        would_read as f64 - did_read as f64
    }
}

/// Full policy state: window, ledger and in-flight measurements.
#[derive(Debug)]
pub struct Policy {
    pub cfg: PolicyConfig,
    pub window: SlidingWindow,
    pub ledger: CostLedger,
    active: Vec<ActiveRecluster>,
}

impl Policy {
    pub fn new(cfg: PolicyConfig) -> Self {
        Policy {
            window: SlidingWindow::new(&cfg),
            ledger: CostLedger::new(cfg.mode),
            cfg,
            active: Vec::new(),
        }
    }

    /// Observe one executed query: measure realized savings from in-flight
    /// rewrites, update credit, push the window entry and adapt the window
    /// when one full window has completed.
    pub fn observe_query(&mut self, query: &RangeQuery, stats: &QueryStats) {
        let mut realized = 0.0;
        let mut predicted = 0.0;
        for act in &mut self.active {
            if act.remaining == 0 {
                continue;
            }
            realized += act.measure(query, stats);
            predicted += act.predicted_per_query;
            act.remaining -= 1;
        }
        self.active.retain(|a| a.remaining > 0);
        self.ledger.note_query(realized);
        self.window.push(WindowEntry {
            query: query.clone(),
            scanned: stats.scanned.clone(),
            cost: stats.cost,
            bytes_read: stats.bytes_read,
            realized_saving: realized,
            predicted_saving: predicted,
        });
        if self.cfg.adaptive_window && self.window.completed() {
            let (actual, predicted) = self.window.accumulators();
            if predicted > 0.0 {
                // A rewrite was under measurement: judge it accurate while
                // measured savings stay above the floored prediction.
                self.window.adapt(actual, self.cfg.accuracy_floor * predicted);
            } else {
                // Nothing was predicted, so there is no accuracy to judge;
                // widen the view in search of enough evidence to act.
                self.window.grow_idle();
            }
        }
    }

    /// Plan against the newest snapshot.
    pub fn plan(&mut self, table: &Table, model: &SortCostModel) -> Result<ReclusterPlan> {
        plan_recluster(
            table,
            table.newest_snapshot(),
            &self.window,
            &mut self.ledger,
            &self.cfg,
            model,
        )
    }

    /// Account an executed plan and start measuring it. `replaced` carries
    /// the old partitions' per-column ranges and row counts captured before
    /// the rewrite.
    pub fn note_execution(
        &mut self,
        plan: &ReclusterPlan,
        cost: f64,
        replaced: Vec<(Vec<(i64, i64)>, usize)>,
        outputs: HashSet<PartitionId>,
    ) -> Result<()> {
        self.ledger.note_execution(cost)?;
        let horizon = self.window.w().max(1);
        self.active.push(ActiveRecluster {
            replaced,
            outputs,
            remaining: horizon,
            predicted_per_query: plan.est_savings / horizon as f64,
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::{execute, Predicate, ScanConfig};
    use crate::table::Row;

    #[test]
    fn saving_follows_unused_fraction() {
        // 10% utilization of a partition that is the whole read: 90% saved.
        assert_eq!(estimate_query_saving(0.10, 1000, 1000, 1000.0), 900.0);
        // Fully utilized partitions save nothing.
        assert_eq!(estimate_query_saving(1.0, 512, 2048, 2048.0), 0.0);
        // Unused partition covering half the read volume saves half the cost.
        assert_eq!(estimate_query_saving(0.0, 1024, 2048, 2048.0), 1024.0);
    }

    #[test]
    fn recluster_cost_examples() {
        let mut t = Table::new(3, 1000).unwrap();
        let rows: Vec<Row> = (0..4000).map(|i| vec![i, i, i]).collect();
        let s = t.ingest_batch(&rows, 0).unwrap();
        let ids = t.snapshot_partitions(s).unwrap().to_vec();
        let model = SortCostModel::for_capacity(1000);
        // 4000 rows * 3 cols * 8 bytes = 96,000 bytes; in-memory set: 2x.
        assert_eq!(estimate_recluster_cost(&t, &ids, &model).unwrap(), 192_000.0);
        // Above the memory limit the external factor doubles it.
        let tight = SortCostModel { mem_limit_rows: 1000 };
        assert_eq!(estimate_recluster_cost(&t, &ids, &tight).unwrap(), 384_000.0);
        let err = estimate_recluster_cost(&t, &[], &model).unwrap_err();
        assert!(matches!(err, SimError::Usage(_)));
    }

    fn window_with(table: &Table, queries: &[RangeQuery], cfg: &PolicyConfig) -> SlidingWindow {
        let mut w = SlidingWindow::new(cfg);
        for q in queries {
            let (_, stats) = execute(table, table.newest_snapshot(), q, &ScanConfig::default()).unwrap();
            w.push(WindowEntry {
                query: q.clone(),
                scanned: stats.scanned.clone(),
                cost: stats.cost,
                bytes_read: stats.bytes_read,
                realized_saving: 0.0,
                predicted_saving: 0.0,
            });
        }
        w
    }

    #[test]
    fn fully_utilized_window_yields_no_benefit() {
        let mut t = Table::new(1, 4).unwrap();
        t.ingest_batch(&(0..8).map(|v| vec![v]).collect::<Vec<_>>(), 0).unwrap();
        let cfg = PolicyConfig::default();
        // Every row matches: utilization 1.0 everywhere.
        let q = RangeQuery::new(vec![Predicate::new(0, 0, 7)], vec![0], 0);
        let w = window_with(&t, &[q], &cfg);
        let mut ledger = CostLedger::new(cfg.mode);
        let model = SortCostModel::for_capacity(4);
        let plan =
            plan_recluster(&t, t.newest_snapshot(), &w, &mut ledger, &cfg, &model).unwrap();
        assert_eq!(plan.decision, Decision::NoGo(NoGoReason::NoEstimatedBenefit));
    }

    #[test]
    fn empty_window_has_no_candidates() {
        let t = Table::new(1, 4).unwrap();
        let cfg = PolicyConfig::default();
        let w = SlidingWindow::new(&cfg);
        let mut ledger = CostLedger::new(cfg.mode);
        let model = SortCostModel::for_capacity(4);
        let plan =
            plan_recluster(&t, t.newest_snapshot(), &w, &mut ledger, &cfg, &model).unwrap();
        assert_eq!(plan.decision, Decision::NoGo(NoGoReason::NoCandidates));
    }

    #[test]
    fn profitable_single_candidate_goes() {
        // One partition, repeatedly scanned at low utilization: savings
        // clearly beat the rewrite cost.
        let mut t = Table::new(1, 64).unwrap();
        let rows: Vec<Row> = (0..64).map(|v| vec![v * 100]).collect();
        t.ingest_batch(&rows, 0).unwrap();
        let cfg = PolicyConfig::default();
        let q = RangeQuery::new(vec![Predicate::new(0, 0, 100)], vec![0], 0);
        let w = window_with(&t, &vec![q; 8], &cfg);
        let mut ledger = CostLedger::new(cfg.mode);
        let model = SortCostModel::for_capacity(64);
        let plan =
            plan_recluster(&t, t.newest_snapshot(), &w, &mut ledger, &cfg, &model).unwrap();
        assert_eq!(plan.decision, Decision::Go);
        assert_eq!(plan.cut, 1);
        assert!(plan.est_savings > plan.est_cost);
    }

    /// Exhaustive oracle: best prefix by net cost, ties to the smallest cut.
    fn oracle_cut(savings: &[f64], costs: &[f64]) -> usize {
        let mut best = 1;
        let mut best_net = f64::INFINITY;
        for i in 0..savings.len() {
            let net = costs[i] - savings[i];
            if net < best_net {
                best_net = net;
                best = i + 1;
            }
        }
        best
    }

    #[test]
    fn cut_minimizes_net_cost() {
        // Candidate savings 100, 60, 10 with cumulative costs 40, 80, 120:
        // nets -60, -80, -50 -> cut 2.
        let savings_prefix = [100.0, 160.0, 170.0];
        let costs_prefix = [40.0, 80.0, 120.0];
        assert_eq!(oracle_cut(&savings_prefix, &costs_prefix), 2);

        // Drive the real planner into the same shape: three partitions whose
        // aggregated savings rank 100 > 60 > 10 with equal sizes.
        let mut t = Table::new(1, 10).unwrap();
        // Partition A: values 0..9, B: 100..109, C: 200..209.
        let mut rows: Vec<Row> = Vec::new();
        rows.extend((0..10).map(|v| vec![v]));
        rows.extend((100..110).map(|v| vec![v]));
        rows.extend((200..210).map(|v| vec![v]));
        t.ingest_batch(&rows, 0).unwrap();
        let cfg = PolicyConfig::default();
        // A scanned often at zero utilization, B less, C barely.
        let qa = RangeQuery::new(vec![Predicate::new(0, 5, 5)], vec![0], 0);
        let qb = RangeQuery::new(vec![Predicate::new(0, 105, 105)], vec![0], 0);
        let qc = RangeQuery::new(vec![Predicate::new(0, 205, 205)], vec![0], 0);
        let mut queries = vec![qa; 5];
        queries.extend(vec![qb; 3]);
        queries.push(qc);
        let w = window_with(&t, &queries, &cfg);
        let mut ledger = CostLedger::new(cfg.mode);
        let model = SortCostModel::for_capacity(10);
        let plan =
            plan_recluster(&t, t.newest_snapshot(), &w, &mut ledger, &cfg, &model).unwrap();
        // Verify the planner's cut against the oracle on its own prefixes.
        let mut sv = Vec::new();
        let mut cv = Vec::new();
        let mut s_acc = 0.0;
        for (i, (pid, s)) in plan.candidates.iter().enumerate() {
            s_acc += s;
            sv.push(s_acc);
            let rows: usize = plan.candidates[..=i]
                .iter()
                .map(|(p, _)| t.partition(*p).unwrap().rows())
                .sum();
            cv.push(model.cost((rows * 8) as u64, rows));
            let _ = pid;
        }
        assert_eq!(plan.cut, oracle_cut(&sv, &cv));
    }

    #[test]
    fn window_adaptation_doubles_halves_and_clamps() {
        let cfg = PolicyConfig { w0: 8, w_min: 4, w_max: 16, ..Default::default() };
        let mut w = SlidingWindow::new(&cfg);
        assert_eq!(w.w(), 8);
        // actual 120 > predicted 100 -> double.
        w.adapt(120.0, 100.0);
        assert_eq!(w.w(), 16);
        // Clamped at w_max.
        w.adapt(120.0, 100.0);
        assert_eq!(w.w(), 16);
        // actual 80 <= predicted 100 -> halve.
        w.adapt(80.0, 100.0);
        assert_eq!(w.w(), 8);
        w.adapt(80.0, 100.0);
        assert_eq!(w.w(), 4);
        // Clamped at w_min.
        w.adapt(0.0, 0.0);
        assert_eq!(w.w(), 4);
    }

    #[test]
    fn window_eviction_respects_new_size() {
        let cfg = PolicyConfig { w0: 4, w_min: 2, w_max: 8, ..Default::default() };
        let mut w = SlidingWindow::new(&cfg);
        let q = RangeQuery::new(vec![Predicate::new(0, 0, 1)], vec![0], 0);
        for i in 0..4 {
            w.push(WindowEntry {
                query: q.clone(),
                scanned: vec![],
                cost: i as f64,
                bytes_read: 0,
                realized_saving: 0.0,
                predicted_saving: 0.0,
            });
        }
        assert_eq!(w.len(), 4);
        w.adapt(0.0, 1.0); // halve to 2
        assert_eq!(w.w(), 2);
        assert_eq!(w.len(), 2);
        // The two newest entries survived.
        let costs: Vec<f64> = w.entries().map(|e| e.cost).collect();
        assert_eq!(costs, vec![2.0, 3.0]);
    }

    #[test]
    fn credit_accrues_and_vetoes() {
        let mode = CostMode::Extended { alpha: 1.0, beta: 0.0, credits: true, credit_per_query: 10.0 };
        let mut ledger = CostLedger::new(mode);
        for _ in 0..5 {
            ledger.note_query(0.0);
        }
        // Allowance 10 per query, no measured savings yet: credit 50.
        assert_eq!(ledger.credit(), 50.0);
        ledger.note_query(200.0 - 10.0); // one query realizing 190 extra
        assert_eq!(ledger.credit(), 250.0);
        ledger.note_execution(120.0).unwrap();
        assert_eq!(ledger.credit(), 130.0);
        // Spending beyond the balance is rejected outright.
        let err = ledger.note_execution(200.0).unwrap_err();
        assert!(matches!(err, SimError::Usage(_)));
        assert_eq!(ledger.credit(), 130.0);
    }

    #[test]
    fn performance_bonus_zero_is_identity_and_large_flips() {
        let plan = ReclusterPlan {
            candidates: vec![(PartitionId(1), 30.0)],
            cut: 1,
            est_cost: 40.0,
            est_savings: 30.0,
            decision: Decision::NoGo(NoGoReason::InsufficientSavings),
            alpha: 1.0,
            debt_allowance: f64::INFINITY,
            credit_cap: None,
        };
        let same = performance_bonus(&plan, 0.0, &[3.0]);
        assert_eq!(same.est_savings, 30.0);
        assert_eq!(same.decision, plan.decision);

        // beta = 5 with 3 extra pruned partitions: savings 30 + 15 = 45.
        let boosted = performance_bonus(&plan, 5.0, &[3.0]);
        assert_eq!(boosted.est_savings, 45.0);
        assert_eq!(boosted.decision, Decision::Go);

        // The flip threshold solves savings + beta * pruned = alpha * cost:
        // beta* = (40 - 30) / 3. Just below stays no-go.
        let beta_star = (40.0 - 30.0) / 3.0;
        let below = performance_bonus(&plan, beta_star - 1e-9, &[3.0]);
        assert!(!below.decision.is_go());
        let above = performance_bonus(&plan, beta_star + 1e-6, &[3.0]);
        assert!(above.decision.is_go());
    }

    #[test]
    fn debt_gate_blocks_when_limit_hit() {
        let mut t = Table::new(1, 64).unwrap();
        let rows: Vec<Row> = (0..64).map(|v| vec![v * 100]).collect();
        t.ingest_batch(&rows, 0).unwrap();
        let cfg = PolicyConfig { cost_limit_fraction: 0.0, ..Default::default() };
        let q = RangeQuery::new(vec![Predicate::new(0, 0, 100)], vec![0], 0);
        let w = window_with(&t, &vec![q; 8], &cfg);
        let mut ledger = CostLedger::new(cfg.mode);
        let model = SortCostModel::for_capacity(64);
        // Zero cost limit and no realized savings: any spend violates debt.
        let plan =
            plan_recluster(&t, t.newest_snapshot(), &w, &mut ledger, &cfg, &model).unwrap();
        assert_eq!(plan.decision, Decision::NoGo(NoGoReason::DebtLimit));
    }
}
