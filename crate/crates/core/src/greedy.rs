//! Boundary-partition greedy reclustering.
//!
//! A partition is a *boundary partition* of a query edge `x` when its key
//! range properly covers `x` (degenerate single-value ranges are excluded:
//! they cannot be split any further). The greedy step reclusters the boundary
//! partitions of both query edges, so repeated queries leave at most two
//! partially-utilized partitions per edge behind. The adjusted variant bounds
//! working memory, throttles early reclustering with a warm-start budget and
//! periodically re-picks the clustering key from observed savings.

use std::collections::{BTreeSet, VecDeque};

use crate::query::{QueryStats, RangeQuery};
use crate::table::{LayoutTag, PartitionId, SnapshotId, Table, COL_WIDTH};
use crate::{Result, SimError};

/// Byte cost of a sort-based rewrite. Sets that fit in memory are read and
/// written once; larger sets pay an external merge pass (read and write
/// twice).
#[derive(Debug, Clone, Copy)]
pub struct SortCostModel {
    pub mem_limit_rows: usize,
}

impl SortCostModel {
    /// Default memory limit: 64 partitions' worth of rows.
    pub fn for_capacity(capacity: usize) -> Self {
        SortCostModel { mem_limit_rows: 64 * capacity }
    }

    /// Read/write passes over the data for a set of `rows` rows.
    pub fn passes(&self, rows: usize) -> u64 {
        if rows <= self.mem_limit_rows {
            1
        } else {
            2
        }
    }

    /// Total cost in bytes for rewriting `rows` rows occupying `bytes` bytes.
    pub fn cost(&self, bytes: u64, rows: usize) -> f64 {
        (2 * self.passes(rows)) as f64 * bytes as f64
    }
}

/// Outcome of one physical reclustering.
#[derive(Debug, Clone)]
pub struct ReclusterOutcome {
    /// Snapshot holding the rewritten partitions (the base snapshot when the
    /// input set was empty).
    pub snapshot: SnapshotId,
    pub outputs: Vec<PartitionId>,
    pub rows: usize,
    /// Full-width bytes of the rewritten rows.
    pub bytes: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub cost: f64,
}

impl ReclusterOutcome {
    pub(crate) fn noop(snapshot: SnapshotId) -> Self {
        ReclusterOutcome {
            snapshot,
            outputs: Vec::new(),
            rows: 0,
            bytes: 0,
            bytes_read: 0,
            bytes_written: 0,
            cost: 0.0,
        }
    }
}

/// Partitions of `snapshot` whose key range on `column` properly covers `x`,
/// ascending by id. Degenerate ranges (`min == max`) are skipped.
pub fn find_boundaries(
    table: &Table,
    snapshot: SnapshotId,
    column: usize,
    x: i64,
) -> Result<Vec<PartitionId>> {
    if column >= table.dims() {
        return Err(SimError::Schema(format!(
            "boundary search on column {column} in a {}-column table",
            table.dims()
        )));
    }
    let mut out = Vec::new();
    for &pid in table.snapshot_partitions(snapshot)? {
        let (min, max) = table.partition(pid)?.zonemap().range(column);
        if min <= x && x <= max && min < max {
            out.push(pid);
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Sort the rows of `ids` by `column` and republish them as capacity-sized
/// partitions. Rows with equal keys fall back to whole-row lexicographic
/// order, so the result is independent of input order.
pub fn recluster_set(
    table: &mut Table,
    base: SnapshotId,
    column: usize,
    ids: &[PartitionId],
    model: &SortCostModel,
    batch: u32,
) -> Result<ReclusterOutcome> {
    if column >= table.dims() {
        return Err(SimError::Schema(format!(
            "recluster on column {column} in a {}-column table",
            table.dims()
        )));
    }
    if ids.is_empty() {
        return Ok(ReclusterOutcome::noop(base));
    }
    let dims = table.dims();
    let mut rows: Vec<&[i64]> = Vec::new();
    for &p in ids {
        rows.extend(table.partition(p)?.iter_rows());
    }
    rows.sort_unstable_by(|a, b| a[column].cmp(&b[column]).then_with(|| a.cmp(b)));

    let total_rows = rows.len();
    let bytes = (total_rows * dims) as u64 * COL_WIDTH;
    let drafts: Vec<crate::table::PartitionDraft> = rows
        .chunks(table.capacity())
        .map(|chunk| {
            let mut data = Vec::with_capacity(chunk.len() * dims);
            for r in chunk {
                data.extend_from_slice(r);
            }
            crate::table::PartitionDraft::new(data, LayoutTag::Sorted(column))
        })
        .collect();
    drop(rows);
    let n_drafts = drafts.len();
    let snapshot = table.publish_snapshot(base, ids, drafts, batch)?;
    let all = table.snapshot_partitions(snapshot)?;
    let outputs = all[all.len() - n_drafts..].to_vec();
    let passes = model.passes(total_rows);
    Ok(ReclusterOutcome {
        snapshot,
        outputs,
        rows: total_rows,
        bytes,
        bytes_read: passes * bytes,
        bytes_written: passes * bytes,
        cost: model.cost(bytes, total_rows),
    })
}

/// One edge reclustering within a greedy step.
#[derive(Debug, Clone)]
pub struct EdgeRecluster {
    pub anchor: i64,
    /// Key ranges of the reclustered inputs (for audits).
    pub input_ranges: Vec<(i64, i64)>,
    pub output_ranges: Vec<(i64, i64)>,
    pub k: usize,
    pub cost: f64,
}

/// Outcome of a full greedy step for one query.
#[derive(Debug, Clone)]
pub struct GreedyStepOutcome {
    pub snapshot: SnapshotId,
    pub cost: f64,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub edges: Vec<EdgeRecluster>,
}

fn key_ranges(table: &Table, column: usize, ids: &[PartitionId]) -> Result<Vec<(i64, i64)>> {
    ids.iter()
        .map(|&p| Ok(table.partition(p)?.zonemap().range(column)))
        .collect()
}

/// Greedy step: recluster the boundary partitions of the query's lower edge,
/// then of its upper edge on the updated snapshot. Partitions produced by the
/// lower-edge rewrite are not reclustered again within the same step.
pub fn greedy_query_step(
    table: &mut Table,
    column: usize,
    query: &RangeQuery,
    model: &SortCostModel,
    batch: u32,
) -> Result<GreedyStepOutcome> {
    let pred = query
        .predicate_on(column)
        .ok_or_else(|| SimError::Usage(format!("query has no predicate on column {column}")))?;
    let (l, r) = (pred.lo, pred.hi);

    let mut snapshot = table.newest_snapshot();
    let mut edges = Vec::new();
    let mut cost = 0.0;
    let mut bytes_read = 0;
    let mut bytes_written = 0;

    let ids_l = find_boundaries(table, snapshot, column, l)?;
    let mut fresh: BTreeSet<PartitionId> = BTreeSet::new();
    if !ids_l.is_empty() {
        let input_ranges = key_ranges(table, column, &ids_l)?;
        let out = recluster_set(table, snapshot, column, &ids_l, model, batch)?;
        snapshot = out.snapshot;
        fresh.extend(out.outputs.iter().copied());
        cost += out.cost;
        bytes_read += out.bytes_read;
        bytes_written += out.bytes_written;
        edges.push(EdgeRecluster {
            anchor: l,
            input_ranges,
            output_ranges: key_ranges(table, column, &out.outputs)?,
            k: ids_l.len(),
            cost: out.cost,
        });
    }

    let ids_r: Vec<PartitionId> = find_boundaries(table, snapshot, column, r)?
        .into_iter()
        .filter(|p| !fresh.contains(p))
        .collect();
    if !ids_r.is_empty() {
        let input_ranges = key_ranges(table, column, &ids_r)?;
        let out = recluster_set(table, snapshot, column, &ids_r, model, batch)?;
        snapshot = out.snapshot;
        cost += out.cost;
        bytes_read += out.bytes_read;
        bytes_written += out.bytes_written;
        edges.push(EdgeRecluster {
            anchor: r,
            input_ranges,
            output_ranges: key_ranges(table, column, &out.outputs)?,
            k: ids_r.len(),
            cost: out.cost,
        });
    }

    Ok(GreedyStepOutcome { snapshot, cost, bytes_read, bytes_written, edges })
}

/// Greedy variant with bounded working memory, a warm-start cost budget and
/// periodic clustering-key reselection.
#[derive(Debug)]
pub struct AdjustedGreedy {
    current_key: usize,
    k_max: usize,
    /// Cost units allowed per step during the warm phase.
    warm_rate: f64,
    /// Number of steps the warm phase lasts.
    warm_steps: u64,
    t: u64,
    t_resel: u64,
    spent: f64,
    /// Per-query per-column savings, newest last; drives key reselection.
    savings_window: VecDeque<Vec<f64>>,
    /// Largest input set a single rewrite has held.
    max_held: usize,
    key_switches: u32,
}

impl AdjustedGreedy {
    /// Defaults are derived from the table size `n` (partitions) at start:
    /// `k_max = max(64, ceil(log2 n) * 8)`, warm budget of
    /// `8 * log2(n + 2)` partition rewrites per step for the first `n` steps,
    /// key reselection every `n` steps.
    pub fn new(table: &Table, initial_key: usize) -> Self {
        let n = table.partition_count().max(1);
        let lg = (n as f64).log2();
        let k_max = 64usize.max((lg.ceil() as usize) * 8);
        let row_bytes = (table.dims() as u64 * COL_WIDTH) as f64;
        let warm_rate = 8.0 * ((n + 2) as f64).log2() * table.capacity() as f64 * row_bytes;
        AdjustedGreedy {
            current_key: initial_key,
            k_max,
            warm_rate,
            warm_steps: n as u64,
            t: 0,
            t_resel: n as u64,
            spent: 0.0,
            savings_window: VecDeque::new(),
            max_held: 0,
            key_switches: 0,
        }
    }

    pub fn with_params(mut self, k_max: usize, t_resel: u64) -> Self {
        self.k_max = k_max.max(1);
        self.t_resel = t_resel.max(1);
        self
    }

    pub fn current_key(&self) -> usize {
        self.current_key
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn max_held(&self) -> usize {
        self.max_held
    }

    pub fn key_switches(&self) -> u32 {
        self.key_switches
    }

    pub fn warm_rate(&self) -> f64 {
        self.warm_rate
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    /// Whether the warm-start budget still applies at the current step.
    pub fn in_warm_phase(&self) -> bool {
        self.t <= self.warm_steps
    }

    fn record_savings(&mut self, dims: usize, query: &RangeQuery, stats: &QueryStats) {
        let mut per_col = vec![0.0; dims];
        let k = query.predicates.len() as f64;
        for sp in &stats.scanned {
            let saving = (1.0 - sp.utilization) * sp.bytes as f64;
            for p in &query.predicates {
                per_col[p.column] += saving / k;
            }
        }
        self.savings_window.push_back(per_col);
        while self.savings_window.len() > self.t_resel as usize {
            self.savings_window.pop_front();
        }
    }

    fn reselect_key(&mut self, dims: usize) {
        let mut agg = vec![0.0; dims];
        for v in &self.savings_window {
            for (c, s) in v.iter().enumerate() {
                agg[c] += s;
            }
        }
        let mut best = self.current_key;
        let mut best_val = f64::NEG_INFINITY;
        for (c, &s) in agg.iter().enumerate() {
            if s > best_val {
                best = c;
                best_val = s;
            }
        }
        if best_val > 0.0 && best != self.current_key {
            self.current_key = best;
            self.key_switches += 1;
        }
    }

    /// Process one executed query: update savings, maybe reselect the key,
    /// then recluster the boundary partitions of both query edges subject to
    /// the memory cap and (during warm-up) the cumulative cost budget.
    pub fn step(
        &mut self,
        table: &mut Table,
        query: &RangeQuery,
        stats: &QueryStats,
        model: &SortCostModel,
        batch: u32,
    ) -> Result<GreedyStepOutcome> {
        self.t += 1;
        self.record_savings(table.dims(), query, stats);
        if self.t % self.t_resel == 0 {
            self.reselect_key(table.dims());
        }

        let mut snapshot = table.newest_snapshot();
        let mut outcome = GreedyStepOutcome {
            snapshot,
            cost: 0.0,
            bytes_read: 0,
            bytes_written: 0,
            edges: Vec::new(),
        };
        let pred = match query.predicate_on(self.current_key) {
            Some(p) => *p,
            None => return Ok(outcome),
        };

        let mut fresh: BTreeSet<PartitionId> = BTreeSet::new();
        let mut budget_exhausted = false;
        for anchor in [pred.lo, pred.hi] {
            if budget_exhausted {
                break;
            }
            let mut ids: Vec<PartitionId> = find_boundaries(table, snapshot, self.current_key, anchor)?
                .into_iter()
                .filter(|p| !fresh.contains(p))
                .collect();
            if ids.is_empty() {
                continue;
            }
            // Nearest partitions to the anchor first: their rewrite removes
            // the most overlap per byte.
            let dist = |t: &Table, p: PartitionId| -> Result<i64> {
                let (a, b) = t.partition(p)?.zonemap().range(self.current_key);
                Ok((anchor - a).max(b - anchor))
            };
            let mut keyed: Vec<(i64, PartitionId)> =
                ids.drain(..).map(|p| Ok((dist(table, p)?, p))).collect::<Result<_>>()?;
            keyed.sort_unstable();
            let ordered: Vec<PartitionId> = keyed.into_iter().map(|(_, p)| p).collect();

            for chunk in ordered.chunks(self.k_max) {
                let mut take = chunk.to_vec();
                if self.in_warm_phase() {
                    let allowance = self.warm_rate * self.t as f64 - self.spent - outcome.cost;
                    // Truncate the chunk to the prefix whose rewrite fits the
                    // remaining warm-start allowance.
                    while !take.is_empty() {
                        let rows: usize =
                            take.iter().map(|&p| table.partition(p).map(|x| x.rows())).sum::<Result<usize>>()?;
                        let bytes = (rows * table.dims()) as u64 * COL_WIDTH;
                        if model.cost(bytes, rows) <= allowance {
                            break;
                        }
                        take.pop();
                    }
                    if take.len() < chunk.len() {
                        budget_exhausted = true;
                    }
                }
                if take.is_empty() {
                    break;
                }
                self.max_held = self.max_held.max(take.len());
                let input_ranges = key_ranges(table, self.current_key, &take)?;
                let k = take.len();
                let out = recluster_set(table, snapshot, self.current_key, &take, model, batch)?;
                snapshot = out.snapshot;
                fresh.extend(out.outputs.iter().copied());
                outcome.cost += out.cost;
                outcome.bytes_read += out.bytes_read;
                outcome.bytes_written += out.bytes_written;
                outcome.edges.push(EdgeRecluster {
                    anchor,
                    input_ranges,
                    output_ranges: key_ranges(table, self.current_key, &out.outputs)?,
                    k,
                    cost: out.cost,
                });
                if budget_exhausted {
                    break;
                }
            }
        }
        self.spent += outcome.cost;
        outcome.snapshot = snapshot;
        Ok(outcome)
    }
}
