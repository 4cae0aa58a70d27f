//! Comparison policies and the overlap metrics they steer by.
//!
//! Four reference behaviors bracket the reclustering engine: never rewrite
//! anything, rebuild the whole table from recent queries at period starts,
//! sort only freshly ingested data, and chase overlap-depth violations under
//! a per-batch budget. This module holds the per-batch mechanics plus the
//! overlap depth and width measurements; the batch loop that drives them
//! lives in the harness.

use std::collections::BTreeMap;

use crate::greedy::{recluster_set, ReclusterOutcome, SortCostModel};
use crate::qdtree::QdTree;
use crate::query::RangeQuery;
use crate::table::{LayoutTag, PartitionDraft, PartitionId, Row, SnapshotId, Table, COL_WIDTH};
use crate::{Result, SimError};

/// Aggregate overlap statistics for one snapshot on one column.
///
/// Width counts, per partition, how many key ranges intersect its own
/// (including itself). Depth counts, per point, how many partitions cover
/// that point; it is piecewise constant between partition endpoints, so the
/// endpoint multiset is a sufficient set of sampling points and the average
/// is taken over it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapMetrics {
    pub avg_width: f64,
    pub avg_depth: f64,
    pub max_width: usize,
    pub max_depth: usize,
}

/// Sorted endpoint index for stabbing queries over a set of key ranges.
struct RangeIndex {
    starts: Vec<i64>,
    ends: Vec<i64>,
    /// Sorted, deduplicated endpoint values: the depth sampling points.
    points: Vec<i64>,
}

impl RangeIndex {
    fn new(ranges: &[(i64, i64)]) -> Self {
        let mut starts: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        let mut ends: Vec<i64> = ranges.iter().map(|r| r.1).collect();
        starts.sort_unstable();
        ends.sort_unstable();
        let mut points: Vec<i64> = starts.iter().chain(ends.iter()).copied().collect();
        points.sort_unstable();
        points.dedup();
        RangeIndex { starts, ends, points }
    }

    /// Number of ranges containing x.
    fn depth(&self, x: i64) -> usize {
        let started = self.starts.partition_point(|&v| v <= x);
        let ended = self.ends.partition_point(|&v| v < x);
        started - ended
    }

    /// Maximum depth over sampling points inside [lo, hi].
    fn max_depth_within(&self, lo: i64, hi: i64) -> usize {
        let from = self.points.partition_point(|&v| v < lo);
        let to = self.points.partition_point(|&v| v <= hi);
        self.points[from..to]
            .iter()
            .map(|&p| self.depth(p))
            .max()
            .unwrap_or(0)
    }
}

fn column_ranges(
    table: &Table,
    snapshot: SnapshotId,
    column: usize,
) -> Result<Vec<(PartitionId, (i64, i64))>> {
    if column >= table.dims() {
        return Err(SimError::Schema(format!(
            "column {column} out of range for {} columns",
            table.dims()
        )));
    }
    let mut out = Vec::new();
    for &p in table.snapshot_partitions(snapshot)? {
        out.push((p, table.partition(p)?.zonemap().range(column)));
    }
    Ok(out)
}

/// Number of partitions in the snapshot whose key range on `column`
/// contains `x`.
pub fn overlap_depth(table: &Table, snapshot: SnapshotId, column: usize, x: i64) -> Result<usize> {
    let ranges = column_ranges(table, snapshot, column)?;
    let index = RangeIndex::new(&ranges.iter().map(|r| r.1).collect::<Vec<_>>());
    Ok(index.depth(x))
}

/// Overlap width of one partition: how many partitions in the snapshot have
/// an intersecting key range on `column`, counting itself.
pub fn overlap_width(
    table: &Table,
    snapshot: SnapshotId,
    column: usize,
    id: PartitionId,
) -> Result<usize> {
    let ranges = column_ranges(table, snapshot, column)?;
    let (lo, hi) = table.partition(id)?.zonemap().range(column);
    Ok(ranges.iter().filter(|(_, (a, b))| *a <= hi && lo <= *b).count())
}

/// Maximum overlap depth over the sampling points inside one partition's
/// own key range. This is the ranking signal for depth-driven reclustering.
pub fn max_depth_within(
    table: &Table,
    snapshot: SnapshotId,
    column: usize,
    id: PartitionId,
) -> Result<usize> {
    let ranges = column_ranges(table, snapshot, column)?;
    let index = RangeIndex::new(&ranges.iter().map(|r| r.1).collect::<Vec<_>>());
    let (lo, hi) = table.partition(id)?.zonemap().range(column);
    Ok(index.max_depth_within(lo, hi))
}

/// Table-wide overlap statistics on one column.
pub fn avg_metrics(table: &Table, snapshot: SnapshotId, column: usize) -> Result<OverlapMetrics> {
    let ranges = column_ranges(table, snapshot, column)?;
    if ranges.is_empty() {
        return Ok(OverlapMetrics { avg_width: 0.0, avg_depth: 0.0, max_width: 0, max_depth: 0 });
    }
    let bare: Vec<(i64, i64)> = ranges.iter().map(|r| r.1).collect();
    let index = RangeIndex::new(&bare);
    let mut width_sum = 0usize;
    let mut max_width = 0usize;
    for &(lo, hi) in &bare {
        // Ranges intersecting [lo, hi]: all started by hi minus all ended
        // before lo.
        let w = index.starts.partition_point(|&v| v <= hi)
            - index.ends.partition_point(|&v| v < lo);
        width_sum += w;
        max_width = max_width.max(w);
    }
    // Depth is averaged over the endpoint multiset, two entries per
    // partition, duplicates included.
    let mut depth_sum = 0usize;
    let mut max_depth = 0usize;
    for &(lo, hi) in &bare {
        for x in [lo, hi] {
            let d = index.depth(x);
            depth_sum += d;
            max_depth = max_depth.max(d);
        }
    }
    let n = bare.len() as f64;
    Ok(OverlapMetrics {
        avg_width: width_sum as f64 / n,
        avg_depth: depth_sum as f64 / (2.0 * n),
        max_width,
        max_depth,
    })
}

/// Result of one depth-driven maintenance pass over a batch.
#[derive(Debug, Clone)]
pub struct DdOutcome {
    /// Snapshot after the last rewrite (the base snapshot if none ran).
    pub snapshot: SnapshotId,
    /// Input partitions reclustered this batch, across all rounds.
    pub reclustered: usize,
    /// Number of rewrite rounds executed.
    pub rounds: usize,
    pub cost: f64,
    pub bytes_read: u64,
    pub bytes_written: u64,
}

/// Depth-driven maintenance: repeatedly recluster the partitions whose
/// in-range overlap depth exceeds `threshold`, worst first, until the table
/// satisfies the threshold or `cap` input partitions have been rewritten
/// this batch.
pub fn dd_batch(
    table: &mut Table,
    base: SnapshotId,
    column: usize,
    threshold: usize,
    cap: usize,
    model: &SortCostModel,
    batch: u32,
) -> Result<DdOutcome> {
    if threshold < 1 || cap < 1 {
        return Err(SimError::Usage(
            "depth-driven maintenance needs threshold >= 1 and cap >= 1".into(),
        ));
    }
    let mut out = DdOutcome {
        snapshot: base,
        reclustered: 0,
        rounds: 0,
        cost: 0.0,
        bytes_read: 0,
        bytes_written: 0,
    };
    while out.reclustered < cap {
        let ranges = column_ranges(table, out.snapshot, column)?;
        let index = RangeIndex::new(&ranges.iter().map(|r| r.1).collect::<Vec<_>>());
        let mut violators: Vec<(usize, PartitionId)> = ranges
            .iter()
            .filter_map(|&(p, (lo, hi))| {
                let d = index.max_depth_within(lo, hi);
                (d > threshold).then_some((d, p))
            })
            .collect();
        if violators.is_empty() {
            break;
        }
        // Worst depth first; partition id breaks ties deterministically.
        violators.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1 .0.cmp(&b.1 .0)));
        violators.truncate(cap - out.reclustered);
        let ids: Vec<PartitionId> = violators.into_iter().map(|(_, p)| p).collect();
        let taken = ids.len();
        let round = recluster_set(table, out.snapshot, column, &ids, model, batch)?;
        out.snapshot = round.snapshot;
        out.reclustered += taken;
        out.rounds += 1;
        out.cost += round.cost;
        out.bytes_read += round.bytes_read;
        out.bytes_written += round.bytes_written;
    }
    Ok(out)
}

/// Full-table rewrite through a query-driven tree, used at period starts.
///
/// Builds the tree from `queries` over every visible row, routes each row to
/// its leaf, and republishes the whole table as capacity-sized chunks per
/// leaf. Costed like any other rewrite: one or two sort passes over the full
/// table bytes.
pub fn qd_rebuild(
    table: &mut Table,
    base: SnapshotId,
    queries: &[RangeQuery],
    model: &SortCostModel,
    batch: u32,
) -> Result<ReclusterOutcome> {
    let removed = table.snapshot_partitions(base)?.to_vec();
    if removed.is_empty() {
        return Ok(ReclusterOutcome::noop(base));
    }
    let rows = table.collect_rows(base)?;
    let dims = table.dims();
    let capacity = table.capacity();
    let total_rows = rows.len();
    let bytes: u64 = (total_rows * dims) as u64 * COL_WIDTH;

    let tree = QdTree::build(&rows, queries, dims, capacity)?;
    let mut buckets: BTreeMap<u64, Vec<Row>> = BTreeMap::new();
    for r in rows {
        let leaf = tree.route(&r)?;
        buckets.entry(leaf).or_default().push(r);
    }
    let mut drafts = Vec::new();
    for (leaf, bucket) in buckets {
        for chunk in bucket.chunks(capacity) {
            drafts.push(PartitionDraft::from_rows(chunk, LayoutTag::TreeLeaf(leaf)));
        }
    }
    let n_drafts = drafts.len();
    let snapshot = table.publish_snapshot(base, &removed, drafts, batch)?;
    let all = table.snapshot_partitions(snapshot)?;
    let outputs = all[all.len() - n_drafts..].to_vec();
    let passes = model.passes(total_rows) as u64;
    Ok(ReclusterOutcome {
        snapshot,
        outputs,
        rows: total_rows,
        bytes,
        bytes_read: passes * bytes,
        bytes_written: passes * bytes,
        cost: (2 * passes * bytes) as f64,
    })
}

/// Sort a batch's freshly ingested partitions by the oracle key, leaving all
/// pre-existing data untouched. One sorted run per batch; runs are never
/// merged afterwards.
pub fn nn_batch(
    table: &mut Table,
    base: SnapshotId,
    new_partitions: &[PartitionId],
    oracle_key: usize,
    model: &SortCostModel,
    batch: u32,
) -> Result<ReclusterOutcome> {
    if new_partitions.is_empty() {
        return Ok(ReclusterOutcome::noop(base));
    }
    recluster_set(table, base, oracle_key, new_partitions, model, batch)
}
