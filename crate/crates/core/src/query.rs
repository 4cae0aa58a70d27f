//! Range queries with zonemap pruning.
//!
//! A query carries closed-interval predicates over distinct columns plus a
//! projection. A partition must be scanned iff every predicate interval
//! intersects the partition's zonemap interval for that column; otherwise it
//! is pruned. Costs are counted in bytes: a scanned partition contributes its
//! rows times the width of the columns the query touches (projection plus
//! predicate columns).

use std::collections::BTreeSet;

use crate::table::{MicroPartition, PartitionId, Row, SnapshotId, Table, COL_WIDTH};
use crate::{Result, SimError};

/// Closed interval `[lo, hi]` over one column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Predicate {
    pub column: usize,
    pub lo: i64,
    pub hi: i64,
}

impl Predicate {
    pub fn new(column: usize, lo: i64, hi: i64) -> Self {
        Predicate { column, lo, hi }
    }

    pub fn matches(&self, row: &[i64]) -> bool {
        let v = row[self.column];
        self.lo <= v && v <= self.hi
    }
}

/// A range query: conjunctive interval predicates plus a projection.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RangeQuery {
    pub predicates: Vec<Predicate>,
    pub projection: Vec<usize>,
    /// Batch in which the query was issued.
    pub batch: u32,
}

impl RangeQuery {
    pub fn new(predicates: Vec<Predicate>, projection: Vec<usize>, batch: u32) -> Self {
        RangeQuery { predicates, projection, batch }
    }

    /// Validate against a table schema: at least one predicate, one predicate
    /// per column at most, non-empty intervals, known columns.
    pub fn validate(&self, dims: usize) -> Result<()> {
        if self.predicates.is_empty() {
            return Err(SimError::Schema("query needs at least one predicate".into()));
        }
        let mut seen = BTreeSet::new();
        for p in &self.predicates {
            if p.column >= dims {
                return Err(SimError::Schema(format!(
                    "predicate on column {} in a {}-column table",
                    p.column, dims
                )));
            }
            if p.lo > p.hi {
                return Err(SimError::Schema(format!(
                    "empty predicate interval [{}, {}] on column {}",
                    p.lo, p.hi, p.column
                )));
            }
            if !seen.insert(p.column) {
                return Err(SimError::Schema(format!(
                    "two predicates on column {}",
                    p.column
                )));
            }
        }
        for &c in &self.projection {
            if c >= dims {
                return Err(SimError::Schema(format!(
                    "projection of column {c} in a {dims}-column table"
                )));
            }
        }
        Ok(())
    }

    pub fn predicate_on(&self, column: usize) -> Option<&Predicate> {
        self.predicates.iter().find(|p| p.column == column)
    }

    pub fn matches(&self, row: &[i64]) -> bool {
        self.predicates.iter().all(|p| p.matches(row))
    }

    /// Columns the query touches: projection united with predicate columns.
    pub fn touched_columns(&self) -> BTreeSet<usize> {
        let mut cols: BTreeSet<usize> = self.projection.iter().copied().collect();
        cols.extend(self.predicates.iter().map(|p| p.column));
        cols
    }

    /// Byte width of one row restricted to the touched columns.
    pub fn row_width(&self) -> u64 {
        self.touched_columns().len() as u64 * COL_WIDTH
    }

    fn reaches(&self, part: &MicroPartition) -> bool {
        self.predicates
            .iter()
            .all(|p| part.zonemap().intersects(p.column, p.lo, p.hi))
    }
}

/// Query execution knobs.
#[derive(Debug, Clone, Copy)]
pub struct ScanConfig {
    /// Fixed cost charged per scanned partition, in byte-equivalent units.
    pub per_partition_overhead: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig { per_partition_overhead: 0 }
    }
}

/// What one query execution observed.
#[derive(Debug, Clone)]
pub struct QueryStats {
    /// Scanned partitions in ascending id order, with per-partition
    /// utilization (matching-row fraction) and scanned bytes.
    pub scanned: Vec<ScannedPartition>,
    pub pruned: usize,
    pub bytes_read: u64,
    pub bytes_matched: u64,
    /// `bytes_read` plus per-partition overhead.
    pub cost: f64,
    /// Total partitions visible in the snapshot when the query ran.
    pub partitions_total: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct ScannedPartition {
    pub id: PartitionId,
    pub utilization: f64,
    pub bytes: u64,
    pub rows: usize,
}

impl QueryStats {
    /// Fraction of visible partitions the zonemaps eliminated.
    pub fn pruning_rate(&self) -> f64 {
        if self.partitions_total == 0 {
            return 0.0;
        }
        self.pruned as f64 / self.partitions_total as f64
    }
}

/// Partitions of `snapshot` that must be scanned for `query`, ascending by id.
pub fn prune(table: &Table, snapshot: SnapshotId, query: &RangeQuery) -> Result<Vec<PartitionId>> {
    query.validate(table.dims())?;
    let mut ids: Vec<PartitionId> = Vec::new();
    for &pid in table.snapshot_partitions(snapshot)? {
        if query.reaches(table.partition(pid)?) {
            ids.push(pid);
        }
    }
    ids.sort_unstable();
    Ok(ids)
}

/// Execute a query: scan the unpruned partitions, filter rows, account bytes.
pub fn execute(
    table: &Table,
    snapshot: SnapshotId,
    query: &RangeQuery,
    cfg: &ScanConfig,
) -> Result<(Vec<Row>, QueryStats)> {
    query.validate(table.dims())?;
    let visible = table.snapshot_partitions(snapshot)?;
    let total = visible.len();
    let width = query.row_width();
    let mut scan_ids: Vec<PartitionId> = Vec::new();
    for &pid in visible {
        if query.reaches(table.partition(pid)?) {
            scan_ids.push(pid);
        }
    }
    scan_ids.sort_unstable();

    let mut rows_out: Vec<Row> = Vec::new();
    let mut scanned = Vec::with_capacity(scan_ids.len());
    let mut bytes_read = 0u64;
    let mut bytes_matched = 0u64;
    for pid in scan_ids {
        let part = table.partition(pid)?;
        let mut matched = 0usize;
        for row in part.iter_rows() {
            if query.matches(row) {
                matched += 1;
                rows_out.push(row.to_vec());
            }
        }
        let bytes = part.rows() as u64 * width;
        bytes_read += bytes;
        bytes_matched += matched as u64 * width;
        scanned.push(ScannedPartition {
            id: pid,
            utilization: matched as f64 / part.rows() as f64,
            bytes,
            rows: part.rows(),
        });
    }
    let cost = bytes_read as f64 + cfg.per_partition_overhead as f64 * scanned.len() as f64;
    let stats = QueryStats {
        pruned: total - scanned.len(),
        scanned,
        bytes_read,
        bytes_matched,
        cost,
        partitions_total: total,
    };
    Ok((rows_out, stats))
}

/// Matching-row fraction of one partition for a query. Errors if the
/// partition would have been pruned (utilization is undefined there).
pub fn utilization(part: &MicroPartition, query: &RangeQuery) -> Result<f64> {
    query.validate(part.dims())?;
    if !query.reaches(part) {
        return Err(SimError::Usage(format!(
            "utilization of pruned partition {}",
            part.id()
        )));
    }
    let matched = part.iter_rows().filter(|r| query.matches(r)).count();
    Ok(matched as f64 / part.rows() as f64)
}
