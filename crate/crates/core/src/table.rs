//! Copy-on-write table storage.
//!
//! A table is a chain of immutable snapshots. Each snapshot lists the
//! micro-partitions visible in it; partitions themselves are immutable blobs
//! of rows with a per-column min/max zonemap. Ingestion and reclustering
//! never mutate existing partitions: they publish a new snapshot that swaps
//! partition ids in and out. Old snapshots stay readable until they are
//! released and garbage collected.

use std::collections::{BTreeMap, BTreeSet};

use crate::{Result, SimError};

/// One row. Column values are fixed-width integers; a row always carries
/// exactly `dims` values.
pub type Row = Vec<i64>;

/// Bytes occupied by one column value.
pub const COL_WIDTH: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartitionId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SnapshotId(pub u64);

impl std::fmt::Display for PartitionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl std::fmt::Display for SnapshotId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// How the rows inside a partition were arranged when it was written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayoutTag {
    /// Arrival order, as ingested.
    Natural,
    /// Sorted by a single column.
    Sorted(usize),
    /// Ordered by a space-filling curve over the listed columns.
    Curve(Vec<usize>),
    /// Leaf of a query-driven partitioning tree.
    TreeLeaf(u64),
}

/// Per-column closed interval `[min, max]` over the rows of one partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Zonemap {
    ranges: Vec<(i64, i64)>,
}

impl Zonemap {
    fn from_rows(dims: usize, data: &[i64]) -> Self {
        debug_assert!(!data.is_empty() && data.len() % dims == 0);
        let mut ranges = vec![(i64::MAX, i64::MIN); dims];
        for row in data.chunks_exact(dims) {
            for (c, &v) in row.iter().enumerate() {
                let r = &mut ranges[c];
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        Zonemap { ranges }
    }

    pub fn dims(&self) -> usize {
        self.ranges.len()
    }

    /// `[min, max]` of a column.
    pub fn range(&self, col: usize) -> (i64, i64) {
        self.ranges[col]
    }

    /// Whether the column interval intersects `[lo, hi]`.
    pub fn intersects(&self, col: usize, lo: i64, hi: i64) -> bool {
        let (min, max) = self.ranges[col];
        min <= hi && lo <= max
    }
}

/// Immutable unit of storage: at most `capacity` rows plus a zonemap.
#[derive(Debug, Clone)]
pub struct MicroPartition {
    id: PartitionId,
    dims: usize,
    /// Row-major values, `rows * dims` long.
    data: Vec<i64>,
    zonemap: Zonemap,
    layout: LayoutTag,
    created_batch: u32,
}

impl MicroPartition {
    pub fn id(&self) -> PartitionId {
        self.id
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dims
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[i64]> {
        self.data.chunks_exact(self.dims)
    }

    pub fn raw_data(&self) -> &[i64] {
        &self.data
    }

    pub fn zonemap(&self) -> &Zonemap {
        self.zonemap_ref()
    }

    fn zonemap_ref(&self) -> &Zonemap {
        &self.zonemap
    }

    pub fn layout(&self) -> &LayoutTag {
        &self.layout
    }

    pub fn created_batch(&self) -> u32 {
        self.created_batch
    }

    /// Total bytes of the partition (all columns).
    pub fn bytes(&self) -> u64 {
        self.data.len() as u64 * COL_WIDTH
    }

    /// Bytes of the partition restricted to `ncols` columns.
    pub fn bytes_for_cols(&self, ncols: usize) -> u64 {
        (self.rows() * ncols) as u64 * COL_WIDTH
    }
}

/// Rows destined for one new partition in a snapshot publication.
#[derive(Debug, Clone)]
pub struct PartitionDraft {
    data: Vec<i64>,
    layout: LayoutTag,
}

impl PartitionDraft {
    pub fn new(data: Vec<i64>, layout: LayoutTag) -> Self {
        PartitionDraft { data, layout }
    }

    pub fn from_rows(rows: &[Row], layout: LayoutTag) -> Self {
        let mut data = Vec::with_capacity(rows.len() * rows.first().map_or(0, |r| r.len()));
        for r in rows {
            data.extend_from_slice(r);
        }
        PartitionDraft { data, layout }
    }
}

#[derive(Debug, Clone)]
struct SnapshotRecord {
    parent: Option<SnapshotId>,
    partitions: Vec<PartitionId>,
    live_refs: u32,
}

/// Order-independent fingerprint of a row multiset. Two digests compare equal
/// iff counts, per-column sums and the commutative row-hash accumulators all
/// agree; used as a cheap conservation check next to exact sorted comparison.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentDigest {
    pub rows: u64,
    pub col_sums: Vec<i128>,
    hash_sum: u64,
    hash_xor: u64,
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn row_hash(row: &[i64]) -> u64 {
    let mut h = 0x51ab_fe12_c0de_0001u64;
    for &v in row {
        h = splitmix64(h ^ v as u64);
    }
    h
}

impl ContentDigest {
    pub fn empty(dims: usize) -> Self {
        ContentDigest { rows: 0, col_sums: vec![0; dims], hash_sum: 0, hash_xor: 0 }
    }

    pub fn add_row(&mut self, row: &[i64]) {
        self.rows += 1;
        for (c, &v) in row.iter().enumerate() {
            self.col_sums[c] += v as i128;
        }
        let h = row_hash(row);
        self.hash_sum = self.hash_sum.wrapping_add(h);
        self.hash_xor ^= h;
    }
}

/// A micro-partitioned table: the partition store plus its snapshot chain.
#[derive(Debug, Clone)]
pub struct Table {
    dims: usize,
    capacity: usize,
    partitions: BTreeMap<PartitionId, MicroPartition>,
    snapshots: BTreeMap<SnapshotId, SnapshotRecord>,
    newest: SnapshotId,
    next_partition: u64,
    next_snapshot: u64,
}

impl Table {
    /// Create an empty table with `dims` columns and partition capacity
    /// `capacity` rows. The genesis snapshot is empty.
    pub fn new(dims: usize, capacity: usize) -> Result<Self> {
        if dims == 0 {
            return Err(SimError::Schema("table needs at least one column".into()));
        }
        if capacity == 0 {
            return Err(SimError::Config("partition capacity must be positive".into()));
        }
        let mut snapshots = BTreeMap::new();
        snapshots.insert(
            SnapshotId(0),
            SnapshotRecord { parent: None, partitions: Vec::new(), live_refs: 0 },
        );
        Ok(Table {
            dims,
            capacity,
            partitions: BTreeMap::new(),
            snapshots,
            newest: SnapshotId(0),
            next_partition: 0,
            next_snapshot: 1,
        })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn newest_snapshot(&self) -> SnapshotId {
        self.newest
    }

    pub fn partition(&self, id: PartitionId) -> Result<&MicroPartition> {
        self.partitions.get(&id).ok_or(SimError::UnknownPartition(id.0))
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    /// Partition ids visible in a snapshot, in snapshot order.
    pub fn snapshot_partitions(&self, id: SnapshotId) -> Result<&[PartitionId]> {
        self.snapshots
            .get(&id)
            .map(|s| s.partitions.as_slice())
            .ok_or(SimError::UnknownSnapshot(id.0))
    }

    pub fn snapshot_parent(&self, id: SnapshotId) -> Result<Option<SnapshotId>> {
        self.snapshots
            .get(&id)
            .map(|s| s.parent)
            .ok_or(SimError::UnknownSnapshot(id.0))
    }

    pub fn live_refs(&self, id: SnapshotId) -> Result<u32> {
        self.snapshots
            .get(&id)
            .map(|s| s.live_refs)
            .ok_or(SimError::UnknownSnapshot(id.0))
    }

    /// Pin a snapshot for an in-flight reader.
    pub fn acquire(&mut self, id: SnapshotId) -> Result<()> {
        let rec = self.snapshots.get_mut(&id).ok_or(SimError::UnknownSnapshot(id.0))?;
        rec.live_refs += 1;
        Ok(())
    }

    /// Release a previously acquired snapshot.
    pub fn release(&mut self, id: SnapshotId) -> Result<()> {
        let rec = self.snapshots.get_mut(&id).ok_or(SimError::UnknownSnapshot(id.0))?;
        if rec.live_refs == 0 {
            return Err(SimError::Usage(format!("release of unreferenced snapshot {id}")));
        }
        rec.live_refs -= 1;
        Ok(())
    }

    fn alloc_partition(
        &mut self,
        data: Vec<i64>,
        layout: LayoutTag,
        batch: u32,
    ) -> Result<PartitionId> {
        if data.is_empty() || data.len() % self.dims != 0 {
            return Err(SimError::Schema(format!(
                "partition payload of {} values does not form {}-column rows",
                data.len(),
                self.dims
            )));
        }
        let rows = data.len() / self.dims;
        if rows > self.capacity {
            return Err(SimError::Integrity(format!(
                "partition of {rows} rows exceeds capacity {}",
                self.capacity
            )));
        }
        let id = PartitionId(self.next_partition);
        self.next_partition += 1;
        let zonemap = Zonemap::from_rows(self.dims, &data);
        self.partitions.insert(
            id,
            MicroPartition { id, dims: self.dims, data, zonemap, layout, created_batch: batch },
        );
        Ok(id)
    }

    fn push_snapshot(&mut self, parent: SnapshotId, partitions: Vec<PartitionId>) -> SnapshotId {
        let id = SnapshotId(self.next_snapshot);
        self.next_snapshot += 1;
        self.snapshots
            .insert(id, SnapshotRecord { parent: Some(parent), partitions, live_refs: 0 });
        self.newest = id;
        id
    }

    /// Append a batch of rows in arrival order. Rows are packed into
    /// `capacity`-row partitions (the final one may be smaller) and a new
    /// snapshot extending the newest one is published.
    pub fn ingest_batch(&mut self, rows: &[Row], batch: u32) -> Result<SnapshotId> {
        for r in rows {
            if r.len() != self.dims {
                return Err(SimError::Schema(format!(
                    "row of {} values in a {}-column table",
                    r.len(),
                    self.dims
                )));
            }
        }
        let mut partitions = self.snapshots[&self.newest].partitions.clone();
        for chunk in rows.chunks(self.capacity) {
            let mut data = Vec::with_capacity(chunk.len() * self.dims);
            for r in chunk {
                data.extend_from_slice(r);
            }
            let id = self.alloc_partition(data, LayoutTag::Natural, batch)?;
            partitions.push(id);
        }
        Ok(self.push_snapshot(self.newest, partitions))
    }

    /// Publish a reclustering: replace `removed` partitions of `base` with
    /// `added` drafts. Fails unless the removed and added row multisets are
    /// identical; on success the new snapshot becomes the newest.
    pub fn publish_snapshot(
        &mut self,
        base: SnapshotId,
        removed: &[PartitionId],
        added: Vec<PartitionDraft>,
        batch: u32,
    ) -> Result<SnapshotId> {
        let base_parts: BTreeSet<PartitionId> = self
            .snapshot_partitions(base)?
            .iter()
            .copied()
            .collect();
        let mut removed_set = BTreeSet::new();
        for &p in removed {
            if !base_parts.contains(&p) {
                return Err(SimError::Integrity(format!(
                    "partition {p} is not visible in base snapshot {base}"
                )));
            }
            if !removed_set.insert(p) {
                return Err(SimError::Usage(format!("partition {p} removed twice")));
            }
        }

        // Conservation check: sort both row multisets and compare.
        let mut old_rows: Vec<&[i64]> = Vec::new();
        for &p in &removed_set {
            old_rows.extend(self.partition(p)?.iter_rows());
        }
        let mut new_rows: Vec<&[i64]> = Vec::new();
        for d in &added {
            if d.data.len() % self.dims != 0 {
                return Err(SimError::Schema(format!(
                    "draft payload of {} values does not form {}-column rows",
                    d.data.len(),
                    self.dims
                )));
            }
            new_rows.extend(d.data.chunks_exact(self.dims));
        }
        old_rows.sort_unstable();
        new_rows.sort_unstable();
        if old_rows != new_rows {
            return Err(SimError::Integrity(format!(
                "row multiset changed: {} rows removed vs {} rows added",
                old_rows.len(),
                new_rows.len()
            )));
        }
        drop(old_rows);
        drop(new_rows);

        let mut partitions: Vec<PartitionId> = self.snapshots[&base]
            .partitions
            .iter()
            .copied()
            .filter(|p| !removed_set.contains(p))
            .collect();
        for d in added {
            let id = self.alloc_partition(d.data, d.layout, batch)?;
            partitions.push(id);
        }
        Ok(self.push_snapshot(base, partitions))
    }

    /// Drop snapshots that are neither the newest nor pinned, and reclaim
    /// partitions no longer reachable from any surviving snapshot. Returns
    /// the reclaimed partition ids.
    pub fn gc_snapshots(&mut self) -> Vec<PartitionId> {
        let newest = self.newest;
        let dead: Vec<SnapshotId> = self
            .snapshots
            .iter()
            .filter(|(id, rec)| **id != newest && rec.live_refs == 0)
            .map(|(id, _)| *id)
            .collect();
        for id in &dead {
            self.snapshots.remove(id);
        }
        let mut reachable: BTreeSet<PartitionId> = BTreeSet::new();
        for rec in self.snapshots.values() {
            reachable.extend(rec.partitions.iter().copied());
        }
        let doomed: Vec<PartitionId> = self
            .partitions
            .keys()
            .copied()
            .filter(|p| !reachable.contains(p))
            .collect();
        for p in &doomed {
            self.partitions.remove(p);
        }
        doomed
    }

    /// Materialize every row visible in a snapshot.
    pub fn collect_rows(&self, id: SnapshotId) -> Result<Vec<Row>> {
        let mut out = Vec::new();
        for &p in self.snapshot_partitions(id)? {
            let part = self.partition(p)?;
            out.extend(part.iter_rows().map(|r| r.to_vec()));
        }
        Ok(out)
    }

    /// Total rows visible in a snapshot.
    pub fn snapshot_rows(&self, id: SnapshotId) -> Result<usize> {
        let mut n = 0;
        for &p in self.snapshot_partitions(id)? {
            n += self.partition(p)?.rows();
        }
        Ok(n)
    }

    /// Order-independent digest of a snapshot's row multiset.
    pub fn content_digest(&self, id: SnapshotId) -> Result<ContentDigest> {
        let mut d = ContentDigest::empty(self.dims);
        for &p in self.snapshot_partitions(id)? {
            for row in self.partition(p)?.iter_rows() {
                d.add_row(row);
            }
        }
        Ok(d)
    }
}
