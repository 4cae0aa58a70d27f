//! Hybrid layout selection.
//!
//! Partitions that keep wasting query bytes are grouped by *how* they waste
//! them: each candidate gets a savings signature (its estimated savings split
//! across the querying predicates' columns), signatures are normalized and
//! density-clustered under cosine distance, and every cluster is matched
//! against anchor directions. A cluster hugging a basis vector sorts on that
//! single column, one matching a uniform multi-column anchor sorts along a
//! Hilbert curve over those columns, and clusters far from every anchor are
//! scattered through a workload-built routing tree. The chosen layouts are
//! rewritten together into one new snapshot.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::greedy::{ReclusterOutcome, SortCostModel};
use crate::hilbert::{hilbert_index, quantize};
use crate::policy::{estimate_query_saving, SlidingWindow};
use crate::qdtree::QdTree;
use crate::query::RangeQuery;
use crate::table::{LayoutTag, PartitionDraft, PartitionId, Row, SnapshotId, Table, COL_WIDTH};
use crate::{Result, SimError};

/// Knobs for signature clustering and anchor labeling.
#[derive(Debug, Clone, Copy)]
pub struct HybridParams {
    /// Cosine-distance radius for density clustering.
    pub eps: f64,
    /// Minimum neighborhood size (the point itself counts).
    pub min_pts: usize,
    /// Multi-column anchors draw from the top `k_top` columns by savings.
    pub k_top: usize,
    /// Clusters farther than this from every anchor are scattered.
    pub scatter_threshold: f64,
    /// A noise point this aligned with one column gets its own sort group.
    pub noise_single_component: f64,
    /// Curve resolution per dimension for multi-column layouts.
    pub curve_bits: u32,
}

impl Default for HybridParams {
    fn default() -> Self {
        HybridParams {
            eps: 0.15,
            min_pts: 3,
            k_top: 4,
            scatter_threshold: 0.2,
            noise_single_component: 0.9,
            curve_bits: 16,
        }
    }
}

/// Per-column decomposition of one partition's estimated savings.
#[derive(Debug, Clone)]
pub struct SavingsSignature {
    pub partition: PartitionId,
    /// Raw savings share per column.
    pub s: Vec<f64>,
    /// `s` normalized to unit Euclidean length.
    pub s_hat: Vec<f64>,
}

/// Attribute each window query's estimated savings on a candidate partition
/// equally across the query's predicate columns. Candidates whose signature
/// comes out all-zero are dropped: there is no benefit to attribute.
pub fn compute_signatures(
    window: &SlidingWindow,
    candidates: &BTreeSet<PartitionId>,
    dims: usize,
) -> Vec<SavingsSignature> {
    let mut raw: BTreeMap<PartitionId, Vec<f64>> = BTreeMap::new();
    for entry in window.entries() {
        let cols: Vec<usize> = entry.query.predicates.iter().map(|p| p.column).collect();
        if cols.is_empty() {
            continue;
        }
        let share = 1.0 / cols.len() as f64;
        for sp in &entry.scanned {
            if !candidates.contains(&sp.id) {
                continue;
            }
            let saving =
                estimate_query_saving(sp.utilization, sp.bytes, entry.bytes_read, entry.cost);
            if saving <= 0.0 {
                continue;
            }
            let s = raw.entry(sp.id).or_insert_with(|| vec![0.0; dims]);
            for &c in &cols {
                s[c] += saving * share;
            }
        }
    }
    raw.into_iter()
        .filter_map(|(partition, s)| {
            let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm <= 0.0 {
                return None;
            }
            let s_hat = s.iter().map(|v| v / norm).collect();
            Some(SavingsSignature { partition, s, s_hat })
        })
        .collect()
}

fn cosine_distance(u: &[f64], v: &[f64]) -> f64 {
    1.0 - u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
}

/// Density clustering over unit vectors with cosine distance. Deterministic:
/// points are visited and expanded in input order, so callers pass points in
/// ascending partition id order. Returns (clusters, noise) as index lists.
pub fn dbscan_cosine(
    points: &[Vec<f64>],
    eps: f64,
    min_pts: usize,
) -> (Vec<Vec<usize>>, Vec<usize>) {
    let n = points.len();
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n).filter(|&j| cosine_distance(&points[i], &points[j]) <= eps).collect()
    };
    // 0 = unvisited, 1 = noise, 2 = clustered.
    let mut state = vec![0u8; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        if state[i] != 0 {
            continue;
        }
        let hood = neighbors(i);
        if hood.len() < min_pts {
            state[i] = 1;
            continue;
        }
        let mut cluster = vec![i];
        state[i] = 2;
        let mut queue: VecDeque<usize> = hood.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            if state[j] == 2 {
                continue;
            }
            // Border points (including former noise) join the cluster;
            // only core points expand it further.
            state[j] = 2;
            cluster.push(j);
            let hood_j = neighbors(j);
            if hood_j.len() >= min_pts {
                queue.extend(hood_j);
            }
        }
        cluster.sort_unstable();
        clusters.push(cluster);
    }
    let noise: Vec<usize> = (0..n).filter(|&i| state[i] == 1).collect();
    (clusters, noise)
}

/// Physical layout for one group of partitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayoutKind {
    SingleColumn(usize),
    /// Columns ordered by descending savings contribution.
    MultiColumn(Vec<usize>),
    Scatter,
}

#[derive(Debug, Clone)]
pub struct LayoutAssignment {
    pub group: Vec<PartitionId>,
    pub kind: LayoutKind,
    /// Cosine distance from the group centroid to the winning anchor.
    pub anchor_distance: f64,
}

/// Match a cluster centroid against the anchor set: every basis vector, plus
/// uniform vectors over 2- and 3-column subsets of `top_cols` (ordered by
/// descending savings). The nearest anchor names the layout; a winner farther
/// than the scatter threshold falls back to Scatter.
pub fn label_cluster(
    centroid: &[f64],
    top_cols: &[usize],
    params: &HybridParams,
) -> (LayoutKind, f64) {
    let mut best_kind = LayoutKind::Scatter;
    let mut best_dist = f64::INFINITY;
    // Basis anchors first, in column order, so ties keep the lowest column.
    for (i, &c) in centroid.iter().enumerate() {
        let dist = 1.0 - c;
        if dist < best_dist {
            best_dist = dist;
            best_kind = LayoutKind::SingleColumn(i);
        }
    }
    // Uniform anchors over subsets of the top columns, sizes 2 and 3, in
    // lexicographic order over the savings ranking.
    let k = top_cols.len();
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    for a in 0..k {
        for b in (a + 1)..k {
            subsets.push(vec![top_cols[a], top_cols[b]]);
        }
    }
    for a in 0..k {
        for b in (a + 1)..k {
            for c in (b + 1)..k {
                subsets.push(vec![top_cols[a], top_cols[b], top_cols[c]]);
            }
        }
    }
    for s in subsets {
        let unit = 1.0 / (s.len() as f64).sqrt();
        let dot: f64 = s.iter().map(|&c| centroid[c] * unit).sum();
        let dist = 1.0 - dot;
        if dist < best_dist {
            best_dist = dist;
            best_kind = LayoutKind::MultiColumn(s);
        }
    }
    if best_dist > params.scatter_threshold {
        (LayoutKind::Scatter, best_dist)
    } else {
        (best_kind, best_dist)
    }
}

/// Columns ranked by aggregate raw savings (descending, ties to the lower
/// column), keeping only positive contributors, at most `k_top`.
fn top_columns(signatures: &[SavingsSignature], dims: usize, k_top: usize) -> Vec<usize> {
    let mut agg = vec![0.0f64; dims];
    for sig in signatures {
        for (c, v) in sig.s.iter().enumerate() {
            agg[c] += v;
        }
    }
    let mut cols: Vec<usize> = (0..dims).filter(|&c| agg[c] > 0.0).collect();
    cols.sort_by(|&a, &b| agg[b].partial_cmp(&agg[a]).unwrap().then(a.cmp(&b)));
    cols.truncate(k_top);
    cols
}

/// Cluster the signatures and label every group with a layout. Noise points
/// aligned strongly with one column get their own sort group; the rest pool
/// into a single scattered group.
pub fn assign_layouts(
    signatures: &[SavingsSignature],
    dims: usize,
    params: &HybridParams,
) -> Vec<LayoutAssignment> {
    if signatures.is_empty() {
        return Vec::new();
    }
    let top_cols = top_columns(signatures, dims, params.k_top);
    let points: Vec<Vec<f64>> = signatures.iter().map(|s| s.s_hat.clone()).collect();
    let (clusters, noise) = dbscan_cosine(&points, params.eps, params.min_pts);

    let mut out = Vec::new();
    for cluster in clusters {
        let mut centroid = vec![0.0f64; dims];
        for &i in &cluster {
            for (c, v) in points[i].iter().enumerate() {
                centroid[c] += v;
            }
        }
        let norm = centroid.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in centroid.iter_mut() {
            *v /= norm;
        }
        let (kind, dist) = label_cluster(&centroid, &top_cols, params);
        let kind = order_multi_columns(kind, signatures, &cluster);
        out.push(LayoutAssignment {
            group: cluster.iter().map(|&i| signatures[i].partition).collect(),
            kind,
            anchor_distance: dist,
        });
    }

    let mut pooled: Vec<usize> = Vec::new();
    for i in noise {
        let (argmax, max) = points[i]
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (c, &v)| if v > acc.1 { (c, v) } else { acc });
        if max >= params.noise_single_component {
            out.push(LayoutAssignment {
                group: vec![signatures[i].partition],
                kind: LayoutKind::SingleColumn(argmax),
                anchor_distance: 1.0 - max,
            });
        } else {
            pooled.push(i);
        }
    }
    if !pooled.is_empty() {
        let mut centroid = vec![0.0f64; dims];
        for &i in &pooled {
            for (c, v) in points[i].iter().enumerate() {
                centroid[c] += v;
            }
        }
        let norm = centroid.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in centroid.iter_mut() {
            *v /= norm;
        }
        let (_, dist) = label_cluster(&centroid, &top_cols, params);
        out.push(LayoutAssignment {
            group: pooled.iter().map(|&i| signatures[i].partition).collect(),
            kind: LayoutKind::Scatter,
            anchor_distance: dist,
        });
    }
    out
}

/// Order a multi-column layout's columns by their savings contribution within
/// the group, descending, ties to the lower column.
fn order_multi_columns(
    kind: LayoutKind,
    signatures: &[SavingsSignature],
    members: &[usize],
) -> LayoutKind {
    match kind {
        LayoutKind::MultiColumn(mut cols) => {
            let contribution = |c: usize| -> f64 {
                members.iter().map(|&i| signatures[i].s[c]).sum()
            };
            cols.sort_by(|&a, &b| {
                contribution(b).partial_cmp(&contribution(a)).unwrap().then(a.cmp(&b))
            });
            LayoutKind::MultiColumn(cols)
        }
        other => other,
    }
}

/// Rewrite every assigned group into its chosen layout, publishing one new
/// snapshot. Groups must be disjoint; an empty assignment list leaves the
/// snapshot unchanged at zero cost.
pub fn recluster_hybrid(
    table: &mut Table,
    base: SnapshotId,
    assignments: &[LayoutAssignment],
    window_queries: &[RangeQuery],
    model: &SortCostModel,
    params: &HybridParams,
    batch: u32,
) -> Result<ReclusterOutcome> {
    if assignments.is_empty() {
        return Ok(ReclusterOutcome::noop(base));
    }
    let mut seen: BTreeSet<PartitionId> = BTreeSet::new();
    for a in assignments {
        for &p in &a.group {
            if !seen.insert(p) {
                return Err(SimError::Usage(format!(
                    "partition {p} assigned to two layout groups"
                )));
            }
        }
    }

    let dims = table.dims();
    let capacity = table.capacity();
    let mut drafts: Vec<PartitionDraft> = Vec::new();
    let mut removed: Vec<PartitionId> = Vec::new();
    let mut total_rows = 0usize;
    let mut cost = 0.0;
    let mut bytes_total = 0u64;
    let mut bytes_moved = 0u64;

    for a in assignments {
        if a.group.is_empty() {
            continue;
        }
        let mut ids: Vec<PartitionId> = a.group.clone();
        ids.sort_unstable();
        let mut rows: Vec<Row> = Vec::new();
        for &p in &ids {
            let part = table.partition(p)?;
            rows.extend(part.iter_rows().map(|r| r.to_vec()));
        }
        let group_rows = rows.len();
        let group_bytes = (group_rows * dims) as u64 * COL_WIDTH;
        cost += model.cost(group_bytes, group_rows);
        bytes_total += group_bytes;
        bytes_moved += model.passes(group_rows) * group_bytes;
        total_rows += group_rows;

        match &a.kind {
            LayoutKind::SingleColumn(c) => {
                let c = *c;
                if c >= dims {
                    return Err(SimError::Schema(format!(
                        "sort column {c} in a {dims}-column table"
                    )));
                }
                rows.sort_unstable_by(|a, b| a[c].cmp(&b[c]).then_with(|| a.cmp(b)));
                for chunk in rows.chunks(capacity) {
                    drafts.push(draft_from(chunk, dims, LayoutTag::Sorted(c)));
                }
            }
            LayoutKind::MultiColumn(cols) => {
                for &c in cols {
                    if c >= dims {
                        return Err(SimError::Schema(format!(
                            "curve column {c} in a {dims}-column table"
                        )));
                    }
                }
                // Per-group min-max quantization onto the curve grid.
                let mut lo = vec![i64::MAX; cols.len()];
                let mut hi = vec![i64::MIN; cols.len()];
                for r in &rows {
                    for (k, &c) in cols.iter().enumerate() {
                        lo[k] = lo[k].min(r[c]);
                        hi[k] = hi[k].max(r[c]);
                    }
                }
                let mut keyed: Vec<(u64, Row)> = Vec::with_capacity(rows.len());
                let mut coords = vec![0u64; cols.len()];
                for r in rows {
                    for (k, &c) in cols.iter().enumerate() {
                        coords[k] = quantize(r[c], lo[k], hi[k], params.curve_bits);
                    }
                    keyed.push((hilbert_index(&coords, params.curve_bits)?, r));
                }
                keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
                let ordered: Vec<Row> = keyed.into_iter().map(|(_, r)| r).collect();
                for chunk in ordered.chunks(capacity) {
                    drafts.push(draft_from(chunk, dims, LayoutTag::Curve(cols.clone())));
                }
            }
            LayoutKind::Scatter => {
                let tree = QdTree::build(&rows, window_queries, dims, capacity)?;
                let mut buckets: Vec<Vec<Row>> = vec![Vec::new(); tree.leaves() as usize];
                for r in rows {
                    let leaf = tree.route(&r)?;
                    buckets[leaf as usize].push(r);
                }
                for (leaf, bucket) in buckets.into_iter().enumerate() {
                    for chunk in bucket.chunks(capacity) {
                        drafts.push(draft_from(chunk, dims, LayoutTag::TreeLeaf(leaf as u64)));
                    }
                }
            }
        }
        removed.extend(ids);
    }

    if removed.is_empty() {
        return Ok(ReclusterOutcome::noop(base));
    }
    let n_drafts = drafts.len();
    let snapshot = table.publish_snapshot(base, &removed, drafts, batch)?;
    let all = table.snapshot_partitions(snapshot)?;
    let outputs = all[all.len() - n_drafts..].to_vec();
    Ok(ReclusterOutcome {
        snapshot,
        outputs,
        rows: total_rows,
        bytes: bytes_total,
        bytes_read: bytes_moved,
        bytes_written: bytes_moved,
        cost,
    })
}

fn draft_from(chunk: &[Row], dims: usize, layout: LayoutTag) -> PartitionDraft {
    let mut data = Vec::with_capacity(chunk.len() * dims);
    for r in chunk {
        data.extend_from_slice(r);
    }
    PartitionDraft::new(data, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{PolicyConfig, WindowEntry};
    use crate::query::{Predicate, ScannedPartition};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn window_of(entries: Vec<WindowEntry>) -> SlidingWindow {
        let cfg = PolicyConfig { w0: 64, ..Default::default() };
        let mut w = SlidingWindow::new(&cfg);
        for e in entries {
            w.push(e);
        }
        w
    }

    fn entry(query: RangeQuery, scanned: Vec<ScannedPartition>, bytes: u64) -> WindowEntry {
        WindowEntry {
            query,
            scanned,
            cost: bytes as f64,
            bytes_read: bytes,
            realized_saving: 0.0,
            predicted_saving: 0.0,
        }
    }

    fn sp(id: u64, utilization: f64, bytes: u64) -> ScannedPartition {
        ScannedPartition { id: PartitionId(id), utilization, bytes, rows: 1 }
    }

    #[test]
    fn signature_attribution_examples() {
        let dims = 4;
        let cands: BTreeSet<PartitionId> = [PartitionId(1)].into_iter().collect();
        // One query, one predicate column 2, saving 12: with cost equal to
        // bytes read, a zero-utilization partition of 12 bytes saves 12.
        let q = RangeQuery::new(vec![Predicate::new(2, 0, 10)], vec![2], 0);
        let w = window_of(vec![entry(q, vec![sp(1, 0.0, 12)], 100)]);
        let sigs = compute_signatures(&w, &cands, dims);
        assert_eq!(sigs.len(), 1);
        assert_eq!(sigs[0].s, vec![0.0, 0.0, 12.0, 0.0]);
        assert_eq!(sigs[0].s_hat, vec![0.0, 0.0, 1.0, 0.0]);

        // Two predicate columns split the saving equally.
        let q2 = RangeQuery::new(
            vec![Predicate::new(0, 0, 10), Predicate::new(1, 0, 10)],
            vec![0],
            0,
        );
        let w2 = window_of(vec![entry(q2, vec![sp(1, 0.0, 10)], 64)]);
        let sigs2 = compute_signatures(&w2, &cands, dims);
        assert_eq!(sigs2[0].s, vec![5.0, 5.0, 0.0, 0.0]);
        let r = 1.0 / 2.0f64.sqrt();
        assert!((sigs2[0].s_hat[0] - r).abs() < 1e-12);
        assert!((sigs2[0].s_hat[1] - r).abs() < 1e-12);

        // Two queries on disjoint columns, savings 30 and 40: 3-4-5 triangle.
        let qa = RangeQuery::new(vec![Predicate::new(0, 0, 10)], vec![0], 0);
        let qb = RangeQuery::new(vec![Predicate::new(1, 0, 10)], vec![1], 0);
        let w3 = window_of(vec![
            entry(qa, vec![sp(1, 0.0, 30)], 77),
            entry(qb, vec![sp(1, 0.0, 40)], 123),
        ]);
        let sigs3 = compute_signatures(&w3, &cands, dims);
        assert_eq!(sigs3[0].s, vec![30.0, 40.0, 0.0, 0.0]);
        assert!((sigs3[0].s_hat[0] - 0.6).abs() < 1e-12);
        assert!((sigs3[0].s_hat[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn signature_conservation_and_zero_drop() {
        // The per-column shares of each partition sum to its total saving.
        let dims = 3;
        let cands: BTreeSet<PartitionId> = [PartitionId(1), PartitionId(2)].into_iter().collect();
        let q = RangeQuery::new(
            vec![Predicate::new(0, 0, 10), Predicate::new(2, 0, 10)],
            vec![0],
            0,
        );
        // Partition 2 is fully utilized: all-zero signature, dropped.
        let w = window_of(vec![
            entry(q.clone(), vec![sp(1, 0.25, 16), sp(2, 1.0, 48)], 64),
            entry(q, vec![sp(1, 0.5, 32), sp(2, 1.0, 32)], 64),
        ]);
        let sigs = compute_signatures(&w, &cands, dims);
        assert_eq!(sigs.len(), 1);
        assert_eq!(sigs[0].partition, PartitionId(1));
        let total: f64 = sigs[0].s.iter().sum();
        let expected = estimate_query_saving(0.25, 16, 64, 64.0)
            + estimate_query_saving(0.5, 32, 64, 64.0);
        assert!((total - expected).abs() < 1e-9);
    }

    #[test]
    fn dbscan_examples() {
        // All identical: one cluster, no noise.
        let pts = vec![vec![1.0, 0.0]; 5];
        let (clusters, noise) = dbscan_cosine(&pts, 0.15, 3);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].len(), 5);
        assert!(noise.is_empty());

        // Two orthogonal bundles, distance 1 apart: two clusters.
        let mut pts = vec![vec![1.0, 0.0]; 4];
        pts.extend(vec![vec![0.0, 1.0]; 4]);
        let (clusters, noise) = dbscan_cosine(&pts, 0.15, 3);
        assert_eq!(clusters.len(), 2);
        assert!(noise.is_empty());
        assert_eq!(clusters[0], vec![0, 1, 2, 3]);
        assert_eq!(clusters[1], vec![4, 5, 6, 7]);
        // Oracle: every cross-bundle distance far exceeds eps.
        for i in 0..4 {
            for j in 4..8 {
                assert!(cosine_distance(&pts[i], &pts[j]) > 0.15);
            }
        }

        // A single isolated point is noise under min_pts = 3.
        let pts = vec![vec![1.0, 0.0]];
        let (clusters, noise) = dbscan_cosine(&pts, 0.15, 3);
        assert!(clusters.is_empty());
        assert_eq!(noise, vec![0]);
    }

    #[test]
    fn labeling_matches_anchor_geometry() {
        let params = HybridParams::default();
        // Centroid on a basis vector: that column's sort, distance 0.
        let mut c = vec![0.0; 6];
        c[2] = 1.0;
        let (kind, dist) = label_cluster(&c, &[2, 0, 1, 3], &params);
        assert_eq!(kind, LayoutKind::SingleColumn(2));
        assert_eq!(dist, 0.0);

        // Centroid uniform over two top columns: their curve, distance 0.
        let r = 1.0 / 2.0f64.sqrt();
        let c = vec![r, r, 0.0, 0.0];
        let (kind, dist) = label_cluster(&c, &[0, 1, 2, 3], &params);
        assert_eq!(kind, LayoutKind::MultiColumn(vec![0, 1]));
        assert!(dist.abs() < 1e-12);

        // Centroid uniform over eight columns: the best 3-column anchor
        // sits at 1 - sqrt(3/8), past the scatter threshold.
        let u = 1.0 / 8.0f64.sqrt();
        let c = vec![u; 8];
        let (kind, dist) = label_cluster(&c, &[0, 1, 2, 3], &params);
        assert_eq!(kind, LayoutKind::Scatter);
        let expect = 1.0 - (3.0f64 / 8.0).sqrt();
        assert!((dist - expect).abs() < 1e-9, "distance {dist} vs {expect}");
    }

    #[test]
    fn labeling_is_scale_invariant() {
        // Scaling every signature by a positive constant changes nothing:
        // normalization happens before clustering and labeling.
        let dims = 4;
        let mk = |scale: f64| -> Vec<SavingsSignature> {
            let mut sigs = Vec::new();
            for i in 0..6u64 {
                let s = vec![scale * 9.0, scale * 1.0, 0.0, 0.0];
                let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                let s_hat = s.iter().map(|v| v / norm).collect();
                sigs.push(SavingsSignature { partition: PartitionId(i), s, s_hat });
            }
            sigs
        };
        let params = HybridParams::default();
        let a = assign_layouts(&mk(1.0), dims, &params);
        let b = assign_layouts(&mk(1000.0), dims, &params);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.kind, y.kind);
            assert_eq!(x.group, y.group);
            assert!((x.anchor_distance - y.anchor_distance).abs() < 1e-12);
        }
    }

    #[test]
    fn groups_are_exclusive_and_exhaustive() {
        // Mixed population: a column-0 bundle, a column-1 bundle, one strong
        // single-column noise point and one diffuse noise point.
        let dims = 5;
        let mut sigs = Vec::new();
        let mut push = |id: u64, s: Vec<f64>| {
            let norm = s.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
            let s_hat = s.iter().map(|v| v / norm).collect();
            sigs.push(SavingsSignature { partition: PartitionId(id), s, s_hat });
        };
        for i in 0..4 {
            push(i, vec![10.0, 0.1 * i as f64, 0.0, 0.0, 0.0]);
        }
        for i in 4..8 {
            push(i, vec![0.1 * i as f64, 20.0, 0.0, 0.0, 0.0]);
        }
        push(8, vec![0.0, 0.0, 0.0, 50.0, 0.0]);
        push(9, vec![3.0, 3.0, 3.0, 3.0, 3.0]);
        let params = HybridParams::default();
        let out = assign_layouts(&sigs, dims, &params);
        let mut seen = BTreeSet::new();
        for a in &out {
            for p in &a.group {
                assert!(seen.insert(*p), "partition {p} in two groups");
            }
        }
        assert_eq!(seen.len(), sigs.len(), "every candidate assigned");
        // The aligned noise point earned its own sort group.
        assert!(out.iter().any(|a| a.group == vec![PartitionId(8)]
            && a.kind == LayoutKind::SingleColumn(3)));
        // The diffuse one scattered.
        assert!(out
            .iter()
            .any(|a| a.group == vec![PartitionId(9)] && a.kind == LayoutKind::Scatter));
    }

    #[test]
    fn single_column_group_matches_plain_recluster() {
        let mut a = Table::new(2, 8).unwrap();
        let mut rng = StdRng::seed_from_u64(7);
        let rows: Vec<Row> =
            (0..64).map(|_| vec![rng.gen_range(0..1000), rng.gen_range(0..1000)]).collect();
        a.ingest_batch(&rows, 0).unwrap();
        let mut b = a.clone();

        let base_a = a.newest_snapshot();
        let ids = a.snapshot_partitions(base_a).unwrap().to_vec();
        let model = SortCostModel::for_capacity(8);
        let plain = crate::greedy::recluster_set(&mut a, base_a, 1, &ids, &model, 1).unwrap();

        let assignment = LayoutAssignment {
            group: ids.clone(),
            kind: LayoutKind::SingleColumn(1),
            anchor_distance: 0.0,
        };
        let base_b = b.newest_snapshot();
        let hybrid = recluster_hybrid(
            &mut b,
            base_b,
            &[assignment],
            &[],
            &model,
            &HybridParams::default(),
            1,
        )
        .unwrap();

        assert_eq!(plain.cost, hybrid.cost);
        assert_eq!(plain.outputs.len(), hybrid.outputs.len());
        for (pa, pb) in plain.outputs.iter().zip(&hybrid.outputs) {
            let ra: Vec<&[i64]> = a.partition(*pa).unwrap().iter_rows().collect();
            let rb: Vec<&[i64]> = b.partition(*pb).unwrap().iter_rows().collect();
            assert_eq!(ra, rb);
        }
    }

    /// Sum over partitions of the product of per-column ranges.
    fn area_sum(table: &Table, ids: &[PartitionId]) -> f64 {
        let mut total = 0.0;
        for &p in ids {
            let z = table.partition(p).unwrap().zonemap();
            let mut area = 1.0;
            for c in 0..table.dims() {
                let (lo, hi) = z.range(c);
                area *= (hi - lo) as f64 + 1.0;
            }
            total += area;
        }
        total
    }

    #[test]
    fn curve_layout_tightens_diagonal_blocks() {
        // Rows clustered in square blocks laid out along two diagonals of a
        // 4x4 grid. Every x-slice and every y-slice crosses two separated
        // blocks, so a single-column sort packs chunks whose zonemaps span
        // the gap on the other column. The curve keeps each chunk inside one
        // block and only pays for a few block-to-block bridge chunks, giving
        // a smaller zonemap area than either single-column sort.
        //
        // A lone noisy diagonal would not show this: sorting on x tiles such
        // a band with thin full-width strips that already touch every row of
        // the band, so no two-column order can beat it on area. Disconnected
        // per-slice support is what the curve exploits.
        let grid = 4usize;
        let cell = 1024i64;
        let blob = 512i64;
        let per_blob = 1024usize;
        let m = 128;
        let mut rng = StdRng::seed_from_u64(42);
        let mut rows: Vec<Row> = Vec::new();
        let off = (cell - blob) / 2;
        for i in 0..grid {
            for j in 0..grid {
                // Blocks sit on the main diagonal and on a second diagonal
                // offset by half the grid, so each row and column of the
                // grid holds exactly two blocks.
                if j != i && j != (i + grid / 2) % grid {
                    continue;
                }
                let x0 = i as i64 * cell + off;
                let y0 = j as i64 * cell + off;
                for _ in 0..per_blob {
                    rows.push(vec![
                        x0 + rng.gen_range(0..blob),
                        y0 + rng.gen_range(0..blob),
                    ]);
                }
            }
        }
        // Shuffle so natural order carries no hidden structure.
        for i in (1..rows.len()).rev() {
            rows.swap(i, rng.gen_range(0..=i));
        }
        let model = SortCostModel::for_capacity(m);
        let mut area = Vec::new();
        for kind in [
            LayoutKind::MultiColumn(vec![0, 1]),
            LayoutKind::SingleColumn(0),
            LayoutKind::SingleColumn(1),
        ] {
            let mut t = Table::new(2, m).unwrap();
            t.ingest_batch(&rows, 0).unwrap();
            let base = t.newest_snapshot();
            let ids = t.snapshot_partitions(base).unwrap().to_vec();
            let a = LayoutAssignment { group: ids, kind, anchor_distance: 0.0 };
            let out = recluster_hybrid(
                &mut t,
                base,
                &[a],
                &[],
                &model,
                &HybridParams::default(),
                1,
            )
            .unwrap();
            area.push(area_sum(&t, &out.outputs));
        }
        assert!(area[0] < area[1], "curve {} vs col-0 sort {}", area[0], area[1]);
        assert!(area[0] < area[2], "curve {} vs col-1 sort {}", area[0], area[2]);
    }

    #[test]
    fn scatter_group_routes_by_tree() {
        let mut t = Table::new(1, 8).unwrap();
        let rows: Vec<Row> = (0..64).map(|v| vec![v]).collect();
        t.ingest_batch(&rows, 0).unwrap();
        let base = t.newest_snapshot();
        let ids = t.snapshot_partitions(base).unwrap().to_vec();
        let q = RangeQuery::new(vec![Predicate::new(0, 16, 31)], vec![0], 0);
        let a = LayoutAssignment { group: ids, kind: LayoutKind::Scatter, anchor_distance: 0.5 };
        let model = SortCostModel::for_capacity(8);
        let out = recluster_hybrid(
            &mut t,
            base,
            &[a],
            &[q.clone()],
            &model,
            &HybridParams::default(),
            1,
        )
        .unwrap();
        // The query now prunes some partitions it could not before (natural
        // order 0..64 in chunks of 8 already isolates [16,31]; the tree must
        // do no worse and keep every leaf's rows together).
        let scanned = crate::query::prune(&t, out.snapshot, &q).unwrap();
        let mut matched = 0;
        for pid in scanned {
            let part = t.partition(pid).unwrap();
            matched += part.iter_rows().filter(|r| q.matches(r)).count();
        }
        assert_eq!(matched, 16);
        assert_eq!(out.rows, 64);
    }

    #[test]
    fn empty_and_overlapping_assignments() {
        let mut t = Table::new(1, 4).unwrap();
        t.ingest_batch(&(0..8).map(|v| vec![v]).collect::<Vec<_>>(), 0).unwrap();
        let base = t.newest_snapshot();
        let model = SortCostModel::for_capacity(4);
        let out = recluster_hybrid(
            &mut t,
            base,
            &[],
            &[],
            &model,
            &HybridParams::default(),
            1,
        )
        .unwrap();
        assert_eq!(out.snapshot, base);
        assert_eq!(out.cost, 0.0);

        let ids = t.snapshot_partitions(base).unwrap().to_vec();
        let a1 = LayoutAssignment {
            group: ids.clone(),
            kind: LayoutKind::SingleColumn(0),
            anchor_distance: 0.0,
        };
        let a2 = LayoutAssignment {
            group: vec![ids[0]],
            kind: LayoutKind::Scatter,
            anchor_distance: 0.0,
        };
        let err = recluster_hybrid(
            &mut t,
            base,
            &[a1, a2],
            &[],
            &model,
            &HybridParams::default(),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, SimError::Usage(_)));
    }
}
