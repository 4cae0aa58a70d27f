//! Amortized-cost audit for the boundary greedy algorithm.
//!
//! The audit replays a trace of ingests and single-column range queries,
//! reclustering boundary partitions greedily after each query, and tracks a
//! potential function over partition key ranges. Costs are counted in
//! partition units here (one unit to fetch a partition, one to rewrite it),
//! independent of the byte-based cost model used elsewhere.
//!
//! Key values are rank-rescaled against the multiset of query edges observed
//! in the whole trace: with `q` queries there are at most `2q` distinct edge
//! values, mapped order-preservingly onto `1..=2q`; all other values fall
//! strictly between neighboring ranks. The potential of a partition with
//! rescaled range `[a, b]` is `0` when the partition is degenerate or covers
//! no rank, and `4 + 4*log2(floor(b) - ceil(a) + 1)` otherwise. Each audited
//! rewrite of `k` boundary partitions must satisfy
//! `delta_phi + 4k <= C_AUDIT * (1 + log2(2q + 2))`, and the whole replay
//! must satisfy
//! `total_cost - sum(ceil(output_i / m)) <= C_TOTAL * (n + q) * log2(q + 2)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::greedy::{greedy_query_step, SortCostModel};
use crate::query::{prune, Predicate, RangeQuery};
use crate::table::{Row, Table};
use crate::Result;

/// Audit bound constant for the per-rewrite potential check. Calibrated once
/// on 100 random small traces (n <= 200, q <= 200) and frozen; the observed
/// per-step maximum was well below this value.
pub const C_AUDIT: f64 = 12.0;

/// Audit bound constant for the end-to-end cost check, calibrated and frozen
/// the same way.
pub const C_TOTAL: f64 = 8.0;

/// Order-preserving rank map from key values to `1..=B`, built from the `2q`
/// query edges of a trace. Values between ranks keep fractional positions, so
/// only `ceil` and `floor` of the rescaled value are ever needed.
#[derive(Debug, Clone)]
pub struct RescaleMap {
    bounds: Vec<i64>,
}

impl RescaleMap {
    pub fn from_edges(mut edges: Vec<i64>) -> Self {
        edges.sort_unstable();
        edges.dedup();
        RescaleMap { bounds: edges }
    }

    pub fn rank_count(&self) -> usize {
        self.bounds.len()
    }

    /// `ceil` of the rescaled value: the rank of `v` when `v` is an edge,
    /// otherwise one more than the number of edges below it.
    pub fn ceil_rank(&self, v: i64) -> i64 {
        self.bounds.partition_point(|&b| b < v) as i64 + 1
    }

    /// `floor` of the rescaled value: the number of edges at or below `v`.
    pub fn floor_rank(&self, v: i64) -> i64 {
        self.bounds.partition_point(|&b| b <= v) as i64
    }

    /// Potential of a partition with key range `[a, b]`.
    pub fn phi(&self, a: i64, b: i64) -> f64 {
        if a == b {
            return 0.0;
        }
        let c = self.ceil_rank(a);
        let f = self.floor_rank(b);
        if c > f {
            return 0.0;
        }
        4.0 + 4.0 * ((f - c + 1) as f64).log2()
    }
}

/// One operation of an audit trace.
#[derive(Debug, Clone)]
pub enum AuditOp {
    Ingest(Vec<Row>),
    Query { lo: i64, hi: i64 },
}

/// A single-key trace: interleaved ingests and range queries over `key`.
#[derive(Debug, Clone)]
pub struct AuditTrace {
    pub dims: usize,
    pub capacity: usize,
    pub key: usize,
    pub ops: Vec<AuditOp>,
}

impl AuditTrace {
    pub fn queries(&self) -> usize {
        self.ops.iter().filter(|o| matches!(o, AuditOp::Query { .. })).count()
    }
}

/// One replayed operation in the audit log.
#[derive(Debug, Clone)]
pub struct AuditStep {
    pub step: usize,
    /// "ingest", "query" or "recluster".
    pub op: &'static str,
    /// Partitions added, fetched, or rewritten, depending on `op`.
    pub k: usize,
    pub delta_phi: f64,
    /// For rewrites this is the audited quantity `delta_phi + 4k`; for
    /// ingests the potential added; for queries the fetch cost.
    pub amortized: f64,
    /// Per-rewrite bound; zero on rows the per-step audit does not apply to.
    pub bound: f64,
}

#[derive(Debug)]
pub struct AuditReport {
    pub steps: Vec<AuditStep>,
    /// Micro-partitions ingested over the trace.
    pub n: usize,
    /// Queries replayed.
    pub q: usize,
    /// Fetch plus rewrite cost, in partition units.
    pub total_cost: f64,
    /// `sum(ceil(|output_i| / m))` over all queries.
    pub output_allowance: f64,
    /// `C_AUDIT * (1 + log2(2q + 2))`.
    pub step_bound: f64,
    /// Largest `delta_phi + 4k` seen across rewrites.
    pub max_step_lhs: f64,
    /// `total_cost - output_allowance`.
    pub total_lhs: f64,
    /// `(n + q) * log2(q + 2)`.
    pub total_scale: f64,
    pub violations: Vec<String>,
}

impl AuditReport {
    /// Largest per-rewrite LHS over the normalizer, for calibration.
    pub fn step_ratio(&self) -> f64 {
        let scale = 1.0 + (2.0 * self.q as f64 + 2.0).log2();
        self.max_step_lhs / scale
    }

    /// End-to-end LHS over the normalizer, for calibration.
    pub fn total_ratio(&self) -> f64 {
        self.total_lhs / self.total_scale
    }

    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Replay a trace with greedy boundary reclustering after every query and
/// audit both amortized-cost bounds.
pub fn audit_trace(trace: &AuditTrace, c_audit: f64, c_total: f64) -> Result<AuditReport> {
    let q = trace.queries();
    let mut edges = Vec::with_capacity(2 * q);
    for op in &trace.ops {
        if let AuditOp::Query { lo, hi } = op {
            edges.push(*lo);
            edges.push(*hi);
        }
    }
    let map = RescaleMap::from_edges(edges);
    let step_bound = c_audit * (1.0 + (2.0 * q as f64 + 2.0).log2());

    let mut table = Table::new(trace.dims, trace.capacity)?;
    // The audit counts partition units; the byte model is irrelevant here.
    let model = SortCostModel::for_capacity(trace.capacity);

    let mut steps = Vec::new();
    let mut violations = Vec::new();
    let mut n = 0usize;
    let mut total_cost = 0.0;
    let mut output_allowance = 0.0;
    let mut max_step_lhs = f64::NEG_INFINITY;
    let mut step_no = 0usize;

    for op in &trace.ops {
        match op {
            AuditOp::Ingest(rows) => {
                let before = table.partition_count();
                let snap = table.ingest_batch(rows, 0)?;
                let added = table.partition_count() - before;
                n += added;
                let mut dphi = 0.0;
                let parts = table.snapshot_partitions(snap)?;
                for &p in &parts[parts.len() - added..] {
                    let (a, b) = table.partition(p)?.zonemap().range(trace.key);
                    dphi += map.phi(a, b);
                }
                steps.push(AuditStep {
                    step: step_no,
                    op: "ingest",
                    k: added,
                    delta_phi: dphi,
                    amortized: dphi,
                    bound: 0.0,
                });
                step_no += 1;
            }
            AuditOp::Query { lo, hi } => {
                let query = RangeQuery::new(
                    vec![Predicate::new(trace.key, *lo, *hi)],
                    vec![trace.key],
                    0,
                );
                let snap = table.newest_snapshot();
                let scan = prune(&table, snap, &query)?;
                let fetch = scan.len();
                total_cost += fetch as f64;
                let mut matched = 0usize;
                for &p in &scan {
                    matched += table
                        .partition(p)?
                        .iter_rows()
                        .filter(|r| {
                            let v = r[trace.key];
                            *lo <= v && v <= *hi
                        })
                        .count();
                }
                output_allowance += (matched as f64 / trace.capacity as f64).ceil();
                steps.push(AuditStep {
                    step: step_no,
                    op: "query",
                    k: fetch,
                    delta_phi: 0.0,
                    amortized: fetch as f64,
                    bound: 0.0,
                });
                step_no += 1;

                let out = greedy_query_step(&mut table, trace.key, &query, &model, 0)?;
                for edge in &out.edges {
                    let phi_in: f64 =
                        edge.input_ranges.iter().map(|&(a, b)| map.phi(a, b)).sum();
                    let phi_out: f64 =
                        edge.output_ranges.iter().map(|&(a, b)| map.phi(a, b)).sum();
                    let dphi = phi_out - phi_in;
                    let lhs = dphi + 4.0 * edge.k as f64;
                    max_step_lhs = max_step_lhs.max(lhs);
                    total_cost += edge.k as f64;
                    if lhs > step_bound {
                        violations.push(format!(
                            "step {step_no}: rewrite of k={} at x={} has delta_phi+4k = {lhs:.3} \
                             > bound {step_bound:.3}",
                            edge.k, edge.anchor
                        ));
                    }
                    steps.push(AuditStep {
                        step: step_no,
                        op: "recluster",
                        k: edge.k,
                        delta_phi: dphi,
                        amortized: lhs,
                        bound: step_bound,
                    });
                    step_no += 1;
                }
                table.gc_snapshots();
            }
        }
    }

    let total_lhs = total_cost - output_allowance;
    let total_scale = ((n + q) as f64) * ((q as f64) + 2.0).log2();
    if total_lhs > c_total * total_scale {
        violations.push(format!(
            "total cost {total_cost:.0} - allowance {output_allowance:.0} = {total_lhs:.1} \
             exceeds {c_total} * {total_scale:.1}"
        ));
    }
    Ok(AuditReport {
        steps,
        n,
        q,
        total_cost,
        output_allowance,
        step_bound,
        max_step_lhs: if max_step_lhs.is_finite() { max_step_lhs } else { 0.0 },
        total_lhs,
        total_scale,
        violations,
    })
}

/// Random audit trace: interleaved ingests of mixed-width key runs and range
/// queries, deterministic in `seed`.
pub fn random_trace(seed: u64, max_n: usize, max_q: usize, capacity: usize) -> AuditTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span: i64 = rng.gen_range(100..100_000);
    let n_parts = rng.gen_range(1..=max_n);
    let n_queries = rng.gen_range(1..=max_q);
    let total_rows = n_parts * capacity;

    let mut ops = Vec::new();
    let mut rows_left = total_rows;
    let mut queries_left = n_queries;
    while rows_left > 0 || queries_left > 0 {
        let do_ingest = rows_left > 0 && (queries_left == 0 || rng.gen_bool(0.4));
        if do_ingest {
            let take = rng.gen_range(1..=4.min(rows_left.div_ceil(capacity))) * capacity;
            let take = take.min(rows_left);
            let mut rows = Vec::with_capacity(take);
            // Mix run styles: local runs, wide scatter, near-constant.
            let style = rng.gen_range(0..3);
            for _ in 0..take {
                let v = match style {
                    0 => {
                        let base = rng.gen_range(0..span);
                        (base + rng.gen_range(0..span / 10 + 1)).min(span)
                    }
                    1 => rng.gen_range(0..=span),
                    _ => {
                        let base = rng.gen_range(0..span);
                        (base + rng.gen_range(0..10)).min(span)
                    }
                };
                rows.push(vec![v]);
            }
            rows_left -= take;
            ops.push(AuditOp::Ingest(rows));
        } else {
            let a = rng.gen_range(0..=span);
            let width = rng.gen_range(0..=span / 4);
            let b = (a + width).min(span);
            ops.push(AuditOp::Query { lo: a, hi: b });
            queries_left -= 1;
        }
    }
    AuditTrace { dims: 1, capacity, key: 0, ops }
}

/// Adversarial trace: a pool of `n_parts` partitions whose key ranges all
/// cover the whole domain, followed by `n_queries` random range queries.
pub fn stacked_pool_trace(seed: u64, n_parts: usize, n_queries: usize, capacity: usize) -> AuditTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span: i64 = 10_000;
    let mut ops = Vec::new();
    for _ in 0..n_parts {
        let mut rows = vec![vec![0i64], vec![span]];
        for _ in 2..capacity {
            rows.push(vec![rng.gen_range(0..=span)]);
        }
        rows.truncate(capacity);
        ops.push(AuditOp::Ingest(rows));
    }
    for _ in 0..n_queries {
        let a = rng.gen_range(0..=span);
        let b = rng.gen_range(a..=span);
        ops.push(AuditOp::Query { lo: a, hi: b });
    }
    AuditTrace { dims: 1, capacity, key: 0, ops }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_of_degenerate_range_is_zero() {
        let map = RescaleMap::from_edges(vec![10, 20, 30]);
        assert_eq!(map.phi(15, 15), 0.0);
        assert_eq!(map.phi(10, 10), 0.0);
    }

    #[test]
    fn phi_of_rank_free_range_is_zero() {
        let map = RescaleMap::from_edges(vec![10, 20, 30]);
        // (21, 29) covers no edge: ceil > floor after rescaling.
        assert_eq!(map.phi(21, 29), 0.0);
        assert_eq!(map.phi(31, 99), 0.0);
        assert_eq!(map.phi(0, 9), 0.0);
    }

    #[test]
    fn phi_spanning_eight_ranks_is_sixteen() {
        // Edges 1..=8; a range covering all of them rescales to [1, 8]:
        // phi = 4 + 4*log2(8) = 16.
        let map = RescaleMap::from_edges((1..=8).collect());
        assert_eq!(map.phi(1, 8), 16.0);
        assert_eq!(map.phi(0, 9), 16.0);
        // One rank: 4 + 4*log2(1) = 4.
        assert_eq!(map.phi(1, 1), 0.0); // degenerate stays zero
        assert_eq!(map.phi(0, 1), 4.0);
    }

    #[test]
    fn rank_helpers_follow_order() {
        let map = RescaleMap::from_edges(vec![10, 20, 30]);
        assert_eq!(map.ceil_rank(10), 1);
        assert_eq!(map.floor_rank(10), 1);
        assert_eq!(map.ceil_rank(15), 2);
        assert_eq!(map.floor_rank(15), 1);
        assert_eq!(map.ceil_rank(5), 1);
        assert_eq!(map.floor_rank(5), 0);
        assert_eq!(map.ceil_rank(35), 4);
        assert_eq!(map.floor_rank(35), 3);
    }

    #[test]
    fn empty_rewrites_do_not_move_potential() {
        // A trace whose queries never hit boundary partitions: disjoint
        // single-value partitions.
        let ops = vec![
            AuditOp::Ingest(vec![vec![1], vec![1], vec![1], vec![1]]),
            AuditOp::Ingest(vec![vec![5], vec![5], vec![5], vec![5]]),
            AuditOp::Query { lo: 0, hi: 10 },
        ];
        let trace = AuditTrace { dims: 1, capacity: 4, key: 0, ops };
        let report = audit_trace(&trace, C_AUDIT, C_TOTAL).unwrap();
        assert!(report.ok(), "{:?}", report.violations);
        assert!(report.steps.iter().all(|s| s.op != "recluster"));
    }

    #[test]
    fn small_traces_respect_frozen_bounds() {
        for seed in 0..20 {
            let trace = random_trace(seed, 30, 30, 8);
            let report = audit_trace(&trace, C_AUDIT, C_TOTAL).unwrap();
            assert!(report.ok(), "seed {seed}: {:?}", report.violations);
        }
    }

    #[test]
    fn stacked_pool_respects_frozen_bounds() {
        let trace = stacked_pool_trace(7, 40, 60, 8);
        let report = audit_trace(&trace, C_AUDIT, C_TOTAL).unwrap();
        assert!(report.ok(), "{:?}", report.violations);
        // The pool really was adversarial: the first query pays for a full
        // stack of boundary partitions.
        let first_rewrite = report.steps.iter().find(|s| s.op == "recluster").unwrap();
        assert!(first_rewrite.k >= 39);
    }

    /// Calibration helper: prints observed maxima of both audited ratios over
    /// the standard small-trace family. Run manually; the frozen constants
    /// were chosen from its output with headroom.
    #[test]
    #[ignore]
    fn calibrate_constants() {
        let mut max_step: f64 = 0.0;
        let mut max_total: f64 = 0.0;
        for seed in 0..100u64 {
            let capacity = [4usize, 16, 256][seed as usize % 3];
            let trace = random_trace(seed, 200, 200, capacity);
            let report = audit_trace(&trace, f64::INFINITY, f64::INFINITY).unwrap();
            max_step = max_step.max(report.step_ratio());
            max_total = max_total.max(report.total_ratio());
        }
        println!("max step ratio observed: {max_step:.4}");
        println!("max total ratio observed: {max_total:.4}");
    }
}
