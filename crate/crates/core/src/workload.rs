//! Deterministic workload generation: ingest batches and query mixes.
//!
//! Every batch ingests `rows_per_batch` rows whose first column is an event
//! time correlated with the batch index, lagged by a bounded uniform delay
//! to model late-arriving data; remaining columns are uniform attribute
//! values. Query mixes evolve batch to batch by regenerating exactly a
//! configured fraction of the previous mix. All randomness flows through
//! independent seeded streams keyed by (seed, purpose, period, batch), so
//! the same config always produces byte-identical traces, and ingests never
//! perturb query draws.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{Distribution, PeriodConfig, WorkloadConfig};
use crate::query::{Predicate, RangeQuery};
use crate::table::{splitmix64, Row};
use crate::{Result, SimError};

/// Attribute columns (every column after the event time) draw uniformly
/// from `[0, ATTRIBUTE_DOMAIN)`.
pub const ATTRIBUTE_DOMAIN: i64 = 1_000_000;

/// Buckets used to discretize recency-skewed center draws.
const ZIPF_BUCKETS: usize = 100;

const STREAM_ROWS: u64 = 1;
const STREAM_QUERIES: u64 = 2;

/// Independent deterministic stream for one (purpose, period, batch) cell.
fn stream(seed: u64, purpose: u64, period: usize, batch: u32) -> ChaCha8Rng {
    let mut s = splitmix64(seed ^ 0xa5a5_5a5a_0f0f_f0f0);
    for tag in [purpose, period as u64, batch as u64] {
        s = splitmix64(s ^ tag);
    }
    ChaCha8Rng::seed_from_u64(s)
}

/// Inclusive live domain of a column once batch `batch` has been ingested.
/// The event-time domain grows with ingestion; attribute domains are fixed.
pub fn live_domain(cfg: &WorkloadConfig, column: usize, batch: u32) -> (i64, i64) {
    if column == 0 {
        (0, (batch as i64 + 1) * cfg.rows_per_batch as i64 - 1)
    } else {
        (0, ATTRIBUTE_DOMAIN - 1)
    }
}

/// Generate one batch of rows, ordered by event time.
///
/// Row i of batch b carries raw event time `b*rows_per_batch + i` minus a
/// uniform lag in `[0, lag_batches*rows_per_batch]`, clamped at zero.
pub fn gen_batch_rows(cfg: &WorkloadConfig, batch: u32) -> Vec<Row> {
    let period = cfg.period_of(batch);
    let lag_window = cfg.periods[period].lag_batches as i64 * cfg.rows_per_batch as i64;
    let mut rng = stream(cfg.seed, STREAM_ROWS, period, batch);
    let base = batch as i64 * cfg.rows_per_batch as i64;
    let mut rows: Vec<Row> = (0..cfg.rows_per_batch as i64)
        .map(|i| {
            let lag = rng.gen_range(0..=lag_window);
            let mut row = Vec::with_capacity(cfg.columns);
            row.push((base + i - lag).max(0));
            for _ in 1..cfg.columns {
                row.push(rng.gen_range(0..ATTRIBUTE_DOMAIN));
            }
            row
        })
        .collect();
    // Arrival order is event-time order; the stable sort keeps draw order
    // among ties, so output stays deterministic.
    rows.sort_by_key(|r| r[0]);
    rows
}

/// Draw a query center over `[lo, hi]` according to the period distribution.
fn draw_center(
    dist: Distribution,
    rng: &mut ChaCha8Rng,
    cfg: &WorkloadConfig,
    column: usize,
    batch: u32,
    lo: i64,
    hi: i64,
) -> i64 {
    let span = (hi - lo + 1) as f64;
    match dist {
        Distribution::Uniform => rng.gen_range(lo..=hi),
        Distribution::Zipf { alpha } => {
            // Bucket k (1-based, counted from the high end) has weight
            // 1/k^alpha: mass concentrates on the most recent keys.
            let weights: Vec<f64> =
                (1..=ZIPF_BUCKETS).map(|k| (k as f64).powf(-alpha)).collect();
            let total: f64 = weights.iter().sum();
            let mut u = rng.gen::<f64>() * total;
            let mut k = ZIPF_BUCKETS;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    k = i + 1;
                    break;
                }
                u -= w;
            }
            let frac = ((ZIPF_BUCKETS - k) as f64 + rng.gen::<f64>()) / ZIPF_BUCKETS as f64;
            (lo + (frac * span) as i64).min(hi)
        }
        Distribution::Gaussian { sigma } => {
            // The anchor advances one batch per batch: along the growing
            // event-time domain it tracks the newest batch; on fixed
            // attribute domains it walks across the span over one period.
            let (anchor, sigma_key) = if column == 0 {
                let r = cfg.rows_per_batch as f64;
                (batch as f64 * r + r / 2.0, sigma * r)
            } else {
                let step = span / cfg.batches_per_period as f64;
                let in_period = (batch % cfg.batches_per_period) as f64;
                (lo as f64 + (in_period + 0.5) * step, sigma * step)
            };
            let z: f64 = rng.sample(StandardNormal);
            (anchor + sigma_key * z).round() as i64
        }
    }
    .clamp(lo, hi)
}

/// Predicate of the configured width centered near `center`, shifted to fit
/// inside the domain so the width (and thus selectivity) is preserved.
fn predicate_at(column: usize, center: i64, lo: i64, hi: i64, selectivity: f64) -> Predicate {
    let span = hi - lo + 1;
    let width = ((selectivity * span as f64).round() as i64).clamp(1, span);
    let mut q_lo = (center - width / 2).max(lo);
    let mut q_hi = q_lo + width - 1;
    if q_hi > hi {
        q_hi = hi;
        q_lo = (q_hi - width + 1).max(lo);
    }
    Predicate::new(column, q_lo, q_hi)
}

/// Weighted sample of distinct predicate columns for one query. The count
/// is floor(avg) plus a coin flip on the fractional part, capped by the
/// number of configured columns.
fn choose_columns(period: &PeriodConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let avg = period.avg_predicate_columns;
    let mut count = avg.floor() as usize;
    let frac = avg - avg.floor();
    if frac > 0.0 && rng.gen::<f64>() < frac {
        count += 1;
    }
    let count = count.clamp(1, period.predicate_columns.len());
    let mut pool: Vec<(usize, f64)> = period.predicate_columns.clone();
    let mut cols = Vec::with_capacity(count);
    for _ in 0..count {
        let total: f64 = pool.iter().map(|(_, w)| w).sum();
        let mut u = rng.gen::<f64>() * total;
        let mut pick = pool.len() - 1;
        for (i, (_, w)) in pool.iter().enumerate() {
            if u < *w {
                pick = i;
                break;
            }
            u -= *w;
        }
        cols.push(pool.remove(pick).0);
    }
    cols.sort_unstable();
    cols
}

fn gen_query(cfg: &WorkloadConfig, period: &PeriodConfig, batch: u32, rng: &mut ChaCha8Rng) -> RangeQuery {
    let cols = choose_columns(period, rng);
    let predicates: Vec<Predicate> = cols
        .iter()
        .map(|&c| {
            let (lo, hi) = live_domain(cfg, c, batch);
            let center = draw_center(period.distribution, rng, cfg, c, batch, lo, hi);
            predicate_at(c, center, lo, hi, period.selectivity)
        })
        .collect();
    RangeQuery::new(predicates, cols, batch)
}

/// Generate the query mix for one batch.
///
/// The first batch of a period draws a fresh mix; later batches copy the
/// previous mix and regenerate exactly `round(shifting_rate * count)`
/// members at seeded positions. Pool-period batches issue no queries.
pub fn gen_query_mix(
    cfg: &WorkloadConfig,
    batch: u32,
    prev: Option<&[RangeQuery]>,
) -> Result<Vec<RangeQuery>> {
    if cfg.is_pool_batch(batch) {
        return Ok(Vec::new());
    }
    let period_idx = cfg.period_of(batch);
    let period = &cfg.periods[period_idx];
    let count = period.queries_per_batch;
    let mut rng = stream(cfg.seed, STREAM_QUERIES, period_idx, batch);

    let period_start = batch % cfg.batches_per_period == 0;
    if period_start {
        return Ok((0..count).map(|_| gen_query(cfg, period, batch, &mut rng)).collect());
    }
    let prev = prev.ok_or_else(|| {
        SimError::Usage("mid-period query mix needs the previous batch's mix".into())
    })?;
    if prev.len() != count {
        return Err(SimError::Usage(format!(
            "previous mix holds {} queries, period expects {count}",
            prev.len()
        )));
    }
    let regen = (period.shifting_rate * count as f64).round() as usize;
    // Sample `regen` distinct positions, then redraw them in ascending
    // order so the draw sequence is independent of sampling order.
    let mut positions: Vec<usize> = (0..count).collect();
    for i in 0..regen {
        let j = rng.gen_range(i..count);
        positions.swap(i, j);
    }
    let mut chosen: Vec<usize> = positions[..regen].to_vec();
    chosen.sort_unstable();
    let mut mix = prev.to_vec();
    for idx in chosen {
        mix[idx] = gen_query(cfg, period, batch, &mut rng);
    }
    Ok(mix)
}

/// One record of an exported trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TraceEvent {
    Ingest { batch: u32, rows: Vec<Row> },
    Query { batch: u32, query: RangeQuery },
}

/// Expand a config into its full event stream: per batch, one ingest event
/// followed by that batch's queries.
pub fn generate_trace(cfg: &WorkloadConfig) -> Result<Vec<TraceEvent>> {
    let mut events = Vec::new();
    let mut prev: Option<Vec<RangeQuery>> = None;
    for batch in 0..cfg.total_batches() {
        events.push(TraceEvent::Ingest { batch, rows: gen_batch_rows(cfg, batch) });
        let mix = gen_query_mix(cfg, batch, prev.as_deref())?;
        for q in &mix {
            events.push(TraceEvent::Query { batch, query: q.clone() });
        }
        prev = Some(mix);
    }
    Ok(events)
}

/// Write one JSON record per line.
pub fn write_trace_ndjson<W: Write>(events: &[TraceEvent], mut out: W) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Read a newline-delimited trace written by [`write_trace_ndjson`].
pub fn read_trace_ndjson<R: BufRead>(input: R) -> Result<Vec<TraceEvent>> {
    let mut events = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(serde_json::from_str(&line)?);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PeriodConfig;
    use crate::table::Table;

    fn cfg_with(periods: Vec<PeriodConfig>, rows_per_batch: usize, bpp: u32) -> WorkloadConfig {
        WorkloadConfig {
            seed: 99,
            columns: 3,
            partition_capacity: 16,
            rows_per_batch,
            batches_per_period: bpp,
            initial_pool_periods: 0,
            recluster_start_batch: 0,
            periods,
        }
    }

    fn period(dist: Distribution) -> PeriodConfig {
        PeriodConfig {
            predicate_columns: vec![(0, 1.0)],
            distribution: dist,
            selectivity: 0.1,
            shifting_rate: 0.25,
            queries_per_batch: 8,
            avg_predicate_columns: 1.0,
            lag_batches: 3,
            oracle_key: None,
        }
    }

    #[test]
    fn zero_lag_gives_disjoint_event_time_zonemaps() {
        let mut p = period(Distribution::Uniform);
        p.lag_batches = 0;
        let cfg = cfg_with(vec![p], 64, 4);
        let mut t = Table::new(cfg.columns, cfg.partition_capacity).unwrap();
        for b in 0..3 {
            let rows = gen_batch_rows(&cfg, b);
            // Strictly increasing event time within the batch.
            for w in rows.windows(2) {
                assert!(w[0][0] < w[1][0]);
            }
            t.ingest_batch(&rows, b).unwrap();
        }
        let s = t.newest_snapshot();
        let parts: Vec<_> = t.snapshot_partitions(s).unwrap().to_vec();
        for &a in &parts {
            for &b in &parts {
                let (pa, pb) = (t.partition(a).unwrap(), t.partition(b).unwrap());
                if pa.created_batch() == pb.created_batch() {
                    continue;
                }
                let (alo, ahi) = pa.zonemap().range(0);
                let (blo, bhi) = pb.zonemap().range(0);
                assert!(ahi < blo || bhi < alo, "batches overlap on event time");
            }
        }
    }

    #[test]
    fn lagged_batches_overlap_on_event_time() {
        let cfg = cfg_with(vec![period(Distribution::Uniform)], 64, 8);
        let span = |b: u32| {
            let rows = gen_batch_rows(&cfg, b);
            let lo = rows.iter().map(|r| r[0]).min().unwrap();
            let hi = rows.iter().map(|r| r[0]).max().unwrap();
            (lo, hi)
        };
        let (_, hi2) = span(2);
        let (lo3, _) = span(3);
        let overlap = hi2 - lo3 + 1;
        assert!(overlap > 0, "lag window 3 should pull batch 3 under batch 2");
    }

    #[test]
    fn traces_are_deterministic_and_round_trip() {
        let cfg = cfg_with(
            vec![period(Distribution::Uniform), period(Distribution::Zipf { alpha: 2.0 })],
            32,
            3,
        );
        let a = generate_trace(&cfg).unwrap();
        let b = generate_trace(&cfg).unwrap();
        assert_eq!(a, b);

        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_trace_ndjson(&a, &mut buf_a).unwrap();
        write_trace_ndjson(&b, &mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b, "serialized traces must be byte-identical");

        let back = read_trace_ndjson(buf_a.as_slice()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn shifting_regenerates_exactly_the_configured_count() {
        let mut p = period(Distribution::Uniform);
        p.shifting_rate = 0.25;
        p.queries_per_batch = 8;
        let cfg = cfg_with(vec![p], 64, 6);
        let first = gen_query_mix(&cfg, 0, None).unwrap();
        let second = gen_query_mix(&cfg, 1, Some(&first)).unwrap();
        let changed = first
            .iter()
            .zip(&second)
            .filter(|(a, b)| a.predicates != b.predicates)
            .count();
        assert_eq!(changed, 2, "rate 0.25 over 8 queries regenerates exactly 2");

        let mut p0 = period(Distribution::Uniform);
        p0.shifting_rate = 0.0;
        let cfg0 = cfg_with(vec![p0], 64, 6);
        let f0 = gen_query_mix(&cfg0, 0, None).unwrap();
        let s0 = gen_query_mix(&cfg0, 1, Some(&f0)).unwrap();
        assert_eq!(f0, s0, "rate 0 keeps the mix verbatim");

        let mut p1 = period(Distribution::Uniform);
        p1.shifting_rate = 1.0;
        let cfg1 = cfg_with(vec![p1], 64, 6);
        let f1 = gen_query_mix(&cfg1, 0, None).unwrap();
        let s1 = gen_query_mix(&cfg1, 1, Some(&f1)).unwrap();
        let kept = f1.iter().zip(&s1).filter(|(a, b)| a == b).count();
        assert_eq!(kept, 0, "rate 1 redraws every query");

        assert!(matches!(
            gen_query_mix(&cfg1, 1, None),
            Err(SimError::Usage(_))
        ));
    }

    #[test]
    fn selectivity_calibrates_within_twenty_percent() {
        let mut p = period(Distribution::Uniform);
        p.selectivity = 0.08;
        p.queries_per_batch = 64;
        p.shifting_rate = 1.0;
        let cfg = cfg_with(vec![p], 512, 32);
        let mut ratios = Vec::new();
        let mut prev: Option<Vec<RangeQuery>> = None;
        for b in 0..20 {
            let mix = gen_query_mix(&cfg, b, prev.as_deref()).unwrap();
            for q in &mix {
                for pr in &q.predicates {
                    let (lo, hi) = live_domain(&cfg, pr.column, b);
                    let width = (pr.hi - pr.lo + 1) as f64;
                    ratios.push(width / (hi - lo + 1) as f64);
                }
            }
            prev = Some(mix);
        }
        assert!(ratios.len() >= 1000);
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(
            (mean - 0.08).abs() / 0.08 < 0.2,
            "mean empirical selectivity {mean} drifts from 0.08"
        );
    }

    #[test]
    fn zipf_mass_concentrates_on_recent_keys() {
        let mut p = period(Distribution::Zipf { alpha: 2.0 });
        p.queries_per_batch = 1200;
        p.selectivity = 0.01;
        let cfg = cfg_with(vec![p], 256, 1);
        let mix = gen_query_mix(&cfg, 0, None).unwrap();
        let (lo, hi) = live_domain(&cfg, 0, 0);
        let span = (hi - lo + 1) as f64;
        let (mut newest, mut oldest) = (0usize, 0usize);
        for q in &mix {
            let center = (q.predicates[0].lo + q.predicates[0].hi) as f64 / 2.0;
            let f = (center - lo as f64) / span;
            if f >= 0.75 {
                newest += 1;
            } else if f < 0.25 {
                oldest += 1;
            }
        }
        assert!(
            newest as f64 >= 3.0 * (oldest.max(1)) as f64,
            "recent quartile got {newest}, oldest {oldest}"
        );
    }

    #[test]
    fn fractional_predicate_columns_hit_the_mean() {
        let mut p = period(Distribution::Uniform);
        p.predicate_columns = vec![(0, 1.0), (1, 1.0), (2, 1.0)];
        p.avg_predicate_columns = 1.5;
        p.queries_per_batch = 2000;
        let cfg = cfg_with(vec![p], 64, 1);
        let mix = gen_query_mix(&cfg, 0, None).unwrap();
        let mean = mix.iter().map(|q| q.predicates.len() as f64).sum::<f64>() / mix.len() as f64;
        assert!((mean - 1.5).abs() < 0.08, "mean predicate count {mean}");
        // Projection mirrors the predicate columns.
        for q in &mix {
            let cols: Vec<usize> = q.predicates.iter().map(|p| p.column).collect();
            assert_eq!(q.projection, cols);
        }
    }

    #[test]
    fn gaussian_center_advances_with_batches() {
        let mut p = period(Distribution::Gaussian { sigma: 0.5 });
        p.queries_per_batch = 200;
        p.selectivity = 0.01;
        p.shifting_rate = 1.0;
        let cfg = cfg_with(vec![p], 256, 12);
        let mean_center = |mix: &[RangeQuery]| {
            mix.iter()
                .map(|q| (q.predicates[0].lo + q.predicates[0].hi) as f64 / 2.0)
                .sum::<f64>()
                / mix.len() as f64
        };
        let m0 = gen_query_mix(&cfg, 0, None).unwrap();
        let m6 = gen_query_mix(&cfg, 6, Some(&m0)).unwrap();
        let (c0, c6) = (mean_center(&m0), mean_center(&m6));
        // Anchors sit at batch*rows + rows/2: 128 and 1664.
        assert!(c0 < 400.0, "batch-0 centers average {c0}");
        assert!(c6 > 1200.0, "batch-6 centers average {c6}");
    }

    #[test]
    fn pool_batches_issue_no_queries() {
        let mut cfg = cfg_with(
            vec![period(Distribution::Uniform), period(Distribution::Uniform)],
            32,
            2,
        );
        cfg.initial_pool_periods = 1;
        assert!(gen_query_mix(&cfg, 0, None).unwrap().is_empty());
        assert!(gen_query_mix(&cfg, 1, None).unwrap().is_empty());
        assert!(!gen_query_mix(&cfg, 2, None).unwrap().is_empty());
        let trace = generate_trace(&cfg).unwrap();
        let ingests = trace.iter().filter(|e| matches!(e, TraceEvent::Ingest { .. })).count();
        assert_eq!(ingests, 4);
    }
}
