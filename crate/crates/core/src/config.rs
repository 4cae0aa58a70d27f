//! Workload configuration: schema, validation, and parameter sweeps.
//!
//! A workload is a sequence of periods, each ingesting a fixed number of
//! batches and issuing a query mix whose predicate columns, value
//! distribution, selectivity, and batch-to-batch shifting rate are all
//! configured per period. Configs load from JSON; a sweep clones the base
//! config once per value of a single parameter, leaving everything else
//! (including the seed) untouched.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Result, SimError};

fn default_avg_cols() -> f64 {
    1.0
}

fn default_lag() -> u32 {
    3
}

/// How query centers are drawn over the live key domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Distribution {
    /// Centers uniform over the live domain.
    Uniform,
    /// Centers skewed toward the high (most recently ingested) end: the
    /// domain is split into 100 equal buckets and bucket k from the top is
    /// chosen with weight 1/k^alpha.
    Zipf { alpha: f64 },
    /// Centers normal around an anchor that advances one batch per batch;
    /// sigma is expressed in batch-equivalent key units.
    Gaussian { sigma: f64 },
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Uniform => write!(f, "uniform"),
            Distribution::Zipf { alpha } => write!(f, "zipf:{alpha}"),
            Distribution::Gaussian { sigma } => write!(f, "gauss:{sigma}"),
        }
    }
}

impl Distribution {
    /// Parse a skewness token: `uniform`, `zipf:<alpha>`, or `gauss:<sigma>`.
    pub fn parse_token(token: &str) -> Result<Distribution> {
        let bad = |t: &str| SimError::Config(format!("unknown skewness token '{t}'"));
        if token.eq_ignore_ascii_case("uniform") {
            return Ok(Distribution::Uniform);
        }
        if let Some((kind, value)) = token.split_once(':') {
            let v: f64 = value.parse().map_err(|_| bad(token))?;
            if kind.eq_ignore_ascii_case("zipf") {
                return Ok(Distribution::Zipf { alpha: v });
            }
            if kind.eq_ignore_ascii_case("gauss") || kind.eq_ignore_ascii_case("gaussian") {
                return Ok(Distribution::Gaussian { sigma: v });
            }
        }
        Err(bad(token))
    }
}

/// One period of the workload: a query-mix regime held for
/// `batches_per_period` batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodConfig {
    /// Weighted predicate columns, e.g. `[[0, 2.0], [3, 1.0]]` for a 2:1 mix.
    pub predicate_columns: Vec<(usize, f64)>,
    pub distribution: Distribution,
    /// Fraction of the key domain each predicate covers.
    pub selectivity: f64,
    /// Fraction of queries regenerated between consecutive batches.
    pub shifting_rate: f64,
    pub queries_per_batch: usize,
    /// Mean number of predicate columns per query; fractional parts become
    /// a coin flip for one extra column.
    #[serde(default = "default_avg_cols")]
    pub avg_predicate_columns: f64,
    /// Event-time lag window for ingested rows, in batches.
    #[serde(default = "default_lag")]
    pub lag_batches: u32,
    /// Clustering key a clairvoyant policy would pick this period; defaults
    /// to the highest-weight predicate column (ties to the lowest index).
    #[serde(default)]
    pub oracle_key: Option<usize>,
}

impl PeriodConfig {
    /// The configured oracle key, or the highest-weight predicate column.
    pub fn effective_oracle_key(&self) -> usize {
        if let Some(k) = self.oracle_key {
            return k;
        }
        self.predicate_columns
            .iter()
            .fold((usize::MAX, f64::NEG_INFINITY), |best, &(col, w)| {
                if w > best.1 || (w == best.1 && col < best.0) {
                    (col, w)
                } else {
                    best
                }
            })
            .0
    }
}

/// Full workload description; one file drives every policy identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub seed: u64,
    pub columns: usize,
    pub partition_capacity: usize,
    pub rows_per_batch: usize,
    pub batches_per_period: u32,
    /// Leading periods that only ingest (building the initial pool) and
    /// issue no queries.
    #[serde(default)]
    pub initial_pool_periods: u32,
    /// Batches before this index never recluster, regardless of policy.
    #[serde(default)]
    pub recluster_start_batch: u32,
    pub periods: Vec<PeriodConfig>,
}

impl WorkloadConfig {
    pub fn from_json_str(text: &str) -> Result<WorkloadConfig> {
        let cfg: WorkloadConfig = serde_json::from_str(text)
            .map_err(|e| SimError::Config(format!("bad workload config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<WorkloadConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn total_batches(&self) -> u32 {
        self.periods.len() as u32 * self.batches_per_period
    }

    /// Period index owning a global batch index.
    pub fn period_of(&self, batch: u32) -> usize {
        (batch / self.batches_per_period) as usize
    }

    /// Batches in pool periods ingest data but issue no queries.
    pub fn is_pool_batch(&self, batch: u32) -> bool {
        self.period_of(batch) < self.initial_pool_periods as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(SimError::Config(msg));
        if self.columns == 0 {
            return fail("columns must be >= 1".into());
        }
        if self.partition_capacity == 0 {
            return fail("partition_capacity must be >= 1".into());
        }
        if self.rows_per_batch == 0 {
            return fail("rows_per_batch must be >= 1".into());
        }
        if self.batches_per_period == 0 {
            return fail("batches_per_period must be >= 1".into());
        }
        if self.periods.is_empty() {
            return fail("at least one period is required".into());
        }
        if self.initial_pool_periods as usize >= self.periods.len() {
            return fail(format!(
                "initial_pool_periods {} must be below the period count {}",
                self.initial_pool_periods,
                self.periods.len()
            ));
        }
        for (i, p) in self.periods.iter().enumerate() {
            let ctx = format!("period {i}");
            if p.predicate_columns.is_empty() {
                return fail(format!("{ctx}: predicate_columns must be non-empty"));
            }
            for &(col, w) in &p.predicate_columns {
                if col >= self.columns {
                    return fail(format!("{ctx}: predicate column {col} out of range"));
                }
                if !(w > 0.0) {
                    return fail(format!("{ctx}: weight for column {col} must be positive"));
                }
            }
            if !(p.selectivity > 0.0 && p.selectivity <= 1.0) {
                return fail(format!("{ctx}: selectivity must lie in (0, 1]"));
            }
            if !(0.0..=1.0).contains(&p.shifting_rate) {
                return fail(format!("{ctx}: shifting_rate must lie in [0, 1]"));
            }
            if p.queries_per_batch == 0 {
                return fail(format!("{ctx}: queries_per_batch must be >= 1"));
            }
            if !(p.avg_predicate_columns >= 1.0)
                || p.avg_predicate_columns > p.predicate_columns.len() as f64
            {
                return fail(format!(
                    "{ctx}: avg_predicate_columns must lie in [1, {}]",
                    p.predicate_columns.len()
                ));
            }
            match p.distribution {
                Distribution::Zipf { alpha } if !(alpha > 0.0) => {
                    return fail(format!("{ctx}: zipf alpha must be positive"));
                }
                Distribution::Gaussian { sigma } if !(sigma > 0.0) => {
                    return fail(format!("{ctx}: gaussian sigma must be positive"));
                }
                _ => {}
            }
            if let Some(k) = p.oracle_key {
                if k >= self.columns {
                    return fail(format!("{ctx}: oracle_key {k} out of range"));
                }
            }
        }
        Ok(())
    }
}

/// Sweepable parameters; each takes a list of textual values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    StartBatch,
    ShiftingRate,
    Skewness,
    PredicateColumnsPerQuery,
    Selectivity,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<SweepParam> {
        match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "start_batch" => Ok(SweepParam::StartBatch),
            "shifting_rate" => Ok(SweepParam::ShiftingRate),
            "skewness" => Ok(SweepParam::Skewness),
            "predicate_columns_per_query" => Ok(SweepParam::PredicateColumnsPerQuery),
            "selectivity" => Ok(SweepParam::Selectivity),
            other => Err(SimError::Config(format!("unknown sweep parameter '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::StartBatch => "start_batch",
            SweepParam::ShiftingRate => "shifting_rate",
            SweepParam::Skewness => "skewness",
            SweepParam::PredicateColumnsPerQuery => "predicate_columns_per_query",
            SweepParam::Selectivity => "selectivity",
        }
    }
}

/// One config per value, identical to the base otherwise (same seed).
/// Returns (value label, config) pairs in input order.
pub fn sweep_config(
    base: &WorkloadConfig,
    parameter: &str,
    values: &[String],
) -> Result<Vec<(String, WorkloadConfig)>> {
    let param = SweepParam::parse(parameter)?;
    let mut out = Vec::with_capacity(values.len());
    for v in values {
        let mut cfg = base.clone();
        match param {
            SweepParam::StartBatch => {
                cfg.recluster_start_batch = v
                    .parse()
                    .map_err(|_| SimError::Config(format!("bad start_batch value '{v}'")))?;
            }
            SweepParam::ShiftingRate => {
                let rate: f64 = v
                    .parse()
                    .map_err(|_| SimError::Config(format!("bad shifting_rate value '{v}'")))?;
                for p in &mut cfg.periods {
                    p.shifting_rate = rate;
                }
            }
            SweepParam::Skewness => {
                let dist = Distribution::parse_token(v)?;
                for p in &mut cfg.periods {
                    p.distribution = dist;
                }
            }
            SweepParam::PredicateColumnsPerQuery => {
                let avg: f64 = v.parse().map_err(|_| {
                    SimError::Config(format!("bad predicate_columns_per_query value '{v}'"))
                })?;
                for p in &mut cfg.periods {
                    p.avg_predicate_columns = avg;
                }
            }
            SweepParam::Selectivity => {
                let sel: f64 = v
                    .parse()
                    .map_err(|_| SimError::Config(format!("bad selectivity value '{v}'")))?;
                for p in &mut cfg.periods {
                    p.selectivity = sel;
                }
            }
        }
        cfg.validate()?;
        out.push((v.clone(), cfg));
    }
    Ok(out)
}

/// Built-in workload shapes used by the experiments and the CLI.
pub mod presets {
    use super::*;

    const M: usize = 32;
    const ROWS: usize = 50 * M;

    fn period(
        cols: &[(usize, f64)],
        distribution: Distribution,
        shifting_rate: f64,
        avg_cols: f64,
    ) -> PeriodConfig {
        PeriodConfig {
            predicate_columns: cols.to_vec(),
            distribution,
            selectivity: 0.05,
            shifting_rate,
            queries_per_batch: 8,
            avg_predicate_columns: avg_cols,
            lag_batches: 3,
            oracle_key: None,
        }
    }

    /// Six periods of twelve batches walking from a query-free pool through
    /// mild drift, high drift, a skewed regime, a predicate switch, and a
    /// mixed-predicate tail.
    pub fn dynamic(seed: u64) -> WorkloadConfig {
        WorkloadConfig {
            seed,
            columns: 4,
            partition_capacity: M,
            rows_per_batch: ROWS,
            batches_per_period: 12,
            initial_pool_periods: 1,
            recluster_start_batch: 12,
            periods: vec![
                period(&[(0, 1.0)], Distribution::Uniform, 0.0, 1.0),
                period(&[(0, 1.0)], Distribution::Gaussian { sigma: 1.0 }, 0.10, 1.0),
                period(&[(0, 1.0)], Distribution::Gaussian { sigma: 1.0 }, 0.25, 1.0),
                period(&[(0, 1.0)], Distribution::Zipf { alpha: 2.0 }, 0.75, 1.0),
                period(&[(1, 1.0)], Distribution::Uniform, 0.25, 1.0),
                period(
                    &[(0, 2.0), (1, 1.0)],
                    Distribution::Gaussian { sigma: 2.0 },
                    0.25,
                    1.5,
                ),
            ],
        }
    }

    /// A stationary read-heavy single-column workload: a short pool period,
    /// then five periods of skewed but unmoving predicates on one attribute
    /// column.
    pub fn stable(seed: u64) -> WorkloadConfig {
        let mut p = period(&[(1, 1.0)], Distribution::Zipf { alpha: 1.5 }, 0.05, 1.0);
        p.selectivity = 0.02;
        p.queries_per_batch = 16;
        WorkloadConfig {
            seed,
            columns: 2,
            partition_capacity: M,
            rows_per_batch: ROWS,
            batches_per_period: 12,
            initial_pool_periods: 1,
            recluster_start_batch: 12,
            periods: vec![
                period(&[(1, 1.0)], Distribution::Uniform, 0.0, 1.0),
                p.clone(),
                p.clone(),
                p.clone(),
                p.clone(),
                p,
            ],
        }
    }

    /// Two equally weighted query populations on different attribute
    /// columns; a single fixed clustering key can serve only one of them.
    pub fn two_population(seed: u64) -> WorkloadConfig {
        let mut p = period(
            &[(1, 1.0), (2, 1.0)],
            Distribution::Zipf { alpha: 1.2 },
            0.05,
            1.0,
        );
        p.selectivity = 0.02;
        WorkloadConfig {
            seed,
            columns: 3,
            partition_capacity: M,
            rows_per_batch: ROWS,
            batches_per_period: 12,
            initial_pool_periods: 1,
            recluster_start_batch: 12,
            periods: vec![
                period(&[(1, 1.0), (2, 1.0)], Distribution::Uniform, 0.0, 1.0),
                p.clone(),
                p,
            ],
        }
    }

    /// Name-based lookup used by the CLI.
    pub fn by_name(name: &str, seed: u64) -> Result<WorkloadConfig> {
        match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "dynamic" => Ok(dynamic(seed)),
            "stable" => Ok(stable(seed)),
            "two-population" => Ok(two_population(seed)),
            other => Err(SimError::Config(format!("unknown preset '{other}'"))),
        }
    }
}
