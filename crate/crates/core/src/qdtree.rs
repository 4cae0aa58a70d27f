//! Workload-driven partitioning tree.
//!
//! The tree greedily splits a row set on predicate boundary values: candidate
//! cuts are the endpoints of the workload's predicate intervals, each cut
//! sends rows with `value < threshold` left and the rest right, and the cut
//! that lets the workload skip the most rows wins (ties to the lowest column,
//! then the lowest threshold). Splitting recurses while a node holds more
//! rows than one partition and some cut still has positive benefit. Leaves
//! are numbered in depth-first order and `route` replays the comparisons to
//! drop a row into its leaf.

use std::collections::BTreeSet;

use crate::query::RangeQuery;
use crate::table::Row;
use crate::{Result, SimError};

#[derive(Debug, Clone)]
enum Node {
    Internal { column: usize, threshold: i64, left: usize, right: usize },
    Leaf { id: u64 },
}

#[derive(Debug, Clone)]
pub struct QdTree {
    nodes: Vec<Node>,
    root: usize,
    dims: usize,
    leaves: u64,
}

/// A candidate cut scored against the workload on one node's rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cut {
    pub column: usize,
    pub threshold: i64,
    pub skipped: u64,
}

/// Score every candidate on `rows` and return the best cut, if any candidate
/// separates the rows into two non-empty sides with positive skipping.
pub fn best_cut(rows: &[&Row], queries: &[RangeQuery], dims: usize) -> Option<Cut> {
    // Candidate thresholds per column: the predicate interval endpoints.
    let mut candidates: BTreeSet<(usize, i64)> = BTreeSet::new();
    for q in queries {
        for p in &q.predicates {
            if p.column < dims {
                candidates.insert((p.column, p.lo));
                candidates.insert((p.column, p.hi));
            }
        }
    }
    if candidates.is_empty() || rows.is_empty() {
        return None;
    }

    let mut best: Option<Cut> = None;
    let mut sorted: Vec<i64> = Vec::with_capacity(rows.len());
    let mut current_col = usize::MAX;
    for (column, threshold) in candidates {
        if column != current_col {
            sorted.clear();
            sorted.extend(rows.iter().map(|r| r[column]));
            sorted.sort_unstable();
            current_col = column;
        }
        let left = sorted.partition_point(|&v| v < threshold);
        if left == 0 || left == sorted.len() {
            continue;
        }
        let left_range = (sorted[0], sorted[left - 1]);
        let right_range = (sorted[left], sorted[sorted.len() - 1]);
        let mut skipped = 0u64;
        for q in queries {
            if let Some(p) = q.predicate_on(column) {
                if p.hi < left_range.0 || p.lo > left_range.1 {
                    skipped += left as u64;
                }
                if p.hi < right_range.0 || p.lo > right_range.1 {
                    skipped += (sorted.len() - left) as u64;
                }
            }
        }
        if skipped == 0 {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => {
                // Higher benefit wins; ties to lowest column, then threshold.
                // Candidate iteration is already (column, threshold) sorted,
                // so a strict improvement is the only way to replace.
                skipped > b.skipped
            }
        };
        if better {
            best = Some(Cut { column, threshold, skipped });
        }
    }
    best
}

impl QdTree {
    /// Build a tree over `rows` tuned to `queries`. `capacity` is the row
    /// budget of one partition; nodes at or under it are not split.
    pub fn build(
        rows: &[Row],
        queries: &[RangeQuery],
        dims: usize,
        capacity: usize,
    ) -> Result<QdTree> {
        if capacity == 0 {
            return Err(SimError::Usage("partition capacity must be positive".into()));
        }
        if dims == 0 {
            return Err(SimError::Schema("table needs at least one column".into()));
        }
        for q in queries {
            q.validate(dims)?;
        }
        let mut tree = QdTree { nodes: Vec::new(), root: 0, dims, leaves: 0 };
        let refs: Vec<&Row> = rows.iter().collect();
        tree.root = tree.grow(refs, queries, capacity);
        Ok(tree)
    }

    fn grow(&mut self, rows: Vec<&Row>, queries: &[RangeQuery], capacity: usize) -> usize {
        // Depth-first, left side fully built before the right, so leaf ids
        // read left to right.
        if rows.len() > capacity {
            if let Some(cut) = best_cut(&rows, queries, self.dims) {
                let (left_rows, right_rows): (Vec<&Row>, Vec<&Row>) =
                    rows.into_iter().partition(|r| r[cut.column] < cut.threshold);
                let left = self.grow(left_rows, queries, capacity);
                let right = self.grow(right_rows, queries, capacity);
                self.nodes.push(Node::Internal {
                    column: cut.column,
                    threshold: cut.threshold,
                    left,
                    right,
                });
                return self.nodes.len() - 1;
            }
        }
        let id = self.leaves;
        self.leaves += 1;
        self.nodes.push(Node::Leaf { id });
        self.nodes.len() - 1
    }

    pub fn leaves(&self) -> u64 {
        self.leaves
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Drop a row into its leaf.
    pub fn route(&self, row: &[i64]) -> Result<u64> {
        if row.len() != self.dims {
            return Err(SimError::Schema(format!(
                "row has {} columns, tree expects {}",
                row.len(),
                self.dims
            )));
        }
        let mut at = self.root;
        loop {
            match &self.nodes[at] {
                Node::Internal { column, threshold, left, right } => {
                    at = if row[*column] < *threshold { *left } else { *right };
                }
                Node::Leaf { id } => return Ok(*id),
            }
        }
    }

    /// The root's cut, when the tree has one.
    pub fn root_cut(&self) -> Option<(usize, i64)> {
        match &self.nodes[self.root] {
            Node::Internal { column, threshold, .. } => Some((*column, *threshold)),
            Node::Leaf { .. } => None,
        }
    }
}
