use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::visibility::VisibilityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoverMode {
    Exact,
    Greedy,
}

impl std::str::FromStr for CoverMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(CoverMode::Exact),
            "greedy" => Ok(CoverMode::Greedy),
            other => Err(Error::invalid(format!("unknown cover mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimality {
    /// Proven minimum; `lower_bound == objective`.
    Exact,
    /// Greedy cover, either requested or returned after the search budget ran
    /// out.
    Greedy,
}

impl std::fmt::Display for Optimality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Optimality::Exact => "exact",
            Optimality::Greedy => "greedy",
        })
    }
}

/// Search effort limit for the exact solver, counted in branch-and-bound
/// nodes so that results do not depend on machine speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveBudget {
    pub max_nodes: u64,
}

impl Default for SolveBudget {
    fn default() -> Self {
        Self {
            max_nodes: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverSolution {
    /// Selected view ids, ascending.
    pub selected: Vec<usize>,
    pub objective: usize,
    pub optimality: Optimality,
    /// Proven lower bound on the minimum cover size.
    pub lower_bound: usize,
    /// Rows that had to be covered (not seen by a visited view and not
    /// uncoverable).
    pub constrained_rows: Vec<usize>,
    /// Rows already seen by visited views.
    pub precovered: usize,
    pub uncoverable: Vec<usize>,
    pub nodes_explored: u64,
}

impl CoverSolution {
    /// Constrained rows seen by each selected view.
    pub fn covered_counts(&self, matrix: &VisibilityMatrix) -> Result<Vec<(usize, usize)>> {
        let mut rows = FixedBitSet::with_capacity(matrix.rows());
        rows.extend(self.constrained_rows.iter().copied());
        self.selected
            .iter()
            .map(|&v| Ok((v, matrix.column(v)?.intersection_count(&rows))))
            .collect()
    }
}

/// Minimum set of unvisited views covering every row not already seen by a
/// visited view. Uncoverable rows recorded in the matrix are skipped.
///
/// Exact mode returns the lexicographically smallest id set among all
/// minimum covers.
pub fn solve_cover(
    matrix: &VisibilityMatrix,
    visited: &[usize],
    mode: CoverMode,
    budget: SolveBudget,
) -> Result<CoverSolution> {
    let mut residual = FixedBitSet::with_capacity(matrix.rows());
    residual.insert_range(..);
    for &r in matrix.uncoverable() {
        residual.set(r, false);
    }
    let eligible = residual.count_ones(..);
    for &v in visited {
        residual.difference_with(matrix.column(v)?);
    }
    let precovered = eligible - residual.count_ones(..);

    let mut candidates: Vec<(usize, FixedBitSet)> = matrix
        .columns()
        .filter(|(id, _)| !visited.contains(id))
        .map(|(id, col)| {
            let mut c = col.clone();
            c.intersect_with(&residual);
            (id, c)
        })
        .collect();
    candidates.sort_by_key(|(id, _)| *id);

    let mut reachable = FixedBitSet::with_capacity(matrix.rows());
    for (_, c) in &candidates {
        reachable.union_with(c);
    }
    let missing: Vec<usize> = residual.difference(&reachable).collect();
    if !missing.is_empty() {
        return Err(Error::Infeasible { points: missing });
    }

    let greedy = greedy_cover(&candidates, &residual);
    let mut solution = CoverSolution {
        objective: greedy.len(),
        selected: greedy,
        optimality: Optimality::Greedy,
        lower_bound: 0,
        constrained_rows: residual.ones().collect(),
        precovered,
        uncoverable: matrix.uncoverable().to_vec(),
        nodes_explored: 0,
    };
    solution.selected.sort_unstable();

    let instance = Reduced::new(&candidates, &residual);
    let mut search = Search {
        instance: &instance,
        nodes: 0,
        max_nodes: budget.max_nodes,
    };
    let all = instance.all_rows();
    let root_bound = search.lower_bound(&all, 0);
    solution.lower_bound = root_bound.min(solution.objective);
    if mode == CoverMode::Greedy {
        return Ok(solution);
    }

    match search.exact(solution.objective, root_bound) {
        Ok(cols) => {
            solution.selected = cols.into_iter().map(|c| instance.ids[c]).collect();
            solution.objective = solution.selected.len();
            solution.optimality = Optimality::Exact;
            solution.lower_bound = solution.objective;
        }
        Err(Exhausted { proven_bound }) => {
            log::warn!(
                "set cover search budget of {} nodes exhausted; keeping greedy cover of {}",
                budget.max_nodes,
                solution.objective
            );
            solution.lower_bound = proven_bound
                .max(solution.lower_bound)
                .min(solution.objective);
        }
    }
    solution.nodes_explored = search.nodes;
    Ok(solution)
}

/// Repeatedly takes the view adding the most uncovered rows; ties go to the
/// lowest id. `candidates` must be sorted by id.
fn greedy_cover(candidates: &[(usize, FixedBitSet)], residual: &FixedBitSet) -> Vec<usize> {
    let mut uncovered = residual.clone();
    let mut picked = Vec::new();
    while !uncovered.is_clear() {
        let mut best: Option<(usize, usize)> = None;
        for (i, (_, c)) in candidates.iter().enumerate() {
            let gain = c.intersection_count(&uncovered);
            if gain > 0 && best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let Some((i, _)) = best else { break };
        uncovered.difference_with(&candidates[i].1);
        picked.push(candidates[i].0);
    }
    picked
}

/// Instance after dropping dominated views and rows, re-indexed densely.
/// Columns stay in id order.
struct Reduced {
    ids: Vec<usize>,
    cols: Vec<FixedBitSet>,
    /// Columns covering each row, ascending.
    row_cols: Vec<Vec<usize>>,
}

impl Reduced {
    fn new(candidates: &[(usize, FixedBitSet)], residual: &FixedBitSet) -> Self {
        // A view whose rows are a subset of a lower-id view's rows never
        // appears in the lexicographically smallest minimum cover.
        let mut kept: Vec<&(usize, FixedBitSet)> = Vec::new();
        for cand in candidates {
            if cand.1.is_clear() || kept.iter().any(|k| cand.1.is_subset(&k.1)) {
                continue;
            }
            kept.push(cand);
        }

        // A row whose covering views are a superset of another row's is
        // covered whenever that row is.
        let mut rows: Vec<FixedBitSet> = residual
            .ones()
            .map(|r| {
                let mut s = FixedBitSet::with_capacity(kept.len());
                for (c, k) in kept.iter().enumerate() {
                    if k.1.contains(r) {
                        s.insert(c);
                    }
                }
                s
            })
            .collect();
        rows.sort_by(|a, b| {
            a.count_ones(..)
                .cmp(&b.count_ones(..))
                .then_with(|| a.as_slice().cmp(b.as_slice()))
        });
        rows.dedup();
        let mut essential: Vec<FixedBitSet> = Vec::new();
        for r in rows {
            if !essential.iter().any(|e| e.is_subset(&r)) {
                essential.push(r);
            }
        }

        let mut cols = vec![FixedBitSet::with_capacity(essential.len()); kept.len()];
        let row_cols: Vec<Vec<usize>> = essential
            .iter()
            .enumerate()
            .map(|(r, s)| {
                let cs: Vec<usize> = s.ones().collect();
                for &c in &cs {
                    cols[c].insert(r);
                }
                cs
            })
            .collect();
        Self {
            ids: kept.iter().map(|k| k.0).collect(),
            cols,
            row_cols,
        }
    }

    fn all_rows(&self) -> FixedBitSet {
        let mut all = FixedBitSet::with_capacity(self.row_cols.len());
        all.insert_range(..);
        all
    }
}

struct Exhausted {
    proven_bound: usize,
}

struct Search<'a> {
    instance: &'a Reduced,
    nodes: u64,
    max_nodes: u64,
}

impl Search<'_> {
    /// Minimum cover size given a feasible upper bound, then the
    /// lexicographically smallest cover of that size (as column indices).
    fn exact(&mut self, upper: usize, root_bound: usize) -> Result<Vec<usize>, Exhausted> {
        let all = self.instance.all_rows();
        let mut optimum = upper;
        for k in root_bound..upper {
            match self.feasible(&all, 0, k) {
                Ok(true) => {
                    optimum = k;
                    break;
                }
                Ok(false) => {}
                Err(()) => return Err(Exhausted { proven_bound: k }),
            }
        }

        let mut chosen = Vec::with_capacity(optimum);
        let mut uncovered = all;
        let mut next = 0;
        while !uncovered.is_clear() {
            let left = optimum - chosen.len() - 1;
            let mut found = false;
            let from = next;
            for c in from..self.instance.cols.len() {
                if self.instance.cols[c].is_disjoint(&uncovered) {
                    continue;
                }
                let mut rest = uncovered.clone();
                rest.difference_with(&self.instance.cols[c]);
                match self.feasible(&rest, c + 1, left) {
                    Ok(true) => {
                        chosen.push(c);
                        uncovered = rest;
                        next = c + 1;
                        found = true;
                        break;
                    }
                    Ok(false) => {}
                    Err(()) => {
                        return Err(Exhausted {
                            proven_bound: optimum,
                        })
                    }
                }
            }
            assert!(found, "a cover of the proven size must exist");
        }
        Ok(chosen)
    }

    /// Whether `uncovered` can be covered by at most `k` columns with index
    /// at least `min_col`. Branches on the row with the fewest options.
    fn feasible(&mut self, uncovered: &FixedBitSet, min_col: usize, k: usize) -> Result<bool, ()> {
        if uncovered.is_clear() {
            return Ok(true);
        }
        if k == 0 {
            return Ok(false);
        }
        self.nodes += 1;
        if self.nodes > self.max_nodes {
            return Err(());
        }
        if self.lower_bound(uncovered, min_col) > k {
            return Ok(false);
        }
        let row = uncovered
            .ones()
            .min_by_key(|&r| self.options(r, min_col).len())
            .expect("non-empty");
        let mut branches: Vec<(usize, usize)> = self
            .options(row, min_col)
            .iter()
            .map(|&c| (c, self.instance.cols[c].intersection_count(uncovered)))
            .collect();
        branches.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        for (c, _) in branches {
            let mut rest = uncovered.clone();
            rest.difference_with(&self.instance.cols[c]);
            if self.feasible(&rest, min_col, k - 1)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn options(&self, row: usize, min_col: usize) -> &[usize] {
        let cs = &self.instance.row_cols[row];
        &cs[cs.partition_point(|&c| c < min_col)..]
    }

    /// Larger of the coverage-ceiling bound and a packing of rows that share
    /// no usable column. `usize::MAX` if some row has no usable column.
    fn lower_bound(&self, uncovered: &FixedBitSet, min_col: usize) -> usize {
        let n = uncovered.count_ones(..);
        if n == 0 {
            return 0;
        }
        let max_cov = self.instance.cols[min_col.min(self.instance.cols.len())..]
            .iter()
            .map(|c| c.intersection_count(uncovered))
            .max()
            .unwrap_or(0);
        if max_cov == 0 {
            return usize::MAX;
        }
        let mut rows: Vec<usize> = uncovered.ones().collect();
        rows.sort_by_key(|&r| (self.options(r, min_col).len(), r));
        if rows
            .first()
            .is_some_and(|&r| self.options(r, min_col).is_empty())
        {
            return usize::MAX;
        }
        let mut used = FixedBitSet::with_capacity(self.instance.cols.len());
        let mut packed = 0;
        for r in rows {
            let opts = self.options(r, min_col);
            if opts.iter().all(|&c| !used.contains(c)) {
                packed += 1;
                used.extend(opts.iter().copied());
            }
        }
        n.div_ceil(max_cov).max(packed)
    }
}
