use fixedbitset::FixedBitSet;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::occupancy::{OccupancyGrid, SurfacePoints};
use crate::view_space::View;

/// Which surface points (rows) each candidate view (column) sees.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMatrix {
    rows: usize,
    view_ids: Vec<usize>,
    columns: Vec<FixedBitSet>,
    uncoverable: Vec<usize>,
}

impl VisibilityMatrix {
    /// Matrix from explicit per-view row sets. Rows seen by no view are not
    /// flagged as uncoverable; the solver reports them as infeasible.
    pub fn from_sets(
        rows: usize,
        views: impl IntoIterator<Item = (usize, Vec<usize>)>,
    ) -> Result<Self> {
        let mut view_ids = Vec::new();
        let mut columns = Vec::new();
        for (id, set) in views {
            let mut col = FixedBitSet::with_capacity(rows);
            for r in set {
                if r >= rows {
                    return Err(Error::invalid(format!(
                        "row {r} out of range for {rows} rows"
                    )));
                }
                col.insert(r);
            }
            view_ids.push(id);
            columns.push(col);
        }
        let mut sorted = view_ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate view id in visibility matrix"));
        }
        Ok(Self {
            rows,
            view_ids,
            columns,
            uncoverable: Vec::new(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn view_ids(&self) -> &[usize] {
        &self.view_ids
    }

    pub fn column(&self, view_id: usize) -> Result<&FixedBitSet> {
        self.position(view_id).map(|i| &self.columns[i])
    }

    pub(crate) fn columns(&self) -> impl Iterator<Item = (usize, &FixedBitSet)> {
        self.view_ids.iter().copied().zip(&self.columns)
    }

    pub fn get(&self, row: usize, view_id: usize) -> Result<bool> {
        Ok(self.column(view_id)?.contains(row))
    }

    /// Rows not visible from any view; excluded from cover constraints.
    pub fn uncoverable(&self) -> &[usize] {
        &self.uncoverable
    }

    fn position(&self, view_id: usize) -> Result<usize> {
        self.view_ids
            .iter()
            .position(|&v| v == view_id)
            .ok_or(Error::UnknownView(view_id))
    }
}

/// Ray-casts every surface point from every view, in parallel over views.
pub fn build_visibility(
    surface: &SurfacePoints,
    views: &[View],
    grid: &OccupancyGrid,
) -> Result<VisibilityMatrix> {
    if surface.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let rows = surface.len();
    let columns: Vec<FixedBitSet> = views
        .par_iter()
        .map(|v| {
            let mut col = FixedBitSet::with_capacity(rows);
            for (r, p) in surface.cloud.points.iter().enumerate() {
                if grid.point_visible(&v.position, p) {
                    col.insert(r);
                }
            }
            col
        })
        .collect();
    let mut any = FixedBitSet::with_capacity(rows);
    for c in &columns {
        any.union_with(c);
    }
    let uncoverable: Vec<usize> = any.zeroes().collect();
    if !uncoverable.is_empty() {
        log::warn!(
            "{} surface point(s) are visible from no view",
            uncoverable.len()
        );
    }
    Ok(VisibilityMatrix {
        rows,
        view_ids: views.iter().map(|v| v.id).collect(),
        columns,
        uncoverable,
    })
}
