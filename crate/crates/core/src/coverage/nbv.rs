use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::VoxelKey;
use crate::occupancy::{OccupancyGrid, VoxelState};
use crate::view_space::View;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NbvChoice {
    pub view_id: usize,
    /// Boundary voxels the view would look at from the unknown side.
    pub gain: usize,
}

/// Occupied voxels with at least one unknown face neighbor, in key order.
pub fn boundary_voxels(grid: &OccupancyGrid) -> Vec<VoxelKey> {
    grid.occupied_keys()
        .into_iter()
        .filter(|k| {
            k.face_neighbors()
                .iter()
                .any(|n| grid.state(n) == VoxelState::Unknown)
        })
        .collect()
}

/// Whether `view` sees `key` unoccluded with the ray arriving through
/// unknown space, i.e. would observe the voxel's unexplored side.
pub fn reveals(grid: &OccupancyGrid, view: &View, key: &VoxelKey) -> bool {
    let target = grid.center_of(key);
    let Some((hit, t)) = grid.first_hit(&view.position, &target) else {
        return false;
    };
    if hit != *key {
        return false;
    }
    let dir = target - view.position;
    let before = view.position + dir * t - dir.normalize() * (1e-6 * grid.resolution());
    grid.state(&grid.key_of(&before)) == VoxelState::Unknown
}

/// Gain of every candidate view, in input order.
pub fn view_gains(grid: &OccupancyGrid, views: &[View]) -> Vec<usize> {
    let boundary = boundary_voxels(grid);
    views
        .par_iter()
        .map(|v| boundary.iter().filter(|k| reveals(grid, v, k)).count())
        .collect()
}

/// The unvisited view with the largest gain; ties go to the lowest id.
pub fn next_best_view(
    grid: &OccupancyGrid,
    views: &[View],
    visited: &[usize],
) -> Result<NbvChoice> {
    let open: Vec<View> = views
        .iter()
        .filter(|v| !visited.contains(&v.id))
        .cloned()
        .collect();
    if open.is_empty() {
        return Err(Error::NoCandidateView);
    }
    let gains = view_gains(grid, &open);
    let (view_id, gain) = open
        .iter()
        .zip(gains)
        .map(|(v, g)| (v.id, g))
        .min_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)))
        .expect("non-empty");
    log::debug!("next best view {view_id} with gain {gain}");
    Ok(NbvChoice { view_id, gain })
}
