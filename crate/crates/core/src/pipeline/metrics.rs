use std::collections::BTreeSet;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, VoxelKey};
use crate::view_space::{CameraIntrinsics, View, VirtualScanner};

/// Ground-truth voxels seen from at least one candidate view, the reference
/// set for surface coverage.
#[derive(Debug, Clone)]
pub struct CoverageReference {
    resolution: f64,
    visible: BTreeSet<VoxelKey>,
}

impl CoverageReference {
    pub fn new(scanner: &VirtualScanner, views: &[View]) -> Result<Self> {
        let per_view: Vec<Vec<VoxelKey>> = views
            .par_iter()
            .map(|v| scanner.visible_voxels(v))
            .collect();
        let visible: BTreeSet<VoxelKey> = per_view.into_iter().flatten().collect();
        if visible.is_empty() {
            return Err(Error::Degenerate(
                "no ground-truth voxel is visible from any view".into(),
            ));
        }
        Ok(Self {
            resolution: scanner.grid().resolution(),
            visible,
        })
    }

    pub fn visible_count(&self) -> usize {
        self.visible.len()
    }

    /// Percentage of reference voxels occupied by `reconstructed`.
    pub fn percent(&self, reconstructed: &PointCloud) -> f64 {
        let seen =
            reconstructed.occupied_voxels(&crate::geometry::Point3::origin(), self.resolution);
        let hit = self.visible.iter().filter(|k| seen.contains(k)).count();
        100.0 * hit as f64 / self.visible.len() as f64
    }
}

/// Share of the ground-truth voxels visible from the view space that the
/// reconstruction contains, in percent.
pub fn surface_coverage(
    reconstructed: &PointCloud,
    ground_truth: &PointCloud,
    views: &[View],
    camera: &CameraIntrinsics,
    resolution: f64,
) -> Result<f64> {
    let scanner = VirtualScanner::new(ground_truth, resolution, *camera)?;
    Ok(CoverageReference::new(&scanner, views)?.percent(reconstructed))
}

/// Wall-clock time of each pipeline stage. Kept apart from the metrics so
/// metric tables stay reproducible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageTimings(pub Vec<(&'static str, Duration)>);

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.0.iter().map(|(_, d)| *d).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Views executed: initial, next-best and planned.
    pub number_of_views: usize,
    /// Percent of view-space-visible ground-truth voxels observed.
    pub surface_coverage: f64,
    /// Path length through the planned views from the last pre-planning
    /// view, meters.
    pub movement_cost: f64,
    /// `movement_cost` plus the moves between the pre-planning views.
    pub movement_cost_inclusive: f64,
    /// Chamfer distance between the aligned prior and the current ground
    /// truth, meters.
    pub chamfer_after_registration: f64,
    pub chamfer_before_registration: f64,
    pub planned_views: usize,
}
