use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, VoxelKey};
use crate::occupancy::OccupancyGrid;

use super::View;

/// Pinhole camera used to cull points outside the field of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraIntrinsics {
    pub vertical_fov_deg: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            vertical_fov_deg: 60.0,
            width: 320,
            height: 240,
            near: 0.01,
        }
    }
}

impl CameraIntrinsics {
    pub fn in_frustum(&self, view: &View, p: &Point3) -> bool {
        let c = view.to_camera(p);
        if c.z < self.near {
            return false;
        }
        let tan_v = (0.5 * self.vertical_fov_deg.to_radians()).tan();
        let tan_h = tan_v * self.width as f64 / self.height as f64;
        (c.x / c.z).abs() <= tan_h && (c.y / c.z).abs() <= tan_v
    }
}

/// Simulated depth sensor over a fixed ground-truth cloud.
///
/// The ground truth is voxelized once; a scan keeps every ground-truth point
/// inside the frustum whose voxel is reached unoccluded by a ray from the view
/// position to the voxel center. Scans are deterministic and safe to run in
/// parallel.
#[derive(Debug, Clone)]
pub struct VirtualScanner {
    ground_truth: PointCloud,
    grid: OccupancyGrid,
    members: BTreeMap<VoxelKey, Vec<usize>>,
    camera: CameraIntrinsics,
}

impl VirtualScanner {
    pub fn new(
        ground_truth: &PointCloud,
        resolution: f64,
        camera: CameraIntrinsics,
    ) -> Result<Self> {
        if ground_truth.is_empty() {
            return Err(Error::EmptyCloud);
        }
        ground_truth.validate()?;
        let grid = OccupancyGrid::from_cloud(ground_truth, resolution)?;
        let mut members: BTreeMap<VoxelKey, Vec<usize>> = BTreeMap::new();
        for (i, p) in ground_truth.points.iter().enumerate() {
            members.entry(grid.key_of(p)).or_default().push(i);
        }
        Ok(Self {
            ground_truth: ground_truth.clone(),
            grid,
            members,
            camera,
        })
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn ground_truth(&self) -> &PointCloud {
        &self.ground_truth
    }

    pub fn camera(&self) -> &CameraIntrinsics {
        &self.camera
    }

    /// Ground-truth voxels seen from `view`, in key order.
    pub fn visible_voxels(&self, view: &View) -> Vec<VoxelKey> {
        self.members
            .iter()
            .filter(|(key, idx)| {
                idx.iter()
                    .any(|&i| self.camera.in_frustum(view, &self.ground_truth.points[i]))
                    && self
                        .grid
                        .point_visible(&view.position, &self.grid.center_of(key))
            })
            .map(|(key, _)| *key)
            .collect()
    }

    pub fn scan(&self, view: &View) -> PointCloud {
        let mut idx: Vec<usize> = self
            .visible_voxels(view)
            .iter()
            .flat_map(|k| self.members[k].iter().copied())
            .filter(|&i| self.camera.in_frustum(view, &self.ground_truth.points[i]))
            .collect();
        idx.sort_unstable();
        let mut cloud: PointCloud = idx
            .into_iter()
            .map(|i| self.ground_truth.points[i])
            .collect();
        cloud.frame_id = self.ground_truth.frame_id.clone();
        cloud
    }

    /// Scans of several views, computed in parallel, in input order.
    pub fn scan_many(&self, views: &[&View]) -> Vec<PointCloud> {
        views.par_iter().map(|v| self.scan(v)).collect()
    }
}

/// One-off scan of `ground_truth` from `view` at the given map resolution.
pub fn virtual_scan(
    ground_truth: &PointCloud,
    view: &View,
    camera: &CameraIntrinsics,
    resolution: f64,
) -> Result<PointCloud> {
    Ok(VirtualScanner::new(ground_truth, resolution, *camera)?.scan(view))
}
