//! Voxel occupancy grid with ray casting.
//!
//! Occupied voxels live in a dense bitmap over their bounding region (plant
//! scale keeps it small); voxels marked free by scan fusion live in a hash set.
//! Anything never touched is unknown. Visibility depends only on occupied
//! voxels.

use std::collections::HashSet;
use std::ops::ControlFlow;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point3, PointCloud, VoxelKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoxelState {
    Occupied,
    Free,
    Unknown,
}

#[derive(Debug, Clone, Default)]
struct DenseBlock {
    min: [i64; 3],
    dims: [usize; 3],
    cells: Vec<bool>,
}

impl DenseBlock {
    fn index(&self, key: &VoxelKey) -> Option<usize> {
        let mut idx = 0usize;
        for a in (0..3).rev() {
            let rel = key.0[a] - self.min[a];
            if rel < 0 || rel as usize >= self.dims[a] {
                return None;
            }
            idx = idx * self.dims[a] + rel as usize;
        }
        Some(idx)
    }

    fn key_at(&self, mut idx: usize) -> VoxelKey {
        let mut k = [0i64; 3];
        for (a, slot) in k.iter_mut().enumerate() {
            *slot = self.min[a] + (idx % self.dims[a]) as i64;
            idx /= self.dims[a];
        }
        VoxelKey(k)
    }

    fn get(&self, key: &VoxelKey) -> bool {
        self.index(key).is_some_and(|i| self.cells[i])
    }

    fn max(&self) -> [i64; 3] {
        [
            self.min[0] + self.dims[0] as i64 - 1,
            self.min[1] + self.dims[1] as i64 - 1,
            self.min[2] + self.dims[2] as i64 - 1,
        ]
    }

    /// Grows the block to cover `lo..=hi`, preserving contents.
    fn reserve(&mut self, lo: [i64; 3], hi: [i64; 3]) {
        let (lo, hi) = if self.cells.is_empty() {
            (lo, hi)
        } else {
            let max = self.max();
            (
                [0, 1, 2].map(|a| lo[a].min(self.min[a])),
                [0, 1, 2].map(|a| hi[a].max(max[a])),
            )
        };
        let dims = [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as usize);
        if !self.cells.is_empty() && lo == self.min && dims == self.dims {
            return;
        }
        let mut grown = DenseBlock {
            min: lo,
            dims,
            cells: vec![false; dims[0] * dims[1] * dims[2]],
        };
        for (i, &set) in self.cells.iter().enumerate() {
            if set {
                let k = self.key_at(i);
                let j = grown.index(&k).expect("grown block covers old block");
                grown.cells[j] = true;
            }
        }
        *self = grown;
    }
}

/// Centers of occupied voxels, in voxel-key order.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePoints {
    pub cloud: PointCloud,
    pub keys: Vec<VoxelKey>,
}

impl SurfacePoints {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct OccupancyGrid {
    resolution: f64,
    origin: Point3,
    occupied: DenseBlock,
    occupied_count: usize,
    free: HashSet<VoxelKey>,
}

impl OccupancyGrid {
    pub fn new(resolution: f64) -> Result<Self> {
        Self::with_origin(resolution, Point3::origin())
    }

    pub fn with_origin(resolution: f64, origin: Point3) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::invalid(format!(
                "grid resolution must be positive, got {resolution}"
            )));
        }
        Ok(Self {
            resolution,
            origin,
            occupied: DenseBlock::default(),
            occupied_count: 0,
            free: HashSet::new(),
        })
    }

    /// A grid with every voxel holding a point of `cloud` marked occupied.
    pub fn from_cloud(cloud: &PointCloud, resolution: f64) -> Result<Self> {
        let mut grid = Self::new(resolution)?;
        grid.insert_cloud(cloud);
        Ok(grid)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> &Point3 {
        &self.origin
    }

    pub fn key_of(&self, p: &Point3) -> VoxelKey {
        VoxelKey::of(p, &self.origin, self.resolution)
    }

    pub fn center_of(&self, key: &VoxelKey) -> Point3 {
        key.center(&self.origin, self.resolution)
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied_count
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    pub fn is_occupied(&self, key: &VoxelKey) -> bool {
        self.occupied.get(key)
    }

    pub fn state(&self, key: &VoxelKey) -> VoxelState {
        if self.occupied.get(key) {
            VoxelState::Occupied
        } else if self.free.contains(key) {
            VoxelState::Free
        } else {
            VoxelState::Unknown
        }
    }

    /// Occupied voxel keys in ascending key order.
    pub fn occupied_keys(&self) -> Vec<VoxelKey> {
        let mut keys: Vec<VoxelKey> = self
            .occupied
            .cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(i, _)| self.occupied.key_at(i))
            .collect();
        keys.sort_unstable();
        keys
    }

    /// World-space box around all occupied voxels, or `None` for an empty grid.
    pub fn occupied_bounds(&self) -> Option<Aabb> {
        if self.occupied_count == 0 {
            return None;
        }
        let max = self.occupied.max();
        let lo = self.origin
            + nalgebra::Vector3::from(self.occupied.min.map(|v| v as f64)) * self.resolution;
        let hi =
            self.origin + nalgebra::Vector3::from(max.map(|v| (v + 1) as f64)) * self.resolution;
        Some(Aabb { min: lo, max: hi })
    }

    /// Marks every voxel containing a point as occupied. Idempotent.
    pub fn insert_cloud(&mut self, cloud: &PointCloud) {
        let keys: Vec<VoxelKey> = cloud.points.iter().map(|p| self.key_of(p)).collect();
        self.insert_keys(&keys);
    }

    pub fn insert_keys(&mut self, keys: &[VoxelKey]) {
        let Some(first) = keys.first() else { return };
        let (mut lo, mut hi) = (first.0, first.0);
        for k in keys {
            for a in 0..3 {
                lo[a] = lo[a].min(k.0[a]);
                hi[a] = hi[a].max(k.0[a]);
            }
        }
        self.occupied.reserve(lo, hi);
        for k in keys {
            let i = self.occupied.index(k).expect("reserved");
            if !self.occupied.cells[i] {
                self.occupied.cells[i] = true;
                self.occupied_count += 1;
                self.free.remove(k);
            }
        }
    }

    /// Fuses a scan taken from `sensor`: endpoints become occupied and the
    /// voxels each ray crosses before its endpoint become free (unless
    /// already occupied).
    pub fn insert_scan(&mut self, sensor: &Point3, cloud: &PointCloud) {
        self.insert_cloud(cloud);
        let mut newly_free = Vec::new();
        for p in &cloud.points {
            let end = self.key_of(p);
            self.traverse(sensor, p, |k, _| {
                if k == end || self.occupied.get(&k) {
                    ControlFlow::Break(())
                } else {
                    newly_free.push(k);
                    ControlFlow::Continue(())
                }
            });
        }
        self.free.extend(newly_free);
    }

    pub fn extract_surface(&self) -> Result<SurfacePoints> {
        if self.occupied_count == 0 {
            return Err(Error::EmptyGrid);
        }
        let keys = self.occupied_keys();
        let cloud = keys.iter().map(|k| self.center_of(k)).collect();
        Ok(SurfacePoints { cloud, keys })
    }

    /// Writes occupied voxel centers as ASCII XYZ (or PLY, by extension).
    pub fn dump_occupied(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::save_cloud(&self.extract_surface()?.cloud, path)
    }

    /// Walks the voxels crossed by the segment `from -> to` in order
    /// (Amanatides–Woo stepping), starting with the voxel holding `from` and
    /// ending with the voxel holding `to` unless `visit` breaks first. The
    /// visitor also receives the segment parameter at which the voxel is
    /// entered.
    pub fn traverse<B>(
        &self,
        from: &Point3,
        to: &Point3,
        mut visit: impl FnMut(VoxelKey, f64) -> ControlFlow<B>,
    ) -> Option<B> {
        let res = self.resolution;
        let d = to - from;
        let mut key = self.key_of(from);
        let end = self.key_of(to);
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for a in 0..3 {
            if d[a] > 0.0 {
                step[a] = 1;
                let boundary = self.origin[a] + (key.0[a] + 1) as f64 * res;
                t_max[a] = (boundary - from[a]) / d[a];
                t_delta[a] = res / d[a];
            } else if d[a] < 0.0 {
                step[a] = -1;
                let boundary = self.origin[a] + key.0[a] as f64 * res;
                t_max[a] = (boundary - from[a]) / d[a];
                t_delta[a] = -res / d[a];
            }
        }
        let budget: i64 = (0..3).map(|a| (end.0[a] - key.0[a]).abs()).sum::<i64>() + 1;
        let mut t_enter = 0.0;
        for _ in 0..=budget {
            if let ControlFlow::Break(b) = visit(key, t_enter) {
                return Some(b);
            }
            if key == end {
                break;
            }
            let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            if t_max[axis] > 1.0 {
                break;
            }
            t_enter = t_max[axis];
            key.0[axis] += step[axis];
            t_max[axis] += t_delta[axis];
        }
        None
    }

    /// First occupied voxel along the segment with the segment parameter
    /// (in `[0, 1]`) where the ray enters it.
    pub fn first_hit(&self, from: &Point3, to: &Point3) -> Option<(VoxelKey, f64)> {
        let bounds = self.occupied_bounds()?;
        // Skip the empty approach: clip the segment to the occupied region
        // padded by one voxel.
        let (t0, t1) = clip_segment(from, to, &bounds.dilated(self.resolution))?;
        let start = from + (to - from) * t0;
        let stop = from + (to - from) * t1;
        self.traverse(&start, &stop, |k, t| {
            if self.occupied.get(&k) {
                ControlFlow::Break((k, t0 + t * (t1 - t0)))
            } else {
                ControlFlow::Continue(())
            }
        })
    }

    /// First occupied voxel along the segment, or `None` if it reaches `to`
    /// without hitting one.
    pub fn cast_ray(&self, from: &Point3, to: &Point3) -> Option<VoxelKey> {
        self.first_hit(from, to).map(|(k, _)| k)
    }

    /// Whether `target` is seen from `view_pos`: the first occupied voxel on
    /// the ray is the target's own voxel, or nothing is hit. Hits entered
    /// within the last half voxel before the target do not occlude it.
    pub fn point_visible(&self, view_pos: &Point3, target: &Point3) -> bool {
        let len = (target - view_pos).norm();
        if len == 0.0 {
            return true;
        }
        match self.first_hit(view_pos, target) {
            None => true,
            Some((hit, t)) => hit == self.key_of(target) || (1.0 - t) * len < 0.5 * self.resolution,
        }
    }
}

/// Parametric interval `[t0, t1] ⊆ [0, 1]` of the segment inside the box.
fn clip_segment(from: &Point3, to: &Point3, b: &Aabb) -> Option<(f64, f64)> {
    let d = to - from;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for a in 0..3 {
        if d[a] == 0.0 {
            if from[a] < b.min[a] || from[a] > b.max[a] {
                return None;
            }
            continue;
        }
        let ta = (b.min[a] - from[a]) / d[a];
        let tb = (b.max[a] - from[a]) / d[a];
        let (lo, hi) = if ta < tb { (ta, tb) } else { (tb, ta) };
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 {
            return None;
        }
    }
    Some((t0, t1))
}
