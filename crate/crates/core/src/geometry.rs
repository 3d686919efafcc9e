//! Point clouds, voxel binning and cloud-to-cloud distances.
//!
//! All coordinates are meters in one shared global frame. Voxels are binned
//! with `floor(coord / size)` relative to a grid origin (the global origin
//! unless stated otherwise), so a point lying exactly on a voxel face belongs
//! to the higher-index voxel.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::spatial::SpatialIndex;

pub type Point3 = nalgebra::Point3<f64>;

pub const DEFAULT_FRAME: &str = "world";

/// Integer voxel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelKey(pub [i64; 3]);

impl VoxelKey {
    pub fn of(point: &Point3, origin: &Point3, size: f64) -> Self {
        let rel = (point - origin) / size;
        VoxelKey([
            rel.x.floor() as i64,
            rel.y.floor() as i64,
            rel.z.floor() as i64,
        ])
    }

    pub fn center(&self, origin: &Point3, size: f64) -> Point3 {
        let [i, j, k] = self.0;
        origin + Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * size
    }

    pub fn offset(&self, dx: i64, dy: i64, dz: i64) -> Self {
        let [i, j, k] = self.0;
        VoxelKey([i + dx, j + dy, k + dz])
    }

    /// The six face-adjacent neighbors.
    pub fn face_neighbors(&self) -> [VoxelKey; 6] {
        [
            self.offset(1, 0, 0),
            self.offset(-1, 0, 0),
            self.offset(0, 1, 0),
            self.offset(0, -1, 0),
            self.offset(0, 0, 1),
            self.offset(0, 0, -1),
        ]
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point3>) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = *iter.next()?;
        Some(iter.fold(
            Aabb {
                min: first,
                max: first,
            },
            |b, p| Aabb {
                min: b.min.inf(p),
                max: b.max.sup(p),
            },
        ))
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn dilated(&self, margin: f64) -> Aabb {
        let m = Vector3::repeat(margin);
        Aabb {
            min: self.min - m,
            max: self.max + m,
        }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn center(&self) -> Point3 {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// An ordered list of points in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub frame_id: String,
}

impl Default for PointCloud {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl From<Vec<Point3>> for PointCloud {
    fn from(points: Vec<Point3>) -> Self {
        Self::new(points)
    }
}

impl FromIterator<Point3> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point3>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            frame_id: DEFAULT_FRAME.to_string(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Rejects NaN or infinite coordinates.
    pub fn validate(&self) -> Result<()> {
        match self
            .points
            .iter()
            .position(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            Some(i) => Err(Error::invalid(format!(
                "point {i} has a non-finite coordinate"
            ))),
            None => Ok(()),
        }
    }

    pub fn bounding_box(&self) -> Option<Aabb> {
        Aabb::from_points(&self.points)
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let sum: Vector3<f64> = self.points.iter().map(|p| p.coords).sum();
        Some(Point3::from(sum / self.points.len() as f64))
    }

    pub fn map(&self, f: impl Fn(&Point3) -> Point3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(f).collect(),
            frame_id: self.frame_id.clone(),
        }
    }

    /// Concatenates clouds in order, keeping the first cloud's frame.
    pub fn concat<'a>(clouds: impl IntoIterator<Item = &'a PointCloud>) -> PointCloud {
        let mut out = PointCloud::default();
        let mut first = true;
        for c in clouds {
            if first {
                out.frame_id = c.frame_id.clone();
                first = false;
            }
            out.points.extend_from_slice(&c.points);
        }
        out
    }

    /// Set of voxel keys occupied by at least one point.
    pub fn occupied_voxels(
        &self,
        origin: &Point3,
        size: f64,
    ) -> std::collections::BTreeSet<VoxelKey> {
        self.points
            .iter()
            .map(|p| VoxelKey::of(p, origin, size))
            .collect()
    }
}

/// One representative per occupied voxel: the centroid of its member points.
///
/// Output is ordered by voxel key, so it does not depend on input order.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> Result<PointCloud> {
    if voxel_size.is_nan() || voxel_size <= 0.0 {
        return Err(Error::invalid(format!(
            "voxel size must be positive, got {voxel_size}"
        )));
    }
    let origin = Point3::origin();
    let mut bins: BTreeMap<VoxelKey, Vec<Vector3<f64>>> = BTreeMap::new();
    for p in &cloud.points {
        bins.entry(VoxelKey::of(p, &origin, voxel_size))
            .or_default()
            .push(p.coords);
    }
    let points = bins
        .into_values()
        .map(|members| {
            // Sort members so the float sum is order-independent.
            let mut members = members;
            members.sort_by(|a, b| {
                a.iter()
                    .zip(b.iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let n = members.len() as f64;
            Point3::from(members.iter().sum::<Vector3<f64>>() / n)
        })
        .collect();
    Ok(PointCloud {
        points,
        frame_id: cloud.frame_id.clone(),
    })
}

/// Mean 1-NN distance from every point of `from` to `to`.
pub fn directed_mean_distance(from: &PointCloud, to: &SpatialIndex) -> Result<f64> {
    if from.is_empty() || to.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let sum: f64 = from
        .points
        .iter()
        .map(|p| to.nearest(p).map(|n| n.distance).unwrap_or(0.0))
        .sum();
    Ok(sum / from.len() as f64)
}

/// Symmetric Chamfer distance in meters: the average of the two directed
/// mean nearest-neighbor distances (unsquared).
pub fn chamfer_distance(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let ia = SpatialIndex::new(&a.points);
    let ib = SpatialIndex::new(&b.points);
    let ab = directed_mean_distance(a, &ib)?;
    let ba = directed_mean_distance(b, &ia)?;
    Ok(0.5 * (ab + ba))
}
