//! Growth candidates: grid points close to the current scan but away from the
//! aligned prior.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point3, PointCloud, VoxelKey};
use crate::spatial::SpatialIndex;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InflationParams {
    /// Candidates must lie strictly closer than this to the scan.
    pub gamma_near: f64,
    /// Candidates must lie strictly farther than this from the prior.
    pub gamma_far: f64,
    pub candidate_voxel: f64,
}

impl Default for InflationParams {
    fn default() -> Self {
        Self {
            gamma_near: 0.003,
            gamma_far: 0.005,
            candidate_voxel: 0.004,
        }
    }
}

impl InflationParams {
    pub fn validate(&self) -> Result<()> {
        if [self.gamma_near, self.gamma_far, self.candidate_voxel]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
        {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "inflation parameters must be positive: {self:?}"
            )))
        }
    }

    /// Region searched for candidates.
    pub fn candidate_region(&self, prior: &PointCloud, scan: &PointCloud) -> Option<Aabb> {
        let a = prior.bounding_box()?;
        let b = scan.bounding_box()?;
        Some(a.union(&b).dilated(2.0 * self.gamma_near))
    }
}

/// Grid index range `[lo, hi]` of voxel centers lying inside `[min, max]`
/// along one axis.
pub(crate) fn center_range(min: f64, max: f64, h: f64) -> (i64, i64) {
    (
        (min / h - 0.5).ceil() as i64,
        (max / h - 0.5).floor() as i64,
    )
}

/// Accepts every voxel-center candidate within `gamma_near` of `scan` and
/// beyond `gamma_far` from `prior`. Output is sorted by grid index.
pub fn inflate(
    prior: &PointCloud,
    scan: &PointCloud,
    params: &InflationParams,
) -> Result<PointCloud> {
    if prior.is_empty() || scan.is_empty() {
        return Err(Error::EmptyCloud);
    }
    params.validate()?;
    prior.validate()?;
    scan.validate()?;
    let h = params.candidate_voxel;
    let origin = Point3::origin();
    let region = params
        .candidate_region(prior, scan)
        .expect("non-empty clouds have a bounding box");

    // Only grid points within gamma_near of some scan point can pass, so
    // enumerate the cube around each scan point instead of the whole region.
    let mut candidates = BTreeSet::new();
    for q in &scan.points {
        let (lo, hi): (Vec<_>, Vec<_>) = (0..3)
            .map(|a| center_range(q[a] - params.gamma_near, q[a] + params.gamma_near, h))
            .unzip();
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    candidates.insert(VoxelKey([i, j, k]));
                }
            }
        }
    }

    let scan_index = SpatialIndex::new(&scan.points);
    let prior_index = SpatialIndex::new(&prior.points);
    let accepted: Vec<Point3> = candidates
        .into_iter()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|key| key.center(&origin, h))
        .filter(|c| region.contains(c) && accepts(c, &scan_index, &prior_index, params))
        .collect();
    log::debug!("inflation accepted {} candidate(s)", accepted.len());
    Ok(PointCloud {
        points: accepted,
        frame_id: prior.frame_id.clone(),
    })
}

pub(crate) fn accepts(
    c: &Point3,
    scan: &SpatialIndex,
    prior: &SpatialIndex,
    params: &InflationParams,
) -> bool {
    let near = scan
        .nearest(c)
        .is_some_and(|n| n.distance < params.gamma_near);
    near && prior
        .nearest(c)
        .is_some_and(|n| n.distance > params.gamma_far)
}

/// The planning approximation: aligned prior, current scan and growth
/// candidates, concatenated in that order.
pub fn assemble_approximation(
    prior: &PointCloud,
    scan: &PointCloud,
    inflated: &PointCloud,
) -> Result<PointCloud> {
    if prior.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(PointCloud::concat([prior, scan, inflated]))
}
