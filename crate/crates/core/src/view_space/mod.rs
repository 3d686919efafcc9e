//! Candidate view sets around the plant and a virtual depth scanner.

mod scanner;
mod tammes;

use nalgebra::{Matrix3, Rotation3, Vector3};

pub use scanner::{virtual_scan, CameraIntrinsics, VirtualScanner};
pub use tammes::{min_pairwise_angle, solve_tammes, TammesSolution, ViewSpaceKind};

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Distance from the plant center to every candidate view, in meters.
pub const DEFAULT_VIEW_RADIUS: f64 = 0.4;

/// A candidate sensor pose looking at the view-space center.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub id: usize,
    pub position: Point3,
    /// Camera-to-world rotation; the camera looks along its local +z with
    /// +x right and +y down in the image.
    pub orientation: Rotation3<f64>,
}

impl View {
    pub fn look_at(id: usize, position: Point3, center: &Point3) -> Self {
        let forward = (center - position).normalize();
        let hint = if forward.z.abs() > 0.999 {
            Vector3::x()
        } else {
            Vector3::z()
        };
        let right = forward.cross(&hint).normalize();
        let down = forward.cross(&right);
        let m = Matrix3::from_columns(&[right, down, forward]);
        Self {
            id,
            position,
            orientation: Rotation3::from_matrix_unchecked(m),
        }
    }

    pub fn optical_axis(&self) -> Vector3<f64> {
        self.orientation * Vector3::z()
    }

    /// Coordinates of a world point in the camera frame.
    pub fn to_camera(&self, p: &Point3) -> Vector3<f64> {
        self.orientation.inverse() * (p - self.position)
    }

    /// Elevation angle of the view above the horizontal plane through `center`.
    pub fn elevation(&self, center: &Point3) -> f64 {
        let d = self.position - center;
        (d.z / d.norm()).clamp(-1.0, 1.0).asin()
    }
}

#[derive(Debug, Clone)]
pub struct ViewSpace {
    pub kind: ViewSpaceKind,
    pub center: Point3,
    pub radius: f64,
    pub seed: u64,
    pub views: Vec<View>,
    /// Minimum angular separation between view directions, radians.
    pub min_angle: f64,
}

impl ViewSpace {
    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn get(&self, id: usize) -> Result<&View> {
        self.views
            .get(id)
            .filter(|v| v.id == id)
            .ok_or(Error::UnknownView(id))
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.views.iter().map(|v| v.id)
    }
}

/// The standard view space: 32 hemisphere or 63 sphere views.
pub fn build_view_space(
    kind: ViewSpaceKind,
    center: Point3,
    radius: f64,
    seed: u64,
) -> Result<ViewSpace> {
    build_view_space_with_count(kind, kind.default_count(), center, radius, seed)
}

/// Views ordered by descending height, then azimuth; ids are positions in
/// that order.
pub fn build_view_space_with_count(
    kind: ViewSpaceKind,
    count: usize,
    center: Point3,
    radius: f64,
    seed: u64,
) -> Result<ViewSpace> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid(format!(
            "view radius must be positive, got {radius}"
        )));
    }
    let solution = solve_tammes(count, kind, seed)?;
    let mut dirs = solution.directions;
    dirs.sort_by(|a, b| {
        b.z.total_cmp(&a.z)
            .then(a.y.atan2(a.x).total_cmp(&b.y.atan2(b.x)))
    });
    let views = dirs
        .iter()
        .enumerate()
        .map(|(id, d)| View::look_at(id, center + d * radius, &center))
        .collect();
    Ok(ViewSpace {
        kind,
        center,
        radius,
        seed,
        views,
        min_angle: solution.min_angle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_space_has_63_views_on_radius() {
        let c = Point3::new(0.01, -0.02, 0.06);
        let vs = build_view_space(ViewSpaceKind::Sphere, c, DEFAULT_VIEW_RADIUS, 0).unwrap();
        assert_eq!(vs.len(), 63);
        for v in &vs.views {
            assert!(((v.position - c).norm() - 0.4).abs() < 1e-9);
        }
    }

    #[test]
    fn hemisphere_space_has_32_upper_views() {
        let c = Point3::new(0.0, 0.0, 0.06);
        let vs = build_view_space(ViewSpaceKind::Hemisphere, c, DEFAULT_VIEW_RADIUS, 0).unwrap();
        assert_eq!(vs.len(), 32);
        assert!(vs.views.iter().all(|v| v.position.z >= c.z));
    }

    #[test]
    fn optical_axes_point_at_center() {
        let c = Point3::new(0.0, 0.0, 0.06);
        for kind in [ViewSpaceKind::Sphere, ViewSpaceKind::Hemisphere] {
            let vs = build_view_space(kind, c, DEFAULT_VIEW_RADIUS, 1).unwrap();
            for v in &vs.views {
                let to_center = (c - v.position).normalize();
                let err = v.optical_axis().angle(&to_center);
                assert!(err < 1e-9, "view {} off by {err}", v.id);
                let r = v.orientation.matrix();
                assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
                assert!((r.determinant() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn top_view_has_valid_frame() {
        let v = View::look_at(0, Point3::new(0.0, 0.0, 0.4), &Point3::origin());
        assert!((v.optical_axis() - Vector3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        assert!((v.orientation.matrix().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_radius_rejected() {
        assert!(build_view_space(ViewSpaceKind::Sphere, Point3::origin(), 0.0, 0).is_err());
    }
}
