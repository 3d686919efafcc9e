//! View planning for periodic plant reconstruction guided by the previous
//! cycle's model.
//!
//! The previous-cycle cloud is non-rigidly registered to a partial scan of
//! the current plant ([`registration`]), inflated toward likely growth
//! ([`inflation`]), voxelized ([`occupancy`]) and covered by a minimum set of
//! candidate views ([`coverage`]), which are then ordered into a shortest open
//! path ([`path`]). [`pipeline`] runs the whole cycle against a virtual scanner
//! ([`view_space`]) and scores it.

pub mod coverage;
pub mod error;
pub mod geometry;
pub mod inflation;
pub mod io;
pub mod occupancy;
pub mod path;
pub mod pipeline;
pub mod registration;
pub mod spatial;
pub mod view_space;

pub use error::{Error, Result};
pub use geometry::{chamfer_distance, voxel_downsample, Aabb, Point3, PointCloud, VoxelKey};
pub use io::{load_cloud, save_cloud};
pub use occupancy::{OccupancyGrid, SurfacePoints, VoxelState};
pub use spatial::{Neighbor, SpatialIndex};
