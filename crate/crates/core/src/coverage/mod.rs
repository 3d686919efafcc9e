//! View selection: which candidate views see which surface points, the
//! minimum covering subset, and a greedy next-best view.

mod cover;
mod nbv;
mod visibility;

pub use cover::{solve_cover, CoverMode, CoverSolution, Optimality, SolveBudget};
pub use nbv::{boundary_voxels, next_best_view, reveals, view_gains, NbvChoice};
pub use visibility::{build_visibility, VisibilityMatrix};
