//! Geometric types and numeric kernels.

mod types;

pub mod dlt;
pub mod hull;
pub mod lsq;
pub mod rotation;

pub use dlt::{dlt_homography_4pt, fit_homography, ransac_homography};
pub use hull::{convex_hull, hull_perimeter, min_area_rect, MinAreaRect};
pub use lsq::{kkt_residual, solve_lsq, LsqSolution, SparseLsqProblem};
pub use rotation::{closest_z_rotation, procrustes_fit};
pub use types::*;
