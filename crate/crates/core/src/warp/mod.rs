//! Mesh-based image deformation under the similarity prior, and compositing.

pub mod composite;
pub mod energy;
pub mod homography;
pub mod mesh;
pub mod placement;

pub use composite::{composite_panorama, CompositeConfig, Panorama};
pub use energy::{
    assemble_energy, solve_deformation, warp_images, DeformationReport, EnergyWeights, GlobalWeighting, WarpConfig,
    WarpResult,
};
pub use homography::{homography_warp, rotation_homography};
pub use placement::similarity_placement;
pub use mesh::{deformed_file_name, mark_overlaps, read_mesh, write_mesh, GridMesh};
