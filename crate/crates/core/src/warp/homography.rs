//! Baseline warp: every image projected onto the reference image plane by
//! the homography of its estimated rotation.

use nalgebra::Matrix3;

use super::energy::{DeformationReport, WarpConfig, WarpResult};
use super::mesh::{mark_overlaps, GridMesh};
use crate::error::{Error, Result};
use crate::geom::Homography;
use crate::ingest::ImageInfo;
use crate::pose::{RotationEstimate, StitchGraph};

fn intrinsics(info: &ImageInfo, f: f64) -> Matrix3<f64> {
    let c = info.center();
    Matrix3::new(f, 0.0, c.x, 0.0, f, c.y, 0.0, 0.0, 1.0)
}

/// `K_r R_r R_i^T K_i^-1` before normalization; its third row gives the
/// depth sign of each mapped ray.
fn raw_homography(g: &StitchGraph, est: &RotationEstimate, i: usize) -> Result<Matrix3<f64>> {
    let r = est.reference;
    let ki = intrinsics(&g.nodes[i], est.focals[i]);
    let kr = intrinsics(&g.nodes[r], est.focals[r]);
    let ki_inv = ki.try_inverse().ok_or_else(|| Error::singular("camera intrinsics"))?;
    Ok(kr * est.rotations[r].matrix() * est.rotations[i].matrix().transpose() * ki_inv)
}

/// Pixels of image `i` to pixels of the reference.
pub fn rotation_homography(g: &StitchGraph, est: &RotationEstimate, i: usize) -> Result<Homography> {
    Homography::new(raw_homography(g, est, i)?)
}

pub fn homography_warp(g: &StitchGraph, est: &RotationEstimate, cfg: &WarpConfig) -> Result<WarpResult> {
    let mut meshes = Vec::with_capacity(g.len());
    for (i, info) in g.nodes.iter().enumerate() {
        let raw = raw_homography(g, est, i)?;
        let h = Homography::new(raw)?;
        let mut m = GridMesh::new(info, cfg.cols, cfg.rows)?;
        for (d, o) in m.deformed.iter_mut().zip(&m.original) {
            let w = raw.row(2).dot(&o.push(1.0).transpose());
            if w <= 1e-9 {
                return Err(Error::DegenerateConfiguration(format!(
                    "image {i} reaches behind the reference image plane"
                )));
            }
            *d = h.apply(o).ok_or(Error::DegenerateConfiguration(format!("image {i}: vertex maps to infinity")))?;
        }
        meshes.push(m);
    }
    mark_overlaps(&mut meshes);
    let report = DeformationReport {
        energy_initial: 0.0,
        energy_final: 0.0,
        fold_overs: meshes.iter().map(GridMesh::fold_overs).collect(),
    };
    Ok(WarpResult {
        meshes,
        report,
        warnings: vec![],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rot3;
    use nalgebra::Vector2;

    #[test]
    fn reference_is_untouched_and_neighbour_follows_rotation() {
        let infos: Vec<ImageInfo> = (0..2).map(|i| ImageInfo::new(i, 200, 100).unwrap()).collect();
        let g = StitchGraph {
            nodes: infos,
            edges: vec![],
            reference: 0,
        };
        let est = RotationEstimate {
            rotations: vec![Rot3::identity(), Rot3::ry(0.2)],
            focals: vec![300.0, 300.0],
            mean_reprojection_error: 0.0,
            reference: 0,
        };
        let w = homography_warp(&g, &est, &WarpConfig { cols: 4, rows: 2, ..WarpConfig::default() }).unwrap();
        assert_eq!(w.meshes[0].deformed, w.meshes[0].original);
        // the neighbour's center lands where its optical axis meets the reference plane
        let c = w.meshes[1].map_point(&Vector2::new(100.0, 50.0)).unwrap();
        let expected = Vector2::new(100.0 - 300.0 * 0.2f64.tan(), 50.0);
        assert!((c - expected).norm() < 1e-9, "{c:?}");
    }

    #[test]
    fn views_behind_the_plane_are_rejected() {
        let g = StitchGraph {
            nodes: (0..2).map(|i| ImageInfo::new(i, 200, 100).unwrap()).collect(),
            edges: vec![],
            reference: 0,
        };
        let est = RotationEstimate {
            rotations: vec![Rot3::identity(), Rot3::ry(2.0)],
            focals: vec![300.0, 300.0],
            mean_reprojection_error: 0.0,
            reference: 0,
        };
        assert!(matches!(homography_warp(&g, &est, &WarpConfig::default()), Err(Error::DegenerateConfiguration(_))));
    }
}
