//! Baseline warp: every image moved rigidly by its prior similarity, with
//! no mesh deformation.

use super::energy::{DeformationReport, WarpConfig, WarpResult};
use super::mesh::{mark_overlaps, GridMesh};
use crate::error::Result;
use crate::prior::solve::prior_centers;
use crate::prior::SimilarityPrior;
use crate::pose::StitchGraph;

/// Image `i` becomes `c_i + s_i R(theta_i) (p - center_i)`, with the canvas
/// centers `c_i` fitted to the matches.
pub fn similarity_placement(g: &StitchGraph, prior: &SimilarityPrior, cfg: &WarpConfig) -> Result<WarpResult> {
    let centers = prior_centers(g, &prior.theta, &prior.scales)?;
    let mut meshes = Vec::with_capacity(g.len());
    for (i, info) in g.nodes.iter().enumerate() {
        let sim = prior.theta[i].image_rotation() * prior.scales[i];
        let c = info.center();
        let mut m = GridMesh::new(info, cfg.cols, cfg.rows)?;
        for (d, o) in m.deformed.iter_mut().zip(&m.original) {
            *d = centers[i] + sim * (o - c);
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
