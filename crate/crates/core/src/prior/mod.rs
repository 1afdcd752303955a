//! Per-image similarity prior: a rotation angle and a scale for every image.
//!
//! In Manhattan mode the angles come from vanishing points shared across the
//! panorama; in fallback mode only the pairwise relative rolls are used and
//! the result is straightened globally.

pub mod dominant;
pub mod robust;
pub mod solve;

use serde::{Deserialize, Serialize};

pub use dominant::{align_vps, estimate_dominant_directions, initial_rolls, AlignedVps, DominantDirections};
pub use robust::{path_vote, reject_outliers, sigmoid};
pub use solve::{estimate_scales, fallback_rotations, solve_rotations, vp_divergence};

use crate::error::{Error, Result};
use crate::geom::{Angle2D, Rot3};
use crate::pose::{RotationEstimate, StitchGraph};
use crate::vp::VpTriplet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Residual above which an image's VPs are outliers.
    pub tau: f64,
    /// Longest voting path, in edges.
    pub f_max: usize,
    /// Path support tolerance, degrees.
    pub support_deg: f64,
    pub sigmoid_k: f64,
    /// Smoothness weight against the VP data term.
    pub lambda: f64,
    /// Divergence at or below which Manhattan mode is used.
    pub epsilon0: f64,
    /// A VP pair seeds a hypothesis when within this many degrees of orthogonal.
    pub orthogonality_deg: f64,
    pub hypothesis_support_deg: f64,
    pub max_hypotheses: usize,
    pub gn_max_iterations: usize,
    pub gn_tolerance: f64,
    /// Disables outlier rejection and path voting (every VP image weighs 1).
    pub robust: bool,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            tau: 0.15,
            f_max: 3,
            support_deg: 5.0,
            sigmoid_k: 10.0,
            lambda: 10.0,
            epsilon0: 0.10,
            orthogonality_deg: 10.0,
            hypothesis_support_deg: 5.0,
            max_hypotheses: 200,
            gn_max_iterations: 50,
            gn_tolerance: 1e-10,
            robust: true,
        }
    }
}

/// Requested prior mode; `Auto` decides from the VP divergence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeRequest {
    #[default]
    Auto,
    #[serde(alias = "force-manhattan")]
    Manhattan,
    #[serde(alias = "force-fallback")]
    Fallback,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorMode {
    Manhattan,
    Fallback,
}

#[derive(Clone, Debug)]
pub struct SimilarityPrior {
    pub theta: Vec<Angle2D>,
    pub scales: Vec<f64>,
    pub mode: PriorMode,
    /// `None` when no dominant frame or no inlier exists (infinite divergence).
    pub epsilon: Option<f64>,
    pub rho: f64,
    pub alpha: Vec<Option<Angle2D>>,
    pub psi: Vec<Option<f64>>,
    pub inliers: Vec<bool>,
    pub residuals: Vec<Option<f64>>,
    pub dominant: Option<Rot3>,
    pub warnings: Vec<String>,
}

/// Everything computed from the VPs before the mode decision.
struct VpEvidence {
    dominant: DominantDirections,
    alpha: Vec<Option<Angle2D>>,
    inliers: Vec<bool>,
    rho: f64,
    epsilon: f64,
    tied: bool,
}

fn vp_evidence(
    g: &StitchGraph,
    est: &RotationEstimate,
    triplets: &[Option<VpTriplet>],
    cfg: &PriorConfig,
) -> Result<VpEvidence> {
    let aligned = align_vps(triplets, &est.rotations, g.reference);
    let dominant = estimate_dominant_directions(&aligned, cfg)?;
    let (alpha, tied) = initial_rolls(&dominant, triplets)?;
    let (inliers, rho) = if cfg.robust {
        reject_outliers(&dominant.residuals, cfg.tau)?
    } else {
        let inl: Vec<bool> = alpha.iter().map(Option::is_some).collect();
        let count = inl.iter().filter(|&&b| b).count();
        if count == 0 {
            return Err(Error::AllOutliers);
        }
        let rho = count as f64 / inl.len() as f64;
        (inl, rho)
    };
    let epsilon = vp_divergence(&dominant.residuals, &inliers, rho)?;
    Ok(VpEvidence {
        dominant,
        alpha,
        inliers,
        rho,
        epsilon,
        tied,
    })
}

/// Rolls and scales for every image of a connected stitch graph whose edges
/// carry relative rolls.
pub fn estimate_prior(
    g: &StitchGraph,
    est: &RotationEstimate,
    triplets: &[Option<VpTriplet>],
    request: ModeRequest,
    cfg: &PriorConfig,
) -> Result<SimilarityPrior> {
    let n = g.len();
    let (scales, mut warnings) = estimate_scales(g)?;
    let evidence = if request == ModeRequest::Fallback {
        None
    } else {
        match vp_evidence(g, est, triplets, cfg) {
            Ok(ev) => Some(ev),
            Err(e @ (Error::NoHypothesis | Error::AllOutliers)) if request == ModeRequest::Auto => {
                warnings.push(format!("{e}; using fallback"));
                None
            }
            Err(e) => return Err(e),
        }
    };
    if let Some(ev) = &evidence {
        if ev.tied {
            warnings.push("world axis labeling tied; first labeling kept".into());
        }
    }
    let manhattan = match (&evidence, request) {
        (Some(_), ModeRequest::Manhattan) => true,
        (Some(ev), ModeRequest::Auto) => ev.epsilon <= cfg.epsilon0,
        _ => false,
    };
    let (psi, theta) = match (&evidence, manhattan) {
        (Some(ev), true) => {
            let psi = if cfg.robust {
                path_vote(g, &ev.inliers, &ev.alpha, cfg)
            } else {
                ev.inliers.iter().map(|&b| b.then_some(1.0)).collect()
            };
            let theta = solve_rotations(g, &ev.alpha, &psi, cfg.lambda)?;
            (psi, theta)
        }
        _ => (vec![None; n], fallback_rotations(g, &scales)?),
    };
    Ok(SimilarityPrior {
        theta,
        scales,
        mode: if manhattan { PriorMode::Manhattan } else { PriorMode::Fallback },
        epsilon: evidence.as_ref().map(|ev| ev.epsilon),
        rho: evidence.as_ref().map_or(0.0, |ev| ev.rho),
        alpha: evidence.as_ref().map_or_else(|| vec![None; n], |ev| ev.alpha.clone()),
        psi,
        inliers: evidence.as_ref().map_or_else(|| vec![false; n], |ev| ev.inliers.clone()),
        residuals: evidence.as_ref().map_or_else(|| vec![None; n], |ev| ev.dominant.residuals.clone()),
        dominant: evidence.as_ref().map(|ev| ev.dominant.d),
        warnings,
    })
}

/// Zero rotation and unit scale for every image.
pub fn identity_prior(n: usize) -> SimilarityPrior {
    SimilarityPrior {
        theta: vec![Angle2D::default(); n],
        scales: vec![1.0; n],
        mode: PriorMode::Fallback,
        epsilon: None,
        rho: 0.0,
        alpha: vec![None; n],
        psi: vec![None; n],
        inliers: vec![false; n],
        residuals: vec![None; n],
        dominant: None,
        warnings: vec![],
    }
}

#[derive(Serialize)]
struct PriorDump {
    mode: PriorMode,
    epsilon: Option<f64>,
    rho: f64,
    theta_deg: Vec<f64>,
    scales: Vec<f64>,
    alpha_deg: Vec<Option<f64>>,
    psi: Vec<Option<f64>>,
    inliers: Vec<usize>,
    residuals: Vec<Option<f64>>,
    dominant: Option<[f64; 9]>,
    warnings: Vec<String>,
}

impl SimilarityPrior {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(PriorDump {
            mode: self.mode,
            epsilon: self.epsilon,
            rho: self.rho,
            theta_deg: self.theta.iter().map(|t| t.degrees()).collect(),
            scales: self.scales.clone(),
            alpha_deg: self.alpha.iter().map(|a| a.map(Angle2D::degrees)).collect(),
            psi: self.psi.clone(),
            inliers: self.inliers.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect(),
            residuals: self.residuals.clone(),
            dominant: self.dominant.map(|d| d.to_row_major()),
            warnings: self.warnings.clone(),
        })
        .unwrap_or(serde_json::Value::Null)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Homography, UnitVec3};
    use crate::ingest::{ImageInfo, PointMatch};
    use crate::pose::StitchEdge;
    use nalgebra::{Matrix3, Vector2, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// World z down; camera looks along `(cos p, sin p, 0)`, rolled by `roll`.
    fn camera(pan_deg: f64, roll_deg: f64) -> Rot3 {
        let (s, c) = pan_deg.to_radians().sin_cos();
        let level = Matrix3::from_columns(&[Vector3::new(-s, c, 0.0), Vector3::new(0.0, 0.0, 1.0), Vector3::new(c, s, 0.0)]);
        Rot3::rz(-roll_deg.to_radians()) * Rot3::from_matrix(level.transpose()).unwrap()
    }

    fn chain(cams: &[Rot3], reference: usize) -> (StitchGraph, RotationEstimate) {
        let n = cams.len();
        let rots: Vec<Rot3> = cams.iter().map(|c| *c * cams[reference].transpose()).collect();
        let mut g = StitchGraph {
            nodes: (0..n).map(|i| ImageInfo::new(i, 200, 150).unwrap()).collect(),
            edges: (0..n - 1)
                .map(|i| StitchEdge {
                    a: i,
                    b: i + 1,
                    matches: (0..12)
                        .map(|k| PointMatch {
                            pi: Vector2::new(150.0 + (k % 4) as f64 * 10.0, 30.0 + k as f64 * 8.0),
                            pj: Vector2::new(40.0 + (k % 4) as f64 * 10.0, 30.0 + k as f64 * 8.0),
                        })
                        .collect(),
                    homography: Homography::identity(),
                    candidate_matches: 12,
                    beta: Angle2D::default(),
                })
                .collect(),
            reference,
        };
        let est = RotationEstimate {
            rotations: rots,
            focals: vec![300.0; n],
            mean_reprojection_error: 0.0,
            reference,
        };
        crate::pose::assign_relative_rolls(&mut g, &est).unwrap();
        (g, est)
    }

    fn triplets(cams: &[Rot3]) -> Vec<Option<VpTriplet>> {
        cams.iter()
            .map(|c| {
                Some(VpTriplet {
                    v: [0, 1, 2].map(|k| UnitVec3::new(c.matrix().column(k).into_owned()).unwrap()),
                    support: [10; 3],
                    focal: 300.0,
                    residual: 0.0,
                })
            })
            .collect()
    }

    #[test]
    fn manhattan_recovers_negated_rolls() {
        let rolls = [-4.0, 2.0, 0.0, 5.0, -1.0];
        let cams: Vec<Rot3> = rolls.iter().enumerate().map(|(k, r)| camera(40.0 + 15.0 * k as f64, *r)).collect();
        let (g, est) = chain(&cams, 2);
        let p = estimate_prior(&g, &est, &triplets(&cams), ModeRequest::Auto, &PriorConfig::default()).unwrap();
        assert_eq!(p.mode, PriorMode::Manhattan);
        assert!(p.epsilon.unwrap() < 1e-12);
        for (t, r) in p.theta.iter().zip(rolls) {
            assert!((t.degrees() + r).abs() < 1e-6, "{} vs {r}", t.degrees());
        }
    }

    #[test]
    fn reference_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cams: Vec<Rot3> = (0..6).map(|k| camera(15.0 * k as f64, rng.random_range(-5.0..5.0))).collect();
        let mut trips = triplets(&cams);
        // perturb VPs slightly so the solve is not trivially exact
        for t in trips.iter_mut().flatten() {
            let w = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 0.01;
            let r = Rot3::from_axis_angle(&w);
            t.v = t.v.map(|v| UnitVec3::new(r.apply(v.as_vector())).unwrap());
        }
        let solve = |r| {
            let (g, est) = chain(&cams, r);
            estimate_prior(&g, &est, &trips, ModeRequest::Auto, &PriorConfig::default()).unwrap()
        };
        let (a, b) = (solve(0), solve(4));
        assert_eq!(a.mode, b.mode);
        for i in 0..6 {
            let da = (a.theta[i] - a.theta[0]).degrees();
            let db = (b.theta[i] - b.theta[0]).degrees();
            assert!((da - db).abs() < 0.1, "{i}: {da} vs {db}");
        }
    }

    #[test]
    fn scattered_vps_fall_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cams: Vec<Rot3> = (0..5).map(|k| camera(15.0 * k as f64, 0.0)).collect();
        let (g, est) = chain(&cams, 0);
        let random: Vec<Rot3> = (0..5)
            .map(|_| {
                let w = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                Rot3::from_axis_angle(&(w.normalize() * rng.random_range(0.5..3.0)))
            })
            .collect();
        let p = estimate_prior(&g, &est, &triplets(&random), ModeRequest::Auto, &PriorConfig::default()).unwrap();
        assert_eq!(p.mode, PriorMode::Fallback);
        let forced = estimate_prior(&g, &est, &triplets(&cams), ModeRequest::Fallback, &PriorConfig::default()).unwrap();
        assert_eq!(forced.mode, PriorMode::Fallback);
        assert!(forced.epsilon.is_none());
    }

    #[test]
    fn no_vps_falls_back_or_errors() {
        let cams: Vec<Rot3> = (0..3).map(|k| camera(15.0 * k as f64, 0.0)).collect();
        let (g, est) = chain(&cams, 0);
        let none = vec![None; 3];
        let p = estimate_prior(&g, &est, &none, ModeRequest::Auto, &PriorConfig::default()).unwrap();
        assert_eq!(p.mode, PriorMode::Fallback);
        assert!(p.to_json()["epsilon"].is_null());
        assert!(matches!(
            estimate_prior(&g, &est, &none, ModeRequest::Manhattan, &PriorConfig::default()),
            Err(Error::NoHypothesis)
        ));
    }
}
