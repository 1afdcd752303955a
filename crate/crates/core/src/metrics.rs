//! Naturalness of a stitched result: local distortion of the warps (LD) and
//! global direction inconsistency against known camera orientations (GDIC).

use std::fs;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{dlt_homography_4pt, min_area_rect, wrap_pi, Rot3};
use crate::warp::mesh::{mark_overlaps, read_mesh, GridMesh};

/// Coefficient of variation of the Jacobian determinant over one quad,
/// sampled at every integer pixel of the undeformed quad.
pub fn quad_variation(original: &[Vector2<f64>; 4], deformed: &[Vector2<f64>; 4]) -> Result<f64> {
    let h = dlt_homography_4pt(original, deformed)?;
    let lo = original.iter().fold(Vector2::repeat(f64::INFINITY), |a, v| a.inf(v));
    let hi = original.iter().fold(Vector2::repeat(f64::NEG_INFINITY), |a, v| a.sup(v));
    let mut samples = Vec::new();
    let (x0, x1) = (lo.x.ceil() as i64, hi.x.floor() as i64);
    let (y0, y1) = (lo.y.ceil() as i64, hi.y.floor() as i64);
    for y in y0..=y1 {
        for x in x0..=x1 {
            samples.push(h.jacobian_det(x as f64, y as f64));
        }
    }
    if samples.is_empty() {
        samples.extend(original.iter().map(|p| h.jacobian_det(p.x, p.y)));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    if mean.abs() < 1e-15 {
        return Err(Error::DegenerateConfiguration("quad collapses to zero area".into()));
    }
    Ok(var.sqrt() / mean.abs())
}

#[derive(Clone, Debug, Serialize)]
pub struct DistortionReport {
    /// `None` for images without a non-overlapping quad.
    pub per_image: Vec<Option<f64>>,
    pub ld: f64,
    /// Per image and quad; `None` for overlapping or degenerate quads.
    #[serde(skip)]
    pub quad_cv: Vec<Vec<Option<f64>>>,
    pub warnings: Vec<String>,
}

/// Mean quad variation over each image's non-overlapping quads; LD is the
/// largest per-image value.
pub fn local_distortion(meshes: &[GridMesh]) -> DistortionReport {
    let quad_cv: Vec<Vec<Option<f64>>> = meshes
        .par_iter()
        .map(|m| {
            (0..m.quad_count())
                .map(|q| {
                    if m.overlap[q] {
                        return None;
                    }
                    quad_variation(&m.original_quad(q), &m.deformed_quad(q)).ok()
                })
                .collect()
        })
        .collect();
    let mut warnings = Vec::new();
    let per_image: Vec<Option<f64>> = meshes
        .iter()
        .zip(&quad_cv)
        .map(|(m, cv)| {
            let free: Vec<f64> = cv.iter().flatten().copied().collect();
            if free.is_empty() {
                let e = Error::NoFreeQuads { id: m.id };
                log::warn!("{e}");
                warnings.push(e.to_string());
                None
            } else {
                Some(free.iter().sum::<f64>() / free.len() as f64)
            }
        })
        .collect();
    let ld = per_image.iter().flatten().copied().fold(0.0, f64::max);
    DistortionReport {
        per_image,
        ld,
        quad_cv,
        warnings,
    }
}

/// Screen angle between the image y axis and the projected world up vector
/// (world `-z`) at the principal point, radians.
pub fn vertical_angle(r: &Rot3) -> Result<f64> {
    let u = r.apply(&Vector3::new(0.0, 0.0, -1.0));
    if u.x.hypot(u.y) < 1e-9 {
        return Err(Error::DegenerateRotation);
    }
    Ok(wrap_pi(std::f64::consts::FRAC_PI_2 - (-u.y).atan2(u.x)))
}

/// Min-area-rectangle orientation of the deformed lattice as a screen angle
/// (y up), reduced to (-45, 45] degrees.
pub fn content_angle(m: &GridMesh) -> Result<f64> {
    let pts: Vec<Vector2<f64>> = m.deformed.iter().map(|v| Vector2::new(v.x, -v.y)).collect();
    Ok(min_area_rect(&pts)?.orientation.radians())
}

#[derive(Clone, Debug, Serialize)]
pub struct ImageDirections {
    pub id: usize,
    pub kappa_deg: f64,
    pub gamma_deg: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GdicReport {
    pub reference: usize,
    pub gdic_deg: f64,
    pub per_image: Vec<ImageDirections>,
}

/// `deg` reduced to (-45, 45].
fn reduce_quarter_deg(deg: f64) -> f64 {
    let mut a = deg % 90.0;
    if a <= -45.0 {
        a += 90.0;
    } else if a > 45.0 {
        a -= 90.0;
    }
    a
}

/// `deg` wrapped to (-180, 180].
fn wrap_deg(deg: f64) -> f64 {
    let mut a = deg % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// GDIC from raw rectangle angles (any quarter-turn representative) and
/// vertical angles, degrees. Each `kappa_i` is taken within 45 degrees of
/// `gamma_i - gamma_r + kappa_r`. Working in degrees keeps whole-degree
/// inputs exact.
pub fn gdic_from_angles(kappa: &[f64], gamma: &[f64], reference: usize) -> Result<GdicReport> {
    let n = kappa.len();
    if n < 2 {
        return Err(Error::SingleImage);
    }
    let kr = reduce_quarter_deg(kappa[reference]);
    let mut sum = 0.0;
    let mut per_image = Vec::with_capacity(n);
    for i in 0..n {
        let predicted = gamma[i] - gamma[reference] + kr;
        let k = if i == reference { kr } else { predicted + reduce_quarter_deg(kappa[i] - predicted) };
        if i != reference {
            sum += wrap_deg((k - kr) - (gamma[i] - gamma[reference])).abs();
        }
        per_image.push(ImageDirections {
            id: i,
            kappa_deg: k,
            gamma_deg: gamma[i],
        });
    }
    Ok(GdicReport {
        reference,
        gdic_deg: sum / (n - 1) as f64,
        per_image,
    })
}

/// GDIC of deformed meshes against world-to-camera rotations.
pub fn gdic(meshes: &[GridMesh], rotations: &[Rot3], reference: usize) -> Result<GdicReport> {
    if meshes.len() < 2 {
        return Err(Error::SingleImage);
    }
    if rotations.len() != meshes.len() {
        return Err(Error::MissingTruth(format!(
            "{} rotations for {} images",
            rotations.len(),
            meshes.len()
        )));
    }
    let kappa: Vec<f64> = meshes.iter().map(|m| content_angle(m).map(f64::to_degrees)).collect::<Result<_>>()?;
    let gamma: Vec<f64> = rotations.iter().map(|r| vertical_angle(r).map(f64::to_degrees)).collect::<Result<_>>()?;
    gdic_from_angles(&kappa, &gamma, reference)
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    #[serde(rename = "LD")]
    pub ld: f64,
    #[serde(rename = "per_image_D")]
    pub per_image_d: Vec<Option<f64>>,
    #[serde(rename = "GDIC")]
    pub gdic: Option<f64>,
    pub per_image_kappa_gamma: Vec<ImageDirections>,
    pub reference: usize,
    pub warnings: Vec<String>,
}

pub fn metrics_report(meshes: &[GridMesh], rotations: Option<&[Rot3]>, reference: usize) -> Result<MetricsReport> {
    let d = local_distortion(meshes);
    let mut warnings = d.warnings.clone();
    let g = match rotations {
        Some(r) => match gdic(meshes, r, reference) {
            Ok(g) => Some(g),
            Err(Error::SingleImage) => {
                warnings.push(Error::SingleImage.to_string());
                None
            }
            Err(e) => return Err(e),
        },
        None => None,
    };
    Ok(MetricsReport {
        ld: d.ld,
        per_image_d: d.per_image,
        gdic: g.as_ref().map(|g| g.gdic_deg),
        per_image_kappa_gamma: g.map(|g| g.per_image).unwrap_or_default(),
        reference,
        warnings,
    })
}

/// Reads every `deformed_<id>.json` in `dir`, ordered by id. Overlap flags
/// are recomputed when any file lacks them.
pub fn load_meshes(dir: &Path) -> Result<Vec<GridMesh>> {
    let mut found: Vec<(usize, std::path::PathBuf)> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().to_string_lossy().into_owned();
            let id = name.strip_prefix("deformed_")?.strip_suffix(".json")?.parse().ok()?;
            Some((id, e.path()))
        })
        .collect();
    found.sort();
    if found.is_empty() {
        return Err(Error::Format {
            file: dir.display().to_string(),
            context: "no deformed_<id>.json files".into(),
        });
    }
    let mut meshes = Vec::with_capacity(found.len());
    let mut all_flags = true;
    for (k, (id, path)) in found.iter().enumerate() {
        let (m, flags) = read_mesh(path)?;
        if m.id != *id || *id != k {
            return Err(Error::Format {
                file: path.display().to_string(),
                context: format!("expected ids 0..N in order; found id {}", m.id),
            });
        }
        all_flags &= flags;
        meshes.push(m);
    }
    if !all_flags {
        mark_overlaps(&mut meshes);
    }
    Ok(meshes)
}
