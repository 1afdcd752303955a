//! Mesh deformation energy: alignment, local shape and global similarity.

use std::collections::VecDeque;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::mesh::{mark_overlaps, GridMesh};
use crate::error::{Error, Result};
use crate::geom::{solve_lsq, SparseLsqProblem};
use crate::pose::StitchGraph;
use crate::prior::SimilarityPrior;

/// How the global similarity weight varies across an image's quads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalWeighting {
    #[default]
    Uniform,
    /// Weight grows with grid distance from the overlap region.
    DistanceToOverlap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarpConfig {
    pub cols: usize,
    pub rows: usize,
    pub w_a: f64,
    pub w_l: f64,
    /// Defaults to `6 / sqrt(cols^2 + rows^2)`.
    pub w_g: Option<f64>,
    pub global_weighting: GlobalWeighting,
}

impl Default for WarpConfig {
    fn default() -> Self {
        WarpConfig {
            cols: 20,
            rows: 20,
            w_a: 1.0,
            w_l: 0.56,
            w_g: None,
            global_weighting: GlobalWeighting::Uniform,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyWeights {
    pub w_a: f64,
    pub w_l: f64,
    pub w_g: f64,
}

impl EnergyWeights {
    pub fn from_config(cfg: &WarpConfig) -> Result<Self> {
        let w = EnergyWeights {
            w_a: cfg.w_a,
            w_l: cfg.w_l,
            w_g: cfg.w_g.unwrap_or(6.0 / ((cfg.cols * cfg.cols + cfg.rows * cfg.rows) as f64).sqrt()),
        };
        if !(w.w_a >= 0.0 && w.w_l >= 0.0 && w.w_g >= 0.0) {
            return Err(Error::InvalidConfig(format!("energy weights must be non-negative: {w:?}")));
        }
        Ok(w)
    }
}

/// Unknown index of coordinate `c` of vertex `v` in mesh `m`.
struct Layout {
    base: Vec<usize>,
    total: usize,
}

impl Layout {
    fn new(meshes: &[GridMesh]) -> Self {
        let mut base = Vec::with_capacity(meshes.len());
        let mut total = 0;
        for m in meshes {
            base.push(total);
            total += 2 * m.vertex_count();
        }
        Layout { base, total }
    }

    fn var(&self, m: usize, v: usize, c: usize) -> usize {
        self.base[m] + 2 * v + c
    }
}

fn add_rows(p: &mut SparseLsqProblem, weight: f64, rows: [Vec<(usize, f64)>; 2], rhs: [f64; 2]) -> Result<()> {
    if weight <= 0.0 {
        return Ok(());
    }
    let w = weight.sqrt();
    let [rx, ry] = rows;
    p.add_row(w, &rx, rhs[0])?;
    p.add_row(w, &ry, rhs[1])
}

/// Least-squares problem over all deformed vertices. `quad_weights[m][q]`
/// scales the global term of quad `q` of mesh `m` (uniform when `None`).
/// Graph edges without matches are skipped and reported.
pub fn assemble_energy(
    meshes: &[GridMesh],
    g: &StitchGraph,
    prior: &SimilarityPrior,
    weights: &EnergyWeights,
    quad_weights: Option<&[Vec<f64>]>,
) -> Result<(SparseLsqProblem, Vec<String>)> {
    let lay = Layout::new(meshes);
    let mut p = SparseLsqProblem::new(lay.total);
    let mut warnings = Vec::new();

    // alignment: both warped copies of a matched point coincide
    for e in &g.edges {
        if e.matches.is_empty() {
            let err = Error::NoAnchors { a: e.a, b: e.b };
            log::warn!("{err}; edge ignored");
            warnings.push(err.to_string());
            continue;
        }
        for pm in &e.matches {
            let (Some((ca, wa)), Some((cb, wb))) = (meshes[e.a].locate(&pm.pi), meshes[e.b].locate(&pm.pj)) else {
                continue;
            };
            let rows = [0, 1].map(|c| {
                let mut r: Vec<(usize, f64)> = (0..4).map(|k| (lay.var(e.a, ca[k], c), wa[k])).collect();
                r.extend((0..4).map(|k| (lay.var(e.b, cb[k], c), -wb[k])));
                r
            });
            add_rows(&mut p, weights.w_a, rows, [0.0, 0.0])?;
        }
    }

    for (m, mesh) in meshes.iter().enumerate() {
        // local shape: each corner triangle keeps its similarity coordinates
        for q in 0..mesh.quad_count() {
            let c = mesh.quad_corners(q);
            for k in 0..4 {
                let (i1, i2, i3) = (c[k], c[(k + 1) % 4], c[(k + 3) % 4]);
                let (v1, v2, v3) = (mesh.original[i1], mesh.original[i2], mesh.original[i3]);
                let (d, e) = (v1 - v2, v3 - v2);
                let r90 = Vector2::new(e.y, -e.x);
                let (u, v) = (d.dot(&e) / e.norm_squared(), d.dot(&r90) / e.norm_squared());
                let x = |i: usize| lay.var(m, i, 0);
                let y = |i: usize| lay.var(m, i, 1);
                let rows = [
                    vec![(x(i1), 1.0), (x(i2), u - 1.0), (x(i3), -u), (y(i2), v), (y(i3), -v)],
                    vec![(y(i1), 1.0), (y(i2), u - 1.0), (y(i3), -u), (x(i2), -v), (x(i3), v)],
                ];
                add_rows(&mut p, weights.w_l, rows, [0.0, 0.0])?;
            }
        }

        // global similarity: every lattice edge follows s R(theta)
        let sim = prior.theta[mesh.id].image_rotation() * prior.scales[mesh.id];
        let quad_w = |qx: isize, qy: isize| -> Option<f64> {
            if qx < 0 || qy < 0 || qx >= mesh.cols as isize || qy >= mesh.rows as isize {
                return None;
            }
            let q = qy as usize * mesh.cols + qx as usize;
            Some(quad_weights.map_or(1.0, |w| w[m][q]))
        };
        for iy in 0..=mesh.rows {
            for ix in 0..=mesh.cols {
                let (ixs, iys) = (ix as isize, iy as isize);
                let mut edges = Vec::with_capacity(2);
                if ix < mesh.cols {
                    // quads above and below a horizontal edge
                    edges.push((mesh.index(ix + 1, iy), [quad_w(ixs, iys - 1), quad_w(ixs, iys)]));
                }
                if iy < mesh.rows {
                    edges.push((mesh.index(ix, iy + 1), [quad_w(ixs - 1, iys), quad_w(ixs, iys)]));
                }
                let a = mesh.index(ix, iy);
                for (b, adj) in edges {
                    let ws: Vec<f64> = adj.iter().flatten().copied().collect();
                    let qw = ws.iter().sum::<f64>() / ws.len() as f64;
                    let target = sim * (mesh.original[a] - mesh.original[b]);
                    let rows = [0, 1].map(|c| vec![(lay.var(m, a, c), 1.0), (lay.var(m, b, c), -1.0)]);
                    add_rows(&mut p, weights.w_g * qw, rows, [target.x, target.y])?;
                }
            }
        }
    }

    // translation gauge: the reference mesh keeps its centroid
    let r = meshes
        .iter()
        .position(|m| m.id == g.reference)
        .ok_or_else(|| Error::InvalidProblem("reference mesh missing".into()))?;
    let nv = meshes[r].vertex_count();
    let centroid: Vector2<f64> = meshes[r].original.iter().sum::<Vector2<f64>>() / nv as f64;
    for c in 0..2 {
        let entries: Vec<(usize, f64)> = (0..nv).map(|v| (lay.var(r, v, c), 1.0 / nv as f64)).collect();
        p.add_constraint(&entries, centroid[c])?;
    }
    Ok((p, warnings))
}

fn stacked(meshes: &[GridMesh], deformed: bool) -> Vec<f64> {
    meshes
        .iter()
        .flat_map(|m| if deformed { &m.deformed } else { &m.original })
        .flat_map(|v| [v.x, v.y])
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DeformationReport {
    pub energy_initial: f64,
    pub energy_final: f64,
    pub fold_overs: Vec<usize>,
}

/// Solves the problem and writes the result into `meshes[..].deformed`.
pub fn solve_deformation(meshes: &mut [GridMesh], problem: &SparseLsqProblem) -> Result<DeformationReport> {
    let energy_initial = problem.energy(&stacked(meshes, false));
    let x = solve_lsq(problem)?.x;
    let mut k = 0;
    for m in meshes.iter_mut() {
        for v in m.deformed.iter_mut() {
            *v = Vector2::new(x[k], x[k + 1]);
            k += 2;
        }
    }
    let report = DeformationReport {
        energy_initial,
        energy_final: problem.energy(&x),
        fold_overs: meshes.iter().map(GridMesh::fold_overs).collect(),
    };
    let folds: usize = report.fold_overs.iter().sum();
    if folds > 0 {
        log::warn!("{folds} folded quads after deformation");
    }
    Ok(report)
}

/// Grid distance of every quad to the nearest overlapping quad, mapped to a
/// weight in [0.1, 1]; uniform when nothing overlaps.
pub fn distance_weights(m: &GridMesh) -> Vec<f64> {
    let n = m.quad_count();
    let mut dist = vec![usize::MAX; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&q| m.overlap[q]).collect();
    if queue.is_empty() {
        return vec![1.0; n];
    }
    for &q in &queue {
        dist[q] = 0;
    }
    while let Some(q) = queue.pop_front() {
        let (qx, qy) = (q % m.cols, q / m.cols);
        let mut nb = Vec::with_capacity(4);
        if qx > 0 {
            nb.push(q - 1);
        }
        if qx + 1 < m.cols {
            nb.push(q + 1);
        }
        if qy > 0 {
            nb.push(q - m.cols);
        }
        if qy + 1 < m.rows {
            nb.push(q + m.cols);
        }
        for r in nb {
            if dist[r] == usize::MAX {
                dist[r] = dist[q] + 1;
                queue.push_back(r);
            }
        }
    }
    let max = *dist.iter().max().expect("nonempty") as f64;
    dist.iter().map(|&d| if max > 0.0 { 0.1 + 0.9 * d as f64 / max } else { 1.0 }).collect()
}

#[derive(Clone, Debug)]
pub struct WarpResult {
    pub meshes: Vec<GridMesh>,
    pub report: DeformationReport,
    pub warnings: Vec<String>,
}

/// Builds one lattice per image, solves the deformation and flags overlaps.
pub fn warp_images(g: &StitchGraph, prior: &SimilarityPrior, cfg: &WarpConfig) -> Result<WarpResult> {
    let weights = EnergyWeights::from_config(cfg)?;
    let mut meshes: Vec<GridMesh> = g
        .nodes
        .iter()
        .map(|info| GridMesh::new(info, cfg.cols, cfg.rows))
        .collect::<Result<_>>()?;
    let (problem, mut warnings) = assemble_energy(&meshes, g, prior, &weights, None)?;
    let mut report = solve_deformation(&mut meshes, &problem)?;
    mark_overlaps(&mut meshes);
    if cfg.global_weighting == GlobalWeighting::DistanceToOverlap {
        let qw: Vec<Vec<f64>> = meshes.iter().map(distance_weights).collect();
        for m in meshes.iter_mut() {
            m.deformed = m.original.clone();
        }
        let (problem, w2) = assemble_energy(&meshes, g, prior, &weights, Some(&qw))?;
        warnings = w2;
        report = solve_deformation(&mut meshes, &problem)?;
        mark_overlaps(&mut meshes);
    }
    Ok(WarpResult { meshes, report, warnings })
}
