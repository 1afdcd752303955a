//! Per-image vertex lattices.

use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::precomputed::{read_json, write_json};
use crate::ingest::ImageInfo;

/// A `cols x rows` cell lattice spanning `[0, width] x [0, height]`.
///
/// Vertex `(ix, iy)` has index `iy * (cols + 1) + ix`; quad `(qx, qy)` has
/// index `qy * cols + qx` and corners top-left, top-right, bottom-right,
/// bottom-left.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMesh {
    pub id: usize,
    pub cols: usize,
    pub rows: usize,
    pub width: f64,
    pub height: f64,
    pub original: Vec<Vector2<f64>>,
    pub deformed: Vec<Vector2<f64>>,
    /// Per quad: some other image's deformed mesh covers the quad centroid.
    pub overlap: Vec<bool>,
}

impl GridMesh {
    pub fn new(info: &ImageInfo, cols: usize, rows: usize) -> Result<Self> {
        if cols == 0 || rows == 0 {
            return Err(Error::InvalidConfig(format!("grid needs at least one cell, got {cols}x{rows}")));
        }
        let (w, h) = (info.width as f64, info.height as f64);
        let original: Vec<Vector2<f64>> = (0..=rows)
            .flat_map(|iy| (0..=cols).map(move |ix| Vector2::new(ix as f64 * w / cols as f64, iy as f64 * h / rows as f64)))
            .collect();
        Ok(GridMesh {
            id: info.id,
            cols,
            rows,
            width: w,
            height: h,
            deformed: original.clone(),
            original,
            overlap: vec![false; cols * rows],
        })
    }

    pub fn vertex_count(&self) -> usize {
        (self.cols + 1) * (self.rows + 1)
    }

    pub fn quad_count(&self) -> usize {
        self.cols * self.rows
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * (self.cols + 1) + ix
    }

    pub fn quad_corners(&self, q: usize) -> [usize; 4] {
        let (qx, qy) = (q % self.cols, q / self.cols);
        [
            self.index(qx, qy),
            self.index(qx + 1, qy),
            self.index(qx + 1, qy + 1),
            self.index(qx, qy + 1),
        ]
    }

    pub fn deformed_quad(&self, q: usize) -> [Vector2<f64>; 4] {
        self.quad_corners(q).map(|k| self.deformed[k])
    }

    pub fn original_quad(&self, q: usize) -> [Vector2<f64>; 4] {
        self.quad_corners(q).map(|k| self.original[k])
    }

    /// Corner indices and bilinear weights of `p` in the undeformed lattice;
    /// points slightly outside are clamped onto it.
    pub fn locate(&self, p: &Vector2<f64>) -> Option<([usize; 4], [f64; 4])> {
        if !p.x.is_finite() || !p.y.is_finite() {
            return None;
        }
        let cw = self.width / self.cols as f64;
        let ch = self.height / self.rows as f64;
        let fx = (p.x / cw).clamp(0.0, self.cols as f64);
        let fy = (p.y / ch).clamp(0.0, self.rows as f64);
        let qx = (fx.floor() as usize).min(self.cols - 1);
        let qy = (fy.floor() as usize).min(self.rows - 1);
        let (u, v) = (fx - qx as f64, fy - qy as f64);
        let corners = self.quad_corners(qy * self.cols + qx);
        Some((corners, [(1.0 - u) * (1.0 - v), u * (1.0 - v), u * v, (1.0 - u) * v]))
    }

    /// Image of `p` under the deformation.
    pub fn map_point(&self, p: &Vector2<f64>) -> Option<Vector2<f64>> {
        let (c, w) = self.locate(p)?;
        Some((0..4).map(|k| self.deformed[c[k]] * w[k]).sum())
    }

    /// Deformed outline, walking the lattice border.
    pub fn boundary(&self) -> Vec<Vector2<f64>> {
        let mut idx = Vec::with_capacity(2 * (self.cols + self.rows));
        idx.extend((0..self.cols).map(|ix| self.index(ix, 0)));
        idx.extend((0..self.rows).map(|iy| self.index(self.cols, iy)));
        idx.extend((1..=self.cols).rev().map(|ix| self.index(ix, self.rows)));
        idx.extend((1..=self.rows).rev().map(|iy| self.index(0, iy)));
        idx.into_iter().map(|k| self.deformed[k]).collect()
    }

    /// Quads whose deformed orientation differs from the original at any corner.
    pub fn fold_overs(&self) -> usize {
        (0..self.quad_count())
            .filter(|&q| {
                let (o, d) = (self.original_quad(q), self.deformed_quad(q));
                (0..4).any(|k| {
                    let cross = |p: &[Vector2<f64>; 4]| {
                        let (a, b, c) = (p[(k + 3) % 4], p[k], p[(k + 1) % 4]);
                        (b - a).perp(&(c - b))
                    };
                    cross(&d) * cross(&o).signum() <= 0.0
                })
            })
            .count()
    }

    pub fn quad_centroid(&self, q: usize) -> Vector2<f64> {
        self.deformed_quad(q).iter().sum::<Vector2<f64>>() / 4.0
    }
}

/// Even-odd point-in-polygon test.
pub fn polygon_contains(poly: &[Vector2<f64>], p: &Vector2<f64>) -> bool {
    let mut inside = false;
    let n = poly.len();
    for k in 0..n {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Flags every quad whose deformed centroid lies inside another mesh.
pub fn mark_overlaps(meshes: &mut [GridMesh]) {
    let outlines: Vec<Vec<Vector2<f64>>> = meshes.iter().map(GridMesh::boundary).collect();
    for (i, m) in meshes.iter_mut().enumerate() {
        m.overlap = (0..m.quad_count())
            .map(|q| {
                let c = m.quad_centroid(q);
                outlines.iter().enumerate().any(|(j, o)| j != i && polygon_contains(o, &c))
            })
            .collect();
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeshFile {
    id: usize,
    cols: usize,
    rows: usize,
    width: f64,
    height: f64,
    original: Vec<[f64; 2]>,
    deformed: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    overlap: Option<Vec<bool>>,
}

pub fn deformed_file_name(id: usize) -> String {
    format!("deformed_{id}.json")
}

pub fn write_mesh(path: &Path, m: &GridMesh) -> Result<()> {
    let file = MeshFile {
        id: m.id,
        cols: m.cols,
        rows: m.rows,
        width: m.width,
        height: m.height,
        original: m.original.iter().map(|v| [v.x, v.y]).collect(),
        deformed: m.deformed.iter().map(|v| [v.x, v.y]).collect(),
        overlap: Some(m.overlap.clone()),
    };
    write_json(path, &file)
}

/// Reads a mesh file; `overlap` is `None` when the file has no flags.
pub fn read_mesh(path: &Path) -> Result<(GridMesh, bool)> {
    let f: MeshFile = read_json(path)?;
    let label = path.display().to_string();
    let n = (f.cols + 1) * (f.rows + 1);
    if f.cols == 0 || f.rows == 0 || f.original.len() != n || f.deformed.len() != n {
        return Err(Error::Format {
            file: label,
            context: format!("{}x{} lattice needs {n} vertices", f.cols, f.rows),
        });
    }
    let has_flags = f.overlap.is_some();
    let overlap = f.overlap.unwrap_or_else(|| vec![false; f.cols * f.rows]);
    if overlap.len() != f.cols * f.rows {
        return Err(Error::Format {
            file: label,
            context: "overlap flags do not match the quad count".into(),
        });
    }
    let conv = |v: &Vec<[f64; 2]>| v.iter().map(|p| Vector2::new(p[0], p[1])).collect();
    Ok((
        GridMesh {
            id: f.id,
            cols: f.cols,
            rows: f.rows,
            width: f.width,
            height: f.height,
            original: conv(&f.original),
            deformed: conv(&f.deformed),
            overlap,
        },
        has_flags,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh() -> GridMesh {
        GridMesh::new(&ImageInfo::new(3, 100, 80).unwrap(), 4, 2).unwrap()
    }

    #[test]
    fn lattice_layout() {
        let m = mesh();
        assert_eq!(m.vertex_count(), 15);
        assert_eq!(m.original[m.index(4, 2)], Vector2::new(100.0, 80.0));
        assert_eq!(m.quad_corners(5), [6, 7, 12, 11]);
        assert_eq!(m.boundary().len(), 12);
    }

    #[test]
    fn locate_reproduces_points() {
        let m = mesh();
        for p in [Vector2::new(0.0, 0.0), Vector2::new(37.5, 61.2), Vector2::new(100.0, 80.0)] {
            assert!((m.map_point(&p).unwrap() - p).norm() < 1e-12);
        }
    }

    #[test]
    fn folds_and_overlaps() {
        let mut m = mesh();
        assert_eq!(m.fold_overs(), 0);
        let k = m.index(1, 1);
        m.deformed[k] = Vector2::new(60.0, 70.0);
        assert!(m.fold_overs() > 0);

        let a = mesh();
        let mut b = mesh();
        for v in &mut b.deformed {
            v.x += 50.0;
        }
        let mut both = vec![a, b];
        mark_overlaps(&mut both);
        // left half of `a` is uncovered, right half covered
        assert_eq!(both[0].overlap, vec![false, false, true, true, false, false, true, true]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = mesh();
        m.deformed[4].x += 0.25;
        let path = dir.path().join(deformed_file_name(m.id));
        write_mesh(&path, &m).unwrap();
        let (back, flags) = read_mesh(&path).unwrap();
        assert!(flags);
        assert_eq!(back, m);
    }
}
