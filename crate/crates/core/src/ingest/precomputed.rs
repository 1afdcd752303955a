//! Segment and match files produced outside the detector.
//!
//! `segments_<id>.json` holds `[{x0, y0, x1, y1, strength}]` and
//! `matches_<i>_<j>.json` holds `[{xi, yi, xj, yj}]`, points of `i` first.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{ImageInfo, LineSegment, MatchSet, PointMatch};
use crate::error::{Error, Result};
use crate::ingest::features::MIN_MATCHES;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub strength: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRecord {
    pub xi: f64,
    pub yi: f64,
    pub xj: f64,
    pub yj: f64,
}

impl From<&LineSegment> for SegmentRecord {
    fn from(s: &LineSegment) -> Self {
        SegmentRecord {
            x0: s.p0.x,
            y0: s.p0.y,
            x1: s.p1.x,
            y1: s.p1.y,
            strength: s.strength,
        }
    }
}

impl From<&PointMatch> for MatchRecord {
    fn from(m: &PointMatch) -> Self {
        MatchRecord {
            xi: m.pi.x,
            yi: m.pi.y,
            xj: m.pj.x,
            yj: m.pj.y,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Precomputed {
    /// Images without a segments file are absent.
    pub segments: BTreeMap<usize, Vec<LineSegment>>,
    pub matches: MatchSet,
    pub warnings: Vec<String>,
}

pub fn segments_file_name(id: usize) -> String {
    format!("segments_{id}.json")
}

pub fn matches_file_name(i: usize, j: usize) -> String {
    format!("matches_{i}_{j}.json")
}

pub fn write_segments(path: &Path, segments: &[LineSegment]) -> Result<()> {
    let recs: Vec<SegmentRecord> = segments.iter().map(SegmentRecord::from).collect();
    write_json(path, &recs)
}

pub fn write_matches(path: &Path, matches: &[PointMatch]) -> Result<()> {
    let recs: Vec<MatchRecord> = matches.iter().map(MatchRecord::from).collect();
    write_json(path, &recs)
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        file: path.display().to_string(),
        context: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        file: file_label(path),
        context: e.to_string(),
    })
}

fn file_label(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn parse_pair(name: &str) -> Option<(usize, usize)> {
    let rest = name.strip_prefix("matches_")?.strip_suffix(".json")?;
    let (i, j) = rest.split_once('_')?;
    Some((i.parse().ok()?, j.parse().ok()?))
}

/// Reads every segments and matches file in `dir` for the listed images.
/// Edges with fewer than 8 matches are dropped with a warning.
pub fn load_precomputed(dir: &Path, images: &[ImageInfo]) -> Result<Precomputed> {
    let info: BTreeMap<usize, ImageInfo> = images.iter().map(|i| (i.id, *i)).collect();
    let mut out = Precomputed::default();
    for im in images {
        let path = dir.join(segments_file_name(im.id));
        if !path.exists() {
            continue;
        }
        let recs: Vec<SegmentRecord> = read_json(&path)?;
        let mut segs = Vec::with_capacity(recs.len());
        for (k, r) in recs.iter().enumerate() {
            let (p0, p1) = (Vector2::new(r.x0, r.y0), Vector2::new(r.x1, r.y1));
            for p in [p0, p1] {
                if !p.x.is_finite() || !p.y.is_finite() || !im.contains_padded(&p) {
                    return Err(Error::Bounds {
                        file: file_label(&path),
                        context: format!(
                            "segment {k}: endpoint ({}, {}) outside {}x{}",
                            p.x, p.y, im.width, im.height
                        ),
                    });
                }
            }
            segs.push(LineSegment::new(p0, p1, r.strength));
        }
        out.segments.insert(im.id, segs);
    }

    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("matches_") && n.ends_with(".json"))
        .collect();
    names.sort();
    for name in names {
        let path = dir.join(&name);
        let Some((i, j)) = parse_pair(&name) else {
            return Err(Error::Format {
                file: name,
                context: "expected matches_<i>_<j>.json".into(),
            });
        };
        let (Some(ii), Some(ij)) = (info.get(&i), info.get(&j)) else {
            return Err(Error::Format {
                file: name,
                context: format!("edge ({i}, {j}) names an image not in the project"),
            });
        };
        if i == j {
            return Err(Error::Format {
                file: name,
                context: "self edge".into(),
            });
        }
        let recs: Vec<MatchRecord> = read_json(&path)?;
        let mut ms = Vec::with_capacity(recs.len());
        for (k, r) in recs.iter().enumerate() {
            let (pi, pj) = (Vector2::new(r.xi, r.yi), Vector2::new(r.xj, r.yj));
            for (p, im) in [(pi, ii), (pj, ij)] {
                if !p.x.is_finite() || !p.y.is_finite() || !im.contains_padded(&p) {
                    return Err(Error::Bounds {
                        file: name.clone(),
                        context: format!(
                            "match {k}: point ({}, {}) outside image {} ({}x{})",
                            p.x, p.y, im.id, im.width, im.height
                        ),
                    });
                }
            }
            ms.push(PointMatch { pi, pj });
        }
        if ms.len() < MIN_MATCHES {
            let msg = format!("edge ({i}, {j}): {} matches, need {MIN_MATCHES}; edge dropped", ms.len());
            log::warn!("{msg}");
            out.warnings.push(msg);
            continue;
        }
        out.matches.insert(i, j, ms);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn infos() -> Vec<ImageInfo> {
        vec![ImageInfo::new(0, 100, 80).unwrap(), ImageInfo::new(1, 100, 80).unwrap()]
    }

    fn seg(x0: f64, y0: f64) -> LineSegment {
        LineSegment::new(Vector2::new(x0, y0), Vector2::new(50.0, 40.0), 1.0)
    }

    fn pm(k: usize) -> PointMatch {
        PointMatch {
            pi: Vector2::new(10.0 + k as f64, 20.0),
            pj: Vector2::new(5.0 + k as f64, 21.0),
        }
    }

    #[test]
    fn valid_project_counts() {
        let dir = tempfile::tempdir().unwrap();
        write_segments(&dir.path().join("segments_0.json"), &[seg(1.0, 2.0), seg(3.0, 4.0)]).unwrap();
        write_segments(&dir.path().join("segments_1.json"), &[seg(5.0, 6.0)]).unwrap();
        write_matches(&dir.path().join("matches_0_1.json"), &(0..12).map(pm).collect::<Vec<_>>()).unwrap();
        let p = load_precomputed(dir.path(), &infos()).unwrap();
        assert_eq!(p.segments[&0].len(), 2);
        assert_eq!(p.segments[&1].len(), 1);
        assert_eq!(p.matches.edges[&(0, 1)].len(), 12);
        assert_eq!(p.segments[&0][1].p0, Vector2::new(3.0, 4.0));
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn endpoint_out_of_bounds() {
        let dir = tempfile::tempdir().unwrap();
        write_segments(&dir.path().join("segments_0.json"), &[seg(-5.0, 3.0)]).unwrap();
        let err = load_precomputed(dir.path(), &infos()).unwrap_err();
        assert!(matches!(err, Error::Bounds { ref file, .. } if file == "segments_0.json"), "{err}");
    }

    #[test]
    fn seven_matches_drop_the_edge() {
        let dir = tempfile::tempdir().unwrap();
        write_matches(&dir.path().join("matches_0_1.json"), &(0..7).map(pm).collect::<Vec<_>>()).unwrap();
        let p = load_precomputed(dir.path(), &infos()).unwrap();
        assert!(p.matches.edges.is_empty());
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn malformed_file_names_the_field() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("segments_1.json"), "[{\"x0\": 1, \"y0\": 2, \"x1\": 3}]").unwrap();
        let err = load_precomputed(dir.path(), &infos()).unwrap_err();
        let Error::Format { file, context } = err else { panic!("{err}") };
        assert_eq!(file, "segments_1.json");
        assert!(context.contains("y1") && context.contains("line 1"), "{context}");
    }
}
