//! Project files: inputs, module parameters and output location.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::precomputed::{read_json, write_json};
use crate::ingest::{FeatureConfig, LsdConfig};
use crate::pose::PoseConfig;
use crate::prior::{ModeRequest, PriorConfig};
use crate::synth::{image_file_name, SynthSpec, SyntheticScene};
use crate::vp::VpConfig;
use crate::warp::{CompositeConfig, WarpConfig};

/// One input image. Without a path the image exists only through its
/// precomputed segments and matches, and `width` and `height` are required.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageEntry {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
}

/// How images are oriented and warped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Prior from vanishing points with fallback, then mesh deformation.
    #[default]
    Vpg,
    /// Mesh deformation with every prior rotation zero; scales are still
    /// estimated.
    ZeroRotation,
    /// Each image projected onto the reference plane by its rotation
    /// homography.
    GlobalHomography,
    /// Each image only translated and scaled into place, so every output
    /// rotation is zero.
    Unrotated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub images: Vec<ImageEntry>,
    /// Generate a scene instead of reading images.
    pub synth: Option<SynthSpec>,
    /// Directory with `segments_<id>.json` and `matches_<i>_<j>.json`.
    pub precomputed: Option<PathBuf>,
    /// Ground truth enabling GDIC.
    pub truth: Option<PathBuf>,
    pub mode: ModeRequest,
    pub method: Method,
    /// Image whose frame anchors the stitch.
    pub reference: usize,
    /// Image GDIC is measured against; held fixed when comparing runs that
    /// stitch from different references.
    pub gdic_reference: usize,
    /// Explicit stitch edges; every matched pair when absent.
    pub edges: Option<Vec<[usize; 2]>>,
    pub output: PathBuf,
    /// Overrides every module seed when set.
    pub seed: Option<u64>,
    pub write_panorama: bool,
    pub lsd: LsdConfig,
    pub features: FeatureConfig,
    pub vp: VpConfig,
    pub pose: PoseConfig,
    pub prior: PriorConfig,
    pub warp: WarpConfig,
    pub composite: CompositeConfig,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            images: vec![],
            synth: None,
            precomputed: None,
            truth: None,
            mode: ModeRequest::Auto,
            method: Method::Vpg,
            reference: 0,
            gdic_reference: 0,
            edges: None,
            output: PathBuf::from("out"),
            seed: None,
            write_panorama: true,
            lsd: LsdConfig::default(),
            features: FeatureConfig::default(),
            vp: VpConfig::default(),
            pose: PoseConfig::default(),
            prior: PriorConfig::default(),
            warp: WarpConfig::default(),
            composite: CompositeConfig::default(),
        }
    }
}

impl ProjectConfig {
    /// Reads a project; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: ProjectConfig = read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for im in &mut self.images {
            if let Some(p) = im.path.as_mut() {
                fix(p);
            }
        }
        if let Some(p) = self.precomputed.as_mut() {
            fix(p);
        }
        if let Some(p) = self.truth.as_mut() {
            fix(p);
        }
        fix(&mut self.output);
    }

    /// Seeds every randomized stage from one value.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.features.seed = seed;
        self.vp.seed = seed;
        self.pose.seed = seed;
        if let Some(s) = self.synth.as_mut() {
            s.seed = seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.synth {
            s.validate()?;
            if !self.images.is_empty() || self.precomputed.is_some() {
                return Err(Error::InvalidConfig("a synth project cannot also list images or precomputed inputs".into()));
            }
            return self.check_ids(s.cameras);
        }
        if self.images.is_empty() {
            return Err(Error::InvalidConfig("project lists no images".into()));
        }
        for (k, im) in self.images.iter().enumerate() {
            if im.id != k {
                return Err(Error::InvalidConfig(format!("image ids must be 0..N in order; entry {k} has id {}", im.id)));
            }
            if im.path.is_none() && (im.width.is_none() || im.height.is_none()) {
                return Err(Error::InvalidConfig(format!("image {k} needs a path or both width and height")));
            }
            if im.path.is_none() && self.precomputed.is_none() {
                return Err(Error::InvalidConfig(format!("image {k} has no pixels and the project has no precomputed inputs")));
            }
        }
        self.check_ids(self.images.len())
    }

    fn check_ids(&self, n: usize) -> Result<()> {
        if self.reference >= n {
            return Err(Error::InvalidConfig(format!("reference {} is not an image id", self.reference)));
        }
        if self.gdic_reference >= n {
            return Err(Error::InvalidConfig(format!("gdic_reference {} is not an image id", self.gdic_reference)));
        }
        for e in self.edges.iter().flatten() {
            if e[0] >= n || e[1] >= n || e[0] == e[1] {
                return Err(Error::InvalidConfig(format!("edge ({}, {}) is not a pair of distinct images", e[0], e[1])));
            }
        }
        Ok(())
    }
}

/// Project that stitches a written synthetic scene from its own directory.
pub fn synth_project(scene: &SyntheticScene) -> ProjectConfig {
    let raster = scene.images.is_some();
    ProjectConfig {
        images: scene
            .infos
            .iter()
            .map(|info| ImageEntry {
                id: info.id,
                path: raster.then(|| PathBuf::from(image_file_name(info.id))),
                width: Some(info.width),
                height: Some(info.height),
            })
            .collect(),
        precomputed: Some(PathBuf::from(".")),
        truth: Some(PathBuf::from("truth.json")),
        output: PathBuf::from("out"),
        seed: Some(scene.truth.seed),
        ..ProjectConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_keys() {
        let cfg: ProjectConfig = serde_json::from_str(r#"{"images": [{"id": 0, "path": "a.png"}], "prior": {"lambda": 4}}"#).unwrap();
        assert_eq!(cfg.prior.lambda, 4.0);
        assert_eq!(cfg.prior.tau, PriorConfig::default().tau);
        assert_eq!(cfg.warp, WarpConfig::default());
        assert!(cfg.write_panorama);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<ProjectConfig>(r#"{"lamda": 3}"#).is_err());
        assert!(serde_json::from_str::<ProjectConfig>(r#"{"prior": {"lamda": 3}}"#).is_err());
    }

    #[test]
    fn mode_spellings() {
        for (text, mode) in [
            ("auto", ModeRequest::Auto),
            ("manhattan", ModeRequest::Manhattan),
            ("force-manhattan", ModeRequest::Manhattan),
            ("force-fallback", ModeRequest::Fallback),
        ] {
            let cfg: ProjectConfig = serde_json::from_str(&format!(r#"{{"mode": "{text}"}}"#)).unwrap();
            assert_eq!(cfg.mode, mode);
        }
    }

    #[test]
    fn relative_paths_follow_the_project_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("project.json");
        std::fs::write(&path, r#"{"images": [{"id": 0, "width": 64, "height": 64}], "precomputed": "scene", "output": "run"}"#).unwrap();
        let cfg = ProjectConfig::load(&path).unwrap();
        assert_eq!(cfg.precomputed.unwrap(), dir.path().join("scene"));
        assert_eq!(cfg.output, dir.path().join("run"));
    }

    #[test]
    fn validation_names_the_problem() {
        let cfg = ProjectConfig {
            images: vec![ImageEntry { id: 1, path: None, width: Some(64), height: Some(64) }],
            ..ProjectConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(m)) if m.contains("entry 0")));
    }
}
