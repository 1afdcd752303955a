//! End-to-end runs: inputs, pose graph, vanishing points, prior, warp,
//! metrics and panorama, with every artifact written to the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Method, ProjectConfig};
use crate::error::{Error, Result};
use crate::geom::Rot3;
use crate::ingest::features::MIN_MATCHES;
use crate::ingest::precomputed::write_json;
use crate::ingest::{
    detect_line_segments, load_precomputed, match_features, ImageInfo, ImageRecord, LineSegment, MatchSet,
};
use crate::metrics::{load_meshes, metrics_report, MetricsReport};
use crate::pose::{
    assign_relative_rolls, build_stitch_graph, pose_graph_json, rotation_bundle_adjust, EdgeSelection,
    RotationEstimate, StitchGraph,
};
use crate::prior::{estimate_prior, estimate_scales, identity_prior, PriorMode, SimilarityPrior};
use crate::synth::{generate_scene, render_segments, write_scene, SceneTruth, SyntheticScene};
use crate::vp::{detect_vps, VpTriplet};
use crate::warp::{
    composite_panorama, deformed_file_name, homography_warp, similarity_placement, warp_images, write_mesh, Panorama, WarpResult,
};

/// Everything the estimation stages consume.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub infos: Vec<ImageInfo>,
    /// Decoded pixels, per image, when the image has a file.
    pub pixels: Vec<Option<ImageRecord>>,
    pub segments: Vec<Option<Vec<LineSegment>>>,
    pub matches: MatchSet,
    pub truth: Option<SceneTruth>,
    pub warnings: Vec<String>,
}

impl Inputs {
    pub fn from_scene(scene: &SyntheticScene) -> Self {
        let n = scene.infos.len();
        Inputs {
            infos: scene.infos.clone(),
            pixels: scene.images.clone().map_or_else(|| vec![None; n], |v| v.into_iter().map(Some).collect()),
            segments: scene.segments.iter().cloned().map(Some).collect(),
            matches: scene.matches.clone(),
            truth: Some(scene.truth.clone()),
            warnings: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.infos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infos.is_empty()
    }

    pub fn truth_rotations(&self) -> Result<Option<Vec<Rot3>>> {
        let Some(t) = &self.truth else { return Ok(None) };
        if t.len() != self.len() {
            return Err(Error::MissingTruth(format!("truth has {} cameras for {} images", t.len(), self.len())));
        }
        t.rotations().map(Some)
    }
}

/// Reads images, precomputed files and truth named by a non-synth project.
/// Images without segments are run through the line detector, and pairs are
/// matched in-process when no match files exist.
pub fn load_inputs(cfg: &ProjectConfig) -> Result<Inputs> {
    let pixels: Vec<Option<ImageRecord>> = cfg
        .images
        .par_iter()
        .map(|im| im.path.as_ref().map(|p| ImageRecord::load(im.id, p)).transpose())
        .collect::<Result<_>>()?;
    let infos: Vec<ImageInfo> = cfg
        .images
        .iter()
        .zip(&pixels)
        .map(|(im, px)| match px {
            Some(r) => {
                if im.width.is_some_and(|w| w != r.info.width) || im.height.is_some_and(|h| h != r.info.height) {
                    return Err(Error::InvalidConfig(format!(
                        "image {}: declared size differs from the file's {}x{}",
                        im.id, r.info.width, r.info.height
                    )));
                }
                Ok(r.info)
            }
            None => ImageInfo::new(im.id, im.width.unwrap_or(0), im.height.unwrap_or(0)),
        })
        .collect::<Result<_>>()?;
    let pre = cfg.precomputed.as_ref().map(|dir| load_precomputed(dir, &infos)).transpose()?;
    let mut warnings = pre.as_ref().map(|p| p.warnings.clone()).unwrap_or_default();

    let segments: Vec<Option<Vec<LineSegment>>> = infos
        .par_iter()
        .zip(&pixels)
        .map(|(info, px)| {
            if let Some(s) = pre.as_ref().and_then(|p| p.segments.get(&info.id)) {
                return Ok(Some(s.clone()));
            }
            px.as_ref().map(|img| detect_line_segments(img, &cfg.lsd)).transpose()
        })
        .collect::<Result<_>>()?;

    let mut matches = pre.map(|p| p.matches).unwrap_or_default();
    if matches.edges.is_empty() && pixels.iter().all(Option::is_some) {
        let n = infos.len();
        let pairs: Vec<(usize, usize)> = match &cfg.edges {
            Some(e) => e.iter().map(|e| (e[0].min(e[1]), e[0].max(e[1]))).collect(),
            None => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
        };
        let found: Vec<_> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let (a, b) = (pixels[i].as_ref().expect("checked"), pixels[j].as_ref().expect("checked"));
                ((i, j), match_features(a, b, &cfg.features))
            })
            .collect();
        for ((i, j), r) in found {
            match r {
                Ok(ms) if ms.len() >= MIN_MATCHES => matches.insert(i, j, ms),
                Ok(ms) => log::debug!("edge ({i}, {j}): only {} matches", ms.len()),
                Err(e) => log::debug!("edge ({i}, {j}): {e}"),
            }
        }
        if matches.edges.is_empty() {
            warnings.push("no image pair produced enough feature matches".into());
        }
    }
    let truth = cfg.truth.as_ref().map(|p| SceneTruth::read(p)).transpose()?;
    Ok(Inputs {
        infos,
        pixels,
        segments,
        matches,
        truth,
        warnings,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Machine-readable summary of one run, written even when a stage fails.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunReport {
    pub command: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub images: usize,
    pub edges: usize,
    pub reference: usize,
    pub method: Method,
    pub mode: Option<PriorMode>,
    pub epsilon: Option<f64>,
    pub rho: Option<f64>,
    pub vp_images: usize,
    pub mean_reprojection_error: Option<f64>,
    pub energy_initial: Option<f64>,
    pub energy_final: Option<f64>,
    pub fold_overs: Option<Vec<usize>>,
    #[serde(rename = "LD")]
    pub ld: Option<f64>,
    #[serde(rename = "GDIC")]
    pub gdic: Option<f64>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub timings: Vec<StageTiming>,
}

impl RunReport {
    fn new(command: &str) -> Self {
        RunReport {
            command: command.into(),
            status: "running".into(),
            ..RunReport::default()
        }
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.timings.push(StageTiming {
            stage: stage.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Pose graph, VPs and prior for loaded inputs.
#[derive(Clone, Debug)]
pub struct PriorStage {
    pub graph: StitchGraph,
    pub estimate: RotationEstimate,
    pub triplets: Vec<Option<VpTriplet>>,
    pub prior: SimilarityPrior,
    pub warnings: Vec<String>,
}

fn edge_selection(cfg: &ProjectConfig) -> EdgeSelection {
    match &cfg.edges {
        Some(e) => EdgeSelection::Manual(e.iter().map(|e| (e[0], e[1])).collect()),
        None => EdgeSelection::Auto,
    }
}

fn run_prior_stage(cfg: &ProjectConfig, inputs: &Inputs, report: &mut RunReport) -> Result<PriorStage> {
    let mut graph = report.time("pose", || {
        build_stitch_graph(&inputs.infos, &inputs.matches, &edge_selection(cfg), cfg.reference, &cfg.pose)
    })?;
    report.edges = graph.edges.len();
    let estimate = report.time("rotations", || {
        let est = rotation_bundle_adjust(&graph, &cfg.pose)?;
        assign_relative_rolls(&mut graph, &est)?;
        Ok(est)
    })?;
    report.mean_reprojection_error = Some(estimate.mean_reprojection_error);

    // the pose focal seeds the lift of VPs at infinity
    let detected: Vec<(Option<VpTriplet>, Option<String>)> = report.time("vp", || {
        Ok(inputs
            .segments
            .par_iter()
            .zip(&inputs.infos)
            .map(|(segs, info)| match segs {
                None => (None, None),
                Some(s) => match detect_vps(s, info, &cfg.vp, Some(estimate.focals[info.id])) {
                    Ok(t) => (Some(t), None),
                    Err(e) => (None, Some(format!("image {}: {e}", info.id))),
                },
            })
            .collect())
    })?;
    let mut warnings: Vec<String> = detected.iter().filter_map(|(_, w)| w.clone()).collect();
    let triplets: Vec<Option<VpTriplet>> = detected.into_iter().map(|(t, _)| t).collect();
    report.vp_images = triplets.iter().flatten().count();

    let prior = report.time("prior", || match cfg.method {
        Method::Vpg => estimate_prior(&graph, &estimate, &triplets, cfg.mode, &cfg.prior),
        Method::ZeroRotation | Method::GlobalHomography | Method::Unrotated => {
            let (scales, w) = estimate_scales(&graph)?;
            let mut p = identity_prior(graph.len());
            p.scales = scales;
            p.warnings = w;
            Ok(p)
        }
    })?;
    warnings.extend(prior.warnings.iter().cloned());
    report.mode = Some(prior.mode);
    report.epsilon = prior.epsilon;
    report.rho = prior.epsilon.map(|_| prior.rho);
    Ok(PriorStage {
        graph,
        estimate,
        triplets,
        prior,
        warnings,
    })
}

/// Pose graph, VPs and prior for loaded inputs, without touching the file
/// system.
pub fn prior_inputs(cfg: &ProjectConfig, inputs: &Inputs) -> Result<PriorStage> {
    run_prior_stage(cfg, inputs, &mut RunReport::new("prior"))
}

/// Results of a full stitch.
#[derive(Clone, Debug)]
pub struct StitchOutcome {
    pub inputs: Inputs,
    pub stage: PriorStage,
    pub warp: WarpResult,
    pub metrics: MetricsReport,
    pub panorama: Option<Panorama>,
    pub report: RunReport,
}

/// Stitches loaded inputs without touching the file system.
pub fn stitch_inputs(cfg: &ProjectConfig, inputs: Inputs) -> Result<StitchOutcome> {
    let mut report = RunReport::new("stitch");
    stitch_with_report(cfg, inputs, &mut report)
}

fn stitch_with_report(cfg: &ProjectConfig, inputs: Inputs, report: &mut RunReport) -> Result<StitchOutcome> {
    report.images = inputs.len();
    report.reference = cfg.reference;
    report.method = cfg.method;
    report.warnings.extend(inputs.warnings.iter().cloned());
    let stage = run_prior_stage(cfg, &inputs, report)?;
    report.warnings.extend(stage.warnings.iter().cloned());
    let warp = report.time("warp", || match cfg.method {
        Method::GlobalHomography => homography_warp(&stage.graph, &stage.estimate, &cfg.warp),
        Method::Unrotated => similarity_placement(&stage.graph, &stage.prior, &cfg.warp),
        Method::Vpg | Method::ZeroRotation => warp_images(&stage.graph, &stage.prior, &cfg.warp),
    })?;
    report.warnings.extend(warp.warnings.iter().cloned());
    report.energy_initial = Some(warp.report.energy_initial);
    report.energy_final = Some(warp.report.energy_final);
    report.fold_overs = Some(warp.report.fold_overs.clone());

    let truth = inputs.truth_rotations()?;
    let metrics = report.time("metrics", || metrics_report(&warp.meshes, truth.as_deref(), cfg.gdic_reference))?;
    report.warnings.extend(metrics.warnings.iter().cloned());
    report.ld = Some(metrics.ld);
    report.gdic = metrics.gdic;

    let panorama = if cfg.write_panorama {
        let textures: Vec<ImageRecord> = inputs
            .infos
            .par_iter()
            .zip(&inputs.pixels)
            .zip(&inputs.segments)
            .map(|((info, px), segs)| match px {
                Some(img) => Ok(img.clone()),
                None => render_segments(info, segs.as_deref().unwrap_or(&[])),
            })
            .collect::<Result<_>>()?;
        match report.time("composite", || composite_panorama(&textures, &warp.meshes, &cfg.composite)) {
            Ok(p) => Some(p),
            Err(e @ (Error::CanvasTooLarge { .. } | Error::EmptyCanvas)) => {
                report.warnings.push(format!("panorama skipped: {e}"));
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    Ok(StitchOutcome {
        inputs,
        stage,
        warp,
        metrics,
        panorama,
        report: report.clone(),
    })
}

/// Applies the seed and validates; an invalid project still leaves a report
/// behind when its output directory can be created.
fn prepare(cfg: &ProjectConfig, command: &str) -> Result<ProjectConfig> {
    let mut cfg = cfg.clone();
    if let Some(seed) = cfg.seed {
        cfg.apply_seed(seed);
    }
    fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    if let Err(e) = cfg.validate() {
        let result = Err(e);
        write_report(&cfg.output, &mut RunReport::new(command), &result)?;
        return result.map(|()| cfg);
    }
    Ok(cfg)
}

fn project_inputs(cfg: &ProjectConfig, report: &mut RunReport) -> Result<Inputs> {
    report.time("ingest", || match &cfg.synth {
        Some(spec) => {
            let scene = generate_scene(spec)?;
            write_scene(&cfg.output.join("scene"), &scene)?;
            Ok(Inputs::from_scene(&scene))
        }
        None => load_inputs(cfg),
    })
}

fn write_report(dir: &Path, report: &mut RunReport, result: &Result<()>) -> Result<()> {
    match result {
        Ok(()) => report.status = "ok".into(),
        Err(e) => {
            report.status = "error".into();
            report.error = Some(e.to_string());
        }
    }
    write_json(&dir.join("report.json"), report)
}

fn write_value(dir: &Path, name: &str, value: &impl Serialize, outputs: &mut Vec<String>) -> Result<()> {
    write_json(&dir.join(name), value)?;
    outputs.push(name.into());
    Ok(())
}

/// One `vps_<id>.json` per image with a triplet.
fn write_triplets(dir: &Path, triplets: &[Option<VpTriplet>], outputs: &mut Vec<String>) -> Result<()> {
    for (i, t) in triplets.iter().enumerate() {
        if let Some(t) = t {
            write_value(dir, &format!("vps_{i}.json"), &t.to_json(), outputs)?;
        }
    }
    Ok(())
}

/// Runs the whole pipeline for a project and writes `prior.json`,
/// `metrics.json`, `posegraph.json`, `vps_<id>.json`, the deformed meshes,
/// `panorama.png` and `report.json` under the output directory.
pub fn stitch(cfg: &ProjectConfig) -> Result<StitchOutcome> {
    let cfg = prepare(cfg, "stitch")?;
    let dir = cfg.output.clone();
    let mut report = RunReport::new("stitch");
    let mut outcome = None;
    let result = (|| {
        let inputs = project_inputs(&cfg, &mut report)?;
        let out = stitch_with_report(&cfg, inputs, &mut report)?;
        let mut outputs = vec![];
        write_value(&dir, "prior.json", &out.stage.prior.to_json(), &mut outputs)?;
        write_value(&dir, "metrics.json", &out.metrics, &mut outputs)?;
        write_value(&dir, "posegraph.json", &pose_graph_json(&out.stage.graph, &out.stage.estimate), &mut outputs)?;
        write_triplets(&dir, &out.stage.triplets, &mut outputs)?;
        for m in &out.warp.meshes {
            let name = deformed_file_name(m.id);
            write_mesh(&dir.join(&name), m)?;
            outputs.push(name);
        }
        if let Some(p) = &out.panorama {
            p.save_png(&dir.join("panorama.png"))?;
            outputs.push("panorama.png".into());
        }
        report.outputs = outputs;
        outcome = Some(out);
        Ok(())
    })();
    write_report(&dir, &mut report, &result)?;
    result?;
    let mut out = outcome.expect("set on success");
    out.report = report;
    Ok(out)
}

/// Pose graph, VPs and prior only; writes `prior.json`, `posegraph.json`,
/// `vps_<id>.json` and `report.json`.
pub fn prior_only(cfg: &ProjectConfig) -> Result<PriorStage> {
    let cfg = prepare(cfg, "prior")?;
    let dir = cfg.output.clone();
    let mut report = RunReport::new("prior");
    let mut stage = None;
    let result = (|| {
        let inputs = project_inputs(&cfg, &mut report)?;
        report.images = inputs.len();
        report.reference = cfg.reference;
        report.method = cfg.method;
        report.warnings.extend(inputs.warnings.iter().cloned());
        let s = run_prior_stage(&cfg, &inputs, &mut report)?;
        report.warnings.extend(s.warnings.iter().cloned());
        let mut outputs = vec![];
        write_value(&dir, "prior.json", &s.prior.to_json(), &mut outputs)?;
        write_value(&dir, "posegraph.json", &pose_graph_json(&s.graph, &s.estimate), &mut outputs)?;
        write_triplets(&dir, &s.triplets, &mut outputs)?;
        report.outputs = outputs;
        stage = Some(s);
        Ok(())
    })();
    write_report(&dir, &mut report, &result)?;
    result?;
    Ok(stage.expect("set on success"))
}

/// Metrics of a directory of deformed meshes; writes `metrics.json` to `out`.
pub fn evaluate(dir: &Path, truth: Option<&Path>, reference: usize, out: &Path) -> Result<MetricsReport> {
    let meshes = load_meshes(dir)?;
    let rotations = truth
        .map(|p| {
            let t = SceneTruth::read(p)?;
            if t.len() != meshes.len() {
                return Err(Error::MissingTruth(format!("truth has {} cameras for {} meshes", t.len(), meshes.len())));
            }
            t.rotations()
        })
        .transpose()?;
    if reference >= meshes.len() {
        return Err(Error::InvalidConfig(format!("reference {reference} is not a mesh id")));
    }
    let report = metrics_report(&meshes, rotations.as_deref(), reference)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("metrics.json"), &report)?;
    Ok(report)
}

/// Generates a scene and writes it with a `project.json` that stitches it.
pub fn synthesize(spec: &crate::synth::SynthSpec, dir: &Path) -> Result<PathBuf> {
    let scene = generate_scene(spec)?;
    write_scene(dir, &scene)?;
    let path = dir.join("project.json");
    crate::config::synth_project(&scene).save(&path)?;
    Ok(path)
}
