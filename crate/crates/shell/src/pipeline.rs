//! End-to-end run: annotation → scene graph → 4D layout → simulated sequence → metrics.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lidar4d_core::diffusion::{Denoiser, GaussianOracle, NoiseSchedule};
use lidar4d_core::evalsuite::{
    bcr, bev_histogram, ctc, feature_set_from_images, frame_boxes, frechet, jsd, mmd, mscr, scr, tcr, ttce,
};
use lidar4d_core::geometry::{PointCloud, SceneSequence, Trajectory};
use lidar4d_core::layout::{
    encode_box, sample_layout, Layout4D, LayoutModels, LayoutSample, BOX_CODE_DIM, SHAPE_POINT_DIM,
};
use lidar4d_core::rangecodec::{encode_tensor, project, RangeImage};
use lidar4d_core::scenegraph::{build_graph, filter_objects, FrameAnnotation, SceneGraph};
use lidar4d_core::synth::{simulate_sequence, SceneObject, SceneSpec};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{MetricName, RunConfig};
use crate::error::{in_stage, ShellError, ShellResult};
use crate::formats::{read_denoiser, write_point_cloud, write_range_tensor};
use crate::schema::{kinds, read_json, write_json};

/// Per-stage seeds in derivation order.
pub const SEED_STAGES: [&str; 3] = ["layout", "sequence", "reference"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// One entry per enabled metric; `null` when the metric is undefined for the scene
    /// (for instance collision rates with fewer than two objects).
    pub metrics: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    /// Paths relative to the output directory, sorted.
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub annotation: PathBuf,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: MetricReport,
    pub manifest: Manifest,
}

pub fn derive_seeds(master: u64) -> BTreeMap<String, u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    SEED_STAGES.iter().map(|s| (s.to_string(), rng.next_u64())).collect()
}

/// Branch denoisers, loaded from files or built as Gaussian priors.
pub struct LayoutPriors {
    pub boxes: Box<dyn Denoiser>,
    pub trajectories: Box<dyn Denoiser>,
    pub shapes: Box<dyn Denoiser>,
}

impl LayoutPriors {
    pub fn models(&self) -> LayoutModels<'_> {
        LayoutModels {
            boxes: self.boxes.as_ref(),
            trajectories: self.trajectories.as_ref(),
            shapes: self.shapes.as_ref(),
        }
    }
}

const TRAJECTORY_PRIOR_STD: f64 = 0.02;
const SHAPE_PRIOR_STD: f64 = 0.5;

/// Box prior fitted to the graph's own object boxes (a generic car-sized
/// prior when there are none); near-stationary trajectory prior; isotropic
/// shape prior. Conditions are accepted and ignored.
pub fn gaussian_priors(graph: &SceneGraph, cfg: &RunConfig, schedule: &NoiseSchedule) -> ShellResult<LayoutPriors> {
    use lidar4d_core::layout::CONDITION_DIM;
    let layout = cfg.layout_config();
    let codes = graph
        .object_nodes()
        .filter_map(|n| n.bbox)
        .map(|b| encode_box(&b, &layout.bounds).map(|c| c.0.to_vec()))
        .collect::<lidar4d_core::Result<Vec<_>>>()?;
    let boxes = if codes.is_empty() {
        let mean = vec![0.5, 0.5, 0.5, 2f64.ln(), 4.5f64.ln(), 1.6f64.ln(), 0.0, 1.0];
        GaussianOracle::new(schedule.clone(), mean, vec![0.1, 0.1, 0.0, 0.1, 0.1, 0.1, 0.3, 0.3])?
    } else {
        GaussianOracle::fit(schedule.clone(), &codes)?
    };
    debug_assert_eq!(boxes.mean().len(), BOX_CODE_DIM);
    let traj_dim = 2 * layout.horizon;
    let trajectories = GaussianOracle::new(
        schedule.clone(),
        vec![0.0; traj_dim],
        vec![TRAJECTORY_PRIOR_STD; traj_dim],
    )?;
    let shapes = GaussianOracle::new(
        schedule.clone(),
        vec![0.0; SHAPE_POINT_DIM],
        vec![SHAPE_PRIOR_STD; SHAPE_POINT_DIM],
    )?;
    Ok(LayoutPriors {
        boxes: Box::new(boxes.with_cond_dim(CONDITION_DIM)),
        trajectories: Box::new(trajectories.with_cond_dim(CONDITION_DIM + BOX_CODE_DIM)),
        shapes: Box::new(shapes.with_cond_dim(CONDITION_DIM + BOX_CODE_DIM)),
    })
}

/// Gaussian priors with any configured model files swapped in.
pub fn load_priors(graph: &SceneGraph, cfg: &RunConfig, schedule: &NoiseSchedule) -> ShellResult<LayoutPriors> {
    let mut p = gaussian_priors(graph, cfg, schedule)?;
    if let Some(path) = &cfg.models.boxes {
        p.boxes = Box::new(read_denoiser(path)?);
    }
    if let Some(path) = &cfg.models.trajectories {
        p.trajectories = Box::new(read_denoiser(path)?);
    }
    if let Some(path) = &cfg.models.shapes {
        p.shapes = Box::new(read_denoiser(path)?);
    }
    Ok(p)
}

/// Scene built from the annotation itself; objects without a trajectory stay put.
pub fn reference_spec(annotation: &FrameAnnotation, cfg: &RunConfig) -> ShellResult<SceneSpec> {
    let horizon = cfg.layout.horizon;
    let fit = |t: &Option<Trajectory>, what: String| -> ShellResult<Trajectory> {
        match t {
            None => Ok(Trajectory::stationary(horizon)),
            Some(t) if t.len() == horizon => Ok(t.clone()),
            Some(t) => Err(ShellError::Core(lidar4d_core::Error::Invalid {
                field: what,
                reason: format!("length {} differs from horizon {horizon}", t.len()),
            })),
        }
    };
    let objects = filter_objects(annotation, &cfg.motion)
        .into_iter()
        .map(|o| {
            Ok(SceneObject {
                bbox: o.bbox,
                trajectory: fit(
                    &o.trajectory,
                    format!("annotation.objects[{}].trajectory", o.source_index),
                )?,
                material: cfg.sequence.object_material,
            })
        })
        .collect::<ShellResult<Vec<_>>>()?;
    let mut spec = SceneSpec::open_ground(
        &cfg.sensor,
        fit(&annotation.ego_trajectory, "annotation.ego_trajectory".into())?,
    );
    spec.objects = objects;
    spec.noise_sigma = cfg.sequence.noise_sigma;
    spec.validate()?;
    Ok(spec)
}

/// Writes `frame_XXX.lcpc`, `range_XXX.lcrt` and `poses.json` under `dir/prefix`.
pub fn write_sequence(
    seq: &SceneSequence,
    cfg: &RunConfig,
    dir: &Path,
    prefix: &str,
    artifacts: &mut Vec<String>,
) -> ShellResult<Vec<RangeImage>> {
    let mut images = Vec::with_capacity(seq.len());
    for (t, f) in seq.frames.iter().enumerate() {
        let cloud_name = format!("{prefix}frame_{t:03}.lcpc");
        write_point_cloud(&f.cloud, &dir.join(&cloud_name))?;
        artifacts.push(cloud_name);
        let image = project(&f.cloud, &cfg.sensor);
        let tensor_name = format!("{prefix}range_{t:03}.lcrt");
        write_range_tensor(&encode_tensor(&image, &cfg.sensor)?, &dir.join(&tensor_name))?;
        artifacts.push(tensor_name);
        images.push(image);
    }
    let poses_name = format!("{prefix}poses.json");
    write_json(&dir.join(&poses_name), kinds::POSES, &seq.poses())?;
    artifacts.push(poses_name);
    Ok(images)
}

/// Maps "undefined for this scene" to `null` and keeps other failures.
fn optional(r: lidar4d_core::Result<f64>) -> ShellResult<Value> {
    match r {
        Ok(v) => Ok(json!(v)),
        Err(lidar4d_core::Error::Empty(_)) => Ok(Value::Null),
        Err(e) => Err(e.into()),
    }
}

pub struct MetricInputs<'a> {
    pub graph: &'a SceneGraph,
    pub layout: &'a Layout4D,
    pub generated: &'a SceneSequence,
    pub generated_images: &'a [RangeImage],
    pub reference: &'a SceneSequence,
    pub reference_images: &'a [RangeImage],
}

pub fn compute_metrics(inp: &MetricInputs<'_>, cfg: &RunConfig) -> ShellResult<MetricReport> {
    let m = &cfg.metrics;
    let bev = |c: &PointCloud| bev_histogram(c, m.bev_bounds, m.bev_bins);
    let mut out = BTreeMap::new();
    for &name in &m.enabled {
        let v = match name {
            MetricName::Scr => optional(scr(inp.layout, inp.graph, &cfg.relations))?,
            MetricName::Mscr => optional(mscr(inp.layout, inp.graph, &cfg.motion))?,
            MetricName::Bcr => {
                let frames = frame_boxes(&inp.layout.boxes(), &inp.layout.trajectories())?;
                optional(bcr(&frames))?
            }
            MetricName::Tcr => optional(tcr(&inp.layout.boxes(), &inp.layout.trajectories()))?,
            MetricName::Ttce => {
                let r = ttce(inp.generated, &inp.generated.poses(), &cfg.icp)?;
                json!({ "rot": r.rot_err, "trans": r.trans_err })
            }
            MetricName::Ctc => json!(ctc(inp.generated, &inp.generated.poses(), m.ctc_interval)?),
            MetricName::Jsd => {
                let g = bev(&inp.generated.frames[0].cloud)?;
                let r = bev(&inp.reference.frames[0].cloud)?;
                json!(jsd(&g, &r)?)
            }
            MetricName::Mmd => {
                let hist = |s: &SceneSequence| -> ShellResult<Vec<Vec<f64>>> {
                    s.frames.iter().map(|f| Ok(bev(&f.cloud)?.mass)).collect()
                };
                json!(mmd(&hist(inp.generated)?, &hist(inp.reference)?, m.mmd_kernel)?)
            }
            MetricName::Frechet => {
                let g = feature_set_from_images(inp.generated_images, &cfg.sensor)?;
                let r = feature_set_from_images(inp.reference_images, &cfg.sensor)?;
                json!(frechet(&g, &r)?)
            }
        };
        out.insert(name.key().to_string(), v);
    }
    Ok(MetricReport { metrics: out })
}

/// Runs every stage, persisting intermediates under `out_dir`.
pub fn run_pipeline(cfg: &RunConfig, inputs: &PipelineInputs, out_dir: &Path) -> ShellResult<PipelineOutput> {
    in_stage("config", || cfg.validate())?;
    let seeds = derive_seeds(cfg.seed);
    let mut artifacts = Vec::new();
    let schedule = in_stage("config", || cfg.schedule())?;
    in_stage("config", || {
        write_json(&out_dir.join("config.json"), kinds::RUN_CONFIG, cfg)?;
        artifacts.push("config.json".into());
        Ok(())
    })?;

    let annotation: FrameAnnotation = in_stage("annotation", || read_json(&inputs.annotation, kinds::ANNOTATION))?;

    let graph = in_stage("graph", || {
        let g = build_graph(&annotation, &cfg.relations, &cfg.motion)?;
        write_json(&out_dir.join("graph.json"), kinds::SCENE_GRAPH, &g)?;
        artifacts.push("graph.json".into());
        Ok(g)
    })?;

    let sample: LayoutSample = in_stage("layout", || {
        let priors = load_priors(&graph, cfg, &schedule)?;
        let s = sample_layout(
            &graph,
            priors.models(),
            &schedule,
            &cfg.layout_config(),
            seeds["layout"],
        )?;
        write_json(&out_dir.join("layout.json"), kinds::LAYOUT, &s)?;
        artifacts.push("layout.json".into());
        Ok(s)
    })?;
    let layout = &sample.layout;

    let (generated, generated_images) = in_stage("sequence", || {
        let mut spec = SceneSpec::from_layout(layout, &cfg.sensor, cfg.sequence.object_material)?;
        spec.noise_sigma = cfg.sequence.noise_sigma;
        write_json(&out_dir.join("scene_spec.json"), kinds::SCENE_SPEC, &spec)?;
        artifacts.push("scene_spec.json".into());
        let mut rng = ChaCha8Rng::seed_from_u64(seeds["sequence"]);
        let seq = simulate_sequence(&spec, &cfg.sensor, cfg.sequence.num_frames, &mut rng)?;
        let images = write_sequence(&seq, cfg, out_dir, "", &mut artifacts)?;
        Ok((seq, images))
    })?;

    let (reference, reference_images) = in_stage("reference", || {
        let spec = reference_spec(&annotation, cfg)?;
        write_json(&out_dir.join("reference/scene_spec.json"), kinds::SCENE_SPEC, &spec)?;
        artifacts.push("reference/scene_spec.json".into());
        let mut rng = ChaCha8Rng::seed_from_u64(seeds["reference"]);
        let seq = simulate_sequence(&spec, &cfg.sensor, cfg.sequence.num_frames, &mut rng)?;
        let images = write_sequence(&seq, cfg, out_dir, "reference/", &mut artifacts)?;
        Ok((seq, images))
    })?;

    let report = in_stage("metrics", || {
        let r = compute_metrics(
            &MetricInputs {
                graph: &graph,
                layout,
                generated: &generated,
                generated_images: &generated_images,
                reference: &reference,
                reference_images: &reference_images,
            },
            cfg,
        )?;
        write_json(&out_dir.join("metrics.json"), kinds::METRIC_REPORT, &r)?;
        artifacts.push("metrics.json".into());
        Ok(r)
    })?;

    artifacts.push("manifest.json".into());
    artifacts.sort();
    let manifest = Manifest {
        seed: cfg.seed,
        seeds,
        inputs: BTreeMap::from([("annotation".to_string(), inputs.annotation.display().to_string())]),
        artifacts,
    };
    in_stage("manifest", || {
        write_json(&out_dir.join("manifest.json"), kinds::MANIFEST, &manifest)
    })?;
    Ok(PipelineOutput { report, manifest })
}
