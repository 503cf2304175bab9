use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use lidar4d_core::diffusion::{train_denoiser, TrainConfig, TrainExample};
use lidar4d_core::edit::{apply_edit, edit_mask, simulator_edit, EditOp};
use lidar4d_core::evalsuite::{
    average_precision_by_class, bcr, bev_histogram, cfca, cfsc, chamfer, ctc, fdc, feature_set_from_images,
    frame_boxes, frechet, jsd, mmd, mscr, scr, tcr, ttce, ApMode, DetectionRecord, GroundTruthBox, MatchSpace,
};
use lidar4d_core::geometry::{Box3D, Frame, PointCloud, Pose, SceneSequence};
use lidar4d_core::layout::{
    encode_box, encode_trajectory, featurize_condition, sample_layout, synthetic_center_dataset, Layout4D, LayoutSample,
};
use lidar4d_core::rangecodec::{decode_tensor, encode_tensor, project, unproject};
use lidar4d_core::scenegraph::{build_graph, filter_objects, Category, FrameAnnotation, SceneGraph};
use lidar4d_core::synth::{raycast_frame, simulate_sequence, SceneSpec};
use lidar4d_core::warp::{conditioning_points, layout_boxes_at, split_fg_bg};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{ShellError, ShellResult};
use crate::formats::{read_point_cloud, read_range_tensor, write_denoiser, write_point_cloud, write_range_tensor};
use crate::pipeline::{load_priors, run_pipeline, write_sequence, MetricReport, PipelineInputs};
use crate::plot::export_all;
use crate::schema::{kinds, read_json, to_json_string, write_json};

#[derive(Debug, Parser)]
#[command(
    name = "lidar4d",
    version,
    about = "4D LiDAR scene generation and evaluation toolkit"
)]
pub struct Cli {
    /// Run configuration (JSON, schema "run_config"); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Annotation → scene graph.
    BuildGraph {
        #[arg(long)]
        annotation: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scene graph → sampled 4D layout.
    SampleLayout {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ray-casts one frame of a layout or scene.
    Synth {
        #[command(flatten)]
        scene: SceneSource,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also writes the scene spec used.
        #[arg(long)]
        spec_out: Option<PathBuf>,
    },
    /// Point cloud → range tensor.
    Project {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Range tensor → point cloud.
    Unproject {
        #[arg(long)]
        tensor: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Warps frame 0 and frame t−1 into frame t as conditioning points.
    WarpNext {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        first: PathBuf,
        #[arg(long)]
        prev: PathBuf,
        #[arg(long)]
        frame: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also writes the projected conditioning map.
        #[arg(long)]
        map_out: Option<PathBuf>,
    },
    /// Applies an edit script to a layout.
    Edit {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Edits a layout and re-synthesizes only the masked pixels of frame 0.
    Inpaint {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        original_out: Option<PathBuf>,
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Simulates a sequence into a directory of frames, range tensors and poses.
    SimulateSeq {
        #[command(flatten)]
        scene: SceneSource,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Computes metrics; writes a metric report to --out or stdout.
    Eval {
        #[command(subcommand)]
        target: EvalTarget,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Trains an MLP denoiser.
    TrainDenoiser {
        #[command(flatten)]
        data: TrainData,
        /// Branch to extract from annotations.
        #[arg(long, value_enum, default_value_t = Branch::Boxes)]
        branch: Branch,
        /// Training settings (schema "train_config"); otherwise the run config's.
        #[arg(long)]
        train_config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log_out: Option<PathBuf>,
    },
    /// BEV and range images of a cloud as PNG and CSV.
    PlotExport {
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Full pipeline from one annotation.
    Run {
        #[arg(long)]
        annotation: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct SceneSource {
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long)]
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct TrainData {
    /// Examples file (schema "train_dataset").
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Size of a generated two-dimensional box-center set.
    #[arg(long)]
    pub synthetic_centers: Option<usize>,
    #[arg(long, num_args = 1..)]
    pub annotations: Option<Vec<PathBuf>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Branch {
    Boxes,
    Trajectories,
}

#[derive(Debug, Subcommand)]
pub enum EvalTarget {
    /// SCR, MSCR, BCR, TCR of a layout against its graph.
    Layout {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        graph: PathBuf,
    },
    /// TTCE and CTC of a sequence directory.
    Sequence {
        #[arg(long)]
        dir: PathBuf,
    },
    /// JSD, MMD, Fréchet and Chamfer between two sets of clouds.
    Clouds {
        #[arg(long, num_args = 1.., required = true)]
        generated: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        reference: Vec<PathBuf>,
    },
    /// Per-class AP and mean confidence.
    Detections {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(long, value_enum, default_value_t = ApArg::R40)]
        mode: ApArg,
        #[arg(long, value_enum, default_value_t = SpaceArg::Bev)]
        space: SpaceArg,
    },
    /// Classification accuracy of predicted labels.
    Classification {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
    /// Shape consistency of sampled boxes against references.
    Boxes {
        #[arg(long)]
        samples: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ApArg {
    R11,
    R40,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpaceArg {
    Bev,
    #[value(name = "3d")]
    ThreeD,
}

/// Sampled boxes per reference box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSamples {
    pub samples: Vec<Vec<Box3D>>,
    pub reference: Vec<Box3D>,
}

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> ShellResult<RunConfig> {
    let mut cfg = match path {
        Some(p) => read_json(p, kinds::RUN_CONFIG)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_scene(src: &SceneSource, cfg: &RunConfig) -> ShellResult<SceneSpec> {
    if let Some(p) = &src.scene {
        let spec: SceneSpec = read_json(p, kinds::SCENE_SPEC)?;
        spec.validate()?;
        return Ok(spec);
    }
    let p = src
        .layout
        .as_ref()
        .ok_or_else(|| ShellError::Usage("need --layout or --scene".into()))?;
    let layout = read_layout(p)?;
    let mut spec = SceneSpec::from_layout(&layout, &cfg.sensor, cfg.sequence.object_material)?;
    spec.noise_sigma = cfg.sequence.noise_sigma;
    Ok(spec)
}

/// Accepts either a bare layout or a sampled one.
pub fn read_layout(path: &Path) -> ShellResult<Layout4D> {
    let v: Value = read_json(path, kinds::LAYOUT)?;
    let parsed = if v.get("layout").is_some() {
        serde_json::from_value::<LayoutSample>(v).map(|s| s.layout)
    } else {
        serde_json::from_value::<Layout4D>(v)
    };
    parsed.map_err(|e| ShellError::Schema {
        path: path.to_path_buf(),
        source: e.into(),
    })
}

fn read_sequence_dir(dir: &Path) -> ShellResult<SceneSequence> {
    let poses: Vec<Pose> = read_json(&dir.join("poses.json"), kinds::POSES)?;
    let frames = poses
        .into_iter()
        .enumerate()
        .map(|(t, pose)| {
            Ok(Frame {
                cloud: read_point_cloud(&dir.join(format!("frame_{t:03}.lcpc")))?,
                pose,
                boxes: None,
            })
        })
        .collect::<ShellResult<Vec<_>>>()?;
    Ok(SceneSequence::new(frames)?)
}

fn emit_report(report: &MetricReport, out: Option<&Path>) -> ShellResult<()> {
    match out {
        Some(p) => write_json(p, kinds::METRIC_REPORT, report),
        None => {
            let s = to_json_string(kinds::METRIC_REPORT, report).map_err(|source| ShellError::Schema {
                path: "<stdout>".into(),
                source,
            })?;
            print!("{s}");
            Ok(())
        }
    }
}

fn undefined_as_null(r: lidar4d_core::Result<f64>) -> ShellResult<Value> {
    match r {
        Ok(v) => Ok(json!(v)),
        Err(lidar4d_core::Error::Empty(_)) => Ok(Value::Null),
        Err(e) => Err(e.into()),
    }
}

fn eval(target: &EvalTarget, cfg: &RunConfig) -> ShellResult<MetricReport> {
    let mut m = BTreeMap::new();
    match target {
        EvalTarget::Layout { layout, graph } => {
            let layout = read_layout(layout)?;
            let graph: SceneGraph = read_json(graph, kinds::SCENE_GRAPH)?;
            m.insert("scr".into(), undefined_as_null(scr(&layout, &graph, &cfg.relations))?);
            m.insert("mscr".into(), undefined_as_null(mscr(&layout, &graph, &cfg.motion))?);
            let frames = frame_boxes(&layout.boxes(), &layout.trajectories())?;
            m.insert("bcr".into(), undefined_as_null(bcr(&frames))?);
            m.insert(
                "tcr".into(),
                undefined_as_null(tcr(&layout.boxes(), &layout.trajectories()))?,
            );
        }
        EvalTarget::Sequence { dir } => {
            let seq = read_sequence_dir(dir)?;
            let r = ttce(&seq, &seq.poses(), &cfg.icp)?;
            m.insert("ttce".into(), json!({ "rot": r.rot_err, "trans": r.trans_err }));
            m.insert("ctc".into(), json!(ctc(&seq, &seq.poses(), cfg.metrics.ctc_interval)?));
        }
        EvalTarget::Clouds { generated, reference } => {
            let read = |ps: &[PathBuf]| ps.iter().map(|p| read_point_cloud(p)).collect::<ShellResult<Vec<_>>>();
            let (g, r) = (read(generated)?, read(reference)?);
            let mb = &cfg.metrics;
            let pooled = |cs: &[PointCloud]| {
                let mut all = PointCloud::empty();
                cs.iter().for_each(|c| all.extend(c));
                bev_histogram(&all, mb.bev_bounds, mb.bev_bins)
            };
            m.insert("jsd".into(), json!(jsd(&pooled(&g)?, &pooled(&r)?)?));
            let masses = |cs: &[PointCloud]| {
                cs.iter()
                    .map(|c| Ok(bev_histogram(c, mb.bev_bounds, mb.bev_bins)?.mass))
                    .collect::<ShellResult<Vec<_>>>()
            };
            m.insert("mmd".into(), json!(mmd(&masses(&g)?, &masses(&r)?, mb.mmd_kernel)?));
            let images = |cs: &[PointCloud]| cs.iter().map(|c| project(c, &cfg.sensor)).collect::<Vec<_>>();
            let fg = feature_set_from_images(&images(&g), &cfg.sensor)?;
            let fr = feature_set_from_images(&images(&r), &cfg.sensor)?;
            m.insert("frechet".into(), json!(frechet(&fg, &fr)?));
            if g.len() == r.len() {
                let total = g
                    .iter()
                    .zip(&r)
                    .map(|(a, b)| chamfer(&a.positions(), &b.positions()))
                    .sum::<lidar4d_core::Result<f64>>()?;
                m.insert("chamfer".into(), json!(total / g.len() as f64));
            }
        }
        EvalTarget::Detections {
            detections,
            ground_truth,
            mode,
            space,
        } => {
            let dets: Vec<DetectionRecord> = read_json(detections, kinds::DETECTIONS)?;
            let gts: Vec<GroundTruthBox> = read_json(ground_truth, kinds::GROUND_TRUTH)?;
            let mode = match mode {
                ApArg::R11 => ApMode::R11,
                ApArg::R40 => ApMode::R40,
            };
            let space = match space {
                SpaceArg::Bev => MatchSpace::Bev,
                SpaceArg::ThreeD => MatchSpace::ThreeD,
            };
            let ap = average_precision_by_class(&dets, &gts, cfg.metrics.ap_iou, mode, space)?;
            let classes: BTreeSet<Category> = dets
                .iter()
                .map(|d| d.class)
                .chain(gts.iter().map(|g| g.class))
                .collect();
            let conf = fdc(&dets, &classes.into_iter().collect::<Vec<_>>())?;
            m.insert("ap".into(), json!(ap));
            m.insert("fdc".into(), json!(conf));
        }
        EvalTarget::Classification { predictions, labels } => {
            let p: Vec<String> = read_json(predictions, kinds::LABELS)?;
            let l: Vec<String> = read_json(labels, kinds::LABELS)?;
            m.insert("cfca".into(), json!(cfca(&p, &l)?));
        }
        EvalTarget::Boxes { samples } => {
            let s: BoxSamples = read_json(samples, kinds::BOX_SAMPLES)?;
            m.insert("cfsc".into(), json!(cfsc(&s.samples, &s.reference)?));
        }
    }
    Ok(MetricReport { metrics: m })
}

/// Box codes (condition: node features) or trajectory codes (condition: node
/// features plus box code) for every filtered object in the annotations.
pub fn annotation_dataset(paths: &[PathBuf], branch: Branch, cfg: &RunConfig) -> ShellResult<Vec<TrainExample>> {
    let layout = cfg.layout_config();
    let mut out = Vec::new();
    for p in paths {
        let ann: FrameAnnotation = read_json(p, kinds::ANNOTATION)?;
        let graph = build_graph(&ann, &cfg.relations, &cfg.motion)?;
        // Graph node ids follow the filtered-object order, starting at 1.
        for (k, o) in filter_objects(&ann, &cfg.motion).iter().enumerate() {
            let cond = featurize_condition(&graph, k as u32 + 1)?;
            let code = encode_box(&o.bbox, &layout.bounds)?;
            match branch {
                Branch::Boxes => out.push(TrainExample {
                    x0: code.0.to_vec(),
                    cond,
                }),
                Branch::Trajectories => {
                    if let Some(t) = o.trajectory.as_ref().filter(|t| t.len() == layout.horizon) {
                        let mut c = cond;
                        c.extend_from_slice(&code.0);
                        out.push(TrainExample {
                            x0: encode_trajectory(t, layout.disp_bound)?,
                            cond: c,
                        });
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(lidar4d_core::Error::Empty("training examples from annotations").into());
    }
    Ok(out)
}

/// Jitter in meters of the generated box-center set.
pub const SYNTHETIC_JITTER: f64 = 1.0;

pub fn execute(cli: &Cli) -> ShellResult<()> {
    let cfg = load_config(cli.config.as_deref(), cli.seed)?;
    let rng = || ChaCha8Rng::seed_from_u64(cfg.seed);
    match &cli.command {
        Command::BuildGraph { annotation, out } => {
            let ann: FrameAnnotation = read_json(annotation, kinds::ANNOTATION)?;
            write_json(
                out,
                kinds::SCENE_GRAPH,
                &build_graph(&ann, &cfg.relations, &cfg.motion)?,
            )
        }
        Command::SampleLayout { graph, out } => {
            let graph: SceneGraph = read_json(graph, kinds::SCENE_GRAPH)?;
            let schedule = cfg.schedule()?;
            let priors = load_priors(&graph, &cfg, &schedule)?;
            let s = sample_layout(&graph, priors.models(), &schedule, &cfg.layout_config(), cfg.seed)?;
            write_json(out, kinds::LAYOUT, &s)
        }
        Command::Synth {
            scene,
            frame,
            out,
            spec_out,
        } => {
            let spec = load_scene(scene, &cfg)?;
            if let Some(p) = spec_out {
                write_json(p, kinds::SCENE_SPEC, &spec)?;
            }
            write_point_cloud(&raycast_frame(&spec, &cfg.sensor, *frame, &mut rng())?, out)
        }
        Command::Project { cloud, out } => {
            let c = read_point_cloud(cloud)?;
            write_range_tensor(&encode_tensor(&project(&c, &cfg.sensor), &cfg.sensor)?, out)
        }
        Command::Unproject { tensor, out } => {
            let t = read_range_tensor(tensor)?;
            write_point_cloud(&unproject(&decode_tensor(&t, &cfg.sensor)?, &cfg.sensor), out)
        }
        Command::WarpNext {
            layout,
            first,
            prev,
            frame,
            out,
            map_out,
        } => {
            let layout = read_layout(layout)?;
            if *frame == 0 {
                return Err(ShellError::Usage("--frame must be at least 1".into()));
            }
            let d0 = split_fg_bg(&read_point_cloud(first)?, &layout_boxes_at(&layout, 0)?);
            let dp = split_fg_bg(&read_point_cloud(prev)?, &layout_boxes_at(&layout, frame - 1)?);
            let pts = conditioning_points(&d0, &dp, &layout, *frame)?;
            if let Some(p) = map_out {
                write_range_tensor(&encode_tensor(&project(&pts, &cfg.sensor), &cfg.sensor)?, p)?;
            }
            write_point_cloud(&pts, out)
        }
        Command::Edit {
            layout,
            script,
            out,
            mask_out,
        } => {
            let old = read_layout(layout)?;
            let ops: Vec<EditOp> = read_json(script, kinds::EDIT_SCRIPT)?;
            let mut cur = old.clone();
            let mut collisions = Vec::new();
            for op in &ops {
                let r = apply_edit(&cur, op, &cfg.layout.bounds)?;
                collisions.extend(r.new_collisions);
                cur = r.layout;
            }
            write_json(out, kinds::LAYOUT, &cur)?;
            if let Some(p) = mask_out {
                write_json(
                    p,
                    kinds::EDIT_MASK,
                    &edit_mask(&old, &cur, &cfg.sensor, cfg.edit_dilation)?,
                )?;
            }
            println!("{}", json!({ "new_collisions": collisions }));
            Ok(())
        }
        Command::Inpaint {
            layout,
            script,
            out,
            original_out,
            mask_out,
        } => {
            let old = read_layout(layout)?;
            let ops: Vec<EditOp> = read_json(script, kinds::EDIT_SCRIPT)?;
            let mut cur = old.clone();
            for op in &ops {
                cur = apply_edit(&cur, op, &cfg.layout.bounds)?.layout;
            }
            let mask = edit_mask(&old, &cur, &cfg.sensor, cfg.edit_dilation)?;
            let spec = |l: &Layout4D| SceneSpec::from_layout(l, &cfg.sensor, cfg.sequence.object_material);
            let r = simulator_edit(
                &spec(&old)?,
                &spec(&cur)?,
                &mask,
                &cfg.sensor,
                &cfg.schedule()?,
                &mut rng(),
            )?;
            if let Some(p) = original_out {
                write_range_tensor(&r.original, p)?;
            }
            if let Some(p) = mask_out {
                write_json(p, kinds::EDIT_MASK, &r.mask)?;
            }
            write_range_tensor(&r.blended, out)
        }
        Command::SimulateSeq { scene, frames, out_dir } => {
            let spec = load_scene(scene, &cfg)?;
            let n = frames.unwrap_or(cfg.sequence.num_frames);
            let seq = simulate_sequence(&spec, &cfg.sensor, n, &mut rng())?;
            write_sequence(&seq, &cfg, out_dir, "", &mut Vec::new())?;
            Ok(())
        }
        Command::Eval { target, out } => emit_report(&eval(target, &cfg)?, out.as_deref()),
        Command::TrainDenoiser {
            data,
            branch,
            train_config,
            out,
            log_out,
        } => {
            let mut tc: TrainConfig = match train_config {
                Some(p) => read_json(p, kinds::TRAIN_CONFIG)?,
                None => cfg.train.clone(),
            };
            if let Some(s) = cli.seed {
                tc.seed = s;
            }
            let dataset = if let Some(p) = &data.dataset {
                read_json(p, kinds::TRAIN_DATASET)?
            } else if let Some(n) = data.synthetic_centers {
                synthetic_center_dataset(n, SYNTHETIC_JITTER, tc.seed)
            } else {
                annotation_dataset(data.annotations.as_deref().unwrap_or_default(), *branch, &cfg)?
            };
            let report = train_denoiser(&dataset, &tc)?;
            if let Some(p) = log_out {
                write_json(p, kinds::TRAIN_LOG, &report.log)?;
            }
            write_denoiser(&report.model, out)
        }
        Command::PlotExport { cloud, out_dir } => {
            let c = read_point_cloud(cloud)?;
            let h = bev_histogram(&c, cfg.metrics.bev_bounds, cfg.metrics.bev_bins)?;
            export_all(&h, &project(&c, &cfg.sensor), &cfg.sensor, out_dir)?;
            Ok(())
        }
        Command::Run { annotation, out_dir } => {
            let out = run_pipeline(
                &cfg,
                &PipelineInputs {
                    annotation: annotation.clone(),
                },
                out_dir,
            )?;
            let s = to_json_string(kinds::METRIC_REPORT, &out.report).map_err(|source| ShellError::Schema {
                path: "<stdout>".into(),
                source,
            })?;
            print!("{s}");
            Ok(())
        }
    }
}
