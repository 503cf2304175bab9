//! End-to-end runs of every subcommand through `execute`.

use std::fs;
use std::path::PathBuf;

use clap::Parser;
use lidar4d_core::geometry::{Point, PointCloud};
use serde_json::Value;

use crate::cli::{execute, Cli};
use crate::config::MetricName;
use crate::formats::{read_point_cloud, write_point_cloud};
use crate::ShellResult;

const ANNOTATION: &str = r#"{"schema":"annotation","version":"1.0","data":{"frame_id":"f0","objects":[
 {"box":{"center":[10,2,-1],"size":[1.9,4.5,1.6],"yaw":0.1},"category":"car","num_points":200,"trajectory":[[1,0],[2,0],[3,0],[4,0],[5,0]]},
 {"box":{"center":[-8,-5,-1],"size":[2.5,8,3],"yaw":1.5},"category":"truck","num_points":90},
 {"box":{"center":[4,-9,-1.2],"size":[0.6,0.6,1.7],"yaw":0},"category":"pedestrian","num_points":40},
 {"box":{"center":[30,30,-1],"size":[1.9,4.5,1.6],"yaw":0},"category":"car","num_points":3}
],"ego_trajectory":[[1,0],[2,0],[3,0],[4,0],[5,0]]}}"#;

fn config(metrics: Option<&str>) -> String {
    let metrics = metrics
        .map(|m| format!(r#","metrics":{{"enabled":{m}}}"#))
        .unwrap_or_default();
    format!(
        r#"{{"schema":"run_config","version":"1.0","data":{{"seed":3,
        "sensor":{{"width":128,"height":16,"fov_up":0.1745,"fov_down":-0.5236,"max_range":80,"sensor_height":1.84}},
        "layout":{{"shape_points":8}},"diffusion":{{"sample_steps":16}}{metrics}}}}}"#
    )
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(metrics: Option<&str>) -> Self {
        let w = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        w.write("ann.json", ANNOTATION);
        w.write("cfg.json", &config(metrics));
        w
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, body: &str) {
        fs::write(self.path(name), body).unwrap();
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_slice(&fs::read(self.path(name)).unwrap()).unwrap()
    }

    // Arguments naming files are given relative to the workspace.
    fn run(&self, args: &[&str]) -> ShellResult<()> {
        let cfg = self.path("cfg.json");
        let mut argv: Vec<String> = vec!["lidar4d".into(), "--config".into(), cfg.display().to_string()];
        for a in args {
            argv.push(if a.contains('.') || a.ends_with("_dir") {
                self.path(a).display().to_string()
            } else {
                a.to_string()
            });
        }
        execute(&Cli::try_parse_from(argv).unwrap())
    }

    fn ok(&self, args: &[&str]) {
        if let Err(e) = self.run(args) {
            panic!("{args:?}: {}", e.to_json());
        }
    }
}

fn exists(w: &Workspace, names: &[&str]) {
    for n in names {
        assert!(w.path(n).exists(), "{n} missing");
    }
}

#[test]
fn every_subcommand_runs() {
    let w = Workspace::new(None);
    w.ok(&["build-graph", "--annotation", "ann.json", "--out", "graph.json"]);
    assert_eq!(w.json("graph.json")["data"]["nodes"].as_array().unwrap().len(), 4);
    w.ok(&["sample-layout", "--graph", "graph.json", "--out", "layout.json"]);
    w.ok(&[
        "synth",
        "--layout",
        "layout.json",
        "--out",
        "f0.lcpc",
        "--spec-out",
        "scene.json",
    ]);
    w.ok(&["synth", "--scene", "scene.json", "--frame", "1", "--out", "f1.lcpc"]);
    w.ok(&["project", "--cloud", "f0.lcpc", "--out", "f0.lcrt"]);
    w.ok(&["unproject", "--tensor", "f0.lcrt", "--out", "f0_back.lcpc"]);
    assert!(!read_point_cloud(&w.path("f0_back.lcpc")).unwrap().is_empty());
    w.ok(&[
        "warp-next",
        "--layout",
        "layout.json",
        "--first",
        "f0.lcpc",
        "--prev",
        "f0.lcpc",
        "--frame",
        "1",
        "--out",
        "cond.lcpc",
        "--map-out",
        "cond.lcrt",
    ]);
    w.write(
        "edit.json",
        r#"{"schema":"edit_script","version":"1.0","data":[{"op":"delete","node_id":2}]}"#,
    );
    w.ok(&[
        "edit",
        "--layout",
        "layout.json",
        "--script",
        "edit.json",
        "--out",
        "edited.json",
        "--mask-out",
        "mask.json",
    ]);
    w.ok(&[
        "inpaint",
        "--layout",
        "layout.json",
        "--script",
        "edit.json",
        "--out",
        "inpainted.lcrt",
        "--original-out",
        "original.lcrt",
        "--mask-out",
        "imask.json",
    ]);
    w.ok(&[
        "simulate-seq",
        "--layout",
        "layout.json",
        "--frames",
        "3",
        "--out-dir",
        "seq_dir",
    ]);
    exists(
        &w,
        &[
            "graph.json",
            "layout.json",
            "scene.json",
            "f0.lcpc",
            "f1.lcpc",
            "f0.lcrt",
            "cond.lcpc",
            "cond.lcrt",
            "edited.json",
            "mask.json",
            "inpainted.lcrt",
            "original.lcrt",
            "imask.json",
            "seq_dir/poses.json",
        ],
    );

    w.ok(&[
        "eval",
        "layout",
        "--layout",
        "layout.json",
        "--graph",
        "graph.json",
        "--out",
        "m_layout.json",
    ]);
    w.ok(&["eval", "sequence", "--dir", "seq_dir", "--out", "m_seq.json"]);
    w.ok(&[
        "eval",
        "clouds",
        "--generated",
        "f0.lcpc",
        "f1.lcpc",
        "--reference",
        "f1.lcpc",
        "f0.lcpc",
        "--out",
        "m_clouds.json",
    ]);
    w.write(
        "dets.json",
        r#"{"schema":"detections","version":"1.0","data":[
        {"frame_id":"a","box":{"center":[10,0,0],"size":[2,4,1.5],"yaw":0},"class":"car","confidence":0.9}]}"#,
    );
    w.write(
        "gts.json",
        r#"{"schema":"ground_truth","version":"1.0","data":[
        {"frame_id":"a","box":{"center":[10,0,0],"size":[2,4,1.5],"yaw":0},"class":"car"}]}"#,
    );
    w.ok(&[
        "eval",
        "detections",
        "--detections",
        "dets.json",
        "--ground-truth",
        "gts.json",
        "--out",
        "m_det.json",
    ]);
    w.write(
        "pred.json",
        r#"{"schema":"labels","version":"1.0","data":["car","truck","car"]}"#,
    );
    w.write(
        "labels.json",
        r#"{"schema":"labels","version":"1.0","data":["car","car","car"]}"#,
    );
    w.ok(&[
        "eval",
        "classification",
        "--predictions",
        "pred.json",
        "--labels",
        "labels.json",
        "--out",
        "m_cls.json",
    ]);
    w.write(
        "boxes.json",
        r#"{"schema":"box_samples","version":"1.0","data":{"samples":[[{"center":[0,0,0],"size":[2,4,1.5],"yaw":0}]],
        "reference":[{"center":[0,0,0],"size":[2,4,1.5],"yaw":0}]}}"#,
    );
    w.ok(&["eval", "boxes", "--samples", "boxes.json", "--out", "m_box.json"]);
    let det = w.json("m_det.json");
    assert!(det.to_string().contains("\"ap\""), "{det}");
    assert_eq!(
        w.json("m_cls.json")["data"]["metrics"]["cfca"].as_f64().unwrap(),
        2.0 / 3.0
    );
    assert_eq!(w.json("m_box.json")["data"]["metrics"]["cfsc"].as_f64().unwrap(), 1.0);

    w.write(
        "train.json",
        r#"{"schema":"train_config","version":"1.0","data":{"steps":20,"widths":[8],"time_dim":4,
        "warmup_steps":5,"log_every":5,"diffusion_steps":50}}"#,
    );
    w.ok(&[
        "train-denoiser",
        "--synthetic-centers",
        "32",
        "--train-config",
        "train.json",
        "--out",
        "c.lcdn",
        "--log-out",
        "c_log.json",
    ]);
    w.ok(&[
        "train-denoiser",
        "--annotations",
        "ann.json",
        "--train-config",
        "train.json",
        "--out",
        "b.lcdn",
    ]);
    w.ok(&[
        "train-denoiser",
        "--annotations",
        "ann.json",
        "--branch",
        "trajectories",
        "--train-config",
        "train.json",
        "--out",
        "t.lcdn",
    ]);
    assert_eq!(w.json("c_log.json")["data"].as_array().unwrap().len(), 4);

    w.ok(&["plot-export", "--cloud", "f0.lcpc", "--out-dir", "plots_dir"]);
    exists(
        &w,
        &[
            "plots_dir/bev.png",
            "plots_dir/bev.csv",
            "plots_dir/range.png",
            "plots_dir/range.csv",
        ],
    );
    w.ok(&["run", "--annotation", "ann.json", "--out-dir", "run_dir"]);
    exists(
        &w,
        &["run_dir/metrics.json", "run_dir/manifest.json", "run_dir/layout.json"],
    );
}

#[test]
fn missing_input_reports_the_path() {
    let w = Workspace::new(None);
    let e = w
        .run(&["build-graph", "--annotation", "absent.json", "--out", "graph.json"])
        .unwrap_err();
    let j = e.to_json();
    assert_eq!(j["error"], "io");
    assert!(j["path"].as_str().unwrap().ends_with("absent.json"), "{j}");
    let e = w
        .run(&["run", "--annotation", "absent.json", "--out-dir", "run_dir"])
        .unwrap_err();
    let j = e.to_json();
    assert_eq!(j["stage"], "annotation");
    assert!(j["path"].as_str().unwrap().ends_with("absent.json"), "{j}");
}

#[test]
fn newer_schema_major_is_rejected() {
    let w = Workspace::new(None);
    w.write("ann2.json", &ANNOTATION.replace("\"1.0\"", "\"2.0\""));
    let e = w
        .run(&["build-graph", "--annotation", "ann2.json", "--out", "graph.json"])
        .unwrap_err();
    assert_eq!(e.to_json()["error"], "schema");
    w.write("ann3.json", &ANNOTATION.replace("\"1.0\"", "\"1.4\""));
    w.ok(&["build-graph", "--annotation", "ann3.json", "--out", "graph.json"]);
}

fn metric_counts(raw: &str) -> Vec<(&'static str, usize)> {
    MetricName::ALL
        .iter()
        .map(|m| (m.key(), raw.matches(&format!("\"{}\":", m.key())).count()))
        .collect()
}

#[test]
fn report_has_each_enabled_metric_once() {
    let w = Workspace::new(None);
    w.ok(&["run", "--annotation", "ann.json", "--out-dir", "run_dir"]);
    let raw = fs::read_to_string(w.path("run_dir/metrics.json")).unwrap();
    for (key, n) in metric_counts(&raw) {
        assert_eq!(n, 1, "{key} in {raw}");
    }

    let w = Workspace::new(Some(r#"["tcr","jsd"]"#));
    w.ok(&["run", "--annotation", "ann.json", "--out-dir", "run_dir"]);
    let raw = fs::read_to_string(w.path("run_dir/metrics.json")).unwrap();
    for (key, n) in metric_counts(&raw) {
        assert_eq!(n, usize::from(key == "tcr" || key == "jsd"), "{key} in {raw}");
    }
}

#[test]
fn project_round_trips_through_files() {
    let w = Workspace::new(None);
    let cloud: PointCloud = (0..200)
        .map(|k| {
            let a = k as f64 * 0.031;
            Point::new(12.0 * a.cos(), 12.0 * a.sin(), -1.0, 0.4)
        })
        .collect();
    write_point_cloud(&cloud, &w.path("c.lcpc")).unwrap();
    w.ok(&["project", "--cloud", "c.lcpc", "--out", "c.lcrt"]);
    w.ok(&["unproject", "--tensor", "c.lcrt", "--out", "c2.lcpc"]);
    w.ok(&["project", "--cloud", "c2.lcpc", "--out", "c2.lcrt"]);
    assert_eq!(
        fs::read(w.path("c.lcrt")).unwrap(),
        fs::read(w.path("c2.lcrt")).unwrap()
    );
}
