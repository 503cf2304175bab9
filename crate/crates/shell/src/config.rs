use std::collections::BTreeSet;
use std::path::PathBuf;

use lidar4d_core::diffusion::{cosine_schedule, NoiseSchedule, TrainConfig};
use lidar4d_core::edit::DEFAULT_DILATION;
use lidar4d_core::evalsuite::{IcpConfig, Kernel, DEFAULT_AP_IOU, DEFAULT_BEV_BINS, DEFAULT_BEV_BOUNDS};
use lidar4d_core::layout::{LayoutConfig, DEFAULT_BOUNDS, DEFAULT_DISP_BOUND};
use lidar4d_core::rangecodec::SensorConfig;
use lidar4d_core::scenegraph::{MotionConfig, RelationConfig};
use serde::{Deserialize, Serialize};

use crate::error::{ShellError, ShellResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffusionSettings {
    pub train_steps: usize,
    pub sample_steps: usize,
    pub schedule_s: f64,
}

impl Default for DiffusionSettings {
    fn default() -> Self {
        Self {
            train_steps: 1024,
            sample_steps: 256,
            schedule_s: 0.008,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutSettings {
    pub bounds: [f64; 6],
    pub disp_bound: f64,
    pub horizon: usize,
    pub shape_points: usize,
    pub reject_k: usize,
    pub iou_threshold: f64,
    pub penalty_weight: f64,
}

impl Default for LayoutSettings {
    fn default() -> Self {
        let d = LayoutConfig::default();
        Self {
            bounds: DEFAULT_BOUNDS,
            disp_bound: DEFAULT_DISP_BOUND,
            horizon: d.horizon,
            shape_points: d.shape_points,
            reject_k: d.reject_k,
            iou_threshold: d.iou_threshold,
            penalty_weight: d.penalty_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceSettings {
    /// Frames simulated, including frame 0; at most `horizon + 1`.
    pub num_frames: usize,
    pub object_material: f64,
    pub noise_sigma: f64,
}

impl Default for SequenceSettings {
    fn default() -> Self {
        Self {
            num_frames: 3,
            object_material: 0.6,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Scr,
    Mscr,
    Bcr,
    Tcr,
    Ttce,
    Ctc,
    Jsd,
    Mmd,
    Frechet,
}

impl MetricName {
    pub const ALL: [MetricName; 9] = [
        Self::Scr,
        Self::Mscr,
        Self::Bcr,
        Self::Tcr,
        Self::Ttce,
        Self::Ctc,
        Self::Jsd,
        Self::Mmd,
        Self::Frechet,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Self::Scr => "scr",
            Self::Mscr => "mscr",
            Self::Bcr => "bcr",
            Self::Tcr => "tcr",
            Self::Ttce => "ttce",
            Self::Ctc => "ctc",
            Self::Jsd => "jsd",
            Self::Mmd => "mmd",
            Self::Frechet => "frechet",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSettings {
    pub enabled: BTreeSet<MetricName>,
    pub ctc_interval: usize,
    pub bev_bounds: [f64; 4],
    pub bev_bins: usize,
    pub mmd_kernel: Kernel,
    pub ap_iou: f64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            enabled: MetricName::ALL.into_iter().collect(),
            ctc_interval: 1,
            bev_bounds: DEFAULT_BEV_BOUNDS,
            bev_bins: DEFAULT_BEV_BINS,
            mmd_kernel: Kernel::default(),
            ap_iou: DEFAULT_AP_IOU,
        }
    }
}

/// Trained branch parameters; a missing entry falls back to a Gaussian prior.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelPaths {
    pub boxes: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
    pub shapes: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub sensor: SensorConfig,
    pub diffusion: DiffusionSettings,
    pub relations: RelationConfig,
    pub motion: MotionConfig,
    pub layout: LayoutSettings,
    pub sequence: SequenceSettings,
    pub edit_dilation: usize,
    pub icp: IcpConfig,
    pub metrics: MetricSettings,
    pub models: ModelPaths,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sensor: SensorConfig::default(),
            diffusion: DiffusionSettings::default(),
            relations: RelationConfig::default(),
            motion: MotionConfig::default(),
            layout: LayoutSettings::default(),
            sequence: SequenceSettings::default(),
            edit_dilation: DEFAULT_DILATION,
            icp: IcpConfig::default(),
            metrics: MetricSettings::default(),
            models: ModelPaths::default(),
            train: TrainConfig::default(),
        }
    }
}

fn bad(field: &str, reason: impl Into<String>) -> ShellError {
    ShellError::Core(lidar4d_core::Error::Invalid {
        field: field.into(),
        reason: reason.into(),
    })
}

impl RunConfig {
    pub fn validate(&self) -> ShellResult<()> {
        self.sensor.validate()?;
        self.relations.validate()?;
        self.train.validate()?;
        let d = &self.diffusion;
        if d.train_steps == 0 || d.sample_steps == 0 || d.sample_steps > d.train_steps {
            return Err(bad("diffusion", "need 1 ≤ sample_steps ≤ train_steps"));
        }
        if !(d.schedule_s > 0.0 && d.schedule_s.is_finite()) {
            return Err(bad("diffusion.schedule_s", "must be positive"));
        }
        if self.layout.horizon == 0 {
            return Err(bad("layout.horizon", "must be at least 1"));
        }
        let n = self.sequence.num_frames;
        if n < 2 || n > self.layout.horizon + 1 {
            return Err(bad(
                "sequence.num_frames",
                format!("must lie in 2..={}", self.layout.horizon + 1),
            ));
        }
        if !(0.0..=1.0).contains(&self.sequence.object_material) {
            return Err(bad("sequence.object_material", "must lie in [0, 1]"));
        }
        if !(self.sequence.noise_sigma >= 0.0 && self.sequence.noise_sigma.is_finite()) {
            return Err(bad("sequence.noise_sigma", "must be non-negative"));
        }
        let m = &self.metrics;
        if m.ctc_interval == 0 || m.ctc_interval >= n {
            return Err(bad("metrics.ctc_interval", format!("must lie in 1..{n}")));
        }
        if m.bev_bins == 0 {
            return Err(bad("metrics.bev_bins", "must be at least 1"));
        }
        if !(m.ap_iou > 0.0 && m.ap_iou <= 1.0) {
            return Err(bad("metrics.ap_iou", "must lie in (0, 1]"));
        }
        if self.icp.max_iters == 0 || !(self.icp.tol >= 0.0) {
            return Err(bad("icp", "need max_iters ≥ 1 and tol ≥ 0"));
        }
        let b = &self.layout.bounds;
        if (0..3).any(|i| !(b[i] < b[i + 3])) || !(self.layout.disp_bound > 0.0) {
            return Err(bad(
                "layout.bounds",
                "need min < max on every axis and a positive disp_bound",
            ));
        }
        Ok(())
    }

    pub fn layout_config(&self) -> LayoutConfig {
        LayoutConfig {
            bounds: self.layout.bounds,
            disp_bound: self.layout.disp_bound,
            horizon: self.layout.horizon,
            shape_points: self.layout.shape_points,
            sample_steps: self.diffusion.sample_steps,
            reject_k: self.layout.reject_k,
            iou_threshold: self.layout.iou_threshold,
            penalty_weight: self.layout.penalty_weight,
            ego_size: self.relations.ego_size,
        }
    }

    pub fn schedule(&self) -> ShellResult<NoiseSchedule> {
        Ok(cosine_schedule(self.diffusion.train_steps, self.diffusion.schedule_s)?)
    }
}
