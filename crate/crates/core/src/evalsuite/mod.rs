//! Metric suite: distribution distances, registration and temporal
//! consistency, layout consistency and collision rates, and the detection and
//! classification arithmetic over externally produced predictions.

mod detection;
mod distribution;
mod features;
mod layout_metrics;
mod registration;
mod temporal;

pub use detection::{
    average_precision, average_precision_by_class, cfca, cfsc, fdc, ApMode, ClassConfidence, DetectionRecord,
    GroundTruthBox, MatchSpace, DEFAULT_AP_IOU,
};
pub use distribution::{
    bev_histogram, frechet, jsd, jsd_masses, mmd, BevHistogram, FeatureSet, Kernel, DEFAULT_BEV_BINS,
    DEFAULT_BEV_BOUNDS,
};
pub use features::{feature_set_from_images, range_image_features, PATCH_GRID};
pub use layout_metrics::{bcr, frame_boxes, mscr, scr, tcr};
pub use registration::{chamfer, icp, kabsch, IcpConfig, IcpResult};
pub use temporal::{ctc, gt_step_transforms, transform_errors, ttce, TtceReport};
