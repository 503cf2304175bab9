use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou_3d, iou_bev, Box3D};
use crate::scenegraph::Category;

pub const DEFAULT_AP_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub frame_id: String,
    #[serde(rename = "box")]
    pub bbox: Box3D,
    pub class: Category,
    pub confidence: f64,
}

impl DetectionRecord {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::domain("detection confidence", self.confidence, 0.0, 1.0));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthBox {
    pub frame_id: String,
    #[serde(rename = "box")]
    pub bbox: Box3D,
    pub class: Category,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApMode {
    /// Recall points 0, 0.1, …, 1.
    R11,
    /// Recall points 1/40, 2/40, …, 1.
    R40,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchSpace {
    Bev,
    #[serde(rename = "3d")]
    ThreeD,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassConfidence {
    pub class: Category,
    /// `None` when the class has no detections.
    pub mean: Option<f64>,
    pub count: usize,
}

/// Mean detection confidence per requested class.
pub fn fdc(dets: &[DetectionRecord], classes: &[Category]) -> Result<Vec<ClassConfidence>> {
    for d in dets {
        d.validate()?;
    }
    Ok(classes
        .iter()
        .map(|&class| {
            let conf: Vec<f64> = dets.iter().filter(|d| d.class == class).map(|d| d.confidence).collect();
            let mean = (!conf.is_empty()).then(|| conf.iter().sum::<f64>() / conf.len() as f64);
            ClassConfidence {
                class,
                mean,
                count: conf.len(),
            }
        })
        .collect())
}

fn det_order(a: &DetectionRecord, b: &DetectionRecord) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then_with(|| a.frame_id.cmp(&b.frame_id))
        .then_with(|| {
            let (ca, cb) = (a.bbox.center(), b.bbox.center());
            let (sa, sb) = (a.bbox.size(), b.bbox.size());
            ca.iter()
                .chain(&sa)
                .chain(std::iter::once(&a.bbox.yaw()))
                .zip(cb.iter().chain(&sb).chain(std::iter::once(&b.bbox.yaw())))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Interpolated average precision for one class. Detections are matched
/// greedily in descending confidence to the best-overlapping unmatched
/// ground truth of the same frame; a match needs IoU ≥ `iou_thresh`.
pub fn average_precision(
    dets: &[DetectionRecord],
    gts: &[GroundTruthBox],
    class: Category,
    iou_thresh: f64,
    mode: ApMode,
    space: MatchSpace,
) -> Result<f64> {
    if !(iou_thresh > 0.0 && iou_thresh <= 1.0) {
        return Err(Error::domain("ap iou threshold", iou_thresh, 0.0, 1.0));
    }
    for d in dets {
        d.validate()?;
    }
    let gts: Vec<&GroundTruthBox> = gts.iter().filter(|g| g.class == class).collect();
    let mut dets: Vec<&DetectionRecord> = dets.iter().filter(|d| d.class == class).collect();
    if gts.is_empty() || dets.is_empty() {
        return Ok(0.0);
    }
    dets.sort_by(|a, b| det_order(a, b));
    let iou = |a: &Box3D, b: &Box3D| match space {
        MatchSpace::Bev => iou_bev(a, b),
        MatchSpace::ThreeD => iou_3d(a, b),
    };
    let mut used = vec![false; gts.len()];
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(dets.len());
    for (k, d) in dets.iter().enumerate() {
        let best = gts
            .iter()
            .enumerate()
            .filter(|(i, g)| !used[*i] && g.frame_id == d.frame_id)
            .map(|(i, g)| (i, iou(&d.bbox, &g.bbox)))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, o)) = best {
            if o >= iou_thresh {
                used[i] = true;
                tp += 1;
            }
        }
        curve.push((tp as f64 / gts.len() as f64, tp as f64 / (k + 1) as f64));
    }
    let recall_points: Vec<f64> = match mode {
        ApMode::R11 => (0..=10).map(|i| i as f64 / 10.0).collect(),
        ApMode::R40 => (1..=40).map(|i| i as f64 / 40.0).collect(),
    };
    let n = recall_points.len() as f64;
    Ok(recall_points
        .iter()
        .map(|&r| {
            curve
                .iter()
                .filter(|(rec, _)| *rec >= r - 1e-12)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / n)
}

/// Fraction of predicted labels equal to the reference labels.
pub fn cfca<T: PartialEq>(pred: &[T], gt: &[T]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Shape {
            what: "classification labels",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    if gt.is_empty() {
        return Err(Error::Empty("classification labels"));
    }
    let hits = pred.iter().zip(gt).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gt.len() as f64)
}

/// Mean over objects of the mean 3D IoU between each sampled box and the reference box.
pub fn cfsc(samples: &[Vec<Box3D>], gt: &[Box3D]) -> Result<f64> {
    if samples.len() != gt.len() {
        return Err(Error::Shape {
            what: "box samples",
            expected: gt.len(),
            got: samples.len(),
        });
    }
    if gt.is_empty() {
        return Err(Error::Empty("reference boxes"));
    }
    let mut total = 0.0;
    for (j, (s, g)) in samples.iter().zip(gt).enumerate() {
        if s.is_empty() {
            return Err(Error::invalid(format!("samples[{j}]"), "needs at least one box"));
        }
        total += s.iter().map(|b| iou_3d(b, g)).sum::<f64>() / s.len() as f64;
    }
    Ok(total / gt.len() as f64)
}

/// Per-class AP keyed by class, for classes present in the ground truth.
pub fn average_precision_by_class(
    dets: &[DetectionRecord],
    gts: &[GroundTruthBox],
    iou_thresh: f64,
    mode: ApMode,
    space: MatchSpace,
) -> Result<BTreeMap<Category, f64>> {
    let mut classes: Vec<Category> = gts.iter().map(|g| g.class).collect();
    classes.sort();
    classes.dedup();
    classes
        .into_iter()
        .map(|c| average_precision(dets, gts, c, iou_thresh, mode, space).map(|ap| (c, ap)))
        .collect()
}
