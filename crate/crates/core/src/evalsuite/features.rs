//! Handcrafted range-image descriptor for self-contained Fréchet smoke tests.
//! It is not a learned embedding and its distances are not comparable with
//! those of a pretrained network.

use crate::error::{Error, Result};
use crate::rangecodec::{RangeImage, SensorConfig};

use super::distribution::FeatureSet;

/// Patch rows × patch columns.
pub const PATCH_GRID: [usize; 2] = [4, 16];

/// Per patch: valid fraction, mean and standard deviation of depth over the
/// sensor's maximum range, mean intensity. Empty patches contribute zeros.
pub fn range_image_features(image: &RangeImage, cfg: &SensorConfig) -> Result<Vec<f64>> {
    let (h, w) = (image.height(), image.width());
    let [pr, pc] = PATCH_GRID;
    if h < pr || w < pc {
        return Err(Error::invalid(
            "range image",
            format!("smaller than the {pr}×{pc} patch grid"),
        ));
    }
    let mut out = Vec::with_capacity(pr * pc * 4);
    for i in 0..pr {
        let (r0, r1) = (i * h / pr, (i + 1) * h / pr);
        for j in 0..pc {
            let (c0, c1) = (j * w / pc, (j + 1) * w / pc);
            let (mut n, mut sum, mut sq, mut inten) = (0usize, 0.0, 0.0, 0.0);
            for r in r0..r1 {
                for c in c0..c1 {
                    if let Some(px) = image.get(r, c) {
                        let d = px.depth as f64 / cfg.max_range;
                        n += 1;
                        sum += d;
                        sq += d * d;
                        inten += px.intensity as f64;
                    }
                }
            }
            let area = ((r1 - r0) * (c1 - c0)) as f64;
            if n == 0 {
                out.extend([0.0; 4]);
            } else {
                let mean = sum / n as f64;
                let var = (sq / n as f64 - mean * mean).max(0.0);
                out.extend([n as f64 / area, mean, var.sqrt(), inten / n as f64]);
            }
        }
    }
    Ok(out)
}

pub fn feature_set_from_images(images: &[RangeImage], cfg: &SensorConfig) -> Result<FeatureSet> {
    let feats = images
        .iter()
        .map(|im| range_image_features(im, cfg))
        .collect::<Result<Vec<_>>>()?;
    FeatureSet::from_features(&feats)
}
