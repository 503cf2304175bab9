//! Spherical range-image projection and the normalized tensor encoding fed to
//! range-image denoisers.
//!
//! Column `u = ½(1 − atan2(y, x)/π)·W`, row `v = (1 − (asin(z/r) + |fov_down|)/fov)·H`,
//! both floored. Row 0 is the top beam. Unprojection casts through pixel centers.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub width: usize,
    pub height: usize,
    /// Upper field-of-view edge in radians (above the horizon).
    pub fov_up: f64,
    /// Lower field-of-view edge in radians (negative, below the horizon).
    pub fov_down: f64,
    pub max_range: f64,
    pub sensor_height: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            width: 1024,
            height: 32,
            fov_up: 10f64.to_radians(),
            fov_down: -30f64.to_radians(),
            max_range: 80.0,
            sensor_height: 1.84,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("sensor.width/height", "must be at least 1"));
        }
        if !(self.fov_up > self.fov_down) {
            return Err(Error::invalid("sensor.fov_up", "must exceed fov_down"));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::invalid("sensor.max_range", "must be positive"));
        }
        if !self.sensor_height.is_finite() {
            return Err(Error::invalid("sensor.sensor_height", "non-finite"));
        }
        Ok(())
    }

    pub fn fov(&self) -> f64 {
        self.fov_up - self.fov_down
    }

    pub fn horizontal_pitch(&self) -> f64 {
        2.0 * PI / self.width as f64
    }

    pub fn vertical_pitch(&self) -> f64 {
        self.fov() / self.height as f64
    }

    pub fn num_pixels(&self) -> usize {
        self.width * self.height
    }

    /// Continuous image coordinates `(u, v)` of a direction, before flooring.
    pub fn image_coords(&self, p: &Vector3<f64>) -> (f64, f64) {
        let r = p.norm();
        let u = 0.5 * (1.0 - p.y.atan2(p.x) / PI) * self.width as f64;
        let v = (1.0 - ((p.z / r).asin() + self.fov_down.abs()) / self.fov()) * self.height as f64;
        (u, v)
    }

    /// Pixel `(row, col)` a direction falls into, or `None` outside the vertical field of view.
    pub fn pixel_of(&self, p: &Vector3<f64>) -> Option<(usize, usize)> {
        let (u, v) = self.image_coords(p);
        if !(u.is_finite() && v.is_finite()) || v < 0.0 || u < 0.0 {
            return None;
        }
        let row = v.floor() as usize;
        let mut col = u.floor() as usize;
        if row >= self.height || col > self.width {
            return None;
        }
        // atan2 = −π lands exactly on the right edge; it is the same ray as column 0.
        if col == self.width {
            col = 0;
        }
        Some((row, col))
    }

    /// Azimuth and elevation of the center of pixel `(row, col)`.
    pub fn pixel_angles(&self, row: usize, col: usize) -> (f64, f64) {
        let u = col as f64 + 0.5;
        let v = row as f64 + 0.5;
        let azimuth = PI * (1.0 - 2.0 * u / self.width as f64);
        let elevation = (1.0 - v / self.height as f64) * self.fov() - self.fov_down.abs();
        (azimuth, elevation)
    }

    /// Unit ray through the center of pixel `(row, col)` in the sensor frame.
    pub fn pixel_ray(&self, row: usize, col: usize) -> Vector3<f64> {
        let (az, el) = self.pixel_angles(row, col);
        let (sa, ca) = az.sin_cos();
        let (se, ce) = el.sin_cos();
        Vector3::new(ce * ca, ce * sa, se)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangePixel {
    pub depth: f32,
    pub intensity: f32,
}

/// `H×W` grid of optional returns; `None` is an invalid pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    height: usize,
    width: usize,
    pixels: Vec<Option<RangePixel>>,
}

impl RangeImage {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: vec![None; height * width],
        }
    }

    pub fn from_pixels(height: usize, width: usize, pixels: Vec<Option<RangePixel>>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::Shape {
                what: "range image",
                expected: height * width,
                got: pixels.len(),
            });
        }
        Ok(Self { height, width, pixels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, row: usize, col: usize) -> Option<RangePixel> {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, px: Option<RangePixel>) {
        self.pixels[row * self.width + col] = px;
    }

    pub fn pixels(&self) -> &[Option<RangePixel>] {
        &self.pixels
    }

    pub fn num_valid(&self) -> usize {
        self.pixels.iter().filter(|p| p.is_some()).count()
    }

    /// Row-major iterator over `(row, col, pixel)` for valid pixels.
    pub fn valid_pixels(&self) -> impl Iterator<Item = (usize, usize, RangePixel)> + '_ {
        self.pixels
            .iter()
            .enumerate()
            .filter_map(move |(i, p)| p.map(|px| (i / self.width, i % self.width, px)))
    }
}

/// Projects a cloud with a nearest-depth z-buffer. Ties keep the earlier point.
pub fn project(cloud: &PointCloud, cfg: &SensorConfig) -> RangeImage {
    let mut image = RangeImage::empty(cfg.height, cfg.width);
    let mut best = vec![f64::INFINITY; cfg.num_pixels()];
    for p in &cloud.points {
        let xyz = p.xyz();
        let r = xyz.norm();
        if !(r > 0.0) {
            continue;
        }
        let depth = r as f32;
        if !(depth > 0.0) || depth as f64 > cfg.max_range {
            continue;
        }
        let Some((row, col)) = cfg.pixel_of(&xyz) else {
            continue;
        };
        let idx = row * cfg.width + col;
        if r < best[idx] {
            best[idx] = r;
            image.pixels[idx] = Some(RangePixel {
                depth,
                intensity: p.intensity as f32,
            });
        }
    }
    image
}

/// Emits one point per valid pixel along the pixel-center ray, row-major.
pub fn unproject(image: &RangeImage, cfg: &SensorConfig) -> PointCloud {
    image
        .valid_pixels()
        .map(|(row, col, px)| {
            let p = cfg.pixel_ray(row, col) * px.depth as f64;
            Point::new(p.x, p.y, p.z, px.intensity as f64)
        })
        .collect()
}

/// `log2(d + 1) / log2(d_max + 1)`.
pub fn normalize_depth(d: f64, cfg: &SensorConfig) -> Result<f64> {
    if !(0.0..=cfg.max_range).contains(&d) {
        return Err(Error::domain("depth", d, 0.0, cfg.max_range));
    }
    Ok((d + 1.0).log2() / (cfg.max_range + 1.0).log2())
}

pub fn denormalize_depth(x: f64, cfg: &SensorConfig) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain("normalized depth", x, 0.0, 1.0));
    }
    Ok((x * (cfg.max_range + 1.0).log2()).exp2() - 1.0)
}

/// Channel-last `H×W×C` float tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeTensor {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

pub const CH_DEPTH: usize = 0;
pub const CH_INTENSITY: usize = 1;
pub const CH_MASK: usize = 2;

impl RangeTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Shape {
                what: "range tensor",
                expected: height * width * channels,
                got: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[self.index(row, col, ch)]
    }

    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f32) {
        let i = self.index(row, col, ch);
        self.data[i] = v;
    }
}

/// Encodes depth and intensity to `[-1, 1]` with a trailing mask channel.
/// Invalid pixels are `(-1, -1, 0)`.
pub fn encode_tensor(image: &RangeImage, cfg: &SensorConfig) -> Result<RangeTensor> {
    let mut t = RangeTensor::zeros(image.height, image.width, 3);
    for row in 0..image.height {
        for col in 0..image.width {
            let (d, i, m) = match image.get(row, col) {
                Some(px) => {
                    let dn = normalize_depth(px.depth as f64, cfg)?;
                    (2.0 * dn - 1.0, 2.0 * px.intensity as f64 - 1.0, 1.0)
                }
                None => (-1.0, -1.0, 0.0),
            };
            t.set(row, col, CH_DEPTH, d as f32);
            t.set(row, col, CH_INTENSITY, i as f32);
            t.set(row, col, CH_MASK, m as f32);
        }
    }
    Ok(t)
}

/// Inverse of [`encode_tensor`]. Mask values at or above 0.5 count as valid;
/// out-of-range channel values are clamped, and non-positive depths are dropped.
pub fn decode_tensor(t: &RangeTensor, cfg: &SensorConfig) -> Result<RangeImage> {
    if t.channels != 3 {
        return Err(Error::Shape {
            what: "range tensor channels",
            expected: 3,
            got: t.channels,
        });
    }
    let mut image = RangeImage::empty(t.height, t.width);
    for row in 0..t.height {
        for col in 0..t.width {
            if t.get(row, col, CH_MASK) < 0.5 {
                continue;
            }
            let dn = ((t.get(row, col, CH_DEPTH) as f64 + 1.0) / 2.0).clamp(0.0, 1.0);
            let depth = denormalize_depth(dn, cfg)?.min(cfg.max_range) as f32;
            if !(depth > 0.0) {
                continue;
            }
            let intensity = ((t.get(row, col, CH_INTENSITY) as f64 + 1.0) / 2.0).clamp(0.0, 1.0);
            image.set(
                row,
                col,
                Some(RangePixel {
                    depth,
                    intensity: intensity as f32,
                }),
            );
        }
    }
    Ok(image)
}
