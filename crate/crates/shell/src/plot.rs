//! Figure exports: BEV occupancy and range images as grayscale PNG plus CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use lidar4d_core::evalsuite::BevHistogram;
use lidar4d_core::rangecodec::{RangeImage, SensorConfig};

use crate::error::{ShellError, ShellResult};
use crate::formats::write_bytes;

/// Row 0 is the top of the image, i.e. the largest y.
pub fn bev_image(h: &BevHistogram) -> GrayImage {
    let peak = h.mass.iter().cloned().fold(0.0, f64::max);
    GrayImage::from_fn(h.bins as u32, h.bins as u32, |x, y| {
        let m = h.get(x as usize, h.bins - 1 - y as usize);
        Luma([if peak > 0.0 {
            (255.0 * m / peak).round() as u8
        } else {
            0
        }])
    })
}

/// `ix,iy,x_center,y_center,mass`, one row per non-empty cell.
pub fn bev_csv(h: &BevHistogram) -> String {
    let [sx, sy] = h.bin_size();
    let mut s = String::from("ix,iy,x_center,y_center,mass\n");
    for iy in 0..h.bins {
        for ix in 0..h.bins {
            let m = h.get(ix, iy);
            if m > 0.0 {
                let x = h.bounds[0] + (ix as f64 + 0.5) * sx;
                let y = h.bounds[1] + (iy as f64 + 0.5) * sy;
                writeln!(s, "{ix},{iy},{x},{y},{m}").unwrap();
            }
        }
    }
    s
}

/// Brighter is closer; empty pixels are black.
pub fn range_image_png(img: &RangeImage, cfg: &SensorConfig) -> GrayImage {
    GrayImage::from_fn(img.width() as u32, img.height() as u32, |c, r| {
        let v = img
            .get(r as usize, c as usize)
            .map(|p| 1 + (254.0 * (1.0 - (p.depth as f64 / cfg.max_range).clamp(0.0, 1.0))).round() as u8)
            .unwrap_or(0);
        Luma([v])
    })
}

/// `row,col,depth,intensity` for every valid pixel.
pub fn range_image_csv(img: &RangeImage) -> String {
    let mut s = String::from("row,col,depth,intensity\n");
    for (r, c, p) in img.valid_pixels() {
        writeln!(s, "{r},{c},{},{}", p.depth, p.intensity).unwrap();
    }
    s
}

pub fn save_png(img: &GrayImage, path: &Path) -> ShellResult<()> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|source| ShellError::Image {
            path: path.to_path_buf(),
            source,
        })?;
    write_bytes(path, buf.get_ref())
}

/// Writes `bev.png`, `bev.csv`, `range.png` and `range.csv` into `dir`.
pub fn export_all(h: &BevHistogram, img: &RangeImage, cfg: &SensorConfig, dir: &Path) -> ShellResult<Vec<PathBuf>> {
    let files = [
        dir.join("bev.png"),
        dir.join("bev.csv"),
        dir.join("range.png"),
        dir.join("range.csv"),
    ];
    save_png(&bev_image(h), &files[0])?;
    write_bytes(&files[1], bev_csv(h).as_bytes())?;
    save_png(&range_image_png(img, cfg), &files[2])?;
    write_bytes(&files[3], range_image_csv(img).as_bytes())?;
    Ok(files.to_vec())
}
