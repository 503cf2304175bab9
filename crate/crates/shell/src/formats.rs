//! Little-endian binary containers.
//!
//! Point cloud: `"LCPC"`, u32 version, u32 count, then `count × (x, y, z, intensity)` as f32.
//! Range tensor: `"LCRT"`, u32 version, u32 H, u32 W, u32 C, then `H·W·C` f32, row-major, channel-last.
//! Denoiser: `"LCDN"`, u32 version, u32 x_dim, u32 cond_dim, u32 time_dim, u32 hidden layer count,
//! one u32 per hidden width, u32 parameter count, then the parameters as f32.

use std::path::Path;

use lidar4d_core::diffusion::MlpDenoiser;
use lidar4d_core::geometry::{Point, PointCloud};
use lidar4d_core::rangecodec::RangeTensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ShellError, ShellResult};

pub const POINT_CLOUD_MAGIC: [u8; 4] = *b"LCPC";
pub const RANGE_TENSOR_MAGIC: [u8; 4] = *b"LCRT";
pub const DENOISER_MAGIC: [u8; 4] = *b"LCDN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported format version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("truncated payload: {needed} bytes required, {available} present")]
    Truncated { needed: u64, available: u64 },
    #[error("count mismatch: header accounts for {declared} bytes but the file holds {actual}")]
    CountMismatch { declared: u64, actual: u64 },
    #[error("invalid content: {0}")]
    Content(#[from] lidar4d_core::Error),
}

impl FormatError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::BadMagic { .. } => "bad_magic",
            Self::UnsupportedVersion { .. } => "unsupported_version",
            Self::Truncated { .. } => "truncated",
            Self::CountMismatch { .. } => "count_mismatch",
            Self::Content(_) => "invalid_content",
        }
    }
}

type FResult<T> = std::result::Result<T, FormatError>;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> FResult<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(FormatError::Truncated {
                needed: (self.pos as u64).saturating_add(n as u64),
                available: self.buf.len() as u64,
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> FResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn header(&mut self, magic: [u8; 4]) -> FResult<()> {
        let found = self.take(4)?;
        if found != magic {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(&magic).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        let version = self.u32()?;
        if version == 0 || version > FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        Ok(())
    }

    /// Checks that exactly `payload` bytes remain.
    fn expect_payload(&self, payload: u64) -> FResult<()> {
        let needed = self.pos as u64 + payload;
        let actual = self.buf.len() as u64;
        if actual < needed {
            Err(FormatError::Truncated {
                needed,
                available: actual,
            })
        } else if actual > needed {
            Err(FormatError::CountMismatch {
                declared: needed,
                actual,
            })
        } else {
            Ok(())
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(u32::try_from(v).expect("dimension fits in u32")).to_le_bytes());
}

/// Coordinates are stored as f32; clouds read from a file round-trip bit-exactly.
pub fn encode_point_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + cloud.len() * 16);
    out.extend_from_slice(&POINT_CLOUD_MAGIC);
    put_u32(&mut out, FORMAT_VERSION as usize);
    put_u32(&mut out, cloud.len());
    for p in &cloud.points {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_point_cloud(bytes: &[u8]) -> FResult<PointCloud> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(POINT_CLOUD_MAGIC)?;
    let count = r.u32()? as u64;
    r.expect_payload(count * 16)?;
    let mut points = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut v = [0f64; 4];
        for x in &mut v {
            *x = f32::from_le_bytes(r.take(4)?.try_into().unwrap()) as f64;
        }
        points.push(Point::new(v[0], v[1], v[2], v[3]));
    }
    Ok(PointCloud::new(points)?)
}

pub fn encode_range_tensor(t: &RangeTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + t.data.len() * 4);
    out.extend_from_slice(&RANGE_TENSOR_MAGIC);
    put_u32(&mut out, FORMAT_VERSION as usize);
    put_u32(&mut out, t.height);
    put_u32(&mut out, t.width);
    put_u32(&mut out, t.channels);
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_range_tensor(bytes: &[u8]) -> FResult<RangeTensor> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(RANGE_TENSOR_MAGIC)?;
    let (h, w, c) = (r.u32()? as u64, r.u32()? as u64, r.u32()? as u64);
    let n = h * w * c;
    r.expect_payload(n * 4)?;
    let data = r
        .take((n * 4) as usize)?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(RangeTensor::new(h as usize, w as usize, c as usize, data)?)
}

pub fn encode_denoiser(model: &MlpDenoiser) -> Vec<u8> {
    use lidar4d_core::diffusion::Denoiser;
    let params = model.params();
    let widths = model.widths();
    let mut out = Vec::with_capacity(28 + 4 * widths.len() + 4 * params.len());
    out.extend_from_slice(&DENOISER_MAGIC);
    put_u32(&mut out, FORMAT_VERSION as usize);
    put_u32(&mut out, model.dim());
    put_u32(&mut out, model.cond_dim());
    put_u32(&mut out, model.time_dim());
    put_u32(&mut out, widths.len());
    for w in widths {
        put_u32(&mut out, w);
    }
    put_u32(&mut out, params.len());
    for p in params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

pub fn decode_denoiser(bytes: &[u8]) -> FResult<MlpDenoiser> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(DENOISER_MAGIC)?;
    let (x_dim, cond_dim, time_dim) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let n_hidden = r.u32()? as usize;
    let widths = (0..n_hidden)
        .map(|_| r.u32().map(|w| w as usize))
        .collect::<FResult<Vec<_>>>()?;
    let count = r.u32()? as u64;
    r.expect_payload(count * 4)?;
    let params: Vec<f64> = r
        .take((count * 4) as usize)?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    // Initial weights are overwritten below; the seed only fixes the allocation path.
    let mut model = MlpDenoiser::new(x_dim, cond_dim, time_dim, &widths, &mut ChaCha8Rng::seed_from_u64(0))?;
    model.set_params(&params)?;
    Ok(model)
}

fn read_bytes(path: &Path) -> ShellResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| ShellError::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> ShellResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| ShellError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| ShellError::io(path, e))
}

fn with_path<T>(path: &Path, r: FResult<T>) -> ShellResult<T> {
    r.map_err(|source| ShellError::Format {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_point_cloud(path: &Path) -> ShellResult<PointCloud> {
    with_path(path, decode_point_cloud(&read_bytes(path)?))
}

pub fn write_point_cloud(cloud: &PointCloud, path: &Path) -> ShellResult<()> {
    write_bytes(path, &encode_point_cloud(cloud))
}

pub fn read_range_tensor(path: &Path) -> ShellResult<RangeTensor> {
    with_path(path, decode_range_tensor(&read_bytes(path)?))
}

pub fn write_range_tensor(t: &RangeTensor, path: &Path) -> ShellResult<()> {
    write_bytes(path, &encode_range_tensor(t))
}

pub fn read_denoiser(path: &Path) -> ShellResult<MlpDenoiser> {
    with_path(path, decode_denoiser(&read_bytes(path)?))
}

pub fn write_denoiser(model: &MlpDenoiser, path: &Path) -> ShellResult<()> {
    write_bytes(path, &encode_denoiser(model))
}
