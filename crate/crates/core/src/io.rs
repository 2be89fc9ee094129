//! Volume files: raw little-endian float32 with a JSON sidecar, and MRC
//! mode 2. Writes go through a temporary file and a rename so a failed
//! write never leaves a partial file behind.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume;

const MRC_HEADER: usize = 1024;
const MRC_MODE_F32: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeFormat {
    Raw,
    Mrc,
}

impl VolumeFormat {
    /// `.mrc` and `.map` are MRC, anything else raw.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
            Some(e) if e == "mrc" || e == "map" => VolumeFormat::Mrc,
            _ => VolumeFormat::Raw,
        }
    }
}

/// Sidecar descriptor of a raw volume.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub n: usize,
    pub order: String,
}

/// `volume.raw` -> `volume.raw.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn read_volume(path: &Path, format: VolumeFormat) -> Result<Volume> {
    match format {
        VolumeFormat::Raw => read_raw(path, None),
        VolumeFormat::Mrc => read_mrc(path),
    }
}

pub fn write_volume(path: &Path, v: &Volume, format: VolumeFormat) -> Result<()> {
    match format {
        VolumeFormat::Raw => write_raw(path, v),
        VolumeFormat::Mrc => write_mrc(path, v),
    }
}

fn f32_bytes(v: &Volume) -> Vec<u8> {
    v.data().iter().flat_map(|&x| (x as f32).to_le_bytes()).collect()
}

fn from_f32_bytes(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect()
}

fn cube_root(count: usize) -> Option<usize> {
    let n = (count as f64).cbrt().round() as usize;
    (n * n * n == count).then_some(n)
}

/// Reads a raw float32 volume. The side length comes from `n`, else the
/// sidecar, else the file size.
pub fn read_raw(path: &Path, n: Option<usize>) -> Result<Volume> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::InvalidVolume(format!(
            "{} bytes is not a whole number of float32 values",
            bytes.len()
        )));
    }
    let count = bytes.len() / 4;
    let side = match n {
        Some(n) => n,
        None => {
            let sc = sidecar_path(path);
            if sc.exists() {
                let meta: RawSidecar = serde_json::from_slice(&fs::read(&sc)?)?;
                if meta.order != "zyx" {
                    return Err(Error::InvalidVolume(format!("unsupported order {:?}", meta.order)));
                }
                meta.n
            } else {
                cube_root(count).ok_or_else(|| {
                    Error::InvalidVolume(format!("{count} values do not form a cube"))
                })?
            }
        }
    };
    if side * side * side != count {
        return Err(Error::InvalidVolume(format!(
            "{count} values do not match side length {side}"
        )));
    }
    Volume::from_vec(side, from_f32_bytes(&bytes))
}

/// Writes a raw float32 volume and its sidecar.
pub fn write_raw(path: &Path, v: &Volume) -> Result<()> {
    let meta = RawSidecar {
        n: v.n(),
        order: "zyx".into(),
    };
    write_atomic(path, &f32_bytes(v))?;
    write_atomic(&sidecar_path(path), &serde_json::to_vec(&meta)?)
}

fn le_i32(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes([b[off], b[off + 1], b[off + 2], b[off + 3]])
}

/// Reads a mode-2 MRC file. Axis order in the file is x fastest; the
/// volume stores z fastest, so the data are transposed.
pub fn read_mrc(path: &Path) -> Result<Volume> {
    let bytes = fs::read(path)?;
    if bytes.len() < MRC_HEADER {
        return Err(Error::CorruptHeader(format!(
            "file has {} bytes, header needs {MRC_HEADER}",
            bytes.len()
        )));
    }
    let dims = [le_i32(&bytes, 0), le_i32(&bytes, 4), le_i32(&bytes, 8)];
    let mode = le_i32(&bytes, 12);
    let ext = le_i32(&bytes, 92);
    if dims.iter().any(|&d| d <= 0) || ext < 0 {
        return Err(Error::CorruptHeader(format!("dims {dims:?}, extended header {ext}")));
    }
    if mode != MRC_MODE_F32 {
        return Err(Error::UnsupportedMode(mode));
    }
    let [nx, ny, nz] = dims.map(|d| d as usize);
    if nx != ny || ny != nz {
        return Err(Error::NonCubic(nx, ny, nz));
    }
    let n = nx;
    let start = MRC_HEADER + ext as usize;
    let need = start + 4 * n * n * n;
    if bytes.len() < need {
        return Err(Error::CorruptHeader(format!(
            "data truncated: {} bytes, expected {need}",
            bytes.len()
        )));
    }
    let file = from_f32_bytes(&bytes[start..need]);
    let mut data = vec![0.0; n * n * n];
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                data[(ix * n + iy) * n + iz] = file[(iz * n + iy) * n + ix];
            }
        }
    }
    Volume::from_vec(n, data)
}

/// Writes a minimal mode-2 MRC file with unit cell equal to the grid.
pub fn write_mrc(path: &Path, v: &Volume) -> Result<()> {
    let n = v.n();
    let mut header = vec![0u8; MRC_HEADER];
    let put_i32 = |h: &mut [u8], off: usize, x: i32| h[off..off + 4].copy_from_slice(&x.to_le_bytes());
    let put_f32 = |h: &mut [u8], off: usize, x: f32| h[off..off + 4].copy_from_slice(&x.to_le_bytes());
    for off in [0, 4, 8] {
        put_i32(&mut header, off, n as i32);
    }
    put_i32(&mut header, 12, MRC_MODE_F32);
    // sampling
    for off in [28, 32, 36] {
        put_i32(&mut header, off, n as i32);
    }
    for off in [40, 44, 48] {
        put_f32(&mut header, off, n as f32);
    }
    for off in [52, 56, 60] {
        put_f32(&mut header, off, 90.0);
    }
    put_i32(&mut header, 64, 1);
    put_i32(&mut header, 68, 2);
    put_i32(&mut header, 72, 3);
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &x in v.data() {
        lo = lo.min(x);
        hi = hi.max(x);
        sum += x;
    }
    put_f32(&mut header, 76, lo as f32);
    put_f32(&mut header, 80, hi as f32);
    put_f32(&mut header, 84, (sum / v.data().len() as f64) as f32);
    header[208..212].copy_from_slice(b"MAP ");
    header[212..216].copy_from_slice(&[0x44, 0x44, 0, 0]);

    let mut out = header;
    out.reserve(4 * n * n * n);
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                out.extend_from_slice(&(v.get(ix, iy, iz) as f32).to_le_bytes());
            }
        }
    }
    write_atomic(path, &out)
}
