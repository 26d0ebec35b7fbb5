//! Point-cloud file IO.
//!
//! Two formats:
//!
//! * `xyz-ascii` — one point per line, whitespace-separated decimal fields.
//!   The first three fields are coordinates, any remaining fields are
//!   feature channels. Lines starting with `#` are ignored. Values are
//!   written with 9 significant digits, so a round trip is exact to about
//!   1e-6 per value.
//! * `pcf-binary` — magic `PCF1`, little-endian `u32` point count `N`,
//!   little-endian `u32` feature channel count `C`, then `N * (3 + C)`
//!   little-endian `f32` values row-major (coordinates first, then the
//!   feature channels of that point). Round trips are bit-identical for
//!   f32-valued clouds.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{GamError, Result};
use crate::types::PointCloud;

const PCF_MAGIC: &[u8; 4] = b"PCF1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    XyzAscii,
    PcfBinary,
}

impl CloudFormat {
    /// Picks a format from a path extension: `.pcf` is binary, everything
    /// else is text.
    pub fn from_extension(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("pcf") => CloudFormat::PcfBinary,
            _ => CloudFormat::XyzAscii,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> GamError {
    GamError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> GamError {
    GamError::ParseError {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Reads a cloud, sniffing the format: files starting with the `PCF1` magic
/// are binary, everything else parses as xyz text.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() >= 4 && &bytes[..4] == PCF_MAGIC {
        read_pcf(path, &bytes)
    } else {
        read_xyz(path, &bytes)
    }
}

fn read_xyz(path: &Path, bytes: &[u8]) -> Result<PointCloud> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| parse_err(path, "file is neither PCF1 binary nor valid text"))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut expected_cols: Option<usize> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(parse_err(
                path,
                format!("line {}: expected at least 3 fields, got {}", lineno + 1, fields.len()),
            ));
        }
        match expected_cols {
            None => expected_cols = Some(fields.len()),
            Some(expected) if expected != fields.len() => {
                return Err(GamError::InconsistentColumns {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    got: fields.len(),
                    expected,
                });
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(fields.len());
        for f in &fields {
            let v: f64 = f.parse().map_err(|_| {
                parse_err(path, format!("line {}: bad number {f:?}", lineno + 1))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(GamError::EmptyCloud);
    }
    let cols = rows[0].len();
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let all = Array2::from_shape_vec((n, cols), flat).expect("consistent columns");
    let coords = all.slice(ndarray::s![.., 0..3]).to_owned();
    let features = if cols > 3 {
        Some(all.slice(ndarray::s![.., 3..]).to_owned())
    } else {
        None
    };
    PointCloud::new(coords, features)
}

fn read_pcf(path: &Path, bytes: &[u8]) -> Result<PointCloud> {
    let mut cursor = &bytes[4..];
    let mut u32_buf = [0u8; 4];
    let mut read_u32 = |cursor: &mut &[u8]| -> Result<u32> {
        cursor
            .read_exact(&mut u32_buf)
            .map_err(|_| parse_err(path, "truncated header"))?;
        Ok(u32::from_le_bytes(u32_buf))
    };
    let n = read_u32(&mut cursor)? as usize;
    let c = read_u32(&mut cursor)? as usize;
    if n == 0 {
        return Err(GamError::EmptyCloud);
    }
    let expected = n * (3 + c) * 4;
    if cursor.len() != expected {
        return Err(parse_err(
            path,
            format!(
                "payload is {} bytes, expected {expected} for {n} points with {c} channels",
                cursor.len()
            ),
        ));
    }
    let mut values = Vec::with_capacity(n * (3 + c));
    for chunk in cursor.chunks_exact(4) {
        values.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    let all = Array2::from_shape_vec((n, 3 + c), values).expect("size checked");
    let coords = all.slice(ndarray::s![.., 0..3]).to_owned();
    let features = if c > 0 {
        Some(all.slice(ndarray::s![.., 3..]).to_owned())
    } else {
        None
    };
    PointCloud::new(coords, features)
}

/// Writes a cloud. Binary values are stored as f32 (point-cloud convention);
/// text values carry 9 significant digits.
pub fn write_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    match format {
        CloudFormat::XyzAscii => write_xyz(cloud, path, &[]),
        CloudFormat::PcfBinary => write_pcf(cloud, path),
    }
}

/// xyz writer that places `# `-prefixed header lines before the data, used
/// by the CLI to echo its configuration into every output.
pub fn write_xyz(cloud: &PointCloud, path: &Path, header: &[String]) -> Result<()> {
    let mut out = String::new();
    for line in header {
        out.push('#');
        out.push(' ');
        out.push_str(line);
        out.push('\n');
    }
    let coords = cloud.coords();
    let features = cloud.features();
    for i in 0..cloud.n_points() {
        for a in 0..3 {
            if a > 0 {
                out.push(' ');
            }
            out.push_str(&format!("{:.8e}", coords[[i, a]]));
        }
        if let Some(f) = &features {
            for ch in 0..f.ncols() {
                out.push(' ');
                out.push_str(&format!("{:.8e}", f[[i, ch]]));
            }
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

fn write_pcf(cloud: &PointCloud, path: &Path) -> Result<()> {
    let n = cloud.n_points();
    let c = cloud.channels();
    let mut bytes = Vec::with_capacity(12 + n * (3 + c) * 4);
    bytes.extend_from_slice(PCF_MAGIC);
    bytes.extend_from_slice(&(n as u32).to_le_bytes());
    bytes.extend_from_slice(&(c as u32).to_le_bytes());
    let coords = cloud.coords();
    let features = cloud.features();
    for i in 0..n {
        for a in 0..3 {
            bytes.extend_from_slice(&(coords[[i, a]] as f32).to_le_bytes());
        }
        if let Some(f) = &features {
            for ch in 0..c {
                bytes.extend_from_slice(&(f[[i, ch]] as f32).to_le_bytes());
            }
        }
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(&bytes).map_err(|e| io_err(path, e))
}
