//! Binary PGM (P5) images for depth export and overlays.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::projection::DepthImage;

/// 16-bit grayscale raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Gray16 {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

/// Writes channel 0 scaled by `scale` (e.g. 1000 for millimeters) as a
/// 16-bit PGM. Values saturate at 65535.
pub fn write_pgm16(img: &DepthImage, scale: f64, path: &Path) -> Result<()> {
    let mut buf = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    for i in 0..img.width() * img.height() {
        let v = (img.range_at(i) as f64 * scale).round().clamp(0.0, 65535.0) as u16;
        buf.extend_from_slice(&v.to_be_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Writes 8-bit gray levels directly.
pub fn write_pgm8(width: usize, height: usize, pixels: &[u8], path: &Path) -> Result<()> {
    assert_eq!(pixels.len(), width * height);
    let mut buf = format!("P5\n{width} {height}\n255\n").into_bytes();
    buf.extend_from_slice(pixels);
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_pgm16(path: &Path) -> Result<Gray16> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Parse { location: path.display().to_string(), message: m.to_string() };
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad("not a binary PGM"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval != 65535 {
        return Err(bad("expected a 16-bit PGM"));
    }
    let body = bytes.get(pos..).unwrap_or(&[]);
    if body.len() != width * height * 2 {
        return Err(bad("pixel data length does not match header"));
    }
    let data = body.chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect();
    Ok(Gray16 { width, height, data })
}

impl Gray16 {
    /// Single-channel depth image with values divided by `scale`.
    pub fn to_depth(&self, scale: f64) -> DepthImage {
        let data = self.data.iter().map(|&v| (v as f64 / scale) as f32).collect();
        DepthImage::from_vec(self.height, self.width, 1, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_millimeters() {
        let img = DepthImage::from_vec(2, 3, 1, vec![0.0, 1.5, 2.25, 10.0, 65.535, 100.0]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pgm");
        write_pgm16(&img, 1000.0, &p).unwrap();
        let g = read_pgm16(&p).unwrap();
        assert_eq!((g.width, g.height), (3, 2));
        assert_eq!(g.data, vec![0, 1500, 2250, 10000, 65535, 65535]);
    }
}
