//! Minimal binary PGM (P5) codec.
//!
//! Only the binary grayscale flavor is supported: ASCII `P2` is rejected.
//! Headers may contain `#` comments between tokens, per the PNM convention.
//! 16-bit samples are big-endian, most significant byte first.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Parse a P5 PGM from raw bytes. Returns the samples (row-major) and the
/// declared maxval. Samples are widened to `u16` regardless of depth.
pub fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<(Array2<u16>, u16)> {
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(Error::format(
            path,
            0,
            "not a binary PGM (missing P5 magic)",
        ));
    }
    let mut pos = 2usize;
    let width = parse_header_int(path, bytes, &mut pos, "width")?;
    let height = parse_header_int(path, bytes, &mut pos, "height")?;
    let maxval = parse_header_int(path, bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(path, pos as u64, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format(
            path,
            pos as u64,
            format!("maxval {maxval} out of range 1..=65535"),
        ));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format(
            path,
            pos as u64,
            "missing whitespace before raster",
        ));
    }
    pos += 1;

    let (rows, cols) = (height as usize, width as usize);
    let bytes_per_sample = if maxval > 255 { 2 } else { 1 };
    let expected = rows * cols * bytes_per_sample;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(Error::format(
            path,
            bytes.len() as u64,
            format!(
                "truncated raster: expected {expected} bytes, found {}",
                raster.len()
            ),
        ));
    }
    if raster.len() > expected {
        return Err(Error::format(
            path,
            (pos + expected) as u64,
            format!("{} trailing bytes after raster", raster.len() - expected),
        ));
    }

    let mut data = Vec::with_capacity(rows * cols);
    if bytes_per_sample == 1 {
        data.extend(raster.iter().map(|&b| u16::from(b)));
    } else {
        data.extend(
            raster
                .chunks_exact(2)
                .map(|p| u16::from_be_bytes([p[0], p[1]])),
        );
    }
    if data.iter().any(|&v| u64::from(v) > maxval) {
        return Err(Error::format(
            path,
            pos as u64,
            "sample exceeds declared maxval",
        ));
    }
    let grid = Array2::from_shape_vec((rows, cols), data).expect("shape matches data length");
    Ok((grid, maxval as u16))
}

/// Read a P5 PGM from disk.
pub fn read_pgm(path: &Path) -> Result<(Array2<u16>, u16)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(path, &bytes)
}

/// Write an 8-bit P5 PGM (maxval 255).
pub fn write_pgm8(path: &Path, image: &Array2<u8>) -> Result<()> {
    let (rows, cols) = image.dim();
    let mut out = Vec::with_capacity(32 + rows * cols);
    write!(out, "P5\n{cols} {rows}\n255\n").expect("vec write");
    for row in image.rows() {
        out.extend(row.iter().copied());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write a 16-bit P5 PGM (maxval 65535, big-endian samples).
pub fn write_pgm16(path: &Path, image: &Array2<u16>) -> Result<()> {
    let (rows, cols) = image.dim();
    let mut out = Vec::with_capacity(32 + rows * cols * 2);
    write!(out, "P5\n{cols} {rows}\n65535\n").expect("vec write");
    for row in image.rows() {
        for &v in row {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn parse_header_int(path: &Path, bytes: &[u8], pos: &mut usize, what: &str) -> Result<u64> {
    // Skip whitespace and `#` comments (comment runs to end of line).
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            _ => break,
        }
    }
    let start = *pos;
    let mut value: u64 = 0;
    let mut digits = 0usize;
    while let Some(&b) = bytes.get(*pos) {
        if b.is_ascii_digit() {
            value = value.saturating_mul(10).saturating_add(u64::from(b - b'0'));
            digits += 1;
            *pos += 1;
        } else {
            break;
        }
    }
    if digits == 0 {
        return Err(Error::format(
            path,
            start as u64,
            format!("expected {what} integer"),
        ));
    }
    Ok(value)
}
