//! Object masks: the transmission patterns placed in the test arm.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::pgm;

/// A transmission mask on the simulation grid. Values are in `[0, 1]` where
/// 1 is fully transparent.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMask {
    transmission: Array2<f64>,
    label: String,
}

impl ObjectMask {
    pub fn new(transmission: Array2<f64>, label: impl Into<String>) -> Result<Self> {
        if transmission.is_empty() {
            return Err(Error::Parameter("object mask must be non-empty".into()));
        }
        if transmission
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::Parameter(
                "object transmission values must be finite and within [0, 1]".into(),
            ));
        }
        Ok(Self {
            transmission,
            label: label.into(),
        })
    }

    pub fn transmission(&self) -> &Array2<f64> {
        &self.transmission
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rows(&self) -> usize {
        self.transmission.nrows()
    }

    pub fn cols(&self) -> usize {
        self.transmission.ncols()
    }

    pub fn dim(&self) -> (usize, usize) {
        self.transmission.dim()
    }
}

/// Long axis of the slits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Vertical,
    Horizontal,
}

/// Geometry of a binary double slit, all lengths in pixels.
///
/// `separation_px` is center-to-center. `separation_px == slit_width_px`
/// makes the slits touch, degenerating into a single bar of twice the width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DoubleSlitSpec {
    pub rows: usize,
    pub cols: usize,
    pub slit_width_px: usize,
    pub separation_px: usize,
    pub slit_height_px: usize,
    pub orientation: Orientation,
}

impl DoubleSlitSpec {
    /// `width` and `separation` given in physical units, converted through
    /// the pixel pitch (rounded to the nearest pixel, minimum 1).
    pub fn from_physical(
        rows: usize,
        cols: usize,
        slit_width_mm: f64,
        separation_mm: f64,
        pitch_mm: f64,
        slit_height_px: usize,
    ) -> Result<Self> {
        if !(pitch_mm.is_finite() && pitch_mm > 0.0) {
            return Err(Error::Parameter(format!(
                "pixel pitch must be positive, got {pitch_mm}"
            )));
        }
        if !(slit_width_mm.is_finite() && slit_width_mm > 0.0)
            || !(separation_mm.is_finite() && separation_mm > 0.0)
        {
            return Err(Error::Parameter("slit dimensions must be positive".into()));
        }
        let to_px = |mm: f64| ((mm / pitch_mm).round() as usize).max(1);
        Ok(Self {
            rows,
            cols,
            slit_width_px: to_px(slit_width_mm),
            separation_px: to_px(separation_mm),
            slit_height_px,
            orientation: Orientation::Vertical,
        })
    }
}

/// Render a double-slit mask.
///
/// The pair is centered on the grid; the slit interiors are 1, everything
/// else 0. Fails with a geometry error when the slits overlap (separation
/// below width) or do not fit inside the grid.
pub fn make_double_slit(spec: &DoubleSlitSpec) -> Result<ObjectMask> {
    let DoubleSlitSpec {
        rows,
        cols,
        slit_width_px: width,
        separation_px: separation,
        slit_height_px: height,
        orientation,
    } = *spec;
    if rows == 0 || cols == 0 {
        return Err(Error::Parameter("grid dimensions must be positive".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::Parameter(
            "slit width and height must be positive".into(),
        ));
    }
    if separation < width {
        return Err(Error::Geometry(format!(
            "slit separation {separation} px is below slit width {width} px (slits would overlap)"
        )));
    }
    // Extents along the axis perpendicular to the slits / along the slits.
    let (across, along) = match orientation {
        Orientation::Vertical => (cols, rows),
        Orientation::Horizontal => (rows, cols),
    };
    let span = separation + width; // left edge of first slit to right edge of second
    if span > across {
        return Err(Error::Geometry(format!(
            "double slit span {span} px exceeds grid extent {across} px"
        )));
    }
    if height > along {
        return Err(Error::Geometry(format!(
            "slit height {height} px exceeds grid extent {along} px"
        )));
    }
    let first = (across - span) / 2;
    let second = first + separation;
    let start_along = (along - height) / 2;

    let mut mask = Array2::zeros((rows, cols));
    for a in start_along..start_along + height {
        for x in (first..first + width).chain(second..second + width) {
            match orientation {
                Orientation::Vertical => mask[[a, x]] = 1.0,
                Orientation::Horizontal => mask[[x, a]] = 1.0,
            }
        }
    }
    ObjectMask::new(
        mask,
        format!("double-slit w{width} d{separation} h{height}"),
    )
}

/// Procedural grayscale resolution target: a disk, three groups of vertical
/// bars at increasing pitch, and a set of gray horizontal bars. Used as the
/// built-in "detailed object" for comparison runs on larger grids.
pub fn make_test_card(rows: usize, cols: usize) -> Result<ObjectMask> {
    if rows < 16 || cols < 16 {
        return Err(Error::Parameter(format!(
            "test card needs at least a 16x16 grid, got {rows}x{cols}"
        )));
    }
    let mut o = Array2::zeros((rows, cols));
    let (cy, cx) = (rows as f64 * 0.35, cols as f64 * 0.30);
    let rad = (rows.min(cols) as f64) * 0.14;
    for r in 0..rows {
        for c in 0..cols {
            let (dy, dx) = (r as f64 - cy, c as f64 - cx);
            if dy * dy + dx * dx <= rad * rad {
                o[[r, c]] = 1.0;
            }
        }
    }
    let (bar_top, bar_bot) = ((rows * 15) / 100, (rows * 55) / 100);
    let mut x = (cols * 55) / 100;
    for w in [2usize, 3, 4] {
        for _ in 0..3 {
            for r in bar_top..bar_bot {
                for c in x..(x + w).min(cols) {
                    o[[r, c]] = 1.0;
                }
            }
            x += 2 * w;
        }
        x += w;
    }
    let (hx0, hx1) = ((cols * 12) / 100, (cols * 88) / 100);
    for k in 0..3usize {
        let y = (rows * 68) / 100 + k * 6;
        for r in y..(y + 3).min(rows) {
            for c in hx0..hx1 {
                o[[r, c]] = 0.8;
            }
        }
    }
    ObjectMask::new(o, "test-card")
}

const PNG_MAGIC: [u8; 4] = [0x89, b'P', b'N', b'G'];

/// Load a mask from an 8- or 16-bit grayscale PGM (P5) or PNG file.
/// Sample codes are rescaled to `[0, 1]` by the format's max code value.
pub fn load_object(path: &Path) -> Result<ObjectMask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "object".into());
    if bytes.starts_with(b"P5") {
        let (grid, maxval) = pgm::parse_pgm(path, &bytes)?;
        let scale = 1.0 / f64::from(maxval);
        return ObjectMask::new(grid.mapv(|v| f64::from(v) * scale), label);
    }
    if bytes.starts_with(&PNG_MAGIC) {
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
            .map_err(|e| Error::format(path, 0, format!("PNG decode failed: {e}")))?;
        let grid = match img {
            image::DynamicImage::ImageLuma8(g) => {
                let (w, h) = (g.width() as usize, g.height() as usize);
                Array2::from_shape_fn((h, w), |(r, c)| {
                    f64::from(g.get_pixel(c as u32, r as u32).0[0]) / 255.0
                })
            }
            image::DynamicImage::ImageLuma16(g) => {
                let (w, h) = (g.width() as usize, g.height() as usize);
                Array2::from_shape_fn((h, w), |(r, c)| {
                    f64::from(g.get_pixel(c as u32, r as u32).0[0]) / 65535.0
                })
            }
            other => {
                return Err(Error::format(
                    path,
                    0,
                    format!(
                        "PNG must be 8- or 16-bit grayscale, got {:?}",
                        other.color()
                    ),
                ))
            }
        };
        return ObjectMask::new(grid, label);
    }
    Err(Error::format(
        path,
        0,
        "unrecognized object format (want P5 PGM or PNG)",
    ))
}

/// Save a mask as a 16-bit PGM. Loading it back reproduces the transmission
/// to within half a code step (1/65535).
pub fn save_object(mask: &ObjectMask, path: &Path) -> Result<()> {
    let codes = mask.transmission().mapv(|v| (v * 65535.0).round() as u16);
    pgm::write_pgm16(path, &codes)
}
