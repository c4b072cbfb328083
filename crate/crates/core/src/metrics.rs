//! Scoring: Pearson correlation against the ground-truth mask and a
//! speckle-grain size proxy (FWHM of the 2-D autocorrelation).

use ndarray::ArrayView2;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::binarization::BinaryFrame;
use crate::error::{Error, Result};

/// Per-(method, seed) score row emitted by experiment runs.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub method: String,
    pub seed: u64,
    pub count: u64,
    pub corr: f64,
    /// Fraction of ones in binarized output; absent for the raw method.
    pub fill_fraction: Option<f64>,
    /// Grain size of the first processed frame, in pixels.
    pub grain_fwhm_px: Option<f64>,
    /// Wall-clock per method, present only when timing was requested.
    pub wall_ms: Option<u64>,
}

/// Pearson correlation between two grids over all pixels (population
/// normalization). Result is clamped into [-1, 1] against float drift.
pub fn corr(g: ArrayView2<'_, f64>, o: ArrayView2<'_, f64>) -> Result<f64> {
    if g.dim() != o.dim() {
        return Err(Error::Dimension {
            expected: g.dim(),
            got: o.dim(),
        });
    }
    let n = g.len() as f64;
    if g.is_empty() {
        return Err(Error::Parameter("cannot correlate empty grids".into()));
    }
    let mg = g.sum() / n;
    let mo = o.sum() / n;
    let mut cov = 0.0;
    let mut vg = 0.0;
    let mut vo = 0.0;
    for (&a, &b) in g.iter().zip(o.iter()) {
        let (da, db) = (a - mg, b - mo);
        cov += da * db;
        vg += da * da;
        vo += db * db;
    }
    if vg == 0.0 || vo == 0.0 {
        return Err(Error::UndefinedVariance(
            "correlation of a constant grid is undefined".into(),
        ));
    }
    Ok((cov / (vg.sqrt() * vo.sqrt())).clamp(-1.0, 1.0))
}

/// Fraction of ones.
pub fn fill_fraction(b: &BinaryFrame) -> f64 {
    let ones: u64 = b.bits.iter().map(|&x| u64::from(x)).sum();
    ones as f64 / b.bits.len() as f64
}

/// Grain size: full width at half maximum of the mean-subtracted, peak-
/// normalized periodic 2-D autocorrelation, measured on the average of the
/// central row and column profiles with linear interpolation between lattice
/// points. Needs at least a 2x2, non-constant frame. A profile that never
/// falls below half (grain comparable to the frame) saturates at the profile
/// span.
pub fn grain_fwhm(values: ArrayView2<'_, f64>) -> Result<f64> {
    let (rows, cols) = values.dim();
    if rows < 2 || cols < 2 {
        return Err(Error::Parameter(format!(
            "grain estimate needs at least a 2x2 frame, got {rows}x{cols}"
        )));
    }
    let n = values.len() as f64;
    let mean = values.sum() / n;
    if values.iter().all(|&v| v == mean) {
        return Err(Error::UndefinedVariance(
            "grain size of a constant frame is undefined".into(),
        ));
    }
    let mut buf: Vec<Complex<f64>> = values
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .collect();
    fft_2d(&mut buf, rows, cols, false);
    for z in &mut buf {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    fft_2d(&mut buf, rows, cols, true);
    // Unnormalized transforms leave a constant factor that cancels below.
    let peak = buf[0].re;
    let half = rows.min(cols) / 2;
    let profile: Vec<f64> = (0..=half)
        .map(|d| (buf[d].re + buf[d * cols].re) / (2.0 * peak))
        .collect();
    Ok(2.0 * half_crossing(&profile))
}

/// Distance from the peak to the first 0.5 crossing, linearly interpolated.
fn half_crossing(profile: &[f64]) -> f64 {
    for d in 1..profile.len() {
        if profile[d] < 0.5 {
            let (p0, p1) = (profile[d - 1], profile[d]);
            return (d - 1) as f64 + (p0 - 0.5) / (p0 - p1);
        }
    }
    (profile.len() - 1) as f64
}

/// In-place 2-D FFT over a row-major buffer, rows then columns, unnormalized.
fn fft_2d(buf: &mut [Complex<f64>], rows: usize, cols: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(cols)
    } else {
        planner.plan_fft_forward(cols)
    };
    for row in buf.chunks_exact_mut(cols) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(rows)
    } else {
        planner.plan_fft_forward(rows)
    };
    let mut lane = vec![Complex::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            lane[r] = buf[r * cols + c];
        }
        col_fft.process(&mut lane);
        for r in 0..rows {
            buf[r * cols + c] = lane[r];
        }
    }
}
