//! Reference-frame binarization strategies.
//!
//! Four strategies are supported: `none` (keep real intensities), `mean`
//! (per-frame mean threshold), `otsu` (per-frame global Otsu threshold on a
//! quantized histogram), and `point_by_point` (a per-pixel threshold map
//! propagated from block-corner Otsu values, then blended with the global
//! threshold by the harmonic factor alpha).

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::speckle::ReferenceFrame;

/// A frame quantized to `levels` codes over its own min-max range.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedFrame {
    pub codes: Array2<u32>,
    pub histogram: Vec<u64>,
    pub lo: f64,
    pub hi: f64,
    pub levels: u32,
}

impl QuantizedFrame {
    /// Intensity represented by a code (the inverse of the code mapping).
    pub fn intensity_of(&self, code: u32) -> f64 {
        if self.hi <= self.lo {
            return self.lo;
        }
        self.lo + f64::from(code) * (self.hi - self.lo) / f64::from(self.levels - 1)
    }
}

/// Quantize raw values: `code = floor((v - lo) / (hi - lo) * (levels-1) + 0.5)`
/// clamped to `[0, levels-1]`, with `lo`/`hi` the grid min/max. A constant
/// grid maps every cell to code 0.
pub fn quantize_values(values: ArrayView2<'_, f64>, levels: u32) -> Result<QuantizedFrame> {
    if levels < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 levels, got {levels}"
        )));
    }
    if values.is_empty() {
        return Err(Error::Parameter("cannot quantize an empty grid".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("cannot quantize non-finite values".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let mut histogram = vec![0u64; levels as usize];
    let codes = if hi > lo {
        let scale = f64::from(levels - 1) / (hi - lo);
        let top = levels - 1;
        values.map(|&v| {
            let c = ((v - lo) * scale + 0.5).floor();
            let c = (c as i64).clamp(0, i64::from(top)) as u32;
            histogram[c as usize] += 1;
            c
        })
    } else {
        histogram[0] = values.len() as u64;
        Array2::zeros(values.dim())
    };
    Ok(QuantizedFrame {
        codes,
        histogram,
        lo,
        hi,
        levels,
    })
}

/// Quantize a reference frame.
pub fn quantize(frame: &ReferenceFrame, levels: u32) -> Result<QuantizedFrame> {
    quantize_values(frame.intensity().view(), levels)
}

/// Otsu's optimal code on a histogram: the split `k` (class 0 = codes <= k)
/// maximizing the between-class variance `w0 * w1 * (m0 - m1)^2`, scanning
/// `k = 0 .. len-2` and keeping the smallest `k` on ties. A histogram with a
/// single occupied bin returns that bin.
pub fn otsu_code(histogram: &[u64]) -> u32 {
    let occupied: Vec<usize> = histogram
        .iter()
        .enumerate()
        .filter(|(_, &h)| h > 0)
        .map(|(i, _)| i)
        .collect();
    match occupied.as_slice() {
        [] => return 0,
        [only] => return *only as u32,
        _ => {}
    }
    let total: f64 = histogram.iter().map(|&h| h as f64).sum();
    let sum_total: f64 = histogram
        .iter()
        .enumerate()
        .map(|(k, &h)| k as f64 * h as f64)
        .sum();
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    let mut best_k = 0u32;
    let mut best_var = f64::NEG_INFINITY;
    for (k, &count) in histogram.iter().enumerate().take(histogram.len() - 1) {
        w0 += count as f64;
        sum0 += k as f64 * count as f64;
        if w0 == 0.0 {
            continue;
        }
        let w1 = total - w0;
        if w1 == 0.0 {
            break;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_total - sum0) / w1;
        let var = w0 * w1 * (m0 - m1) * (m0 - m1);
        if var > best_var {
            best_var = var;
            best_k = k as u32;
        }
    }
    best_k
}

/// Otsu threshold in intensity units.
pub fn otsu_threshold(q: &QuantizedFrame) -> f64 {
    q.intensity_of(otsu_code(&q.histogram))
}

/// Per-frame mean threshold.
pub fn mean_threshold(frame: &ReferenceFrame) -> f64 {
    frame.intensity().mean().expect("frames are non-empty")
}

/// A binarized reference frame; bits are 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFrame {
    pub bits: Array2<u8>,
    pub frame_index: u64,
}

impl BinaryFrame {
    pub fn to_real(&self) -> Array2<f64> {
        self.bits.mapv(f64::from)
    }

    pub fn dim(&self) -> (usize, usize) {
        self.bits.dim()
    }
}

/// Threshold a frame with one scalar: bit = 1 iff intensity > t.
pub fn binarize_scalar(frame: &ReferenceFrame, t: f64) -> BinaryFrame {
    BinaryFrame {
        bits: frame.intensity().mapv(|v| u8::from(v > t)),
        frame_index: frame.frame_index(),
    }
}

/// Threshold a frame with a per-pixel map: bit = 1 iff intensity > map value.
pub fn binarize_map(frame: &ReferenceFrame, thresholds: &Array2<f64>) -> Result<BinaryFrame> {
    if frame.dim() != thresholds.dim() {
        return Err(Error::Dimension {
            expected: frame.dim(),
            got: thresholds.dim(),
        });
    }
    let bits = ndarray::Zip::from(frame.intensity())
        .and(thresholds)
        .map_collect(|&v, &t| u8::from(v > t));
    Ok(BinaryFrame {
        bits,
        frame_index: frame.frame_index(),
    })
}

/// Block size for the point-by-point threshold map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    k1: usize,
    k2: usize,
}

impl BlockSpec {
    /// Blocks of `k1` rows by `k2` columns; both must be at least 2 (the
    /// propagation recurrences are defined from the second row/column on).
    pub fn new(k1: usize, k2: usize) -> Result<Self> {
        if k1 < 2 || k2 < 2 {
            return Err(Error::Parameter(format!(
                "block dimensions must be at least 2, got {k1}x{k2}"
            )));
        }
        Ok(Self { k1, k2 })
    }

    pub fn k1(&self) -> usize {
        self.k1
    }

    pub fn k2(&self) -> usize {
        self.k2
    }
}

/// Fill one block's threshold tile from its own corner value and the corner
/// values of the right and down neighbor blocks.
///
/// Entry (1,1) is the block's own corner threshold. The rest of the first
/// row interpolates linearly toward the right neighbor's corner:
/// `T(1,j) = ((j-1) R + (k2-j+1) T(1,1)) / k2`, and the first column does the
/// same toward the down neighbor with `k1`. Interior entries follow row-major
/// from a decayed average of all earlier entries: with `q = 1 - 1/(r+c-1)`,
/// `T(r,c) = sum_{(i,j) earlier} q^((r-i)+(c-j)) T(i,j)` normalized by the
/// total weight, "earlier" meaning `i <= r, j <= c` excluding `(r,c)` itself.
pub fn propagate_block(own: f64, right: f64, down: f64, k1: usize, k2: usize) -> Array2<f64> {
    let mut t = Array2::zeros((k1, k2));
    t[[0, 0]] = own;
    for j in 2..=k2 {
        t[[0, j - 1]] = ((j - 1) as f64 * right + (k2 - j + 1) as f64 * own) / k2 as f64;
    }
    for i in 2..=k1 {
        t[[i - 1, 0]] = ((i - 1) as f64 * down + (k1 - i + 1) as f64 * own) / k1 as f64;
    }
    fill_interior(&mut t);
    t
}

/// Row-major interior pass of the propagation recurrence. Expects the first
/// row and column to be filled already.
pub(crate) fn fill_interior(t: &mut Array2<f64>) {
    let (k1, k2) = t.dim();
    let mut powq = vec![0.0f64; k1 + k2];
    for r in 2..=k1 {
        for c in 2..=k2 {
            let q = 1.0 - 1.0 / ((r + c - 1) as f64);
            let max_e = r + c - 2;
            powq[0] = 1.0;
            for e in 1..=max_e {
                powq[e] = powq[e - 1] * q;
            }
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 1..=r {
                for j in 1..=c {
                    if i == r && j == c {
                        continue;
                    }
                    let w = powq[(r - i) + (c - j)];
                    num += w * t[[i - 1, j - 1]];
                    den += w;
                }
            }
            t[[r - 1, c - 1]] = num / den;
        }
    }
}

/// Precomputed propagation kernels for one block size.
///
/// The tile produced by `propagate_block` is linear in the three corner
/// values, so one run per unit corner yields weight kernels that turn each
/// block into three multiply-adds per pixel. The weights are a partition of
/// unity, which makes every propagated threshold a convex combination of the
/// corners it saw.
#[derive(Debug, Clone)]
pub struct ThresholdPropagator {
    block: BlockSpec,
    w_own: Array2<f64>,
    w_right: Array2<f64>,
    w_down: Array2<f64>,
}

impl ThresholdPropagator {
    pub fn new(block: BlockSpec) -> Self {
        let (k1, k2) = (block.k1, block.k2);
        Self {
            block,
            w_own: propagate_block(1.0, 0.0, 0.0, k1, k2),
            w_right: propagate_block(0.0, 1.0, 0.0, k1, k2),
            w_down: propagate_block(0.0, 0.0, 1.0, k1, k2),
        }
    }

    pub fn block(&self) -> BlockSpec {
        self.block
    }

    /// Expand a grid of block-corner thresholds into a full `rows x cols`
    /// threshold map. Blocks on the last band reuse their own corner for the
    /// missing neighbor. `corners` must be `ceil(rows/k1) x ceil(cols/k2)`.
    pub fn apply(&self, corners: &Array2<f64>, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let (k1, k2) = (self.block.k1, self.block.k2);
        let expected = (rows.div_ceil(k1), cols.div_ceil(k2));
        if corners.dim() != expected {
            return Err(Error::Dimension {
                expected,
                got: corners.dim(),
            });
        }
        let (nb1, nb2) = expected;
        let mut local = Array2::zeros((rows, cols));
        for bi in 0..nb1 {
            for bj in 0..nb2 {
                let own = corners[[bi, bj]];
                let right = corners[[bi, (bj + 1).min(nb2 - 1)]];
                let down = corners[[(bi + 1).min(nb1 - 1), bj]];
                for i in 0..k1.min(rows - bi * k1) {
                    let r = bi * k1 + i;
                    for j in 0..k2.min(cols - bj * k2) {
                        let c = bj * k2 + j;
                        local[[r, c]] = own * self.w_own[[i, j]]
                            + right * self.w_right[[i, j]]
                            + down * self.w_down[[i, j]];
                    }
                }
            }
        }
        Ok(local)
    }
}

/// A per-pixel threshold map plus the frame's global Otsu threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdMap {
    pub local: Array2<f64>,
    pub global_t: f64,
    pub alpha: Option<f64>,
    pub effective: Option<Array2<f64>>,
}

/// Build the point-by-point threshold map for a frame: pad the frame to a
/// block multiple by edge replication, take each block's Otsu threshold as
/// its corner value, propagate tiles, and crop back. `global_t` is the Otsu
/// threshold of the whole (unpadded) frame.
pub fn ppb_threshold_map(
    frame: &ReferenceFrame,
    block: BlockSpec,
    levels: u32,
) -> Result<ThresholdMap> {
    ppb_threshold_map_with(&ThresholdPropagator::new(block), frame, levels)
}

/// As `ppb_threshold_map`, reusing a prepared propagator (the kernels depend
/// only on the block size, so per-run callers build them once).
pub fn ppb_threshold_map_with(
    prop: &ThresholdPropagator,
    frame: &ReferenceFrame,
    levels: u32,
) -> Result<ThresholdMap> {
    let (rows, cols) = frame.dim();
    let (k1, k2) = (prop.block.k1, prop.block.k2);
    if k1 > rows || k2 > cols {
        return Err(Error::Dimension {
            expected: (k1, k2),
            got: (rows, cols),
        });
    }
    let padded = pad_to_blocks(frame.intensity().view(), k1, k2);
    let (nb1, nb2) = (padded.nrows() / k1, padded.ncols() / k2);
    let mut corners = Array2::zeros((nb1, nb2));
    for bi in 0..nb1 {
        for bj in 0..nb2 {
            let tile = padded.slice(s![bi * k1..(bi + 1) * k1, bj * k2..(bj + 1) * k2]);
            let q = quantize_values(tile, levels)?;
            corners[[bi, bj]] = otsu_threshold(&q);
        }
    }
    let local = prop.apply(&corners, rows, cols)?;
    let global_t = otsu_threshold(&quantize(frame, levels)?);
    Ok(ThresholdMap {
        local,
        global_t,
        alpha: None,
        effective: None,
    })
}

/// Blend the local map with the global threshold:
/// `effective = (1 - alpha) * local + alpha * global_t`.
pub fn harmonize(map: ThresholdMap, alpha: f64) -> Result<ThresholdMap> {
    if !(alpha.is_finite() && (0.0..=1.0).contains(&alpha)) {
        return Err(Error::Parameter(format!(
            "harmonic factor must be within [0, 1], got {alpha}"
        )));
    }
    let effective = map.local.mapv(|t| (1.0 - alpha) * t + alpha * map.global_t);
    Ok(ThresholdMap {
        effective: Some(effective),
        alpha: Some(alpha),
        ..map
    })
}

fn pad_to_blocks(v: ArrayView2<'_, f64>, k1: usize, k2: usize) -> Array2<f64> {
    let (rows, cols) = v.dim();
    let (pr, pc) = (rows.div_ceil(k1) * k1, cols.div_ceil(k2) * k2);
    let mut out = Array2::zeros((pr, pc));
    for r in 0..pr {
        for c in 0..pc {
            out[[r, c]] = v[[r.min(rows - 1), c.min(cols - 1)]];
        }
    }
    out
}

/// Strategy selector. `block`/`alpha` ride along only for `point_by_point`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinarizationMethod {
    None,
    Mean,
    Otsu,
    PointByPoint { block: BlockSpec, alpha: f64 },
}

impl BinarizationMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            BinarizationMethod::None => "none",
            BinarizationMethod::Mean => "mean",
            BinarizationMethod::Otsu => "otsu",
            BinarizationMethod::PointByPoint { .. } => "point_by_point",
        }
    }
}

/// A frame after its method has been applied: real intensities for `none`,
/// bits otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessedFrame {
    Raw(ReferenceFrame),
    Binary(BinaryFrame),
}

impl ProcessedFrame {
    pub fn frame_index(&self) -> u64 {
        match self {
            ProcessedFrame::Raw(f) => f.frame_index(),
            ProcessedFrame::Binary(b) => b.frame_index,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        match self {
            ProcessedFrame::Raw(f) => f.dim(),
            ProcessedFrame::Binary(b) => b.dim(),
        }
    }

    /// The frame as real values (bits widen to 0.0/1.0).
    pub fn to_real(&self) -> Array2<f64> {
        match self {
            ProcessedFrame::Raw(f) => f.intensity().clone(),
            ProcessedFrame::Binary(b) => b.to_real(),
        }
    }
}

/// Apply one strategy to one frame.
pub fn binarize_with_method(
    frame: &ReferenceFrame,
    method: &BinarizationMethod,
    levels: u32,
) -> Result<ProcessedFrame> {
    match method {
        BinarizationMethod::None => Ok(ProcessedFrame::Raw(frame.clone())),
        BinarizationMethod::Mean => Ok(ProcessedFrame::Binary(binarize_scalar(
            frame,
            mean_threshold(frame),
        ))),
        BinarizationMethod::Otsu => {
            let q = quantize(frame, levels)?;
            Ok(ProcessedFrame::Binary(binarize_scalar(
                frame,
                otsu_threshold(&q),
            )))
        }
        BinarizationMethod::PointByPoint { block, alpha } => {
            let prop = ThresholdPropagator::new(*block);
            Ok(ProcessedFrame::Binary(binarize_point_by_point(
                frame, &prop, *alpha, levels,
            )?))
        }
    }
}

/// The `point_by_point` pipeline against a reusable propagator.
pub fn binarize_point_by_point(
    frame: &ReferenceFrame,
    prop: &ThresholdPropagator,
    alpha: f64,
    levels: u32,
) -> Result<BinaryFrame> {
    let map = harmonize(ppb_threshold_map_with(prop, frame, levels)?, alpha)?;
    binarize_map(
        frame,
        map.effective.as_ref().expect("harmonize sets effective"),
    )
}
