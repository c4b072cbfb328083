//! Streaming reconstruction of the intensity-fluctuation correlation image
//! `G(u) = <B * I(u)> - <B><I(u)>` from (bucket, reference) pairs. The same
//! formula serves raw and binarized references; only the frame values differ.
//!
//! Accumulators are mergeable: shard frames across accumulators in any way,
//! merge, and finalize once.

use ndarray::{Array2, ArrayView2, Zip};

use crate::binarization::{BinaryFrame, ProcessedFrame};
use crate::error::{Error, Result};
use crate::speckle::ReferenceFrame;

/// Borrowed view of one processed frame's values for accumulation.
#[derive(Debug, Clone, Copy)]
pub enum FrameValues<'a> {
    Real(&'a Array2<f64>),
    Bits(&'a Array2<u8>),
}

impl FrameValues<'_> {
    pub fn dim(&self) -> (usize, usize) {
        match self {
            FrameValues::Real(v) => v.dim(),
            FrameValues::Bits(b) => b.dim(),
        }
    }
}

impl<'a> From<&'a ReferenceFrame> for FrameValues<'a> {
    fn from(f: &'a ReferenceFrame) -> Self {
        FrameValues::Real(f.intensity())
    }
}

impl<'a> From<&'a BinaryFrame> for FrameValues<'a> {
    fn from(b: &'a BinaryFrame) -> Self {
        FrameValues::Bits(&b.bits)
    }
}

impl<'a> From<&'a ProcessedFrame> for FrameValues<'a> {
    fn from(p: &'a ProcessedFrame) -> Self {
        match p {
            ProcessedFrame::Raw(f) => f.into(),
            ProcessedFrame::Binary(b) => b.into(),
        }
    }
}

impl<'a> From<&'a Array2<f64>> for FrameValues<'a> {
    fn from(v: &'a Array2<f64>) -> Self {
        FrameValues::Real(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Compensation {
    bucket: f64,
    bucket_sq: f64,
    sum_ref: Array2<f64>,
    sum_bucket_ref: Array2<f64>,
}

/// Sufficient statistics for `G`: count, bucket sums, and pointwise reference
/// sums. `sum_bucket_sq` is carried for bucket-noise diagnostics even though
/// `G` itself never needs it.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    shape: (usize, usize),
    count: u64,
    sum_bucket: f64,
    sum_bucket_sq: f64,
    sum_ref: Array2<f64>,
    sum_bucket_ref: Array2<f64>,
    // Kahan residuals; accumulation is plain f64 summation unless enabled.
    comp: Option<Box<Compensation>>,
}

#[inline]
fn kahan_add(sum: &mut f64, residual: &mut f64, x: f64) {
    let y = x - *residual;
    let t = *sum + y;
    *residual = (t - *sum) - y;
    *sum = t;
}

impl Accumulator {
    pub fn new(shape: (usize, usize)) -> Self {
        Self {
            shape,
            count: 0,
            sum_bucket: 0.0,
            sum_bucket_sq: 0.0,
            sum_ref: Array2::zeros(shape),
            sum_bucket_ref: Array2::zeros(shape),
            comp: None,
        }
    }

    /// As `new`, with compensated (Kahan) summation. Plain summation already
    /// meets the documented tolerances at K = 10^4; this exists for much
    /// longer runs.
    pub fn new_compensated(shape: (usize, usize)) -> Self {
        let mut acc = Self::new(shape);
        acc.comp = Some(Box::new(Compensation {
            bucket: 0.0,
            bucket_sq: 0.0,
            sum_ref: Array2::zeros(shape),
            sum_bucket_ref: Array2::zeros(shape),
        }));
        acc
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_compensated(&self) -> bool {
        self.comp.is_some()
    }

    /// Mean bucket reading so far.
    pub fn bucket_mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.folded_bucket() / self.count as f64)
    }

    /// Population variance of the bucket readings so far.
    pub fn bucket_variance(&self) -> Option<f64> {
        (self.count > 0).then(|| {
            let k = self.count as f64;
            let mean = self.folded_bucket() / k;
            (self.folded_bucket_sq() / k - mean * mean).max(0.0)
        })
    }

    fn folded_bucket(&self) -> f64 {
        self.sum_bucket + self.comp.as_ref().map_or(0.0, |c| -c.bucket)
    }

    fn folded_bucket_sq(&self) -> f64 {
        self.sum_bucket_sq + self.comp.as_ref().map_or(0.0, |c| -c.bucket_sq)
    }

    /// Fold one (bucket, frame) pair into the sums.
    pub fn update<'a>(&mut self, bucket: f64, values: impl Into<FrameValues<'a>>) -> Result<()> {
        let values = values.into();
        if values.dim() != self.shape {
            return Err(Error::Dimension {
                expected: self.shape,
                got: values.dim(),
            });
        }
        if !bucket.is_finite() {
            return Err(Error::Parameter(format!(
                "bucket value must be finite, got {bucket}"
            )));
        }
        self.count += 1;
        match &mut self.comp {
            None => {
                self.sum_bucket += bucket;
                self.sum_bucket_sq += bucket * bucket;
                match values {
                    FrameValues::Real(v) => {
                        Zip::from(&mut self.sum_ref)
                            .and(&mut self.sum_bucket_ref)
                            .and(v)
                            .for_each(|sr, sbr, &x| {
                                *sr += x;
                                *sbr += bucket * x;
                            });
                    }
                    FrameValues::Bits(b) => {
                        Zip::from(&mut self.sum_ref)
                            .and(&mut self.sum_bucket_ref)
                            .and(b)
                            .for_each(|sr, sbr, &bit| {
                                let x = f64::from(bit);
                                *sr += x;
                                *sbr += bucket * x;
                            });
                    }
                }
            }
            Some(comp) => {
                kahan_add(&mut self.sum_bucket, &mut comp.bucket, bucket);
                kahan_add(
                    &mut self.sum_bucket_sq,
                    &mut comp.bucket_sq,
                    bucket * bucket,
                );
                let fold = |sr: &mut Array2<f64>,
                            csr: &mut Array2<f64>,
                            sbr: &mut Array2<f64>,
                            csbr: &mut Array2<f64>,
                            get: &dyn Fn((usize, usize)) -> f64| {
                    for r in 0..sr.nrows() {
                        for c in 0..sr.ncols() {
                            let x = get((r, c));
                            kahan_add(&mut sr[[r, c]], &mut csr[[r, c]], x);
                            kahan_add(&mut sbr[[r, c]], &mut csbr[[r, c]], bucket * x);
                        }
                    }
                };
                match values {
                    FrameValues::Real(v) => fold(
                        &mut self.sum_ref,
                        &mut comp.sum_ref,
                        &mut self.sum_bucket_ref,
                        &mut comp.sum_bucket_ref,
                        &|idx| v[idx],
                    ),
                    FrameValues::Bits(b) => fold(
                        &mut self.sum_ref,
                        &mut comp.sum_ref,
                        &mut self.sum_bucket_ref,
                        &mut comp.sum_bucket_ref,
                        &|idx| f64::from(b[idx]),
                    ),
                }
            }
        }
        Ok(())
    }

    /// Combine two partial accumulations. Compensation survives only when
    /// both sides carry it; otherwise residuals are folded into the sums.
    pub fn merge(&self, other: &Accumulator) -> Result<Accumulator> {
        if self.shape != other.shape {
            return Err(Error::Dimension {
                expected: self.shape,
                got: other.shape,
            });
        }
        let mut out = Accumulator::new(self.shape);
        out.count = self.count + other.count;
        if let (Some(a), Some(b)) = (&self.comp, &other.comp) {
            out.sum_bucket = self.sum_bucket + other.sum_bucket;
            out.sum_bucket_sq = self.sum_bucket_sq + other.sum_bucket_sq;
            out.sum_ref = &self.sum_ref + &other.sum_ref;
            out.sum_bucket_ref = &self.sum_bucket_ref + &other.sum_bucket_ref;
            out.comp = Some(Box::new(Compensation {
                bucket: a.bucket + b.bucket,
                bucket_sq: a.bucket_sq + b.bucket_sq,
                sum_ref: &a.sum_ref + &b.sum_ref,
                sum_bucket_ref: &a.sum_bucket_ref + &b.sum_bucket_ref,
            }));
        } else {
            out.sum_bucket = self.folded_bucket() + other.folded_bucket();
            out.sum_bucket_sq = self.folded_bucket_sq() + other.folded_bucket_sq();
            out.sum_ref = self.folded_grid(&self.sum_ref, |c| &c.sum_ref)
                + other.folded_grid(&other.sum_ref, |c| &c.sum_ref);
            out.sum_bucket_ref = self.folded_grid(&self.sum_bucket_ref, |c| &c.sum_bucket_ref)
                + other.folded_grid(&other.sum_bucket_ref, |c| &c.sum_bucket_ref);
        }
        Ok(out)
    }

    fn folded_grid(
        &self,
        sum: &Array2<f64>,
        pick: impl Fn(&Compensation) -> &Array2<f64>,
    ) -> Array2<f64> {
        match &self.comp {
            None => sum.clone(),
            Some(c) => sum - pick(c),
        }
    }

    /// Finish the run: `G = sum_bucket_ref/K - (sum_bucket/K)(sum_ref/K)`.
    pub fn finalize(&self) -> Result<Reconstruction> {
        if self.count < 2 {
            return Err(Error::InsufficientData(format!(
                "fluctuation correlation needs at least 2 frames, have {}",
                self.count
            )));
        }
        let k = self.count as f64;
        let mean_bucket = self.folded_bucket() / k;
        let sr = self.folded_grid(&self.sum_ref, |c| &c.sum_ref);
        let sbr = self.folded_grid(&self.sum_bucket_ref, |c| &c.sum_bucket_ref);
        let image = Zip::from(&sbr)
            .and(&sr)
            .map_collect(|&sbr, &sr| sbr / k - mean_bucket * (sr / k));
        Ok(Reconstruction {
            image,
            count: self.count,
            method: None,
        })
    }
}

/// A finished ghost image. Values are fluctuation correlations and are
/// routinely negative away from the object's support.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub image: Array2<f64>,
    pub count: u64,
    /// Strategy tag of the reference frames, when known.
    pub method: Option<String>,
}

impl Reconstruction {
    pub fn dim(&self) -> (usize, usize) {
        self.image.dim()
    }
}

/// Linear min-max map onto 0..=255, rounding half-up; a constant image maps
/// to all zeros.
pub fn normalize_display(rec: &Reconstruction) -> Array2<u8> {
    min_max_u8(rec.image.view())
}

pub(crate) fn min_max_u8(values: ArrayView2<'_, f64>) -> Array2<u8> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    if span.is_nan() || span <= 0.0 {
        return Array2::zeros(values.dim());
    }
    values.map(|&v| (((v - lo) / span * 255.0 + 0.5).floor() as i64).clamp(0, 255) as u8)
}
