//! Pseudo-thermal speckle synthesis and measurement runs.
//!
//! A frame is drawn as circular complex Gaussian white noise, smoothed with a
//! normalized isotropic Gaussian kernel of width `grain_sigma`, and squared
//! into intensity. At `grain_sigma = 0` the per-pixel intensity is exactly
//! exponential (fully developed speckle, contrast 1); smoothing trades
//! contrast for grain size with autocorrelation `exp(-d^2 / (2 sigma^2))`.
//!
//! Frames are keyed by `(seed, frame_index)` through independent ChaCha8
//! streams, so any frame can be regenerated in isolation and iteration order
//! never matters.

use std::io::{BufReader, Read, Seek, SeekFrom};
use std::path::PathBuf;

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::objects::ObjectMask;

/// Generative parameters for one speckle ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeckleParams {
    pub rows: usize,
    pub cols: usize,
    /// Gaussian smoothing width in pixels; 0 disables smoothing.
    pub grain_sigma: f64,
    /// Target ensemble mean of the intensity, must be positive.
    pub mean_intensity: f64,
    pub seed: u64,
}

impl SpeckleParams {
    pub fn new(
        rows: usize,
        cols: usize,
        grain_sigma: f64,
        mean_intensity: f64,
        seed: u64,
    ) -> Result<Self> {
        let p = Self {
            rows,
            cols,
            grain_sigma,
            mean_intensity,
            seed,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Parameter("speckle grid must be non-empty".into()));
        }
        if !(self.grain_sigma.is_finite() && self.grain_sigma >= 0.0) {
            return Err(Error::Parameter(format!(
                "grain_sigma must be finite and non-negative, got {}",
                self.grain_sigma
            )));
        }
        if !(self.mean_intensity.is_finite() && self.mean_intensity > 0.0) {
            return Err(Error::Parameter(format!(
                "mean_intensity must be positive, got {}",
                self.mean_intensity
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// One reference-arm intensity pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFrame {
    intensity: Array2<f64>,
    frame_index: u64,
}

impl ReferenceFrame {
    /// Wrap an intensity grid, enforcing finite non-negative values.
    pub fn new(intensity: Array2<f64>, frame_index: u64) -> Result<Self> {
        if intensity.is_empty() {
            return Err(Error::Parameter("reference frame must be non-empty".into()));
        }
        if intensity.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Parameter(
                "reference intensities must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            intensity,
            frame_index,
        })
    }

    pub fn intensity(&self) -> &Array2<f64> {
        &self.intensity
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    pub fn dim(&self) -> (usize, usize) {
        self.intensity.dim()
    }
}

/// One bucket-detector reading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BucketSample {
    pub value: f64,
    pub frame_index: u64,
}

/// Generate the frame at `frame_index`. Pure in `(params, frame_index)`.
pub fn generate_frame(params: &SpeckleParams, frame_index: u64) -> Result<ReferenceFrame> {
    params.validate()?;
    let (rows, cols) = params.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(frame_index);

    // Fixed draw order: full real field row-major, then full imaginary field.
    let n = rows * cols;
    let mut re = Vec::with_capacity(n);
    for _ in 0..n {
        re.push(rng.sample::<f64, _>(StandardNormal));
    }
    let mut im = Vec::with_capacity(n);
    for _ in 0..n {
        im.push(rng.sample::<f64, _>(StandardNormal));
    }
    let mut re = Array2::from_shape_vec((rows, cols), re).expect("shape matches");
    let mut im = Array2::from_shape_vec((rows, cols), im).expect("shape matches");

    if params.grain_sigma > 0.0 {
        let kernel = gaussian_kernel(params.grain_sigma);
        convolve_separable(&mut re, &kernel);
        convolve_separable(&mut im, &kernel);
    }

    // E[re^2 + im^2] = 2 for unit normals (the normalized kernel preserves
    // total variance only at sigma = 0, but the scale below is held fixed so
    // the bright-field statistics stay comparable across grain sizes).
    let scale = params.mean_intensity / 2.0;
    let intensity = ndarray::Zip::from(&re)
        .and(&im)
        .map_collect(|&a, &b| (a * a + b * b) * scale);
    Ok(ReferenceFrame {
        intensity,
        frame_index,
    })
}

/// Symmetric Gaussian taps truncated at 4 sigma, normalized to sum 1.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as usize;
    let mut taps = Vec::with_capacity(2 * radius + 1);
    let inv = 1.0 / (2.0 * sigma * sigma);
    for t in -(radius as isize)..=(radius as isize) {
        let d = t as f64;
        taps.push((-d * d * inv).exp());
    }
    let sum: f64 = taps.iter().sum();
    for w in &mut taps {
        *w /= sum;
    }
    taps
}

/// Fold an out-of-range index back into `0..n` by half-sample reflection
/// (`-1 -> 0`, `n -> n-1`), applied repeatedly for kernels wider than the lane.
fn reflect(mut i: isize, n: isize) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

fn convolve_lane(src: &[f64], dst: &mut [f64], kernel: &[f64]) {
    let n = src.len() as isize;
    let r = (kernel.len() / 2) as isize;
    for i in 0..n {
        let mut acc = 0.0;
        if i >= r && i + r < n {
            let base = (i - r) as usize;
            for (t, &w) in kernel.iter().enumerate() {
                acc += w * src[base + t];
            }
        } else {
            for (t, &w) in kernel.iter().enumerate() {
                acc += w * src[reflect(i + t as isize - r, n)];
            }
        }
        dst[i as usize] = acc;
    }
}

/// In-place separable convolution with reflected boundaries.
fn convolve_separable(field: &mut Array2<f64>, kernel: &[f64]) {
    let mut src = Vec::new();
    let mut dst = Vec::new();
    for axis in [Axis(1), Axis(0)] {
        for mut lane in field.lanes_mut(axis) {
            src.clear();
            src.extend(lane.iter().copied());
            dst.resize(src.len(), 0.0);
            convolve_lane(&src, &mut dst, kernel);
            for (cell, &v) in lane.iter_mut().zip(dst.iter()) {
                *cell = v;
            }
        }
    }
}

/// Bucket reading for `frame` behind `object`: the transmitted power
/// `sum_u O(u) * I(u)`.
pub fn bucket_measure(frame: &ReferenceFrame, object: &ObjectMask) -> Result<BucketSample> {
    if frame.dim() != object.dim() {
        return Err(Error::Dimension {
            expected: object.dim(),
            got: frame.dim(),
        });
    }
    let value = frame
        .intensity()
        .iter()
        .zip(object.transmission())
        .map(|(i, o)| i * o)
        .sum();
    Ok(BucketSample {
        value,
        frame_index: frame.frame_index(),
    })
}

// Seed perturbation for the bucket-noise stream so noise draws never collide
// with the field draws of any frame.
const NOISE_SALT: u64 = 0x6275_636b_6574_6e73; // "bucketns"

fn bucket_noise(seed: u64, frame_index: u64, noise_sigma: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_SALT);
    rng.set_stream(frame_index);
    noise_sigma * rng.sample::<f64, _>(StandardNormal)
}

#[derive(Debug)]
pub(crate) enum RunSource {
    Synthetic {
        params: SpeckleParams,
        object: ObjectMask,
        /// Additive Gaussian noise on the bucket reading (0 = noiseless).
        noise_sigma: f64,
    },
    Stored {
        path: PathBuf,
        buckets: Vec<f64>,
    },
}

/// A reproducible sequence of (reference frame, bucket sample) pairs, either
/// generated on the fly or streamed from a stack file.
#[derive(Debug)]
pub struct MeasurementRun {
    rows: usize,
    cols: usize,
    count: u32,
    fingerprint: [u8; 32],
    source: RunSource,
}

/// Build a noiseless synthetic run of `count` frames.
pub fn generate_run(
    params: &SpeckleParams,
    object: ObjectMask,
    count: u32,
) -> Result<MeasurementRun> {
    generate_run_with_noise(params, object, count, 0.0)
}

/// Synthetic run with additive Gaussian bucket noise of standard deviation
/// `noise_sigma` (readings are clamped at zero, as a photodetector's are).
pub fn generate_run_with_noise(
    params: &SpeckleParams,
    object: ObjectMask,
    count: u32,
    noise_sigma: f64,
) -> Result<MeasurementRun> {
    params.validate()?;
    if count == 0 {
        return Err(Error::Parameter(
            "run must contain at least one frame".into(),
        ));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::Parameter(format!(
            "noise_sigma must be finite and non-negative, got {noise_sigma}"
        )));
    }
    if params.dim() != object.dim() {
        return Err(Error::Dimension {
            expected: params.dim(),
            got: object.dim(),
        });
    }

    let mut hasher = Sha256::new();
    hasher.update(b"ghostsim-run-v1");
    for word in [
        params.rows as u64,
        params.cols as u64,
        u64::from(count),
        params.seed,
        params.grain_sigma.to_bits(),
        params.mean_intensity.to_bits(),
        noise_sigma.to_bits(),
    ] {
        hasher.update(word.to_le_bytes());
    }
    hasher.update(object.label().as_bytes());
    for v in object.transmission() {
        hasher.update(v.to_le_bytes());
    }

    Ok(MeasurementRun {
        rows: params.rows,
        cols: params.cols,
        count,
        fingerprint: hasher.finalize().into(),
        source: RunSource::Synthetic {
            params: *params,
            object,
            noise_sigma,
        },
    })
}

impl MeasurementRun {
    pub(crate) fn stored(
        rows: usize,
        cols: usize,
        count: u32,
        fingerprint: [u8; 32],
        path: PathBuf,
        buckets: Vec<f64>,
    ) -> Self {
        MeasurementRun {
            rows,
            cols,
            count,
            fingerprint,
            source: RunSource::Stored { path, buckets },
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn count(&self) -> u32 {
        self.count
    }

    /// Content digest identifying the run (parameters and object for
    /// synthetic runs, header and bucket section for stored ones).
    pub fn fingerprint_hex(&self) -> String {
        self.fingerprint
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Iterate the run's (frame, bucket) pairs in index order.
    pub fn pairs(&self) -> Result<Pairs<'_>> {
        let state = match &self.source {
            RunSource::Synthetic { .. } => PairState::Synthetic,
            RunSource::Stored { path, .. } => {
                let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
                let mut reader = BufReader::new(file);
                reader
                    .seek(SeekFrom::Start(crate::stack::HEADER_LEN as u64))
                    .map_err(|e| Error::io(path, e))?;
                PairState::Stored {
                    reader,
                    buf: vec![0u8; self.rows * self.cols * 4],
                }
            }
        };
        Ok(Pairs {
            run: self,
            next_index: 0,
            state,
        })
    }
}

enum PairState {
    Synthetic,
    Stored {
        reader: BufReader<std::fs::File>,
        buf: Vec<u8>,
    },
}

pub struct Pairs<'a> {
    run: &'a MeasurementRun,
    next_index: u64,
    state: PairState,
}

impl Pairs<'_> {
    fn next_pair(&mut self) -> Result<(ReferenceFrame, BucketSample)> {
        let idx = self.next_index;
        match (&self.run.source, &mut self.state) {
            (
                RunSource::Synthetic {
                    params,
                    object,
                    noise_sigma,
                },
                PairState::Synthetic,
            ) => {
                let frame = generate_frame(params, idx)?;
                let mut bucket = bucket_measure(&frame, object)?;
                if *noise_sigma > 0.0 {
                    bucket.value =
                        (bucket.value + bucket_noise(params.seed, idx, *noise_sigma)).max(0.0);
                }
                Ok((frame, bucket))
            }
            (RunSource::Stored { path, buckets }, PairState::Stored { reader, buf }) => {
                reader.read_exact(buf).map_err(|e| Error::io(path, e))?;
                let (rows, cols) = (self.run.rows, self.run.cols);
                let mut vals = Vec::with_capacity(rows * cols);
                vals.extend(
                    buf.chunks_exact(4)
                        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))),
                );
                let frame_offset = crate::stack::HEADER_LEN as u64 + idx * (rows * cols * 4) as u64;
                if let Some(pos) = vals.iter().position(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::format(
                        path,
                        frame_offset + (pos * 4) as u64,
                        format!("frame {idx} sample {pos} is not a finite non-negative intensity"),
                    ));
                }
                let grid = Array2::from_shape_vec((rows, cols), vals).expect("shape matches");
                Ok((
                    ReferenceFrame {
                        intensity: grid,
                        frame_index: idx,
                    },
                    BucketSample {
                        value: buckets[idx as usize],
                        frame_index: idx,
                    },
                ))
            }
            _ => unreachable!("state always matches source"),
        }
    }
}

impl Iterator for Pairs<'_> {
    type Item = Result<(ReferenceFrame, BucketSample)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_index >= u64::from(self.run.count) {
            return None;
        }
        let item = self.next_pair();
        self.next_index += 1;
        Some(item)
    }
}
