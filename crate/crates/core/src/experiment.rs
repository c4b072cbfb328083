//! Experiment orchestration: multi-method comparison runs, single-method
//! reconstruction, and speckle statistics, with CSV/PGM outputs.
//!
//! All methods in a comparison consume identical frames (same seed), so the
//! comparison isolates the binarization strategy. Output bytes are a pure
//! function of the configuration unless wall-clock timing is requested.

use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;

use crate::binarization::{
    binarize_point_by_point, binarize_scalar, mean_threshold, otsu_threshold, quantize,
    BinarizationMethod, BinaryFrame, BlockSpec, ProcessedFrame, ThresholdPropagator,
};
use crate::error::{Error, Result};
use crate::metrics::{corr, fill_fraction, grain_fwhm, MetricsReport};
use crate::objects::{self, DoubleSlitSpec, ObjectMask, Orientation};
use crate::pgm;
use crate::reconstruction::{min_max_u8, normalize_display, Accumulator, Reconstruction};
use crate::speckle::{generate_run_with_noise, MeasurementRun, ReferenceFrame, SpeckleParams};
use crate::stack::StackWriter;

/// What sits in the test arm.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectSpec {
    /// Centered vertical double slit; `slit_height_px` defaults to half the
    /// grid when absent.
    DoubleSlit {
        slit_width_px: usize,
        separation_px: usize,
        slit_height_px: Option<usize>,
    },
    /// Built-in procedural resolution target.
    TestCard,
    /// Grayscale image file (PGM or PNG), must match the grid size.
    Image(std::path::PathBuf),
}

impl ObjectSpec {
    pub fn build(&self, rows: usize, cols: usize) -> Result<ObjectMask> {
        match self {
            ObjectSpec::DoubleSlit {
                slit_width_px,
                separation_px,
                slit_height_px,
            } => objects::make_double_slit(&DoubleSlitSpec {
                rows,
                cols,
                slit_width_px: *slit_width_px,
                separation_px: *separation_px,
                slit_height_px: slit_height_px.unwrap_or(rows / 2),
                orientation: Orientation::Vertical,
            }),
            ObjectSpec::TestCard => objects::make_test_card(rows, cols),
            ObjectSpec::Image(path) => {
                let mask = objects::load_object(path)?;
                if mask.dim() != (rows, cols) {
                    return Err(Error::Dimension {
                        expected: (rows, cols),
                        got: mask.dim(),
                    });
                }
                Ok(mask)
            }
        }
    }
}

/// Full description of a run. `block` and `alpha` are the configured
/// point-by-point parameters; `methods` is the list actually executed
/// (normally [`ExperimentConfig::standard_methods`]).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub rows: usize,
    pub cols: usize,
    pub grain_sigma: f64,
    pub mean_intensity: f64,
    pub count: u32,
    pub seeds: Vec<u64>,
    pub object: ObjectSpec,
    pub block: BlockSpec,
    pub alpha: f64,
    pub levels: u32,
    pub methods: Vec<BinarizationMethod>,
    pub noise_sigma: f64,
    /// Record per-method wall clock in the CSV. Off by default because it
    /// makes output bytes run-dependent.
    pub timing: bool,
    pub emit_stack: bool,
    /// Use compensated summation in the accumulators.
    pub compensated: bool,
}

impl Default for ExperimentConfig {
    /// The desk-scale defaults: 128x128 grid, grain 1.5 px, 10000 frames,
    /// double slit of 4 px slits 12 px apart, 16x16 blocks, alpha 0.15,
    /// 256 levels, no noise.
    fn default() -> Self {
        let block = BlockSpec::new(16, 16).expect("16x16 is a valid block");
        let alpha = 0.15;
        Self {
            rows: 128,
            cols: 128,
            grain_sigma: 1.5,
            mean_intensity: 1.0,
            count: 10_000,
            seeds: vec![0],
            object: ObjectSpec::DoubleSlit {
                slit_width_px: 4,
                separation_px: 12,
                slit_height_px: None,
            },
            block,
            alpha,
            levels: 256,
            methods: standard_methods(block, alpha),
            noise_sigma: 0.0,
            timing: false,
            emit_stack: false,
            compensated: false,
        }
    }
}

/// The four strategies of the comparison protocol, in canonical order.
pub fn standard_methods(block: BlockSpec, alpha: f64) -> Vec<BinarizationMethod> {
    vec![
        BinarizationMethod::None,
        BinarizationMethod::Mean,
        BinarizationMethod::Otsu,
        BinarizationMethod::PointByPoint { block, alpha },
    ]
}

impl ExperimentConfig {
    pub fn standard_methods(&self) -> Vec<BinarizationMethod> {
        standard_methods(self.block, self.alpha)
    }

    pub fn validate(&self) -> Result<()> {
        self.speckle_params(0)?;
        if self.count < 2 {
            return Err(Error::Parameter(format!(
                "comparison needs at least 2 frames, got {}",
                self.count
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Parameter("at least one seed is required".into()));
        }
        if self.levels < 2 {
            return Err(Error::Parameter(format!(
                "need at least 2 levels, got {}",
                self.levels
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Parameter("at least one method is required".into()));
        }
        if !(self.alpha.is_finite() && (0.0..=1.0).contains(&self.alpha)) {
            return Err(Error::Parameter(format!(
                "harmonic factor must be within [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Parameter(format!(
                "noise_sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        for m in &self.methods {
            if let BinarizationMethod::PointByPoint { block, alpha } = m {
                if block.k1() > self.rows || block.k2() > self.cols {
                    return Err(Error::Parameter(format!(
                        "block {}x{} does not fit a {}x{} frame",
                        block.k1(),
                        block.k2(),
                        self.rows,
                        self.cols
                    )));
                }
                if !(alpha.is_finite() && (0.0..=1.0).contains(alpha)) {
                    return Err(Error::Parameter(format!(
                        "harmonic factor must be within [0, 1], got {alpha}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn speckle_params(&self, seed: u64) -> Result<SpeckleParams> {
        SpeckleParams::new(
            self.rows,
            self.cols,
            self.grain_sigma,
            self.mean_intensity,
            seed,
        )
    }
}

/// Binarize one frame per `method`; `None` means the raw frame is used as-is.
/// `prop` must be the propagator for the method's block when the method is
/// point-by-point.
fn process_frame(
    frame: &ReferenceFrame,
    method: &BinarizationMethod,
    prop: Option<&ThresholdPropagator>,
    levels: u32,
) -> Result<Option<BinaryFrame>> {
    match method {
        BinarizationMethod::None => Ok(None),
        BinarizationMethod::Mean => Ok(Some(binarize_scalar(frame, mean_threshold(frame)))),
        BinarizationMethod::Otsu => {
            let q = quantize(frame, levels)?;
            Ok(Some(binarize_scalar(frame, otsu_threshold(&q))))
        }
        BinarizationMethod::PointByPoint { alpha, .. } => {
            let prop = prop.expect("propagator prepared for point_by_point");
            Ok(Some(binarize_point_by_point(frame, prop, *alpha, levels)?))
        }
    }
}

fn propagator_for(method: &BinarizationMethod) -> Option<ThresholdPropagator> {
    match method {
        BinarizationMethod::PointByPoint { block, .. } => Some(ThresholdPropagator::new(*block)),
        _ => None,
    }
}

/// Stream a run through one method into a finished reconstruction.
pub fn reconstruct_run(
    run: &MeasurementRun,
    method: &BinarizationMethod,
    levels: u32,
    compensated: bool,
) -> Result<Reconstruction> {
    let mut acc = if compensated {
        Accumulator::new_compensated(run.dim())
    } else {
        Accumulator::new(run.dim())
    };
    let prop = propagator_for(method);
    for pair in run.pairs()? {
        let (frame, bucket) = pair?;
        match process_frame(&frame, method, prop.as_ref(), levels)? {
            None => acc.update(bucket.value, &frame)?,
            Some(bits) => acc.update(bucket.value, &bits)?,
        }
    }
    let mut rec = acc.finalize()?;
    rec.method = Some(method.tag().to_string());
    Ok(rec)
}

struct Pipeline {
    method: BinarizationMethod,
    prop: Option<ThresholdPropagator>,
    acc: Accumulator,
    fill_sum: f64,
    first: Option<ProcessedFrame>,
    wall: Duration,
}

/// Run the comparison protocol for every configured seed. Writes per-method
/// reconstruction PGMs, the ground-truth mask, `metrics.csv`, and optionally
/// one stack file per seed, all into `out_dir`. Returns one report per
/// (seed, method), seeds outermost, methods in configured order.
pub fn run_compare(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<MetricsReport>> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let object = cfg.object.build(cfg.rows, cfg.cols)?;
    objects::save_object(&object, &out_dir.join("object.pgm"))?;

    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        reports.extend(run_compare_seed(cfg, seed, &object, out_dir)?);
    }
    write_reports_csv(&out_dir.join("metrics.csv"), &reports)?;
    Ok(reports)
}

fn run_compare_seed(
    cfg: &ExperimentConfig,
    seed: u64,
    object: &ObjectMask,
    out_dir: &Path,
) -> Result<Vec<MetricsReport>> {
    let params = cfg.speckle_params(seed)?;
    let run = generate_run_with_noise(&params, object.clone(), cfg.count, cfg.noise_sigma)?;

    let mut pipes: Vec<Pipeline> = cfg
        .methods
        .iter()
        .map(|m| Pipeline {
            method: *m,
            prop: propagator_for(m),
            acc: if cfg.compensated {
                Accumulator::new_compensated((cfg.rows, cfg.cols))
            } else {
                Accumulator::new((cfg.rows, cfg.cols))
            },
            fill_sum: 0.0,
            first: None,
            wall: Duration::ZERO,
        })
        .collect();

    let mut stack_writer = if cfg.emit_stack {
        Some(StackWriter::create(
            &out_dir.join(format!("stack_seed{seed}.gifs")),
            cfg.rows,
            cfg.cols,
            cfg.count,
        )?)
    } else {
        None
    };

    for pair in run.pairs()? {
        let (frame, bucket) = pair?;
        if let Some(w) = stack_writer.as_mut() {
            w.append(&frame, bucket.value)?;
        }
        for pipe in pipes.iter_mut() {
            let start = cfg.timing.then(Instant::now);
            match process_frame(&frame, &pipe.method, pipe.prop.as_ref(), cfg.levels)? {
                None => {
                    pipe.acc.update(bucket.value, &frame)?;
                    if pipe.first.is_none() {
                        pipe.first = Some(ProcessedFrame::Raw(frame.clone()));
                    }
                }
                Some(bits) => {
                    pipe.acc.update(bucket.value, &bits)?;
                    pipe.fill_sum += fill_fraction(&bits);
                    if pipe.first.is_none() {
                        pipe.first = Some(ProcessedFrame::Binary(bits));
                    }
                }
            }
            if let Some(start) = start {
                pipe.wall += start.elapsed();
            }
        }
    }
    if let Some(w) = stack_writer {
        w.finish()?;
    }

    let mut reports = Vec::with_capacity(pipes.len());
    for pipe in pipes {
        let tag = pipe.method.tag();
        let mut rec = pipe.acc.finalize()?;
        rec.method = Some(tag.to_string());
        // A constant mask (or a constant reconstruction) has no defined
        // correlation; score such degenerate cases 0 so the run still
        // completes with a full report.
        let score = match corr(rec.image.view(), object.transmission().view()) {
            Ok(c) => c,
            Err(Error::UndefinedVariance(_)) => 0.0,
            Err(e) => return Err(e),
        };
        let first = pipe.first.expect("count >= 2 guarantees a first frame");
        let fwhm = grain_fwhm(first.to_real().view()).ok();
        let fill = match pipe.method {
            BinarizationMethod::None => None,
            _ => Some(pipe.fill_sum / f64::from(cfg.count)),
        };
        pgm::write_pgm8(
            &out_dir.join(format!("recon_{tag}_seed{seed}.pgm")),
            &normalize_display(&rec),
        )?;
        reports.push(MetricsReport {
            method: tag.to_string(),
            seed,
            count: u64::from(cfg.count),
            corr: score,
            fill_fraction: fill,
            grain_fwhm_px: fwhm,
            wall_ms: cfg.timing.then_some(pipe.wall.as_millis() as u64),
        });
    }
    Ok(reports)
}

/// The two harmonic factors contrasted by the speckle-statistics report.
pub const STATS_ALPHA_LOW: f64 = 0.15;
pub const STATS_ALPHA_HIGH: f64 = 0.40;

/// One row of the speckle-statistics report (first frame of one seed).
#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleStatsRow {
    pub variant: String,
    pub seed: u64,
    pub fill_fraction: Option<f64>,
    pub grain_fwhm_px: f64,
}

/// For each seed, grain size and fill fraction of the first frame as seen by
/// each strategy: raw, mean, otsu, and point-by-point at the two contrasted
/// harmonic factors 0.15 and 0.40. Writes one PGM per (variant, seed) plus
/// `speckle_stats.csv` into `out_dir`.
pub fn speckle_stats(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<SpeckleStatsRow>> {
    cfg.validate()?;
    if cfg.block.k1() > cfg.rows || cfg.block.k2() > cfg.cols {
        return Err(Error::Dimension {
            expected: (cfg.block.k1(), cfg.block.k2()),
            got: (cfg.rows, cfg.cols),
        });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let prop = ThresholdPropagator::new(cfg.block);
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let frame = crate::speckle::generate_frame(&cfg.speckle_params(seed)?, 0)?;
        let mut emit = |variant: String, bits: Option<BinaryFrame>| -> Result<()> {
            let (fwhm, fill, image): (f64, Option<f64>, Array2<u8>) = match &bits {
                None => (
                    grain_fwhm(frame.intensity().view())?,
                    None,
                    min_max_u8(frame.intensity().view()),
                ),
                Some(b) => (
                    grain_fwhm(b.to_real().view())?,
                    Some(fill_fraction(b)),
                    b.bits.mapv(|x| x * 255),
                ),
            };
            pgm::write_pgm8(
                &out_dir.join(format!("speckle_{variant}_seed{seed}.pgm")),
                &image,
            )?;
            rows.push(SpeckleStatsRow {
                variant,
                seed,
                fill_fraction: fill,
                grain_fwhm_px: fwhm,
            });
            Ok(())
        };
        emit("none".into(), None)?;
        emit(
            "mean".into(),
            Some(binarize_scalar(&frame, mean_threshold(&frame))),
        )?;
        let q = quantize(&frame, cfg.levels)?;
        emit(
            "otsu".into(),
            Some(binarize_scalar(&frame, otsu_threshold(&q))),
        )?;
        for alpha in [STATS_ALPHA_LOW, STATS_ALPHA_HIGH] {
            emit(
                format!("point_by_point_a{alpha:.2}"),
                Some(binarize_point_by_point(&frame, &prop, alpha, cfg.levels)?),
            )?;
        }
    }
    write_stats_csv(&out_dir.join("speckle_stats.csv"), &rows)?;
    Ok(rows)
}

pub const CSV_HEADER: &str = "method,seed,count,corr,fill_fraction,grain_fwhm_px,wall_ms";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Fixed-schema metrics CSV; field order and formatting are part of the
/// output contract (byte-identical across runs of the same config).
pub fn write_reports_csv(path: &Path, reports: &[MetricsReport]) -> Result<()> {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for r in reports {
        text.push_str(&format!(
            "{},{},{},{:.6},{},{},{}\n",
            r.method,
            r.seed,
            r.count,
            r.corr,
            fmt_opt(r.fill_fraction),
            fmt_opt(r.grain_fwhm_px),
            r.wall_ms.map(|w| w.to_string()).unwrap_or_default(),
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Speckle statistics use the same schema; corr and wall_ms stay empty and
/// count is the single analyzed frame.
fn write_stats_csv(path: &Path, rows: &[SpeckleStatsRow]) -> Result<()> {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&format!(
            "{},{},1,,{},{:.6},\n",
            r.variant,
            r.seed,
            fmt_opt(r.fill_fraction),
            r.grain_fwhm_px,
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
