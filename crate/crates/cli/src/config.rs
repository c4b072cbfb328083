//! Layered run configuration: built-in defaults, overridden by an optional
//! `key = value` file, overridden by command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use ghostsim_core::binarization::BlockSpec;
use ghostsim_core::experiment::{standard_methods, ExperimentConfig, ObjectSpec};
use ghostsim_core::objects::DoubleSlitSpec;

/// The built-in double slit in physical units; `pitch-mm` converts it to
/// pixels (0.05 mm/px gives 4 px slits 12 px apart).
pub const SLIT_WIDTH_MM: f64 = 0.2;
pub const SLIT_SEPARATION_MM: f64 = 0.6;
pub const DEFAULT_PITCH_MM: f64 = 0.05;

/// Keys accepted in a config file. Each mirrors the command-line flag of the
/// same name; flags win on conflict.
const KNOWN_KEYS: &[&str] = &[
    "size",
    "frames",
    "seed",
    "grain-sigma",
    "mean-intensity",
    "block",
    "alpha",
    "levels",
    "object",
    "pitch-mm",
    "slit-height",
    "noise-sigma",
    "timing",
    "emit-stack",
    "compensated",
    "out",
];

/// Grid size parsed from `ROWSxCOLS`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size(pub usize, pub usize);

impl FromStr for Size {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (r, c) = s
            .split_once('x')
            .ok_or_else(|| format!("expected ROWSxCOLS (e.g. 128x128), got `{s}`"))?;
        let rows = r
            .trim()
            .parse()
            .map_err(|_| format!("bad row count `{r}`"))?;
        let cols = c
            .trim()
            .parse()
            .map_err(|_| format!("bad column count `{c}`"))?;
        if rows == 0 || cols == 0 {
            return Err("grid dimensions must be positive".into());
        }
        Ok(Size(rows, cols))
    }
}

/// Threshold block size parsed from `K1xK2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block(pub BlockSpec);

impl FromStr for Block {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s
            .split_once('x')
            .ok_or_else(|| format!("expected K1xK2 (e.g. 16x16), got `{s}`"))?;
        let k1 = a
            .trim()
            .parse()
            .map_err(|_| format!("bad block rows `{a}`"))?;
        let k2 = b
            .trim()
            .parse()
            .map_err(|_| format!("bad block columns `{b}`"))?;
        BlockSpec::new(k1, k2).map(Block).map_err(|e| e.to_string())
    }
}

/// Comma-separated seed list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedList(pub Vec<u64>);

impl FromStr for SeedList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let seeds: Vec<u64> = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u64>()
                    .map_err(|_| format!("bad seed `{}`", t.trim()))
            })
            .collect::<std::result::Result<_, _>>()?;
        if seeds.is_empty() {
            return Err("seed list is empty".into());
        }
        Ok(SeedList(seeds))
    }
}

/// Object selector: a named built-in or an image path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ObjectArg {
    DoubleSlit,
    TestCard,
    Image(PathBuf),
}

impl FromStr for ObjectArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "" => Err("object must be `double-slit`, `test-card`, or an image path".into()),
            "double-slit" => Ok(ObjectArg::DoubleSlit),
            "test-card" => Ok(ObjectArg::TestCard),
            path => Ok(ObjectArg::Image(PathBuf::from(path))),
        }
    }
}

/// Scene flags shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct SceneArgs {
    /// Defaults file with one `key = value` per line (# starts a comment);
    /// flags given here override it
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Grid size as ROWSxCOLS
    #[arg(long, value_name = "RxC")]
    pub size: Option<Size>,

    /// Frames per run
    #[arg(long, value_name = "N")]
    pub frames: Option<u32>,

    /// Comma-separated seeds; one run per seed
    #[arg(long, value_name = "LIST")]
    pub seed: Option<SeedList>,

    /// Speckle grain parameter: Gaussian blur sigma in pixels (0 = white)
    #[arg(long, value_name = "SIGMA")]
    pub grain_sigma: Option<f64>,

    /// Mean intensity of generated frames
    #[arg(long, value_name = "I")]
    pub mean_intensity: Option<f64>,

    /// Point-by-point threshold block size as K1xK2
    #[arg(long, value_name = "K1xK2")]
    pub block: Option<Block>,

    /// Harmonic factor blending local and global thresholds, in [0, 1]
    #[arg(long, value_name = "ALPHA")]
    pub alpha: Option<f64>,

    /// Quantization levels used by histogram thresholds
    #[arg(long, value_name = "L")]
    pub levels: Option<u32>,

    /// Object in the test arm: `double-slit`, `test-card`, or an image path
    #[arg(long, value_name = "KIND|PATH")]
    pub object: Option<ObjectArg>,

    /// Pixel pitch in mm; converts the built-in slit dimensions to pixels
    #[arg(long, value_name = "MM")]
    pub pitch_mm: Option<f64>,

    /// Slit height in pixels (default: half the grid)
    #[arg(long, value_name = "PX")]
    pub slit_height: Option<usize>,

    /// Standard deviation of additive Gaussian noise on bucket values
    #[arg(long, value_name = "SIGMA")]
    pub noise_sigma: Option<f64>,

    /// Use compensated (Kahan) summation in the accumulators
    #[arg(long)]
    pub compensated: bool,
}

/// A parsed config file (possibly empty when none was given).
#[derive(Debug, Default)]
pub struct FileConfig {
    path: PathBuf,
    entries: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn from_option(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => Self::load(p),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let Some((key, value)) = line.split_once('=') else {
                bail!(
                    "{}:{lineno}: expected `key = value`, got `{}`",
                    path.display(),
                    line
                );
            };
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                bail!("{}:{lineno}: unknown config key `{key}`", path.display());
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                bail!("{}:{lineno}: duplicate config key `{key}`", path.display());
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Typed lookup; `Ok(None)` when the key is absent.
    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|e| {
                anyhow!(
                    "{}: key `{key}` has invalid value `{raw}`: {e}",
                    self.path.display()
                )
            }),
        }
    }

    pub fn get_bool(&self, key: &str) -> Result<bool> {
        Ok(self.get::<bool>(key)?.unwrap_or(false))
    }
}

/// Fully resolved scene settings (defaults < file < flags).
#[derive(Debug, Clone)]
pub struct Settings {
    pub rows: usize,
    pub cols: usize,
    pub frames: u32,
    pub seeds: Vec<u64>,
    pub grain_sigma: f64,
    pub mean_intensity: f64,
    pub block: BlockSpec,
    pub alpha: f64,
    pub levels: u32,
    pub object: ObjectArg,
    pub pitch_mm: f64,
    pub slit_height: Option<usize>,
    pub noise_sigma: f64,
    pub compensated: bool,
    pub timing: bool,
    pub emit_stack: bool,
}

fn layer<T: FromStr + Clone>(cli: &Option<T>, file: &FileConfig, key: &str, default: T) -> Result<T>
where
    T::Err: Display,
{
    if let Some(v) = cli {
        return Ok(v.clone());
    }
    Ok(file.get::<T>(key)?.unwrap_or(default))
}

impl Settings {
    pub fn build(scene: &SceneArgs, file: &FileConfig) -> Result<Self> {
        let Size(rows, cols) = layer(&scene.size, file, "size", Size(128, 128))?;
        let slit_height = match scene.slit_height {
            Some(h) => Some(h),
            None => file.get::<usize>("slit-height")?,
        };
        Ok(Settings {
            rows,
            cols,
            frames: layer(&scene.frames, file, "frames", 10_000)?,
            seeds: layer(&scene.seed, file, "seed", SeedList(vec![0]))?.0,
            grain_sigma: layer(&scene.grain_sigma, file, "grain-sigma", 1.5)?,
            mean_intensity: layer(&scene.mean_intensity, file, "mean-intensity", 1.0)?,
            block: layer(
                &scene.block,
                file,
                "block",
                Block(BlockSpec::new(16, 16).expect("16x16 is a valid block")),
            )?
            .0,
            alpha: layer(&scene.alpha, file, "alpha", 0.15)?,
            levels: layer(&scene.levels, file, "levels", 256)?,
            object: layer(&scene.object, file, "object", ObjectArg::DoubleSlit)?,
            pitch_mm: layer(&scene.pitch_mm, file, "pitch-mm", DEFAULT_PITCH_MM)?,
            slit_height,
            noise_sigma: layer(&scene.noise_sigma, file, "noise-sigma", 0.0)?,
            compensated: scene.compensated || file.get_bool("compensated")?,
            timing: file.get_bool("timing")?,
            emit_stack: file.get_bool("emit-stack")?,
        })
    }

    /// Resolve the object selector against a concrete grid.
    pub fn object_spec(&self, rows: usize, cols: usize) -> Result<ObjectSpec> {
        Ok(match &self.object {
            ObjectArg::DoubleSlit => {
                let spec = DoubleSlitSpec::from_physical(
                    rows,
                    cols,
                    SLIT_WIDTH_MM,
                    SLIT_SEPARATION_MM,
                    self.pitch_mm,
                    self.slit_height.unwrap_or(rows / 2),
                )?;
                ObjectSpec::DoubleSlit {
                    slit_width_px: spec.slit_width_px,
                    separation_px: spec.separation_px,
                    slit_height_px: Some(spec.slit_height_px),
                }
            }
            ObjectArg::TestCard => ObjectSpec::TestCard,
            ObjectArg::Image(path) => ObjectSpec::Image(path.clone()),
        })
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            rows: self.rows,
            cols: self.cols,
            grain_sigma: self.grain_sigma,
            mean_intensity: self.mean_intensity,
            count: self.frames,
            seeds: self.seeds.clone(),
            object: self.object_spec(self.rows, self.cols)?,
            block: self.block,
            alpha: self.alpha,
            levels: self.levels,
            methods: standard_methods(self.block, self.alpha),
            noise_sigma: self.noise_sigma,
            timing: self.timing,
            emit_stack: self.emit_stack,
            compensated: self.compensated,
        })
    }
}

/// Output path precedence: flag, then the file's `out` key, then a
/// command-specific default.
pub fn resolve_out(cli: Option<&Path>, file: &FileConfig, default: &str) -> Result<PathBuf> {
    if let Some(p) = cli {
        return Ok(p.to_path_buf());
    }
    Ok(file
        .get::<PathBuf>("out")?
        .unwrap_or_else(|| PathBuf::from(default)))
}
