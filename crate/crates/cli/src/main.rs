//! `ghostsim` — pseudo-thermal ghost-imaging simulator.
//!
//! Subcommands: `compare` (four-strategy comparison with metrics),
//! `simulate` (store a measurement run as a frame-stack file),
//! `reconstruct` (rebuild an image from a stored stack), and
//! `speckle-stats` (grain/fill report for binarized speckle frames).

mod config;

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use config::{resolve_out, FileConfig, SceneArgs, Settings};
use ghostsim_core::binarization::BinarizationMethod;
use ghostsim_core::experiment::{reconstruct_run, run_compare, speckle_stats};
use ghostsim_core::metrics::corr;
use ghostsim_core::pgm;
use ghostsim_core::reconstruction::normalize_display;
use ghostsim_core::speckle::generate_run_with_noise;
use ghostsim_core::stack::{read_stack, write_stack};

#[derive(Parser)]
#[command(
    name = "ghostsim",
    version,
    about = "Ghost-imaging simulator comparing reference-frame binarization strategies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the four-strategy comparison; writes metrics.csv and per-method
    /// reconstructions
    Compare(CompareArgs),
    /// Generate one measurement run and store it as a frame-stack file
    Simulate(SimulateArgs),
    /// Reconstruct an image from a stored frame-stack file
    Reconstruct(ReconstructArgs),
    /// Grain-size and fill statistics of binarized speckle frames
    SpeckleStats(StatsArgs),
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scene: SceneArgs,

    /// Record per-method wall clock in the CSV (makes output bytes
    /// run-dependent)
    #[arg(long)]
    timing: bool,

    /// Also store each seed's run as a frame-stack file
    #[arg(long)]
    emit_stack: bool,

    /// Output directory [default: out]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    scene: SceneArgs,

    /// Output stack file [default: stack.gifs]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[command(flatten)]
    scene: SceneArgs,

    /// Frame-stack file to reconstruct from
    #[arg(long, value_name = "FILE")]
    stack: PathBuf,

    /// Binarization applied to the stored frames
    #[arg(long, value_name = "METHOD", default_value = "none")]
    method: MethodArg,

    /// Output image [default: recon.pgm]
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    scene: SceneArgs,

    /// Output directory [default: out]
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
enum MethodArg {
    None,
    Mean,
    Otsu,
    PointByPoint,
}

impl FromStr for MethodArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(MethodArg::None),
            "mean" => Ok(MethodArg::Mean),
            "otsu" => Ok(MethodArg::Otsu),
            "point_by_point" | "point-by-point" => Ok(MethodArg::PointByPoint),
            other => Err(format!(
                "unknown method `{other}` (expected none, mean, otsu, or point_by_point)"
            )),
        }
    }
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compare(args) => cmd_compare(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Reconstruct(args) => cmd_reconstruct(args),
        Command::SpeckleStats(args) => cmd_stats(args),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let file = FileConfig::from_option(args.scene.config.as_deref())?;
    let mut settings = Settings::build(&args.scene, &file)?;
    settings.timing |= args.timing;
    settings.emit_stack |= args.emit_stack;
    let out = resolve_out(args.out.as_deref(), &file, "out")?;

    let reports = run_compare(&settings.experiment()?, &out)?;

    println!(
        "{:<16} {:>6} {:>10} {:>14} {:>14}",
        "method", "seed", "corr", "fill_fraction", "grain_fwhm_px"
    );
    for r in &reports {
        println!(
            "{:<16} {:>6} {:>10.6} {:>14} {:>14}",
            r.method,
            r.seed,
            r.corr,
            fmt_opt(r.fill_fraction),
            fmt_opt(r.grain_fwhm_px)
        );
    }
    println!("wrote {}", out.join("metrics.csv").display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let file = FileConfig::from_option(args.scene.config.as_deref())?;
    let settings = Settings::build(&args.scene, &file)?;
    if settings.seeds.len() != 1 {
        bail!(
            "simulate writes a single stack; pass exactly one seed (got {})",
            settings.seeds.len()
        );
    }
    let cfg = settings.experiment()?;
    cfg.validate()?;
    let seed = settings.seeds[0];
    let object = cfg.object.build(cfg.rows, cfg.cols)?;
    let run = generate_run_with_noise(
        &cfg.speckle_params(seed)?,
        object,
        cfg.count,
        cfg.noise_sigma,
    )?;
    let out = resolve_out(args.out.as_deref(), &file, "stack.gifs")?;
    write_stack(&run, &out)?;
    println!(
        "wrote {} ({} frames of {}x{}, fingerprint {})",
        out.display(),
        run.count(),
        run.rows(),
        run.cols(),
        &run.fingerprint_hex()[..12]
    );
    Ok(())
}

fn cmd_reconstruct(args: ReconstructArgs) -> Result<()> {
    let file = FileConfig::from_option(args.scene.config.as_deref())?;
    let settings = Settings::build(&args.scene, &file)?;
    let run = read_stack(&args.stack)?;
    let method = match args.method {
        MethodArg::None => BinarizationMethod::None,
        MethodArg::Mean => BinarizationMethod::Mean,
        MethodArg::Otsu => BinarizationMethod::Otsu,
        MethodArg::PointByPoint => BinarizationMethod::PointByPoint {
            block: settings.block,
            alpha: settings.alpha,
        },
    };
    let rec = reconstruct_run(&run, &method, settings.levels, settings.compensated)?;
    let out = resolve_out(args.out.as_deref(), &file, "recon.pgm")?;
    pgm::write_pgm8(&out, &normalize_display(&rec))?;
    println!(
        "reconstructed {} frames of {} with method {}",
        run.count(),
        args.stack.display(),
        method.tag()
    );
    // Score against a ground truth only when the caller asked for one.
    if args.scene.object.is_some() || file.contains("object") {
        let mask = settings
            .object_spec(run.rows(), run.cols())?
            .build(run.rows(), run.cols())?;
        let score = corr(rec.image.view(), mask.transmission().view())?;
        println!("corr against {}: {score:.6}", mask.label());
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let file = FileConfig::from_option(args.scene.config.as_deref())?;
    let settings = Settings::build(&args.scene, &file)?;
    let out = resolve_out(args.out.as_deref(), &file, "out")?;
    let rows = speckle_stats(&settings.experiment()?, &out)?;
    println!(
        "{:<22} {:>6} {:>14} {:>14}",
        "variant", "seed", "fill_fraction", "grain_fwhm_px"
    );
    for r in &rows {
        println!(
            "{:<22} {:>6} {:>14} {:>14.6}",
            r.variant,
            r.seed,
            fmt_opt(r.fill_fraction),
            r.grain_fwhm_px
        );
    }
    println!("wrote {}", out.join("speckle_stats.csv").display());
    Ok(())
}
