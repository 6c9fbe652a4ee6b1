//! `pansharp`: synthetic data, training, sharpening, evaluation and gradient checks.

mod commands;
mod config;
mod failure;
mod ppm;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use pansharp_core::Variant;

use crate::config::{announce, resolve, Overrides, ProtocolChoice};
use crate::failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "pansharp", version, about = "Alignment-aware pan-sharpening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic PAN/MS pairs and a manifest.
    GenData(GenDataArgs),
    /// Train a model on a manifest.
    Train(TrainArgs),
    /// Sharpen one PAN/MS pair with a trained checkpoint.
    Sharpen(SharpenArgs),
    /// Evaluate a checkpoint on a manifest, or compare two rasters.
    Eval(EvalArgs),
    /// Run the finite-difference gradient suites.
    Gradcheck(GradcheckArgs),
    /// Convert a SIPR raster to an 8-bit PPM/PGM preview.
    ExportPpm(ExportArgs),
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// JSON file with values for this subcommand; flags take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(',').ok_or("expected H,W")?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(h)?, parse(w)?))
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    scenes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// MS scene size in pixels; PAN is four times larger.
    #[arg(long, value_name = "H,W", value_parser = parse_size)]
    ms_size: Option<(usize, usize)>,
    #[arg(long)]
    objects: Option<usize>,
    /// Largest total object shift per axis, in MS pixels.
    #[arg(long)]
    max_shift: Option<usize>,
    /// Largest global shift per axis, in MS pixels.
    #[arg(long)]
    max_global_shift: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_name = "MANIFEST")]
    data: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long, value_name = "CKPT")]
    out: Option<PathBuf>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    crop: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_name = "FILE")]
    log: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    checkpoint_every: Option<u64>,
    /// Continue from a checkpoint; its configuration is used unchanged.
    #[arg(long, value_name = "CKPT")]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SharpenArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    pan: Option<PathBuf>,
    #[arg(long)]
    ms: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    dump_aligned_ms: Option<PathBuf>,
    /// Most probable offset per MS pixel, as a two-band SIPR raster.
    #[arg(long, value_name = "FILE")]
    dump_pwopm_argmax: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long, value_name = "MANIFEST")]
    data: Option<PathBuf>,
    /// JSONL report path.
    #[arg(long, value_name = "REPORT")]
    out: Option<PathBuf>,
    /// CSV report path.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    #[arg(long, value_enum)]
    protocol: Option<ProtocolChoice>,
    #[arg(long, value_name = "FILE")]
    candidate: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    reference: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// One of tensor, fam, psm, losses, all.
    #[arg(long)]
    module: Option<String>,
    /// Repeat for several seeds.
    #[arg(long)]
    seed: Vec<u64>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::GenData(a) => {
            let mut o = Overrides::default();
            o.set("out", a.out)
                .set("scenes", a.scenes)
                .set("seed", a.seed)
                .set("scene.ms_height", a.ms_size.map(|s| s.0))
                .set("scene.ms_width", a.ms_size.map(|s| s.1))
                .set("scene.objects", a.objects)
                .set("scene.max_object_shift", a.max_shift)
                .set("scene.max_global_shift", a.max_global_shift);
            let mut run: config::GenDataRun = resolve(a.config.config.as_deref(), o)?;
            if a.max_global_shift.is_none() {
                run.scene.max_global_shift = run.scene.max_global_shift.min(run.scene.max_object_shift);
            }
            announce("gen-data", &run);
            commands::gen_data(&run)
        }
        Command::Train(a) => {
            let mut o = Overrides::default();
            o.set("data", a.data)
                .set("out", a.out)
                .set("log", a.log)
                .set("checkpoint_every", a.checkpoint_every)
                .set("resume", a.resume)
                .set("train.total_iters", a.iters)
                .set("train.model.variant", a.variant)
                .set("train.seed", a.seed)
                .set("train.lr", a.lr)
                .set("train.batch", a.batch)
                .set("train.crop", a.crop)
                .set("train.loss.alpha", a.alpha);
            let mut run: config::TrainRun = resolve(a.config.config.as_deref(), o)?;
            let trainer = commands::resume(&mut run)?;
            announce("train", &run);
            commands::train(&run, trainer)
        }
        Command::Sharpen(a) => {
            let mut o = Overrides::default();
            o.set("ckpt", a.ckpt)
                .set("pan", a.pan)
                .set("ms", a.ms)
                .set("out", a.out)
                .set("dump_aligned_ms", a.dump_aligned_ms)
                .set("dump_pwopm_argmax", a.dump_pwopm_argmax);
            let run: config::SharpenRun = resolve(a.config.config.as_deref(), o)?;
            announce("sharpen", &run);
            commands::sharpen(&run)
        }
        Command::Eval(a) => {
            let mut o = Overrides::default();
            o.set("ckpt", a.ckpt)
                .set("data", a.data)
                .set("out", a.out)
                .set("csv", a.csv)
                .set("protocol", a.protocol)
                .set("candidate", a.candidate)
                .set("reference", a.reference);
            let run: config::EvalRun = resolve(a.config.config.as_deref(), o)?;
            announce("eval", &run);
            commands::eval(&run)
        }
        Command::Gradcheck(a) => {
            let mut o = Overrides::default();
            o.set("module", a.module).set("seeds", (!a.seed.is_empty()).then_some(a.seed));
            let run: config::GradcheckRun = resolve(a.config.config.as_deref(), o)?;
            announce("gradcheck", &run);
            commands::gradcheck(&run)
        }
        Command::ExportPpm(a) => {
            let mut o = Overrides::default();
            o.set("input", a.input).set("out", a.out);
            let run: config::ExportRun = resolve(a.config.config.as_deref(), o)?;
            announce("export-ppm", &run);
            commands::export_ppm(&run)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code() as u8)
        }
    }
}
