//! `hmhe`: batch enhancement, SDIF sweeps, method comparison and fog synthesis.
//!
//! Exit status is 0 on success, 1 when some inputs failed, 2 on usage or
//! configuration errors.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hmhe::sdif::SweepRange;

use crate::commands::{CompareArgs, EnhanceArgs, Failure, PipelineFlags, SimulateArgs, SweepArgs};

#[derive(Parser)]
#[command(name = "hmhe", version, about = "Low-visibility image enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Pipeline config JSON, or a run manifest to repeat its settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight of the high-frequency term, in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Noise seed for the dithering step.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; all cores when unset.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance images with the full pipeline.
    Enhance {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Fixed kernel size; even sizes round up to the next odd one.
        #[arg(long)]
        kernel: Option<usize>,
        /// Skip the SSIM sweep (needs a fixed kernel).
        #[arg(long)]
        no_sweep: bool,
        /// Also write illumination, homogeneous part and sweep CSV.
        #[arg(long)]
        emit_intermediates: bool,
        /// Output directory.
        #[arg(long, short, default_value = ".")]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write the SSIM-versus-kernel curve and objective as CSV.
    Sweep {
        input: PathBuf,
        #[arg(long)]
        k_min: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long, short, default_value = "sweep.csv")]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score enhancement methods against a reference (IE, SSIM, FSIM, CORR).
    Compare {
        /// Reference image, or a directory holding one per input under the same name.
        #[arg(long, short)]
        reference: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Comma-separated: original, he, clahe, ssr, hmhe, external:<dir>.
        #[arg(long, value_delimiter = ',', default_value = "original,he,clahe,ssr,hmhe")]
        methods: Vec<String>,
        #[arg(long)]
        kernel: Option<usize>,
        #[arg(long, short, default_value = "compare.csv")]
        output: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Render clear/foggy pairs from a scene recipe.
    Simulate {
        recipe: PathBuf,
        #[arg(long, short, default_value = ".")]
        output: PathBuf,
        /// Replaces every scene's noise seed (scene i gets seed + i).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn flags(common: Common, kernel: Option<usize>, no_sweep: bool) -> PipelineFlags {
    PipelineFlags {
        config: common.config,
        alpha: common.alpha,
        kernel,
        no_sweep,
        seed: common.seed,
        jobs: common.jobs,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Enhance { inputs, kernel, no_sweep, emit_intermediates, output, common } => {
            commands::enhance(&EnhanceArgs { inputs, output, emit_intermediates, flags: flags(common, kernel, no_sweep) })
        }
        Command::Sweep { input, k_min, k_max, stride, output, common } => commands::sweep(&SweepArgs {
            input,
            range: SweepRange { k_min, k_max, stride },
            output,
            flags: flags(common, None, false),
        }),
        Command::Compare { reference, inputs, methods, kernel, output, common } => commands::compare(&CompareArgs {
            reference,
            inputs,
            methods,
            output,
            flags: flags(common, kernel, false),
        }),
        Command::Simulate { recipe, output, seed, jobs } => {
            commands::simulate(&SimulateArgs { recipe, output, seed, jobs })
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Partial(n) => eprintln!("{n} input(s) failed"),
            }
            ExitCode::from(failure.code() as u8)
        }
    }
}
