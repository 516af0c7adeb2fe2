//! `rawpipe` — scriptable front end for the RAW enhancement pipeline.
//!
//! Exit codes: 0 success, 2 parse/input errors, 3 configuration or
//! checkpoint mismatches, 4 numerical failures. Identical inputs and
//! seeds produce byte-identical output files.

mod commands;
mod scene;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rawpipe_core::{Error, ErrorClass};

#[derive(Parser)]
#[command(
    name = "rawpipe",
    version,
    about = "RGGB packing, learnable gamma enhancement, green-guided fusion, desk-scale training, and channel statistics"
)]
struct Cli {
    /// Root random seed override for data generation and training.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads. 1 (the default) is the fully serial,
    /// bit-reproducible mode; values above 1 parallelize independent
    /// ablation runs.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RangeArg {
    /// Values in [0, 1] (packed planes).
    Unit,
    /// Values in [0, 255] (enhanced images).
    Byte,
}

#[derive(Subcommand)]
enum Command {
    /// Pack a Bayer PGM + JSON sidecar into a normalized 4xHxW tensor.
    Pack {
        pgm: PathBuf,
        meta: PathBuf,
        out: PathBuf,
    },
    /// Invert a packed tensor back into a Bayer PGM + JSON sidecar.
    Unpack {
        input: PathBuf,
        pgm: PathBuf,
        meta: PathBuf,
        #[arg(long, default_value_t = 512)]
        black_level: u16,
        #[arg(long, default_value_t = 16383)]
        white_level: u16,
    },
    /// Run the gamma and fusion stages on a packed tensor (eval mode).
    Enhance {
        input: PathBuf,
        out: PathBuf,
        /// Checkpoint directory written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Expected guidance mode; rejected if the checkpoint differs.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Train gamma + fusion + task head end to end on a toy dataset.
    Train {
        config: PathBuf,
        /// Output directory for the checkpoint and report.json.
        #[arg(long)]
        out: PathBuf,
        /// Dataset manifest from `synth`; generated on the fly if absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Generated dataset size when --data is not given.
        #[arg(long, default_value_t = 200)]
        samples: usize,
        /// Sensor model JSON for generated data (built-in default otherwise).
        #[arg(long)]
        sensor: Option<PathBuf>,
    },
    /// Pooled per-channel SNR over one or more Bayer PGMs, as CSV.
    Snr {
        /// PGM paths; each sidecar is the same path with a .json extension.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Histogram of one tensor plane, as CSV.
    Hist {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        bins: usize,
        #[arg(long, value_enum, default_value_t = RangeArg::Unit)]
        range: RangeArg,
        /// Plane index; required for multi-plane tensors.
        #[arg(long)]
        channel: Option<usize>,
    },
    /// Verify analytic gradients against the finite-difference oracle.
    Gradcheck {
        /// One of: gge, ggle, gge+ggle, full.
        #[arg(long, default_value = "full")]
        pipeline: String,
        /// Central-difference step.
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
    },
    /// Train every (guidance mode, seed) combination and emit CSV.
    Ablate {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "None,R,B,RB,GG,RGGB")]
        modes: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long)]
        sensor: Option<PathBuf>,
    },
    /// Generate synthetic sensor captures from a scene spec.
    Synth {
        /// Sensor model JSON.
        model: PathBuf,
        /// Scene spec JSON: `{"kind":"toy","count":N}` or
        /// `{"kind":"flat","count":N,"width":W,"height":H,"rgb":[r,g,b]}`.
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        let code = match e.class() {
            ErrorClass::Parse => 2,
            ErrorClass::Config => 3,
            ErrorClass::Numerical => 4,
        };
        std::process::exit(code);
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Pack { pgm, meta, out } => commands::pack(&pgm, &meta, &out),
        Command::Unpack { input, pgm, meta, black_level, white_level } => {
            commands::unpack(&input, &pgm, &meta, black_level, white_level)
        }
        Command::Enhance { input, out, checkpoint, mode } => {
            commands::enhance(&input, &out, &checkpoint, mode.as_deref())
        }
        Command::Train { config, out, data, samples, sensor } => commands::train(
            &config,
            &out,
            data.as_deref(),
            samples,
            sensor.as_deref(),
            cli.seed,
        ),
        Command::Snr { inputs, out } => commands::snr(&inputs, &out),
        Command::Hist { input, out, bins, range, channel } => {
            commands::hist(&input, &out, bins, range, channel)
        }
        Command::Gradcheck { pipeline, step } => {
            commands::gradcheck(&pipeline, cli.seed.unwrap_or(0), step)
        }
        Command::Ablate { config, out, modes, seeds, samples, sensor } => {
            commands::ablate(&config, &out, &modes, &seeds, samples, sensor.as_deref(), cli.threads)
        }
        Command::Synth { model, scene, out } => commands::synth(&model, &scene, &out, cli.seed),
    }
}
