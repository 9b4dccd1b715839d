//! `erpdiff` — preprocess ERP recordings, train the conditional diffusion
//! model, sample condition-specific epochs, and evaluate them against
//! within-session and between-session baselines.

mod commands;
mod config;
mod recordings;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "erpdiff", version, about = "Conditional diffusion for ERP epochs")]
struct Cli {
    /// JSON run configuration; flags override file values, file values
    /// override defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter, downsample, epoch, and reject a recordings container.
    Preprocess {
        #[arg(long = "in", value_name = "DIR")]
        in_dir: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Passband as LO,HI in Hz.
        #[arg(long, value_name = "LO,HI")]
        band: Option<String>,
        /// Butterworth prototype order.
        #[arg(long, value_name = "N")]
        order: Option<usize>,
        #[arg(long = "fs-out", value_name = "HZ")]
        fs_out: Option<f64>,
        /// Epoch window length in seconds.
        #[arg(long = "epoch-len", value_name = "S")]
        epoch_len: Option<f64>,
        /// Peak-to-peak rejection threshold in µV.
        #[arg(long = "ptp-reject", value_name = "UV")]
        ptp_reject: Option<f64>,
    },
    /// Generate a seeded synthetic dataset container.
    Synth {
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Train the conditional score model on a dataset container.
    Train {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "N")]
        steps: Option<u64>,
        #[arg(long = "eval-every", value_name = "N")]
        eval_every: Option<u64>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
    },
    /// Sample epochs from a checkpoint, count-matched or explicit.
    Sample {
        #[arg(long, value_name = "FILE")]
        ckpt: PathBuf,
        /// Match per-condition counts of this real container.
        #[arg(long = "match", value_name = "DIR", conflicts_with_all = ["subject", "session", "class_label", "count"])]
        match_dir: Option<PathBuf>,
        #[arg(long, value_name = "N")]
        subject: Option<u32>,
        #[arg(long, value_name = "N")]
        session: Option<u32>,
        #[arg(long = "class", value_name = "target|nontarget")]
        class_label: Option<String>,
        #[arg(long, value_name = "N")]
        count: Option<usize>,
        /// Classifier-free guidance scale w.
        #[arg(long, value_name = "W")]
        guidance: Option<f64>,
        #[arg(long = "corrector-snr", value_name = "R")]
        corrector_snr: Option<f64>,
        /// Predictor discretization steps.
        #[arg(long, value_name = "N")]
        steps: Option<usize>,
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Evaluate generated epochs against real ones.
    Eval {
        #[arg(long, value_name = "DIR")]
        real: PathBuf,
        #[arg(long, value_name = "DIR")]
        gen: PathBuf,
        /// `all` or a comma-separated subset of aba,swd,fid,pad,pld,sdmd.
        #[arg(long, value_name = "all|LIST", default_value = "all")]
        metrics: String,
        /// Feature-extractor checkpoint (required for fid).
        #[arg(long, value_name = "CKPT")]
        fx: Option<PathBuf>,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Compute baseline references from real data only.
    Baseline {
        #[arg(long, value_name = "DIR")]
        real: PathBuf,
        /// Feature-extractor checkpoint; fid baselines are skipped without
        /// it. Pass `train:` + path to fit and save one first.
        #[arg(long, value_name = "CKPT")]
        fx: Option<String>,
        #[arg(long, value_name = "CSV")]
        out: PathBuf,
    },
    /// Render SVG plots from metric / baseline / evoked CSVs.
    Report {
        /// Comma-separated CSV inputs.
        #[arg(long = "in", value_name = "CSV[,CSV...]")]
        in_csv: String,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        /// Omit the timestamp comment so outputs are byte-reproducible.
        #[arg(long)]
        deterministic: bool,
    },
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("ERPDIFF_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    init_thread_pool();
    let cli = Cli::parse();
    let config = cli.config.as_deref();
    let result = match cli.command {
        Command::Preprocess {
            in_dir,
            out,
            band,
            order,
            fs_out,
            epoch_len,
            ptp_reject,
        } => commands::preprocess::run(
            config, &in_dir, &out, band, order, fs_out, epoch_len, ptp_reject,
        ),
        Command::Synth { spec, out } => commands::synth::run(&spec, &out),
        Command::Train {
            data,
            steps,
            eval_every,
            out,
            seed,
        } => commands::train::run(config, &data, steps, eval_every, &out, seed),
        Command::Sample {
            ckpt,
            match_dir,
            subject,
            session,
            class_label,
            count,
            guidance,
            corrector_snr,
            steps,
            seed,
            out,
        } => commands::sample::run(commands::sample::Args {
            config,
            ckpt: &ckpt,
            match_dir: match_dir.as_deref(),
            subject,
            session,
            class_label,
            count,
            guidance,
            corrector_snr,
            steps,
            seed,
            out: &out,
        }),
        Command::Eval {
            real,
            gen,
            metrics,
            fx,
            out,
        } => commands::eval::run(config, &real, &gen, &metrics, fx.as_deref(), &out),
        Command::Baseline { real, fx, out } => {
            commands::baseline::run(config, &real, fx.as_deref(), &out)
        }
        Command::Report {
            in_csv,
            out,
            deterministic,
        } => commands::report::run(&in_csv, &out, deterministic),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
