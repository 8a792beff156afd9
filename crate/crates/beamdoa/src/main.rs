//! Command-line front end; all logic lives in the library.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use beamdoa::cli::{cmd_eval, cmd_scan, cmd_table, cmd_train, exit_code};
use beamdoa::config::RunConfig;
use beamdoa::Result;

#[derive(Parser)]
#[command(
    name = "beamdoa",
    version,
    about = "DOA estimation from beam-switched power profiles: simulate, train, compare"
)]
struct Cli {
    /// key=value config file; omitted keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scan-beam count B override (train/eval).
    #[arg(long, global = true)]
    beams: Option<usize>,
    /// Comma-separated peak SNR list in dB (e.g. "0,5,10,15"; "inf" allowed).
    #[arg(long, global = true)]
    snr: Option<String>,
    /// Trials per (B, SNR) cell override.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on worker threads for parallel sections.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the calibration scan and write <out>/scan.csv.
    Scan,
    /// Train the MLP from a scan file; writes <out>/model.txt and loss.csv.
    Train {
        /// Scan CSV to train from (default <out>/scan.csv).
        #[arg(long)]
        scan: Option<PathBuf>,
    },
    /// Evaluate correlation vs MLP at the configured B; writes <out>/eval.csv.
    Eval {
        /// Model file to evaluate (default <out>/model.txt).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Full pipeline: scan, train per b_list entry, write <out>/table.csv.
    Table,
}

fn run(cli: Cli) -> Result<()> {
    let (mut cfg, unknown) = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => (RunConfig::default(), Vec::new()),
    };
    for key in &unknown {
        eprintln!("warning: unknown config key `{key}`");
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(beams) = cli.beams {
        cfg.beams = beams;
    }
    if let Some(snr) = &cli.snr {
        cfg.apply("snr_list", snr, &mut Vec::new())?;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    if cfg.jobs > 0 {
        // Ignore the error if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global();
    }

    match cli.command {
        Command::Scan => {
            cmd_scan(&cfg)?;
        }
        Command::Train { scan } => {
            let scan_path = scan.unwrap_or_else(|| cfg.out_dir.join("scan.csv"));
            cmd_train(&cfg, &scan_path)?;
        }
        Command::Eval { model } => {
            let model_path = model.unwrap_or_else(|| cfg.out_dir.join("model.txt"));
            cmd_eval(&cfg, &model_path)?;
        }
        Command::Table => {
            cmd_table(&cfg)?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
