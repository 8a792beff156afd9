//! Subcommand implementations gluing scan generation, training, evaluation,
//! and report export to the filesystem.
//!
//! Exit-code contract for the binary: 0 on success, 2 for input/config
//! errors, 3 for numeric faults during training.

use std::path::{Path, PathBuf};

use crate::array::make_beambook;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::mlp::MlpModel;
use crate::seeding::derive_seed;
use crate::signal::{calibration_scan, ChannelParams, ScanDataset};
use crate::train::{
    compare_evaluate, compare_train_models, evaluate_methods_for_b, train, train_seed,
    EvalReport, Method,
};

const STREAM_SCAN: u64 = 0x5CA9;

/// Process exit code for an error: numeric faults map to 3, everything else
/// (config, parse, I/O, argument) to 2.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NumericFault(_) => 3,
        _ => 2,
    }
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    Ok(())
}

/// Synthesizes the calibration scan described by the config.
pub fn make_scan(cfg: &RunConfig) -> Result<ScanDataset> {
    let geom = cfg.geometry()?;
    let ch = ChannelParams::unit(cfg.scan_snr());
    calibration_scan(
        &geom,
        &ch,
        cfg.alpha_step,
        cfg.samples_per_beam,
        cfg.full_beams,
        cfg.qam_order,
        derive_seed(cfg.seed, STREAM_SCAN),
    )
}

fn snr_label(snr_db: f64) -> String {
    if snr_db.is_infinite() {
        "noiseless".to_string()
    } else {
        format!("{snr_db} dB")
    }
}

/// `scan`: writes the calibration scan to `<out>/scan.csv`.
pub fn cmd_scan(cfg: &RunConfig) -> Result<PathBuf> {
    ensure_out_dir(cfg)?;
    let scan = make_scan(cfg)?;
    let path = cfg.out_dir.join("scan.csv");
    scan.save(&path)?;
    println!(
        "scan: {} angles x {} beams at {} -> {}",
        scan.num_alphas(),
        scan.num_beams(),
        snr_label(cfg.scan_snr_db),
        path.display()
    );
    Ok(path)
}

/// `train`: fits one model at the configured beam count and writes
/// `<out>/model.txt` plus `<out>/loss.csv`.
pub fn cmd_train(cfg: &RunConfig, scan_path: &Path) -> Result<PathBuf> {
    let scan = ScanDataset::load(scan_path)?;
    let (model, run) = train(
        &scan,
        &cfg.hyper,
        &cfg.aug,
        cfg.beams,
        train_seed(cfg.seed, cfg.beams),
    )?;
    ensure_out_dir(cfg)?;
    let model_path = cfg.out_dir.join("model.txt");
    model.save(&model_path)?;
    let loss_path = cfg.out_dir.join("loss.csv");
    let file = std::fs::File::create(&loss_path)?;
    run.write_loss_csv(std::io::BufWriter::new(file))?;
    match run.smoothed_loss(100) {
        Some(loss) => println!(
            "train: B={} done after {} iterations, final smoothed loss {loss:.6}",
            cfg.beams,
            run.history.len()
        ),
        None => println!("train: B={} completed with no iterations", cfg.beams),
    }
    println!("wrote {} and {}", model_path.display(), loss_path.display());
    Ok(model_path)
}

/// `eval`: compares the correlation baseline against a trained model over
/// the configured SNR list and writes `<out>/eval.csv`.
pub fn cmd_eval(cfg: &RunConfig, model_path: &Path) -> Result<PathBuf> {
    let model = MlpModel::load(model_path)?;
    if model.input_dim != cfg.beams {
        return Err(Error::Config(format!(
            "model was trained for B={} but config requests beams={}",
            model.input_dim, cfg.beams
        )));
    }
    let geom = cfg.geometry()?;
    let full_book = make_beambook(cfg.full_beams, &geom)?;
    let records = evaluate_methods_for_b(
        &model,
        &full_book,
        &geom,
        cfg.beams,
        &cfg.snr_list,
        cfg.trials,
        cfg.seed,
        cfg.candidate_step,
        cfg.test_samples,
    )?;
    let report = EvalReport { records };
    ensure_out_dir(cfg)?;
    let path = cfg.out_dir.join("eval.csv");
    let file = std::fs::File::create(&path)?;
    report.write_csv(std::io::BufWriter::new(file))?;
    print_report(&report, &cfg.snr_list);
    println!("wrote {}", path.display());
    Ok(path)
}

/// `table`: the full pipeline in one shot. Generates and saves the scan,
/// trains one model per entry of `b_list` (saving each model and loss
/// history), evaluates both methods on shared test sets, and writes
/// `<out>/table.csv`.
pub fn cmd_table(cfg: &RunConfig) -> Result<PathBuf> {
    ensure_out_dir(cfg)?;
    let scan = make_scan(cfg)?;
    scan.save(&cfg.out_dir.join("scan.csv"))?;

    let params = cfg.compare_params();
    let trained = compare_train_models(&scan, &params)?;
    for (b, model, run) in &trained {
        model.save(&cfg.out_dir.join(format!("model_b{b}.txt")))?;
        let file = std::fs::File::create(cfg.out_dir.join(format!("loss_b{b}.csv")))?;
        run.write_loss_csv(std::io::BufWriter::new(file))?;
    }
    let report = compare_evaluate(&scan, &params, &trained)?;
    let path = cfg.out_dir.join("table.csv");
    let file = std::fs::File::create(&path)?;
    report.write_csv(std::io::BufWriter::new(file))?;
    print_report(&report, &cfg.snr_list);
    println!("wrote {}", path.display());
    Ok(path)
}

/// Prints mean absolute error per (B, SNR, method) as an aligned table.
fn print_report(report: &EvalReport, snr_list: &[f64]) {
    let mut bs: Vec<usize> = report.records.iter().map(|r| r.b).collect();
    bs.dedup();
    print!("{:>4}", "B");
    for &snr in snr_list {
        print!("  {:>9} {:>9}", format!("corr@{}", snr), format!("mlp@{}", snr));
    }
    println!();
    for b in bs {
        print!("{b:>4}");
        for &snr in snr_list {
            for method in [Method::Corr, Method::Mlp] {
                match report.cell(b, snr, method) {
                    Some(r) => print!("  {:>8.2}{}", r.mean_abs_error_deg, '\u{00b0}'),
                    None => print!("  {:>9}", "-"),
                }
            }
        }
        println!();
    }
}
