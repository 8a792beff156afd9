//! Iterative training on freshly augmented scans, plus the evaluation
//! harness producing error-vs-beams-vs-SNR comparisons between the
//! correlation baseline and the MLP.
//!
//! Each training iteration augments the calibration scan anew, slices every
//! row down to the scan-beam count under test, peak-normalizes the rows, and
//! fits the network to normalized angles. Evaluation draws random source
//! angles, synthesizes beam-switched captures at a configured peak SNR, and
//! reports mean absolute estimation error per (beam count, SNR, method)
//! cell.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::array::{slice_beambook, slice_indices, ArrayGeometry, Beambook};
use crate::augment::{augment_scan, AugmentationConfig};
use crate::correlation::{build_grid, CandidateGrid};
use crate::error::{Error, Result};
use crate::mlp::{
    adam_step, batch_loss_and_grads, lr_schedule, MlpModel, OptimizerState, TrainHyper,
    TARGET_SCALE_DEG,
};
use crate::seeding::derive_seed;
use crate::signal::{capture_profile, minmax_normalize, ChannelParams, PowerProfile, ScanDataset};

/// QAM order used for synthesized test captures. Constant-modulus symbols
/// keep noiseless segment powers exactly proportional to `|g|^2`.
pub const TEST_QAM_ORDER: u32 = 4;

// Seed streams, combined with the master seed via `derive_seed`.
const STREAM_MODEL_INIT: u64 = 0;
const STREAM_BATCH: u64 = 1;
const STREAM_DROPOUT: u64 = 2;
const STREAM_TRAIN: u64 = 0xA11;
const STREAM_TEST: u64 = 0x7E57;

/// One training iteration's learning rate and objective value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub lr: f64,
    pub loss: f64,
}

/// Summary of a completed training run.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub b: usize,
    pub seed: u64,
    pub hyper: TrainHyper,
    pub aug_cfg: AugmentationConfig,
    pub history: Vec<IterRecord>,
}

impl TrainRun {
    /// Loss history as CSV with header `iter,lr,loss`.
    pub fn write_loss_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,lr,loss")?;
        for (i, rec) in self.history.iter().enumerate() {
            writeln!(w, "{},{},{}", i, rec.lr, rec.loss)?;
        }
        Ok(())
    }

    /// Mean loss over the trailing `window` iterations.
    pub fn smoothed_loss(&self, window: usize) -> Option<f64> {
        if self.history.is_empty() {
            return None;
        }
        let w = window.min(self.history.len()).max(1);
        let tail = &self.history[self.history.len() - w..];
        Some(tail.iter().map(|r| r.loss).sum::<f64>() / w as f64)
    }
}

/// Augmented copies needed so a batch can be drawn without repeating rows
/// from the same copy.
pub fn copies_needed(batch_size: usize, num_alphas: usize) -> usize {
    batch_size.div_ceil(num_alphas)
}

/// Builds one training batch: `ceil(batch_size / num_alphas)` independently
/// augmented scan copies, rows sliced to `b` beams and min-max normalized,
/// shuffled, and truncated to `batch_size`. Targets are `alpha / 90`.
pub fn make_batch(
    scan: &ScanDataset,
    aug_cfg: &AugmentationConfig,
    b: usize,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    if batch_size == 0 {
        return Err(Error::invalid_argument("batch_size must be >= 1"));
    }
    let indices = slice_indices(scan.num_beams(), b)?;
    let n_alpha = scan.num_alphas();
    if n_alpha == 0 {
        return Err(Error::invalid_argument("scan has no alpha rows"));
    }

    let copies = copies_needed(batch_size, n_alpha);
    let mut pool: Vec<(Vec<f64>, f64)> = Vec::with_capacity(copies * n_alpha);
    for _ in 0..copies {
        let aug = augment_scan(scan, aug_cfg, rng)?;
        for (r, &alpha) in scan.alpha_grid_deg.iter().enumerate() {
            let row: Vec<f64> = indices.iter().map(|&c| aug.powers.get(r, c)).collect();
            pool.push((minmax_normalize(&row), alpha / TARGET_SCALE_DEG));
        }
    }
    pool.shuffle(rng);
    pool.truncate(batch_size);
    Ok(pool.into_iter().unzip())
}

/// Trains one model for scans sliced to `b` beams. Deterministic per seed;
/// a non-finite loss or gradient aborts with the failing iteration index.
pub fn train(
    scan: &ScanDataset,
    hyper: &TrainHyper,
    aug_cfg: &AugmentationConfig,
    b: usize,
    seed: u64,
) -> Result<(MlpModel, TrainRun)> {
    hyper.validate()?;
    aug_cfg.validate()?;
    slice_indices(scan.num_beams(), b)?;

    let mut model = MlpModel::init(
        b,
        hyper.hidden_dim,
        hyper.norm_placement,
        derive_seed(seed, STREAM_MODEL_INIT),
    )?;
    let mut run = TrainRun {
        b,
        seed,
        hyper: hyper.clone(),
        aug_cfg: aug_cfg.clone(),
        history: Vec::with_capacity(hyper.total_iters),
    };
    if hyper.total_iters == 0 {
        return Ok((model, run));
    }

    let mut batch_rng =
        <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(derive_seed(seed, STREAM_BATCH));
    let mut dropout_rng =
        <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(derive_seed(seed, STREAM_DROPOUT));
    let mut opt = OptimizerState::new(&model, hyper.adam_beta1, hyper.adam_beta2, hyper.adam_eps);

    for iter in 0..hyper.total_iters {
        let lr = lr_schedule(iter, hyper);
        let (inputs, targets) = make_batch(scan, aug_cfg, b, hyper.batch_size, &mut batch_rng)?;
        let (loss, grads) = batch_loss_and_grads(
            &model,
            &inputs,
            &targets,
            hyper.dropout_rate,
            hyper.l2_coeff,
            &mut dropout_rng,
        )?;
        if !loss.is_finite() {
            return Err(Error::NumericFault(format!(
                "non-finite loss at iteration {iter}"
            )));
        }
        adam_step(&mut model, &grads, &mut opt, lr).map_err(|e| match e {
            Error::NumericFault(msg) => {
                Error::NumericFault(format!("{msg} at iteration {iter}"))
            }
            other => other,
        })?;
        run.history.push(IterRecord { lr, loss });
    }
    Ok((model, run))
}

/// Anything that maps a power profile to an angle estimate in degrees.
pub trait DoaEstimator {
    fn estimate_deg(&self, profile: &PowerProfile) -> Result<f64>;
}

impl DoaEstimator for CandidateGrid {
    fn estimate_deg(&self, profile: &PowerProfile) -> Result<f64> {
        Ok(self.estimate(profile)?.alpha_hat_deg)
    }
}

/// MLP estimator wrapper: min-max normalizes the profile, runs the
/// eval-mode forward pass, denormalizes, and clamps to the scan range.
pub struct MlpEstimator<'a> {
    model: &'a MlpModel,
    scan_min_deg: f64,
    scan_max_deg: f64,
}

impl<'a> MlpEstimator<'a> {
    pub fn new(model: &'a MlpModel, geom: &ArrayGeometry) -> Self {
        MlpEstimator {
            model,
            scan_min_deg: geom.scan_min_deg,
            scan_max_deg: geom.scan_max_deg,
        }
    }
}

impl DoaEstimator for MlpEstimator<'_> {
    fn estimate_deg(&self, profile: &PowerProfile) -> Result<f64> {
        let x = profile.minmax_normalized();
        let pred = self.model.forward_eval(&x)?;
        Ok((pred * TARGET_SCALE_DEG).clamp(self.scan_min_deg, self.scan_max_deg))
    }
}

/// Labeled test captures at one (beam count, SNR) condition. Source angles
/// are uniform over the scan range; each capture spends `total_samples`
/// (rounded down to a multiple of the beam count) across the beams.
pub fn generate_test_set(
    book: &Beambook,
    snr_db: Option<f64>,
    trials: usize,
    geom: &ArrayGeometry,
    total_samples: usize,
    seed: u64,
) -> Result<Vec<PowerProfile>> {
    if trials < 1 {
        return Err(Error::invalid_argument("trials must be >= 1"));
    }
    let b = book.len();
    let samples = (total_samples / b) * b;
    if samples == 0 {
        return Err(Error::invalid_argument(format!(
            "total_samples {total_samples} too small for {b} beams"
        )));
    }
    (0..trials)
        .map(|trial| {
            let t_seed = derive_seed(seed, trial as u64);
            let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(t_seed);
            let alpha = rng.random_range(geom.scan_min_deg..=geom.scan_max_deg);
            let ch = ChannelParams::unit(snr_db).with_random_phase(&mut rng);
            capture_profile(
                alpha,
                book,
                &ch,
                geom,
                samples,
                TEST_QAM_ORDER,
                derive_seed(t_seed, 1),
            )
        })
        .collect()
}

/// Result of evaluating one estimator over a test set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOutcome {
    pub mean_abs_error_deg: f64,
    /// Trials that produced an estimate.
    pub trials_used: usize,
    /// Trials excluded because the estimator returned an error.
    pub failures: usize,
}

/// Mean `|alpha - alpha_hat|` over the test set. Estimator failures are
/// excluded from the mean and counted.
pub fn evaluate(estimator: &dyn DoaEstimator, test_set: &[PowerProfile]) -> Result<EvalOutcome> {
    if test_set.is_empty() {
        return Err(Error::invalid_argument("test set must be non-empty"));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut failures = 0usize;
    for profile in test_set {
        let label = profile.label_alpha_deg().ok_or_else(|| {
            Error::invalid_argument("test profile missing its true-angle label")
        })?;
        match estimator.estimate_deg(profile) {
            Ok(alpha_hat) => {
                sum += (label - alpha_hat).abs();
                used += 1;
            }
            Err(_) => failures += 1,
        }
    }
    if used == 0 {
        return Err(Error::DegenerateInput(format!(
            "estimator failed on all {failures} trials"
        )));
    }
    Ok(EvalOutcome {
        mean_abs_error_deg: sum / used as f64,
        trials_used: used,
        failures,
    })
}

/// Estimation method identifiers used in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Corr,
    Mlp,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Corr => "corr",
            Method::Mlp => "mlp",
        }
    }
}

/// One (beam count, SNR, method) cell of the comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub b: usize,
    pub snr_db: f64,
    pub method: Method,
    pub mean_abs_error_deg: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Comparison table across beam counts, SNRs, and methods.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "b,snr_db,method,mean_abs_error_deg,trials,seed")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.b,
                r.snr_db,
                r.method.as_str(),
                r.mean_abs_error_deg,
                r.trials,
                r.seed
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|_| Error::Parse("report is not utf-8".into()))
    }

    pub fn cell(&self, b: usize, snr_db: f64, method: Method) -> Option<&EvalRecord> {
        self.records
            .iter()
            .find(|r| r.b == b && r.snr_db == snr_db && r.method == method)
    }
}

/// Everything `compare` needs besides the scan itself.
#[derive(Debug, Clone)]
pub struct CompareParams {
    pub b_list: Vec<usize>,
    pub snr_list_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub hyper: TrainHyper,
    pub aug_cfg: AugmentationConfig,
    pub candidate_step_deg: f64,
    pub test_samples: usize,
}

/// Seed for the model trained at beam count `b`.
pub fn train_seed(master: u64, b: usize) -> u64 {
    derive_seed(derive_seed(master, STREAM_TRAIN), b as u64)
}

/// Seed for the shared test set of one (beam count, SNR) cell.
pub fn test_seed(master: u64, b: usize, snr_db: f64) -> u64 {
    derive_seed(
        derive_seed(derive_seed(master, STREAM_TEST), b as u64),
        snr_db.to_bits(),
    )
}

/// Trains one model per beam count (in parallel), then evaluates the
/// correlation baseline and the MLP on shared test sets for every
/// (beam count, SNR) cell.
pub fn compare(scan: &ScanDataset, params: &CompareParams) -> Result<EvalReport> {
    let trained = compare_train_models(scan, params)?;
    compare_evaluate(scan, params, &trained)
}

/// The training half of [`compare`], exposed so callers can persist the
/// per-beam-count models and loss histories.
pub fn compare_train_models(
    scan: &ScanDataset,
    params: &CompareParams,
) -> Result<Vec<(usize, MlpModel, TrainRun)>> {
    if params.b_list.is_empty() || params.snr_list_db.is_empty() {
        return Err(Error::invalid_argument(
            "b_list and snr_list must be non-empty",
        ));
    }
    params
        .b_list
        .par_iter()
        .map(|&b| {
            let (model, run) = train(
                scan,
                &params.hyper,
                &params.aug_cfg,
                b,
                train_seed(params.seed, b),
            )?;
            Ok((b, model, run))
        })
        .collect()
}

/// The evaluation half of [`compare`].
pub fn compare_evaluate(
    scan: &ScanDataset,
    params: &CompareParams,
    trained: &[(usize, MlpModel, TrainRun)],
) -> Result<EvalReport> {
    let full_book = scan.full_book()?;
    let mut records = Vec::new();
    for (b, model, _) in trained {
        records.extend(evaluate_methods_for_b(
            model,
            &full_book,
            &scan.geom,
            *b,
            &params.snr_list_db,
            params.trials,
            params.seed,
            params.candidate_step_deg,
            params.test_samples,
        )?);
    }
    Ok(EvalReport { records })
}

/// Evaluates the correlation baseline and one trained model over shared
/// test sets for every SNR at beam count `b`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_methods_for_b(
    model: &MlpModel,
    full_book: &Beambook,
    geom: &ArrayGeometry,
    b: usize,
    snr_list_db: &[f64],
    trials: usize,
    master_seed: u64,
    candidate_step_deg: f64,
    test_samples: usize,
) -> Result<Vec<EvalRecord>> {
    let book = slice_beambook(full_book, b)?;
    let grid = build_grid(&book, geom, candidate_step_deg)?;
    let mlp_est = MlpEstimator::new(model, geom);
    let mut records = Vec::new();
    for &snr_db in snr_list_db {
        let cell_seed = test_seed(master_seed, b, snr_db);
        let snr = if snr_db.is_infinite() { None } else { Some(snr_db) };
        let test_set =
            generate_test_set(&book, snr, trials, geom, test_samples, cell_seed)?;
        for (method, est) in [
            (Method::Corr, &grid as &dyn DoaEstimator),
            (Method::Mlp, &mlp_est as &dyn DoaEstimator),
        ] {
            let outcome = evaluate(est, &test_set)?;
            records.push(EvalRecord {
                b,
                snr_db,
                method,
                mean_abs_error_deg: outcome.mean_abs_error_deg,
                trials: outcome.trials_used,
                seed: cell_seed,
            });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{make_beambook, theoretical_profile};
    use crate::signal::calibration_scan;
    use rand::SeedableRng;

    fn quick_scan() -> ScanDataset {
        let geom = ArrayGeometry::default();
        let ch = ChannelParams::unit(Some(40.0));
        calibration_scan(&geom, &ch, 1.0, 16, 64, 4, 42).unwrap()
    }

    fn quick_hyper() -> TrainHyper {
        TrainHyper {
            batch_size: 64,
            total_iters: 40,
            hidden_dim: 32,
            ..TrainHyper::default()
        }
    }

    #[test]
    fn copies_arithmetic() {
        assert_eq!(copies_needed(256, 91), 3);
        assert_eq!(copies_needed(91, 91), 1);
        assert_eq!(copies_needed(92, 91), 2);
    }

    #[test]
    fn batch_rows_normalized_to_unit_interval() {
        let scan = quick_scan();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (inputs, targets) =
            make_batch(&scan, &AugmentationConfig::default(), 8, 64, &mut rng).unwrap();
        assert_eq!(inputs.len(), 64);
        assert_eq!(targets.len(), 64);
        for row in &inputs {
            assert_eq!(row.len(), 8);
            let max = row.iter().copied().fold(0.0, f64::max);
            let min = row.iter().copied().fold(1.0, f64::min);
            assert!((max - 1.0).abs() < 1e-12);
            assert!(min.abs() < 1e-12);
        }
        for &t in &targets {
            assert!((-0.5..=0.5).contains(&t));
        }
    }

    #[test]
    fn batch_without_augmentation_matches_base_rows() {
        let scan = quick_scan();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (inputs, targets) =
            make_batch(&scan, &AugmentationConfig::disabled(), 8, 91, &mut rng).unwrap();
        let indices = slice_indices(64, 8).unwrap();
        for (row, &t) in inputs.iter().zip(&targets) {
            let alpha = t * TARGET_SCALE_DEG;
            let r = scan
                .alpha_grid_deg
                .iter()
                .position(|&a| (a - alpha).abs() < 1e-9)
                .expect("target corresponds to a scan row");
            let raw: Vec<f64> = indices.iter().map(|&c| scan.powers.get(r, c)).collect();
            let expected = minmax_normalize(&raw);
            for (a, b) in row.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn train_deterministic_and_finite() {
        let scan = quick_scan();
        let hyper = quick_hyper();
        let cfg = AugmentationConfig::default();
        let (m1, r1) = train(&scan, &hyper, &cfg, 8, 7).unwrap();
        let (m2, r2) = train(&scan, &hyper, &cfg, 8, 7).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1.history, r2.history);
        assert!(r1.history.iter().all(|r| r.loss.is_finite()));
        assert_eq!(r1.history.len(), 40);
    }

    #[test]
    fn train_zero_iters_returns_initialized_model() {
        let scan = quick_scan();
        let hyper = TrainHyper {
            total_iters: 0,
            ..quick_hyper()
        };
        let (model, run) = train(&scan, &hyper, &AugmentationConfig::default(), 8, 3).unwrap();
        let expected = MlpModel::init(
            8,
            hyper.hidden_dim,
            hyper.norm_placement,
            derive_seed(3, STREAM_MODEL_INIT),
        )
        .unwrap();
        assert_eq!(model, expected);
        assert!(run.history.is_empty());
    }

    #[test]
    fn training_reduces_loss_on_small_run() {
        let scan = quick_scan();
        let hyper = TrainHyper {
            batch_size: 128,
            total_iters: 300,
            hidden_dim: 48,
            ..TrainHyper::default()
        };
        let (_, run) = train(&scan, &hyper, &AugmentationConfig::default(), 8, 5).unwrap();
        let early: f64 = run.history[..50].iter().map(|r| r.loss).sum::<f64>() / 50.0;
        let late: f64 = run.history[250..].iter().map(|r| r.loss).sum::<f64>() / 50.0;
        assert!(
            late < early,
            "loss did not improve: early {early}, late {late}"
        );
    }

    #[test]
    fn loss_csv_format() {
        let run = TrainRun {
            b: 8,
            seed: 1,
            hyper: quick_hyper(),
            aug_cfg: AugmentationConfig::default(),
            history: vec![IterRecord { lr: 0.1, loss: 0.5 }],
        };
        let mut buf = Vec::new();
        run.write_loss_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iter,lr,loss\n0,0.1,0.5\n");
    }

    #[test]
    fn test_set_shape_and_labels() {
        let geom = ArrayGeometry::default();
        let book = make_beambook(8, &geom).unwrap();
        let set = generate_test_set(&book, Some(0.0), 20, &geom, 512, 9).unwrap();
        assert_eq!(set.len(), 20);
        for p in &set {
            let label = p.label_alpha_deg().unwrap();
            assert!((-45.0..=45.0).contains(&label));
            assert_eq!(p.len(), 8);
        }
        let again = generate_test_set(&book, Some(0.0), 20, &geom, 512, 9).unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn test_set_rounds_samples_down_for_odd_beam_counts() {
        let geom = ArrayGeometry::default();
        let book = make_beambook(3, &geom).unwrap();
        let set = generate_test_set(&book, None, 2, &geom, 512, 1).unwrap();
        assert_eq!(set[0].len(), 3);
    }

    #[test]
    fn noiseless_test_set_matches_theory() {
        let geom = ArrayGeometry::default();
        let book = make_beambook(8, &geom).unwrap();
        let set = generate_test_set(&book, None, 10, &geom, 512, 33).unwrap();
        for p in &set {
            let theory =
                theoretical_profile(p.label_alpha_deg().unwrap(), &book, &geom).unwrap();
            let pn = p.peak_normalized();
            let tn = theory.peak_normalized();
            for (a, b) in pn.iter().zip(&tn) {
                assert!((a - b).abs() <= 1e-9 * b.max(1e-12));
            }
        }
    }

    struct PerfectEstimator;
    impl DoaEstimator for PerfectEstimator {
        fn estimate_deg(&self, profile: &PowerProfile) -> Result<f64> {
            Ok(profile.label_alpha_deg().unwrap())
        }
    }

    struct BroadsideEstimator;
    impl DoaEstimator for BroadsideEstimator {
        fn estimate_deg(&self, _profile: &PowerProfile) -> Result<f64> {
            Ok(0.0)
        }
    }

    struct FlakyEstimator;
    impl DoaEstimator for FlakyEstimator {
        fn estimate_deg(&self, profile: &PowerProfile) -> Result<f64> {
            let label = profile.label_alpha_deg().unwrap();
            if label < 0.0 {
                Err(Error::DegenerateInput("synthetic failure".into()))
            } else {
                Ok(label)
            }
        }
    }

    fn labeled_profile(alpha: f64) -> PowerProfile {
        let geom = ArrayGeometry::default();
        let book = make_beambook(8, &geom).unwrap();
        theoretical_profile(alpha, &book, &geom).unwrap()
    }

    #[test]
    fn evaluate_perfect_estimator_is_zero() {
        let set = vec![labeled_profile(-30.0), labeled_profile(12.0)];
        let out = evaluate(&PerfectEstimator, &set).unwrap();
        assert_eq!(out.mean_abs_error_deg, 0.0);
        assert_eq!(out.trials_used, 2);
        assert_eq!(out.failures, 0);
    }

    #[test]
    fn evaluate_constant_estimator_on_extremes() {
        let set = vec![labeled_profile(-45.0), labeled_profile(45.0)];
        let out = evaluate(&BroadsideEstimator, &set).unwrap();
        assert_eq!(out.mean_abs_error_deg, 45.0);
    }

    #[test]
    fn evaluate_excludes_failed_trials() {
        let set = vec![
            labeled_profile(-30.0),
            labeled_profile(10.0),
            labeled_profile(20.0),
        ];
        let out = evaluate(&FlakyEstimator, &set).unwrap();
        assert_eq!(out.trials_used, 2);
        assert_eq!(out.failures, 1);
        assert_eq!(out.mean_abs_error_deg, 0.0);
    }

    #[test]
    fn correlation_noiseless_error_within_grid_step() {
        let geom = ArrayGeometry::default();
        let book = make_beambook(16, &geom).unwrap();
        let grid = build_grid(&book, &geom, 0.25).unwrap();
        let set = generate_test_set(&book, None, 20, &geom, 512, 17).unwrap();
        let out = evaluate(&grid, &set).unwrap();
        assert!(out.mean_abs_error_deg <= 0.25, "{}", out.mean_abs_error_deg);
    }

    #[test]
    fn compare_produces_full_grid_of_records() {
        let scan = quick_scan();
        let params = CompareParams {
            b_list: vec![4, 8],
            snr_list_db: vec![0.0, 15.0],
            trials: 5,
            seed: 77,
            hyper: quick_hyper(),
            aug_cfg: AugmentationConfig::default(),
            candidate_step_deg: 0.25,
            test_samples: 512,
        };
        let report = compare(&scan, &params).unwrap();
        assert_eq!(report.records.len(), 2 * 2 * 2);
        let csv = report.to_csv_string().unwrap();
        assert!(csv.starts_with("b,snr_db,method,mean_abs_error_deg,trials,seed\n"));
        assert_eq!(csv.lines().count(), 9);
        // Shared test sets: corr and mlp rows of a cell carry the same seed.
        let corr = report.cell(8, 0.0, Method::Corr).unwrap();
        let mlp = report.cell(8, 0.0, Method::Mlp).unwrap();
        assert_eq!(corr.seed, mlp.seed);
        // Determinism across invocations.
        let report2 = compare(&scan, &params).unwrap();
        assert_eq!(report, report2);
    }
}
