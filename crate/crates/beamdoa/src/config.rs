//! Flat `key=value` run configuration.
//!
//! Every knob of the pipeline lives here with a default, so an empty file is
//! a valid configuration. Unknown keys are collected as warnings rather than
//! errors; bad values and violated invariants name the offending key.

use std::path::{Path, PathBuf};

use crate::array::ArrayGeometry;
use crate::augment::AugmentationConfig;
use crate::error::{Error, Result};
use crate::mlp::{NormPlacement, TrainHyper};
use crate::train::CompareParams;

/// Full pipeline configuration: geometry, scan acquisition, training,
/// augmentation, and evaluation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub num_elements: usize,
    pub spacing: f64,
    pub scan_min: f64,
    pub scan_max: f64,
    /// Beam count of the full calibration book.
    pub full_beams: usize,
    /// Scan-beam count used by `scan`-slicing commands (`train`, `eval`).
    pub beams: usize,
    /// Beam counts swept by `table`.
    pub b_list: Vec<usize>,
    /// Peak SNRs (dB) evaluated; `inf` means noiseless.
    pub snr_list: Vec<f64>,
    pub candidate_step: f64,
    pub alpha_step: f64,
    pub samples_per_beam: usize,
    pub scan_snr_db: f64,
    pub qam_order: u32,
    pub test_samples: usize,
    pub trials: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Worker cap for parallel sections; 0 leaves the default.
    pub jobs: usize,
    pub hyper: TrainHyper,
    pub aug: AugmentationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            num_elements: 16,
            spacing: 0.5,
            scan_min: -45.0,
            scan_max: 45.0,
            full_beams: 64,
            beams: 8,
            b_list: vec![3, 4, 6, 8, 12, 16],
            snr_list: vec![0.0, 5.0, 10.0, 15.0],
            candidate_step: 0.25,
            alpha_step: 1.0,
            samples_per_beam: 512,
            scan_snr_db: 40.0,
            qam_order: 4,
            test_samples: 512,
            trials: 20,
            seed: 7,
            out_dir: PathBuf::from("out"),
            jobs: 0,
            hyper: TrainHyper::default(),
            aug: AugmentationConfig::default(),
        }
    }
}

fn bad_key(key: &str, value: &str) -> Error {
    Error::Config(format!("bad value {value:?} for key `{key}`"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| bad_key(key, value))
}

fn parse_list_f64(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|tok| tok.trim().parse().map_err(|_| bad_key(key, value)))
        .collect()
}

fn parse_list_usize(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|tok| tok.trim().parse().map_err(|_| bad_key(key, value)))
        .collect()
}

impl RunConfig {
    /// Parses `key=value` text over the defaults. Returns the config plus
    /// the list of unknown keys encountered.
    pub fn parse_str(text: &str) -> Result<(RunConfig, Vec<String>)> {
        let mut cfg = RunConfig::default();
        let mut unknown = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {} is not key=value: {line:?}", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(key, value, &mut unknown)?;
        }
        Ok((cfg, unknown))
    }

    /// Applies one key=value pair; unknown keys are recorded, not fatal.
    pub fn apply(&mut self, key: &str, value: &str, unknown: &mut Vec<String>) -> Result<()> {
        match key {
            "num_elements" => self.num_elements = parse_num(key, value)?,
            "spacing" => self.spacing = parse_num(key, value)?,
            "scan_min" => self.scan_min = parse_num(key, value)?,
            "scan_max" => self.scan_max = parse_num(key, value)?,
            "full_beams" => self.full_beams = parse_num(key, value)?,
            "beams" => self.beams = parse_num(key, value)?,
            "b_list" => self.b_list = parse_list_usize(key, value)?,
            "snr_list" => self.snr_list = parse_list_f64(key, value)?,
            "candidate_step" => self.candidate_step = parse_num(key, value)?,
            "alpha_step" => self.alpha_step = parse_num(key, value)?,
            "samples_per_beam" => self.samples_per_beam = parse_num(key, value)?,
            "scan_snr_db" => self.scan_snr_db = parse_num(key, value)?,
            "qam_order" => self.qam_order = parse_num(key, value)?,
            "test_samples" => self.test_samples = parse_num(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            "jobs" => self.jobs = parse_num(key, value)?,
            "batch_size" => self.hyper.batch_size = parse_num(key, value)?,
            "total_iters" => self.hyper.total_iters = parse_num(key, value)?,
            "lr_start" => self.hyper.lr_start = parse_num(key, value)?,
            "lr_end" => self.hyper.lr_end = parse_num(key, value)?,
            "l2" => self.hyper.l2_coeff = parse_num(key, value)?,
            "dropout" => self.hyper.dropout_rate = parse_num(key, value)?,
            "adam_beta1" => self.hyper.adam_beta1 = parse_num(key, value)?,
            "adam_beta2" => self.hyper.adam_beta2 = parse_num(key, value)?,
            "adam_eps" => self.hyper.adam_eps = parse_num(key, value)?,
            "hidden_dim" => self.hyper.hidden_dim = parse_num(key, value)?,
            "norm" => {
                self.hyper.norm_placement =
                    NormPlacement::parse(value).map_err(|_| bad_key(key, value))?
            }
            "m_min" => self.aug.m_range.0 = parse_num(key, value)?,
            "m_max" => self.aug.m_range.1 = parse_num(key, value)?,
            "p_rel_min" => self.aug.p_rel_range.0 = parse_num(key, value)?,
            "p_rel_max" => self.aug.p_rel_range.1 = parse_num(key, value)?,
            "alpha_i_min" => self.aug.alpha_i_range.0 = parse_num(key, value)?,
            "alpha_i_max" => self.aug.alpha_i_range.1 = parse_num(key, value)?,
            "beta_i_min" => self.aug.beta_i_range.0 = parse_num(key, value)?,
            "beta_i_max" => self.aug.beta_i_range.1 = parse_num(key, value)?,
            "sigma_alpha_min" => self.aug.sigma_alpha_range.0 = parse_num(key, value)?,
            "sigma_alpha_max" => self.aug.sigma_alpha_range.1 = parse_num(key, value)?,
            "sigma_beta_min" => self.aug.sigma_beta_range.0 = parse_num(key, value)?,
            "sigma_beta_max" => self.aug.sigma_beta_range.1 = parse_num(key, value)?,
            "k_min" => self.aug.k_range.0 = parse_num(key, value)?,
            "k_max" => self.aug.k_range.1 = parse_num(key, value)?,
            "aug_snr_min" => self.aug.snr_range_db.0 = parse_num(key, value)?,
            "aug_snr_max" => self.aug.snr_range_db.1 = parse_num(key, value)?,
            other => unknown.push(other.to_string()),
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(RunConfig, Vec<String>)> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text)
    }

    /// Re-validates every invariant of the owning modules, naming the
    /// offending key.
    pub fn validate(&self) -> Result<()> {
        self.geometry()
            .map_err(|e| Error::Config(format!("{e} (keys num_elements/spacing/scan_min/scan_max)")))?;
        if self.full_beams < 2 {
            return Err(Error::Config("`full_beams` must be >= 2".into()));
        }
        let check_b = |b: usize, key: &str| -> Result<()> {
            if b < 2 || b > self.full_beams {
                return Err(Error::Config(format!(
                    "`{key}` value {b} outside [2, full_beams={}]",
                    self.full_beams
                )));
            }
            Ok(())
        };
        check_b(self.beams, "beams")?;
        if self.b_list.is_empty() {
            return Err(Error::Config("`b_list` must be non-empty".into()));
        }
        for &b in &self.b_list {
            check_b(b, "b_list")?;
        }
        if self.snr_list.is_empty() {
            return Err(Error::Config("`snr_list` must be non-empty".into()));
        }
        if !(self.candidate_step > 0.0) || self.candidate_step > self.scan_max - self.scan_min {
            return Err(Error::Config(
                "`candidate_step` must be > 0 and within the scan span".into(),
            ));
        }
        if !(self.alpha_step > 0.0) {
            return Err(Error::Config("`alpha_step` must be > 0".into()));
        }
        if self.samples_per_beam < 1 {
            return Err(Error::Config("`samples_per_beam` must be >= 1".into()));
        }
        if !matches!(self.qam_order, 4 | 16 | 64) {
            return Err(Error::Config("`qam_order` must be 4, 16, or 64".into()));
        }
        if self.test_samples < 1 {
            return Err(Error::Config("`test_samples` must be >= 1".into()));
        }
        if self.trials < 1 {
            return Err(Error::Config("`trials` must be >= 1".into()));
        }
        self.hyper.validate().map_err(|e| {
            Error::Config(format!(
                "{e} (keys batch_size/total_iters/lr_start/lr_end/l2/dropout/adam_*/hidden_dim)"
            ))
        })?;
        if !(0.0..1.0).contains(&self.hyper.dropout_rate) {
            return Err(Error::Config("`dropout` must be in [0, 1)".into()));
        }
        self.aug
            .validate()
            .map_err(|e| Error::Config(format!("{e} (augmentation keys)")))?;
        Ok(())
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(self.num_elements, self.spacing, self.scan_min, self.scan_max)
    }

    /// SNR option for the calibration scan; an infinite value means
    /// noiseless.
    pub fn scan_snr(&self) -> Option<f64> {
        if self.scan_snr_db.is_infinite() {
            None
        } else {
            Some(self.scan_snr_db)
        }
    }

    pub fn compare_params(&self) -> CompareParams {
        CompareParams {
            b_list: self.b_list.clone(),
            snr_list_db: self.snr_list.clone(),
            trials: self.trials,
            seed: self.seed,
            hyper: self.hyper.clone(),
            aug_cfg: self.aug.clone(),
            candidate_step_deg: self.candidate_step,
            test_samples: self.test_samples,
        }
    }
}
