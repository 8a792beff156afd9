//! Training-data augmentation: spatially correlated NLOS peaks, Rician
//! mixing with the line-of-sight scan, and power-domain white noise.
//!
//! Multipath is injected directly in the power domain as a sum of 2D
//! Gaussian bumps over the (source angle, beam angle) grid; a bump seen by
//! one beam is also seen, attenuated, by its neighbors. The bump field is
//! blended with the LOS scan by a Rician factor K and the result gets
//! additive white Gaussian noise referenced to the matrix peak. Every draw
//! comes from the caller's generator, so augmented copies are reproducible.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::ScanDataset;

/// Ranges the augmentation draws from. Component powers are relative to the
/// peak LOS power of the scan being augmented.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationConfig {
    /// Number of NLOS components, inclusive.
    pub m_range: (usize, usize),
    /// Component power relative to the LOS peak.
    pub p_rel_range: (f64, f64),
    /// Component center in source angle, degrees.
    pub alpha_i_range: (f64, f64),
    /// Component center in beam angle, degrees.
    pub beta_i_range: (f64, f64),
    /// Spread along the source-angle axis, degrees.
    pub sigma_alpha_range: (f64, f64),
    /// Spread along the beam-angle axis, degrees.
    pub sigma_beta_range: (f64, f64),
    /// Linear Rician factor K.
    pub k_range: (f64, f64),
    /// Power-domain SNR drawn per augmented copy, dB.
    pub snr_range_db: (f64, f64),
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            m_range: (1, 8),
            p_rel_range: (0.05, 1.0),
            alpha_i_range: (-45.0, 45.0),
            beta_i_range: (-45.0, 45.0),
            sigma_alpha_range: (2.0, 10.0),
            sigma_beta_range: (2.0, 10.0),
            k_range: (1.0, 10.0),
            snr_range_db: (0.0, 20.0),
        }
    }
}

impl AugmentationConfig {
    /// Identity configuration: no NLOS components, LOS-only mixing, no noise.
    pub fn disabled() -> Self {
        AugmentationConfig {
            m_range: (0, 0),
            k_range: (f64::INFINITY, f64::INFINITY),
            snr_range_db: (f64::INFINITY, f64::INFINITY),
            ..AugmentationConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn ordered(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::invalid_argument(format!(
                    "{name} range [{lo}, {hi}] is not ordered"
                )));
            }
            Ok(())
        }
        if self.m_range.0 > self.m_range.1 {
            return Err(Error::invalid_argument("m range is not ordered"));
        }
        ordered("p_rel", self.p_rel_range)?;
        ordered("alpha_i", self.alpha_i_range)?;
        ordered("beta_i", self.beta_i_range)?;
        ordered("sigma_alpha", self.sigma_alpha_range)?;
        ordered("sigma_beta", self.sigma_beta_range)?;
        ordered("k", self.k_range)?;
        ordered("snr", self.snr_range_db)?;
        if !(self.sigma_alpha_range.0 > 0.0) || !(self.sigma_beta_range.0 > 0.0) {
            return Err(Error::invalid_argument("sigma ranges must be > 0"));
        }
        if !(self.k_range.0 >= 0.0) {
            return Err(Error::invalid_argument("k range must be >= 0"));
        }
        Ok(())
    }
}

/// One scattered multipath contribution: a 2D Gaussian bump in
/// (source angle, beam angle) space.
#[derive(Debug, Clone, PartialEq)]
pub struct NlosComponent {
    /// Peak power, in units of the LOS peak.
    pub power: f64,
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub sigma_alpha: f64,
    pub sigma_beta: f64,
}

/// Draws the component set for one augmented copy.
pub fn draw_nlos_components(
    cfg: &AugmentationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<NlosComponent>> {
    cfg.validate()?;
    let m = uniform_usize(rng, cfg.m_range.0, cfg.m_range.1);
    let mut components = Vec::with_capacity(m);
    for _ in 0..m {
        components.push(NlosComponent {
            power: uniform_f64(rng, cfg.p_rel_range.0, cfg.p_rel_range.1),
            alpha_deg: uniform_f64(rng, cfg.alpha_i_range.0, cfg.alpha_i_range.1),
            beta_deg: uniform_f64(rng, cfg.beta_i_range.0, cfg.beta_i_range.1),
            sigma_alpha: uniform_f64(rng, cfg.sigma_alpha_range.0, cfg.sigma_alpha_range.1),
            sigma_beta: uniform_f64(rng, cfg.sigma_beta_range.0, cfg.sigma_beta_range.1),
        });
    }
    Ok(components)
}

/// Evaluates a component set on the (alpha, beta) grid. The Gaussian is
/// separable, so per-axis factors are precomputed per component.
pub fn evaluate_nlos(
    components: &[NlosComponent],
    alpha_grid_deg: &[f64],
    beam_angles_deg: &[f64],
) -> Result<Matrix> {
    if alpha_grid_deg.is_empty() || beam_angles_deg.is_empty() {
        return Err(Error::invalid_argument("nlos grids must be non-empty"));
    }
    let mut out = Matrix::zeros(alpha_grid_deg.len(), beam_angles_deg.len());
    for comp in components {
        if !(comp.sigma_alpha > 0.0) || !(comp.sigma_beta > 0.0) {
            return Err(Error::invalid_argument("nlos component sigma must be > 0"));
        }
        let fa: Vec<f64> = alpha_grid_deg
            .iter()
            .map(|&a| {
                let d = a - comp.alpha_deg;
                (-d * d / (2.0 * comp.sigma_alpha * comp.sigma_alpha)).exp()
            })
            .collect();
        let fb: Vec<f64> = beam_angles_deg
            .iter()
            .map(|&b| {
                let d = b - comp.beta_deg;
                (-d * d / (2.0 * comp.sigma_beta * comp.sigma_beta)).exp()
            })
            .collect();
        for (r, &fr) in fa.iter().enumerate() {
            let row = out.row_mut(r);
            let scale = comp.power * fr;
            for (v, &fc) in row.iter_mut().zip(&fb) {
                *v += scale * fc;
            }
        }
    }
    Ok(out)
}

/// Draws a component set from `cfg` and evaluates it on the grid. Powers are
/// in units of the LOS peak.
pub fn nlos_profile(
    cfg: &AugmentationConfig,
    alpha_grid_deg: &[f64],
    beam_angles_deg: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Matrix> {
    let components = draw_nlos_components(cfg, rng)?;
    evaluate_nlos(&components, alpha_grid_deg, beam_angles_deg)
}

/// Elementwise Rician blend `K/(K+1) * LOS + 1/(K+1) * NLOS`. An infinite K
/// returns the LOS matrix.
pub fn rician_mix(p_los: &Matrix, p_nlos: &Matrix, k: f64) -> Result<Matrix> {
    if !p_los.same_shape(p_nlos) {
        return Err(Error::invalid_argument(format!(
            "rician shapes differ: {}x{} vs {}x{}",
            p_los.rows(),
            p_los.cols(),
            p_nlos.rows(),
            p_nlos.cols()
        )));
    }
    if k.is_nan() || k < 0.0 {
        return Err(Error::invalid_argument("rician K must be >= 0"));
    }
    if k.is_infinite() {
        return Ok(p_los.clone());
    }
    let w_los = k / (k + 1.0);
    let w_nlos = 1.0 / (k + 1.0);
    let mut out = p_los.clone();
    for (o, (&l, &n)) in out
        .data_mut()
        .iter_mut()
        .zip(p_los.data().iter().zip(p_nlos.data()))
    {
        *o = w_los * l + w_nlos * n;
    }
    Ok(out)
}

/// Adds i.i.d. zero-mean Gaussian noise with standard deviation
/// `max(p) / 10^(snr_db/10)` to every entry, clamping negatives to zero.
/// An infinite `snr_db` returns the input unchanged.
pub fn add_power_noise(p: &Matrix, snr_db: f64, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    if p.rows() == 0 || p.cols() == 0 {
        return Err(Error::invalid_argument("noise input must be non-empty"));
    }
    if snr_db.is_infinite() && snr_db > 0.0 {
        return Ok(p.clone());
    }
    if snr_db.is_nan() {
        return Err(Error::invalid_argument("snr_db must not be NaN"));
    }
    let sigma = p.max().max(0.0) / 10f64.powf(snr_db / 10.0);
    let mut out = p.clone();
    for v in out.data_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *v = (*v + sigma * n).max(0.0);
    }
    Ok(out)
}

/// An augmented scan copy along with the draws that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedScan {
    pub powers: Matrix,
    pub num_components: usize,
    pub rician_k: f64,
    pub snr_db: f64,
}

/// Produces one augmented copy of `scan`: NLOS bumps are drawn and scaled by
/// the scan's peak power, blended with the LOS powers by a drawn K, then
/// perturbed with power-domain noise at a drawn SNR.
pub fn augment_scan(
    scan: &ScanDataset,
    cfg: &AugmentationConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AugmentedScan> {
    cfg.validate()?;
    let components = draw_nlos_components(cfg, rng)?;
    let mut p_nlos = evaluate_nlos(
        &components,
        &scan.alpha_grid_deg,
        &scan.full_beam_angles_deg,
    )?;
    p_nlos.scale(scan.powers.max().max(0.0));
    let k = uniform_f64(rng, cfg.k_range.0, cfg.k_range.1);
    let mixed = rician_mix(&scan.powers, &p_nlos, k)?;
    let snr_db = uniform_f64(rng, cfg.snr_range_db.0, cfg.snr_range_db.1);
    let powers = add_power_noise(&mixed, snr_db, rng)?;
    Ok(AugmentedScan {
        powers,
        num_components: components.len(),
        rician_k: k,
        snr_db,
    })
}

/// Pooled lag-1 autocorrelation along the beam axis, a diagnostic for how
/// spatially correlated an augmentation configuration is.
pub fn beam_axis_lag1_autocorr(p: &Matrix) -> f64 {
    let n = p.rows() * p.cols();
    if n == 0 || p.cols() < 2 {
        return 0.0;
    }
    let mean = p.data().iter().sum::<f64>() / n as f64;
    let var: f64 = p.data().iter().map(|v| (v - mean) * (v - mean)).sum();
    if var <= 0.0 {
        return 0.0;
    }
    let mut cov = 0.0;
    for r in 0..p.rows() {
        let row = p.row(r);
        for c in 0..p.cols() - 1 {
            cov += (row[c] - mean) * (row[c + 1] - mean);
        }
    }
    // Normalize both sums by their counts before taking the ratio.
    (cov / (p.rows() * (p.cols() - 1)) as f64) / (var / n as f64)
}

fn uniform_f64(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn uniform_usize(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}
