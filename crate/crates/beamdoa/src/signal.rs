//! Signal synthesis: QAM sources, beam-switched reception, power profiles,
//! and calibration scans.
//!
//! A capture models one observation window: the transmitter sends `N` random
//! QAM symbols scaled by `gamma` through a flat channel coefficient `h`,
//! while the receiver cycles its steering angle across the `B` beams of a
//! book, so segment `n` of the stream arrives scaled by `gamma * h *
//! g(alpha, beta_n)`. Per-beam mean power is the estimator input. Noise, when
//! enabled, is complex white Gaussian calibrated against the best-aligned
//! beam of the full 64-entry book, which makes the configured peak SNR
//! independent of how many beams the capture actually uses.

use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::array::{beam_gain, make_beambook, ArrayGeometry, Beambook, FULL_BOOK_BEAMS};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seeding::derive_seed;

/// Default number of samples in one test capture.
pub const DEFAULT_CAPTURE_SAMPLES: usize = 512;

/// A block of unit-average-power QAM symbols.
#[derive(Debug, Clone)]
pub struct TxSignal {
    pub samples: Vec<Complex64>,
    pub qam_order: u32,
}

/// Transmit scale, channel coefficient, and optional peak I/Q SNR.
#[derive(Debug, Clone)]
pub struct ChannelParams {
    pub gamma: f64,
    pub h: Complex64,
    /// Peak SNR in dB; `None` disables receiver noise.
    pub snr_db: Option<f64>,
}

impl ChannelParams {
    pub fn new(gamma: f64, h: Complex64, snr_db: Option<f64>) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::invalid_argument("gamma must be positive and finite"));
        }
        if !(h.norm() > 0.0) || !h.re.is_finite() || !h.im.is_finite() {
            return Err(Error::invalid_argument("|h| must be positive and finite"));
        }
        Ok(ChannelParams { gamma, h, snr_db })
    }

    /// Unit-power transmitter over a unit-magnitude channel at the given SNR.
    pub fn unit(snr_db: Option<f64>) -> Self {
        ChannelParams {
            gamma: 1.0,
            h: Complex64::new(1.0, 0.0),
            snr_db,
        }
    }

    /// Same magnitudes with the channel phase redrawn uniformly. Powers are
    /// phase-independent; redrawing keeps captures faithful to the model.
    pub fn with_random_phase(&self, rng: &mut ChaCha8Rng) -> Self {
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        ChannelParams {
            gamma: self.gamma,
            h: Complex64::from_polar(self.h.norm(), phase),
            snr_db: self.snr_db,
        }
    }
}

/// Per-beam received powers, the sole estimator input.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile {
    values: Vec<f64>,
    beam_angles_deg: Vec<f64>,
    label_alpha_deg: Option<f64>,
}

impl PowerProfile {
    pub fn new(
        values: Vec<f64>,
        beam_angles_deg: Vec<f64>,
        label_alpha_deg: Option<f64>,
    ) -> Result<Self> {
        if values.is_empty() || values.len() != beam_angles_deg.len() {
            return Err(Error::invalid_argument(
                "profile values and beam angles must be non-empty and equal length",
            ));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid_argument(
                "profile values must be finite and non-negative",
            ));
        }
        Ok(PowerProfile {
            values,
            beam_angles_deg,
            label_alpha_deg,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn beam_angles_deg(&self) -> &[f64] {
        &self.beam_angles_deg
    }

    pub fn label_alpha_deg(&self) -> Option<f64> {
        self.label_alpha_deg
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Index of the strongest beam.
    pub fn argmax(&self) -> usize {
        self.values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Values divided by their maximum. A zero profile is returned unchanged.
    pub fn peak_normalized(&self) -> Vec<f64> {
        let max = self.values.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            self.values.iter().map(|v| v / max).collect()
        } else {
            self.values.clone()
        }
    }

    /// Values mapped affinely onto [0, 1] (min to 0, max to 1). A constant
    /// profile is returned unchanged. This is the network input scaling: it
    /// removes both the unknown `|gamma h|^2` factor and any additive noise
    /// floor common to all beams.
    pub fn minmax_normalized(&self) -> Vec<f64> {
        minmax_normalize(&self.values)
    }
}

/// Calibration grid of powers over (source angle alpha) x (full-book beam).
#[derive(Debug, Clone, PartialEq)]
pub struct ScanDataset {
    pub alpha_grid_deg: Vec<f64>,
    pub full_beam_angles_deg: Vec<f64>,
    /// `alpha_grid.len()` rows by `full_beam_angles.len()` columns.
    pub powers: Matrix,
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub geom: ArrayGeometry,
}

impl ScanDataset {
    pub fn num_alphas(&self) -> usize {
        self.alpha_grid_deg.len()
    }

    pub fn num_beams(&self) -> usize {
        self.full_beam_angles_deg.len()
    }

    pub fn full_book(&self) -> Result<Beambook> {
        Beambook::new(self.full_beam_angles_deg.clone(), &self.geom)
    }

    /// Writes the scan as CSV: four `#` metadata lines, a header, then one
    /// row per (alpha, beam) cell. Values use the shortest decimal form that
    /// parses back to the identical f64.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# snr_db={}", fmt_snr(self.snr_db))?;
        writeln!(w, "# seed={}", self.seed)?;
        writeln!(w, "# num_elements={}", self.geom.num_elements)?;
        writeln!(w, "# spacing={}", self.geom.element_spacing)?;
        writeln!(w, "alpha_deg,beam_index,beam_angle_deg,power")?;
        for (r, &alpha) in self.alpha_grid_deg.iter().enumerate() {
            for (c, &beta) in self.full_beam_angles_deg.iter().enumerate() {
                writeln!(w, "{},{},{},{}", alpha, c, beta, self.powers.get(r, c))?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn read_csv<R: BufRead>(reader: R) -> Result<Self> {
        let mut snr_db = None;
        let mut seed = None;
        let mut num_elements = None;
        let mut spacing = None;
        let mut header_seen = false;
        let mut alphas: Vec<f64> = Vec::new();
        let mut beams: Vec<f64> = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();

        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let (key, value) = meta
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("bad metadata line {}", lineno + 1)))?;
                match key.trim() {
                    "snr_db" => snr_db = Some(parse_snr(value.trim())?),
                    "seed" => {
                        seed = Some(value.trim().parse::<u64>().map_err(|_| {
                            Error::Parse(format!("bad seed value {:?}", value.trim()))
                        })?)
                    }
                    "num_elements" => {
                        num_elements = Some(value.trim().parse::<usize>().map_err(|_| {
                            Error::Parse(format!("bad num_elements value {:?}", value.trim()))
                        })?)
                    }
                    "spacing" => {
                        spacing = Some(value.trim().parse::<f64>().map_err(|_| {
                            Error::Parse(format!("bad spacing value {:?}", value.trim()))
                        })?)
                    }
                    other => return Err(Error::Parse(format!("unknown metadata key {other:?}"))),
                }
                continue;
            }
            if !header_seen {
                if line != "alpha_deg,beam_index,beam_angle_deg,power" {
                    return Err(Error::Parse(format!(
                        "unexpected header on line {}: {line:?}",
                        lineno + 1
                    )));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::Parse(format!(
                    "expected 4 fields on line {}, got {}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let alpha: f64 = fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("bad alpha on line {}", lineno + 1)))?;
            let beam_index: usize = fields[1]
                .parse()
                .map_err(|_| Error::Parse(format!("bad beam index on line {}", lineno + 1)))?;
            let beam_angle: f64 = fields[2]
                .parse()
                .map_err(|_| Error::Parse(format!("bad beam angle on line {}", lineno + 1)))?;
            let power: f64 = fields[3]
                .parse()
                .map_err(|_| Error::Parse(format!("bad power on line {}", lineno + 1)))?;

            if beam_index == 0 {
                alphas.push(alpha);
                rows.push(Vec::new());
            }
            let first_row = rows.len() == 1;
            let row = rows
                .last_mut()
                .ok_or_else(|| Error::Parse("row before first beam_index=0 cell".into()))?;
            if beam_index != row.len() {
                return Err(Error::Parse(format!(
                    "beam indices out of order on line {}",
                    lineno + 1
                )));
            }
            if first_row {
                beams.push(beam_angle);
            } else if beams.get(row.len()).copied() != Some(beam_angle) {
                return Err(Error::Parse(format!(
                    "inconsistent beam angle on line {}",
                    lineno + 1
                )));
            }
            row.push(power);
        }

        let snr_db =
            snr_db.ok_or_else(|| Error::Parse("missing `# snr_db=` metadata".into()))?;
        let seed = seed.ok_or_else(|| Error::Parse("missing `# seed=` metadata".into()))?;
        let num_elements =
            num_elements.ok_or_else(|| Error::Parse("missing `# num_elements=` metadata".into()))?;
        let spacing =
            spacing.ok_or_else(|| Error::Parse("missing `# spacing=` metadata".into()))?;
        if rows.is_empty() || beams.len() < 2 {
            return Err(Error::Parse("scan has no data rows".into()));
        }
        let cols = beams.len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse("scan rows are not rectangular".into()));
        }
        // Full-book endpoints define the scan range.
        let geom = ArrayGeometry::new(num_elements, spacing, beams[0], beams[cols - 1])?;
        let powers = Matrix::from_vec(rows.len(), cols, rows.concat())?;
        Ok(ScanDataset {
            alpha_grid_deg: alphas,
            full_beam_angles_deg: beams,
            powers,
            snr_db,
            seed,
            geom,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

fn fmt_snr(snr_db: Option<f64>) -> String {
    match snr_db {
        Some(v) => format!("{v}"),
        None => "inf".to_string(),
    }
}

fn parse_snr(s: &str) -> Result<Option<f64>> {
    if s.eq_ignore_ascii_case("inf") {
        return Ok(None);
    }
    let v: f64 = s
        .parse()
        .map_err(|_| Error::Parse(format!("bad snr_db value {s:?}")))?;
    Ok(if v.is_infinite() { None } else { Some(v) })
}

/// Draws `n` uniformly random symbols from a unit-average-power square QAM
/// constellation. Supported orders: 4, 16, 64.
pub fn generate_qam(n: usize, order: u32, seed: u64) -> Result<TxSignal> {
    if n == 0 {
        return Err(Error::invalid_argument("sample count must be > 0"));
    }
    let side = match order {
        4 => 2,
        16 => 4,
        64 => 8,
        other => {
            return Err(Error::invalid_argument(format!(
                "unsupported QAM order {other}; expected 4, 16, or 64"
            )))
        }
    };
    // E[re^2 + im^2] over levels {+-1, +-3, ...} is 2*(side^2 - 1)/3.
    let norm = (2.0 * (side * side - 1) as f64 / 3.0).sqrt();
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| {
            let idx = rng.random_range(0..side * side);
            let re = (2 * (idx % side) as i64 - (side as i64 - 1)) as f64;
            let im = (2 * (idx / side) as i64 - (side as i64 - 1)) as f64;
            Complex64::new(re / norm, im / norm)
        })
        .collect();
    Ok(TxSignal {
        samples,
        qam_order: order,
    })
}

/// Mean squared magnitude of a received segment.
pub fn segment_power(segment: &[Complex64]) -> Result<f64> {
    if segment.is_empty() {
        return Err(Error::invalid_argument("segment must be non-empty"));
    }
    Ok(segment.iter().map(|s| s.norm_sqr()).sum::<f64>() / segment.len() as f64)
}

/// Noiseless received power on the best-aligned beam of the full 64-entry
/// book, for a nominal unit-power signal. This is the reference level the
/// configured peak SNR is measured against.
pub fn peak_rx_power(alpha_deg: f64, ch: &ChannelParams, geom: &ArrayGeometry) -> Result<f64> {
    let full = make_beambook(FULL_BOOK_BEAMS, geom)?;
    let mut best = 0.0f64;
    for &beta in full.angles_deg() {
        let g2 = beam_gain(alpha_deg, beta, geom)?.norm_sqr();
        best = best.max(g2);
    }
    Ok(ch.gamma * ch.gamma * ch.h.norm_sqr() * best)
}

/// Splits `sig` into `B` contiguous equal segments and applies the per-beam
/// complex gain `gamma * h * g(alpha, beta_n)` to segment `n`, adding
/// complex white Gaussian noise when the channel specifies an SNR.
pub fn beam_switched_receive(
    sig: &TxSignal,
    alpha_deg: f64,
    book: &Beambook,
    ch: &ChannelParams,
    geom: &ArrayGeometry,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<Complex64>>> {
    let b = book.len();
    if b == 0 || sig.samples.len() % b != 0 {
        return Err(Error::invalid_argument(format!(
            "signal length {} not divisible by beam count {b}",
            sig.samples.len()
        )));
    }
    let seg_len = sig.samples.len() / b;
    let noise_sigma = match ch.snr_db {
        Some(snr) => {
            let sigma_sq = peak_rx_power(alpha_deg, ch, geom)? / 10f64.powf(snr / 10.0);
            Some((sigma_sq / 2.0).sqrt())
        }
        None => None,
    };

    let mut segments = Vec::with_capacity(b);
    for (n, &beta) in book.angles_deg().iter().enumerate() {
        let gain = ch.h * ch.gamma * beam_gain(alpha_deg, beta, geom)?;
        let block = &sig.samples[n * seg_len..(n + 1) * seg_len];
        let seg: Vec<Complex64> = match noise_sigma {
            Some(s) => block
                .iter()
                .map(|&x| {
                    let n_re: f64 = rng.sample(StandardNormal);
                    let n_im: f64 = rng.sample(StandardNormal);
                    gain * x + Complex64::new(n_re * s, n_im * s)
                })
                .collect(),
            None => block.iter().map(|&x| gain * x).collect(),
        };
        segments.push(seg);
    }
    Ok(segments)
}

/// One beam-switched capture: a fresh QAM block is received across `book`
/// and reduced to per-beam powers labeled with the true angle.
pub fn capture_profile(
    alpha_deg: f64,
    book: &Beambook,
    ch: &ChannelParams,
    geom: &ArrayGeometry,
    total_samples: usize,
    qam_order: u32,
    seed: u64,
) -> Result<PowerProfile> {
    if total_samples == 0 || total_samples % book.len() != 0 {
        return Err(Error::invalid_argument(format!(
            "total_samples {total_samples} not divisible by beam count {}",
            book.len()
        )));
    }
    let sig = generate_qam(total_samples, qam_order, derive_seed(seed, 0))?;
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(derive_seed(seed, 1));
    let segments = beam_switched_receive(&sig, alpha_deg, book, ch, geom, &mut rng)?;
    let values = segments
        .iter()
        .map(|s| segment_power(s))
        .collect::<Result<Vec<f64>>>()?;
    // Noise can in principle leave tiny negative rounding residue; clamp.
    let values = values.into_iter().map(|v| v.max(0.0)).collect();
    PowerProfile::new(values, book.angles_deg().to_vec(), Some(alpha_deg))
}

/// Exhaustive calibration sweep: for every source angle on a regular grid
/// and every beam of the full book, the mean power of `samples_per_beam`
/// received samples. The channel phase is redrawn per grid angle; row
/// randomness derives from `seed` and the row index.
pub fn calibration_scan(
    geom: &ArrayGeometry,
    ch: &ChannelParams,
    alpha_step_deg: f64,
    samples_per_beam: usize,
    full_beams: usize,
    qam_order: u32,
    seed: u64,
) -> Result<ScanDataset> {
    geom.validate()?;
    if !(alpha_step_deg > 0.0) {
        return Err(Error::invalid_argument("alpha_step must be > 0"));
    }
    if samples_per_beam < 1 {
        return Err(Error::invalid_argument("samples_per_beam must be >= 1"));
    }
    let book = make_beambook(full_beams, geom)?;
    let alpha_grid = angle_grid(geom.scan_min_deg, geom.scan_max_deg, alpha_step_deg);
    if alpha_grid.is_empty() {
        return Err(Error::invalid_argument("empty calibration grid"));
    }

    let mut powers = Matrix::zeros(alpha_grid.len(), full_beams);
    for (r, &alpha) in alpha_grid.iter().enumerate() {
        let row_seed = derive_seed(seed, r as u64);
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(row_seed);
        let row_ch = ch.with_random_phase(&mut rng);
        let sig = generate_qam(full_beams * samples_per_beam, qam_order, derive_seed(row_seed, 1))?;
        let segments = beam_switched_receive(&sig, alpha, &book, &row_ch, geom, &mut rng)?;
        for (c, seg) in segments.iter().enumerate() {
            powers.set(r, c, segment_power(seg)?.max(0.0));
        }
    }

    Ok(ScanDataset {
        alpha_grid_deg: alpha_grid,
        full_beam_angles_deg: book.angles_deg().to_vec(),
        powers,
        snr_db: ch.snr_db,
        seed,
        geom: geom.clone(),
    })
}

/// Affine map of a slice onto [0, 1]; constant slices are returned as-is.
pub fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > min {
        values.iter().map(|v| (v - min) / (max - min)).collect()
    } else {
        values.to_vec()
    }
}

/// Regular grid from `min` to `max` with the given step, endpoint included
/// when the span is an exact multiple of the step.
pub fn angle_grid(min_deg: f64, max_deg: f64, step_deg: f64) -> Vec<f64> {
    let span = max_deg - min_deg;
    let ratio = span / step_deg;
    let steps = if (ratio - ratio.round()).abs() < 1e-9 {
        ratio.round() as usize
    } else {
        ratio.floor() as usize
    };
    (0..=steps).map(|i| min_deg + step_deg * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{slice_beambook, theoretical_profile};
    use rand::SeedableRng;

    fn default_geom() -> ArrayGeometry {
        ArrayGeometry::default()
    }

    #[test]
    fn qpsk_symbols_on_unit_circle_diagonals() {
        let sig = generate_qam(256, 4, 9).unwrap();
        let s = 1.0 / 2f64.sqrt();
        for sym in &sig.samples {
            assert!((sym.re.abs() - s).abs() < 1e-12);
            assert!((sym.im.abs() - s).abs() < 1e-12);
        }
    }

    #[test]
    fn qam_deterministic_per_seed() {
        let a = generate_qam(128, 16, 77).unwrap();
        let b = generate_qam(128, 16, 77).unwrap();
        assert_eq!(a.samples, b.samples);
        let c = generate_qam(128, 16, 78).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn qam16_mean_power_near_unity() {
        let sig = generate_qam(4096, 16, 3).unwrap();
        let p = segment_power(&sig.samples).unwrap();
        assert!((0.95..=1.05).contains(&p), "mean power {p}");
    }

    #[test]
    fn qam_rejects_bad_order() {
        assert!(generate_qam(16, 32, 0).is_err());
        assert!(generate_qam(0, 16, 0).is_err());
    }

    #[test]
    fn segment_power_examples() {
        let p = segment_power(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]).unwrap();
        assert_eq!(p, 1.0);
        let p = segment_power(&[Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)]).unwrap();
        assert_eq!(p, 2.0);
        let p = segment_power(&[Complex64::new(0.0, 0.0); 4]).unwrap();
        assert_eq!(p, 0.0);
        assert!(segment_power(&[]).is_err());
    }

    #[test]
    fn receive_aligned_beam_scales_by_element_count() {
        let geom = default_geom();
        let book = make_beambook(8, &geom).unwrap();
        let alpha = book.angles_deg()[2];
        let sig = generate_qam(64, 4, 5).unwrap();
        let ch = ChannelParams::unit(None);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let segs = beam_switched_receive(&sig, alpha, &book, &ch, &geom, &mut rng).unwrap();
        let seg_len = 64 / 8;
        for (i, y) in segs[2].iter().enumerate() {
            let expected = sig.samples[2 * seg_len + i] * 16.0;
            assert!((y - expected).norm() < 1e-9);
        }
    }

    #[test]
    fn receive_single_beam_book() {
        let geom = ArrayGeometry::new(2, 0.5, -45.0, 45.0).unwrap();
        let book = Beambook::new(vec![0.0], &geom).unwrap();
        let sig = generate_qam(32, 4, 1).unwrap();
        let ch = ChannelParams::unit(None);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let segs = beam_switched_receive(&sig, 30.0, &book, &ch, &geom, &mut rng).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len(), 32);
    }

    #[test]
    fn receive_rejects_indivisible_length() {
        let geom = default_geom();
        let book = make_beambook(8, &geom).unwrap();
        let sig = generate_qam(65, 4, 1).unwrap();
        let ch = ChannelParams::unit(None);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(beam_switched_receive(&sig, 0.0, &book, &ch, &geom, &mut rng).is_err());
    }

    #[test]
    fn noiseless_power_identity_random_draws() {
        // P(y_n) must equal |gamma*h*g|^2 * P(s_n) to 1e-10 relative.
        let geom = default_geom();
        let book = make_beambook(8, &geom).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..100u64 {
            let gamma = rng.random_range(0.1..4.0);
            let h = Complex64::from_polar(
                rng.random_range(0.2..2.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            );
            let alpha = rng.random_range(-45.0..45.0);
            let ch = ChannelParams::new(gamma, h, None).unwrap();
            let sig = generate_qam(512, 16, derive_seed(7, trial)).unwrap();
            let mut noise_rng = ChaCha8Rng::seed_from_u64(0);
            let segs =
                beam_switched_receive(&sig, alpha, &book, &ch, &geom, &mut noise_rng).unwrap();
            for (n, &beta) in book.angles_deg().iter().enumerate() {
                let g = beam_gain(alpha, beta, &geom).unwrap();
                let block = &sig.samples[n * 64..(n + 1) * 64];
                let expected = (gamma * h.norm() * g.norm()).powi(2)
                    * segment_power(block).unwrap();
                let got = segment_power(&segs[n]).unwrap();
                let rel = (got - expected).abs() / expected.max(1e-300);
                assert!(rel < 1e-10, "trial {trial} beam {n}: rel err {rel}");
            }
        }
    }

    #[test]
    fn gamma_scaling_squares_profile() {
        let geom = default_geom();
        let book = make_beambook(8, &geom).unwrap();
        let base = ChannelParams::unit(None);
        let scaled = ChannelParams::new(3.0, base.h, None).unwrap();
        let p1 = capture_profile(12.0, &book, &base, &geom, 512, 16, 11).unwrap();
        let p2 = capture_profile(12.0, &book, &scaled, &geom, 512, 16, 11).unwrap();
        for (a, b) in p1.values().iter().zip(p2.values()) {
            assert!((b - 9.0 * a).abs() <= 1e-10 * b.abs());
        }
    }

    #[test]
    fn channel_phase_leaves_profile_unchanged() {
        let geom = default_geom();
        let book = make_beambook(8, &geom).unwrap();
        for phase in [0.0, 0.7, 2.1, 4.4] {
            let ch =
                ChannelParams::new(1.0, Complex64::from_polar(1.0, phase), None).unwrap();
            let p = capture_profile(-20.0, &book, &ch, &geom, 512, 16, 13).unwrap();
            let ch0 = ChannelParams::unit(None);
            let p0 = capture_profile(-20.0, &book, &ch0, &geom, 512, 16, 13).unwrap();
            for (a, b) in p0.values().iter().zip(p.values()) {
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn noiseless_capture_matches_theory_after_normalization() {
        // QPSK has constant modulus, so segment powers are exactly |g|^2.
        let geom = default_geom();
        let book = make_beambook(16, &geom).unwrap();
        let ch = ChannelParams::new(1.3, Complex64::from_polar(0.8, 1.1), None).unwrap();
        let captured = capture_profile(17.0, &book, &ch, &geom, 512, 4, 21).unwrap();
        let theory = theoretical_profile(17.0, &book, &geom).unwrap();
        let cn = captured.peak_normalized();
        let tn = theory.peak_normalized();
        for (a, b) in cn.iter().zip(&tn) {
            assert!((a - b).abs() <= 1e-9 * b.max(1e-12), "{a} vs {b}");
        }
    }

    #[test]
    fn capture_argmax_near_true_angle() {
        // At alpha = 0 the two innermost beams tie by symmetry, so compare
        // distances rather than indices.
        let geom = default_geom();
        let book = make_beambook(8, &geom).unwrap();
        let ch = ChannelParams::unit(None);
        let p = capture_profile(0.0, &book, &ch, &geom, 512, 4, 3).unwrap();
        let best_dist = book.angles_deg()[p.argmax()].abs();
        let min_dist = book
            .angles_deg()
            .iter()
            .map(|b| b.abs())
            .fold(f64::INFINITY, f64::min);
        assert!((best_dist - min_dist).abs() < 1e-9);
    }

    #[test]
    fn capture_deterministic() {
        let geom = default_geom();
        let book = make_beambook(8, &geom).unwrap();
        let ch = ChannelParams::unit(Some(5.0));
        let a = capture_profile(9.0, &book, &ch, &geom, 512, 4, 123).unwrap();
        let b = capture_profile(9.0, &book, &ch, &geom, 512, 4, 123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn measured_peak_snr_matches_config() {
        // Mean noise power per sample should be peak_rx_power / 10^(snr/10).
        let geom = default_geom();
        let book = make_beambook(8, &geom).unwrap();
        let ch = ChannelParams::unit(Some(10.0));
        let alpha = 3.0;
        let sig = generate_qam(8192, 4, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let noisy = beam_switched_receive(&sig, alpha, &book, &ch, &geom, &mut rng).unwrap();
        let ch0 = ChannelParams::unit(None);
        let mut rng0 = ChaCha8Rng::seed_from_u64(17);
        let clean = beam_switched_receive(&sig, alpha, &book, &ch0, &geom, &mut rng0).unwrap();
        let mut noise_power = 0.0;
        let mut count = 0usize;
        for (ys, xs) in noisy.iter().zip(&clean) {
            for (y, x) in ys.iter().zip(xs) {
                noise_power += (y - x).norm_sqr();
                count += 1;
            }
        }
        noise_power /= count as f64;
        let expected = peak_rx_power(alpha, &ch, &geom).unwrap() / 10f64.powf(1.0);
        let rel = (noise_power - expected).abs() / expected;
        assert!(rel < 0.05, "noise power off by {rel}");
    }

    #[test]
    fn scan_dimensions_default_grid() {
        let geom = default_geom();
        let ch = ChannelParams::unit(Some(40.0));
        let scan = calibration_scan(&geom, &ch, 1.0, 8, 64, 4, 5).unwrap();
        assert_eq!(scan.num_alphas(), 91);
        assert_eq!(scan.num_beams(), 64);
        assert!(scan.powers.data().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn scan_row_argmax_matches_capture_trend() {
        let geom = default_geom();
        let ch = ChannelParams::unit(Some(40.0));
        let scan = calibration_scan(&geom, &ch, 1.0, 64, 64, 4, 5).unwrap();
        let full = scan.full_book().unwrap();
        let book = slice_beambook(&full, 8).unwrap();
        let idx = crate::array::slice_indices(64, 8).unwrap();
        let r = scan
            .alpha_grid_deg
            .iter()
            .position(|&a| (a - 10.0).abs() < 1e-9)
            .unwrap();
        let sliced_row: Vec<f64> = idx.iter().map(|&c| scan.powers.get(r, c)).collect();
        let row_argmax = sliced_row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let cap = capture_profile(10.0, &book, &ch, &geom, 512, 4, 99).unwrap();
        assert_eq!(row_argmax, cap.argmax());
    }

    #[test]
    fn scan_csv_round_trip_exact() {
        let geom = default_geom();
        let ch = ChannelParams::unit(Some(40.0));
        let scan = calibration_scan(&geom, &ch, 9.0, 4, 16, 4, 5).unwrap();
        let mut buf = Vec::new();
        scan.write_csv(&mut buf).unwrap();
        let parsed = ScanDataset::read_csv(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(parsed, scan);
        let mut buf2 = Vec::new();
        parsed.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn scan_csv_rejects_truncation() {
        let geom = default_geom();
        let ch = ChannelParams::unit(Some(40.0));
        let scan = calibration_scan(&geom, &ch, 15.0, 2, 8, 4, 5).unwrap();
        let mut buf = Vec::new();
        scan.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        // Cut into the middle of the second alpha row: 4 metadata lines,
        // header, 8 cells of row 0, then 3 of row 1.
        let truncated: String = text.lines().take(16).collect::<Vec<_>>().join("\n");
        assert!(ScanDataset::read_csv(std::io::Cursor::new(truncated.as_bytes())).is_err());
        // Missing metadata is also rejected.
        let headless: String = text.lines().skip(1).collect::<Vec<_>>().join("\n");
        assert!(ScanDataset::read_csv(std::io::Cursor::new(headless.as_bytes())).is_err());
    }

    #[test]
    fn angle_grid_inexact_step_stays_inside() {
        let grid = angle_grid(-45.0, 45.0, 7.0);
        assert_eq!(grid.len(), 13);
        assert!(*grid.last().unwrap() <= 45.0);
    }
}
