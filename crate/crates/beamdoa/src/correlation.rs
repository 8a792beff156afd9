//! Correlation-based DOA baseline: cosine-similarity matching of a measured
//! power profile against precomputed theoretical profiles on a candidate
//! grid. Cosine similarity ignores the unknown `|gamma * h|^2` scale, so no
//! calibration is needed.

use crate::array::{theoretical_profile, ArrayGeometry, Beambook};
use crate::error::{Error, Result};
use crate::signal::PowerProfile;

/// Candidate angles with their cached theoretical profiles.
#[derive(Debug, Clone)]
pub struct CandidateGrid {
    angles_deg: Vec<f64>,
    profiles: Vec<Vec<f64>>,
    beam_count: usize,
}

/// The matched angle and its cosine score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoaEstimate {
    pub alpha_hat_deg: f64,
    /// In [0, 1] for non-negative inputs.
    pub score: f64,
}

/// `dot(a, b) / (|a| * |b|)`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid_argument(format!(
            "cosine inputs must be non-empty and equal length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput("zero-norm cosine input".into()));
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Precomputes theoretical profiles for every candidate angle from the scan
/// minimum to the scan maximum in `step_deg` increments.
pub fn build_grid(book: &Beambook, geom: &ArrayGeometry, step_deg: f64) -> Result<CandidateGrid> {
    geom.validate()?;
    if !(step_deg > 0.0) {
        return Err(Error::invalid_argument("candidate step must be > 0"));
    }
    if step_deg > geom.scan_span_deg() {
        return Err(Error::invalid_argument(format!(
            "candidate step {step_deg} exceeds scan span {}",
            geom.scan_span_deg()
        )));
    }
    let angles = crate::signal::angle_grid(geom.scan_min_deg, geom.scan_max_deg, step_deg);
    let profiles = angles
        .iter()
        .map(|&a| Ok(theoretical_profile(a, book, geom)?.values().to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(CandidateGrid {
        angles_deg: angles,
        profiles,
        beam_count: book.len(),
    })
}

impl CandidateGrid {
    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn profile(&self, idx: usize) -> &[f64] {
        &self.profiles[idx]
    }

    pub fn beam_count(&self) -> usize {
        self.beam_count
    }

    /// Returns the candidate maximizing cosine similarity with `profile`.
    /// Exact ties break toward the candidate nearest broadside, then toward
    /// the smaller angle.
    pub fn estimate(&self, profile: &PowerProfile) -> Result<DoaEstimate> {
        if profile.len() != self.beam_count {
            return Err(Error::invalid_argument(format!(
                "profile has {} beams, grid expects {}",
                profile.len(),
                self.beam_count
            )));
        }
        let values = profile.values();
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateInput("all-zero power profile".into()));
        }
        let mut best_angle = f64::NAN;
        let mut best_score = f64::NEG_INFINITY;
        for (angle, cached) in self.angles_deg.iter().zip(&self.profiles) {
            let score = cosine_similarity(values, cached)?;
            let better = score > best_score
                || (score == best_score
                    && (angle.abs() < best_angle.abs()
                        || (angle.abs() == best_angle.abs() && *angle < best_angle)));
            if better {
                best_score = score;
                best_angle = *angle;
            }
        }
        Ok(DoaEstimate {
            alpha_hat_deg: best_angle,
            score: best_score,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array::{make_beambook, theoretical_profile};
    use crate::signal::{capture_profile, ChannelParams};
    use proptest::prelude::*;

    fn setup(b: usize) -> (ArrayGeometry, Beambook, CandidateGrid) {
        let geom = ArrayGeometry::default();
        let book = make_beambook(b, &geom).unwrap();
        let grid = build_grid(&book, &geom, 0.25).unwrap();
        (geom, book, grid)
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let parallel = cosine_similarity(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((parallel - 1.0).abs() < 1e-12);
        let half = cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((half - 0.70710678).abs() < 1e-8);
    }

    #[test]
    fn cosine_rejects_zero_and_mismatch() {
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(cosine_similarity(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn grid_has_361_candidates_at_default_step() {
        let (_, _, grid) = setup(16);
        assert_eq!(grid.angles_deg().len(), 361);
        assert_eq!(grid.angles_deg()[0], -45.0);
        assert_eq!(grid.angles_deg()[360], 45.0);
    }

    #[test]
    fn grid_rows_match_theoretical_profiles() {
        let (geom, book, grid) = setup(8);
        for (i, &a) in grid.angles_deg().iter().enumerate().step_by(40) {
            let expected = theoretical_profile(a, &book, &geom).unwrap();
            assert_eq!(grid.profile(i), expected.values());
        }
    }

    #[test]
    fn grid_row_at_beam_angle_peaks_there() {
        // 10 equally spaced beams land on multiples of 10 deg, which the
        // 0.25 deg candidate grid contains exactly.
        let (geom, _, _) = setup(8);
        let book = make_beambook(10, &geom).unwrap();
        let grid = build_grid(&book, &geom, 0.25).unwrap();
        let beam3 = book.angles_deg()[3];
        let idx = grid
            .angles_deg()
            .iter()
            .position(|&a| (a - beam3).abs() < 1e-9)
            .expect("beam angle on candidate grid");
        let row = grid.profile(idx);
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 3);
    }

    #[test]
    fn build_grid_rejects_bad_step() {
        let geom = ArrayGeometry::default();
        let book = make_beambook(8, &geom).unwrap();
        assert!(build_grid(&book, &geom, 0.0).is_err());
        assert!(build_grid(&book, &geom, 91.0).is_err());
    }

    #[test]
    fn self_match_is_exact() {
        let (geom, book, grid) = setup(16);
        let profile = theoretical_profile(17.0, &book, &geom).unwrap();
        let est = grid.estimate(&profile).unwrap();
        assert_eq!(est.alpha_hat_deg, 17.0);
        assert!((est.score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn self_consistency_over_all_candidates() {
        let (geom, book, grid) = setup(16);
        for &a in grid.angles_deg() {
            let profile = theoretical_profile(a, &book, &geom).unwrap();
            let est = grid.estimate(&profile).unwrap();
            assert_eq!(est.alpha_hat_deg, a, "candidate {a}");
        }
    }

    #[test]
    fn noiseless_capture_recovers_angle() {
        let (geom, book, grid) = setup(16);
        let ch = ChannelParams::unit(None);
        let profile = capture_profile(17.0, &book, &ch, &geom, 512, 4, 40).unwrap();
        let est = grid.estimate(&profile).unwrap();
        assert!((est.alpha_hat_deg - 17.0).abs() <= 0.25);
    }

    #[test]
    fn estimate_rejects_zero_profile_and_mismatch() {
        let (_, book, grid) = setup(8);
        let zeros =
            PowerProfile::new(vec![0.0; 8], book.angles_deg().to_vec(), None).unwrap();
        assert!(matches!(
            grid.estimate(&zeros),
            Err(Error::DegenerateInput(_))
        ));
        let short = PowerProfile::new(vec![1.0; 4], vec![-45.0, -15.0, 15.0, 45.0], None)
            .unwrap();
        assert!(matches!(
            grid.estimate(&short),
            Err(Error::InvalidArgument(_))
        ));
    }

    proptest! {
        #[test]
        fn estimate_scale_invariant(scale in 1e-3f64..1e3, seed in 0u64..200) {
            let (geom, book, grid) = setup(8);
            let ch = ChannelParams::unit(Some(10.0));
            let alpha = -45.0 + 90.0 * (seed as f64 / 200.0);
            let p = capture_profile(alpha, &book, &ch, &geom, 512, 4, seed).unwrap();
            let scaled = PowerProfile::new(
                p.values().iter().map(|v| v * scale).collect(),
                p.beam_angles_deg().to_vec(),
                p.label_alpha_deg(),
            ).unwrap();
            let e1 = grid.estimate(&p).unwrap();
            let e2 = grid.estimate(&scaled).unwrap();
            prop_assert_eq!(e1.alpha_hat_deg, e2.alpha_hat_deg);
        }

        #[test]
        fn score_bounded_for_nonnegative_inputs(seed in 0u64..100) {
            let (geom, book, grid) = setup(8);
            let ch = ChannelParams::unit(Some(0.0));
            let alpha = -45.0 + 90.0 * (seed as f64 / 100.0);
            let p = capture_profile(alpha, &book, &ch, &geom, 512, 4, seed).unwrap();
            let est = grid.estimate(&p).unwrap();
            prop_assert!(est.score >= 0.0 && est.score <= 1.0 + 1e-12);
        }
    }
}
