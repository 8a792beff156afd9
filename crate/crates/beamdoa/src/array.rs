//! Uniform-array steering math and beambook construction.
//!
//! The array is modeled as a uniform linear array in azimuth (elevation is
//! fixed by the measurement setup, so the response depends only on
//! `sin(azimuth)`). Steering vectors are unit-magnitude phasors per element;
//! the gain seen by a beam steered to `beta` for a source at `alpha` is the
//! inner product of the two steering vectors. Angles are degrees at every
//! public interface; radians stay internal.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::PowerProfile;

/// Beam count of the reference device's integrated beambook. Used as the
/// default full-scan resolution and as the reference when calibrating
/// receiver noise against the best-aligned full-book beam.
pub const FULL_BOOK_BEAMS: usize = 64;

/// Element count, spacing, and the azimuth range the array can steer over.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub num_elements: usize,
    /// Element spacing in wavelengths.
    pub element_spacing: f64,
    pub scan_min_deg: f64,
    pub scan_max_deg: f64,
}

impl ArrayGeometry {
    pub fn new(
        num_elements: usize,
        element_spacing: f64,
        scan_min_deg: f64,
        scan_max_deg: f64,
    ) -> Result<Self> {
        let geom = ArrayGeometry {
            num_elements,
            element_spacing,
            scan_min_deg,
            scan_max_deg,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_elements < 1 {
            return Err(Error::invalid_argument("num_elements must be >= 1"));
        }
        if !(self.element_spacing > 0.0) {
            return Err(Error::invalid_argument("element_spacing must be > 0"));
        }
        if !(self.scan_min_deg < self.scan_max_deg) {
            return Err(Error::invalid_argument("scan_min must be < scan_max"));
        }
        Ok(())
    }

    pub fn scan_span_deg(&self) -> f64 {
        self.scan_max_deg - self.scan_min_deg
    }

    pub fn contains(&self, angle_deg: f64) -> bool {
        angle_deg >= self.scan_min_deg && angle_deg <= self.scan_max_deg
    }
}

impl Default for ArrayGeometry {
    /// 16 half-wavelength-spaced elements scanning -45 deg to +45 deg.
    fn default() -> Self {
        ArrayGeometry {
            num_elements: 16,
            element_spacing: 0.5,
            scan_min_deg: -45.0,
            scan_max_deg: 45.0,
        }
    }
}

/// The ordered set of steering angles the array switches among.
#[derive(Debug, Clone, PartialEq)]
pub struct Beambook {
    angles_deg: Vec<f64>,
}

impl Beambook {
    /// Builds a beambook from explicit angles, which must be strictly
    /// increasing and inside the geometry's scan range.
    pub fn new(angles_deg: Vec<f64>, geom: &ArrayGeometry) -> Result<Self> {
        if angles_deg.is_empty() {
            return Err(Error::invalid_argument("beambook must be non-empty"));
        }
        for pair in angles_deg.windows(2) {
            if !(pair[0] < pair[1]) {
                return Err(Error::invalid_argument(
                    "beambook angles must be strictly increasing",
                ));
            }
        }
        for &a in &angles_deg {
            if !geom.contains(a) {
                return Err(Error::invalid_argument(format!(
                    "beam angle {a} deg outside scan range [{}, {}]",
                    geom.scan_min_deg, geom.scan_max_deg
                )));
            }
        }
        Ok(Beambook { angles_deg })
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }
}

/// Per-element phasor response toward `angle_deg`.
///
/// Element `k` is `exp(j * 2*pi * spacing * k * sin(angle))`; element 0 is
/// always `1 + 0j`.
pub fn steering_vector(angle_deg: f64, geom: &ArrayGeometry) -> Result<Vec<Complex64>> {
    if !angle_deg.is_finite() {
        return Err(Error::invalid_argument("steering angle must be finite"));
    }
    let phase_step = TAU * geom.element_spacing * angle_deg.to_radians().sin();
    Ok((0..geom.num_elements)
        .map(|k| Complex64::from_polar(1.0, phase_step * k as f64))
        .collect())
}

/// Complex array gain `g(alpha, beta)`: the inner product of the steering
/// vector toward `alpha` with the conjugate of the one toward `beta`.
///
/// `|g| <= num_elements`, with equality when `sin(alpha) == sin(beta)`.
pub fn beam_gain(alpha_deg: f64, beta_deg: f64, geom: &ArrayGeometry) -> Result<Complex64> {
    if !alpha_deg.is_finite() || !beta_deg.is_finite() {
        return Err(Error::invalid_argument("beam_gain angles must be finite"));
    }
    let phase_step = TAU
        * geom.element_spacing
        * (alpha_deg.to_radians().sin() - beta_deg.to_radians().sin());
    let mut sum = Complex64::new(0.0, 0.0);
    for k in 0..geom.num_elements {
        sum += Complex64::from_polar(1.0, phase_step * k as f64);
    }
    Ok(sum)
}

/// `count` equally spaced beams with endpoints at the scan-range limits.
pub fn make_beambook(count: usize, geom: &ArrayGeometry) -> Result<Beambook> {
    geom.validate()?;
    if count < 2 {
        return Err(Error::invalid_argument("beambook needs at least 2 beams"));
    }
    let step = geom.scan_span_deg() / (count - 1) as f64;
    let angles = (0..count)
        .map(|i| {
            if i + 1 == count {
                geom.scan_max_deg
            } else {
                geom.scan_min_deg + step * i as f64
            }
        })
        .collect();
    Ok(Beambook { angles_deg: angles })
}

/// Indices selecting `b` equally spaced entries (endpoints included) from a
/// book of `full_len` beams: `i_k = round(k * (full_len - 1) / (b - 1))`.
pub fn slice_indices(full_len: usize, b: usize) -> Result<Vec<usize>> {
    if b < 2 || b > full_len {
        return Err(Error::invalid_argument(format!(
            "slice size {b} out of range [2, {full_len}]"
        )));
    }
    Ok((0..b)
        .map(|k| ((k * (full_len - 1)) as f64 / (b - 1) as f64).round() as usize)
        .collect())
}

/// Selects `b` equally spaced beams from `full`, always keeping the first
/// and last entries.
pub fn slice_beambook(full: &Beambook, b: usize) -> Result<Beambook> {
    let idx = slice_indices(full.len(), b)?;
    Ok(Beambook {
        angles_deg: idx.into_iter().map(|i| full.angles_deg[i]).collect(),
    })
}

/// The noiseless power profile `[|g(alpha, beta_1)|^2, ...]` a source at
/// `alpha_candidate_deg` would produce over `book`.
pub fn theoretical_profile(
    alpha_candidate_deg: f64,
    book: &Beambook,
    geom: &ArrayGeometry,
) -> Result<PowerProfile> {
    if !alpha_candidate_deg.is_finite() || !geom.contains(alpha_candidate_deg) {
        return Err(Error::invalid_argument(format!(
            "candidate angle {alpha_candidate_deg} deg outside scan range [{}, {}]",
            geom.scan_min_deg, geom.scan_max_deg
        )));
    }
    let values = book
        .angles_deg
        .iter()
        .map(|&beta| beam_gain(alpha_candidate_deg, beta, geom).map(|g| g.norm_sqr()))
        .collect::<Result<Vec<f64>>>()?;
    PowerProfile::new(values, book.angles_deg.clone(), Some(alpha_candidate_deg))
}
