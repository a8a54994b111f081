//! Uniform linear array geometry, plane-wave steering vectors and beampatterns.
//!
//! Angles are degrees at every public boundary. Element 0 is the phase
//! reference, so the first entry of every steering vector is exactly 1.

use std::f64::consts::PI;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CVector, C64};

/// Beampattern values are floored here instead of returning `-inf`.
pub const PATTERN_FLOOR_DB: f64 = -100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    num_elements: usize,
    spacing_wavelengths: f64,
}

impl ArrayGeometry {
    pub fn new(num_elements: usize, spacing_wavelengths: f64) -> Result<Self> {
        if num_elements < 2 {
            return Err(Error::Domain(format!(
                "array needs at least 2 elements, got {num_elements}"
            )));
        }
        if !(spacing_wavelengths > 0.0 && spacing_wavelengths.is_finite()) {
            return Err(Error::Domain(format!(
                "element spacing must be positive, got {spacing_wavelengths}"
            )));
        }
        Ok(Self {
            num_elements,
            spacing_wavelengths,
        })
    }

    /// Half-wavelength ULA.
    pub fn half_wavelength(num_elements: usize) -> Result<Self> {
        Self::new(num_elements, 0.5)
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn spacing_wavelengths(&self) -> f64 {
        self.spacing_wavelengths
    }
}

/// A length-`M` array response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(CVector);

impl SteeringVector {
    pub fn from_vector(v: CVector) -> Self {
        Self(v)
    }

    pub fn into_inner(self) -> CVector {
        self.0
    }

    pub fn as_vector(&self) -> &CVector {
        &self.0
    }

    /// Rescale to Euclidean norm `√M`.
    pub fn normalized(&self) -> Self {
        let m = self.0.len() as f64;
        let n = self.0.norm();
        Self(self.0.scale(m.sqrt() / n))
    }
}

impl Deref for SteeringVector {
    type Target = CVector;

    fn deref(&self) -> &CVector {
        &self.0
    }
}

fn check_angle(theta_deg: f64) -> Result<()> {
    if !(-90.0..=90.0).contains(&theta_deg) {
        return Err(Error::Domain(format!(
            "angle {theta_deg} deg outside [-90, 90]"
        )));
    }
    Ok(())
}

/// Plane-wave response `d(θ)`: entry `m` is `exp(j 2π·spacing·m·sin θ)`.
pub fn steering(geometry: &ArrayGeometry, theta_deg: f64) -> Result<SteeringVector> {
    check_angle(theta_deg)?;
    Ok(steering_unchecked(geometry, theta_deg))
}

pub(crate) fn steering_unchecked(geometry: &ArrayGeometry, theta_deg: f64) -> SteeringVector {
    let k = 2.0 * PI * geometry.spacing_wavelengths * theta_deg.to_radians().sin();
    SteeringVector(CVector::from_fn(geometry.num_elements, |m, _| {
        C64::from_polar(1.0, k * m as f64)
    }))
}

/// `|w^H d(θ)|²` in dB for every grid angle, floored at [`PATTERN_FLOOR_DB`].
pub fn beampattern(
    geometry: &ArrayGeometry,
    w: &CVector,
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if grid.is_empty() {
        return Err(Error::Domain("beampattern grid is empty".into()));
    }
    if w.len() != geometry.num_elements {
        return Err(Error::Dimension {
            expected: geometry.num_elements,
            got: w.len(),
        });
    }
    grid.iter()
        .map(|&theta| {
            let d = steering(geometry, theta)?;
            let p = w.dotc(&d).norm_sqr();
            Ok((theta, power_db(p)))
        })
        .collect()
}

pub(crate) fn power_db(p: f64) -> f64 {
    if p > 0.0 {
        (10.0 * p.log10()).max(PATTERN_FLOOR_DB)
    } else {
        PATTERN_FLOOR_DB
    }
}

/// Uniform grid from `start` to `stop` inclusive with spacing `step`.
///
/// Points are computed as `start + i·step`, so two grids whose steps divide
/// each other produce bit-identical shared angles.
pub fn angle_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || stop < start {
        return Err(Error::Domain(format!(
            "invalid grid [{start}, {stop}] with step {step}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}
