//! In-sector matrix `C`, out-of-sector matrix `C̃`, the threshold `Δ₀` and the
//! dominant-eigenvector basis of `C`.
//!
//! Integrals over angle are approximated with the midpoint rule and carry the
//! radian measure of each cell. The complement of a sector `[θmin, θmax]` is
//! `[-90°, θmin] ∪ [θmax, 90°]`.

use serde::{Deserialize, Serialize};

use crate::array_model::{steering_unchecked, ArrayGeometry};
use crate::error::{Error, Result};
use crate::linalg::{hermitianize, quad_form, CMatrix, HermitianEigen};

pub const DEFAULT_STEP_DEG: f64 = 0.5;
pub const DEFAULT_NUM_DOMINANT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularSector {
    theta_min: f64,
    theta_max: f64,
}

impl AngularSector {
    pub fn new(theta_min: f64, theta_max: f64) -> Result<Self> {
        if !(-90.0 <= theta_min && theta_min < theta_max && theta_max <= 90.0) {
            return Err(Error::Domain(format!(
                "sector [{theta_min}, {theta_max}] must satisfy -90 <= min < max <= 90"
            )));
        }
        Ok(Self {
            theta_min,
            theta_max,
        })
    }

    /// `[center − halfwidth, center + halfwidth]`, clipped to the visible region.
    pub fn centered(center: f64, halfwidth: f64) -> Result<Self> {
        Self::new((center - halfwidth).max(-90.0), (center + halfwidth).min(90.0))
    }

    pub fn theta_min(&self) -> f64 {
        self.theta_min
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    pub fn width(&self) -> f64 {
        self.theta_max - self.theta_min
    }

    pub fn contains(&self, theta: f64) -> bool {
        (self.theta_min..=self.theta_max).contains(&theta)
    }

    /// The out-of-sector directions inside `[-90°, 90°]` (zero, one or two intervals).
    pub fn complement(&self) -> Vec<AngularSector> {
        let mut out = Vec::with_capacity(2);
        if self.theta_min > -90.0 {
            out.push(AngularSector {
                theta_min: -90.0,
                theta_max: self.theta_min,
            });
        }
        if self.theta_max < 90.0 {
            out.push(AngularSector {
                theta_min: self.theta_max,
                theta_max: 90.0,
            });
        }
        out
    }

    /// Grid of `ceil(width/step) + 1` equispaced angles including both endpoints.
    pub fn grid(&self, step: f64) -> Vec<f64> {
        let n = (self.width() / step).ceil().max(1.0) as usize;
        let h = self.width() / n as f64;
        (0..=n)
            .map(|i| {
                if i == n {
                    self.theta_max
                } else {
                    self.theta_min + i as f64 * h
                }
            })
            .collect()
    }
}

/// Midpoint-rule approximation of `∫ d(θ) d^H(θ) dθ` over a union of disjoint intervals.
pub fn sector_matrix(
    geometry: &ArrayGeometry,
    intervals: &[AngularSector],
    step: f64,
) -> Result<CMatrix> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Domain(format!("quadrature step must be positive, got {step}")));
    }
    let mut sorted = intervals.to_vec();
    sorted.sort_by(|a, b| a.theta_min.total_cmp(&b.theta_min));
    for pair in sorted.windows(2) {
        if pair[1].theta_min < pair[0].theta_max {
            return Err(Error::Domain(format!(
                "intervals [{}, {}] and [{}, {}] overlap",
                pair[0].theta_min, pair[0].theta_max, pair[1].theta_min, pair[1].theta_max
            )));
        }
    }
    let m = geometry.num_elements();
    let mut acc = CMatrix::zeros(m, m);
    for iv in &sorted {
        let n = (iv.width() / step).ceil().max(1.0) as usize;
        let h = iv.width() / n as f64;
        let weight = h.to_radians();
        for i in 0..n {
            let theta = iv.theta_min + (i as f64 + 0.5) * h;
            let d = steering_unchecked(geometry, theta).into_inner();
            acc.ger(weight.into(), &d, &d.conjugate(), 1.0.into());
        }
    }
    Ok(hermitianize(&acc))
}

/// `d^H(θ) C̃ d(θ)`.
pub fn constraint_term(geometry: &ArrayGeometry, c_tilde: &CMatrix, theta: f64) -> f64 {
    quad_form(c_tilde, &steering_unchecked(geometry, theta))
}

/// Largest `d^H(θ) C̃ d(θ)` over the sector grid; ties go to the smallest angle.
pub fn delta0(
    geometry: &ArrayGeometry,
    sector: &AngularSector,
    c_tilde: &CMatrix,
    step: f64,
) -> f64 {
    delta0_argmax(geometry, sector, c_tilde, step).1
}

/// `(argmax θ, max value)` of the constraint term over the sector grid.
pub fn delta0_argmax(
    geometry: &ArrayGeometry,
    sector: &AngularSector,
    c_tilde: &CMatrix,
    step: f64,
) -> (f64, f64) {
    let mut best = (sector.theta_min, f64::NEG_INFINITY);
    for theta in sector.grid(step) {
        let v = constraint_term(geometry, c_tilde, theta);
        if v > best.1 {
            best = (theta, v);
        }
    }
    (best.0, best.1.max(0.0))
}

/// The `l` dominant eigenvectors of `c`, largest eigenvalue first.
pub fn dominant_basis(c: &CMatrix, l: usize) -> Result<CMatrix> {
    if l == 0 || l > c.nrows() {
        return Err(Error::Domain(format!(
            "number of dominant eigenvectors must be in [1, {}], got {l}",
            c.nrows()
        )));
    }
    Ok(HermitianEigen::new(c).dominant(l))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feasibility {
    StrictlyFeasible,
    Boundary,
    Infeasible,
}

/// Classify `Δ₀/M` against `λ_min(C̃)` with tolerance `1e-9·λ_max(C̃)`.
pub fn feasibility_check(c_tilde: &CMatrix, delta0: f64, m: usize) -> Feasibility {
    let eig = HermitianEigen::new(c_tilde);
    classify(eig.min(), eig.max(), delta0, m)
}

pub(crate) fn classify(lambda_min: f64, lambda_max: f64, delta0: f64, m: usize) -> Feasibility {
    let tol = 1e-9 * lambda_max.abs();
    let ratio = delta0 / m as f64;
    if (ratio - lambda_min).abs() <= tol {
        Feasibility::Boundary
    } else if ratio > lambda_min {
        Feasibility::StrictlyFeasible
    } else {
        Feasibility::Infeasible
    }
}

/// Everything derived from the believed signal sector.
#[derive(Debug, Clone)]
pub struct SectorModel {
    pub geometry: ArrayGeometry,
    pub sector: AngularSector,
    pub step: f64,
    /// `C`, integral over the sector.
    pub c_matrix: CMatrix,
    /// `C̃`, integral over the complement.
    pub c_tilde: CMatrix,
    /// `Δ₀`.
    pub delta0: f64,
    /// `U`, dominant eigenvectors of `C`.
    pub u_basis: CMatrix,
    pub c_tilde_min_eig: f64,
    pub c_tilde_max_eig: f64,
}

impl SectorModel {
    pub fn build(
        geometry: &ArrayGeometry,
        sector: AngularSector,
        step: f64,
        num_dominant: usize,
    ) -> Result<Self> {
        let c_matrix = sector_matrix(geometry, &[sector], step)?;
        let c_tilde = sector_matrix(geometry, &sector.complement(), step)?;
        let delta0 = delta0(geometry, &sector, &c_tilde, step);
        let u_basis = dominant_basis(&c_matrix, num_dominant)?;
        let eig = HermitianEigen::new(&c_tilde);
        Ok(Self {
            geometry: *geometry,
            sector,
            step,
            c_matrix,
            c_tilde,
            delta0,
            u_basis,
            c_tilde_min_eig: eig.min(),
            c_tilde_max_eig: eig.max(),
        })
    }

    pub fn num_elements(&self) -> usize {
        self.geometry.num_elements()
    }

    pub fn feasibility(&self) -> Feasibility {
        classify(
            self.c_tilde_min_eig,
            self.c_tilde_max_eig,
            self.delta0,
            self.num_elements(),
        )
    }

    /// `I − U U^H`.
    pub fn projector_perp(&self) -> CMatrix {
        let m = self.num_elements();
        CMatrix::identity(m, m) - &self.u_basis * self.u_basis.adjoint()
    }
}
