//! Snapshot simulation for the three steering-mismatch scenarios and the
//! sample covariance matrix.
//!
//! Every run owns independent random streams derived from
//! `(scenario seed, run index, stream id)`, so a run can be regenerated in
//! isolation and runs can execute in any order or in parallel.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::array_model::{steering, steering_unchecked, ArrayGeometry, SteeringVector};
use crate::error::{Error, Result};
use crate::linalg::{hermitianize, CMatrix, CVector, HermitianEigen, C64};
use crate::sector::AngularSector;

/// Random stream ids within a run.
pub mod stream {
    pub const MISMATCH: u64 = 0;
    pub const SNAPSHOTS: u64 = 1;
}

/// Relative eigenvalue threshold below which `R̂` is treated as singular.
pub const SINGULAR_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MismatchModel {
    /// The actual steering vector equals the presumed one.
    Exact,
    /// Cumulative Gaussian phase increments along the array.
    PhaseDistortion { variance: f64 },
    /// Direct path plus `num_paths` coherently scattered plane waves.
    CoherentScattering {
        num_paths: usize,
        angle_mean: f64,
        angle_std: f64,
    },
}

impl MismatchModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MismatchModel::Exact => Ok(()),
            MismatchModel::PhaseDistortion { variance } => {
                if variance >= 0.0 && variance.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Domain(format!("phase variance must be >= 0, got {variance}")))
                }
            }
            MismatchModel::CoherentScattering {
                num_paths,
                angle_mean,
                angle_std,
            } => {
                if num_paths == 0 {
                    return Err(Error::Domain("coherent scattering needs num_paths >= 1".into()));
                }
                if !(angle_std >= 0.0 && angle_std.is_finite()) {
                    return Err(Error::Domain(format!("angle_std must be >= 0, got {angle_std}")));
                }
                if !(-90.0..=90.0).contains(&angle_mean) {
                    return Err(Error::Domain(format!("angle_mean {angle_mean} outside [-90, 90]")));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interferer {
    pub doa_deg: f64,
    pub inr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: ArrayGeometry,
    pub presumed_doa_deg: f64,
    pub snr_db: f64,
    pub interferers: Vec<Interferer>,
    pub num_snapshots: usize,
    pub mismatch: MismatchModel,
    pub sector_halfwidth_deg: f64,
    pub seed: u64,
}

impl Scenario {
    /// Ten-element half-wavelength ULA, desired signal presumed at 3°, SNR 20 dB,
    /// two 30 dB interferers at 30° and 50°, K = 30, sector ±5°.
    pub fn reference(mismatch: MismatchModel) -> Self {
        Self {
            geometry: ArrayGeometry::half_wavelength(10).expect("valid geometry"),
            presumed_doa_deg: 3.0,
            snr_db: 20.0,
            interferers: vec![
                Interferer {
                    doa_deg: 30.0,
                    inr_db: 30.0,
                },
                Interferer {
                    doa_deg: 50.0,
                    inr_db: 30.0,
                },
            ],
            num_snapshots: 30,
            mismatch,
            sector_halfwidth_deg: 5.0,
            seed: 0,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.geometry.num_elements()
    }

    pub fn sector(&self) -> Result<AngularSector> {
        AngularSector::centered(self.presumed_doa_deg, self.sector_halfwidth_deg)
    }

    /// `σ_s² = 10^{SNR/10}`.
    pub fn signal_power(&self) -> f64 {
        db_to_linear(self.snr_db)
    }

    pub fn presumed(&self) -> Result<SteeringVector> {
        steering(&self.geometry, self.presumed_doa_deg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_snapshots == 0 {
            return Err(Error::Domain("num_snapshots must be >= 1".into()));
        }
        if !(self.sector_halfwidth_deg > 0.0) {
            return Err(Error::Domain(format!(
                "sector half-width must be positive, got {}",
                self.sector_halfwidth_deg
            )));
        }
        self.presumed()?;
        self.mismatch.validate()?;
        let sector = self.sector()?;
        for i in &self.interferers {
            steering(&self.geometry, i.doa_deg)?;
            if sector.contains(i.doa_deg) {
                return Err(Error::Domain(format!(
                    "interferer at {} deg lies inside the signal sector [{}, {}]",
                    i.doa_deg,
                    sector.theta_min(),
                    sector.theta_max()
                )));
            }
        }
        Ok(())
    }

    /// RNG for one stream of one Monte-Carlo run.
    pub fn rng(&self, run: u64, stream_id: u64) -> ChaCha8Rng {
        run_rng(self.seed, run, stream_id)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// ChaCha8 keyed by `(seed, run)` and positioned on stream `stream_id`.
pub fn run_rng(seed: u64, run: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(run)));
    rng.set_stream(stream_id);
    rng
}

/// Circularly-symmetric complex Gaussian with unit power.
pub fn complex_gaussian(rng: &mut impl Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Actual desired-signal steering vector for one run, rescaled to norm `√M`.
pub fn draw_actual_steering(scenario: &Scenario, rng: &mut impl Rng) -> Result<SteeringVector> {
    let p = scenario.presumed()?.into_inner();
    let m = p.len();
    let a = match scenario.mismatch {
        MismatchModel::Exact => p,
        MismatchModel::PhaseDistortion { variance } => {
            let sd = variance.sqrt();
            let mut phase = 0.0;
            let mut a = p.clone();
            for k in 1..m {
                let inc: f64 = StandardNormal.sample(rng);
                phase += sd * inc;
                a[k] *= C64::from_polar(1.0, phase);
            }
            a
        }
        MismatchModel::CoherentScattering {
            num_paths,
            angle_mean,
            angle_std,
        } => {
            let angle = Normal::new(angle_mean, angle_std)
                .map_err(|e| Error::Domain(format!("scatter angle distribution: {e}")))?;
            let mut a = p;
            for _ in 0..num_paths {
                let psi = rng.random_range(0.0..2.0 * PI);
                let theta: f64 = angle.sample(rng);
                let b = steering_unchecked(&scenario.geometry, theta.clamp(-90.0, 90.0));
                a += b.into_inner() * C64::from_polar(1.0, psi);
            }
            a
        }
    };
    Ok(SteeringVector::from_vector(a).normalized())
}

/// `x(k) = s(k)·a + Σ_j i_j(k)·d(θ_j) + n(k)` for given waveforms.
pub fn assemble_snapshots(
    actual: &CVector,
    signal: &[C64],
    interference: &[(CVector, Vec<C64>)],
    noise: &CMatrix,
) -> CMatrix {
    let m = actual.len();
    let k = signal.len();
    let mut x = noise.clone();
    for col in 0..k {
        let mut c = x.column_mut(col);
        c.axpy(signal[col], actual, C64::new(1.0, 0.0));
        for (d, wave) in interference {
            c.axpy(wave[col], d, C64::new(1.0, 0.0));
        }
    }
    debug_assert_eq!(x.nrows(), m);
    x
}

/// `M × K` snapshot matrix with Gaussian signal, interference and unit-power noise.
pub fn generate_snapshots(
    scenario: &Scenario,
    actual: &SteeringVector,
    rng: &mut impl Rng,
) -> Result<CMatrix> {
    let m = scenario.num_elements();
    if actual.len() != m {
        return Err(Error::Dimension {
            expected: m,
            got: actual.len(),
        });
    }
    let k = scenario.num_snapshots;
    let s_amp = scenario.signal_power().sqrt();
    let dirs: Vec<(CVector, f64)> = scenario
        .interferers
        .iter()
        .map(|i| {
            Ok((
                steering(&scenario.geometry, i.doa_deg)?.into_inner(),
                db_to_linear(i.inr_db).sqrt(),
            ))
        })
        .collect::<Result<_>>()?;

    let mut signal = Vec::with_capacity(k);
    let mut waves: Vec<Vec<C64>> = vec![Vec::with_capacity(k); dirs.len()];
    let mut noise = CMatrix::zeros(m, k);
    // Column by column, so a shorter record is a prefix of a longer one.
    for col in 0..k {
        signal.push(complex_gaussian(rng) * s_amp);
        for (w, (_, amp)) in waves.iter_mut().zip(&dirs) {
            w.push(complex_gaussian(rng) * *amp);
        }
        for row in 0..m {
            noise[(row, col)] = complex_gaussian(rng);
        }
    }
    let interference: Vec<(CVector, Vec<C64>)> = dirs
        .into_iter()
        .map(|(d, _)| d)
        .zip(waves)
        .collect();
    Ok(assemble_snapshots(actual, &signal, &interference, &noise))
}

/// Signal-inclusive sample covariance `R̂ = (1/K) Σ x(k) x^H(k)` with its eigendecomposition.
#[derive(Debug, Clone)]
pub struct SampleCovariance {
    matrix: CMatrix,
    num_snapshots: usize,
    loading: f64,
    eigen: HermitianEigen,
}

impl SampleCovariance {
    pub fn from_matrix(matrix: CMatrix, num_snapshots: usize) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let matrix = hermitianize(&matrix);
        let eigen = HermitianEigen::new(&matrix);
        Ok(Self {
            matrix,
            num_snapshots,
            loading: 0.0,
            eigen,
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn num_snapshots(&self) -> usize {
        self.num_snapshots
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn eigen(&self) -> &HermitianEigen {
        &self.eigen
    }

    pub fn loading(&self) -> f64 {
        self.loading
    }

    /// Fewer snapshots than sensors, or a numerically vanishing eigenvalue.
    pub fn is_singular(&self) -> bool {
        self.num_snapshots < self.dim() || self.eigen.min() <= SINGULAR_RTOL * self.eigen.max()
    }

    /// `R̂ + δI`; after loading, inversion is permitted even when `K < M`.
    pub fn with_diagonal_loading(&self, delta: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::Domain(format!("diagonal loading must be >= 0, got {delta}")));
        }
        let m = self.dim();
        let loaded = &self.matrix + CMatrix::identity(m, m).scale(delta);
        let mut out = Self::from_matrix(loaded, self.num_snapshots)?;
        out.loading = self.loading + delta;
        Ok(out)
    }

    fn check_invertible(&self) -> Result<()> {
        let positive = self.eigen.min() > SINGULAR_RTOL * self.eigen.max();
        if (self.loading > 0.0 && positive) || !self.is_singular() {
            Ok(())
        } else {
            Err(Error::SingularCovariance {
                lambda_min: self.eigen.min(),
                lambda_max: self.eigen.max(),
                snapshots: self.num_snapshots,
            })
        }
    }

    /// `R̂⁻¹` through the eigendecomposition.
    pub fn inverse(&self) -> Result<CMatrix> {
        self.check_invertible()?;
        Ok(self.eigen.map(|l| 1.0 / l))
    }
}

pub fn sample_covariance(snapshots: &CMatrix) -> Result<SampleCovariance> {
    let k = snapshots.ncols();
    if k == 0 {
        return Err(Error::Domain("sample covariance needs at least one snapshot".into()));
    }
    let r = (snapshots * snapshots.adjoint()).unscale(k as f64);
    SampleCovariance::from_matrix(r, k)
}

/// `R_{i+n} = I + Σ_j INR_j d(θ_j) d^H(θ_j)`.
pub fn true_interference_plus_noise_covariance(scenario: &Scenario) -> Result<CMatrix> {
    let m = scenario.num_elements();
    let mut r = CMatrix::identity(m, m);
    for i in &scenario.interferers {
        let d = steering(&scenario.geometry, i.doa_deg)?.into_inner();
        r.ger(db_to_linear(i.inr_db).into(), &d, &d.conjugate(), 1.0.into());
    }
    Ok(hermitianize(&r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{norm_sq, rel_frobenius};

    fn noise_only(k: usize) -> Scenario {
        Scenario {
            snr_db: f64::NEG_INFINITY,
            interferers: vec![],
            num_snapshots: k,
            ..Scenario::reference(MismatchModel::Exact)
        }
    }

    #[test]
    fn exact_and_zero_variance_return_presumed() {
        let s = Scenario::reference(MismatchModel::Exact);
        let d = steering(&s.geometry, 3.0).unwrap();
        let a = draw_actual_steering(&s, &mut s.rng(0, stream::MISMATCH)).unwrap();
        assert!((&*a - &*d).norm() < 1e-14);
        let s = Scenario::reference(MismatchModel::PhaseDistortion { variance: 0.0 });
        let a = draw_actual_steering(&s, &mut s.rng(0, stream::MISMATCH)).unwrap();
        assert!((&*a - &*d).norm() < 1e-14);
    }

    #[test]
    fn phase_distortion_keeps_unit_modulus_and_reference() {
        let s = Scenario::reference(MismatchModel::PhaseDistortion { variance: 0.04 });
        let a = draw_actual_steering(&s, &mut s.rng(5, stream::MISMATCH)).unwrap();
        assert_eq!(a[0], C64::new(1.0, 0.0));
        for z in a.iter() {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatch_draw_is_fixed_per_run() {
        let s = Scenario::reference(MismatchModel::CoherentScattering {
            num_paths: 4,
            angle_mean: 3.0,
            angle_std: 1.0,
        });
        let a1 = draw_actual_steering(&s, &mut s.rng(11, stream::MISMATCH)).unwrap();
        let a2 = draw_actual_steering(&s, &mut s.rng(11, stream::MISMATCH)).unwrap();
        let b = draw_actual_steering(&s, &mut s.rng(12, stream::MISMATCH)).unwrap();
        assert_eq!(a1, a2);
        assert_ne!(a1, b);
        assert!((norm_sq(&a1) - 10.0).abs() < 1e-10);
    }

    #[test]
    fn deterministic_columns_without_noise() {
        let s = Scenario::reference(MismatchModel::Exact);
        let a = s.presumed().unwrap();
        let x = assemble_snapshots(&a, &[C64::new(1.0, 0.0); 5], &[], &CMatrix::zeros(10, 5));
        for c in 0..5 {
            assert!((x.column(c) - &*a).norm() == 0.0);
        }
    }

    #[test]
    fn noise_only_covariance_tends_to_identity() {
        let s = noise_only(10_000);
        let a = s.presumed().unwrap();
        let x = generate_snapshots(&s, &a, &mut s.rng(0, stream::SNAPSHOTS)).unwrap();
        let r = sample_covariance(&x).unwrap();
        let id = CMatrix::identity(10, 10);
        assert!(rel_frobenius(r.matrix(), &id) < 0.1);
        // Mean diagonal within 3 standard errors of 1: each |n|² has variance 1.
        let mean_diag: f64 = r.matrix().diagonal().iter().map(|z| z.re).sum::<f64>() / 10.0;
        assert!((mean_diag - 1.0).abs() < 3.0 / (10.0 * 10_000.0f64).sqrt());
    }

    #[test]
    fn covariance_identities() {
        let x = CVector::from_vec(vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.0), C64::new(0.0, 1.0)]);
        let r = sample_covariance(&CMatrix::from_columns(&[x.clone()])).unwrap();
        assert!((r.matrix() - &x * x.adjoint()).norm() < 1e-15);
        assert!(r.is_singular());
        assert!(matches!(r.inverse(), Err(Error::SingularCovariance { .. })));
        assert!(r.with_diagonal_loading(0.1).unwrap().inverse().is_ok());

        let m = 4;
        let snaps = CMatrix::identity(m, m).scale((m as f64).sqrt());
        let r = sample_covariance(&snaps).unwrap();
        assert!((r.matrix() - CMatrix::identity(m, m)).norm() < 1e-15);
        assert!(sample_covariance(&CMatrix::zeros(3, 0)).is_err());
    }

    #[test]
    fn simulated_covariance_is_positive_definite() {
        let s = Scenario::reference(MismatchModel::Exact);
        for run in 0..20 {
            let a = draw_actual_steering(&s, &mut s.rng(run, stream::MISMATCH)).unwrap();
            let x = generate_snapshots(&s, &a, &mut s.rng(run, stream::SNAPSHOTS)).unwrap();
            let r = sample_covariance(&x).unwrap();
            assert!(r.eigen().min() > 0.0);
            assert!(!r.is_singular());
            let inv = r.inverse().unwrap();
            assert!((inv * r.matrix() - CMatrix::identity(10, 10)).norm() < 1e-9);
        }
    }

    #[test]
    fn interference_plus_noise_covariance() {
        let s = noise_only(1);
        let r = true_interference_plus_noise_covariance(&s).unwrap();
        assert_eq!(r, CMatrix::identity(10, 10));

        let s = Scenario {
            geometry: ArrayGeometry::half_wavelength(2).unwrap(),
            presumed_doa_deg: 40.0,
            interferers: vec![Interferer { doa_deg: 0.0, inr_db: 0.0 }],
            ..noise_only(1)
        };
        let r = true_interference_plus_noise_covariance(&s).unwrap();
        let one = C64::new(1.0, 0.0);
        let expected = CMatrix::from_row_slice(2, 2, &[one + one, one, one, one + one]);
        assert!((r - expected).norm() < 1e-14);

        let s = Scenario::reference(MismatchModel::Exact);
        let r = true_interference_plus_noise_covariance(&s).unwrap();
        let e = HermitianEigen::new(&r);
        // Equal-power pair: the strong eigenvalues are 1 + INR·(M ± |d1^H d2|).
        let d1 = steering(&s.geometry, 30.0).unwrap();
        let d2 = steering(&s.geometry, 50.0).unwrap();
        let c = d1.dotc(&d2).norm();
        assert!((e.values[9] - (1.0 + 1000.0 * (10.0 + c))).abs() < 1e-8 * e.values[9]);
        assert!((e.values[8] - (1.0 + 1000.0 * (10.0 - c))).abs() < 1e-8 * e.values[9]);
        for i in 0..8 {
            assert!((e.values[i] - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn validation() {
        let mut s = Scenario::reference(MismatchModel::Exact);
        assert!(s.validate().is_ok());
        s.interferers.push(Interferer { doa_deg: 4.0, inr_db: 10.0 });
        assert!(s.validate().is_err());
        let mut s = Scenario::reference(MismatchModel::PhaseDistortion { variance: -1.0 });
        assert!(s.validate().is_err());
        s.mismatch = MismatchModel::Exact;
        s.num_snapshots = 0;
        assert!(s.validate().is_err());
    }
}
