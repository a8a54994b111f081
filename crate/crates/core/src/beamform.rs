//! Beamformer weight construction: the estimator-based beamformer and the
//! baselines it is compared against.
//!
//! Every method returns weights normalised to unit response at its own
//! steering estimate, `w^H â = 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_finite, norm_sq, phase_fix, CMatrix, CVector, HermitianEigen, C64};
use crate::sector::SectorModel;
use crate::sim::SampleCovariance;
use crate::svest::{self, SolverOptions, SvEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Proposed,
    MvSmi,
    WorstCase,
    Eigenspace,
    SubspaceClosedForm,
    SirInfinite,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Proposed,
        Method::MvSmi,
        Method::WorstCase,
        Method::Eigenspace,
        Method::SubspaceClosedForm,
        Method::SirInfinite,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::MvSmi => "mv-smi",
            Method::WorstCase => "worst-case",
            Method::Eigenspace => "eigenspace",
            Method::SubspaceClosedForm => "subspace-closed-form",
            Method::SirInfinite => "sir-infinite",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Domain(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct BeamWeights {
    pub w: CVector,
    pub method: Method,
    /// The steering estimate the weights are distortionless for.
    pub steering_estimate: CVector,
    pub diagnostics: Option<SvEstimate>,
}

impl BeamWeights {
    /// `w^H â`; equals 1 up to rounding.
    pub fn response(&self) -> C64 {
        self.w.dotc(&self.steering_estimate)
    }
}

/// `w = R⁻¹ a / (a^H R⁻¹ a)`.
fn distortionless(r_inv: &CMatrix, a: &CVector, method: Method) -> Result<BeamWeights> {
    let ra = r_inv * a;
    let denom = a.dotc(&ra);
    if !(denom.norm() > 0.0) {
        return Err(Error::Domain(format!("{method}: zero response at steering estimate")));
    }
    let w = ra.unscale(denom.re);
    if !is_finite(&w) {
        return Err(Error::Domain(format!("{method}: non-finite weights")));
    }
    Ok(BeamWeights {
        w,
        method,
        steering_estimate: a.clone(),
        diagnostics: None,
    })
}

fn check_dim(r_hat: &SampleCovariance, v: &CVector) -> Result<()> {
    if v.len() != r_hat.dim() {
        return Err(Error::Dimension {
            expected: r_hat.dim(),
            got: v.len(),
        });
    }
    Ok(())
}

/// Estimator-based beamformer: solve the dual, recover `â`, then `w = α R̂⁻¹ â`.
pub fn proposed(
    r_hat: &SampleCovariance,
    sector: &SectorModel,
    opts: SolverOptions,
) -> Result<BeamWeights> {
    let m = r_hat.dim();
    if sector.num_elements() != m {
        return Err(Error::Dimension {
            expected: m,
            got: sector.num_elements(),
        });
    }
    let r_inv = r_hat.inverse()?;
    let est = svest::estimate(&r_inv, &sector.c_tilde, sector.delta0, m, opts)?;
    let mut bw = distortionless(&r_inv, &est.a_hat, Method::Proposed)?;
    bw.diagnostics = Some(est);
    Ok(bw)
}

/// Sample-matrix-inversion MVDR with the presumed steering vector.
pub fn mv_smi(r_hat: &SampleCovariance, presumed: &CVector) -> Result<BeamWeights> {
    check_dim(r_hat, presumed)?;
    distortionless(&r_hat.inverse()?, presumed, Method::MvSmi)
}

/// Worst-case beamformer: `min w^H R̂ w` s.t. `ε‖w‖ ≤ w^H p − 1`.
///
/// Stationarity gives `w = c (R̂ + ζI)⁻¹ p` with `ζ ‖(R̂ + ζI)⁻¹ p‖ = ε` and
/// `c = 1 / (p^H g − ε‖g‖)`, `g = (R̂ + ζI)⁻¹ p`. In the eigenbasis of `R̂` the
/// left side `h(ζ)² = Σ |p_i|² ζ² / (λ_i + ζ)²` increases from 0 to `‖p‖²`, so the
/// secular equation has a unique root iff `ε < ‖p‖`.
pub fn worst_case(r_hat: &SampleCovariance, presumed: &CVector, epsilon: f64) -> Result<BeamWeights> {
    check_dim(r_hat, presumed)?;
    let norm_p = presumed.norm();
    if !(epsilon >= 0.0) || epsilon >= norm_p {
        return Err(Error::WorstCaseInfeasible {
            epsilon,
            norm: norm_p,
        });
    }
    // Singular R̂ is refused even though ζ > 0 would regularise it.
    r_hat.inverse()?;
    let eig = r_hat.eigen();
    let lambdas: Vec<f64> = eig.values.iter().copied().collect();
    let pc: Vec<f64> = (eig.vectors.adjoint() * presumed).iter().map(|z| z.norm_sqr()).collect();
    let eps2 = epsilon * epsilon;

    // f(ζ) = Σ |p_i|² ζ²/(λ_i+ζ)² − ε², increasing in ζ.
    let f = |z: f64| -> (f64, f64) {
        let mut val = -eps2;
        let mut der = 0.0;
        for (l, p) in lambdas.iter().zip(&pc) {
            let t = z / (l + z);
            val += p * t * t;
            der += 2.0 * p * t * l / ((l + z) * (l + z));
        }
        (val, der)
    };
    let zeta = if epsilon == 0.0 {
        0.0
    } else {
        let mut hi = lambdas.iter().fold(1.0f64, |a, &l| a.max(l));
        while f(hi).0 < 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        let mut z = 0.5 * hi;
        for _ in 0..200 {
            let (v, d) = f(z);
            if v > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            if v.abs() <= 1e-15 * eps2 || hi - lo <= 1e-15 * hi {
                break;
            }
            let newton = z - v / d;
            z = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        z
    };
    let inv = eig.map(|l| 1.0 / (l + zeta));
    let g = inv * presumed;
    let denom = presumed.dotc(&g).re - epsilon * g.norm();
    if !(denom > 0.0) {
        return Err(Error::Domain(format!(
            "worst-case: non-positive normaliser {denom:e} at zeta = {zeta:e}"
        )));
    }
    let w = g.unscale(denom);
    // Unit response at p is the ε = 0 limit; for ε > 0 the response is 1 + ε‖w‖.
    let resp = w.dotc(presumed).re;
    Ok(BeamWeights {
        steering_estimate: presumed.unscale(resp),
        w,
        method: Method::WorstCase,
        diagnostics: None,
    })
}

/// Eigenspace beamformer: project `p` on the dominant `subspace_dim` eigenvectors of `R̂`.
pub fn eigenspace(
    r_hat: &SampleCovariance,
    presumed: &CVector,
    subspace_dim: usize,
) -> Result<BeamWeights> {
    check_dim(r_hat, presumed)?;
    let m = r_hat.dim();
    if subspace_dim == 0 || subspace_dim > m {
        return Err(Error::Domain(format!(
            "subspace dimension must be in [1, {m}], got {subspace_dim}"
        )));
    }
    r_hat.inverse()?;
    let eig = r_hat.eigen();
    let e = eig.dominant(subspace_dim);
    let coeffs = e.adjoint() * presumed;
    let a_hat = &e * &coeffs;
    let scaled = CVector::from_fn(subspace_dim, |i, _| coeffs[i] / eig.values[m - 1 - i]);
    let w_raw = &e * scaled;
    let resp = w_raw.dotc(&a_hat).re;
    if !(resp > 0.0) {
        return Err(Error::Domain("eigenspace: presumed vector orthogonal to subspace".into()));
    }
    Ok(BeamWeights {
        w: w_raw.unscale(resp),
        method: Method::Eigenspace,
        steering_estimate: a_hat,
        diagnostics: None,
    })
}

/// Closed form under the subspace constraint: `â = √M U ρ{U^H R̂⁻¹ U}`.
pub fn subspace_closed_form(r_hat: &SampleCovariance, u_basis: &CMatrix) -> Result<BeamWeights> {
    let m = r_hat.dim();
    if u_basis.nrows() != m || u_basis.ncols() == 0 {
        return Err(Error::Dimension {
            expected: m,
            got: u_basis.nrows(),
        });
    }
    let r_inv = r_hat.inverse()?;
    let reduced = u_basis.adjoint() * &r_inv * u_basis;
    let rho = HermitianEigen::new(&reduced).vector(0);
    let mut a_hat = (u_basis * rho).scale((m as f64).sqrt());
    phase_fix(&mut a_hat);
    distortionless(&r_inv, &a_hat, Method::SubspaceClosedForm)
}

/// Unconstrained estimate `â = √M ρ{R̂⁻¹}`.
pub fn sir_infinite(r_hat: &SampleCovariance) -> Result<BeamWeights> {
    let m = r_hat.dim();
    let r_inv = r_hat.inverse()?;
    let a_hat = HermitianEigen::new(&r_inv).vector(0).scale((m as f64).sqrt());
    debug_assert!((norm_sq(&a_hat) - m as f64).abs() < 1e-8 * m as f64);
    distortionless(&r_inv, &a_hat, Method::SirInfinite)
}

/// Per-method parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    pub epsilon: f64,
    pub subspace_dim: usize,
    pub solver: SolverOptionsConfig,
}

/// Serialisable mirror of [`SolverOptions`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptionsConfig {
    pub tol: f64,
    pub null_rtol: f64,
}

impl From<SolverOptionsConfig> for SolverOptions {
    fn from(c: SolverOptionsConfig) -> Self {
        SolverOptions {
            tol: c.tol,
            null_rtol: c.null_rtol,
        }
    }
}

impl Default for SolverOptionsConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            tol: d.tol,
            null_rtol: d.null_rtol,
        }
    }
}

impl MethodParams {
    /// `ε = 0.3 M`, subspace dimension 3.
    pub fn reference(m: usize) -> Self {
        Self {
            epsilon: 0.3 * m as f64,
            subspace_dim: 3,
            solver: SolverOptionsConfig::default(),
        }
    }
}

/// Build one method's weights.
pub fn build(
    method: Method,
    r_hat: &SampleCovariance,
    presumed: &CVector,
    sector: &SectorModel,
    params: &MethodParams,
) -> Result<BeamWeights> {
    match method {
        Method::Proposed => proposed(r_hat, sector, params.solver.into()),
        Method::MvSmi => mv_smi(r_hat, presumed),
        Method::WorstCase => worst_case(r_hat, presumed, params.epsilon),
        Method::Eigenspace => eigenspace(r_hat, presumed, params.subspace_dim),
        Method::SubspaceClosedForm => subspace_closed_form(r_hat, &sector.u_basis),
        Method::SirInfinite => sir_infinite(r_hat),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_model::{steering, ArrayGeometry};
    use crate::linalg::{hermitianize, quad_form};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut impl Rng) -> C64 {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn random_cov(m: usize, seed: u64) -> SampleCovariance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = CMatrix::from_fn(m, 2 * m, |_, _| rand_c(&mut rng));
        SampleCovariance::from_matrix(hermitianize(&(&g * g.adjoint())), 2 * m).unwrap()
    }

    fn identity_cov(m: usize) -> SampleCovariance {
        SampleCovariance::from_matrix(CMatrix::identity(m, m), m).unwrap()
    }

    fn presumed(m: usize) -> CVector {
        steering(&ArrayGeometry::half_wavelength(m).unwrap(), 3.0)
            .unwrap()
            .into_inner()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("nope".parse::<Method>().is_err());
    }

    #[test]
    fn mv_smi_identity_is_matched_filter() {
        let p = presumed(6);
        let bw = mv_smi(&identity_cov(6), &p).unwrap();
        assert!((bw.w.clone() - p.unscale(6.0)).norm() < 1e-14);
        let r = random_cov(6, 1);
        let bw = mv_smi(&r, &p).unwrap();
        assert!((bw.response() - C64::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn worst_case_zero_epsilon_is_mv_smi() {
        let r = random_cov(6, 2);
        let p = presumed(6);
        let a = worst_case(&r, &p, 0.0).unwrap();
        let b = mv_smi(&r, &p).unwrap();
        assert!((a.w - b.w).norm() < 1e-12);
    }

    #[test]
    fn worst_case_constraint_active_and_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..20 {
            let r = random_cov(6, 100 + seed);
            let p = presumed(6);
            let eps = rng.random_range(0.05..0.9) * p.norm();
            let bw = worst_case(&r, &p, eps).unwrap();
            let w = &bw.w;
            let slack = eps * w.norm() - (w.dotc(&p).re - 1.0);
            assert!((-1e-6..=1e-9).contains(&slack), "slack {slack}");
            assert!(w.dotc(&p).im.abs() < 1e-10);
            // No random feasible perturbation (rescaled onto the constraint) does better.
            let obj = quad_form(r.matrix(), w);
            for _ in 0..200 {
                let dir = CVector::from_fn(6, |_, _| rand_c(&mut rng));
                let cand = w + dir.scale(rng.random_range(0.0..0.1) * w.norm());
                let s = cand.dotc(&p).re - eps * cand.norm();
                if s <= 0.0 {
                    continue;
                }
                let cand = cand.unscale(s);
                assert!(quad_form(r.matrix(), &cand) >= obj * (1.0 - 1e-9));
            }
        }
    }

    #[test]
    fn worst_case_converges_to_mv_smi() {
        let r = random_cov(6, 3);
        let p = presumed(6);
        let base = quad_form(r.matrix(), &mv_smi(&r, &p).unwrap().w);
        let d2 = (quad_form(r.matrix(), &worst_case(&r, &p, 1e-2).unwrap().w) - base).abs();
        let d4 = (quad_form(r.matrix(), &worst_case(&r, &p, 1e-4).unwrap().w) - base).abs();
        assert!(d4 < d2 && d4 < 1e-3 * base);
    }

    #[test]
    fn worst_case_rejects_large_epsilon() {
        let p = presumed(4);
        assert!(matches!(
            worst_case(&identity_cov(4), &p, 2.0),
            Err(Error::WorstCaseInfeasible { .. })
        ));
    }

    #[test]
    fn eigenspace_cases() {
        let r = random_cov(5, 4);
        let p = presumed(5);
        let a = eigenspace(&r, &p, 5).unwrap();
        let b = mv_smi(&r, &p).unwrap();
        assert!((a.w - b.w).norm() < 1e-10);
        assert!(eigenspace(&r, &p, 0).is_err() && eigenspace(&r, &p, 6).is_err());

        let mut diag = CMatrix::identity(4, 4);
        diag[(0, 0)] = C64::new(10.0, 0.0);
        let r = SampleCovariance::from_matrix(diag, 4).unwrap();
        let mut e1 = CVector::zeros(4);
        e1[0] = C64::new(1.0, 0.0);
        let bw = eigenspace(&r, &e1, 1).unwrap();
        // w ∝ e1/10, normalised to unit response at â = e1.
        assert!((bw.w[0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(bw.w.rows(1, 3).norm() < 1e-12);
    }

    #[test]
    fn subspace_closed_form_stays_in_range() {
        let r = random_cov(8, 5);
        let g = ArrayGeometry::half_wavelength(8).unwrap();
        let sm = SectorModel::build(&g, crate::sector::AngularSector::centered(3.0, 5.0).unwrap(), 0.5, 4).unwrap();
        let bw = subspace_closed_form(&r, &sm.u_basis).unwrap();
        assert!((sm.projector_perp() * &bw.steering_estimate).norm() < 1e-10);
        assert!((norm_sq(&bw.steering_estimate) - 8.0).abs() < 1e-10);

        let full = HermitianEigen::new(&CMatrix::from_fn(8, 8, |i, j| {
            C64::new((i + j) as f64, (i as f64) - (j as f64))
        }))
        .vectors;
        let a = subspace_closed_form(&r, &full).unwrap();
        let b = sir_infinite(&r).unwrap();
        let overlap = a.steering_estimate.dotc(&b.steering_estimate).norm() / 8.0;
        assert!((overlap - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sir_infinite_on_identity_is_distortionless() {
        let bw = sir_infinite(&identity_cov(5)).unwrap();
        assert!((bw.response() - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn proposed_collapses_when_constraint_vacuous() {
        let r = random_cov(6, 6);
        let g = ArrayGeometry::half_wavelength(6).unwrap();
        let mut sm = SectorModel::build(&g, crate::sector::AngularSector::centered(3.0, 5.0).unwrap(), 0.5, 3).unwrap();
        sm.c_tilde = CMatrix::identity(6, 6);
        sm.c_tilde_min_eig = 1.0;
        sm.c_tilde_max_eig = 1.0;
        sm.delta0 = 7.0;
        let a = proposed(&r, &sm, SolverOptions::default()).unwrap();
        let b = sir_infinite(&r).unwrap();
        assert!((&a.w - &b.w).norm() < 1e-10 * b.w.norm());
    }

    #[test]
    fn singular_covariance_refused() {
        let x = CMatrix::from_fn(4, 2, |i, j| C64::new((i + j) as f64, 1.0));
        let r = crate::sim::sample_covariance(&x).unwrap();
        let p = presumed(4);
        assert!(matches!(mv_smi(&r, &p), Err(Error::SingularCovariance { .. })));
        assert!(matches!(sir_infinite(&r), Err(Error::SingularCovariance { .. })));
    }
}
