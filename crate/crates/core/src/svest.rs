//! Steering-vector estimation by strong duality.
//!
//! The estimate solves
//!
//! ```text
//! min  a^H R̂⁻¹ a   s.t.  ‖a‖² = M,  a^H C̃ a ≤ Δ₀
//! ```
//!
//! through its two-multiplier dual
//!
//! ```text
//! max  γ₁ M − γ₂ Δ₀   s.t.  R̂⁻¹ − γ₁ I + γ₂ C̃ ⪰ 0,  γ₂ ≥ 0.
//! ```
//!
//! For fixed `γ₂` the best `γ₁` is `λ_min(R̂⁻¹ + γ₂ C̃)`, so the dual collapses to
//! the concave scalar function `g(γ₂) = M·λ_min(R̂⁻¹ + γ₂ C̃) − γ₂ Δ₀`, maximised
//! here by bracketing and bisection on its supergradient. The primal estimate is
//! then read off the null space of the certificate matrix
//! `R̂⁻¹ − γ₁ I + γ₂ C̃`.
//!
//! [`rank_one_extract`] and [`theorem1_feasible_point`] work on solutions of the
//! lifted (relaxed) problem `min Tr(R̂⁻¹A)` over `A ⪰ 0, Tr A = M, Tr(C̃A) ≤ Δ₀`
//! and turn them into vectors feasible for (and, for optimal `A`, optimal in)
//! the original problem.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{norm_sq, phase_fix, quad_form, CMatrix, CVector, HermitianEigen, C64};
use crate::sector::{classify, Feasibility};

pub const DEFAULT_SOLVER_TOL: f64 = 1e-12;
pub const DEFAULT_NULL_RTOL: f64 = 1e-8;
/// Eigenvalues this close (relative) to the minimum count as one eigenspace when
/// picking the supergradient.
pub const MULTIPLICITY_RTOL: f64 = 1e-10;
pub const GAMMA2_CAP: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative bracket width at which bisection stops.
    pub tol: f64,
    /// Zero-eigenvalue threshold of the certificate matrix, relative to
    /// `λ_max(R̂⁻¹ + γ₂ C̃)`.
    pub null_rtol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_SOLVER_TOL,
            null_rtol: DEFAULT_NULL_RTOL,
        }
    }
}

/// One evaluation of the scalar dual function.
#[derive(Debug, Clone)]
pub struct DualPoint {
    pub gamma2: f64,
    pub value: f64,
    pub gamma1: f64,
    /// Right derivative `M·u^H C̃ u − Δ₀`.
    pub subgradient: f64,
    pub min_eigvec: CVector,
}

/// `g(γ₂)`, the optimal `γ₁` and a supergradient.
///
/// When the smallest eigenvalue is repeated, `u` is the vector of the minimal
/// eigenspace minimising `u^H C̃ u`, which makes the supergradient the right
/// derivative of `g`.
pub fn dual_objective(
    gamma2: f64,
    r_inv: &CMatrix,
    c_tilde: &CMatrix,
    delta0: f64,
    m: usize,
) -> DualPoint {
    let mf = m as f64;
    let mat = r_inv + c_tilde.scale(gamma2);
    let eig = HermitianEigen::new(&mat);
    let gamma1 = eig.min();
    let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mult = eig.multiplicity_of_min(MULTIPLICITY_RTOL * scale);
    let u = if mult == 1 {
        eig.vector(0)
    } else {
        let f = eig.smallest(mult);
        let b = f.adjoint() * c_tilde * &f;
        let fmin = HermitianEigen::new(&b).vector(0);
        let mut u = &f * fmin;
        let n = u.norm();
        u.unscale_mut(n);
        u
    };
    let subgradient = mf * quad_form(c_tilde, &u) - delta0;
    DualPoint {
        gamma2,
        value: mf * gamma1 - gamma2 * delta0,
        gamma1,
        subgradient,
        min_eigvec: u,
    }
}

/// Optimal dual multipliers.
#[derive(Debug, Clone, Serialize)]
pub struct DualSolution {
    pub gamma1: f64,
    pub gamma2: f64,
    /// `γ₁ M − γ₂ Δ₀`.
    pub dual_value: f64,
    /// Number of (numerically) zero eigenvalues of `R̂⁻¹ − γ₁ I + γ₂ C̃`.
    pub null_dim: usize,
    pub null_rtol: f64,
    /// Bisection steps used (0 when the constraint is inactive at `γ₂ = 0`).
    pub iterations: usize,
}

/// The certificate matrix `R̂⁻¹ − γ₁ I + γ₂ C̃`, its eigendecomposition and zero tolerance.
struct Certificate {
    eigen: HermitianEigen,
    zero_tol: f64,
}

impl Certificate {
    fn new(r_inv: &CMatrix, c_tilde: &CMatrix, gamma1: f64, gamma2: f64, null_rtol: f64) -> Self {
        let n = r_inv.nrows();
        let unshifted = r_inv + c_tilde.scale(gamma2);
        let eigen = HermitianEigen::new(&(unshifted - CMatrix::identity(n, n).scale(gamma1)));
        let scale = (eigen.max() + gamma1).abs().max(eigen.max().abs());
        Self {
            eigen,
            zero_tol: null_rtol * scale,
        }
    }

    fn null_dim(&self) -> usize {
        self.eigen
            .values
            .iter()
            .filter(|&&v| v <= self.zero_tol)
            .count()
            .max(1)
    }
}

fn check_operands(r_inv: &CMatrix, c_tilde: &CMatrix, m: usize) -> Result<()> {
    for a in [r_inv, c_tilde] {
        if a.nrows() != m || a.ncols() != m {
            return Err(Error::Dimension {
                expected: m,
                got: a.nrows(),
            });
        }
    }
    Ok(())
}

/// Maximise the scalar dual over `γ₂ ∈ [0, GAMMA2_CAP]`.
pub fn solve_dual(
    r_inv: &CMatrix,
    c_tilde: &CMatrix,
    delta0: f64,
    m: usize,
    opts: SolverOptions,
) -> Result<DualSolution> {
    check_operands(r_inv, c_tilde, m)?;
    let ct = HermitianEigen::new(c_tilde);
    match classify(ct.min(), ct.max(), delta0, m) {
        Feasibility::StrictlyFeasible => {}
        Feasibility::Boundary => {
            return Err(Error::BoundaryFeasible {
                lambda_min: ct.min(),
            })
        }
        Feasibility::Infeasible => {
            return Err(Error::Infeasible {
                ratio: delta0 / m as f64,
                lambda_min: ct.min(),
            })
        }
    }

    let sub = |g: f64| dual_objective(g, r_inv, c_tilde, delta0, m).subgradient;
    let mut iterations = 0;
    let gamma2 = if sub(0.0) <= 0.0 {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        while sub(hi) > 0.0 {
            lo = hi;
            hi *= 2.0;
            iterations += 1;
            if hi > GAMMA2_CAP {
                return Err(Error::Recovery(format!(
                    "supergradient still positive at gamma2 = {hi:e}"
                )));
            }
        }
        while hi - lo > opts.tol * (1.0 + hi) {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if sub(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            iterations += 1;
        }
        // The right end has a non-positive supergradient, so its minimal
        // eigenvector meets the constraint.
        hi
    };

    let point = dual_objective(gamma2, r_inv, c_tilde, delta0, m);
    let cert = Certificate::new(r_inv, c_tilde, point.gamma1, gamma2, opts.null_rtol);
    Ok(DualSolution {
        gamma1: point.gamma1,
        gamma2,
        dual_value: point.value,
        null_dim: cert.null_dim(),
        null_rtol: opts.null_rtol,
        iterations,
    })
}

/// KKT residuals of a candidate estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KktResiduals {
    /// `‖(R̂⁻¹ − γ₁ I + γ₂ C̃) a‖ / ‖a‖`.
    pub stationarity: f64,
    /// `|a^H a − M| / M`.
    pub norm_gap: f64,
    /// `|γ₂ (a^H C̃ a − Δ₀)|`.
    pub slackness: f64,
    /// `a^H C̃ a − Δ₀`; non-positive when feasible.
    pub constraint_margin: f64,
}

impl KktResiduals {
    /// Largest violation; a positive constraint margin counts as a violation.
    pub fn max_violation(&self) -> f64 {
        self.stationarity
            .max(self.norm_gap)
            .max(self.slackness)
            .max(self.constraint_margin.max(0.0))
    }
}

pub fn kkt_check(
    a_hat: &CVector,
    gamma1: f64,
    gamma2: f64,
    r_inv: &CMatrix,
    c_tilde: &CMatrix,
    delta0: f64,
    m: usize,
) -> KktResiduals {
    let n = r_inv.nrows();
    let q = r_inv - CMatrix::identity(n, n).scale(gamma1) + c_tilde.scale(gamma2);
    let ca = quad_form(c_tilde, a_hat);
    KktResiduals {
        stationarity: (q * a_hat).norm() / a_hat.norm(),
        norm_gap: (norm_sq(a_hat) - m as f64).abs() / m as f64,
        slackness: (gamma2 * (ca - delta0)).abs(),
        constraint_margin: ca - delta0,
    }
}

/// Which branch of the null-space recovery produced the estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryCase {
    /// One-dimensional null space: `â = √M ρ{R̂⁻¹ − γ₁ I + γ₂ C̃}`.
    SimpleNull,
    /// Repeated null space with an inactive constraint (`γ₂ = 0`).
    DegenerateInactive,
    /// Repeated null space with an active constraint: two-eigenvector blend.
    DegenerateActive,
}

#[derive(Debug, Clone)]
pub struct SvEstimate {
    pub a_hat: CVector,
    /// `â^H R̂⁻¹ â`.
    pub objective: f64,
    pub dual: DualSolution,
    pub kkt: KktResiduals,
    pub case: RecoveryCase,
}

impl SvEstimate {
    pub fn duality_gap(&self) -> f64 {
        (self.objective - self.dual.dual_value).abs()
    }

    /// The constraint is inactive: `γ₂* = 0` and `â^H C̃ â < Δ₀`.
    pub fn constraint_inactive(&self) -> bool {
        self.dual.gamma2 == 0.0 && self.kkt.constraint_margin < 0.0
    }
}

/// Primal estimate from an optimal dual pair.
pub fn recover_primal(
    dual: &DualSolution,
    r_inv: &CMatrix,
    c_tilde: &CMatrix,
    delta0: f64,
    m: usize,
) -> Result<SvEstimate> {
    check_operands(r_inv, c_tilde, m)?;
    let mf = m as f64;
    let cert = Certificate::new(r_inv, c_tilde, dual.gamma1, dual.gamma2, dual.null_rtol);
    let q = cert.null_dim();
    let (mut a_hat, case) = if q == 1 {
        (cert.eigen.vector(0).scale(mf.sqrt()), RecoveryCase::SimpleNull)
    } else {
        let f = cert.eigen.smallest(q);
        let b = f.adjoint() * c_tilde * &f;
        let be = HermitianEigen::new(&b);
        let (mu_min, mu_max) = (be.min(), be.max());
        let f_min = be.vector(0);
        if dual.gamma2 == 0.0 {
            (
                &f * f_min.scale(mf.sqrt()),
                RecoveryCase::DegenerateInactive,
            )
        } else {
            let target = delta0 / mf;
            let tol = 1e-9 * (1.0 + target.abs() + mu_max.abs());
            if mu_max < target - tol || mu_min > target + tol {
                return Err(Error::Recovery(format!(
                    "null space of dimension {q} cannot meet the active constraint: \
                     mu_min = {mu_min:e}, mu_max = {mu_max:e}, delta0/M = {target:e}, \
                     gamma1 = {:e}, gamma2 = {:e}",
                    dual.gamma1, dual.gamma2
                )));
            }
            let theta = if mu_max - mu_min > 0.0 {
                ((target - mu_min) / (mu_max - mu_min)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let f_max = be.vector(be.dim() - 1);
            let coef = f_min.scale((1.0 - theta).sqrt()) + f_max.scale(theta.sqrt());
            (&f * coef.scale(mf.sqrt()), RecoveryCase::DegenerateActive)
        }
    };
    phase_fix(&mut a_hat);
    let objective = quad_form(r_inv, &a_hat);
    let kkt = kkt_check(&a_hat, dual.gamma1, dual.gamma2, r_inv, c_tilde, delta0, m);
    let mut dual = dual.clone();
    dual.null_dim = q;
    Ok(SvEstimate {
        a_hat,
        objective,
        dual,
        kkt,
        case,
    })
}

/// `solve_dual` followed by `recover_primal`.
pub fn estimate(
    r_inv: &CMatrix,
    c_tilde: &CMatrix,
    delta0: f64,
    m: usize,
    opts: SolverOptions,
) -> Result<SvEstimate> {
    let dual = solve_dual(r_inv, c_tilde, delta0, m, opts)?;
    recover_primal(&dual, r_inv, c_tilde, delta0, m)
}

/// A solution `A = Y Y^H` of the relaxed (lifted) problem.
#[derive(Debug, Clone)]
pub struct RelaxedSolution {
    pub a_matrix: CMatrix,
    pub rank: usize,
    pub factor: CMatrix,
}

impl RelaxedSolution {
    /// Factor `A` through its eigendecomposition, keeping eigenvalues above
    /// `rank_rtol·λ_max`.
    pub fn from_matrix(a: &CMatrix, rank_rtol: f64) -> Result<Self> {
        let eig = HermitianEigen::new(a);
        let n = eig.dim();
        if eig.min() < -rank_rtol.max(1e-10) * eig.max().abs().max(1.0) {
            return Err(Error::Domain(format!(
                "relaxed solution is not PSD: lambda_min = {:e}",
                eig.min()
            )));
        }
        let keep: Vec<usize> = (0..n)
            .rev()
            .filter(|&i| eig.values[i] > rank_rtol * eig.max())
            .collect();
        if keep.is_empty() {
            return Err(Error::Domain("relaxed solution is zero".into()));
        }
        let cols: Vec<CVector> = keep
            .iter()
            .map(|&i| eig.vector(i).scale(eig.values[i].sqrt()))
            .collect();
        Ok(Self {
            a_matrix: a.clone(),
            rank: cols.len(),
            factor: CMatrix::from_columns(&cols),
        })
    }

    pub fn from_factor(y: CMatrix) -> Self {
        Self {
            a_matrix: &y * y.adjoint(),
            rank: y.ncols(),
            factor: y,
        }
    }

    pub fn trace(&self) -> f64 {
        self.a_matrix.trace().re
    }

    /// `Tr(B A)` for Hermitian `B`.
    pub fn trace_with(&self, b: &CMatrix) -> f64 {
        (b * &self.a_matrix).trace().re
    }
}

/// `D = (1/M) Y^H Y − Y^H C̃ Y / Tr(Y^H C̃ Y)`.
pub fn extraction_matrix(factor: &CMatrix, c_tilde: &CMatrix, m: usize) -> CMatrix {
    let g = factor.adjoint() * factor;
    let h = factor.adjoint() * c_tilde * factor;
    let t = h.trace().re;
    g.unscale(m as f64) - h.unscale(t)
}

/// Rank-one vector `x = Y v` with `‖x‖² = M` and `x^H C̃ x = Tr(C̃ A)`.
///
/// `v` is the sum of the eigenvectors of [`extraction_matrix`]; since `Tr D = 0`
/// and the eigenvectors are orthonormal, `v^H D v = 0`. When that candidate
/// misses the moment equalities numerically, the extreme eigenpairs
/// `(λ₊, e₊), (λ₋, e₋)` of `D` are combined as `√(−λ₋) e₊ + √λ₊ e₋`.
pub fn rank_one_extract(relaxed: &RelaxedSolution, c_tilde: &CMatrix, m: usize) -> Result<CVector> {
    let y = &relaxed.factor;
    let mf = m as f64;
    if y.nrows() != c_tilde.nrows() || y.ncols() == 0 {
        return Err(Error::Dimension {
            expected: c_tilde.nrows(),
            got: y.nrows(),
        });
    }
    let gram = y.adjoint() * y;
    let target_c = relaxed.trace_with(c_tilde);
    let finish = |v: &CVector| -> CVector {
        let mut x = y * v;
        let n = x.norm();
        x.scale_mut(mf.sqrt() / n);
        phase_fix(&mut x);
        x
    };
    if y.ncols() == 1 {
        return Ok(finish(&CVector::from_element(1, C64::new(1.0, 0.0))));
    }
    let c_scale = c_tilde.norm().max(f64::MIN_POSITIVE) * mf;
    if target_c <= 1e-14 * c_scale {
        // Tr(C̃A) = 0 forces C̃Y = 0, so every Yv meets the second equality.
        let v = HermitianEigen::new(&gram).vector(gram.nrows() - 1);
        return Ok(finish(&v));
    }
    let d = extraction_matrix(y, c_tilde, m);
    let eig = HermitianEigen::new(&d);
    let r = eig.dim();
    let meets = |x: &CVector| {
        let cx = quad_form(c_tilde, x);
        (cx - target_c).abs() <= 1e-6 * target_c && (norm_sq(x) - mf).abs() <= 1e-9 * mf
    };

    let v_sum = (0..r).fold(CVector::zeros(r), |acc, i| acc + eig.vector(i));
    let x = finish(&v_sum);
    if meets(&x) {
        return Ok(x);
    }
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 && hi >= 0.0 && hi - lo > 0.0 {
        let v = eig.vector(r - 1).scale((-lo).sqrt()) + eig.vector(0).scale(hi.sqrt());
        let x = finish(&v);
        if meets(&x) {
            return Ok(x);
        }
    }
    Err(Error::Extraction(format!(
        "no combination met x^H C~ x = Tr(C~ A) = {target_c:e}; eig(D) in [{lo:e}, {hi:e}], Tr D = {:e}",
        d.trace().re
    )))
}

/// Original-feasible point `√M b_l` built from a relaxed-feasible `A`.
///
/// `b_l` is the eigenvector of `A` (over its support) with the smallest
/// `b^H C̃ b`. Inside a repeated eigenvalue of `A` the basis is rotated to
/// diagonalise `C̃`, so the minimum is taken over the whole eigenspace.
pub fn theorem1_feasible_point(a: &CMatrix, c_tilde: &CMatrix, m: usize) -> CVector {
    let eig = HermitianEigen::new(a);
    let n = eig.dim();
    let support_tol = 1e-12 * eig.max().abs().max(f64::MIN_POSITIVE);
    let cluster_tol = 1e-10 * eig.max().abs().max(f64::MIN_POSITIVE);
    let mut best: Option<(f64, CVector)> = None;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && eig.values[end] - eig.values[start] <= cluster_tol {
            end += 1;
        }
        if eig.values[end - 1] > support_tol {
            let cols: Vec<CVector> = (start..end).map(|i| eig.vector(i)).collect();
            let f = CMatrix::from_columns(&cols);
            let be = HermitianEigen::new(&(f.adjoint() * c_tilde * &f));
            let mut b = &f * be.vector(0);
            let nb = b.norm();
            b.unscale_mut(nb);
            let val = quad_form(c_tilde, &b);
            if best.as_ref().is_none_or(|(v, _)| val < *v) {
                best = Some((val, b));
            }
        }
        start = end;
    }
    let mut a_hat = best
        .map(|(_, b)| b)
        .unwrap_or_else(|| eig.vector(n - 1))
        .scale((m as f64).sqrt());
    phase_fix(&mut a_hat);
    a_hat
}
