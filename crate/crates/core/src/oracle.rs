//! Brute-force reference solvers used to check the estimator: an exhaustive
//! grid over the scalar dual, and multistart local search on the original
//! non-convex problem for small arrays.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{
    hermitianize, min_eigvec, norm_sq, orthonormalize, quad_form, CMatrix, CVector,
    HermitianEigen, C64,
};
use crate::sector::{classify, Feasibility};
use crate::sim::complex_gaussian;
use crate::svest::dual_objective;

/// Largest array handled by [`multistart_primal_oracle`].
pub const MAX_ORACLE_DIM: usize = 6;

const PENALTY_ROUNDS: usize = 7;
const AL_ROUNDS: usize = 20;
const INNER_ITERS: usize = 4000;

fn require_strict(c_tilde: &CMatrix, delta0: f64, m: usize) -> Result<HermitianEigen> {
    let eig = HermitianEigen::new(c_tilde);
    match classify(eig.min(), eig.max(), delta0, m) {
        Feasibility::StrictlyFeasible => Ok(eig),
        _ => Err(Error::Oracle(format!(
            "instance is not strictly feasible: delta0/M = {:e}, lambda_min = {:e}",
            delta0 / m as f64,
            eig.min()
        ))),
    }
}

/// Maximise the dual function over `γ₂ = lo + i·step`; ties go to the smaller `γ₂`.
pub fn grid_dual_oracle(
    r_inv: &CMatrix,
    c_tilde: &CMatrix,
    delta0: f64,
    m: usize,
    bracket: (f64, f64),
    step: f64,
) -> Result<(f64, f64)> {
    let (lo, hi) = bracket;
    if !(step > 0.0) || !(lo >= 0.0) || !(hi >= lo) {
        return Err(Error::Oracle(format!(
            "bad grid: bracket [{lo}, {hi}], step {step}"
        )));
    }
    require_strict(c_tilde, delta0, m)?;
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let values: Vec<(f64, f64)> = (0..=n)
        .into_par_iter()
        .map(|i| {
            let g = lo + i as f64 * step;
            (g, dual_objective(g, r_inv, c_tilde, delta0, m).value)
        })
        .collect();
    Ok(values
        .into_iter()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, (g, v)| {
            if v > best.1 {
                (g, v)
            } else {
                best
            }
        }))
}

struct Problem<'a> {
    q: &'a CMatrix,
    c: &'a CMatrix,
    delta0: f64,
    m: f64,
    /// `min_eig(C̃)` direction, always strictly feasible.
    c_min: CVector,
}

impl Problem<'_> {
    fn g(&self, a: &CVector) -> f64 {
        quad_form(self.c, a) - self.delta0
    }

    fn on_sphere(&self, v: &CVector) -> CVector {
        v.scale(self.m.sqrt() / v.norm())
    }

    /// Augmented Lagrangian value and (Wirtinger) gradient.
    fn merit(&self, a: &CVector, lambda: f64, rho: f64) -> (f64, CVector) {
        let qa = self.q * a;
        let ca = self.c * a;
        let g = a.dotc(&ca).re - self.delta0;
        let s = (lambda + rho * g).max(0.0);
        let value = a.dotc(&qa).re + (s * s - lambda * lambda) / (2.0 * rho);
        (value, (qa + ca.scale(s)).scale(2.0))
    }

    fn tangent(&self, a: &CVector, grad: &CVector) -> CVector {
        grad - a.scale(a.dotc(grad).re / norm_sq(a))
    }

    /// Riemannian gradient descent with Barzilai-Borwein steps and Armijo backtracking.
    fn descend(&self, mut a: CVector, lambda: f64, rho: f64, gtol: f64) -> CVector {
        let (mut f, grad) = self.merit(&a, lambda, rho);
        let mut rg = self.tangent(&a, &grad);
        let mut t = 1.0 / (2.0 * self.m);
        for _ in 0..INNER_ITERS {
            let gn2 = norm_sq(&rg);
            if gn2.sqrt() <= gtol {
                break;
            }
            let mut step = t;
            let mut accepted = None;
            for _ in 0..60 {
                let cand = self.on_sphere(&(&a - rg.scale(step)));
                let (fc, gc) = self.merit(&cand, lambda, rho);
                if fc <= f - 1e-4 * step * gn2 {
                    accepted = Some((cand, fc, gc));
                    break;
                }
                step *= 0.5;
            }
            let Some((next, fnext, gnext)) = accepted else {
                break;
            };
            let rg_next = self.tangent(&next, &gnext);
            let s = &next - &a;
            let y = &rg_next - &rg;
            let sy = s.dotc(&y).re;
            t = if sy > 0.0 { norm_sq(&s) / sy } else { step * 2.0 };
            a = next;
            f = fnext;
            rg = rg_next;
        }
        a
    }

    /// Walk along the sphere toward the `C̃`-minimising direction until the
    /// constraint holds.
    fn restore(&self, a: &CVector) -> CVector {
        if self.g(a) <= 0.0 {
            return a.clone();
        }
        let phase = {
            let z = self.c_min.dotc(a);
            if z.norm() > 0.0 {
                z / z.norm()
            } else {
                C64::new(1.0, 0.0)
            }
        };
        let v = self.c_min.scale(self.m.sqrt()).map(|x| x * phase);
        let path = |s: f64| self.on_sphere(&(a.scale(1.0 - s) + v.scale(s)));
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.g(&path(mid)) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-16 {
                break;
            }
        }
        path(hi)
    }

    fn local_min(&self, start: CVector, scale_q: f64, scale_c: f64) -> CVector {
        let mut a = self.on_sphere(&start);
        let gtol = 1e-9 * scale_q * self.m.sqrt();
        let mut rho = scale_q / (self.m * scale_c * scale_c);
        let mut lambda = 0.0;
        // Escalating quadratic penalty, then multiplier updates at the final weight.
        for round in 0..PENALTY_ROUNDS + AL_ROUNDS {
            a = self.descend(a, lambda, rho, gtol);
            let g = self.g(&a);
            let next = (lambda + rho * g).max(0.0);
            let moved = (next - lambda).abs();
            lambda = next;
            if round + 1 < PENALTY_ROUNDS {
                rho *= 10.0;
            } else if moved <= 1e-13 * (1.0 + lambda) && g <= 1e-12 * scale_c * self.m {
                break;
            }
        }
        self.restore(&a)
    }
}

/// Random initial points for start `index`.
fn start_point(index: usize, m: usize) -> CVector {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + index as u64);
    CVector::from_fn(m, |_, _| complex_gaussian(&mut rng))
}

/// Best feasible local minimum of `a^H R̂⁻¹ a` over `‖a‖² = M`, `a^H C̃ a ≤ Δ₀`.
///
/// Two structured starts (`√M ρ{R̂⁻¹}` and the `C̃`-minimising direction) are
/// followed by `starts` random ones. Returns `(a, a^H R̂⁻¹ a)`.
pub fn multistart_primal_oracle(
    r_inv: &CMatrix,
    c_tilde: &CMatrix,
    delta0: f64,
    m: usize,
    starts: usize,
) -> Result<(CVector, f64)> {
    if m > MAX_ORACLE_DIM {
        return Err(Error::Oracle(format!(
            "multistart oracle is limited to M <= {MAX_ORACLE_DIM}, got {m}"
        )));
    }
    if r_inv.nrows() != m || c_tilde.nrows() != m {
        return Err(Error::Dimension {
            expected: m,
            got: r_inv.nrows(),
        });
    }
    let ceig = require_strict(c_tilde, delta0, m)?;
    let qeig = HermitianEigen::new(r_inv);
    let problem = Problem {
        q: r_inv,
        c: c_tilde,
        delta0,
        m: m as f64,
        c_min: ceig.vector(0),
    };
    let scale_q = qeig.max().abs().max(f64::MIN_POSITIVE);
    let scale_c = ceig.max().abs().max(f64::MIN_POSITIVE);

    let mut inits = vec![qeig.vector(0), ceig.vector(0)];
    inits.extend((0..starts).map(|i| start_point(i, m)));
    let results: Vec<(CVector, f64)> = inits
        .into_par_iter()
        .map(|s| {
            let a = problem.local_min(s, scale_q, scale_c);
            let obj = quad_form(r_inv, &a);
            (a, obj)
        })
        .collect();
    results
        .into_iter()
        .filter(|(a, obj)| obj.is_finite() && problem.g(a) <= 0.0)
        .fold(None, |best: Option<(CVector, f64)>, cand| match best {
            Some(b) if b.1 <= cand.1 => Some(b),
            _ => Some(cand),
        })
        .ok_or_else(|| Error::Oracle("no feasible local minimum found".into()))
}

/// A random strictly feasible estimator instance.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub r_inv: CMatrix,
    pub c_tilde: CMatrix,
    pub delta0: f64,
    pub m: usize,
}

impl RandomInstance {
    /// `R̂⁻¹` with eigenvalues log-uniform in `[0.1, 10]` and a random
    /// eigenbasis; `C̃ = G G^H` of random rank with unit trace; `Δ₀/M` placed a
    /// random fraction of the way between the extreme eigenvalues of `C̃`.
    pub fn generate(m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = CMatrix::from_fn(m, m, |_, _| complex_gaussian(&mut rng));
        let u = orthonormalize(&g, 1e-12);
        let vals: Vec<f64> = (0..m)
            .map(|_| 10f64.powf(rng.random_range(-1.0..1.0)))
            .collect();
        let d = CMatrix::from_diagonal(&CVector::from_iterator(
            m,
            vals.iter().map(|&v| C64::new(v, 0.0)),
        ));
        let r_inv = hermitianize(&(&u * d * u.adjoint()));

        let rank = rng.random_range(1..=m);
        let h = CMatrix::from_fn(m, rank, |_, _| complex_gaussian(&mut rng));
        let mut c_tilde = hermitianize(&(&h * h.adjoint()));
        let tr = c_tilde.trace().re;
        c_tilde.unscale_mut(tr);
        let ce = HermitianEigen::new(&c_tilde);
        let t = rng.random_range(0.02..0.9);
        let delta0 = m as f64 * (ce.min().max(0.0) + t * (ce.max() - ce.min().max(0.0)));
        Self {
            r_inv,
            c_tilde,
            delta0,
            m,
        }
    }
}

/// `√M ρ{R̂⁻¹}`, the unconstrained minimiser (test convenience).
pub fn unconstrained_minimizer(r_inv: &CMatrix) -> CVector {
    min_eigvec(r_inv).scale((r_inv.nrows() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::svest::{estimate, solve_dual, SolverOptions};

    #[test]
    fn grid_inactive_constraint() {
        let inst = RandomInstance::generate(4, 3);
        let id = CMatrix::identity(4, 4);
        let (g, _) = grid_dual_oracle(&inst.r_inv, &id, 4.5, 4, (0.0, 2.0), 1e-3).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn grid_sandwich_and_refinement() {
        for seed in 0..5 {
            let inst = RandomInstance::generate(6, 100 + seed);
            let sol = solve_dual(&inst.r_inv, &inst.c_tilde, inst.delta0, 6, SolverOptions::default()).unwrap();
            let hi = 2.0 * sol.gamma2 + 1.0;
            let step = hi / 2000.0;
            let (_, v) = grid_dual_oracle(&inst.r_inv, &inst.c_tilde, inst.delta0, 6, (0.0, hi), step).unwrap();
            assert!(v <= sol.dual_value + 1e-6, "{v} > {}", sol.dual_value);
            let k = (sol.gamma2 / step).floor();
            for g in [k * step, (k + 1.0) * step] {
                let nb = dual_objective(g, &inst.r_inv, &inst.c_tilde, inst.delta0, 6).value;
                assert!(v >= nb - 1e-12);
            }
            let (_, v2) = grid_dual_oracle(&inst.r_inv, &inst.c_tilde, inst.delta0, 6, (0.0, hi), step / 2.0).unwrap();
            assert!(v2 >= v - 1e-12 && v2 - v < 1e-3 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn grid_rejects_bad_input() {
        let inst = RandomInstance::generate(3, 1);
        assert!(grid_dual_oracle(&inst.r_inv, &inst.c_tilde, inst.delta0, 3, (0.0, 1.0), 0.0).is_err());
        assert!(grid_dual_oracle(&inst.r_inv, &inst.c_tilde, inst.delta0, 3, (1.0, 0.0), 0.1).is_err());
    }

    #[test]
    fn primal_inactive_constraint_matches_rayleigh() {
        let inst = RandomInstance::generate(4, 9);
        let id = CMatrix::identity(4, 4);
        let (a, obj) = multistart_primal_oracle(&inst.r_inv, &id, 4.5, 4, 4).unwrap();
        let expect = unconstrained_minimizer(&inst.r_inv);
        assert!((a.dotc(&expect).norm() - 4.0).abs() < 1e-6);
        assert!((obj - quad_form(&inst.r_inv, &expect)).abs() < 1e-9);
    }

    #[test]
    fn primal_matches_estimator() {
        for m in [3usize, 4, 6] {
            for seed in 0..8 {
                let inst = RandomInstance::generate(m, 1000 * m as u64 + seed);
                let est = estimate(&inst.r_inv, &inst.c_tilde, inst.delta0, m, SolverOptions::default()).unwrap();
                let (a, obj) = multistart_primal_oracle(&inst.r_inv, &inst.c_tilde, inst.delta0, m, 8).unwrap();
                assert!((norm_sq(&a) - m as f64).abs() < 1e-9);
                assert!(quad_form(&inst.c_tilde, &a) <= inst.delta0 + 1e-12);
                assert!(obj >= est.dual.dual_value - 1e-5 * (1.0 + obj));
                assert!((obj - est.objective).abs() <= 1e-5 * (1.0 + est.objective),
                    "m={m} seed={seed}: oracle {obj} estimator {}", est.objective);
            }
        }
    }

    #[test]
    fn rejects_large_arrays() {
        let inst = RandomInstance::generate(7, 0);
        assert!(multistart_primal_oracle(&inst.r_inv, &inst.c_tilde, inst.delta0, 7, 1).is_err());
    }

    #[test]
    fn random_instances_are_strictly_feasible() {
        for seed in 0..50 {
            let inst = RandomInstance::generate(5, seed);
            let e = HermitianEigen::new(&inst.c_tilde);
            assert!(inst.delta0 / 5.0 > e.min() + 1e-6);
            assert!(HermitianEigen::new(&inst.r_inv).min() >= 0.1 - 1e-9);
        }
    }
}
