//! Small dense complex linear-algebra helpers shared by every module.
//!
//! Everything is expressed on top of `nalgebra` dynamic matrices. Hermitian
//! eigendecompositions are always returned with eigenvalues in ascending order
//! and with each eigenvector rotated so that its largest-modulus entry is real
//! and positive, which makes outputs reproducible across runs and backends.

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// `(A + A^H) / 2`.
pub fn hermitianize(a: &CMatrix) -> CMatrix {
    let ah = a.adjoint();
    (a + ah).scale(0.5)
}

/// Rotate `v` in place so its largest-modulus entry is real and positive.
///
/// Ties are broken by the smallest index.
pub fn phase_fix(v: &mut CVector) {
    let mut best = 0;
    let mut best_abs = -1.0;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best_abs * (1.0 + 1e-12) {
            best = i;
            best_abs = m;
        }
    }
    if best_abs > 0.0 {
        let rot = v[best].conj() / best_abs;
        v.iter_mut().for_each(|z| *z *= rot);
    }
}

/// `Re(v^H A v)`.
pub fn quad_form(a: &CMatrix, v: &CVector) -> f64 {
    v.dotc(&(a * v)).re
}

/// Euclidean norm squared.
pub fn norm_sq(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn is_finite(v: &CVector) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Relative Frobenius distance `‖a − b‖ / ‖b‖`.
pub fn rel_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / b.norm()
}

/// Hermitian eigendecomposition with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn new(a: &CMatrix) -> Self {
        let n = a.nrows();
        let eig = hermitianize(a).symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = CMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let mut col: CVector = eig.eigenvectors.column(src).into_owned();
            let nrm = col.norm();
            if nrm > 0.0 {
                col.unscale_mut(nrm);
            }
            phase_fix(&mut col);
            vectors.set_column(dst, &col);
        }
        Self { values, vectors }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.dim() - 1]
    }

    /// Eigenvector for the `i`-th smallest eigenvalue.
    pub fn vector(&self, i: usize) -> CVector {
        self.vectors.column(i).into_owned()
    }

    /// Columns for the `k` largest eigenvalues, in descending order.
    pub fn dominant(&self, k: usize) -> CMatrix {
        let n = self.dim();
        let cols: Vec<CVector> = (0..k).map(|i| self.vector(n - 1 - i)).collect();
        CMatrix::from_columns(&cols)
    }

    /// Columns for the `k` smallest eigenvalues, in ascending order.
    pub fn smallest(&self, k: usize) -> CMatrix {
        let cols: Vec<CVector> = (0..k).map(|i| self.vector(i)).collect();
        CMatrix::from_columns(&cols)
    }

    /// Number of eigenvalues within `tol` of the smallest one.
    pub fn multiplicity_of_min(&self, tol: f64) -> usize {
        let lo = self.min();
        self.values.iter().filter(|&&v| v - lo <= tol).count()
    }

    /// `V f(Λ) V^H`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let s = f(self.values[j]);
            scaled.column_mut(j).scale_mut(s);
        }
        hermitianize(&(scaled * self.vectors.adjoint()))
    }
}

/// Unit eigenvector of the smallest eigenvalue (the `ρ{·}` operator).
pub fn min_eigvec(a: &CMatrix) -> CVector {
    HermitianEigen::new(a).vector(0)
}

/// Gram-Schmidt orthonormalisation of the columns of `a`; columns whose residual
/// norm falls below `tol` are dropped.
pub fn orthonormalize(a: &CMatrix, tol: f64) -> CMatrix {
    let mut out: Vec<CVector> = Vec::new();
    for j in 0..a.ncols() {
        let mut v: CVector = a.column(j).into_owned();
        for _ in 0..2 {
            for q in &out {
                let c = q.dotc(&v);
                v -= q * c;
            }
        }
        let n = v.norm();
        if n > tol {
            out.push(v.unscale(n));
        }
    }
    if out.is_empty() {
        return CMatrix::zeros(a.nrows(), 0);
    }
    CMatrix::from_columns(&out)
}
