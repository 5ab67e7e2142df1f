//! Dense symmetric linear-algebra helpers shared by every solver.
//!
//! Square roots and inverses of covariance-like matrices all go through
//! [`SymEigen`], which applies one conditioning rule: an eigenvalue below
//! `EIG_FLOOR * λ_max` marks the matrix as numerically singular.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue floor used for every SPD square root / inverse.
pub const EIG_FLOOR: f64 = 1e-12;

/// Relative tolerance for the symmetry check on input matrices.
pub const SYM_TOL: f64 = 1e-12;

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    /// Column `i` is the unit eigenvector for `values[i]`.
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        if n == 0 {
            return SymEigen {
                values: DVector::zeros(0),
                vectors: DMatrix::zeros(0, 0),
            };
        }
        let sym = symmetrize(m);
        let eig = sym.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        SymEigen { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Fails unless every eigenvalue exceeds `EIG_FLOOR * λ_max` (and λ_max > 0).
    pub fn require_positive_definite(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Dimension("empty matrix".into()));
        }
        let (lo, hi) = (self.min(), self.max());
        if !(hi > 0.0) || !(lo > EIG_FLOOR * hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::NotPositiveDefinite {
                min_eig: lo,
                max_eig: hi,
            });
        }
        Ok(())
    }

    /// `V f(Λ) Vᵀ`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = DVector::from_iterator(self.values.len(), self.values.iter().map(|&v| f(v)));
        let mut left = self.vectors.clone();
        for (j, s) in scaled.iter().enumerate() {
            left.column_mut(j).scale_mut(*s);
        }
        symmetrize(&(left * self.vectors.transpose()))
    }
}

/// Largest absolute asymmetry `|m_ij - m_ji|` relative to the largest entry.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst / scale
}

pub fn require_symmetric(m: &DMatrix<f64>, tol: f64) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let asym = relative_asymmetry(m);
    if asym > tol || !asym.is_finite() {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    Ok(())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Square root and inverse square root of an SPD matrix.
pub fn spd_sqrt_pair(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymEigen::new(m);
    eig.require_positive_definite()?;
    Ok((eig.apply(f64::sqrt), eig.apply(|v| 1.0 / v.sqrt())))
}

pub fn spd_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymEigen::new(m);
    eig.require_positive_definite()?;
    Ok(eig.apply(|v| 1.0 / v.sqrt()))
}

/// Orthonormal basis (n × (n − j)) of the orthogonal complement of the span
/// of the `j` orthonormal columns of `cols`.
///
/// Computed from the eigenvectors of the projector `I - C Cᵀ` with eigenvalue 1,
/// so the result does not accumulate error across repeated deflations.
pub fn orthonormal_complement(cols: &DMatrix<f64>) -> DMatrix<f64> {
    let n = cols.nrows();
    let j = cols.ncols();
    if j == 0 {
        return DMatrix::identity(n, n);
    }
    let proj = DMatrix::identity(n, n) - cols * cols.transpose();
    let eig = SymEigen::new(&proj);
    // Eigenvalues are (numerically) j zeros followed by n - j ones.
    let mut out = eig.vectors.columns(j, n - j).into_owned();
    for mut c in out.column_iter_mut() {
        sign_normalize(&mut c);
    }
    out
}

/// Flips the sign of `v` so that its largest-magnitude entry is positive.
/// Ties go to the lowest index.
pub fn sign_normalize<S>(v: &mut nalgebra::Matrix<f64, nalgebra::Dyn, nalgebra::U1, S>)
where
    S: nalgebra::StorageMut<f64, nalgebra::Dyn, nalgebra::U1>,
{
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs * (1.0 + 1e-12) {
            best = i;
            best_abs = x.abs();
        }
    }
    if v.len() > 0 && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Modified Gram-Schmidt with one re-orthogonalization pass. Columns that
/// become numerically dependent are replaced by a vector from the complement.
pub fn orthonormalize_columns(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let p = m.ncols();
    let mut q: DMatrix<f64> = DMatrix::zeros(n, p);
    for j in 0..p {
        let mut v = m.column(j).into_owned();
        let scale = v.norm();
        for _ in 0..2 {
            for i in 0..j {
                let qi = q.column(i);
                let r = qi.dot(&v);
                v.axpy(-r, &qi, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= 1e-10 * scale.max(1.0) {
            let comp = orthonormal_complement(&q.columns(0, j).into_owned());
            v = comp.column(0).into_owned();
        } else {
            v /= norm;
        }
        q.set_column(j, &v);
    }
    q
}

/// Largest entry of `|AᵀA − I|`.
pub fn orthonormality_defect(a: &DMatrix<f64>) -> f64 {
    let g = a.transpose() * a;
    let p = g.nrows();
    (g - DMatrix::identity(p, p)).amax()
}

/// Log-determinant of an SPD matrix via Cholesky.
pub fn spd_logdet(m: &DMatrix<f64>) -> Option<f64> {
    let ch = m.clone().cholesky()?;
    let l = ch.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        acc += l[(i, i)].ln();
    }
    Some(2.0 * acc)
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
/// Returns `(argmax, max)`; the endpoints are also compared.
pub fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let mut best = (mid, f(mid));
    for cand in [(c, fc), (d, fd), (lo, f(lo)), (hi, f(hi))] {
        if cand.1 > best.1 {
            best = cand;
        }
    }
    best
}
