//! Mean-difference solvers for exactly known means (MD–KL, MD–C).
//!
//! With equal means the criteria reduce to sums over the generalized
//! eigenvalues `x_i` of the selected subspace, `Σφ(x_i)` with
//! `φ_KL(x) = x − log x − 1` or `φ_C(s, x) = log(s + (1−s)x) − (1−s) log x`.
//! Both are smallest at `x = 1` and grow towards either end of the spectrum,
//! so an optimal choice of `p` eigenvalues takes some `j` of the smallest and
//! `p − j` of the largest; only the `p + 1` switching candidates need checking.
//!
//! With distinct means, the first column is the mean gap direction itself and
//! the rest solve the equal-means problem on its orthogonal complement.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, SymEigen};
use crate::model::{Criterion, GaussianPair, ProblemInstance, SubspaceBasis};
use crate::rounding::{finish_pipeline, millis_since, PhaseRecord, PipelineResult};

/// `s` is kept in `[S_GUARD, 1 − S_GUARD]` during the Newton search.
pub const S_GUARD: f64 = 1e-9;

pub fn phi_kl(x: f64) -> f64 {
    x - x.ln() - 1.0
}

pub fn phi_c(s: f64, x: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    (s + (1.0 - s) * x).ln() - (1.0 - s) * x.ln()
}

/// First and second `s`-derivatives of `φ_C`.
fn phi_c_derivs(s: f64, x: f64) -> (f64, f64) {
    let b = s + (1.0 - s) * x;
    let r = (1.0 - x) / b;
    (r + x.ln(), -r * r)
}

/// Maximizes `Σ φ_C(s, x_i)` over `s` by Newton's method on the derivative,
/// falling back to bisection whenever a step leaves the bracket.
/// Returns `(s*, value)`; `s* = 0.5` when every `x_i = 1`.
pub fn maximize_phi_c(xs: &[f64]) -> (f64, f64) {
    let total = |s: f64| xs.iter().map(|&x| phi_c(s, x)).sum::<f64>();
    let deriv = |s: f64| {
        xs.iter().fold((0.0, 0.0), |acc, &x| {
            let (d1, d2) = phi_c_derivs(s, x);
            (acc.0 + d1, acc.1 + d2)
        })
    };
    if xs.iter().all(|&x| (x - 1.0).abs() <= 1e-14) {
        return (0.5, 0.0);
    }
    let (mut lo, mut hi) = (S_GUARD, 1.0 - S_GUARD);
    // The derivative decreases in s; an endpoint maximum shows up as a sign
    // that never changes across the bracket.
    if deriv(lo).0 <= 0.0 {
        return (lo, total(lo));
    }
    if deriv(hi).0 >= 0.0 {
        return (hi, total(hi));
    }
    let mut s = 0.5;
    for _ in 0..200 {
        let (d1, d2) = deriv(s);
        if d1 > 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        if d1.abs() <= 1e-15 || hi - lo <= 1e-15 {
            break;
        }
        let newton = if d2 < 0.0 { s - d1 / d2 } else { f64::NAN };
        s = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    (s, total(s))
}

/// One of the switching candidates.
#[derive(Debug, Clone)]
pub struct EigenSelection {
    /// Number of smallest eigenvalues taken (the rest come from the top).
    pub switching_index: usize,
    /// Positions (in ascending order of eigenvalue) of the chosen eigenpairs.
    pub positions: Vec<usize>,
    pub chosen_eigs: Vec<f64>,
    /// `n × p` eigenvectors for `chosen_eigs`.
    pub chosen_vecs: DMatrix<f64>,
    /// `Σφ` over the chosen eigenvalues (no factor ½).
    pub objective: f64,
    pub s_star: Option<f64>,
}

fn switching_positions(n: usize, p: usize, j: usize) -> Vec<usize> {
    (0..j).chain(n - p + j..n).collect()
}

fn eqmeans(s: &DMatrix<f64>, p: usize, criterion: Criterion) -> Result<EigenSelection> {
    let n = s.nrows();
    if p == 0 || p > n {
        return Err(Error::InvalidParameter(format!("p = {p} must be in 1..={n}")));
    }
    linalg::require_symmetric(s, 1e-10)?;
    let eig = SymEigen::new(s);
    eig.require_positive_definite()?;
    let mut best: Option<(usize, f64, Option<f64>)> = None;
    for j in 0..=p {
        let xs: Vec<f64> = switching_positions(n, p, j).iter().map(|&i| eig.values[i]).collect();
        let (val, s_star) = match criterion {
            Criterion::Kl => (xs.iter().map(|&x| phi_kl(x)).sum(), None),
            Criterion::Chernoff => {
                let (s, v) = maximize_phi_c(&xs);
                (v, Some(s))
            }
        };
        if best.map_or(true, |(_, b, _)| val > b) {
            best = Some((j, val, s_star));
        }
    }
    let (j, objective, s_star) = best.expect("at least one candidate");
    let positions = switching_positions(n, p, j);
    let mut vecs = DMatrix::zeros(n, p);
    for (c, &i) in positions.iter().enumerate() {
        vecs.set_column(c, &eig.vectors.column(i));
    }
    Ok(EigenSelection {
        switching_index: j,
        chosen_eigs: positions.iter().map(|&i| eig.values[i]).collect(),
        positions,
        chosen_vecs: vecs,
        objective,
        s_star,
    })
}

/// Best `p` eigenvalues of `S` for `Σφ_KL`.
pub fn eqmeans_kl(s: &DMatrix<f64>, p: usize) -> Result<EigenSelection> {
    eqmeans(s, p, Criterion::Kl)
}

/// Best `p` eigenvalues of `S` for `max_s Σφ_C(s, ·)`.
pub fn eqmeans_c(s: &DMatrix<f64>, p: usize) -> Result<EigenSelection> {
    eqmeans(s, p, Criterion::Chernoff)
}

/// Relaxed basis of the mean-difference solvers.
#[derive(Debug, Clone)]
pub struct MdRelaxation {
    pub basis: SubspaceBasis,
    /// Columns before re-orthonormalization.
    pub raw: DMatrix<f64>,
}

/// Equal-means columns for the pair restricted to the columns of `u`:
/// `U (UᵀS0U)^{-1/2} P` with `P` the chosen eigenvectors.
fn equal_means_block(pair: &GaussianPair, u: &DMatrix<f64>, q: usize, criterion: Criterion) -> Result<DMatrix<f64>> {
    let s0 = linalg::symmetrize(&(u.transpose() * pair.s0() * u));
    let s1 = linalg::symmetrize(&(u.transpose() * pair.s1() * u));
    let t = linalg::spd_inv_sqrt(&s0)?;
    let w = linalg::symmetrize(&(&t * s1 * &t));
    let sel = eqmeans(&w, q, criterion)?;
    Ok(u * t * sel.chosen_vecs)
}

pub fn md_relaxation(pair: &GaussianPair, p: usize, criterion: Criterion) -> Result<MdRelaxation> {
    let n = pair.dim();
    if p == 0 || p > n {
        return Err(Error::InvalidParameter(format!("p = {p} must be in 1..={n}")));
    }
    let dm = pair.mean_gap();
    let norm = dm.norm();
    let raw = if norm < 1e-12 {
        equal_means_block(pair, &DMatrix::identity(n, n), p, criterion)?
    } else {
        let e1 = &dm / norm;
        let mut raw = DMatrix::zeros(n, p);
        raw.set_column(0, &e1);
        if p > 1 {
            let u = linalg::orthonormal_complement(&DMatrix::from_columns(&[e1.clone()]));
            let block = equal_means_block(pair, &u, p - 1, criterion)?;
            raw.columns_mut(1, p - 1).copy_from(&block);
        }
        raw
    };
    let mut q = linalg::orthonormalize_columns(&raw);
    for mut c in q.column_iter_mut() {
        linalg::sign_normalize(&mut c);
    }
    Ok(MdRelaxation {
        basis: SubspaceBasis::new(q)?,
        raw,
    })
}

fn md_pipeline(instance: &ProblemInstance, criterion: Criterion) -> Result<PipelineResult> {
    let unc = &instance.uncertainty;
    if !unc.is_exact() {
        return Err(Error::UncertaintyNotSupported {
            k0: unc.k0(),
            k1: unc.k1(),
        });
    }
    let t = Instant::now();
    let relax = md_relaxation(&instance.pair, instance.p, criterion)?;
    let rec = PhaseRecord {
        phase: "relaxation",
        objective: f64::NAN,
        millis: millis_since(t),
    };
    finish_pipeline(format!("MD-{}", criterion.label()), criterion, instance, relax.basis, vec![rec])
}

/// MD–KL: mean-difference relaxation, projection, refinement.
pub fn md_kl(instance: &ProblemInstance) -> Result<PipelineResult> {
    md_pipeline(instance, Criterion::Kl)
}

/// MD–C: as [`md_kl`] for the Chernoff distance.
pub fn md_c(instance: &ProblemInstance) -> Result<PipelineResult> {
    md_pipeline(instance, Criterion::Chernoff)
}

/// Sum of `φ_KL` over the generalized eigenvalues of a projected pair
/// (twice its equal-means KL divergence); handy for checks.
pub fn spectral_kl(s: &DMatrix<f64>) -> f64 {
    SymEigen::new(s).values.iter().map(|&x| phi_kl(x)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::UncertaintyModel;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi_kl(1.0), 0.0);
        assert_relative_eq!(phi_kl(3.0), 2.0 - 3f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(phi_kl(0.5), 0.193_147_180_559_945_3, epsilon = 1e-12);
        assert_eq!(phi_c(0.0, 3.0), 0.0);
        assert_eq!(phi_c(1.0, 3.0), 0.0);
        assert_relative_eq!(phi_c(0.3, 1.0), 0.0, epsilon = 1e-15);
        let (s, v) = maximize_phi_c(&[3.0]);
        assert_relative_eq!(v, 0.148_405_497_277_3, epsilon = 1e-9);
        assert_relative_eq!(s, 0.589_760_786_9, epsilon = 1e-6);
    }

    #[test]
    fn switching_candidates() {
        let sel = eqmeans_kl(&diag(&[0.5, 1.0, 3.0]), 1).unwrap();
        assert_eq!(sel.chosen_eigs, vec![3.0]);
        assert_eq!(sel.switching_index, 0);
        let sel = eqmeans_kl(&diag(&[0.1, 0.9, 1.1, 10.0]), 2).unwrap();
        assert_eq!(sel.chosen_eigs, vec![0.1, 10.0]);
        let flat = eqmeans_c(&DMatrix::identity(4, 4), 2).unwrap();
        assert_eq!(flat.objective, 0.0);
        assert_eq!(flat.s_star, Some(0.5));
    }

    #[test]
    fn relaxation_keeps_the_mean_direction() {
        let pair = GaussianPair::new(
            DVector::zeros(3),
            DVector::from_vec(vec![0.0, 0.0, 2.0]),
            DMatrix::identity(3, 3),
            DMatrix::identity(3, 3),
        )
        .unwrap();
        let r = md_relaxation(&pair, 2, Criterion::Kl).unwrap();
        let e = r.basis.matrix();
        assert_relative_eq!(e[(2, 0)], 1.0, epsilon = 1e-12);
        assert!(e[(2, 1)].abs() < 1e-12);
        let r1 = md_relaxation(&pair, 1, Criterion::Kl).unwrap();
        assert_eq!(r1.basis.rank(), 1);
    }

    #[test]
    fn finite_uncertainty_is_rejected() {
        let pair = GaussianPair::new(DVector::zeros(2), DVector::from_vec(vec![1.0, 0.0]), diag(&[1.0, 1.0]), diag(&[1.0, 2.0]))
            .unwrap();
        let inst = ProblemInstance::new(pair, UncertaintyModel::new(10.0, 10.0).unwrap(), 1).unwrap();
        assert!(matches!(md_kl(&inst), Err(Error::UncertaintyNotSupported { .. })));
    }
}
