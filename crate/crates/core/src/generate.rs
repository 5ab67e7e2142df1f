//! Random problem instances for benchmarks.
//!
//! Means have independent standard normal entries; each covariance is
//! `AAᵀ + 0.1·n·I` with `A` standard normal, so it is positive definite by
//! construction. Everything is drawn from one ChaCha20 stream seeded with
//! `seed_from_u64(seed)` in the order `m0, m1, A0, A1` (column-major).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymEigen;
use crate::model::{GaussianPair, ProblemInstance, UncertaintyModel};

/// Fraction of `‖m1 − m0‖` allowed as mean drift in benchmark instances.
pub const DEFAULT_DRIFT_FRACTION: f64 = 0.15;

/// How the uncertainty sizes `k0`, `k1` of a generated instance are set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum KRule {
    /// Exact means.
    Infinity,
    Explicit { k0: f64, k1: f64 },
    /// `k_i = λ_max(S_i)/(f‖m1 − m0‖)²`: no admissible drift is longer than
    /// `f‖m1 − m0‖` in Euclidean norm.
    DriftFraction { fraction: f64 },
    /// `k_i = det(S_i)/(f‖m1 − m0‖)²`. Does not bound the drift.
    PaperDet { fraction: f64 },
}

impl KRule {
    pub fn uncertainty(&self, pair: &GaussianPair) -> Result<UncertaintyModel> {
        let gap = pair.mean_gap().norm();
        let size = |s: &DMatrix<f64>, fraction: f64, det: bool| -> f64 {
            let denom = (fraction * gap).powi(2);
            if denom == 0.0 {
                return f64::INFINITY;
            }
            let num = if det { s.determinant() } else { SymEigen::new(s).max() };
            num / denom
        };
        match *self {
            KRule::Infinity => Ok(UncertaintyModel::exact()),
            KRule::Explicit { k0, k1 } => UncertaintyModel::new(k0, k1),
            KRule::DriftFraction { fraction } => {
                UncertaintyModel::new(size(pair.s0(), fraction, false), size(pair.s1(), fraction, false))
            }
            KRule::PaperDet { fraction } => {
                UncertaintyModel::new(size(pair.s0(), fraction, true), size(pair.s1(), fraction, true))
            }
        }
    }
}

pub fn random_pair(n: usize, seed: u64) -> Result<GaussianPair> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be positive".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut normal = |len: usize| -> Vec<f64> { (0..len).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let m0 = DVector::from_vec(normal(n));
    let m1 = DVector::from_vec(normal(n));
    let a0 = DMatrix::from_vec(n, n, normal(n * n));
    let a1 = DMatrix::from_vec(n, n, normal(n * n));
    let cov = |a: DMatrix<f64>| {
        let s = &a * a.transpose() + DMatrix::identity(n, n) * (0.1 * n as f64);
        (&s + s.transpose()) * 0.5
    };
    GaussianPair::new(m0, m1, cov(a0), cov(a1))
}

pub fn generate_instance(n: usize, p: usize, seed: u64, rule: KRule) -> Result<ProblemInstance> {
    let pair = random_pair(n, seed)?;
    let unc = rule.uncertainty(&pair)?;
    ProblemInstance::new(pair, unc, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = generate_instance(6, 2, 11, KRule::Infinity).unwrap();
        let b = generate_instance(6, 2, 11, KRule::Infinity).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_instance(6, 2, 12, KRule::Infinity).unwrap());
        assert!(a.uncertainty.is_exact());
    }

    #[test]
    fn drift_rule_bounds_the_drift() {
        for seed in 0..20 {
            let inst = generate_instance(5, 2, seed, KRule::DriftFraction { fraction: 0.15 }).unwrap();
            let gap = inst.pair.mean_gap().norm();
            for (s, k) in [(inst.pair.s0(), inst.uncertainty.k0()), (inst.pair.s1(), inst.uncertainty.k1())] {
                let drift = (SymEigen::new(s).max() / k).sqrt();
                assert!(drift <= 0.15 * gap + 1e-9);
            }
        }
    }
}
