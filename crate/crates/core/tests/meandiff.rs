mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use sensel::evaluation::{exhaustive_opt, hardness_instance, SimpleGraph, DEFAULT_ORACLE_CAP};
use sensel::generate::{generate_instance, random_pair, KRule};
use sensel::linalg::orthonormality_defect;
use sensel::meandiff::{eqmeans_c, eqmeans_kl, maximize_phi_c, md_kl, md_relaxation, phi_c, phi_kl};
use sensel::{Criterion, GaussianPair};

#[test]
fn clique_instance_k4() {
    let inst = hardness_instance(&SimpleGraph::complete(4), 2).unwrap();
    let res = md_kl(&inst).unwrap();
    assert!((res.objective - 1.0 / 7.0).abs() < 1e-9);
}

#[test]
fn scalar_examples() {
    assert!((phi_kl(3.0) - 0.90139).abs() < 1e-5);
    assert!((phi_kl(0.5) - 0.19315).abs() < 1e-5);
    let (s, v) = maximize_phi_c(&[3.0]);
    assert!((v - 0.1484).abs() < 1e-4 && (s - 0.590).abs() < 1e-3);
    assert_eq!(maximize_phi_c(&[1.0, 1.0]), (0.5, 0.0));
    let s = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0, 3.0]));
    let sel = eqmeans_kl(&s, 1).unwrap();
    assert_eq!(sel.chosen_eigs, vec![3.0]);
}

#[test]
fn small_suite_reaches_the_optimum() {
    let mut best: f64 = 0.0;
    let mut sum = 0.0;
    for seed in 0..50 {
        let inst = generate_instance(9, 3, 600 + seed, KRule::Infinity).unwrap();
        let (_, opt) = exhaustive_opt(&inst, Criterion::Kl, DEFAULT_ORACLE_CAP).unwrap();
        let r = md_kl(&inst).unwrap().objective / opt;
        best = best.max(r);
        sum += r;
    }
    assert!(best >= 1.0 - 1e-9);
    assert!(sum / 50.0 >= 0.9, "average {}", sum / 50.0);
}

#[test]
fn equal_means_branch_uses_the_full_spectrum() {
    let pair = GaussianPair::new(
        DVector::zeros(3),
        DVector::zeros(3),
        DMatrix::identity(3, 3),
        DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, 1.0, 5.0])),
    )
    .unwrap();
    let r = md_relaxation(&pair, 1, Criterion::Kl).unwrap();
    // φ_KL(0.2) ≈ 0.81 < φ_KL(5) ≈ 2.39.
    assert!((r.basis.matrix()[(2, 0)].abs() - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relaxation_captures_the_mean_gap(seed in 0u64..10_000, p in 1usize..5, kl in any::<bool>()) {
        let pair = random_pair(6, seed).unwrap();
        let crit = if kl { Criterion::Kl } else { Criterion::Chernoff };
        let r = md_relaxation(&pair, p, crit).unwrap();
        let e = r.basis.matrix();
        prop_assert!(orthonormality_defect(e) < 1e-9);
        let dm = pair.mean_gap();
        prop_assert!(((e.transpose() * &dm).norm() - dm.norm()).abs() < 1e-9 * (1.0 + dm.norm()));
    }

    #[test]
    fn switching_candidates_match_brute_force(seed in 0u64..10_000) {
        let mut r = common::rng(seed);
        let n = 6;
        let eigs: Vec<f64> = (0..n).map(|_| (rand::Rng::random::<f64>(&mut r) * 4.0 - 2.0).exp()).collect();
        let s = DMatrix::from_diagonal(&DVector::from_vec(eigs.clone()));
        let kl = eqmeans_kl(&s, 2).unwrap().objective;
        let c = eqmeans_c(&s, 2).unwrap().objective;
        let (mut bk, mut bc) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for sub in common::all_subsets(n, 2) {
            bk = bk.max(sub.iter().map(|&i| phi_kl(eigs[i])).sum());
            bc = bc.max(common::ternary_max(|t| sub.iter().map(|&i| phi_c(t, eigs[i])).sum()).1);
        }
        prop_assert!((kl - bk).abs() < 1e-10);
        prop_assert!((c - bc).abs() < 1e-8);
    }

    #[test]
    fn phi_shapes(x in 0.01f64..50.0, s in 0.02f64..0.98) {
        let h = 1e-3;
        prop_assert!(phi_kl(x + h) - 2.0 * phi_kl(x) + phi_kl((x - h).max(1e-6)) >= -1e-9 || x - h <= 0.0);
        prop_assert!(phi_c(s + 0.01, x) - 2.0 * phi_c(s, x) + phi_c(s - 0.01, x) <= 1e-12);
        prop_assert!(phi_kl(x) >= 0.0 && phi_c(s, x) >= -1e-15);
    }
}
