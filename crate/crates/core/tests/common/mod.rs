//! Reference implementations used only by the tests. None of them share code
//! with the solvers they check.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    let v = DVector::from_iterator(n, (0..n).map(|_| -> f64 { StandardNormal.sample(rng) }));
    let norm = v.norm();
    v / norm
}

pub fn random_spd(rng: &mut impl Rng, n: usize, ridge: f64) -> DMatrix<f64> {
    let a = DMatrix::from_iterator(n, n, (0..n * n).map(|_| -> f64 { StandardNormal.sample(rng) }));
    let s = &a * a.transpose() + DMatrix::identity(n, n) * ridge;
    (&s + s.transpose()) * 0.5
}

pub fn random_vector(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| -> f64 { StandardNormal.sample(rng) }))
}

/// Every `k`-subset of `0..n` by bitmask scan.
pub fn all_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << n))
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

/// Clique test by scanning vertex bitmasks; vertices are 0-based and
/// `adj[a][b]` is the adjacency relation.
pub fn brute_force_clique(adj: &[Vec<bool>], p: usize) -> bool {
    let n = adj.len();
    all_subsets(n, p)
        .iter()
        .any(|s| s.iter().all(|&a| s.iter().all(|&b| a == b || adj[a][b])))
}

/// `(vᵀAv, vᵀBv)` for a unit `v`.
pub fn image(a: &DMatrix<f64>, b: &DMatrix<f64>, v: &DVector<f64>) -> (f64, f64) {
    (v.dot(&(a * v)), v.dot(&(b * v)))
}

/// Euclidean projection onto `{x : Σ d_i (x_i − c_i)² ≤ 1}` (axis-aligned).
fn project_axis_ellipsoid(x: &DVector<f64>, c: &DVector<f64>, d: &DVector<f64>) -> DVector<f64> {
    let w = x - c;
    let g = |mu: f64| (0..w.len()).map(|i| d[i] * (w[i] / (1.0 + mu * d[i])).powi(2)).sum::<f64>();
    if g(0.0) <= 1.0 {
        return x.clone();
    }
    let mut hi = 1.0;
    while g(hi) > 1.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = hi;
    c + DVector::from_iterator(w.len(), (0..w.len()).map(|i| w[i] / (1.0 + mu * d[i])))
}

/// Axis-aligned ellipsoid `{x : Σ d_i (x_i − c_i)² ≤ 1}`; `d = None` is a point.
#[derive(Clone, Debug)]
pub struct AxisEllipsoid {
    pub c: DVector<f64>,
    pub d: Option<DVector<f64>>,
}

impl AxisEllipsoid {
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.d {
            Some(d) => project_axis_ellipsoid(x, &self.c, d),
            None => self.c.clone(),
        }
    }

    pub fn random_point(&self, rng: &mut impl Rng) -> DVector<f64> {
        match &self.d {
            None => self.c.clone(),
            Some(d) => {
                let u = unit_vector(rng, self.c.len());
                let r: f64 = rng.random::<f64>().powf(1.0 / self.c.len() as f64);
                &self.c + DVector::from_iterator(u.len(), (0..u.len()).map(|i| r * u[i] / d[i].sqrt()))
            }
        }
    }
}

/// Multi-start projected gradient (with momentum) for
/// `min (b − a)ᵀW(b − a)`, `a ∈ e0`, `b ∈ e1`.
pub fn qcqp_projected_gradient(
    e0: &AxisEllipsoid,
    e1: &AxisEllipsoid,
    w: &DMatrix<f64>,
    starts: usize,
    seed: u64,
) -> f64 {
    let mut rng = rng(seed);
    let lmax = w.symmetric_eigenvalues().max();
    let step = 1.0 / (4.0 * lmax);
    let f = |a: &DVector<f64>, b: &DVector<f64>| {
        let d = b - a;
        d.dot(&(w * &d))
    };
    let mut best = f64::INFINITY;
    for _ in 0..starts {
        let mut a = e0.random_point(&mut rng);
        let mut b = e1.random_point(&mut rng);
        let (mut ya, mut yb) = (a.clone(), b.clone());
        let mut t: f64 = 1.0;
        for _ in 0..20_000 {
            let g = w * (&yb - &ya) * 2.0;
            let na = e0.project(&(&ya + &g * step));
            let nb = e1.project(&(&yb - &g * step));
            let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let mom = (t - 1.0) / tn;
            let moved = (&na - &a).norm() + (&nb - &b).norm();
            ya = &na + (&na - &a) * mom;
            yb = &nb + (&nb - &b) * mom;
            // Restart momentum when the objective goes up.
            if f(&na, &nb) > f(&a, &b) {
                ya = na.clone();
                yb = nb.clone();
                t = 1.0;
            } else {
                t = tn;
            }
            a = na;
            b = nb;
            if moved < 1e-14 {
                break;
            }
        }
        best = best.min(f(&a, &b));
    }
    best
}

/// `max_s` of a concave scalar function on `[0, 1]` by ternary search.
pub fn ternary_max(f: impl Fn(f64) -> f64) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let s = 0.5 * (lo + hi);
    (s, f(s))
}

/// Scalar-case KL divergence `D(N(m1, v1) ‖ N(m0, v0))`.
pub fn scalar_kl(m0: f64, m1: f64, v0: f64, v1: f64) -> f64 {
    0.5 * ((m1 - m0).powi(2) / v0 + v1 / v0 - (v1 / v0).ln() - 1.0)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// Convex hull (counter-clockwise, no repeated endpoint) by monotone chain.
pub fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Signed distance from `q` to the hull boundary; negative inside.
pub fn hull_excess(hull: &[(f64, f64)], q: (f64, f64)) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len = dx.hypot(dy);
        if len == 0.0 {
            continue;
        }
        // Outward normal of a counter-clockwise edge is (dy, −dx).
        worst = worst.max(((q.0 - a.0) * dy - (q.1 - a.1) * dx) / len);
    }
    worst
}
