//! Closest pair of points between two ellipsoids in a quadratic metric:
//!
//! ```text
//! min (m1 − m0)ᵀ W (m1 − m0)   s.t.  m0 ∈ E(a0, A0),  m1 ∈ E(a1, A1)
//! ```
//!
//! with `E(a, A) = {x : (x − a)ᵀ A (x − a) ≤ 1}`.
//!
//! The primary solver is Newton's method on the two-multiplier Lagrange dual,
//! which is concave and smooth in `(λ0, λ1)`; every dual iterate is a lower
//! bound and the recovered primal points an upper bound. When Newton stalls
//! (nearly degenerate shapes), alternating W-metric projections take over,
//! with a support-function dual bound. Either way the result is returned
//! only once the gap closes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, SymEigen};

pub const MAX_ITERATIONS: usize = 10_000;
/// Relative gap between the primal value and the dual bound at termination.
pub const GAP_TOL: f64 = 1e-9;
/// Absolute gap floor as a fraction of the squared center distance; the dual
/// value cannot be resolved more finely than this in floating point.
pub const ABS_GAP_TOL: f64 = 1e-14;
const NEWTON_ITERATIONS: usize = 200;

/// `{x : (x − center)ᵀ shape (x − center) ≤ 1}`; a missing shape is the
/// single point `center` (the infinite-`k` limit).
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: Option<DMatrix<f64>>,
}

impl Ellipsoid {
    pub fn new(center: DVector<f64>, shape: DMatrix<f64>) -> Result<Self> {
        if shape.shape() != (center.len(), center.len()) {
            return Err(Error::Dimension(format!(
                "center has length {}, shape is {:?}",
                center.len(),
                shape.shape()
            )));
        }
        linalg::require_symmetric(&shape, 1e-10)?;
        SymEigen::new(&shape).require_positive_definite()?;
        Ok(Ellipsoid {
            center,
            shape: Some(linalg::symmetrize(&shape)),
        })
    }

    /// Ball of the given radius.
    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!("radius {radius}")));
        }
        let n = center.len();
        Ellipsoid::new(center, DMatrix::identity(n, n) / (radius * radius))
    }

    pub fn point(center: DVector<f64>) -> Self {
        Ellipsoid {
            center,
            shape: None,
        }
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> Option<&DMatrix<f64>> {
        self.shape.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn is_point(&self) -> bool {
        self.shape.is_none()
    }

    /// `(x − a)ᵀ A (x − a)`; zero or infinity for a point.
    pub fn gauge(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.center;
        match &self.shape {
            Some(a) => d.dot(&(a * &d)),
            None if d.amax() == 0.0 => 0.0,
            None => f64::INFINITY,
        }
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.gauge(x) <= 1.0 + tol
    }
}

/// Result of [`qcqp_min_quadratic`].
#[derive(Debug, Clone)]
pub struct QcqpSolution {
    /// Minimal value of the quadratic form (0 when the ellipsoids meet).
    pub value: f64,
    pub m0: DVector<f64>,
    pub m1: DVector<f64>,
    /// Dual lower bound on `value` at termination.
    pub lower_bound: f64,
    pub iterations: usize,
}

/// W-metric projector onto one ellipsoid, with the factorizations cached.
struct Projection<'a> {
    set: &'a Ellipsoid,
    // W^{1/2}, W^{-1/2}, and the eigenpairs of W^{-1/2} A W^{-1/2}.
    w_sqrt: &'a DMatrix<f64>,
    w_inv_sqrt: &'a DMatrix<f64>,
    eig: Option<SymEigen>,
    a_inv: Option<DMatrix<f64>>,
}

impl<'a> Projection<'a> {
    fn new(set: &'a Ellipsoid, w_sqrt: &'a DMatrix<f64>, w_inv_sqrt: &'a DMatrix<f64>) -> Result<Self> {
        let (eig, a_inv) = match &set.shape {
            Some(a) => {
                let m = w_inv_sqrt * a * w_inv_sqrt;
                let a_eig = SymEigen::new(a);
                (Some(SymEigen::new(&m)), Some(a_eig.apply(|v| 1.0 / v)))
            }
            None => (None, None),
        };
        Ok(Projection {
            set,
            w_sqrt,
            w_inv_sqrt,
            eig,
            a_inv,
        })
    }

    fn project(&self, z: &DVector<f64>) -> DVector<f64> {
        let (Some(eig), Some(_)) = (&self.eig, &self.set.shape) else {
            return self.set.center.clone();
        };
        let w = z - &self.set.center;
        if self.set.gauge(z) <= 1.0 {
            return z.clone();
        }
        let what = eig.vectors.transpose() * (self.w_sqrt * &w);
        let d = &eig.values;
        let g = |mu: f64| -> (f64, f64) {
            let mut val = 0.0;
            let mut der = 0.0;
            for i in 0..d.len() {
                let q = 1.0 + mu * d[i];
                let t = d[i] * what[i] * what[i];
                val += t / (q * q);
                der -= 2.0 * d[i] * t / (q * q * q);
            }
            (val, der)
        };
        // φ(μ) = 1/√G(μ) − 1 is concave and increasing, so Newton from μ = 0
        // climbs monotonically to the root.
        let mut mu = 0.0;
        for _ in 0..200 {
            let (gv, gd) = g(mu);
            let phi = 1.0 / gv.sqrt() - 1.0;
            if phi >= -1e-15 {
                break;
            }
            let dphi = -0.5 * gd / (gv * gv.sqrt());
            if !(dphi > 0.0) {
                break;
            }
            let next = mu - phi / dphi;
            if !(next > mu) {
                break;
            }
            mu = next;
        }
        let y = DVector::from_iterator(d.len(), (0..d.len()).map(|i| what[i] / (1.0 + mu * d[i])));
        let x = &self.set.center + self.w_inv_sqrt * (&eig.vectors * y);
        // Pull back onto the surface if rounding left it marginally outside.
        let gauge = self.set.gauge(&x);
        if gauge > 1.0 {
            &self.set.center + (x - &self.set.center) / gauge.sqrt()
        } else {
            x
        }
    }

    /// Support function `sup_{x ∈ E} uᵀx`.
    fn support(&self, u: &DVector<f64>) -> f64 {
        let base = u.dot(&self.set.center);
        match &self.a_inv {
            Some(ai) => base + u.dot(&(ai * u)).max(0.0).sqrt(),
            None => base,
        }
    }
}

/// Newton ascent on the dual
/// `g(λ) = Δᵀ(I + B0/λ0 + B1/λ1)⁻¹Δ − λ0 − λ1` in W-whitened coordinates,
/// where `Δ` is the whitened center gap and `B_i = W^{1/2} A_i⁻¹ W^{1/2}`
/// (absent for points). Returns `None` if the gap does not close.
#[allow(clippy::too_many_arguments)]
fn dual_newton(
    e0: &Ellipsoid,
    e1: &Ellipsoid,
    p0: &Projection,
    p1: &Projection,
    w_sqrt: &DMatrix<f64>,
    form: &dyn Fn(&DVector<f64>, &DVector<f64>) -> f64,
    contact: f64,
    floor: f64,
) -> Option<QcqpSolution> {
    let p = e0.dim();
    let delta = w_sqrt * (e1.center() - e0.center());
    let bs: Vec<Option<DMatrix<f64>>> = [p0, p1]
        .iter()
        .map(|pr| pr.a_inv.as_ref().map(|ai| linalg::symmetrize(&(w_sqrt * ai * w_sqrt))))
        .collect();
    let active: Vec<usize> = (0..2).filter(|&i| bs[i].is_some()).collect();
    let eval = |lam: &[f64; 2]| -> Option<(f64, DVector<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
        let mut m = DMatrix::identity(p, p);
        for &i in &active {
            m += bs[i].as_ref().unwrap() / lam[i];
        }
        let ch = m.cholesky()?;
        let d = ch.solve(&delta);
        let g = delta.dot(&d) - active.iter().map(|&i| lam[i]).sum::<f64>();
        Some((g, d, ch))
    };
    // Primal points from the multipliers, pulled onto their ellipsoids.
    let w_inv_sqrt = p0.w_inv_sqrt;
    let primal = |lam: &[f64; 2], d: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
        let mut pts = [e0.center().clone(), e1.center().clone()];
        for &i in &active {
            let sign = if i == 0 { 1.0 } else { -1.0 };
            let x = w_inv_sqrt * (bs[i].as_ref().unwrap() * d) * (sign / lam[i]);
            let set = if i == 0 { e0 } else { e1 };
            let gauge = set.gauge(&(set.center() + &x));
            let x = if gauge > 1.0 { x / gauge.sqrt() } else { x };
            pts[i] = set.center() + x;
        }
        let [a, b] = pts;
        (a, b)
    };

    let mut lam = [1.0; 2];
    for &i in &active {
        lam[i] = delta.dot(&(bs[i].as_ref().unwrap() * &delta)).sqrt().max(1e-300);
    }
    let (mut g, mut d, mut ch) = eval(&lam)?;
    let mut best_lower = g.max(0.0);
    for it in 1..=NEWTON_ITERATIONS {
        let (m0, m1) = primal(&lam, &d);
        let upper = form(&m0, &m1);
        best_lower = best_lower.max(g);
        if upper <= contact || upper - best_lower <= GAP_TOL * upper + floor {
            let (value, lower) = if upper <= contact { (0.0, 0.0) } else { (upper, best_lower) };
            return Some(QcqpSolution {
                value,
                m0,
                m1,
                lower_bound: lower.min(upper),
                iterations: it,
            });
        }
        // Gradient and Hessian in λ over the active multipliers.
        let k = active.len();
        let bd: Vec<DVector<f64>> = active.iter().map(|&i| bs[i].as_ref().unwrap() * &d).collect();
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for (a, &i) in active.iter().enumerate() {
            let q = d.dot(&bd[a]);
            grad[a] = q / (lam[i] * lam[i]) - 1.0;
            hess[(a, a)] -= 2.0 * q / lam[i].powi(3);
            for (b, &j) in active.iter().enumerate() {
                let cross = bd[a].dot(&ch.solve(&bd[b]));
                hess[(a, b)] += 2.0 * cross / (lam[i] * lam[i] * lam[j] * lam[j]);
            }
        }
        let step = match (-&hess).cholesky() {
            Some(c) => c.solve(&grad),
            None => grad.clone(),
        };
        // Keep the multipliers positive, then backtrack on the dual value.
        let mut t: f64 = 1.0;
        for (a, &i) in active.iter().enumerate() {
            if step[a] < 0.0 {
                t = t.min(-0.9 * lam[i] / step[a]);
            }
        }
        let slope = grad.dot(&step);
        let mut moved = false;
        for _ in 0..60 {
            let mut trial = lam;
            for (a, &i) in active.iter().enumerate() {
                trial[i] = lam[i] + t * step[a];
            }
            if let Some((gt, dt, cht)) = eval(&trial) {
                if gt >= g + 1e-4 * t * slope {
                    lam = trial;
                    g = gt;
                    d = dt;
                    ch = cht;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved || lam.iter().any(|v| !v.is_finite()) {
            return None;
        }
    }
    None
}

/// Minimizes `(m1 − m0)ᵀ metric (m1 − m0)` over `m0 ∈ e0`, `m1 ∈ e1`.
pub fn qcqp_min_quadratic(e0: &Ellipsoid, e1: &Ellipsoid, metric: &DMatrix<f64>) -> Result<QcqpSolution> {
    let p = e0.dim();
    if e1.dim() != p || metric.shape() != (p, p) {
        return Err(Error::Dimension(format!(
            "ellipsoids of dimension {p} and {}, metric {:?}",
            e1.dim(),
            metric.shape()
        )));
    }
    let (w_sqrt, w_inv_sqrt) = linalg::spd_sqrt_pair(metric)?;
    let w = linalg::symmetrize(metric);
    let form = |a: &DVector<f64>, b: &DVector<f64>| {
        let d = b - a;
        d.dot(&(&w * &d)).max(0.0)
    };

    let p0 = Projection::new(e0, &w_sqrt, &w_inv_sqrt)?;
    let p1 = Projection::new(e1, &w_sqrt, &w_inv_sqrt)?;

    let done = |m0: DVector<f64>, m1: DVector<f64>, lower: f64, it: usize| {
        let value = form(&m0, &m1);
        QcqpSolution {
            value,
            m0,
            m1,
            lower_bound: lower.min(value),
            iterations: it,
        }
    };

    if e0.contains(e1.center(), 0.0) {
        return Ok(done(e1.center().clone(), e1.center().clone(), 0.0, 0));
    }
    if e1.contains(e0.center(), 0.0) {
        return Ok(done(e0.center().clone(), e0.center().clone(), 0.0, 0));
    }

    let scale = form(e0.center(), e1.center()).max(f64::MIN_POSITIVE);
    // Below this the gap is rounding noise in the iterates themselves.
    let magnitude = e0.center().dot(&(&w * e0.center())) + e1.center().dot(&(&w * e1.center())) + scale;
    let contact = 1e-28 * magnitude;
    let floor = ABS_GAP_TOL * scale;

    if let Some(sol) = dual_newton(e0, e1, &p0, &p1, &w_sqrt, &form, contact, floor) {
        return Ok(sol);
    }

    let mut m0 = p0.project(e1.center());
    let mut m1 = p1.project(&m0);
    let mut lower: f64 = 0.0;
    for it in 1..=MAX_ITERATIONS {
        m0 = p0.project(&m1);
        m1 = p1.project(&m0);
        let upper = form(&m0, &m1);
        if upper <= contact {
            return Ok(QcqpSolution {
                value: 0.0,
                m0,
                m1,
                lower_bound: 0.0,
                iterations: it,
            });
        }
        // Any direction u gives uᵀ(m1 − m0) ≥ inf_{E1} uᵀx − sup_{E0} uᵀx,
        // and uᵀ(m1 − m0) ≤ ‖u‖_{W⁻¹} ‖m1 − m0‖_W.
        let u = &w * (&m1 - &m0);
        let sep = -p1.support(&-&u) - p0.support(&u);
        let bound = (sep / upper.sqrt()).max(0.0);
        lower = lower.max(bound * bound);
        if upper - lower <= GAP_TOL * upper + floor {
            return Ok(done(m0, m1, lower, it));
        }
    }
    let upper = form(&m0, &m1);
    if upper <= 1e-12 * scale {
        // Touching or overlapping sets; the iterates crawl toward the contact point.
        return Ok(done(m0, m1, lower, MAX_ITERATIONS));
    }
    Err(Error::NonConvergence {
        what: "ellipsoid QCQP",
        iterations: MAX_ITERATIONS,
    })
}
