//! Relaxation phase: the best single direction (a unit `e` instead of a
//! sensor), found globally through the joint numerical range, and the greedy
//! extension to `p` orthonormal columns.
//!
//! In whitened coordinates a direction `v` is summarized by `x = vᵀSv` (the
//! variance ratio) and `y = (vᵀm)²` (the squared whitened mean gap). The
//! worst case over the mean ellipsoids shrinks `√y` by `√x/√k1 + 1/√k0`, so
//! the robust single-direction objectives are functions of `(x, y)` alone:
//!
//! ```text
//! ψ_KL(x, y)    = x − log x + ((√y − √x/√k1 − 1/√k0)⁺)²
//! ψ_C(s, x, y)  = s(1−s)/2 · ((√y − √x/√k1 − 1/√k0)⁺)² / (s + (1−s)x)
//!                 − (1−s)/2 · log x + ½ log(s + (1−s)x)
//! ```
//!
//! The worst-case KL divergence of `e` is `(ψ_KL − 1)/2`; the worst-case
//! Chernoff distance is `max_s ψ_C`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, golden_max};
use crate::model::{whiten, Criterion, GaussianPair, SubspaceBasis, UncertaintyModel};
use crate::numrange::{self, SamplingParams};

/// Angles used for the one- and two-dimensional subproblems.
pub const SMALL_DIM_ANGLES: usize = 10_000;
/// Default number of grid values of `s` for the Chernoff relaxation.
pub const DEFAULT_S_GRID: usize = 33;
/// Width of the final bracket when polishing `s`.
pub const S_POLISH_TOL: f64 = 1e-8;

/// Tuning knobs of the relaxation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxParams {
    pub sampling: SamplingParams,
    pub s_grid: usize,
}

impl Default for RelaxParams {
    fn default() -> Self {
        RelaxParams {
            sampling: SamplingParams::default(),
            s_grid: DEFAULT_S_GRID,
        }
    }
}

/// The shrunken mean gap `(√y − √x/√k1 − 1/√k0)⁺`.
fn robust_gap(x: f64, y: f64, unc: &UncertaintyModel) -> f64 {
    (y.max(0.0).sqrt() - x.sqrt() * unc.inv_sqrt_k1() - unc.inv_sqrt_k0()).max(0.0)
}

pub fn psi_kl(x: f64, y: f64, unc: &UncertaintyModel) -> f64 {
    let g = robust_gap(x, y, unc);
    x - x.ln() + g * g
}

pub fn psi_c(s: f64, x: f64, y: f64, unc: &UncertaintyModel) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        return 0.0;
    }
    let g = robust_gap(x, y, unc);
    let blend = s + (1.0 - s) * x;
    0.5 * s * (1.0 - s) * g * g / blend - 0.5 * (1.0 - s) * x.ln() + 0.5 * blend.ln()
}

/// A single direction chosen by the relaxation.
#[derive(Debug, Clone)]
pub struct Direction {
    /// Unit vector in sensor space.
    pub e: DVector<f64>,
    /// Whitened coordinates of `e`: variance ratio and squared mean gap.
    pub x: f64,
    pub y: f64,
    /// Worst-case criterion value of `e` (`(ψ_KL − 1)/2` or `ψ_C` at `s_star`).
    pub value: f64,
    /// Chernoff exponent (Chernoff criterion only).
    pub s_star: Option<f64>,
    /// Set when the chosen boundary point could only be approximated by a
    /// nearby vertex generator.
    pub approximate: bool,
}

/// Candidate directions `v` in whitened coordinates with their `(x, y)` images.
enum Candidates {
    Sample {
        sample: numrange::BoundarySample,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
    },
    Grid(Vec<(DVector<f64>, f64, f64)>),
}

impl Candidates {
    fn build(s: &DMatrix<f64>, m: &DVector<f64>, sampling: &SamplingParams) -> Result<Self> {
        let n = s.nrows();
        let b = m * m.transpose();
        match n {
            1 => {
                let v = DVector::from_element(1, 1.0);
                Ok(Candidates::Grid(vec![(v, s[(0, 0)], m[0] * m[0])]))
            }
            2 => {
                let mut pts = Vec::with_capacity(SMALL_DIM_ANGLES);
                for i in 0..SMALL_DIM_ANGLES {
                    let th = i as f64 * std::f64::consts::PI / SMALL_DIM_ANGLES as f64;
                    let v = DVector::from_vec(vec![th.cos(), th.sin()]);
                    let x = v.dot(&(s * &v));
                    let y = v.dot(m).powi(2);
                    pts.push((v, x, y));
                }
                Ok(Candidates::Grid(pts))
            }
            _ => {
                let sample = numrange::boundary_sample(s, &b, sampling)?;
                Ok(Candidates::Sample {
                    sample,
                    a: s.clone(),
                    b,
                })
            }
        }
    }

    fn points(&self) -> Vec<(f64, f64)> {
        match self {
            Candidates::Sample { sample, .. } => sample.points.iter().map(|p| (p.x, p.y)).collect(),
            Candidates::Grid(g) => g.iter().map(|(_, x, y)| (*x, *y)).collect(),
        }
    }

    /// Best index for `objective`, ties to the first.
    fn argmax(&self, objective: impl Fn(f64, f64) -> f64) -> Result<(usize, f64)> {
        match self {
            Candidates::Sample { sample, .. } => numrange::maximize_over_boundary(sample, objective),
            Candidates::Grid(g) => {
                let mut best = (0, f64::NEG_INFINITY);
                for (i, (_, x, y)) in g.iter().enumerate() {
                    let v = objective(*x, *y);
                    if !v.is_finite() {
                        return Err(Error::NonFiniteObjective { index: i });
                    }
                    if v > best.1 {
                        best = (i, v);
                    }
                }
                Ok(best)
            }
        }
    }

    fn generator(&self, index: usize) -> Result<(DVector<f64>, bool)> {
        match self {
            Candidates::Sample { sample, a, b } => {
                let g = numrange::reconstruct_generator(a, b, sample, index)?;
                Ok((g.v, g.approximate))
            }
            Candidates::Grid(g) => Ok((g[index].0.clone(), false)),
        }
    }
}

fn lift(v: &DVector<f64>, s0_inv_sqrt: &DMatrix<f64>) -> DVector<f64> {
    let mut e = s0_inv_sqrt * v;
    e /= e.norm();
    linalg::sign_normalize(&mut e);
    e
}

/// Whitened `(x, y)` of a sensor-space direction.
pub fn whitened_coordinates(pair: &GaussianPair, e: &DVector<f64>) -> (f64, f64) {
    let v0 = e.dot(&(pair.s0() * e));
    let v1 = e.dot(&(pair.s1() * e));
    let g = e.dot(&pair.mean_gap());
    (v1 / v0, g * g / v0)
}

/// Best single direction for the worst-case KL divergence.
pub fn solve_1d_kl(pair: &GaussianPair, unc: &UncertaintyModel, params: &RelaxParams) -> Result<Direction> {
    let w = whiten(pair)?;
    let cands = Candidates::build(&w.s, &w.m, &params.sampling)?;
    let (idx, _) = cands.argmax(|x, y| psi_kl(x, y, unc))?;
    let (v, approximate) = cands.generator(idx)?;
    let e = lift(&v, &w.s0_inv_sqrt);
    let (x, y) = whitened_coordinates(pair, &e);
    Ok(Direction {
        value: 0.5 * (psi_kl(x, y, unc) - 1.0),
        e,
        x,
        y,
        s_star: None,
        approximate,
    })
}

/// `max_s ψ_C(s, x, y)` by golden section.
pub fn psi_c_max(x: f64, y: f64, unc: &UncertaintyModel) -> (f64, f64) {
    golden_max(|s| psi_c(s, x, y, unc), 0.0, 1.0, S_POLISH_TOL)
}

/// Best single direction for the worst-case Chernoff distance.
///
/// The candidate set does not depend on `s`, so one boundary sample serves
/// the whole `s` grid; the best grid value is then polished by golden section
/// on its two neighbouring intervals.
pub fn solve_1d_c(pair: &GaussianPair, unc: &UncertaintyModel, params: &RelaxParams) -> Result<Direction> {
    if params.s_grid < 3 {
        return Err(Error::InvalidParameter("s grid needs at least 3 points".into()));
    }
    let w = whiten(pair)?;
    let cands = Candidates::build(&w.s, &w.m, &params.sampling)?;
    let pts = cands.points();
    let inner = |s: f64| -> f64 {
        pts.iter()
            .map(|&(x, y)| psi_c(s, x, y, unc))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let g = params.s_grid;
    let grid: Vec<f64> = (0..g).map(|i| i as f64 / (g - 1) as f64).collect();
    let mut best_i = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &s) in grid.iter().enumerate() {
        let v = inner(s);
        if v > best_v {
            best_v = v;
            best_i = i;
        }
    }
    let lo = grid[best_i.saturating_sub(1)];
    let hi = grid[(best_i + 1).min(g - 1)];
    let (mut s_star, polished) = golden_max(inner, lo, hi, S_POLISH_TOL);
    if polished < best_v {
        s_star = grid[best_i];
    }
    if best_v <= 0.0 {
        s_star = 0.5;
    }
    let (idx, _) = cands.argmax(|x, y| psi_c(s_star, x, y, unc))?;
    let (v, approximate) = cands.generator(idx)?;
    let e = lift(&v, &w.s0_inv_sqrt);
    let (x, y) = whitened_coordinates(pair, &e);
    let (s_e, value) = psi_c_max(x, y, unc);
    Ok(Direction {
        e,
        x,
        y,
        value: value.max(0.0),
        s_star: Some(if value > 0.0 { s_e } else { 0.5 }),
        approximate,
    })
}

pub fn solve_1d(
    criterion: Criterion,
    pair: &GaussianPair,
    unc: &UncertaintyModel,
    params: &RelaxParams,
) -> Result<Direction> {
    match criterion {
        Criterion::Kl => solve_1d_kl(pair, unc, params),
        Criterion::Chernoff => solve_1d_c(pair, unc, params),
    }
}

/// Bookkeeping of the greedy deflation after `j` columns.
#[derive(Debug, Clone)]
pub struct GreedyState {
    /// `n × j` chosen columns.
    pub chosen: DMatrix<f64>,
    /// `n × (n − j)` orthonormal basis of their complement.
    pub complement: DMatrix<f64>,
    /// The pair seen through the complement.
    pub reduced: GaussianPair,
}

impl GreedyState {
    pub fn start(pair: &GaussianPair) -> Self {
        let n = pair.dim();
        GreedyState {
            chosen: DMatrix::zeros(n, 0),
            complement: DMatrix::identity(n, n),
            reduced: pair.clone(),
        }
    }

    /// Appends the column `U e'` (for a direction `e'` of the reduced problem)
    /// and recomputes the complement.
    pub fn push(&mut self, pair: &GaussianPair, reduced_dir: &DVector<f64>) -> Result<()> {
        let mut col = &self.complement * reduced_dir;
        col /= col.norm();
        linalg::sign_normalize(&mut col);
        let j = self.chosen.ncols();
        self.chosen = self.chosen.clone().insert_column(j, 0.0);
        self.chosen.set_column(j, &col);
        self.complement = linalg::orthonormal_complement(&self.chosen);
        if self.complement.ncols() > 0 {
            let u = &self.complement;
            self.reduced = GaussianPair::new(
                u.transpose() * pair.m0(),
                u.transpose() * pair.m1(),
                linalg::symmetrize(&(u.transpose() * pair.s0() * u)),
                linalg::symmetrize(&(u.transpose() * pair.s1() * u)),
            )?;
        }
        Ok(())
    }
}

/// Greedy deflation: column `j` is the best single direction of the problem
/// restricted to the orthogonal complement of columns `1..j−1`.
pub fn greedy_stiefel(
    pair: &GaussianPair,
    unc: &UncertaintyModel,
    p: usize,
    criterion: Criterion,
    params: &RelaxParams,
) -> Result<SubspaceBasis> {
    let n = pair.dim();
    if p == 0 || p > n {
        return Err(Error::InvalidParameter(format!("p = {p} must be in 1..={n}")));
    }
    let mut state = GreedyState::start(pair);
    for _ in 0..p {
        let dir = solve_1d(criterion, &state.reduced, unc, params)?;
        state.push(pair, &dir.e)?;
    }
    SubspaceBasis::new(state.chosen)
}
