//! Worst-case criteria of a selection, the projection of a relaxed basis to
//! sensor indices, the swap refinement, and the assembled R–KL / R–C pipelines.
//!
//! For a fixed `E` the mean-independent parts of both criteria depend only on
//! the eigenvalues `Λ` of `(EᵀS0E)^{-1/2} EᵀS1E (EᵀS0E)^{-1/2} = QΛQᵀ`. In the
//! rotated coordinates `z = Qᵀ(EᵀS0E)^{-1/2} ξ` the projected mean ellipsoids
//! become a ball of radius `1/√k0` and an axis-aligned ellipsoid with
//! semi-axes `√(λ_i/k1)`, and the mean term is the smallest
//! `(z1 − z0)ᵀ W (z1 − z0)` with `W = I` (KL) or `(sI + (1−s)Λ)⁻¹` (Chernoff).

use std::cell::RefCell;
use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, golden_max, SymEigen};
use crate::model::{
    chernoff_distance, kl_distance, Criterion, GaussianPair, ProblemInstance, Projector, SelectionMatrix, SubspaceBasis,
    UncertaintyModel,
};
use crate::qcqp::{qcqp_min_quadratic, Ellipsoid};
use crate::relax::{greedy_stiefel, RelaxParams};

/// Width of the final bracket of the search over `s` in [`worst_case_c`].
pub const WORST_S_TOL: f64 = 1e-8;

/// A selection's problem in the rotated, whitened `p`-dimensional coordinates.
#[derive(Debug, Clone)]
pub struct Transformed {
    /// Ascending eigenvalues `Λ`.
    pub lambda: DVector<f64>,
    /// `Qᵀ (EᵀS0E)^{-1/2}`: maps projected means to the rotated coordinates.
    pub to_rotated: DMatrix<f64>,
    pub center0: DVector<f64>,
    pub center1: DVector<f64>,
    pub region0: Ellipsoid,
    pub region1: Ellipsoid,
}

impl Transformed {
    pub fn new(basis: &impl Projector, pair: &GaussianPair, unc: &UncertaintyModel) -> Result<Self> {
        let proj = pair.project(basis)?;
        let p = proj.dim();
        let t = linalg::spd_inv_sqrt(proj.s0())?;
        let eig = SymEigen::new(&(&t * proj.s1() * &t));
        eig.require_positive_definite()?;
        let to_rotated = eig.vectors.transpose() * &t;
        let center0 = &to_rotated * proj.m0();
        let center1 = &to_rotated * proj.m1();
        let region0 = if unc.k0().is_finite() {
            Ellipsoid::new(center0.clone(), DMatrix::identity(p, p) * unc.k0())?
        } else {
            Ellipsoid::point(center0.clone())
        };
        let region1 = if unc.k1().is_finite() {
            let shape = DMatrix::from_diagonal(&eig.values.map(|l| unc.k1() / l));
            Ellipsoid::new(center1.clone(), shape)?
        } else {
            Ellipsoid::point(center1.clone())
        };
        Ok(Transformed {
            lambda: eig.values,
            to_rotated,
            center0,
            center1,
            region0,
            region1,
        })
    }

    /// `Σ (λ − log λ − 1)`.
    pub fn kl_spectral(&self) -> f64 {
        self.lambda.iter().map(|&l| l - l.ln() - 1.0).sum()
    }

    /// `Σ [log(s + (1−s)λ) − (1−s) log λ]`.
    pub fn chernoff_spectral(&self, s: f64) -> f64 {
        self.lambda
            .iter()
            .map(|&l| (s + (1.0 - s) * l).ln() - (1.0 - s) * l.ln())
            .sum()
    }

    pub fn chernoff_metric(&self, s: f64) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.lambda.map(|l| 1.0 / (s + (1.0 - s) * l)))
    }

    /// Smallest mean term for the metric `w`, with its minimizers.
    pub fn mean_term(&self, w: &DMatrix<f64>) -> Result<(f64, DVector<f64>, DVector<f64>)> {
        let sol = qcqp_min_quadratic(&self.region0, &self.region1, w)?;
        Ok((sol.value, sol.m0, sol.m1))
    }

    /// `½[s(1−s)·q(s) + Σφ_C(s, λ)]` at a fixed `s`.
    pub fn chernoff_at(&self, s: f64) -> Result<f64> {
        if s <= 0.0 || s >= 1.0 {
            return Ok(0.0);
        }
        let (q, _, _) = self.mean_term(&self.chernoff_metric(s))?;
        Ok(0.5 * (s * (1.0 - s) * q + self.chernoff_spectral(s)))
    }
}

/// Worst-case KL divergence of a selection or subspace over the mean ellipsoids.
pub fn worst_case_kl(basis: &impl Projector, pair: &GaussianPair, unc: &UncertaintyModel) -> Result<f64> {
    if unc.is_exact() {
        return kl_distance(pair, basis);
    }
    let tr = Transformed::new(basis, pair, unc)?;
    let p = tr.lambda.len();
    let (q, _, _) = tr.mean_term(&DMatrix::identity(p, p))?;
    Ok((0.5 * (q + tr.kl_spectral())).max(0.0))
}

/// Worst-case Chernoff distance and its exponent.
///
/// The worst case for fixed `s` is a minimum of functions concave in `s`,
/// hence concave, and is maximized by golden section.
pub fn worst_case_c(basis: &impl Projector, pair: &GaussianPair, unc: &UncertaintyModel) -> Result<(f64, f64)> {
    if unc.is_exact() {
        let c = chernoff_distance(pair, basis)?;
        return Ok((c.value, c.s_star));
    }
    let tr = Transformed::new(basis, pair, unc)?;
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let (s, v) = golden_max(
        |s| match tr.chernoff_at(s) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        0.0,
        1.0,
        WORST_S_TOL,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    if v <= 0.0 {
        return Ok((0.0, 0.5));
    }
    Ok((v, s))
}

pub fn worst_case(
    criterion: Criterion,
    basis: &impl Projector,
    pair: &GaussianPair,
    unc: &UncertaintyModel,
) -> Result<f64> {
    match criterion {
        Criterion::Kl => worst_case_kl(basis, pair, unc),
        Criterion::Chernoff => worst_case_c(basis, pair, unc).map(|(v, _)| v),
    }
}

/// The least favourable means in sensor space for the KL criterion:
/// `(m0, m1, q)` where `q = (m1 − m0)ᵀE(EᵀS0E)⁻¹Eᵀ(m1 − m0)` is minimal.
///
/// The `p`-dimensional minimizers are lifted by
/// `m_i = m̂_i + S_iE(EᵀS_iE)⁻¹(ξ_i − Eᵀm̂_i)`, which keeps
/// `(m_i − m̂_i)ᵀS_i⁻¹(m_i − m̂_i)` equal to its projected value.
pub fn worst_case_means(
    basis: &impl Projector,
    pair: &GaussianPair,
    unc: &UncertaintyModel,
) -> Result<(DVector<f64>, DVector<f64>, f64)> {
    let tr = Transformed::new(basis, pair, unc)?;
    let p = tr.lambda.len();
    let (q, z0, z1) = tr.mean_term(&DMatrix::identity(p, p))?;
    let back = tr
        .to_rotated
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("singular whitening".into()))?;
    let e = basis.to_matrix(pair.dim());
    let lift = |s: &DMatrix<f64>, m_hat: &DVector<f64>, z: &DVector<f64>| -> Result<DVector<f64>> {
        let xi = &back * z;
        let se = s * &e;
        let proj = e.transpose() * &se;
        let delta = proj
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("projected covariance not positive definite".into()))?
            .solve(&(xi - e.transpose() * m_hat));
        Ok(m_hat + se * delta)
    };
    Ok((lift(pair.s0(), pair.m0(), &z0)?, lift(pair.s1(), pair.m1(), &z1)?, q))
}

/// The `p` sensors with the largest leverage `diag(EEᵀ)`; ties go to the
/// lower index.
pub fn project_to_selection(basis: &SubspaceBasis, p: usize) -> Result<SelectionMatrix> {
    let lev = basis.leverage();
    if p == 0 || p > lev.len() {
        return Err(Error::InvalidParameter(format!("p = {p} must be in 1..={}", lev.len())));
    }
    let mut order: Vec<usize> = (0..lev.len()).collect();
    order.sort_by(|&a, &b| lev[b].total_cmp(&lev[a]).then(a.cmp(&b)));
    order.truncate(p);
    SelectionMatrix::new(order)
}

/// Outcome of [`refine`].
#[derive(Debug, Clone)]
pub struct Refinement {
    pub selection: SelectionMatrix,
    pub objective: f64,
    /// Objective of the start, then the frozen objective after each pass.
    pub trace: Vec<f64>,
    /// Number of distinct selections evaluated.
    pub evaluations: usize,
}

/// Exactly `p` single-swap passes. Pass `j` tries every sensor not held by
/// another slot in slot `j` (ascending sensor order) and keeps the best;
/// the incumbent is replaced only on strict improvement.
pub fn refine(
    start: &SelectionMatrix,
    pair: &GaussianPair,
    unc: &UncertaintyModel,
    criterion: Criterion,
) -> Result<Refinement> {
    let n = pair.dim();
    start.check_input_dim(n)?;
    let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let mut eval = |slots: &[usize]| -> Result<f64> {
        let mut key = slots.to_vec();
        key.sort_unstable();
        if let Some(v) = cache.get(&key) {
            return Ok(*v);
        }
        let v = worst_case(criterion, &SelectionMatrix::new(key.clone())?, pair, unc)?;
        cache.insert(key, v);
        Ok(v)
    };
    let mut slots = start.indices().to_vec();
    let mut best = eval(&slots)?;
    let mut trace = vec![best];
    for j in 0..slots.len() {
        let mut keep = slots[j];
        for cand in 0..n {
            if slots.contains(&cand) {
                continue;
            }
            let mut trial = slots.clone();
            trial[j] = cand;
            let v = eval(&trial)?;
            if v > best {
                best = v;
                keep = cand;
            }
        }
        slots[j] = keep;
        trace.push(best);
    }
    Ok(Refinement {
        selection: SelectionMatrix::new(slots)?,
        objective: best,
        trace,
        evaluations: cache.len(),
    })
}

/// Objective and wall time of one pipeline phase.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseRecord {
    pub phase: &'static str,
    pub objective: f64,
    pub millis: f64,
}

/// Output of a selection pipeline.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub algorithm: String,
    pub criterion: Criterion,
    pub selection: SelectionMatrix,
    /// Worst-case criterion value of `selection`.
    pub objective: f64,
    /// Worst-case criterion value of the relaxed subspace.
    pub stiefel_objective: f64,
    pub phases: Vec<PhaseRecord>,
    pub refine_trace: Vec<f64>,
}

#[derive(Serialize)]
struct PipelineJson<'a> {
    algorithm: &'a str,
    criterion: Criterion,
    selection: Vec<usize>,
    objective: f64,
    stiefel_objective: f64,
    phases: &'a [PhaseRecord],
}

impl PipelineResult {
    pub fn total_millis(&self) -> f64 {
        self.phases.iter().map(|p| p.millis).sum()
    }

    pub fn projection_objective(&self) -> f64 {
        self.phases
            .iter()
            .find(|p| p.phase == "projection")
            .map(|p| p.objective)
            .unwrap_or(f64::NAN)
    }

    /// JSON with 1-based sensor labels and phase timings in milliseconds.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PipelineJson {
            algorithm: &self.algorithm,
            criterion: self.criterion,
            selection: self.selection.one_based(),
            objective: self.objective,
            stiefel_objective: self.stiefel_objective,
            phases: &self.phases,
        })
        .expect("pipeline result serializes")
    }
}

/// Tuning of the robust pipelines.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PipelineParams {
    pub relax: RelaxParams,
}

pub(crate) fn millis_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Projection and refinement after a relaxed basis is available.
pub(crate) fn finish_pipeline(
    algorithm: String,
    criterion: Criterion,
    instance: &ProblemInstance,
    basis: SubspaceBasis,
    mut phases: Vec<PhaseRecord>,
) -> Result<PipelineResult> {
    let (pair, unc) = (&instance.pair, &instance.uncertainty);
    let t = Instant::now();
    let stiefel_objective = worst_case(criterion, &basis, pair, unc)?;
    phases[0].objective = stiefel_objective;
    phases[0].millis += millis_since(t);

    let t = Instant::now();
    let start = project_to_selection(&basis, instance.p)?;
    let start_obj = worst_case(criterion, &start, pair, unc)?;
    phases.push(PhaseRecord {
        phase: "projection",
        objective: start_obj,
        millis: millis_since(t),
    });

    let t = Instant::now();
    let refined = refine(&start, pair, unc, criterion)?;
    phases.push(PhaseRecord {
        phase: "refinement",
        objective: refined.objective,
        millis: millis_since(t),
    });
    Ok(PipelineResult {
        algorithm,
        criterion,
        selection: refined.selection,
        objective: refined.objective,
        stiefel_objective,
        phases,
        refine_trace: refined.trace,
    })
}

/// Greedy relaxation, projection, and refinement under the chosen criterion.
pub fn robust_pipeline(instance: &ProblemInstance, criterion: Criterion, params: &PipelineParams) -> Result<PipelineResult> {
    let t = Instant::now();
    let basis = greedy_stiefel(&instance.pair, &instance.uncertainty, instance.p, criterion, &params.relax)?;
    let relax = PhaseRecord {
        phase: "relaxation",
        objective: f64::NAN,
        millis: millis_since(t),
    };
    finish_pipeline(format!("R-{}", criterion.label()), criterion, instance, basis, vec![relax])
}

pub fn r_kl(instance: &ProblemInstance, params: &PipelineParams) -> Result<PipelineResult> {
    robust_pipeline(instance, Criterion::Kl, params)
}

pub fn r_c(instance: &ProblemInstance, params: &PipelineParams) -> Result<PipelineResult> {
    robust_pipeline(instance, Criterion::Chernoff, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_pair(m1: f64) -> GaussianPair {
        GaussianPair::new(
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![m1]),
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
        )
        .unwrap()
    }

    fn diag_pair() -> GaussianPair {
        GaussianPair::new(
            DVector::zeros(3),
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            DMatrix::identity(3, 3),
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0])),
        )
        .unwrap()
    }

    #[test]
    fn scalar_interval_worst_case() {
        let pair = scalar_pair(3.0);
        let unc = UncertaintyModel::new(4.0, 4.0).unwrap();
        let sel = SelectionMatrix::full(1);
        assert_relative_eq!(worst_case_kl(&sel, &pair, &unc).unwrap(), 2.0, epsilon = 1e-9);
        let (v, s) = worst_case_c(&sel, &pair, &unc).unwrap();
        assert_relative_eq!(v, 0.5, epsilon = 1e-9);
        assert_relative_eq!(s, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn exact_uncertainty_matches_plain_distances() {
        let pair = diag_pair();
        let sel = SelectionMatrix::new(vec![0, 2]).unwrap();
        let exact = UncertaintyModel::exact();
        assert_eq!(worst_case_kl(&sel, &pair, &exact).unwrap(), kl_distance(&pair, &sel).unwrap());
        // A huge but finite k goes through the QCQP path.
        let big = UncertaintyModel::new(1e16, 1e16).unwrap();
        assert_relative_eq!(worst_case_kl(&sel, &pair, &big).unwrap(), kl_distance(&pair, &sel).unwrap(), epsilon = 1e-7);
        let c = chernoff_distance(&pair, &sel).unwrap().value;
        assert_relative_eq!(worst_case_c(&sel, &pair, &big).unwrap().0, c, epsilon = 1e-7);
    }

    #[test]
    fn projection_examples() {
        let mut e = DMatrix::zeros(6, 2);
        e[(1, 0)] = 1.0;
        e[(4, 1)] = 1.0;
        let sel = project_to_selection(&SubspaceBasis::new(e).unwrap(), 2).unwrap();
        assert_eq!(sel.one_based(), vec![2, 5]);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let e = DMatrix::from_column_slice(3, 1, &[h, h, 0.0]);
        let sel = project_to_selection(&SubspaceBasis::new(e).unwrap(), 1).unwrap();
        assert_eq!(sel.one_based(), vec![1]);
    }

    #[test]
    fn refinement_finds_best_single_sensor() {
        let pair = diag_pair();
        let start = SelectionMatrix::from_one_based(&[1]).unwrap();
        let r = refine(&start, &pair, &UncertaintyModel::exact(), Criterion::Kl).unwrap();
        assert_eq!(r.selection.one_based(), vec![3]);
        assert_relative_eq!(r.objective, 0.806_852_819_440_054_7, epsilon = 1e-9);
        let again = refine(&r.selection, &pair, &UncertaintyModel::exact(), Criterion::Kl).unwrap();
        assert_eq!(again.selection, r.selection);
        assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn full_selection_pipeline() {
        let inst = ProblemInstance::new(diag_pair(), UncertaintyModel::new(25.0, 25.0).unwrap(), 3).unwrap();
        let params = PipelineParams {
            relax: RelaxParams {
                sampling: crate::numrange::SamplingParams::with_grid(100, 10),
                ..Default::default()
            },
        };
        let r = r_kl(&inst, &params).unwrap();
        assert_eq!(r.selection.one_based(), vec![1, 2, 3]);
        let full = worst_case_kl(&SelectionMatrix::full(3), &inst.pair, &inst.uncertainty).unwrap();
        assert_relative_eq!(r.objective, full, epsilon = 1e-9);
        assert_relative_eq!(r.stiefel_objective, full, epsilon = 1e-7);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["selection"], serde_json::json!([1, 2, 3]));
        assert_eq!(json["phases"].as_array().unwrap().len(), 3);
    }
}
