//! Problem data and closed-form distances between projected Gaussians.
//!
//! Selecting `p` of `n` sensors is the linear map `y = Eᵀx` with `E` an
//! `n × p` matrix. Under hypothesis `H_i` the reading `x ~ N(m_i, S_i)`, so the
//! selected readings are distributed as `N(Eᵀm_i, EᵀS_iE)`. The two criteria
//! computed here are the Kullback-Leibler divergence
//! `D(N(Eᵀm1, EᵀS1E) ‖ N(Eᵀm0, EᵀS0E))` and the Chernoff distance between the
//! same two projected densities.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, golden_max, SymEigen};

/// Tolerance used when checking that a [`SubspaceBasis`] has orthonormal columns.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Width of the final bracket in the scalar search over the Chernoff exponent `s`.
pub const CHERNOFF_S_TOL: f64 = 1e-10;

/// Which distance between the projected distributions is maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Kullback-Leibler divergence `D(H1 ‖ H0)`.
    Kl,
    /// Chernoff distance (maximized over the exponent `s`).
    #[serde(alias = "c")]
    Chernoff,
}

impl Criterion {
    pub fn label(&self) -> &'static str {
        match self {
            Criterion::Kl => "KL",
            Criterion::Chernoff => "C",
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(Criterion::Kl),
            "c" | "chernoff" => Ok(Criterion::Chernoff),
            other => Err(Error::InvalidParameter(format!("unknown criterion {other:?}"))),
        }
    }
}

/// The two hypothesis distributions `N(m0, S0)` and `N(m1, S1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPair {
    m0: DVector<f64>,
    m1: DVector<f64>,
    s0: DMatrix<f64>,
    s1: DMatrix<f64>,
}

impl GaussianPair {
    pub fn new(
        m0: DVector<f64>,
        m1: DVector<f64>,
        s0: DMatrix<f64>,
        s1: DMatrix<f64>,
    ) -> Result<Self> {
        let n = m0.len();
        if n == 0 {
            return Err(Error::Dimension("empty distribution".into()));
        }
        if m1.len() != n || s0.shape() != (n, n) || s1.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "m0 has length {n}, m1 {}, S0 {:?}, S1 {:?}",
                m1.len(),
                s0.shape(),
                s1.shape()
            )));
        }
        if m0.iter().chain(m1.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite mean entry".into()));
        }
        for s in [&s0, &s1] {
            linalg::require_symmetric(s, linalg::SYM_TOL)?;
            SymEigen::new(s).require_positive_definite()?;
        }
        Ok(GaussianPair {
            m0,
            m1,
            s0: linalg::symmetrize(&s0),
            s1: linalg::symmetrize(&s1),
        })
    }

    pub fn dim(&self) -> usize {
        self.m0.len()
    }

    pub fn m0(&self) -> &DVector<f64> {
        &self.m0
    }

    pub fn m1(&self) -> &DVector<f64> {
        &self.m1
    }

    pub fn s0(&self) -> &DMatrix<f64> {
        &self.s0
    }

    pub fn s1(&self) -> &DMatrix<f64> {
        &self.s1
    }

    /// `m1 − m0`.
    pub fn mean_gap(&self) -> DVector<f64> {
        &self.m1 - &self.m0
    }

    /// The pair with the hypotheses exchanged.
    pub fn swapped(&self) -> GaussianPair {
        GaussianPair {
            m0: self.m1.clone(),
            m1: self.m0.clone(),
            s0: self.s1.clone(),
            s1: self.s0.clone(),
        }
    }

    /// Distributions of `Eᵀx` under both hypotheses.
    pub fn project(&self, basis: &impl Projector) -> Result<GaussianPair> {
        basis.check_input_dim(self.dim())?;
        GaussianPair::new(
            basis.project_vector(&self.m0),
            basis.project_vector(&self.m1),
            linalg::symmetrize(&basis.project_matrix(&self.s0)),
            linalg::symmetrize(&basis.project_matrix(&self.s1)),
        )
    }

    /// KL divergence `D(N(m1,S1) ‖ N(m0,S0))` of the unprojected pair.
    pub fn kl(&self) -> Result<f64> {
        let p = self.dim() as f64;
        let ch0 = cholesky(&self.s0)?;
        let d = self.mean_gap();
        let quad = d.dot(&ch0.solve(&d));
        let trace = ch0.solve(&self.s1).trace();
        let ld0 = logdet_from(&ch0);
        let ld1 = logdet_from(&cholesky(&self.s1)?);
        Ok((0.5 * (quad + trace - (ld1 - ld0) - p)).max(0.0))
    }

    /// Chernoff `s`-divergence of the unprojected pair.
    pub fn chernoff_objective(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidParameter(format!("s = {s} outside [0, 1]")));
        }
        if s == 0.0 || s == 1.0 {
            return Ok(0.0);
        }
        let blend = &self.s0 * s + &self.s1 * (1.0 - s);
        let chb = cholesky(&blend)?;
        let d = self.mean_gap();
        let quad = d.dot(&chb.solve(&d));
        let ld0 = logdet_from(&cholesky(&self.s0)?);
        let ld1 = logdet_from(&cholesky(&self.s1)?);
        let ldb = logdet_from(&chb);
        Ok(0.5 * (s * (1.0 - s) * quad - s * ld0 - (1.0 - s) * ld1 + ldb))
    }

    /// Chernoff distance of the unprojected pair.
    pub fn chernoff(&self) -> Result<Chernoff> {
        let scale = 1.0 + self.s0.amax().max(self.s1.amax());
        if self.mean_gap().amax() <= 1e-14 * scale && (&self.s0 - &self.s1).amax() <= 1e-14 * scale
        {
            return Ok(Chernoff {
                value: 0.0,
                s_star: 0.5,
            });
        }
        // Validate once so the closure below cannot fail.
        self.chernoff_objective(0.5)?;
        let (s_star, value) = golden_max(
            |s| self.chernoff_objective(s).unwrap_or(f64::NEG_INFINITY),
            0.0,
            1.0,
            CHERNOFF_S_TOL,
        );
        Ok(Chernoff {
            value: value.max(0.0),
            s_star,
        })
    }
}

fn cholesky(m: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    m.clone().cholesky().ok_or_else(|| {
        let e = SymEigen::new(m);
        Error::NotPositiveDefinite {
            min_eig: e.min(),
            max_eig: e.max(),
        }
    })
}

fn logdet_from(ch: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let l = ch.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Result of maximizing the Chernoff `s`-divergence over `s ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chernoff {
    pub value: f64,
    pub s_star: f64,
}

/// Ellipsoidal mean uncertainty.
///
/// The true mean `m_i` may drift from its estimate `m̂_i` anywhere in the
/// ellipsoid `(m_i − m̂_i)ᵀ S_i⁻¹ (m_i − m̂_i) ≤ 1 / k_i`. Larger `k_i` means a
/// smaller region; `k_i = +∞` collapses it to the point `m̂_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyModel {
    k0: f64,
    k1: f64,
}

impl UncertaintyModel {
    pub fn new(k0: f64, k1: f64) -> Result<Self> {
        for k in [k0, k1] {
            if k.is_nan() || k <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "uncertainty size must be in (0, +inf], got {k}"
                )));
            }
        }
        Ok(UncertaintyModel { k0, k1 })
    }

    /// No uncertainty: `k0 = k1 = +∞`.
    pub fn exact() -> Self {
        UncertaintyModel {
            k0: f64::INFINITY,
            k1: f64::INFINITY,
        }
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn is_exact(&self) -> bool {
        self.k0.is_infinite() && self.k1.is_infinite()
    }

    /// `1/√k0` (zero when `k0 = ∞`).
    pub fn inv_sqrt_k0(&self) -> f64 {
        inv_sqrt(self.k0)
    }

    /// `1/√k1` (zero when `k1 = ∞`).
    pub fn inv_sqrt_k1(&self) -> f64 {
        inv_sqrt(self.k1)
    }
}

impl Default for UncertaintyModel {
    fn default() -> Self {
        Self::exact()
    }
}

fn inv_sqrt(k: f64) -> f64 {
    if k.is_infinite() {
        0.0
    } else {
        1.0 / k.sqrt()
    }
}

/// Something that maps `ℝⁿ → ℝᵖ` by `x ↦ Eᵀx` with `EᵀE = I`.
pub trait Projector {
    /// Required input dimension, if fixed.
    fn input_dim(&self) -> Option<usize>;

    fn output_dim(&self) -> usize;

    fn check_input_dim(&self, n: usize) -> Result<()>;

    fn project_vector(&self, v: &DVector<f64>) -> DVector<f64>;

    /// `Eᵀ M E`.
    fn project_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64>;

    /// The dense `n × p` matrix `E`.
    fn to_matrix(&self, n: usize) -> DMatrix<f64>;
}

/// A set of `p` distinct sensors, i.e. a 0/1 matrix with one unit entry per
/// column. Indices are zero-based and kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SelectionMatrix {
    indices: Vec<usize>,
}

impl SelectionMatrix {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidParameter("empty selection".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!(
                "duplicate sensor in selection {indices:?}"
            )));
        }
        Ok(SelectionMatrix { indices })
    }

    /// Builds a selection from 1-based sensor labels.
    pub fn from_one_based(labels: &[usize]) -> Result<Self> {
        if labels.contains(&0) {
            return Err(Error::InvalidParameter(
                "1-based sensor labels must be positive".into(),
            ));
        }
        Self::new(labels.iter().map(|&l| l - 1).collect())
    }

    /// All `n` sensors.
    pub fn full(n: usize) -> Self {
        SelectionMatrix {
            indices: (0..n).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

impl Projector for SelectionMatrix {
    fn input_dim(&self) -> Option<usize> {
        None
    }

    fn output_dim(&self) -> usize {
        self.indices.len()
    }

    fn check_input_dim(&self, n: usize) -> Result<()> {
        match self.indices.last() {
            Some(&max) if max < n => Ok(()),
            _ => Err(Error::Dimension(format!(
                "selection {:?} does not fit in dimension {n}",
                self.one_based()
            ))),
        }
    }

    fn project_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        v.select_rows(&self.indices)
    }

    fn project_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m.select_rows(&self.indices).select_columns(&self.indices)
    }

    fn to_matrix(&self, n: usize) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(n, self.indices.len());
        for (col, &row) in self.indices.iter().enumerate() {
            e[(row, col)] = 1.0;
        }
        e
    }
}

/// An `n × p` matrix with orthonormal columns (a point on the Stiefel manifold).
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    cols: DMatrix<f64>,
}

impl SubspaceBasis {
    pub fn new(cols: DMatrix<f64>) -> Result<Self> {
        if cols.ncols() == 0 || cols.ncols() > cols.nrows() {
            return Err(Error::Dimension(format!(
                "basis must be n x p with 1 <= p <= n, got {:?}",
                cols.shape()
            )));
        }
        let defect = linalg::orthonormality_defect(&cols);
        if !(defect <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidParameter(format!(
                "columns are not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(SubspaceBasis { cols })
    }

    /// Orthonormalizes the columns (Gram-Schmidt, first column kept in direction).
    pub fn orthonormalized(cols: &DMatrix<f64>) -> Result<Self> {
        Self::new(linalg::orthonormalize_columns(cols))
    }

    pub fn identity(n: usize) -> Self {
        SubspaceBasis {
            cols: DMatrix::identity(n, n),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.cols
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.cols
    }

    pub fn dim(&self) -> usize {
        self.cols.nrows()
    }

    pub fn rank(&self) -> usize {
        self.cols.ncols()
    }

    /// `diag(E Eᵀ)`: the squared row norms.
    pub fn leverage(&self) -> Vec<f64> {
        self.cols.row_iter().map(|r| r.norm_squared()).collect()
    }
}

impl Projector for SubspaceBasis {
    fn input_dim(&self) -> Option<usize> {
        Some(self.cols.nrows())
    }

    fn output_dim(&self) -> usize {
        self.cols.ncols()
    }

    fn check_input_dim(&self, n: usize) -> Result<()> {
        if n == self.cols.nrows() {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "basis has {} rows, distributions have dimension {n}",
                self.cols.nrows()
            )))
        }
    }

    fn project_vector(&self, v: &DVector<f64>) -> DVector<f64> {
        self.cols.tr_mul(v)
    }

    fn project_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.cols.tr_mul(&(m * &self.cols))
    }

    fn to_matrix(&self, _n: usize) -> DMatrix<f64> {
        self.cols.clone()
    }
}

/// KL divergence between the projected distributions,
/// `D(N(Eᵀm1, EᵀS1E) ‖ N(Eᵀm0, EᵀS0E))`.
pub fn kl_distance(pair: &GaussianPair, basis: &impl Projector) -> Result<f64> {
    pair.project(basis)?.kl()
}

/// Chernoff `s`-divergence `−log ∫ f1^s f0^(1−s)` of the projected pair.
pub fn chernoff_objective(s: f64, pair: &GaussianPair, basis: &impl Projector) -> Result<f64> {
    pair.project(basis)?.chernoff_objective(s)
}

/// Chernoff distance of the projected pair and the maximizing exponent.
///
/// When the projected distributions coincide the objective is identically
/// zero and `s_star` is reported as `0.5`.
pub fn chernoff_distance(pair: &GaussianPair, basis: &impl Projector) -> Result<Chernoff> {
    pair.project(basis)?.chernoff()
}

/// The pair in coordinates where `S0` becomes the identity.
#[derive(Debug, Clone)]
pub struct WhitenedPair {
    /// `S0^{-1/2} S1 S0^{-1/2}`.
    pub s: DMatrix<f64>,
    /// `S0^{-1/2} (m1 − m0)`.
    pub m: DVector<f64>,
    /// `S0^{1/2}`.
    pub s0_sqrt: DMatrix<f64>,
    /// `S0^{-1/2}`.
    pub s0_inv_sqrt: DMatrix<f64>,
}

impl WhitenedPair {
    /// The rank-one matrix `m mᵀ`.
    pub fn mean_outer(&self) -> DMatrix<f64> {
        &self.m * self.m.transpose()
    }
}

pub fn whiten(pair: &GaussianPair) -> Result<WhitenedPair> {
    let (s0_sqrt, s0_inv_sqrt) = linalg::spd_sqrt_pair(pair.s0())?;
    let s = linalg::symmetrize(&(&s0_inv_sqrt * pair.s1() * &s0_inv_sqrt));
    let m = &s0_inv_sqrt * pair.mean_gap();
    Ok(WhitenedPair {
        s,
        m,
        s0_sqrt,
        s0_inv_sqrt,
    })
}

/// A selection problem: the distributions, their uncertainty, and the number
/// of sensors to keep.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub pair: GaussianPair,
    pub uncertainty: UncertaintyModel,
    pub p: usize,
}

impl ProblemInstance {
    pub fn new(pair: GaussianPair, uncertainty: UncertaintyModel, p: usize) -> Result<Self> {
        if p == 0 || p > pair.dim() {
            return Err(Error::InvalidParameter(format!(
                "p = {p} must be in 1..={}",
                pair.dim()
            )));
        }
        Ok(ProblemInstance {
            pair,
            uncertainty,
            p,
        })
    }

    pub fn n(&self) -> usize {
        self.pair.dim()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceFile::from(self)).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.try_into()
    }
}

/// An uncertainty size as stored on disk: a positive number or `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KValue {
    Number(f64),
    Text(String),
}

impl KValue {
    pub fn from_f64(k: f64) -> Self {
        if k.is_infinite() {
            KValue::Text("inf".into())
        } else {
            KValue::Number(k)
        }
    }

    pub fn to_f64(&self) -> Result<f64> {
        match self {
            KValue::Number(v) => Ok(*v),
            KValue::Text(t) => match t.trim().to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                other => other
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad uncertainty size {t:?}"))),
            },
        }
    }
}

/// On-disk JSON layout of a [`ProblemInstance`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct InstanceFile {
    pub n: usize,
    pub p: usize,
    pub m0: Vec<f64>,
    pub m1: Vec<f64>,
    pub S0: Vec<Vec<f64>>,
    pub S1: Vec<Vec<f64>>,
    pub k0: KValue,
    pub k1: KValue,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], n: usize, name: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("{name} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl From<&ProblemInstance> for InstanceFile {
    fn from(inst: &ProblemInstance) -> Self {
        InstanceFile {
            n: inst.n(),
            p: inst.p,
            m0: inst.pair.m0().iter().copied().collect(),
            m1: inst.pair.m1().iter().copied().collect(),
            S0: rows_of(inst.pair.s0()),
            S1: rows_of(inst.pair.s1()),
            k0: KValue::from_f64(inst.uncertainty.k0()),
            k1: KValue::from_f64(inst.uncertainty.k1()),
        }
    }
}

impl TryFrom<InstanceFile> for ProblemInstance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        if f.m0.len() != f.n || f.m1.len() != f.n {
            return Err(Error::Dimension(format!("means must have length {}", f.n)));
        }
        let pair = GaussianPair::new(
            DVector::from_vec(f.m0),
            DVector::from_vec(f.m1),
            matrix_from_rows(&f.S0, f.n, "S0")?,
            matrix_from_rows(&f.S1, f.n, "S1")?,
        )?;
        let unc = UncertaintyModel::new(f.k0.to_f64()?, f.k1.to_f64()?)?;
        ProblemInstance::new(pair, unc, f.p)
    }
}
