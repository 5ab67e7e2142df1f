//! Ground truth: exhaustive search, Monte Carlo detection statistics, and the
//! clique and submodularity fixtures.

use std::collections::BTreeSet;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{kl_distance, Criterion, GaussianPair, ProblemInstance, Projector, SelectionMatrix, UncertaintyModel};
use crate::rounding::worst_case;

/// Default cap on the number of subsets an exhaustive search may visit.
pub const DEFAULT_ORACLE_CAP: u128 = 2_000_000;

/// `C(n, k)` without overflow for any realistic size.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// All `k`-subsets of `0..n` in lexicographic order.
#[derive(Debug, Clone)]
pub struct Subsets {
    n: usize,
    current: Option<Vec<usize>>,
}

pub fn subsets(n: usize, k: usize) -> Subsets {
    Subsets {
        n,
        current: if k <= n { Some((0..k).collect()) } else { None },
    }
}

impl Iterator for Subsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

/// Best selection by enumeration; ties keep the lexicographically first.
pub fn exhaustive_opt(instance: &ProblemInstance, criterion: Criterion, cap: u128) -> Result<(SelectionMatrix, f64)> {
    let (n, p) = (instance.n(), instance.p);
    let count = binomial(n, p);
    if count > cap {
        return Err(Error::OracleCapExceeded { subsets: count, cap });
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for s in subsets(n, p) {
        let v = worst_case(criterion, &SelectionMatrix::new(s.clone())?, &instance.pair, &instance.uncertainty)?;
        if best.as_ref().map_or(true, |(_, b)| v > *b) {
            best = Some((s, v));
        }
    }
    let (s, v) = best.expect("at least one subset");
    Ok((SelectionMatrix::new(s)?, v))
}

/// Criterion value of every `p`-subset, in lexicographic order.
pub fn exhaustive_values(
    instance: &ProblemInstance,
    criterion: Criterion,
    cap: u128,
) -> Result<Vec<(SelectionMatrix, f64)>> {
    let (n, p) = (instance.n(), instance.p);
    let count = binomial(n, p);
    if count > cap {
        return Err(Error::OracleCapExceeded { subsets: count, cap });
    }
    subsets(n, p)
        .map(|s| {
            let sel = SelectionMatrix::new(s)?;
            let v = worst_case(criterion, &sel, &instance.pair, &instance.uncertainty)?;
            Ok((sel, v))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Monte Carlo detection

/// Samples per random stream.
pub const MC_BLOCK: usize = 4096;
/// Number of LLR thresholds of an estimated ROC curve.
pub const ROC_THRESHOLDS: usize = 512;

/// Log-likelihood ratio `log f1(y) − log f0(y)` for a projected pair.
struct Llr {
    m0: DVector<f64>,
    m1: DVector<f64>,
    ch0: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    ch1: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    offset: f64,
}

fn chol(m: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    m.clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("projected covariance is not positive definite".into()))
}

fn logdet(ch: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    let l = ch.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

impl Llr {
    fn new(pair: &GaussianPair) -> Result<Self> {
        let ch0 = chol(pair.s0())?;
        let ch1 = chol(pair.s1())?;
        Ok(Llr {
            m0: pair.m0().clone(),
            m1: pair.m1().clone(),
            offset: 0.5 * (logdet(&ch0) - logdet(&ch1)),
            ch0,
            ch1,
        })
    }

    fn eval(&self, y: &DVector<f64>) -> f64 {
        let d0 = y - &self.m0;
        let d1 = y - &self.m1;
        0.5 * d0.dot(&self.ch0.solve(&d0)) - 0.5 * d1.dot(&self.ch1.solve(&d1)) + self.offset
    }
}

/// LLR values of `count` draws from hypothesis `hyp` of `truth`.
///
/// Draws come in blocks of [`MC_BLOCK`]; block `b` of hypothesis `h` uses
/// ChaCha20 seeded with `seed_from_u64(seed)` on stream `(h << 32) | b`, so
/// any blockwise schedule reproduces the sequential result.
fn llr_draws(detector: &Llr, truth: &GaussianPair, hyp: u64, count: usize, seed: u64) -> Result<Vec<f64>> {
    let (mean, cov) = if hyp == 0 {
        (truth.m0(), truth.s0())
    } else {
        (truth.m1(), truth.s1())
    };
    let l = chol(cov)?.l();
    let p = mean.len();
    let mut out = Vec::with_capacity(count);
    let blocks = count.div_ceil(MC_BLOCK);
    for b in 0..blocks {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream((hyp << 32) | b as u64);
        let here = MC_BLOCK.min(count - b * MC_BLOCK);
        for _ in 0..here {
            let z = DVector::from_iterator(p, (0..p).map(|_| StandardNormal.sample(&mut rng)));
            let y = mean + &l * z;
            out.push(detector.eval(&y));
        }
    }
    Ok(out)
}

/// Per-hypothesis LLR samples for one selection.
#[derive(Debug, Clone)]
pub struct LlrSamples {
    pub under_h0: Vec<f64>,
    pub under_h1: Vec<f64>,
}

/// Draws `trials/2` samples under H0 and the rest under H1 from `truth`
/// projected on `sel`, and scores them with the LLR of `detector`.
pub fn llr_samples(
    sel: &impl Projector,
    detector: &GaussianPair,
    truth: &GaussianPair,
    trials: usize,
    seed: u64,
) -> Result<LlrSamples> {
    if trials < 2 {
        return Err(Error::InvalidParameter("need at least two trials".into()));
    }
    let det = Llr::new(&detector.project(sel)?)?;
    let truth = truth.project(sel)?;
    let n0 = trials / 2;
    Ok(LlrSamples {
        under_h0: llr_draws(&det, &truth, 0, n0, seed)?,
        under_h1: llr_draws(&det, &truth, 1, trials - n0, seed)?,
    })
}

impl LlrSamples {
    /// Error rate of the zero-threshold test with equal priors.
    pub fn pe(&self) -> f64 {
        let false_alarm = self.under_h0.iter().filter(|&&v| v > 0.0).count() as f64;
        let miss = self.under_h1.iter().filter(|&&v| v <= 0.0).count() as f64;
        0.5 * (false_alarm / self.under_h0.len() as f64 + miss / self.under_h1.len() as f64)
    }
}

/// Bayes error of the maximum-likelihood test on the selected sensors.
pub fn estimate_pe(sel: &impl Projector, pair: &GaussianPair, trials: usize, seed: u64) -> Result<f64> {
    Ok(llr_samples(sel, pair, pair, trials, seed)?.pe())
}

/// As [`estimate_pe`], with the detector built from `assumed` while the
/// data follow `truth` (e.g. drifted means).
pub fn estimate_pe_mismatched(
    sel: &impl Projector,
    assumed: &GaussianPair,
    truth: &GaussianPair,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    Ok(llr_samples(sel, assumed, truth, trials, seed)?.pe())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub pfa: f64,
    pub pd: f64,
}

/// Monte Carlo detection summary of one selection.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionStats {
    pub pe: f64,
    /// Sorted by increasing `pfa`, with `pd` made nondecreasing.
    pub roc: Vec<RocPoint>,
    pub trials: usize,
    pub seed: u64,
}

impl DetectionStats {
    /// `threshold,pfa,pd` rows with a header.
    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "threshold,pfa,pd")?;
        for r in &self.roc {
            writeln!(out, "{},{},{}", r.threshold, r.pfa, r.pd)?;
        }
        Ok(())
    }
}

fn roc_from(samples: &LlrSamples, trials: usize, seed: u64) -> DetectionStats {
    let mut pooled: Vec<f64> = samples.under_h0.iter().chain(&samples.under_h1).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let mut h0 = samples.under_h0.clone();
    let mut h1 = samples.under_h1.clone();
    h0.sort_by(f64::total_cmp);
    h1.sort_by(f64::total_cmp);
    // Fraction of sorted values strictly above t.
    let above = |v: &[f64], t: f64| (v.len() - v.partition_point(|&x| x <= t)) as f64 / v.len() as f64;
    let mut roc: Vec<RocPoint> = (0..ROC_THRESHOLDS)
        .rev()
        .map(|i| {
            let q = (i as f64 + 0.5) / ROC_THRESHOLDS as f64;
            let idx = ((q * pooled.len() as f64) as usize).min(pooled.len() - 1);
            let t = pooled[idx];
            RocPoint {
                threshold: t,
                pfa: above(&h0, t),
                pd: above(&h1, t),
            }
        })
        .collect();
    roc.sort_by(|a, b| a.pfa.total_cmp(&b.pfa).then(b.threshold.total_cmp(&a.threshold)));
    let mut run: f64 = 0.0;
    for r in roc.iter_mut() {
        run = run.max(r.pd);
        r.pd = run;
    }
    DetectionStats {
        pe: samples.pe(),
        roc,
        trials,
        seed,
    }
}

/// Bayes error and ROC of the likelihood-ratio test on the selected sensors.
///
/// Thresholds are the 512 mid-quantiles of the pooled LLR samples.
pub fn estimate_roc(sel: &impl Projector, pair: &GaussianPair, trials: usize, seed: u64) -> Result<DetectionStats> {
    Ok(roc_from(&llr_samples(sel, pair, pair, trials, seed)?, trials, seed))
}

pub fn estimate_roc_mismatched(
    sel: &impl Projector,
    assumed: &GaussianPair,
    truth: &GaussianPair,
    trials: usize,
    seed: u64,
) -> Result<DetectionStats> {
    Ok(roc_from(&llr_samples(sel, assumed, truth, trials, seed)?, trials, seed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdEstimate {
    pub pd: f64,
    /// The requested false-alarm rate was outside the sampled range and was
    /// clamped to its nearest end.
    pub clamped: bool,
}

/// Piecewise-linear interpolation of the detection rate at `pfa`.
pub fn interpolate_pd(stats: &DetectionStats, pfa: f64) -> PdEstimate {
    let roc = &stats.roc;
    let (first, last) = (roc[0], roc[roc.len() - 1]);
    if pfa <= first.pfa {
        return PdEstimate {
            pd: first.pd,
            clamped: pfa < first.pfa,
        };
    }
    if pfa >= last.pfa {
        return PdEstimate {
            pd: last.pd,
            clamped: pfa > last.pfa,
        };
    }
    let k = roc.partition_point(|r| r.pfa <= pfa);
    let (a, b) = (roc[k - 1], roc[k]);
    let pd = if b.pfa > a.pfa {
        a.pd + (b.pd - a.pd) * (pfa - a.pfa) / (b.pfa - a.pfa)
    } else {
        a.pd
    };
    PdEstimate { pd, clamped: false }
}

// ---------------------------------------------------------------------------
// Clique reduction

/// Undirected graph on vertices `1..=n` without self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl SimpleGraph {
    /// Edges are 1-based unordered pairs.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b || a == 0 || b == 0 || a > n || b > n {
                return Err(Error::InvalidParameter(format!("bad edge ({a}, {b}) for {n} vertices")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(SimpleGraph { n, edges: set })
    }

    pub fn complete(n: usize) -> Self {
        let edges = (1..=n).flat_map(|a| (a + 1..=n).map(move |b| (a, b)));
        SimpleGraph::new(n, edges).expect("valid edges")
    }

    pub fn empty(n: usize) -> Self {
        SimpleGraph {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn path(n: usize) -> Self {
        SimpleGraph::new(n, (1..n).map(|a| (a, a + 1))).expect("valid edges")
    }

    /// Graph whose edge set is given by the bits of `mask` over the pairs
    /// `(1,2), (1,3), …, (n−1,n)` in that order.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        let pairs = (1..=n).flat_map(|a| (a + 1..=n).map(move |b| (a, b)));
        let edges = pairs.enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, e)| e);
        SimpleGraph::new(n, edges).expect("valid edges")
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Brute-force test for a clique on `p` vertices.
    pub fn has_clique(&self, p: usize) -> bool {
        subsets(self.n, p).any(|s| {
            s.iter()
                .enumerate()
                .all(|(i, &a)| s[i + 1..].iter().all(|&b| self.has_edge(a + 1, b + 1)))
        })
    }
}

/// `2n` on the diagonal, `−1` for each edge, `0` elsewhere; strictly
/// diagonally dominant, hence positive definite.
pub fn clique_matrix(g: &SimpleGraph) -> DMatrix<f64> {
    let n = g.n;
    let mut m = DMatrix::from_diagonal_element(n, n, 2.0 * n as f64);
    for (a, b) in g.edges() {
        m[(a - 1, b - 1)] = -1.0;
        m[(b - 1, a - 1)] = -1.0;
    }
    m
}

/// Sum of the entries of `A⁻¹`.
pub fn sei(a: &DMatrix<f64>) -> Result<f64> {
    let ones = DVector::from_element(a.nrows(), 1.0);
    let x = chol(a)?.solve(&ones);
    Ok(x.sum())
}

/// Selection instance whose optimum reveals whether `g` has a `p`-clique:
/// `m0 = 0`, `m1 = 1`, `S0 = S1 = S(g)`, exact means.
pub fn hardness_instance(g: &SimpleGraph, p: usize) -> Result<ProblemInstance> {
    let n = g.n;
    let s = clique_matrix(g);
    let pair = GaussianPair::new(DVector::zeros(n), DVector::from_element(n, 1.0), s.clone(), s)?;
    ProblemInstance::new(pair, UncertaintyModel::exact(), p)
}

/// Optimal criterion value of [`hardness_instance`] exactly when `g` has a
/// `p`-clique: `½·p/(2n−p+1)` (KL) or `⅛·p/(2n−p+1)` (Chernoff).
pub fn clique_value(n: usize, p: usize, criterion: Criterion) -> f64 {
    let sei = p as f64 / (2 * n - p + 1) as f64;
    match criterion {
        Criterion::Kl => 0.5 * sei,
        Criterion::Chernoff => 0.125 * sei,
    }
}

// ---------------------------------------------------------------------------
// Submodularity

/// KL values of the selections `{1}`, `{1,2}`, `{1,3}`, `{1,2,3}` for
/// `m0 = m1`, `S0 = I`, `S1 = I + ε(h2h3ᵀ + h3h2ᵀ)`. The first three vanish and
/// the last is `−½ log(1 − ε²)`, so adding sensor 3 gains more on top of
/// `{1,2}` than on top of `{1}`.
pub fn submodularity_counterexample(epsilon: f64) -> Result<[f64; 4]> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    let mut s1 = DMatrix::identity(3, 3);
    s1[(1, 2)] = epsilon;
    s1[(2, 1)] = epsilon;
    let pair = GaussianPair::new(DVector::zeros(3), DVector::zeros(3), DMatrix::identity(3, 3), s1)?;
    let mut out = [0.0; 4];
    for (slot, labels) in [&[1][..], &[1, 2], &[1, 3], &[1, 2, 3]].iter().enumerate() {
        out[slot] = kl_distance(&pair, &SelectionMatrix::from_one_based(labels)?)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn subset_enumeration() {
        let all: Vec<_> = subsets(4, 2).collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0], vec![0, 1]);
        assert_eq!(all[5], vec![2, 3]);
        assert_eq!(subsets(3, 3).count(), 1);
        assert_eq!(binomial(30, 15), 155_117_520);
        assert_eq!(binomial(3, 4), 0);
    }

    #[test]
    fn oracle_cap() {
        let inst = hardness_instance(&SimpleGraph::complete(30), 15).unwrap();
        assert!(matches!(
            exhaustive_opt(&inst, Criterion::Kl, DEFAULT_ORACLE_CAP),
            Err(Error::OracleCapExceeded { .. })
        ));
    }

    #[test]
    fn complete_graph_sei() {
        let g = SimpleGraph::complete(5);
        let m = clique_matrix(&g);
        let sel = SelectionMatrix::from_one_based(&[2, 4, 5]).unwrap();
        assert_relative_eq!(sei(&sel.project_matrix(&m)).unwrap(), 3.0 / 8.0, epsilon = 1e-12);
        let e = SimpleGraph::empty(5);
        let m = clique_matrix(&e);
        assert_relative_eq!(sei(&sel.project_matrix(&m)).unwrap(), 3.0 / 10.0, epsilon = 1e-12);
    }

    #[test]
    fn k4_pair_optimum() {
        let inst = hardness_instance(&SimpleGraph::complete(4), 2).unwrap();
        let (_, v) = exhaustive_opt(&inst, Criterion::Kl, DEFAULT_ORACLE_CAP).unwrap();
        assert_relative_eq!(v, 1.0 / 7.0, epsilon = 1e-12);
    }

    #[test]
    fn graph_helpers() {
        let g = SimpleGraph::from_mask(4, 0b000111);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(1, 2), (1, 3), (1, 4)]);
        assert!(g.has_clique(2) && !g.has_clique(3));
        assert!(SimpleGraph::new(3, [(1, 1)]).is_err());
        assert!(SimpleGraph::path(3).has_edge(3, 2));
    }

    #[test]
    fn counterexample_values() {
        let v = submodularity_counterexample(0.5).unwrap();
        assert_eq!(&v[..3], &[0.0, 0.0, 0.0]);
        assert_relative_eq!(v[3], -0.5 * 0.75f64.ln(), epsilon = 1e-12);
        assert!(submodularity_counterexample(1.0).is_err());
    }

    #[test]
    fn interpolation_clamps() {
        let stats = DetectionStats {
            pe: 0.0,
            roc: vec![
                RocPoint { threshold: 1.0, pfa: 0.2, pd: 0.5 },
                RocPoint { threshold: 0.0, pfa: 0.6, pd: 0.9 },
            ],
            trials: 2,
            seed: 0,
        };
        assert_relative_eq!(interpolate_pd(&stats, 0.4).pd, 0.7, epsilon = 1e-15);
        assert!(interpolate_pd(&stats, 0.1).clamped);
        assert!(!interpolate_pd(&stats, 0.6).clamped);
    }

    #[test]
    fn detection_is_reproducible() {
        let pair = GaussianPair::new(
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.5]),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2) * 2.0,
        )
        .unwrap();
        let sel = SelectionMatrix::full(2);
        let a = estimate_roc(&sel, &pair, 10_001, 7).unwrap();
        let b = estimate_roc(&sel, &pair, 10_001, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.roc.windows(2).all(|w| w[0].pfa <= w[1].pfa && w[0].pd <= w[1].pd));
        let mut csv = Vec::new();
        a.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), ROC_THRESHOLDS + 1);
    }
}
