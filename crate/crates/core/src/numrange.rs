//! Boundary sampling of the joint numerical range
//! `R(A, B) = {(vᵀAv, vᵀBv) : ‖v‖ = 1}` of two symmetric forms.
//!
//! For `n ≥ 3` the range is compact and convex, and its boundary is traced by
//! the minimal eigenvector `u(t)` of `C(t) = A cos t + B sin t` as `t` sweeps
//! `[0, 2π)`. Where `λ_min(t)` is repeated the boundary has a flat piece; those
//! show up as two far-apart consecutive vertices, and the chord between them
//! is filled with interpolated points.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::linalg::{self, SymEigen};

/// Default number of angles `t_k = 2π(k − 1)/K`.
pub const DEFAULT_GRID: usize = 1000;
/// Default number of sub-intervals used to bridge a gap.
pub const DEFAULT_INTERP: usize = 10;
/// Default gap threshold as a fraction of the vertex cloud diameter.
pub const DEFAULT_GAP_FRACTION: f64 = 0.01;

/// Absolute residual accepted for a reconstructed generator.
pub const RECONSTRUCTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PointSource {
    /// Image of the minimal eigenvector at a grid angle.
    Vertex,
    /// Image of a canonical basis vector (added for `n < 3`).
    Canonical,
    /// Point on the chord between two consecutive vertices.
    Interpolated,
}

impl PointSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            PointSource::Vertex => "vertex",
            PointSource::Canonical => "canonical",
            PointSource::Interpolated => "interpolated",
        }
    }
}

/// A point of the sampled range.
#[derive(Debug, Clone)]
pub struct RangePoint {
    pub x: f64,
    pub y: f64,
    /// Sweep parameter; interpolated points get the fractional angle between
    /// their bracketing vertices.
    pub t: f64,
    pub source: PointSource,
    /// Unit vector `v` with `vᵀAv = x`, `vᵀBv = y` (vertices and canonical points).
    pub generator: Option<DVector<f64>>,
    /// For interpolated points: indices (into the sample) of the two bracketing
    /// vertices and the fraction along the chord.
    pub chord: Option<(usize, usize, f64)>,
}

/// How far apart consecutive vertices must be before the chord is filled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapRule {
    /// Fraction of the diameter of the vertex cloud.
    RelativeToDiameter(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingParams {
    pub grid_size: usize,
    pub interp_count: usize,
    pub gap: GapRule,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            grid_size: DEFAULT_GRID,
            interp_count: DEFAULT_INTERP,
            gap: GapRule::RelativeToDiameter(DEFAULT_GAP_FRACTION),
        }
    }
}

impl SamplingParams {
    pub fn with_grid(grid_size: usize, interp_count: usize) -> Self {
        SamplingParams {
            grid_size,
            interp_count,
            ..Default::default()
        }
    }
}

/// A finite sample of `∂R(A, B)`.
#[derive(Debug, Clone)]
pub struct BoundarySample {
    /// Vertices in sweep order, interleaved with the interpolated points of
    /// the chord that follows each vertex; canonical points come last.
    pub points: Vec<RangePoint>,
    /// `λ_min(t_k)` for each vertex, in sweep order.
    pub lambda_min: Vec<f64>,
    pub grid_size: usize,
    pub interp_count: usize,
    pub gap_threshold: f64,
}

impl BoundarySample {
    pub fn vertices(&self) -> impl Iterator<Item = &RangePoint> {
        self.points
            .iter()
            .filter(|p| p.source == PointSource::Vertex)
    }

    /// Writes `t,x,y,source` rows with a header.
    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        writeln!(out, "t,x,y,source")?;
        for p in &self.points {
            writeln!(out, "{},{},{},{}", p.t, p.x, p.y, p.source.as_str())?;
        }
        Ok(())
    }
}

/// Minimal eigenpair of `m` with a deterministic choice inside a repeated
/// eigenvalue: the candidate whose absolute entries are lexicographically
/// largest, signed so that its first nonzero entry is positive.
pub fn min_eigenpair(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let eig = SymEigen::new(m);
    let lam = eig.min();
    let scale = 1.0 + eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let cluster: Vec<usize> = (0..eig.values.len())
        .take_while(|&i| eig.values[i] <= lam + 1e-10 * scale)
        .collect();
    let mut best = eig.vectors.column(0).into_owned();
    for &i in cluster.iter().skip(1) {
        let cand = eig.vectors.column(i);
        if lex_abs_greater(cand.as_slice(), best.as_slice()) {
            best = cand.into_owned();
        }
    }
    if let Some(first) = best.iter().find(|v| v.abs() > 1e-12) {
        if *first < 0.0 {
            best.neg_mut();
        }
    }
    (lam, best)
}

fn lex_abs_greater(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.abs(), y.abs());
        if (x - y).abs() > 1e-12 {
            return x > y;
        }
    }
    false
}

fn quad(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

/// Samples the boundary of `R(a, b)`.
///
/// For `n < 3` the range need not be convex and the eigenvector sweep may miss
/// parts of it; the images of the canonical basis vectors are added as extra
/// candidates in that case.
pub fn boundary_sample(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    params: &SamplingParams,
) -> Result<BoundarySample> {
    linalg::require_symmetric(a, 1e-10)?;
    linalg::require_symmetric(b, 1e-10)?;
    let n = a.nrows();
    if b.shape() != (n, n) || n == 0 {
        return Err(Error::Dimension(format!(
            "forms must share a nonzero dimension, got {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if params.grid_size == 0 || params.interp_count == 0 {
        return Err(Error::InvalidParameter(
            "grid size and interpolation count must be positive".into(),
        ));
    }
    let k = params.grid_size;
    let mut vertices = Vec::with_capacity(k);
    let mut lambda_min = Vec::with_capacity(k);
    for idx in 0..k {
        let t = idx as f64 * std::f64::consts::TAU / k as f64;
        let c = a * t.cos() + b * t.sin();
        let (lam, u) = min_eigenpair(&c);
        lambda_min.push(lam);
        vertices.push(RangePoint {
            x: quad(a, &u),
            y: quad(b, &u),
            t,
            source: PointSource::Vertex,
            generator: Some(u),
            chord: None,
        });
    }

    let gap_threshold = match params.gap {
        GapRule::Absolute(g) => g,
        GapRule::RelativeToDiameter(f) => f * diameter(&vertices),
    };

    let j_count = params.interp_count;
    let mut points = Vec::with_capacity(k * 2);
    let mut vertex_pos = Vec::with_capacity(k);
    for idx in 0..k {
        vertex_pos.push(points.len());
        points.push(vertices[idx].clone());
        let next = (idx + 1) % k;
        if k < 2 {
            continue;
        }
        let (p, q) = (&vertices[idx], &vertices[next]);
        let dist = (p.x - q.x).hypot(p.y - q.y);
        if dist > gap_threshold && j_count > 1 {
            let t_next = if next == 0 {
                std::f64::consts::TAU
            } else {
                q.t
            };
            for j in 1..j_count {
                let frac = j as f64 / j_count as f64;
                points.push(RangePoint {
                    x: (1.0 - frac) * p.x + frac * q.x,
                    y: (1.0 - frac) * p.y + frac * q.y,
                    t: p.t + frac * (t_next - p.t),
                    source: PointSource::Interpolated,
                    generator: None,
                    // Filled in below once every vertex position is known.
                    chord: Some((idx, next, frac)),
                });
            }
        }
    }
    for pt in points.iter_mut() {
        if let Some((i, j, f)) = pt.chord {
            pt.chord = Some((vertex_pos[i], vertex_pos[j], f));
        }
    }
    if n < 3 {
        for i in 0..n {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            points.push(RangePoint {
                x: a[(i, i)],
                y: b[(i, i)],
                t: std::f64::consts::TAU,
                source: PointSource::Canonical,
                generator: Some(e),
                chord: None,
            });
        }
    }
    Ok(BoundarySample {
        points,
        lambda_min,
        grid_size: k,
        interp_count: j_count,
        gap_threshold,
    })
}

fn diameter(points: &[RangePoint]) -> f64 {
    let mut d: f64 = 0.0;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            d = d.max((p.x - q.x).hypot(p.y - q.y));
        }
    }
    d
}

/// Index and value of the sampled point maximizing `objective(x, y)`.
///
/// Ties go to the smallest sweep parameter, then vertex before canonical
/// before interpolated.
pub fn maximize_over_boundary(
    sample: &BoundarySample,
    objective: impl Fn(f64, f64) -> f64,
) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in sample.points.iter().enumerate() {
        let v = objective(p.x, p.y);
        if !v.is_finite() {
            return Err(Error::NonFiniteObjective { index: i });
        }
        best = match best {
            None => Some((i, v)),
            Some((bi, bv)) => {
                let bp = &sample.points[bi];
                let better = v > bv
                    || (v == bv && (p.t, p.source) < (bp.t, bp.source));
                if better {
                    Some((i, v))
                } else {
                    Some((bi, bv))
                }
            }
        };
    }
    best.ok_or_else(|| Error::InvalidParameter("empty boundary sample".into()))
}

/// A unit vector generating a chosen range point.
#[derive(Debug, Clone)]
pub struct Generator {
    pub v: DVector<f64>,
    /// `max(|vᵀAv − x|, |vᵀBv − y|)`.
    pub residual: f64,
    /// Set when the quadratic system could not be solved and the nearest
    /// vertex generator was returned instead.
    pub approximate: bool,
}

/// Recovers a unit `v` with `vᵀAv = x`, `vᵀBv = y` for the sample point at `index`.
///
/// Vertices return their stored eigenvector. For a chord point the two
/// bracketing eigenvectors span a great circle whose image runs from one chord
/// end to the other; a bisection along it finds the chord position, and a
/// few minimum-norm Gauss-Newton steps on the full system
/// `vᵀAv = x, vᵀBv = y, vᵀv = 1` remove what is left.
pub fn reconstruct_generator(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    sample: &BoundarySample,
    index: usize,
) -> Result<Generator> {
    let point = sample
        .points
        .get(index)
        .ok_or_else(|| Error::InvalidParameter(format!("no sample point {index}")))?;
    if let Some(v) = &point.generator {
        return Ok(Generator {
            residual: residual(a, b, v, point.x, point.y),
            v: v.clone(),
            approximate: false,
        });
    }
    let (iu, iw, frac) = point
        .chord
        .ok_or_else(|| Error::InvalidParameter("point has neither generator nor chord".into()))?;
    let (pu, pw) = (&sample.points[iu], &sample.points[iw]);
    let u = pu.generator.as_ref().expect("vertex carries a generator");
    let w = pw.generator.as_ref().expect("vertex carries a generator");
    let (x, y) = (point.x, point.y);

    let mut v = chord_bisection(a, b, u, w, (pu.x, pu.y), (pw.x, pw.y), frac)
        .unwrap_or_else(|| if frac < 0.5 { u.clone() } else { w.clone() });
    v = gauss_newton_polish(a, b, v, x, y);
    let res = residual(a, b, &v, x, y);
    if res <= RECONSTRUCTION_TOL && ((v.norm() - 1.0).abs() <= 1e-10) {
        return Ok(Generator {
            v,
            residual: res,
            approximate: false,
        });
    }
    let nearest = if frac < 0.5 { pu } else { pw };
    let v = nearest.generator.clone().expect("vertex carries a generator");
    Ok(Generator {
        residual: residual(a, b, &v, x, y),
        v,
        approximate: true,
    })
}

fn residual(a: &DMatrix<f64>, b: &DMatrix<f64>, v: &DVector<f64>, x: f64, y: f64) -> f64 {
    (quad(a, v) - x).abs().max((quad(b, v) - y).abs())
}

fn chord_bisection(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
    pu: (f64, f64),
    pw: (f64, f64),
    frac: f64,
) -> Option<DVector<f64>> {
    let c = u.dot(w);
    let mut perp = w - u * c;
    let s = perp.norm();
    if s < 1e-12 {
        return None;
    }
    perp /= s;
    let theta_end = s.atan2(c);
    let dir = (pw.0 - pu.0, pw.1 - pu.1);
    let len2 = dir.0 * dir.0 + dir.1 * dir.1;
    if len2 == 0.0 {
        return None;
    }
    let along = |theta: f64| -> (f64, DVector<f64>) {
        let v = u * theta.cos() + &perp * theta.sin();
        let px = quad(a, &v) - pu.0;
        let py = quad(b, &v) - pu.1;
        ((px * dir.0 + py * dir.1) / len2, v)
    };
    let (mut lo, mut hi) = (0.0, theta_end);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if along(mid).0 < frac {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(along(0.5 * (lo + hi)).1)
}

fn gauss_newton_polish(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    mut v: DVector<f64>,
    x: f64,
    y: f64,
) -> DVector<f64> {
    let scale = 1.0 + a.amax() + b.amax();
    for _ in 0..50 {
        let av = a * &v;
        let bv = b * &v;
        let f = Vector3::new(v.dot(&av) - x, v.dot(&bv) - y, v.dot(&v) - 1.0);
        if f.amax() <= 1e-14 * scale {
            break;
        }
        // Rows of the Jacobian: 2(Av)ᵀ, 2(Bv)ᵀ, 2vᵀ.
        let rows = [&av * 2.0, &bv * 2.0, &v * 2.0];
        let mut g = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                g[(i, j)] = rows[i].dot(&rows[j]);
            }
        }
        let reg = 1e-14 * g.trace().max(1.0);
        for i in 0..3 {
            g[(i, i)] += reg;
        }
        let Some(lam) = g.lu().solve(&f) else { break };
        let mut step = DVector::zeros(v.len());
        for i in 0..3 {
            step.axpy(lam[i], &rows[i], 1.0);
        }
        let before = f.norm();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &v - &step * alpha;
            let fc = Vector3::new(
                quad(a, &cand) - x,
                quad(b, &cand) - y,
                cand.dot(&cand) - 1.0,
            );
            if fc.norm() < before {
                v = cand;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let norm = v.norm();
    if norm > 0.0 {
        v /= norm;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn identity_first_form_gives_unit_x() {
        let a = DMatrix::identity(4, 4);
        let b = DMatrix::from_fn(4, 4, |i, j| ((i + 2 * j) % 5) as f64 + ((j + 2 * i) % 5) as f64);
        let s = boundary_sample(&a, &b, &SamplingParams::with_grid(200, 10)).unwrap();
        for v in s.vertices() {
            assert_relative_eq!(v.x, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_second_form() {
        let a = diag(&[2.0, 3.0, 5.0]);
        let b = DMatrix::zeros(3, 3);
        let s = boundary_sample(&a, &b, &SamplingParams::with_grid(100, 10)).unwrap();
        for v in s.vertices() {
            assert!(v.y.abs() < 1e-14);
            assert!((v.x - 2.0).abs() < 1e-12 || (v.x - 5.0).abs() < 1e-12, "x = {}", v.x);
        }
        let interp: Vec<_> = s
            .points
            .iter()
            .filter(|p| p.source == PointSource::Interpolated)
            .collect();
        assert!(!interp.is_empty());
        for p in &interp {
            assert!(p.x > 2.0 && p.x < 5.0 && p.y.abs() < 1e-14);
        }
        let (idx, _) = maximize_over_boundary(&s, |x, _| x).unwrap();
        assert_relative_eq!(s.points[idx].x, 5.0, epsilon = 1e-6);
        let (idx, val) = maximize_over_boundary(&s, |_, y| y).unwrap();
        assert!(val.abs() < 1e-14);
        assert_eq!(s.points[idx].t, 0.0);
    }

    #[test]
    fn chord_point_reconstruction_closed_form() {
        // The chord point (3.5, 0) needs 2v1² + 5v3² = 3.5 with v1² + v3² = 1,
        // i.e. v1² = v3² = 0.5 and v2 = 0.
        let a = diag(&[2.0, 3.0, 5.0]);
        let b = DMatrix::zeros(3, 3);
        let s = boundary_sample(&a, &b, &SamplingParams::with_grid(100, 2)).unwrap();
        let idx = s
            .points
            .iter()
            .position(|p| p.source == PointSource::Interpolated && (p.x - 3.5).abs() < 1e-12)
            .expect("midpoint of the flat piece is sampled");
        let g = reconstruct_generator(&a, &b, &s, idx).unwrap();
        assert!(!g.approximate);
        assert!(g.residual < 1e-10);
        assert_relative_eq!(g.v[0] * g.v[0], 0.5, epsilon = 1e-9);
        assert!(g.v[1].abs() < 1e-9);
        assert_relative_eq!(g.v.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn vertex_reconstruction_returns_stored_vector() {
        let a = diag(&[1.0, 2.0, 3.0]);
        let b = DMatrix::from_element(3, 3, 1.0 / 3.0);
        let s = boundary_sample(&a, &b, &SamplingParams::with_grid(64, 10)).unwrap();
        let g = reconstruct_generator(&a, &b, &s, 0).unwrap();
        assert_eq!(&g.v, s.points[0].generator.as_ref().unwrap());
    }

    #[test]
    fn eigen_curve_consistency() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.3, 0.0, 0.3, 3.0]);
        let m = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let b = &m * m.transpose();
        let s = boundary_sample(&a, &b, &SamplingParams::with_grid(128, 10)).unwrap();
        for (v, lam) in s.vertices().zip(&s.lambda_min) {
            let u = v.generator.as_ref().unwrap();
            let c = &a * v.t.cos() + &b * v.t.sin();
            assert!((u.dot(&(&c * u)) - lam).abs() < 1e-9);
            assert!((u.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn small_dimensions_add_canonical_points() {
        let a = diag(&[1.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let s = boundary_sample(&a, &b, &SamplingParams::with_grid(16, 4)).unwrap();
        let canon: Vec<_> = s
            .points
            .iter()
            .filter(|p| p.source == PointSource::Canonical)
            .collect();
        assert_eq!(canon.len(), 2);
        assert_eq!((canon[1].x, canon[1].y), (4.0, 0.0));
    }

    #[test]
    fn non_finite_objective_is_error() {
        let a = diag(&[1.0, 2.0, 3.0]);
        let b = DMatrix::zeros(3, 3);
        let s = boundary_sample(&a, &b, &SamplingParams::with_grid(8, 2)).unwrap();
        assert!(matches!(
            maximize_over_boundary(&s, |_, _| f64::NAN),
            Err(Error::NonFiniteObjective { index: 0 })
        ));
    }

    #[test]
    fn asymmetric_input_rejected() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let b = DMatrix::zeros(3, 3);
        assert!(boundary_sample(&a, &b, &SamplingParams::default()).is_err());
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let a = diag(&[1.0, 2.0, 3.0]);
        let b = DMatrix::zeros(3, 3);
        let s = boundary_sample(&a, &b, &SamplingParams::with_grid(8, 2)).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x,y,source\n0,"));
        assert_eq!(text.lines().count(), s.points.len() + 1);
    }
}
