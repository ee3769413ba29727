//! Simplex weights and Carathéodory reduction for lattice moment problems.
//!
//! Both routines work on the image of each candidate point under a
//! [`MomentMap`] (its coordinates and/or the upper triangle of its outer
//! product). A measure matches a target when the weighted average of these
//! images equals the target vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::DiscreteMeasure;
use crate::linalg::{kernel_vector, least_squares, Matrix};
use crate::scalar::Real;

/// Which moments of a point are matched.
///
/// Second moments are stored as the upper triangle of `l lᵀ` in row-major
/// order: `(0,0), (0,1), …, (0,d-1), (1,1), …`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentMap {
    /// `l ↦ (l, triu(l lᵀ))`, `h = d + d(d+1)/2`.
    MeanAndSecond { dim: usize },
    /// `l ↦ triu(l lᵀ)`, `h = d(d+1)/2`.
    SecondOnly { dim: usize },
    /// `l ↦ l`, `h = d`.
    MeanOnly { dim: usize },
}

impl MomentMap {
    pub fn dim(&self) -> usize {
        match *self {
            MomentMap::MeanAndSecond { dim } | MomentMap::SecondOnly { dim } | MomentMap::MeanOnly { dim } => dim,
        }
    }

    /// Length of the image vector.
    pub fn h(&self) -> usize {
        let d = self.dim();
        let tri = d * (d + 1) / 2;
        match self {
            MomentMap::MeanAndSecond { .. } => d + tri,
            MomentMap::SecondOnly { .. } => tri,
            MomentMap::MeanOnly { .. } => d,
        }
    }

    fn has_mean(&self) -> bool {
        !matches!(self, MomentMap::SecondOnly { .. })
    }

    fn has_second(&self) -> bool {
        !matches!(self, MomentMap::MeanOnly { .. })
    }

    pub fn eval<T: Real>(&self, l: &[T]) -> Vec<T> {
        let d = self.dim();
        assert_eq!(l.len(), d, "point dimension does not match the moment map");
        let mut out = Vec::with_capacity(self.h());
        if self.has_mean() {
            out.extend_from_slice(l);
        }
        if self.has_second() {
            for i in 0..d {
                for j in i..d {
                    out.push(l[i] * l[j]);
                }
            }
        }
        out
    }

    /// Target vector from a mean and a raw (non-centred) second moment.
    pub fn target<T: Real>(&self, mean: &[T], second: &Matrix<T>) -> Vec<T> {
        let d = self.dim();
        let mut out = Vec::with_capacity(self.h());
        if self.has_mean() {
            out.extend_from_slice(&mean[..d]);
        }
        if self.has_second() {
            for i in 0..d {
                for j in i..d {
                    out.push(second[(i, j)]);
                }
            }
        }
        out
    }

    /// Image of a whole measure: `Σ pᵢ map(lᵢ)`.
    pub fn measure_image<T: Real>(&self, m: &DiscreteMeasure<T>) -> Vec<T> {
        let mut acc = vec![T::zero(); self.h()];
        for (p, w) in m.atoms() {
            for (a, v) in acc.iter_mut().zip(self.eval(p)) {
                *a = *a + w * v;
            }
        }
        acc
    }
}

/// `(h+1) × r` matrix with columns `(map(lⱼ), 1)`.
fn augmented<T: Real>(points: &[Vec<T>], map: MomentMap) -> Matrix<T> {
    let h = map.h();
    let mut m = Matrix::zeros(h + 1, points.len());
    for (j, p) in points.iter().enumerate() {
        for (i, v) in map.eval(p).into_iter().enumerate() {
            m[(i, j)] = v;
        }
        m[(h, j)] = T::one();
    }
    m
}

const PHASE_ONE_TOL: f64 = 1e-9;

/// Feasibility LP `Σ pⱼ map(lⱼ) = target`, `p` in the simplex.
///
/// Returns the full weight vector aligned with `points` (zero for unused
/// candidates), or `None` when the target is outside the convex hull.
pub fn simplex_weights<T: Real>(points: &[Vec<T>], target: &[T], map: MomentMap) -> Result<Option<Vec<T>>> {
    if points.is_empty() {
        return Err(Error::InvalidMeasure("no candidate points".into()));
    }
    if target.len() != map.h() {
        return Err(Error::DimensionMismatch { expected: map.h(), got: target.len() });
    }
    if let Some(p) = points.iter().find(|p| p.len() != map.dim()) {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: p.len() });
    }
    if target.iter().any(|v| !v.is_finite()) || points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite moment problem".into()));
    }
    let a = augmented(points, map);
    let mut rhs = target.to_vec();
    rhs.push(T::one());
    let rows = a.rows();
    let r = a.cols();

    // row scaling keeps the phase-one tolerance meaningful across units
    let mut scaled = a.clone();
    let mut srhs = rhs.clone();
    for i in 0..rows {
        let s = scaled.row(i).iter().fold(srhs[i].abs(), |m, v| m.max(v.abs()));
        if s > T::zero() {
            for j in 0..r {
                scaled[(i, j)] = scaled[(i, j)] / s;
            }
            srhs[i] = srhs[i] / s;
        }
        if srhs[i] < T::zero() {
            for j in 0..r {
                scaled[(i, j)] = -scaled[(i, j)];
            }
            srhs[i] = -srhs[i];
        }
    }

    let weights = match phase_one(&scaled, &srhs) {
        Some(w) => w,
        None => return Ok(None),
    };
    let mut w: Vec<T> = weights.into_iter().map(|v| v.max(T::zero())).collect();
    let total: T = w.iter().copied().sum();
    if !(total > T::zero()) {
        return Ok(None);
    }
    for v in w.iter_mut() {
        *v = *v / total;
    }
    refine_on_support(&scaled, &srhs, &mut w);
    Ok(Some(w))
}

/// Same as [`simplex_weights`] but returns the resulting measure.
pub fn solve_simplex_weights<T: Real>(
    points: &[Vec<T>],
    target: &[T],
    map: MomentMap,
) -> Result<Option<DiscreteMeasure<T>>> {
    match simplex_weights(points, target, map)? {
        Some(w) => Ok(Some(DiscreteMeasure::from_unnormalized(points.to_vec(), w)?)),
        None => Ok(None),
    }
}

/// Phase-one simplex with Bland's rule. `rhs` must be nonnegative.
fn phase_one<T: Real>(a: &Matrix<T>, rhs: &[T]) -> Option<Vec<T>> {
    let m = a.rows();
    let n = a.cols();
    let width = n + m + 1;
    // tableau rows 0..m are constraints, row m is the reduced-cost row
    let mut tab = Matrix::zeros(m + 1, width);
    for i in 0..m {
        for j in 0..n {
            tab[(i, j)] = a[(i, j)];
        }
        tab[(i, n + i)] = T::one();
        tab[(i, width - 1)] = rhs[i];
    }
    // objective: minimize the sum of artificials, expressed in non-basics
    for j in 0..width {
        if (n..n + m).contains(&j) {
            continue;
        }
        let s: T = (0..m).map(|i| tab[(i, j)]).sum();
        tab[(m, j)] = -s;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let eps = T::tol(1e-12);
    let max_iter = 50 * (n + m) + 1000;
    for _ in 0..max_iter {
        let entering = (0..n + m).find(|&j| tab[(m, j)] < -eps);
        let Some(e) = entering else { break };
        let mut leave: Option<usize> = None;
        let mut best = T::infinity();
        for i in 0..m {
            let c = tab[(i, e)];
            if c > eps {
                let ratio = tab[(i, width - 1)] / c;
                let better = match leave {
                    None => true,
                    Some(l) => ratio < best - eps || ((ratio - best).abs() <= eps && basis[i] < basis[l]),
                };
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        // phase one is bounded below by zero, so this cannot trigger in exact arithmetic
        let Some(l) = leave else { break };
        pivot(&mut tab, l, e);
        basis[l] = e;
    }
    let objective = -tab[(m, width - 1)];
    if objective > T::tol(PHASE_ONE_TOL) {
        return None;
    }
    let mut x = vec![T::zero(); n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            x[b] = tab[(i, width - 1)];
        }
    }
    Some(x)
}

fn pivot<T: Real>(tab: &mut Matrix<T>, row: usize, col: usize) {
    let width = tab.cols();
    let p = tab[(row, col)];
    for j in 0..width {
        tab[(row, j)] = tab[(row, j)] / p;
    }
    for i in 0..tab.rows() {
        if i == row {
            continue;
        }
        let f = tab[(i, col)];
        if f == T::zero() {
            continue;
        }
        for j in 0..width {
            tab[(i, j)] = tab[(i, j)] - f * tab[(row, j)];
        }
    }
}

/// Newton (least-squares) correction of the weights on their current support,
/// reverted if it would push a weight negative.
fn refine_on_support<T: Real>(a: &Matrix<T>, rhs: &[T], w: &mut [T]) {
    let support: Vec<usize> = (0..w.len()).filter(|&j| w[j] > T::zero()).collect();
    if support.is_empty() || support.len() > a.rows() {
        return;
    }
    let mut sub = Matrix::zeros(a.rows(), support.len());
    for (k, &j) in support.iter().enumerate() {
        for i in 0..a.rows() {
            sub[(i, k)] = a[(i, j)];
        }
    }
    for _ in 0..2 {
        let cur: Vec<T> = support.iter().map(|&j| w[j]).collect();
        let image = sub.mul_vec(&cur);
        let resid: Vec<T> = rhs.iter().zip(&image).map(|(&t, &v)| t - v).collect();
        if resid.iter().all(|r| r.abs() <= T::epsilon()) {
            return;
        }
        let Some(delta) = least_squares(&sub, &resid, T::tol(1e-13)) else { return };
        let next: Vec<T> = cur.iter().zip(&delta).map(|(&c, &d)| c + d).collect();
        if next.iter().any(|&v| v < T::zero()) {
            return;
        }
        let new_image = sub.mul_vec(&next);
        let old_err = resid.iter().fold(T::zero(), |m, r| m.max(r.abs()));
        let new_err = rhs.iter().zip(&new_image).fold(T::zero(), |m, (&t, &v)| m.max((t - v).abs()));
        if new_err > old_err {
            return;
        }
        for (k, &j) in support.iter().enumerate() {
            w[j] = next[k];
        }
    }
}

/// Carathéodory reduction of a weighted point set to at most `h + 1` atoms
/// with the same image under `map`. Zero weights are dropped first; the
/// returned weights are aligned with the returned points.
pub fn caratheodory_reduce_weights<T: Real>(points: &[Vec<T>], weights: &[T], map: MomentMap) -> (Vec<Vec<T>>, Vec<T>) {
    let h = map.h();
    let mut pts: Vec<Vec<T>> = Vec::new();
    let mut w: Vec<T> = Vec::new();
    for (p, &v) in points.iter().zip(weights) {
        if v > T::zero() {
            pts.push(p.clone());
            w.push(v);
        }
    }
    if pts.len() <= h + 1 {
        return (pts, w);
    }
    let original_points = pts.clone();
    let original_weights = w.clone();
    let clamp = T::tol(1e-12);
    while pts.len() > h + 1 {
        let k = h + 2;
        let sub = augmented(&pts[..k], map);
        let Some(mut c) = kernel_vector(&sub, T::tol(1e-12)) else { break };
        if !c.iter().any(|&v| v > T::zero()) {
            c.iter_mut().for_each(|v| *v = -*v);
        }
        let mut arg = None;
        let mut t = T::infinity();
        for (i, &ci) in c.iter().enumerate() {
            if ci > T::zero() {
                let ratio = w[i] / ci;
                if ratio < t {
                    t = ratio;
                    arg = Some(i);
                }
            }
        }
        let Some(arg) = arg else { break };
        for i in 0..k {
            w[i] = w[i] - t * c[i];
            if w[i] < T::zero() && w[i] >= -clamp {
                w[i] = T::zero();
            }
        }
        w[arg] = T::zero();
        let mut i = 0;
        while i < pts.len() {
            if w[i] <= T::zero() {
                pts.remove(i);
                w.remove(i);
            } else {
                i += 1;
            }
        }
    }
    let total: T = w.iter().copied().sum();
    w.iter_mut().for_each(|v| *v = *v / total);

    // undo accumulated round-off: match the original image on the final support
    let orig = augmented(&original_points, map).mul_vec(&original_weights);
    let a = augmented(&pts, map);
    refine_on_support(&a, &orig, &mut w);
    (pts, w)
}

/// Measure form of [`caratheodory_reduce_weights`].
pub fn caratheodory_reduce<T: Real>(m: &DiscreteMeasure<T>, map: MomentMap) -> DiscreteMeasure<T> {
    if m.len() <= map.h() + 1 {
        return m.clone();
    }
    let (pts, w) = caratheodory_reduce_weights(m.points(), m.weights(), map);
    DiscreteMeasure::from_unnormalized(pts, w).expect("reduction keeps a probability vector")
}
