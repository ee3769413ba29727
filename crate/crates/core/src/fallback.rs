//! Approximate moment matching for targets the exact constructions cannot
//! handle: least squares over the probability simplex on a window of
//! nearby lattice points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{DiscreteMeasure, LatticeSpec, MomentTarget};
use crate::linalg::{dot, least_squares, norm_inf, solve_square, Matrix};
use crate::recombine::{caratheodory_reduce_weights, MomentMap};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FallbackConfig {
    /// Window half-width as a multiple of `‖a‖_∞ + √(2·tr B) + γ`.
    pub radius_multiplier: f64,
    /// Squared-residual level above which a match is flagged.
    pub residual_tolerance: f64,
    /// Keep at most this many candidates, nearest to the target mean first.
    pub max_candidates: usize,
}

impl Default for FallbackConfig {
    fn default() -> Self {
        Self { radius_multiplier: 1.5, residual_tolerance: 1e-6, max_candidates: 625 }
    }
}

impl FallbackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_multiplier >= 1.0) || !self.radius_multiplier.is_finite() {
            return Err(Error::Config(format!("radius_multiplier must be >= 1, got {}", self.radius_multiplier)));
        }
        if !(self.residual_tolerance > 0.0) {
            return Err(Error::Config("residual_tolerance must be positive".into()));
        }
        if self.max_candidates == 0 {
            return Err(Error::Config("max_candidates must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FallbackMatch<T> {
    pub measure: DiscreteMeasure<T>,
    /// `‖Σ wⱼ(lⱼ, lⱼlⱼᵀ) − (a, aaᵀ + B)‖²` over the mean and upper-triangle
    /// components, in increment units.
    pub residual: T,
    /// Whether the residual exceeds the configured tolerance.
    pub flagged: bool,
}

/// Lattice points of `lat` inside the window, nearest to `a` first (ties by
/// integer coordinates), truncated to `cfg.max_candidates`.
pub fn candidate_window<T: Real>(target: &MomentTarget<T>, lat: &LatticeSpec<T>, cfg: &FallbackConfig) -> Result<Vec<Vec<T>>> {
    let d = lat.dim();
    if target.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: target.dim() });
    }
    let gamma = lat.gamma();
    let radius = T::lit(cfg.radius_multiplier)
        * (norm_inf(&target.a) + (T::lit(2.0) * target.b.trace().max(T::zero())).sqrt() + gamma);
    let offset_norm = dot(lat.offset(), lat.offset()).sqrt();
    let span = if lat.is_axis_aligned() { radius } else { radius * T::lit(d as f64).sqrt() };
    let reach = ((span + offset_norm) / gamma).ceil().to_i64().unwrap_or(i64::MAX);
    let count = (2 * reach + 1).checked_pow(d as u32).unwrap_or(i64::MAX);
    if count > 20_000_000 {
        return Err(Error::Precondition(format!("candidate window of {count} lattice points is too large")));
    }
    let mut found: Vec<(T, Vec<i64>, Vec<T>)> = Vec::new();
    let mut z = vec![-reach; d];
    loop {
        let zf: Vec<T> = z.iter().map(|&k| T::from_i64(k).unwrap()).collect();
        let p: Vec<T> = lat.displacement(&zf).iter().zip(lat.offset()).map(|(&s, &o)| s + o).collect();
        if norm_inf(&p) <= radius {
            let dist: T = p.iter().zip(&target.a).map(|(&x, &y)| (x - y) * (x - y)).sum();
            found.push((dist, z.clone(), p));
        }
        // odometer increment
        let mut i = 0;
        while i < d {
            z[i] += 1;
            if z[i] <= reach {
                break;
            }
            z[i] = -reach;
            i += 1;
        }
        if i == d {
            break;
        }
    }
    found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then_with(|| a.1.cmp(&b.1)));
    found.truncate(cfg.max_candidates);
    Ok(found.into_iter().map(|(_, _, p)| p).collect())
}

/// `‖Σ wⱼ map(lⱼ) − target‖²`.
pub fn moment_residual<T: Real>(points: &[Vec<T>], weights: &[T], target: &[T], map: MomentMap) -> T {
    let mut acc = vec![T::zero(); map.h()];
    for (p, &w) in points.iter().zip(weights) {
        for (a, v) in acc.iter_mut().zip(map.eval(p)) {
            *a = *a + w * v;
        }
    }
    acc.iter().zip(target).map(|(&x, &t)| (x - t) * (x - t)).sum()
}

/// Closest-to-target approximate match on the lattice window around the
/// target mean, reduced to at most `h + 1` atoms.
pub fn approx_match_qp<T: Real>(target: &MomentTarget<T>, lat: &LatticeSpec<T>, cfg: &FallbackConfig) -> Result<FallbackMatch<T>> {
    cfg.validate()?;
    let points = candidate_window(target, lat, cfg)?;
    if points.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let d = target.dim();
    let map = MomentMap::MeanAndSecond { dim: d };
    let goal = map.target(&target.a, &target.raw_second());
    let shifted: Vec<Vec<T>> = points
        .iter()
        .map(|p| map.eval(p).iter().zip(&goal).map(|(&v, &g)| v - g).collect())
        .collect();
    let weights = min_norm_point(&shifted);
    let (pts, w) = caratheodory_reduce_weights(&points, &weights, map);
    let residual = moment_residual(&pts, &w, &goal, map);
    let measure = DiscreteMeasure::from_unnormalized(pts, w)?;
    Ok(FallbackMatch { flagged: residual.to_f64_lossy() > cfg.residual_tolerance, residual, measure })
}

/// Wolfe's minimum-norm-point method: convex weights `w` minimizing
/// `‖Σ wⱼ pⱼ‖`. Returns a weight vector aligned with `points`.
pub fn min_norm_point<T: Real>(points: &[Vec<T>]) -> Vec<T> {
    let n = points.len();
    let mut weights = vec![T::zero(); n];
    if n == 0 {
        return weights;
    }
    let sq = |p: &[T]| dot(p, p);
    let scale = points.iter().map(|p| sq(p)).fold(T::zero(), T::max).max(T::min_positive_value());
    let tol_major = T::tol(1e-14) * scale;
    let tol_zero = T::tol(1e-12);

    let start = (0..n)
        .min_by(|&i, &j| sq(&points[i]).partial_cmp(&sq(&points[j])).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    let mut active = vec![start];
    let mut lambda = vec![T::one()];
    let mut x = points[start].clone();

    for _major in 0..(20 * n + 100) {
        let xx = sq(&x);
        if xx <= T::min_positive_value() {
            break;
        }
        let (j, best) = (0..n)
            .map(|j| (j, dot(&x, &points[j])))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)))
            .unwrap();
        if best >= xx - tol_major || active.contains(&j) {
            break;
        }
        active.push(j);
        lambda.push(T::zero());
        let mut stalled = false;
        for _minor in 0..(4 * n + 10) {
            let Some(alpha) = affine_minimizer(points, &active) else {
                stalled = true;
                break;
            };
            if alpha.iter().all(|&v| v > tol_zero) {
                lambda = alpha;
                break;
            }
            let mut theta = T::one();
            for (k, &a) in alpha.iter().enumerate() {
                if a <= tol_zero {
                    let denom = lambda[k] - a;
                    if denom > T::zero() {
                        theta = theta.min(lambda[k] / denom);
                    }
                }
            }
            for (l, &a) in lambda.iter_mut().zip(&alpha) {
                *l = (T::one() - theta) * *l + theta * a;
            }
            let mut k = 0;
            while k < active.len() {
                if lambda[k] <= tol_zero && active.len() > 1 {
                    active.remove(k);
                    lambda.remove(k);
                } else {
                    k += 1;
                }
            }
            let total: T = lambda.iter().copied().sum();
            lambda.iter_mut().for_each(|l| *l = *l / total);
        }
        x = combine(points, &active, &lambda);
        if stalled {
            break;
        }
    }
    for (&j, &l) in active.iter().zip(&lambda) {
        weights[j] = weights[j] + l.max(T::zero());
    }
    let total: T = weights.iter().copied().sum();
    weights.iter_mut().for_each(|w| *w = *w / total);
    weights
}

fn combine<T: Real>(points: &[Vec<T>], active: &[usize], lambda: &[T]) -> Vec<T> {
    let h = points[0].len();
    let mut x = vec![T::zero(); h];
    for (&j, &l) in active.iter().zip(lambda) {
        for (xi, &p) in x.iter_mut().zip(&points[j]) {
            *xi = *xi + l * p;
        }
    }
    x
}

/// Minimizer of `‖Σ αₖ pₖ‖` over the affine hull `Σ αₖ = 1` of the active set.
fn affine_minimizer<T: Real>(points: &[Vec<T>], active: &[usize]) -> Option<Vec<T>> {
    let k = active.len();
    let mut kkt = Matrix::zeros(k + 1, k + 1);
    for a in 0..k {
        for b in 0..k {
            kkt[(a, b)] = dot(&points[active[a]], &points[active[b]]);
        }
        kkt[(a, k)] = T::one();
        kkt[(k, a)] = T::one();
    }
    let mut rhs = vec![T::zero(); k + 1];
    rhs[k] = T::one();
    let sol = solve_square(&kkt, &rhs, T::tol(1e-14)).or_else(|| least_squares(&kkt, &rhs, T::tol(1e-14)))?;
    let alpha = sol[..k].to_vec();
    if alpha.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some(alpha)
}
