//! One-dimensional lattice moment matching: find `Y` on `γℤ` with `E[Y] = a`
//! and `E[Y²] = a² + b²`, exactly when the lattice allows it and otherwise
//! with the smallest possible second-moment defect.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{ceil_inclusive, floor_index, DiscreteMeasure, MatchMode};
use crate::recombine::{caratheodory_reduce, solve_simplex_weights, MomentMap};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Match1DOptions<T> {
    /// Fail with [`Error::InexactOnly`] instead of returning an approximate law.
    pub exact_required: bool,
    /// Allow one atom at `a` itself, which makes every instance exact.
    pub allow_offgrid_mean_point: bool,
    /// Keep the support at or above this value.
    pub support_lower_bound: Option<T>,
}

impl<T> Default for Match1DOptions<T> {
    fn default() -> Self {
        Self { exact_required: false, allow_offgrid_mean_point: false, support_lower_bound: None }
    }
}

/// Which construction produced a one-dimensional match.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case1D {
    /// Second moment at or below the chord through the two neighbouring lattice
    /// points: the two-point law on `{⌊a⌋, ⌈a⌉}`.
    Chord,
    /// Second moment between the chord and `⌈a⌉²`: hull of `±⌊a⌋, ±⌈a⌉`.
    InnerHull,
    /// Second moment above `⌈a⌉²`: hull of `±⌈a⌉, ±⌈√(a²+b²)⌉`.
    OuterHull,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Match1D<T> {
    pub measure: DiscreteMeasure<T>,
    pub mode: MatchMode,
    /// `E[Y²] − a² − b²` of the returned law.
    pub second_moment_error: T,
}

/// Neighbouring lattice points `⌊a⌋_γ` and the strict ceiling `⌊a⌋_γ + γ`.
fn neighbours<T: Real>(a: T, gamma: T) -> (T, T) {
    let z = floor_index(a, gamma);
    (gamma * z, gamma * (z + T::one()))
}

/// Second moment of the two-point law on the neighbours of `a` with mean `a`.
fn chord_value<T: Real>(a: T, gamma: T) -> T {
    let (f, c) = neighbours(a, gamma);
    (c * c - f * f) * (a - f) / gamma + f * f
}

/// Whether an exact match on `γℤ` exists: `a² + b²` lies on or above the chord
/// through `(⌊a⌋, ⌊a⌋²)` and `(⌈a⌉, ⌈a⌉²)`.
pub fn variance_condition_holds<T: Real>(a: T, b: T, gamma: T) -> bool {
    let a = a.abs();
    a * a + b * b >= chord_value(a, gamma)
}

/// Case selection; boundaries go to the earlier case.
pub fn select_case<T: Real>(a: T, b: T, gamma: T) -> Case1D {
    let a = a.abs();
    let m = a * a + b * b;
    let (_, c) = neighbours(a, gamma);
    if m <= chord_value(a, gamma) {
        Case1D::Chord
    } else if m <= c * c {
        Case1D::InnerHull
    } else {
        Case1D::OuterHull
    }
}

fn check_inputs<T: Real>(a: T, b: T, gamma: T) -> Result<()> {
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return Err(Error::Precondition(format!("lattice step must be positive, got {gamma}")));
    }
    if !(b >= T::zero()) || !b.is_finite() || !a.is_finite() {
        return Err(Error::Precondition(format!("need finite a and b >= 0, got a={a}, b={b}")));
    }
    Ok(())
}

/// Zero-mean match: mass `b²/(2a₊₊²)` at `±a₊₊` and the rest at the origin,
/// where `a₊₊` is the first lattice point strictly above `b`.
pub fn match_zero_mean_1d<T: Real>(b: T, gamma: T) -> Result<DiscreteMeasure<T>> {
    check_inputs(T::zero(), b, gamma)?;
    if b == T::zero() {
        return Ok(DiscreteMeasure::dirac(vec![T::zero()]));
    }
    let top = gamma * (floor_index(b, gamma) + T::one());
    let side = b * b / (T::lit(2.0) * top * top);
    let centre = T::one() - T::lit(2.0) * side;
    DiscreteMeasure::new(vec![vec![-top], vec![T::zero()], vec![top]], vec![side, centre, side])
}

fn hull_solve<T: Real>(candidates: &[T], a: T, m: T) -> Result<Option<DiscreteMeasure<T>>> {
    let map = MomentMap::MeanAndSecond { dim: 1 };
    let pts: Vec<Vec<T>> = candidates.iter().map(|&x| vec![x]).collect();
    Ok(solve_simplex_weights(&pts, &[a, m], map)?.map(|meas| caratheodory_reduce(&meas, map)))
}

fn finish<T: Real>(measure: DiscreteMeasure<T>, a: T, b: T, exact: bool) -> Match1D<T> {
    let (_, second) = measure.moments();
    let err = second[(0, 0)] - a * a - b * b;
    Match1D { measure, mode: if exact { MatchMode::Exact } else { MatchMode::Approx }, second_moment_error: err }
}

/// Unconstrained match for `a ≥ 0`.
fn match_nonneg<T: Real>(a: T, b: T, gamma: T, offgrid: bool) -> Result<(DiscreteMeasure<T>, bool)> {
    let m = a * a + b * b;
    let (f, c) = neighbours(a, gamma);
    if b == T::zero() && (a - f).abs() <= T::epsilon() * a.max(gamma) {
        return Ok((DiscreteMeasure::dirac(vec![f]), true));
    }
    let case = select_case(a, b, gamma);
    if case == Case1D::Chord {
        let chord = chord_value(a, gamma);
        let exact = m >= chord;
        if exact || !offgrid {
            let upper = ((a - f) / gamma).min(T::one()).max(T::zero());
            let lower = T::one() - upper;
            let meas = DiscreteMeasure::from_unnormalized(vec![vec![f], vec![c]], vec![lower, upper])?;
            return Ok((meas, exact));
        }
        let top = ceil_strict(m.sqrt(), gamma);
        let cands = [-top, -c, -f, f, a, c, top];
        let meas = hull_solve(&cands, a, m)?
            .ok_or_else(|| Error::Precondition("off-grid hull does not contain the target".into()))?;
        return Ok((meas, true));
    }
    let cands = match case {
        Case1D::InnerHull => vec![-c, -f, f, c],
        _ => {
            let top = ceil_strict(m.sqrt(), gamma);
            vec![-top, -c, c, top]
        }
    };
    let meas = hull_solve(&cands, a, m)?
        .ok_or_else(|| Error::Precondition(format!("lattice hull does not contain (a={a}, m={m})")))?;
    Ok((meas, true))
}

fn ceil_strict<T: Real>(x: T, gamma: T) -> T {
    gamma * (floor_index(x, gamma) + T::one())
}

/// Matches `E[Y] = a`, `E[Y²] = a² + b²` on `γℤ`.
///
/// The law is exact whenever [`variance_condition_holds`]; otherwise the
/// two-point law on the neighbours of `a` is returned with mode `Approx`
/// and a second-moment excess of at most `γ²/4`.
pub fn match_moments_1d<T: Real>(a: T, b: T, gamma: T, opts: &Match1DOptions<T>) -> Result<Match1D<T>> {
    check_inputs(a, b, gamma)?;
    if let Some(lower) = opts.support_lower_bound {
        if !lower.is_finite() {
            return Err(Error::Precondition("support lower bound must be finite".into()));
        }
    }
    if opts.exact_required && !opts.allow_offgrid_mean_point && !variance_condition_holds(a, b, gamma) {
        return Err(Error::InexactOnly);
    }
    let (meas, exact) = match_nonneg(a.abs(), b, gamma, opts.allow_offgrid_mean_point)?;
    let meas = if a < T::zero() { meas.map_points(|p| vec![-p[0]]) } else { meas };
    let result = finish(meas, a, b, exact);
    match opts.support_lower_bound {
        Some(lower) if result.measure.points().iter().any(|p| p[0] < lower) => {
            match_with_lower_bound(a, b, gamma, lower, exact)
        }
        _ => Ok(result),
    }
}

/// Search upward for the smallest far point `γz*` such that the hull of
/// `{ℓ, ⌊a⌋, ⌈a⌉, γz*}` contains `(a, a² + b²)`, with `ℓ` the first lattice
/// point at or above `lower`.
fn match_with_lower_bound<T: Real>(a: T, b: T, gamma: T, lower: T, unconstrained_exact: bool) -> Result<Match1D<T>> {
    let infeasible = || Error::ConstrainedInfeasible { lower: lower.to_f64_lossy() };
    if a < lower {
        return Err(infeasible());
    }
    let m = a * a + b * b;
    let ell = ceil_inclusive(lower, gamma);
    let (f, c) = neighbours(a, gamma);
    if !unconstrained_exact {
        // the only inexact law is the chord pair; its floor point already broke the bound
        return Err(infeasible());
    }
    if a <= ell {
        // mean at the lowest admissible point leaves no room for spread
        if b == T::zero() {
            return Ok(finish(DiscreteMeasure::dirac(vec![ell]), a, b, true));
        }
        return Err(infeasible());
    }
    let mut base = vec![ell];
    if f >= lower && f > ell {
        base.push(f);
    }
    base.push(c);
    // the chord from (ℓ, ℓ²) to (Z, Z²) passes above (a, m) once Z ≥ (m − ℓa)/(a − ℓ)
    let jump = (m - ell * a) / (a - ell);
    let start = floor_index(jump.max(c), gamma) - T::lit(2.0);
    let first = floor_index(c, gamma) + T::one();
    let mut z = if start > first { start } else { first };
    let cap = T::lit(1e6) / gamma;
    let mut tries = 0;
    while z <= cap && tries < 4096 {
        let mut cands = base.clone();
        cands.push(gamma * z);
        if let Some(meas) = hull_solve(&cands, a, m)? {
            if meas.points().iter().all(|p| p[0] >= lower - T::epsilon() * lower.abs().max(gamma)) {
                return Ok(finish(meas, a, b, true));
            }
        }
        z = z + T::one();
        tries += 1;
    }
    Err(infeasible())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atoms(m: &DiscreteMeasure<f64>) -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = m.atoms().map(|(p, w)| (p[0], w)).collect();
        v.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        v
    }

    #[test]
    fn condition_examples() {
        assert!(variance_condition_holds(0.5, 1.0, 1.0));
        assert!(!variance_condition_holds(0.25, 0.0, 1.0));
        for b in [0.0, 0.1, 3.0] {
            assert!(variance_condition_holds(0.0, b, 0.7));
        }
    }

    #[test]
    fn chord_case_example() {
        let r = match_moments_1d::<f64>(0.25, 0.0, 1.0, &Match1DOptions::default()).unwrap();
        assert_eq!(r.mode, MatchMode::Approx);
        assert_eq!(atoms(&r.measure), vec![(0.0, 0.75), (1.0, 0.25)]);
        assert!((r.second_moment_error - 0.1875).abs() < 1e-15);
    }

    #[test]
    fn zero_mean_examples() {
        let r = match_moments_1d::<f64>(0.0, 1.0, 1.0, &Match1DOptions::default()).unwrap();
        assert_eq!(r.mode, MatchMode::Exact);
        let (mean, second) = r.measure.moments();
        assert!(mean[0].abs() < 1e-15 && (second[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(atoms(&match_zero_mean_1d::<f64>(1.0, 1.0).unwrap()), vec![(-2.0, 0.125), (0.0, 0.75), (2.0, 0.125)]);
        assert_eq!(atoms(&match_zero_mean_1d::<f64>(0.5, 0.5).unwrap()), vec![(-1.0, 0.125), (0.0, 0.75), (1.0, 0.125)]);
        assert_eq!(atoms(&match_zero_mean_1d::<f64>(0.0, 1.0).unwrap()), vec![(0.0, 1.0)]);
    }

    #[test]
    fn outer_hull_example() {
        assert_eq!(select_case(0.5, 1.0, 1.0), Case1D::OuterHull);
        let r = match_moments_1d::<f64>(0.5, 1.0, 1.0, &Match1DOptions::default()).unwrap();
        assert_eq!(r.mode, MatchMode::Exact);
        assert!(r.measure.len() <= 3);
        for (p, _) in r.measure.atoms() {
            assert!([-2.0, -1.0, 1.0, 2.0].contains(&p[0]));
        }
        let (mean, second) = r.measure.moments();
        assert!((mean[0] - 0.5).abs() < 1e-14 && (second[(0, 0)] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn exact_required_errors_when_impossible() {
        let opts = Match1DOptions { exact_required: true, ..Default::default() };
        assert_eq!(match_moments_1d::<f64>(0.25, 0.0, 1.0, &opts), Err(Error::InexactOnly));
        let opts = Match1DOptions { exact_required: true, allow_offgrid_mean_point: true, ..Default::default() };
        let r = match_moments_1d::<f64>(0.25, 0.0, 1.0, &opts).unwrap();
        assert_eq!(r.mode, MatchMode::Exact);
        assert!(r.second_moment_error.abs() < 1e-12);
    }

    #[test]
    fn on_lattice_mean() {
        let r = match_moments_1d::<f64>(2.0, 0.0, 0.5, &Match1DOptions::default()).unwrap();
        assert_eq!(atoms(&r.measure), vec![(2.0, 1.0)]);
        let r = match_moments_1d::<f64>(2.0, 0.3, 0.5, &Match1DOptions::default()).unwrap();
        assert_eq!(r.mode, MatchMode::Exact);
    }

    #[test]
    fn negative_mean_reflects() {
        let pos = match_moments_1d::<f64>(0.7, 0.4, 0.25, &Match1DOptions::default()).unwrap();
        let neg = match_moments_1d::<f64>(-0.7, 0.4, 0.25, &Match1DOptions::default()).unwrap();
        let mirrored: Vec<(f64, f64)> = atoms(&pos.measure).iter().rev().map(|&(x, w)| (-x, w)).collect();
        assert_eq!(atoms(&neg.measure), mirrored);
    }

    #[test]
    fn lower_bound_keeps_support_nonnegative() {
        // unconstrained law for this target puts mass at -1
        let opts = Match1DOptions { support_lower_bound: Some(0.0), ..Default::default() };
        let r = match_moments_1d::<f64>(0.5, 1.0, 1.0, &opts).unwrap();
        assert!(r.measure.points().iter().all(|p| p[0] >= 0.0));
        let (mean, second) = r.measure.moments();
        assert!((mean[0] - 0.5).abs() < 1e-14 && (second[(0, 0)] - 1.25).abs() < 1e-12);
        let opts = Match1DOptions { support_lower_bound: Some(0.6), ..Default::default() };
        assert!(matches!(match_moments_1d::<f64>(0.5, 1.0, 1.0, &opts), Err(Error::ConstrainedInfeasible { .. })));
        let opts = Match1DOptions { support_lower_bound: Some(0.1), ..Default::default() };
        assert!(matches!(match_moments_1d::<f64>(0.25, 0.0, 1.0, &opts), Err(Error::ConstrainedInfeasible { .. })));
    }
}
