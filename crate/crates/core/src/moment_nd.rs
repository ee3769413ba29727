//! Multi-dimensional lattice moment matching.
//!
//! * [`match_second_moment_nd_eigenlattice`]: zero mean, any dimension,
//!   atoms on the eigenvector lattice `γQℤᵈ`.
//! * [`match_second_moment_2d_zero_mean`]: zero mean on the axis lattice
//!   `γℤ²`, from eight candidate points, one per sign pattern of the
//!   rotated second-moment image.
//! * [`match_moments_2d`]: general mean, by adding an independent hypercube
//!   corner variable that carries the mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{floor_index, DiscreteMeasure, LatticeCoord};
use crate::linalg::Matrix;
use crate::recombine::{caratheodory_reduce, caratheodory_reduce_weights, simplex_weights, MomentMap};
use crate::scalar::Real;

/// Relative size below which an eigenvalue counts as zero.
const ZERO_EIGEN_REL: f64 = 1e-12;

/// Eigen-decomposition `B = QΛQᵀ` with eigenvalues in descending order and
/// numerically negligible ones set to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EigenSystem<T> {
    pub lambdas: Vec<T>,
    pub q: Matrix<T>,
    /// Multiplicity of each eigenvalue (entry `i` counts the eigenvalues equal
    /// to `lambdas[i]` up to a relative `1e-9`).
    pub multiplicities: Vec<usize>,
}

impl<T: Real> EigenSystem<T> {
    pub fn of(b: &Matrix<T>) -> Result<Self> {
        if !b.is_square() {
            return Err(Error::InvalidTarget("matrix is not square".into()));
        }
        let scale = b.max_abs().max(T::one());
        if !b.is_finite() || !b.is_symmetric(T::tol(1e-10) * scale) {
            return Err(Error::InvalidTarget("matrix is not symmetric".into()));
        }
        let (mut lambdas, q) = b.symmetric_eigen();
        let top = lambdas.first().copied().unwrap_or(T::zero()).max(T::zero());
        if let Some(&low) = lambdas.last() {
            if low < -T::tol(1e-10) * scale {
                return Err(Error::InvalidTarget(format!("matrix has negative eigenvalue {low}")));
            }
        }
        for l in lambdas.iter_mut() {
            if *l < T::tol(ZERO_EIGEN_REL) * top {
                *l = T::zero();
            }
        }
        let group_tol = T::tol(1e-9) * top.max(T::min_positive_value());
        let multiplicities = lambdas
            .iter()
            .map(|&l| lambdas.iter().filter(|&&m| (m - l).abs() <= group_tol).count())
            .collect();
        Ok(Self { lambdas, q, multiplicities })
    }

    pub fn lambda_min(&self) -> T {
        self.lambdas.last().copied().unwrap_or(T::zero())
    }

    pub fn rank(&self) -> usize {
        self.lambdas.iter().filter(|&&l| l > T::zero()).count()
    }
}

/// Zero-mean law with `E[YYᵀ] = Q diag(λ) Qᵀ` supported on `γQℤᵈ`.
///
/// With `K` the first lattice value strictly above `√Σλ`, every eigenvector
/// `qᵢ` with `λᵢ > 0` carries mass `λᵢ/(2K²)` at each of `±K qᵢ`, and the
/// origin keeps `1 − Σλ/K²`.
pub fn eigenlattice_in_frame<T: Real>(lambdas: &[T], q: &Matrix<T>, gamma: T) -> Result<DiscreteMeasure<T>> {
    let d = lambdas.len();
    if q.rows() != d || q.cols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: q.rows() });
    }
    if !(gamma > T::zero()) {
        return Err(Error::Precondition(format!("lattice step must be positive, got {gamma}")));
    }
    if let Some(l) = lambdas.iter().find(|&&l| !(l >= T::zero()) || !l.is_finite()) {
        return Err(Error::InvalidTarget(format!("eigenvalue {l} is not a finite nonnegative number")));
    }
    let total: T = lambdas.iter().copied().sum();
    if total == T::zero() {
        return Ok(DiscreteMeasure::dirac(vec![T::zero(); d]));
    }
    let k = gamma * (floor_index(total.sqrt(), gamma) + T::one());
    let k2 = k * k;
    let mut points = vec![vec![T::zero(); d]];
    let mut weights = vec![T::one() - total / k2];
    for (i, &l) in lambdas.iter().enumerate() {
        if l == T::zero() {
            continue;
        }
        let dir: Vec<T> = q.column(i).into_iter().map(|v| v * k).collect();
        let w = l / (T::lit(2.0) * k2);
        points.push(dir.clone());
        weights.push(w);
        points.push(dir.into_iter().map(|v| -v).collect());
        weights.push(w);
    }
    DiscreteMeasure::new(points, weights)
}

/// Zero-mean law with second moment `B` on the eigenvector lattice of `B`.
/// Returns the measure and the frame `Q` whose lattice `γQℤᵈ` holds it.
pub fn match_second_moment_nd_eigenlattice<T: Real>(b: &Matrix<T>, gamma: T) -> Result<(DiscreteMeasure<T>, Matrix<T>)> {
    let eig = EigenSystem::of(b)?;
    let m = eigenlattice_in_frame(&eig.lambdas, &eig.q, gamma)?;
    Ok((m, eig.q))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Ineq {
    Le,
    Ge,
}

impl Ineq {
    fn holds<T: Real>(self, lhs: T, rhs: T, slack: T) -> bool {
        match self {
            Ineq::Le => lhs <= rhs + slack,
            Ineq::Ge => lhs >= rhs - slack,
        }
    }
}

/// One orthant of the rotated second-moment image around `(0, λ₁, λ₂)`:
/// the relations required of the cross term `⟨q₁,l⟩⟨q₂,l⟩`, of `⟨q₁,l⟩²`
/// and of `⟨q₂,l⟩²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignPattern {
    pub cross: Ineq,
    pub first: Ineq,
    pub second: Ineq,
}

impl SignPattern {
    pub const fn new(cross: Ineq, first: Ineq, second: Ineq) -> Self {
        Self { cross, first, second }
    }

    /// All eight patterns, in the order `≥≥≥, ≥≥≤, ≥≤≥, ≥≤≤, ≤≥≥, ≤≥≤, ≤≤≥, ≤≤≤`.
    pub fn all() -> [SignPattern; 8] {
        use Ineq::{Ge, Le};
        [
            Self::new(Ge, Ge, Ge),
            Self::new(Ge, Ge, Le),
            Self::new(Ge, Le, Ge),
            Self::new(Ge, Le, Le),
            Self::new(Le, Ge, Ge),
            Self::new(Le, Ge, Le),
            Self::new(Le, Le, Ge),
            Self::new(Le, Le, Le),
        ]
    }

    /// Checks the pattern for `l` against the frame `q₁ = (q₁₁, √(1−q₁₁²))`,
    /// `q₂ = (√(1−q₁₁²), −q₁₁)`.
    pub fn satisfied_by<T: Real>(&self, l: (T, T), lambda1: T, lambda2: T, q11: T, slack: T) -> bool {
        let (l1, l2) = l;
        let phi = (T::one() - q11 * q11).sqrt() / q11;
        let u = l1 + phi * l2;
        let v = phi * l1 - l2;
        let q2 = q11 * q11;
        self.cross.holds(u * v, T::zero(), slack)
            && self.first.holds(u * u, lambda1 / q2, slack)
            && self.second.holds(v * v, lambda2 / q2, slack)
    }
}

fn floor_to<T: Real>(x: T, gamma: T) -> T {
    gamma * floor_index(x, gamma)
}

fn strict_ceil_to<T: Real>(x: T, gamma: T) -> T {
    gamma * (floor_index(x, gamma) + T::one())
}

fn to_coord<T: Real>(l: (T, T), gamma: T) -> LatticeCoord {
    let z1 = (l.0 / gamma).round().to_i64().expect("bounded coordinate");
    let z2 = (l.1 / gamma).round().to_i64().expect("bounded coordinate");
    LatticeCoord(vec![z1, z2])
}

/// Lattice point realizing one sign pattern for eigenvalues `λ₁ ≥ λ₂ > 0`
/// and leading eigenvector `(q₁₁, √(1−q₁₁²))`, `q₁₁ ∈ [1/√2, 1)`.
///
/// Closed-form choices are tried first. For `≤≥≥` the closed form
/// `l₁ = ⌊√λ₁/q₁₁⌋` can miss the `⟨q₁,l⟩² ≥ λ₁` requirement when the
/// eigenvectors are nearly axis-aligned; the strict ceiling is used then,
/// and a bounded search is the last resort for every pattern.
pub fn sign_case_point<T: Real>(pattern: SignPattern, lambda1: T, lambda2: T, q11: T, gamma: T) -> Result<LatticeCoord> {
    let root_half = T::FRAC_1_SQRT_2();
    if !(gamma > T::zero()) || !(lambda2 > T::zero()) || lambda1 < lambda2 {
        return Err(Error::Precondition(format!(
            "need gamma > 0 and lambda1 >= lambda2 > 0, got gamma={gamma}, lambdas=({lambda1}, {lambda2})"
        )));
    }
    if gamma > lambda2.sqrt() * (T::one() + T::tol(1e-12)) {
        return Err(Error::Precondition(format!("gamma {gamma} exceeds sqrt(lambda_min) = {}", lambda2.sqrt())));
    }
    if q11 < root_half * (T::one() - T::tol(1e-12)) || q11 >= T::one() {
        return Err(Error::Precondition(format!("q11 = {q11} outside [1/sqrt(2), 1)")));
    }
    let slack = T::lit(1e-10) * lambda1.max(T::one());
    let bound = (T::lit(2.0) * lambda1).sqrt() + (T::lit(2.0) * lambda2).sqrt() + T::lit(2.0) * gamma;
    let ok = |l: (T, T)| {
        pattern.satisfied_by(l, lambda1, lambda2, q11, slack)
            && l.0.abs() <= bound * (T::one() + T::tol(1e-12))
            && l.1.abs() <= bound * (T::one() + T::tol(1e-12))
    };
    for l in closed_form_candidates(pattern, lambda1, lambda2, q11, gamma) {
        if ok(l) {
            return Ok(to_coord(l, gamma));
        }
    }
    // bounded search, nearest to the origin first, then lexicographic
    let r = floor_index(bound, gamma).to_i64().unwrap_or(0);
    let mut best: Option<(i64, i64, i64)> = None;
    for z1 in -r..=r {
        for z2 in -r..=r {
            let rad = z1.abs().max(z2.abs());
            if best.is_some_and(|b| (rad, z1, z2) >= b) {
                continue;
            }
            let l = (gamma * T::from_i64(z1).unwrap(), gamma * T::from_i64(z2).unwrap());
            if ok(l) {
                best = Some((rad, z1, z2));
            }
        }
    }
    best.map(|(_, z1, z2)| LatticeCoord(vec![z1, z2]))
        .ok_or_else(|| Error::Precondition("no lattice point realizes the sign pattern".into()))
}

fn closed_form_candidates<T: Real>(pattern: SignPattern, lambda1: T, lambda2: T, q11: T, gamma: T) -> Vec<(T, T)> {
    use Ineq::{Ge, Le};
    let s1 = lambda1.sqrt() / q11;
    let s2 = lambda2.sqrt() / q11;
    let phi = (T::one() - q11 * q11).sqrt() / q11;
    // smallest n with γn ≥ √(2λ₁)
    let n = {
        let target = (T::lit(2.0) * lambda1).sqrt();
        let z = floor_index(target, gamma);
        if gamma * z >= target || (target / gamma - z).abs() <= T::epsilon() * T::lit(8.0) * z.max(T::one()) {
            z
        } else {
            z + T::one()
        }
    };
    match (pattern.cross, pattern.first, pattern.second) {
        (Ge, Ge, Ge) => {
            let l2 = floor_to(-s2, gamma);
            vec![(strict_ceil_to(s1 - phi * l2, gamma), l2)]
        }
        (Ge, Ge, Le) => vec![(gamma * n, gamma * (n * phi).floor())],
        (Ge, Le, Ge) => {
            let l2 = floor_to(-s2, gamma);
            vec![(strict_ceil_to(-phi * l2, gamma), l2)]
        }
        (Ge, Le, Le) => vec![(gamma, T::zero()), (T::zero(), T::zero())],
        (Le, Ge, Ge) => {
            let floored = floor_to(s1, gamma);
            let corrected = strict_ceil_to(s1, gamma);
            vec![
                (floored, strict_ceil_to(s2 + phi * floored, gamma)),
                (corrected, strict_ceil_to(s2 + phi * corrected, gamma)),
            ]
        }
        (Le, Ge, Le) => vec![(gamma * n, gamma * ((n * phi).floor() + T::one()))],
        (Le, Le, Ge) => {
            let l2 = strict_ceil_to(s2, gamma);
            vec![(strict_ceil_to(-phi * l2, gamma), l2)]
        }
        (Le, Le, Le) => vec![(T::zero(), T::zero())],
    }
}

fn check_spd2<T: Real>(b: &Matrix<T>) -> Result<EigenSystem<T>> {
    if b.rows() != 2 || b.cols() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: b.rows() });
    }
    let eig = EigenSystem::of(b)?;
    if !(eig.lambda_min() > T::zero()) {
        return Err(Error::Precondition("second-moment matrix must be positive definite".into()));
    }
    Ok(eig)
}

/// Symmetric (`m(y) = m(−y)`) zero-mean law on `γℤ²` with second moment `B`,
/// before the final reduction.
pub fn zero_mean_2d_symmetric<T: Real>(b: &Matrix<T>, gamma: T) -> Result<DiscreteMeasure<T>> {
    let eig = check_spd2(b)?;
    let lmin = eig.lambda_min();
    if !(gamma > T::zero()) || gamma > lmin.sqrt() * (T::one() + T::tol(1e-12)) {
        return Err(Error::Precondition(format!(
            "lattice step {gamma} must lie in (0, sqrt(lambda_min)] = (0, {}]",
            lmin.sqrt()
        )));
    }
    let scale = b.max_abs();
    if b[(0, 1)].abs() <= T::tol(1e-14) * scale {
        // axis-aligned: the eigenlattice with the identity frame lives on γℤ²
        return eigenlattice_in_frame(&[b[(0, 0)], b[(1, 1)]], &Matrix::identity(2), gamma);
    }
    // signed permutation T with T·q₁ = (c, s), c ≥ s > 0
    let (mut x, mut y) = (eig.q[(0, 0)], eig.q[(1, 0)]);
    if x < T::zero() {
        x = -x;
        y = -y;
    }
    let reflect = y < T::zero();
    let y = y.abs();
    let swap = y > x;
    let q11 = if swap { y } else { x };
    let q11 = q11.min(T::one() - T::epsilon()).max(T::FRAC_1_SQRT_2());
    let (l1, l2) = (eig.lambdas[0], eig.lambdas[1]);
    let mut points = Vec::with_capacity(8);
    for pattern in SignPattern::all() {
        let z = sign_case_point(pattern, l1, l2, q11, gamma)?;
        // undo: first the swap, then the reflection of axis 2
        let (mut a, mut c) = (z.0[0], z.0[1]);
        if swap {
            std::mem::swap(&mut a, &mut c);
        }
        if reflect {
            c = -c;
        }
        points.push(vec![gamma * T::from_i64(a).unwrap(), gamma * T::from_i64(c).unwrap()]);
    }
    let map = MomentMap::SecondOnly { dim: 2 };
    let target = vec![b[(0, 0)], b[(0, 1)], b[(1, 1)]];
    let w = simplex_weights(&points, &target, map)?
        .ok_or_else(|| Error::Precondition("sign-pattern points do not enclose the target".into()))?;
    let (pts, w) = caratheodory_reduce_weights(&points, &w, map);
    let half = T::lit(0.5);
    let mut sym_pts = Vec::with_capacity(2 * pts.len());
    let mut sym_w = Vec::with_capacity(2 * pts.len());
    for (p, wi) in pts.into_iter().zip(w) {
        sym_pts.push(p.iter().map(|&v| -v).collect());
        sym_w.push(wi * half);
        sym_pts.push(p);
        sym_w.push(wi * half);
    }
    DiscreteMeasure::from_unnormalized(sym_pts, sym_w)
}

/// Zero-mean law on `γℤ²` with `E[YYᵀ] = B`, for `0 < γ ≤ √λ_min(B)`;
/// at most six atoms.
pub fn match_second_moment_2d_zero_mean<T: Real>(b: &Matrix<T>, gamma: T) -> Result<DiscreteMeasure<T>> {
    let sym = zero_mean_2d_symmetric(b, gamma)?;
    Ok(caratheodory_reduce(&sym, MomentMap::MeanAndSecond { dim: 2 }))
}

/// Law on the corners of the lattice cell containing `a`, with
/// multilinear weights; its mean is `a`. Coordinates already on the
/// lattice contribute a single corner.
pub fn hypercube_mean_measure<T: Real>(a: &[T], gamma: T) -> Result<DiscreteMeasure<T>> {
    let d = a.len();
    if !(gamma > T::zero()) || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("need gamma > 0 and a finite mean".into()));
    }
    let lows: Vec<T> = a.iter().map(|&v| floor_to(v, gamma)).collect();
    let fracs: Vec<T> = a
        .iter()
        .zip(&lows)
        .map(|(&v, &f)| ((v - f) / gamma).max(T::zero()).min(T::one()))
        .collect();
    let mut points = Vec::with_capacity(1 << d);
    let mut weights = Vec::with_capacity(1 << d);
    for mask in 0usize..(1 << d) {
        let mut w = T::one();
        let mut p = Vec::with_capacity(d);
        for i in 0..d {
            if mask >> i & 1 == 1 {
                w = w * fracs[i];
                p.push(lows[i] + gamma);
            } else {
                w = w * (T::one() - fracs[i]);
                p.push(lows[i]);
            }
        }
        if w > T::zero() {
            points.push(p);
            weights.push(w);
        }
    }
    let m = DiscreteMeasure::from_unnormalized(points, weights)?;
    Ok(caratheodory_reduce(&m, MomentMap::MeanOnly { dim: d }))
}

/// `Σ pᵢ (xᵢ − c)(xᵢ − c)ᵀ`.
pub fn spread_about<T: Real>(m: &DiscreteMeasure<T>, centre: &[T]) -> Matrix<T> {
    let d = m.dim();
    let mut v = Matrix::zeros(d, d);
    for (p, w) in m.atoms() {
        for i in 0..d {
            for j in 0..d {
                v[(i, j)] = v[(i, j)] + w * (p[i] - centre[i]) * (p[j] - centre[j]);
            }
        }
    }
    v
}

/// Law on `γℤ²` with `E[Y] = a` and `E[YYᵀ] = aaᵀ + B`, for
/// `0 < γ ≤ √(λ_min(B)/3)`; at most six atoms.
pub fn match_moments_2d<T: Real>(a: &[T], b: &Matrix<T>, gamma: T) -> Result<DiscreteMeasure<T>> {
    if a.len() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: a.len() });
    }
    let eig = check_spd2(b)?;
    let lmin = eig.lambda_min();
    if !(gamma > T::zero()) || gamma > (lmin / T::lit(3.0)).sqrt() * (T::one() + T::tol(1e-12)) {
        return Err(Error::Precondition(format!(
            "lattice step {gamma} must lie in (0, sqrt(lambda_min/3)] = (0, {}]",
            (lmin / T::lit(3.0)).sqrt()
        )));
    }
    if a.iter().all(|&v| v == T::zero()) {
        return match_second_moment_2d_zero_mean(b, gamma);
    }
    let mean_part = hypercube_mean_measure(a, gamma)?;
    let spread = spread_about(&mean_part, a);
    let reduced = b.sub(&spread);
    let reduced_min = reduced.min_eigenvalue();
    // the spread has norm at most 2γ², so λ_min drops by at most that much
    if reduced_min < gamma * gamma * (T::one() - T::tol(1e-9)) {
        return Err(Error::Precondition(format!(
            "residual second moment has lambda_min {reduced_min} < gamma^2 = {}",
            gamma * gamma
        )));
    }
    let noise = if spread.max_abs() == T::zero() {
        match_second_moment_2d_zero_mean(b, gamma)?
    } else {
        match_second_moment_2d_zero_mean(&reduced, gamma)?
    };
    let mut points = Vec::with_capacity(mean_part.len() * noise.len());
    let mut weights = Vec::with_capacity(mean_part.len() * noise.len());
    for (p, wp) in mean_part.atoms() {
        for (q, wq) in noise.atoms() {
            points.push(vec![p[0] + q[0], p[1] + q[1]]);
            weights.push(wp * wq);
        }
    }
    let product = DiscreteMeasure::from_unnormalized(points, weights)?;
    Ok(caratheodory_reduce(&product, MomentMap::MeanAndSecond { dim: 2 }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
    }

    fn sorted_atoms(m: &DiscreteMeasure<f64>) -> Vec<(Vec<f64>, f64)> {
        let mut v: Vec<(Vec<f64>, f64)> = m.atoms().map(|(p, w)| (p.to_vec(), w)).collect();
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        v
    }

    #[test]
    fn eigenlattice_identity() {
        let (m, _) = match_second_moment_nd_eigenlattice(&Matrix::<f64>::identity(2), 1.0).unwrap();
        let atoms = sorted_atoms(&m);
        assert_eq!(atoms.len(), 5);
        let origin = atoms.iter().find(|(p, _)| p.iter().all(|&v| v == 0.0)).unwrap();
        assert!((origin.1 - 0.5).abs() < 1e-15);
        for (p, w) in &atoms {
            if p.iter().any(|&v| v != 0.0) {
                assert!((w - 0.125).abs() < 1e-15);
                assert!((p.iter().map(|v| v.abs()).fold(0.0, f64::max) - 2.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn eigenlattice_zero_is_dirac() {
        let (m, _) = match_second_moment_nd_eigenlattice(&Matrix::<f64>::zeros(3, 3), 0.3).unwrap();
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn eigenlattice_repeated_eigenvalues() {
        let b = Matrix::from_diag(&[3.0, 1.0, 1.0]);
        let (m, _) = match_second_moment_nd_eigenlattice(&b, 1.0).unwrap();
        let (_, second) = m.moments();
        assert!(second.max_abs_diff(&b) < 1e-12);
        let origin: f64 = m.atoms().filter(|(p, _)| p.iter().all(|&v| v == 0.0)).map(|(_, w)| w).sum();
        assert!((origin - 4.0 / 9.0).abs() < 1e-15);
        let mut side: Vec<f64> = m.atoms().filter(|(p, _)| p.iter().any(|&v| v != 0.0)).map(|(_, w)| w).collect();
        side.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let want = [1.0 / 18.0, 1.0 / 18.0, 1.0 / 18.0, 1.0 / 18.0, 3.0 / 18.0, 3.0 / 18.0];
        for (a, b) in side.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_mean_axis_aligned_examples() {
        let m = match_second_moment_2d_zero_mean(&Matrix::<f64>::identity(2), 1.0).unwrap();
        let atoms = sorted_atoms(&m);
        assert_eq!(
            atoms,
            vec![
                (vec![-2.0, 0.0], 0.125),
                (vec![0.0, -2.0], 0.125),
                (vec![0.0, 0.0], 0.5),
                (vec![0.0, 2.0], 0.125),
                (vec![2.0, 0.0], 0.125)
            ]
        );
        let m = match_second_moment_2d_zero_mean(&Matrix::from_diag(&[2.0, 1.0]), 1.0).unwrap();
        let atoms = sorted_atoms(&m);
        assert_eq!(
            atoms,
            vec![
                (vec![-2.0, 0.0], 0.25),
                (vec![0.0, -2.0], 0.125),
                (vec![0.0, 0.0], 0.25),
                (vec![0.0, 2.0], 0.125),
                (vec![2.0, 0.0], 0.25)
            ]
        );
    }

    #[test]
    fn sign_patterns_on_known_instance() {
        let (l1, l2, q11, g) = (2.0, 1.0, 0.8, 0.1);
        for pattern in SignPattern::all() {
            let z = sign_case_point(pattern, l1, l2, q11, g).unwrap();
            let l = (g * z.0[0] as f64, g * z.0[1] as f64);
            assert!(pattern.satisfied_by(l, l1, l2, q11, 1e-10), "{pattern:?} -> {l:?}");
        }
        use Ineq::{Ge, Le};
        let z = sign_case_point(SignPattern::new(Le, Le, Le), 5.0, 1.0, 0.9, 0.5).unwrap();
        assert_eq!(z, LatticeCoord(vec![0, 0]));
        let z = sign_case_point(SignPattern::new(Ge, Le, Le), 1.0, 1.0, 0.75, 0.5).unwrap();
        assert!(z == LatticeCoord(vec![1, 0]) || z == LatticeCoord(vec![0, 0]));
    }

    #[test]
    fn sign_patterns_near_axis_aligned() {
        // small φ is where the floor-based far point can fall short
        for q11 in [0.999, 0.9999, 0.99999] {
            for pattern in SignPattern::all() {
                let z = sign_case_point(pattern, 1.3, 1.0, q11, 1.0).unwrap();
                let l = (z.0[0] as f64, z.0[1] as f64);
                assert!(pattern.satisfied_by(l, 1.3, 1.0, q11, 1e-10));
            }
        }
    }

    #[test]
    fn zero_mean_rotated() {
        let b = mat(&[&[2.0, 0.5], &[0.5, 1.0]]);
        let sym = zero_mean_2d_symmetric(&b, 0.3).unwrap();
        for (p, w) in sym.atoms() {
            let mirror: f64 = sym.atoms().filter(|(q, _)| q[0] == -p[0] && q[1] == -p[1]).map(|(_, w)| w).sum();
            assert!((mirror - w).abs() < 1e-15);
        }
        let m = match_second_moment_2d_zero_mean(&b, 0.3).unwrap();
        assert!(m.len() <= 6);
        let (mean, second) = m.moments();
        assert!(mean.iter().all(|v| v.abs() < 1e-12));
        assert!(second.max_abs_diff(&b) < 1e-9);
    }

    #[test]
    fn general_mean_examples() {
        let b = Matrix::<f64>::identity(2);
        let m = match_moments_2d(&[0.5, 0.0], &b, 0.5).unwrap();
        let (mean, second) = m.moments();
        assert!((mean[0] - 0.5).abs() < 1e-12 && mean[1].abs() < 1e-12);
        assert!(second.max_abs_diff(&Matrix::outer(&[0.5, 0.0]).add(&b)) < 1e-9);
        let a = [0.3, 0.1];
        let m = match_moments_2d(&a, &b, 0.5).unwrap();
        assert!(m.len() <= 6);
        let (mean, second) = m.moments();
        assert!((mean[0] - 0.3).abs() < 1e-12 && (mean[1] - 0.1).abs() < 1e-12);
        assert!(second.max_abs_diff(&Matrix::outer(&a).add(&b)) < 1e-9);
        assert!(match_moments_2d(&a, &b, 0.6).is_err());
    }

    #[test]
    fn hypercube_lemma() {
        let a = [0.37f64, -1.21, 0.05];
        let m = hypercube_mean_measure(&a, 0.25).unwrap();
        assert!(m.len() <= 4);
        let (mean, _) = m.moments();
        for (x, y) in mean.iter().zip(&a) {
            assert!((x - y).abs() < 1e-14);
        }
        let v = spread_about(&m, &a);
        assert!(v.trace() <= 3.0 * 0.25 * 0.25);
    }
}
