//! Lattice geometry `offset + γ·Q·ℤᵈ`, integer state keys and the finite
//! measures that describe one increment of a chain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoundMode {
    /// Largest lattice value `≤ x`.
    Floor,
    /// Smallest lattice value strictly greater than `x`.
    Ceil,
}

/// Whether a constructed increment law matches its moment target exactly or
/// only approximately.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Exact,
    Approx,
}

/// Integer index `z` with `γz = max{γk ≤ x}`.
///
/// `x / γ` is snapped to the nearest integer when it lies within a few ulps of
/// it, so that values produced as `γ·z` round back to `z` instead of `z − 1`.
pub fn floor_index<T: Real>(x: T, gamma: T) -> T {
    let q = x / gamma;
    let r = q.round();
    let guard = T::epsilon() * T::lit(8.0) * q.abs().max(T::one());
    if (q - r).abs() <= guard {
        r
    } else {
        q.floor()
    }
}

/// Rounds `x` to the lattice `γℤ`. The ceiling is strict: a value already on
/// the lattice is moved up by one step.
pub fn lattice_round<T: Real>(x: T, gamma: T, mode: RoundMode) -> Result<T> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("cannot round non-finite value {x}")));
    }
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return Err(Error::Domain(format!("lattice step must be positive, got {gamma}")));
    }
    let z = floor_index(x, gamma);
    Ok(match mode {
        RoundMode::Floor => gamma * z,
        RoundMode::Ceil => gamma * (z + T::one()),
    })
}

/// Non-strict ceiling `min{γz ≥ x}`, with the same snapping guard.
pub fn ceil_inclusive<T: Real>(x: T, gamma: T) -> T {
    let z = floor_index(x, gamma);
    if gamma * z >= x || (x / gamma - z).abs() <= T::epsilon() * T::lit(8.0) * z.abs().max(T::one()) {
        gamma * z
    } else {
        gamma * (z + T::one())
    }
}

/// Exact integer lattice coordinates, used as the key of a chain state.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticeCoord(pub Vec<i64>);

impl LatticeCoord {
    pub fn origin(dim: usize) -> Self {
        Self(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn shifted(&self, by: &LatticeCoord) -> Self {
        Self(self.0.iter().zip(&by.0).map(|(a, b)| a + b).collect())
    }
}

impl std::fmt::Display for LatticeCoord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, z) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{z}")?;
        }
        write!(f, ")")
    }
}

/// The grid `offset + γ·Q·ℤᵈ` with an orthonormal frame `Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LatticeSpec<T> {
    gamma: T,
    frame: Matrix<T>,
    offset: Vec<T>,
}

impl<T: Real> LatticeSpec<T> {
    pub fn new(gamma: T, frame: Matrix<T>, offset: Vec<T>) -> Result<Self> {
        if !(gamma > T::zero()) || !gamma.is_finite() {
            return Err(Error::InvalidLattice(format!("step must be positive and finite, got {gamma}")));
        }
        if !frame.is_square() || frame.rows() == 0 {
            return Err(Error::InvalidLattice("frame must be a non-empty square matrix".into()));
        }
        if offset.len() != frame.rows() {
            return Err(Error::DimensionMismatch { expected: frame.rows(), got: offset.len() });
        }
        if !frame.is_finite() || frame.orthogonality_defect() > T::tol(1e-10) {
            return Err(Error::InvalidLattice("frame is not orthonormal".into()));
        }
        if offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidLattice("offset must be finite".into()));
        }
        Ok(Self { gamma, frame, offset })
    }

    /// `γℤᵈ` with the identity frame and no offset.
    pub fn axis_aligned(gamma: T, dim: usize) -> Result<Self> {
        Self::new(gamma, Matrix::identity(dim), vec![T::zero(); dim])
    }

    pub fn with_offset(&self, offset: Vec<T>) -> Result<Self> {
        Self::new(self.gamma, self.frame.clone(), offset)
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn frame(&self) -> &Matrix<T> {
        &self.frame
    }

    pub fn offset(&self) -> &[T] {
        &self.offset
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn is_axis_aligned(&self) -> bool {
        self.frame == Matrix::identity(self.dim())
    }

    /// `offset + γ·Q·z`.
    pub fn coord_to_point(&self, z: &LatticeCoord) -> Result<Vec<T>> {
        let d = self.dim();
        if z.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: z.dim() });
        }
        let zf: Vec<T> = z.0.iter().map(|&k| T::from_i64(k).expect("coordinate fits the scalar")).collect();
        let scaled = self.displacement(&zf);
        Ok(scaled.iter().zip(&self.offset).map(|(&s, &o)| o + s).collect())
    }

    /// Inverse of [`coord_to_point`](Self::coord_to_point); fails for points
    /// further than `1e-6` lattice units from the grid.
    pub fn point_to_coord(&self, x: &[T]) -> Result<LatticeCoord> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        let rel: Vec<T> = x.iter().zip(&self.offset).map(|(&v, &o)| v - o).collect();
        self.increment_to_coord(&rel)
    }

    /// Integer coordinates of a displacement `y ∈ γQℤᵈ` (offset ignored).
    pub fn increment_to_coord(&self, y: &[T]) -> Result<LatticeCoord> {
        let d = self.dim();
        if y.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: y.len() });
        }
        let rotated = if self.is_axis_aligned() { y.to_vec() } else { self.frame.transpose().mul_vec(y) };
        let mut out = Vec::with_capacity(d);
        let mut worst = T::zero();
        for v in rotated {
            let q = v / self.gamma;
            if !q.is_finite() {
                return Err(Error::Domain("non-finite point".into()));
            }
            let r = q.round();
            worst = worst.max((q - r).abs());
            out.push(r.to_i64().ok_or_else(|| Error::Domain(format!("coordinate {r} out of range")))?);
        }
        if worst > T::tol(1e-6) {
            return Err(Error::NotOnLattice { distance: worst.to_f64_lossy() });
        }
        Ok(LatticeCoord(out))
    }

    /// `γ·Q·z` for a real coordinate vector.
    pub fn displacement(&self, z: &[T]) -> Vec<T> {
        if self.is_axis_aligned() {
            z.iter().map(|&v| self.gamma * v).collect()
        } else {
            self.frame.mul_vec(z).into_iter().map(|v| self.gamma * v).collect()
        }
    }
}

/// Finite probability measure `Σ pᵢ δ_{xᵢ}` on ℝᵈ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DiscreteMeasure<T> {
    points: Vec<Vec<T>>,
    weights: Vec<T>,
}

impl<T: Real> DiscreteMeasure<T> {
    /// Validates and normalizes: weights in `[-1e-12, 0)` are clamped to zero,
    /// zero-weight atoms are dropped, duplicate points are merged and the
    /// weights are renormalized.
    pub fn new(points: Vec<Vec<T>>, weights: Vec<T>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.is_empty() {
            return Err(Error::InvalidMeasure("empty support".into()));
        }
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidMeasure("points of mixed dimension".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite point or weight".into()));
        }
        let neg_tol = T::tol(1e-12);
        if let Some(w) = weights.iter().find(|&&w| w < -neg_tol) {
            return Err(Error::InvalidMeasure(format!("negative weight {w}")));
        }
        let total: T = weights.iter().map(|&w| w.max(T::zero())).sum();
        if (total - T::one()).abs() > T::tol(1e-12) * T::lit(points.len() as f64).max(T::one()) {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}")));
        }
        Ok(Self::normalized(points, weights))
    }

    /// Like [`new`](Self::new) but rescales any positive total mass to one.
    pub fn from_unnormalized(points: Vec<Vec<T>>, weights: Vec<T>) -> Result<Self> {
        let total: T = weights.iter().map(|&w| w.max(T::zero())).sum();
        if !(total > T::zero()) {
            return Err(Error::InvalidMeasure("no positive mass".into()));
        }
        let scaled = weights.iter().map(|&w| w / total).collect();
        Self::new(points, scaled)
    }

    pub fn dirac(point: Vec<T>) -> Self {
        Self { points: vec![point], weights: vec![T::one()] }
    }

    fn normalized(points: Vec<Vec<T>>, weights: Vec<T>) -> Self {
        let mut out_pts: Vec<Vec<T>> = Vec::with_capacity(points.len());
        let mut out_w: Vec<T> = Vec::with_capacity(points.len());
        for (mut p, w) in points.into_iter().zip(weights) {
            if w <= T::zero() {
                continue;
            }
            for v in p.iter_mut() {
                // avoid distinct keys for 0.0 and -0.0
                if *v == T::zero() {
                    *v = T::zero();
                }
            }
            match out_pts.iter().position(|q| *q == p) {
                Some(i) => out_w[i] = out_w[i] + w,
                None => {
                    out_pts.push(p);
                    out_w.push(w);
                }
            }
        }
        let total: T = out_w.iter().copied().sum();
        for w in out_w.iter_mut() {
            *w = *w / total;
        }
        Self { points: out_pts, weights: out_w }
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[T], T)> {
        self.points.iter().map(Vec::as_slice).zip(self.weights.iter().copied())
    }

    /// Pushes every atom through `f`, merging any atoms that collide.
    pub fn map_points(&self, f: impl Fn(&[T]) -> Vec<T>) -> Self {
        Self::normalized(self.points.iter().map(|p| f(p)).collect(), self.weights.clone())
    }

    pub fn translate(&self, by: &[T]) -> Self {
        self.map_points(|p| p.iter().zip(by).map(|(&x, &b)| x + b).collect())
    }

    /// Largest `‖x‖_∞` over the support.
    pub fn support_radius(&self) -> T {
        self.points.iter().flatten().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn moments(&self) -> (Vec<T>, Matrix<T>) {
        measure_moments(self)
    }
}

/// `(Σ pᵢ xᵢ, Σ pᵢ xᵢ xᵢᵀ)`.
pub fn measure_moments<T: Real>(m: &DiscreteMeasure<T>) -> (Vec<T>, Matrix<T>) {
    let d = m.dim();
    let mut mean = vec![T::zero(); d];
    let mut second = Matrix::zeros(d, d);
    for (p, w) in m.atoms() {
        for i in 0..d {
            mean[i] = mean[i] + w * p[i];
            for j in 0..d {
                second[(i, j)] = second[(i, j)] + w * p[i] * p[j];
            }
        }
    }
    (mean, second)
}

/// Required increment mean `a` and second-moment excess `B` for one state:
/// a matching increment `Y` has `E[Y] = a` and `E[YYᵀ] = aaᵀ + B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MomentTarget<T> {
    pub a: Vec<T>,
    pub b: Matrix<T>,
}

impl<T: Real> MomentTarget<T> {
    pub fn new(a: Vec<T>, b: Matrix<T>) -> Result<Self> {
        if !b.is_square() || b.rows() != a.len() {
            return Err(Error::DimensionMismatch { expected: a.len(), got: b.rows() });
        }
        if a.iter().any(|v| !v.is_finite()) || !b.is_finite() {
            return Err(Error::InvalidTarget("non-finite entries".into()));
        }
        let scale = b.max_abs().max(T::one());
        if !b.is_symmetric(T::tol(1e-10) * scale) {
            return Err(Error::InvalidTarget("second moment is not symmetric".into()));
        }
        if b.min_eigenvalue() < -T::tol(1e-10) * scale {
            return Err(Error::InvalidTarget("second moment is not positive semidefinite".into()));
        }
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// `aaᵀ + B`.
    pub fn raw_second(&self) -> Matrix<T> {
        Matrix::outer(&self.a).add(&self.b)
    }
}
