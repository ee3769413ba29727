//! Time-homogeneous SDE models `dX = μ(X)dt + σ(X)dW`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

pub type VectorField<T> = Arc<dyn Fn(&[T]) -> Vec<T> + Send + Sync>;
pub type MatrixField<T> = Arc<dyn Fn(&[T]) -> Matrix<T> + Send + Sync>;
pub type ScalarMap<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GrowthClass {
    #[default]
    Bounded,
    LinearGrowth,
}

/// Structural facts about a model that the lattice selection relies on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ModelTraits<T> {
    pub growth: GrowthClass,
    /// `inf σ(x)` for one-dimensional models.
    pub sigma_min: Option<T>,
    /// `inf λ_min(Σ(x))` for two-dimensional models.
    pub epsilon: Option<T>,
    /// State-independent eigenframe of `Σ(x)` for zero-drift models.
    pub fixed_frame: Option<Matrix<T>>,
    /// Constant `c` of the step `γ = c·n^{-1/2}` used with a fixed frame.
    pub lattice_constant: Option<T>,
}

impl<T> Default for ModelTraits<T> {
    fn default() -> Self {
        Self { growth: GrowthClass::Bounded, sigma_min: None, epsilon: None, fixed_frame: None, lattice_constant: None }
    }
}

#[derive(Clone)]
pub struct SDEModel<T> {
    dim: usize,
    noise_dim: usize,
    drift: VectorField<T>,
    diffusion: MatrixField<T>,
    pub traits: ModelTraits<T>,
    pub horizon: T,
}

impl<T: Real> fmt::Debug for SDEModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SDEModel")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("traits", &self.traits)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl<T: Real> SDEModel<T> {
    /// `diffusion(x)` must be a `dim × noise_dim` matrix.
    pub fn new(dim: usize, noise_dim: usize, drift: VectorField<T>, diffusion: MatrixField<T>) -> Result<Self> {
        if dim == 0 || noise_dim == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        Ok(Self { dim, noise_dim, drift, diffusion, traits: ModelTraits::default(), horizon: T::one() })
    }

    /// Convenience constructor from plain closures.
    pub fn from_fns(
        dim: usize,
        noise_dim: usize,
        drift: impl Fn(&[T]) -> Vec<T> + Send + Sync + 'static,
        diffusion: impl Fn(&[T]) -> Matrix<T> + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(dim, noise_dim, Arc::new(drift), Arc::new(diffusion))
    }

    pub fn with_traits(mut self, traits: ModelTraits<T>) -> Self {
        self.traits = traits;
        self
    }

    pub fn with_horizon(mut self, horizon: T) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn drift(&self, x: &[T]) -> Vec<T> {
        (self.drift)(x)
    }

    pub fn diffusion(&self, x: &[T]) -> Matrix<T> {
        (self.diffusion)(x)
    }

    /// `Σ(x) = σ(x)σ(x)ᵀ`.
    pub fn sigma_sq(&self, x: &[T]) -> Matrix<T> {
        let s = self.diffusion(x);
        s.matmul(&s.transpose())
    }

    pub fn drift_field(&self) -> VectorField<T> {
        self.drift.clone()
    }

    pub fn diffusion_field(&self) -> MatrixField<T> {
        self.diffusion.clone()
    }

    /// Evaluates the coefficients at `x` and checks shapes and finiteness.
    pub fn check_at(&self, x: &[T]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let mu = self.drift(x);
        if mu.len() != self.dim {
            return Err(Error::Config(format!("drift returned {} components, expected {}", mu.len(), self.dim)));
        }
        let s = self.diffusion(x);
        if s.rows() != self.dim || s.cols() != self.noise_dim {
            return Err(Error::Config(format!(
                "diffusion returned a {}x{} matrix, expected {}x{}",
                s.rows(),
                s.cols(),
                self.dim,
                self.noise_dim
            )));
        }
        if mu.iter().any(|v| !v.is_finite()) || !s.is_finite() {
            return Err(Error::Domain(format!("non-finite coefficients at {x:?}")));
        }
        Ok(())
    }

    pub fn validate_traits(&self) -> Result<()> {
        let t = &self.traits;
        if let Some(s) = t.sigma_min {
            if !(s >= T::zero()) {
                return Err(Error::Config("sigma_min must be nonnegative".into()));
            }
        }
        if let Some(e) = t.epsilon {
            if !(e >= T::zero()) {
                return Err(Error::Config("epsilon must be nonnegative".into()));
            }
        }
        if let Some(q) = &t.fixed_frame {
            if q.rows() != self.dim || q.cols() != self.dim {
                return Err(Error::Config("fixed frame has the wrong shape".into()));
            }
            if q.orthogonality_defect() > T::tol(1e-10) {
                return Err(Error::Config("fixed frame is not orthonormal".into()));
            }
        }
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(())
    }
}

/// A strictly monotone scalar change of variables `y = f(x)`.
#[derive(Clone)]
pub struct Transform<T> {
    pub f: ScalarMap<T>,
    pub df: ScalarMap<T>,
    pub d2f: ScalarMap<T>,
    pub inverse: ScalarMap<T>,
}

impl<T: Real> Transform<T> {
    pub fn new(
        f: impl Fn(T) -> T + Send + Sync + 'static,
        df: impl Fn(T) -> T + Send + Sync + 'static,
        d2f: impl Fn(T) -> T + Send + Sync + 'static,
        inverse: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self { f: Arc::new(f), df: Arc::new(df), d2f: Arc::new(d2f), inverse: Arc::new(inverse) }
    }

    pub fn identity() -> Self {
        Self::new(|x| x, |_| T::one(), |_| T::zero(), |y| y)
    }

    pub fn exp() -> Self {
        Self::new(T::exp, T::exp, T::exp, T::ln)
    }
}

/// Model of `Y = f(X)` together with the map that sends states of an
/// `X`-chain to `Y` values.
#[derive(Clone)]
pub struct TransformedModel<T> {
    pub model: SDEModel<T>,
    pub transform: Transform<T>,
}

impl<T: Real> TransformedModel<T> {
    pub fn map_state(&self, x: &[T]) -> Vec<T> {
        vec![(self.transform.f)(x[0])]
    }
}

/// Itô's formula for a one-dimensional model: `Y = f(X)` has drift
/// `μf' + ½σ²f''` and diffusion `σf'`, both evaluated at `x = f⁻¹(y)`.
///
/// Monotonicity is checked by requiring `f'` to keep one strict sign on the
/// probe points.
pub fn transformed_model<T: Real>(base: &SDEModel<T>, transform: Transform<T>, probes: &[T]) -> Result<TransformedModel<T>> {
    if base.dim() != 1 {
        return Err(Error::Config("state transforms are only supported for one-dimensional models".into()));
    }
    let mut sign = None;
    for &x in probes {
        let d = (transform.df)(x);
        if !d.is_finite() || d == T::zero() {
            return Err(Error::NonMonotone(format!("f'({x}) = {d}")));
        }
        let s = d > T::zero();
        if *sign.get_or_insert(s) != s {
            return Err(Error::NonMonotone(format!("f' changes sign near {x}")));
        }
    }
    let drift_base = base.drift_field();
    let diff_base = base.diffusion_field();
    let (df, d2f, inv) = (transform.df.clone(), transform.d2f.clone(), transform.inverse.clone());
    let drift = {
        let (df, d2f, inv, diff_base) = (df.clone(), d2f.clone(), inv.clone(), diff_base.clone());
        move |y: &[T]| {
            let x = [inv(y[0])];
            let mu = drift_base(&x)[0];
            let s = diff_base(&x);
            let var: T = (0..s.cols()).map(|j| s[(0, j)] * s[(0, j)]).sum();
            vec![mu * df(x[0]) + T::lit(0.5) * var * d2f(x[0])]
        }
    };
    let diffusion = move |y: &[T]| {
        let x = [inv(y[0])];
        let s = diff_base(&x);
        let g = df(x[0]);
        Matrix::from_row_major(1, s.cols(), (0..s.cols()).map(|j| s[(0, j)] * g).collect())
    };
    let mut traits = ModelTraits { growth: base.traits.growth, ..Default::default() };
    traits.sigma_min = None;
    let model = SDEModel::from_fns(1, base.noise_dim(), drift, diffusion)?.with_traits(traits).with_horizon(base.horizon);
    Ok(TransformedModel { model, transform })
}
