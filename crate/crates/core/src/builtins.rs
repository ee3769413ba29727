//! Reference models shipped with fixed parameters.

use serde::{Deserialize, Serialize};

use crate::analysis::Functional;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{GrowthClass, ModelTraits, SDEModel};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinName {
    /// Standard Brownian motion from 0.
    Bm,
    /// Geometric Brownian motion in log coordinates, `P₀ = 100`.
    Gbm,
    /// `μ = (sin x, cos y)`, `σ = diag(cos y + 2, sin x + 2)` from the origin.
    Toy2d,
    /// Log-price Heston model with price-dependent mean reversion level.
    HestonMod,
}

impl BuiltinName {
    pub const ALL: [BuiltinName; 4] = [BuiltinName::Bm, BuiltinName::Gbm, BuiltinName::Toy2d, BuiltinName::HestonMod];

    pub fn as_str(self) -> &'static str {
        match self {
            BuiltinName::Bm => "bm",
            BuiltinName::Gbm => "gbm",
            BuiltinName::Toy2d => "toy2d",
            BuiltinName::HestonMod => "heston_mod",
        }
    }
}

impl std::str::FromStr for BuiltinName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BuiltinName::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown builtin model `{s}`")))
    }
}

/// A model together with its canonical starting point.
#[derive(Clone, Debug)]
pub struct Builtin<T: Real> {
    pub name: BuiltinName,
    pub model: SDEModel<T>,
    pub x0: Vec<T>,
}

pub const GBM_MU: f64 = 0.05;
pub const GBM_SIGMA: f64 = 0.2;
pub const GBM_P0: f64 = 100.0;

/// Parameters of the log-price Heston model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HestonParams {
    pub log_p0: f64,
    pub v0: f64,
    pub mu: f64,
    pub lambda: f64,
    pub rho: f64,
    pub xi: f64,
    pub c: f64,
    pub k: f64,
}

pub const HESTON: HestonParams =
    HestonParams { log_p0: 4.605_170_185_988_091, v0: 5.0, mu: 0.0, lambda: 2.0, rho: 0.2, xi: 1.0, c: 2.0, k: 5.0 };

pub fn builtin<T: Real>(name: BuiltinName) -> Builtin<T> {
    match name {
        BuiltinName::Bm => Builtin { name, model: brownian_motion(T::zero(), T::one()), x0: vec![T::zero()] },
        BuiltinName::Gbm => Builtin { name, model: log_gbm(T::lit(GBM_MU), T::lit(GBM_SIGMA)), x0: vec![T::lit(GBM_P0).ln()] },
        BuiltinName::Toy2d => Builtin { name, model: toy2d(), x0: vec![T::zero(), T::zero()] },
        BuiltinName::HestonMod => Builtin { name, model: heston_mod(&HESTON), x0: vec![T::lit(HESTON.log_p0), T::lit(HESTON.v0)] },
    }
}

/// `dX = μ dt + σ dW`.
pub fn brownian_motion<T: Real>(mu: T, sigma: T) -> SDEModel<T> {
    SDEModel::from_fns(1, 1, move |_: &[T]| vec![mu], move |_: &[T]| Matrix::from_rows(&[vec![sigma]]))
        .expect("valid shapes")
        .with_traits(ModelTraits { sigma_min: Some(sigma.abs()), ..Default::default() })
}

/// `d log P = (μ − σ²/2) dt + σ dW`.
pub fn log_gbm<T: Real>(mu: T, sigma: T) -> SDEModel<T> {
    brownian_motion(mu - T::lit(0.5) * sigma * sigma, sigma)
}

pub fn toy2d<T: Real>() -> SDEModel<T> {
    let two = T::lit(2.0);
    SDEModel::from_fns(
        2,
        2,
        |x: &[T]| vec![x[0].sin(), x[1].cos()],
        move |x: &[T]| Matrix::from_diag(&[x[1].cos() + two, x[0].sin() + two]),
    )
    .expect("valid shapes")
    .with_traits(ModelTraits { epsilon: Some(T::one()), ..Default::default() })
}

/// State `(log P, V)`. The variance is clamped at zero inside the square
/// root, which keeps the coefficients defined on the whole lattice.
///
/// The model is not uniformly elliptic; the declared `epsilon` is the
/// smallest eigenvalue of `Σ` at the starting variance, `V₀(1 − ρ)` for
/// `ξ = 1`, and only serves to pick the lattice step. Rows whose variance is
/// too small for the exact construction go to the fallback solver.
pub fn heston_mod<T: Real>(p: &HestonParams) -> SDEModel<T> {
    let p = *p;
    let (mu, lambda, c, k) = (T::lit(p.mu), T::lit(p.lambda), T::lit(p.c), T::lit(p.k));
    let (xi, rho) = (T::lit(p.xi), T::lit(p.rho));
    let drift = move |x: &[T]| {
        let v = x[1].max(T::zero());
        vec![mu - T::lit(0.5) * v, lambda * (c / (T::one() + x[0].exp()) + k - x[1])]
    };
    let diffusion = move |x: &[T]| {
        let s = x[1].max(T::zero()).sqrt();
        Matrix::from_rows(&[vec![s, T::zero()], vec![s * xi * rho, s * xi * (T::one() - rho * rho).sqrt()]])
    };
    let corr = Matrix::from_rows(&[vec![T::one(), xi * rho], vec![xi * rho, xi * xi]]);
    let epsilon = T::lit(p.v0) * corr.min_eigenvalue();
    SDEModel::from_fns(2, 2, drift, diffusion)
        .expect("valid shapes")
        .with_traits(ModelTraits { growth: GrowthClass::LinearGrowth, epsilon: Some(epsilon), ..Default::default() })
}

/// Functionals reported for the Heston model besides the moments of
/// `(log P, V)`: `ℙ[V > 5]` and the call `E[max(P − 100, 0)]`.
pub fn heston_functionals() -> Vec<Functional<f64>> {
    vec![
        Functional::new("P[V>5]", |x: &[f64]| if x[1] > 5.0 { 1.0 } else { 0.0 }),
        Functional::new("E[max(P-100,0)]", |x: &[f64]| (x[0].exp() - 100.0).max(0.0)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for b in BuiltinName::ALL {
            assert_eq!(b.as_str().parse::<BuiltinName>().unwrap(), b);
        }
        assert!("nope".parse::<BuiltinName>().is_err());
    }

    #[test]
    fn builtins_are_well_formed() {
        for b in BuiltinName::ALL {
            let m = builtin::<f64>(b);
            m.model.check_at(&m.x0).unwrap();
            m.model.validate_traits().unwrap();
        }
    }

    #[test]
    fn toy_ellipticity_constant() {
        let m = toy2d::<f64>();
        let mut lo = f64::INFINITY;
        for i in 0..40 {
            for j in 0..40 {
                let x = [i as f64 * 0.16, j as f64 * 0.16];
                lo = lo.min(m.sigma_sq(&x).min_eigenvalue());
            }
        }
        assert!(lo >= 1.0 - 1e-12 && lo < 1.01);
    }

    #[test]
    fn heston_start_values() {
        let b = builtin::<f64>(BuiltinName::HestonMod);
        assert!((b.x0[0] - 100f64.ln()).abs() < 1e-15);
        let s = b.model.sigma_sq(&b.x0);
        assert!((s[(0, 0)] - 5.0).abs() < 1e-12);
        assert!((s[(0, 1)] - 1.0).abs() < 1e-12);
        assert!((b.model.traits.epsilon.unwrap() - 4.0).abs() < 1e-12);
        // θ(P) = 2/(1+P) + 5 with P = 100
        let mu = b.model.drift(&b.x0);
        assert!((mu[1] - 2.0 * (2.0 / 101.0 + 5.0 - 5.0)).abs() < 1e-12);
    }
}
