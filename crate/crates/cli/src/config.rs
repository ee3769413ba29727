//! JSON model configuration.
//!
//! A config either names a builtin model, whose coefficients and parameters
//! are fixed, or gives drift and diffusion as expression strings:
//!
//! ```json
//! {
//!   "dim": 1,
//!   "drift": ["-x1"],
//!   "diffusion": [["1 + 0.5*cos(x1)"]],
//!   "traits": { "sigma_min": 0.5 },
//!   "x0": [0.0],
//!   "functionals": [{ "label": "cos", "expr": "cos(x1)" }]
//! }
//! ```

use std::path::Path;
use std::sync::Arc;

use lattice_mc::analysis::Functional;
use lattice_mc::builtins::{builtin, heston_functionals, BuiltinName};
use lattice_mc::{GrowthClass, Matrix, ModelTraits, SDEModel};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::expr::{parse_expression, Expr};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraitsConfig {
    pub growth: Option<GrowthClass>,
    pub sigma_min: Option<f64>,
    pub epsilon: Option<f64>,
    /// Rows of an orthonormal frame `Q`.
    pub frame: Option<Vec<Vec<f64>>>,
    pub lattice_constant: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConfig {
    pub label: String,
    pub expr: String,
    /// Closed-form value of `E f(X_T)`, if known.
    pub reference: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingConfig {
    #[serde(default = "zero_expr")]
    pub running_cost: String,
    pub payoff: String,
}

fn zero_expr() -> String {
    "0".into()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub builtin: Option<String>,
    pub dim: Option<usize>,
    #[serde(default)]
    pub drift: Vec<String>,
    #[serde(default)]
    pub diffusion: Vec<Vec<String>>,
    #[serde(default)]
    pub traits: TraitsConfig,
    pub x0: Option<Vec<f64>>,
    pub horizon: Option<f64>,
    #[serde(default)]
    pub functionals: Vec<FunctionalConfig>,
    pub stopping: Option<StoppingConfig>,
    /// Values of `n` for convergence and relative-error studies.
    pub ns: Option<Vec<usize>>,
}

/// A config turned into a runnable model.
#[derive(Clone)]
pub struct Resolved {
    pub name: String,
    pub model: SDEModel<f64>,
    pub x0: Vec<f64>,
    /// Functionals with their closed-form references, if any.
    pub functionals: Vec<(Functional<f64>, Option<f64>)>,
    /// Extra quantities for relative-error studies.
    pub relerr_extras: Vec<Functional<f64>>,
    pub stopping: Option<(Functional<f64>, Functional<f64>)>,
    pub ns: Option<Vec<usize>>,
}

impl ModelConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn builtin_config(name: BuiltinName) -> Self {
        Self { builtin: Some(name.as_str().into()), ..Default::default() }
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let (name, mut model, mut x0, mut functionals, relerr_extras, mut stopping) = match &self.builtin {
            Some(b) => {
                let which: BuiltinName = b.parse().map_err(|e: lattice_mc::Error| CliError::Config(e.to_string()))?;
                let m = builtin::<f64>(which);
                let (fs, extras, stop) = builtin_defaults(which);
                (which.as_str().to_string(), m.model, m.x0, fs, extras, stop)
            }
            None => {
                let m = self.expression_model()?;
                (String::from("custom"), m, Vec::new(), Vec::new(), Vec::new(), None)
            }
        };
        let dim = model.dim();
        if let Some(x) = &self.x0 {
            x0 = x.clone();
        }
        if x0.len() != dim {
            return Err(CliError::Config(format!("x0 must have {dim} entries, got {}", x0.len())));
        }
        if let Some(h) = self.horizon {
            model = model.with_horizon(h);
        }
        if !self.functionals.is_empty() {
            functionals = self
                .functionals
                .iter()
                .map(|f| Ok((compile_functional(&f.label, &f.expr, dim)?, f.reference)))
                .collect::<Result<_, CliError>>()?;
        }
        if let Some(s) = &self.stopping {
            stopping = Some((compile_functional("running_cost", &s.running_cost, dim)?, compile_functional("payoff", &s.payoff, dim)?));
        }
        model.validate_traits().map_err(|e| CliError::Config(e.to_string()))?;
        model.check_at(&x0).map_err(|e| CliError::Config(format!("model is not evaluable at x0: {e}")))?;
        Ok(Resolved { name, model, x0, functionals, relerr_extras, stopping, ns: self.ns.clone() })
    }

    fn expression_model(&self) -> Result<SDEModel<f64>, CliError> {
        let dim = self.dim.ok_or_else(|| CliError::Config("`dim` is required without a builtin".into()))?;
        if dim == 0 {
            return Err(CliError::Config("`dim` must be positive".into()));
        }
        if self.drift.len() != dim {
            return Err(CliError::Config(format!("drift needs {dim} expressions, got {}", self.drift.len())));
        }
        if self.diffusion.len() != dim {
            return Err(CliError::Config(format!("diffusion needs {dim} rows, got {}", self.diffusion.len())));
        }
        let noise = self.diffusion[0].len();
        if noise == 0 || self.diffusion.iter().any(|r| r.len() != noise) {
            return Err(CliError::Config("diffusion rows must be non-empty and of equal length".into()));
        }
        let drift: Vec<Expr> = self.drift.iter().map(|s| compile(s, dim, "drift")).collect::<Result<_, _>>()?;
        let diffusion: Vec<Expr> =
            self.diffusion.iter().flatten().map(|s| compile(s, dim, "diffusion")).collect::<Result<_, _>>()?;
        let drift = Arc::new(drift);
        let diffusion = Arc::new(diffusion);
        // evaluation errors become NaN, which the builder reports as a row error
        let model = SDEModel::from_fns(
            dim,
            noise,
            move |x: &[f64]| drift.iter().map(|e| e.eval(x).unwrap_or(f64::NAN)).collect(),
            move |x: &[f64]| Matrix::from_row_major(dim, noise, diffusion.iter().map(|e| e.eval(x).unwrap_or(f64::NAN)).collect()),
        )
        .map_err(|e| CliError::Config(e.to_string()))?;
        let t = &self.traits;
        let frame = match &t.frame {
            Some(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(CliError::Config(format!("frame must be {dim}x{dim}")));
                }
                Some(Matrix::from_rows(rows))
            }
            None => None,
        };
        Ok(model.with_traits(ModelTraits {
            growth: t.growth.unwrap_or_default(),
            sigma_min: t.sigma_min,
            epsilon: t.epsilon,
            fixed_frame: frame,
            lattice_constant: t.lattice_constant,
        }))
    }
}

fn compile(src: &str, dim: usize, what: &str) -> Result<Expr, CliError> {
    parse_expression(src, dim).map_err(|e| CliError::Config(format!("{what} expression `{src}`: {e}")))
}

fn compile_functional(label: &str, src: &str, dim: usize) -> Result<Functional<f64>, CliError> {
    let e = compile(src, dim, label)?;
    Ok(Functional::new(label, move |x: &[f64]| e.eval(x).unwrap_or(f64::NAN)))
}

type Defaults = (Vec<(Functional<f64>, Option<f64>)>, Vec<Functional<f64>>, Option<(Functional<f64>, Functional<f64>)>);

fn builtin_defaults(which: BuiltinName) -> Defaults {
    let f = |label: &str, g: fn(&[f64]) -> f64| Functional::new(label, g);
    let zero = || f("0", |_| 0.0);
    match which {
        BuiltinName::Bm => (
            vec![(f("cos(x1)", |x| x[0].cos()), Some((-0.5f64).exp())), (f("x1^2", |x| x[0] * x[0]), Some(1.0))],
            vec![],
            // American put with strike 0, negated to fit the minimization form
            Some((zero(), f("-max(-x1,0)", |x| -(-x[0]).max(0.0)))),
        ),
        BuiltinName::Gbm => (
            vec![(f("exp(x1)", |x| x[0].exp()), Some(100.0 * lattice_mc::builtins::GBM_MU.exp()))],
            vec![],
            Some((zero(), f("-max(100-exp(x1),0)", |x| -(100.0 - x[0].exp()).max(0.0)))),
        ),
        BuiltinName::Toy2d => (
            vec![
                (f("x1", |x| x[0]), None),
                (f("x2", |x| x[1]), None),
                (f("x1^2", |x| x[0] * x[0]), None),
                (f("x2^2", |x| x[1] * x[1]), None),
            ],
            vec![],
            None,
        ),
        BuiltinName::HestonMod => (
            vec![(f("x1", |x| x[0]), None), (f("x2", |x| x[1]), None)],
            heston_functionals(),
            Some((zero(), f("-max(100-exp(x1),0)", |x| -(100.0 - x[0].exp()).max(0.0)))),
        ),
    }
}
