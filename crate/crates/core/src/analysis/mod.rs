//! Evaluation of built chains: forward expectations, the Euler Monte Carlo
//! reference, convergence and growth studies, and optimal stopping.

mod expectation;
mod montecarlo;
mod stopping;
mod study;

use std::fmt;
use std::sync::Arc;

pub use expectation::{chain_expectation, chain_expectations, distribution_at, Distribution};
pub use montecarlo::{euler_mc_estimate, euler_mc_estimates, McConfig, McEstimate};
pub use stopping::{optimal_stopping_value, StoppingResult};
pub use study::{
    convergence_study, fit_loglog_slope, relative_error_study, state_growth_report, ConvergenceReport, GrowthReport, Reference,
    RelErrQuantity, RelErrReport,
};

/// A labelled real-valued map on states.
#[derive(Clone)]
pub struct Functional<T> {
    pub label: String,
    f: Arc<dyn Fn(&[T]) -> T + Send + Sync>,
}

impl<T> Functional<T> {
    pub fn new(label: impl Into<String>, f: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        Self { label: label.into(), f: Arc::new(f) }
    }

    pub fn eval(&self, x: &[T]) -> T {
        (self.f)(x)
    }
}

impl<T> fmt::Debug for Functional<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Functional").field("label", &self.label).finish_non_exhaustive()
    }
}
