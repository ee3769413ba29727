use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::{build_chain, BuildOptions};
use crate::chain::ChainModel;
use crate::error::{Error, Result};
use crate::model::SDEModel;
use crate::scalar::Real;

use super::{chain_expectation, euler_mc_estimate, Functional, McConfig, McEstimate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    ClosedForm(f64),
    /// A precomputed Monte Carlo estimate.
    Estimate(McEstimate),
    /// Run the Euler oracle with this configuration.
    MonteCarlo(McConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub label: String,
    pub ns: Vec<usize>,
    pub chain_values: Vec<f64>,
    /// `|E f(X_n) − reference|`.
    pub errors: Vec<f64>,
    pub reference: f64,
    pub reference_stderr: Option<f64>,
    pub provenance: String,
    /// Least-squares slope of `log error` against `log n`.
    pub slope: Option<f64>,
    /// `−slope`, the empirical weak rate.
    pub rate: Option<f64>,
    /// Why no slope is reported.
    pub inconclusive: Option<String>,
}

/// Least-squares slope of `ln y` on `ln x`; `None` unless every value is
/// positive and finite and there are at least two distinct abscissae.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Builds a chain for every `n`, compares `E f(X_n)` with the reference at
/// the model horizon and fits the decay rate.
///
/// The study is inconclusive when an error is at machine precision, or when
/// a Monte Carlo reference has a standard error above a fifth of the smallest
/// chain error.
pub fn convergence_study<T: Real>(
    model: &SDEModel<T>,
    x0: &[T],
    f: &Functional<T>,
    ns: &[usize],
    reference: &Reference,
    opts: &BuildOptions,
) -> Result<ConvergenceReport> {
    if ns.len() < 3 {
        return Err(Error::Config("a convergence study needs at least three values of n".into()));
    }
    if ns.windows(2).any(|w| w[0] >= w[1]) || ns[0] == 0 {
        return Err(Error::Config("values of n must be positive and strictly increasing".into()));
    }
    let (reference, stderr, provenance) = match reference {
        Reference::ClosedForm(v) => (*v, None, "closed form".to_string()),
        Reference::Estimate(e) => (e.estimate, Some(e.stderr), format!("Monte Carlo estimate ({} paths)", e.paths)),
        Reference::MonteCarlo(cfg) => {
            let e = euler_mc_estimate(model, f, x0, model.horizon, cfg)?;
            (
                e.estimate,
                Some(e.stderr),
                format!("Euler Monte Carlo, {} steps, {} paths, seed {}", cfg.steps, e.paths, cfg.seed),
            )
        }
    };
    let values: Vec<Result<f64>> = ns
        .par_iter()
        .map(|&n| {
            let chain = build_chain(model, n, x0, opts)?;
            Ok(chain_expectation(&chain, f, n)?.to_f64_lossy())
        })
        .collect();
    let chain_values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    let errors: Vec<f64> = chain_values.iter().map(|v| (v - reference).abs()).collect();
    let min_err = errors.iter().copied().fold(f64::INFINITY, f64::min);
    let floor = 1e-13 * reference.abs().max(1.0);
    let inconclusive = if min_err <= floor {
        Some(format!("smallest error {min_err:.3e} is at machine precision"))
    } else if let Some(s) = stderr.filter(|&s| s > min_err / 5.0) {
        Some(format!("reference standard error {s:.3e} exceeds a fifth of the smallest error {min_err:.3e}"))
    } else {
        None
    };
    let slope = if inconclusive.is_none() {
        fit_loglog_slope(&ns.iter().map(|&n| n as f64).collect::<Vec<_>>(), &errors)
    } else {
        None
    };
    Ok(ConvergenceReport {
        label: f.label.clone(),
        ns: ns.to_vec(),
        chain_values,
        errors,
        reference,
        reference_stderr: stderr,
        provenance,
        rate: slope.map(|s| -s),
        slope,
        inconclusive,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    /// Newly discovered states per step.
    pub frontier_sizes: Vec<usize>,
    /// Distinct states discovered up to each step.
    pub cumulative: Vec<usize>,
    /// `card supp(X_i)`.
    pub support_sizes: Vec<usize>,
    /// Slope of `log cumulative` against `log i` over `i ∈ [n/4, n]`.
    pub fitted_exponent: Option<f64>,
}

pub fn state_growth_report<T: Real>(chain: &ChainModel<T>) -> GrowthReport {
    let frontier_sizes: Vec<usize> = chain.frontiers.iter().map(Vec::len).collect();
    let cumulative: Vec<usize> = frontier_sizes
        .iter()
        .scan(0, |acc, &k| {
            *acc += k;
            Some(*acc)
        })
        .collect();
    let support_sizes = chain.supports().iter().map(Vec::len).collect();
    let lo = (chain.n / 4).max(1);
    let (xs, ys): (Vec<f64>, Vec<f64>) = (lo..=chain.n).map(|i| (i as f64, cumulative[i] as f64)).unzip();
    GrowthReport { fitted_exponent: fit_loglog_slope(&xs, &ys), frontier_sizes, cumulative, support_sizes }
}

/// One quantity in a relative-error study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelErrQuantity {
    pub label: String,
    pub chain_values: Vec<f64>,
    pub reference: f64,
    pub reference_stderr: Option<f64>,
    /// Per `n`; for a matrix quantity, the largest entry-wise relative error.
    pub rel_errors: Vec<f64>,
    pub non_increasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelErrReport {
    pub ns: Vec<usize>,
    pub quantities: Vec<RelErrQuantity>,
    pub provenance: String,
    pub approx_rows: Vec<usize>,
}

fn rel(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        value.abs()
    } else {
        ((value - reference) / reference).abs()
    }
}

/// Relative errors at time `T` against a Euler Monte Carlo reference for the
/// means `E[x_i]`, the second-moment matrix `E[x xᵀ]` (largest entry error),
/// the variances `Var[x_i]`, and then each of `extra`.
pub fn relative_error_study(
    model: &SDEModel<f64>,
    x0: &[f64],
    extra: &[Functional<f64>],
    ns: &[usize],
    mc: &McConfig,
    opts: &BuildOptions,
) -> Result<RelErrReport> {
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("values of n must be strictly increasing".into()));
    }
    let d = model.dim();
    let mut raw: Vec<Functional<f64>> = (0..d).map(|i| Functional::new(format!("x{}", i + 1), move |x: &[f64]| x[i])).collect();
    let mut pairs = Vec::new();
    for i in 0..d {
        for j in i..d {
            pairs.push((i, j));
            raw.push(Functional::new(format!("x{}*x{}", i + 1, j + 1), move |x: &[f64]| x[i] * x[j]));
        }
    }
    raw.extend(extra.iter().cloned());
    let reference = super::euler_mc_estimates(model, &raw, x0, model.horizon, mc)?;
    let chains: Vec<Result<(Vec<f64>, usize)>> = ns
        .par_iter()
        .map(|&n| {
            let chain = build_chain(model, n, x0, opts)?;
            let dist = super::distribution_at(&chain, n)?;
            let vals = raw
                .iter()
                .map(|f| dist.iter().map(|&(id, p)| p * f.eval(&chain.state_point(id))).sum())
                .collect();
            Ok((vals, chain.approx_rows()))
        })
        .collect();
    let chains = chains.into_iter().collect::<Result<Vec<_>>>()?;
    let pair_index = |i: usize, j: usize| d + pairs.iter().position(|&p| p == (i, j)).unwrap();
    let mut quantities = Vec::new();
    let mut push = |label: String, values: Vec<f64>, refv: f64, se: Option<f64>, errs: Vec<f64>| {
        let non_increasing = errs.windows(2).all(|w| w[1] <= w[0]);
        quantities.push(RelErrQuantity { label, chain_values: values, reference: refv, reference_stderr: se, rel_errors: errs, non_increasing });
    };
    for i in 0..d {
        let vals: Vec<f64> = chains.iter().map(|c| c.0[i]).collect();
        let r = reference[i].estimate;
        push(format!("E[x{}]", i + 1), vals.clone(), r, Some(reference[i].stderr), vals.iter().map(|&v| rel(v, r)).collect());
    }
    {
        let errs: Vec<f64> = chains
            .iter()
            .map(|c| pairs.iter().map(|&(i, j)| rel(c.0[pair_index(i, j)], reference[pair_index(i, j)].estimate)).fold(0.0, f64::max))
            .collect();
        let vals: Vec<f64> = chains.iter().map(|c| c.0[pair_index(0, d - 1)]).collect();
        let k = pair_index(0, d - 1);
        push("E[x x^T]".into(), vals, reference[k].estimate, Some(reference[k].stderr), errs);
    }
    for i in 0..d {
        let k = pair_index(i, i);
        let r = reference[k].estimate - reference[i].estimate.powi(2);
        let vals: Vec<f64> = chains.iter().map(|c| c.0[k] - c.0[i] * c.0[i]).collect();
        push(format!("Var[x{}]", i + 1), vals.clone(), r, None, vals.iter().map(|&v| rel(v, r)).collect());
    }
    let base = d + pairs.len();
    for (e, f) in extra.iter().enumerate() {
        let r = reference[base + e].estimate;
        let vals: Vec<f64> = chains.iter().map(|c| c.0[base + e]).collect();
        push(f.label.clone(), vals.clone(), r, Some(reference[base + e].stderr), vals.iter().map(|&v| rel(v, r)).collect());
    }
    Ok(RelErrReport {
        ns: ns.to_vec(),
        quantities,
        provenance: format!("Euler Monte Carlo, {} steps, {} paths, seed {}", mc.steps, mc.paths, mc.seed),
        approx_rows: chains.iter().map(|c| c.1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::brownian_motion;

    #[test]
    fn slope_of_power_law() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        assert!((fit_loglog_slope(&xs, &ys).unwrap() + 0.5).abs() < 1e-12);
        assert!(fit_loglog_slope(&xs, &[1.0, 0.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn walk_growth_is_linear() {
        let opts = BuildOptions::default();
        let chain = build_chain(&brownian_motion(0.0f64, 1.0), 20, &[0.0], &opts).unwrap();
        let g = state_growth_report(&chain);
        for (i, &c) in g.cumulative.iter().enumerate() {
            assert_eq!(c, 2 * i + 1);
        }
        let one = build_chain(&brownian_motion(0.0f64, 1.0), 1, &[0.0], &opts).unwrap();
        assert_eq!(state_growth_report(&one).frontier_sizes, vec![1, 2]);
    }

    #[test]
    fn martingale_mean_is_inconclusive() {
        let f = Functional::new("x", |x: &[f64]| x[0]);
        let r = convergence_study(
            &brownian_motion(0.0, 1.0),
            &[0.0],
            &f,
            &[4, 8, 16],
            &Reference::ClosedForm(0.0),
            &BuildOptions::default(),
        )
        .unwrap();
        assert!(r.inconclusive.is_some() && r.slope.is_none());
    }

    #[test]
    fn too_few_ns_rejected() {
        let f = Functional::new("x", |x: &[f64]| x[0]);
        let r = convergence_study(&brownian_motion(0.0, 1.0), &[0.0], &f, &[4, 8], &Reference::ClosedForm(0.0), &BuildOptions::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
