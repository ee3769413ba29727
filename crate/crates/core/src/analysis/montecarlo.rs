use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SDEModel;
use crate::scalar::Real;

use super::Functional;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    /// Paths per independently seeded batch.
    pub batch: usize,
}

impl McConfig {
    pub fn new(steps: usize, paths: usize, seed: u64) -> Self {
        Self { steps, paths, seed, batch: 4096 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// Paths that contributed to the estimate.
    pub paths: usize,
    pub non_finite: usize,
}

/// Running mean and squared deviations of one batch; merged in batch order so the result does not
/// depend on scheduling.
#[derive(Clone)]
struct Sums {
    n: usize,
    bad: usize,
    mean: Vec<f64>,
    /// Sum of squared deviations from `mean`.
    m2: Vec<f64>,
}

impl Sums {
    fn empty(k: usize) -> Self {
        Self { n: 0, bad: 0, mean: vec![0.0; k], m2: vec![0.0; k] }
    }

    fn push(&mut self, vals: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for (k, &v) in vals.iter().enumerate() {
            let delta = v - self.mean[k];
            self.mean[k] += delta / n;
            self.m2[k] += delta * (v - self.mean[k]);
        }
    }

    fn merge(&mut self, other: &Sums) {
        self.bad += other.bad;
        if other.n == 0 {
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for k in 0..self.mean.len() {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * nb / n;
            self.m2[k] += other.m2[k] + delta * delta * na * nb / n;
        }
        self.n += other.n;
    }
}

fn run_batch<T: Real>(model: &SDEModel<T>, fs: &[Functional<T>], x0: &[T], t: T, cfg: &McConfig, batch: usize, count: usize) -> Sums {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(batch as u64);
    let dt = t / T::from_usize(cfg.steps).unwrap();
    let sdt = dt.sqrt();
    let d = model.dim();
    let h = model.noise_dim();
    let mut out = Sums::empty(fs.len());
    let mut x = vec![T::zero(); d];
    let mut dw = vec![T::zero(); h];
    for _ in 0..count {
        x.copy_from_slice(x0);
        let mut finite = true;
        for _ in 0..cfg.steps {
            let mu = model.drift(&x);
            let s = model.diffusion(&x);
            for w in dw.iter_mut() {
                *w = T::standard_normal(&mut rng) * sdt;
            }
            for i in 0..d {
                let mut v = x[i] + mu[i] * dt;
                for (j, &w) in dw.iter().enumerate() {
                    v = v + s[(i, j)] * w;
                }
                x[i] = v;
            }
            if x.iter().any(|v| !v.is_finite()) {
                finite = false;
                break;
            }
        }
        let vals: Vec<f64> = if finite { fs.iter().map(|f| f.eval(&x).to_f64_lossy()).collect() } else { Vec::new() };
        if !finite || vals.iter().any(|v| !v.is_finite()) {
            out.bad += 1;
            continue;
        }
        out.push(&vals);
    }
    out
}

/// Euler–Maruyama estimates of `E f(X_t)` for several functionals sharing
/// the same paths. Batch `b` draws from stream `b` of a ChaCha8 generator
/// seeded with `cfg.seed`.
pub fn euler_mc_estimates<T: Real>(
    model: &SDEModel<T>,
    fs: &[Functional<T>],
    x0: &[T],
    t: T,
    cfg: &McConfig,
) -> Result<Vec<McEstimate>> {
    if cfg.steps == 0 || cfg.paths == 0 || cfg.batch == 0 {
        return Err(Error::Config("Monte Carlo steps, paths and batch size must be positive".into()));
    }
    if x0.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x0.len() });
    }
    if !(t >= T::zero()) {
        return Err(Error::Config("time must be nonnegative".into()));
    }
    model.check_at(x0)?;
    let batches: Vec<(usize, usize)> = (0..cfg.paths.div_ceil(cfg.batch))
        .map(|b| (b, cfg.batch.min(cfg.paths - b * cfg.batch)))
        .collect();
    let parts: Vec<Sums> = batches.par_iter().map(|&(b, c)| run_batch(model, fs, x0, t, cfg, b, c)).collect();
    let mut total = Sums::empty(fs.len());
    for p in &parts {
        total.merge(p);
    }
    if total.bad * 100 > cfg.paths || total.n == 0 {
        return Err(Error::NonFinitePaths { bad: total.bad, total: cfg.paths });
    }
    let n = total.n as f64;
    Ok((0..fs.len())
        .map(|k| {
            let var = if total.n > 1 { total.m2[k] / (n - 1.0) } else { 0.0 };
            McEstimate { estimate: total.mean[k], stderr: (var / n).sqrt(), paths: total.n, non_finite: total.bad }
        })
        .collect())
}

/// Single-functional form of [`euler_mc_estimates`].
pub fn euler_mc_estimate<T: Real>(model: &SDEModel<T>, f: &Functional<T>, x0: &[T], t: T, cfg: &McConfig) -> Result<McEstimate> {
    Ok(euler_mc_estimates(model, std::slice::from_ref(f), x0, t, cfg)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{brownian_motion, log_gbm};
    use crate::linalg::Matrix;

    #[test]
    fn deterministic_path_has_no_error() {
        let m = brownian_motion(0.7f64, 0.0);
        let f = Functional::new("x", |x: &[f64]| x[0]);
        let r = euler_mc_estimate(&m, &f, &[1.0], 2.0, &McConfig::new(10, 500, 1)).unwrap();
        assert!((r.estimate - 2.4).abs() < 1e-12);
        assert_eq!(r.stderr, 0.0);
    }

    #[test]
    fn brownian_cosine() {
        let m = brownian_motion(0.0f64, 1.0);
        let f = Functional::new("cos", |x: &[f64]| x[0].cos());
        let r = euler_mc_estimate(&m, &f, &[0.0], 1.0, &McConfig::new(20, 40_000, 7)).unwrap();
        assert!((r.estimate - (-0.5f64).exp()).abs() < 3.0 * r.stderr + 1e-3, "{r:?}");
    }

    #[test]
    fn gbm_mean() {
        let (mu, sigma) = (0.05, 0.2);
        let m = log_gbm(mu, sigma);
        let f = Functional::new("P", |x: &[f64]| x[0].exp());
        let r = euler_mc_estimate(&m, &f, &[100f64.ln()], 1.0, &McConfig::new(50, 40_000, 3)).unwrap();
        let exact = 100.0 * f64::exp(mu);
        assert!((r.estimate - exact).abs() < 3.0 * r.stderr, "{r:?} vs {exact}");
    }

    #[test]
    fn same_seed_same_estimate() {
        let m = brownian_motion(0.1f64, 1.0);
        let f = Functional::new("x^2", |x: &[f64]| x[0] * x[0]);
        let cfg = McConfig { batch: 100, ..McConfig::new(10, 1000, 42) };
        let a = euler_mc_estimate(&m, &f, &[0.0], 1.0, &cfg).unwrap();
        let b = euler_mc_estimate(&m, &f, &[0.0], 1.0, &cfg).unwrap();
        assert_eq!(a, b);
        let c = euler_mc_estimate(&m, &f, &[0.0], 1.0, &McConfig { seed: 43, ..cfg }).unwrap();
        assert_ne!(a.estimate, c.estimate);
    }

    #[test]
    fn exploding_paths_are_reported() {
        let m = SDEModel::from_fns(1, 1, |x: &[f64]| vec![x[0] * x[0] * 1e3], |_: &[f64]| Matrix::identity(1)).unwrap();
        let f = Functional::new("x", |x: &[f64]| x[0]);
        let r = euler_mc_estimate(&m, &f, &[1.0], 1.0, &McConfig::new(100, 200, 1));
        assert!(matches!(r, Err(Error::NonFinitePaths { .. })));
    }
}
