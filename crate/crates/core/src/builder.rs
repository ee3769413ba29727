//! Chain construction: lattice selection, frontier-by-frontier expansion and
//! per-state moment matching, plus local consistency diagnostics.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{ChainModel, RowMeta, RowSolver, StateKey};
use crate::error::{Error, Result};
use crate::fallback::{approx_match_qp, moment_residual, FallbackConfig};
use crate::lattice::{LatticeCoord, LatticeSpec, MatchMode, MomentTarget};
use crate::linalg::{norm2, Matrix};
use crate::model::SDEModel;
use crate::moment1d::{match_moments_1d, match_zero_mean_1d, Match1DOptions};
use crate::moment_nd::{eigenlattice_in_frame, match_moments_2d, match_second_moment_2d_zero_mean};
use crate::recombine::MomentMap;
use crate::scalar::Real;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "LATTICE_MC_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildMode {
    /// Exact constructors where their preconditions hold, fallback elsewhere.
    #[default]
    Auto,
    /// Fail on the first row without an exact construction.
    ExactOnly,
    /// Solve every row with the fallback solver.
    FallbackOnly,
}

impl std::str::FromStr for BuildMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(BuildMode::Auto),
            "exact-only" | "exact_only" => Ok(BuildMode::ExactOnly),
            "fallback-only" | "fallback_only" => Ok(BuildMode::FallbackOnly),
            _ => Err(Error::Config(format!("unknown build mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildOptions {
    /// Exponent of the step `n^{-(1+β)/2}` for degenerate one-dimensional models.
    pub beta: f64,
    pub max_states: usize,
    pub fallback: FallbackConfig,
    pub mode: BuildMode,
    /// Use this lattice step instead of the model-derived one.
    pub gamma_override: Option<f64>,
    /// Worker threads; defaults to `LATTICE_MC_THREADS` or all cores.
    pub threads: Option<usize>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            beta: 0.5,
            max_states: 1_000_000,
            fallback: FallbackConfig::default(),
            mode: BuildMode::Auto,
            gamma_override: None,
            threads: None,
        }
    }
}

impl BuildOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if self.max_states == 0 {
            return Err(Error::Config("max_states must be positive".into()));
        }
        if let Some(g) = self.gamma_override {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::Config(format!("lattice step must be positive, got {g}")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("thread count must be positive".into()));
        }
        self.fallback.validate()
    }

    fn thread_count(&self) -> usize {
        self.threads
            .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|&t| t > 0))
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

/// Lattice step and frame for an `n`-step chain on `[0, T]`, with `Δt = T/n`:
///
/// | model                          | step                 | frame |
/// |--------------------------------|----------------------|-------|
/// | `d = 1`, `σ_min > 0`           | `2σ_min·√Δt`         | 1     |
/// | `d = 1`, `σ_min = 0`           | `Δt^{(1+β)/2}`       | 1     |
/// | fixed frame `Q`, constant `c`  | `c·√Δt`              | `Q`   |
/// | `d = 2`, `ε > 0`               | `√(ε·Δt/3)`          | `I`   |
pub fn select_lattice<T: Real>(model: &SDEModel<T>, n: usize, opts: &BuildOptions) -> Result<LatticeSpec<T>> {
    if n == 0 {
        return Err(Error::Config("the number of steps must be at least 1".into()));
    }
    opts.validate()?;
    model.validate_traits()?;
    let d = model.dim();
    let traits = &model.traits;
    let dt = model.horizon / T::from_usize(n).unwrap();
    let frame = traits.fixed_frame.clone().unwrap_or_else(|| Matrix::identity(d));
    let zero = vec![T::zero(); d];
    if let Some(g) = opts.gamma_override {
        return LatticeSpec::new(T::lit(g), frame, zero);
    }
    let gamma = if traits.fixed_frame.is_some() {
        let c = traits
            .lattice_constant
            .ok_or_else(|| Error::Config("a fixed frame needs a lattice constant".into()))?;
        c * dt.sqrt()
    } else if d == 1 {
        match traits.sigma_min {
            Some(s) if s > T::zero() => T::lit(2.0) * s * dt.sqrt(),
            Some(_) => dt.powf(T::lit((1.0 + opts.beta) / 2.0)),
            None => return Err(Error::Config("one-dimensional models must declare sigma_min".into())),
        }
    } else if d == 2 {
        match traits.epsilon {
            Some(e) if e > T::zero() => (e * dt / T::lit(3.0)).sqrt(),
            Some(_) => return Err(Error::Config("epsilon = 0: the two-dimensional step needs a uniformly elliptic model".into())),
            None => return Err(Error::Config("two-dimensional models must declare epsilon".into())),
        }
    } else {
        return Err(Error::Config(format!("{d}-dimensional models need a fixed frame and lattice constant")));
    };
    let spec = LatticeSpec::new(gamma, frame, zero)?;
    let scheme = scheme_constant(n, gamma);
    if !scheme.is_finite() {
        return Err(Error::Config(format!("n·γ² = {scheme} is not finite")));
    }
    Ok(spec)
}

/// `n·γ²`, which stays bounded when the step shrinks like `n^{-1/2}` or faster.
pub fn scheme_constant<T: Real>(n: usize, gamma: T) -> T {
    T::from_usize(n).unwrap() * gamma * gamma
}

struct Context<'a, T> {
    model: &'a SDEModel<T>,
    lattice: &'a LatticeSpec<T>,
    /// Lattice of increments from a lattice state.
    steps: LatticeSpec<T>,
    x0: &'a [T],
    dt: T,
    opts: &'a BuildOptions,
}

struct SolvedRow<T> {
    dests: Vec<(LatticeCoord, T)>,
    meta: RowMeta<T>,
}

struct ExactRow<T> {
    increments: Vec<Vec<T>>,
    weights: Vec<T>,
    mode: MatchMode,
    solver: RowSolver,
}

fn row_error(key: &StateKey, reason: impl std::fmt::Display) -> Error {
    Error::Row { state: key.to_string(), reason: reason.to_string() }
}

impl<T: Real> Context<'_, T> {
    fn point(&self, key: &StateKey) -> Vec<T> {
        match key {
            StateKey::OffGrid => self.x0.to_vec(),
            StateKey::Lattice(z) => self.lattice.coord_to_point(z).expect("lattice state"),
        }
    }

    fn target(&self, x: &[T]) -> Result<MomentTarget<T>> {
        self.model.check_at(x)?;
        let mu = self.model.drift(x);
        let s = self.model.sigma_sq(x);
        let a: Vec<T> = mu.iter().map(|&v| v * self.dt).collect();
        let b = s.add(&s.transpose()).scale(T::lit(0.5) * self.dt);
        MomentTarget::new(a, b)
    }

    fn solve(&self, key: &StateKey, step: usize) -> Result<SolvedRow<T>> {
        let x = self.point(key);
        let target = self.target(&x).map_err(|e| row_error(key, e))?;
        let offgrid = matches!(key, StateKey::OffGrid);
        let exact = match self.opts.mode {
            BuildMode::FallbackOnly => Err(Error::Precondition("fallback requested".into())),
            _ => self.try_exact(&x, offgrid, &target),
        };
        let map = MomentMap::MeanAndSecond { dim: target.dim() };
        let goal = map.target(&target.a, &target.raw_second());
        let (increments, weights, mode, solver, residual) = match exact {
            Ok(r) => {
                let res = moment_residual(&r.increments, &r.weights, &goal, map);
                (r.increments, r.weights, r.mode, r.solver, res)
            }
            Err(e) if self.opts.mode == BuildMode::ExactOnly => return Err(row_error(key, e)),
            Err(_) => {
                let lat = if offgrid {
                    let shift: Vec<T> = self.lattice.offset().iter().zip(self.x0).map(|(&o, &x)| o - x).collect();
                    self.lattice.with_offset(shift)?
                } else {
                    self.steps.clone()
                };
                let fm = approx_match_qp(&target, &lat, &self.opts.fallback).map_err(|e| row_error(key, e))?;
                let (pts, w) = (fm.measure.points().to_vec(), fm.measure.weights().to_vec());
                (pts, w, MatchMode::Approx, RowSolver::Fallback, fm.residual)
            }
        };
        let mut dests = Vec::with_capacity(weights.len());
        for (y, w) in increments.iter().zip(weights) {
            let z = match key {
                StateKey::OffGrid => {
                    let p: Vec<T> = x.iter().zip(y).map(|(&a, &b)| a + b).collect();
                    self.lattice.point_to_coord(&p)
                }
                StateKey::Lattice(z) => self.steps.increment_to_coord(y).map(|dz| z.shifted(&dz)),
            }
            .map_err(|e| row_error(key, e))?;
            dests.push((z, w));
        }
        Ok(SolvedRow { dests, meta: RowMeta { mode, solver, residual, step_first_reached: step } })
    }

    fn try_exact(&self, x: &[T], offgrid: bool, target: &MomentTarget<T>) -> Result<ExactRow<T>> {
        let d = target.dim();
        let plain = self.lattice.is_axis_aligned() && self.lattice.offset().iter().all(|&o| o == T::zero());
        let gamma = self.lattice.gamma();
        // An off-lattice start matches the law of x0 + Y on the lattice, written
        // relative to the nearest lattice point so the support stays local.
        let centre: Vec<T> = if offgrid && plain {
            x.iter().map(|&v| v - (v / gamma).round() * gamma).collect()
        } else {
            vec![T::zero(); d]
        };
        let strict = self.opts.mode == BuildMode::ExactOnly;
        let shift_back = |pts: &[Vec<T>]| -> Vec<Vec<T>> {
            pts.iter().map(|p| p.iter().zip(&centre).map(|(&v, &c)| v - c).collect()).collect()
        };
        let zero_mean = !offgrid && target.a.iter().all(|&v| v == T::zero());
        if plain && d == 1 {
            let b = target.b[(0, 0)].max(T::zero()).sqrt();
            if zero_mean {
                let m = match_zero_mean_1d(b, gamma)?;
                return Ok(ExactRow {
                    increments: m.points().to_vec(),
                    weights: m.weights().to_vec(),
                    mode: MatchMode::Exact,
                    solver: RowSolver::ZeroMean1D,
                });
            }
            let opts = Match1DOptions { exact_required: strict, ..Default::default() };
            let r = match_moments_1d(target.a[0] + centre[0], b, gamma, &opts)?;
            return Ok(ExactRow {
                increments: shift_back(r.measure.points()),
                weights: r.measure.weights().to_vec(),
                mode: r.mode,
                solver: RowSolver::Moments1D,
            });
        }
        if plain && d == 2 {
            let (m, solver) = if zero_mean {
                (match_second_moment_2d_zero_mean(&target.b, gamma)?, RowSolver::ZeroMean2D)
            } else {
                let am: Vec<T> = target.a.iter().zip(&centre).map(|(&a, &c)| a + c).collect();
                (match_moments_2d(&am, &target.b, gamma)?, RowSolver::Moments2D)
            };
            return Ok(ExactRow {
                increments: shift_back(m.points()),
                weights: m.weights().to_vec(),
                mode: MatchMode::Exact,
                solver,
            });
        }
        // eigenvector lattice: zero drift with Σ diagonal in the lattice frame
        if !zero_mean {
            return Err(Error::Precondition("the frame construction needs zero drift from a lattice state".into()));
        }
        let q = self.lattice.frame();
        let rotated = q.transpose().matmul(&target.b).matmul(q);
        let scale = rotated.max_abs().max(T::min_positive_value());
        for i in 0..d {
            for j in 0..d {
                if i != j && rotated[(i, j)].abs() > T::tol(1e-8) * scale {
                    return Err(Error::Precondition("Σ is not diagonal in the lattice frame".into()));
                }
            }
        }
        let lambdas: Vec<T> = (0..d).map(|i| rotated[(i, i)].max(T::zero())).collect();
        let m = eigenlattice_in_frame(&lambdas, q, gamma)?;
        Ok(ExactRow {
            increments: m.points().to_vec(),
            weights: m.weights().to_vec(),
            mode: MatchMode::Exact,
            solver: RowSolver::Eigenlattice,
        })
    }
}

/// Builds the `n`-step chain started at `x0`.
///
/// States are discovered breadth first; each new state is solved once, in
/// the step at which it is first reached, and states first reached at step
/// `n` are terminal. Ids follow discovery order, so the result does not
/// depend on the thread count.
pub fn build_chain<T: Real>(model: &SDEModel<T>, n: usize, x0: &[T], opts: &BuildOptions) -> Result<ChainModel<T>> {
    let lattice = select_lattice(model, n, opts)?;
    build_chain_on(model, n, x0, &lattice, opts)
}

/// [`build_chain`] on a caller-supplied lattice.
pub fn build_chain_on<T: Real>(
    model: &SDEModel<T>,
    n: usize,
    x0: &[T],
    lattice: &LatticeSpec<T>,
    opts: &BuildOptions,
) -> Result<ChainModel<T>> {
    if n == 0 {
        return Err(Error::Config("the number of steps must be at least 1".into()));
    }
    opts.validate()?;
    if x0.len() != model.dim() || lattice.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: x0.len().min(lattice.dim()) });
    }
    model.check_at(x0)?;
    let ctx = Context {
        model,
        lattice,
        steps: lattice.with_offset(vec![T::zero(); model.dim()])?,
        x0,
        dt: model.horizon / T::from_usize(n).unwrap(),
        opts,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.thread_count())
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?;

    let start = match lattice.point_to_coord(x0) {
        Ok(z) => StateKey::Lattice(z),
        Err(_) => StateKey::OffGrid,
    };
    let mut ids: HashMap<StateKey, usize> = HashMap::new();
    ids.insert(start.clone(), 0);
    let mut states = vec![start];
    let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new()];
    let mut meta: Vec<Option<RowMeta<T>>> = vec![None];
    let mut frontiers = vec![vec![0usize]];
    let mut solve_count = 0;

    for step in 1..=n {
        let current = frontiers.last().unwrap().clone();
        let keys: Vec<StateKey> = current.iter().map(|&id| states[id].clone()).collect();
        let solved: Vec<Result<SolvedRow<T>>> =
            pool.install(|| keys.par_iter().map(|k| ctx.solve(k, step - 1)).collect());
        solve_count += solved.len();
        let mut next = Vec::new();
        for (&id, row) in current.iter().zip(solved) {
            let row = row?;
            let mut entries = Vec::with_capacity(row.dests.len());
            for (z, w) in row.dests {
                let key = StateKey::Lattice(z);
                let dst = match ids.get(&key) {
                    Some(&d) => d,
                    None => {
                        let d = states.len();
                        ids.insert(key.clone(), d);
                        states.push(key);
                        rows.push(Vec::new());
                        meta.push(None);
                        next.push(d);
                        d
                    }
                };
                entries.push((dst, w));
            }
            rows[id] = entries;
            meta[id] = Some(row.meta);
        }
        if states.len() > opts.max_states {
            return Err(Error::StateLimit { limit: opts.max_states, step, states: states.len() });
        }
        frontiers.push(next);
    }

    let row_meta = meta
        .into_iter()
        .map(|m| {
            m.unwrap_or(RowMeta {
                mode: MatchMode::Exact,
                solver: RowSolver::Terminal,
                residual: T::zero(),
                step_first_reached: n,
            })
        })
        .collect();
    Ok(ChainModel {
        lattice: lattice.clone(),
        n,
        horizon: model.horizon,
        x0: x0.to_vec(),
        states,
        rows,
        row_meta,
        start_id: 0,
        frontiers,
        solve_count,
    })
}

/// One-step moment defects of a single state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StateConsistency<T> {
    pub id: usize,
    pub mode: MatchMode,
    /// `‖E[ΔX|x] − μ(x)Δt‖`.
    pub first: T,
    /// `‖E[ΔX|x]/Δt − μ(x)‖`.
    pub first_scaled: T,
    /// `‖E[ΔX⊗²|x] − μμᵀΔt² − ΣΔt‖_F`.
    pub second: T,
    /// `‖E[ΔX⊗²|x]/Δt − μμᵀΔt − Σ‖_F`.
    pub second_scaled: T,
    /// Squared residual over the mean and upper-triangle components, the
    /// quantity stored in the row metadata.
    pub squared_residual: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ConsistencyReport<T> {
    pub states: Vec<StateConsistency<T>>,
    pub max_first: T,
    pub max_first_scaled: T,
    pub max_second: T,
    pub max_second_scaled: T,
    pub max_exact_first_scaled: T,
    pub max_exact_second_scaled: T,
}

/// Local consistency of every solved row against `model`.
pub fn local_consistency_report<T: Real>(chain: &ChainModel<T>, model: &SDEModel<T>) -> Result<ConsistencyReport<T>> {
    local_consistency_report_with(chain, model, |x| x.to_vec())
}

/// Like [`local_consistency_report`] with chain states sent through
/// `state_map` first, for a chain of `X` checked against a model of `f(X)`.
pub fn local_consistency_report_with<T: Real>(
    chain: &ChainModel<T>,
    model: &SDEModel<T>,
    state_map: impl Fn(&[T]) -> Vec<T>,
) -> Result<ConsistencyReport<T>> {
    let dt = chain.dt();
    let d = model.dim();
    let map = MomentMap::MeanAndSecond { dim: d };
    let mut out = Vec::new();
    for id in 0..chain.num_states() {
        if chain.is_terminal(id) {
            continue;
        }
        let x = state_map(&chain.state_point(id));
        model.check_at(&x)?;
        let mu = model.drift(&x);
        let sigma = model.sigma_sq(&x);
        let mut incs = Vec::new();
        let mut ws = Vec::new();
        for &(dst, p) in &chain.rows[id] {
            let y = state_map(&chain.state_point(dst));
            incs.push(y.iter().zip(&x).map(|(&a, &b)| a - b).collect::<Vec<T>>());
            ws.push(p);
        }
        let mut mean = vec![T::zero(); d];
        let mut second = Matrix::zeros(d, d);
        for (y, &w) in incs.iter().zip(&ws) {
            for i in 0..d {
                mean[i] = mean[i] + w * y[i];
            }
            second = second.add(&Matrix::outer(y).scale(w));
        }
        let a: Vec<T> = mu.iter().map(|&v| v * dt).collect();
        let first_diff: Vec<T> = mean.iter().zip(&a).map(|(&m, &t)| m - t).collect();
        let raw = Matrix::outer(&a).add(&sigma.scale(dt));
        let second_diff = second.sub(&raw);
        let goal = map.target(&a, &raw);
        out.push(StateConsistency {
            id,
            mode: chain.row_meta[id].mode,
            first: norm2(&first_diff),
            first_scaled: norm2(&first_diff) / dt,
            second: second_diff.frobenius(),
            second_scaled: second_diff.frobenius() / dt,
            squared_residual: moment_residual(&incs, &ws, &goal, map),
        });
    }
    let max = |f: &dyn Fn(&StateConsistency<T>) -> Option<T>| out.iter().filter_map(f).fold(T::zero(), T::max);
    let exact = |s: &StateConsistency<T>| s.mode == MatchMode::Exact;
    Ok(ConsistencyReport {
        max_first: max(&|s| Some(s.first)),
        max_first_scaled: max(&|s| Some(s.first_scaled)),
        max_second: max(&|s| Some(s.second)),
        max_second_scaled: max(&|s| Some(s.second_scaled)),
        max_exact_first_scaled: max(&|s| exact(s).then_some(s.first_scaled)),
        max_exact_second_scaled: max(&|s| exact(s).then_some(s.second_scaled)),
        states: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::{brownian_motion, builtin, BuiltinName};

    fn walk_opts(gamma: f64) -> BuildOptions {
        BuildOptions { gamma_override: Some(gamma), threads: Some(1), ..Default::default() }
    }

    #[test]
    fn lattice_step_examples() {
        let opts = BuildOptions::default();
        let bm = brownian_motion(0.0f64, 1.0);
        assert!((select_lattice(&bm, 100, &opts).unwrap().gamma() - 0.2).abs() < 1e-15);
        let flat = brownian_motion(0.0f64, 0.0);
        assert!((select_lattice(&flat, 16, &opts).unwrap().gamma() - 0.125).abs() < 1e-15);
        let toy = builtin::<f64>(BuiltinName::Toy2d).model;
        assert!((select_lattice(&toy, 3, &opts).unwrap().gamma() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn missing_traits_are_config_errors() {
        let m = SDEModel::from_fns(1, 1, |_: &[f64]| vec![0.0], |_: &[f64]| Matrix::identity(1)).unwrap();
        assert!(matches!(select_lattice(&m, 4, &BuildOptions::default()), Err(Error::Config(_))));
        let m3 = SDEModel::from_fns(3, 3, |_: &[f64]| vec![0.0; 3], |_: &[f64]| Matrix::identity(3)).unwrap();
        assert!(matches!(select_lattice(&m3, 4, &BuildOptions::default()), Err(Error::Config(_))));
    }

    #[test]
    fn brownian_rows_and_support_growth() {
        let chain = build_chain(&brownian_motion(0.0f64, 1.0), 4, &[0.0], &walk_opts(0.5)).unwrap();
        chain.validate(1e-12).unwrap();
        let row = &chain.rows[chain.start_id];
        let mut atoms: Vec<(i64, f64)> = row
            .iter()
            .map(|&(d, p)| match &chain.states[d] {
                StateKey::Lattice(z) => (z.0[0], p),
                StateKey::OffGrid => unreachable!(),
            })
            .collect();
        atoms.sort_by_key(|a| a.0);
        assert_eq!(atoms.iter().map(|a| a.0).collect::<Vec<_>>(), vec![-2, 0, 2]);
        assert!((atoms[0].1 - 0.125).abs() < 1e-15 && (atoms[1].1 - 0.75).abs() < 1e-15);
        for (i, s) in chain.supports().iter().enumerate() {
            assert_eq!(s.len(), 2 * i + 1);
        }
    }

    #[test]
    fn states_are_solved_once() {
        let chain = build_chain(&brownian_motion(0.0, 1.0), 12, &[0.0], &BuildOptions::default()).unwrap();
        let solved = (0..chain.num_states()).filter(|&i| !chain.is_terminal(i)).count();
        assert_eq!(chain.solve_count, solved);
        assert_eq!(chain.num_states(), 2 * 12 + 1);
    }

    #[test]
    fn off_grid_start_lands_on_the_lattice() {
        let chain = build_chain(&brownian_motion(0.1, 1.0), 8, &[0.37], &BuildOptions::default()).unwrap();
        assert_eq!(chain.states[chain.start_id], StateKey::OffGrid);
        chain.validate(1e-12).unwrap();
        let rep = local_consistency_report(&chain, &brownian_motion(0.1, 1.0)).unwrap();
        assert!(rep.max_exact_first_scaled < 1e-9, "{rep:?}");
        assert!(rep.max_exact_second_scaled < 1e-9);
    }

    #[test]
    fn exact_only_rejects_fallback_rows() {
        let flat = brownian_motion(0.3, 0.0);
        let opts = BuildOptions { mode: BuildMode::ExactOnly, ..Default::default() };
        assert!(matches!(build_chain(&flat, 4, &[0.0], &opts), Err(Error::Row { .. })));
        let opts = BuildOptions::default();
        let chain = build_chain(&flat, 4, &[0.0], &opts).unwrap();
        chain.validate(1e-10).unwrap();
    }

    #[test]
    fn fallback_rows_store_their_residual() {
        let bm = brownian_motion(0.2f64, 1.0);
        let opts = BuildOptions { mode: BuildMode::FallbackOnly, ..Default::default() };
        let chain = build_chain(&bm, 3, &[0.0], &opts).unwrap();
        let rep = local_consistency_report(&chain, &bm).unwrap();
        for s in &rep.states {
            let stored = chain.row_meta[s.id].residual;
            assert!((s.squared_residual - stored).abs() <= 1e-12 + 1e-6 * stored);
        }
        assert!(chain.approx_rows() > 0);
    }

    #[test]
    fn state_limit_aborts() {
        let opts = BuildOptions { max_states: 5, ..Default::default() };
        let err = build_chain(&brownian_motion(0.0, 1.0), 10, &[0.0], &opts).unwrap_err();
        assert!(matches!(err, Error::StateLimit { limit: 5, .. }));
    }

    #[test]
    fn thread_count_does_not_change_the_chain() {
        let toy = builtin::<f64>(BuiltinName::Toy2d);
        let one = build_chain(&toy.model, 5, &toy.x0, &BuildOptions { threads: Some(1), ..Default::default() }).unwrap();
        let three = build_chain(&toy.model, 5, &toy.x0, &BuildOptions { threads: Some(3), ..Default::default() }).unwrap();
        assert_eq!(one, three);
    }

    #[test]
    fn fixed_frame_uses_the_eigenlattice() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let q = Matrix::from_rows(&[vec![h, -h], vec![h, h]]);
        let qc = q.clone();
        let model = SDEModel::from_fns(
            2,
            2,
            |_: &[f64]| vec![0.0, 0.0],
            move |x: &[f64]| qc.matmul(&Matrix::from_diag(&[2.0 + x[0].sin(), 1.0])),
        )
        .unwrap()
        .with_traits(crate::model::ModelTraits {
            fixed_frame: Some(q),
            lattice_constant: Some(1.0),
            ..Default::default()
        });
        let chain = build_chain(&model, 6, &[0.0, 0.0], &BuildOptions::default()).unwrap();
        chain.validate(1e-12).unwrap();
        assert_eq!(chain.approx_rows(), 0);
        let rep = local_consistency_report(&chain, &model).unwrap();
        assert!(rep.max_second_scaled < 1e-9, "{}", rep.max_second_scaled);
    }
}
