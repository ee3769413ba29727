//! Command implementations. Each command reads its inputs, writes its outputs
//! under an output directory and returns a JSON summary for stdout.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lattice_mc::analysis::{
    chain_expectation, convergence_study, euler_mc_estimates, optimal_stopping_value, relative_error_study,
    state_growth_report, ConvergenceReport, McConfig, Reference,
};
use lattice_mc::builder::scheme_constant;
use lattice_mc::{build_chain, local_consistency_report, BuildOptions, ChainModel, RowSolver};
use serde::Serialize;

use crate::config::{ModelConfig, Resolved};
use crate::error::{io_err, CliError};
use crate::export::{write_export, ExportFormat};

pub const DEFAULT_NS: [usize; 5] = [16, 32, 64, 128, 256];
pub const RELERR_NS: [usize; 3] = [10, 20, 40];

/// Where the model comes from: a JSON file or a builtin name.
#[derive(Clone, Debug)]
pub enum ModelSource {
    File(PathBuf),
    Builtin(String),
}

impl ModelSource {
    pub fn load(&self) -> Result<Resolved, CliError> {
        let cfg = match self {
            ModelSource::File(p) => ModelConfig::load(p)?,
            ModelSource::Builtin(name) => ModelConfig { builtin: Some(name.clone()), ..Default::default() },
        };
        cfg.resolve()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Convergence,
    Growth,
    Stopping,
    Consistency,
    Relerr,
}

impl FromStr for StudyKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "convergence" => Ok(StudyKind::Convergence),
            "growth" => Ok(StudyKind::Growth),
            "stopping" => Ok(StudyKind::Stopping),
            "consistency" => Ok(StudyKind::Consistency),
            "relerr" | "rel-error" | "rel_error" => Ok(StudyKind::Relerr),
            _ => Err(CliError::Config(format!(
                "unknown study `{s}` (expected convergence, growth, stopping, consistency or relerr)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StudyParams {
    pub kind: StudyKind,
    /// Chain size for single-chain studies.
    pub n: usize,
    /// Chain sizes for convergence and relative-error studies; falls back to
    /// the config and then to a per-study default.
    pub ns: Option<Vec<usize>>,
    pub seed: u64,
    pub mc_steps: usize,
    pub mc_paths: usize,
}

/// Summary of a built chain.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BuildReport {
    pub model: String,
    pub n: usize,
    pub dim: usize,
    pub states: usize,
    pub transitions: usize,
    pub exact_rows: usize,
    pub approx_rows: usize,
    pub terminal_rows: usize,
    pub solve_count: usize,
    pub max_row_support: usize,
    /// Largest squared moment residual over all rows.
    pub max_residual: f64,
    pub gamma: f64,
    pub dt: f64,
    /// `n·γ²`.
    pub scheme_constant: f64,
    pub solvers: SolverTally,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SolverTally {
    pub zero_mean_1d: usize,
    pub moments_1d: usize,
    pub zero_mean_2d: usize,
    pub moments_2d: usize,
    pub eigenlattice: usize,
    pub fallback: usize,
}

pub fn build_report(name: &str, chain: &ChainModel<f64>) -> BuildReport {
    let mut tally = SolverTally::default();
    for m in &chain.row_meta {
        match m.solver {
            RowSolver::ZeroMean1D => tally.zero_mean_1d += 1,
            RowSolver::Moments1D => tally.moments_1d += 1,
            RowSolver::ZeroMean2D => tally.zero_mean_2d += 1,
            RowSolver::Moments2D => tally.moments_2d += 1,
            RowSolver::Eigenlattice => tally.eigenlattice += 1,
            RowSolver::Fallback => tally.fallback += 1,
            RowSolver::Terminal => {}
        }
    }
    BuildReport {
        model: name.to_string(),
        n: chain.n,
        dim: chain.dim(),
        states: chain.num_states(),
        transitions: chain.num_transitions(),
        exact_rows: chain.exact_rows(),
        approx_rows: chain.approx_rows(),
        terminal_rows: (0..chain.num_states()).filter(|&i| chain.is_terminal(i)).count(),
        solve_count: chain.solve_count,
        max_row_support: chain.max_row_support(),
        max_residual: chain.row_meta.iter().map(|m| m.residual).fold(0.0, f64::max),
        gamma: chain.gamma(),
        dt: chain.dt(),
        scheme_constant: scheme_constant(chain.n, chain.gamma()),
        solvers: tally,
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn load_chain(path: &Path) -> Result<ChainModel<f64>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let chain: ChainModel<f64> =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: not a chain artifact: {e}", path.display())))?;
    chain.validate(1e-9).map_err(CliError::Build)?;
    Ok(chain)
}

/// Builds the chain and writes `chain.json` and `report.json` into `out`.
pub fn run_build(source: &ModelSource, n: usize, opts: &BuildOptions, out: &Path) -> Result<BuildReport, CliError> {
    let r = source.load()?;
    opts.validate()?;
    let chain = build_chain(&r.model, n, &r.x0, opts)?;
    let report = build_report(&r.name, &chain);
    ensure_dir(out)?;
    let text = serde_json::to_string(&chain).map_err(|e| CliError::Io(e.to_string()))?;
    write_file(&out.join("chain.json"), &text)?;
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Serialize)]
pub struct ExportSummary {
    pub files: Vec<PathBuf>,
    pub states: usize,
    pub transitions: usize,
}

pub fn run_export(chain_path: &Path, format: ExportFormat, out: &Path) -> Result<ExportSummary, CliError> {
    let chain = load_chain(chain_path)?;
    let files = write_export(&chain, format, out)?;
    Ok(ExportSummary { files, states: chain.num_states(), transitions: crate::export::sorted_entries(&chain).len() })
}

/// Summary of an artifact plus the expectation of each coordinate at the
/// last step.
#[derive(Serialize)]
pub struct InspectSummary {
    #[serde(flatten)]
    pub report: BuildReport,
    pub terminal_mean: Vec<f64>,
    pub start: Vec<f64>,
}

pub fn run_inspect(chain_path: &Path) -> Result<InspectSummary, CliError> {
    let chain = load_chain(chain_path)?;
    let mut terminal_mean = Vec::new();
    for i in 0..chain.dim() {
        let f = lattice_mc::Functional::new("coord", move |x: &[f64]| x[i]);
        terminal_mean.push(chain_expectation(&chain, &f, chain.n)?);
    }
    Ok(InspectSummary { report: build_report("artifact", &chain), terminal_mean, start: chain.state_point(chain.start_id) })
}

pub const STUDY_HELP: &str = "\
Studies and their CSV columns:
  convergence  convergence.csv: functional,n,chain_value,reference,error
  growth       growth.csv:      step,frontier,cumulative,support
  stopping     stopping.csv:    step,state,value,stop
  consistency  consistency.csv: id,mode,first,first_scaled,second,second_scaled,squared_residual
  relerr       relerr.csv:      quantity,n,chain_value,reference,reference_stderr,rel_error
Each study also writes <study>.json with the full report.";

/// Runs a study and writes `<study>.json` and `<study>.csv` into `out`.
pub fn run_study(source: &ModelSource, params: &StudyParams, opts: &BuildOptions, out: &Path) -> Result<serde_json::Value, CliError> {
    let r = source.load()?;
    opts.validate()?;
    ensure_dir(out)?;
    let (json, csv) = match params.kind {
        StudyKind::Convergence => convergence(&r, params, opts)?,
        StudyKind::Growth => {
            let chain = build_chain(&r.model, params.n, &r.x0, opts)?;
            let g = state_growth_report(&chain);
            let mut csv = String::from("step,frontier,cumulative,support\n");
            for i in 0..g.cumulative.len() {
                writeln!(csv, "{i},{},{},{}", g.frontier_sizes[i], g.cumulative[i], g.support_sizes[i]).unwrap();
            }
            (serde_json::json!({ "model": r.name, "n": params.n, "growth": g }), csv)
        }
        StudyKind::Stopping => {
            let (k, g) = r
                .stopping
                .as_ref()
                .ok_or_else(|| CliError::Config(format!("model `{}` has no stopping problem configured", r.name)))?;
            let chain = build_chain(&r.model, params.n, &r.x0, opts)?;
            let s = optimal_stopping_value(&chain, k, g)?;
            let mut csv = String::from("step,state,value,stop\n");
            for (i, (vals, stops)) in s.values.iter().zip(&s.stop).enumerate() {
                for (&(id, v), &(_, st)) in vals.iter().zip(stops) {
                    writeln!(csv, "{i},{id},{v:e},{st}").unwrap();
                }
            }
            let stopped_now = s.stop[0].first().map(|&(_, b)| b);
            (
                serde_json::json!({
                    "model": r.name, "n": params.n, "running_cost": k.label, "payoff": g.label,
                    "value": s.value, "stop_at_start": stopped_now,
                }),
                csv,
            )
        }
        StudyKind::Consistency => {
            let chain = build_chain(&r.model, params.n, &r.x0, opts)?;
            let c = local_consistency_report(&chain, &r.model)?;
            let mut csv = String::from("id,mode,first,first_scaled,second,second_scaled,squared_residual\n");
            for s in &c.states {
                let mode = if s.mode == lattice_mc::MatchMode::Exact { "exact" } else { "approx" };
                writeln!(
                    csv,
                    "{},{mode},{:e},{:e},{:e},{:e},{:e}",
                    s.id, s.first, s.first_scaled, s.second, s.second_scaled, s.squared_residual
                )
                .unwrap();
            }
            let gamma = chain.gamma();
            (
                serde_json::json!({
                    "model": r.name, "n": params.n, "gamma": gamma,
                    "exact_rows": chain.exact_rows(), "approx_rows": chain.approx_rows(),
                    "max_first": c.max_first, "max_first_scaled": c.max_first_scaled,
                    "max_second": c.max_second, "max_second_scaled": c.max_second_scaled,
                    "max_exact_first_scaled": c.max_exact_first_scaled,
                    "max_exact_second_scaled": c.max_exact_second_scaled,
                }),
                csv,
            )
        }
        StudyKind::Relerr => {
            let ns = params.ns.clone().or_else(|| r.ns.clone()).unwrap_or_else(|| RELERR_NS.to_vec());
            let mc = McConfig::new(params.mc_steps, params.mc_paths, params.seed);
            let rep = relative_error_study(&r.model, &r.x0, &r.relerr_extras, &ns, &mc, opts)?;
            let mut csv = String::from("quantity,n,chain_value,reference,reference_stderr,rel_error\n");
            for q in &rep.quantities {
                for (j, &n) in rep.ns.iter().enumerate() {
                    let se = q.reference_stderr.map_or(String::new(), |s| format!("{s:e}"));
                    writeln!(csv, "{},{n},{:e},{:e},{se},{:e}", q.label, q.chain_values[j], q.reference, q.rel_errors[j]).unwrap();
                }
            }
            let non_increasing = rep.quantities.iter().filter(|q| q.non_increasing).count();
            (
                serde_json::json!({
                    "model": r.name, "report": rep,
                    "non_increasing": non_increasing, "quantities": rep.quantities.len(),
                }),
                csv,
            )
        }
    };
    let name = match params.kind {
        StudyKind::Convergence => "convergence",
        StudyKind::Growth => "growth",
        StudyKind::Stopping => "stopping",
        StudyKind::Consistency => "consistency",
        StudyKind::Relerr => "relerr",
    };
    write_json(&out.join(format!("{name}.json")), &json)?;
    write_file(&out.join(format!("{name}.csv")), &csv)?;
    Ok(json)
}

fn convergence(r: &Resolved, params: &StudyParams, opts: &BuildOptions) -> Result<(serde_json::Value, String), CliError> {
    if r.functionals.is_empty() {
        return Err(CliError::Config(format!("model `{}` has no functionals configured", r.name)));
    }
    let ns = params.ns.clone().or_else(|| r.ns.clone()).unwrap_or_else(|| DEFAULT_NS.to_vec());
    // functionals without a closed form share one set of Euler paths
    let missing: Vec<_> = r.functionals.iter().filter(|(_, v)| v.is_none()).map(|(f, _)| f.clone()).collect();
    let mc = McConfig::new(params.mc_steps, params.mc_paths, params.seed);
    let mut estimates = if missing.is_empty() {
        Vec::new()
    } else {
        euler_mc_estimates(&r.model, &missing, &r.x0, r.model.horizon, &mc)?
    }
    .into_iter();
    let mut reports: Vec<ConvergenceReport> = Vec::new();
    for (f, reference) in &r.functionals {
        let reference = match reference {
            Some(v) => Reference::ClosedForm(*v),
            None => Reference::Estimate(estimates.next().expect("one estimate per functional")),
        };
        let mut rep = convergence_study(&r.model, &r.x0, f, &ns, &reference, opts)?;
        if matches!(reference, Reference::Estimate(_)) {
            rep.provenance =
                format!("Euler Monte Carlo, {} steps, {} paths, seed {}", mc.steps, mc.paths, mc.seed);
        }
        reports.push(rep);
    }
    let mut csv = String::from("functional,n,chain_value,reference,error\n");
    for rep in &reports {
        for (j, &n) in rep.ns.iter().enumerate() {
            writeln!(csv, "{},{n},{:e},{:e},{:e}", rep.label, rep.chain_values[j], rep.reference, rep.errors[j]).unwrap();
        }
    }
    Ok((serde_json::json!({ "model": r.name, "studies": reports }), csv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn study_names_parse() {
        assert_eq!("growth".parse::<StudyKind>().unwrap(), StudyKind::Growth);
        assert_eq!("rel-error".parse::<StudyKind>().unwrap(), StudyKind::Relerr);
        assert!("speed".parse::<StudyKind>().is_err());
    }

    #[test]
    fn error_exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(CliError::Build(lattice_mc::Error::Config("x".into())).exit_code(), 2);
        assert_eq!(CliError::Build(lattice_mc::Error::InexactOnly).exit_code(), 3);
        assert_eq!(CliError::Io("x".into()).exit_code(), 4);
        let v: serde_json::Value = serde_json::from_str(&CliError::Io("gone".into()).to_json()).unwrap();
        assert_eq!(v["kind"], "io");
        assert_eq!(v["exit_code"], 4);
    }
}
