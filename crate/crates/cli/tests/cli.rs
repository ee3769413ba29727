use std::collections::HashMap;
use std::path::Path;
use std::process::Command;

use lattice_mc::{BuildOptions, ChainModel, LatticeCoord, LatticeSpec, MatchMode, RowMeta, RowSolver, StateKey};
use lattice_mc_cli::commands::{load_chain, run_build, run_export, run_study, ModelSource, StudyKind, StudyParams};
use lattice_mc_cli::export::{
    parse_prism_states, parse_prism_transitions, parse_triplets, prism_transitions_text, sorted_entries, triplets_text,
    ExportFormat,
};
use lattice_mc_cli::expr::parse_expression;
use proptest::prelude::*;

// ---- expressions against a reference tree evaluator ----

#[derive(Clone, Debug)]
enum Ref {
    Num(f64),
    Var(usize),
    Neg(Box<Ref>),
    Bin(char, Box<Ref>, Box<Ref>),
    Call(&'static str, Vec<Ref>),
}

fn prec(e: &Ref) -> u8 {
    match e {
        Ref::Bin('+' | '-', ..) => 1,
        Ref::Bin('*' | '/', ..) => 2,
        Ref::Neg(_) => 3,
        Ref::Bin('^', ..) => 4,
        _ => 5,
    }
}

/// Prints with as few parentheses as the precedence rules allow.
fn render(e: &Ref) -> String {
    let wrap = |e: &Ref, need: bool| if need { format!("({})", render(e)) } else { render(e) };
    match e {
        Ref::Num(v) => format!("{v:?}"),
        Ref::Var(i) => format!("x{}", i + 1),
        Ref::Neg(a) => format!("-{}", wrap(a, prec(a) < 3)),
        Ref::Bin('^', l, r) => format!("{}^{}", wrap(l, prec(l) <= 4), wrap(r, prec(r) < 3)),
        Ref::Bin(op, l, r) => {
            let p = prec(e);
            format!("{} {op} {}", wrap(l, prec(l) < p), wrap(r, prec(r) <= p))
        }
        Ref::Call(f, args) => format!("{f}({})", args.iter().map(render).collect::<Vec<_>>().join(", ")),
    }
}

fn reference_eval(e: &Ref, x: &[f64]) -> Option<f64> {
    Some(match e {
        Ref::Num(v) => *v,
        Ref::Var(i) => x[*i],
        Ref::Neg(a) => -reference_eval(a, x)?,
        Ref::Bin(op, l, r) => {
            let (a, b) = (reference_eval(l, x)?, reference_eval(r, x)?);
            match op {
                '+' => a + b,
                '-' => a - b,
                '*' => a * b,
                '/' => a / b,
                _ => a.powf(b),
            }
        }
        Ref::Call(f, args) => {
            let a = reference_eval(&args[0], x)?;
            match *f {
                "sin" => a.sin(),
                "cos" => a.cos(),
                "exp" => a.exp(),
                "log" if a <= 0.0 => return None,
                "log" => a.ln(),
                "sqrt" if a < 0.0 => return None,
                "sqrt" => a.sqrt(),
                "abs" => a.abs(),
                "min" => a.min(reference_eval(&args[1], x)?),
                _ => a.max(reference_eval(&args[1], x)?),
            }
        }
    })
}

fn arb_ref(dim: usize) -> impl Strategy<Value = Ref> {
    let leaf = prop_oneof![
        (0.0f64..100.0).prop_map(Ref::Num),
        (0u32..20).prop_map(|k| Ref::Num(k as f64)),
        (0..dim).prop_map(Ref::Var),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Ref::Neg(Box::new(a))),
            (prop::sample::select(vec!['+', '-', '*', '/', '^']), inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| Ref::Bin(op, Box::new(l), Box::new(r))),
            (prop::sample::select(vec!["sin", "cos", "exp", "log", "sqrt", "abs"]), inner.clone())
                .prop_map(|(f, a)| Ref::Call(f, vec![a])),
            (prop::sample::select(vec!["min", "max"]), inner.clone(), inner)
                .prop_map(|(f, a, b)| Ref::Call(f, vec![a, b])),
        ]
    })
}

fn same(a: f64, b: f64) -> bool {
    if a.is_nan() || b.is_nan() {
        return a.is_nan() && b.is_nan();
    }
    if a == b {
        return true;
    }
    (a - b).abs() <= 4.0 * f64::EPSILON * a.abs().max(b.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn expressions_agree_with_reference(e in arb_ref(3), x in prop::collection::vec(-3.0f64..3.0, 3)) {
        let src = render(&e);
        let parsed = parse_expression(&src, 3).map_err(|err| TestCaseError::fail(format!("{src}: {err}")))?;
        match (parsed.eval(&x), reference_eval(&e, &x)) {
            (Ok(a), Some(b)) => prop_assert!(same(a, b), "{src}: {a} vs {b}"),
            (Err(_), None) => {}
            (a, b) => prop_assert!(false, "{src}: {a:?} vs {b:?}"),
        }
        let again = parse_expression(&parsed.to_string(), 3).unwrap();
        prop_assert_eq!(again, parsed);
    }
}

// ---- export ----

fn meta(solver: RowSolver, step: usize) -> RowMeta<f64> {
    RowMeta { mode: MatchMode::Exact, solver, residual: 0.0, step_first_reached: step }
}

/// `n`-step simple random walk on ℤ from 0, with states merged by coordinate.
fn walk_chain(n: usize) -> ChainModel<f64> {
    let mut ids: HashMap<i64, usize> = HashMap::new();
    let mut states = vec![StateKey::Lattice(LatticeCoord(vec![0]))];
    let mut coords = vec![0i64];
    ids.insert(0, 0);
    let mut frontiers = vec![vec![0]];
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new()];
    let mut metas = vec![meta(RowSolver::Terminal, 0)];
    let mut current = vec![0usize];
    for step in 1..=n {
        let mut next = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for &s in &current {
            let mut row = Vec::new();
            for dz in [-1i64, 1] {
                let z = coords[s] + dz;
                let id = *ids.entry(z).or_insert_with(|| {
                    states.push(StateKey::Lattice(LatticeCoord(vec![z])));
                    coords.push(z);
                    rows.push(Vec::new());
                    metas.push(meta(RowSolver::Terminal, step));
                    next.push(states.len() - 1);
                    states.len() - 1
                });
                seen.insert(id);
                row.push((id, 0.5));
            }
            rows[s] = row;
            metas[s] = meta(RowSolver::ZeroMean1D, metas[s].step_first_reached);
        }
        frontiers.push(next);
        let mut c: Vec<usize> = seen.into_iter().collect();
        c.sort_unstable();
        current = c;
    }
    let solve_count = metas.iter().filter(|m| m.solver != RowSolver::Terminal).count();
    ChainModel {
        lattice: LatticeSpec::axis_aligned(1.0, 1).unwrap(),
        n,
        horizon: n as f64,
        x0: vec![0.0],
        states,
        rows,
        row_meta: metas,
        start_id: 0,
        frontiers,
        solve_count,
    }
}

#[test]
fn one_row_chain_exports() {
    let chain = walk_chain(1);
    chain.validate(1e-12).unwrap();
    let triplets = triplets_text(&chain);
    assert_eq!(triplets, "0,1,5.0000000000000000e-1\n0,2,5.0000000000000000e-1\n");
    let tra = prism_transitions_text(&chain);
    assert_eq!(tra.lines().next().unwrap(), "3 2");
}

#[test]
fn two_step_walk_merges_states() {
    let chain = walk_chain(2);
    assert_eq!(chain.num_states(), 5);
    assert_eq!(sorted_entries(&chain).len(), 6);
    assert!(prism_transitions_text(&chain).starts_with("5 6\n"));
}

fn builtin_chain(name: &str, n: usize) -> ChainModel<f64> {
    let r = ModelSource::Builtin(name.into()).load().unwrap();
    lattice_mc::build_chain(&r.model, n, &r.x0, &BuildOptions::default()).unwrap()
}

fn check_round_trip(chain: &ChainModel<f64>, dir: &Path) {
    let entries = sorted_entries(chain);
    let files = lattice_mc_cli::export::write_export(chain, ExportFormat::Triplets, dir).unwrap();
    let text = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(parse_triplets(&text).unwrap(), entries);
    let files = lattice_mc_cli::export::write_export(chain, ExportFormat::Prism, dir).unwrap();
    let sta = std::fs::read_to_string(&files[0]).unwrap();
    let tra = std::fs::read_to_string(&files[1]).unwrap();
    let (ns, parsed) = parse_prism_transitions(&tra).unwrap();
    assert_eq!(ns, chain.num_states());
    assert_eq!(parsed, entries);
    let labels = parse_prism_states(&sta).unwrap();
    assert_eq!(labels.len(), chain.num_states());
    for (key, label) in chain.states.iter().zip(&labels) {
        match (key, label) {
            (StateKey::Lattice(z), Some(l)) => assert_eq!(&z.0, l),
            (StateKey::OffGrid, None) => {}
            other => panic!("label mismatch {other:?}"),
        }
    }
    let mut sums = vec![0.0; chain.num_states()];
    for &(s, _, p) in &parsed {
        sums[s] += p;
    }
    for (id, s) in sums.iter().enumerate() {
        if !chain.is_terminal(id) {
            assert!((s - 1.0).abs() < 1e-12, "row {id} sums to {s}");
        }
    }
}

#[test]
fn exports_round_trip_on_builtins() {
    let dir = tempfile::tempdir().unwrap();
    for (name, n) in [("bm", 16), ("gbm", 8), ("toy2d", 5), ("heston_mod", 6)] {
        check_round_trip(&builtin_chain(name, n), dir.path());
    }
}

#[test]
fn artifact_reexport_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run_build(&ModelSource::Builtin("toy2d".into()), 6, &BuildOptions::default(), d).unwrap();
    let chain = load_chain(&d.join("chain.json")).unwrap();
    assert_eq!(chain, builtin_chain("toy2d", 6));
    for format in [ExportFormat::Triplets, ExportFormat::Prism] {
        run_export(&d.join("chain.json"), format, &d.join("a")).unwrap();
        run_export(&d.join("chain.json"), format, &d.join("b")).unwrap();
    }
    for f in ["chain.csv", "chain.sta", "chain.tra"] {
        assert_eq!(std::fs::read(d.join("a").join(f)).unwrap(), std::fs::read(d.join("b").join(f)).unwrap());
    }
}

// ---- reports and determinism ----

#[test]
fn build_reports_for_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let bm = run_build(&ModelSource::Builtin("bm".into()), 16, &BuildOptions::default(), dir.path()).unwrap();
    assert_eq!(bm.states, 33);
    assert_eq!(bm.approx_rows, 0);
    assert_eq!(bm.exact_rows + bm.terminal_rows, bm.states);
    let toy = run_build(&ModelSource::Builtin("toy2d".into()), 3, &BuildOptions::default(), dir.path()).unwrap();
    assert!((toy.gamma - 1.0 / 3.0).abs() < 1e-15);
    let heston = run_build(&ModelSource::Builtin("heston_mod".into()), 10, &BuildOptions::default(), dir.path()).unwrap();
    assert!(heston.approx_rows > 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(v["approx_rows"].as_u64().unwrap() as usize, heston.approx_rows);
}

#[test]
fn builds_and_studies_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let src = ModelSource::Builtin("heston_mod".into());
    let one = BuildOptions { threads: Some(1), ..Default::default() };
    let four = BuildOptions { threads: Some(4), ..Default::default() };
    run_build(&src, 8, &one, a.path()).unwrap();
    run_build(&src, 8, &four, b.path()).unwrap();
    let params = StudyParams { kind: StudyKind::Relerr, n: 0, ns: Some(vec![4, 8]), seed: 5, mc_steps: 50, mc_paths: 5000 };
    run_study(&src, &params, &one, a.path()).unwrap();
    run_study(&src, &params, &four, b.path()).unwrap();
    for f in ["chain.json", "report.json", "relerr.json", "relerr.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn studies_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let p = |kind, n| StudyParams { kind, n, ns: None, seed: 1, mc_steps: 100, mc_paths: 1000 };
    let g = run_study(&ModelSource::Builtin("toy2d".into()), &p(StudyKind::Growth, 20), &BuildOptions::default(), d).unwrap();
    assert!(g["growth"]["fitted_exponent"].as_f64().unwrap() > 1.0);
    assert_eq!(std::fs::read_to_string(d.join("growth.csv")).unwrap().lines().count(), 22);
    let c = run_study(&ModelSource::Builtin("bm".into()), &p(StudyKind::Consistency, 32), &BuildOptions::default(), d).unwrap();
    assert!(c["max_first_scaled"].as_f64().unwrap() <= 1e-10);
    assert!(c["max_second_scaled"].as_f64().unwrap() <= 1e-10);
    let s = run_study(&ModelSource::Builtin("bm".into()), &p(StudyKind::Stopping, 16), &BuildOptions::default(), d).unwrap();
    assert!(s["value"].as_f64().unwrap() < 0.0);
    let mut q = p(StudyKind::Convergence, 0);
    q.ns = Some(vec![8, 16, 32]);
    let v = run_study(&ModelSource::Builtin("bm".into()), &q, &BuildOptions::default(), d).unwrap();
    let first = &v["studies"][0];
    assert_eq!(first["provenance"], "closed form");
    assert!(first["rate"].as_f64().unwrap() > 0.35);
}

#[test]
fn custom_config_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("ou.json");
    std::fs::write(
        &cfg,
        r#"{"dim": 1, "drift": ["-x1"], "diffusion": [["1 + 0.5*cos(x1)"]],
            "traits": {"sigma_min": 0.5}, "x0": [0.3], "horizon": 1.0,
            "functionals": [{"label": "x1", "expr": "x1", "reference": 0.11036383235143269}],
            "stopping": {"payoff": "-max(-x1, 0)"}}"#,
    )
    .unwrap();
    let src = ModelSource::File(cfg);
    let rep = run_build(&src, 12, &BuildOptions::default(), dir.path()).unwrap();
    assert_eq!(rep.approx_rows, 0);
    let chain = load_chain(&dir.path().join("chain.json")).unwrap();
    assert_eq!(chain.states[chain.start_id], StateKey::OffGrid);
    check_round_trip(&chain, dir.path());
    let st = StudyParams { kind: StudyKind::Stopping, n: 12, ns: None, seed: 1, mc_steps: 10, mc_paths: 10 };
    run_study(&src, &st, &BuildOptions::default(), dir.path()).unwrap();
}

// ---- binary exit codes ----

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lattice-mc"))
}

#[test]
fn exit_codes_and_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let ok = bin().args(["build", "--builtin", "bm", "--n", "4", "--out", out]).output().unwrap();
    assert!(ok.status.success());
    let report: serde_json::Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["states"], 9);

    let cfg = bin().args(["build", "--builtin", "nope", "--n", "4", "--out", out]).output().unwrap();
    assert_eq!(cfg.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&cfg.stderr).unwrap();
    assert_eq!(err["kind"], "config");

    let io = bin().args(["inspect", "--chain", "/nonexistent/chain.json"]).output().unwrap();
    assert_eq!(io.status.code(), Some(4));

    let build = bin().args(["build", "--builtin", "heston_mod", "--n", "4", "--mode", "exact-only", "--out", out]).output().unwrap();
    assert_eq!(build.status.code(), Some(3));

    let fmt = bin().args(["export", "--chain", &format!("{out}/chain.json"), "--format", "dot", "--out", out]).output().unwrap();
    assert_eq!(fmt.status.code(), Some(2));
}
