//! Transition-matrix export.
//!
//! * `triplets`: CSV lines `src,dst,prob` sorted by `(src, dst)`.
//! * `prism`: explicit-state files. The states file starts with the variable
//!   header `(z1,...,zd)` followed by `id:(z1,...,zd)` lines; the transitions
//!   file starts with `<num_states> <num_transitions>` and lists `src dst prob`
//!   in the same order as the triplets.
//!
//! Probabilities are written with 17 significant digits, which round-trips
//! every `f64`. Terminal states have no outgoing rows.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lattice_mc::{ChainModel, StateKey};

use crate::error::{io_err, CliError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Triplets,
    Prism,
}

impl FromStr for ExportFormat {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "triplets" => Ok(ExportFormat::Triplets),
            "prism" => Ok(ExportFormat::Prism),
            _ => Err(CliError::Config(format!("unknown export format `{s}` (expected triplets or prism)"))),
        }
    }
}

pub type Triplet = (usize, usize, f64);

/// Nonzero entries sorted by `(src, dst)`, with repeated destinations summed.
pub fn sorted_entries(chain: &ChainModel<f64>) -> Vec<Triplet> {
    let mut out = Vec::with_capacity(chain.num_transitions());
    for (src, row) in chain.rows.iter().enumerate() {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for &(dst, p) in row {
            *merged.entry(dst).or_insert(0.0) += p;
        }
        out.extend(merged.into_iter().map(|(dst, p)| (src, dst, p)));
    }
    out
}

fn prob(p: f64) -> String {
    format!("{p:.16e}")
}

pub fn triplets_text(chain: &ChainModel<f64>) -> String {
    let mut s = String::new();
    for (src, dst, p) in sorted_entries(chain) {
        writeln!(s, "{src},{dst},{}", prob(p)).unwrap();
    }
    s
}

pub fn prism_states_text(chain: &ChainModel<f64>) -> String {
    let d = chain.dim();
    let header: Vec<String> = (1..=d).map(|i| format!("z{i}")).collect();
    let mut s = format!("({})\n", header.join(","));
    for (id, key) in chain.states.iter().enumerate() {
        match key {
            StateKey::OffGrid => writeln!(s, "{id}:(start)").unwrap(),
            StateKey::Lattice(z) => {
                let zs: Vec<String> = z.0.iter().map(i64::to_string).collect();
                writeln!(s, "{id}:({})", zs.join(",")).unwrap();
            }
        }
    }
    s
}

pub fn prism_transitions_text(chain: &ChainModel<f64>) -> String {
    let entries = sorted_entries(chain);
    let mut s = format!("{} {}\n", chain.num_states(), entries.len());
    for (src, dst, p) in entries {
        writeln!(s, "{src} {dst} {}", prob(p)).unwrap();
    }
    s
}

fn bad(what: &str, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{what} line {}: {msg}", line + 1))
}

fn parse_num<N: FromStr>(tok: Option<&str>, what: &str, line: usize) -> Result<N, CliError> {
    tok.ok_or_else(|| bad(what, line, "missing field"))?.parse().map_err(|_| bad(what, line, "malformed number"))
}

pub fn parse_triplets(text: &str) -> Result<Vec<Triplet>, CliError> {
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            let mut it = l.split(',');
            let t = (parse_num(it.next(), "triplets", i)?, parse_num(it.next(), "triplets", i)?, parse_num(it.next(), "triplets", i)?);
            if it.next().is_some() {
                return Err(bad("triplets", i, "too many fields"));
            }
            Ok(t)
        })
        .collect()
}

/// Parses a transitions file into `(num_states, entries)`.
pub fn parse_prism_transitions(text: &str) -> Result<(usize, Vec<Triplet>), CliError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("transitions", 0, "missing header"))?;
    let mut h = header.split(' ');
    let states: usize = parse_num(h.next(), "transitions", 0)?;
    let count: usize = parse_num(h.next(), "transitions", 0)?;
    let entries = lines
        .enumerate()
        .map(|(i, l)| {
            let mut it = l.split(' ');
            Ok((
                parse_num(it.next(), "transitions", i + 1)?,
                parse_num(it.next(), "transitions", i + 1)?,
                parse_num(it.next(), "transitions", i + 1)?,
            ))
        })
        .collect::<Result<Vec<Triplet>, CliError>>()?;
    if entries.len() != count {
        return Err(CliError::Config(format!("transitions header announces {count} entries, found {}", entries.len())));
    }
    if entries.iter().any(|&(s, d, _)| s >= states || d >= states) {
        return Err(CliError::Config("transition refers to a state beyond the header count".into()));
    }
    Ok((states, entries))
}

/// Parses a states file into per-state labels: `Some(coords)` for lattice
/// states, `None` for the off-lattice start.
pub fn parse_prism_states(text: &str) -> Result<Vec<Option<Vec<i64>>>, CliError> {
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate().skip(1) {
        let (id, rest) = l.split_once(':').ok_or_else(|| bad("states", i, "expected `id:(...)`"))?;
        let id: usize = id.parse().map_err(|_| bad("states", i, "malformed id"))?;
        if id != out.len() {
            return Err(bad("states", i, "ids must be consecutive"));
        }
        let inner = rest.strip_prefix('(').and_then(|r| r.strip_suffix(')')).ok_or_else(|| bad("states", i, "expected parentheses"))?;
        if inner == "start" {
            out.push(None);
        } else {
            let z = inner.split(',').map(|t| t.parse().map_err(|_| bad("states", i, "malformed coordinate"))).collect::<Result<_, _>>()?;
            out.push(Some(z));
        }
    }
    Ok(out)
}

/// Writes the export files into `dir` and returns their paths.
pub fn write_export(chain: &ChainModel<f64>, format: ExportFormat, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let files = match format {
        ExportFormat::Triplets => vec![(dir.join("chain.csv"), triplets_text(chain))],
        ExportFormat::Prism => {
            vec![(dir.join("chain.sta"), prism_states_text(chain)), (dir.join("chain.tra"), prism_transitions_text(chain))]
        }
    };
    for (path, text) in &files {
        std::fs::write(path, text).map_err(|e| io_err(path, e))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
