//! The built Markov chain: indexed states, sparse transition rows and the
//! provenance of every row.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticeCoord, LatticeSpec, MatchMode};
use crate::scalar::Real;

/// Key of a chain state. The start may sit off the lattice, in which case it
/// gets the reserved [`StateKey::OffGrid`] key and its point is stored in
/// [`ChainModel::x0`].
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKey {
    OffGrid,
    Lattice(LatticeCoord),
}

impl std::fmt::Display for StateKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StateKey::OffGrid => write!(f, "start"),
            StateKey::Lattice(z) => write!(f, "{z}"),
        }
    }
}

/// How a row was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowSolver {
    ZeroMean1D,
    Moments1D,
    ZeroMean2D,
    Moments2D,
    Eigenlattice,
    Fallback,
    /// First reached at the last step; never solved.
    Terminal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RowMeta<T> {
    pub mode: MatchMode,
    pub solver: RowSolver,
    /// Squared moment residual of the row in increment units (mean plus the
    /// upper triangle of the second moment).
    pub residual: T,
    pub step_first_reached: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ChainModel<T> {
    pub lattice: LatticeSpec<T>,
    pub n: usize,
    pub horizon: T,
    pub x0: Vec<T>,
    pub states: Vec<StateKey>,
    /// `rows[id]` lists `(destination id, probability)`; empty for terminal
    /// states.
    pub rows: Vec<Vec<(usize, T)>>,
    pub row_meta: Vec<RowMeta<T>>,
    pub start_id: usize,
    /// State ids first discovered at each step, in discovery order
    /// (`frontiers[0]` is the start).
    pub frontiers: Vec<Vec<usize>>,
    /// Number of moment problems solved while building.
    pub solve_count: usize,
}

impl<T: Real> ChainModel<T> {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn gamma(&self) -> T {
        self.lattice.gamma()
    }

    /// Time step `T/n`.
    pub fn dt(&self) -> T {
        self.horizon / T::from_usize(self.n).unwrap()
    }

    pub fn state_point(&self, id: usize) -> Vec<T> {
        match &self.states[id] {
            StateKey::OffGrid => self.x0.clone(),
            StateKey::Lattice(z) => self.lattice.coord_to_point(z).expect("state coordinates match the lattice"),
        }
    }

    pub fn is_terminal(&self, id: usize) -> bool {
        self.row_meta[id].solver == RowSolver::Terminal
    }

    /// Distinct states in the support of `X_i` for `i = 0..=n`, in ascending id order.
    pub fn supports(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.n + 1);
        let mut current = vec![self.start_id];
        let mut mark = vec![usize::MAX; self.num_states()];
        out.push(current.clone());
        for step in 1..=self.n {
            let mut next = Vec::new();
            for &s in &current {
                for &(dst, p) in &self.rows[s] {
                    if p > T::zero() && mark[dst] != step {
                        mark[dst] = step;
                        next.push(dst);
                    }
                }
            }
            next.sort_unstable();
            out.push(next.clone());
            current = next;
        }
        out
    }

    /// Largest number of atoms in any solved row.
    pub fn max_row_support(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn approx_rows(&self) -> usize {
        self.row_meta.iter().filter(|m| m.solver != RowSolver::Terminal && m.mode == MatchMode::Approx).count()
    }

    pub fn exact_rows(&self) -> usize {
        self.row_meta.iter().filter(|m| m.solver != RowSolver::Terminal && m.mode == MatchMode::Exact).count()
    }

    /// Checks row stochasticity, id validity and the support cap.
    pub fn validate(&self, tol: T) -> Result<()> {
        let cap = match self.dim() {
            1 => 3,
            d => d + d * (d + 1) / 2 + 1,
        };
        if self.rows.len() != self.states.len() || self.row_meta.len() != self.states.len() {
            return Err(Error::InvalidMeasure("row tables do not match the state list".into()));
        }
        for (id, row) in self.rows.iter().enumerate() {
            if self.is_terminal(id) {
                if !row.is_empty() {
                    return Err(Error::InvalidMeasure(format!("terminal state {id} has a row")));
                }
                continue;
            }
            if row.is_empty() || row.len() > cap {
                return Err(Error::InvalidMeasure(format!("row {id} has {} entries (cap {cap})", row.len())));
            }
            let mut sum = T::zero();
            for &(dst, p) in row {
                if dst >= self.states.len() {
                    return Err(Error::InvalidMeasure(format!("row {id} points to unknown state {dst}")));
                }
                if !(p >= T::zero()) {
                    return Err(Error::InvalidMeasure(format!("row {id} has negative probability {p}")));
                }
                sum = sum + p;
            }
            if (sum - T::one()).abs() > tol {
                return Err(Error::InvalidMeasure(format!("row {id} sums to {sum}")));
            }
        }
        Ok(())
    }
}
