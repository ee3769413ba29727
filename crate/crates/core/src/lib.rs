//! Sparse lattice Markov chain approximations of SDEs.
//!
//! Each state of the chain solves a small moment matching problem on a
//! lattice `γQℤᵈ`, and the number of reachable states grows polynomially in
//! the step index because successors land on shared lattice points.

pub mod builder;
pub mod analysis;
pub mod builtins;
pub mod chain;
pub mod error;
pub mod fallback;
pub mod lattice;
pub mod linalg;
pub mod model;
pub mod moment1d;
pub mod moment_nd;
pub mod recombine;
pub mod scalar;

pub use builder::{build_chain, build_chain_on, local_consistency_report, local_consistency_report_with, select_lattice};
pub use analysis::Functional;
pub use builder::{BuildMode, BuildOptions, ConsistencyReport};
pub use chain::{ChainModel, RowMeta, RowSolver, StateKey};
pub use error::{Error, Result};
pub use fallback::FallbackConfig;
pub use lattice::{DiscreteMeasure, LatticeCoord, LatticeSpec, MatchMode, MomentTarget};
pub use linalg::Matrix;
pub use model::{GrowthClass, ModelTraits, SDEModel, Transform, TransformedModel};
pub use scalar::Real;

pub type Lattice = LatticeSpec<f64>;
pub type Measure = DiscreteMeasure<f64>;
pub type Chain = ChainModel<f64>;
pub type Model = SDEModel<f64>;
pub type Mat = Matrix<f64>;

pub type Lattice32 = LatticeSpec<f32>;
pub type Measure32 = DiscreteMeasure<f32>;
pub type Chain32 = ChainModel<f32>;
pub type Model32 = SDEModel<f32>;
