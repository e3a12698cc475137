//! Greedy sparsest-permutation (SP) causal structure discovery.
//!
//! The library learns Bayesian network structure by walking over permutations
//! of the variables: every permutation `π` induces a minimal I-MAP `G_π` from
//! a conditional-independence source, and the search moves between
//! permutations through covered-arrow reversals, always toward sparser DAGs.
//!
//! Main pieces:
//!
//! * [`graph`] — DAGs, d-separation, covered arrows, CPDAGs, Meek closure, SHD;
//! * [`ci`] — CI statements and oracles (explicit sets, d-separation, Gaussian
//!   partial-correlation thresholding, Fisher-z testing), graphoid checking;
//! * [`imap`] — minimal I-MAP construction and flip updates;
//! * [`search`] — triangle SP, its BIC-scored and high-dimensional variants,
//!   the exhaustive SP oracle and identifiability-assumption checks;
//! * [`chickering`] — the edge-operation calculus used to verify consistency;
//! * [`polytope`] — permutohedron quotient graphs (DAG associahedron, even
//!   permutohedron) and the edge-walk variant of the search;
//! * [`mindeg`] — minimum-degree starting permutations;
//! * [`sem`], [`pc`], [`bench`] — linear Gaussian SEM simulation, a PC
//!   baseline, and the benchmark harness;
//! * [`io`] — the text formats used by the CLI (DAG/CPDAG edge lists, CI
//!   relation files, CSV matrices).

pub mod bench;
pub mod chickering;
pub mod ci;
pub mod error;
pub mod gauss;
pub mod graph;
pub mod imap;
pub mod io;
pub mod mindeg;
pub mod pc;
pub mod perm;
pub mod polytope;
pub mod search;
pub mod sem;
pub mod set;

pub use error::{Error, Result};
pub use graph::{Dag, Pdag};
pub use perm::Permutation;
pub use set::NodeSet;
