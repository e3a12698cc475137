//! DAGs, d-separation, covered arrows, Markov equivalence, CPDAGs and SHD.

mod dag;
mod pdag;

pub use dag::{markov_equivalent, Dag};
pub use pdag::{essential_graph, shd, EdgeStatus, Pdag};

#[cfg(test)]
pub(crate) use dag::test_support;
