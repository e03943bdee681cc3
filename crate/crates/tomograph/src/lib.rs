//! Topology discovery of sparse random graphs from end-to-end delay
//! measurements between a small set of participant nodes.
//!
//! The pipeline: generate a sparse random graph, pick participants, simulate
//! i.i.d. delay samples along fixed (hop-)shortest routes, estimate pairwise
//! delay variances ("distances"), and reconstruct the hidden topology with
//! quartet-based merging — then score the result by edit distance against
//! the minimal representation of the true graph.
//!
//! Start with the runnable examples (`cargo run --example <name>`), or the
//! `tomograph` binary for the file-based workflow.

pub mod delay;
pub mod error;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod quartet;
pub mod reconstruct;
pub mod routing;

pub use error::{Result, TomoError};
pub use graph::{
    cycle_census, generate_er, giant_component, minimal_representation, neighborhood_sizes,
    random_tree, read_graph, write_graph, CycleCensus, Graph, NodeId, NodeKind,
};
