//! Topology inference for networks of linearly coupled dynamical agents.
//!
//! Each node filters its neighbors' states through its own dynamics and is
//! driven by independent noise. Multivariate non-causal Wiener filters
//! estimated from the node time series flag every neighbor and every
//! spouse (a node sharing a child). Spouse links have filters whose phase
//! sits at pi, which lets them be pruned to recover the exact topology.

pub mod error;
pub mod fixtures;
pub mod glasso;
pub mod graph;
pub mod group_lasso;
pub mod inference;
pub mod model;
pub mod noise;
pub mod oracle;
pub mod panel;
pub mod simulate;
pub mod sweep;
pub mod wiener;

pub use error::{Error, ErrorKind, Result};
pub use graph::{moral_graph_of, relative_error, topology_of, EdgeSet, GenerativeGraph};
pub use inference::{learn_topology, InferenceParams, InferenceReport};
pub use model::{build_model, DiscreteModel, PhysicalModelSpec};
pub use panel::TimeSeriesPanel;
