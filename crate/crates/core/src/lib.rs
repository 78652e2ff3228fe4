//! Percolation geometry laboratory: coupled dynamical environments on finite
//! boxes of Z^d, chemical and truncated passage times, geodesic structure,
//! influence and noise-covariance estimators, plus small exact oracles.

pub mod animal;
pub mod cluster;
pub mod env;
pub mod estimators;
pub mod geodesic;
pub mod influence;
pub mod lattice;
pub mod oracle;
pub mod poly;
pub mod radius;
pub mod stats;

pub use cluster::{label_clusters, regularize, ClusterLabeling, RegularizedPoint};
pub use env::{sample_environment, view_at, CoupledEnvironment, EnvironmentView, Mode};
pub use lattice::{BoxLattice, Edge, SimulationParams, Vertex};
