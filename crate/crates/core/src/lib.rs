//! Gradient tracking over cyclic finite-time consensus sequences.
//!
//! The crate covers the whole numerical pipeline: network topologies and
//! combination matrices ([`graph`]), finite-time consensus sequences and their
//! approximation error ([`ftc`]), the decentralized least-squares problem and
//! its constants ([`problem`]), the gradient-tracking recursion with its
//! transformed companion ([`optimizer`]) and the closed-form bound constants
//! ([`bounds`]).

pub mod bounds;
pub mod ftc;
pub mod graph;
pub mod linalg;
pub mod optimizer;
pub mod problem;
pub mod rng;

pub use bounds::{BoundConstants, BoundError, BoundInputs};
pub use ftc::{FactorOrdering, FtcError, MatrixSequence, Multiplicity};
pub use graph::{CombinationMatrix, Graph, GraphError, TopologyKind};
pub use optimizer::{GradientMode, Metrics, NetworkState, OptimizerError, RunOptions, Trajectory};
pub use problem::{LeastSquaresProblem, Optima, ProblemConstants, ProblemError};
