//! Distributed k-hop state and input observers for networked nonlinear
//! agents, with gain tuning, convergence certificates and a simulator.

// `!(v > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod graph;
pub mod linalg;
pub mod observer;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod tol;
pub mod tuning;

pub use error::{Error, Inequality, Result};
pub use graph::{
    coupling_matrices, khop_set, Graph, KHopNeighborhood, KHopNetwork, ObserverCoupling,
};
pub use linalg::{kron, spectral_norm, sym_eig, Matrix, SymEigen, SymMatrix};
pub use tuning::{
    tune_network, AgentGains, BoundSet, GainSet, Nonlinearity, PlantModel, TuningOptions,
};
pub use observer::{NeighborMessage, ObserverState, SignMode};
pub use report::{gain_report, verify, GainReport, Status, VerificationReport};
pub use scenario::{Prepared, Scenario};
pub use sim::{run, run_partial, Controller, SimConfig, Telemetry};
