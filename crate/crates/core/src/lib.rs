//! Exact event-driven simulation of SIS epidemics on contact networks,
//! treated as marked temporal point processes, together with an online
//! stochastic-optimal-control treatment policy and a set of heuristic
//! baselines to compare it against.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`] loads and queries the undirected contact network.
//! * [`dynamics`] holds the epidemic state and the jump dynamics.
//! * [`lp`] is a small dense simplex solver.
//! * [`soc`] computes the optimal treatment intensities and the value
//!   function constants that certify them.
//! * [`baselines`] implements the heuristic comparison policies and budget
//!   calibration.
//! * [`sim`] runs the exact event loop.
//! * [`metrics`] turns event logs into performance measures.
//! * [`harness`] wires everything into reproducible experiments.

pub mod baselines;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod harness;
pub mod lp;
pub mod metrics;
pub mod sim;
pub mod soc;

pub use baselines::{PolicyKind, PolicySpec};
pub use dynamics::{ControlParams, EpidemicState, Event, EventKind, ModelParams};
pub use error::{Error, Result};
pub use graph::Network;
pub use lp::{LinearProgram, LpSolution, LpStatus};
pub use metrics::MetricsSummary;
pub use sim::{RunConfig, RunResult};
pub use soc::{PolicyConstants, ValueConstants};
