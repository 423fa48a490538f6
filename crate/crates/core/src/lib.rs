//! Analysis and simulation of open queueing networks modelling service
//! chains.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: network descriptions, validation, presets and the JSON
//!   file format;
//! * [`traffic`]: traffic equations and visit ratios (single and
//!   multi-class);
//! * [`analytic`]: M/M/1, M/M/m, M/G/1 and bulk-arrival formulas, plus
//!   Jackson and BCMP chain metrics;
//! * [`optimizer`]: budget-constrained capacity allocation;
//! * [`simulator`]: a seeded discrete-event simulator used to cross-check
//!   every analytic number.

pub mod analytic;
pub mod model;
pub mod optimizer;
pub mod simulator;
pub mod traffic;

pub use analytic::{ChainMetrics, NodeMetrics};
pub use model::{
    preset_cims, validate, BulkDistribution, BulkSpec, ClassSpec, Discipline, NetworkSpec,
    NodeSpec, RoutingMatrix, ValidationReport,
};
pub use optimizer::{AllocationProblem, AllocationSolution};
pub use simulator::{simulate, SimConfig, SimResult};
pub use traffic::{solve_traffic, solve_traffic_multiclass, TrafficSolution};
