//! Online and offline algorithms for multi-level aggregation on weighted
//! trees, with reference oracles and the transforms that connect problem
//! variants.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod deadline;
pub mod engine;
pub mod error;
pub mod general;
pub mod harness;
pub mod io;
pub mod line;
pub mod model;
pub mod offline;
pub mod plf;
pub mod single_phase;
pub mod transforms;

pub use engine::{run, run_with, EngineConfig, EngineTrace, OnlineAlgorithm, PlannedService, View};
pub use error::{MlapError, Result};
pub use model::{
    cost_of_schedule, cost_of_schedule_with, CostBreakdown, CostMode, Instance, MonotoneCost,
    NodeId, NodeSet, Request, Schedule, Service, WeightedTree,
};
pub use plf::Plf;
