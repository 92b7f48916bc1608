use thiserror::Error;

use crate::model::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MlapError {
    #[error("parent links of node {0} form a cycle")]
    CycleDetected(NodeId),
    #[error("node {node} has non-positive weight {weight}")]
    NonPositiveWeight { node: NodeId, weight: f64 },
    #[error("root has {0} children but a quasi-root was required")]
    MultipleRootChildren(usize),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("node ids must be dense 1..=n, missing {0}")]
    MissingNode(NodeId),
    #[error("invalid request {rid}: {reason}")]
    InvalidRequest { rid: u64, reason: String },
    #[error("invalid cost function: {0}")]
    InvalidCost(String),
    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),
    #[error("node set at time {time} is not a service tree")]
    InvalidServiceTree { time: f64 },
    #[error("algorithm left {pending} requests pending at the horizon")]
    AlgorithmStall { pending: usize },
    #[error("algorithm made no progress at time {time}")]
    NoProgress { time: f64 },
    #[error("discrete samples of request {rid} decrease")]
    NonMonotoneSamples { rid: u64 },
    #[error("discontinuity at {0} has no gap interval")]
    MissingGap(f64),
    #[error("cost kind not supported here: {0}")]
    UnsupportedCostKind(String),
    #[error("interval [{a}, {d}] contains no candidate time")]
    UnstabbableInterval { a: f64, d: f64 },
    #[error("oracle search space {states} exceeds the limit {limit}")]
    OracleTooLarge { states: f64, limit: f64 },
    #[error("B = {0} exceeds the largest supported lower-bound size")]
    OverflowGuard(u32),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("critical subtree requested for node {0}, which never matures")]
    NotMature(NodeId),
}

pub type Result<T, E = MlapError> = std::result::Result<T, E>;
