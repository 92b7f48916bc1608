//! JSON file formats for instances, line instances and discrete instances.
//!
//! Deadline penalties may be omitted; they default to the weight of the
//! path from the request's node to the root. Request weights default to 1.

use serde::{Deserialize, Serialize};

use crate::error::{MlapError, Result};
use crate::line::LineInstance;
use crate::model::{Instance, MonotoneCost, NodeId, Request, TreeSpec, WeightedTree};
use crate::transforms::{DiscreteInstance, DiscreteRequest};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum CostFile {
    Linear,
    Deadline {
        deadline: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        penalty: Option<f64>,
    },
    Pwl {
        points: Vec<(f64, f64)>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RequestFile {
    rid: u64,
    node: NodeId,
    arrival: f64,
    cost: CostFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct InstanceFile {
    tree: TreeSpec,
    horizon: f64,
    requests: Vec<RequestFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct DiscreteFile {
    tree: TreeSpec,
    horizon: u64,
    requests: Vec<DiscreteRequest>,
}

fn format_err(e: serde_json::Error) -> MlapError {
    MlapError::Format(e.to_string())
}

pub fn instance_from_json(text: &str) -> Result<Instance> {
    let file: InstanceFile = serde_json::from_str(text).map_err(format_err)?;
    let tree = WeightedTree::from_spec(&file.tree)?;
    let mut requests = Vec::with_capacity(file.requests.len());
    for r in file.requests {
        if !tree.contains(r.node) {
            return Err(MlapError::UnknownNode(r.node));
        }
        let cost = match r.cost {
            CostFile::Linear => MonotoneCost::Linear,
            CostFile::Deadline { deadline, penalty } => MonotoneCost::Deadline {
                deadline,
                penalty: penalty.unwrap_or_else(|| tree.path_weight(r.node)),
            },
            CostFile::Pwl { points } => MonotoneCost::Pwl { points },
        };
        requests.push(Request::weighted(
            r.rid,
            r.node,
            r.arrival,
            cost,
            r.weight.unwrap_or(1.0),
        )?);
    }
    Instance::new(tree, requests, file.horizon)
}

pub fn instance_to_json(inst: &Instance) -> String {
    let file = InstanceFile {
        tree: inst.tree.to_spec(),
        horizon: inst.horizon,
        requests: inst
            .requests
            .iter()
            .map(|r| RequestFile {
                rid: r.rid,
                node: r.node,
                arrival: r.arrival,
                cost: match &r.cost {
                    MonotoneCost::Linear => CostFile::Linear,
                    MonotoneCost::Deadline { deadline, penalty } => CostFile::Deadline {
                        deadline: *deadline,
                        penalty: Some(*penalty),
                    },
                    MonotoneCost::Pwl { points } => CostFile::Pwl {
                        points: points.clone(),
                    },
                },
                weight: (r.weight != 1.0).then_some(r.weight),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("instances serialize")
}

pub fn line_from_json(text: &str) -> Result<LineInstance> {
    let inst: LineInstance = serde_json::from_str(text).map_err(format_err)?;
    LineInstance::new(inst.requests, inst.horizon)
}

pub fn line_to_json(inst: &LineInstance) -> String {
    serde_json::to_string_pretty(inst).expect("line instances serialize")
}

pub fn discrete_from_json(text: &str) -> Result<DiscreteInstance> {
    let file: DiscreteFile = serde_json::from_str(text).map_err(format_err)?;
    Ok(DiscreteInstance {
        tree: WeightedTree::from_spec(&file.tree)?,
        requests: file.requests,
        horizon: file.horizon,
    })
}

pub fn discrete_to_json(inst: &DiscreteInstance) -> String {
    let file = DiscreteFile {
        tree: inst.tree.to_spec(),
        horizon: inst.horizon,
        requests: inst.requests.clone(),
    };
    serde_json::to_string_pretty(&file).expect("discrete instances serialize")
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}
