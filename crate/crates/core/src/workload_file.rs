//! Workload-spec JSON: a graph plus optional simulation and routing sections.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ir::GraphFunction;
use crate::kernel::CompiledKernel;
use crate::materialize::{MaterializeError, RoutingRealization};
use crate::sim::SimConfig;
use crate::symshape::{ShapeBinding, SymExpr};
use crate::workloads::{self, MoEParams, MoERealizer};

/// Where runtime tensor contents come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoutingSource {
    /// Drawn from the run seed.
    Moe { params: MoEParams },
    /// Fixed contents, identical for every seed.
    Fixed { tensors: RoutingRealization },
}

impl RoutingSource {
    pub fn realize(&self, binding: &ShapeBinding, seed: u64) -> Result<RoutingRealization, MaterializeError> {
        match self {
            RoutingSource::Moe { params } => MoERealizer { params: params.clone() }.realize(binding, seed),
            RoutingSource::Fixed { tensors } => Ok(tensors.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    #[serde(flatten)]
    pub graph: GraphFunction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing: Option<RoutingSource>,
}

/// A compiled kernel together with the workload sections needed to run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelArtifact {
    pub kernel: CompiledKernel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing: Option<RoutingSource>,
}

impl KernelArtifact {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("kernel serializes")
    }

    /// Accepts either an artifact or a bare compiled kernel.
    pub fn from_json(text: &str) -> Result<Self, WorkloadError> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        if v.get("kernel").is_some() {
            Ok(serde_json::from_value(v)?)
        } else {
            Ok(KernelArtifact { kernel: serde_json::from_value(v)?, sim: None, routing: None })
        }
    }

    pub fn load(path: &Path) -> Result<Self, WorkloadError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| WorkloadError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn realize(&self, binding: &ShapeBinding, seed: u64) -> Result<Option<RoutingRealization>, MaterializeError> {
        self.routing.as_ref().map(|r| r.realize(binding, seed)).transpose()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed workload spec: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unknown built-in workload {0:?}")]
    UnknownBuiltin(String),
}

impl WorkloadSpec {
    pub fn new(graph: GraphFunction) -> Self {
        WorkloadSpec { graph, sim: None, routing: None }
    }

    pub fn from_json(text: &str) -> Result<Self, WorkloadError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("workload serializes")
    }

    pub fn load(path: &Path) -> Result<Self, WorkloadError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| WorkloadError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn realize(&self, binding: &ShapeBinding, seed: u64) -> Result<Option<RoutingRealization>, MaterializeError> {
        self.routing.as_ref().map(|r| r.realize(binding, seed)).transpose()
    }
}

pub const BUILTINS: &[&str] = &[
    "splitk_rowsum",
    "batched_two_stage",
    "gemm_reduce_scatter",
    "all_gather_gemm",
    "moe_small",
    "moe_hot",
    "random_dag",
];

pub fn builtin(name: &str) -> Result<WorkloadSpec, WorkloadError> {
    let spec = match name {
        "splitk_rowsum" => WorkloadSpec::new(workloads::splitk_rowsum()),
        "batched_two_stage" => WorkloadSpec::new(workloads::batched_two_stage()),
        "gemm_reduce_scatter" => WorkloadSpec::new(workloads::gemm_reduce_scatter(SymExpr::sym("n").mul(SymExpr::Const(2)), 2)),
        "all_gather_gemm" => WorkloadSpec::new(workloads::all_gather_gemm(4, 2)),
        "moe_small" | "moe_hot" => {
            let params = if name == "moe_small" {
                MoEParams::small()
            } else {
                MoEParams { tokens: 128, experts: 8, top_k: 2, tile_size: 16, hot_prob: 0.6, seed: 0 }
            };
            let (graph, r) = workloads::moe_layer(&params);
            WorkloadSpec { graph, sim: None, routing: Some(RoutingSource::Moe { params: r.params }) }
        }
        "random_dag" => WorkloadSpec::new(workloads::random_dag(12, 20, 0)),
        _ => return Err(WorkloadError::UnknownBuiltin(name.to_string())),
    };
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::validate_graph;

    #[test]
    fn builtins_roundtrip_and_validate() {
        for name in BUILTINS {
            let spec = builtin(name).unwrap();
            assert!(validate_graph(&spec.graph).is_empty(), "{name}");
            assert_eq!(WorkloadSpec::from_json(&spec.to_json()).unwrap(), spec, "{name}");
        }
        assert!(matches!(builtin("nope"), Err(WorkloadError::UnknownBuiltin(_))));
    }

    #[test]
    fn plain_graph_json_is_a_spec() {
        let g = workloads::splitk_rowsum();
        let spec = WorkloadSpec::from_json(&g.to_json()).unwrap();
        assert_eq!(spec.graph, g);
        assert!(spec.sim.is_none() && spec.routing.is_none());
    }

    #[test]
    fn sim_section_is_read() {
        let mut spec = builtin("moe_small").unwrap();
        spec.sim = Some(SimConfig { pop_cost: 3, ..SimConfig::with_sms(2) });
        let back = WorkloadSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(back.sim.as_ref().unwrap().pop_cost, 3);
        let r = back.realize(&ShapeBinding::new(), 4).unwrap().unwrap();
        assert!(r.get("exp_indptr").is_some());
    }

    #[test]
    fn artifact_accepts_bare_kernel() {
        let spec = builtin("splitk_rowsum").unwrap();
        let k: CompiledKernel =
            crate::sched_dynamic::lower_dynamic(&spec.graph, Default::default()).unwrap().into();
        let bare = KernelArtifact::from_json(&k.to_json()).unwrap();
        assert_eq!(bare.kernel, k);
        let full = KernelArtifact { kernel: k, sim: Some(SimConfig::with_sms(3)), routing: None };
        assert_eq!(KernelArtifact::from_json(&full.to_json()).unwrap(), full);
    }
}
