//! Compiled-kernel container shared by both scheduling modes.

use serde::{Deserialize, Serialize};

use crate::ir::GraphFunction;
use crate::sched_dynamic::DynamicMegakernel;
use crate::sched_static::StaticMegakernel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CompiledKernel {
    Static(StaticMegakernel),
    Dynamic(DynamicMegakernel),
}

impl CompiledKernel {
    pub fn graph(&self) -> &GraphFunction {
        match self {
            CompiledKernel::Static(k) => &k.graph,
            CompiledKernel::Dynamic(k) => &k.graph,
        }
    }

    pub fn graph_mut(&mut self) -> &mut GraphFunction {
        match self {
            CompiledKernel::Static(k) => &mut k.graph,
            CompiledKernel::Dynamic(k) => &mut k.graph,
        }
    }

    pub fn mode(&self) -> &'static str {
        match self {
            CompiledKernel::Static(_) => "static",
            CompiledKernel::Dynamic(k) if k.early_push => "dynamic+early_push",
            CompiledKernel::Dynamic(_) => "dynamic",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("kernel serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

impl From<StaticMegakernel> for CompiledKernel {
    fn from(k: StaticMegakernel) -> Self {
        CompiledKernel::Static(k)
    }
}

impl From<DynamicMegakernel> for CompiledKernel {
    fn from(k: DynamicMegakernel) -> Self {
        CompiledKernel::Dynamic(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched_dynamic::{lower_dynamic, DynamicOptions};
    use crate::sched_static::{lower_static, StaticOptions};
    use crate::symshape::ShapeBinding;
    use crate::workloads;

    #[test]
    fn json_roundtrip_both_modes() {
        let g = workloads::splitk_rowsum();
        let s: CompiledKernel =
            lower_static(&g, &[ShapeBinding::new().with("n", 2)], 3, StaticOptions::default()).unwrap().into();
        let d: CompiledKernel = lower_dynamic(&g, DynamicOptions { early_push: true, ..Default::default() }).unwrap().into();
        for k in [s, d] {
            let text = k.to_json();
            assert!(text.contains(&format!("\"mode\":\"{}\"", k.mode().split('+').next().unwrap())));
            assert_eq!(CompiledKernel::from_json(&text).unwrap(), k);
        }
    }
}
