//! Dynamic scheduling: completed events push their consumer tasks into a
//! central ready queue and idle SMs pop them.

use serde::{Deserialize, Serialize};

use crate::ir::{validate_graph, EdgeMap, EventInit, GraphFunction};
use crate::materialize::{MaterializedTaskGraph, TaskId};
use crate::sched_static::LowerError;

/// Template instruction; edge indices refer to the call's in/out edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TemplateInstr {
    Prefetch,
    Wait { edge: usize },
    Exec,
    Notify { edge: usize },
    /// Push consumers that this task's notify made ready.
    CompleteOn { edge: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallTemplate {
    pub call: usize,
    pub func: String,
    pub instrs: Vec<TemplateInstr>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PushTrigger {
    /// Consumers are pushed once the element's counter reaches zero.
    CounterZero,
    /// Consumers are pushed once every producer of the element has started EXEC.
    AllDispatched,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompleteOnEntry {
    pub call: usize,
    pub edge: usize,
    pub trigger: PushTrigger,
}

/// How the consumers of an in-edge are found when its event fires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConsumerLookup {
    /// The static map is inverted per element at launch.
    Inverted,
    /// Event `i` fires consumer tasks `indptr[i]..indptr[i+1]`.
    IndptrRange { indptr: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerEntry {
    pub event: String,
    pub consumer_call: usize,
    pub edge: usize,
    pub lookup: ConsumerLookup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DynamicOptions {
    pub early_push: bool,
    /// Disables overlapped weight prefetch; loads are folded into EXEC.
    #[serde(default)]
    pub no_prefetch: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicMegakernel {
    pub graph: GraphFunction,
    pub early_push: bool,
    pub prefetch: bool,
    pub templates: Vec<CallTemplate>,
    pub complete_on: Vec<CompleteOnEntry>,
    pub triggers: Vec<TriggerEntry>,
}

fn build_templates(g: &GraphFunction, early_push: bool, prefetch: bool) -> Vec<CallTemplate> {
    g.calls
        .iter()
        .enumerate()
        .map(|(k, call)| {
            let decl = g.device_function(&call.func).expect("validated");
            let mut instrs = Vec::new();
            if prefetch && decl.prefetch.is_some() {
                instrs.push(TemplateInstr::Prefetch);
            }
            for (i, edge) in call.in_edges.iter().enumerate() {
                let dd_init = g
                    .event_tensor(&edge.event)
                    .is_some_and(|e| matches!(e.init, EventInit::DataDependent { .. }));
                if early_push || dd_init {
                    instrs.push(TemplateInstr::Wait { edge: i });
                }
            }
            instrs.push(TemplateInstr::Exec);
            for i in 0..call.out_edges.len() {
                instrs.push(TemplateInstr::Notify { edge: i });
                instrs.push(TemplateInstr::CompleteOn { edge: i });
            }
            CallTemplate { call: k, func: call.func.clone(), instrs }
        })
        .collect()
}

fn build_complete_on(g: &GraphFunction, early_push: bool) -> Vec<CompleteOnEntry> {
    let trigger = if early_push { PushTrigger::AllDispatched } else { PushTrigger::CounterZero };
    g.calls
        .iter()
        .enumerate()
        .flat_map(|(k, c)| (0..c.out_edges.len()).map(move |edge| CompleteOnEntry { call: k, edge, trigger }))
        .collect()
}

/// Lowers `g` to push/pop task templates. Data-dependent edges are kept.
pub fn lower_dynamic(g: &GraphFunction, options: DynamicOptions) -> Result<DynamicMegakernel, LowerError> {
    let diags = validate_graph(g);
    if !diags.is_empty() {
        return Err(LowerError::Invalid(diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")));
    }
    let prefetch = !options.no_prefetch;
    let triggers = g
        .calls
        .iter()
        .enumerate()
        .flat_map(|(k, c)| {
            c.in_edges.iter().enumerate().map(move |(i, e)| TriggerEntry {
                event: e.event.clone(),
                consumer_call: k,
                edge: i,
                lookup: match &e.map {
                    EdgeMap::RangeTrigger { indptr } => ConsumerLookup::IndptrRange { indptr: indptr.clone() },
                    _ => ConsumerLookup::Inverted,
                },
            })
        })
        .collect();
    Ok(DynamicMegakernel {
        graph: g.clone(),
        early_push: options.early_push,
        prefetch,
        templates: build_templates(g, options.early_push, prefetch),
        complete_on: build_complete_on(g, options.early_push),
        triggers,
    })
}

/// Switches the push condition to "all producers dispatched" and guards
/// every consumer EXEC with WAITs on its in-edges.
pub fn enable_early_push(k: &DynamicMegakernel) -> DynamicMegakernel {
    DynamicMegakernel {
        early_push: true,
        templates: build_templates(&k.graph, true, k.prefetch),
        complete_on: build_complete_on(&k.graph, true),
        ..k.clone()
    }
}

impl DynamicMegakernel {
    /// Tasks ready at launch: every element they wait on has no producer,
    /// a zero count, and no pending runtime values.
    pub fn initial_ready(&self, m: &MaterializedTaskGraph) -> Vec<TaskId> {
        let producers = m.producers_by_elem();
        let ready = |e: usize| producers[e].is_empty() && m.elements[e].initial == 0 && m.elements[e].gates.is_empty();
        (0..m.tasks.len()).filter(|&t| m.tasks[t].waits.iter().all(|&e| ready(e))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materialize::instantiate;
    use crate::symshape::{ShapeBinding, SymExpr};
    use crate::workloads::{self, MoEParams};

    #[test]
    fn gemm_rs_templates() {
        let g = workloads::gemm_reduce_scatter(SymExpr::Const(4), 2);
        let k = lower_dynamic(&g, DynamicOptions::default()).unwrap();
        assert_eq!(
            k.templates[0].instrs,
            vec![TemplateInstr::Exec, TemplateInstr::Notify { edge: 0 }, TemplateInstr::CompleteOn { edge: 0 }]
        );
        assert_eq!(k.templates[1].instrs, vec![TemplateInstr::Exec]);
        assert_eq!(k.complete_on.len(), 1);
        let e = enable_early_push(&k);
        assert_eq!(e.templates[1].instrs, vec![TemplateInstr::Wait { edge: 0 }, TemplateInstr::Exec]);
        assert!(e.complete_on.iter().all(|c| c.trigger == PushTrigger::AllDispatched));
        assert_eq!(enable_early_push(&e), e);
    }

    #[test]
    fn moe_keeps_data_dependence() {
        let (g, r) = workloads::moe_layer(&MoEParams::small());
        let k = lower_dynamic(&g, DynamicOptions::default()).unwrap();
        let gemm = &k.triggers.iter().find(|t| t.consumer_call == 2).unwrap().lookup;
        assert_eq!(gemm, &ConsumerLookup::IndptrRange { indptr: "exp_indptr".into() });
        // GroupGEMM waits on a data-dependent-init event even without early push
        assert!(k.templates[2].instrs.contains(&TemplateInstr::Wait { edge: 0 }));
        assert!(!k.templates[1].instrs.iter().any(|i| matches!(i, TemplateInstr::Wait { .. })));
        let total: usize = k.complete_on.len();
        let out_edges: usize = g.calls.iter().map(|c| c.out_edges.len()).sum();
        assert_eq!(total, out_edges);

        let real = r.realize(&ShapeBinding::new(), 1).unwrap();
        let m = instantiate(&g, &ShapeBinding::new(), Some(&real)).unwrap();
        assert_eq!(k.initial_ready(&m), vec![0]);
    }

    #[test]
    fn single_source() {
        let g = workloads::random_dag(1, 0, 0);
        let k = lower_dynamic(&g, DynamicOptions::default()).unwrap();
        let m = instantiate(&g, &ShapeBinding::new(), None).unwrap();
        assert_eq!(k.initial_ready(&m), vec![0]);
        assert!(k.complete_on.is_empty());
        assert_eq!(enable_early_push(&k).templates, k.templates);
    }
}
