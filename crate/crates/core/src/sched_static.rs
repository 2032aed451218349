//! Static scheduling: per-SM task queues fixed at compile time, with
//! dependencies enforced by notify/wait on event counters.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{validate_graph, EdgeMap, EventInit, GraphFunction, ResourceClass};
use crate::materialize::{instantiate, MaterializeError, TaskKey};
use crate::symshape::{EvalError, ShapeBinding, SymExpr};

/// One lowered instruction. Element ids index the flat counter array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Instr {
    Prefetch,
    Wait { elem: usize },
    Exec,
    Notify { elem: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub call: usize,
    pub coords: Vec<u64>,
    pub instrs: Vec<Instr>,
}

impl QueueEntry {
    pub fn key(&self) -> TaskKey {
        TaskKey { call: self.call, coords: self.coords.clone() }
    }
}

/// Flat counter array: tensor `i` occupies `offsets[i]..offsets[i+1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventLayout {
    pub names: Vec<String>,
    pub offsets: Vec<usize>,
    pub initial: Vec<u64>,
}

impl EventLayout {
    /// `name[flat]` label of element `elem`.
    pub fn label(&self, elem: usize) -> String {
        let t = self.offsets.partition_point(|o| *o <= elem) - 1;
        format!("{}[{}]", self.names[t], elem - self.offsets[t])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticSchedule {
    pub binding: ShapeBinding,
    pub sm_queues: Vec<Vec<QueueEntry>>,
    pub dma_queue: Vec<QueueEntry>,
    pub layout: EventLayout,
    pub extents: Vec<Vec<u64>>,
}

impl StaticSchedule {
    pub fn entries(&self) -> impl Iterator<Item = &QueueEntry> {
        self.sm_queues.iter().flatten().chain(&self.dma_queue)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticMegakernel {
    pub graph: GraphFunction,
    pub num_sms: usize,
    /// When false, weight loads are folded into EXEC instead of overlapping waits.
    pub prefetch: bool,
    /// Sorted by binding; see [`compare_bindings`].
    pub schedules: Vec<StaticSchedule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticOptions {
    pub prefetch: bool,
}

impl Default for StaticOptions {
    fn default() -> Self {
        StaticOptions { prefetch: true }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LowerError {
    #[error("no shape samples given")]
    EmptySamples,
    #[error("need at least one SM")]
    NoSms,
    #[error("graph has data-dependent edges; apply worst_case_rewrite before static lowering")]
    DataDependent,
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("sample {binding}: {source}")]
    Sample { binding: ShapeBinding, source: MaterializeError },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectError {
    #[error("shape {actual} exceeds every sampled shape (largest {largest})")]
    Exceeds { actual: ShapeBinding, largest: ShapeBinding },
    #[error("shape {actual} has no unique next-larger sample among {candidates:?}")]
    Ambiguous { actual: ShapeBinding, candidates: Vec<String> },
    #[error("shape {0} binds different symbols than the samples")]
    Symbols(ShapeBinding),
    #[error("sample {sample} does not contain every task of shape {actual}")]
    NotCovered { sample: ShapeBinding, actual: ShapeBinding },
    #[error("evaluating launch grid: {0}")]
    Eval(#[from] EvalError),
}

/// Orders bindings by the size symbol first, then by all values.
fn compare_bindings(size_symbol: Option<&str>, a: &ShapeBinding, b: &ShapeBinding) -> Ordering {
    let key = |x: &ShapeBinding| size_symbol.and_then(|s| x.get(s));
    key(a).cmp(&key(b)).then_with(|| a.0.cmp(&b.0))
}

/// Instructions of one task: optional PREFETCH, one WAIT per in-edge,
/// EXEC, one NOTIFY per out-edge.
fn task_program(prefetch: bool, waits: &[usize], notifies: &[usize]) -> Vec<Instr> {
    let mut out = Vec::with_capacity(waits.len() + notifies.len() + 2);
    if prefetch {
        out.push(Instr::Prefetch);
    }
    out.extend(waits.iter().map(|&elem| Instr::Wait { elem }));
    out.push(Instr::Exec);
    out.extend(notifies.iter().map(|&elem| Instr::Notify { elem }));
    out
}

/// Builds round-robin per-SM queues for every sampled shape.
pub fn lower_static(
    g: &GraphFunction,
    samples: &[ShapeBinding],
    num_sms: usize,
    options: StaticOptions,
) -> Result<StaticMegakernel, LowerError> {
    if samples.is_empty() {
        return Err(LowerError::EmptySamples);
    }
    if num_sms == 0 {
        return Err(LowerError::NoSms);
    }
    let diags = validate_graph(g);
    if !diags.is_empty() {
        return Err(LowerError::Invalid(diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")));
    }
    if g.has_data_dependence() {
        return Err(LowerError::DataDependent);
    }
    let mut sorted: Vec<ShapeBinding> = samples.to_vec();
    sorted.sort_by(|a, b| compare_bindings(g.size_symbol.as_deref(), a, b));
    sorted.dedup();

    let mut schedules = Vec::new();
    for binding in sorted {
        let m = instantiate(g, &binding, None)
            .map_err(|source| LowerError::Sample { binding: binding.clone(), source })?;
        let mut sm_queues = vec![Vec::new(); num_sms];
        let mut dma_queue = Vec::new();
        let mut next_sm = 0;
        for t in &m.tasks {
            let entry = QueueEntry {
                call: t.key.call,
                coords: t.key.coords.clone(),
                instrs: task_program(options.prefetch && t.prefetch.is_some(), &t.waits, &t.notifies),
            };
            match t.resource {
                ResourceClass::Sm => {
                    sm_queues[next_sm].push(entry);
                    next_sm = (next_sm + 1) % num_sms;
                }
                ResourceClass::Dma => dma_queue.push(entry),
            }
        }
        schedules.push(StaticSchedule {
            binding,
            sm_queues,
            dma_queue,
            layout: EventLayout {
                names: m.tensor_names.clone(),
                offsets: m.tensor_offsets.clone(),
                initial: m.elements.iter().map(|e| e.initial).collect(),
            },
            extents: m.extents.clone(),
        });
    }
    Ok(StaticMegakernel { graph: g.clone(), num_sms, prefetch: options.prefetch, schedules })
}

/// Queues chosen for an actual shape. `sm_masks[s][i]` marks entry `i` of
/// SM `s` as a padding no-op.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedQueues<'k> {
    pub index: usize,
    pub schedule: &'k StaticSchedule,
    pub exact: bool,
    pub sm_masks: Vec<Vec<bool>>,
    pub dma_mask: Vec<bool>,
}

impl SelectedQueues<'_> {
    pub fn masked_count(&self) -> usize {
        self.sm_masks.iter().flatten().chain(&self.dma_mask).filter(|m| **m).count()
    }
}

/// Picks the schedule of the smallest sampled shape covering `actual` and
/// masks tasks that fall outside it.
pub fn select_queues<'k>(k: &'k StaticMegakernel, actual: &ShapeBinding) -> Result<SelectedQueues<'k>, SelectError> {
    let symbols = |b: &ShapeBinding| b.iter().map(|(s, _)| s.to_string()).collect::<BTreeSet<_>>();
    let wanted: BTreeSet<String> = k.schedules.first().map(|s| symbols(&s.binding)).unwrap_or_default();
    let have = symbols(actual);
    if !wanted.is_subset(&have) {
        return Err(SelectError::Symbols(actual.clone()));
    }
    let restricted = ShapeBinding(actual.0.iter().filter(|(s, _)| wanted.contains(*s)).map(|(s, v)| (s.clone(), *v)).collect());

    let covers = |s: &ShapeBinding| s.iter().all(|(name, v)| restricted.get(name).is_some_and(|a| a <= v));
    let index = match k.schedules.iter().position(|s| s.binding == restricted) {
        Some(i) => i,
        None => {
            let candidates: Vec<usize> = (0..k.schedules.len()).filter(|&i| covers(&k.schedules[i].binding)).collect();
            if candidates.is_empty() {
                return Err(SelectError::Exceeds {
                    actual: actual.clone(),
                    largest: k.schedules.last().map(|s| s.binding.clone()).unwrap_or_default(),
                });
            }
            let below = |a: &ShapeBinding, b: &ShapeBinding| a.iter().all(|(n, v)| b.get(n).is_some_and(|w| v <= w));
            let minimal: Vec<usize> = candidates
                .iter()
                .copied()
                .filter(|&i| candidates.iter().all(|&j| below(&k.schedules[i].binding, &k.schedules[j].binding)))
                .collect();
            match minimal.as_slice() {
                [i] => *i,
                _ => {
                    return Err(SelectError::Ambiguous {
                        actual: actual.clone(),
                        candidates: candidates.iter().map(|&i| k.schedules[i].binding.to_string()).collect(),
                    })
                }
            }
        }
    };
    let schedule = &k.schedules[index];

    let mut actual_extents = Vec::with_capacity(k.graph.calls.len());
    for call in 0..k.graph.calls.len() {
        let grid = k.graph.launch_grid(call).unwrap_or(&[]);
        actual_extents.push(grid.iter().map(|e| e.eval(actual).map(|v| v as u64)).collect::<Result<Vec<_>, _>>()?);
    }
    let outside = |e: &QueueEntry| e.coords.iter().zip(&actual_extents[e.call]).any(|(c, x)| c >= x);
    let sm_masks: Vec<Vec<bool>> = schedule.sm_queues.iter().map(|q| q.iter().map(outside).collect()).collect();
    let dma_mask: Vec<bool> = schedule.dma_queue.iter().map(outside).collect();

    let live = schedule.entries().zip(sm_masks.iter().flatten().chain(&dma_mask)).filter(|(_, m)| !**m).count();
    let expected: u64 = actual_extents.iter().map(|x| x.iter().product::<u64>()).sum();
    if live as u64 != expected {
        return Err(SelectError::NotCovered { sample: schedule.binding.clone(), actual: actual.clone() });
    }
    Ok(SelectedQueues { index, schedule, exact: schedule.binding == restricted, sm_masks, dma_mask })
}

/// Replaces every data-dependent event tensor by a single-element barrier
/// that all its producers notify and all its consumers wait on. Calls whose
/// extent comes from an indptr launch their full bound, guarded at run time.
pub fn worst_case_rewrite(g: &GraphFunction) -> GraphFunction {
    if !g.has_data_dependence() {
        return g.clone();
    }
    let mut dd: BTreeSet<String> = g
        .event_tensors
        .iter()
        .filter(|e| matches!(e.init, EventInit::DataDependent { .. }))
        .map(|e| e.name.clone())
        .collect();
    for call in &g.calls {
        for edge in call.in_edges.iter().chain(&call.out_edges) {
            if edge.map.is_data_dependent() {
                dd.insert(edge.event.clone());
            }
        }
    }
    let mut out = g.clone();
    for ev in &mut out.event_tensors {
        if dd.contains(&ev.name) {
            ev.shape = vec![SymExpr::Const(1)];
            ev.init = EventInit::DerivedCount;
        }
    }
    for call in &mut out.calls {
        for edge in call.in_edges.iter_mut().chain(call.out_edges.iter_mut()) {
            if dd.contains(&edge.event) {
                edge.map = EdgeMap::Static { index: vec![SymExpr::Const(0)] };
            }
        }
        if let Some(ptr) = call.extent_from.take() {
            call.guard = Some(ptr);
        }
    }
    out
}

/// The task graph a guarded kernel actually executes: guards become launch
/// extents again, so instantiating it with a realization drops masked tasks.
pub fn guarded_task_graph(g: &GraphFunction) -> GraphFunction {
    let mut out = g.clone();
    for call in &mut out.calls {
        if let Some(ptr) = call.guard.take() {
            call.extent_from = Some(ptr);
        }
    }
    out
}

/// Checks that every schedule holds each task of its shape exactly once and
/// that no queue places a task before a producer on the same queue.
pub fn queue_violations(k: &StaticMegakernel) -> Vec<String> {
    let mut out = Vec::new();
    for s in &k.schedules {
        let Ok(m) = instantiate(&k.graph, &s.binding, None) else {
            out.push(format!("{}: cannot instantiate", s.binding));
            continue;
        };
        let index = m.task_index();
        let mut seen = vec![0usize; m.tasks.len()];
        let producers = m.producers_by_elem();
        let queues = s.sm_queues.iter().chain(std::iter::once(&s.dma_queue));
        for (qi, q) in queues.enumerate() {
            let mut position = std::collections::HashMap::new();
            for (p, e) in q.iter().enumerate() {
                match index.get(&e.key()) {
                    Some(&t) => {
                        seen[t] += 1;
                        position.insert(t, p);
                    }
                    None => out.push(format!("{}: unknown task {}", s.binding, e.key())),
                }
            }
            for (&t, &p) in &position {
                for &e in &m.tasks[t].waits {
                    for pr in &producers[e] {
                        if position.get(pr).is_some_and(|&pp| pp > p) {
                            out.push(format!(
                                "{}: queue {qi} runs {} before its producer {}",
                                s.binding, m.tasks[t].key, m.tasks[*pr].key
                            ));
                        }
                    }
                }
            }
        }
        for (t, n) in seen.iter().enumerate() {
            if *n != 1 {
                out.push(format!("{}: task {} queued {n} times", s.binding, m.tasks[t].key));
            }
        }
    }
    out
}

#[doc(hidden)]
pub mod testing {
    use super::*;

    /// Moves the first producer of some consumer to just after that
    /// consumer on the consumer's queue. Returns false if no task waits.
    pub fn misorder_queue(k: &mut StaticMegakernel, schedule: usize) -> bool {
        let s = &mut k.schedules[schedule];
        let mut queues: Vec<&mut Vec<QueueEntry>> = s.sm_queues.iter_mut().collect();
        queues.push(&mut s.dma_queue);
        let mut writer = std::collections::HashMap::new();
        for (qi, q) in queues.iter().enumerate() {
            for (p, e) in q.iter().enumerate() {
                for i in &e.instrs {
                    if let Instr::Notify { elem } = i {
                        writer.entry(*elem).or_insert((qi, p));
                    }
                }
            }
        }
        let mut target = None;
        'find: for (qi, q) in queues.iter().enumerate() {
            for (p, e) in q.iter().enumerate() {
                for i in &e.instrs {
                    if let Instr::Wait { elem } = i {
                        if let Some(&w) = writer.get(elem) {
                            target = Some((w, (qi, p)));
                            break 'find;
                        }
                    }
                }
            }
        }
        let Some(((wq, wp), (cq, cp))) = target else { return false };
        let entry = queues[wq].remove(wp);
        let cp = if wq == cq && wp < cp { cp - 1 } else { cp };
        queues[cq].insert(cp + 1, entry);
        true
    }
}
