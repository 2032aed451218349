//! Instantiation of a symbolic graph into a concrete task graph, plus the
//! reference analyses that run on it: critical path, a greedy list
//! schedule, and trace checking.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::duration::{DurationError, Time};
use crate::ir::{validate_graph, Diagnostic, EdgeMap, EventInit, GraphFunction, ResourceClass, RuntimeRole};
use crate::symshape::{EvalError, ShapeBinding};
use crate::trace::Trace;

pub type TaskId = usize;
pub type ElemId = usize;

/// Concrete contents of the graph's runtime tensors, flattened row-major.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingRealization {
    pub tensors: BTreeMap<String, Vec<i64>>,
}

impl RoutingRealization {
    pub fn get(&self, name: &str) -> Option<&[i64]> {
        self.tensors.get(name).map(Vec::as_slice)
    }

    pub fn with(mut self, name: impl Into<String>, values: Vec<i64>) -> Self {
        self.tensors.insert(name.into(), values);
        self
    }
}

/// Identity of a task: call index plus grid coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskKey {
    pub call: usize,
    pub coords: Vec<u64>,
}

impl fmt::Display for TaskKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.call)?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterializedTask {
    pub key: TaskKey,
    pub func: String,
    pub resource: ResourceClass,
    pub duration: Time,
    pub prefetch: Option<Time>,
    /// One element per in-edge, in edge order.
    pub waits: Vec<ElemId>,
    /// One element per out-edge, in edge order.
    pub notifies: Vec<ElemId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventElement {
    pub tensor: usize,
    pub flat: usize,
    pub initial: u64,
    /// Calls whose completion publishes runtime values this element depends
    /// on (data-dependent counts or an indptr used to trigger its consumers).
    pub gates: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterializedTaskGraph {
    pub binding: ShapeBinding,
    pub tasks: Vec<MaterializedTask>,
    pub elements: Vec<EventElement>,
    /// First element id of each event tensor.
    pub tensor_offsets: Vec<usize>,
    pub tensor_names: Vec<String>,
    /// Concrete launch extents per call.
    pub extents: Vec<Vec<u64>>,
    /// Task range `[start, end)` of each call.
    pub call_ranges: Vec<(TaskId, TaskId)>,
    pub producers: Vec<(TaskId, ElemId)>,
    pub consumers: Vec<(ElemId, TaskId)>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MaterializeError {
    #[error("invalid graph: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("shape evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("duration model: {0}")]
    Duration(#[from] DurationError),
    #[error("call {call} task {task}: index {index:?} is outside event `{event}` of shape {shape:?}")]
    OutOfBounds { call: usize, task: String, event: String, index: Vec<i64>, shape: Vec<u64> },
    #[error("graph has data-dependent edges but no routing realization was given")]
    MissingRealization,
    #[error("routing realization is inconsistent: {0}")]
    Inconsistent(String),
    #[error("task {consumer} waits on an event notified by later task {producer} of the same call")]
    BackwardEdge { producer: String, consumer: String },
    #[error("task graph contains a cycle")]
    Cycle,
}

impl MaterializedTaskGraph {
    pub fn task_index(&self) -> HashMap<&TaskKey, TaskId> {
        self.tasks.iter().enumerate().map(|(i, t)| (&t.key, i)).collect()
    }

    pub fn tasks_of_call(&self, call: usize) -> &[MaterializedTask] {
        let (s, e) = self.call_ranges[call];
        &self.tasks[s..e]
    }

    /// Elements of tensor `tensor`.
    pub fn tensor_elements(&self, tensor: usize) -> &[EventElement] {
        let start = self.tensor_offsets[tensor];
        let end = self.tensor_offsets.get(tensor + 1).copied().unwrap_or(self.elements.len());
        &self.elements[start..end]
    }

    /// Producer tasks of each element (with multiplicity).
    pub fn producers_by_elem(&self) -> Vec<Vec<TaskId>> {
        let mut out = vec![Vec::new(); self.elements.len()];
        for &(t, e) in &self.producers {
            out[e].push(t);
        }
        out
    }

    /// Distinct consumer tasks of each element.
    pub fn consumers_by_elem(&self) -> Vec<Vec<TaskId>> {
        let mut out: Vec<Vec<TaskId>> = vec![Vec::new(); self.elements.len()];
        for &(e, t) in &self.consumers {
            if out[e].last() != Some(&t) && !out[e].contains(&t) {
                out[e].push(t);
            }
        }
        out
    }

    /// DOT rendering of the task/event/task digraph.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph tasks {\n  rankdir=LR;\n");
        for (i, t) in self.tasks.iter().enumerate() {
            let _ = writeln!(s, "  t{i} [shape=box,label=\"{} {}\\n{}\"];", t.func, t.key, t.duration);
        }
        for (i, e) in self.elements.iter().enumerate() {
            let _ = writeln!(
                s,
                "  e{i} [shape=ellipse,label=\"{}[{}]\\ncount {}\"];",
                self.tensor_names[e.tensor], e.flat, e.initial
            );
        }
        for &(t, e) in &self.producers {
            let _ = writeln!(s, "  t{t} -> e{e};");
        }
        for &(e, t) in &self.consumers {
            let _ = writeln!(s, "  e{e} -> t{t};");
        }
        s.push_str("}\n");
        s
    }
}

fn row_major(coords: &[u64], extents: &[u64]) -> u64 {
    coords.iter().zip(extents).fold(0, |acc, (c, e)| acc * e + c)
}

/// Enumerates all coordinates of `extents` in row-major order.
pub fn grid_coords(extents: &[u64]) -> Vec<Vec<u64>> {
    let total: u64 = extents.iter().product();
    let mut out = Vec::with_capacity(total as usize);
    if total == 0 {
        return out;
    }
    let mut cur = vec![0u64; extents.len()];
    loop {
        out.push(cur.clone());
        let mut axis = extents.len();
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            cur[axis] += 1;
            if cur[axis] < extents[axis] {
                break;
            }
            cur[axis] = 0;
        }
    }
}

fn eval_shape(exprs: &[crate::symshape::SymExpr], b: &ShapeBinding) -> Result<Vec<u64>, EvalError> {
    exprs.iter().map(|e| e.eval(b).map(|v| v as u64)).collect()
}

/// Checks runtime tensor contents against their declarations.
fn check_realization(g: &GraphFunction, b: &ShapeBinding, r: &RoutingRealization) -> Result<(), MaterializeError> {
    let bad = |m: String| Err(MaterializeError::Inconsistent(m));
    for rt in &g.runtime_tensors {
        let Some(values) = r.get(&rt.name) else {
            return bad(format!("runtime tensor `{}` missing", rt.name));
        };
        let len: u64 = eval_shape(&rt.shape, b)?.iter().product();
        if values.len() as u64 != len {
            return bad(format!("`{}` has {} values, shape needs {len}", rt.name, values.len()));
        }
        if values.iter().any(|v| *v < 0) {
            return bad(format!("`{}` has negative entries", rt.name));
        }
        if rt.role == RuntimeRole::Indptr {
            if values.first().copied().unwrap_or(0) != 0 {
                return bad(format!("indptr `{}` must start at 0", rt.name));
            }
            if values.windows(2).any(|w| w[0] > w[1]) {
                return bad(format!("indptr `{}` is not non-decreasing", rt.name));
            }
        }
    }
    Ok(())
}

/// Instantiates `g` with duration seed 0.
pub fn instantiate(
    g: &GraphFunction,
    b: &ShapeBinding,
    r: Option<&RoutingRealization>,
) -> Result<MaterializedTaskGraph, MaterializeError> {
    instantiate_seeded(g, b, r, 0)
}

/// Enumerates every task and event element of `g` under `b`, resolving
/// data-dependent edges through `r`. Durations are drawn with `seed`.
pub fn instantiate_seeded(
    g: &GraphFunction,
    b: &ShapeBinding,
    r: Option<&RoutingRealization>,
    seed: u64,
) -> Result<MaterializedTaskGraph, MaterializeError> {
    let diags = validate_graph(g);
    if !diags.is_empty() {
        return Err(MaterializeError::Invalid(diags));
    }
    let data_dependent = g.has_data_dependence();
    let realization = match (data_dependent, r) {
        (true, None) => return Err(MaterializeError::MissingRealization),
        (true, Some(r)) => {
            check_realization(g, b, r)?;
            Some(r)
        }
        (false, _) => None,
    };
    let runtime = |name: &str| -> &[i64] { realization.and_then(|r| r.get(name)).unwrap_or(&[]) };

    // Event store layout.
    let mut tensor_offsets = Vec::new();
    let mut tensor_shapes = Vec::new();
    let mut elements = Vec::new();
    for (ti, ev) in g.event_tensors.iter().enumerate() {
        let shape = eval_shape(&ev.shape, b)?;
        let len: u64 = shape.iter().product();
        tensor_offsets.push(elements.len());
        for flat in 0..len as usize {
            elements.push(EventElement { tensor: ti, flat, initial: 0, gates: Vec::new() });
        }
        tensor_shapes.push(shape);
    }

    let mut tasks = Vec::new();
    let mut extents_all = Vec::new();
    let mut call_ranges = Vec::new();
    let mut producers = Vec::new();
    let mut consumers = Vec::new();

    for (k, call) in g.calls.iter().enumerate() {
        let decl = g.device_function(&call.func).expect("validated");
        let grid = g.launch_grid(k).expect("validated");
        let mut extents = eval_shape(grid, b)?;
        if let Some(ptr) = &call.extent_from {
            let last = runtime(ptr).last().copied().unwrap_or(0) as u64;
            if last > extents[0] {
                return Err(MaterializeError::Inconsistent(format!(
                    "call {k}: `{ptr}` asks for {last} tasks, launch bound is {}",
                    extents[0]
                )));
            }
            extents[0] = last;
        }
        let start = tasks.len();
        for coords in grid_coords(&extents) {
            let id = tasks.len();
            let key = TaskKey { call: k, coords: coords.clone() };
            let mut local = b.clone();
            for (a, c) in coords.iter().enumerate() {
                local.insert(format!("t{a}"), *c as i64);
            }
            let flat_task = row_major(&coords, &extents);
            let resolve_static = |event: &str, index: &[crate::symshape::SymExpr]| -> Result<ElemId, MaterializeError> {
                let ti = g.event_index(event).expect("validated");
                let shape = &tensor_shapes[ti];
                let idx: Vec<i64> = index.iter().map(|e| e.eval(&local)).collect::<Result<_, _>>()?;
                if idx.iter().zip(shape).any(|(i, s)| *i as u64 >= *s) {
                    return Err(MaterializeError::OutOfBounds {
                        call: k,
                        task: key.to_string(),
                        event: event.to_string(),
                        index: idx,
                        shape: shape.clone(),
                    });
                }
                let as_u: Vec<u64> = idx.iter().map(|i| *i as u64).collect();
                Ok(tensor_offsets[ti] + row_major(&as_u, shape) as usize)
            };
            let rank1 = |event: &str, i: i64| -> Result<ElemId, MaterializeError> {
                let ti = g.event_index(event).expect("validated");
                let len = tensor_shapes[ti][0];
                if i < 0 || i as u64 >= len {
                    return Err(MaterializeError::OutOfBounds {
                        call: k,
                        task: key.to_string(),
                        event: event.to_string(),
                        index: vec![i],
                        shape: tensor_shapes[ti].clone(),
                    });
                }
                Ok(tensor_offsets[ti] + i as usize)
            };

            let mut waits = Vec::new();
            for edge in &call.in_edges {
                let elem = match &edge.map {
                    EdgeMap::Static { index } => resolve_static(&edge.event, index)?,
                    EdgeMap::RangeTrigger { indptr } => {
                        let ptr = runtime(indptr);
                        let t = coords[0] as i64;
                        // first i with ptr[i+1] > t
                        let i = ptr.partition_point(|v| *v <= t);
                        if i == 0 || i >= ptr.len() {
                            return Err(MaterializeError::Inconsistent(format!(
                                "task {key}: t0={t} is outside every range of `{indptr}`"
                            )));
                        }
                        rank1(&edge.event, i as i64 - 1)?
                    }
                    EdgeMap::DataDependentNotify { .. } => unreachable!("validated"),
                };
                waits.push(elem);
                consumers.push((elem, id));
            }
            let mut notifies = Vec::new();
            for edge in &call.out_edges {
                let elem = match &edge.map {
                    EdgeMap::Static { index } => resolve_static(&edge.event, index)?,
                    EdgeMap::DataDependentNotify { routing } => {
                        let table = runtime(routing);
                        let v = *table.get(flat_task as usize).ok_or_else(|| {
                            MaterializeError::Inconsistent(format!(
                                "task {key}: routing `{routing}` has no entry {flat_task}"
                            ))
                        })?;
                        rank1(&edge.event, v)?
                    }
                    EdgeMap::RangeTrigger { .. } => unreachable!("validated"),
                };
                notifies.push(elem);
                producers.push((id, elem));
            }

            let duration = decl.duration.eval(seed, k, &coords, 0)?;
            let prefetch = decl.prefetch.as_ref().map(|p| p.eval(seed, k, &coords, 1)).transpose()?;
            tasks.push(MaterializedTask {
                key,
                func: decl.name.clone(),
                resource: decl.resource,
                duration,
                prefetch,
                waits,
                notifies,
            });
        }
        call_ranges.push((start, tasks.len()));
        extents_all.push(extents);
    }

    // Producers must precede consumers in task order.
    {
        let mut first_consumer = vec![usize::MAX; elements.len()];
        for &(e, t) in &consumers {
            first_consumer[e] = first_consumer[e].min(t);
        }
        for &(t, e) in &producers {
            if t >= first_consumer[e] {
                return Err(MaterializeError::BackwardEdge {
                    producer: tasks[t].key.to_string(),
                    consumer: tasks[first_consumer[e]].key.to_string(),
                });
            }
        }
    }

    // Initial counts.
    let mut derived = vec![0u64; elements.len()];
    for &(_, e) in &producers {
        derived[e] += 1;
    }
    for (ti, ev) in g.event_tensors.iter().enumerate() {
        let off = tensor_offsets[ti];
        let len: u64 = tensor_shapes[ti].iter().product();
        match &ev.init {
            EventInit::DerivedCount => {
                for i in 0..len as usize {
                    elements[off + i].initial = derived[off + i];
                }
            }
            EventInit::DataDependent { counts } => {
                let values = runtime(counts);
                if values.len() as u64 != len {
                    return Err(MaterializeError::Inconsistent(format!(
                        "`{counts}` has {} entries, event `{}` has {len} elements",
                        values.len(),
                        ev.name
                    )));
                }
                let writer = g.runtime_writer_call(counts).expect("validated");
                for i in 0..len as usize {
                    let c = values[i] as u64;
                    if c != derived[off + i] {
                        return Err(MaterializeError::Inconsistent(format!(
                            "`{counts}`[{i}] = {c} but {} notifies target `{}`[{i}]",
                            derived[off + i],
                            ev.name
                        )));
                    }
                    elements[off + i].initial = c;
                    elements[off + i].gates.push(writer);
                }
            }
        }
    }
    // Indptr-triggered tensors are gated on the indptr writer.
    for call in &g.calls {
        for edge in &call.in_edges {
            if let EdgeMap::RangeTrigger { indptr } = &edge.map {
                let ti = g.event_index(&edge.event).expect("validated");
                let writer = g.runtime_writer_call(indptr).expect("validated");
                let off = tensor_offsets[ti];
                let len: u64 = tensor_shapes[ti].iter().product();
                for e in &mut elements[off..off + len as usize] {
                    if !e.gates.contains(&writer) {
                        e.gates.push(writer);
                    }
                }
            }
        }
    }

    Ok(MaterializedTaskGraph {
        binding: b.clone(),
        tasks,
        elements,
        tensor_offsets,
        tensor_names: g.event_tensors.iter().map(|e| e.name.clone()).collect(),
        extents: extents_all,
        call_ranges,
        producers,
        consumers,
    })
}

/// Topological order of tasks through producer -> element -> consumer edges.
fn topo_order(m: &MaterializedTaskGraph) -> Result<Vec<TaskId>, MaterializeError> {
    let n_tasks = m.tasks.len();
    let producers = m.producers_by_elem();
    let consumers = m.consumers_by_elem();
    // Node ids: tasks [0, n_tasks), elements [n_tasks, ..).
    let mut indeg = vec![0usize; n_tasks + m.elements.len()];
    for (t, task) in m.tasks.iter().enumerate() {
        indeg[t] = dedup(&task.waits).len();
    }
    for (e, ps) in producers.iter().enumerate() {
        indeg[n_tasks + e] = ps.len();
    }
    let mut queue: VecDeque<usize> = (0..indeg.len()).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n_tasks);
    let mut seen = 0;
    while let Some(v) = queue.pop_front() {
        seen += 1;
        if v < n_tasks {
            order.push(v);
            for &e in &m.tasks[v].notifies {
                let node = n_tasks + e;
                indeg[node] -= 1;
                if indeg[node] == 0 {
                    queue.push_back(node);
                }
            }
        } else {
            for &c in &consumers[v - n_tasks] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
    }
    if seen != indeg.len() {
        return Err(MaterializeError::Cycle);
    }
    Ok(order)
}

fn dedup(xs: &[ElemId]) -> Vec<ElemId> {
    let set: BTreeSet<ElemId> = xs.iter().copied().collect();
    set.into_iter().collect()
}

/// Longest duration-weighted path through the task graph. Events add no time.
pub fn critical_path(m: &MaterializedTaskGraph) -> Result<Time, MaterializeError> {
    let order = topo_order(m)?;
    let producers = m.producers_by_elem();
    let mut finish = vec![0 as Time; m.tasks.len()];
    let mut elem_ready = vec![None::<Time>; m.elements.len()];
    let mut best = 0;
    for t in order {
        let start = m.tasks[t]
            .waits
            .iter()
            .map(|&e| {
                *elem_ready[e].get_or_insert_with(|| producers[e].iter().map(|&p| finish[p]).max().unwrap_or(0))
            })
            .max()
            .unwrap_or(0);
        finish[t] = start + m.tasks[t].duration;
        best = best.max(finish[t]);
    }
    Ok(best)
}

/// Makespan of greedy list scheduling on `num_sms` SMs plus one DMA channel.
/// At every completion time, ready tasks are assigned in task-id order to
/// idle resources of their class (lowest index first).
pub fn list_schedule(m: &MaterializedTaskGraph, num_sms: usize) -> Time {
    assert!(num_sms >= 1, "need at least one SM");
    let producers = m.producers_by_elem();
    let consumers = m.consumers_by_elem();
    let mut remaining: Vec<usize> = producers.iter().map(Vec::len).collect();
    let mut pending: Vec<usize> = m.tasks.iter().map(|t| dedup(&t.waits).len()).collect();
    let mut ready: BTreeSet<TaskId> = BTreeSet::new();
    // Elements with no producers are triggered from the start.
    let mut triggered = vec![false; m.elements.len()];
    for (e, r) in remaining.iter().enumerate() {
        if *r == 0 {
            triggered[e] = true;
        }
    }
    for (t, task) in m.tasks.iter().enumerate() {
        pending[t] = dedup(&task.waits).into_iter().filter(|e| !triggered[*e]).count();
        if pending[t] == 0 {
            ready.insert(t);
        }
    }
    let mut sm_free = vec![true; num_sms];
    let mut dma_free = true;
    // (finish time, resource slot, task)
    let mut running: BTreeSet<(Time, usize, TaskId)> = BTreeSet::new();
    let mut now: Time = 0;
    let mut makespan = 0;
    loop {
        // Assign.
        let snapshot: Vec<TaskId> = ready.iter().copied().collect();
        for t in snapshot {
            let slot = match m.tasks[t].resource {
                ResourceClass::Sm => sm_free.iter().position(|f| *f).inspect(|&s| sm_free[s] = false),
                ResourceClass::Dma => dma_free.then(|| {
                    dma_free = false;
                    num_sms
                }),
            };
            if let Some(slot) = slot {
                ready.remove(&t);
                running.insert((now + m.tasks[t].duration, slot, t));
            }
        }
        let Some(&(next, _, _)) = running.iter().next() else { break };
        now = next;
        makespan = makespan.max(now);
        while let Some(&(f, slot, t)) = running.iter().next() {
            if f != now {
                break;
            }
            running.remove(&(f, slot, t));
            if slot == num_sms {
                dma_free = true;
            } else {
                sm_free[slot] = true;
            }
            for &e in &m.tasks[t].notifies {
                remaining[e] -= 1;
                if remaining[e] == 0 {
                    for &c in &consumers[e] {
                        pending[c] -= 1;
                        if pending[c] == 0 {
                            ready.insert(c);
                        }
                    }
                }
            }
        }
    }
    makespan
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Missing { task: TaskKey },
    Duplicate { task: TaskKey },
    Unknown { task: TaskKey },
    Dependency { consumer: TaskKey, event: String, start: Time, producer: TaskKey, producer_end: Time },
    Overlap { resource: usize, first: TaskKey, second: TaskKey },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Missing { task } => write!(f, "task {task} never executed"),
            Violation::Duplicate { task } => write!(f, "task {task} executed more than once"),
            Violation::Unknown { task } => write!(f, "task {task} is not part of the graph"),
            Violation::Dependency { consumer, event, start, producer, producer_end } => write!(
                f,
                "task {consumer} started at {start} but producer {producer} of {event} finished at {producer_end}"
            ),
            Violation::Overlap { resource, first, second } => {
                write!(f, "tasks {first} and {second} overlap on resource {resource}")
            }
        }
    }
}

/// Checks a trace against the task graph it should realize. Empty = correct.
pub fn check_trace(trace: &Trace, m: &MaterializedTaskGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    let index = m.task_index();
    let mut exec: Vec<Option<(Time, Time)>> = vec![None; m.tasks.len()];
    for rec in trace.executed() {
        let Some(&t) = index.get(&rec.key) else {
            out.push(Violation::Unknown { task: rec.key.clone() });
            continue;
        };
        let Some(iv) = rec.exec else {
            continue;
        };
        if exec[t].is_some() {
            out.push(Violation::Duplicate { task: rec.key.clone() });
            continue;
        }
        exec[t] = Some((iv.start, iv.end));
    }
    for (t, task) in m.tasks.iter().enumerate() {
        if exec[t].is_none() {
            out.push(Violation::Missing { task: task.key.clone() });
        }
    }
    let producers = m.producers_by_elem();
    for (t, task) in m.tasks.iter().enumerate() {
        let Some((start, _)) = exec[t] else { continue };
        for e in dedup(&task.waits) {
            let late = producers[e]
                .iter()
                .filter_map(|&p| exec[p].map(|(_, end)| (end, p)))
                .max();
            if let Some((end, p)) = late {
                if end > start {
                    let el = &m.elements[e];
                    out.push(Violation::Dependency {
                        consumer: task.key.clone(),
                        event: format!("{}[{}]", m.tensor_names[el.tensor], el.flat),
                        start,
                        producer: m.tasks[p].key.clone(),
                        producer_end: end,
                    });
                }
            }
        }
    }
    let mut per_resource: BTreeMap<usize, Vec<(Time, Time, &TaskKey)>> = BTreeMap::new();
    for rec in trace.executed() {
        if let Some(iv) = rec.exec {
            if iv.end > iv.start {
                per_resource.entry(rec.resource).or_default().push((iv.start, iv.end, &rec.key));
            }
        }
    }
    for (res, mut ivs) in per_resource {
        ivs.sort();
        for w in ivs.windows(2) {
            if w[1].0 < w[0].1 {
                out.push(Violation::Overlap { resource: res, first: w[0].2.clone(), second: w[1].2.clone() });
            }
        }
    }
    out
}
