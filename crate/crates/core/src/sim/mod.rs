//! Deterministic discrete-event simulation of N SMs plus one DMA channel
//! executing a compiled megakernel.

mod engine;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::duration::{DurationError, Time};
use crate::ir::{EventInit, GraphFunction, ResourceClass};
use crate::kernel::CompiledKernel;
use crate::materialize::{instantiate_seeded, MaterializeError, MaterializedTaskGraph, RoutingRealization, TaskKey};
use crate::sched_dynamic::{DynamicMegakernel, TemplateInstr};
use crate::sched_static::{select_queues, Instr, SelectError, StaticMegakernel};
use crate::symshape::ShapeBinding;
use crate::trace::Trace;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub num_sms: usize,
    pub notify_cost: Time,
    pub pop_cost: Time,
    pub push_cost: Time,
    /// Spin-waits and empty-queue polls re-check at multiples of this.
    pub poll_quantum: Time,
    pub seed: u64,
    pub step_limit: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_sms: 4,
            notify_cost: 0,
            pop_cost: 0,
            push_cost: 0,
            poll_quantum: 1,
            seed: 0,
            step_limit: 50_000_000,
        }
    }
}

impl SimError {
    /// Errors caused by the inputs rather than by a failed run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            SimError::Config(_)
                | SimError::Materialize(_)
                | SimError::Select(_)
                | SimError::Duration(_)
                | SimError::MissingRealization
        )
    }
}

impl SimConfig {
    pub fn with_sms(num_sms: usize) -> Self {
        SimConfig { num_sms, ..SimConfig::default() }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.num_sms == 0 {
            return Err(SimError::Config("num_sms must be at least 1".into()));
        }
        if self.poll_quantum == 0 {
            return Err(SimError::Config("poll_quantum must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("bad config: {0}")]
    Config(String),
    #[error(transparent)]
    Materialize(#[from] MaterializeError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Duration(#[from] DurationError),
    #[error("kernel has guarded launches; a routing realization is required")]
    MissingRealization,
    #[error("deadlock at time {time}: {}", blocked.join("; "))]
    Deadlock { time: Time, blocked: Vec<String> },
    #[error("step limit of {0} events exceeded")]
    StepLimit(u64),
    #[error("counter {elem} underflowed when notified by {task}")]
    Underflow { elem: String, task: String },
    #[error("{task} notified {elem} before its count was published")]
    NotifyBeforeInit { elem: String, task: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Op {
    Prefetch,
    Wait(usize),
    Exec,
    Notify(usize),
    CompleteOn(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct SimTask {
    pub key: TaskKey,
    pub func: String,
    pub resource: ResourceClass,
    pub duration: Time,
    pub prefetch: Option<Time>,
    pub masked: bool,
    pub ops: Vec<Op>,
    /// Distinct elements that must fire before a dynamic push.
    pub deps: Vec<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct SimElem {
    pub label: String,
    pub initial: u64,
    /// Count is unknown until every gate call has finished EXEC.
    pub needs_init: bool,
    pub gates: Vec<usize>,
    pub producers: u64,
}

#[derive(Debug, Clone)]
pub(crate) enum Dispatch {
    Static { sm_queues: Vec<Vec<usize>>, dma_queue: Vec<usize> },
    Dynamic { early_push: bool },
}

#[derive(Debug, Clone)]
pub(crate) struct Program {
    pub mode: String,
    pub num_sms: usize,
    pub tasks: Vec<SimTask>,
    pub elems: Vec<SimElem>,
    pub dispatch: Dispatch,
    pub num_calls: usize,
}

fn durations(g: &GraphFunction, key: &TaskKey, seed: u64, prefetch: bool) -> Result<(Time, Option<Time>), SimError> {
    let decl = g.device_function(&g.calls[key.call].func).expect("validated");
    let mut d = decl.duration.eval(seed, key.call, &key.coords, 0)?;
    let mut p = decl.prefetch.as_ref().map(|m| m.eval(seed, key.call, &key.coords, 1)).transpose()?;
    if !prefetch {
        d += p.take().unwrap_or(0);
    }
    Ok((d, p))
}

fn static_program(
    k: &StaticMegakernel,
    binding: &ShapeBinding,
    realization: Option<&RoutingRealization>,
    cfg: &SimConfig,
) -> Result<Program, SimError> {
    if cfg.num_sms != k.num_sms {
        return Err(SimError::Config(format!(
            "kernel was compiled for {} SMs, config asks for {}",
            k.num_sms, cfg.num_sms
        )));
    }
    let g = &k.graph;
    let sel = select_queues(k, binding)?;
    let mut guard_limit = vec![None; g.calls.len()];
    for (call, c) in g.calls.iter().enumerate() {
        if let Some(ptr) = &c.guard {
            let r = realization.ok_or(SimError::MissingRealization)?;
            let values = r.get(ptr).ok_or(SimError::MissingRealization)?;
            guard_limit[call] = Some(values.last().copied().unwrap_or(0).max(0) as u64);
        }
    }
    let s = sel.schedule;
    let mut tasks = Vec::new();
    let mut sm_queues = Vec::new();
    let queues = s.sm_queues.iter().zip(&sel.sm_masks).chain(std::iter::once((&s.dma_queue, &sel.dma_mask)));
    let mut dma_queue = Vec::new();
    for (qi, (queue, mask)) in queues.enumerate() {
        let mut ids = Vec::new();
        for (entry, &masked) in queue.iter().zip(mask) {
            let key = entry.key();
            let masked = masked || guard_limit[entry.call].is_some_and(|l| key.coords[0] >= l);
            let (duration, prefetch) = durations(g, &key, cfg.seed, k.prefetch)?;
            let ops = entry
                .instrs
                .iter()
                .map(|i| match *i {
                    Instr::Prefetch => Op::Prefetch,
                    Instr::Wait { elem } => Op::Wait(elem),
                    Instr::Exec => Op::Exec,
                    Instr::Notify { elem } => Op::Notify(elem),
                })
                .collect();
            ids.push(tasks.len());
            tasks.push(SimTask {
                func: g.calls[entry.call].func.clone(),
                resource: if qi < k.num_sms { ResourceClass::Sm } else { ResourceClass::Dma },
                key,
                duration,
                prefetch,
                masked,
                ops,
                deps: Vec::new(),
            });
        }
        if qi < k.num_sms {
            sm_queues.push(ids);
        } else {
            dma_queue = ids;
        }
    }
    let elems = (0..s.layout.initial.len())
        .map(|e| SimElem {
            label: s.layout.label(e),
            initial: s.layout.initial[e],
            needs_init: false,
            gates: Vec::new(),
            producers: s.layout.initial[e],
        })
        .collect();
    Ok(Program {
        mode: "static".into(),
        num_sms: k.num_sms,
        tasks,
        elems,
        dispatch: Dispatch::Static { sm_queues, dma_queue },
        num_calls: g.calls.len(),
    })
}

fn elements_of(g: &GraphFunction, m: &MaterializedTaskGraph) -> Vec<SimElem> {
    let producers = m.producers_by_elem();
    m.elements
        .iter()
        .enumerate()
        .map(|(i, e)| SimElem {
            label: format!("{}[{}]", m.tensor_names[e.tensor], e.flat),
            initial: e.initial,
            needs_init: matches!(g.event_tensors[e.tensor].init, EventInit::DataDependent { .. }),
            gates: e.gates.clone(),
            producers: producers[i].len() as u64,
        })
        .collect()
}

fn distinct(xs: &[usize]) -> Vec<usize> {
    let mut v = xs.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

fn dynamic_program(
    k: &DynamicMegakernel,
    binding: &ShapeBinding,
    realization: Option<&RoutingRealization>,
    cfg: &SimConfig,
) -> Result<Program, SimError> {
    let g = &k.graph;
    let m = instantiate_seeded(g, binding, realization, cfg.seed)?;
    let mut tasks = Vec::with_capacity(m.tasks.len());
    for t in &m.tasks {
        let (duration, prefetch) = durations(g, &t.key, cfg.seed, k.prefetch)?;
        let ops = k.templates[t.key.call]
            .instrs
            .iter()
            .map(|i| match *i {
                TemplateInstr::Prefetch => Op::Prefetch,
                TemplateInstr::Wait { edge } => Op::Wait(t.waits[edge]),
                TemplateInstr::Exec => Op::Exec,
                TemplateInstr::Notify { edge } => Op::Notify(t.notifies[edge]),
                TemplateInstr::CompleteOn { edge } => Op::CompleteOn(t.notifies[edge]),
            })
            .collect();
        tasks.push(SimTask {
            key: t.key.clone(),
            func: t.func.clone(),
            resource: t.resource,
            duration,
            prefetch,
            masked: false,
            ops,
            deps: distinct(&t.waits),
        });
    }
    Ok(Program {
        mode: if k.early_push { "dynamic+early_push" } else { "dynamic" }.into(),
        num_sms: cfg.num_sms,
        tasks,
        elems: elements_of(g, &m),
        dispatch: Dispatch::Dynamic { early_push: k.early_push },
        num_calls: g.calls.len(),
    })
}

/// Runs a compiled kernel for one shape binding (and routing realization,
/// when the graph is data-dependent).
pub fn simulate(
    kernel: &CompiledKernel,
    binding: &ShapeBinding,
    realization: Option<&RoutingRealization>,
    cfg: &SimConfig,
) -> Result<Trace, SimError> {
    cfg.validate()?;
    let program = match kernel {
        CompiledKernel::Static(k) => static_program(k, binding, realization, cfg)?,
        CompiledKernel::Dynamic(k) => dynamic_program(k, binding, realization, cfg)?,
    };
    engine::run(&program, cfg)
}

/// Unfused reference: each call waits for the previous non-empty call to
/// finish entirely; tasks inside a call are scheduled greedily from the
/// ready queue.
pub fn simulate_barrier_baseline(
    g: &GraphFunction,
    binding: &ShapeBinding,
    realization: Option<&RoutingRealization>,
    cfg: &SimConfig,
) -> Result<Trace, SimError> {
    cfg.validate()?;
    let m = instantiate_seeded(g, binding, realization, cfg.seed)?;
    let nonempty: Vec<usize> = (0..g.calls.len()).filter(|&c| m.call_ranges[c].1 > m.call_ranges[c].0).collect();
    let mut elems = Vec::new();
    // barrier_of[call] = element that call waits on; next_of[call] = element it notifies
    let mut barrier_of = vec![None; g.calls.len()];
    let mut next_of = vec![None; g.calls.len()];
    for w in nonempty.windows(2) {
        let (prev, call) = (w[0], w[1]);
        let count = (m.call_ranges[prev].1 - m.call_ranges[prev].0) as u64;
        barrier_of[call] = Some(elems.len());
        next_of[prev] = Some(elems.len());
        elems.push(SimElem {
            label: format!("barrier[{call}]"),
            initial: count,
            needs_init: false,
            gates: Vec::new(),
            producers: count,
        });
    }
    let mut tasks = Vec::with_capacity(m.tasks.len());
    for t in &m.tasks {
        let call = t.key.call;
        let mut ops = Vec::new();
        if t.prefetch.is_some() {
            ops.push(Op::Prefetch);
        }
        ops.push(Op::Exec);
        if let Some(e) = next_of[call] {
            ops.push(Op::Notify(e));
            ops.push(Op::CompleteOn(e));
        }
        tasks.push(SimTask {
            key: t.key.clone(),
            func: t.func.clone(),
            resource: t.resource,
            duration: t.duration,
            prefetch: t.prefetch,
            masked: false,
            ops,
            deps: barrier_of[call].into_iter().collect(),
        });
    }
    let program = Program {
        mode: "barrier".into(),
        num_sms: cfg.num_sms,
        tasks,
        elems,
        dispatch: Dispatch::Dynamic { early_push: false },
        num_calls: g.calls.len(),
    };
    engine::run(&program, cfg)
}

#[cfg(test)]
mod tests;
