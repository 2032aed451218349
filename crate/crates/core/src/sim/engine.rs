use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use super::{Dispatch, Op, Program, SimConfig, SimError};
use crate::duration::Time;
use crate::ir::ResourceClass;
use crate::trace::{Interval, Phase, PhaseInterval, SchedEvent, SchedEventKind, TaskRecord, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    Step { gen: u64 },
    Decrement { elem: usize, task: usize },
}

#[derive(Debug, Clone, Copy)]
struct Running {
    task: usize,
    pc: usize,
    prefetch_done: Time,
    exec_end_pending: bool,
    blocked_since: Option<Time>,
}

#[derive(Debug, Default)]
struct Res {
    running: Option<Running>,
    gen: u64,
    qpos: usize,
    idle_since: Option<Time>,
    wake_at: Option<Time>,
}

struct Engine<'a> {
    p: &'a Program,
    cfg: &'a SimConfig,
    now: Time,
    seq: u64,
    heap: BinaryHeap<Reverse<(Time, usize, u64, Ev)>>,
    counters: Vec<Option<u64>>,
    gates_left: Vec<usize>,
    dispatch_left: Vec<u64>,
    triggered: Vec<bool>,
    dispatch_triggered: Vec<bool>,
    consumers: Vec<Vec<usize>>,
    pending: Vec<usize>,
    waiters: Vec<Vec<usize>>,
    res: Vec<Res>,
    /// Ready queues (SM, DMA): task and the time it becomes visible.
    ready: [VecDeque<(usize, Time)>; 2],
    call_exec_left: Vec<usize>,
    gated_by_call: Vec<Vec<usize>>,
    task_push: Vec<Vec<(usize, Vec<usize>)>>,
    trace: Trace,
    finished: usize,
    steps: u64,
    /// While set, released tasks are left for the initial ready scan.
    launching: bool,
}

fn align(since: Time, at: Time, q: Time) -> Time {
    if at <= since {
        since
    } else {
        since + (at - since).div_ceil(q) * q
    }
}

pub(crate) fn run(p: &Program, cfg: &SimConfig) -> Result<Trace, SimError> {
    let mut e = Engine::new(p, cfg);
    e.start();
    while let Some(Reverse((t, r, _, ev))) = e.heap.pop() {
        e.steps += 1;
        if e.steps > cfg.step_limit {
            return Err(SimError::StepLimit(cfg.step_limit));
        }
        e.now = t;
        match ev {
            Ev::Step { gen } => {
                if gen == e.res[r].gen {
                    e.res[r].wake_at = None;
                    e.step(r)?;
                }
            }
            Ev::Decrement { elem, task } => e.decrement(elem, task)?,
        }
    }
    e.finish()
}

impl<'a> Engine<'a> {
    fn new(p: &'a Program, cfg: &'a SimConfig) -> Self {
        let n_el = p.elems.len();
        let mut consumers = vec![Vec::new(); n_el];
        for (t, task) in p.tasks.iter().enumerate() {
            for &d in &task.deps {
                consumers[d].push(t);
            }
        }
        let mut gated_by_call = vec![Vec::new(); p.num_calls];
        for (i, el) in p.elems.iter().enumerate() {
            for &c in &el.gates {
                gated_by_call[c].push(i);
            }
        }
        let mut call_exec_left = vec![0; p.num_calls];
        for t in &p.tasks {
            if !t.masked {
                call_exec_left[t.key.call] += 1;
            }
        }
        let mut resources = Vec::new();
        resources.extend((0..p.num_sms).map(|i| format!("SM{i}")));
        resources.push("DMA".to_string());
        let tasks = p
            .tasks
            .iter()
            .map(|t| TaskRecord {
                key: t.key.clone(),
                func: t.func.clone(),
                resource: 0,
                masked: t.masked,
                dispatch: 0,
                exec: None,
                end: 0,
            })
            .collect();
        Engine {
            p,
            cfg,
            now: 0,
            seq: 0,
            heap: BinaryHeap::new(),
            counters: p.elems.iter().map(|e| (!e.needs_init).then_some(e.initial)).collect(),
            gates_left: p.elems.iter().map(|e| e.gates.len()).collect(),
            dispatch_left: p.elems.iter().map(|e| e.producers).collect(),
            triggered: vec![false; n_el],
            dispatch_triggered: vec![false; n_el],
            consumers,
            pending: p.tasks.iter().map(|t| t.deps.len()).collect(),
            waiters: vec![Vec::new(); n_el],
            res: (0..=p.num_sms).map(|_| Res::default()).collect(),
            ready: [VecDeque::new(), VecDeque::new()],
            call_exec_left,
            gated_by_call,
            task_push: vec![Vec::new(); p.tasks.len()],
            trace: Trace { mode: p.mode.clone(), resources, tasks, ..Trace::default() },
            finished: 0,
            steps: 0,
            launching: true,
        }
    }

    fn dma(&self) -> usize {
        self.p.num_sms
    }

    fn early_push(&self) -> bool {
        matches!(self.p.dispatch, Dispatch::Dynamic { early_push: true })
    }

    fn schedule(&mut self, at: Time, r: usize, ev: Ev) {
        self.seq += 1;
        self.heap.push(Reverse((at, r, self.seq, ev)));
    }

    fn schedule_step(&mut self, r: usize, at: Time) {
        self.res[r].gen += 1;
        let gen = self.res[r].gen;
        self.schedule(at, r, Ev::Step { gen });
    }

    fn interval(&mut self, task: Option<usize>, r: usize, phase: Phase, start: Time, end: Time) {
        // discrete operations are kept even when free so they can be counted
        if end > start || matches!(phase, Phase::Wait | Phase::Notify | Phase::Push | Phase::Pop) {
            self.trace.intervals.push(PhaseInterval { task, resource: r, phase, start, end });
        }
    }

    fn event(&mut self, time: Time, kind: SchedEventKind, r: Option<usize>, task: Option<usize>) {
        let task = task.map(|t| self.p.tasks[t].key.clone());
        self.trace.events.push(SchedEvent { time, kind, resource: r, task });
    }

    fn start(&mut self) {
        for e in 0..self.p.elems.len() {
            self.check_trigger(e, None);
            if self.early_push() {
                self.check_dispatch(e);
            }
        }
        match &self.p.dispatch {
            Dispatch::Static { sm_queues, dma_queue } => {
                self.launching = false;
                for (r, q) in sm_queues.iter().chain(std::iter::once(dma_queue)).enumerate() {
                    if !q.is_empty() {
                        self.schedule_step(r, 0);
                    }
                }
            }
            Dispatch::Dynamic { .. } => {
                self.launching = false;
                let initial: Vec<usize> = (0..self.p.tasks.len()).filter(|&t| self.pending[t] == 0).collect();
                self.enqueue(&initial, 0, 0);
                for r in 0..=self.p.num_sms {
                    self.schedule_step(r, 0);
                }
            }
        }
    }

    /// Adds tasks to their ready queues; item `j` becomes visible at
    /// `t0 + (j+1) * cost`.
    fn enqueue(&mut self, tasks: &[usize], t0: Time, cost: Time) {
        for (j, &t) in tasks.iter().enumerate() {
            let visible = t0 + (j as Time + 1) * cost;
            let class = usize::from(self.p.tasks[t].resource == ResourceClass::Dma);
            self.ready[class].push_back((t, visible));
            self.event(visible, SchedEventKind::Push, None, Some(t));
            let targets: Vec<usize> = if class == 1 { vec![self.dma()] } else { (0..self.p.num_sms).collect() };
            for r in targets {
                self.wake_idle(r, visible);
            }
        }
    }

    fn wake_idle(&mut self, r: usize, visible: Time) {
        let Some(since) = self.res[r].idle_since else { return };
        if self.res[r].running.is_some() {
            return;
        }
        let tick = align(since, visible.max(self.now), self.cfg.poll_quantum);
        if self.res[r].wake_at.is_some_and(|w| w <= tick) {
            return;
        }
        self.res[r].wake_at = Some(tick);
        self.schedule_step(r, tick);
    }

    fn begin(&mut self, r: usize, task: usize, at: Time) {
        self.res[r].running =
            Some(Running { task, pc: 0, prefetch_done: 0, exec_end_pending: false, blocked_since: None });
        let rec = &mut self.trace.tasks[task];
        rec.resource = r;
        rec.dispatch = at;
    }

    /// Gives an idle resource its next task. Returns true if the resource
    /// can continue immediately.
    fn acquire(&mut self, r: usize) -> bool {
        match &self.p.dispatch {
            Dispatch::Static { sm_queues, dma_queue } => {
                let q = if r == self.p.num_sms { dma_queue } else { &sm_queues[r] };
                let pos = self.res[r].qpos;
                if pos < q.len() {
                    let task = q[pos];
                    self.res[r].qpos += 1;
                    self.begin(r, task, self.now);
                    true
                } else {
                    false
                }
            }
            Dispatch::Dynamic { .. } => {
                let class = usize::from(r == self.dma());
                let now = self.now;
                let found = self.ready[class].iter().position(|&(_, v)| v <= now);
                match found {
                    Some(i) => {
                        let (task, _) = self.ready[class].remove(i).expect("present");
                        if let Some(since) = self.res[r].idle_since.take() {
                            if class == 0 {
                                let q = self.cfg.poll_quantum;
                                let mut t = since;
                                while t < now {
                                    self.event(t, SchedEventKind::EmptyPoll, Some(r), None);
                                    t += q;
                                }
                            }
                        }
                        self.event(now, SchedEventKind::Pop, Some(r), Some(task));
                        let cost = if class == 0 { self.cfg.pop_cost } else { 0 };
                        self.interval(Some(task), r, Phase::Pop, now, now + cost);
                        self.begin(r, task, now + cost);
                        if cost > 0 {
                            self.schedule_step(r, now + cost);
                            false
                        } else {
                            true
                        }
                    }
                    None => {
                        if self.res[r].idle_since.is_none() {
                            self.res[r].idle_since = Some(now);
                        }
                        let next = self.ready[class].iter().map(|&(_, v)| v).min();
                        if let Some(v) = next {
                            self.wake_idle(r, v);
                        }
                        false
                    }
                }
            }
        }
    }

    fn step(&mut self, r: usize) -> Result<(), SimError> {
        loop {
            let Some(mut run) = self.res[r].running else {
                if !self.acquire(r) {
                    return Ok(());
                }
                continue;
            };
            let p = self.p;
            let task = &p.tasks[run.task];
            if run.exec_end_pending {
                run.exec_end_pending = false;
                self.res[r].running = Some(run);
                self.exec_finished(run.task);
            }
            if run.pc == task.ops.len() {
                self.trace.tasks[run.task].end = self.now;
                self.finished += 1;
                self.res[r].running = None;
                continue;
            }
            let now = self.now;
            match task.ops[run.pc] {
                Op::Prefetch => {
                    if !task.masked {
                        if let Some(p) = task.prefetch {
                            run.prefetch_done = now + p;
                            self.interval(Some(run.task), r, Phase::Prefetch, now, now + p);
                        }
                    }
                    run.pc += 1;
                    self.res[r].running = Some(run);
                }
                Op::Wait(e) => {
                    if self.triggered[e] {
                        if let Some(s) = run.blocked_since.take() {
                            self.interval(Some(run.task), r, Phase::Wait, s, now);
                        }
                        run.pc += 1;
                        self.res[r].running = Some(run);
                    } else {
                        if run.blocked_since.is_none() {
                            run.blocked_since = Some(now);
                            self.waiters[e].push(r);
                        }
                        self.res[r].running = Some(run);
                        return Ok(());
                    }
                }
                Op::Exec => {
                    if task.masked {
                        run.pc += 1;
                        self.res[r].running = Some(run);
                        continue;
                    }
                    if run.prefetch_done > now {
                        self.interval(Some(run.task), r, Phase::Stall, now, run.prefetch_done);
                        let at = run.prefetch_done;
                        self.res[r].running = Some(run);
                        self.schedule_step(r, at);
                        return Ok(());
                    }
                    let end = now + task.duration;
                    self.trace.tasks[run.task].exec = Some(Interval { start: now, end });
                    self.interval(Some(run.task), r, Phase::Exec, now, end);
                    run.exec_end_pending = true;
                    run.pc += 1;
                    self.res[r].running = Some(run);
                    if self.early_push() {
                        for op in &task.ops {
                            if let Op::Notify(e) = *op {
                                self.dispatch_left[e] -= 1;
                                self.check_dispatch(e);
                            }
                        }
                    }
                    self.schedule_step(r, end);
                    return Ok(());
                }
                Op::Notify(e) => {
                    let c = self.cfg.notify_cost;
                    self.interval(Some(run.task), r, Phase::Notify, now, now + c);
                    self.schedule(now + c, r, Ev::Decrement { elem: e, task: run.task });
                    run.pc += 1;
                    self.res[r].running = Some(run);
                    self.schedule_step(r, now + c);
                    return Ok(());
                }
                Op::CompleteOn(e) => {
                    run.pc += 1;
                    self.res[r].running = Some(run);
                    let slot = self.task_push[run.task].iter().position(|(el, _)| *el == e);
                    let list = slot.map(|i| self.task_push[run.task].remove(i).1).unwrap_or_default();
                    if !list.is_empty() {
                        let c = self.cfg.push_cost;
                        let end = now + c * list.len() as Time;
                        self.interval(Some(run.task), r, Phase::Push, now, end);
                        self.enqueue(&list, now, c);
                        if end > now {
                            self.schedule_step(r, end);
                            return Ok(());
                        }
                    }
                }
            }
        }
    }

    fn exec_finished(&mut self, task: usize) {
        let call = self.p.tasks[task].key.call;
        self.call_exec_left[call] -= 1;
        if self.call_exec_left[call] > 0 || self.gated_by_call[call].is_empty() {
            return;
        }
        self.event(self.now, SchedEventKind::Publish, None, Some(task));
        for e in self.gated_by_call[call].clone() {
            self.gates_left[e] -= 1;
            if self.gates_left[e] == 0 {
                if self.p.elems[e].needs_init {
                    self.counters[e] = Some(self.p.elems[e].initial);
                }
                self.check_trigger(e, None);
                if self.early_push() {
                    self.check_dispatch(e);
                }
            }
        }
    }

    fn decrement(&mut self, e: usize, task: usize) -> Result<(), SimError> {
        let label = || (self.p.elems[e].label.clone(), self.p.tasks[task].key.to_string());
        match self.counters[e] {
            None => {
                let (elem, task) = label();
                Err(SimError::NotifyBeforeInit { elem, task })
            }
            Some(0) => {
                let (elem, task) = label();
                Err(SimError::Underflow { elem, task })
            }
            Some(v) => {
                self.counters[e] = Some(v - 1);
                if v == 1 {
                    self.check_trigger(e, Some(task));
                }
                Ok(())
            }
        }
    }

    /// Fires element `e` once its counter is zero and its runtime values are
    /// published. `by` is the task whose notify fired it; that task pushes
    /// the newly ready consumers itself.
    fn check_trigger(&mut self, e: usize, by: Option<usize>) {
        if self.triggered[e] || self.counters[e] != Some(0) || self.gates_left[e] > 0 {
            return;
        }
        self.triggered[e] = true;
        let q = self.cfg.poll_quantum;
        for r in std::mem::take(&mut self.waiters[e]) {
            let since = self.res[r].running.and_then(|x| x.blocked_since).unwrap_or(self.now);
            let at = align(since, self.now, q);
            self.schedule_step(r, at);
        }
        if matches!(self.p.dispatch, Dispatch::Dynamic { early_push: false }) {
            let ready = self.release(e);
            match by {
                Some(t) => self.task_push[t].push((e, ready)),
                None if self.launching => {}
                None => self.enqueue(&ready, self.now, 0),
            }
        }
    }

    fn check_dispatch(&mut self, e: usize) {
        if self.dispatch_triggered[e] || self.dispatch_left[e] > 0 || self.gates_left[e] > 0 {
            return;
        }
        self.dispatch_triggered[e] = true;
        let ready = self.release(e);
        if !self.launching {
            self.enqueue(&ready, self.now, self.cfg.push_cost);
        }
    }

    fn release(&mut self, e: usize) -> Vec<usize> {
        let mut ready = Vec::new();
        for &c in &self.consumers[e] {
            self.pending[c] -= 1;
            if self.pending[c] == 0 {
                ready.push(c);
            }
        }
        ready
    }

    fn finish(mut self) -> Result<Trace, SimError> {
        if self.finished < self.p.tasks.len() {
            let mut blocked = Vec::new();
            for (r, res) in self.res.iter().enumerate() {
                if let Some(run) = res.running {
                    let task = &self.p.tasks[run.task];
                    let what = match task.ops.get(run.pc) {
                        Some(Op::Wait(e)) => format!(
                            "waiting on {} (count {})",
                            self.p.elems[*e].label,
                            self.counters[*e].map_or("unset".to_string(), |c| c.to_string())
                        ),
                        _ => "stalled".to_string(),
                    };
                    blocked.push(format!("{} in task {} {}", self.trace.resources[r], task.key, what));
                }
            }
            let never = self.p.tasks.len() - self.finished - blocked.len();
            if never > 0 {
                blocked.push(format!("{never} task(s) never started"));
            }
            return Err(SimError::Deadlock { time: self.now, blocked });
        }
        let makespan = self.trace.tasks.iter().map(|t| t.end).max().unwrap_or(0);
        if let Dispatch::Dynamic { .. } = self.p.dispatch {
            for r in 0..self.p.num_sms {
                if let Some(since) = self.res[r].idle_since {
                    let mut t = since;
                    while t < makespan {
                        self.event(t, SchedEventKind::EmptyPoll, Some(r), None);
                        t += self.cfg.poll_quantum;
                    }
                }
            }
        }
        self.trace.makespan = makespan;
        self.trace.final_counters = self.counters.iter().map(|c| c.unwrap_or(0)).collect();
        self.trace.events.sort_by_key(|e| e.time);
        Ok(self.trace)
    }
}
