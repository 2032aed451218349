//! Reference computations used to check the simulator from the outside.
#![allow(dead_code)]

use std::collections::{HashMap, HashSet};

use evtensor::duration::{DurationModel, Time};
use evtensor::ir::{GraphFunction, ResourceClass};
use evtensor::materialize::{MaterializedTaskGraph, TaskKey};
use evtensor::sched_static::{Instr, SelectedQueues};
use evtensor::sim::SimConfig;
use evtensor::trace::{Phase, Trace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gives every device function a constant duration drawn from `seed`.
pub fn per_call_constants(g: &GraphFunction, seed: u64, lo: Time, hi: Time) -> GraphFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = g.clone();
    for d in &mut out.device_functions {
        d.duration = DurationModel::constant(rng.gen_range(lo..=hi));
    }
    out
}

/// Longest path by memoized recursion over producer lists.
pub fn longest_path(m: &MaterializedTaskGraph) -> Time {
    let mut producers: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(t, e) in &m.producers {
        producers.entry(e).or_default().push(t);
    }
    fn finish(t: usize, m: &MaterializedTaskGraph, prod: &HashMap<usize, Vec<usize>>, memo: &mut Vec<Option<Time>>) -> Time {
        if let Some(v) = memo[t] {
            return v;
        }
        let mut start = 0;
        for e in &m.tasks[t].waits {
            for &p in prod.get(e).map(Vec::as_slice).unwrap_or(&[]) {
                start = start.max(finish(p, m, prod, memo));
            }
        }
        let v = start + m.tasks[t].duration;
        memo[t] = Some(v);
        v
    }
    let mut memo = vec![None; m.tasks.len()];
    (0..m.tasks.len()).map(|t| finish(t, m, &producers, &mut memo)).max().unwrap_or(0)
}

/// Barrier-separated stages, each scheduled greedily in task order onto the
/// earliest free SM. Calls must have no internal dependencies.
pub fn per_stage_list_schedule(m: &MaterializedTaskGraph, sms: usize) -> Time {
    let mut t0 = 0;
    for &(a, b) in &m.call_ranges {
        if a == b {
            continue;
        }
        let mut free = vec![t0; sms];
        let mut dma = t0;
        let mut end = t0;
        for t in &m.tasks[a..b] {
            let slot = if t.resource == ResourceClass::Dma {
                &mut dma
            } else {
                let i = (0..sms).min_by_key(|&i| (free[i], i)).unwrap();
                &mut free[i]
            };
            *slot += t.duration;
            end = end.max(*slot);
        }
        t0 = end;
    }
    t0
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replayed {
    pub exec: HashMap<TaskKey, (Time, Time)>,
    pub makespan: Time,
}

/// Max-plus replay of selected static queues: every queue runs in order,
/// a WAIT releases when the last notify of its element lands, NOTIFY costs
/// `notify_cost`. Only `poll_quantum == 1` is modelled.
pub fn replay_static(sel: &SelectedQueues, m: &MaterializedTaskGraph, cfg: &SimConfig) -> Option<Replayed> {
    assert_eq!(cfg.poll_quantum, 1);
    let idx: HashMap<&TaskKey, usize> = m.tasks.iter().enumerate().map(|(i, t)| (&t.key, i)).collect();
    let s = sel.schedule;
    let mut queues: Vec<(Vec<_>, &[bool])> =
        s.sm_queues.iter().zip(&sel.sm_masks).map(|(q, mk)| (q.iter().collect(), mk.as_slice())).collect();
    queues.push((s.dma_queue.iter().collect(), sel.dma_mask.as_slice()));
    let n_elems = s.layout.initial.len();
    let mut left: Vec<u64> = s.layout.initial.clone();
    let mut zero_at: Vec<Option<Time>> = left.iter().map(|&c| (c == 0).then_some(0)).collect();
    let mut last_dec = vec![0 as Time; n_elems];
    let mut pos = vec![0usize; queues.len()];
    let mut clock = vec![0 as Time; queues.len()];
    let mut out = Replayed { exec: HashMap::new(), makespan: 0 };
    loop {
        let mut progressed = false;
        for q in 0..queues.len() {
            'entries: while pos[q] < queues[q].0.len() {
                let entry = queues[q].0[pos[q]];
                let masked = queues[q].1[pos[q]];
                let mut t = clock[q];
                for i in &entry.instrs {
                    if let Instr::Wait { elem } = i {
                        match zero_at[*elem] {
                            Some(z) => t = t.max(z),
                            None => break 'entries,
                        }
                    }
                }
                let task = if masked { None } else { idx.get(&entry.key()).map(|&i| &m.tasks[i]) };
                let prefetch_done = clock[q] + task.and_then(|t| t.prefetch).filter(|_| entry.instrs.contains(&Instr::Prefetch)).unwrap_or(0);
                if let Some(task) = task {
                    let start = t.max(prefetch_done);
                    t = start + task.duration;
                    out.exec.insert(task.key.clone(), (start, t));
                }
                for i in &entry.instrs {
                    if let Instr::Notify { elem } = i {
                        t += cfg.notify_cost;
                        left[*elem] -= 1;
                        last_dec[*elem] = last_dec[*elem].max(t);
                        if left[*elem] == 0 {
                            zero_at[*elem] = Some(last_dec[*elem]);
                        }
                    }
                }
                clock[q] = t;
                out.makespan = out.makespan.max(t);
                pos[q] += 1;
                progressed = true;
            }
        }
        if pos.iter().zip(&queues).all(|(p, q)| *p == q.0.len()) {
            return Some(out);
        }
        if !progressed {
            return None;
        }
    }
}

/// Recomputes the times of a dynamic run from its decisions: which SM ran
/// which tasks in which order, and which producer performed each push.
/// Assumes one in-edge per consumer, one consumer per element, q = 1 and
/// no prefetch.
pub fn replay_dynamic(trace: &Trace, m: &MaterializedTaskGraph, cfg: &SimConfig, early_push: bool) -> Replayed {
    assert_eq!(cfg.poll_quantum, 1);
    let n = m.tasks.len();
    let idx: HashMap<&TaskKey, usize> = m.tasks.iter().enumerate().map(|(i, t)| (&t.key, i)).collect();
    let rec: Vec<usize> = (0..n).map(|i| trace.tasks.iter().position(|r| r.key == m.tasks[i].key).unwrap()).collect();
    let mut order: Vec<Vec<usize>> = vec![Vec::new(); trace.resources.len()];
    let mut by_dispatch: Vec<usize> = (0..n).collect();
    by_dispatch.sort_by_key(|&i| (trace.tasks[rec[i]].dispatch, i));
    for i in by_dispatch {
        order[trace.tasks[rec[i]].resource].push(i);
    }
    let producers = m.producers_by_elem();
    let pushers: HashSet<usize> = trace
        .intervals
        .iter()
        .filter(|iv| iv.phase == Phase::Push)
        .map(|iv| idx[&trace.tasks[iv.task.unwrap()].key])
        .collect();
    let mut exec: Vec<Option<(Time, Time)>> = vec![None; n];
    let mut end: Vec<Option<Time>> = vec![None; n];
    let mut pos = vec![0usize; order.len()];
    let mut clock = vec![0 as Time; order.len()];
    let c = cfg.push_cost;
    let visible = |t: usize, exec: &[Option<(Time, Time)>]| -> Option<Time> {
        let waits = &m.tasks[t].waits;
        if waits.is_empty() {
            return Some(0);
        }
        let e = waits[0];
        let ps = &producers[e];
        if early_push {
            ps.iter().map(|&p| exec[p].map(|x| x.0)).collect::<Option<Vec<_>>>().map(|v| v.into_iter().max().unwrap_or(0) + c)
        } else {
            ps.iter()
                .map(|&p| exec[p].map(|x| x.1 + cfg.notify_cost))
                .collect::<Option<Vec<_>>>()
                .map(|v| v.into_iter().max().unwrap_or(0) + c)
        }
    };
    loop {
        let mut progressed = false;
        for r in 0..order.len() {
            while pos[r] < order[r].len() {
                let t = order[r][pos[r]];
                let Some(v) = visible(t, &exec) else { break };
                let pop = clock[r].max(v);
                let mut start = pop + if trace.resources[r].starts_with("SM") { cfg.pop_cost } else { 0 };
                if early_push {
                    for &e in &m.tasks[t].waits {
                        for &p in &producers[e] {
                            start = start.max(exec[p].expect("producer placed").1 + cfg.notify_cost);
                        }
                    }
                }
                let fin = start + m.tasks[t].duration;
                exec[t] = Some((start, fin));
                let mut done = fin + cfg.notify_cost * m.tasks[t].notifies.len() as Time;
                if !early_push && pushers.contains(&t) {
                    done += c;
                }
                end[t] = Some(done);
                clock[r] = done;
                pos[r] += 1;
                progressed = true;
            }
        }
        if pos.iter().zip(&order).all(|(p, o)| *p == o.len()) || !progressed {
            break;
        }
    }
    Replayed {
        exec: (0..n).filter_map(|i| exec[i].map(|x| (m.tasks[i].key.clone(), x))).collect(),
        makespan: end.iter().flatten().copied().max().unwrap_or(0),
    }
}

pub fn exec_map(trace: &Trace) -> HashMap<TaskKey, (Time, Time)> {
    trace.executed().filter_map(|t| t.exec.map(|x| (t.key.clone(), (x.start, x.end)))).collect()
}
