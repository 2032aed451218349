use super::*;
use crate::duration::DurationModel;
use crate::materialize::{check_trace, instantiate, instantiate_seeded, list_schedule};
use crate::sched_dynamic::{enable_early_push, lower_dynamic, DynamicOptions};
use crate::sched_static::{lower_static, testing, StaticOptions};
use crate::symshape::SymExpr;
use crate::trace::{Phase, SchedEventKind};
use crate::workloads::{self, MoEParams};

fn no_binding() -> ShapeBinding {
    ShapeBinding::new()
}

fn static_kernel(g: &GraphFunction, b: &ShapeBinding, sms: usize) -> CompiledKernel {
    lower_static(g, std::slice::from_ref(b), sms, StaticOptions::default()).unwrap().into()
}

fn dynamic_kernel(g: &GraphFunction, early: bool) -> CompiledKernel {
    lower_dynamic(g, DynamicOptions { early_push: early, ..Default::default() }).unwrap().into()
}

fn exec_of(trace: &Trace, call: usize, coord: u64) -> (usize, Time, Time) {
    let rec = trace.tasks.iter().find(|t| t.key.call == call && t.key.coords[0] == coord).unwrap();
    let iv = rec.exec.unwrap();
    (rec.resource, iv.start, iv.end)
}

#[test]
fn single_task() {
    let mut g = workloads::random_dag(1, 0, 0);
    g.device_functions[0].duration = DurationModel::constant(10);
    for k in [static_kernel(&g, &no_binding(), 1), dynamic_kernel(&g, false)] {
        let t = simulate(&k, &no_binding(), None, &SimConfig::with_sms(1)).unwrap();
        assert_eq!(t.makespan, 10);
    }
}

/// Two MM tiles on different SMs feeding one RS tile.
fn notify_wait_scenario() -> GraphFunction {
    let mut g = workloads::gemm_reduce_scatter(SymExpr::Const(2), 2);
    g.device_functions[0].duration = DurationModel::Table { axis: 0, values: vec![5, 8] };
    g.device_functions[1].duration = DurationModel::constant(4);
    g
}

#[test]
fn static_notify_wait_timeline() {
    let g = notify_wait_scenario();
    let t = simulate(&static_kernel(&g, &no_binding(), 2), &no_binding(), None, &SimConfig::with_sms(2)).unwrap();
    assert_eq!(exec_of(&t, 0, 0), (0, 0, 5));
    assert_eq!(exec_of(&t, 0, 1), (1, 0, 8));
    assert_eq!(exec_of(&t, 1, 0), (0, 8, 12));
    let waits: Vec<_> = t.intervals_of(Phase::Wait).map(|i| (i.resource, i.start, i.end)).collect();
    assert_eq!(waits, vec![(0, 5, 8)]);
    assert_eq!(t.makespan, 12);
}

/// Four MM tiles with uneven durations, two RS tiles, two SMs.
fn push_pop_scenario() -> GraphFunction {
    let mut g = workloads::gemm_reduce_scatter(SymExpr::Const(4), 2);
    g.device_functions[0].duration = DurationModel::Table { axis: 0, values: vec![2, 5, 2, 2] };
    g.device_functions[1].duration = DurationModel::constant(3);
    g
}

#[test]
fn dynamic_push_pop_timeline() {
    let g = push_pop_scenario();
    let t = simulate(&dynamic_kernel(&g, false), &no_binding(), None, &SimConfig::with_sms(2)).unwrap();
    assert_eq!(exec_of(&t, 0, 0), (0, 0, 2));
    assert_eq!(exec_of(&t, 0, 1), (1, 0, 5));
    assert_eq!(exec_of(&t, 0, 2), (0, 2, 4));
    assert_eq!(exec_of(&t, 0, 3), (0, 4, 6));
    assert_eq!(exec_of(&t, 1, 0), (1, 5, 8));
    assert_eq!(exec_of(&t, 1, 1), (0, 6, 9));
    assert_eq!(t.makespan, 9);
    assert_eq!(t.intervals_of(Phase::Wait).count(), 0);
    assert_eq!(t.events_of(SchedEventKind::Pop).count(), 6);
    assert_eq!(t.events_of(SchedEventKind::Push).count(), 6);
}

#[test]
fn overheads_are_charged() {
    let g = push_pop_scenario();
    let cfg = SimConfig { pop_cost: 1, push_cost: 2, notify_cost: 1, ..SimConfig::with_sms(2) };
    let t = simulate(&dynamic_kernel(&g, false), &no_binding(), None, &cfg).unwrap();
    // MM0: pop [0,1), exec [1,3), notify [3,4)
    assert_eq!(exec_of(&t, 0, 0), (0, 1, 3));
    let pushes: Vec<_> = t.intervals_of(Phase::Push).map(|i| i.end - i.start).collect();
    assert_eq!(pushes, vec![2, 2]);
    assert!(check_trace(&t, &instantiate(&g, &no_binding(), None).unwrap()).is_empty());
}

#[test]
fn barrier_examples() {
    let mut g = workloads::random_dag(2, 1, 0);
    // random_dag(2, 1) may not draw the edge; force a two-stage chain
    g.calls[1].in_edges.clear();
    g.calls[0].out_edges.clear();
    g.event_tensors.clear();
    g.device_functions[0].duration = DurationModel::constant(5);
    g.device_functions[1].duration = DurationModel::constant(7);
    let t = simulate_barrier_baseline(&g, &no_binding(), None, &SimConfig::with_sms(3)).unwrap();
    assert_eq!(t.makespan, 12);

    let single = workloads::gemm_reduce_scatter(SymExpr::Const(9), 9);
    let mut only_mm = single.clone();
    only_mm.calls.truncate(1);
    only_mm.calls[0].out_edges.clear();
    only_mm.event_tensors.clear();
    for seed in 0..5 {
        let mut g = only_mm.clone();
        g.device_functions[0].duration = DurationModel::uniform(1, 9);
        let cfg = SimConfig { seed, ..SimConfig::with_sms(4) };
        let t = simulate_barrier_baseline(&g, &no_binding(), None, &cfg).unwrap();
        let m = instantiate_seeded(&g, &no_binding(), None, seed).unwrap();
        assert_eq!(t.makespan, list_schedule(&m, 4));
    }
}

#[test]
fn determinism() {
    let (g, r) = workloads::moe_layer(&MoEParams::small());
    let real = r.realize(&no_binding(), 3).unwrap();
    let cfg = SimConfig { seed: 9, pop_cost: 1, push_cost: 1, ..SimConfig::with_sms(3) };
    let k = dynamic_kernel(&g, true);
    let a = simulate(&k, &no_binding(), Some(&real), &cfg).unwrap();
    let b = simulate(&k, &no_binding(), Some(&real), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn moe_all_modes_are_correct() {
    let p = MoEParams { hot_prob: 0.6, ..MoEParams::small() };
    let (g, r) = workloads::moe_layer(&p);
    let w = crate::sched_static::worst_case_rewrite(&g);
    for seed in 0..20 {
        let real = r.realize(&no_binding(), seed).unwrap();
        let m = instantiate(&g, &no_binding(), Some(&real)).unwrap();
        let cfg = SimConfig { seed, ..SimConfig::with_sms(3) };
        let kernels = [static_kernel(&w, &no_binding(), 3), dynamic_kernel(&g, false), dynamic_kernel(&g, true)];
        for k in &kernels {
            let t = simulate(k, &no_binding(), Some(&real), &cfg).unwrap();
            assert_eq!(check_trace(&t, &m), vec![], "{} seed {seed}", k.mode());
            assert!(t.final_counters.iter().all(|c| *c == 0));
        }
        let t = simulate_barrier_baseline(&g, &no_binding(), Some(&real), &cfg).unwrap();
        assert_eq!(check_trace(&t, &m), vec![]);
    }
}

#[test]
fn guarded_task_graph_checks_rewritten_trace() {
    let (g, r) = workloads::moe_layer(&MoEParams { hot_prob: 0.6, ..MoEParams::small() });
    let w = crate::sched_static::worst_case_rewrite(&g);
    let real = r.realize(&no_binding(), 5).unwrap();
    let t = simulate(&static_kernel(&w, &no_binding(), 3), &no_binding(), Some(&real), &SimConfig::with_sms(3)).unwrap();
    let m = instantiate(&crate::sched_static::guarded_task_graph(&w), &no_binding(), Some(&real)).unwrap();
    assert_eq!(check_trace(&t, &m), vec![]);
    assert_eq!(m.tasks.len(), t.executed().count());
}

#[test]
fn static_guard_needs_realization() {
    let (g, _) = workloads::moe_layer(&MoEParams::small());
    let k = static_kernel(&crate::sched_static::worst_case_rewrite(&g), &no_binding(), 2);
    assert_eq!(simulate(&k, &no_binding(), None, &SimConfig::with_sms(2)), Err(SimError::MissingRealization));
}

#[test]
fn misordered_queue_deadlocks() {
    let g = workloads::splitk_rowsum();
    let b = ShapeBinding::new().with("n", 2);
    let mut k = lower_static(&g, std::slice::from_ref(&b), 2, StaticOptions::default()).unwrap();
    assert!(testing::misorder_queue(&mut k, 0));
    let err = simulate(&k.into(), &b, None, &SimConfig::with_sms(2)).unwrap_err();
    assert!(matches!(err, SimError::Deadlock { .. }), "{err}");
}

#[test]
fn underflow_is_reported() {
    let g = workloads::splitk_rowsum();
    let b = ShapeBinding::new().with("n", 1);
    let mut k = lower_static(&g, std::slice::from_ref(&b), 2, StaticOptions::default()).unwrap();
    k.schedules[0].layout.initial[0] = 3;
    let err = simulate(&k.into(), &b, None, &SimConfig::with_sms(2)).unwrap_err();
    assert!(matches!(err, SimError::Underflow { .. }), "{err}");
}

#[test]
fn step_limit() {
    let g = workloads::splitk_rowsum();
    let b = ShapeBinding::new().with("n", 4);
    let cfg = SimConfig { step_limit: 5, ..SimConfig::with_sms(2) };
    let k = static_kernel(&g, &b, 2);
    assert_eq!(simulate(&k, &b, None, &cfg), Err(SimError::StepLimit(5)));
}

#[test]
fn bad_configs() {
    let g = workloads::splitk_rowsum();
    let b = ShapeBinding::new().with("n", 1);
    let k = static_kernel(&g, &b, 2);
    assert!(matches!(simulate(&k, &b, None, &SimConfig::with_sms(3)), Err(SimError::Config(_))));
    let cfg = SimConfig { poll_quantum: 0, ..SimConfig::with_sms(2) };
    assert!(matches!(simulate(&k, &b, None, &cfg), Err(SimError::Config(_))));
}

#[test]
fn poll_quantum_delays_wakeups() {
    let g = notify_wait_scenario();
    let cfg = SimConfig { poll_quantum: 2, ..SimConfig::with_sms(2) };
    let t = simulate(&static_kernel(&g, &no_binding(), 2), &no_binding(), None, &cfg).unwrap();
    // blocked at 5, counter zero at 8: re-checks at 7, 9
    assert_eq!(exec_of(&t, 1, 0), (0, 9, 13));
}

#[test]
fn early_push_single_task_unchanged() {
    let g = workloads::random_dag(1, 0, 4);
    let base = dynamic_kernel(&g, false);
    let CompiledKernel::Dynamic(d) = &base else { unreachable!() };
    let early: CompiledKernel = enable_early_push(d).into();
    let cfg = SimConfig { push_cost: 3, pop_cost: 1, ..SimConfig::with_sms(2) };
    let a = simulate(&base, &no_binding(), None, &cfg).unwrap();
    let b = simulate(&early, &no_binding(), None, &cfg).unwrap();
    assert_eq!(a.makespan, b.makespan);
    assert_eq!(a.tasks, b.tasks);
}

#[test]
fn dma_copies_run_in_ring_order() {
    let g = workloads::all_gather_gemm(4, 2);
    for k in [static_kernel(&g, &no_binding(), 2), dynamic_kernel(&g, false)] {
        let t = simulate(&k, &no_binding(), None, &SimConfig::with_sms(2)).unwrap();
        let copies: Vec<_> = (0..4).map(|c| exec_of(&t, 0, c)).collect();
        assert!(copies.iter().all(|c| c.0 == 2));
        assert_eq!(copies.iter().map(|c| c.1).collect::<Vec<_>>(), vec![0, 3, 6, 9]);
        for tile in t.tasks.iter().filter(|r| r.key.call == 1) {
            let arrival = copies[tile.key.coords[0] as usize].2;
            assert!(tile.exec.unwrap().start >= arrival);
        }
    }
}

#[test]
fn prefetch_overlaps_wait() {
    // consumer with a 3-unit prefetch waits 5 units on its producer
    let mut g = workloads::gemm_reduce_scatter(SymExpr::Const(1), 1);
    g.device_functions[0].duration = DurationModel::constant(5);
    g.device_functions[1].duration = DurationModel::constant(4);
    g.device_functions[1].prefetch = Some(DurationModel::constant(3));
    let on: CompiledKernel = lower_static(&g, &[no_binding()], 2, StaticOptions::default()).unwrap().into();
    let off: CompiledKernel = lower_static(&g, &[no_binding()], 2, StaticOptions { prefetch: false }).unwrap().into();
    let cfg = SimConfig::with_sms(2);
    let a = simulate(&on, &no_binding(), None, &cfg).unwrap();
    let b = simulate(&off, &no_binding(), None, &cfg).unwrap();
    assert_eq!(exec_of(&a, 1, 0), (1, 5, 9));
    assert_eq!(exec_of(&b, 1, 0), (1, 5, 12));
    // prefetch longer than the wait stalls EXEC
    g.device_functions[1].prefetch = Some(DurationModel::constant(7));
    let k: CompiledKernel = lower_static(&g, &[no_binding()], 2, StaticOptions::default()).unwrap().into();
    let t = simulate(&k, &no_binding(), None, &cfg).unwrap();
    assert_eq!(exec_of(&t, 1, 0), (1, 7, 11));
    let stalls: Vec<_> = t.intervals_of(Phase::Stall).map(|i| (i.start, i.end)).collect();
    assert_eq!(stalls, vec![(5, 7)]);
}
