mod common;

use std::collections::HashMap;

use proptest::prelude::*;

use evtensor::duration::{DurationModel, Time};
use evtensor::ir::{validate_graph, GraphFunction};
use evtensor::kernel::CompiledKernel;
use evtensor::materialize::{check_trace, critical_path, instantiate, instantiate_seeded, list_schedule, Violation};
use evtensor::metrics::{chrome_trace, compare, compute_metrics, trace_csv};
use evtensor::sched_dynamic::{lower_dynamic, DynamicOptions};
use evtensor::sched_static::{lower_static, queue_violations, select_queues, worst_case_rewrite, StaticOptions};
use evtensor::sim::{simulate, simulate_barrier_baseline, SimConfig};
use evtensor::symshape::{ShapeBinding, SymExpr};
use evtensor::trace::{Phase, SchedEventKind, Trace};
use evtensor::workloads::{self, MoEParams};

fn dag() -> impl Strategy<Value = (GraphFunction, u64)> {
    (1usize..24, 0usize..50, any::<u64>()).prop_map(|(nodes, edges, seed)| (workloads::random_dag(nodes, edges, seed), seed))
}

fn costs() -> impl Strategy<Value = SimConfig> {
    (1usize..6, 0u64..3, 0u64..3, 0u64..3, 1u64..4, any::<u64>()).prop_map(|(sms, n, pop, push, q, seed)| SimConfig {
        num_sms: sms,
        notify_cost: n,
        pop_cost: pop,
        push_cost: push,
        poll_quantum: q,
        seed,
        ..SimConfig::default()
    })
}

fn none() -> ShapeBinding {
    ShapeBinding::new()
}

fn all_kernels(g: &GraphFunction, b: &ShapeBinding, sms: usize) -> Vec<CompiledKernel> {
    vec![
        lower_static(&worst_case_rewrite(g), std::slice::from_ref(b), sms, StaticOptions::default()).unwrap().into(),
        lower_dynamic(g, DynamicOptions::default()).unwrap().into(),
        lower_dynamic(g, DynamicOptions { early_push: true, ..Default::default() }).unwrap().into(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_graphs_validate_idempotently((g, _) in dag()) {
        let first = validate_graph(&g);
        prop_assert!(first.is_empty());
        prop_assert_eq!(validate_graph(&g), first);
    }

    #[test]
    fn list_schedule_bounds((g, seed) in dag(), k in 1usize..8) {
        let m = instantiate_seeded(&g, &none(), None, seed).unwrap();
        let cp = critical_path(&m).unwrap();
        prop_assert_eq!(cp, common::longest_path(&m));
        let ls = list_schedule(&m, k);
        prop_assert!(cp <= ls);
        let work: Time = m.tasks.iter().map(|t| t.duration).sum();
        prop_assert!(ls * k as Time >= work);
    }

    #[test]
    fn list_schedule_non_increasing_in_sms((g, seed) in dag(), k in 1usize..8) {
        let m = instantiate_seeded(&g, &none(), None, seed).unwrap();
        prop_assert!(list_schedule(&m, k + 1) <= list_schedule(&m, k));
    }

    #[test]
    fn static_queues_keep_topology((g, _) in dag(), sms in 1usize..6) {
        let k = lower_static(&g, &[none()], sms, StaticOptions::default()).unwrap();
        prop_assert!(queue_violations(&k).is_empty());
        let m = instantiate(&g, &none(), None).unwrap();
        let mut seen: Vec<_> = k.schedules[0].entries().map(|e| e.key()).collect();
        seen.sort_by(|a, b| (a.call, &a.coords).cmp(&(b.call, &b.coords)));
        let expected: Vec<_> = m.tasks.iter().map(|t| t.key.clone()).collect();
        prop_assert_eq!(seen, expected);
    }

    #[test]
    fn static_simulation_matches_max_plus_replay((g, _) in dag(), sms in 1usize..5, notify in 0u64..3, seed in any::<u64>()) {
        let cfg = SimConfig { notify_cost: notify, seed, ..SimConfig::with_sms(sms) };
        let k = lower_static(&g, &[none()], sms, StaticOptions::default()).unwrap();
        let m = instantiate_seeded(&g, &none(), None, seed).unwrap();
        let sel = select_queues(&k, &none()).unwrap();
        let replay = common::replay_static(&sel, &m, &cfg).expect("replay finishes");
        let t = simulate(&k.clone().into(), &none(), None, &cfg).unwrap();
        prop_assert_eq!(common::exec_map(&t), replay.exec);
        prop_assert_eq!(t.makespan, replay.makespan);
    }

    #[test]
    fn every_mode_respects_dependencies((g, _) in dag(), cfg in costs()) {
        let m = instantiate_seeded(&g, &none(), None, cfg.seed).unwrap();
        let mut traces: Vec<Trace> = all_kernels(&g, &none(), cfg.num_sms)
            .iter()
            .map(|k| simulate(k, &none(), None, &cfg).unwrap())
            .collect();
        traces.push(simulate_barrier_baseline(&g, &none(), None, &cfg).unwrap());
        for t in &traces {
            prop_assert_eq!(check_trace(t, &m), vec![]);
            prop_assert!(t.final_counters.iter().all(|c| *c == 0));
        }
    }

    #[test]
    fn moe_modes_respect_dependencies(seed in any::<u64>(), hot in 0.0f64..1.0, cfg in costs()) {
        let p = MoEParams { hot_prob: hot, ..MoEParams::small() };
        let (g, r) = workloads::moe_layer(&p);
        let real = r.realize(&none(), seed).unwrap();
        let m = instantiate_seeded(&g, &none(), Some(&real), cfg.seed).unwrap();
        for k in all_kernels(&g, &none(), cfg.num_sms) {
            let t = simulate(&k, &none(), Some(&real), &cfg).unwrap();
            prop_assert_eq!(check_trace(&t, &m), vec![]);
            prop_assert!(t.final_counters.iter().all(|c| *c == 0));
            let routing_end = t.executed().find(|x| x.func == "routing").unwrap().exec.unwrap().end;
            for x in t.executed().filter(|x| x.func == "grouping") {
                prop_assert!(x.exec.unwrap().start >= routing_end);
            }
        }
    }

    #[test]
    fn dynamic_push_and_pop_exactly_once((g, _) in dag(), cfg in costs(), early in any::<bool>()) {
        let k: CompiledKernel = lower_dynamic(&g, DynamicOptions { early_push: early, ..Default::default() }).unwrap().into();
        let t = simulate(&k, &none(), None, &cfg).unwrap();
        for kind in [SchedEventKind::Push, SchedEventKind::Pop] {
            let mut per: HashMap<String, usize> = HashMap::new();
            for e in t.events_of(kind) {
                *per.entry(e.task.as_ref().unwrap().to_string()).or_default() += 1;
            }
            prop_assert_eq!(per.len(), t.tasks.len());
            prop_assert!(per.values().all(|c| *c == 1));
        }
        if !early {
            prop_assert_eq!(t.intervals_of(Phase::Wait).count(), 0);
        }
    }

    #[test]
    fn simulation_is_deterministic((g, _) in dag(), cfg in costs()) {
        for k in all_kernels(&g, &none(), cfg.num_sms) {
            prop_assert_eq!(simulate(&k, &none(), None, &cfg).unwrap(), simulate(&k, &none(), None, &cfg).unwrap());
        }
    }

    #[test]
    fn fused_between_critical_path_and_barrier_for_per_call_constants((g, seed) in dag(), sms in 1usize..6) {
        let g = common::per_call_constants(&g, seed, 1, 20);
        let m = instantiate(&g, &none(), None).unwrap();
        let cfg = SimConfig::with_sms(sms);
        let barrier = simulate_barrier_baseline(&g, &none(), None, &cfg).unwrap().makespan;
        let cp = critical_path(&m).unwrap();
        for k in all_kernels(&g, &none(), sms) {
            let span = simulate(&k, &none(), None, &cfg).unwrap().makespan;
            prop_assert!(cp <= span && span <= barrier, "{}: cp {} span {} barrier {}", k.mode(), cp, span, barrier);
        }
    }

    #[test]
    fn prefetch_never_hurts_static((g, seed) in dag(), sms in 1usize..5, load in 1u64..6) {
        let mut g = g;
        for d in &mut g.device_functions {
            d.prefetch = Some(DurationModel::constant(load));
        }
        let cfg = SimConfig { seed, ..SimConfig::with_sms(sms) };
        let on = lower_static(&g, &[none()], sms, StaticOptions { prefetch: true }).unwrap();
        let off = lower_static(&g, &[none()], sms, StaticOptions { prefetch: false }).unwrap();
        let a = simulate(&on.into(), &none(), None, &cfg).unwrap();
        let b = simulate(&off.into(), &none(), None, &cfg).unwrap();
        prop_assert!(a.makespan <= b.makespan);
        let ends = common::exec_map(&b);
        for (key, (_, end)) in common::exec_map(&a) {
            prop_assert!(end <= ends[&key].1);
        }
    }

    #[test]
    fn metrics_are_exact_aggregates((g, _) in dag(), cfg in costs()) {
        for k in all_kernels(&g, &none(), cfg.num_sms) {
            let t = simulate(&k, &none(), None, &cfg).unwrap();
            let m = compute_metrics(&t).unwrap();
            prop_assert_eq!(m.makespan, t.makespan);
            for r in &m.resources {
                prop_assert!((r.busy + r.spin_wait + r.idle - 1.0).abs() < 1e-9);
            }
            let chrome = chrome_trace(&t);
            let spans = chrome.as_array().unwrap().iter().filter(|e| e["ph"] == "X").count();
            prop_assert_eq!(spans, t.intervals.len());
            let csv = trace_csv(&t).unwrap();
            let mut rd = csv::Reader::from_reader(csv.as_bytes());
            prop_assert_eq!(rd.records().count(), t.intervals.len());
        }
    }

    #[test]
    fn compare_is_scale_invariant((g, seed) in dag(), sms in 1usize..5, scale in 1u64..6) {
        let run = |g: &GraphFunction| {
            let cfg = SimConfig { seed, ..SimConfig::with_sms(sms) };
            let mut runs = vec![("barrier".to_string(), compute_metrics(&simulate_barrier_baseline(g, &none(), None, &cfg).unwrap()).unwrap())];
            for k in all_kernels(g, &none(), sms) {
                runs.push((k.mode().to_string(), compute_metrics(&simulate(&k, &none(), None, &cfg).unwrap()).unwrap()));
            }
            compare(&runs, "barrier").unwrap()
        };
        let g = common::per_call_constants(&g, seed, 1, 20);
        let mut scaled = g.clone();
        for d in &mut scaled.device_functions {
            d.duration = d.duration.scaled(scale);
        }
        let a = run(&g);
        let b = run(&scaled);
        for (x, y) in a.rows.iter().zip(&b.rows) {
            prop_assert_eq!(x.makespan * scale, y.makespan);
            prop_assert!((x.speedup - y.speedup).abs() < 1e-12);
        }
    }

    #[test]
    fn shifted_consumer_is_caught(n_tiles in 1i64..8) {
        let g = workloads::gemm_reduce_scatter(SymExpr::Const(2 * n_tiles), 2);
        let k = lower_static(&g, &[none()], 2, StaticOptions::default()).unwrap();
        let mut t = simulate(&k.into(), &none(), None, &SimConfig::with_sms(2)).unwrap();
        let m = instantiate(&g, &none(), None).unwrap();
        let rs = t.tasks.iter().position(|x| x.func == "rs").unwrap();
        let exec = t.tasks[rs].exec.as_mut().unwrap();
        let shift = exec.start;
        exec.start -= shift;
        exec.end -= shift;
        let caught = check_trace(&t, &m).iter().any(|v| matches!(v, Violation::Dependency { .. }));
        prop_assert!(caught);
    }
}
