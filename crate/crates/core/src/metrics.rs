//! Aggregate statistics, trace export, and run comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::duration::Time;
use crate::trace::{Phase, SchedEventKind, Trace};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("overlapping intervals on {resource}: [{}, {}) and [{}, {})", .first.0, .first.1, .second.0, .second.1)]
    Overlap { resource: String, first: (Time, Time), second: (Time, Time) },
    #[error("cannot write {}: {source}", .path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("comparison needs at least two runs, got {0}")]
    TooFewRuns(usize),
    #[error("duplicate run label {0:?}")]
    DuplicateLabel(String),
    #[error("baseline {0:?} is not among the runs")]
    MissingBaseline(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceMetrics {
    pub name: String,
    pub busy_time: Time,
    pub spin_time: Time,
    pub idle_time: Time,
    pub busy: f64,
    pub spin_wait: f64,
    pub idle: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpan {
    pub call: usize,
    pub func: String,
    pub start: Time,
    pub end: Time,
    pub span: Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub makespan: Time,
    pub resources: Vec<ResourceMetrics>,
    pub notifies: usize,
    pub wait_blocks: usize,
    pub pushes: usize,
    pub pops: usize,
    pub empty_polls: usize,
    pub stages: Vec<StageSpan>,
}

fn fraction(part: Time, whole: Time) -> f64 {
    if whole == 0 {
        0.0
    } else {
        part as f64 / whole as f64
    }
}

pub fn compute_metrics(trace: &Trace) -> Result<Metrics, MetricsError> {
    let mut per_resource: Vec<Vec<(Time, Time, Phase)>> = vec![Vec::new(); trace.resources.len()];
    for iv in &trace.intervals {
        if iv.phase == Phase::Prefetch || iv.end == iv.start {
            continue;
        }
        if iv.resource >= per_resource.len() {
            per_resource.resize(iv.resource + 1, Vec::new());
        }
        per_resource[iv.resource].push((iv.start, iv.end, iv.phase));
    }
    let mut resources = Vec::new();
    for (r, ivs) in per_resource.iter_mut().enumerate() {
        let name = trace.resources.get(r).cloned().unwrap_or_else(|| format!("res{r}"));
        ivs.sort();
        for w in ivs.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(MetricsError::Overlap { resource: name, first: (w[0].0, w[0].1), second: (w[1].0, w[1].1) });
            }
        }
        let busy_time: Time = ivs.iter().filter(|i| i.2.is_busy()).map(|i| i.1 - i.0).sum();
        let spin_time: Time = ivs.iter().filter(|i| i.2.is_spin()).map(|i| i.1 - i.0).sum();
        let idle_time = trace.makespan.saturating_sub(busy_time + spin_time);
        let (busy, spin_wait) = (fraction(busy_time, trace.makespan), fraction(spin_time, trace.makespan));
        let idle = if trace.makespan == 0 { 1.0 } else { fraction(idle_time, trace.makespan) };
        resources.push(ResourceMetrics { name, busy_time, spin_time, idle_time, busy, spin_wait, idle });
    }

    let mut spans: BTreeMap<usize, StageSpan> = BTreeMap::new();
    for t in trace.executed() {
        let Some(x) = t.exec else { continue };
        let s = spans.entry(t.key.call).or_insert_with(|| StageSpan {
            call: t.key.call,
            func: t.func.clone(),
            start: x.start,
            end: x.end,
            span: 0,
        });
        s.start = s.start.min(x.start);
        s.end = s.end.max(x.end);
    }
    let stages = spans
        .into_values()
        .map(|mut s| {
            s.span = s.end - s.start;
            s
        })
        .collect();

    let count = |k: SchedEventKind| trace.events_of(k).count();
    Ok(Metrics {
        makespan: trace.makespan,
        resources,
        notifies: trace.intervals_of(Phase::Notify).count(),
        wait_blocks: trace.intervals_of(Phase::Wait).count(),
        pushes: count(SchedEventKind::Push),
        pops: count(SchedEventKind::Pop),
        empty_polls: count(SchedEventKind::EmptyPoll),
        stages,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceFormat {
    ChromeTrace,
    Csv,
}

fn interval_name(trace: &Trace, task: Option<usize>, phase: Phase) -> String {
    match task.and_then(|t| trace.tasks.get(t)) {
        Some(t) => format!("{} {}", t.key, phase.name()),
        None => phase.name().to_string(),
    }
}

/// Trace-event JSON: one thread per resource, `X` events per phase
/// interval and `i` markers for scheduler events.
pub fn chrome_trace(trace: &Trace) -> Value {
    let mut out = Vec::new();
    for (r, name) in trace.resources.iter().enumerate() {
        out.push(json!({"name": "thread_name", "ph": "M", "pid": 0, "tid": r, "args": {"name": name}}));
    }
    for iv in &trace.intervals {
        let mut ev = json!({
            "name": interval_name(trace, iv.task, iv.phase),
            "cat": iv.phase.name(),
            "ph": "X",
            "pid": 0,
            "tid": iv.resource,
            "ts": iv.start,
            "dur": iv.end - iv.start,
        });
        if let Some(t) = iv.task.and_then(|t| trace.tasks.get(t)) {
            ev["args"] = json!({"task": t.key.to_string(), "func": t.func, "masked": t.masked});
        }
        out.push(ev);
    }
    for e in &trace.events {
        let kind = match e.kind {
            SchedEventKind::Push => "push",
            SchedEventKind::Pop => "pop",
            SchedEventKind::EmptyPoll => "empty_poll",
            SchedEventKind::Publish => "publish",
        };
        let mut ev = json!({"name": kind, "cat": "sched", "ph": "i", "pid": 0, "ts": e.time});
        match e.resource {
            Some(r) => {
                ev["tid"] = json!(r);
                ev["s"] = json!("t");
            }
            None => ev["s"] = json!("p"),
        }
        if let Some(k) = &e.task {
            ev["args"] = json!({"task": k.to_string()});
        }
        out.push(ev);
    }
    Value::Array(out)
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    task_id: Option<usize>,
    call: Option<usize>,
    coord: String,
    resource: &'a str,
    phase: &'static str,
    start: Time,
    end: Time,
}

pub fn trace_csv(trace: &Trace) -> Result<String, MetricsError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if trace.intervals.is_empty() {
        w.write_record(["task_id", "call", "coord", "resource", "phase", "start", "end"])?;
    }
    for iv in &trace.intervals {
        let task = iv.task.and_then(|t| trace.tasks.get(t));
        w.serialize(CsvRow {
            task_id: iv.task,
            call: task.map(|t| t.key.call),
            coord: task
                .map(|t| t.key.coords.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","))
                .unwrap_or_default(),
            resource: trace.resources.get(iv.resource).map_or("", |s| s.as_str()),
            phase: iv.phase.name(),
            start: iv.start,
            end: iv.end,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| MetricsError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn export_trace(trace: &Trace, format: TraceFormat, path: &Path) -> Result<(), MetricsError> {
    let text = match format {
        TraceFormat::ChromeTrace => serde_json::to_string_pretty(&chrome_trace(trace)).expect("json serializes"),
        TraceFormat::Csv => trace_csv(trace)?,
    };
    std::fs::write(path, text).map_err(|source| MetricsError::Io { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub makespan: Time,
    /// `baseline makespan / run makespan`; higher is better.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn speedup_of(&self, label: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.label == label).map(|r| r.speedup)
    }

    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(5);
        let mut s = format!("{:<width$}  {:>10}  {:>8}\n", "run", "makespan", "speedup");
        for r in &self.rows {
            let mark = if r.label == self.baseline { " (baseline)" } else { "" };
            let _ = writeln!(s, "{:<width$}  {:>10}  {:>7.3}x{mark}", r.label, r.makespan, r.speedup);
        }
        s
    }
}

pub fn compare(runs: &[(String, Metrics)], baseline: &str) -> Result<Comparison, MetricsError> {
    if runs.len() < 2 {
        return Err(MetricsError::TooFewRuns(runs.len()));
    }
    let mut seen = BTreeSet::new();
    for (label, _) in runs {
        if !seen.insert(label.as_str()) {
            return Err(MetricsError::DuplicateLabel(label.clone()));
        }
    }
    let base = runs
        .iter()
        .find(|(l, _)| l == baseline)
        .map(|(_, m)| m.makespan)
        .ok_or_else(|| MetricsError::MissingBaseline(baseline.to_string()))?;
    let rows = runs
        .iter()
        .map(|(label, m)| ComparisonRow {
            label: label.clone(),
            makespan: m.makespan,
            speedup: if m.makespan == base { 1.0 } else { base as f64 / m.makespan as f64 },
        })
        .collect();
    Ok(Comparison { baseline: baseline.to_string(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materialize::TaskKey;
    use crate::sched_dynamic::{lower_dynamic, DynamicOptions};
    use crate::sched_static::{lower_static, StaticOptions};
    use crate::sim::{simulate, simulate_barrier_baseline, SimConfig};
    use crate::symshape::{ShapeBinding, SymExpr};
    use crate::trace::{Interval, PhaseInterval, TaskRecord};
    use crate::workloads;

    fn single(dur: Time) -> Trace {
        Trace {
            mode: "static".into(),
            resources: vec!["sm0".into()],
            tasks: vec![TaskRecord {
                key: TaskKey { call: 0, coords: vec![0] },
                func: "f".into(),
                resource: 0,
                masked: false,
                dispatch: 0,
                exec: Some(Interval { start: 0, end: dur }),
                end: dur,
            }],
            intervals: vec![PhaseInterval { task: Some(0), resource: 0, phase: Phase::Exec, start: 0, end: dur }],
            events: vec![],
            makespan: dur,
            final_counters: vec![],
        }
    }

    #[test]
    fn single_task_fully_busy() {
        let m = compute_metrics(&single(10)).unwrap();
        assert_eq!(m.makespan, 10);
        assert_eq!(m.resources[0].busy, 1.0);
        assert_eq!(m.stages[0].span, 10);
    }

    #[test]
    fn empty_trace() {
        let t = Trace { resources: vec!["sm0".into(), "sm1".into()], ..Default::default() };
        let m = compute_metrics(&t).unwrap();
        assert_eq!(m.makespan, 0);
        assert!(m.resources.iter().all(|r| r.idle == 1.0 && r.busy == 0.0));
        assert_eq!(chrome_trace(&Trace::default()), json!([]));
        assert!(trace_csv(&Trace::default()).unwrap().starts_with("task_id,call,coord"));
    }

    #[test]
    fn overlap_is_rejected() {
        let mut t = single(10);
        t.intervals.push(PhaseInterval { task: Some(0), resource: 0, phase: Phase::Exec, start: 5, end: 12 });
        assert!(matches!(compute_metrics(&t), Err(MetricsError::Overlap { .. })));
    }

    #[test]
    fn spin_wait_between_mm_and_rs() {
        let mut g = workloads::gemm_reduce_scatter(SymExpr::Const(2), 2);
        g.device_functions[0].duration = crate::duration::DurationModel::Table { axis: 0, values: vec![5, 8] };
        g.device_functions[1].duration = crate::duration::DurationModel::constant(4);
        let b = ShapeBinding::new();
        let k = lower_static(&g, std::slice::from_ref(&b), 2, StaticOptions::default()).unwrap();
        let t = simulate(&k.into(), &b, None, &SimConfig::with_sms(2)).unwrap();
        let m = compute_metrics(&t).unwrap();
        assert!(m.resources[0].spin_wait > 0.0);
        for r in &m.resources {
            assert!((r.busy + r.spin_wait + r.idle - 1.0).abs() < 1e-9);
        }
        assert_eq!(m.notifies, 2);
    }

    #[test]
    fn compare_ratios_and_errors() {
        let a = compute_metrics(&single(10)).unwrap();
        let b = compute_metrics(&single(5)).unwrap();
        let c = compare(&[("a".into(), a.clone()), ("b".into(), b.clone())], "a").unwrap();
        assert_eq!(c.speedup_of("a"), Some(1.0));
        assert_eq!(c.speedup_of("b"), Some(2.0));
        assert!(c.table().contains("(baseline)"));
        assert!(matches!(compare(&[("a".into(), a.clone())], "a"), Err(MetricsError::TooFewRuns(1))));
        assert!(matches!(
            compare(&[("a".into(), a.clone()), ("a".into(), b.clone())], "a"),
            Err(MetricsError::DuplicateLabel(_))
        ));
        assert!(matches!(compare(&[("a".into(), a), ("b".into(), b)], "z"), Err(MetricsError::MissingBaseline(_))));
    }

    #[test]
    fn static_beats_unfused_on_gemm_rs() {
        let g = workloads::gemm_reduce_scatter(SymExpr::Const(10), 2);
        let b = ShapeBinding::new();
        let cfg = SimConfig::with_sms(4);
        let k = lower_static(&g, std::slice::from_ref(&b), 4, StaticOptions::default()).unwrap();
        let fused = compute_metrics(&simulate(&k.into(), &b, None, &cfg).unwrap()).unwrap();
        let unfused = compute_metrics(&simulate_barrier_baseline(&g, &b, None, &cfg).unwrap()).unwrap();
        let c = compare(&[("unfused".into(), unfused), ("static".into(), fused)], "unfused").unwrap();
        assert_eq!((c.rows[0].makespan, c.rows[1].makespan), (18, 15));
        assert!(c.speedup_of("static").unwrap() > 1.0);
    }

    #[test]
    fn dynamic_run_has_pop_markers() {
        let g = workloads::gemm_reduce_scatter(SymExpr::Const(4), 2);
        let k = lower_dynamic(&g, DynamicOptions::default()).unwrap();
        let t = simulate(&k.into(), &ShapeBinding::new(), None, &SimConfig::with_sms(2)).unwrap();
        let v = chrome_trace(&t);
        let pops = v.as_array().unwrap().iter().filter(|e| e["ph"] == "i" && e["name"] == "pop").count();
        assert_eq!(pops, 6);
        let m = compute_metrics(&t).unwrap();
        assert_eq!(m.pops, 6);
        assert_eq!(m.pushes, 6);
    }
}
