//! Graph IR: device functions, event tensors, runtime tensors and the
//! ordered `call_device` launches that connect them through in/out edges.
//!
//! A [`GraphFunction`] is a symbolic template. It is turned into a concrete
//! task graph by [`crate::materialize::instantiate`] and into executable
//! megakernels by the static and dynamic lowering passes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::duration::DurationModel;
use crate::symshape::SymExpr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceClass {
    Sm,
    Dma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceFunctionDecl {
    pub name: String,
    pub grid: Vec<SymExpr>,
    #[serde(default = "default_resource")]
    pub resource: ResourceClass,
    pub duration: DurationModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefetch: Option<DurationModel>,
}

fn default_resource() -> ResourceClass {
    ResourceClass::Sm
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventInit {
    /// Count the producer edges of each element at instantiation.
    DerivedCount,
    /// Per-element counts come from a runtime tensor; they become visible
    /// when the tensor's writer task completes.
    DataDependent { counts: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTensorDecl {
    pub name: String,
    pub shape: Vec<SymExpr>,
    #[serde(default = "default_init")]
    pub init: EventInit,
}

fn default_init() -> EventInit {
    EventInit::DerivedCount
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuntimeRole {
    Routing,
    Indptr,
    Counts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuntimeTensorDecl {
    pub name: String,
    pub shape: Vec<SymExpr>,
    pub role: RuntimeRole,
    pub writer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeMap {
    /// One expression per event axis over task coordinates `t0, t1, ...`
    /// and shape symbols.
    Static { index: Vec<SymExpr> },
    /// Event index = `routing[row-major flat task index]`. Out-edges only.
    DataDependentNotify { routing: String },
    /// Task with `t0` in `[indptr[i], indptr[i+1])` consumes event `i`.
    /// In-edges only.
    RangeTrigger { indptr: String },
}

impl EdgeMap {
    pub fn is_data_dependent(&self) -> bool {
        !matches!(self, EdgeMap::Static { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub event: String,
    pub map: EdgeMap,
}

impl EdgeSpec {
    pub fn static_map(event: impl Into<String>, index: Vec<SymExpr>) -> Self {
        EdgeSpec { event: event.into(), map: EdgeMap::Static { index } }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallDevice {
    pub func: String,
    /// Launch grid; `None` uses the declared grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<SymExpr>>,
    #[serde(default)]
    pub in_edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub out_edges: Vec<EdgeSpec>,
    /// Axis 0 of the launch is `indptr[last]` of the named runtime tensor;
    /// `grid` is then an upper bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent_from: Option<String>,
    /// Full grid is launched, but tasks with `t0 >= indptr[last]` of the
    /// named tensor are no-ops at run time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
}

impl CallDevice {
    pub fn new(func: impl Into<String>) -> Self {
        CallDevice {
            func: func.into(),
            grid: None,
            in_edges: Vec::new(),
            out_edges: Vec::new(),
            extent_from: None,
            guard: None,
        }
    }

    pub fn with_grid(mut self, grid: Vec<SymExpr>) -> Self {
        self.grid = Some(grid);
        self
    }

    pub fn wait(mut self, edge: EdgeSpec) -> Self {
        self.in_edges.push(edge);
        self
    }

    pub fn notify(mut self, edge: EdgeSpec) -> Self {
        self.out_edges.push(edge);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphFunction {
    #[serde(default)]
    pub symbols: Vec<String>,
    /// Symbol used to pick the next-larger sampled shape.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_symbol: Option<String>,
    #[serde(default)]
    pub device_functions: Vec<DeviceFunctionDecl>,
    #[serde(default)]
    pub event_tensors: Vec<EventTensorDecl>,
    #[serde(default)]
    pub runtime_tensors: Vec<RuntimeTensorDecl>,
    #[serde(default)]
    pub calls: Vec<CallDevice>,
}

impl GraphFunction {
    pub fn device_function(&self, name: &str) -> Option<&DeviceFunctionDecl> {
        self.device_functions.iter().find(|d| d.name == name)
    }

    pub fn event_tensor(&self, name: &str) -> Option<&EventTensorDecl> {
        self.event_tensors.iter().find(|d| d.name == name)
    }

    pub fn event_index(&self, name: &str) -> Option<usize> {
        self.event_tensors.iter().position(|d| d.name == name)
    }

    pub fn runtime_tensor(&self, name: &str) -> Option<&RuntimeTensorDecl> {
        self.runtime_tensors.iter().find(|d| d.name == name)
    }

    /// Launch grid of call `idx` (explicit launch grid, else declared grid).
    pub fn launch_grid(&self, idx: usize) -> Option<&[SymExpr]> {
        let call = self.calls.get(idx)?;
        match &call.grid {
            Some(g) => Some(g),
            None => self.device_function(&call.func).map(|d| d.grid.as_slice()),
        }
    }

    /// Index of the unique call launching `func`, if exactly one exists.
    pub fn unique_call_of(&self, func: &str) -> Option<usize> {
        let mut it = self.calls.iter().enumerate().filter(|(_, c)| c.func == func);
        let first = it.next()?.0;
        it.next().is_none().then_some(first)
    }

    /// Call index writing runtime tensor `name`.
    pub fn runtime_writer_call(&self, name: &str) -> Option<usize> {
        self.unique_call_of(&self.runtime_tensor(name)?.writer)
    }

    pub fn has_data_dependence(&self) -> bool {
        self.event_tensors.iter().any(|e| matches!(e.init, EventInit::DataDependent { .. }))
            || self.calls.iter().any(|c| {
                c.extent_from.is_some()
                    || c.in_edges.iter().chain(&c.out_edges).any(|e| e.map.is_data_dependent())
            })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// True for task-coordinate symbols `t0`, `t1`, ...
pub fn is_coord_symbol(name: &str) -> bool {
    name.len() > 1 && name.starts_with('t') && name[1..].bytes().all(|b| b.is_ascii_digit())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    DuplicateName,
    UnresolvedEvent,
    UnresolvedDeviceFunction,
    UnresolvedRuntimeTensor,
    MapArity,
    EdgeDirection,
    EmptyRank,
    LaunchRank,
    DmaDataDependent,
    DataDependentInit,
    RuntimeRole,
    IndptrShape,
    UnknownSymbol,
    FeedForward,
}

impl DiagnosticKind {
    pub fn label(self) -> &'static str {
        match self {
            DiagnosticKind::DuplicateName => "duplicate name",
            DiagnosticKind::UnresolvedEvent => "unresolved event",
            DiagnosticKind::UnresolvedDeviceFunction => "unresolved device function",
            DiagnosticKind::UnresolvedRuntimeTensor => "unresolved runtime tensor",
            DiagnosticKind::MapArity => "map arity",
            DiagnosticKind::EdgeDirection => "edge direction",
            DiagnosticKind::EmptyRank => "empty rank",
            DiagnosticKind::LaunchRank => "launch rank",
            DiagnosticKind::DmaDataDependent => "dma data-dependent edge",
            DiagnosticKind::DataDependentInit => "data-dependent init",
            DiagnosticKind::RuntimeRole => "runtime tensor role",
            DiagnosticKind::IndptrShape => "indptr shape",
            DiagnosticKind::UnknownSymbol => "unknown symbol",
            DiagnosticKind::FeedForward => "feed-forward order",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.label(), self.message)
    }
}

/// Checks every structural invariant of `g`. An empty result means valid.
pub fn validate_graph(g: &GraphFunction) -> Vec<Diagnostic> {
    let mut v = Validator { g, out: Vec::new() };
    v.run();
    v.out
}

struct Validator<'a> {
    g: &'a GraphFunction,
    out: Vec<Diagnostic>,
}

impl Validator<'_> {
    fn push(&mut self, kind: DiagnosticKind, message: String) {
        self.out.push(Diagnostic { kind, message });
    }

    fn run(&mut self) {
        let g = self.g;
        self.check_duplicates();
        let symbols: BTreeSet<&str> = g.symbols.iter().map(String::as_str).collect();
        if let Some(s) = &g.size_symbol {
            if !symbols.contains(s.as_str()) {
                self.push(DiagnosticKind::UnknownSymbol, format!("size symbol `{s}` is not declared"));
            }
        }

        for d in &g.device_functions {
            if d.grid.is_empty() {
                self.push(DiagnosticKind::EmptyRank, format!("device function `{}` has rank-0 grid", d.name));
            }
            self.check_shape_symbols(&format!("grid of `{}`", d.name), &d.grid, &symbols);
        }

        for e in &g.event_tensors {
            if e.shape.is_empty() {
                self.push(DiagnosticKind::EmptyRank, format!("event tensor `{}` has rank 0", e.name));
            }
            self.check_shape_symbols(&format!("shape of event `{}`", e.name), &e.shape, &symbols);
            if let EventInit::DataDependent { counts } = &e.init {
                match g.runtime_tensor(counts) {
                    None => self.push(
                        DiagnosticKind::UnresolvedRuntimeTensor,
                        format!("event `{}` takes counts from undeclared runtime tensor `{counts}`", e.name),
                    ),
                    Some(rt) if g.unique_call_of(&rt.writer).is_none() => self.push(
                        DiagnosticKind::DataDependentInit,
                        format!(
                            "event `{}`: counts writer `{}` must be launched by exactly one call",
                            e.name, rt.writer
                        ),
                    ),
                    Some(_) => {}
                }
            }
        }

        for rt in &g.runtime_tensors {
            self.check_shape_symbols(&format!("shape of runtime tensor `{}`", rt.name), &rt.shape, &symbols);
            if g.device_function(&rt.writer).is_none() {
                self.push(
                    DiagnosticKind::UnresolvedDeviceFunction,
                    format!("runtime tensor `{}` names undeclared writer `{}`", rt.name, rt.writer),
                );
            } else if g.unique_call_of(&rt.writer).is_none() {
                self.push(
                    DiagnosticKind::DataDependentInit,
                    format!("writer `{}` of `{}` must be launched by exactly one call", rt.writer, rt.name),
                );
            }
            if rt.role == RuntimeRole::Indptr && rt.shape.len() != 1 {
                self.push(DiagnosticKind::IndptrShape, format!("indptr tensor `{}` must be 1-D", rt.name));
            }
        }

        for (k, call) in g.calls.iter().enumerate() {
            self.check_call(k, call, &symbols);
        }
    }

    fn check_duplicates(&mut self) {
        let g = self.g;
        let dup = |kind: &str, names: Vec<&str>| {
            let mut seen = BTreeSet::new();
            names
                .into_iter()
                .filter(|n| !seen.insert(*n))
                .map(|n| format!("{kind} `{n}` declared more than once"))
                .collect::<Vec<_>>()
        };
        let mut msgs = dup("device function", g.device_functions.iter().map(|d| d.name.as_str()).collect());
        msgs.extend(dup("event tensor", g.event_tensors.iter().map(|d| d.name.as_str()).collect()));
        msgs.extend(dup("runtime tensor", g.runtime_tensors.iter().map(|d| d.name.as_str()).collect()));
        msgs.extend(dup("symbol", g.symbols.iter().map(String::as_str).collect()));
        for m in msgs {
            self.push(DiagnosticKind::DuplicateName, m);
        }
    }

    fn check_shape_symbols(&mut self, what: &str, exprs: &[SymExpr], symbols: &BTreeSet<&str>) {
        for e in exprs {
            for s in e.free_symbols() {
                if !symbols.contains(s.as_str()) {
                    self.push(DiagnosticKind::UnknownSymbol, format!("{what} uses undeclared symbol `{s}`"));
                }
            }
        }
    }

    fn check_runtime_ref(&mut self, k: usize, name: &str, role: RuntimeRole, usage: &str) {
        let g = self.g;
        match g.runtime_tensor(name) {
            None => self.push(
                DiagnosticKind::UnresolvedRuntimeTensor,
                format!("call {k}: {usage} references undeclared runtime tensor `{name}`"),
            ),
            Some(rt) => {
                if rt.role != role {
                    self.push(
                        DiagnosticKind::RuntimeRole,
                        format!("call {k}: {usage} needs a {role:?} tensor, `{name}` is {:?}", rt.role),
                    );
                }
                if let Some(w) = g.unique_call_of(&rt.writer) {
                    if w >= k {
                        self.push(
                            DiagnosticKind::FeedForward,
                            format!("call {k} reads `{name}` written by later call {w}"),
                        );
                    }
                }
            }
        }
    }

    fn check_call(&mut self, k: usize, call: &CallDevice, symbols: &BTreeSet<&str>) {
        let g = self.g;
        let Some(decl) = g.device_function(&call.func) else {
            self.push(
                DiagnosticKind::UnresolvedDeviceFunction,
                format!("call {k} launches undeclared device function `{}`", call.func),
            );
            return;
        };
        let rank = match &call.grid {
            Some(grid) => {
                if grid.len() != decl.grid.len() {
                    self.push(
                        DiagnosticKind::LaunchRank,
                        format!(
                            "call {k}: launch rank {} does not match declared rank {} of `{}`",
                            grid.len(),
                            decl.grid.len(),
                            decl.name
                        ),
                    );
                }
                self.check_shape_symbols(&format!("launch grid of call {k}"), grid, symbols);
                grid.len()
            }
            None => decl.grid.len(),
        };
        for name in [&call.extent_from, &call.guard].into_iter().flatten() {
            self.check_runtime_ref(k, name, RuntimeRole::Indptr, "launch extent");
        }

        let mut map_symbols: BTreeSet<String> = symbols.iter().map(|s| s.to_string()).collect();
        map_symbols.extend((0..rank).map(|a| format!("t{a}")));

        for (dir, edges) in [("in", &call.in_edges), ("out", &call.out_edges)] {
            for edge in edges.iter() {
                let Some(ev) = g.event_tensor(&edge.event) else {
                    self.push(
                        DiagnosticKind::UnresolvedEvent,
                        format!("call {k} {dir}-edge references undeclared event `{}`", edge.event),
                    );
                    continue;
                };
                match &edge.map {
                    EdgeMap::Static { index } => {
                        if index.len() != ev.shape.len() {
                            self.push(
                                DiagnosticKind::MapArity,
                                format!(
                                    "call {k} {dir}-edge maps {} coordinates onto rank-{} event `{}`",
                                    index.len(),
                                    ev.shape.len(),
                                    ev.name
                                ),
                            );
                        }
                        for e in index {
                            for s in e.free_symbols() {
                                if !map_symbols.contains(&s) {
                                    self.push(
                                        DiagnosticKind::UnknownSymbol,
                                        format!("call {k} {dir}-edge map uses unknown symbol `{s}`"),
                                    );
                                }
                            }
                        }
                    }
                    EdgeMap::DataDependentNotify { routing } => {
                        if dir == "in" {
                            self.push(
                                DiagnosticKind::EdgeDirection,
                                format!("call {k}: data-dependent notify on an in-edge of `{}`", ev.name),
                            );
                        }
                        if decl.resource == ResourceClass::Dma {
                            self.push(
                                DiagnosticKind::DmaDataDependent,
                                format!("call {k}: DMA function `{}` has a data-dependent out-edge", decl.name),
                            );
                        }
                        if ev.shape.len() != 1 {
                            self.push(
                                DiagnosticKind::MapArity,
                                format!("data-dependent notify target `{}` must be rank 1", ev.name),
                            );
                        }
                        self.check_runtime_ref(k, routing, RuntimeRole::Routing, "data-dependent notify");
                    }
                    EdgeMap::RangeTrigger { indptr } => {
                        if dir == "out" {
                            self.push(
                                DiagnosticKind::EdgeDirection,
                                format!("call {k}: range trigger on an out-edge of `{}`", ev.name),
                            );
                        }
                        if ev.shape.len() != 1 {
                            self.push(
                                DiagnosticKind::MapArity,
                                format!("range-triggered event `{}` must be rank 1", ev.name),
                            );
                        }
                        self.check_runtime_ref(k, indptr, RuntimeRole::Indptr, "range trigger");
                    }
                }
            }
        }

        // Feed-forward: every event this call waits on is written by earlier
        // calls, or by this call itself (checked per task at instantiation).
        for edge in &call.in_edges {
            for (w, other) in g.calls.iter().enumerate() {
                if w > k && other.out_edges.iter().any(|o| o.event == edge.event) {
                    self.push(
                        DiagnosticKind::FeedForward,
                        format!("call {k} waits on `{}` which call {w} notifies", edge.event),
                    );
                }
            }
        }
        // Data-dependent counts must be written before anyone notifies the event.
        for edge in &call.out_edges {
            if let Some(EventInit::DataDependent { counts }) = g.event_tensor(&edge.event).map(|e| &e.init) {
                if let Some(w) = g.runtime_writer_call(counts) {
                    if w >= k {
                        self.push(
                            DiagnosticKind::FeedForward,
                            format!("call {k} notifies `{}` before its counts are written by call {w}", edge.event),
                        );
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub calls: usize,
    pub event_tensors: usize,
    pub runtime_tensors: usize,
    pub symbols: BTreeSet<String>,
}

/// Counts of the graph's declarations plus its free shape symbols.
pub fn graph_summary(g: &GraphFunction) -> GraphSummary {
    let mut symbols: BTreeSet<String> = g.symbols.iter().cloned().collect();
    let shapes = g
        .device_functions
        .iter()
        .flat_map(|d| d.grid.iter())
        .chain(g.event_tensors.iter().flat_map(|e| e.shape.iter()))
        .chain(g.runtime_tensors.iter().flat_map(|r| r.shape.iter()))
        .chain(g.calls.iter().flat_map(|c| c.grid.iter().flatten()));
    for e in shapes {
        symbols.extend(e.free_symbols().into_iter().filter(|s| !is_coord_symbol(s)));
    }
    GraphSummary {
        calls: g.calls.len(),
        event_tensors: g.event_tensors.len(),
        runtime_tensors: g.runtime_tensors.len(),
        symbols,
    }
}

/// Event tensors written by each call, in program order.
pub fn writers_by_event(g: &GraphFunction) -> BTreeMap<&str, Vec<usize>> {
    let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (k, c) in g.calls.iter().enumerate() {
        for e in &c.out_edges {
            out.entry(e.event.as_str()).or_default().push(k);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads;

    fn two_stage() -> GraphFunction {
        workloads::splitk_rowsum()
    }

    #[test]
    fn builtin_graph_is_valid() {
        assert_eq!(validate_graph(&two_stage()), vec![]);
    }

    #[test]
    fn unresolved_event_is_reported_once() {
        let mut g = two_stage();
        g.calls[1].in_edges.push(EdgeSpec::static_map("X", vec![SymExpr::coord(0)]));
        let d = validate_graph(&g);
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].kind, DiagnosticKind::UnresolvedEvent);
        assert!(d[0].to_string().contains("unresolved event"));
    }

    #[test]
    fn map_arity_is_reported() {
        let mut g = two_stage();
        g.calls[1].in_edges[0].map = EdgeMap::Static { index: vec![SymExpr::coord(0), SymExpr::Const(0)] };
        let d = validate_graph(&g);
        assert_eq!(d.len(), 1, "{d:?}");
        assert!(d[0].to_string().contains("map arity"));
    }

    #[test]
    fn backward_dependency_is_rejected() {
        let mut g = two_stage();
        g.calls.swap(0, 1);
        let d = validate_graph(&g);
        assert!(d.iter().any(|x| x.kind == DiagnosticKind::FeedForward), "{d:?}");
    }

    #[test]
    fn edge_direction_rules() {
        let mut g = two_stage();
        g.runtime_tensors.push(RuntimeTensorDecl {
            name: "ptr".into(),
            shape: vec![SymExpr::Const(2)],
            role: RuntimeRole::Indptr,
            writer: "partial_sum".into(),
        });
        g.calls[0]
            .out_edges
            .push(EdgeSpec { event: "E".into(), map: EdgeMap::RangeTrigger { indptr: "ptr".into() } });
        let d = validate_graph(&g);
        assert!(d.iter().any(|x| x.kind == DiagnosticKind::EdgeDirection), "{d:?}");
    }

    #[test]
    fn launch_rank_and_unknown_symbols() {
        let mut g = two_stage();
        g.calls[1].grid = Some(vec![SymExpr::sym("n"), SymExpr::Const(1)]);
        g.event_tensors[0].shape = vec![SymExpr::sym("zz")];
        let kinds: BTreeSet<_> = validate_graph(&g).into_iter().map(|d| d.kind).collect();
        assert!(kinds.contains(&DiagnosticKind::LaunchRank));
        assert!(kinds.contains(&DiagnosticKind::UnknownSymbol));
    }

    #[test]
    fn validation_is_idempotent() {
        let mut g = two_stage();
        g.calls[0].func = "nope".into();
        assert_eq!(validate_graph(&g), validate_graph(&g));
    }

    #[test]
    fn summaries() {
        let s = graph_summary(&two_stage());
        assert_eq!((s.calls, s.event_tensors, s.runtime_tensors), (2, 1, 0));
        assert_eq!(s.symbols, BTreeSet::from(["n".to_string()]));

        let empty = graph_summary(&GraphFunction::default());
        assert_eq!((empty.calls, empty.event_tensors, empty.runtime_tensors), (0, 0, 0));
        assert!(empty.symbols.is_empty());

        let (moe, _) = workloads::moe_layer(&workloads::MoEParams::small());
        let s = graph_summary(&moe);
        assert_eq!(s.calls, 3);
        assert!(s.event_tensors >= 2);
        let names: BTreeSet<_> = moe.runtime_tensors.iter().map(|r| r.name.as_str()).collect();
        assert!(names.contains("topk") && names.contains("exp_indptr"));
    }

    #[test]
    fn json_roundtrip_is_lossless() {
        let (moe, _) = workloads::moe_layer(&workloads::MoEParams::small());
        for g in [two_stage(), moe] {
            let text = g.to_json();
            let back = GraphFunction::from_json(&text).unwrap();
            assert_eq!(back, g);
            assert_eq!(back.to_json(), text);
        }
    }

    #[test]
    fn coord_symbols() {
        assert!(is_coord_symbol("t0") && is_coord_symbol("t12"));
        assert!(!is_coord_symbol("t") && !is_coord_symbol("tok") && !is_coord_symbol("n"));
    }
}
