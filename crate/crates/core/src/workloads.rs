//! Built-in graph generators.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::duration::DurationModel;
use crate::ir::{
    CallDevice, DeviceFunctionDecl, EdgeMap, EdgeSpec, EventInit, EventTensorDecl, GraphFunction, ResourceClass,
    RuntimeRole, RuntimeTensorDecl,
};
use crate::materialize::{MaterializeError, RoutingRealization};
use crate::symshape::{ShapeBinding, SymExpr};

fn func(name: &str, grid: Vec<SymExpr>, duration: DurationModel) -> DeviceFunctionDecl {
    DeviceFunctionDecl { name: name.into(), grid, resource: ResourceClass::Sm, duration, prefetch: None }
}

fn event(name: &str, shape: Vec<SymExpr>) -> EventTensorDecl {
    EventTensorDecl { name: name.into(), shape, init: EventInit::DerivedCount }
}

fn c(v: i64) -> SymExpr {
    SymExpr::Const(v)
}

/// Row sums of an `(n*32, 128)` matrix in two stages: 4 partial sums per
/// row block, then one final sum per block.
pub fn splitk_rowsum() -> GraphFunction {
    let n = SymExpr::sym("n");
    GraphFunction {
        symbols: vec!["n".into()],
        size_symbol: Some("n".into()),
        device_functions: vec![
            func("partial_sum", vec![n.clone(), c(4)], DurationModel::constant(4)),
            func("final_sum", vec![n.clone()], DurationModel::constant(2)),
        ],
        event_tensors: vec![event("E", vec![n])],
        runtime_tensors: vec![],
        calls: vec![
            CallDevice::new("partial_sum").notify(EdgeSpec::static_map("E", vec![SymExpr::coord(0)])),
            CallDevice::new("final_sum").wait(EdgeSpec::static_map("E", vec![SymExpr::coord(0)])),
        ],
    }
}

/// Two element-wise stages over a `(B, 2)` grid; tile `(b, j)` of the
/// second stage waits on tile `(b, j)` of the first.
pub fn batched_two_stage() -> GraphFunction {
    let b = SymExpr::sym("B");
    let idx = vec![SymExpr::coord(0), SymExpr::coord(1)];
    GraphFunction {
        symbols: vec!["B".into()],
        size_symbol: Some("B".into()),
        device_functions: vec![
            func("stage0", vec![b.clone(), c(2)], DurationModel::constant(3)),
            func("stage1", vec![b.clone(), c(2)], DurationModel::constant(3)),
        ],
        event_tensors: vec![event("E", vec![b, c(2)])],
        runtime_tensors: vec![],
        calls: vec![
            CallDevice::new("stage0").notify(EdgeSpec::static_map("E", idx.clone())),
            CallDevice::new("stage1").wait(EdgeSpec::static_map("E", idx)),
        ],
    }
}

/// GEMM tiles feeding a reduce-scatter whose tiles each cover `fan_in`
/// consecutive GEMM tiles.
pub fn gemm_reduce_scatter(mm_tiles: SymExpr, fan_in: i64) -> GraphFunction {
    assert!(fan_in >= 1, "fan_in must be positive");
    let symbols: Vec<String> = mm_tiles.free_symbols().into_iter().collect();
    let size_symbol = (symbols.len() == 1).then(|| symbols[0].clone());
    let rs_tiles = mm_tiles.clone().floordiv(c(fan_in)).fold_constants();
    GraphFunction {
        symbols,
        size_symbol,
        device_functions: vec![
            func("mm", vec![mm_tiles], DurationModel::constant(4)),
            func("rs", vec![rs_tiles.clone()], DurationModel::constant(3)),
        ],
        event_tensors: vec![event("E", vec![rs_tiles])],
        runtime_tensors: vec![],
        calls: vec![
            CallDevice::new("mm").notify(EdgeSpec::static_map("E", vec![SymExpr::coord(0).floordiv(c(fan_in))])),
            CallDevice::new("rs").wait(EdgeSpec::static_map("E", vec![SymExpr::coord(0)])),
        ],
    }
}

/// Ring all-gather on the DMA channel followed by GEMM tiles that consume
/// each chunk as it arrives. `ring[r]` orders copy `r` after copy `r-1`;
/// `ring[0]` has no producer and is ready at start.
pub fn all_gather_gemm(chunks: i64, gemm_tiles_per_chunk: i64) -> GraphFunction {
    assert!(chunks >= 1, "need at least one chunk");
    let mut copy = func("copy", vec![c(chunks)], DurationModel::constant(3));
    copy.resource = ResourceClass::Dma;
    GraphFunction {
        symbols: vec![],
        size_symbol: None,
        device_functions: vec![
            copy,
            func("gemm", vec![c(chunks), c(gemm_tiles_per_chunk)], DurationModel::constant(2)),
        ],
        event_tensors: vec![event("ring", vec![c(chunks + 1)]), event("arrival", vec![c(chunks)])],
        runtime_tensors: vec![],
        calls: vec![
            CallDevice::new("copy")
                .wait(EdgeSpec::static_map("ring", vec![SymExpr::coord(0)]))
                .notify(EdgeSpec::static_map("ring", vec![SymExpr::coord(0).add(c(1))]))
                .notify(EdgeSpec::static_map("arrival", vec![SymExpr::coord(0)])),
            CallDevice::new("gemm").wait(EdgeSpec::static_map("arrival", vec![SymExpr::coord(0)])),
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoEParams {
    pub tokens: i64,
    pub experts: i64,
    pub top_k: i64,
    /// Tokens per GroupGEMM tile.
    pub tile_size: i64,
    /// Probability that a token's first choice is expert 0; 0 draws uniformly.
    pub hot_prob: f64,
    pub seed: u64,
}

impl MoEParams {
    pub fn small() -> Self {
        MoEParams { tokens: 8, experts: 4, top_k: 2, tile_size: 2, hot_prob: 0.0, seed: 0 }
    }

    /// Largest possible number of GroupGEMM tiles.
    pub fn max_tiles(&self) -> i64 {
        let assignments = self.tokens * self.top_k;
        assignments.min((assignments + self.experts * (self.tile_size - 1)) / self.tile_size)
    }
}

/// Draws routing decisions and derives the tensors that depend on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoERealizer {
    pub params: MoEParams,
}

impl MoERealizer {
    /// Routing with a fresh seed. The binding is unused: MoE shapes are concrete.
    pub fn realize(&self, _binding: &ShapeBinding, seed: u64) -> Result<RoutingRealization, MaterializeError> {
        Ok(self.from_routing(&self.draw_routing(seed)))
    }

    /// `tokens * top_k` expert ids, row-major by (token, k); the `top_k`
    /// choices of one token are distinct.
    pub fn draw_routing(&self, seed: u64) -> Vec<i64> {
        let p = &self.params;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity((p.tokens * p.top_k) as usize);
        let experts: Vec<i64> = (0..p.experts).collect();
        for _ in 0..p.tokens {
            let mut chosen: Vec<i64> = Vec::with_capacity(p.top_k as usize);
            if p.hot_prob > 0.0 && rng.gen_bool(p.hot_prob.min(1.0)) {
                chosen.push(0);
            }
            let rest: Vec<i64> = experts.iter().copied().filter(|e| !chosen.contains(e)).collect();
            let need = p.top_k as usize - chosen.len();
            chosen.extend(rest.choose_multiple(&mut rng, need).copied());
            out.extend(chosen);
        }
        out
    }

    pub fn from_routing(&self, topk: &[i64]) -> RoutingRealization {
        let p = &self.params;
        let mut counts = vec![0i64; p.experts as usize];
        for &e in topk {
            if let Some(slot) = usize::try_from(e).ok().and_then(|i| counts.get_mut(i)) {
                *slot += 1;
            }
        }
        let mut indptr = vec![0i64];
        for &n in &counts {
            let tiles = (n + p.tile_size - 1) / p.tile_size;
            indptr.push(indptr.last().unwrap() + tiles);
        }
        RoutingRealization::default()
            .with("topk", topk.to_vec())
            .with("expert_counts", counts)
            .with("exp_indptr", indptr)
    }
}

/// Routing, token grouping, and a GroupGEMM whose tiles are triggered per
/// expert through `exp_indptr`.
pub fn moe_layer(p: &MoEParams) -> (GraphFunction, MoERealizer) {
    assert!(p.top_k >= 1 && p.top_k <= p.experts, "need 1 <= top_k <= experts");
    assert!(p.tile_size >= 1, "tile size must be positive");
    let mut gemm = func("group_gemm", vec![c(p.max_tiles())], DurationModel::constant(8));
    gemm.prefetch = Some(DurationModel::constant(2));
    let g = GraphFunction {
        symbols: vec![],
        size_symbol: None,
        device_functions: vec![
            func("routing", vec![c(1)], DurationModel::constant(2)),
            func("grouping", vec![c(p.tokens), c(p.top_k)], DurationModel::constant(1)),
            gemm,
        ],
        event_tensors: vec![
            event("route_done", vec![c(1)]),
            EventTensorDecl {
                name: "expert_ready".into(),
                shape: vec![c(p.experts)],
                init: EventInit::DataDependent { counts: "expert_counts".into() },
            },
        ],
        runtime_tensors: vec![
            RuntimeTensorDecl {
                name: "topk".into(),
                shape: vec![c(p.tokens), c(p.top_k)],
                role: RuntimeRole::Routing,
                writer: "routing".into(),
            },
            RuntimeTensorDecl {
                name: "expert_counts".into(),
                shape: vec![c(p.experts)],
                role: RuntimeRole::Counts,
                writer: "routing".into(),
            },
            RuntimeTensorDecl {
                name: "exp_indptr".into(),
                shape: vec![c(p.experts + 1)],
                role: RuntimeRole::Indptr,
                writer: "routing".into(),
            },
        ],
        calls: vec![
            CallDevice::new("routing").notify(EdgeSpec::static_map("route_done", vec![c(0)])),
            CallDevice::new("grouping")
                .wait(EdgeSpec::static_map("route_done", vec![c(0)]))
                .notify(EdgeSpec {
                    event: "expert_ready".into(),
                    map: EdgeMap::DataDependentNotify { routing: "topk".into() },
                }),
            CallDevice {
                extent_from: Some("exp_indptr".into()),
                ..CallDevice::new("group_gemm").wait(EdgeSpec {
                    event: "expert_ready".into(),
                    map: EdgeMap::RangeTrigger { indptr: "exp_indptr".into() },
                })
            },
        ],
    };
    (g, MoERealizer { params: p.clone() })
}

/// Layered random DAG: every node is a single-task call with a uniform
/// 1..=9 duration and one completion event that its successors wait on.
pub fn random_dag(nodes: usize, edges: usize, seed: u64) -> GraphFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = ((nodes as f64).sqrt().ceil() as usize).max(1);
    let mut layer_of: Vec<usize> = (0..nodes).map(|_| rng.gen_range(0..layers)).collect();
    layer_of.sort_unstable();

    let mut pairs = BTreeSet::new();
    let mut attempts = 0;
    while pairs.len() < edges && attempts < edges * 20 && nodes > 1 {
        attempts += 1;
        let a = rng.gen_range(0..nodes);
        let b = rng.gen_range(0..nodes);
        if layer_of[a] < layer_of[b] {
            pairs.insert((a, b));
        }
    }

    let mut g = GraphFunction::default();
    for v in 0..nodes {
        g.device_functions.push(func(&format!("n{v}"), vec![c(1)], DurationModel::uniform(1, 9)));
        let mut call = CallDevice::new(format!("n{v}"));
        for &(a, _) in pairs.iter().filter(|(_, b)| *b == v) {
            call = call.wait(EdgeSpec::static_map(format!("e{a}"), vec![c(0)]));
        }
        if pairs.iter().any(|(a, _)| *a == v) {
            g.event_tensors.push(event(&format!("e{v}"), vec![c(1)]));
            call = call.notify(EdgeSpec::static_map(format!("e{v}"), vec![c(0)]));
        }
        g.calls.push(call);
    }
    g
}
