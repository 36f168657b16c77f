//! Min-cost max-flow by successive cheapest augmenting paths.
//!
//! Residual edge `2a` is the forward copy of arc `a` (spare capacity,
//! cost `c`); edge `2a + 1` is the backward copy (current flow, cost `-c`).
//! Shortest paths come from a label-correcting Bellman-Ford pass over edges
//! in id order, so ties between equal-cost paths resolve the same way on
//! every run.

use std::fmt;

use num_traits::Zero;

use super::graph::{ArcId, Cost, FlowGraph, NodeId};
use crate::num::Energy;

#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    amounts: Vec<Energy>,
}

impl Flow {
    pub fn zero(g: &FlowGraph) -> Self {
        Flow {
            amounts: vec![0; g.arcs().len()],
        }
    }

    pub fn from_amounts(amounts: Vec<Energy>) -> Self {
        Flow { amounts }
    }

    pub fn amount(&self, arc: ArcId) -> Energy {
        self.amounts[arc]
    }

    pub fn amounts(&self) -> &[Energy] {
        &self.amounts
    }

    pub(crate) fn add(&mut self, arc: ArcId, delta: Energy) {
        self.amounts[arc] += delta;
    }

    /// Net amount leaving the source.
    pub fn value(&self, g: &FlowGraph) -> Energy {
        net_out(g, &self.amounts, g.source())
    }

    /// `sum c * f` over all arcs.
    pub fn cost(&self, g: &FlowGraph) -> Cost {
        g.arcs()
            .iter()
            .zip(&self.amounts)
            .fold(Cost::zero(), |acc, (a, &f)| acc + a.cost * f)
    }

    /// Net flow from `u` to `v` over all parallel arcs in both directions.
    pub fn net(&self, g: &FlowGraph, u: NodeId, v: NodeId) -> Energy {
        g.arcs()
            .iter()
            .zip(&self.amounts)
            .map(|(a, &f)| {
                if a.from == u && a.to == v {
                    f
                } else if a.from == v && a.to == u {
                    -f
                } else {
                    0
                }
            })
            .sum()
    }

    /// Every broken flow invariant, empty when the flow is feasible:
    /// capacity bounds, antisymmetry of net flows, conservation at inner
    /// nodes and source outflow equal to sink inflow.
    pub fn violations(&self, g: &FlowGraph) -> Vec<FlowViolation> {
        let mut out = Vec::new();
        if self.amounts.len() != g.arcs().len() {
            out.push(FlowViolation::Shape {
                arcs: g.arcs().len(),
                amounts: self.amounts.len(),
            });
            return out;
        }
        for (a, (arc, &f)) in g.arcs().iter().zip(&self.amounts).enumerate() {
            if f < arc.lower || f > arc.capacity {
                out.push(FlowViolation::Capacity {
                    arc: a,
                    flow: f,
                    lower: arc.lower,
                    capacity: arc.capacity,
                });
            }
        }
        let n = g.node_count();
        let mut pairs: Vec<(NodeId, NodeId)> = g.arcs().iter().map(|a| (a.from, a.to)).collect();
        pairs.sort_unstable();
        pairs.dedup();
        for (u, v) in pairs {
            if self.net(g, u, v) != -self.net(g, v, u) {
                out.push(FlowViolation::Antisymmetry { from: u, to: v });
            }
        }
        for u in 0..n {
            if u == g.source() || u == g.sink() {
                continue;
            }
            let excess = net_out(g, &self.amounts, u);
            if excess != 0 {
                out.push(FlowViolation::Conservation { node: u, excess });
            }
        }
        let out_s = net_out(g, &self.amounts, g.source());
        let in_t = -net_out(g, &self.amounts, g.sink());
        if out_s != in_t {
            out.push(FlowViolation::Balance {
                source_out: out_s,
                sink_in: in_t,
            });
        }
        out
    }

    pub fn is_feasible(&self, g: &FlowGraph) -> bool {
        self.violations(g).is_empty()
    }
}

fn net_out(g: &FlowGraph, amounts: &[Energy], u: NodeId) -> Energy {
    g.arcs()
        .iter()
        .zip(amounts)
        .map(|(a, &f)| if a.from == u { f } else { 0 } - if a.to == u { f } else { 0 })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowViolation {
    Shape {
        arcs: usize,
        amounts: usize,
    },
    Capacity {
        arc: ArcId,
        flow: Energy,
        lower: Energy,
        capacity: Energy,
    },
    Antisymmetry {
        from: NodeId,
        to: NodeId,
    },
    Conservation {
        node: NodeId,
        excess: Energy,
    },
    Balance {
        source_out: Energy,
        sink_in: Energy,
    },
}

impl fmt::Display for FlowViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowViolation::Shape { arcs, amounts } => {
                write!(f, "flow has {amounts} entries for {arcs} arcs")
            }
            FlowViolation::Capacity {
                arc,
                flow,
                lower,
                capacity,
            } => {
                write!(f, "arc {arc}: flow {flow} outside [{lower}, {capacity}]")
            }
            FlowViolation::Antisymmetry { from, to } => {
                write!(f, "net flow {from}->{to} not antisymmetric")
            }
            FlowViolation::Conservation { node, excess } => {
                write!(f, "node {node}: excess {excess}")
            }
            FlowViolation::Balance {
                source_out,
                sink_in,
            } => {
                write!(f, "source sends {source_out} but sink receives {sink_in}")
            }
        }
    }
}

/// Residual view of a graph and a flow on it.
struct Residual<'a> {
    g: &'a FlowGraph,
    /// Outgoing residual edge ids per node, ascending.
    out: Vec<Vec<usize>>,
}

impl<'a> Residual<'a> {
    fn new(g: &'a FlowGraph) -> Self {
        let mut out = vec![Vec::new(); g.node_count()];
        for (a, arc) in g.arcs().iter().enumerate() {
            out[arc.from].push(2 * a);
            out[arc.to].push(2 * a + 1);
        }
        Residual { g, out }
    }

    fn endpoints(&self, e: usize) -> (NodeId, NodeId) {
        let arc = self.g.arc(e / 2);
        if e.is_multiple_of(2) {
            (arc.from, arc.to)
        } else {
            (arc.to, arc.from)
        }
    }

    fn spare(&self, flow: &Flow, e: usize) -> Energy {
        let a = e / 2;
        let arc = self.g.arc(a);
        if e.is_multiple_of(2) {
            arc.capacity - flow.amount(a)
        } else {
            flow.amount(a) - arc.lower
        }
    }

    fn cost(&self, e: usize) -> Cost {
        let c = self.g.arc(e / 2).cost;
        if e.is_multiple_of(2) {
            c
        } else {
            -c
        }
    }

    fn push(&self, flow: &mut Flow, e: usize, amount: Energy) {
        if e.is_multiple_of(2) {
            flow.add(e / 2, amount);
        } else {
            flow.add(e / 2, -amount);
        }
    }

    /// Bellman-Ford from `from`; returns distances and the residual edge
    /// used to reach each node. Assumes no negative cycle is reachable.
    fn shortest_paths(&self, flow: &Flow, from: NodeId) -> (Vec<Option<Cost>>, Vec<Option<usize>>) {
        let n = self.g.node_count();
        let mut dist: Vec<Option<Cost>> = vec![None; n];
        let mut parent = vec![None; n];
        dist[from] = Some(Cost::zero());
        for _ in 0..n {
            let mut changed = false;
            for u in 0..n {
                let Some(du) = dist[u] else { continue };
                for &e in &self.out[u] {
                    if self.spare(flow, e) <= 0 {
                        continue;
                    }
                    let (_, v) = self.endpoints(e);
                    let cand = du + self.cost(e);
                    if dist[v].is_none_or(|dv| cand < dv) {
                        dist[v] = Some(cand);
                        parent[v] = Some(e);
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        (dist, parent)
    }

    fn path_to(&self, parent: &[Option<usize>], from: NodeId, to: NodeId) -> Vec<usize> {
        let mut path = Vec::new();
        let mut v = to;
        while v != from {
            let e = parent[v].expect("reachable node has a parent edge");
            path.push(e);
            v = self.endpoints(e).0;
        }
        path.reverse();
        path
    }

    /// Finds a residual cycle of negative total cost, if any.
    fn negative_cycle(&self, flow: &Flow) -> Option<Vec<usize>> {
        let n = self.g.node_count();
        let mut dist = vec![Cost::zero(); n];
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut last = None;
        for _ in 0..n {
            last = None;
            for u in 0..n {
                for &e in &self.out[u] {
                    if self.spare(flow, e) <= 0 {
                        continue;
                    }
                    let (_, v) = self.endpoints(e);
                    let cand = dist[u] + self.cost(e);
                    if cand < dist[v] {
                        dist[v] = cand;
                        parent[v] = Some(e);
                        last = Some(v);
                    }
                }
            }
            last?;
        }
        // Still relaxing after n passes: walk back n steps to land on the cycle.
        let mut v = last?;
        for _ in 0..n {
            v = self.endpoints(parent[v]?).0;
        }
        let start = v;
        let mut cycle = Vec::new();
        loop {
            let e = parent[v]?;
            cycle.push(e);
            v = self.endpoints(e).0;
            if v == start {
                break;
            }
        }
        cycle.reverse();
        Some(cycle)
    }
}

/// Maximum flow of minimum cost from scratch.
pub fn min_cost_flow(g: &FlowGraph) -> Flow {
    let mut flow = Flow::zero(g);
    augment_to_max(g, &mut flow);
    debug_assert!(flow.is_feasible(g), "{:?}", flow.violations(g));
    flow
}

/// Minimum-cost maximum flow starting from a feasible `flow`: negative
/// residual cycles are cancelled first so the start is cost-optimal for its
/// value, then cheapest augmenting paths are pushed until the sink is cut
/// off.
pub fn reoptimize(g: &FlowGraph, flow: &mut Flow) {
    cancel_negative_cycles(g, flow);
    augment_to_max(g, flow);
    debug_assert!(flow.is_feasible(g), "{:?}", flow.violations(g));
}

/// Pushes flow along cheapest residual paths until none remains.
pub fn augment_to_max(g: &FlowGraph, flow: &mut Flow) {
    let res = Residual::new(g);
    let (s, t) = (g.source(), g.sink());
    loop {
        let (dist, parent) = res.shortest_paths(flow, s);
        if dist[t].is_none() {
            break;
        }
        let path = res.path_to(&parent, s, t);
        let amount = path.iter().map(|&e| res.spare(flow, e)).min().unwrap_or(0);
        if amount <= 0 {
            break;
        }
        for &e in &path {
            res.push(flow, e, amount);
        }
    }
}

pub fn cancel_negative_cycles(g: &FlowGraph, flow: &mut Flow) {
    let res = Residual::new(g);
    while let Some(cycle) = res.negative_cycle(flow) {
        let amount = cycle.iter().map(|&e| res.spare(flow, e)).min().unwrap_or(0);
        debug_assert!(amount > 0);
        for &e in &cycle {
            res.push(flow, e, amount);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::graph::ArcOrigin;

    fn c(v: i64) -> Cost {
        Cost::from_integer(v)
    }

    #[test]
    fn single_arc() {
        let mut g = FlowGraph::new();
        g.add_arc(g.source(), g.sink(), 5, c(1), ArcOrigin::Other);
        let f = min_cost_flow(&g);
        assert_eq!(f.value(&g), 5);
        assert_eq!(f.cost(&g), c(5));
        assert!(f.is_feasible(&g));
    }

    #[test]
    fn empty_graph_has_zero_flow() {
        let g = FlowGraph::new();
        let f = min_cost_flow(&g);
        assert_eq!(f.value(&g), 0);
        assert_eq!(f.cost(&g), c(0));
    }

    #[test]
    fn diamond_fills_cheap_path_first() {
        // Oracle: x units on the cheap path (cost 1), 6 - x on the dear path
        // (cost 3), x <= 4 and 6 - x <= 4; total x + 3(6 - x) is smallest at x = 4.
        let best = (2..=4).map(|x| x + 3 * (6 - x)).min().unwrap();
        assert_eq!(best, 10);
        let mut g = FlowGraph::new();
        let (a, b, m) = (g.add_node("a"), g.add_node("b"), g.add_node("m"));
        let (s, t) = (g.source(), g.sink());
        g.add_arc(s, m, 6, c(0), ArcOrigin::Other);
        g.add_arc(m, a, 4, c(1), ArcOrigin::Other);
        g.add_arc(m, b, 4, c(3), ArcOrigin::Other);
        g.add_arc(a, t, 4, c(0), ArcOrigin::Other);
        g.add_arc(b, t, 4, c(0), ArcOrigin::Other);
        let f = min_cost_flow(&g);
        assert_eq!(f.value(&g), 6);
        assert_eq!(f.cost(&g), c(best));
        assert_eq!((f.amount(1), f.amount(2)), (4, 2));
    }

    #[test]
    fn violations_are_reported() {
        let mut g = FlowGraph::new();
        let m = g.add_node("m");
        g.add_arc(g.source(), m, 3, c(1), ArcOrigin::Other);
        g.add_arc(m, g.sink(), 3, c(1), ArcOrigin::Other);
        let bad = Flow::from_amounts(vec![4, 2]);
        let v = bad.violations(&g);
        assert!(v
            .iter()
            .any(|x| matches!(x, FlowViolation::Capacity { arc: 0, .. })));
        assert!(v
            .iter()
            .any(|x| matches!(x, FlowViolation::Conservation { excess: -2, .. })));
        assert!(v.iter().any(|x| matches!(x, FlowViolation::Balance { .. })));
    }

    #[test]
    fn cycle_cancelling_repairs_a_dear_flow() {
        let mut g = FlowGraph::new();
        let (a, b) = (g.add_node("a"), g.add_node("b"));
        let (s, t) = (g.source(), g.sink());
        g.add_arc(s, a, 2, c(0), ArcOrigin::Other);
        g.add_arc(a, b, 2, c(1), ArcOrigin::Other);
        g.add_arc(a, b, 2, c(5), ArcOrigin::Other);
        g.add_arc(b, t, 2, c(0), ArcOrigin::Other);
        let mut f = Flow::from_amounts(vec![2, 0, 2, 2]);
        assert!(f.is_feasible(&g));
        reoptimize(&g, &mut f);
        assert_eq!(f.amounts(), &[2, 2, 0, 2]);
        assert_eq!(f.cost(&g), c(2));
    }
}
