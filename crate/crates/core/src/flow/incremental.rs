//! Warm-started rerouting after capacity changes.
//!
//! Arcs whose new capacity falls below the flow they carry are listed.
//! A helper graph G' keeps only flow-carrying arcs, with capacity equal to
//! their current flow and cost `1/c`, so the cheapest G' path through a
//! listed arc is the most expensive route actually using it. Flow is peeled
//! off such routes until every listed arc is back within its new capacity;
//! the remainder is then re-optimised and re-augmented on the updated graph.

use num_traits::{One, Zero};
use thiserror::Error;

use super::graph::{ArcId, Cost, FlowGraph, NodeId};
use super::solver::{reoptimize, Flow};
use crate::num::Energy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapacityChange {
    pub arc: ArcId,
    /// New capacity of the arc.
    pub capacity: Energy,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RerouteError {
    #[error("capacity change refers to unknown arc {0}")]
    UnknownArc(ArcId),
    #[error("capacity change for arc {0} is negative")]
    NegativeCapacity(ArcId),
    #[error("previous flow does not fit the graph it was computed on")]
    InfeasiblePrevious,
    #[error(
        "cannot saturate listed arc {arc} ({from} -> {to}): {remaining} unit(s) left to remove"
    )]
    Unsaturatable {
        arc: ArcId,
        from: String,
        to: String,
        remaining: Energy,
    },
}

/// Copy of `g` with the changes applied in order.
pub fn apply_changes(g: &FlowGraph, changes: &[CapacityChange]) -> Result<FlowGraph, RerouteError> {
    let mut updated = g.clone();
    for ch in changes {
        if ch.arc >= g.arcs().len() {
            return Err(RerouteError::UnknownArc(ch.arc));
        }
        if ch.capacity < 0 {
            return Err(RerouteError::NegativeCapacity(ch.arc));
        }
        updated.set_capacity(ch.arc, ch.capacity);
    }
    Ok(updated)
}

/// Min-cost max-flow on `g` with `changes` applied, warm-started from
/// `prev` (a feasible flow on `g`).
pub fn incremental_reroute(
    g: &FlowGraph,
    prev: &Flow,
    changes: &[CapacityChange],
) -> Result<Flow, RerouteError> {
    let updated = apply_changes(g, changes)?;
    if !prev.is_feasible(g) {
        return Err(RerouteError::InfeasiblePrevious);
    }
    let mut flow = prev.clone();
    let listed: Vec<ArcId> = {
        let mut v: Vec<ArcId> = changes.iter().map(|c| c.arc).collect();
        v.sort_unstable();
        v.dedup();
        v.into_iter()
            .filter(|&a| prev.amount(a) > updated.arc(a).capacity)
            .collect()
    };
    for &a in &listed {
        peel(&updated, &mut flow, a)?;
    }
    debug_assert!(flow.is_feasible(&updated));
    reoptimize(&updated, &mut flow);
    Ok(flow)
}

fn inverted(c: Cost) -> Cost {
    // Plant and microgrid arcs cost nothing; they stay free in G'.
    if c.is_zero() {
        Cost::zero()
    } else {
        Cost::one() / c
    }
}

/// Removes flow through `arc` along cheapest G' routes until it fits its
/// capacity in `g`.
fn peel(g: &FlowGraph, flow: &mut Flow, arc: ArcId) -> Result<(), RerouteError> {
    let (s, t) = (g.source(), g.sink());
    let (u, v) = (g.arc(arc).from, g.arc(arc).to);
    loop {
        let excess = flow.amount(arc) - g.arc(arc).capacity;
        if excess <= 0 {
            return Ok(());
        }
        let head = cheapest_carrying_path(g, flow, s, u, arc);
        let tail = cheapest_carrying_path(g, flow, v, t, arc);
        let route = match (head, tail) {
            (Some(h), Some(tl)) => {
                let mut walk = h;
                walk.push(arc);
                walk.extend(tl);
                close_cycle(g, walk, arc)
            }
            // The arc only carries circulating flow.
            _ => cheapest_carrying_path(g, flow, v, u, arc).map(|mut back| {
                back.insert(0, arc);
                back
            }),
        };
        let Some(route) = route else {
            return Err(RerouteError::Unsaturatable {
                arc,
                from: g.name(u).to_string(),
                to: g.name(v).to_string(),
                remaining: excess,
            });
        };
        let amount = route
            .iter()
            .map(|&a| flow.amount(a))
            .min()
            .unwrap_or(0)
            .min(excess);
        debug_assert!(amount > 0);
        for &a in &route {
            flow.add(a, -amount);
        }
    }
}

/// If the s..u, (u,v), v..t walk revisits a node, the loop through `arc`
/// alone is removed instead; it carries flow all the way round.
fn close_cycle(g: &FlowGraph, walk: Vec<ArcId>, arc: ArcId) -> Option<Vec<ArcId>> {
    let pos = walk.iter().position(|&a| a == arc)?;
    let nodes: Vec<NodeId> = std::iter::once(g.arc(walk[0]).from)
        .chain(walk.iter().map(|&a| g.arc(a).to))
        .collect();
    // nodes[i] is the tail of walk[i]; nodes[pos] = u, nodes[pos + 1] = v.
    for i in 0..=pos {
        for j in (pos + 1)..nodes.len() {
            if nodes[i] == nodes[j] {
                return Some(walk[i..j].to_vec());
            }
        }
    }
    Some(walk)
}

/// Cheapest path from `from` to `to` over flow-carrying arcs with inverted
/// costs, never using `skip`. Costs are nonnegative so plain label
/// correcting converges.
fn cheapest_carrying_path(
    g: &FlowGraph,
    flow: &Flow,
    from: NodeId,
    to: NodeId,
    skip: ArcId,
) -> Option<Vec<ArcId>> {
    if from == to {
        return Some(Vec::new());
    }
    let n = g.node_count();
    let mut dist: Vec<Option<Cost>> = vec![None; n];
    let mut parent: Vec<Option<ArcId>> = vec![None; n];
    dist[from] = Some(Cost::zero());
    for _ in 0..n {
        let mut changed = false;
        for (a, arc) in g.arcs().iter().enumerate() {
            if a == skip || flow.amount(a) <= 0 {
                continue;
            }
            let Some(du) = dist[arc.from] else { continue };
            let cand = du + inverted(arc.cost);
            if dist[arc.to].is_none_or(|dv| cand < dv) {
                dist[arc.to] = Some(cand);
                parent[arc.to] = Some(a);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dist[to]?;
    let mut path = Vec::new();
    let mut x = to;
    let mut guard = 0;
    while x != from {
        let a = parent[x]?;
        path.push(a);
        x = g.arc(a).from;
        guard += 1;
        if guard > n {
            return None;
        }
    }
    path.reverse();
    Some(path)
}
