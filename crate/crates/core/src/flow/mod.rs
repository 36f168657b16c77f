//! Transmission and distribution routing.

mod graph;
mod incremental;
mod solver;

pub use graph::{expand_network, Arc, ArcId, ArcOrigin, Cost, FlowGraph, NodeId};
pub use incremental::{apply_changes, incremental_reroute, CapacityChange, RerouteError};
pub use solver::{
    augment_to_max, cancel_negative_cycles, min_cost_flow, reoptimize, Flow, FlowViolation,
};

use crate::game::FeedbackMessage;
use crate::num::Energy;

/// Energy delivered to each microgrid (flow on its sink arc).
pub fn delivered(g: &FlowGraph, f: &Flow) -> Vec<Energy> {
    g.microgrid_arcs()
        .into_iter()
        .map(|a| f.amount(a))
        .collect()
}

/// Energy sent by each plant (flow on its source arc).
pub fn dispatched(g: &FlowGraph, f: &Flow) -> Vec<Energy> {
    g.plant_arcs().into_iter().map(|a| f.amount(a)).collect()
}

/// Per-microgrid verdict: a shortfall asks for less; a fully served bid
/// with at least one unit of headroom in `reachable` asks for more.
pub fn diagnose(
    g: &FlowGraph,
    f: &Flow,
    bids: &[Energy],
    reachable: &[Energy],
) -> Vec<FeedbackMessage> {
    let got = delivered(g, f);
    assert_eq!(got.len(), bids.len());
    assert_eq!(reachable.len(), bids.len());
    got.iter()
        .zip(bids)
        .zip(reachable)
        .map(|((&d, &bid), &max)| {
            if d < bid {
                FeedbackMessage::ConsumeLess
            } else if max - d >= 1 {
                FeedbackMessage::ConsumeMore
            } else {
                FeedbackMessage::Fits
            }
        })
        .collect()
}

/// One arc of a flow dump.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub from: String,
    pub to: String,
    /// Line tier 1..=3, or `None` for source and sink arcs.
    pub tier: Option<u8>,
    pub flow: Energy,
    /// `unit cost * flow`.
    pub cost: Cost,
}

pub fn flow_records(g: &FlowGraph, f: &Flow) -> Vec<FlowRecord> {
    g.arcs()
        .iter()
        .enumerate()
        .map(|(a, arc)| FlowRecord {
            from: g.name(arc.from).to_string(),
            to: g.name(arc.to).to_string(),
            tier: match arc.origin {
                ArcOrigin::LineTier { tier, .. } => Some(tier),
                _ => None,
            },
            flow: f.amount(a),
            cost: arc.cost * f.amount(a),
        })
        .collect()
}
