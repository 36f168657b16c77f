//! Diagnostic flows, bid forecasting and production planning.

use std::collections::VecDeque;

use num_rational::Rational64;
use thiserror::Error;

use crate::flow::{
    delivered, dispatched, expand_network, min_cost_flow, ArcId, ArcOrigin, Cost, FlowGraph,
};
use crate::num::{round_half_away, Energy};
use crate::scenario::{Plant, Scenario};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForecastError {
    #[error("cannot forecast from an empty bid history")]
    EmptyHistory,
}

/// Delivery per microgrid when microgrids may absorb anything: the sink
/// arcs are bounded only by total production.
pub fn unconstrained_consumption_test(scenario: &Scenario, production: &[Energy]) -> Vec<Energy> {
    let bound: Energy = production.iter().sum();
    let bids = vec![bound; scenario.microgrids.len()];
    let g = expand_network(scenario, production, &bids);
    delivered(&g, &min_cost_flow(&g))
}

/// Output per plant when plants may produce anything: the source arcs are
/// bounded only by total demand.
pub fn unconstrained_production_test(scenario: &Scenario, bids: &[Energy]) -> Vec<Energy> {
    let bound: Energy = bids.iter().sum();
    let production = vec![bound; scenario.plants.len()];
    let g = expand_network(scenario, &production, bids);
    dispatched(&g, &min_cost_flow(&g))
}

/// Recent bids of one microgrid, oldest first, capped at `window` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BidHistory {
    window: usize,
    z: VecDeque<Energy>,
}

impl BidHistory {
    pub fn new(window: usize) -> Self {
        assert!(window > 0);
        BidHistory {
            window,
            z: VecDeque::with_capacity(window),
        }
    }

    pub fn push(&mut self, bid: Energy) {
        debug_assert!(bid >= 0);
        if self.z.len() == self.window {
            self.z.pop_front();
        }
        self.z.push_back(bid);
    }

    pub fn bids(&self) -> Vec<Energy> {
        self.z.iter().copied().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn forecast(&self) -> Result<Rational64, ForecastError> {
        forecast_bid(&self.bids())
    }
}

/// Recency-weighted mean: bid `i` (1-based, oldest first) has weight `i`,
/// normalised by `n(n+1)/2`.
pub fn forecast_bid(z: &[Energy]) -> Result<Rational64, ForecastError> {
    if z.is_empty() {
        return Err(ForecastError::EmptyHistory);
    }
    let n = z.len() as i64;
    let weighted: i64 = z.iter().enumerate().map(|(i, &b)| (i as i64 + 1) * b).sum();
    Ok(Rational64::new(weighted, n * (n + 1) / 2))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductionPlan {
    /// Output per plant for the next iteration.
    pub targets: Vec<Energy>,
    /// Total ramping cost of the moves.
    pub cost: i64,
    /// Demand change the ramp limits could not cover: positive when
    /// production falls short, negative when a surplus cannot be shed.
    pub unmet: Energy,
}

impl ProductionPlan {
    pub fn is_feasible(&self) -> bool {
        self.unmet == 0
    }
}

/// Plans plant outputs so total production tracks the summed forecast at
/// the least ramping cost, within each plant's ramp limit and capacity.
///
/// The adjustment graph has an increase hub and a decrease hub fed from the
/// source (only the one matching the sign of the needed change gets
/// capacity), an arc from each hub to each plant with that plant's
/// direction-specific headroom and unit cost, and an uncapped arc from each
/// plant to the sink.
pub fn plan_production(forecasts: &[Rational64], plants: &[Plant]) -> ProductionPlan {
    let demand = round_half_away(&forecasts.iter().copied().sum::<Rational64>());
    let current: Energy = plants.iter().map(|p| p.output).sum();
    let delta = demand - current;

    let mut g = FlowGraph::new();
    let (s, t) = (g.source(), g.sink());
    let up = g.add_node("increase");
    let down = g.add_node("decrease");
    g.add_arc(s, up, delta.max(0), Cost::from(0), ArcOrigin::Other);
    g.add_arc(s, down, (-delta).max(0), Cost::from(0), ArcOrigin::Other);
    let mut inc_arcs: Vec<ArcId> = Vec::new();
    let mut dec_arcs: Vec<ArcId> = Vec::new();
    let uncapped = delta.abs();
    for (i, p) in plants.iter().enumerate() {
        let node = g.add_node(p.id.clone());
        let up_room = p.ramp_limit.min(p.capacity - p.output).max(0);
        let down_room = p.ramp_limit.min(p.output).max(0);
        inc_arcs.push(g.add_arc(
            up,
            node,
            up_room,
            Cost::from(p.ramp_up_cost),
            ArcOrigin::Plant(i),
        ));
        dec_arcs.push(g.add_arc(
            down,
            node,
            down_room,
            Cost::from(p.ramp_down_cost),
            ArcOrigin::Plant(i),
        ));
        g.add_arc(node, t, uncapped, Cost::from(0), ArcOrigin::Other);
    }
    let f = min_cost_flow(&g);
    let targets = plants
        .iter()
        .enumerate()
        .map(|(i, p)| p.output + f.amount(inc_arcs[i]) - f.amount(dec_arcs[i]))
        .collect();
    let cost = f.cost(&g).to_integer();
    let moved = f.value(&g);
    ProductionPlan {
        targets,
        cost,
        unmet: delta - delta.signum() * moved,
    }
}
