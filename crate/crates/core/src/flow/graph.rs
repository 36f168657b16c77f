use std::collections::HashMap;

use num_rational::Rational64;

use crate::num::Energy;
use crate::scenario::Scenario;

pub type NodeId = usize;
pub type ArcId = usize;
pub type Cost = Rational64;

/// What a flow-graph arc stands for in the physical model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcOrigin {
    /// Tier 1, 2 or 3 of a network line.
    LineTier {
        line: usize,
        tier: u8,
    },
    /// Source to the plant's node.
    Plant(usize),
    /// Microgrid node to sink.
    Microgrid(usize),
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub from: NodeId,
    pub to: NodeId,
    /// Lower bound; carried but always 0 in the current solver.
    pub lower: Energy,
    pub capacity: Energy,
    pub cost: Cost,
    pub origin: ArcOrigin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowGraph {
    names: Vec<String>,
    source: NodeId,
    sink: NodeId,
    arcs: Vec<Arc>,
}

impl FlowGraph {
    /// A graph holding only the virtual source and sink.
    pub fn new() -> Self {
        FlowGraph {
            names: vec!["source".into(), "sink".into()],
            source: 0,
            sink: 1,
            arcs: Vec::new(),
        }
    }

    pub fn add_node(&mut self, name: impl Into<String>) -> NodeId {
        self.names.push(name.into());
        self.names.len() - 1
    }

    pub fn add_arc(
        &mut self,
        from: NodeId,
        to: NodeId,
        capacity: Energy,
        cost: Cost,
        origin: ArcOrigin,
    ) -> ArcId {
        assert!(
            from < self.names.len() && to < self.names.len(),
            "arc endpoint out of range"
        );
        assert!(capacity >= 0, "capacity must be nonnegative");
        self.arcs.push(Arc {
            from,
            to,
            lower: 0,
            capacity,
            cost,
            origin,
        });
        self.arcs.len() - 1
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn sink(&self) -> NodeId {
        self.sink
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, node: NodeId) -> &str {
        &self.names[node]
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn arc(&self, id: ArcId) -> &Arc {
        &self.arcs[id]
    }

    pub fn set_capacity(&mut self, id: ArcId, capacity: Energy) {
        assert!(capacity >= 0);
        self.arcs[id].capacity = capacity;
    }

    pub fn arc_ids_by_origin(&self, pred: impl Fn(ArcOrigin) -> bool) -> Vec<ArcId> {
        (0..self.arcs.len())
            .filter(|&a| pred(self.arcs[a].origin))
            .collect()
    }

    /// Arc id of the source arc of each plant, in plant order.
    pub fn plant_arcs(&self) -> Vec<ArcId> {
        let mut v: Vec<(usize, ArcId)> = self
            .arcs
            .iter()
            .enumerate()
            .filter_map(|(a, arc)| match arc.origin {
                ArcOrigin::Plant(p) => Some((p, a)),
                _ => None,
            })
            .collect();
        v.sort_unstable();
        v.into_iter().map(|(_, a)| a).collect()
    }

    /// Arc id of the sink arc of each microgrid, in microgrid order.
    pub fn microgrid_arcs(&self) -> Vec<ArcId> {
        let mut v: Vec<(usize, ArcId)> = self
            .arcs
            .iter()
            .enumerate()
            .filter_map(|(a, arc)| match arc.origin {
                ArcOrigin::Microgrid(m) => Some((m, a)),
                _ => None,
            })
            .collect();
        v.sort_unstable();
        v.into_iter().map(|(_, a)| a).collect()
    }
}

impl Default for FlowGraph {
    fn default() -> Self {
        Self::new()
    }
}

/// Expands the scenario's lines into tiered parallel arcs and attaches
/// plants to the source (capacity = `production[i]`) and microgrids to the
/// sink (capacity = `bids[j]`).
///
/// Line tiers of zero width are left out; plant and microgrid arcs are
/// always present so that arc ids stay stable between calls.
pub fn expand_network(scenario: &Scenario, production: &[Energy], bids: &[Energy]) -> FlowGraph {
    assert_eq!(production.len(), scenario.plants.len());
    assert_eq!(bids.len(), scenario.microgrids.len());
    assert!(production.iter().chain(bids).all(|&x| x >= 0));

    let mut g = FlowGraph::new();
    let mut index = HashMap::new();
    for n in &scenario.network.nodes {
        let id = g.add_node(n.clone());
        index.insert(n.as_str(), id);
    }
    let defaults = scenario.config.tier_cost_defaults;
    for (li, line) in scenario.network.lines.iter().enumerate() {
        let (u, v) = (
            index[line.endpoints.0.as_str()],
            index[line.endpoints.1.as_str()],
        );
        let costs = line.costs(defaults);
        let mut prev = 0;
        for (tier, (&cap, &cost)) in line.tier_caps.iter().zip(&costs).enumerate() {
            let width = cap - prev;
            prev = cap;
            if width > 0 {
                g.add_arc(
                    u,
                    v,
                    width,
                    Cost::from_integer(cost),
                    ArcOrigin::LineTier {
                        line: li,
                        tier: tier as u8 + 1,
                    },
                );
            }
        }
    }
    let (s, t) = (g.source(), g.sink());
    for (pi, plant) in scenario.plants.iter().enumerate() {
        g.add_arc(
            s,
            index[plant.node.as_str()],
            production[pi],
            Cost::from_integer(0),
            ArcOrigin::Plant(pi),
        );
    }
    for (mi, mg) in scenario.microgrids.iter().enumerate() {
        g.add_arc(
            index[mg.node.as_str()],
            t,
            bids[mi],
            Cost::from_integer(0),
            ArcOrigin::Microgrid(mi),
        );
    }
    g
}
