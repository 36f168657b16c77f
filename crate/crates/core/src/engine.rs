//! Iteration lifecycle: strategies (A), auction (B), routing with feedback
//! rounds (B-C), then forecasts and production planning (D).

use num_rational::Rational64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::flow::{
    apply_changes, delivered, expand_network, incremental_reroute, min_cost_flow, CapacityChange,
    Cost, Flow, FlowGraph,
};
use crate::forecast::{
    plan_production, unconstrained_consumption_test, unconstrained_production_test, BidHistory,
    ProductionPlan,
};
use crate::game::{
    apply_feedback, choose, house_payoffs, microgrid_bid, FeedbackMessage, StrategyPayoff,
};
use crate::knapsack::{
    generate_strategies, house_values, update_priorities, KnapsackTable, Strategy,
};
use crate::num::Energy;
use crate::par::{self, ExecMode};
use crate::scenario::{House, Scenario};

/// One row of run output.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub iteration: u64,
    /// Sum of the microgrid goals for this iteration, when any is set.
    pub goal: Option<Energy>,
    pub consumption: Energy,
    pub house_consumption: Vec<Energy>,
    pub feedback_rounds: u32,
    pub consensus: bool,
    pub flow_cost: Cost,
    /// `consumption - goal`.
    pub tracking_error: Option<Energy>,
}

/// Everything decided during one iteration.
#[derive(Debug, Clone)]
pub struct IterationReport {
    pub iteration: u64,
    pub strategies: Vec<Vec<Strategy>>,
    /// Final adjusted payoffs per house.
    pub payoffs: Vec<Vec<StrategyPayoff>>,
    pub chosen: Vec<usize>,
    pub bids: Vec<Energy>,
    /// Bids per round, per microgrid.
    pub bid_trace: Vec<Vec<Energy>>,
    /// Messages per round, per microgrid.
    pub message_trace: Vec<Vec<FeedbackMessage>>,
    pub granted: Vec<Energy>,
    pub house_granted: Vec<Energy>,
    pub allocations: Vec<Vec<String>>,
    pub graph: FlowGraph,
    pub flow: Flow,
    pub max_consumption: Vec<Energy>,
    pub demanded_production: Vec<Energy>,
    pub forecasts: Vec<Rational64>,
    pub plan: ProductionPlan,
    pub metrics: MetricsRecord,
}

impl IterationReport {
    pub fn consensus(&self) -> bool {
        self.metrics.consensus
    }
}

#[derive(Debug, Clone)]
pub struct SimState {
    /// Index of the next iteration to run.
    pub iteration: u64,
    /// Houses in microgrid order, with current priorities.
    pub houses: Vec<House>,
    pub plant_output: Vec<Energy>,
    pub histories: Vec<BidHistory>,
    pub last: Option<IterationReport>,
    rng: ChaCha8Rng,
}

impl SimState {
    pub fn new(scenario: &Scenario) -> Self {
        SimState {
            iteration: 0,
            houses: scenario.houses().cloned().collect(),
            plant_output: scenario.plants.iter().map(|p| p.output).collect(),
            histories: scenario
                .microgrids
                .iter()
                .map(|_| BidHistory::new(scenario.config.history_window))
                .collect(),
            last: None,
            rng: ChaCha8Rng::seed_from_u64(scenario.config.seed),
        }
    }
}

/// Flattened house indices belonging to each microgrid.
fn microgrid_members(scenario: &Scenario) -> Vec<Vec<usize>> {
    let mut next = 0;
    scenario
        .microgrids
        .iter()
        .map(|mg| {
            let ids = (next..next + mg.houses.len()).collect();
            next += mg.houses.len();
            ids
        })
        .collect()
}

/// Value-optimal device set within `granted` energy.
pub fn final_allocation(house: &House, granted: Energy) -> Vec<String> {
    let table = KnapsackTable::build(&house.devices);
    table
        .backtrack(granted.max(0))
        .into_iter()
        .map(|i| house.devices[i].id.clone())
        .collect()
}

fn allocation_energy(house: &House, ids: &[String]) -> Energy {
    house
        .devices
        .iter()
        .filter(|d| ids.contains(&d.id))
        .map(|d| d.w)
        .sum()
}

/// Splits a microgrid's delivered energy between its houses in proportion
/// to their chosen energies; leftover units go to the largest remainders,
/// earlier houses first on ties.
fn split_grant(delivered: Energy, requests: &[Energy]) -> Vec<Energy> {
    let bid: Energy = requests.iter().sum();
    if delivered >= bid {
        return requests.to_vec();
    }
    if bid == 0 {
        return vec![0; requests.len()];
    }
    let mut shares: Vec<Energy> = requests.iter().map(|&e| delivered * e / bid).collect();
    let mut left = delivered - shares.iter().sum::<Energy>();
    let mut order: Vec<usize> = (0..requests.len()).collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(delivered * requests[i] % bid), i));
    for i in order {
        if left == 0 {
            break;
        }
        shares[i] += 1;
        left -= 1;
    }
    shares
}

/// Routes `caps` on the scenario network, warm-starting from the previous
/// routing when the graph shape is unchanged.
fn route(
    scenario: &Scenario,
    production: &[Energy],
    caps: &[Energy],
    prev: Option<(&FlowGraph, &Flow)>,
) -> (FlowGraph, Flow) {
    let graph = expand_network(scenario, production, caps);
    if let Some((pg, pf)) = prev {
        let same_shape = pg.arcs().len() == graph.arcs().len()
            && pg
                .arcs()
                .iter()
                .zip(graph.arcs())
                .all(|(a, b)| a.from == b.from && a.to == b.to && a.cost == b.cost);
        if same_shape {
            let changes: Vec<CapacityChange> = graph
                .arcs()
                .iter()
                .enumerate()
                .filter(|(a, arc)| pg.arc(*a).capacity != arc.capacity)
                .map(|(arc, a)| CapacityChange {
                    arc,
                    capacity: a.capacity,
                })
                .collect();
            if let Ok(flow) = incremental_reroute(pg, pf, &changes) {
                debug_assert_eq!(apply_changes(pg, &changes).as_ref(), Ok(&graph));
                return (graph, flow);
            }
        }
    }
    let flow = min_cost_flow(&graph);
    (graph, flow)
}

pub fn run_iteration(state: SimState, scenario: &Scenario) -> SimState {
    run_iteration_with(state, scenario, ExecMode::default())
}

pub fn run_iteration_with(mut state: SimState, scenario: &Scenario, mode: ExecMode) -> SimState {
    let t = state.iteration;
    let members = microgrid_members(scenario);
    let n_houses = state.houses.len();
    let cfg = &scenario.config;

    // Sequence A: data update, then strategies and payoffs per house.
    for h in state.houses.iter_mut() {
        *h = update_priorities(h, t, &mut state.rng);
    }
    let per_house: Vec<(Vec<Strategy>, Vec<StrategyPayoff>)> = par::map(mode, &state.houses, |h| {
        let strategies = generate_strategies(h);
        let values = house_values(&h.devices);
        let payoffs = house_payoffs(&h.devices, &values, &strategies);
        (strategies, payoffs)
    });
    let (strategies, mut payoffs): (Vec<_>, Vec<_>) = per_house.into_iter().unzip();

    // Sequences B and C until every microgrid fits.
    let goals: Vec<Option<Energy>> = scenario.microgrids.iter().map(|m| m.goal_at(t)).collect();
    let mut bid_trace = Vec::new();
    let mut message_trace = Vec::new();
    let mut routing: Option<(FlowGraph, Flow)> = state
        .last
        .as_ref()
        .map(|r| (r.graph.clone(), r.flow.clone()));
    let mut chosen;
    let mut bids;
    let mut max_consumption;
    let mut demanded_production;
    let mut rounds = 0;
    let mut consensus = false;
    loop {
        rounds += 1;
        chosen = par::map(mode, &payoffs, |p| choose(p));
        bids = members
            .iter()
            .map(|hs| microgrid_bid(hs.iter().map(|&h| strategies[h][chosen[h]].energy)))
            .collect::<Vec<Energy>>();
        for (hist, &b) in state.histories.iter_mut().zip(&bids) {
            hist.push(b);
        }
        bid_trace.push(bids.clone());

        let caps: Vec<Energy> = bids
            .iter()
            .zip(&goals)
            .map(|(&b, g)| g.map_or(b, |g| b.min(g)))
            .collect();
        let (graph, flow) = route(
            scenario,
            &state.plant_output,
            &caps,
            routing.as_ref().map(|(g, f)| (g, f)),
        );
        let (uc, up) = par::join(
            mode,
            || unconstrained_consumption_test(scenario, &state.plant_output),
            || unconstrained_production_test(scenario, &bids),
        );
        max_consumption = uc;
        demanded_production = up;
        let reachable: Vec<Energy> = max_consumption
            .iter()
            .zip(&goals)
            .map(|(&u, g)| g.map_or(u, |g| u.min(g)))
            .collect();
        let messages = crate::flow::diagnose(&graph, &flow, &bids, &reachable);
        routing = Some((graph, flow));
        message_trace.push(messages.clone());

        if messages.iter().all(|&m| m == FeedbackMessage::Fits) {
            consensus = true;
            break;
        }
        if rounds >= cfg.max_feedback_rounds {
            break;
        }
        for (hs, &msg) in members.iter().zip(&messages) {
            if msg == FeedbackMessage::Fits {
                continue;
            }
            let mut group: Vec<Vec<StrategyPayoff>> = hs
                .iter()
                .map(|&h| std::mem::take(&mut payoffs[h]))
                .collect();
            let picks: Vec<usize> = hs.iter().map(|&h| chosen[h]).collect();
            apply_feedback(&mut group, &picks, msg, &cfg.epsilon);
            for (&h, p) in hs.iter().zip(group) {
                payoffs[h] = p;
            }
        }
    }
    let (graph, flow) = routing.expect("at least one routing round ran");

    // Final allocation inside each house.
    let granted = delivered(&graph, &flow);
    let mut house_granted = vec![0; n_houses];
    for (hs, &got) in members.iter().zip(&granted) {
        let requests: Vec<Energy> = hs
            .iter()
            .map(|&h| strategies[h][chosen[h]].energy)
            .collect();
        for (&h, g) in hs.iter().zip(split_grant(got, &requests)) {
            house_granted[h] = g;
        }
    }
    let allocations: Vec<Vec<String>> = par::map_range(mode, n_houses, |h| {
        final_allocation(&state.houses[h], house_granted[h])
    });
    let house_consumption: Vec<Energy> = allocations
        .iter()
        .enumerate()
        .map(|(h, ids)| allocation_energy(&state.houses[h], ids))
        .collect();
    for (h, house) in state.houses.iter_mut().enumerate() {
        house.bid_history.push(strategies[h][chosen[h]].energy);
        if house.bid_history.len() > cfg.history_window {
            house.bid_history.remove(0);
        }
    }

    // Sequence D: forecasts and the production plan for the next iteration.
    let forecasts: Vec<Rational64> = state
        .histories
        .iter()
        .map(|h| h.forecast().expect("every microgrid bid at least once"))
        .collect();
    let plants: Vec<_> = scenario
        .plants
        .iter()
        .zip(&state.plant_output)
        .map(|(p, &out)| {
            let mut p = p.clone();
            p.output = out;
            p
        })
        .collect();
    let plan = plan_production(&forecasts, &plants);
    state.plant_output = plan.targets.clone();

    let consumption: Energy = house_consumption.iter().sum();
    let goal = goals.iter().flatten().copied().reduce(|a, b| a + b);
    let metrics = MetricsRecord {
        iteration: t,
        goal,
        consumption,
        house_consumption,
        feedback_rounds: rounds,
        consensus,
        flow_cost: flow.cost(&graph),
        tracking_error: goal.map(|g| consumption - g),
    };
    state.last = Some(IterationReport {
        iteration: t,
        strategies,
        payoffs,
        chosen,
        bids,
        bid_trace,
        message_trace,
        granted,
        house_granted,
        allocations,
        graph,
        flow,
        max_consumption,
        demanded_production,
        forecasts,
        plan,
        metrics,
    });
    state.iteration += 1;
    state
}

/// Steps through a run one iteration at a time.
pub struct Simulation<'a> {
    scenario: &'a Scenario,
    mode: ExecMode,
    state: Option<SimState>,
}

impl<'a> Simulation<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        Self::with_mode(scenario, ExecMode::default())
    }

    pub fn with_mode(scenario: &'a Scenario, mode: ExecMode) -> Self {
        Simulation {
            scenario,
            mode,
            state: Some(SimState::new(scenario)),
        }
    }

    pub fn step(&mut self) -> &IterationReport {
        let state = self.state.take().expect("state is always restored");
        let next = run_iteration_with(state, self.scenario, self.mode);
        self.state
            .insert(next)
            .last
            .as_ref()
            .expect("an iteration just ran")
    }

    pub fn state(&self) -> &SimState {
        self.state.as_ref().expect("state is always restored")
    }
}

/// Runs `iterations` iterations and returns one record per iteration.
pub fn run_simulation(scenario: &Scenario, iterations: u64) -> Vec<MetricsRecord> {
    run_simulation_with(scenario, iterations, ExecMode::default())
}

pub fn run_simulation_with(
    scenario: &Scenario,
    iterations: u64,
    mode: ExecMode,
) -> Vec<MetricsRecord> {
    let mut sim = Simulation::with_mode(scenario, mode);
    (0..iterations)
        .map(|_| sim.step().metrics.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::scenario::Device;

    #[test]
    fn three_houses_first_iteration() {
        let s = fixtures::three_houses();
        let state = run_iteration(SimState::new(&s), &s);
        let r = state.last.as_ref().unwrap();
        assert_eq!(r.chosen, vec![2, 1, 0]);
        let energies: Vec<Energy> = r
            .chosen
            .iter()
            .enumerate()
            .map(|(h, &c)| r.strategies[h][c].energy)
            .collect();
        assert_eq!(energies, vec![10, 7, 12]);
        assert_eq!(r.bids, vec![29]);
        assert_eq!(r.metrics.consumption, 29);
        assert_eq!(r.metrics.feedback_rounds, 1);
        assert!(r.metrics.consensus);
        assert_eq!(r.message_trace, vec![vec![FeedbackMessage::Fits]]);
        assert_eq!(r.allocations[0], vec!["1", "2", "3", "4"]);
        assert_eq!(state.iteration, 1);
    }

    #[test]
    fn zero_plants_starve_to_minimum_strategies() {
        let mut s = fixtures::three_houses();
        s.plants.clear();
        let state = run_iteration(SimState::new(&s), &s);
        let r = state.last.unwrap();
        assert!(!r.metrics.consensus);
        assert_eq!(r.metrics.feedback_rounds, s.config.max_feedback_rounds);
        assert!(r
            .message_trace
            .iter()
            .all(|m| m == &vec![FeedbackMessage::ConsumeLess]));
        assert_eq!(
            r.chosen,
            vec![0, 0, 0],
            "every house ends on its most frugal strategy"
        );
        assert_eq!(r.metrics.consumption, 0);
        // bids never increase under repeated CONSUME_LESS
        assert!(r.bid_trace.windows(2).all(|w| w[1][0] <= w[0][0]));
    }

    #[test]
    fn single_house_with_ample_plant() {
        let mut s = fixtures::three_houses();
        s.microgrids[0].houses.truncate(1);
        s.plants[0].output = 10;
        let r = run_iteration(SimState::new(&s), &s).last.unwrap();
        assert!(r.metrics.consensus);
        assert_eq!(r.metrics.feedback_rounds, 1);
        assert_eq!(r.granted, r.bids);
    }

    #[test]
    fn final_allocation_examples() {
        let h = fixtures::three_houses().microgrids[0].houses[0].clone();
        assert_eq!(final_allocation(&h, 10), vec!["1", "2", "3", "4"]);
        assert!(final_allocation(&h, 0).is_empty());
        assert_eq!(final_allocation(&h, 1000).len(), 5);
        let mut idle = h.clone();
        idle.devices.push(Device::managed("z", 0, 0));
        assert_eq!(final_allocation(&idle, 0), vec!["z"]);
    }

    #[test]
    fn grants_split_in_proportion() {
        assert_eq!(split_grant(29, &[10, 7, 12]), vec![10, 7, 12]);
        assert_eq!(split_grant(0, &[10, 7, 12]), vec![0, 0, 0]);
        let s = split_grant(20, &[10, 7, 12]);
        assert_eq!(s.iter().sum::<Energy>(), 20);
        assert!(s.iter().zip([10, 7, 12]).all(|(g, r)| *g <= r));
        assert_eq!(split_grant(5, &[0, 0]), vec![0, 0]);
    }

    #[test]
    fn modes_give_identical_records() {
        let s = fixtures::tracking(3, 40);
        let a = run_simulation_with(&s, 40, ExecMode::Sequential);
        let b = run_simulation_with(&s, 40, ExecMode::Parallel);
        assert_eq!(a, b);
    }
}
