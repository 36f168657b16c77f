//! Scenario data model: devices, houses, microgrids, plants, the line
//! network and run configuration, plus TOML loading and validation.
//!
//! The document schema is described in `docs/scenario-format.md`.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{serde_rational, Energy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Control {
    /// Driven directly by sensors; always priority 0.
    Direct,
    #[default]
    Managed,
}

/// How a managed device's priority evolves from one iteration to the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorityPolicy {
    /// Keeps the declared priority.
    #[default]
    Static,
    /// Steps through `levels`, holding each one for `period` iterations.
    Cyclic {
        period: u64,
        levels: Vec<i64>,
        #[serde(default)]
        phase: u64,
    },
    /// Descends linearly from `p0` at iteration 0 to 0 at `t_end`.
    Deadline { t_end: u64, p0: i64 },
    /// With probability `rate`, redraws the priority uniformly from `0..=max`.
    Random { max: i64, rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Device {
    pub id: String,
    /// Energy demand per iteration.
    pub w: Energy,
    /// Priority; 0 means the device must run now.
    pub p: i64,
    #[serde(default)]
    pub control: Control,
    #[serde(default)]
    pub policy: PriorityPolicy,
}

impl Device {
    pub fn managed(id: impl Into<String>, w: Energy, p: i64) -> Self {
        Device {
            id: id.into(),
            w,
            p,
            control: Control::Managed,
            policy: PriorityPolicy::Static,
        }
    }

    pub fn direct(id: impl Into<String>, w: Energy) -> Self {
        Device {
            id: id.into(),
            w,
            p: 0,
            control: Control::Direct,
            policy: PriorityPolicy::Static,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct House {
    pub id: String,
    pub devices: Vec<Device>,
    /// Energies of previously selected strategies, oldest first.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bid_history: Vec<Energy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Microgrid {
    pub id: String,
    pub node: String,
    /// Per-iteration consumption target; repeats when the run is longer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_profile: Option<Vec<Energy>>,
    pub houses: Vec<House>,
}

impl Microgrid {
    pub fn goal_at(&self, iteration: u64) -> Option<Energy> {
        self.goal_profile
            .as_ref()
            .filter(|g| !g.is_empty())
            .map(|g| g[(iteration % g.len() as u64) as usize])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plant {
    pub id: String,
    pub node: String,
    pub capacity: Energy,
    pub ramp_up_cost: i64,
    pub ramp_down_cost: i64,
    pub ramp_limit: Energy,
    /// Current production.
    pub output: Energy,
}

/// A directed line whose capacity is split into under-load, standard and
/// over-load tiers. `tier_caps` are cumulative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub endpoints: (String, String),
    pub tier_caps: [Energy; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier_costs: Option<[i64; 3]>,
}

impl Line {
    pub fn costs(&self, defaults: [i64; 3]) -> [i64; 3] {
        self.tier_costs.unwrap_or(defaults)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridNetwork {
    pub nodes: Vec<String>,
    #[serde(default)]
    pub lines: Vec<Line>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(with = "serde_rational", default = "default_epsilon")]
    pub epsilon: Rational64,
    #[serde(default = "default_rounds")]
    pub max_feedback_rounds: u32,
    #[serde(default = "default_iterations")]
    pub iterations: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tier_costs")]
    pub tier_cost_defaults: [i64; 3],
    /// Number of most recent bids kept for forecasting.
    #[serde(default = "default_window")]
    pub history_window: usize,
}

fn default_epsilon() -> Rational64 {
    Rational64::new(1, 20)
}
fn default_rounds() -> u32 {
    20
}
fn default_iterations() -> u64 {
    1
}
fn default_tier_costs() -> [i64; 3] {
    [1, 2, 4]
}
fn default_window() -> usize {
    10
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            epsilon: default_epsilon(),
            max_feedback_rounds: default_rounds(),
            iterations: default_iterations(),
            seed: 0,
            tier_cost_defaults: default_tier_costs(),
            history_window: default_window(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub config: SimConfig,
    pub network: GridNetwork,
    #[serde(default)]
    pub plants: Vec<Plant>,
    #[serde(default)]
    pub microgrids: Vec<Microgrid>,
}

/// One broken invariant: which kind of object, which one, and what rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub subject: &'static str,
    pub id: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.subject, self.id, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("scenario violates {} invariant(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<Violation>),
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        load_scenario(text)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        load_scenario(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario model is always representable as TOML")
    }

    pub fn houses(&self) -> impl Iterator<Item = &House> {
        self.microgrids.iter().flat_map(|m| m.houses.iter())
    }

    pub fn house_count(&self) -> usize {
        self.microgrids.iter().map(|m| m.houses.len()).sum()
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario = parse_scenario(text)?;
    let violations = validate_scenario(&scenario);
    if violations.is_empty() {
        Ok(scenario)
    } else {
        Err(ScenarioError::Invalid(violations))
    }
}

/// Parses without validating, for tools that want to list every violation.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    toml::from_str::<Scenario>(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|span| line_col(text, span.start))
            .unwrap_or((0, 0));
        ScenarioError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let prefix = &text[..offset.min(text.len())];
    let line = prefix.matches('\n').count() + 1;
    let column = prefix.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

/// Checks every data-model invariant; empty means valid.
pub fn validate_scenario(s: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |subject: &'static str, id: &str, rule: String| {
        out.push(Violation {
            subject,
            id: id.to_string(),
            rule,
        })
    };

    let c = &s.config;
    if !(c.epsilon > Rational64::from_integer(0) && c.epsilon < Rational64::from_integer(1)) {
        push(
            "SimConfig",
            "config",
            "epsilon must lie strictly between 0 and 1".into(),
        );
    }
    if c.max_feedback_rounds == 0 {
        push(
            "SimConfig",
            "config",
            "max_feedback_rounds must be positive".into(),
        );
    }
    if c.iterations == 0 {
        push("SimConfig", "config", "iterations must be positive".into());
    }
    if c.history_window == 0 {
        push(
            "SimConfig",
            "config",
            "history_window must be positive".into(),
        );
    }
    if !tier_costs_ok(c.tier_cost_defaults) {
        push(
            "SimConfig",
            "config",
            "tier_cost_defaults must be nonnegative and strictly increasing".into(),
        );
    }

    let mut nodes = HashSet::new();
    for n in &s.network.nodes {
        if !nodes.insert(n.as_str()) {
            push("GridNetwork", n, "duplicate node name".into());
        }
    }
    for (i, line) in s.network.lines.iter().enumerate() {
        let id = format!("#{i} ({} -> {})", line.endpoints.0, line.endpoints.1);
        for end in [&line.endpoints.0, &line.endpoints.1] {
            if !nodes.contains(end.as_str()) {
                push("Line", &id, format!("endpoint {end} is not a network node"));
            }
        }
        let caps = line.tier_caps;
        if caps[0] < 0 {
            push("Line", &id, "tier capacities must be nonnegative".into());
        }
        if !(caps[0] <= caps[1] && caps[1] <= caps[2]) {
            push("Line", &id, "tier capacities must be nondecreasing".into());
        }
        if let Some(costs) = line.tier_costs {
            if !tier_costs_ok(costs) {
                push(
                    "Line",
                    &id,
                    "tier costs must be nonnegative and strictly increasing".into(),
                );
            }
        }
    }

    let mut plant_ids = HashSet::new();
    for p in &s.plants {
        if !plant_ids.insert(p.id.as_str()) {
            push("Plant", &p.id, "duplicate plant id".into());
        }
        if !nodes.contains(p.node.as_str()) {
            push(
                "Plant",
                &p.id,
                format!("node {} is not a network node", p.node),
            );
        }
        if p.capacity < 0 {
            push("Plant", &p.id, "capacity must be nonnegative".into());
        }
        if p.output < 0 || p.output > p.capacity {
            push(
                "Plant",
                &p.id,
                "output must lie within [0, capacity]".into(),
            );
        }
        if p.ramp_limit < 0 {
            push("Plant", &p.id, "ramp_limit must be nonnegative".into());
        }
        if p.ramp_up_cost < 0 || p.ramp_down_cost < 0 {
            push("Plant", &p.id, "ramp costs must be nonnegative".into());
        }
    }

    let mut mg_ids = HashSet::new();
    let mut mg_nodes = HashSet::new();
    let mut house_ids = HashSet::new();
    for m in &s.microgrids {
        if !mg_ids.insert(m.id.as_str()) {
            push("Microgrid", &m.id, "duplicate microgrid id".into());
        }
        if !nodes.contains(m.node.as_str()) {
            push(
                "Microgrid",
                &m.id,
                format!("node {} is not a network node", m.node),
            );
        }
        if !mg_nodes.insert(m.node.as_str()) {
            push(
                "Microgrid",
                &m.id,
                format!("node {} is already bound to a microgrid", m.node),
            );
        }
        if let Some(goal) = &m.goal_profile {
            if goal.is_empty() {
                push("Microgrid", &m.id, "goal_profile must not be empty".into());
            }
            if goal.iter().any(|&g| g < 0) {
                push(
                    "Microgrid",
                    &m.id,
                    "goal_profile entries must be nonnegative".into(),
                );
            }
        }
        for h in &m.houses {
            if !house_ids.insert(h.id.as_str()) {
                push("House", &h.id, "duplicate house id".into());
            }
            if h.devices.is_empty() {
                push("House", &h.id, "a house needs at least one device".into());
            }
            if h.bid_history.iter().any(|&b| b < 0) {
                push(
                    "House",
                    &h.id,
                    "bid history entries must be nonnegative".into(),
                );
            }
            let mut dev_ids = HashSet::new();
            for d in &h.devices {
                let id = format!("{}/{}", h.id, d.id);
                if !dev_ids.insert(d.id.as_str()) {
                    push("Device", &id, "duplicate device id within house".into());
                }
                if d.w < 0 {
                    push("Device", &id, "w must be nonnegative".into());
                }
                if d.p < 0 {
                    push("Device", &id, "p must be nonnegative".into());
                }
                if d.control == Control::Direct && d.p != 0 {
                    push(
                        "Device",
                        &id,
                        "direct-control device must have p = 0".into(),
                    );
                }
                if let Some(rule) = policy_problem(&d.policy) {
                    push("Device", &id, rule);
                }
            }
        }
    }

    // Directed reachability from each plant node to each microgrid node.
    let known_nodes = s.network.nodes.iter().all(|n| !n.is_empty());
    if known_nodes {
        let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for l in &s.network.lines {
            adj.entry(l.endpoints.0.as_str())
                .or_default()
                .push(l.endpoints.1.as_str());
        }
        for p in &s.plants {
            if !nodes.contains(p.node.as_str()) {
                continue;
            }
            let reach = reachable(&adj, &p.node);
            for m in &s.microgrids {
                if nodes.contains(m.node.as_str()) && !reach.contains(m.node.as_str()) {
                    push(
                        "GridNetwork",
                        "network",
                        format!("no path from plant {} to microgrid {}", p.id, m.id),
                    );
                }
            }
        }
    }
    out
}

fn tier_costs_ok(c: [i64; 3]) -> bool {
    c[0] >= 0 && c[0] < c[1] && c[1] < c[2]
}

fn policy_problem(policy: &PriorityPolicy) -> Option<String> {
    match policy {
        PriorityPolicy::Static => None,
        PriorityPolicy::Cyclic { period, levels, .. } => {
            if *period == 0 {
                Some("cyclic policy period must be positive".into())
            } else if levels.is_empty() || levels.iter().any(|&l| l < 0) {
                Some("cyclic policy needs nonnegative levels".into())
            } else {
                None
            }
        }
        PriorityPolicy::Deadline { p0, .. } => {
            (*p0 < 0).then(|| "deadline policy p0 must be nonnegative".into())
        }
        PriorityPolicy::Random { max, rate } => {
            if *max < 0 {
                Some("random policy max must be nonnegative".into())
            } else if !(0.0..=1.0).contains(rate) {
                Some("random policy rate must lie in [0, 1]".into())
            } else {
                None
            }
        }
    }
}

fn reachable<'a>(adj: &BTreeMap<&'a str, Vec<&'a str>>, start: &'a str) -> HashSet<&'a str> {
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in adj.get(u).into_iter().flatten() {
            if seen.insert(v) {
                queue.push_back(v);
            }
        }
    }
    seen
}

/// Goal table for one day: `base` everywhere except a parabola over
/// `[start, end]` that peaks at `peak` in the middle and meets `base` at
/// both ends.
pub fn quadratic_goal_day(
    steps: usize,
    base: Energy,
    peak: Energy,
    start: usize,
    end: usize,
) -> Vec<Energy> {
    assert!(
        start < end && end < steps,
        "segment must lie inside the day"
    );
    let mid2 = (start + end) as i64; // twice the midpoint
    let half2 = (end - start) as i64; // twice the half-width
    (0..steps)
        .map(|t| {
            if t < start || t > end {
                return base;
            }
            // peak - (peak - base) * ((2t - mid2) / half2)^2, rounded to nearest
            let x = 2 * t as i64 - mid2;
            let drop = Rational64::new((peak - base) * x * x, half2 * half2);
            (Rational64::from_integer(peak) - drop).round().to_integer()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn three_houses_fixture_is_valid() {
        let s = fixtures::three_houses();
        assert!(validate_scenario(&s).is_empty());
        let sizes: Vec<usize> = s.houses().map(|h| h.devices.len()).collect();
        assert_eq!(sizes, vec![5, 6, 3]);
    }

    #[test]
    fn empty_house_is_rejected() {
        let mut s = fixtures::three_houses();
        s.microgrids[0].houses[2].devices.clear();
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].subject, "House");
        assert!(matches!(
            load_scenario(&s.to_toml_string()),
            Err(ScenarioError::Invalid(_))
        ));
    }

    #[test]
    fn decreasing_tiers_are_rejected() {
        let mut s = fixtures::three_houses();
        s.network.lines[0].tier_caps = [5, 3, 8];
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1);
        assert!(v[0].rule.contains("nondecreasing"));
    }

    #[test]
    fn direct_device_with_priority_is_one_violation() {
        let mut s = fixtures::three_houses();
        let d = &mut s.microgrids[0].houses[0].devices[0];
        d.control = Control::Direct;
        d.p = 3;
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].rule.contains("direct-control"));
    }

    #[test]
    fn plant_over_capacity_is_one_violation() {
        let mut s = fixtures::three_houses();
        s.plants[0].output = s.plants[0].capacity + 1;
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].subject, "Plant");
    }

    #[test]
    fn unreachable_microgrid_is_reported() {
        let mut s = fixtures::three_houses();
        s.network.lines.clear();
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1);
        assert!(v[0].rule.contains("no path"));
    }

    #[test]
    fn parse_error_carries_location() {
        let text = "[config]\nepsilon = 0.05\n\n[network]\nnodes = [\"A\"\n";
        match parse_scenario(text) {
            Err(ScenarioError::Parse { line, .. }) => assert!(line >= 5, "line {line}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_policy_kind_is_a_configuration_error() {
        let mut text = fixtures::three_houses().to_toml_string();
        text = text.replacen("kind = \"static\"", "kind = \"thermostat\"", 1);
        assert!(matches!(
            load_scenario(&text),
            Err(ScenarioError::Parse { .. })
        ));
    }

    #[test]
    fn epsilon_accepts_number_or_string() {
        let base = fixtures::three_houses().to_toml_string();
        let as_number = base.replace("epsilon = \"0.05\"", "epsilon = 0.05");
        assert_ne!(as_number, base);
        let s = load_scenario(&as_number).unwrap();
        assert_eq!(s.config.epsilon, Rational64::new(1, 20));
        let as_fraction = base.replace("epsilon = \"0.05\"", "epsilon = \"1/20\"");
        assert_eq!(
            load_scenario(&as_fraction).unwrap().config.epsilon,
            Rational64::new(1, 20)
        );
    }

    #[test]
    fn goal_profile_repeats() {
        let m = Microgrid {
            id: "m".into(),
            node: "n".into(),
            goal_profile: Some(vec![1, 2, 3]),
            houses: vec![],
        };
        assert_eq!(m.goal_at(0), Some(1));
        assert_eq!(m.goal_at(4), Some(2));
    }

    #[test]
    fn quadratic_day_peaks_in_segment() {
        let day = quadratic_goal_day(24, 3000, 5000, 10, 18);
        assert_eq!(day.len(), 24);
        assert_eq!(day[9], 3000);
        assert_eq!(day[10], 3000);
        assert_eq!(day[14], 5000);
        assert_eq!(day[18], 3000);
        assert_eq!(day[12], day[16]);
        assert!(day[12] > 3000 && day[12] < 5000);
    }
}
