//! Discrete-time smart grid coordination engine.
//!
//! Each iteration runs four stages in order:
//!
//! 1. every house turns its devices into consumption strategies with a
//!    0/1 knapsack table ([`knapsack`]);
//! 2. each microgrid plays the strategies against the distribution side
//!    and picks a Pareto-optimal one per house ([`game`]);
//! 3. bids are routed through the tiered line network by min-cost max-flow
//!    ([`flow`]); microgrids that get too little or could get more receive
//!    feedback and go back to stage 2 until everyone fits;
//! 4. bids are forecast and plant outputs re-planned ([`forecast`]).
//!
//! [`engine`] ties the stages together and [`report`] writes run outputs.

pub mod engine;
pub mod fixtures;
pub mod flow;
pub mod forecast;
pub mod game;
pub mod knapsack;
pub mod num;
pub mod par;
pub mod report;
pub mod scenario;
pub mod stats;

pub use engine::{
    final_allocation, run_iteration, run_simulation, MetricsRecord, SimState, Simulation,
};
pub use par::ExecMode;
pub use scenario::{load_scenario, validate_scenario, Scenario, ScenarioError, Violation};
pub use stats::{compute_stats, Summary};
