//! Discrete-event simulator and exact decision-tree evaluator for
//! multi-stage cargo-screening pipelines, with cost-benefit accounting
//! and a rare-event feasibility analyzer.
//!
//! Two evaluators share one declarative [`scenario::Scenario`]:
//!
//! - [`engine`] runs stochastic replications through the queueing
//!   network (arrivals, finite capacities, service times, balking);
//! - [`tree`] compiles the same flow into an exact per-lorry chance
//!   tree and rolls expectations back analytically.
//!
//! [`cba`] turns counts into money, [`stats`] analyzes replication
//! samples, and [`experiments`] orchestrates replications, parameter
//! sweeps, tree-vs-simulation agreement tests, and the
//! feasibility verdict that separates "the tree suffices", "simulation
//! is useful" and "too rare for the budget".

pub mod cba;
pub mod engine;
pub mod experiments;
pub mod network;
pub mod rng;
pub mod scenario;
pub mod stats;
pub mod testkit;
pub mod tree;

pub use cba::{annualize, break_even_margin, cost_of, CostBreakdown};
pub use engine::{run_replication, ReplicationResult, Simulation};
pub use experiments::{
    feasibility_verdict, run_experiment, sweep, EventMetric, ExperimentResult, FeasibilityReport,
    FeasibilityVerdict, SweepResult,
};
pub use network::{build_network, RoutingNetwork};
pub use scenario::{Scenario, ValidatedScenario};
pub use stats::{agreement_test, required_replications, summarize, SummaryStats};
pub use tree::{enumerate_paths, expected_outcome, tree_from_scenario, DecisionTree};
