//! Network utility maximization for users with layered (staircase)
//! utilities.
//!
//! Links price congestion with a projected subgradient update, users answer
//! with the layer rate that maximizes utility minus cost, and active users may
//! push for higher layers. When the resulting allocation keeps oscillating an
//! admission round selects a feasible subset of users with a greedy knapsack
//! heuristic.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admission;
pub mod demand;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pricing;
pub mod scalar;
pub mod sim;
pub mod summary;
pub mod trace;
pub mod utility;

pub use admission::{
    admission_score, greedy_select, knapsack_oracle, price_floor_apply, random_instance, user_bid, AdmissionInstance,
    AdmissionResult, AdmissionWeights, Bid, ScoredBid,
};
pub use demand::{desire, min_price_increment, next_demand, upgrade_condition, upgrade_price_limit, DemandState};
pub use error::{Error, Result};
pub use metrics::{converged, detect_oscillation, OscillationMetric};
pub use model::{
    load_scenario, route_links, users_on_link, DemandPolicy, Event, EventKind, LayerSchedule, Link, LinkId, Route,
    Scenario, SolverConfig, UserId, UserMode, UserProfile,
};
pub use pricing::{path_price, update_link_price, user_rate, PriceVector, StepRule, StepSchedule};
pub use scalar::Scalar;
pub use sim::{run, SimState, Simulation};
pub use summary::RunSummary;
pub use trace::{Trace, TraceRecord};
pub use utility::{staircase_utility, total_utility, UtilityParams};

pub type Scenario64 = Scenario<f64>;
pub type Scenario32 = Scenario<f32>;
pub type UserProfile64 = UserProfile<f64>;
pub type UserProfile32 = UserProfile<f32>;
pub type Trace64 = Trace<f64>;
pub type Trace32 = Trace<f32>;
pub type PriceVector64 = PriceVector<f64>;
pub type PriceVector32 = PriceVector<f32>;

/// The bundled eight-user, seven-link scenario (`scenarios/paper-fig2.json`).
pub const DEFAULT_SCENARIO_JSON: &str = include_str!("../../../scenarios/paper-fig2.json");

/// Parses [`DEFAULT_SCENARIO_JSON`].
pub fn default_scenario() -> Scenario64 {
    load_scenario(DEFAULT_SCENARIO_JSON).expect("bundled scenario is valid")
}
