//! Cost-function prediction markets whose liquidity changes as information arrives.
//!
//! The crate covers:
//! - convex cost functions over outcome spaces and their conjugates and divergences,
//! - the informational utility of beliefs and events at a market state,
//! - switching to a new cost when a variable is revealed,
//! - linearly constrained markets with per-block liquidity that decays over time,
//! - a trading simulator with loss accounting, and
//! - a scenario format for scripted runs.

pub mod cost;
pub mod desiderata;
pub mod error;
pub mod fw;
pub mod gradual;
pub mod lcmm;
pub mod lp;
pub mod market;
pub mod num;
pub mod scenario;
pub mod sim;
pub mod switch;
pub mod utility;

pub use cost::{restricted_cost, CostModel, PriceSet, RestrictedForm};
pub use desiderata::{check_desiderata, CheckOptions, DesiderataReport, Desideratum};
pub use error::{Error, Result};
pub use gradual::{GradualMarket, Schedule, TimedState, Tightness};
pub use lcmm::{lcmm_cost, ArbitrageSolution, LcmmModel};
pub use market::{BlockStructure, Observation, OutcomeSpace};
pub use switch::{consistency_check, plan_switch, ConsistencyReport, SwitchPlan, SwitchedCost};
pub use utility::{optimizing_sequence, util_belief, util_event, EventUtility};
