//! Seeded multi-agent simulator of a two-seller Bertrand spectrum market.
//!
//! Two primary users (PUs) each own `C` identical subchannels and post prices;
//! `M` secondary users (SUs) pick one subchannel per round and bid for it. Both
//! sides learn with stateless Q-learning, and SUs turn their Q-values into a
//! Boltzmann distribution that serves both as their policy and as an estimate
//! of their own demand.
//!
//! Module map:
//!
//! * [`market`]: domain types, bid formation, matching and rewards.
//! * [`agents`]: SU bidders and PU price setters.
//! * [`engine`]: the per-round loop, episodes and convergence detection.
//! * [`metrics`]: KL divergence, smoothing and cross-seed aggregation.
//! * [`harness`]: experiment configuration, grid runner and file outputs.

pub mod agents;
pub mod engine;
pub mod error;
pub mod harness;
pub mod market;
pub mod metrics;

pub use agents::{LearningParams, PriceDirection, PuAgent, SuAgent};
pub use engine::{detect_convergence, run_episode, IterationRecord, RunResult, Simulation};
pub use error::{Error, Result};
pub use market::{
    Allocation, DemandDistribution, MarketConfig, PriceVector, PuId, SuSelection, TradeOutcome,
};
pub use metrics::{aggregate_runs, kl_divergence, moving_average, RunSummary};
