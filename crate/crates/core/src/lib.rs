//! Pareto contextual zooming: a multi-objective contextual bandit that
//! adaptively partitions a context-arm similarity space into balls and plays
//! uniformly over the Pareto front of optimistic ball indices.
//!
//! Modules:
//!
//! - [`similarity_space`]: points, metrics, balls and domains
//! - [`pareto`]: dominance, fronts, the Pareto suboptimality gap and packing
//! - [`pcz`]: the learner
//! - [`baselines`]: contextual zooming and random selection
//! - [`envs`]: reward surfaces, noise, contexts and the regret oracle
//! - [`metrics`]: Pareto regret, fairness bins, run summaries
//! - [`harness`]: configs, seeded runs and CSV output

pub mod baselines;
pub mod envs;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod pareto;
pub mod pcz;
pub mod similarity_space;

pub use baselines::{Policy, PolicyKind};
pub use envs::{ContextGenerator, Environment, MeanSurface, Noise};
pub use error::{Error, Result};
pub use pareto::RewardVector;
pub use pcz::{PczConfig, PczState, RoundRecord};
pub use similarity_space::{ArmGrid, Ball, Metric, Point};
