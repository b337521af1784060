//! Fairness-aware same-day delivery dispatch.
//!
//! This crate holds the allocation-only algorithmic core: service
//! geographies and stochastic request generation, planned-route bookkeeping
//! with cheapest insertion, the multi-objective dispatch MDP with its reward
//! functions, state featurization, a small feedforward Q-network, the deep
//! Q-learning loop, the benchmark policies and the evaluation harness.
//!
//! Nothing here touches the filesystem or spawns threads; the `fairdispatch`
//! companion crate carries file formats, parallel evaluation and the CLI.
#![no_std]

extern crate alloc;

pub mod approximator;
pub mod dqn;
pub mod env;
pub mod eval;
pub mod features;
pub mod policies;
pub mod routing;
pub mod world;

mod math;

pub use approximator::{Adam, AdamConfig, Mlp, MlpError, MlpFile};
pub use dqn::{Checkpoint, Experience, QPolicy, ReplayBuffer, TrainConfig, TrainError, TrainOutcome};
pub use env::{Action, DispatchState, EnvError, Episode, RegionCounters, RewardMode, RewardSpec};
pub use eval::{DayOutcome, EvalReport};
pub use features::FeatureVector;
pub use policies::{Bucket, Myopic, Policy, RejectAll, Reserved};
pub use routing::{FleetState, Insertion, PlannedRoute, Stop};
pub use world::{Geography, GeographyKind, Point, Rect, RegionSpec, Request, RequestInstance, WorldError};

/// Tolerance, in minutes, applied to every schedule feasibility comparison.
pub const TIME_TOLERANCE: f64 = 1e-6;
