//! Deterministic, seeded, round-based open multi-agent testbed comparing two
//! decentralized computational trust models:
//!
//! * **CA** — a trustee-side model in which providers gate task acceptance on
//!   per-trustor connection weights and adapt those weights after every
//!   execution ([`ca`]).
//! * **FIRE** — a trustor-side trust and reputation model combining
//!   interaction trust, role-based trust, witness reputation and certified
//!   reputation ([`fire`]).
//!
//! Both models run inside the same spherical-world testbed ([`world`],
//! [`population`], [`engine`]). Interaction records are aggregated into
//! per-interaction utility-gain series, compared with Welch t-tests and
//! ranked per group ([`analysis`]). A registry of eleven churn/drift
//! experiments plus CSV emission lives in [`experiment`].
//!
//! Every run is driven by a single seeded RNG stream; identical configuration
//! and seed produce byte-identical outputs.

pub mod analysis;
pub mod ca;
pub mod engine;
pub mod experiment;
pub mod fire;
pub mod population;
pub mod world;

use std::fmt;

/// RNG used everywhere in the testbed. ChaCha keeps streams stable across
/// platforms so seeded runs stay reproducible.
pub type SimRng = rand_chacha::ChaCha12Rng;

/// Unique provider (trustee) identity. Never reused within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProviderId(pub u64);

/// Unique consumer (trustor) identity. Never reused within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConsumerId(pub u64);

impl fmt::Display for ProviderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl fmt::Display for ConsumerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown experiment id {0}; valid ids are 1..=11")]
    UnknownExperiment(u32),
    #[error("config parse error on line {line}: {message}")]
    ConfigParse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub use analysis::{aggregate, rank_groups, summarize, welch_t_test, SeriesPoint, TTestOutcome, WindowSummary};
pub use ca::{CaParams, Decision, RequestMessage, Task, TrusteeState};
pub use engine::{
    run_simulation, CaAuditEntry, DynamicsConfig, InteractionRecord, RoundStats, RunOutput,
    SimulationConfig,
};
pub use experiment::{experiment_config, run_experiment, ExperimentConfig, ExperimentOutput, RunOptions};
pub use fire::{FireParams, Rating, TrustScore};
pub use population::{Consumer, ConsumerGroup, PerformanceLevel, PopulationCounts, ProfileKind, Provider};
pub use world::{Location, WorldParams};
