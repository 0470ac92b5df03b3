//! Probabilistic plan recognition over a pending-set model of plan execution.
//!
//! An agent adopts a set of tasks at the start of an episode, picks one
//! method for every goal it pursues, and then repeatedly executes one of the
//! actions that are currently enabled. This crate enumerates those
//! hypotheses exactly and filters them against an observed action stream:
//!
//! ```
//! use planrec::{fixtures, BeliefState, Observation};
//!
//! let lib = fixtures::fig6();
//! let belief = BeliefState::init(&lib, &[]).unwrap();
//! let belief = belief.observe(&Observation::agent("a")).unwrap();
//! assert!((belief.posterior_intend("p").unwrap() - 2.0 / 3.0).abs() < 1e-12);
//! ```
//!
//! Actions performed by the recognizing system itself are observed as
//! interventions: they advance every hypothesis's execution state without
//! counting as evidence about what the agent intends.

pub mod error;
pub mod execution;
pub mod fixtures;
pub mod library;
pub mod recognition;

pub use error::{EngineError, LibraryError, McError};
pub use execution::{
    enabled, enabled_tasks, enumerate_worlds, initial_pending, mc_estimate, mc_estimate_many,
    prev_done, progress, sample_trace, sample_world, step_likelihood, world_prior, DoneMap, Event,
    EventKind, ExecutionState, McEstimate, McQuery, Trace, TraceStep, World,
};
pub use library::{
    Adoption, ContextId, ContextVariable, MethodChoice, ParentLink, PlanLibrary, TaskId, TaskKind,
    TaskNode, ValidationReport, Violation,
};
pub use recognition::{
    prior_predict, BeliefState, ExpansionPosterior, Explanation, NextActionDistribution,
    Observation, Particle,
};
