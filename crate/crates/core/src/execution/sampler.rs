//! Forward sampling of the execution model and the rejection-sampling oracle
//! built on it.
//!
//! The sampler draws worlds generatively from the library's priors instead of
//! from the enumerated hypothesis space, so it shares no code with the exact
//! recognizer beyond the pending-set dynamics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{progress, world_prior, Event, EventKind, ExecutionState, World};
use crate::error::{EngineError, McError};
use crate::library::{PlanLibrary, TaskId, TaskKind};
use crate::recognition::Observation;

/// Samples per independently seeded stream. Fixed so that estimates depend
/// only on `(seed, n_samples)`, not on the thread count.
const CHUNK: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceStep {
    Event(Event),
    /// The pending set was empty, so the agent did nothing.
    NoAction {
        time: u32,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
}

impl Trace {
    /// Line-oriented dump: `t=<k> <agent|intervene|none> <action>`.
    pub fn render(&self, lib: &PlanLibrary) -> String {
        let mut out = String::new();
        for step in &self.steps {
            match step {
                TraceStep::Event(e) => {
                    writeln!(out, "t={} {} {}", e.time, e.kind, lib.name(e.action)).unwrap()
                }
                TraceStep::NoAction { time } => writeln!(out, "t={time} none -").unwrap(),
            }
        }
        out
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.steps.iter().filter_map(|s| match s {
            TraceStep::Event(e) => Some(e),
            TraceStep::NoAction { .. } => None,
        })
    }
}

/// Draws context, intentions and expansions from their priors.
pub fn sample_world<R: Rng + ?Sized>(lib: &PlanLibrary, rng: &mut R) -> World {
    let context: Vec<bool> = lib
        .context()
        .iter()
        .map(|v| rng.gen::<f64>() < v.prior)
        .collect();
    let intended: BTreeSet<TaskId> = lib
        .intendable()
        .iter()
        .copied()
        .filter(|&t| {
            let p = lib
                .task(t)
                .adoption
                .as_ref()
                .and_then(|a| a.probability(&context))
                .unwrap_or(0.0);
            rng.gen::<f64>() < p
        })
        .collect();

    let mut expansion = BTreeMap::new();
    let mut stack: Vec<TaskId> = intended.iter().rev().copied().collect();
    let mut seen = BTreeSet::new();
    while let Some(id) = stack.pop() {
        if !seen.insert(id) {
            continue;
        }
        let task = lib.task(id);
        match task.kind {
            TaskKind::Goal => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut chosen = task.methods.last().map(|c| c.method);
                for c in &task.methods {
                    acc += c.probability;
                    if u < acc {
                        chosen = Some(c.method);
                        break;
                    }
                }
                if let Some(m) = chosen {
                    expansion.insert(id, m);
                    stack.push(m);
                }
            }
            TaskKind::Method => stack.extend(task.steps.iter().rev().copied()),
            TaskKind::Primitive => {}
        }
    }

    let mut world = World {
        context,
        intended,
        expansion,
        prior: 0.0,
    };
    world.prior = world_prior(lib, &world);
    world
}

struct Rollout<'a> {
    lib: &'a PlanLibrary,
    world: World,
    state: ExecutionState,
}

impl<'a> Rollout<'a> {
    fn new(lib: &'a PlanLibrary, world: World) -> Self {
        let state = ExecutionState::initial(lib, &world);
        Rollout { lib, world, state }
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<TaskId> {
        let pending = &self.state.pending;
        let total: f64 = pending.iter().map(|&a| self.lib.task(a).pick_weight).sum();
        let mut u = rng.gen::<f64>() * total;
        let mut last = None;
        for &a in pending {
            let w = self.lib.task(a).pick_weight;
            if u < w {
                return Some(a);
            }
            u -= w;
            last = Some(a);
        }
        last
    }

    fn apply(&mut self, event: Event) {
        self.state = progress(self.lib, &self.world, &self.state, &event)
            .expect("rollout events are generated in time order");
    }

    /// One step of the agent: pick and execute, or idle on an empty pending set.
    fn agent_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> TraceStep {
        let time = self.state.time + 1;
        match self.pick(rng) {
            Some(action) => {
                let event = Event::agent(action, time);
                self.apply(event);
                TraceStep::Event(event)
            }
            None => {
                self.state = self.state.idle();
                TraceStep::NoAction { time }
            }
        }
    }

    fn intervene(&mut self, action: TaskId) -> TraceStep {
        let event = Event::intervention(action, self.state.time + 1);
        self.apply(event);
        TraceStep::Event(event)
    }
}

/// Samples a world and a trace of `horizon` steps. Interventions are
/// `(action, time)` pairs and replace the agent's pick at that time.
pub fn sample_trace(
    lib: &PlanLibrary,
    horizon: u32,
    interventions: &[(TaskId, u32)],
    seed: u64,
) -> (World, Trace) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = sample_world(lib, &mut rng);
    let mut rollout = Rollout::new(lib, world);
    let mut trace = Trace::default();
    for t in 1..=horizon {
        let step = match interventions.iter().find(|&&(_, at)| at == t) {
            Some(&(action, _)) => rollout.intervene(action),
            None => rollout.agent_step(&mut rng),
        };
        trace.steps.push(step);
    }
    (rollout.world, trace)
}

/// A query the oracle can estimate by frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum McQuery {
    /// The task is in the world's intended set.
    Intend(String),
    /// The agent's next action is this one (`None`: no action).
    Next(Option<String>),
    /// The goal is expanded by this method (`None`: the goal is inactive).
    Expansion {
        goal: String,
        method: Option<String>,
    },
}

/// Absolute slack allowed by [`McEstimate::agrees_with`].
pub const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    /// Binomial standard error over the accepted samples.
    pub stderr: f64,
    pub accepted: usize,
    pub samples: usize,
}

impl McEstimate {
    /// Whether `exact` lies within `sigmas` standard errors of the estimate.
    ///
    /// An estimate of exactly 0 or 1 has zero binomial standard error, so a
    /// slack of [`ROUNDING_SLACK`] absorbs floating-point rounding in `exact`.
    pub fn agrees_with(&self, exact: f64, sigmas: f64) -> bool {
        (self.estimate - exact).abs() <= sigmas * self.stderr + ROUNDING_SLACK
    }
}

enum Resolved {
    Intend(TaskId),
    Next(Option<TaskId>),
    Expansion(TaskId, Option<TaskId>),
}

fn resolve_query(lib: &PlanLibrary, q: &McQuery) -> Result<Resolved, EngineError> {
    Ok(match q {
        McQuery::Intend(name) => {
            let id = lib.resolve(name)?;
            if !lib.task(id).intendable {
                return Err(EngineError::NotIntendable(name.clone()));
            }
            Resolved::Intend(id)
        }
        McQuery::Next(action) => Resolved::Next(
            action
                .as_deref()
                .map(|a| lib.resolve_primitive(a))
                .transpose()?,
        ),
        McQuery::Expansion { goal, method } => {
            let g = lib.resolve(goal)?;
            if lib.task(g).kind != TaskKind::Goal {
                return Err(EngineError::NotAGoal(goal.clone()));
            }
            Resolved::Expansion(g, method.as_deref().map(|m| lib.resolve(m)).transpose()?)
        }
    })
}

/// Rejection-sampling estimate of a single query. See [`mc_estimate_many`].
pub fn mc_estimate(
    lib: &PlanLibrary,
    observations: &[Observation],
    query: &McQuery,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate, McError> {
    mc_estimate_many(
        lib,
        observations,
        std::slice::from_ref(query),
        n_samples,
        seed,
    )
    .map(|mut v| v.remove(0))
}

/// Estimates several queries from one batch of `n_samples` traces.
///
/// Each sample draws a world and runs the agent forward, with interventions
/// injected at their observed positions. A sample is accepted when its context
/// matches every context fact and its agent actions match the observed ones
/// position by position; the queries are then evaluated on the accepted
/// sample.
pub fn mc_estimate_many(
    lib: &PlanLibrary,
    observations: &[Observation],
    queries: &[McQuery],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<McEstimate>, McError> {
    if n_samples == 0 {
        return Err(McError::NoSamples);
    }
    let mut facts = Vec::new();
    let mut events = Vec::new();
    for obs in observations {
        match obs {
            Observation::Context { variable, value } => {
                if !events.is_empty() {
                    return Err(EngineError::ContextAfterEvents(events.len() as u32).into());
                }
                let var = lib
                    .context_id(variable)
                    .ok_or_else(|| EngineError::UnknownContext(variable.clone()))?;
                facts.push((var, *value));
            }
            Observation::Agent(a) => events.push((EventKind::Agent, lib.resolve_primitive(a)?)),
            Observation::Intervention(a) => {
                events.push((EventKind::Intervention, lib.resolve_primitive(a)?))
            }
        }
    }
    let queries = queries
        .iter()
        .map(|q| resolve_query(lib, q))
        .collect::<Result<Vec<_>, _>>()?;
    let wants_next = queries.iter().any(|q| matches!(q, Resolved::Next(_)));

    let n_chunks = n_samples.div_ceil(CHUNK);
    let (accepted, hits) = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let count = CHUNK.min(n_samples - chunk * CHUNK);
            let mut accepted = 0usize;
            let mut hits = vec![0usize; queries.len()];
            'sample: for _ in 0..count {
                let world = sample_world(lib, &mut rng);
                if facts.iter().any(|&(v, b)| world.context[v.index()] != b) {
                    continue;
                }
                let mut rollout = Rollout::new(lib, world);
                for &(kind, action) in &events {
                    match kind {
                        EventKind::Intervention => {
                            rollout.intervene(action);
                        }
                        EventKind::Agent => match rollout.agent_step(&mut rng) {
                            TraceStep::Event(e) if e.action == action => {}
                            _ => continue 'sample,
                        },
                    }
                }
                accepted += 1;
                let next = wants_next.then(|| rollout.pick(&mut rng));
                for (q, hit) in queries.iter().zip(hits.iter_mut()) {
                    let yes = match *q {
                        Resolved::Intend(t) => rollout.world.intended.contains(&t),
                        Resolved::Next(a) => next == Some(a),
                        Resolved::Expansion(g, m) => rollout.world.expansion.get(&g).copied() == m,
                    };
                    *hit += yes as usize;
                }
            }
            (accepted, hits)
        })
        .reduce(
            || (0, vec![0; queries.len()]),
            |(a1, h1), (a2, h2)| (a1 + a2, h1.iter().zip(&h2).map(|(x, y)| x + y).collect()),
        );

    if accepted == 0 {
        return Err(McError::NoAcceptance(n_samples));
    }
    Ok(hits
        .into_iter()
        .map(|h| {
            let p = h as f64 / accepted as f64;
            McEstimate {
                estimate: p,
                stderr: (p * (1.0 - p) / accepted as f64).sqrt(),
                accepted,
                samples: n_samples,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn empty_horizon() {
        let lib = fixtures::fig6();
        for seed in 0..20 {
            let (_, trace) = sample_trace(&lib, 0, &[], seed);
            assert!(trace.steps.is_empty());
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let lib = fixtures::station();
        assert_eq!(
            sample_trace(&lib, 6, &[], 42),
            sample_trace(&lib, 6, &[], 42)
        );
    }

    #[test]
    fn clamp_forces_intervened_action() {
        let lib = fixtures::fig6();
        let b = lib.resolve("b").unwrap();
        for seed in 0..200 {
            let (_, trace) = sample_trace(&lib, 2, &[(b, 2)], seed);
            assert_eq!(
                trace.steps[1],
                TraceStep::Event(Event::intervention(b, 2)),
                "seed {seed}"
            );
        }
    }

    #[test]
    fn trace_dump_format() {
        let lib = fixtures::fig6();
        let a = lib.resolve("a").unwrap();
        let b = lib.resolve("b").unwrap();
        let trace = Trace {
            steps: vec![
                TraceStep::Event(Event::agent(a, 1)),
                TraceStep::Event(Event::intervention(b, 2)),
                TraceStep::NoAction { time: 3 },
            ],
        };
        assert_eq!(
            trace.render(&lib),
            "t=1 agent a\nt=2 intervene b\nt=3 none -\n"
        );
    }

    #[test]
    fn no_acceptance_is_explicit() {
        let lib = fixtures::fig6();
        let obs = [Observation::Agent("d".into())];
        let err = mc_estimate(&lib, &obs, &McQuery::Intend("p".into()), 1000, 1).unwrap_err();
        assert_eq!(err, McError::NoAcceptance(1000));
    }

    #[test]
    fn unconditioned_matches_prior() {
        let lib = fixtures::fig6();
        let est = mc_estimate(&lib, &[], &McQuery::Intend("p".into()), 50_000, 3).unwrap();
        assert_eq!(est.accepted, 50_000);
        assert!(est.agrees_with(0.5, 3.0), "{est:?}");
    }
}
