//! Generative semantics of plan execution.
//!
//! A [`World`] fixes every hypothesis at the start of an episode: the context
//! assignment, the set of tasks adopted for their own sake, and one method for
//! every active goal. Given a world, the [`ExecutionState`] evolves
//! deterministically from the event history: the agent repeatedly picks an
//! action from the pending set, the action is recorded as done, and the
//! pending set is rebuilt from the primitives that are enabled and not yet
//! done.
//!
//! Enabledness is a plain disjunction over the world's hypotheses: a task is
//! enabled if it is intended, or if a parent method is enabled and all of the
//! task's predecessors in that method are done, or if a parent goal is
//! enabled and the world expands it with this task.

mod sampler;
mod worlds;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::EngineError;
use crate::library::{ParentLink, PlanLibrary, TaskId, TaskKind};

pub use sampler::{
    mc_estimate, mc_estimate_many, sample_trace, sample_world, McEstimate, McQuery, Trace,
    TraceStep,
};
pub use worlds::{enumerate_worlds, world_prior};

/// One complete hypothesis about the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    /// Value of every context variable, indexed by `ContextId`.
    pub context: Vec<bool>,
    /// Tasks adopted for their own sake at the start of the episode.
    pub intended: BTreeSet<TaskId>,
    /// Chosen method for every active goal.
    pub expansion: BTreeMap<TaskId, TaskId>,
    pub prior: f64,
}

impl World {
    /// Tasks reachable from the intended set through chosen expansions and
    /// method steps.
    pub fn active(&self, lib: &PlanLibrary) -> BTreeSet<TaskId> {
        active_tasks(lib, &self.intended, &self.expansion)
    }
}

pub(crate) fn active_tasks(
    lib: &PlanLibrary,
    intended: &BTreeSet<TaskId>,
    expansion: &BTreeMap<TaskId, TaskId>,
) -> BTreeSet<TaskId> {
    let mut active = BTreeSet::new();
    let mut stack: Vec<TaskId> = intended.iter().copied().collect();
    while let Some(id) = stack.pop() {
        if !active.insert(id) {
            continue;
        }
        let task = lib.task(id);
        match task.kind {
            TaskKind::Goal => stack.extend(expansion.get(&id)),
            TaskKind::Method => stack.extend(task.steps.iter().copied()),
            TaskKind::Primitive => {}
        }
    }
    active
}

/// Completion time of every action done so far.
pub type DoneMap = BTreeMap<TaskId, u32>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionState {
    pub time: u32,
    pub done: DoneMap,
    pub pending: BTreeSet<TaskId>,
}

impl ExecutionState {
    /// State at time 0: nothing done, pending set from the world alone.
    pub fn initial(lib: &PlanLibrary, world: &World) -> Self {
        let done = DoneMap::new();
        let pending = pending_set(lib, world, &done);
        ExecutionState {
            time: 0,
            done,
            pending,
        }
    }

    /// Advances the clock without any action (the agent had nothing to do).
    pub fn idle(&self) -> Self {
        ExecutionState {
            time: self.time + 1,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    /// The observed agent picked the action from its pending set.
    Agent,
    /// The recognizing system performed the action itself.
    Intervention,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    pub kind: EventKind,
    pub action: TaskId,
    /// 1-based step index.
    pub time: u32,
}

impl Event {
    pub fn agent(action: TaskId, time: u32) -> Self {
        Event {
            kind: EventKind::Agent,
            action,
            time,
        }
    }

    pub fn intervention(action: TaskId, time: u32) -> Self {
        Event {
            kind: EventKind::Intervention,
            action,
            time,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Agent => "agent",
            EventKind::Intervention => "intervene",
        })
    }
}

/// The set of enabled tasks, computed as the least fixpoint of the enabling
/// rules. A sub-goal shared by several methods can make the rules refer back
/// to themselves, so they are grown from the intended set rather than
/// evaluated by recursion.
pub fn enabled_tasks(lib: &PlanLibrary, world: &World, done: &DoneMap) -> BTreeSet<TaskId> {
    let mut enabled: BTreeSet<TaskId> = world.intended.clone();
    loop {
        let mut grew = false;
        for id in lib.task_ids() {
            if enabled.contains(&id) {
                continue;
            }
            let on = lib.parents(id).iter().any(|&link| match link {
                ParentLink::Step(method) => {
                    enabled.contains(&method)
                        && lib
                            .task(method)
                            .step_predecessors(id)
                            .expect("parent index lists only real steps")
                            .iter()
                            .all(|&p| finished(lib, world, done, &enabled, p))
                }
                ParentLink::Expansion(goal) => {
                    world.expansion.get(&goal) == Some(&id) && enabled.contains(&goal)
                }
            });
            if on {
                enabled.insert(id);
                grew = true;
            }
        }
        if !grew {
            return enabled;
        }
    }
}

fn finished(
    lib: &PlanLibrary,
    world: &World,
    done: &DoneMap,
    enabled: &BTreeSet<TaskId>,
    task: TaskId,
) -> bool {
    let node = lib.task(task);
    match node.kind {
        TaskKind::Primitive => done.contains_key(&task),
        TaskKind::Method => node
            .steps
            .iter()
            .all(|&s| finished(lib, world, done, enabled, s)),
        TaskKind::Goal => {
            enabled.contains(&task)
                && world
                    .expansion
                    .get(&task)
                    .is_some_and(|&m| finished(lib, world, done, enabled, m))
        }
    }
}

pub fn enabled(lib: &PlanLibrary, world: &World, done: &DoneMap, task: TaskId) -> bool {
    enabled_tasks(lib, world, done).contains(&task)
}

pub fn prev_done(lib: &PlanLibrary, world: &World, done: &DoneMap, task: TaskId) -> bool {
    finished(lib, world, done, &enabled_tasks(lib, world, done), task)
}

/// Primitives that are enabled and not yet done.
pub fn pending_set(lib: &PlanLibrary, world: &World, done: &DoneMap) -> BTreeSet<TaskId> {
    enabled_tasks(lib, world, done)
        .into_iter()
        .filter(|&a| lib.task(a).kind == TaskKind::Primitive && !done.contains_key(&a))
        .collect()
}

pub fn initial_pending(lib: &PlanLibrary, world: &World) -> BTreeSet<TaskId> {
    pending_set(lib, world, &DoneMap::new())
}

/// Applies one event. Interventions change the done set exactly like agent
/// actions; only their likelihood differs.
pub fn progress(
    lib: &PlanLibrary,
    world: &World,
    state: &ExecutionState,
    event: &Event,
) -> Result<ExecutionState, EngineError> {
    if event.time != state.time + 1 {
        return Err(EngineError::TimeMismatch {
            expected_after: state.time,
            got: event.time,
        });
    }
    let mut done = state.done.clone();
    done.entry(event.action).or_insert(event.time);
    let pending = pending_set(lib, world, &done);
    debug_assert!(state
        .pending
        .iter()
        .all(|a| *a == event.action || pending.contains(a)));
    Ok(ExecutionState {
        time: event.time,
        done,
        pending,
    })
}

/// Probability that `action` is picked from `pending`.
pub fn pick_probability(lib: &PlanLibrary, pending: &BTreeSet<TaskId>, action: TaskId) -> f64 {
    if !pending.contains(&action) {
        return 0.0;
    }
    let total: f64 = pending.iter().map(|&a| lib.task(a).pick_weight).sum();
    lib.task(action).pick_weight / total
}

/// Likelihood of `event` given the state it is applied to. An intervention
/// is clamped: it has likelihood 1 in every world.
pub fn step_likelihood(lib: &PlanLibrary, state: &ExecutionState, event: &Event) -> f64 {
    match event.kind {
        EventKind::Intervention => 1.0,
        EventKind::Agent => pick_probability(lib, &state.pending, event.action),
    }
}
