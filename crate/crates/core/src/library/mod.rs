//! The hierarchical plan library: an AND/OR task graph.
//!
//! Goals are OR nodes (the agent picks exactly one of their methods), methods
//! are AND nodes (every step must be done, subject to the method's precedence
//! pairs), and primitives are the observable actions. Any task may be marked
//! intendable, meaning the agent can adopt it for its own sake with an
//! adoption probability that is either fixed or conditioned on context
//! variables.
//!
//! Libraries are loaded from a JSON document (see [`PlanLibrary::from_json`])
//! and are immutable afterwards.

mod schema;
mod validate;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, LibraryError};

pub use validate::{ValidationReport, Violation};

/// Index of a task inside its [`PlanLibrary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(pub(crate) u32);

impl TaskId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Index of a context variable inside its [`PlanLibrary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContextId(pub(crate) u32);

impl ContextId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Goal,
    Method,
    Primitive,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Goal => "goal",
            TaskKind::Method => "method",
            TaskKind::Primitive => "primitive",
        })
    }
}

/// One alternative of a goal together with its selection probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodChoice {
    pub method: TaskId,
    pub probability: f64,
}

/// A row of a conditional adoption table.
#[derive(Debug, Clone, PartialEq)]
pub struct AdoptionRow {
    pub when: Vec<(ContextId, bool)>,
    pub probability: f64,
}

/// Prior probability that the agent adopts a task for its own sake.
#[derive(Debug, Clone, PartialEq)]
pub enum Adoption {
    Prior(f64),
    Conditional {
        given: Vec<ContextId>,
        rows: Vec<AdoptionRow>,
    },
}

impl Adoption {
    /// Adoption probability under a full context assignment (indexed by
    /// [`ContextId`]). `None` when a conditional table has no matching row.
    pub fn probability(&self, context: &[bool]) -> Option<f64> {
        match self {
            Adoption::Prior(p) => Some(*p),
            Adoption::Conditional { rows, .. } => rows
                .iter()
                .find(|row| {
                    row.when
                        .iter()
                        .all(|&(var, value)| context.get(var.index()) == Some(&value))
                })
                .map(|row| row.probability),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskNode {
    pub name: String,
    pub kind: TaskKind,
    pub intendable: bool,
    pub adoption: Option<Adoption>,
    /// Alternatives of a goal. Empty for other kinds.
    pub methods: Vec<MethodChoice>,
    /// Steps of a method. Empty for other kinds.
    pub steps: Vec<TaskId>,
    /// `(before, after)` pairs over `steps`.
    pub precedence: Vec<(TaskId, TaskId)>,
    /// Relative weight when this action is picked from a pending set.
    pub pick_weight: f64,
    /// Immediate predecessors of each step, parallel to `steps`.
    step_preds: Vec<Vec<TaskId>>,
}

impl TaskNode {
    /// Immediate predecessors of `step` within this method, if it is a step.
    pub fn step_predecessors(&self, step: TaskId) -> Option<&[TaskId]> {
        self.steps
            .iter()
            .position(|&s| s == step)
            .map(|i| self.step_preds[i].as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextVariable {
    pub name: String,
    pub prior: f64,
}

/// How a parent refers to a child task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParentLink {
    /// The parent is a goal and the child one of its methods.
    Expansion(TaskId),
    /// The parent is a method and the child one of its steps.
    Step(TaskId),
}

impl ParentLink {
    pub fn parent(self) -> TaskId {
        match self {
            ParentLink::Expansion(p) | ParentLink::Step(p) => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanLibrary {
    tasks: Vec<TaskNode>,
    by_name: HashMap<String, TaskId>,
    context: Vec<ContextVariable>,
    context_by_name: HashMap<String, ContextId>,
    leaves: Vec<TaskId>,
    intendable: Vec<TaskId>,
    parents: Vec<Vec<ParentLink>>,
}

impl PlanLibrary {
    /// Parses and validates a library document.
    pub fn from_json(text: &str) -> Result<Self, LibraryError> {
        let lib = Self::parse_unchecked(text)?;
        if lib.intendable.is_empty() {
            return Err(LibraryError::NoIntendableTask);
        }
        let report = lib.validate();
        if report.is_empty() {
            Ok(lib)
        } else {
            Err(LibraryError::Invalid(report))
        }
    }

    /// Parses a document and builds the derived indices without checking the
    /// semantic invariants. The result must pass [`PlanLibrary::validate`]
    /// before the engine can use it.
    pub fn parse_unchecked(text: &str) -> Result<Self, LibraryError> {
        schema::parse(text)
    }

    /// Serializes the normalized form: implicit methods are written out and
    /// every selection probability is explicit.
    pub fn to_json(&self) -> String {
        schema::serialize(self)
    }

    pub fn validate(&self) -> ValidationReport {
        validate::validate(self)
    }

    pub(crate) fn build(tasks: Vec<TaskNode>, context: Vec<ContextVariable>) -> Self {
        let by_name = tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.name.clone(), TaskId(i as u32)))
            .collect();
        let context_by_name = context
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name.clone(), ContextId(i as u32)))
            .collect();
        let mut tasks = tasks;
        for task in &mut tasks {
            task.step_preds = task
                .steps
                .iter()
                .map(|&s| {
                    let mut preds: Vec<TaskId> = task
                        .precedence
                        .iter()
                        .filter(|&&(_, after)| after == s)
                        .map(|&(before, _)| before)
                        .collect();
                    preds.sort();
                    preds.dedup();
                    preds
                })
                .collect();
        }
        let mut parents = vec![Vec::new(); tasks.len()];
        for (i, task) in tasks.iter().enumerate() {
            let id = TaskId(i as u32);
            for choice in &task.methods {
                parents[choice.method.index()].push(ParentLink::Expansion(id));
            }
            for &step in &task.steps {
                parents[step.index()].push(ParentLink::Step(id));
            }
        }
        for links in &mut parents {
            links.sort();
            links.dedup();
        }
        let leaves = (0..tasks.len() as u32)
            .map(TaskId)
            .filter(|id| tasks[id.index()].kind == TaskKind::Primitive)
            .collect();
        let intendable = (0..tasks.len() as u32)
            .map(TaskId)
            .filter(|id| tasks[id.index()].intendable)
            .collect();
        PlanLibrary {
            tasks,
            by_name,
            context,
            context_by_name,
            leaves,
            intendable,
            parents,
        }
    }

    pub fn task(&self, id: TaskId) -> &TaskNode {
        &self.tasks[id.index()]
    }

    pub fn name(&self, id: TaskId) -> &str {
        &self.tasks[id.index()].name
    }

    pub fn id(&self, name: &str) -> Option<TaskId> {
        self.by_name.get(name).copied()
    }

    /// Like [`PlanLibrary::id`], but with an engine error for unknown names.
    pub fn resolve(&self, name: &str) -> Result<TaskId, EngineError> {
        self.id(name)
            .ok_or_else(|| EngineError::UnknownTask(name.to_string()))
    }

    pub fn resolve_primitive(&self, name: &str) -> Result<TaskId, EngineError> {
        let id = self.resolve(name)?;
        if self.task(id).kind != TaskKind::Primitive {
            return Err(EngineError::NotPrimitive(name.to_string()));
        }
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task_ids(&self) -> impl Iterator<Item = TaskId> + '_ {
        (0..self.tasks.len() as u32).map(TaskId)
    }

    pub fn tasks(&self) -> impl Iterator<Item = (TaskId, &TaskNode)> + '_ {
        self.tasks
            .iter()
            .enumerate()
            .map(|(i, t)| (TaskId(i as u32), t))
    }

    pub fn goals(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.task_ids()
            .filter(|&id| self.task(id).kind == TaskKind::Goal)
    }

    /// All primitive actions.
    pub fn leaves(&self) -> &[TaskId] {
        &self.leaves
    }

    pub fn intendable(&self) -> &[TaskId] {
        &self.intendable
    }

    pub fn parents(&self, id: TaskId) -> &[ParentLink] {
        &self.parents[id.index()]
    }

    pub fn context(&self) -> &[ContextVariable] {
        &self.context
    }

    pub fn context_id(&self, name: &str) -> Option<ContextId> {
        self.context_by_name.get(name).copied()
    }

    pub fn context_name(&self, id: ContextId) -> &str {
        &self.context[id.index()].name
    }

    /// Steps that must be done before `child` is enabled within `method`.
    pub fn predecessors(
        &self,
        child: TaskId,
        method: TaskId,
    ) -> Result<BTreeSet<TaskId>, EngineError> {
        self.task(method)
            .step_predecessors(child)
            .map(|preds| preds.iter().copied().collect())
            .ok_or_else(|| EngineError::NotAStep {
                child: self.name(child).to_string(),
                method: self.name(method).to_string(),
            })
    }

    /// Name-based form of [`PlanLibrary::predecessors`].
    pub fn predecessor_names(
        &self,
        child: &str,
        method: &str,
    ) -> Result<BTreeSet<String>, EngineError> {
        let preds = self.predecessors(self.resolve(child)?, self.resolve(method)?)?;
        Ok(preds
            .into_iter()
            .map(|p| self.name(p).to_string())
            .collect())
    }

    /// Names of a set of tasks, sorted.
    pub fn names<I: IntoIterator<Item = TaskId>>(&self, ids: I) -> Vec<&str> {
        let mut names: Vec<&str> = ids.into_iter().map(|id| self.name(id)).collect();
        names.sort_unstable();
        names
    }
}
