use std::collections::{BTreeSet, HashSet};
use std::fmt;

use super::{Adoption, PlanLibrary, TaskId, TaskKind};

const PROBABILITY_SLACK: f64 = 1e-9;

/// One violated library invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    ContextPriorOutOfRange {
        variable: String,
        prior: f64,
    },
    GoalWithoutMethods(String),
    MethodOfWrongKind {
        goal: String,
        method: String,
    },
    MethodProbabilityOutOfRange {
        goal: String,
        method: String,
        probability: f64,
    },
    MethodProbabilitySum {
        goal: String,
        sum: f64,
    },
    EmptyMethod(String),
    DuplicateStep {
        method: String,
        step: String,
    },
    ForeignPrecedence {
        method: String,
        before: String,
        after: String,
    },
    PrecedenceCycle(String),
    TaskGraphCycle(String),
    MisplacedField {
        task: String,
        field: &'static str,
    },
    AdoptionOnNonIntendable(String),
    MissingAdoption(String),
    AdoptionOutOfRange {
        task: String,
        probability: f64,
    },
    AdoptionTable {
        task: String,
        detail: String,
    },
    InvalidPickWeight {
        task: String,
        weight: f64,
    },
    UnreachablePrimitive(String),
    NoIntendableTask,
}

impl Violation {
    /// The task or context variable whose declaration is at fault.
    pub fn subject(&self) -> Option<&str> {
        use Violation::*;
        match self {
            ContextPriorOutOfRange { variable, .. } => Some(variable),
            GoalWithoutMethods(t)
            | EmptyMethod(t)
            | PrecedenceCycle(t)
            | TaskGraphCycle(t)
            | AdoptionOnNonIntendable(t)
            | MissingAdoption(t)
            | UnreachablePrimitive(t) => Some(t),
            MethodOfWrongKind { goal, .. }
            | MethodProbabilityOutOfRange { goal, .. }
            | MethodProbabilitySum { goal, .. } => Some(goal),
            DuplicateStep { method, .. } | ForeignPrecedence { method, .. } => Some(method),
            MisplacedField { task, .. }
            | AdoptionOutOfRange { task, .. }
            | AdoptionTable { task, .. }
            | InvalidPickWeight { task, .. } => Some(task),
            NoIntendableTask => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            ContextPriorOutOfRange { variable, prior } => {
                write!(f, "context `{variable}`: prior {prior} outside [0, 1]")
            }
            GoalWithoutMethods(g) => write!(f, "goal `{g}`: no methods"),
            MethodOfWrongKind { goal, method } => {
                write!(f, "goal `{goal}`: alternative `{method}` is not a method")
            }
            MethodProbabilityOutOfRange {
                goal,
                method,
                probability,
            } => write!(
                f,
                "goal `{goal}`: method `{method}` probability {probability} outside [0, 1]"
            ),
            MethodProbabilitySum { goal, sum } => {
                write!(
                    f,
                    "goal `{goal}`: method probabilities sum ≠ 1 (sum = {sum})"
                )
            }
            EmptyMethod(m) => write!(f, "method `{m}`: no steps"),
            DuplicateStep { method, step } => {
                write!(f, "method `{method}`: step `{step}` listed twice")
            }
            ForeignPrecedence {
                method,
                before,
                after,
            } => write!(
                f,
                "method `{method}`: precedence `{before}` < `{after}` references a non-step"
            ),
            PrecedenceCycle(m) => write!(f, "method `{m}`: precedence not a DAG"),
            TaskGraphCycle(t) => write!(f, "task graph has a cycle through `{t}`"),
            MisplacedField { task, field } => {
                write!(
                    f,
                    "task `{task}`: field `{field}` does not apply to its kind"
                )
            }
            AdoptionOnNonIntendable(t) => {
                write!(f, "task `{t}`: adoption given but task is not intendable")
            }
            MissingAdoption(t) => write!(f, "task `{t}`: intendable but has no adoption"),
            AdoptionOutOfRange { task, probability } => write!(
                f,
                "task `{task}`: adoption probability {probability} outside [0, 1]"
            ),
            AdoptionTable { task, detail } => write!(f, "task `{task}`: adoption table {detail}"),
            InvalidPickWeight { task, weight } => {
                write!(
                    f,
                    "task `{task}`: pick weight {weight} must be positive and finite"
                )
            }
            UnreachablePrimitive(t) => write!(
                f,
                "primitive `{t}` is neither intendable nor reachable from an intendable task"
            ),
            NoIntendableTask => write!(f, "library must contain at least one intendable task"),
        }
    }
}

/// Every invariant a library violates. Empty iff the engine can use it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

fn in_unit(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

pub(super) fn validate(lib: &PlanLibrary) -> ValidationReport {
    let mut out = Vec::new();

    for var in lib.context() {
        if !in_unit(var.prior) {
            out.push(Violation::ContextPriorOutOfRange {
                variable: var.name.clone(),
                prior: var.prior,
            });
        }
    }

    for (_, task) in lib.tasks() {
        let name = &task.name;
        match task.kind {
            TaskKind::Goal => check_goal(lib, task, &mut out),
            TaskKind::Method => check_method(lib, task, &mut out),
            TaskKind::Primitive => {}
        }
        if task.kind != TaskKind::Goal && !task.methods.is_empty() {
            out.push(Violation::MisplacedField {
                task: name.clone(),
                field: "methods",
            });
        }
        if task.kind != TaskKind::Method && !task.steps.is_empty() {
            out.push(Violation::MisplacedField {
                task: name.clone(),
                field: "steps",
            });
        }
        if task.kind != TaskKind::Method && !task.precedence.is_empty() {
            out.push(Violation::MisplacedField {
                task: name.clone(),
                field: "precedence",
            });
        }
        if !(task.pick_weight.is_finite() && task.pick_weight > 0.0) {
            out.push(Violation::InvalidPickWeight {
                task: name.clone(),
                weight: task.pick_weight,
            });
        }
        check_adoption(lib, task, &mut out);
    }

    if let Some(task) = find_cycle(lib) {
        out.push(Violation::TaskGraphCycle(lib.name(task).to_string()));
    }

    let reachable = reachable_from_intendable(lib);
    for &leaf in lib.leaves() {
        if !reachable.contains(&leaf) {
            out.push(Violation::UnreachablePrimitive(lib.name(leaf).to_string()));
        }
    }

    if lib.intendable().is_empty() {
        out.push(Violation::NoIntendableTask);
    }

    ValidationReport { violations: out }
}

fn check_goal(lib: &PlanLibrary, task: &super::TaskNode, out: &mut Vec<Violation>) {
    let goal = &task.name;
    if task.methods.is_empty() {
        out.push(Violation::GoalWithoutMethods(goal.clone()));
        return;
    }
    let mut sum = 0.0;
    for choice in &task.methods {
        let method = lib.name(choice.method).to_string();
        if lib.task(choice.method).kind != TaskKind::Method {
            out.push(Violation::MethodOfWrongKind {
                goal: goal.clone(),
                method: method.clone(),
            });
        }
        if !in_unit(choice.probability) {
            out.push(Violation::MethodProbabilityOutOfRange {
                goal: goal.clone(),
                method,
                probability: choice.probability,
            });
        }
        sum += choice.probability;
    }
    if (sum - 1.0).abs() > PROBABILITY_SLACK {
        out.push(Violation::MethodProbabilitySum {
            goal: goal.clone(),
            sum,
        });
    }
}

fn check_method(lib: &PlanLibrary, task: &super::TaskNode, out: &mut Vec<Violation>) {
    let method = &task.name;
    if task.steps.is_empty() {
        out.push(Violation::EmptyMethod(method.clone()));
    }
    let mut seen = HashSet::new();
    for &step in &task.steps {
        if !seen.insert(step) {
            out.push(Violation::DuplicateStep {
                method: method.clone(),
                step: lib.name(step).to_string(),
            });
        }
    }
    let mut foreign = false;
    for &(before, after) in &task.precedence {
        if !seen.contains(&before) || !seen.contains(&after) {
            foreign = true;
            out.push(Violation::ForeignPrecedence {
                method: method.clone(),
                before: lib.name(before).to_string(),
                after: lib.name(after).to_string(),
            });
        }
    }
    if !foreign && !precedence_is_dag(&task.steps, &task.precedence) {
        out.push(Violation::PrecedenceCycle(method.clone()));
    }
}

/// Kahn's algorithm over the method's own steps.
fn precedence_is_dag(steps: &[TaskId], precedence: &[(TaskId, TaskId)]) -> bool {
    let nodes: BTreeSet<TaskId> = steps.iter().copied().collect();
    let mut indegree: std::collections::BTreeMap<TaskId, usize> =
        nodes.iter().map(|&n| (n, 0)).collect();
    let edges: BTreeSet<(TaskId, TaskId)> = precedence.iter().copied().collect();
    for &(_, after) in &edges {
        *indegree.get_mut(&after).expect("checked by caller") += 1;
    }
    let mut ready: Vec<TaskId> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&n, _)| n)
        .collect();
    let mut removed = 0;
    while let Some(n) = ready.pop() {
        removed += 1;
        for &(before, after) in &edges {
            if before == n {
                let d = indegree.get_mut(&after).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(after);
                }
            }
        }
    }
    removed == nodes.len()
}

fn check_adoption(lib: &PlanLibrary, task: &super::TaskNode, out: &mut Vec<Violation>) {
    let name = &task.name;
    let adoption = match (&task.adoption, task.intendable) {
        (None, false) => return,
        (None, true) => {
            out.push(Violation::MissingAdoption(name.clone()));
            return;
        }
        (Some(_), false) => {
            out.push(Violation::AdoptionOnNonIntendable(name.clone()));
            return;
        }
        (Some(a), true) => a,
    };
    match adoption {
        Adoption::Prior(p) => {
            if !in_unit(*p) {
                out.push(Violation::AdoptionOutOfRange {
                    task: name.clone(),
                    probability: *p,
                });
            }
        }
        Adoption::Conditional { given, rows } => {
            let table_err = |detail: String| Violation::AdoptionTable {
                task: name.clone(),
                detail,
            };
            let vars: BTreeSet<_> = given.iter().copied().collect();
            if vars.len() != given.len() {
                out.push(table_err("lists a context variable twice".into()));
                return;
            }
            let mut covered = HashSet::new();
            for row in rows {
                if !in_unit(row.probability) {
                    out.push(Violation::AdoptionOutOfRange {
                        task: name.clone(),
                        probability: row.probability,
                    });
                }
                let row_vars: BTreeSet<_> = row.when.iter().map(|&(v, _)| v).collect();
                if row_vars != vars {
                    out.push(table_err(
                        "has a row that does not assign exactly its listed variables".into(),
                    ));
                    continue;
                }
                let key: Vec<bool> = given
                    .iter()
                    .map(|g| row.when.iter().find(|(v, _)| v == g).unwrap().1)
                    .collect();
                if !covered.insert(key.clone()) {
                    out.push(table_err(format!(
                        "assigns {} twice",
                        describe(lib, given, &key)
                    )));
                }
            }
            for bits in 0..(1u64 << given.len().min(63)) {
                let key: Vec<bool> = (0..given.len()).map(|i| bits >> i & 1 == 1).collect();
                if !covered.contains(&key) {
                    out.push(table_err(format!(
                        "is missing {}",
                        describe(lib, given, &key)
                    )));
                }
            }
        }
    }
}

fn describe(lib: &PlanLibrary, given: &[super::ContextId], values: &[bool]) -> String {
    let parts: Vec<String> = given
        .iter()
        .zip(values)
        .map(|(&v, &b)| format!("{}={b}", lib.context_name(v)))
        .collect();
    format!("{{{}}}", parts.join(", "))
}

fn children(lib: &PlanLibrary, id: TaskId) -> impl Iterator<Item = TaskId> + '_ {
    let task = lib.task(id);
    task.methods
        .iter()
        .map(|c| c.method)
        .chain(task.steps.iter().copied())
}

fn find_cycle(lib: &PlanLibrary) -> Option<TaskId> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Closed,
    }
    fn visit(lib: &PlanLibrary, id: TaskId, marks: &mut [Mark]) -> Option<TaskId> {
        match marks[id.index()] {
            Mark::Open => return Some(id),
            Mark::Closed => return None,
            Mark::New => {}
        }
        marks[id.index()] = Mark::Open;
        for child in children(lib, id).collect::<Vec<_>>() {
            if let Some(hit) = visit(lib, child, marks) {
                return Some(hit);
            }
        }
        marks[id.index()] = Mark::Closed;
        None
    }
    let mut marks = vec![Mark::New; lib.len()];
    lib.task_ids().find_map(|id| visit(lib, id, &mut marks))
}

fn reachable_from_intendable(lib: &PlanLibrary) -> HashSet<TaskId> {
    let mut seen: HashSet<TaskId> = HashSet::new();
    let mut stack: Vec<TaskId> = lib.intendable().to_vec();
    while let Some(id) = stack.pop() {
        if seen.insert(id) {
            stack.extend(children(lib, id));
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn report(doc: &str) -> ValidationReport {
        PlanLibrary::parse_unchecked(doc).unwrap().validate()
    }

    #[test]
    fn fixtures_are_clean() {
        assert!(fixtures::fig6().validate().is_empty());
        assert!(fixtures::station().validate().is_empty());
    }

    #[test]
    fn method_probabilities_must_sum_to_one() {
        let r = report(
            r#"{"tasks": [
            {"name": "g", "kind": "goal", "intendable": true, "adoption": 0.5,
             "methods": [{"name": "m1", "probability": 0.6}, {"name": "m2", "probability": 0.6}]},
            {"name": "m1", "kind": "method", "steps": ["a"]},
            {"name": "m2", "kind": "method", "steps": ["a"]},
            {"name": "a", "kind": "primitive"}
        ]}"#,
        );
        assert_eq!(r.len(), 1);
        assert!(
            matches!(&r.violations[0], Violation::MethodProbabilitySum { goal, .. } if goal == "g")
        );
        assert!(r.violations[0]
            .to_string()
            .contains("method probabilities sum ≠ 1"));
    }

    #[test]
    fn precedence_cycle_detected() {
        let r = report(
            r#"{"tasks": [
            {"name": "g", "kind": "goal", "intendable": true, "adoption": 0.5, "methods": ["m"]},
            {"name": "m", "kind": "method", "steps": ["a", "b", "c"],
             "precedence": [["a", "b"], ["b", "c"], ["c", "b"]]},
            {"name": "a", "kind": "primitive"},
            {"name": "b", "kind": "primitive"},
            {"name": "c", "kind": "primitive"}
        ]}"#,
        );
        assert_eq!(r.violations, vec![Violation::PrecedenceCycle("m".into())]);
        assert!(r.to_string().contains("precedence not a DAG"));
    }

    #[test]
    fn precedence_over_foreign_steps() {
        let r = report(
            r#"{"tasks": [
            {"name": "g", "kind": "goal", "intendable": true, "adoption": 0.5, "methods": ["m"]},
            {"name": "m", "kind": "method", "steps": ["a"], "precedence": [["x", "a"]]},
            {"name": "a", "kind": "primitive"},
            {"name": "x", "kind": "primitive", "intendable": true, "adoption": 0.1}
        ]}"#,
        );
        assert!(matches!(
            &r.violations[..],
            [Violation::ForeignPrecedence { .. }]
        ));
    }

    #[test]
    fn task_graph_cycle_detected() {
        let r = report(
            r#"{"tasks": [
            {"name": "g", "kind": "goal", "intendable": true, "adoption": 0.5, "methods": ["m"]},
            {"name": "m", "kind": "method", "steps": ["a", "g"]},
            {"name": "a", "kind": "primitive"}
        ]}"#,
        );
        assert!(r
            .violations
            .iter()
            .any(|v| matches!(v, Violation::TaskGraphCycle(_))));
    }

    #[test]
    fn adoption_rules() {
        let r = report(
            r#"{"context": [{"name": "c", "prior": 1.5}],
            "tasks": [
            {"name": "g", "kind": "goal", "intendable": true, "methods": ["m"]},
            {"name": "m", "kind": "method", "steps": ["a", "b"], "adoption": 0.2},
            {"name": "a", "kind": "primitive", "intendable": true,
             "adoption": {"given": ["c"], "table": [{"when": {"c": true}, "probability": 0.4}]}},
            {"name": "b", "kind": "primitive", "intendable": true, "adoption": -0.1}
        ]}"#,
        );
        let v = &r.violations;
        assert!(v.contains(&Violation::ContextPriorOutOfRange {
            variable: "c".into(),
            prior: 1.5
        }));
        assert!(v.contains(&Violation::MissingAdoption("g".into())));
        assert!(v.contains(&Violation::AdoptionOnNonIntendable("m".into())));
        assert!(v.contains(&Violation::AdoptionOutOfRange {
            task: "b".into(),
            probability: -0.1
        }));
        assert!(v
            .iter()
            .any(|x| matches!(x, Violation::AdoptionTable { detail, .. }
            if detail.contains("missing {c=false}"))));
    }

    #[test]
    fn unreachable_primitive_rejected() {
        let r = report(
            r#"{"tasks": [
            {"name": "a", "kind": "primitive", "intendable": true, "adoption": 0.5},
            {"name": "orphan", "kind": "primitive"}
        ]}"#,
        );
        assert_eq!(
            r.violations,
            vec![Violation::UnreachablePrimitive("orphan".into())]
        );
    }

    #[test]
    fn wrong_kind_alternatives() {
        let r = report(
            r#"{"tasks": [
            {"name": "g", "kind": "goal", "intendable": true, "adoption": 0.5, "methods": ["a"]},
            {"name": "a", "kind": "primitive", "steps": ["a"]}
        ]}"#,
        );
        assert!(r
            .violations
            .iter()
            .any(|x| matches!(x, Violation::MethodOfWrongKind { .. })));
        assert!(r
            .violations
            .iter()
            .any(|x| matches!(x, Violation::MisplacedField { field: "steps", .. })));
    }
}
