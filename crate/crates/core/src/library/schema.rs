//! JSON document form of a plan library.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{
    Adoption, AdoptionRow, ContextId, ContextVariable, MethodChoice, PlanLibrary, TaskId, TaskKind,
    TaskNode,
};
use crate::error::LibraryError;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryDoc {
    #[serde(default)]
    context: Vec<ContextVariable>,
    tasks: Vec<TaskDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskDoc {
    name: String,
    kind: TaskKind,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    intendable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adoption: Option<AdoptionDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    methods: Option<Vec<MethodRef>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    steps: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    precedence: Option<Vec<(String, String)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pick_weight: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum AdoptionDoc {
    Prior(f64),
    Table {
        given: Vec<String>,
        table: Vec<RowDoc>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowDoc {
    when: BTreeMap<String, bool>,
    probability: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum MethodRef {
    Name(String),
    Weighted { name: String, probability: f64 },
}

impl MethodRef {
    fn name(&self) -> &str {
        match self {
            MethodRef::Name(n) | MethodRef::Weighted { name: n, .. } => n,
        }
    }

    fn probability(&self) -> Option<f64> {
        match self {
            MethodRef::Name(_) => None,
            MethodRef::Weighted { probability, .. } => Some(*probability),
        }
    }
}

/// Name of the method synthesized for a goal that lists its steps directly.
pub fn implicit_method_name(goal: &str) -> String {
    format!("{goal}/only")
}

pub(super) fn parse(text: &str) -> Result<PlanLibrary, LibraryError> {
    let doc: LibraryDoc = serde_json::from_str(text).map_err(|e| LibraryError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    let mut context_ids = HashMap::new();
    for (i, var) in doc.context.iter().enumerate() {
        if context_ids
            .insert(var.name.clone(), ContextId(i as u32))
            .is_some()
        {
            return Err(LibraryError::DuplicateContext(var.name.clone()));
        }
    }

    // First pass: assign ids, synthesizing implicit methods right after
    // their goal.
    let mut names: Vec<String> = Vec::new();
    for task in &doc.tasks {
        names.push(task.name.clone());
        if task.kind == TaskKind::Goal && task.steps.is_some() {
            if task.methods.is_some() {
                return Err(LibraryError::AmbiguousGoal(task.name.clone()));
            }
            names.push(implicit_method_name(&task.name));
        }
    }
    let mut ids = HashMap::new();
    for (i, name) in names.iter().enumerate() {
        if ids.insert(name.clone(), TaskId(i as u32)).is_some() {
            return Err(LibraryError::DuplicateTask(name.clone()));
        }
    }
    let lookup = |from: &str, name: &str| {
        ids.get(name)
            .copied()
            .ok_or_else(|| LibraryError::DanglingReference {
                from: from.to_string(),
                what: "task",
                name: name.to_string(),
            })
    };
    let lookup_var = |from: &str, name: &str| {
        context_ids
            .get(name)
            .copied()
            .ok_or_else(|| LibraryError::DanglingReference {
                from: from.to_string(),
                what: "context variable",
                name: name.to_string(),
            })
    };

    let mut tasks = Vec::with_capacity(names.len());
    for doc_task in &doc.tasks {
        let name = &doc_task.name;
        let adoption = match &doc_task.adoption {
            None => None,
            Some(AdoptionDoc::Prior(p)) => Some(Adoption::Prior(*p)),
            Some(AdoptionDoc::Table { given, table }) => {
                let given = given
                    .iter()
                    .map(|v| lookup_var(name, v))
                    .collect::<Result<Vec<_>, _>>()?;
                let rows = table
                    .iter()
                    .map(|row| {
                        let when = row
                            .when
                            .iter()
                            .map(|(v, &value)| Ok((lookup_var(name, v)?, value)))
                            .collect::<Result<Vec<_>, LibraryError>>()?;
                        Ok(AdoptionRow {
                            when,
                            probability: row.probability,
                        })
                    })
                    .collect::<Result<Vec<_>, LibraryError>>()?;
                Some(Adoption::Conditional { given, rows })
            }
        };

        let steps = doc_task
            .steps
            .iter()
            .flatten()
            .map(|s| lookup(name, s))
            .collect::<Result<Vec<_>, _>>()?;
        let precedence = doc_task
            .precedence
            .iter()
            .flatten()
            .map(|(b, a)| Ok((lookup(name, b)?, lookup(name, a)?)))
            .collect::<Result<Vec<_>, LibraryError>>()?;
        let pick_weight = doc_task.pick_weight.unwrap_or(1.0);

        if doc_task.kind == TaskKind::Goal && doc_task.steps.is_some() {
            let method_name = implicit_method_name(name);
            let method = ids[&method_name];
            tasks.push(TaskNode {
                name: name.clone(),
                kind: TaskKind::Goal,
                intendable: doc_task.intendable,
                adoption,
                methods: vec![MethodChoice {
                    method,
                    probability: 1.0,
                }],
                steps: Vec::new(),
                precedence: Vec::new(),
                pick_weight,
                step_preds: Vec::new(),
            });
            tasks.push(TaskNode {
                name: method_name,
                kind: TaskKind::Method,
                intendable: false,
                adoption: None,
                methods: Vec::new(),
                steps,
                precedence,
                pick_weight: 1.0,
                step_preds: Vec::new(),
            });
            continue;
        }

        let refs = doc_task.methods.as_deref().unwrap_or(&[]);
        let given = refs.iter().filter(|m| m.probability().is_some()).count();
        if given != 0 && given != refs.len() {
            return Err(LibraryError::MixedMethodProbabilities(name.clone()));
        }
        let uniform = 1.0 / refs.len().max(1) as f64;
        let methods = refs
            .iter()
            .map(|m| {
                Ok(MethodChoice {
                    method: lookup(name, m.name())?,
                    probability: m.probability().unwrap_or(uniform),
                })
            })
            .collect::<Result<Vec<_>, LibraryError>>()?;

        tasks.push(TaskNode {
            name: name.clone(),
            kind: doc_task.kind,
            intendable: doc_task.intendable,
            adoption,
            methods,
            steps,
            precedence,
            pick_weight,
            step_preds: Vec::new(),
        });
    }

    Ok(PlanLibrary::build(tasks, doc.context))
}

pub(super) fn serialize(lib: &PlanLibrary) -> String {
    let names = |ids: &[TaskId]| ids.iter().map(|&i| lib.name(i).to_string()).collect();
    let tasks = lib
        .tasks()
        .map(|(_, task)| TaskDoc {
            name: task.name.clone(),
            kind: task.kind,
            intendable: task.intendable,
            adoption: task.adoption.as_ref().map(|a| match a {
                Adoption::Prior(p) => AdoptionDoc::Prior(*p),
                Adoption::Conditional { given, rows } => AdoptionDoc::Table {
                    given: given
                        .iter()
                        .map(|&v| lib.context_name(v).to_string())
                        .collect(),
                    table: rows
                        .iter()
                        .map(|row| RowDoc {
                            when: row
                                .when
                                .iter()
                                .map(|&(v, value)| (lib.context_name(v).to_string(), value))
                                .collect(),
                            probability: row.probability,
                        })
                        .collect(),
                },
            }),
            methods: (task.kind == TaskKind::Goal || !task.methods.is_empty()).then(|| {
                task.methods
                    .iter()
                    .map(|c| MethodRef::Weighted {
                        name: lib.name(c.method).to_string(),
                        probability: c.probability,
                    })
                    .collect()
            }),
            steps: (task.kind == TaskKind::Method || !task.steps.is_empty())
                .then(|| names(&task.steps)),
            precedence: (!task.precedence.is_empty()).then(|| {
                task.precedence
                    .iter()
                    .map(|&(b, a)| (lib.name(b).to_string(), lib.name(a).to_string()))
                    .collect()
            }),
            pick_weight: (task.pick_weight != 1.0).then_some(task.pick_weight),
        })
        .collect();
    let doc = LibraryDoc {
        context: lib.context().to_vec(),
        tasks,
    };
    serde_json::to_string_pretty(&doc).expect("library documents always serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn syntax_error_reports_position() {
        let err = PlanLibrary::parse_unchecked("{\n  \"tasks\": [\n    {\"name\": }\n  ]\n}")
            .unwrap_err();
        match err {
            LibraryError::Syntax { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_task_list_rejected() {
        let err = PlanLibrary::from_json(r#"{"context": [], "tasks": []}"#).unwrap_err();
        assert!(matches!(err, LibraryError::NoIntendableTask));
    }

    #[test]
    fn duplicate_task_rejected() {
        let doc = r#"{"tasks": [
            {"name": "a", "kind": "primitive", "intendable": true, "adoption": 0.5},
            {"name": "a", "kind": "primitive"}
        ]}"#;
        assert!(matches!(
            PlanLibrary::from_json(doc),
            Err(LibraryError::DuplicateTask(n)) if n == "a"
        ));
    }

    #[test]
    fn implicit_method_name_collision_is_a_duplicate() {
        let doc = r#"{"tasks": [
            {"name": "g", "kind": "goal", "intendable": true, "adoption": 0.5, "steps": ["a"]},
            {"name": "g/only", "kind": "method", "steps": ["a"]},
            {"name": "a", "kind": "primitive"}
        ]}"#;
        assert!(matches!(
            PlanLibrary::from_json(doc),
            Err(LibraryError::DuplicateTask(n)) if n == "g/only"
        ));
    }

    #[test]
    fn dangling_step_rejected() {
        let doc = r#"{"tasks": [
            {"name": "g", "kind": "goal", "intendable": true, "adoption": 0.5, "methods": ["m"]},
            {"name": "m", "kind": "method", "steps": ["ghost"]}
        ]}"#;
        assert!(matches!(
            PlanLibrary::from_json(doc),
            Err(LibraryError::DanglingReference { name, .. }) if name == "ghost"
        ));
    }

    #[test]
    fn dangling_context_variable_rejected() {
        let doc = r#"{"tasks": [
            {"name": "a", "kind": "primitive", "intendable": true,
             "adoption": {"given": ["x"], "table": []}}
        ]}"#;
        assert!(matches!(
            PlanLibrary::from_json(doc),
            Err(LibraryError::DanglingReference {
                what: "context variable",
                ..
            })
        ));
    }

    #[test]
    fn unweighted_methods_become_uniform() {
        let doc = r#"{"tasks": [
            {"name": "g", "kind": "goal", "intendable": true, "adoption": 0.5,
             "methods": ["m1", "m2", "m3", "m4"]},
            {"name": "m1", "kind": "method", "steps": ["a"]},
            {"name": "m2", "kind": "method", "steps": ["a"]},
            {"name": "m3", "kind": "method", "steps": ["a"]},
            {"name": "m4", "kind": "method", "steps": ["a"]},
            {"name": "a", "kind": "primitive"}
        ]}"#;
        let lib = PlanLibrary::from_json(doc).unwrap();
        let g = lib.task(lib.resolve("g").unwrap());
        assert!(g.methods.iter().all(|c| c.probability == 0.25));
    }

    #[test]
    fn mixed_method_probabilities_rejected() {
        let doc = r#"{"tasks": [
            {"name": "g", "kind": "goal", "intendable": true, "adoption": 0.5,
             "methods": ["m1", {"name": "m2", "probability": 0.5}]},
            {"name": "m1", "kind": "method", "steps": ["a"]},
            {"name": "m2", "kind": "method", "steps": ["a"]},
            {"name": "a", "kind": "primitive"}
        ]}"#;
        assert!(matches!(
            PlanLibrary::from_json(doc),
            Err(LibraryError::MixedMethodProbabilities(_))
        ));
    }

    #[test]
    fn declaration_order_does_not_matter() {
        let lib = fixtures::fig6();
        let reversed = r#"{"tasks": [
            {"name": "d", "kind": "primitive"},
            {"name": "c", "kind": "primitive"},
            {"name": "b", "kind": "primitive"},
            {"name": "a", "kind": "primitive"},
            {"name": "mq", "kind": "method", "steps": ["a", "d"], "precedence": [["a", "d"]]},
            {"name": "mp", "kind": "method", "steps": ["a", "b", "c"],
             "precedence": [["a", "b"], ["b", "c"]]},
            {"name": "q", "kind": "goal", "intendable": true, "adoption": 0.5, "methods": ["mq"]},
            {"name": "p", "kind": "goal", "intendable": true, "adoption": 0.5, "methods": ["mp"]}
        ]}"#;
        let other = PlanLibrary::from_json(reversed).unwrap();
        for (_, task) in lib.tasks() {
            let twin = other.task(other.resolve(&task.name).unwrap());
            assert_eq!(task.kind, twin.kind);
            assert_eq!(
                lib.names(task.steps.iter().copied()),
                other.names(twin.steps.iter().copied())
            );
            assert_eq!(
                lib.names(task.methods.iter().map(|c| c.method)),
                other.names(twin.methods.iter().map(|c| c.method))
            );
        }
    }

    #[test]
    fn normalized_form_round_trips() {
        for lib in [fixtures::fig6(), fixtures::station()] {
            let again = PlanLibrary::from_json(&lib.to_json()).unwrap();
            assert_eq!(lib, again);
        }
    }
}
