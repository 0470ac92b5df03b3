use thiserror::Error;

use crate::library::ValidationReport;

/// Errors raised while loading a plan library document.
#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("duplicate task name `{0}`")]
    DuplicateTask(String),

    #[error("duplicate context variable `{0}`")]
    DuplicateContext(String),

    #[error("`{from}` refers to undeclared {what} `{name}`")]
    DanglingReference {
        from: String,
        what: &'static str,
        name: String,
    },

    #[error("goal `{0}` gives selection probabilities for some methods but not others")]
    MixedMethodProbabilities(String),

    #[error("{0} must declare either `methods` or `steps`, not both")]
    AmbiguousGoal(String),

    #[error("library must contain at least one intendable task")]
    NoIntendableTask,

    #[error("library is invalid:\n{0}")]
    Invalid(ValidationReport),
}

impl LibraryError {
    /// The task or context variable whose declaration is at fault.
    pub fn subject(&self) -> Option<&str> {
        match self {
            LibraryError::DuplicateTask(name)
            | LibraryError::DuplicateContext(name)
            | LibraryError::MixedMethodProbabilities(name)
            | LibraryError::AmbiguousGoal(name) => Some(name),
            LibraryError::DanglingReference { from, .. } => Some(from),
            LibraryError::Invalid(report) => report.violations.iter().find_map(|v| v.subject()),
            LibraryError::Syntax { .. } | LibraryError::NoIntendableTask => None,
        }
    }
}

/// Errors raised by the execution model and the recognizer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("unknown context variable `{0}`")]
    UnknownContext(String),

    #[error("`{0}` is not a primitive action")]
    NotPrimitive(String),

    #[error("`{0}` is not intendable")]
    NotIntendable(String),

    #[error("`{0}` is not a goal")]
    NotAGoal(String),

    #[error("`{child}` is not a step of method `{method}`")]
    NotAStep { child: String, method: String },

    #[error("event time {got} does not follow state time {expected_after}")]
    TimeMismatch { expected_after: u32, got: u32 },

    #[error("context facts must precede the first action (time is already {0})")]
    ContextAfterEvents(u32),

    #[error("no world is consistent with the given context facts")]
    EmptyBelief,

    #[error(
        "inexplicable observation: `{action}` at t={time} has zero likelihood in all \
         {surviving} surviving worlds ({summary})"
    )]
    Inexplicable {
        action: String,
        time: u32,
        surviving: usize,
        summary: String,
    },
}

/// Failure modes of the Monte-Carlo oracle.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("no sampled trace matched the observations ({0} samples drawn)")]
    NoAcceptance(usize),

    #[error("sample count must be positive")]
    NoSamples,

    #[error(transparent)]
    Engine(#[from] EngineError),
}
