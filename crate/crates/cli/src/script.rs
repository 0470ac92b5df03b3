//! Line-oriented command language shared by script files and the
//! interactive loop.
//!
//! ```text
//! # comment
//! context EVA-prep=true
//! obs open-p1
//! intervene b
//! query intend increase-power raise-O2-level
//! query next
//! query expansion increase-power
//! query explain 3
//! ```

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Context {
        variable: String,
        value: bool,
    },
    Obs(String),
    Intervene(String),
    /// One or more intendable tasks, reported together as one block.
    QueryIntend(Vec<String>),
    QueryNext,
    QueryExpansion(String),
    /// Top explanations; `None` falls back to the session default.
    QueryExplain(Option<usize>),
}

impl Command {
    pub fn is_event(&self) -> bool {
        matches!(self, Command::Obs(_) | Command::Intervene(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

/// Parses one line. Blank lines and comments yield `Ok(None)`.
pub fn parse_line(text: &str) -> Result<Option<Command>, String> {
    let text = text.split('#').next().unwrap_or_default();
    let words: Vec<&str> = text.split_whitespace().collect();
    let Some((&head, rest)) = words.split_first() else {
        return Ok(None);
    };
    let one = |what: &str| match rest {
        [name] => Ok(name.to_string()),
        [] => Err(format!("`{head}` expects {what}")),
        _ => Err(format!("`{head}` takes a single {what}")),
    };
    let command = match head {
        "context" => {
            let arg = one("an assignment `<var>=<true|false>`")?;
            let (variable, value) = arg
                .split_once('=')
                .ok_or_else(|| format!("expected `<var>=<true|false>`, got `{arg}`"))?;
            let value = match value {
                "true" => true,
                "false" => false,
                other => {
                    return Err(format!(
                        "context value must be true or false, got `{other}`"
                    ))
                }
            };
            if variable.is_empty() {
                return Err("context variable name is empty".into());
            }
            Command::Context {
                variable: variable.to_string(),
                value,
            }
        }
        "obs" => Command::Obs(one("an action name")?),
        "intervene" => Command::Intervene(one("an action name")?),
        "query" => parse_query(rest)?,
        other => return Err(format!("unknown command `{other}`")),
    };
    Ok(Some(command))
}

fn parse_query(words: &[&str]) -> Result<Command, String> {
    let Some((&kind, args)) = words.split_first() else {
        return Err("`query` expects one of intend, next, expansion, explain".into());
    };
    match (kind, args) {
        ("intend", []) => Err("`query intend` expects at least one task".into()),
        ("intend", tasks) => Ok(Command::QueryIntend(
            tasks.iter().map(|t| t.to_string()).collect(),
        )),
        ("next", []) => Ok(Command::QueryNext),
        ("expansion", [goal]) => Ok(Command::QueryExpansion(goal.to_string())),
        ("expansion", _) => Err("`query expansion` expects exactly one goal".into()),
        ("explain", []) => Ok(Command::QueryExplain(None)),
        ("explain", [k]) => match k.parse::<usize>() {
            Ok(k) if k > 0 => Ok(Command::QueryExplain(Some(k))),
            _ => Err(format!(
                "`query explain` expects a positive count, got `{k}`"
            )),
        },
        ("next" | "explain", _) => Err(format!("too many arguments to `query {kind}`")),
        (other, _) => Err(format!("unknown query `{other}`")),
    }
}

/// A parsed script: commands paired with their 1-based source lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Script {
    pub commands: Vec<(usize, Command)>,
}

impl Script {
    /// Parses a whole script and checks that context facts come before the
    /// first event.
    pub fn parse(source: &str) -> Result<Self, ParseError> {
        let mut commands = Vec::new();
        let mut first_event = None;
        for (i, text) in source.lines().enumerate() {
            let line = i + 1;
            let Some(cmd) = parse_line(text).map_err(|message| ParseError { line, message })?
            else {
                continue;
            };
            if cmd.is_event() && first_event.is_none() {
                first_event = Some(line);
            }
            if let (Command::Context { .. }, Some(at)) = (&cmd, first_event) {
                return Err(ParseError {
                    line,
                    message: format!("context facts must precede the first event (line {at})"),
                });
            }
            commands.push((line, cmd));
        }
        Ok(Script { commands })
    }
}
