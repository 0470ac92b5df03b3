//! Command-line front end: loads a plan library, replays a script (or reads
//! commands interactively), prints one block per query and optionally writes
//! a JSON-lines sidecar.
//!
//! Exit codes: 0 on success, 1 when an observation is inexplicable, 2 for
//! any parse or validation error in the library or the script.

pub mod script;
pub mod session;

use std::fmt;
use std::io::{self, BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use planrec::{EngineError, LibraryError, PlanLibrary};
use thiserror::Error;

pub use script::{parse_line, Command, ParseError, Script};
pub use session::{Options, Record, Session};

#[derive(Debug, Clone, Parser)]
#[command(
    name = "planrec",
    version,
    about = "Probabilistic plan recognition over a plan library"
)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["script", "interactive"])))]
pub struct Args {
    /// Plan library (JSON)
    #[arg(long, value_name = "PATH")]
    pub library: PathBuf,

    /// Command script to replay
    #[arg(long, value_name = "PATH")]
    pub script: Option<PathBuf>,

    /// Read commands from standard input
    #[arg(long)]
    pub interactive: bool,

    /// Cross-check every query against N Monte-Carlo samples
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    pub mc_check: Option<u64>,

    /// Seed for the Monte-Carlo cross-check
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Write one JSON record per reported value to this file
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Number of explanations shown by `query explain` without a count
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub top_k: u64,
}

impl Args {
    pub fn options(&self) -> Options {
        Options {
            mc_check: self.mc_check.map(|n| n as usize),
            seed: self.seed,
            top_k: self.top_k as usize,
        }
    }
}

/// A file position for error messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub path: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
}

impl Location {
    fn file(path: &Path) -> Self {
        Location {
            path: path.display().to_string(),
            line: None,
            column: None,
        }
    }

    fn line(path: &Path, line: usize) -> Self {
        Location {
            line: Some(line),
            ..Location::file(path)
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.path)?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
            if let Some(column) = self.column {
                write!(f, ":{column}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },

    #[error("{at}: {source}")]
    Library { at: Location, source: LibraryError },

    #[error("{at}: {message}")]
    Script { at: Location, message: String },

    #[error("{at}: {source}")]
    Command { at: Location, source: EngineError },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Command {
                source: EngineError::Inexplicable { .. },
                ..
            } => 1,
            _ => 2,
        }
    }
}

/// Reads and validates a library, pointing errors at the offending line
/// where one can be found.
pub fn load_library(path: &Path) -> Result<PlanLibrary, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    PlanLibrary::from_json(&text).map_err(|source| {
        let mut at = Location::file(path);
        match &source {
            LibraryError::Syntax { line, column, .. } => {
                at.line = Some(*line);
                at.column = Some(*column);
            }
            other => {
                let nth = usize::from(matches!(
                    other,
                    LibraryError::DuplicateTask(_) | LibraryError::DuplicateContext(_)
                ));
                at.line = other
                    .subject()
                    .and_then(|name| declaration_line(&text, name, nth));
            }
        }
        CliError::Library { at, source }
    })
}

/// Line of the `nth` (0-based) record whose `name` field is `name`.
fn declaration_line(text: &str, name: &str, nth: usize) -> Option<usize> {
    let quoted = format!("\"{name}\"");
    let declares = |line: &str| {
        line.split("\"name\"").skip(1).any(|rest| {
            rest.trim_start()
                .strip_prefix(':')
                .is_some_and(|v| v.trim_start().starts_with(&quoted))
        })
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| declares(l))
        .nth(nth)
        .map(|(i, _)| i + 1)
}

fn write_sidecar(path: &Path, records: &[Record]) -> Result<(), CliError> {
    let io_err = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut body = String::new();
    for r in records {
        body.push_str(&serde_json::to_string(r).expect("records serialize"));
        body.push('\n');
    }
    std::fs::write(path, body).map_err(io_err)
}

/// Runs the tool and returns its exit code. Query output goes to `out`,
/// diagnostics to `err`; interactive commands are read from `input`.
pub fn run(args: &Args, input: impl BufRead, out: &mut impl Write, err: &mut impl Write) -> i32 {
    match run_inner(args, input, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn run_inner(
    args: &Args,
    input: impl BufRead,
    out: &mut impl Write,
    err: &mut impl Write,
) -> Result<(), CliError> {
    let lib = load_library(&args.library)?;
    let mut session = Session::new(&lib, args.options()).map_err(|source| CliError::Command {
        at: Location::file(&args.library),
        source,
    })?;

    let result = match &args.script {
        Some(path) => replay(path, &mut session, out),
        None => interact(input, &mut session, out, err),
    };
    if let Some(path) = &args.out {
        write_sidecar(path, session.records())?;
    }
    result
}

fn emit(out: &mut impl Write, text: &str) -> Result<(), CliError> {
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|source| CliError::Io {
            path: "<stdout>".into(),
            source,
        })
}

fn replay(path: &Path, session: &mut Session, out: &mut impl Write) -> Result<(), CliError> {
    let source = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let script = Script::parse(&source).map_err(|e| CliError::Script {
        at: Location::line(path, e.line),
        message: e.message,
    })?;
    for (line, command) in &script.commands {
        let text = session
            .execute(command)
            .map_err(|source| CliError::Command {
                at: Location::line(path, *line),
                source,
            })?;
        emit(out, &text)?;
    }
    Ok(())
}

/// Reads commands until end of input or `quit`. Errors are reported and the
/// loop carries on with the belief state unchanged.
fn interact(
    input: impl BufRead,
    session: &mut Session,
    out: &mut impl Write,
    err: &mut impl Write,
) -> Result<(), CliError> {
    let prompt = io::stdin().is_terminal();
    let stdin = Path::new("<stdin>");
    let mut seen_event = false;
    let mut lines = input.lines().enumerate();
    loop {
        if prompt {
            let _ = write!(err, "> ");
            let _ = err.flush();
        }
        let Some((i, text)) = lines.next() else {
            return Ok(());
        };
        let text = text.map_err(|source| CliError::Io {
            path: "<stdin>".into(),
            source,
        })?;
        let line = i + 1;
        if matches!(text.trim(), "quit" | "exit") {
            return Ok(());
        }
        let command = match parse_line(&text) {
            Ok(Some(c)) => c,
            Ok(None) => continue,
            Err(message) => {
                let _ = writeln!(err, "error: {}: {message}", Location::line(stdin, line));
                continue;
            }
        };
        if seen_event && matches!(command, Command::Context { .. }) {
            let _ = writeln!(
                err,
                "error: {}: context facts must precede the first event",
                Location::line(stdin, line)
            );
            continue;
        }
        match session.execute(&command) {
            Ok(text) => {
                seen_event |= command.is_event();
                emit(out, &text)?;
            }
            Err(e) => {
                let _ = writeln!(err, "error: {}: {e}", Location::line(stdin, line));
            }
        }
    }
}
