//! Executes commands against one belief state and renders query blocks.

use std::fmt::Write as _;

use planrec::{
    mc_estimate_many, BeliefState, EngineError, McError, McEstimate, McQuery, Observation,
    PlanLibrary,
};
use serde::Serialize;

use crate::script::Command;

/// Standard errors allowed between the exact value and the oracle estimate.
pub const MC_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Options {
    /// Cross-check each query with this many Monte-Carlo samples.
    pub mc_check: Option<usize>,
    pub seed: u64,
    /// Explanations shown by `query explain` without a count.
    pub top_k: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            mc_check: None,
            seed: 0,
            top_k: 5,
        }
    }
}

/// One sidecar record per reported value, at full precision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub query: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pass: Option<bool>,
}

struct Row {
    label: String,
    value: f64,
    oracle: Option<McQuery>,
}

pub struct Session<'lib> {
    lib: &'lib PlanLibrary,
    belief: BeliefState<'lib>,
    observations: Vec<Observation>,
    history: Vec<String>,
    options: Options,
    records: Vec<Record>,
}

impl<'lib> Session<'lib> {
    pub fn new(lib: &'lib PlanLibrary, options: Options) -> Result<Self, EngineError> {
        Ok(Session {
            lib,
            belief: BeliefState::init(lib, &[])?,
            observations: Vec::new(),
            history: Vec::new(),
            options,
            records: Vec::new(),
        })
    }

    pub fn belief(&self) -> &BeliefState<'lib> {
        &self.belief
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// Runs one command and returns the text it prints. A failed command
    /// leaves the session unchanged.
    pub fn execute(&mut self, command: &Command) -> Result<String, EngineError> {
        match command {
            Command::Context { variable, value } => {
                let obs = Observation::context(variable.as_str(), *value);
                self.belief = self.belief.observe(&obs)?;
                self.observations.push(obs);
                self.history.push(format!("{variable}={value}"));
                Ok(format!("t=0  context {variable}={value}\n"))
            }
            Command::Obs(action) => {
                let obs = Observation::agent(action.as_str());
                self.belief = self.belief.observe(&obs)?;
                self.observations.push(obs);
                let t = self.belief.time();
                self.history.push(format!("{action}@{t}"));
                Ok(format!("t={t}  obs {action}\n"))
            }
            Command::Intervene(action) => {
                let obs = Observation::intervention(action.as_str());
                self.belief = self.belief.observe(&obs)?;
                self.observations.push(obs);
                let t = self.belief.time();
                let echo = format!("I({action}@{t})");
                let out = format!("t={t}  intervene {echo}\n");
                self.history.push(echo);
                Ok(out)
            }
            Command::QueryIntend(tasks) => {
                let rows = tasks
                    .iter()
                    .map(|task| {
                        Ok(Row {
                            label: format!("intend({task})"),
                            value: self.belief.posterior_intend(task)?,
                            oracle: Some(McQuery::Intend(task.clone())),
                        })
                    })
                    .collect::<Result<Vec<_>, EngineError>>()?;
                Ok(self.block(&format!("intend {}", tasks.join(" ")), rows))
            }
            Command::QueryNext => {
                let next = self.belief.predict_next();
                let mut rows: Vec<Row> = next
                    .ranked(self.lib)
                    .into_iter()
                    .map(|(action, p)| Row {
                        label: format!("next({action})"),
                        value: p,
                        oracle: Some(McQuery::Next(Some(action.to_string()))),
                    })
                    .collect();
                rows.push(Row {
                    label: "next(none)".into(),
                    value: next.none,
                    oracle: Some(McQuery::Next(None)),
                });
                Ok(self.block("next", rows))
            }
            Command::QueryExpansion(goal) => {
                let post = self.belief.posterior_expansion(goal)?;
                let mut rows: Vec<Row> = post
                    .methods
                    .iter()
                    .map(|&(m, p)| {
                        let method = self.lib.name(m);
                        Row {
                            label: format!("expansion({goal}->{method})"),
                            value: p,
                            oracle: Some(McQuery::Expansion {
                                goal: goal.clone(),
                                method: Some(method.to_string()),
                            }),
                        }
                    })
                    .collect();
                rows.push(Row {
                    label: format!("expansion({goal}->inactive)"),
                    value: post.inactive,
                    oracle: Some(McQuery::Expansion {
                        goal: goal.clone(),
                        method: None,
                    }),
                });
                Ok(self.block(&format!("expansion {goal}"), rows))
            }
            Command::QueryExplain(k) => {
                let k = k.unwrap_or(self.options.top_k);
                let rows = self
                    .belief
                    .explanations(k)
                    .iter()
                    .map(|e| Row {
                        label: e.display(self.lib).to_string(),
                        value: e.posterior,
                        oracle: None,
                    })
                    .collect();
                Ok(self.block(&format!("explain {k}"), rows))
            }
        }
    }

    fn block(&mut self, title: &str, rows: Vec<Row>) -> String {
        let estimates = self.cross_check(&rows);
        let width = rows.iter().map(|r| r.label.len()).max().unwrap_or(0);
        let given = if self.history.is_empty() {
            String::new()
        } else {
            format!(" | {}", self.history.join(", "))
        };

        let mut out = format!("t={}  query {title}\n", self.belief.time());
        for (row, est) in rows.iter().zip(estimates) {
            let mut record = Record {
                query: format!("{}{given}", row.label),
                value: row.value,
                mc_value: None,
                mc_stderr: None,
                pass: None,
            };
            let _ = write!(out, "  {:<width$}  {:.4}", row.label, row.value);
            match est {
                Some(Ok(est)) => {
                    let pass = est.agrees_with(row.value, MC_SIGMAS);
                    let _ = write!(
                        out,
                        "  mc={:.4} ± {:.4}  {}",
                        est.estimate,
                        est.stderr,
                        if pass { "pass" } else { "FAIL" }
                    );
                    record.mc_value = Some(est.estimate);
                    record.mc_stderr = Some(est.stderr);
                    record.pass = Some(pass);
                }
                Some(Err(e)) => {
                    let _ = write!(out, "  mc: {e}");
                }
                None => {}
            }
            out.push('\n');
            self.records.push(record);
        }
        out.push('\n');
        out
    }

    fn cross_check(&self, rows: &[Row]) -> Vec<Option<Result<McEstimate, McError>>> {
        let Some(n) = self.options.mc_check else {
            return rows.iter().map(|_| None).collect();
        };
        let queries: Vec<McQuery> = rows.iter().filter_map(|r| r.oracle.clone()).collect();
        if queries.is_empty() {
            return rows.iter().map(|_| None).collect();
        }
        let mut estimates =
            match mc_estimate_many(self.lib, &self.observations, &queries, n, self.options.seed) {
                Ok(v) => v.into_iter().map(Ok).collect::<Vec<_>>(),
                Err(e) => vec![Err(e); queries.len()],
            }
            .into_iter();
        rows.iter()
            .map(|r| r.oracle.as_ref().and_then(|_| estimates.next()))
            .collect()
    }
}
