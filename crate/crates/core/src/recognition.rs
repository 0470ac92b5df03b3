//! Exact recognition: a Bayesian filter over the enumerated worlds.
//!
//! Every world with positive prior becomes one particle carrying its replayed
//! [`ExecutionState`]. Observing an agent action multiplies each weight by the
//! probability of picking that action from the particle's pending set; worlds
//! that cannot produce it die. Observing an intervention advances every
//! state but leaves the weights untouched, since the clamped action carries
//! no evidence about intent.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::EngineError;
use crate::execution::{
    enumerate_worlds, pick_probability, progress, step_likelihood, Event, EventKind,
    ExecutionState, World,
};
use crate::library::{ContextId, PlanLibrary, TaskId, TaskKind};

/// One entry of an observation stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Observation {
    /// The agent performed the action.
    Agent(String),
    /// The recognizing system performed the action on the agent's behalf.
    Intervention(String),
    /// A context variable was observed. Only legal before the first action.
    Context { variable: String, value: bool },
}

impl Observation {
    pub fn agent(action: impl Into<String>) -> Self {
        Observation::Agent(action.into())
    }

    pub fn intervention(action: impl Into<String>) -> Self {
        Observation::Intervention(action.into())
    }

    pub fn context(variable: impl Into<String>, value: bool) -> Self {
        Observation::Context {
            variable: variable.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub world: World,
    pub state: ExecutionState,
    pub weight: f64,
}

/// Posterior over worlds given the observations so far.
#[derive(Debug, Clone)]
pub struct BeliefState<'lib> {
    lib: &'lib PlanLibrary,
    particles: Vec<Particle>,
    log_evidence: f64,
    time: u32,
}

fn resolve_facts(
    lib: &PlanLibrary,
    facts: &[(&str, bool)],
) -> Result<Vec<(ContextId, bool)>, EngineError> {
    facts
        .iter()
        .map(|&(name, value)| {
            lib.context_id(name)
                .map(|id| (id, value))
                .ok_or_else(|| EngineError::UnknownContext(name.to_string()))
        })
        .collect()
}

impl<'lib> BeliefState<'lib> {
    /// One particle per world consistent with the context facts, weighted by
    /// its prior.
    pub fn init(
        lib: &'lib PlanLibrary,
        context_facts: &[(&str, bool)],
    ) -> Result<Self, EngineError> {
        let pinned = resolve_facts(lib, context_facts)?;
        let worlds = enumerate_worlds(lib, &pinned);
        let mass: f64 = worlds.iter().map(|w| w.prior).sum();
        if worlds.is_empty() || mass <= 0.0 {
            return Err(EngineError::EmptyBelief);
        }
        let particles = worlds
            .into_iter()
            .map(|world| Particle {
                state: ExecutionState::initial(lib, &world),
                weight: world.prior / mass,
                world,
            })
            .collect();
        Ok(BeliefState {
            lib,
            particles,
            log_evidence: mass.ln(),
            time: 0,
        })
    }

    pub fn library(&self) -> &'lib PlanLibrary {
        self.lib
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// Number of actions and interventions observed so far.
    pub fn time(&self) -> u32 {
        self.time
    }

    /// Log of the unnormalized probability of everything observed so far,
    /// context facts included.
    pub fn log_evidence(&self) -> f64 {
        self.log_evidence
    }

    pub fn observe(&self, observation: &Observation) -> Result<Self, EngineError> {
        match observation {
            Observation::Agent(name) => {
                let action = self.lib.resolve_primitive(name)?;
                self.apply(Event::agent(action, self.time + 1))
            }
            Observation::Intervention(name) => {
                let action = self.lib.resolve_primitive(name)?;
                self.apply(Event::intervention(action, self.time + 1))
            }
            Observation::Context { variable, value } => {
                if self.time > 0 {
                    return Err(EngineError::ContextAfterEvents(self.time));
                }
                let var = self
                    .lib
                    .context_id(variable)
                    .ok_or_else(|| EngineError::UnknownContext(variable.clone()))?;
                let kept: Vec<Particle> = self
                    .particles
                    .iter()
                    .filter(|p| p.world.context[var.index()] == *value)
                    .cloned()
                    .collect();
                let mass: f64 = kept.iter().map(|p| p.weight).sum();
                if kept.is_empty() || mass <= 0.0 {
                    return Err(EngineError::EmptyBelief);
                }
                Ok(self.renormalized(kept, mass, self.time))
            }
        }
    }

    /// Applies an already-resolved event.
    pub fn apply(&self, event: Event) -> Result<Self, EngineError> {
        let mut next = Vec::with_capacity(self.particles.len());
        for p in &self.particles {
            let likelihood = step_likelihood(self.lib, &p.state, &event);
            if likelihood <= 0.0 {
                continue;
            }
            next.push(Particle {
                world: p.world.clone(),
                state: progress(self.lib, &p.world, &p.state, &event)?,
                weight: p.weight * likelihood,
            });
        }

        if event.kind == EventKind::Intervention {
            return Ok(BeliefState {
                lib: self.lib,
                particles: next,
                log_evidence: self.log_evidence,
                time: event.time,
            });
        }

        let mass: f64 = next.iter().map(|p| p.weight).sum();
        if next.is_empty() || mass <= 0.0 {
            return Err(EngineError::Inexplicable {
                action: self.lib.name(event.action).to_string(),
                time: event.time,
                surviving: self.particles.len(),
                summary: self.summary(3),
            });
        }
        Ok(self.renormalized(next, mass, event.time))
    }

    fn renormalized(&self, mut particles: Vec<Particle>, mass: f64, time: u32) -> Self {
        for p in &mut particles {
            p.weight /= mass;
        }
        BeliefState {
            lib: self.lib,
            particles,
            log_evidence: self.log_evidence + mass.ln(),
            time,
        }
    }

    fn summary(&self, n: usize) -> String {
        let top = self.explanations(n);
        let parts: Vec<String> = top
            .iter()
            .map(|e| {
                format!(
                    "{{{}}}: {:.4}",
                    e.intended_names(self.lib).join(", "),
                    e.posterior
                )
            })
            .collect();
        parts.join("; ")
    }

    /// Posterior probability that `task` is intended for its own sake.
    pub fn posterior_intend(&self, task: &str) -> Result<f64, EngineError> {
        let id = self.lib.resolve(task)?;
        if !self.lib.task(id).intendable {
            return Err(EngineError::NotIntendable(task.to_string()));
        }
        Ok(self
            .particles
            .iter()
            .filter(|p| p.world.intended.contains(&id))
            .map(|p| p.weight)
            .sum())
    }

    /// Distribution of the agent's next action, including the possibility
    /// that it has nothing pending.
    pub fn predict_next(&self) -> NextActionDistribution {
        let mut actions = BTreeMap::new();
        let mut none = 0.0;
        for p in &self.particles {
            if p.state.pending.is_empty() {
                none += p.weight;
                continue;
            }
            for &a in &p.state.pending {
                *actions.entry(a).or_insert(0.0) +=
                    p.weight * pick_probability(self.lib, &p.state.pending, a);
            }
        }
        NextActionDistribution { actions, none }
    }

    pub fn posterior_expansion(&self, goal: &str) -> Result<ExpansionPosterior, EngineError> {
        let id = self.lib.resolve(goal)?;
        let node = self.lib.task(id);
        if node.kind != TaskKind::Goal {
            return Err(EngineError::NotAGoal(goal.to_string()));
        }
        let mut methods: Vec<(TaskId, f64)> =
            node.methods.iter().map(|c| (c.method, 0.0)).collect();
        let mut inactive = 0.0;
        for p in &self.particles {
            match p.world.expansion.get(&id) {
                Some(m) => {
                    if let Some(slot) = methods.iter_mut().find(|(x, _)| x == m) {
                        slot.1 += p.weight;
                    }
                }
                None => inactive += p.weight,
            }
        }
        Ok(ExpansionPosterior {
            goal: id,
            methods,
            inactive,
        })
    }

    /// Distinct (intended set, expansion) hypotheses ranked by posterior.
    /// Worlds differing only in context are merged. Ties are broken by the
    /// sorted names of the intended set, then of the expansion.
    pub fn explanations(&self, top_k: usize) -> Vec<Explanation> {
        let mut groups: BTreeMap<(BTreeSet<TaskId>, BTreeMap<TaskId, TaskId>), f64> =
            BTreeMap::new();
        for p in &self.particles {
            *groups
                .entry((p.world.intended.clone(), p.world.expansion.clone()))
                .or_insert(0.0) += p.weight;
        }
        let lib = self.lib;
        let mut ranked: Vec<Explanation> = groups
            .into_iter()
            .map(|((intended, expansion), posterior)| Explanation {
                intended,
                expansion,
                posterior,
            })
            .collect();
        let key = |e: &Explanation| {
            let intended: Vec<String> = e
                .intended_names(lib)
                .into_iter()
                .map(String::from)
                .collect();
            let expansion: Vec<(String, String)> = e
                .expansion
                .iter()
                .map(|(&g, &m)| (lib.name(g).to_string(), lib.name(m).to_string()))
                .collect();
            (intended, expansion)
        };
        ranked.sort_by_cached_key(key);
        // Posteriors reached through different products can differ in the last
        // bits; rank on a 1e-12 grid so such ties stay in name order.
        ranked.sort_by(
            |a, b| match quantize(b.posterior).cmp(&quantize(a.posterior)) {
                Ordering::Equal => Ordering::Equal,
                other => other,
            },
        );
        ranked.truncate(top_k);
        ranked
    }
}

fn quantize(p: f64) -> i64 {
    (p * 1e12).round() as i64
}

/// Probability that the first event is `action`, under the prior restricted
/// to the context facts.
pub fn prior_predict(
    lib: &PlanLibrary,
    context_facts: &[(&str, bool)],
    action: &str,
) -> Result<f64, EngineError> {
    let id = lib.resolve_primitive(action)?;
    Ok(BeliefState::init(lib, context_facts)?
        .predict_next()
        .probability(id))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NextActionDistribution {
    pub actions: BTreeMap<TaskId, f64>,
    /// Mass of worlds with nothing pending.
    pub none: f64,
}

impl NextActionDistribution {
    pub fn probability(&self, action: TaskId) -> f64 {
        self.actions.get(&action).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.actions.values().sum::<f64>() + self.none
    }

    /// Entries by descending probability, then by name.
    pub fn ranked<'a>(&self, lib: &'a PlanLibrary) -> Vec<(&'a str, f64)> {
        let mut v: Vec<(&str, f64)> = self
            .actions
            .iter()
            .map(|(&a, &p)| (lib.name(a), p))
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionPosterior {
    pub goal: TaskId,
    /// Mass per method, in declaration order.
    pub methods: Vec<(TaskId, f64)>,
    pub inactive: f64,
}

impl ExpansionPosterior {
    pub fn method(&self, method: TaskId) -> f64 {
        self.methods
            .iter()
            .find(|(m, _)| *m == method)
            .map_or(0.0, |(_, p)| *p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub intended: BTreeSet<TaskId>,
    pub expansion: BTreeMap<TaskId, TaskId>,
    pub posterior: f64,
}

impl Explanation {
    pub fn intended_names<'a>(&self, lib: &'a PlanLibrary) -> Vec<&'a str> {
        lib.names(self.intended.iter().copied())
    }

    /// `{p, q} [p->mp, q->mq]`
    pub fn display<'a>(&'a self, lib: &'a PlanLibrary) -> impl fmt::Display + 'a {
        struct D<'a>(&'a Explanation, &'a PlanLibrary);
        impl fmt::Display for D<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let D(e, lib) = *self;
                let mut exp: Vec<String> = e
                    .expansion
                    .iter()
                    .map(|(&g, &m)| format!("{}->{}", lib.name(g), lib.name(m)))
                    .collect();
                exp.sort();
                write!(
                    f,
                    "{{{}}} [{}]",
                    e.intended_names(lib).join(", "),
                    exp.join(", ")
                )
            }
        }
        D(self, lib)
    }
}
