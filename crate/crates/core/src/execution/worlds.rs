use std::collections::{BTreeMap, BTreeSet};

use super::{active_tasks, World};
use crate::library::{ContextId, PlanLibrary, TaskId, TaskKind};

/// Product of the context probabilities, the adoption (or non-adoption)
/// probability of every intendable task, and the selection probability of
/// every chosen expansion.
pub fn world_prior(lib: &PlanLibrary, world: &World) -> f64 {
    let mut prior = 1.0;
    for (var, &value) in lib.context().iter().zip(&world.context) {
        prior *= if value { var.prior } else { 1.0 - var.prior };
    }
    for &task in lib.intendable() {
        let p = lib
            .task(task)
            .adoption
            .as_ref()
            .and_then(|a| a.probability(&world.context))
            .unwrap_or(0.0);
        prior *= if world.intended.contains(&task) {
            p
        } else {
            1.0 - p
        };
    }
    for (&goal, &method) in &world.expansion {
        prior *= lib
            .task(goal)
            .methods
            .iter()
            .find(|c| c.method == method)
            .map_or(0.0, |c| c.probability);
    }
    prior
}

/// Every world consistent with `pinned`, with zero-prior worlds dropped.
///
/// Expansions are only enumerated for active goals, so the method choices of
/// inactive goals are marginalized out. Without pinning the priors sum to 1.
pub fn enumerate_worlds(lib: &PlanLibrary, pinned: &[(ContextId, bool)]) -> Vec<World> {
    let n_context = lib.context().len();
    let intendable = lib.intendable();
    let mut out = Vec::new();

    for ctx_bits in 0..(1u64 << n_context) {
        let context: Vec<bool> = (0..n_context).map(|i| ctx_bits >> i & 1 == 1).collect();
        if pinned
            .iter()
            .any(|&(var, value)| context[var.index()] != value)
        {
            continue;
        }
        for intent_bits in 0..(1u64 << intendable.len()) {
            let intended: BTreeSet<TaskId> = intendable
                .iter()
                .enumerate()
                .filter(|(i, _)| intent_bits >> i & 1 == 1)
                .map(|(_, &t)| t)
                .collect();
            let base = World {
                context: context.clone(),
                intended,
                expansion: BTreeMap::new(),
                prior: 0.0,
            };
            if world_prior(lib, &base) <= 0.0 {
                continue;
            }
            expand(lib, base, &mut out);
        }
    }
    out
}

fn expand(lib: &PlanLibrary, world: World, out: &mut Vec<World>) {
    let active = active_tasks(lib, &world.intended, &world.expansion);
    let open_goal = active
        .iter()
        .copied()
        .find(|&t| lib.task(t).kind == TaskKind::Goal && !world.expansion.contains_key(&t));
    match open_goal {
        None => {
            let prior = world_prior(lib, &world);
            if prior > 0.0 {
                out.push(World { prior, ..world });
            }
        }
        Some(goal) => {
            for choice in &lib.task(goal).methods {
                if choice.probability <= 0.0 {
                    continue;
                }
                let mut next = world.clone();
                next.expansion.insert(goal, choice.method);
                expand(lib, next, out);
            }
        }
    }
}
