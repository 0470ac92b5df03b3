//! Brute-force reference semantics used to check the exact engine.
//!
//! Deliberately written differently from the engine: worlds carry a method
//! choice for *every* goal (inactive ones included, so their choice is summed
//! out rather than skipped), enabledness is a forward fixpoint pushed from
//! enabled parents down to their children, and posteriors come from summing
//! over complete pick sequences rather than from a step-by-step filter.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use planrec::{sample_trace, Adoption, PlanLibrary, TaskId, TaskKind, TraceStep, World};

#[derive(Debug, Clone)]
pub struct OracleWorld {
    pub context: Vec<bool>,
    pub intended: BTreeSet<TaskId>,
    /// A method for every goal in the library.
    pub choice: BTreeMap<TaskId, TaskId>,
    pub prior: f64,
}

fn adoption(a: &Adoption, ctx: &[bool]) -> f64 {
    match a {
        Adoption::Prior(p) => *p,
        Adoption::Conditional { rows, .. } => rows
            .iter()
            .find(|r| r.when.iter().all(|&(v, b)| ctx[v.index()] == b))
            .map(|r| r.probability)
            .unwrap(),
    }
}

pub fn all_worlds(lib: &PlanLibrary, pinned: &[(&str, bool)]) -> Vec<OracleWorld> {
    let n_ctx = lib.context().len();
    let intendable: Vec<TaskId> = lib
        .tasks()
        .filter(|(_, t)| t.intendable)
        .map(|(id, _)| id)
        .collect();
    let goals: Vec<TaskId> = lib
        .tasks()
        .filter(|(_, t)| t.kind == TaskKind::Goal)
        .map(|(id, _)| id)
        .collect();

    // Cartesian product of method choices over all goals.
    let mut choices: Vec<(BTreeMap<TaskId, TaskId>, f64)> = vec![(BTreeMap::new(), 1.0)];
    for &g in &goals {
        let mut next = Vec::new();
        for (partial, p) in &choices {
            for c in &lib.task(g).methods {
                let mut m = partial.clone();
                m.insert(g, c.method);
                next.push((m, p * c.probability));
            }
        }
        choices = next;
    }

    let mut out = Vec::new();
    for bits in 0..(1u32 << n_ctx) {
        let context: Vec<bool> = (0..n_ctx).map(|i| bits & (1 << i) != 0).collect();
        let consistent = pinned.iter().all(|&(name, value)| {
            let idx = lib.context().iter().position(|v| v.name == name).unwrap();
            context[idx] == value
        });
        if !consistent {
            continue;
        }
        let ctx_p: f64 = lib
            .context()
            .iter()
            .zip(&context)
            .map(|(v, &b)| if b { v.prior } else { 1.0 - v.prior })
            .product();
        for ibits in 0..(1u32 << intendable.len()) {
            let mut p = ctx_p;
            let mut intended = BTreeSet::new();
            for (i, &t) in intendable.iter().enumerate() {
                let a = adoption(lib.task(t).adoption.as_ref().unwrap(), &context);
                if ibits & (1 << i) != 0 {
                    intended.insert(t);
                    p *= a;
                } else {
                    p *= 1.0 - a;
                }
            }
            for (choice, cp) in &choices {
                let prior = p * cp;
                if prior > 0.0 {
                    out.push(OracleWorld {
                        context: context.clone(),
                        intended: intended.clone(),
                        choice: choice.clone(),
                        prior,
                    });
                }
            }
        }
    }
    out
}

fn done_composite(
    lib: &PlanLibrary,
    w: &OracleWorld,
    enabled: &BTreeSet<TaskId>,
    done: &BTreeSet<TaskId>,
    t: TaskId,
) -> bool {
    let node = lib.task(t);
    match node.kind {
        TaskKind::Primitive => done.contains(&t),
        TaskKind::Method => node
            .steps
            .iter()
            .all(|&s| done_composite(lib, w, enabled, done, s)),
        TaskKind::Goal => {
            enabled.contains(&t) && done_composite(lib, w, enabled, done, w.choice[&t])
        }
    }
}

/// Least fixpoint of the enabling rules, grown forward from the intended set.
pub fn enabled_set(
    lib: &PlanLibrary,
    w: &OracleWorld,
    done: &BTreeSet<TaskId>,
) -> BTreeSet<TaskId> {
    let mut enabled = w.intended.clone();
    loop {
        let mut grown = enabled.clone();
        for &t in &enabled {
            let node = lib.task(t);
            match node.kind {
                TaskKind::Goal => {
                    grown.insert(w.choice[&t]);
                }
                TaskKind::Method => {
                    for &s in &node.steps {
                        let ready = node
                            .precedence
                            .iter()
                            .filter(|&&(_, after)| after == s)
                            .all(|&(before, _)| done_composite(lib, w, &enabled, done, before));
                        if ready {
                            grown.insert(s);
                        }
                    }
                }
                TaskKind::Primitive => {}
            }
        }
        if grown == enabled {
            return enabled;
        }
        enabled = grown;
    }
}

pub fn pending(lib: &PlanLibrary, w: &OracleWorld, done: &BTreeSet<TaskId>) -> Vec<TaskId> {
    enabled_set(lib, w, done)
        .into_iter()
        .filter(|&t| lib.task(t).kind == TaskKind::Primitive && !done.contains(&t))
        .collect()
}

/// One step of a scripted episode: either the agent picks freely or the
/// system performs a fixed action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Agent,
    Intervene(TaskId),
}

/// Step outcome in an enumerated sequence. `None` is the idle marker.
pub type Step = Option<TaskId>;

#[derive(Debug, Clone)]
pub struct Sequence {
    pub world: usize,
    pub steps: Vec<Step>,
    pub prob: f64,
}

/// Every (world, pick sequence) with its joint probability.
pub fn all_sequences(lib: &PlanLibrary, worlds: &[OracleWorld], slots: &[Slot]) -> Vec<Sequence> {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        lib: &PlanLibrary,
        w: &OracleWorld,
        wi: usize,
        slots: &[Slot],
        done: &mut BTreeSet<TaskId>,
        steps: &mut Vec<Step>,
        prob: f64,
        out: &mut Vec<Sequence>,
    ) {
        let Some((slot, rest)) = slots.split_first() else {
            out.push(Sequence {
                world: wi,
                steps: steps.clone(),
                prob,
            });
            return;
        };
        match *slot {
            Slot::Intervene(a) => {
                let fresh = done.insert(a);
                steps.push(Some(a));
                rec(lib, w, wi, rest, done, steps, prob, out);
                steps.pop();
                if fresh {
                    done.remove(&a);
                }
            }
            Slot::Agent => {
                let pend = pending(lib, w, done);
                if pend.is_empty() {
                    steps.push(None);
                    rec(lib, w, wi, rest, done, steps, prob, out);
                    steps.pop();
                    return;
                }
                let total: f64 = pend.iter().map(|&a| lib.task(a).pick_weight).sum();
                for a in pend {
                    done.insert(a);
                    steps.push(Some(a));
                    let p = prob * lib.task(a).pick_weight / total;
                    rec(lib, w, wi, rest, done, steps, p, out);
                    steps.pop();
                    done.remove(&a);
                }
            }
        }
    }
    let mut out = Vec::new();
    for (wi, w) in worlds.iter().enumerate() {
        rec(
            lib,
            w,
            wi,
            slots,
            &mut BTreeSet::new(),
            &mut Vec::new(),
            w.prior,
            &mut out,
        );
    }
    out
}

/// Exact answers for one observation prefix, computed by summation.
pub struct BruteForce {
    pub intend: BTreeMap<TaskId, f64>,
    pub next: BTreeMap<Step, f64>,
    pub expansion: BTreeMap<(TaskId, Option<TaskId>), f64>,
    pub evidence: f64,
}

/// Conditions on `prefix` (the observed first steps under `slots`), and reads
/// intentions, expansions and the distribution of the following agent step.
/// `slots` must be one longer than `prefix` and end with `Slot::Agent`.
pub fn brute_force(
    lib: &PlanLibrary,
    pinned: &[(&str, bool)],
    slots: &[Slot],
    prefix: &[TaskId],
) -> BruteForce {
    assert_eq!(slots.len(), prefix.len() + 1);
    let worlds = all_worlds(lib, pinned);
    let seqs = all_sequences(lib, &worlds, slots);
    let matching: Vec<&Sequence> = seqs
        .iter()
        .filter(|s| {
            s.steps[..prefix.len()]
                .iter()
                .zip(prefix)
                .all(|(step, &want)| *step == Some(want))
        })
        .collect();
    let z: f64 = matching.iter().map(|s| s.prob).sum();

    let mut intend = BTreeMap::new();
    for (id, t) in lib.tasks() {
        if t.intendable {
            let mass: f64 = matching
                .iter()
                .filter(|s| worlds[s.world].intended.contains(&id))
                .map(|s| s.prob)
                .sum();
            intend.insert(id, mass / z);
        }
    }
    let mut next = BTreeMap::new();
    for s in &matching {
        *next.entry(s.steps[prefix.len()]).or_insert(0.0) += s.prob / z;
    }
    let mut expansion = BTreeMap::new();
    for goal in lib.goals() {
        for s in &matching {
            let w = &worlds[s.world];
            let active = goal_active(lib, w, goal);
            let key = (goal, active.then(|| w.choice[&goal]));
            *expansion.entry(key).or_insert(0.0) += s.prob / z;
        }
    }
    BruteForce {
        intend,
        next,
        expansion,
        evidence: z,
    }
}

/// Goal reachable from the intended set through chosen methods and steps.
pub fn goal_active(lib: &PlanLibrary, w: &OracleWorld, goal: TaskId) -> bool {
    let mut seen = BTreeSet::new();
    let mut stack: Vec<TaskId> = w.intended.iter().copied().collect();
    while let Some(t) = stack.pop() {
        if !seen.insert(t) {
            continue;
        }
        let node = lib.task(t);
        match node.kind {
            TaskKind::Goal => stack.push(w.choice[&t]),
            TaskKind::Method => stack.extend(node.steps.iter().copied()),
            TaskKind::Primitive => {}
        }
    }
    seen.contains(&goal)
}

/// Every agent-only observation prefix of length `len` with positive
/// probability.
pub fn reachable_prefixes(lib: &PlanLibrary, len: usize) -> Vec<Vec<TaskId>> {
    let worlds = all_worlds(lib, &[]);
    let seqs = all_sequences(lib, &worlds, &vec![Slot::Agent; len]);
    let mut set = BTreeSet::new();
    for s in seqs {
        if s.steps.iter().all(Option::is_some) {
            set.insert(s.steps.into_iter().map(Option::unwrap).collect::<Vec<_>>());
        }
    }
    set.into_iter().collect()
}

/// Largest absolute difference between the incremental filter and the
/// brute-force sums for one scripted prefix. Compares intentions, next-action
/// predictions (idle included) and expansion posteriors.
pub fn filter_vs_brute_force(
    lib: &PlanLibrary,
    pinned: &[(&str, bool)],
    slots: &[Slot],
    prefix: &[TaskId],
) -> f64 {
    use planrec::{BeliefState, Event};

    let expected = brute_force(lib, pinned, slots, prefix);
    let mut belief = BeliefState::init(lib, pinned).unwrap();
    for (i, (&slot, &action)) in slots.iter().zip(prefix).enumerate() {
        let t = i as u32 + 1;
        let event = match slot {
            Slot::Agent => Event::agent(action, t),
            Slot::Intervene(a) => {
                assert_eq!(a, action);
                Event::intervention(a, t)
            }
        };
        belief = belief.apply(event).unwrap();
    }

    let mut worst: f64 = 0.0;
    for (&task, &p) in &expected.intend {
        let got = belief.posterior_intend(lib.name(task)).unwrap();
        worst = worst.max((got - p).abs());
    }
    let next = belief.predict_next();
    for leaf in lib.leaves() {
        let p = expected.next.get(&Some(*leaf)).copied().unwrap_or(0.0);
        worst = worst.max((next.probability(*leaf) - p).abs());
    }
    let idle = expected.next.get(&None).copied().unwrap_or(0.0);
    worst = worst.max((next.none - idle).abs());
    for goal in lib.goals() {
        let post = belief.posterior_expansion(lib.name(goal)).unwrap();
        let inactive = expected
            .expansion
            .get(&(goal, None))
            .copied()
            .unwrap_or(0.0);
        worst = worst.max((post.inactive - inactive).abs());
        for &(m, mass) in &post.methods {
            let p = expected
                .expansion
                .get(&(goal, Some(m)))
                .copied()
                .unwrap_or(0.0);
            worst = worst.max((mass - p).abs());
        }
        for c in &lib.task(goal).methods {
            let p = expected
                .expansion
                .get(&(goal, Some(c.method)))
                .copied()
                .unwrap_or(0.0);
            worst = worst.max((post.method(c.method) - p).abs());
        }
    }
    worst
}

/// Completion time of a task in a trace: methods finish with their last step,
/// goals with their chosen method.
pub fn finished_at(
    lib: &PlanLibrary,
    world: &World,
    times: &BTreeMap<TaskId, u32>,
    t: TaskId,
) -> Option<u32> {
    let node = lib.task(t);
    match node.kind {
        TaskKind::Primitive => times.get(&t).copied(),
        TaskKind::Method => node
            .steps
            .iter()
            .map(|&s| finished_at(lib, world, times, s))
            .try_fold(0, |acc, x| x.map(|x| acc.max(x))),
        TaskKind::Goal => world
            .expansion
            .get(&t)
            .and_then(|&m| finished_at(lib, world, times, m)),
    }
}

pub fn check_trace_properties(lib: &PlanLibrary, traces: u64, horizon: u32) {
    for seed in 0..traces {
        let (world, trace) = sample_trace(lib, horizon, &[], seed);
        let mut times = BTreeMap::new();
        for step in &trace.steps {
            if let TraceStep::Event(e) = step {
                assert!(
                    times.insert(e.action, e.time).is_none(),
                    "seed {seed}: {} repeated",
                    lib.name(e.action)
                );
            }
        }
        for method in world.active(lib) {
            let node = lib.task(method);
            if node.kind != TaskKind::Method {
                continue;
            }
            for &step in &node.steps {
                let Some(at) = finished_at(lib, &world, &times, step) else {
                    continue;
                };
                for &pred in node.step_predecessors(step).unwrap() {
                    let done = finished_at(lib, &world, &times, pred);
                    assert!(
                        done.is_some_and(|d| d < at),
                        "seed {seed}: {} before {} in {}",
                        lib.name(step),
                        lib.name(pred),
                        lib.name(method)
                    );
                }
            }
        }
    }
}
