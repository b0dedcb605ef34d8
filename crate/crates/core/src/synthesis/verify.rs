//! Independent verification of a controller against its control problem.
//!
//! This is a model checker, not a re-run of the synthesizer's bookkeeping:
//! it walks the explicit product of environment and controller, replays
//! fluents through the public update function, and checks the three
//! synthesis conditions: deadlock freedom, no blocking of uncontrollable
//! actions, and satisfaction of the specification on every reachable lasso
//! (by strongly-connected-component analysis).

use std::collections::{HashMap, VecDeque};

use crate::fltl::{Formula, SafetyRule, Valuation};
use crate::lts::{Lts, StateId};

use super::{ControlProblem, Controller};

/// One verified condition with an optional counterexample description.
#[derive(Clone, Debug)]
pub struct ConditionCheck {
    pub ok: bool,
    pub witness: Option<String>,
}

impl ConditionCheck {
    fn pass() -> Self {
        ConditionCheck { ok: true, witness: None }
    }

    fn fail(witness: String) -> Self {
        ConditionCheck { ok: false, witness: Some(witness) }
    }
}

/// Report over the three synthesis conditions.
#[derive(Clone, Debug)]
pub struct VerificationReport {
    /// (1) The closed system is deadlock free.
    pub deadlock_free: ConditionCheck,
    /// (2) The controller never blocks an enabled uncontrollable action.
    pub nonblocking: ConditionCheck,
    /// (3) Every reachable lasso satisfies safety and the GR(1) implication.
    pub satisfies_spec: ConditionCheck,
}

impl VerificationReport {
    pub fn all_ok(&self) -> bool {
        self.deadlock_free.ok && self.nonblocking.ok && self.satisfies_spec.ok
    }
}

impl std::fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let line = |f: &mut std::fmt::Formatter<'_>, name: &str, c: &ConditionCheck| {
            writeln!(
                f,
                "  [{}] {}{}",
                if c.ok { "PASS" } else { "FAIL" },
                name,
                c.witness.as_deref().map(|w| format!(": {w}")).unwrap_or_default()
            )
        };
        line(f, "deadlock freedom", &self.deadlock_free)?;
        line(f, "uncontrollable actions never blocked", &self.nonblocking)?;
        line(f, "specification holds on all runs", &self.satisfies_spec)
    }
}

/// Whether the controller lets `name` pass from state `cs`: `None` means
/// blocked, `Some(None)` unconstrained (label outside the controller's
/// alphabet), `Some(Some(t))` a synchronized move to `t`.
fn controller_allows(c: &Lts, cs: StateId, name: &str) -> Option<Option<StateId>> {
    match c.alphabet().id_of(name) {
        Some(l) => c.successor(cs, l).map(Some),
        None => Some(None),
    }
}

fn path_to(parents: &HashMap<usize, (usize, String)>, mut node: usize) -> String {
    let mut actions = Vec::new();
    while let Some((p, a)) = parents.get(&node) {
        actions.push(a.clone());
        node = *p;
    }
    actions.reverse();
    if actions.is_empty() {
        "at the initial state".to_string()
    } else {
        format!("after `{}`", actions.join(" "))
    }
}

/// Runs the three-condition check of a controller against its problem.
pub fn verify_controller(problem: &ControlProblem, controller: &Controller) -> VerificationReport {
    let env = &problem.environment;
    let ctl = &controller.lts;

    // ---- Conditions (1) and (2): plain product walk -----------------------
    let mut pair_index: HashMap<(StateId, StateId), usize> = HashMap::new();
    let mut pairs: Vec<(StateId, StateId)> = Vec::new();
    let mut parents: HashMap<usize, (usize, String)> = HashMap::new();
    let mut queue = VecDeque::new();
    pair_index.insert((env.initial(), ctl.initial()), 0);
    pairs.push((env.initial(), ctl.initial()));
    queue.push_back(0usize);

    let mut deadlock = ConditionCheck::pass();
    let mut nonblocking = ConditionCheck::pass();

    while let Some(id) = queue.pop_front() {
        let (es, cs) = pairs[id];
        let mut enabled = 0usize;
        for &(el, et) in env.transitions_from(es) {
            let label = env.alphabet().label(el);
            match controller_allows(ctl, cs, label.name()) {
                Some(target) => {
                    enabled += 1;
                    let next = (et, target.unwrap_or(cs));
                    let next_id = *pair_index.entry(next).or_insert_with(|| {
                        pairs.push(next);
                        queue.push_back(pairs.len() - 1);
                        parents.insert(pairs.len() - 1, (id, label.name().to_string()));
                        pairs.len() - 1
                    });
                    let _ = next_id;
                }
                None => {
                    if !label.is_controllable() && nonblocking.ok {
                        nonblocking = ConditionCheck::fail(format!(
                            "uncontrollable `{}` blocked {}",
                            label.name(),
                            path_to(&parents, id)
                        ));
                    }
                }
            }
        }
        if enabled == 0 && deadlock.ok {
            deadlock = ConditionCheck::fail(format!("deadlock {}", path_to(&parents, id)));
        }
    }

    // ---- Condition (3): monitored product plus SCC analysis ---------------
    let satisfies_spec = check_spec_on_lassos(problem, controller);

    VerificationReport { deadlock_free: deadlock, nonblocking, satisfies_spec }
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct MonitorKey {
    env: StateId,
    ctl: StateId,
    vals: Vec<bool>,
    last: Option<String>,
    armed: Vec<bool>,
}

fn check_spec_on_lassos(problem: &ControlProblem, controller: &Controller) -> ConditionCheck {
    let env = &problem.environment;
    let ctl = &controller.lts;
    let table = &problem.fluents;
    let spec = &problem.spec;

    let lookup = |vals: &Valuation, last: &Option<String>, name: &str| -> bool {
        match table.index_of(name) {
            Some(i) => vals[i],
            None => last.as_deref() == Some(name),
        }
    };
    let eval = |f: &Formula, vals: &Valuation, last: &Option<String>| -> bool {
        f.eval_propositional(&|name| lookup(vals, last, name))
    };
    let prompt_rules: Vec<(&Formula, &str)> = spec
        .safety
        .iter()
        .filter_map(|r| match r {
            SafetyRule::Prompt { guard, action } => Some((guard, action.as_str())),
            _ => None,
        })
        .collect();
    let invariants: Vec<&Formula> = spec
        .safety
        .iter()
        .filter_map(|r| match r {
            SafetyRule::Invariant(f) => Some(f),
            _ => None,
        })
        .collect();

    let armed_of = |vals: &Valuation, last: &Option<String>| -> Vec<bool> {
        prompt_rules.iter().map(|(g, _)| eval(g, vals, last)).collect()
    };

    let init_vals = table.initial_valuation();
    let init = MonitorKey {
        env: env.initial(),
        ctl: ctl.initial(),
        vals: init_vals.clone(),
        last: None,
        armed: armed_of(&init_vals, &None),
    };

    let mut index: HashMap<MonitorKey, usize> = HashMap::new();
    let mut nodes: Vec<MonitorKey> = Vec::new();
    let mut edges: Vec<Vec<usize>> = Vec::new();
    let mut parents: HashMap<usize, (usize, String)> = HashMap::new();
    let mut queue = VecDeque::new();
    index.insert(init.clone(), 0);
    nodes.push(init);
    edges.push(Vec::new());
    queue.push_back(0usize);

    // Safety scan while expanding.
    while let Some(id) = queue.pop_front() {
        let key = nodes[id].clone();
        for inv in &invariants {
            if !eval(inv, &key.vals, &key.last) {
                return ConditionCheck::fail(format!(
                    "safety `{inv}` violated {}",
                    path_to(&parents, id)
                ));
            }
        }
        for &(el, et) in env.transitions_from(key.env) {
            let label = env.alphabet().label(el);
            let target = match controller_allows(ctl, key.ctl, label.name()) {
                Some(t) => t,
                None => continue,
            };
            for (r, &(guard, action)) in prompt_rules.iter().enumerate() {
                if key.armed[r] && label.name() != action {
                    return ConditionCheck::fail(format!(
                        "prompt rule `{guard} -> X {action}` broken by `{}` {}",
                        label.name(),
                        path_to(&parents, id)
                    ));
                }
            }
            let vals = table.update(&key.vals, label.name());
            let last = Some(label.name().to_string());
            let armed = armed_of(&vals, &last);
            let next = MonitorKey {
                env: et,
                ctl: target.unwrap_or(key.ctl),
                vals,
                last,
                armed,
            };
            let next_id = *index.entry(next.clone()).or_insert_with(|| {
                nodes.push(next);
                edges.push(Vec::new());
                parents.insert(nodes.len() - 1, (id, label.name().to_string()));
                queue.push_back(nodes.len() - 1);
                nodes.len() - 1
            });
            edges[id].push(next_id);
        }
    }

    if spec.goals.is_empty() {
        return ConditionCheck::pass();
    }

    // A lasso violates the GR(1) implication iff its recurring part hits
    // every assumption but misses some goal: look for a cyclic SCC in the
    // goal-free subgraph whose nodes cover all assumptions.
    for (j, goal) in spec.goals.iter().enumerate() {
        let keep: Vec<bool> = nodes
            .iter()
            .map(|k| !eval(goal, &k.vals, &k.last))
            .collect();
        for scc in strongly_connected_components(&edges, &keep) {
            let cyclic = scc.len() > 1
                || edges[scc[0]].iter().any(|&t| t == scc[0]);
            if !cyclic {
                continue;
            }
            let all_assumptions = spec.assumptions.iter().all(|a| {
                scc.iter().any(|&n| eval(a, &nodes[n].vals, &nodes[n].last))
            });
            if all_assumptions {
                return ConditionCheck::fail(format!(
                    "goal {j} (`{goal}`) can be avoided forever {}",
                    path_to(&parents, scc[0])
                ));
            }
        }
    }
    ConditionCheck::pass()
}

/// Tarjan's algorithm restricted to `keep` nodes, iterative to stay clear of
/// recursion limits on large products.
fn strongly_connected_components(edges: &[Vec<usize>], keep: &[bool]) -> Vec<Vec<usize>> {
    let n = edges.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut components = Vec::new();

    // Explicit DFS frames: (node, next child position).
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if !keep[root] || index[root] != usize::MAX {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut child)) = call.last_mut() {
            if *child < edges[v].len() {
                let w = edges[v][*child];
                *child += 1;
                if !keep[w] {
                    continue;
                }
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    components.push(comp);
                }
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lts::{ActionLabel, LtsBuilder};
    use crate::mission::{GridWorkspace, MissionSpec};

    fn patrol_2x3() -> ControlProblem {
        let g = GridWorkspace::new(2, 3, 400.0).unwrap();
        let mut m = MissionSpec::new(g, (0, 0)).unwrap();
        m.patrol = vec![(0, 0), (1, 2)];
        m.compile().unwrap().problem
    }

    /// Builder preloaded with the full environment alphabet, so a hand-built
    /// controller constrains every action instead of interleaving with the
    /// ones it does not mention.
    fn full_alphabet_builder(p: &ControlProblem) -> LtsBuilder {
        let mut b = LtsBuilder::new();
        for l in p.environment.alphabet().iter() {
            b.add_label(l.clone()).unwrap();
        }
        b
    }

    #[test]
    fn synthesized_controller_passes_all_three() {
        let p = patrol_2x3();
        let c = p.synthesize().unwrap().unwrap();
        let report = verify_controller(&p, &c);
        assert!(report.all_ok(), "{report}");
    }

    /// Hand-built controller that issues go[0][1] but then blocks the
    /// matching arrival: condition (2) must fail with a witness.
    #[test]
    fn blocking_an_arrival_fails_nonblocking() {
        let p = patrol_2x3();
        let mut b = full_alphabet_builder(&p);
        let s0 = b.add_state();
        let s1 = b.add_state();
        let go = b.add_label(ActionLabel::controllable("go[0][1]").unwrap()).unwrap();
        b.add_transition(s0, go, s1).unwrap();
        // s1 deliberately omits arrived[0][1].
        b.set_initial(s0);
        let c = Controller { lts: b.build().unwrap(), memory: vec![0, 0] };
        let report = verify_controller(&p, &c);
        assert!(!report.nonblocking.ok);
        let witness = report.nonblocking.witness.unwrap();
        assert!(witness.contains("arrived[0][1]"), "{witness}");
        assert!(witness.contains("go[0][1]"), "{witness}");
    }

    /// Controller that walks one lap and then stops: condition (1) fails.
    #[test]
    fn deadlocking_controller_fails_condition_one() {
        let p = patrol_2x3();
        let mut b = full_alphabet_builder(&p);
        let states: Vec<_> = (0..5).map(|_| b.add_state()).collect();
        let add = |b: &mut LtsBuilder, src: usize, name: &str, ctrl: bool, dst: usize| {
            let l = b.add_label(ActionLabel::new(name, ctrl).unwrap()).unwrap();
            b.add_transition(src, l, dst).unwrap();
        };
        add(&mut b, states[0], "go[0][1]", true, states[1]);
        add(&mut b, states[1], "arrived[0][1]", false, states[2]);
        add(&mut b, states[2], "go[0][0]", true, states[3]);
        add(&mut b, states[3], "arrived[0][0]", false, states[4]);
        // states[4] has no outgoing transitions.
        b.set_initial(states[0]);
        let c = Controller { lts: b.build().unwrap(), memory: vec![0; 5] };
        let report = verify_controller(&p, &c);
        assert!(!report.deadlock_free.ok);
        assert!(report
            .deadlock_free
            .witness
            .unwrap()
            .contains("arrived[0][0]"));
    }

    /// A lasso that starves a goal only violates the GR(1) implication when
    /// it also satisfies every assumption infinitely often.
    #[test]
    fn assumption_filter_gates_condition_three() {
        use crate::fltl::{classify_gr1, FluentTable, Formula};
        // One-state environment: an uncontrollable tick and two controllable
        // actions, all self-loops.
        let mut b = LtsBuilder::new();
        let s0 = b.add_state();
        let tick = b.add_label(ActionLabel::uncontrollable("u_tick").unwrap()).unwrap();
        let idle = b.add_label(ActionLabel::controllable("c_idle").unwrap()).unwrap();
        let goal = b.add_label(ActionLabel::controllable("c_goal").unwrap()).unwrap();
        b.add_transition(s0, tick, s0).unwrap();
        b.add_transition(s0, idle, s0).unwrap();
        b.add_transition(s0, goal, s0).unwrap();
        b.set_initial(s0);
        let env = b.build().unwrap();
        let table = FluentTable::new();
        let goal_f = Formula::atom("c_goal").eventually().always();

        // Controller that keeps ticking and idling but never hits the goal.
        let controller = {
            let mut b = LtsBuilder::new();
            let s = b.add_state();
            let tick = b.add_label(ActionLabel::uncontrollable("u_tick").unwrap()).unwrap();
            let idle = b.add_label(ActionLabel::controllable("c_idle").unwrap()).unwrap();
            b.add_label(ActionLabel::controllable("c_goal").unwrap()).unwrap();
            b.add_transition(s, tick, s).unwrap();
            b.add_transition(s, idle, s).unwrap();
            b.set_initial(s);
            Controller { lts: b.build().unwrap(), memory: vec![0] }
        };

        // Under the tick assumption the starving lasso satisfies it, so the
        // implication is violated.
        let spec = classify_gr1(
            &[],
            &[Formula::atom("u_tick").eventually().always()],
            &[goal_f.clone()],
            &table,
        )
        .unwrap();
        let p = ControlProblem::new(env.clone(), spec, table.clone()).unwrap();
        let report = verify_controller(&p, &controller);
        assert!(!report.satisfies_spec.ok);

        // With an assumption the controller region never satisfies, every
        // goal-starving lasso is vacuously fine.
        let spec = classify_gr1(
            &[],
            &[Formula::atom("c_goal").eventually().always()],
            &[goal_f],
            &table,
        )
        .unwrap();
        let p = ControlProblem::new(env, spec, table).unwrap();
        let report = verify_controller(&p, &controller);
        assert!(report.satisfies_spec.ok, "{report}");
    }

    /// Controller that never visits one of the patrol targets: condition (3)
    /// must report the avoidable goal.
    #[test]
    fn goal_starvation_fails_condition_three() {
        let p = patrol_2x3();
        // Endlessly bounce between (0,0) and (0,1), never reaching (1,2).
        let mut b = full_alphabet_builder(&p);
        let states: Vec<_> = (0..4).map(|_| b.add_state()).collect();
        let add = |b: &mut LtsBuilder, src: usize, name: &str, ctrl: bool, dst: usize| {
            let l = b.add_label(ActionLabel::new(name, ctrl).unwrap()).unwrap();
            b.add_transition(src, l, dst).unwrap();
        };
        add(&mut b, states[0], "go[0][1]", true, states[1]);
        add(&mut b, states[1], "arrived[0][1]", false, states[2]);
        add(&mut b, states[2], "go[0][0]", true, states[3]);
        add(&mut b, states[3], "arrived[0][0]", false, states[0]);
        b.set_initial(states[0]);
        let c = Controller { lts: b.build().unwrap(), memory: vec![0; 4] };
        let report = verify_controller(&p, &c);
        assert!(report.deadlock_free.ok, "{report}");
        assert!(report.nonblocking.ok, "{report}");
        assert!(!report.satisfies_spec.ok);
        assert!(report.satisfies_spec.witness.unwrap().contains("arrived[1][2]"));
    }
}
