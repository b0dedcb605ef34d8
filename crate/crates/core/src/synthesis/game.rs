//! Product of the environment with fluent observers and safety monitors.
//!
//! A game node is an environment state plus the observation state needed to
//! evaluate the specification: the tracked declared fluents, which tracked
//! action-singleton (if any) occurred last, and which prompt-reaction rules
//! are currently armed. Nodes violating safety are marked losing and not
//! expanded further.

use std::collections::HashMap;

use crate::fltl::{Formula, SafetyRule};
use crate::lts::{LabelId, StateId};

use super::{ControlProblem, SynthesisError};

/// Observation state attached to an environment state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) struct ObsState {
    /// Tracked declared-fluent values, one bit per tracked fluent.
    bits: u64,
    /// 1 + index of the tracked singleton matched by the last action, or 0.
    single: u16,
    /// Prompt rules whose guard held at this position.
    armed: u32,
    /// A prompt rule was violated on the way here.
    dead: bool,
}

/// How a formula atom reads the observation state.
#[derive(Clone, Copy, Debug)]
enum AtomRef {
    Declared(usize),
    Singleton(u16),
    /// References an action that can never occur (constantly false).
    Never,
}

struct CompiledBool {
    formula: Formula,
    refs: HashMap<String, AtomRef>,
}

impl CompiledBool {
    fn eval(&self, obs: &ObsState) -> bool {
        self.formula.eval_propositional(&|name| match self.refs.get(name) {
            Some(AtomRef::Declared(i)) => obs.bits & (1 << i) != 0,
            Some(AtomRef::Singleton(i)) => obs.single == i + 1,
            Some(AtomRef::Never) | None => false,
        })
    }
}

struct CompiledPrompt {
    guard: CompiledBool,
    /// Label that must come next when the guard holds.
    required: LabelId,
}

/// Evaluates and steps observation states for one control problem.
struct Observer {
    /// Indices into the problem's fluent table, one per tracked bit.
    tracked_fluents: Vec<usize>,
    fluent_names: Vec<String>,
    /// Last-action tracking for singleton atoms: environment label to
    /// tracked-singleton index.
    label_to_single: HashMap<LabelId, u16>,
    invariants: Vec<CompiledBool>,
    prompts: Vec<CompiledPrompt>,
    goals: Vec<CompiledBool>,
    assumptions: Vec<CompiledBool>,
}

const DEAD: ObsState = ObsState { bits: 0, single: 0, armed: 0, dead: true };

impl Observer {
    fn build(p: &ControlProblem) -> Result<Observer, SynthesisError> {
        let atoms = p.spec.referenced_atoms();
        let mut tracked_fluents = Vec::new();
        let mut fluent_names = Vec::new();
        let mut singles: Vec<String> = Vec::new();
        for atom in &atoms {
            if let Some(idx) = p.fluents.index_of(atom) {
                tracked_fluents.push(idx);
                fluent_names.push(atom.clone());
            } else {
                singles.push(atom.clone());
            }
        }
        if tracked_fluents.len() > 64 {
            return Err(SynthesisError::InvalidProblem(format!(
                "{} tracked fluents exceed the supported 64",
                tracked_fluents.len()
            )));
        }
        if singles.len() > u16::MAX as usize - 1 {
            return Err(SynthesisError::InvalidProblem("too many singleton atoms".into()));
        }
        let single_labels: Vec<Option<LabelId>> = singles
            .iter()
            .map(|name| p.environment.alphabet().id_of(name))
            .collect();
        let mut label_to_single = HashMap::new();
        for (i, l) in single_labels.iter().enumerate() {
            if let Some(l) = *l {
                label_to_single.insert(l, i as u16);
            }
        }

        let compile = |f: &Formula| -> CompiledBool {
            let mut names = std::collections::BTreeSet::new();
            f.collect_atoms(&mut names);
            let refs = names
                .into_iter()
                .map(|name| {
                    let r = if let Some(pos) =
                        fluent_names.iter().position(|n| n == name)
                    {
                        AtomRef::Declared(pos)
                    } else if let Some(pos) = singles.iter().position(|n| n == name) {
                        AtomRef::Singleton(pos as u16)
                    } else {
                        AtomRef::Never
                    };
                    (name.to_string(), r)
                })
                .collect();
            CompiledBool { formula: f.clone(), refs }
        };

        let mut invariants = Vec::new();
        let mut prompts = Vec::new();
        for rule in &p.spec.safety {
            match rule {
                SafetyRule::Invariant(f) => invariants.push(compile(f)),
                SafetyRule::Prompt { guard, action } => {
                    let required = p.environment.alphabet().id_of(action).ok_or_else(|| {
                        SynthesisError::InvalidProblem(format!(
                            "prompt action `{action}` not in the environment alphabet"
                        ))
                    })?;
                    prompts.push(CompiledPrompt { guard: compile(guard), required });
                }
            }
        }
        if prompts.len() > 32 {
            return Err(SynthesisError::InvalidProblem(
                "more than 32 prompt-reaction rules".into(),
            ));
        }
        // A goal-free specification still demands deadlock freedom forever;
        // a single trivially-true goal encodes that.
        let goals = if p.spec.goals.is_empty() {
            vec![compile(&Formula::True)]
        } else {
            p.spec.goals.iter().map(&compile).collect()
        };
        if goals.len() > 64 || p.spec.assumptions.len() > 64 {
            return Err(SynthesisError::InvalidProblem(
                "more than 64 goals or assumptions".into(),
            ));
        }
        let assumptions = p.spec.assumptions.iter().map(&compile).collect();
        Ok(Observer {
            tracked_fluents,
            fluent_names,
            label_to_single,
            invariants,
            prompts,
            goals,
            assumptions,
        })
    }

    fn arm(&self, mut obs: ObsState) -> ObsState {
        obs.armed = 0;
        for (r, p) in self.prompts.iter().enumerate() {
            if p.guard.eval(&obs) {
                obs.armed |= 1 << r;
            }
        }
        obs
    }

    fn initial(&self, p: &ControlProblem) -> ObsState {
        let mut bits = 0u64;
        for (slot, &idx) in self.tracked_fluents.iter().enumerate() {
            if p.fluents.fluent(idx).initial() {
                bits |= 1 << slot;
            }
        }
        self.arm(ObsState { bits, single: 0, armed: 0, dead: false })
    }

    /// Observation after `label` occurs; a violated prompt obligation
    /// collapses to the absorbing dead state.
    fn step(&self, p: &ControlProblem, obs: &ObsState, label: LabelId) -> ObsState {
        if obs.dead {
            return DEAD;
        }
        for (r, prompt) in self.prompts.iter().enumerate() {
            if obs.armed & (1 << r) != 0 && prompt.required != label {
                return DEAD;
            }
        }
        let name = p.environment.alphabet().label(label).name();
        let mut bits = 0u64;
        for (slot, &idx) in self.tracked_fluents.iter().enumerate() {
            let before = obs.bits & (1 << slot) != 0;
            if p.fluents.fluent(idx).update(before, name) {
                bits |= 1 << slot;
            }
        }
        let single = self.label_to_single.get(&label).map(|&i| i + 1).unwrap_or(0);
        self.arm(ObsState { bits, single, armed: 0, dead: false })
    }

    fn is_losing(&self, obs: &ObsState) -> bool {
        obs.dead || self.invariants.iter().any(|inv| !inv.eval(obs))
    }

    fn goal_mask(&self, obs: &ObsState) -> u64 {
        let mut m = 0u64;
        for (j, g) in self.goals.iter().enumerate() {
            if g.eval(obs) {
                m |= 1 << j;
            }
        }
        m
    }

    fn assumption_mask(&self, obs: &ObsState) -> u64 {
        let mut m = 0u64;
        for (i, a) in self.assumptions.iter().enumerate() {
            if a.eval(obs) {
                m |= 1 << i;
            }
        }
        m
    }
}

#[derive(Clone, Debug)]
pub(crate) struct NodeInfo {
    pub env_state: StateId,
    pub(crate) obs: ObsState,
    pub losing: bool,
    pub goal_sat: u64,
    pub asm_sat: u64,
}

/// The synthesis game: reachable (environment state, observation) pairs with
/// edges mirroring the environment's transitions, split by controllability.
pub struct GameGraph {
    pub(crate) nodes: Vec<NodeInfo>,
    /// Uncontrollable successors per node.
    pub(crate) unctrl: Vec<Vec<(LabelId, usize)>>,
    /// Controllable successors per node, sorted by label name so the
    /// lexicographically least winning action is chosen first.
    pub(crate) ctrl: Vec<Vec<(LabelId, usize)>>,
    pub(crate) initial: usize,
    pub(crate) num_goals: usize,
    pub(crate) num_assumptions: usize,
    /// (name, controllable) per label, mirroring the environment alphabet.
    pub(crate) labels: Vec<(String, bool)>,
    pub(crate) fluent_names: Vec<String>,
}

impl GameGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_losing(&self) -> usize {
        self.nodes.iter().filter(|n| n.losing).count()
    }

    pub fn initial_node(&self) -> usize {
        self.initial
    }

    pub fn node_is_losing(&self, node: usize) -> bool {
        self.nodes[node].losing
    }

    pub fn node_env_state(&self, node: usize) -> StateId {
        self.nodes[node].env_state
    }

    /// Human-readable description of a node for diagnostics.
    pub fn describe(&self, node: usize) -> String {
        let info = &self.nodes[node];
        let mut parts = vec![format!("env={}", info.env_state)];
        for (slot, name) in self.fluent_names.iter().enumerate() {
            if info.obs.bits & (1 << slot) != 0 {
                parts.push(name.clone());
            }
        }
        if info.losing {
            parts.push("losing".into());
        }
        parts.join(" ")
    }

    pub(crate) fn goal_holds(&self, node: usize, goal: usize) -> bool {
        self.nodes[node].goal_sat & (1 << goal) != 0
    }

    pub(crate) fn assumption_holds(&self, node: usize, asm: usize) -> bool {
        self.nodes[node].asm_sat & (1 << asm) != 0
    }
}

/// Expands the reachable product of the environment with the specification's
/// fluent observers and prompt monitors.
pub fn build_game(p: &ControlProblem) -> Result<GameGraph, SynthesisError> {
    let observer = Observer::build(p)?;
    let env = &p.environment;

    // Controllable edges sorted by label name for deterministic tie-breaks.
    let mut name_order: Vec<LabelId> = (0..env.alphabet().len()).collect();
    name_order.sort_by_key(|&l| env.alphabet().label(l).name().to_string());
    let rank_of = {
        let mut rank = vec![0usize; env.alphabet().len()];
        for (r, &l) in name_order.iter().enumerate() {
            rank[l] = r;
        }
        rank
    };

    let mut index: HashMap<(StateId, ObsState), usize> = HashMap::new();
    let mut nodes: Vec<NodeInfo> = Vec::new();
    let mut unctrl: Vec<Vec<(LabelId, usize)>> = Vec::new();
    let mut ctrl: Vec<Vec<(LabelId, usize)>> = Vec::new();
    let mut queue = std::collections::VecDeque::new();

    let mut intern = |env_state: StateId,
                      obs: ObsState,
                      nodes: &mut Vec<NodeInfo>,
                      unctrl: &mut Vec<Vec<(LabelId, usize)>>,
                      ctrl: &mut Vec<Vec<(LabelId, usize)>>,
                      queue: &mut std::collections::VecDeque<usize>|
     -> usize {
        if let Some(&id) = index.get(&(env_state, obs)) {
            return id;
        }
        let id = nodes.len();
        index.insert((env_state, obs), id);
        nodes.push(NodeInfo {
            env_state,
            obs,
            losing: observer.is_losing(&obs),
            goal_sat: observer.goal_mask(&obs),
            asm_sat: observer.assumption_mask(&obs),
        });
        unctrl.push(Vec::new());
        ctrl.push(Vec::new());
        queue.push_back(id);
        id
    };

    let init_obs = observer.initial(p);
    intern(env.initial(), init_obs, &mut nodes, &mut unctrl, &mut ctrl, &mut queue);

    while let Some(id) = queue.pop_front() {
        if nodes[id].losing {
            continue; // absorbing: no need to expand past a violation
        }
        let env_state = nodes[id].env_state;
        let obs = nodes[id].obs;
        for &(label, env_next) in env.transitions_from(env_state) {
            let obs_next = observer.step(p, &obs, label);
            let next = intern(env_next, obs_next, &mut nodes, &mut unctrl, &mut ctrl, &mut queue);
            if env.alphabet().label(label).is_controllable() {
                ctrl[id].push((label, next));
            } else {
                unctrl[id].push((label, next));
            }
        }
        ctrl[id].sort_by_key(|&(l, _)| rank_of[l]);
    }

    let labels = env
        .alphabet()
        .iter()
        .map(|l| (l.name().to_string(), l.is_controllable()))
        .collect();
    Ok(GameGraph {
        nodes,
        unctrl,
        ctrl,
        initial: 0,
        num_goals: observer.goals.len(),
        num_assumptions: observer.assumptions.len(),
        labels,
        fluent_names: observer.fluent_names.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fltl::{classify_gr1, FluentTable, Formula};
    use crate::mission::{toggle_lts, GridWorkspace, MissionSpec, Reaction};

    #[test]
    fn avoidance_marks_losing_nodes() {
        let g = GridWorkspace::new(2, 3, 400.0).unwrap();
        let mut m = MissionSpec::new(g, (0, 0)).unwrap();
        m.patrol = vec![(0, 0)];
        m.grid.add_forbidden((0, 2)).unwrap();
        let p = m.compile().unwrap().problem;
        let game = build_game(&p).unwrap();
        assert!(game.num_losing() > 0);
        // Losing nodes are exactly those whose last event was the forbidden
        // arrival; they carry no outgoing edges.
        for i in 0..game.num_nodes() {
            if game.node_is_losing(i) {
                assert!(game.unctrl[i].is_empty() && game.ctrl[i].is_empty());
            }
        }
    }

    #[test]
    fn fluent_free_game_mirrors_environment() {
        let g = GridWorkspace::new(2, 2, 400.0).unwrap();
        let m = MissionSpec::new(g, (0, 0)).unwrap();
        let p = m.compile().unwrap().problem;
        let game = build_game(&p).unwrap();
        assert_eq!(game.num_nodes(), p.environment.reachable_part().num_states());
        assert_eq!(game.num_losing(), 0);
    }

    #[test]
    fn observed_fluents_expand_nodes_to_the_brute_force_product() {
        // Motion on 2x3 composed with the alert toggle, observing the three
        // fluents over rows and the alert state.
        let g = GridWorkspace::new(2, 3, 400.0).unwrap();
        let mut m = MissionSpec::new(g, (0, 0)).unwrap();
        m.patrol = vec![(0, 0), (1, 2)];
        m.reactions = vec![Reaction {
            zone: [(1, 0), (1, 1), (1, 2)].into_iter().collect(),
            on_action: "alert.on".into(),
            off_action: "alert.off".into(),
        }];
        let p = m.compile().unwrap().problem;
        let game = build_game(&p).unwrap();
        assert!(game.num_nodes() <= 40 * 8 * 4, "node bound");

        // Independent brute-force enumeration of the reachable observed
        // product, without the prompt monitors (prune dead nodes the same
        // way the game builder does).
        let env = &p.environment;
        let table = &p.fluents;
        let mut seen = std::collections::HashSet::new();
        let mut queue = std::collections::VecDeque::new();
        let init = (env.initial(), table.initial_valuation(), None::<String>);
        seen.insert(init.clone());
        queue.push_back(init);
        let mut count = 1usize;
        while let Some((s, vals, _last)) = queue.pop_front() {
            for &(l, t) in env.transitions_from(s) {
                let name = env.alphabet().label(l).name().to_string();
                let next_vals = table.update(&vals, &name);
                let key = (t, next_vals, Some(name));
                if seen.insert(key.clone()) {
                    count += 1;
                    queue.push_back(key);
                }
            }
        }
        // The game tracks singles only for referenced atoms and collapses
        // prompt-dead states, so it can only be coarser.
        assert!(game.num_nodes() <= count + 1);
        assert!(count <= 40 * 8 * (env.alphabet().len() + 1));
    }

    #[test]
    fn prompt_violation_collapses_to_dead() {
        let env = toggle_lts("alert.on", "alert.off").unwrap();
        let table = FluentTable::new();
        // After any alert.off the very next action must be alert.on; the
        // toggle always does that, so nothing is losing. But arming at the
        // initial position (no action yet) with a guard on nothing is fine.
        let spec = classify_gr1(
            &[Formula::atom("alert.off").implies(Formula::atom("alert.on").next()).always()],
            &[],
            &[Formula::atom("alert.on").eventually().always()],
            &table,
        )
        .unwrap();
        let p = ControlProblem::new(env, spec, table).unwrap();
        let game = build_game(&p).unwrap();
        assert_eq!(game.num_losing(), 0);
    }
}
