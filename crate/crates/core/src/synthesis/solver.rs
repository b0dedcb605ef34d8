//! GR(1) game solving and controller extraction.
//!
//! The winning region is the greatest fixpoint over safety of the
//! intersection, across goals, of least-fixpoint attractors whose targets
//! are goal-satisfying nodes that can stay winning; inside each attractor a
//! greatest fixpoint per assumption admits winning by keeping that
//! assumption false forever. Memory is the pursued goal index, cycled
//! round-robin; it advances when the controller arrives at a node where the
//! pursued goal body is satisfied.

use std::collections::{HashMap, VecDeque};

use crate::lts::{ActionLabel, LabelId, LtsBuilder};

use super::game::GameGraph;
use super::Controller;

/// Outcome of solving a game.
pub enum SolveResult {
    Realizable(Strategy),
    Unrealizable(UnrealizableReport),
}

/// Diagnostic for an unrealizable problem: the initial nodes that lie
/// outside the winning region.
#[derive(Debug, Clone)]
pub struct UnrealizableReport {
    pub losing_initial: Vec<String>,
    pub winning_nodes: usize,
    pub total_nodes: usize,
}

impl std::fmt::Display for UnrealizableReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "unrealizable: winning region covers {}/{} nodes; losing initial nodes:",
            self.winning_nodes, self.total_nodes
        )?;
        for n in &self.losing_initial {
            writeln!(f, "  {n}")?;
        }
        Ok(())
    }
}

/// The controller's decision at a node while pursuing one goal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Move {
    /// Node not won for this goal index (never reached by the controller).
    None,
    /// The pursued goal body holds here and every enabled action stays in
    /// the winning region; arriving here advances the memory.
    Goal { pick: Option<(LabelId, usize)> },
    /// Attractor step toward the goal; `pick` is enabled only when no
    /// uncontrollable action already forces progress.
    Reach { pick: Option<(LabelId, usize)> },
    /// Remain inside a region that keeps some assumption false forever.
    Stay { pick: Option<(LabelId, usize)> },
}

/// A winning strategy: per goal index, one move per winning node.
pub struct Strategy {
    pub(crate) winning: Vec<bool>,
    pub(crate) moves: Vec<Vec<Move>>,
    pub(crate) num_goals: usize,
}

impl Strategy {
    pub fn winning_nodes(&self) -> usize {
        self.winning.iter().filter(|&&w| w).count()
    }

    pub fn is_winning(&self, node: usize) -> bool {
        self.winning[node]
    }
}

/// Controllable predecessor: the controller can keep the next step inside
/// `w`. Every uncontrollable successor must lie in `w`; if there is none,
/// some controllable successor must (the controller may not cause a
/// deadlock by disabling everything).
fn cpre(g: &GameGraph, safe: &[bool], w: &[bool], node: usize) -> bool {
    if !safe[node] {
        return false;
    }
    let u = &g.unctrl[node];
    if u.iter().any(|&(_, t)| !w[t]) {
        return false;
    }
    if !u.is_empty() {
        return true;
    }
    g.ctrl[node].iter().any(|&(_, t)| w[t])
}

/// Lexicographically least controllable action into `set`, only needed when
/// the node has no uncontrollable successors (minimal enabling).
fn pick_ctrl(g: &GameGraph, node: usize, set: &[bool]) -> Option<(LabelId, usize)> {
    if !g.unctrl[node].is_empty() {
        return None;
    }
    g.ctrl[node].iter().copied().find(|&(_, t)| set[t])
}

/// Least fixpoint for one goal: from every member the controller forces a
/// visit to a goal node that stays within `z`, or locks some assumption
/// false forever. Records first-entry moves when `moves` is given.
fn compute_goal_region(
    g: &GameGraph,
    goal: usize,
    z: &[bool],
    safe: &[bool],
    mut moves: Option<&mut Vec<Move>>,
) -> Vec<bool> {
    let n = g.num_nodes();
    let target: Vec<bool> = (0..n)
        .map(|i| safe[i] && g.goal_holds(i, goal) && cpre(g, safe, z, i))
        .collect();
    let mut y = vec![false; n];
    loop {
        let mut newy = y.clone();
        let mut grew = false;
        for i in 0..n {
            if newy[i] {
                continue;
            }
            if target[i] {
                newy[i] = true;
                grew = true;
                if let Some(m) = moves.as_deref_mut() {
                    m[i] = Move::Goal { pick: pick_ctrl(g, i, z) };
                }
            } else if cpre(g, safe, &y, i) {
                newy[i] = true;
                grew = true;
                if let Some(m) = moves.as_deref_mut() {
                    m[i] = Move::Reach { pick: pick_ctrl(g, i, &y) };
                }
            }
        }
        for asm in 0..g.num_assumptions {
            // Greatest fixpoint: stay safe and keep the assumption false,
            // or escape into what is already won.
            let mut x = safe.to_vec();
            loop {
                let mut changed = false;
                for i in 0..n {
                    if x[i]
                        && !(newy[i]
                            || (!g.assumption_holds(i, asm) && cpre(g, safe, &x, i)))
                    {
                        x[i] = false;
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            for i in 0..n {
                if x[i] && !newy[i] {
                    newy[i] = true;
                    grew = true;
                    if let Some(m) = moves.as_deref_mut() {
                        m[i] = Move::Stay { pick: pick_ctrl(g, i, &x) };
                    }
                }
            }
        }
        if !grew {
            return newy;
        }
        y = newy;
    }
}

/// Solves the game. Realizability means the initial node lies in the
/// winning region; otherwise the report carries the losing initial nodes.
pub fn solve_gr1(g: &GameGraph) -> SolveResult {
    let n = g.num_nodes();
    let safe: Vec<bool> = (0..n).map(|i| !g.nodes[i].losing).collect();
    let mut z = safe.clone();
    loop {
        let mut changed = false;
        for goal in 0..g.num_goals {
            let y = compute_goal_region(g, goal, &z, &safe, None);
            for i in 0..n {
                if z[i] && !y[i] {
                    z[i] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    if !z[g.initial] {
        return SolveResult::Unrealizable(UnrealizableReport {
            losing_initial: vec![g.describe(g.initial)],
            winning_nodes: z.iter().filter(|&&b| b).count(),
            total_nodes: n,
        });
    }
    let mut moves = Vec::with_capacity(g.num_goals);
    for goal in 0..g.num_goals {
        let mut mv = vec![Move::None; n];
        let y = compute_goal_region(g, goal, &z, &safe, Some(&mut mv));
        debug_assert!(
            (0..n).all(|i| !z[i] || y[i]),
            "winning region must be contained in every goal region"
        );
        moves.push(mv);
    }
    SolveResult::Realizable(Strategy { winning: z, moves, num_goals: g.num_goals })
}

/// Unfolds a winning strategy into a controller LTS. States are
/// (game node, pursued goal index) pairs reachable under the strategy; all
/// uncontrollable actions enabled in the environment stay enabled, and at
/// most one controllable action is.
///
/// On arrival at a node the goal index advances past every goal whose body
/// is satisfied there (while the node stays inside `CPre(Z)`), so the state
/// pursues the next unfinished goal. A goal node lies in `CPre(Z)`, which
/// is contained in every goal's region, so the advanced index always has a
/// move.
pub fn extract_controller(g: &GameGraph, s: &Strategy) -> Controller {
    assert!(s.winning[g.initial], "extract_controller requires a winning strategy");
    let m = s.num_goals;

    // Advance round-robin while the pursued goal is completed here; a full
    // wrap (every goal satisfied at this node) stops after one cycle.
    let advance = |mut goal: usize, node: usize| -> usize {
        for _ in 0..m {
            if matches!(s.moves[goal][node], Move::Goal { .. }) {
                goal = (goal + 1) % m;
            } else {
                break;
            }
        }
        goal
    };

    let mut builder = LtsBuilder::new();
    let label_ids: Vec<LabelId> = g
        .labels
        .iter()
        .map(|(name, ctrl)| {
            builder.add_label(ActionLabel::new(name, *ctrl).expect("game labels are valid")).unwrap()
        })
        .collect();

    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut memory: Vec<usize> = Vec::new();
    let mut queue = VecDeque::new();
    let init = (g.initial, advance(0, g.initial));
    index.insert(init, builder.add_state());
    memory.push(init.1);
    queue.push_back(init);

    while let Some(key @ (node, goal)) = queue.pop_front() {
        let src = index[&key];
        let mv = s.moves[goal][node];
        debug_assert!(
            mv != Move::None,
            "controller reached a node with no move for goal {goal}"
        );
        let pick = match mv {
            Move::Goal { pick } | Move::Reach { pick } | Move::Stay { pick } => pick,
            Move::None => None,
        };
        let mut edges: Vec<(LabelId, usize)> = g.unctrl[node].to_vec();
        if let Some((label, target)) = pick {
            edges.push((label, target));
        }
        debug_assert!(!edges.is_empty(), "a winning strategy never deadlocks");
        for (label, target) in edges {
            let tkey = (target, advance(goal, target));
            let dst = *index.entry(tkey).or_insert_with(|| {
                let s = builder.add_state();
                memory.push(tkey.1);
                queue.push_back(tkey);
                s
            });
            builder
                .add_transition(src, label_ids[label], dst)
                .expect("strategy moves are deterministic");
        }
    }
    builder.set_initial(0);
    Controller { lts: builder.build().expect("extraction builds a valid LTS"), memory }
}
