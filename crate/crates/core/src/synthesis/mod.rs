//! Solving control problems: build a game over the environment and its
//! fluent observers, solve safety plus GR(1) liveness by fixpoint iteration,
//! extract a strategy controller, and verify the result with an independent
//! model checker.

mod game;
mod solver;
mod verify;

pub use game::{build_game, GameGraph};
pub use solver::{solve_gr1, extract_controller, SolveResult, Strategy, UnrealizableReport};
pub use verify::{verify_controller, ConditionCheck, VerificationReport};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::fltl::{FluentTable, Gr1Spec};
use crate::lts::{ActionLabel, Lts, LtsError};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("invalid control problem: {0}")]
    InvalidProblem(String),
    #[error("controller file line {line}: {msg}")]
    BadControllerFile { line: usize, msg: String },
    #[error(transparent)]
    Lts(#[from] LtsError),
}

/// The control problem: an environment, a specification over its
/// events, and the controllable subset of its alphabet.
#[derive(Debug)]
pub struct ControlProblem {
    pub environment: Lts,
    pub spec: Gr1Spec,
    /// Declared fluents the specification's atoms may refer to.
    pub fluents: FluentTable,
    /// Names of the controllable actions (always the controllable-flagged
    /// part of the environment alphabet).
    pub controllable: BTreeSet<String>,
}

impl ControlProblem {
    pub fn new(
        environment: Lts,
        spec: Gr1Spec,
        fluents: FluentTable,
    ) -> Result<Self, SynthesisError> {
        let controllable: BTreeSet<String> = environment
            .alphabet()
            .controllable_names()
            .map(str::to_string)
            .collect();
        for action in spec.prompt_actions() {
            if environment.alphabet().id_of(&action).is_none() {
                return Err(SynthesisError::InvalidProblem(format!(
                    "prompt action `{action}` is not in the environment alphabet"
                )));
            }
        }
        Ok(ControlProblem { environment, spec, fluents, controllable })
    }

    /// Builds, solves and extracts in one go.
    pub fn synthesize(&self) -> Result<Result<Controller, UnrealizableReport>, SynthesisError> {
        let game = build_game(self)?;
        match solve_gr1(&game) {
            SolveResult::Realizable(strategy) => {
                Ok(Ok(extract_controller(&game, &strategy)))
            }
            SolveResult::Unrealizable(report) => Ok(Err(report)),
        }
    }
}

/// A synthesized controller: a deterministic LTS over the environment
/// alphabet whose states carry the pursued goal index as memory. At states
/// where the controller acts, exactly one controllable action is enabled;
/// uncontrollable actions enabled in the environment are never removed.
#[derive(Clone, Debug)]
pub struct Controller {
    pub lts: Lts,
    /// Goal index per controller state.
    pub memory: Vec<usize>,
}

const CONTROLLER_MAGIC: &str = "warden-controller v1";

impl Controller {
    /// Serializes to the versioned controller exchange format with
    /// `alphabet`, `states`, `initial`, `memory` and `transitions` sections.
    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        writeln!(s, "{CONTROLLER_MAGIC}").unwrap();
        writeln!(s, "alphabet {}", self.lts.alphabet().len()).unwrap();
        for l in self.lts.alphabet().iter() {
            let tag = if l.is_controllable() { "ctrl" } else { "unctrl" };
            writeln!(s, "{tag} {}", l.name()).unwrap();
        }
        writeln!(s, "states {}", self.lts.num_states()).unwrap();
        writeln!(s, "initial {}", self.lts.initial()).unwrap();
        writeln!(s, "memory {}", self.memory.len()).unwrap();
        for (state, goal) in self.memory.iter().enumerate() {
            writeln!(s, "{state} {goal}").unwrap();
        }
        writeln!(s, "transitions {}", self.lts.num_transitions()).unwrap();
        for src in 0..self.lts.num_states() {
            for &(l, dst) in self.lts.transitions_from(src) {
                writeln!(s, "{src} {} {dst}", self.lts.alphabet().label(l).name()).unwrap();
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Controller, SynthesisError> {
        let bad = |line: usize, msg: &str| SynthesisError::BadControllerFile {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(n, l)| (n + 1, l.trim()));
        let (n, magic) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
        if magic != CONTROLLER_MAGIC {
            return Err(bad(n, "missing controller header"));
        }
        let next_counted = |keyword: &str,
                                lines: &mut dyn Iterator<Item = (usize, &str)>|
         -> Result<usize, SynthesisError> {
            let (n, line) = lines.next().ok_or_else(|| bad(0, "truncated file"))?;
            let rest = line
                .strip_prefix(keyword)
                .ok_or_else(|| bad(n, &format!("expected `{keyword} <count>`")))?;
            rest.trim()
                .parse()
                .map_err(|_| bad(n, &format!("bad `{keyword}` count")))
        };

        let count = next_counted("alphabet", &mut lines)?;
        let mut builder = crate::lts::LtsBuilder::new();
        let mut label_ids = std::collections::HashMap::new();
        for _ in 0..count {
            let (n, line) = lines.next().ok_or_else(|| bad(0, "truncated alphabet"))?;
            let (tag, name) = line
                .split_once(' ')
                .ok_or_else(|| bad(n, "expected `ctrl|unctrl <name>`"))?;
            let controllable = match tag {
                "ctrl" => true,
                "unctrl" => false,
                _ => return Err(bad(n, "label tag must be ctrl or unctrl")),
            };
            let label = ActionLabel::new(name.trim(), controllable)
                .map_err(|e| bad(n, &e.to_string()))?;
            let id = builder.add_label(label).map_err(|e| bad(n, &e.to_string()))?;
            label_ids.insert(name.trim().to_string(), id);
        }

        let num_states = next_counted("states", &mut lines)?;
        builder.add_states(num_states);
        let (n, line) = lines.next().ok_or_else(|| bad(0, "truncated file"))?;
        let initial: usize = line
            .strip_prefix("initial")
            .and_then(|r| r.trim().parse().ok())
            .ok_or_else(|| bad(n, "expected `initial <state>`"))?;
        builder.set_initial(initial);

        let count = next_counted("memory", &mut lines)?;
        let mut memory = vec![0usize; num_states];
        for _ in 0..count {
            let (n, line) = lines.next().ok_or_else(|| bad(0, "truncated memory"))?;
            let mut parts = line.split_whitespace();
            let state: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(n, "bad memory line"))?;
            let goal: usize = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(n, "bad memory line"))?;
            if state >= num_states {
                return Err(bad(n, "memory state out of range"));
            }
            memory[state] = goal;
        }

        let count = next_counted("transitions", &mut lines)?;
        for _ in 0..count {
            let (n, line) = lines.next().ok_or_else(|| bad(0, "truncated transitions"))?;
            let mut parts = line.split_whitespace();
            let err = || bad(n, "expected `src label dst`");
            let src: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(err)?;
            let label = parts.next().ok_or_else(err)?;
            let dst: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(err)?;
            let id = *label_ids
                .get(label)
                .ok_or_else(|| bad(n, &format!("unknown label `{label}`")))?;
            builder
                .add_transition(src, id, dst)
                .map_err(|e| bad(n, &e.to_string()))?;
        }
        Ok(Controller { lts: builder.build()?, memory })
    }
}
