//! Finite labelled transition systems with a controllable/uncontrollable
//! alphabet partition, parallel composition and structural checks.
//!
//! All LTS in this crate are deterministic: no state has two outgoing
//! transitions with the same label. Nondeterministic input is rejected at
//! construction time. States are opaque integers assigned in construction
//! order, so serialized artifacts carry stable ids.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

/// Opaque state identifier, assigned in construction order.
pub type StateId = usize;
/// Index of a label within its [`Alphabet`].
pub type LabelId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LtsError {
    #[error("invalid action name `{0}`")]
    InvalidActionName(String),
    #[error("label `{0}` already declared with different controllability")]
    ControllabilityMismatch(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("state {0} out of range")]
    StateOutOfRange(StateId),
    #[error("nondeterministic: state {state} has two transitions labelled `{label}`")]
    Nondeterministic { state: StateId, label: String },
}

/// An event label together with who owns it: the controller (controllable)
/// or the environment (uncontrollable).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionLabel {
    name: String,
    controllable: bool,
}

impl ActionLabel {
    /// Builds a label, validating the name against the action grammar
    /// `ident('.'ident)*('['int']')*`, e.g. `go[1][2]` or `alert.on`.
    pub fn new(name: &str, controllable: bool) -> Result<Self, LtsError> {
        if !valid_action_name(name) {
            return Err(LtsError::InvalidActionName(name.to_string()));
        }
        Ok(ActionLabel { name: name.to_string(), controllable })
    }

    pub fn controllable(name: &str) -> Result<Self, LtsError> {
        Self::new(name, true)
    }

    pub fn uncontrollable(name: &str) -> Result<Self, LtsError> {
        Self::new(name, false)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_controllable(&self) -> bool {
        self.controllable
    }
}

impl std::fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name)
    }
}

/// Checks the grammar `ident('.'ident)*('['int']')*`.
pub fn valid_action_name(s: &str) -> bool {
    let bytes = s.as_bytes();
    let mut i = 0usize;
    let ident = |i: &mut usize| -> bool {
        let start = *i;
        while *i < bytes.len()
            && (bytes[*i].is_ascii_alphanumeric() || bytes[*i] == b'_')
        {
            *i += 1;
        }
        *i > start && !bytes[start].is_ascii_digit()
    };
    if !ident(&mut i) {
        return false;
    }
    while i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        if !ident(&mut i) {
            return false;
        }
    }
    while i < bytes.len() && bytes[i] == b'[' {
        i += 1;
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == start || i >= bytes.len() || bytes[i] != b']' {
            return false;
        }
        i += 1;
    }
    i == bytes.len()
}

/// A set of action labels with unique names and a fixed controllability per
/// name.
#[derive(Clone, Debug, Default)]
pub struct Alphabet {
    labels: Vec<ActionLabel>,
    by_name: HashMap<String, LabelId>,
}

impl Alphabet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I: IntoIterator<Item = ActionLabel>>(labels: I) -> Result<Self, LtsError> {
        let mut a = Alphabet::new();
        for l in labels {
            a.insert(l)?;
        }
        Ok(a)
    }

    /// Inserts a label; re-inserting the same name with the same
    /// controllability returns the existing id, a conflicting flag is an
    /// error.
    pub fn insert(&mut self, label: ActionLabel) -> Result<LabelId, LtsError> {
        if let Some(&id) = self.by_name.get(label.name()) {
            if self.labels[id].controllable != label.controllable {
                return Err(LtsError::ControllabilityMismatch(label.name.clone()));
            }
            return Ok(id);
        }
        let id = self.labels.len();
        self.by_name.insert(label.name.clone(), id);
        self.labels.push(label);
        Ok(id)
    }

    pub fn id_of(&self, name: &str) -> Option<LabelId> {
        self.by_name.get(name).copied()
    }

    pub fn label(&self, id: LabelId) -> &ActionLabel {
        &self.labels[id]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ActionLabel> {
        self.labels.iter()
    }

    pub fn controllable_names(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().filter(|l| l.controllable).map(|l| l.name.as_str())
    }
}

/// Incremental LTS construction with determinism checking.
#[derive(Debug, Default)]
pub struct LtsBuilder {
    alphabet: Alphabet,
    out: Vec<Vec<(LabelId, StateId)>>,
    initial: StateId,
}

impl LtsBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_state(&mut self) -> StateId {
        self.out.push(Vec::new());
        self.out.len() - 1
    }

    pub fn add_states(&mut self, n: usize) -> StateId {
        let first = self.out.len();
        self.out.resize_with(first + n, Vec::new);
        first
    }

    pub fn add_label(&mut self, label: ActionLabel) -> Result<LabelId, LtsError> {
        self.alphabet.insert(label)
    }

    pub fn set_initial(&mut self, s: StateId) {
        self.initial = s;
    }

    pub fn add_transition(
        &mut self,
        src: StateId,
        label: LabelId,
        dst: StateId,
    ) -> Result<(), LtsError> {
        if src >= self.out.len() {
            return Err(LtsError::StateOutOfRange(src));
        }
        if dst >= self.out.len() {
            return Err(LtsError::StateOutOfRange(dst));
        }
        if self.out[src].iter().any(|&(l, _)| l == label) {
            return Err(LtsError::Nondeterministic {
                state: src,
                label: self.alphabet.label(label).name().to_string(),
            });
        }
        self.out[src].push((label, dst));
        Ok(())
    }

    pub fn build(mut self) -> Result<Lts, LtsError> {
        if self.out.is_empty() {
            self.out.push(Vec::new());
        }
        if self.initial >= self.out.len() {
            return Err(LtsError::StateOutOfRange(self.initial));
        }
        for edges in &mut self.out {
            edges.sort_unstable();
        }
        Ok(Lts { alphabet: self.alphabet, initial: self.initial, out: self.out })
    }
}

/// A deterministic finite labelled transition system. Immutable after
/// construction, so values can be read from any number of threads.
#[derive(Clone, Debug)]
pub struct Lts {
    alphabet: Alphabet,
    initial: StateId,
    out: Vec<Vec<(LabelId, StateId)>>,
}

impl Lts {
    /// A single-state LTS with an empty alphabet and no transitions
    /// (the identity element of interleaving composition).
    pub fn unit() -> Lts {
        Lts { alphabet: Alphabet::new(), initial: 0, out: vec![Vec::new()] }
    }

    pub fn num_states(&self) -> usize {
        self.out.len()
    }

    pub fn num_transitions(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// Outgoing transitions of `s`, sorted by label id.
    pub fn transitions_from(&self, s: StateId) -> &[(LabelId, StateId)] {
        &self.out[s]
    }

    pub fn successor(&self, s: StateId, label: LabelId) -> Option<StateId> {
        self.out[s].iter().find(|&&(l, _)| l == label).map(|&(_, t)| t)
    }

    /// Parallel composition: shared labels synchronise, non-shared labels
    /// interleave. Only the part reachable from the initial pair is built.
    ///
    /// Fails with [`LtsError::ControllabilityMismatch`] if a shared label is
    /// controllable in one alphabet and uncontrollable in the other.
    pub fn parallel_compose(&self, other: &Lts) -> Result<Lts, LtsError> {
        let mut alphabet = self.alphabet.clone();
        for l in other.alphabet.iter() {
            alphabet.insert(l.clone())?;
        }
        // For every merged label, how each side moves: None = not in that
        // component's alphabet (stays put).
        let left_id: Vec<Option<LabelId>> =
            alphabet.iter().map(|l| self.alphabet.id_of(l.name())).collect();
        let right_id: Vec<Option<LabelId>> =
            alphabet.iter().map(|l| other.alphabet.id_of(l.name())).collect();

        let mut map: HashMap<(StateId, StateId), StateId> = HashMap::new();
        let mut pairs: Vec<(StateId, StateId)> = Vec::new();
        let mut out: Vec<Vec<(LabelId, StateId)>> = Vec::new();
        let mut queue = VecDeque::new();

        let start = (self.initial, other.initial);
        map.insert(start, 0);
        pairs.push(start);
        out.push(Vec::new());
        queue.push_back(0usize);

        while let Some(id) = queue.pop_front() {
            let (sa, sb) = pairs[id];
            let mut edges = Vec::new();
            for merged in 0..alphabet.len() {
                let ta = match left_id[merged] {
                    Some(l) => match self.successor(sa, l) {
                        Some(t) => Some(t),
                        None => continue, // label in alphabet but not enabled
                    },
                    None => None,
                };
                let tb = match right_id[merged] {
                    Some(l) => match other.successor(sb, l) {
                        Some(t) => Some(t),
                        None => continue,
                    },
                    None => None,
                };
                let next = (ta.unwrap_or(sa), tb.unwrap_or(sb));
                let next_id = *map.entry(next).or_insert_with(|| {
                    pairs.push(next);
                    out.push(Vec::new());
                    queue.push_back(pairs.len() - 1);
                    pairs.len() - 1
                });
                edges.push((merged, next_id));
            }
            out[id] = edges;
        }
        Ok(Lts { alphabet, initial: 0, out })
    }

    /// Returns the sub-LTS of states reachable from the initial state,
    /// renumbered in discovery order.
    pub fn reachable_part(&self) -> Lts {
        let mut map: HashMap<StateId, StateId> = HashMap::new();
        let mut order: Vec<StateId> = Vec::new();
        let mut queue = VecDeque::new();
        map.insert(self.initial, 0);
        order.push(self.initial);
        queue.push_back(self.initial);
        while let Some(s) = queue.pop_front() {
            for &(_, t) in &self.out[s] {
                if let std::collections::hash_map::Entry::Vacant(e) = map.entry(t) {
                    e.insert(order.len());
                    order.push(t);
                    queue.push_back(t);
                }
            }
        }
        let out = order
            .iter()
            .map(|&s| self.out[s].iter().map(|&(l, t)| (l, map[&t])).collect())
            .collect();
        Lts { alphabet: self.alphabet.clone(), initial: 0, out }
    }

    /// `None` if every reachable state has at least one outgoing transition;
    /// otherwise a path of labels from the initial state to a deadlocked
    /// state (empty if the initial state itself deadlocks).
    pub fn find_deadlock(&self) -> Option<Vec<ActionLabel>> {
        let mut parent: HashMap<StateId, (StateId, LabelId)> = HashMap::new();
        let mut seen = vec![false; self.out.len()];
        let mut queue = VecDeque::new();
        seen[self.initial] = true;
        queue.push_back(self.initial);
        while let Some(s) = queue.pop_front() {
            if self.out[s].is_empty() {
                let mut path = Vec::new();
                let mut cur = s;
                while cur != self.initial {
                    let (p, l) = parent[&cur];
                    path.push(self.alphabet.label(l).clone());
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for &(l, t) in &self.out[s] {
                if !seen[t] {
                    seen[t] = true;
                    parent.insert(t, (s, l));
                    queue.push_back(t);
                }
            }
        }
        None
    }

    pub fn is_deadlock_free(&self) -> bool {
        self.find_deadlock().is_none()
    }

    /// Isomorphism of the reachable parts under state relabelling. Both LTS
    /// must be deterministic (guaranteed by construction), so a synchronized
    /// traversal from the initial states decides the question.
    pub fn is_isomorphic_to(&self, other: &Lts) -> bool {
        // Alphabets must carry the same names with the same controllability.
        if self.alphabet.len() != other.alphabet.len() {
            return false;
        }
        for l in self.alphabet.iter() {
            match other.alphabet.id_of(l.name()) {
                Some(id) if other.alphabet.label(id).is_controllable() == l.is_controllable() => {}
                _ => return false,
            }
        }
        let mut pair_of: HashMap<StateId, StateId> = HashMap::new();
        let mut matched: HashMap<StateId, StateId> = HashMap::new();
        let mut queue = VecDeque::new();
        pair_of.insert(self.initial, other.initial);
        matched.insert(other.initial, self.initial);
        queue.push_back((self.initial, other.initial));
        while let Some((sa, sb)) = queue.pop_front() {
            let ea = &self.out[sa];
            let eb = &other.out[sb];
            if ea.len() != eb.len() {
                return false;
            }
            for &(la, ta) in ea {
                let name = self.alphabet.label(la).name();
                let lb = match other.alphabet.id_of(name) {
                    Some(l) => l,
                    None => return false,
                };
                let tb = match other.successor(sb, lb) {
                    Some(t) => t,
                    None => return false,
                };
                match (pair_of.get(&ta), matched.get(&tb)) {
                    (Some(&m), _) if m != tb => return false,
                    (_, Some(&m)) if m != ta => return false,
                    (Some(_), Some(_)) => {}
                    _ => {
                        pair_of.insert(ta, tb);
                        matched.insert(tb, ta);
                        queue.push_back((ta, tb));
                    }
                }
            }
        }
        true
    }

    /// Serializes in the dump format: a header with `ctrl`/`unctrl`-tagged
    /// alphabet lines followed by one `state label state` record per
    /// transition.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "lts v1").unwrap();
        writeln!(s, "alphabet {}", self.alphabet.len()).unwrap();
        for l in self.alphabet.iter() {
            let tag = if l.is_controllable() { "ctrl" } else { "unctrl" };
            writeln!(s, "{} {}", tag, l.name()).unwrap();
        }
        writeln!(s, "states {}", self.num_states()).unwrap();
        writeln!(s, "initial {}", self.initial).unwrap();
        writeln!(s, "transitions {}", self.num_transitions()).unwrap();
        for (src, edges) in self.out.iter().enumerate() {
            for &(l, dst) in edges {
                writeln!(s, "{} {} {}", src, self.alphabet.label(l).name(), dst).unwrap();
            }
        }
        s
    }
}
