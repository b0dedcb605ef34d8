//! Fluents and linear temporal formulas over event traces.
//!
//! A fluent is a boolean state variable driven by events: a set of actions
//! makes it true, a set makes it false, everything else leaves it unchanged.
//! An action name used directly as an atom denotes the singleton fluent that
//! is true exactly at the position just after that action. Formulas are
//! evaluated over infinite traces represented as lassos (finite prefix plus
//! repeated loop).
//!
//! Positions: position 0 is the initial valuation before any action has
//! occurred; position `i >= 1` carries the valuation updated by the i-th
//! action. `X f` at position `i` means `f` at position `i + 1`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::lts::valid_action_name;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FltlError {
    #[error("fluent `{0}`: an action occurs in both the true-set and the false-set")]
    OverlappingSets(String),
    #[error("duplicate fluent `{0}`")]
    DuplicateFluent(String),
    #[error("unsupported fragment at `{subtree}`: {reason}")]
    UnsupportedFragment { subtree: String, reason: String },
    #[error("atom `{0}` is neither a declared fluent nor a valid action name")]
    UnknownAtom(String),
}

/// Event-triggered boolean state variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fluent {
    name: String,
    kind: FluentKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum FluentKind {
    Declared {
        set_true: BTreeSet<String>,
        set_false: BTreeSet<String>,
        initial: bool,
    },
    /// True exactly at the position just after the action named by the
    /// fluent itself (every other action resets it).
    ActionSelf,
}

impl Fluent {
    pub fn new<T, F>(name: &str, set_true: T, set_false: F, initial: bool) -> Result<Self, FltlError>
    where
        T: IntoIterator,
        T::Item: Into<String>,
        F: IntoIterator,
        F::Item: Into<String>,
    {
        let set_true: BTreeSet<String> = set_true.into_iter().map(Into::into).collect();
        let set_false: BTreeSet<String> = set_false.into_iter().map(Into::into).collect();
        if set_true.intersection(&set_false).next().is_some() {
            return Err(FltlError::OverlappingSets(name.to_string()));
        }
        Ok(Fluent {
            name: name.to_string(),
            kind: FluentKind::Declared { set_true, set_false, initial },
        })
    }

    /// The fluent `⟨{action}, Act∖{action}, false⟩`.
    pub fn singleton(action: &str) -> Self {
        Fluent { name: action.to_string(), kind: FluentKind::ActionSelf }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn initial(&self) -> bool {
        match &self.kind {
            FluentKind::Declared { initial, .. } => *initial,
            FluentKind::ActionSelf => false,
        }
    }

    /// Value after `action` occurs, given the value before it.
    pub fn update(&self, current: bool, action: &str) -> bool {
        match &self.kind {
            FluentKind::Declared { set_true, set_false, .. } => {
                if set_true.contains(action) {
                    true
                } else if set_false.contains(action) {
                    false
                } else {
                    current
                }
            }
            FluentKind::ActionSelf => action == self.name,
        }
    }

    /// Actions that set the fluent true (`None` for singleton fluents).
    pub fn set_true(&self) -> Option<&BTreeSet<String>> {
        match &self.kind {
            FluentKind::Declared { set_true, .. } => Some(set_true),
            FluentKind::ActionSelf => None,
        }
    }

    pub fn set_false(&self) -> Option<&BTreeSet<String>> {
        match &self.kind {
            FluentKind::Declared { set_false, .. } => Some(set_false),
            FluentKind::ActionSelf => None,
        }
    }
}

/// Ordered collection of declared fluents; the index of a fluent is its slot
/// in a [`Valuation`].
#[derive(Clone, Debug, Default)]
pub struct FluentTable {
    fluents: Vec<Fluent>,
    by_name: HashMap<String, usize>,
}

pub type Valuation = Vec<bool>;

impl FluentTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_fluents<I: IntoIterator<Item = Fluent>>(fluents: I) -> Result<Self, FltlError> {
        let mut t = FluentTable::new();
        for f in fluents {
            t.add(f)?;
        }
        Ok(t)
    }

    pub fn add(&mut self, fluent: Fluent) -> Result<usize, FltlError> {
        if self.by_name.contains_key(fluent.name()) {
            return Err(FltlError::DuplicateFluent(fluent.name().to_string()));
        }
        let idx = self.fluents.len();
        self.by_name.insert(fluent.name().to_string(), idx);
        self.fluents.push(fluent);
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.fluents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fluents.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn fluent(&self, idx: usize) -> &Fluent {
        &self.fluents[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Fluent> {
        self.fluents.iter()
    }

    pub fn initial_valuation(&self) -> Valuation {
        self.fluents.iter().map(Fluent::initial).collect()
    }

    /// Single-step fluent update: every declared fluent reacts to `action`.
    pub fn update(&self, values: &Valuation, action: &str) -> Valuation {
        debug_assert_eq!(values.len(), self.fluents.len(), "valuation must cover all fluents");
        self.fluents
            .iter()
            .zip(values)
            .map(|(f, &v)| f.update(v, action))
            .collect()
    }
}

/// FLTL abstract syntax. Atoms name declared fluents or actions (the latter
/// read as action-singleton fluents).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Formula {
    True,
    False,
    Atom(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    Eventually(Box<Formula>),
    Always(Box<Formula>),
    WeakUntil(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn atom(name: &str) -> Formula {
        Formula::Atom(name.to_string())
    }

    #[allow(clippy::should_implement_trait)] // builder-style chaining, not an operator impl
    pub fn not(self) -> Formula {
        Formula::Not(Box::new(self))
    }

    pub fn and(self, rhs: Formula) -> Formula {
        Formula::And(Box::new(self), Box::new(rhs))
    }

    pub fn or(self, rhs: Formula) -> Formula {
        Formula::Or(Box::new(self), Box::new(rhs))
    }

    pub fn implies(self, rhs: Formula) -> Formula {
        Formula::Implies(Box::new(self), Box::new(rhs))
    }

    pub fn next(self) -> Formula {
        Formula::Next(Box::new(self))
    }

    pub fn eventually(self) -> Formula {
        Formula::Eventually(Box::new(self))
    }

    pub fn always(self) -> Formula {
        Formula::Always(Box::new(self))
    }

    pub fn weak_until(self, rhs: Formula) -> Formula {
        Formula::WeakUntil(Box::new(self), Box::new(rhs))
    }

    /// True if the formula contains no temporal operator.
    pub fn is_propositional(&self) -> bool {
        match self {
            Formula::True | Formula::False | Formula::Atom(_) => true,
            Formula::Not(f) => f.is_propositional(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
                a.is_propositional() && b.is_propositional()
            }
            Formula::Next(_)
            | Formula::Eventually(_)
            | Formula::Always(_)
            | Formula::WeakUntil(_, _) => false,
        }
    }

    pub fn collect_atoms<'f>(&'f self, out: &mut BTreeSet<&'f str>) {
        match self {
            Formula::True | Formula::False => {}
            Formula::Atom(a) => {
                out.insert(a);
            }
            Formula::Not(f)
            | Formula::Next(f)
            | Formula::Eventually(f)
            | Formula::Always(f) => f.collect_atoms(out),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b)
            | Formula::WeakUntil(a, b) => {
                a.collect_atoms(out);
                b.collect_atoms(out);
            }
        }
    }

    /// Evaluates a propositional formula against a valuation. Panics if the
    /// formula has temporal operators; atoms missing from the lookup are
    /// false (an action-singleton atom evaluated statically).
    pub fn eval_propositional(&self, lookup: &dyn Fn(&str) -> bool) -> bool {
        match self {
            Formula::True => true,
            Formula::False => false,
            Formula::Atom(a) => lookup(a),
            Formula::Not(f) => !f.eval_propositional(lookup),
            Formula::And(a, b) => a.eval_propositional(lookup) && b.eval_propositional(lookup),
            Formula::Or(a, b) => a.eval_propositional(lookup) || b.eval_propositional(lookup),
            Formula::Implies(a, b) => !a.eval_propositional(lookup) || b.eval_propositional(lookup),
            _ => panic!("eval_propositional called on temporal formula"),
        }
    }

    fn binding_power(&self) -> u8 {
        match self {
            Formula::Implies(..) => 1,
            Formula::Or(..) => 2,
            Formula::And(..) => 3,
            Formula::WeakUntil(..) => 4,
            _ => 5,
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(f: &mut fmt::Formatter<'_>, c: &Formula, parent_bp: u8) -> fmt::Result {
            if c.binding_power() < parent_bp {
                write!(f, "({})", c)
            } else {
                write!(f, "{}", c)
            }
        }
        let bp = self.binding_power();
        match self {
            Formula::True => write!(f, "true"),
            Formula::False => write!(f, "false"),
            Formula::Atom(a) => write!(f, "{}", a),
            Formula::Not(x) => {
                write!(f, "!")?;
                child(f, x, 5)
            }
            Formula::Next(x) => {
                write!(f, "X ")?;
                child(f, x, 5)
            }
            Formula::Eventually(x) => {
                write!(f, "F ")?;
                child(f, x, 5)
            }
            Formula::Always(x) => {
                write!(f, "G ")?;
                child(f, x, 5)
            }
            Formula::And(a, b) => {
                child(f, a, bp)?;
                write!(f, " && ")?;
                child(f, b, bp)
            }
            Formula::Or(a, b) => {
                child(f, a, bp)?;
                write!(f, " || ")?;
                child(f, b, bp)
            }
            Formula::Implies(a, b) => {
                child(f, a, bp + 1)?;
                write!(f, " -> ")?;
                child(f, b, bp)
            }
            Formula::WeakUntil(a, b) => {
                child(f, a, bp + 1)?;
                write!(f, " W ")?;
                child(f, b, bp + 1)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Lasso evaluation
// ---------------------------------------------------------------------------

/// Precomputed fluent valuations along `prefix · loop^ω`, folded to a finite
/// stem plus cycle once the valuation at the loop boundary repeats. The same
/// context can evaluate many formulas over one trace.
pub struct LassoValuations<'t> {
    table: &'t FluentTable,
    /// Declared-fluent valuation at each canonical position.
    decl: Vec<Valuation>,
    /// Action taken to reach each position (`None` at position 0).
    action: Vec<Option<String>>,
    stem: usize,
    total: usize,
}

impl<'t> LassoValuations<'t> {
    /// Unrolls the loop until the declared-fluent valuation at the loop
    /// boundary repeats. Panics if `loop_actions` is empty (caller
    /// precondition) or if no repeat shows up within `2^fluents + 1`
    /// traversals, which the pigeonhole principle rules out.
    pub fn new<S: AsRef<str>>(
        table: &'t FluentTable,
        prefix: &[S],
        loop_actions: &[S],
    ) -> LassoValuations<'t> {
        assert!(!loop_actions.is_empty(), "lasso loop must be non-empty");
        let mut decl = vec![table.initial_valuation()];
        let mut action: Vec<Option<String>> = vec![None];
        let push = |decl: &mut Vec<Valuation>, action: &mut Vec<Option<String>>, a: &str| {
            let next = table.update(decl.last().unwrap(), a);
            decl.push(next);
            action.push(Some(a.to_string()));
        };
        for a in prefix {
            push(&mut decl, &mut action, a.as_ref());
        }

        let cap = 1usize
            .checked_shl(table.len().min(24) as u32)
            .unwrap_or(usize::MAX)
            .saturating_add(1);
        let mut boundary_seen: HashMap<Valuation, usize> = HashMap::new();
        boundary_seen.insert(decl.last().unwrap().clone(), 0);
        let mut repeat = None;
        for k in 1..=cap {
            for a in loop_actions {
                push(&mut decl, &mut action, a.as_ref());
            }
            if let Some(&first) = boundary_seen.get(decl.last().unwrap()) {
                repeat = Some((first, k));
                break;
            }
            boundary_seen.insert(decl.last().unwrap().clone(), k);
        }
        let (rho, k) = repeat.expect("loop valuation failed to stabilize");
        let lambda = k - rho;
        let stem = 1 + prefix.len() + rho * loop_actions.len();
        let total = stem + lambda * loop_actions.len();
        decl.truncate(total);
        action.truncate(total);
        LassoValuations { table, decl, action, stem, total }
    }

    fn next_pos(&self, p: usize) -> usize {
        if p + 1 < self.total {
            p + 1
        } else {
            self.stem
        }
    }

    /// Truth of `f` at position 0 of the infinite trace.
    pub fn eval(&self, f: &Formula) -> bool {
        // Flatten once into post-order nodes so memoization is a flat table
        // indexed by (node, position) instead of hashing subtrees.
        let mut nodes: Vec<FlatNode> = Vec::new();
        let root = self.flatten(f, &mut nodes);
        let mut memo: Vec<u8> = vec![UNKNOWN; nodes.len() * self.total];
        self.eval_flat(&nodes, root, 0, &mut memo)
    }

    fn flatten(&self, f: &Formula, nodes: &mut Vec<FlatNode>) -> usize {
        let node = match f {
            Formula::True => FlatNode::Const(true),
            Formula::False => FlatNode::Const(false),
            Formula::Atom(a) => match self.table.index_of(a) {
                Some(idx) => FlatNode::Declared(idx),
                None => FlatNode::Singleton(
                    self.action
                        .iter()
                        .map(|act| act.as_deref() == Some(a.as_str()))
                        .collect(),
                ),
            },
            Formula::Not(x) => FlatNode::Not(self.flatten(x, nodes)),
            Formula::And(a, b) => FlatNode::And(self.flatten(a, nodes), self.flatten(b, nodes)),
            Formula::Or(a, b) => FlatNode::Or(self.flatten(a, nodes), self.flatten(b, nodes)),
            Formula::Implies(a, b) => {
                FlatNode::Imp(self.flatten(a, nodes), self.flatten(b, nodes))
            }
            Formula::Next(x) => FlatNode::Next(self.flatten(x, nodes)),
            Formula::Eventually(x) => FlatNode::Eventually(self.flatten(x, nodes)),
            Formula::Always(x) => FlatNode::Always(self.flatten(x, nodes)),
            Formula::WeakUntil(a, b) => {
                FlatNode::Weak(self.flatten(a, nodes), self.flatten(b, nodes))
            }
        };
        nodes.push(node);
        nodes.len() - 1
    }

    fn eval_flat(&self, nodes: &[FlatNode], n: usize, p: usize, memo: &mut [u8]) -> bool {
        let slot = n * self.total + p;
        if memo[slot] != UNKNOWN {
            return memo[slot] == 1;
        }
        let reach_start = if p < self.stem { p } else { self.stem };
        let value = match &nodes[n] {
            FlatNode::Const(v) => *v,
            FlatNode::Declared(idx) => self.decl[p][*idx],
            FlatNode::Singleton(at) => at[p],
            FlatNode::Not(x) => !self.eval_flat(nodes, *x, p, memo),
            FlatNode::And(a, b) => {
                self.eval_flat(nodes, *a, p, memo) && self.eval_flat(nodes, *b, p, memo)
            }
            FlatNode::Or(a, b) => {
                self.eval_flat(nodes, *a, p, memo) || self.eval_flat(nodes, *b, p, memo)
            }
            FlatNode::Imp(a, b) => {
                !self.eval_flat(nodes, *a, p, memo) || self.eval_flat(nodes, *b, p, memo)
            }
            FlatNode::Next(x) => self.eval_flat(nodes, *x, self.next_pos(p), memo),
            // From a stem position the future is everything from it onward;
            // from a cycle position the wrap makes the whole cycle
            // reachable.
            FlatNode::Eventually(x) => {
                (reach_start..self.total).any(|q| self.eval_flat(nodes, *x, q, memo))
            }
            FlatNode::Always(x) => {
                (reach_start..self.total).all(|q| self.eval_flat(nodes, *x, q, memo))
            }
            FlatNode::Weak(a, b) => {
                let (a, b) = (*a, *b);
                let mut i = p;
                let mut result = true;
                for _ in 0..=self.total {
                    if self.eval_flat(nodes, b, i, memo) {
                        result = true;
                        break;
                    }
                    if !self.eval_flat(nodes, a, i, memo) {
                        result = false;
                        break;
                    }
                    i = self.next_pos(i);
                }
                result
            }
        };
        memo[slot] = value as u8;
        value
    }
}

const UNKNOWN: u8 = 2;

enum FlatNode {
    Const(bool),
    Declared(usize),
    /// Singleton atom, precomputed as its truth at every position.
    Singleton(Vec<bool>),
    Not(usize),
    And(usize, usize),
    Or(usize, usize),
    Imp(usize, usize),
    Next(usize),
    Eventually(usize),
    Always(usize),
    Weak(usize, usize),
}

/// Truth value of `f` over the infinite trace `prefix · loop^ω`.
///
/// The loop must be non-empty. Unrolls until the fluent valuation becomes
/// periodic, then decides all temporal operators exactly on the folded lasso.
pub fn evaluate_lasso<S: AsRef<str>>(
    f: &Formula,
    prefix: &[S],
    loop_actions: &[S],
    table: &FluentTable,
) -> bool {
    LassoValuations::new(table, prefix, loop_actions).eval(f)
}

// ---------------------------------------------------------------------------
// GR(1) classification
// ---------------------------------------------------------------------------

/// Safety and liveness parts of a specification in the supported fragment:
/// conjoined safety plus `∧GF assumption_i -> ∧GF goal_j`.
#[derive(Clone, Debug, Default)]
pub struct Gr1Spec {
    pub safety: Vec<SafetyRule>,
    /// Bodies of the `GF`-assumptions (boolean combinations of fluents).
    pub assumptions: Vec<Formula>,
    /// Bodies of the `GF`-goals (boolean combinations of fluents).
    pub goals: Vec<Formula>,
}

/// One conjunct of the conjoined safety specification.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SafetyRule {
    /// A boolean body that must hold at every position.
    Invariant(Formula),
    /// When `guard` holds at a position, the immediately next action must be
    /// `action` (the `G (p -> X a)` prompt-reaction shape).
    Prompt { guard: Formula, action: String },
}

fn split_conjuncts<'f>(f: &'f Formula, out: &mut Vec<&'f Formula>) {
    match f {
        Formula::And(a, b) => {
            split_conjuncts(a, out);
            split_conjuncts(b, out);
        }
        other => out.push(other),
    }
}

fn check_closed(f: &Formula, table: &FluentTable) -> Result<(), FltlError> {
    let mut atoms = BTreeSet::new();
    f.collect_atoms(&mut atoms);
    for a in atoms {
        if table.index_of(a).is_none() && !valid_action_name(a) {
            return Err(FltlError::UnknownAtom(a.to_string()));
        }
    }
    Ok(())
}

fn expect_boolean(f: &Formula, table: &FluentTable) -> Result<Formula, FltlError> {
    if !f.is_propositional() {
        return Err(FltlError::UnsupportedFragment {
            subtree: f.to_string(),
            reason: "expected a boolean combination of fluents".into(),
        });
    }
    check_closed(f, table)?;
    Ok(f.clone())
}

fn classify_recurrence(
    f: &Formula,
    table: &FluentTable,
    out: &mut Vec<Formula>,
) -> Result<(), FltlError> {
    let mut conjuncts = Vec::new();
    split_conjuncts(f, &mut conjuncts);
    for c in conjuncts {
        match c {
            Formula::Always(inner) => match inner.as_ref() {
                Formula::Eventually(body) => out.push(expect_boolean(body, table)?),
                other => {
                    return Err(FltlError::UnsupportedFragment {
                        subtree: other.to_string(),
                        reason: "recurrence formulas must have the shape G F body".into(),
                    })
                }
            },
            other => {
                return Err(FltlError::UnsupportedFragment {
                    subtree: other.to_string(),
                    reason: "recurrence formulas must have the shape G F body".into(),
                })
            }
        }
    }
    Ok(())
}

fn classify_safety_clause(
    clause: &Formula,
    table: &FluentTable,
    out: &mut Vec<SafetyRule>,
) -> Result<(), FltlError> {
    if clause.is_propositional() {
        out.push(SafetyRule::Invariant(expect_boolean(clause, table)?));
        return Ok(());
    }
    if let Formula::Implies(guard, rhs) = clause {
        if let Formula::Next(atom) = rhs.as_ref() {
            if let Formula::Atom(action) = atom.as_ref() {
                if table.index_of(action).is_some() || !valid_action_name(action) {
                    return Err(FltlError::UnsupportedFragment {
                        subtree: clause.to_string(),
                        reason: "X must be applied to an action-singleton fluent".into(),
                    });
                }
                let guard = expect_boolean(guard, table)?;
                out.push(SafetyRule::Prompt { guard, action: action.clone() });
                return Ok(());
            }
        }
    }
    Err(FltlError::UnsupportedFragment {
        subtree: clause.to_string(),
        reason: "safety bodies are boolean clauses or `p -> X action` rules".into(),
    })
}

/// Validates formulas against the supported fragment and packages them:
/// safety formulas must be `G` over boolean bodies optionally containing
/// `p -> X action` clauses; assumptions and goals must be (conjunctions of)
/// `G F` over boolean bodies.
pub fn classify_gr1(
    safety: &[Formula],
    assumptions: &[Formula],
    goals: &[Formula],
    table: &FluentTable,
) -> Result<Gr1Spec, FltlError> {
    let mut spec = Gr1Spec::default();
    for f in safety {
        let mut conjuncts = Vec::new();
        split_conjuncts(f, &mut conjuncts);
        for c in conjuncts {
            match c {
                Formula::Always(body) => {
                    let mut clauses = Vec::new();
                    split_conjuncts(body, &mut clauses);
                    for clause in clauses {
                        classify_safety_clause(clause, table, &mut spec.safety)?;
                    }
                }
                other => {
                    return Err(FltlError::UnsupportedFragment {
                        subtree: other.to_string(),
                        reason: "safety formulas must be G-rooted".into(),
                    })
                }
            }
        }
    }
    for f in assumptions {
        classify_recurrence(f, table, &mut spec.assumptions)?;
    }
    for f in goals {
        classify_recurrence(f, table, &mut spec.goals)?;
    }
    Ok(spec)
}

impl Gr1Spec {
    /// All atoms referenced anywhere in the specification.
    pub fn referenced_atoms(&self) -> BTreeSet<String> {
        let mut atoms = BTreeSet::new();
        for rule in &self.safety {
            match rule {
                SafetyRule::Invariant(f) => f.collect_atoms(&mut atoms),
                SafetyRule::Prompt { guard, .. } => guard.collect_atoms(&mut atoms),
            }
        }
        for f in self.assumptions.iter().chain(&self.goals) {
            f.collect_atoms(&mut atoms);
        }
        atoms.into_iter().map(|s| s.to_string()).collect()
    }

    /// Action names required by prompt-reaction rules.
    pub fn prompt_actions(&self) -> BTreeSet<String> {
        self.safety
            .iter()
            .filter_map(|r| match r {
                SafetyRule::Prompt { action, .. } => Some(action.clone()),
                _ => None,
            })
            .collect()
    }
}
