//! Finite Kripke models and the relational semantics of formulas, programs,
//! and labelled sequents, plus a brute-force countermodel enumerator and the
//! counterexample-path measure apparatus used by the soundness-oriented tests.

use crate::syntax::{Formula, Item, Label, Program, ProgName, PropName, Sequent};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// States are named; the canonical generated names are `s1`, `s2`, ….
pub type State = String;

/// A total assignment of sequent labels to model states.
pub type Valuation = BTreeMap<Label, State>;

/// A finite Kripke model: a state set, an interpretation of proposition
/// names as state sets, and an interpretation of atomic program names as
/// binary relations on states. Names absent from the maps are interpreted
/// as empty (false everywhere / no edges).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KripkeModel {
    pub states: BTreeSet<State>,
    pub props: BTreeMap<PropName, BTreeSet<State>>,
    pub progs: BTreeMap<ProgName, BTreeSet<(State, State)>>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SemanticsError {
    #[error("model has no states; at least one state is required")]
    EmptyModel,
    #[error("model refers to unknown state `{0}`")]
    UnknownState(String),
    #[error("valuation does not cover label `{0}`")]
    PartialValuation(Label),
    #[error("valuation maps label `{label}` to unknown state `{state}`")]
    ValuationUnknownState { label: Label, state: String },
}

impl KripkeModel {
    pub fn new(
        states: impl IntoIterator<Item = State>,
        props: impl IntoIterator<Item = (PropName, BTreeSet<State>)>,
        progs: impl IntoIterator<Item = (ProgName, BTreeSet<(State, State)>)>,
    ) -> Self {
        KripkeModel {
            states: states.into_iter().collect(),
            props: props.into_iter().collect(),
            progs: progs.into_iter().collect(),
        }
    }

    /// Checks the internal invariants: non-empty state set and every state
    /// referenced by an interpretation being a member of `states`.
    pub fn validate(&self) -> Result<(), SemanticsError> {
        if self.states.is_empty() {
            return Err(SemanticsError::EmptyModel);
        }
        for set in self.props.values() {
            for s in set {
                if !self.states.contains(s) {
                    return Err(SemanticsError::UnknownState(s.clone()));
                }
            }
        }
        for rel in self.progs.values() {
            for (a, b) in rel {
                for s in [a, b] {
                    if !self.states.contains(s) {
                        return Err(SemanticsError::UnknownState(s.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn prop_set(&self, p: &PropName) -> BTreeSet<State> {
        self.props.get(p).cloned().unwrap_or_default()
    }

    pub fn prog_rel(&self, a: &ProgName) -> BTreeSet<(State, State)> {
        self.progs.get(a).cloned().unwrap_or_default()
    }

    /// Checks that a valuation covers every label of `s` and maps into the
    /// state set.
    pub fn check_valuation(&self, v: &Valuation, s: &Sequent) -> Result<(), SemanticsError> {
        for label in s.labels() {
            match v.get(&label) {
                None => return Err(SemanticsError::PartialValuation(label)),
                Some(st) if !self.states.contains(st) => {
                    return Err(SemanticsError::ValuationUnknownState {
                        label,
                        state: st.clone(),
                    })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

type Rel = BTreeSet<(State, State)>;

fn compose(r: &Rel, s: &Rel) -> Rel {
    let mut out = Rel::new();
    for (a, b) in r {
        for (c, d) in s {
            if b == c {
                out.insert((a.clone(), d.clone()));
            }
        }
    }
    out
}

fn reflexive_transitive_closure(states: &BTreeSet<State>, r: &Rel) -> Rel {
    let mut out: Rel = states.iter().map(|s| (s.clone(), s.clone())).collect();
    out.extend(r.iter().cloned());
    loop {
        let step = compose(&out, r);
        let before = out.len();
        out.extend(step);
        if out.len() == before {
            return out;
        }
    }
}

/// The relation denoted by a program: atomic names look up their edges,
/// `;` composes, `+` unions, `φ?` is the identity on the states satisfying
/// φ, and `α*` is the reflexive–transitive closure of the relation of α.
pub fn interp_program(m: &KripkeModel, alpha: &Program) -> Rel {
    match alpha {
        Program::Atom(a) => m.prog_rel(a),
        Program::Seq(a, b) => compose(&interp_program(m, a), &interp_program(m, b)),
        Program::Choice(a, b) => {
            let mut out = interp_program(m, a);
            out.extend(interp_program(m, b));
            out
        }
        Program::Test(phi) => interp_formula(m, phi)
            .into_iter()
            .map(|s| (s.clone(), s))
            .collect(),
        Program::Star(a) => reflexive_transitive_closure(&m.states, &interp_program(m, a)),
    }
}

/// The state set denoted by a formula. The box clause is computed literally
/// as S \ Π₁(⟦α⟧ ∘ Id_{S \ ⟦φ⟧}): a state fails [α]φ exactly when some
/// α-successor fails φ.
pub fn interp_formula(m: &KripkeModel, phi: &Formula) -> BTreeSet<State> {
    match phi {
        Formula::Bot => BTreeSet::new(),
        Formula::Atom(p) => m.prop_set(p),
        Formula::And(a, b) => {
            let fa = interp_formula(m, a);
            let fb = interp_formula(m, b);
            fa.intersection(&fb).cloned().collect()
        }
        Formula::Or(a, b) => {
            let mut out = interp_formula(m, a);
            out.extend(interp_formula(m, b));
            out
        }
        Formula::Imp(a, b) => {
            let fa = interp_formula(m, a);
            let fb = interp_formula(m, b);
            m.states
                .iter()
                .filter(|s| !fa.contains(*s) || fb.contains(*s))
                .cloned()
                .collect()
        }
        Formula::Box(alpha, body) => {
            let rel = interp_program(m, alpha);
            let good = interp_formula(m, body);
            let id_bad: Rel = m
                .states
                .iter()
                .filter(|s| !good.contains(*s))
                .map(|s| (s.clone(), s.clone()))
                .collect();
            let witness = compose(&rel, &id_bad);
            let bad_sources: BTreeSet<&State> = witness.iter().map(|(a, _)| a).collect();
            m.states
                .iter()
                .filter(|s| !bad_sources.contains(*s))
                .cloned()
                .collect()
        }
    }
}

/// Truth of a single sequent item under a valuation.
pub fn satisfies_item(m: &KripkeModel, v: &Valuation, item: &Item) -> Result<bool, SemanticsError> {
    match item {
        Item::Fml(lf) => {
            let st = v
                .get(&lf.label)
                .ok_or_else(|| SemanticsError::PartialValuation(lf.label.clone()))?;
            Ok(interp_formula(m, &lf.formula).contains(st))
        }
        Item::Rel(r) => {
            let src = v
                .get(&r.src)
                .ok_or_else(|| SemanticsError::PartialValuation(r.src.clone()))?;
            let dst = v
                .get(&r.dst)
                .ok_or_else(|| SemanticsError::PartialValuation(r.dst.clone()))?;
            Ok(m.prog_rel(&r.prog).contains(&(src.clone(), dst.clone())))
        }
    }
}

/// A sequent holds at (m, v) when some consequent item is true whenever all
/// antecedent items are true. The valuation must cover every label.
pub fn satisfies_sequent(
    m: &KripkeModel,
    v: &Valuation,
    s: &Sequent,
) -> Result<bool, SemanticsError> {
    m.check_valuation(v, s)?;
    for item in &s.ant {
        if !satisfies_item(m, v, item)? {
            return Ok(true);
        }
    }
    for item in &s.con {
        if satisfies_item(m, v, item)? {
            return Ok(true);
        }
    }
    Ok(false)
}

// ---------------------------------------------------------------------------
// Brute-force countermodel enumeration.
// ---------------------------------------------------------------------------

/// Result of the brute-force enumeration. `Timeout` covers both an exceeded
/// candidate budget and cooperative cancellation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BruteForce {
    Found(KripkeModel, Valuation),
    NotFound,
    Timeout,
}

/// The atomic signature of a sequent: proposition names, atomic program
/// names, and labels, each in sorted order.
pub fn signature(s: &Sequent) -> (Vec<PropName>, Vec<ProgName>, Vec<Label>) {
    let mut props = BTreeSet::new();
    let mut progs = BTreeSet::new();
    fn walk_formula(phi: &Formula, props: &mut BTreeSet<PropName>, progs: &mut BTreeSet<ProgName>) {
        match phi {
            Formula::Bot => {}
            Formula::Atom(p) => {
                props.insert(p.clone());
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Imp(a, b) => {
                walk_formula(a, props, progs);
                walk_formula(b, props, progs);
            }
            Formula::Box(alpha, body) => {
                walk_program(alpha, props, progs);
                walk_formula(body, props, progs);
            }
        }
    }
    fn walk_program(alpha: &Program, props: &mut BTreeSet<PropName>, progs: &mut BTreeSet<ProgName>) {
        match alpha {
            Program::Atom(a) => {
                progs.insert(a.clone());
            }
            Program::Seq(a, b) | Program::Choice(a, b) => {
                walk_program(a, props, progs);
                walk_program(b, props, progs);
            }
            Program::Test(phi) => walk_formula(phi, props, progs),
            Program::Star(a) => walk_program(a, props, progs),
        }
    }
    for item in s.ant.iter().chain(s.con.iter()) {
        match item {
            Item::Fml(lf) => walk_formula(&lf.formula, &mut props, &mut progs),
            Item::Rel(r) => {
                progs.insert(r.prog.clone());
            }
        }
    }
    let labels = s.labels().into_iter().collect();
    (
        props.into_iter().collect(),
        progs.into_iter().collect(),
        labels,
    )
}

/// Decodes candidate `idx` for a model over `n` states into (model,
/// valuation). Bit layout: proposition bits first (prop-major, then state),
/// then edge bits (program-major, then source, then target); the trailing
/// base-`n` digits assign labels to states.
fn decode_candidate(
    idx: u128,
    n: usize,
    props: &[PropName],
    progs: &[ProgName],
    labels: &[Label],
    state_names: &[State],
) -> (KripkeModel, Valuation) {
    let assignments = (n as u128).pow(labels.len() as u32);
    let mask = idx / assignments;
    let mut asg = idx % assignments;

    let mut prop_map = BTreeMap::new();
    for (pi, p) in props.iter().enumerate() {
        let mut set = BTreeSet::new();
        for (si, name) in state_names.iter().enumerate() {
            if mask >> (pi * n + si) & 1 == 1 {
                set.insert(name.clone());
            }
        }
        prop_map.insert(p.clone(), set);
    }
    let prog_offset = props.len() * n;
    let mut prog_map = BTreeMap::new();
    for (ai, a) in progs.iter().enumerate() {
        let mut rel = BTreeSet::new();
        for (si, sname) in state_names.iter().enumerate() {
            for (ti, tname) in state_names.iter().enumerate() {
                if mask >> (prog_offset + ai * n * n + si * n + ti) & 1 == 1 {
                    rel.insert((sname.clone(), tname.clone()));
                }
            }
        }
        prog_map.insert(a.clone(), rel);
    }
    let model = KripkeModel::new(state_names.iter().cloned(), prop_map, prog_map);

    let mut valuation = Valuation::new();
    for label in labels {
        let digit = (asg % n as u128) as usize;
        asg /= n as u128;
        valuation.insert(label.clone(), state_names[digit].clone());
    }
    (model, valuation)
}

fn falsifies(m: &KripkeModel, v: &Valuation, s: &Sequent) -> bool {
    matches!(satisfies_sequent(m, v, s), Ok(false))
}

/// Exhaustively enumerates models of at most `max_states` states over the
/// atomic signature of `s`, together with all label valuations, in a fixed
/// canonical order (state count ascending, then candidate index ascending),
/// and returns the first falsifying pair. `limit` bounds the total number
/// of candidates inspected; exceeding it — or a set cancellation flag —
/// yields `Timeout` instead of an answer.
pub fn brute_force_countermodel(
    s: &Sequent,
    max_states: usize,
    limit: Option<u64>,
    cancel: Option<&AtomicBool>,
) -> BruteForce {
    brute_force_impl(s, max_states, limit, cancel, true)
}

/// Sequential variant of [`brute_force_countermodel`]; same results, never
/// uses worker threads.
pub fn brute_force_countermodel_seq(
    s: &Sequent,
    max_states: usize,
    limit: Option<u64>,
    cancel: Option<&AtomicBool>,
) -> BruteForce {
    brute_force_impl(s, max_states, limit, cancel, false)
}

fn brute_force_impl(
    s: &Sequent,
    max_states: usize,
    limit: Option<u64>,
    cancel: Option<&AtomicBool>,
    parallel: bool,
) -> BruteForce {
    let (props, progs, labels) = signature(s);
    let mut remaining: u128 = limit.map(|l| l as u128).unwrap_or(u128::MAX);
    // Hard ceiling so a single state-count tier can always be indexed by u64.
    const TIER_CEILING: u128 = 1 << 48;

    for n in 1..=max_states.max(1) {
        let state_names: Vec<State> = (1..=n).map(|i| format!("s{i}")).collect();
        let bits = (props.len() * n + progs.len() * n * n) as u32;
        if bits >= 127 {
            return BruteForce::Timeout;
        }
        let assignments = (n as u128).pow(labels.len() as u32);
        let candidates = (1u128 << bits).saturating_mul(assignments);
        let tier = candidates.min(remaining).min(TIER_CEILING);
        let truncated = tier < candidates;

        let check = |idx: u64| -> Option<BruteForce> {
            if let Some(c) = cancel {
                if c.load(Ordering::Relaxed) {
                    return Some(BruteForce::Timeout);
                }
            }
            let (m, v) = decode_candidate(idx as u128, n, &props, &progs, &labels, &state_names);
            if falsifies(&m, &v, s) {
                Some(BruteForce::Found(m, v))
            } else {
                None
            }
        };

        let hit = if parallel {
            #[cfg(feature = "parallel")]
            {
                (0..tier as u64).into_par_iter().find_map_first(check)
            }
            #[cfg(not(feature = "parallel"))]
            {
                (0..tier as u64).find_map(check)
            }
        } else {
            (0..tier as u64).find_map(check)
        };

        match hit {
            Some(found @ BruteForce::Found(..)) => return found,
            Some(_) => return BruteForce::Timeout,
            None if truncated => return BruteForce::Timeout,
            None => {}
        }
        remaining -= tier;
        if remaining == 0 {
            return BruteForce::Timeout;
        }
    }
    BruteForce::NotFound
}

// ---------------------------------------------------------------------------
// Counterexample paths and the trace-value measure.
// ---------------------------------------------------------------------------

/// A non-empty state sequence in which every adjacent pair is connected by
/// at least one atomic program edge of the model it was built against.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ModelPath {
    states: Vec<State>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PathError {
    #[error("a model path must contain at least one state")]
    Empty,
    #[error("adjacent states `{0}` and `{1}` share no atomic program edge")]
    NotAdjacent(State, State),
}

impl ModelPath {
    pub fn new(m: &KripkeModel, states: Vec<State>) -> Result<Self, PathError> {
        if states.is_empty() {
            return Err(PathError::Empty);
        }
        for w in states.windows(2) {
            let adjacent = m
                .progs
                .values()
                .any(|rel| rel.contains(&(w[0].clone(), w[1].clone())));
            if !adjacent {
                return Err(PathError::NotAdjacent(w[0].clone(), w[1].clone()));
            }
        }
        Ok(ModelPath { states })
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A multiset of natural-number weights, ordered by the Dershowitz–Manna
/// multiset ordering.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TraceMeasure {
    counts: BTreeMap<u64, usize>,
}

impl TraceMeasure {
    pub fn new() -> Self {
        TraceMeasure::default()
    }

    pub fn from_weights(weights: impl IntoIterator<Item = u64>) -> Self {
        let mut m = TraceMeasure::new();
        for w in weights {
            m.insert(w);
        }
        m
    }

    pub fn insert(&mut self, w: u64) {
        *self.counts.entry(w).or_insert(0) += 1;
    }

    pub fn count(&self, w: u64) -> usize {
        self.counts.get(&w).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn weights(&self) -> impl Iterator<Item = (u64, usize)> + '_ {
        self.counts.iter().map(|(w, c)| (*w, *c))
    }
}

/// Strict Dershowitz–Manna ordering: `m` is smaller than `n` when they
/// differ and every weight whose count grew is dominated by a larger weight
/// whose count shrank.
pub fn dm_less(m: &TraceMeasure, n: &TraceMeasure) -> bool {
    if m == n {
        return false;
    }
    let domain: BTreeSet<u64> = m
        .counts
        .keys()
        .chain(n.counts.keys())
        .copied()
        .collect();
    for &y in &domain {
        if n.count(y) < m.count(y) {
            let witness = domain
                .iter()
                .any(|&x| x > y && m.count(x) < n.count(x));
            if !witness {
                return false;
            }
        }
    }
    true
}

/// Reflexive closure of [`dm_less`].
pub fn dm_leq(m: &TraceMeasure, n: &TraceMeasure) -> bool {
    m == n || dm_less(m, n)
}

use crate::traces::TraceValue;

/// All partitions `k_1 ≤ … ≤ k_n` (1-based indices into the path) such that
/// consecutive partition points are related by the spine programs and the
/// last partition point reaches the path's end through the focus iteration.
/// Returns the 1-based `k_n` values of valid partitions (with `k_0 = 1`).
fn partition_endpoints(
    m: &KripkeModel,
    tau: &TraceValue,
    path: &[State],
) -> Vec<usize> {
    let len = path.len();
    let spine_rels: Vec<Rel> = tau.spine.iter().map(|a| interp_program(m, a)).collect();
    let star_rel = interp_program(m, &Program::star(tau.focus.clone()));

    // reachable[i] = set of 1-based positions k_i can take.
    let mut current: Vec<usize> = vec![1];
    for rel in &spine_rels {
        let mut next = BTreeSet::new();
        for &from in &current {
            for to in from..=len {
                if rel.contains(&(path[from - 1].clone(), path[to - 1].clone())) {
                    next.insert(to);
                }
            }
        }
        current = next.into_iter().collect();
        if current.is_empty() {
            return Vec::new();
        }
    }
    current
        .into_iter()
        .filter(|&kn| star_rel.contains(&(path[kn - 1].clone(), path[len - 1].clone())))
        .collect()
}

fn is_path_for(m: &KripkeModel, tau: &TraceValue, path: &[State]) -> bool {
    !partition_endpoints(m, tau, path).is_empty()
}

/// All loop-free minimal counterexamples to `tau` at `v`: paths for `tau`
/// starting at `v(label)` whose end state falsifies the value's formula,
/// keeping only those with no strictly shorter counterexample prefix.
pub fn counterexample_paths(
    m: &KripkeModel,
    v: &Valuation,
    tau: &TraceValue,
) -> Result<BTreeSet<ModelPath>, SemanticsError> {
    let start = v
        .get(&tau.label)
        .ok_or_else(|| SemanticsError::PartialValuation(tau.label.clone()))?;
    let falsifying: BTreeSet<State> = {
        let good = interp_formula(m, &tau.formula);
        m.states
            .iter()
            .filter(|s| !good.contains(*s))
            .cloned()
            .collect()
    };

    // Enumerate loop-free model paths from the start state by DFS.
    let mut all: Vec<Vec<State>> = Vec::new();
    let mut stack = vec![vec![start.clone()]];
    while let Some(path) = stack.pop() {
        all.push(path.clone());
        let last = path.last().unwrap();
        for rel in m.progs.values() {
            for (a, b) in rel {
                if a == last && !path.contains(b) {
                    let mut extended = path.clone();
                    extended.push(b.clone());
                    stack.push(extended);
                }
            }
        }
    }

    let counterexamples: Vec<Vec<State>> = all
        .into_iter()
        .filter(|p| falsifying.contains(p.last().unwrap()) && is_path_for(m, tau, p))
        .collect();

    let minimal: BTreeSet<ModelPath> = counterexamples
        .iter()
        .filter(|p| {
            !counterexamples
                .iter()
                .any(|q| q.len() < p.len() && p[..q.len()] == q[..])
        })
        .map(|p| ModelPath::new(m, p.clone()).expect("DFS paths are adjacency-correct"))
        .collect();
    Ok(minimal)
}

/// Weight of a counterexample path: the length of the final segment under
/// the partition that makes it longest (equivalently, from the earliest
/// admissible last partition point to the end of the path, inclusive).
pub fn path_weight(m: &KripkeModel, tau: &TraceValue, path: &ModelPath) -> Option<u64> {
    let endpoints = partition_endpoints(m, tau, path.states());
    endpoints
        .into_iter()
        .map(|kn| (path.len() - kn + 1) as u64)
        .max()
}

/// The measure of a trace value at (m, v): the multiset of weights of its
/// minimal loop-free counterexamples. Empty when the denoted formula is
/// true at the valuation.
pub fn trace_value_measure(
    m: &KripkeModel,
    v: &Valuation,
    tau: &TraceValue,
) -> Result<TraceMeasure, SemanticsError> {
    let paths = counterexample_paths(m, v, tau)?;
    let mut measure = TraceMeasure::new();
    for p in &paths {
        let w = path_weight(m, tau, p).expect("counterexample paths admit a partition");
        measure.insert(w);
    }
    Ok(measure)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_formula, parse_sequent};

    fn two_state_model() -> KripkeModel {
        // states s1, s2; a-edge s1 -> s2; p true exactly at s2.
        KripkeModel::new(
            ["s1".into(), "s2".into()],
            [(
                PropName::new("p"),
                BTreeSet::from(["s2".to_string()]),
            )],
            [(
                ProgName::new("a"),
                BTreeSet::from([("s1".to_string(), "s2".to_string())]),
            )],
        )
    }

    fn set(items: &[&str]) -> BTreeSet<State> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn rel(pairs: &[(&str, &str)]) -> Rel {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    #[test]
    fn interp_program_examples() {
        let m = two_state_model();
        let star = interp_program(&m, &Program::star(Program::atom("a")));
        assert_eq!(star, rel(&[("s1", "s1"), ("s2", "s2"), ("s1", "s2")]));
        let test = interp_program(&m, &Program::test(Formula::atom("p")));
        assert_eq!(test, rel(&[("s2", "s2")]));
        let seq = interp_program(&m, &Program::seq(Program::atom("a"), Program::atom("a")));
        assert!(seq.is_empty());
    }

    #[test]
    fn interp_formula_examples() {
        let m = two_state_model();
        assert_eq!(
            interp_formula(&m, &parse_formula("[a]p").unwrap()),
            set(&["s1", "s2"])
        );
        assert!(interp_formula(&m, &Formula::Bot).is_empty());
        assert_eq!(
            interp_formula(&m, &parse_formula("p -> p").unwrap()),
            set(&["s1", "s2"])
        );
        // Unknown names denote empty interpretations.
        assert!(interp_formula(&m, &parse_formula("q").unwrap()).is_empty());
        assert_eq!(
            interp_formula(&m, &parse_formula("[b]p").unwrap()),
            set(&["s1", "s2"])
        );
    }

    #[test]
    fn star_is_least_reflexive_transitive_fixpoint() {
        let m = KripkeModel::new(
            ["s1".into(), "s2".into(), "s3".into()],
            [],
            [(ProgName::new("a"), rel(&[("s1", "s2"), ("s2", "s3")]))],
        );
        let base = interp_program(&m, &Program::atom("a"));
        let star = interp_program(&m, &Program::star(Program::atom("a")));
        for s in &m.states {
            assert!(star.contains(&(s.clone(), s.clone())));
        }
        assert!(star.is_superset(&base));
        assert_eq!(compose(&star, &star), star, "transitivity");
        // Least: removing any non-identity, non-forced pair breaks closure.
        assert_eq!(star.len(), 3 + 2 + 1, "exactly id + a + a;a");
    }

    #[test]
    fn satisfies_sequent_examples() {
        let m = two_state_model();
        let v1: Valuation = [(Label::new("x"), "s1".to_string())].into();
        let s_taut = parse_sequent("x: p |- x: p").unwrap();
        assert!(satisfies_sequent(&m, &v1, &s_taut).unwrap());
        let s_p = parse_sequent("|- x: p").unwrap();
        assert!(!satisfies_sequent(&m, &v1, &s_p).unwrap());
        let v2: Valuation = [
            (Label::new("x"), "s1".to_string()),
            (Label::new("y"), "s2".to_string()),
        ]
        .into();
        let s_rel = parse_sequent("x -a-> y |- y: p").unwrap();
        assert!(satisfies_sequent(&m, &v2, &s_rel).unwrap());
        // Partial valuation is an error, not a verdict.
        assert!(matches!(
            satisfies_sequent(&m, &v1, &s_rel),
            Err(SemanticsError::PartialValuation(_))
        ));
    }

    #[test]
    fn brute_force_finds_canonical_first_countermodel() {
        let s = parse_sequent("|- x: p -> [a]p").unwrap();
        match brute_force_countermodel(&s, 2, None, None) {
            BruteForce::Found(m, v) => {
                assert_eq!(m.states, set(&["s1", "s2"]));
                assert_eq!(m.prop_set(&PropName::new("p")), set(&["s1"]));
                assert_eq!(m.prog_rel(&ProgName::new("a")), rel(&[("s1", "s2")]));
                assert_eq!(v.get(&Label::new("x")), Some(&"s1".to_string()));
                assert!(!satisfies_sequent(&m, &v, &s).unwrap());
            }
            other => panic!("expected countermodel, got {other:?}"),
        }
    }

    #[test]
    fn brute_force_not_found_on_valid_sequents() {
        let valid = parse_sequent("|- x: p -> p").unwrap();
        assert_eq!(brute_force_countermodel(&valid, 2, None, None), BruteForce::NotFound);
        let absurd_ant = parse_sequent("x: false |-").unwrap();
        assert_eq!(
            brute_force_countermodel(&absurd_ant, 2, None, None),
            BruteForce::NotFound
        );
    }

    #[test]
    fn brute_force_budget_and_cancel() {
        let s = parse_sequent("|- x: [a*]p").unwrap();
        assert_eq!(brute_force_countermodel(&s, 2, Some(0), None), BruteForce::Timeout);
        let flag = AtomicBool::new(true);
        assert_eq!(
            brute_force_countermodel(&s, 2, None, Some(&flag)),
            BruteForce::Timeout
        );
    }

    #[test]
    fn sequential_and_default_agree() {
        for text in ["|- x: p -> [a]p", "|- x: p -> p", "|- x: [a](p | q)"] {
            let s = parse_sequent(text).unwrap();
            assert_eq!(
                brute_force_countermodel(&s, 2, None, None),
                brute_force_countermodel_seq(&s, 2, None, None),
                "mismatch on {text}"
            );
        }
    }

    #[test]
    fn counterexample_path_examples() {
        let m = two_state_model();
        let v: Valuation = [(Label::new("x"), "s1".to_string())].into();
        // p is true at s2 only; the a*-path ⟨s1⟩ already falsifies p.
        let tau = TraceValue::new(
            Label::new("x"),
            vec![],
            Program::atom("a"),
            Formula::atom("p"),
        );
        let paths = counterexample_paths(&m, &v, &tau).unwrap();
        let expected = ModelPath::new(&m, vec!["s1".to_string()]).unwrap();
        assert_eq!(paths, BTreeSet::from([expected]));
        assert_eq!(
            trace_value_measure(&m, &v, &tau).unwrap(),
            TraceMeasure::from_weights([1])
        );

        // Formula true everywhere: no counterexamples, empty measure.
        let tau_true = TraceValue::new(
            Label::new("x"),
            vec![],
            Program::atom("a"),
            parse_formula("p -> p").unwrap(),
        );
        assert!(counterexample_paths(&m, &v, &tau_true).unwrap().is_empty());
        assert!(trace_value_measure(&m, &v, &tau_true).unwrap().is_empty());

        // Single state, no edges, p false: the empty iteration ⟨s⟩ counts.
        let m1 = KripkeModel::new(["s1".into()], [], []);
        let paths1 = counterexample_paths(&m1, &v, &tau).unwrap();
        assert_eq!(paths1.len(), 1);
        assert_eq!(paths1.iter().next().unwrap().states(), ["s1".to_string()]);
    }

    #[test]
    fn incomparable_counterexamples_give_two_weights() {
        // a-edges s1->s2 and s1->s3; b-edge s3->s2; p true exactly at s3.
        // For τ = (x, ⟨a⟩, b, p) at v(x)=s1:
        //   ⟨s1,s2⟩      — weight 1 (partition point at s2)
        //   ⟨s1,s3,s2⟩   — weight 2 (earliest partition point at s3)
        let m = KripkeModel::new(
            ["s1".into(), "s2".into(), "s3".into()],
            [(PropName::new("p"), set(&["s3"]))],
            [
                (ProgName::new("a"), rel(&[("s1", "s2"), ("s1", "s3")])),
                (ProgName::new("b"), rel(&[("s3", "s2")])),
            ],
        );
        let v: Valuation = [(Label::new("x"), "s1".to_string())].into();
        let tau = TraceValue::new(
            Label::new("x"),
            vec![Program::atom("a")],
            Program::atom("b"),
            Formula::atom("p"),
        );
        let paths = counterexample_paths(&m, &v, &tau).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(
            trace_value_measure(&m, &v, &tau).unwrap(),
            TraceMeasure::from_weights([1, 2])
        );
    }

    #[test]
    fn dm_ordering_examples() {
        let empty = TraceMeasure::new();
        let one = TraceMeasure::from_weights([1]);
        let one_one = TraceMeasure::from_weights([1, 1]);
        let two = TraceMeasure::from_weights([2]);
        assert!(dm_less(&empty, &one));
        assert!(dm_less(&one_one, &two));
        assert!(!dm_less(&two, &one_one));
        assert!(!dm_less(&one, &one));
        assert!(dm_leq(&one, &one));
    }

    #[test]
    fn dm_less_is_a_strict_partial_order() {
        // All multisets with weights in {1,2,3} and at most 5 elements.
        let mut universe: Vec<TraceMeasure> = Vec::new();
        for c1 in 0..=5usize {
            for c2 in 0..=5 - c1 {
                for c3 in 0..=5 - c1 - c2 {
                    let mut weights = Vec::new();
                    weights.extend(std::iter::repeat(1).take(c1));
                    weights.extend(std::iter::repeat(2).take(c2));
                    weights.extend(std::iter::repeat(3).take(c3));
                    universe.push(TraceMeasure::from_weights(weights));
                }
            }
        }
        for m in &universe {
            assert!(!dm_less(m, m), "irreflexive");
        }
        for m in &universe {
            for n in &universe {
                if dm_less(m, n) {
                    assert!(!dm_less(n, m), "asymmetric: {m:?} {n:?}");
                }
                for o in &universe {
                    if dm_less(m, n) && dm_less(n, o) {
                        assert!(dm_less(m, o), "transitive: {m:?} {n:?} {o:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn model_validation() {
        let ok = two_state_model();
        assert!(ok.validate().is_ok());
        let empty = KripkeModel::new([], [], []);
        assert_eq!(empty.validate(), Err(SemanticsError::EmptyModel));
        let dangling = KripkeModel::new(
            ["s1".into()],
            [(PropName::new("p"), set(&["s9"]))],
            [],
        );
        assert!(matches!(
            dangling.validate(),
            Err(SemanticsError::UnknownState(_))
        ));
    }
}
