//! Trace values, trace pairs along proof edges, and the global trace
//! condition (GTC) for cyclic pre-proofs.
//!
//! A pre-proof is a proof when along every infinite branch of its infinite
//! unfolding some trace of consequent star formulas progresses infinitely
//! often. [`check_gtc`] decides this exactly by a size-change argument over
//! the cycle graph; [`gtc_oracle`] decides it independently by enumerating
//! lassos within explicit bounds, returning `Inconclusive` when the bounds
//! are too small to be conclusive and [`sufficient_bounds`] otherwise makes
//! the two procedures agree.

use crate::kernel::{
    apply_rule, cycle_graph, CycleGraph, CyclicPreProof, NodeId, NodeKind, RuleError,
    RuleInstance, RuleName,
};
use crate::syntax::{Formula, Item, Label, Program, Sequent};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use thiserror::Error;

// ---------------------------------------------------------------------------
// Trace values
// ---------------------------------------------------------------------------

/// A trace value `(x, α₁⋯αₙ, β, φ)`: a consequent formula
/// `x : [α₁]⋯[αₙ][β*]φ` together with a distinguished starred position in
/// its leading box chain. The programs before the focus form the spine; the
/// focus `β` is the program under the distinguished star; `φ` is whatever
/// follows it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TraceValue {
    pub label: Label,
    pub spine: Vec<Program>,
    pub focus: Program,
    pub formula: Formula,
}

impl TraceValue {
    pub fn new(label: Label, spine: Vec<Program>, focus: Program, formula: Formula) -> Self {
        TraceValue {
            label,
            spine,
            focus,
            formula,
        }
    }

    /// The formula `[α₁]⋯[αₙ][β*]φ` this value denotes (without its label).
    pub fn denoted_formula(&self) -> Formula {
        let mut phi = Formula::Box(
            Program::star(self.focus.clone()),
            Box::new(self.formula.clone()),
        );
        for alpha in self.spine.iter().rev() {
            phi = Formula::Box(alpha.clone(), Box::new(phi));
        }
        phi
    }

    /// The labelled formula this value denotes, as a sequent item.
    pub fn denoted(&self) -> Item {
        Item::fml(self.label.clone(), self.denoted_formula())
    }
}

impl fmt::Display for TraceValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, [", self.label)?;
        for (i, alpha) in self.spine.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{alpha}")?;
        }
        write!(f, "], {}, {})", self.focus, self.formula)
    }
}

/// All trace values of a sequent: every decomposition of a consequent
/// formula into a box chain with a starred position. A formula with several
/// starred top-level modalities yields several values; stars nested inside
/// the focus or below the chain contribute none.
pub fn trace_values_of(sequent: &Sequent) -> BTreeSet<TraceValue> {
    let mut out = BTreeSet::new();
    for it in &sequent.con {
        if let Item::Fml(lf) = it {
            let mut spine: Vec<Program> = Vec::new();
            let mut rest = &lf.formula;
            while let Formula::Box(alpha, tail) = rest {
                if let Program::Star(beta) = alpha {
                    out.insert(TraceValue::new(
                        lf.label.clone(),
                        spine.clone(),
                        (**beta).clone(),
                        (**tail).clone(),
                    ));
                }
                spine.push(alpha.clone());
                rest = tail;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Trace pairs along an edge
// ---------------------------------------------------------------------------

/// A pair `(τ, τ′, progressing)`: the conclusion value `τ` is tracked to
/// the premise value `τ′`, progressing exactly when the step unfolds the
/// focus star of a spine-less value.
pub type TracePair = (TraceValue, TraceValue, bool);

/// The trace relation along one edge (or walk): a set of trace pairs.
pub type TraceRel = BTreeSet<TracePair>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TraceError {
    #[error("node {0} does not exist")]
    MissingNode(NodeId),
    #[error("node {0} is not a rule node")]
    NotARuleNode(NodeId),
    #[error("node {node} has no premise with index {index}")]
    BadPremiseIndex { node: NodeId, index: usize },
    #[error("rule application failed at node {node}: {source}")]
    Rule {
        node: NodeId,
        #[source]
        source: RuleError,
    },
}

/// The trace pairs between a conclusion and one of the premises its rule
/// instance yields. `premise` must be `apply_rule(conclusion, inst)[premise_index]`.
fn pairs_for_edge(
    conclusion: &Sequent,
    inst: &RuleInstance,
    premise_index: usize,
    premise: &Sequent,
) -> TraceRel {
    let premise_values = trace_values_of(premise);
    let mut rel = TraceRel::new();
    for tau in trace_values_of(conclusion) {
        let is_principal = inst.principal.as_ref() == Some(&tau.denoted());
        let mut push = |succ: TraceValue, progressing: bool| {
            debug_assert!(
                premise_values.contains(&succ),
                "constructed successor {succ} missing from premise {premise}"
            );
            if premise_values.contains(&succ) {
                rel.insert((tau.clone(), succ, progressing));
            }
        };
        match inst.rule {
            // A weakened value has no successor.
            RuleName::WR if is_principal => {}
            // Substitution renames the conclusion's `to` back to `from`.
            RuleName::Subst => {
                let mut succ = tau.clone();
                if Some(&tau.label) == inst.params.to.as_ref() {
                    succ.label = inst.params.from.clone().expect("Subst params checked");
                }
                push(succ, false);
            }
            // The box over the spine head is realised by the fresh label.
            RuleName::BoxR if is_principal => {
                let fresh = inst.params.fresh.clone().expect("BoxR params checked");
                push(
                    TraceValue::new(
                        fresh,
                        tau.spine[1..].to_vec(),
                        tau.focus.clone(),
                        tau.formula.clone(),
                    ),
                    false,
                );
            }
            // `[α;β]` at the head of the spine splits into `[α][β]`.
            RuleName::SeqR if is_principal => {
                if let Program::Seq(a, b) = &tau.spine[0] {
                    let mut spine = vec![(**a).clone(), (**b).clone()];
                    spine.extend_from_slice(&tau.spine[1..]);
                    push(
                        TraceValue::new(
                            tau.label.clone(),
                            spine,
                            tau.focus.clone(),
                            tau.formula.clone(),
                        ),
                        false,
                    );
                }
            }
            // `[α+β]` at the head resolves to the branch taken.
            RuleName::ChoiceR if is_principal => {
                if let Program::Choice(a, b) = &tau.spine[0] {
                    let head = if premise_index == 0 { a } else { b };
                    let mut spine = vec![(**head).clone()];
                    spine.extend_from_slice(&tau.spine[1..]);
                    push(
                        TraceValue::new(
                            tau.label.clone(),
                            spine,
                            tau.focus.clone(),
                            tau.formula.clone(),
                        ),
                        false,
                    );
                }
            }
            // A test at the head of the spine is discharged.
            RuleName::TestR if is_principal => {
                push(
                    TraceValue::new(
                        tau.label.clone(),
                        tau.spine[1..].to_vec(),
                        tau.focus.clone(),
                        tau.formula.clone(),
                    ),
                    false,
                );
            }
            RuleName::StarR if is_principal => {
                if tau.spine.is_empty() {
                    // Focus case `(x, ε, α, φ)`: the left premise exits the
                    // iteration — the value ends there. The right premise
                    // unfolds one step of the focus: this is the only
                    // progressing pair.
                    if premise_index == 1 {
                        push(
                            TraceValue::new(
                                tau.label.clone(),
                                vec![tau.focus.clone()],
                                tau.focus.clone(),
                                tau.formula.clone(),
                            ),
                            true,
                        );
                    }
                } else if let Program::Star(alpha) = &tau.spine[0] {
                    // Spine case `(x, α*·σ, …)`: the star unfolded is not
                    // the focus. Left premise drops it; right premise puts
                    // one `[α]` in front of it.
                    if premise_index == 0 {
                        push(
                            TraceValue::new(
                                tau.label.clone(),
                                tau.spine[1..].to_vec(),
                                tau.focus.clone(),
                                tau.formula.clone(),
                            ),
                            false,
                        );
                    } else {
                        let mut spine = vec![(**alpha).clone()];
                        spine.extend_from_slice(&tau.spine);
                        push(
                            TraceValue::new(
                                tau.label.clone(),
                                spine,
                                tau.focus.clone(),
                                tau.formula.clone(),
                            ),
                            false,
                        );
                    }
                }
            }
            // Every other step leaves consequent box formulas untouched:
            // the value persists identically (left rules, weakening on the
            // left, context values of right rules, cut).
            _ => {
                if premise_values.contains(&tau) {
                    rel.insert((tau.clone(), tau.clone(), false));
                }
            }
        }
    }
    rel
}

/// The trace relation along the edge from `node` to its `premise_index`-th
/// premise, recomputed from the rule instance stored at the node. For an
/// edge that reaches a bud, the relation to the bud's companion is the same
/// set (bud and companion carry the same sequent).
pub fn trace_pairs(
    proof: &CyclicPreProof,
    node: NodeId,
    premise_index: usize,
) -> Result<TraceRel, TraceError> {
    let n = proof.node(node).ok_or(TraceError::MissingNode(node))?;
    let NodeKind::Rule(inst) = &n.kind else {
        return Err(TraceError::NotARuleNode(node));
    };
    let premises = apply_rule(&n.sequent, inst).map_err(|source| TraceError::Rule {
        node,
        source,
    })?;
    let premise = premises
        .get(premise_index)
        .ok_or(TraceError::BadPremiseIndex {
            node,
            index: premise_index,
        })?;
    Ok(pairs_for_edge(&n.sequent, inst, premise_index, premise))
}

pub(crate) fn compose_rel(a: &TraceRel, b: &TraceRel) -> TraceRel {
    let mut by_src: BTreeMap<&TraceValue, Vec<(&TraceValue, bool)>> = BTreeMap::new();
    for (x, y, p) in b {
        by_src.entry(x).or_default().push((y, *p));
    }
    let mut out = TraceRel::new();
    for (x, y, p) in a {
        if let Some(nexts) = by_src.get(y) {
            for (z, q) in nexts {
                out.insert((x.clone(), (*z).clone(), *p || *q));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// The global trace condition, decided by size-change closure
// ---------------------------------------------------------------------------

/// A counterexample to the global trace condition: the ultimately periodic
/// branch that follows `stem` from the root and then repeats `cycle`
/// forever admits no infinitely progressing trace. Node lists are inclusive
/// of their first node; the cycle is closed (its last node steps back to
/// its first).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lasso {
    pub stem: Vec<NodeId>,
    pub cycle: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GtcVerdict {
    Accepted,
    Rejected(Lasso),
}

impl GtcVerdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, GtcVerdict::Accepted)
    }
}

/// The vertex of the cycle graph at which root paths start.
fn root_vertex(proof: &CyclicPreProof) -> NodeId {
    match proof.node(proof.root).map(|n| &n.kind) {
        Some(NodeKind::Bud { companion }) => *companion,
        _ => proof.root,
    }
}

/// The trace relation of every single edge of the cycle graph, in edge
/// order.
fn edge_relations(
    proof: &CyclicPreProof,
    graph: &CycleGraph,
) -> Result<Vec<(NodeId, NodeId, usize, TraceRel)>, TraceError> {
    let mut out = Vec::new();
    for (from, e) in graph.edges() {
        let rel = trace_pairs(proof, from, e.premise_index)?;
        out.push((from, e.target, e.premise_index, rel));
    }
    Ok(out)
}

/// Decides the global trace condition exactly.
///
/// The composition closure of the edge relations contains the trace
/// relation of every finite walk in the cycle graph. By a Ramsey-style
/// argument the condition holds if and only if every closed-walk relation
/// `R` with `R;R = R` contains a progressing pair `(τ, τ, true)` on its
/// diagonal; a violating relation is reported as a concrete lasso built
/// from the walk that realised it. Expects a pre-proof that has already
/// passed [`crate::kernel::check_pre_proof`].
pub fn check_gtc(proof: &CyclicPreProof) -> Result<GtcVerdict, TraceError> {
    let graph = cycle_graph(proof);
    let initial = edge_relations(proof, &graph)?;

    type Key = (NodeId, NodeId, TraceRel);
    let mut seen: BTreeMap<Key, Vec<NodeId>> = BTreeMap::new();
    let mut queue: VecDeque<Key> = VecDeque::new();
    for (from, to, _, rel) in &initial {
        let key = (*from, *to, rel.clone());
        if !seen.contains_key(&key) {
            seen.insert(key.clone(), vec![*from, *to]);
            queue.push_back(key);
        }
    }
    while let Some((from, to, rel)) = queue.pop_back() {
        let walk = seen[&(from, to, rel.clone())].clone();
        for (f2, t2, _, rel2) in initial.iter().filter(|(f2, ..)| *f2 == to) {
            let _ = f2;
            let key = (from, *t2, compose_rel(&rel, rel2));
            if !seen.contains_key(&key) {
                let mut w2 = walk.clone();
                w2.push(*t2);
                seen.insert(key.clone(), w2);
                queue.push_back(key);
            }
        }
    }

    for ((from, to, rel), walk) in &seen {
        if from == to && &compose_rel(rel, rel) == rel {
            let has_progress = rel.iter().any(|(a, b, p)| *p && a == b);
            if !has_progress {
                let stem = graph
                    .shortest_path(root_vertex(proof), *from)
                    .unwrap_or_else(|| vec![*from]);
                let mut cycle = walk.clone();
                cycle.pop();
                return Ok(GtcVerdict::Rejected(Lasso { stem, cycle }));
            }
        }
    }
    Ok(GtcVerdict::Accepted)
}

// ---------------------------------------------------------------------------
// The bounded oracle
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleVerdict {
    Accepted,
    Rejected(Lasso),
    /// The bounds were too small to certify acceptance.
    Inconclusive,
}

impl OracleVerdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, OracleVerdict::Accepted)
    }
}

/// Whether the periodic branch repeating `walk` forever admits no
/// infinitely progressing trace. Decided on the trace graph over the walk's
/// positions: vertices are (position, value), edges follow the per-edge
/// relations and wrap around; an infinitely progressing trace exists
/// exactly when some progressing edge lies on a cycle.
fn walk_is_bad(rels: &BTreeMap<(NodeId, usize), TraceRel>, walk: &[(NodeId, usize)]) -> bool {
    let len = walk.len();
    type V<'a> = (usize, &'a TraceValue);
    let mut adj: BTreeMap<V, Vec<V>> = BTreeMap::new();
    let mut progressing: Vec<(V, V)> = Vec::new();
    for (pos, step) in walk.iter().enumerate() {
        let next = (pos + 1) % len;
        for (a, b, p) in &rels[step] {
            adj.entry((pos, a)).or_default().push((next, b));
            if *p {
                progressing.push(((pos, a), (next, b)));
            }
        }
    }
    let reaches = |from: V, to: V| -> bool {
        let mut queue = VecDeque::from([from]);
        let mut seen = BTreeSet::from([from]);
        while let Some(v) = queue.pop_front() {
            if v == to {
                return true;
            }
            for w in adj.get(&v).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(*w) {
                    queue.push_back(*w);
                }
            }
        }
        false
    };
    !progressing.iter().any(|(u, v)| reaches(*v, *u))
}

/// Depth-first enumeration of closed walks from `start` (never dipping
/// below `start`, so each cyclic walk is visited once, rooted at its least
/// node), reporting the first admissible walk that is bad.
#[allow(clippy::too_many_arguments)]
fn bad_walk_search(
    graph: &CycleGraph,
    rels: &BTreeMap<(NodeId, usize), TraceRel>,
    dist: &BTreeMap<NodeId, usize>,
    stem_bound: usize,
    loop_bound: usize,
    start: NodeId,
    current: NodeId,
    walk: &mut Vec<(NodeId, usize)>,
    found: &mut Option<Vec<(NodeId, usize)>>,
) {
    if found.is_some() {
        return;
    }
    for e in graph.successors(current) {
        if e.target < start {
            continue;
        }
        walk.push((current, e.premise_index));
        if e.target == start {
            let admissible = walk
                .iter()
                .any(|(n, _)| dist.get(n).is_some_and(|d| *d <= stem_bound));
            if admissible && walk_is_bad(rels, walk) {
                *found = Some(walk.clone());
                walk.pop();
                return;
            }
        }
        if walk.len() < loop_bound {
            bad_walk_search(
                graph, rels, dist, stem_bound, loop_bound, start, e.target, walk, found,
            );
            if found.is_some() {
                walk.pop();
                return;
            }
        }
        walk.pop();
    }
}

fn distances_from(graph: &CycleGraph, root: NodeId) -> BTreeMap<NodeId, usize> {
    let mut dist = BTreeMap::from([(root, 0usize)]);
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        for e in graph.successors(v) {
            if let std::collections::btree_map::Entry::Vacant(slot) = dist.entry(e.target) {
                slot.insert(d + 1);
                queue.push_back(e.target);
            }
        }
    }
    dist
}

/// The saturation length: the least `k` such that every finite walk's trace
/// relation is already realised by a walk of length at most `k`. Closed
/// walks longer than this cannot exhibit new behaviour, so a loop bound of
/// `k` makes lasso enumeration exhaustive.
fn saturation_length(initial: &[(NodeId, NodeId, usize, TraceRel)]) -> usize {
    type Elem = (NodeId, NodeId, TraceRel);
    let mut acc: BTreeSet<Elem> = initial
        .iter()
        .map(|(f, t, _, r)| (*f, *t, r.clone()))
        .collect();
    let mut exact: BTreeSet<Elem> = acc.clone();
    let mut k = 1usize;
    loop {
        let mut next: BTreeSet<Elem> = BTreeSet::new();
        for (f, t, r) in &exact {
            for (f2, t2, _, r2) in initial.iter().filter(|(f2, ..)| f2 == t) {
                let _ = f2;
                next.insert((*f, *t2, compose_rel(r, r2)));
            }
        }
        if next.iter().all(|e| acc.contains(e)) {
            return k;
        }
        acc.extend(next.iter().cloned());
        exact = next;
        k += 1;
    }
}

/// Decides the global trace condition by brute-force lasso enumeration: a
/// lasso is a stem of length at most `stem_bound` from the root to a loop
/// of length at most `loop_bound`, and it refutes the condition when its
/// periodic branch admits no infinitely progressing trace (decided on the
/// loop's trace graph). With no refuting lasso in bounds, the verdict is
/// `Accepted` when the bounds provably cover all behaviour — the stem bound
/// reaches every vertex and the loop bound meets the saturation length —
/// and `Inconclusive` otherwise. [`sufficient_bounds`] returns bounds that
/// always suffice.
pub fn gtc_oracle(
    proof: &CyclicPreProof,
    stem_bound: usize,
    loop_bound: usize,
) -> Result<OracleVerdict, TraceError> {
    let graph = cycle_graph(proof);
    if !graph.has_cycle() {
        // A finite tree has no infinite branches at all.
        return Ok(OracleVerdict::Accepted);
    }
    let initial = edge_relations(proof, &graph)?;
    let rels: BTreeMap<(NodeId, usize), TraceRel> = initial
        .iter()
        .map(|(f, _, i, r)| ((*f, *i), r.clone()))
        .collect();
    let root = root_vertex(proof);
    let dist = distances_from(&graph, root);

    let starts: Vec<NodeId> = graph.succ.keys().copied().collect();
    for start in starts {
        let mut walk = Vec::new();
        let mut found = None;
        bad_walk_search(
            &graph, &rels, &dist, stem_bound, loop_bound, start, start, &mut walk, &mut found,
        );
        if let Some(walk) = found {
            // Attach the stem at the loop node nearest the root.
            let attach = walk
                .iter()
                .enumerate()
                .filter(|(_, (n, _))| dist.get(n).is_some_and(|d| *d <= stem_bound))
                .min_by_key(|(_, (n, _))| (dist[n], *n))
                .map(|(i, _)| i)
                .expect("admissible walk has an in-bound node");
            let cycle: Vec<NodeId> = (0..walk.len())
                .map(|i| walk[(attach + i) % walk.len()].0)
                .collect();
            let stem = graph
                .shortest_path(root, cycle[0])
                .expect("attach node is reachable");
            return Ok(OracleVerdict::Rejected(Lasso { stem, cycle }));
        }
    }

    let eccentricity = dist.values().copied().max().unwrap_or(0);
    if stem_bound >= eccentricity && loop_bound >= saturation_length(&initial) {
        Ok(OracleVerdict::Accepted)
    } else {
        Ok(OracleVerdict::Inconclusive)
    }
}

/// Bounds that make [`gtc_oracle`] conclusive on this pre-proof: the
/// largest root distance in the cycle graph, and the saturation length of
/// its trace relations.
pub fn sufficient_bounds(proof: &CyclicPreProof) -> Result<(usize, usize), TraceError> {
    let graph = cycle_graph(proof);
    let initial = edge_relations(proof, &graph)?;
    let dist = distances_from(&graph, root_vertex(proof));
    let eccentricity = dist.values().copied().max().unwrap_or(0);
    Ok((eccentricity, saturation_length(&initial)))
}
