//! Proof search for test-free sequents, and the saturation-style search
//! trees used to extract countermodel templates.
//!
//! The central entry point is [`prove_test_free`]: it alternates capped
//! unwindings (exhaustive rule application with per-branch star marks) with
//! back-linking of repeated sequents, and reads countermodels off saturated
//! leaves. Every positive answer is re-checked mechanically — a returned
//! proof passes the node checker and the trace condition, and a returned
//! countermodel falsifies the goal under the returned valuation.

pub mod bounds;

pub use bounds::{
    combinations_for, lang_truncated, path_max, star_max, unfold_len, BoundsError, Word,
};

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::kernel::{
    apply_rule, check_pre_proof, CyclicPreProof, NodeId, NodeKind, ProofBuilder, RuleInstance,
    RuleName,
};
use crate::semantics::{satisfies_sequent, KripkeModel, State, Valuation};
use crate::syntax::{
    classify, Formula, FormulaClass, Item, Label, LabelGen, LabelledFormula, Program, Sequent,
};
use crate::traces::{check_gtc, GtcVerdict};

// ---------------------------------------------------------------------------
// Normality and reachability.
// ---------------------------------------------------------------------------

/// Is the sequent normal? A normal sequent has disjoint sides, a consequent
/// of labelled atomic and iterated formulas only, and an antecedent of
/// relational atoms, labelled atomic formulas, and labelled basic formulas
/// whose modality has no outgoing relational atom to instantiate it with.
pub fn is_normal(s: &Sequent) -> bool {
    if s.ant.intersection(&s.con).next().is_some() {
        return false;
    }
    for it in &s.con {
        match it {
            Item::Rel(_) => return false,
            Item::Fml(lf) => match classify(&lf.formula) {
                FormulaClass::Atomic | FormulaClass::Iterated => {}
                FormulaClass::Basic | FormulaClass::Composite => return false,
            },
        }
    }
    for it in &s.ant {
        if let Item::Fml(lf) = it {
            match classify(&lf.formula) {
                FormulaClass::Atomic => {}
                FormulaClass::Basic => {
                    let Formula::Box(Program::Atom(a), _) = &lf.formula else {
                        unreachable!("basic formulas are atomic boxes");
                    };
                    let has_edge = s
                        .ant
                        .iter()
                        .filter_map(Item::as_rel)
                        .any(|r| r.src == lf.label && r.prog == *a);
                    if has_edge {
                        return false;
                    }
                }
                FormulaClass::Iterated | FormulaClass::Composite => return false,
            }
        }
    }
    true
}

/// Does a nonempty path of antecedent relational atoms lead from `x` to `y`?
pub fn reaches(s: &Sequent, x: &Label, y: &Label) -> bool {
    s.reachable_from(x).contains(y)
}

/// Is the antecedent relational graph free of (nonempty) cycles?
pub fn is_acyclic(s: &Sequent) -> bool {
    s.is_acyclic()
}

/// Are all labelled formulas in the sequent atomic?
pub fn is_atomic_sequent(s: &Sequent) -> bool {
    s.ant
        .iter()
        .chain(s.con.iter())
        .filter_map(Item::as_fml)
        .all(|lf| classify(&lf.formula) == FormulaClass::Atomic)
}

// ---------------------------------------------------------------------------
// Validity-preserving weakening.
// ---------------------------------------------------------------------------

/// Exhaustively applies the validity-reflecting weakening steps, in a fixed
/// clause order, until none applies. Returns the weakened sequent together
/// with the weakening instances in the order they were applied (each one a
/// `WL` or `WR` whose conclusion is the sequent before the step).
///
/// The clauses, tried in order after every step:
///
/// 1. drop a consequent relational atom that does not also occur in the
///    antecedent;
/// 2. (normal sequents only) drop a consequent proposition letter `x: p`
///    when no iterated consequent formula at `x` remains;
/// 3. (normal sequents only) drop an antecedent formula whose label does
///    not occur in the consequent;
/// 4. (normal sequents only) drop an antecedent relational atom `x -a-> y`
///    when every remaining antecedent formula is labelled by a consequent
///    label, `x` is not a consequent label, and `x` is unreachable from
///    every consequent label.
///
/// Each step reflects validity: if the original sequent is valid, so is the
/// result, and a countermodel of the result extends to one of the original.
pub fn apply_valid_weakenings(s: &Sequent) -> (Sequent, Vec<RuleInstance>) {
    let mut cur = s.clone();
    let mut steps = Vec::new();
    'fixpoint: loop {
        for it in cur.con.clone() {
            if matches!(it, Item::Rel(_)) && !cur.ant.contains(&it) {
                cur.con.remove(&it);
                steps.push(RuleInstance::with_principal(RuleName::WR, it));
                continue 'fixpoint;
            }
        }
        if !is_normal(&cur) {
            break;
        }
        for it in cur.con.clone() {
            let Item::Fml(lf) = &it else { continue };
            if !matches!(lf.formula, Formula::Atom(_)) {
                continue;
            }
            let mut rest = cur.con.clone();
            rest.remove(&it);
            if !Sequent::starred_labels(&rest).contains(&lf.label) {
                cur.con.remove(&it);
                steps.push(RuleInstance::with_principal(RuleName::WR, it));
                continue 'fixpoint;
            }
        }
        let con_labels = Sequent::side_labels(&cur.con);
        for it in cur.ant.clone() {
            let Item::Fml(lf) = &it else { continue };
            if !con_labels.contains(&lf.label) {
                cur.ant.remove(&it);
                steps.push(RuleInstance::with_principal(RuleName::WL, it));
                continue 'fixpoint;
            }
        }
        for it in cur.ant.clone() {
            let Item::Rel(r) = &it else { continue };
            let mut rest = cur.clone();
            rest.ant.remove(&it);
            let formulas_covered = rest
                .ant
                .iter()
                .filter_map(Item::as_fml)
                .all(|lf| con_labels.contains(&lf.label));
            let src_outside = !con_labels.contains(&r.src);
            let src_unreachable = !con_labels.iter().any(|z| reaches(&rest, z, &r.src));
            if formulas_covered && src_outside && src_unreachable {
                cur = rest;
                steps.push(RuleInstance::with_principal(RuleName::WL, it));
                continue 'fixpoint;
            }
        }
        break;
    }
    (cur, steps)
}

// ---------------------------------------------------------------------------
// Capped unwindings.
// ---------------------------------------------------------------------------

/// Default cap on the number of rule applications in a single unwinding.
pub const DEFAULT_UNWINDING_STEPS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("the sequent mentions a test program; only test-free sequents are searched")]
    NotTestFree,
    #[error("the antecedent relational atoms contain a cycle; only acyclic sequents are searched")]
    NotAcyclic,
    #[error("step budget of {0} rule applications exhausted")]
    StepBudgetExceeded(u64),
}

/// An open leaf of a capped unwinding: the node id of the open node in the
/// derivation, the saturated sequent before weakening (used for template
/// extraction), and the weakened sequent the node carries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnwindingLeaf {
    pub node: NodeId,
    pub pre_weakening: Sequent,
    pub sequent: Sequent,
}

/// A capped unwinding: a finite derivation from `origin` with axiom-closed
/// branches, saturated-and-weakened open leaves, and no buds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unwinding {
    pub origin: Sequent,
    pub derivation: CyclicPreProof,
    pub leaves: Vec<UnwindingLeaf>,
}

/// Per-branch bookkeeping for the unwinding loop.
#[derive(Debug, Clone)]
struct BranchState {
    node: NodeId,
    seq: Sequent,
    /// Consequent iterated formulas already unfolded on this branch. The
    /// mark is on the formula (not the label): continuations of the same
    /// trace through relabelling must stay blocked.
    spent_right: BTreeSet<Formula>,
    /// Antecedent iterated formulas already unfolded on this branch, per
    /// label: a new label legitimately re-unfolds the same formula.
    unfolded_left: BTreeSet<(Label, Formula)>,
}

/// One scheduled expansion step at a branch tip.
enum UnwindStep {
    One(RuleInstance, MarkUpdate),
    /// A basic antecedent box instantiated at every current successor: a
    /// chain of box-left applications, contracted except for the last.
    BoxLeftCascade(Item, Vec<Label>),
}

enum MarkUpdate {
    None,
    SpendRight(Formula),
    UnfoldLeft(Label, Formula),
}

fn right_rule_for(phi: &Formula) -> RuleName {
    match phi {
        Formula::And(_, _) => RuleName::AndR,
        Formula::Or(_, _) => RuleName::OrR,
        Formula::Imp(_, _) => RuleName::ImpR,
        Formula::Box(Program::Seq(_, _), _) => RuleName::SeqR,
        Formula::Box(Program::Choice(_, _), _) => RuleName::ChoiceR,
        Formula::Box(Program::Test(_), _) => RuleName::TestR,
        Formula::Bot | Formula::Atom(_) | Formula::Box(_, _) => {
            unreachable!("no composite right rule for {phi:?}")
        }
    }
}

fn left_rule_for(phi: &Formula) -> RuleName {
    match phi {
        Formula::And(_, _) => RuleName::AndL,
        Formula::Or(_, _) => RuleName::OrL,
        Formula::Imp(_, _) => RuleName::ImpL,
        Formula::Box(Program::Seq(_, _), _) => RuleName::SeqL,
        Formula::Box(Program::Choice(_, _), _) => RuleName::ChoiceL,
        Formula::Box(Program::Test(_), _) => RuleName::TestL,
        Formula::Bot | Formula::Atom(_) | Formula::Box(_, _) => {
            unreachable!("no composite left rule for {phi:?}")
        }
    }
}

/// The next rule to apply at a branch tip, if any: right-side candidates
/// first, then left-side ones, each in item order.
fn pick_step(st: &BranchState, gen: &mut LabelGen) -> Option<UnwindStep> {
    for it in &st.seq.con {
        let Item::Fml(lf) = it else { continue };
        match classify(&lf.formula) {
            FormulaClass::Atomic => {}
            FormulaClass::Basic => {
                let fresh = gen.fresh_for(&st.seq.labels());
                return Some(UnwindStep::One(
                    RuleInstance::box_r(it.clone(), fresh),
                    MarkUpdate::None,
                ));
            }
            FormulaClass::Iterated => {
                if st.spent_right.contains(&lf.formula) {
                    continue;
                }
                return Some(UnwindStep::One(
                    RuleInstance::with_principal(RuleName::StarR, it.clone()),
                    MarkUpdate::SpendRight(lf.formula.clone()),
                ));
            }
            FormulaClass::Composite => {
                return Some(UnwindStep::One(
                    RuleInstance::with_principal(right_rule_for(&lf.formula), it.clone()),
                    MarkUpdate::None,
                ));
            }
        }
    }
    for it in &st.seq.ant {
        let Item::Fml(lf) = it else { continue };
        match classify(&lf.formula) {
            FormulaClass::Atomic => {}
            FormulaClass::Basic => {
                let Formula::Box(Program::Atom(a), _) = &lf.formula else {
                    unreachable!("basic formulas are atomic boxes");
                };
                let succs: Vec<Label> = st
                    .seq
                    .ant
                    .iter()
                    .filter_map(Item::as_rel)
                    .filter(|r| r.src == lf.label && r.prog == *a)
                    .map(|r| r.dst.clone())
                    .collect();
                if succs.is_empty() {
                    continue;
                }
                return Some(UnwindStep::BoxLeftCascade(it.clone(), succs));
            }
            FormulaClass::Iterated => {
                let key = (lf.label.clone(), lf.formula.clone());
                if st.unfolded_left.contains(&key) {
                    continue;
                }
                return Some(UnwindStep::One(
                    RuleInstance::with_principal(RuleName::StarL, it.clone()),
                    MarkUpdate::UnfoldLeft(key.0, key.1),
                ));
            }
            FormulaClass::Composite => {
                return Some(UnwindStep::One(
                    RuleInstance::with_principal(left_rule_for(&lf.formula), it.clone()),
                    MarkUpdate::None,
                ));
            }
        }
    }
    None
}

/// If the sequent is closable, the closing instance: an `Ax` on the least
/// shared item, or a `Bot` on the least antecedent falsum.
fn closing_instance(s: &Sequent) -> Option<RuleInstance> {
    if let Some(shared) = s.ant.intersection(&s.con).next() {
        return Some(RuleInstance::with_principal(RuleName::Ax, shared.clone()));
    }
    s.ant
        .iter()
        .find(|it| matches!(it, Item::Fml(lf) if lf.formula == Formula::Bot))
        .map(|bot| RuleInstance::with_principal(RuleName::Bot, bot.clone()))
}

fn bump(steps: &mut u64, cap: u64) -> Result<(), SearchError> {
    if *steps >= cap {
        return Err(SearchError::StepBudgetExceeded(cap));
    }
    *steps += 1;
    Ok(())
}

/// Builds the capped unwinding of `s` with the default step budget.
pub fn build_capped_unwinding(s: &Sequent) -> Result<Unwinding, SearchError> {
    build_capped_unwinding_with(s, DEFAULT_UNWINDING_STEPS)
}

/// Builds the capped unwinding of `s`: closes branches by `Ax`/`Bot` as
/// soon as possible, otherwise applies logical rules deterministically
/// (right rules before left rules, least principal item first), with
/// consequent iterations unfolded at most once per formula per branch and
/// antecedent iterations at most once per label per branch. Saturated
/// branches are weakened and left open.
pub fn build_capped_unwinding_with(s: &Sequent, max_steps: u64) -> Result<Unwinding, SearchError> {
    if !s.is_test_free() {
        return Err(SearchError::NotTestFree);
    }
    if !is_acyclic(s) {
        return Err(SearchError::NotAcyclic);
    }
    let mut b = ProofBuilder::new();
    let labels = s.labels();
    let mut gen = LabelGen::seeded_from(labels.iter());
    let root = b.reserve();
    let mut frontier = vec![BranchState {
        node: root,
        seq: s.clone(),
        spent_right: BTreeSet::new(),
        unfolded_left: BTreeSet::new(),
    }];
    let mut leaves = Vec::new();
    let mut steps = 0u64;
    while let Some(st) = frontier.pop() {
        if let Some(close) = closing_instance(&st.seq) {
            bump(&mut steps, max_steps)?;
            b.fill(st.node, st.seq, NodeKind::Rule(close), vec![]);
            continue;
        }
        match pick_step(&st, &mut gen) {
            Some(UnwindStep::One(inst, mark)) => {
                bump(&mut steps, max_steps)?;
                let premises =
                    apply_rule(&st.seq, &inst).expect("picked unwinding rule must apply");
                let ids: Vec<NodeId> = premises.iter().map(|_| b.reserve()).collect();
                b.fill(st.node, st.seq.clone(), NodeKind::Rule(inst), ids.clone());
                for (id, prem) in ids.into_iter().zip(premises) {
                    debug_assert!(is_acyclic(&prem), "unwinding broke acyclicity: {prem}");
                    let mut child = BranchState {
                        node: id,
                        seq: prem,
                        spent_right: st.spent_right.clone(),
                        unfolded_left: st.unfolded_left.clone(),
                    };
                    match &mark {
                        MarkUpdate::None => {}
                        MarkUpdate::SpendRight(f) => {
                            child.spent_right.insert(f.clone());
                        }
                        MarkUpdate::UnfoldLeft(l, f) => {
                            child.unfolded_left.insert((l.clone(), f.clone()));
                        }
                    }
                    frontier.push(child);
                }
            }
            Some(UnwindStep::BoxLeftCascade(item, succs)) => {
                let mut cur_node = st.node;
                let mut cur_seq = st.seq.clone();
                let last = succs.len() - 1;
                for (i, y) in succs.iter().enumerate() {
                    bump(&mut steps, max_steps)?;
                    let mut inst = RuleInstance::box_l(item.clone(), y.clone());
                    if i < last {
                        inst = inst.contracted();
                    }
                    let prem = apply_rule(&cur_seq, &inst)
                        .expect("box-left cascade must apply")
                        .remove(0);
                    let next = b.reserve();
                    b.fill(cur_node, cur_seq, NodeKind::Rule(inst), vec![next]);
                    cur_node = next;
                    cur_seq = prem;
                }
                frontier.push(BranchState {
                    node: cur_node,
                    seq: cur_seq,
                    spent_right: st.spent_right,
                    unfolded_left: st.unfolded_left,
                });
            }
            None => {
                // Saturated: weaken, then leave open.
                let pre = st.seq.clone();
                let (weakened, winsts) = apply_valid_weakenings(&st.seq);
                let mut cur_node = st.node;
                let mut cur_seq = st.seq;
                for inst in winsts {
                    bump(&mut steps, max_steps)?;
                    let prem = apply_rule(&cur_seq, &inst)
                        .expect("recorded weakening must apply")
                        .remove(0);
                    let next = b.reserve();
                    b.fill(cur_node, cur_seq, NodeKind::Rule(inst), vec![next]);
                    cur_node = next;
                    cur_seq = prem;
                }
                debug_assert_eq!(cur_seq, weakened);
                b.fill(cur_node, weakened.clone(), NodeKind::Open, vec![]);
                leaves.push(UnwindingLeaf {
                    node: cur_node,
                    pre_weakening: pre,
                    sequent: weakened,
                });
            }
        }
    }
    leaves.sort_by_key(|l| l.node);
    Ok(Unwinding {
        origin: s.clone(),
        derivation: b.finish(root),
        leaves,
    })
}

// ---------------------------------------------------------------------------
// Back-linking.
// ---------------------------------------------------------------------------

/// Applies a simultaneous label renaming to every item of a sequent.
/// Labels absent from the map are left unchanged.
pub fn rename_sequent(s: &Sequent, m: &BTreeMap<Label, Label>) -> Sequent {
    let rn = |l: &Label| m.get(l).cloned().unwrap_or_else(|| l.clone());
    let conv = |items: &BTreeSet<Item>| {
        items
            .iter()
            .map(|it| match it {
                Item::Rel(r) => Item::rel(rn(&r.src), r.prog.clone(), rn(&r.dst)),
                Item::Fml(lf) => Item::fml(rn(&lf.label), lf.formula.clone()),
            })
            .collect()
    };
    Sequent {
        ant: conv(&s.ant),
        con: conv(&s.con),
    }
}

/// A canonical renaming of the sequent's labels: items are ordered by their
/// label-erased skeleton and labels numbered by first occurrence, so two
/// sequents equal up to renaming usually map to the same canonical form.
fn canonical_form(s: &Sequent) -> (Sequent, BTreeMap<Label, Label>) {
    let erase = |it: &Item| match it {
        Item::Rel(r) => Item::rel(Label::new(""), r.prog.clone(), Label::new("")),
        Item::Fml(lf) => Item::fml(Label::new(""), lf.formula.clone()),
    };
    let mut items: Vec<(Item, bool, Item)> = Vec::new();
    for it in &s.ant {
        items.push((erase(it), false, it.clone()));
    }
    for it in &s.con {
        items.push((erase(it), true, it.clone()));
    }
    items.sort();
    let mut map: BTreeMap<Label, Label> = BTreeMap::new();
    let mut n = 0usize;
    let mut visit = |l: &Label, map: &mut BTreeMap<Label, Label>| {
        if !map.contains_key(l) {
            map.insert(l.clone(), Label::new(format!("#{n}")));
            n += 1;
        }
    };
    for (_, _, it) in &items {
        match it {
            Item::Rel(r) => {
                visit(&r.src, &mut map);
                visit(&r.dst, &mut map);
            }
            Item::Fml(lf) => visit(&lf.label, &mut map),
        }
    }
    (rename_sequent(s, &map), map)
}

/// Looks for a history entry equal to `leaf` up to a renaming of labels.
/// On success, returns the entry's node id and a verified renaming taking
/// the leaf onto the entry's sequent. Entries are tried in order, so
/// callers control the preference by how they order the history.
pub fn backlink_match(
    leaf: &Sequent,
    history: &[(NodeId, Sequent)],
) -> Option<(NodeId, BTreeMap<Label, Label>)> {
    let (leaf_canon, leaf_map) = canonical_form(leaf);
    for (id, cand) in history {
        let (cand_canon, cand_map) = canonical_form(cand);
        if leaf_canon != cand_canon {
            continue;
        }
        let inv: BTreeMap<Label, Label> = cand_map
            .iter()
            .map(|(orig, canon)| (canon.clone(), orig.clone()))
            .collect();
        let m: BTreeMap<Label, Label> = leaf_map
            .iter()
            .filter_map(|(orig, canon)| inv.get(canon).map(|t| (orig.clone(), t.clone())))
            .collect();
        if m.len() == leaf_map.len() && rename_sequent(leaf, &m) == *cand {
            return Some((*id, m));
        }
    }
    None
}

/// Realizes a back-link as a chain of substitution rules ending in a bud.
/// The renaming is decomposed into single-label substitutions, routed
/// through fresh temporaries so overlapping source and target names never
/// violate the substitution side conditions.
fn materialize_backlink(
    b: &mut ProofBuilder,
    node: NodeId,
    seq: &Sequent,
    companion: NodeId,
    renaming: &BTreeMap<Label, Label>,
) {
    let moving: Vec<(Label, Label)> = renaming
        .iter()
        .filter(|(l, c)| l != c)
        .map(|(l, c)| (l.clone(), c.clone()))
        .collect();
    if moving.is_empty() {
        b.fill(node, seq.clone(), NodeKind::Bud { companion }, vec![]);
        return;
    }
    let mut avoid: BTreeSet<Label> = seq.labels();
    for (l, c) in renaming {
        avoid.insert(l.clone());
        avoid.insert(c.clone());
    }
    let mut gen = LabelGen::seeded_from(avoid.iter());
    let mut cur_node = node;
    let mut cur_seq = seq.clone();
    let chain = |inst: RuleInstance, cur_node: &mut NodeId, cur_seq: &mut Sequent, b: &mut ProofBuilder| {
        let prem = apply_rule(cur_seq, &inst)
            .expect("back-link substitution must apply")
            .remove(0);
        let next = b.reserve();
        b.fill(*cur_node, cur_seq.clone(), NodeKind::Rule(inst), vec![next]);
        *cur_node = next;
        *cur_seq = prem;
    };
    let mut temps = Vec::new();
    for (l, _) in &moving {
        let t = gen.fresh_for(&avoid);
        avoid.insert(t.clone());
        temps.push(t.clone());
        chain(
            RuleInstance::subst(t, l.clone()),
            &mut cur_node,
            &mut cur_seq,
            b,
        );
    }
    for ((_, c), t) in moving.iter().zip(temps) {
        chain(
            RuleInstance::subst(c.clone(), t),
            &mut cur_node,
            &mut cur_seq,
            b,
        );
    }
    b.fill(cur_node, cur_seq, NodeKind::Bud { companion }, vec![]);
}

// ---------------------------------------------------------------------------
// Countermodel templates.
// ---------------------------------------------------------------------------

/// A countermodel template: the item sets of a saturated open leaf (or a
/// union of them). The atomic part of `gamma` dictates what is true in the
/// extracted model; `delta` records what must come out false.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub gamma: BTreeSet<Item>,
    pub delta: BTreeSet<Item>,
}

/// Reads a model off a template: one state per occurring label, with a
/// proposition true at a state exactly when `gamma` says so, and an edge
/// per relational atom of `gamma`. The valuation is the identity on the
/// occurring labels. A template with no labels yields a one-state model.
pub fn template_to_model(t: &Template) -> (KripkeModel, Valuation) {
    let mut labels = BTreeSet::new();
    for it in t.gamma.iter().chain(t.delta.iter()) {
        labels.extend(it.labels());
    }
    let states: BTreeSet<State> = if labels.is_empty() {
        ["s".to_string()].into_iter().collect()
    } else {
        labels.iter().map(|l| l.as_str().to_string()).collect()
    };
    let mut props: BTreeMap<_, BTreeSet<State>> = BTreeMap::new();
    let mut progs: BTreeMap<_, BTreeSet<(State, State)>> = BTreeMap::new();
    for it in &t.gamma {
        match it {
            Item::Fml(lf) => {
                if let Formula::Atom(p) = &lf.formula {
                    props
                        .entry(p.clone())
                        .or_default()
                        .insert(lf.label.as_str().to_string());
                }
            }
            Item::Rel(r) => {
                progs
                    .entry(r.prog.clone())
                    .or_default()
                    .insert((r.src.as_str().to_string(), r.dst.as_str().to_string()));
            }
        }
    }
    let val: Valuation = labels
        .iter()
        .map(|l| (l.clone(), l.as_str().to_string()))
        .collect();
    (KripkeModel::new(states, props, progs), val)
}

/// Checks a candidate model against the goal: every goal label must name a
/// state, and the goal must come out false under the induced valuation.
fn verify_countermodel(model: &KripkeModel, goal: &Sequent) -> Option<Valuation> {
    let mut v = Valuation::new();
    for l in goal.labels() {
        let st = l.as_str().to_string();
        if !model.states.contains(&st) {
            return None;
        }
        v.insert(l, st);
    }
    match satisfies_sequent(model, &v, goal) {
        Ok(false) => Some(v),
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// The prover.
// ---------------------------------------------------------------------------

/// Budget for [`prove_test_free`]: `max_steps` caps the rule applications
/// inside each unwinding, `max_iters` the number of open goals processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub max_steps: u64,
    pub max_iters: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_steps: DEFAULT_UNWINDING_STEPS,
            max_iters: 64,
        }
    }
}

/// The result of a search: a checked cyclic proof, a verified countermodel,
/// or an explicit admission of defeat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchOutcome {
    Proof(CyclicPreProof),
    Countermodel(KripkeModel, Valuation),
    Unknown(String),
}

struct OpenGoal {
    node: NodeId,
    seq: Sequent,
    /// Unwinding roots on the path from the proof root to this goal,
    /// nearest first — the candidates for back-linking.
    history: Vec<(NodeId, Sequent)>,
}

/// Decides a test-free, relationally acyclic sequent by alternating capped
/// unwindings with back-linking. Positive answers are re-validated: a
/// `Proof` passes both the local rule checker and the trace condition, and
/// a `Countermodel` falsifies the goal. When validation fails or budgets
/// run out the outcome is `Unknown` with a reason.
pub fn prove_test_free(goal: &Sequent, budget: &Budget) -> Result<SearchOutcome, SearchError> {
    if !goal.is_test_free() {
        return Err(SearchError::NotTestFree);
    }
    if !is_acyclic(goal) {
        return Err(SearchError::NotAcyclic);
    }
    let mut b = ProofBuilder::new();
    let root = b.reserve();
    let mut frontier: VecDeque<OpenGoal> = VecDeque::new();
    frontier.push_back(OpenGoal {
        node: root,
        seq: goal.clone(),
        history: Vec::new(),
    });
    let mut iters = 0u64;
    while let Some(g) = frontier.pop_front() {
        if iters >= budget.max_iters {
            return Ok(SearchOutcome::Unknown(format!(
                "iteration budget of {} open goals exhausted",
                budget.max_iters
            )));
        }
        iters += 1;
        if let Some((companion, renaming)) = backlink_match(&g.seq, &g.history) {
            materialize_backlink(&mut b, g.node, &g.seq, companion, &renaming);
            continue;
        }
        let uw = match build_capped_unwinding_with(&g.seq, budget.max_steps) {
            Ok(uw) => uw,
            Err(SearchError::StepBudgetExceeded(n)) => {
                return Ok(SearchOutcome::Unknown(format!(
                    "step budget of {n} exhausted while unwinding `{}`",
                    g.seq
                )));
            }
            Err(e) => return Err(e),
        };
        // Graft the unwinding into the proof under construction. Open
        // leaves stay reserved: they become the next generation of goals.
        let mut map: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        map.insert(uw.derivation.root, g.node);
        for id in uw.derivation.nodes.keys() {
            if *id != uw.derivation.root {
                map.insert(*id, b.reserve());
            }
        }
        let open_ids: BTreeSet<NodeId> = uw.leaves.iter().map(|l| l.node).collect();
        for (id, dn) in &uw.derivation.nodes {
            if open_ids.contains(id) {
                continue;
            }
            let kind = match &dn.kind {
                NodeKind::Rule(r) => NodeKind::Rule(r.clone()),
                NodeKind::Open | NodeKind::Bud { .. } => {
                    unreachable!("unwindings contain rules and open leaves only")
                }
            };
            b.fill(
                map[id],
                dn.sequent.clone(),
                kind,
                dn.premises.iter().map(|p| map[p]).collect(),
            );
        }
        for leaf in &uw.leaves {
            let outer = map[&leaf.node];
            if is_atomic_sequent(&leaf.sequent) && is_normal(&leaf.sequent) {
                // A saturated, irreducible, non-axiomatic leaf: extract a
                // model from its pre-weakening form and verify it.
                let template = Template {
                    gamma: leaf.pre_weakening.ant.clone(),
                    delta: leaf.pre_weakening.con.clone(),
                };
                let (model, _) = template_to_model(&template);
                return Ok(match verify_countermodel(&model, goal) {
                    Some(v) => SearchOutcome::Countermodel(model, v),
                    None => SearchOutcome::Unknown(format!(
                        "open leaf `{}` suggests a countermodel that could not be \
                         verified against the goal",
                        leaf.sequent
                    )),
                });
            }
            if outer == g.node {
                // The unwinding made no progress and the leaf is not a
                // countermodel candidate: nothing more to try here.
                return Ok(SearchOutcome::Unknown(format!(
                    "no rule applies to the saturated sequent `{}`",
                    leaf.sequent
                )));
            }
            let mut history = vec![(g.node, g.seq.clone())];
            history.extend(g.history.iter().cloned());
            frontier.push_back(OpenGoal {
                node: outer,
                seq: leaf.sequent.clone(),
                history,
            });
        }
    }
    // Every goal was closed: re-validate the assembled proof mechanically.
    let proof = b.finish(root);
    if let Err(errs) = check_pre_proof(&proof) {
        return Ok(SearchOutcome::Unknown(format!(
            "assembled derivation failed checking: {}",
            errs.first().map(|e| e.to_string()).unwrap_or_default()
        )));
    }
    match check_gtc(&proof) {
        Ok(GtcVerdict::Accepted) => Ok(SearchOutcome::Proof(proof)),
        Ok(GtcVerdict::Rejected(lasso)) => Ok(SearchOutcome::Unknown(format!(
            "assembled pre-proof fails the trace condition on the cycle through nodes {:?}",
            lasso.cycle
        ))),
        Err(e) => Ok(SearchOutcome::Unknown(format!(
            "trace condition could not be evaluated: {e}"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Saturation search trees.
// ---------------------------------------------------------------------------

/// How formulas are scheduled for expansion in [`expand_search_tree`]:
/// round-robin over every non-atomic labelled formula in order of first
/// appearance, or a fixed list cycled through.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Schedule {
    RoundRobin,
    Fixed(Vec<LabelledFormula>),
}

/// A bounded saturation tree: the (possibly open) derivation built, and a
/// countermodel template per open leaf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchTree {
    pub derivation: CyclicPreProof,
    pub templates: Vec<Template>,
}

/// Expands one scheduled formula at one open leaf. Right-hand basic boxes
/// are the only consuming step (they mint a fresh successor); every other
/// expansion keeps the principal in the premises, so leaf sequents grow
/// monotonically along a branch. Returns the new open tips.
fn expand_leaf(
    b: &mut ProofBuilder,
    node: NodeId,
    seq: &Sequent,
    sigma: &LabelledFormula,
    gen: &mut LabelGen,
) -> Vec<(NodeId, Sequent)> {
    let item = Item::Fml(sigma.clone());
    let keep = vec![(node, seq.clone())];
    if classify(&sigma.formula) == FormulaClass::Atomic {
        return keep;
    }
    if seq.con.contains(&item) {
        let inst = match classify(&sigma.formula) {
            FormulaClass::Basic => {
                let fresh = gen.fresh_for(&seq.labels());
                RuleInstance::box_r(item, fresh)
            }
            FormulaClass::Iterated => {
                RuleInstance::with_principal(RuleName::StarR, item).contracted()
            }
            FormulaClass::Composite => {
                RuleInstance::with_principal(right_rule_for(&sigma.formula), item).contracted()
            }
            FormulaClass::Atomic => unreachable!(),
        };
        let premises = apply_rule(seq, &inst).expect("scheduled expansion must apply");
        let ids: Vec<NodeId> = premises.iter().map(|_| b.reserve()).collect();
        b.fill(node, seq.clone(), NodeKind::Rule(inst), ids.clone());
        return ids.into_iter().zip(premises).collect();
    }
    if seq.ant.contains(&item) {
        if classify(&sigma.formula) == FormulaClass::Basic {
            let Formula::Box(Program::Atom(a), _) = &sigma.formula else {
                unreachable!("basic formulas are atomic boxes");
            };
            let succs: Vec<Label> = seq
                .ant
                .iter()
                .filter_map(Item::as_rel)
                .filter(|r| r.src == sigma.label && r.prog == *a)
                .map(|r| r.dst.clone())
                .collect();
            if succs.is_empty() {
                return keep;
            }
            let mut cur_node = node;
            let mut cur_seq = seq.clone();
            for y in succs {
                let inst = RuleInstance::box_l(item.clone(), y).contracted();
                let prem = apply_rule(&cur_seq, &inst)
                    .expect("scheduled box-left must apply")
                    .remove(0);
                let next = b.reserve();
                b.fill(cur_node, cur_seq, NodeKind::Rule(inst), vec![next]);
                cur_node = next;
                cur_seq = prem;
            }
            return vec![(cur_node, cur_seq)];
        }
        let rule = match classify(&sigma.formula) {
            FormulaClass::Iterated => RuleName::StarL,
            FormulaClass::Composite => left_rule_for(&sigma.formula),
            FormulaClass::Atomic | FormulaClass::Basic => unreachable!(),
        };
        let inst = RuleInstance::with_principal(rule, item).contracted();
        let premises = apply_rule(seq, &inst).expect("scheduled expansion must apply");
        let ids: Vec<NodeId> = premises.iter().map(|_| b.reserve()).collect();
        b.fill(node, seq.clone(), NodeKind::Rule(inst), ids.clone());
        return ids.into_iter().zip(premises).collect();
    }
    keep
}

/// Closes every currently open tip that carries an axiom: a shared item or
/// an antecedent falsum.
fn close_leaves(b: &mut ProofBuilder, open: &mut Vec<(NodeId, Sequent)>) {
    open.retain(|(node, seq)| match closing_instance(seq) {
        Some(inst) => {
            b.fill(*node, seq.clone(), NodeKind::Rule(inst), vec![]);
            false
        }
        None => true,
    });
}

/// Grows a saturation search tree of the given depth: each step closes
/// axiomatic tips, then expands the next scheduled formula at every tip
/// where it occurs. The remaining open tips become countermodel templates.
pub fn expand_search_tree(s: &Sequent, schedule: &Schedule, depth: u64) -> SearchTree {
    let mut b = ProofBuilder::new();
    let root = b.reserve();
    let labels = s.labels();
    let mut gen = LabelGen::seeded_from(labels.iter());
    let mut open = vec![(root, s.clone())];
    let mut queue: VecDeque<LabelledFormula> = VecDeque::new();
    let mut seen: BTreeSet<LabelledFormula> = BTreeSet::new();
    let enqueue = |seq: &Sequent,
                       queue: &mut VecDeque<LabelledFormula>,
                       seen: &mut BTreeSet<LabelledFormula>| {
        for it in seq.ant.iter().chain(seq.con.iter()) {
            if let Item::Fml(lf) = it {
                if classify(&lf.formula) != FormulaClass::Atomic && seen.insert(lf.clone()) {
                    queue.push_back(lf.clone());
                }
            }
        }
    };
    enqueue(s, &mut queue, &mut seen);
    let mut fixed_idx = 0usize;
    for _ in 0..depth {
        close_leaves(&mut b, &mut open);
        if open.is_empty() {
            break;
        }
        let sigma = match schedule {
            Schedule::RoundRobin => match queue.pop_front() {
                Some(f) => {
                    queue.push_back(f.clone());
                    f
                }
                None => break,
            },
            Schedule::Fixed(v) => {
                if v.is_empty() {
                    break;
                }
                let f = v[fixed_idx % v.len()].clone();
                fixed_idx += 1;
                f
            }
        };
        let mut next_open = Vec::new();
        for (node, seq) in std::mem::take(&mut open) {
            for (n2, s2) in expand_leaf(&mut b, node, &seq, &sigma, &mut gen) {
                enqueue(&s2, &mut queue, &mut seen);
                next_open.push((n2, s2));
            }
        }
        open = next_open;
    }
    close_leaves(&mut b, &mut open);
    let mut templates = Vec::new();
    for (node, seq) in open {
        templates.push(Template {
            gamma: seq.ant.clone(),
            delta: seq.con.clone(),
        });
        b.fill(node, seq, NodeKind::Open, vec![]);
    }
    SearchTree {
        derivation: b.finish(root),
        templates,
    }
}
