//! Reusable derivation schemata.
//!
//! This module builds three families of derivations on top of the kernel:
//!
//! * [`build_necessitation`] constructs, for any program `α`, hypothesis set
//!   `Γ` over a single label `x`, and formula `φ`, an open derivation of
//!   `[α]Γ ⊢ x:[α]φ` whose open leaves all carry `Γ ⊢ x:φ`. The
//!   construction recurses on `α`; the iteration case closes its recursive
//!   leaves with buds back to its own conclusion, so the fragment is cyclic.
//! * [`derive_axiom`] instantiates the six standard axiom schemas of the
//!   logic and returns closed cyclic pre-proofs for them, built from small
//!   finite derivations and the necessitation fragment.
//! * [`hilbert_to_cyclic`] compiles a Hilbert-style proof — axiom
//!   instances, classical tautologies, modus ponens, necessitation — into a
//!   single checked cyclic pre-proof of its final theorem.
//!
//! Everything produced here is an ordinary [`CyclicPreProof`] and can be
//! revalidated with [`check_pre_proof`](crate::kernel::check_pre_proof) and
//! [`check_gtc`](crate::traces::check_gtc).

use std::collections::BTreeSet;

use thiserror::Error;

use crate::kernel::{
    apply_rule, CyclicPreProof, NodeId, NodeKind, ProofBuilder, RuleInstance, RuleName,
};
use crate::syntax::{Formula, Item, Label, LabelGen, LabelledFormula, Program, Sequent};

// ---------------------------------------------------------------------------
// Errors and open derivations
// ---------------------------------------------------------------------------

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemataError {
    /// Necessitation hypotheses must all be labelled with one and the same
    /// label.
    #[error("necessitation requires all hypotheses to share a single label")]
    MultiLabelGamma,
    /// The axiom id is unknown or the supplied parameters do not fit its
    /// schema.
    #[error("bad axiom parameters: {0}")]
    BadParams(String),
    /// A Hilbert proof step refers to a missing line, misapplies a rule, or
    /// claims a non-tautology as a tautology.
    #[error("ill-formed Hilbert proof: {0}")]
    IllFormedHilbertProof(String),
}

/// A derivation fragment with designated open leaves, listed left to right.
/// The underlying pre-proof is well-formed except that the listed leaves are
/// `Open`; composition replaces them with further derivations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenDerivation {
    pub derivation: CyclicPreProof,
    pub open_leaves: Vec<NodeId>,
}

impl OpenDerivation {
    /// The sequent at the root of the fragment.
    pub fn conclusion(&self) -> &Sequent {
        &self.derivation.nodes[&self.derivation.root].sequent
    }

    /// The sequent carried by every open leaf (they all agree by
    /// construction); `None` when the fragment is closed.
    pub fn leaf_sequent(&self) -> Option<&Sequent> {
        self.open_leaves
            .first()
            .map(|id| &self.derivation.nodes[id].sequent)
    }
}

// ---------------------------------------------------------------------------
// Chain builder: thread single-premise rules through a ProofBuilder
// ---------------------------------------------------------------------------

/// A cursor over a reserved-but-unfilled node. `step` fills the current
/// node with a single-premise rule and moves the cursor to the premise;
/// `split` fills it with a two-premise rule and returns both premise
/// cursors; `close` fills it with a zero-premise rule.
struct Chain<'a> {
    b: &'a mut ProofBuilder,
    node: NodeId,
    seq: Sequent,
}

impl<'a> Chain<'a> {
    fn new(b: &'a mut ProofBuilder, node: NodeId, seq: Sequent) -> Self {
        Chain { b, node, seq }
    }

    fn step(&mut self, inst: RuleInstance) {
        let mut prems = apply_rule(&self.seq, &inst)
            .unwrap_or_else(|e| panic!("schema step {:?} failed: {e}", inst.rule));
        assert_eq!(prems.len(), 1, "step() requires a single-premise rule");
        let next = self.b.reserve();
        self.b
            .fill(self.node, self.seq.clone(), NodeKind::Rule(inst), vec![next]);
        self.node = next;
        self.seq = prems.remove(0);
    }

    fn split(self, inst: RuleInstance) -> Vec<(NodeId, Sequent)> {
        let prems = apply_rule(&self.seq, &inst)
            .unwrap_or_else(|e| panic!("schema split {:?} failed: {e}", inst.rule));
        let ids: Vec<NodeId> = prems.iter().map(|_| self.b.reserve()).collect();
        self.b
            .fill(self.node, self.seq, NodeKind::Rule(inst), ids.clone());
        ids.into_iter().zip(prems).collect()
    }

    fn close(self, inst: RuleInstance) {
        let prems = apply_rule(&self.seq, &inst)
            .unwrap_or_else(|e| panic!("schema close {:?} failed: {e}", inst.rule));
        assert!(prems.is_empty(), "close() requires a zero-premise rule");
        self.b
            .fill(self.node, self.seq, NodeKind::Rule(inst), vec![]);
    }
}

/// Closes a reserved node whose sequent shares an item between both sides
/// (or has a falsum on the left). Panics if neither applies; callers only
/// use it where closure is guaranteed by construction.
fn close_axiomatically(b: &mut ProofBuilder, node: NodeId, seq: Sequent) {
    if let Some(item) = seq.ant.intersection(&seq.con).next().cloned() {
        Chain::new(b, node, seq).close(RuleInstance::with_principal(RuleName::Ax, item));
        return;
    }
    let bot = seq
        .ant
        .iter()
        .find(|i| matches!(i, Item::Fml(lf) if lf.formula == Formula::Bot))
        .cloned()
        .expect("sequent is neither an axiom nor a falsum");
    Chain::new(b, node, seq).close(RuleInstance::with_principal(RuleName::Bot, bot));
}

/// Copies a finished (closed) pre-proof into `b`, rooting it at the
/// already-reserved `node`. Internal ids, premise links, and bud
/// companions are renumbered consistently.
fn graft_proof_at(b: &mut ProofBuilder, node: NodeId, proof: &CyclicPreProof) {
    use std::collections::BTreeMap;
    let mut map: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    map.insert(proof.root, node);
    for id in proof.nodes.keys() {
        if *id != proof.root {
            map.insert(*id, b.reserve());
        }
    }
    for (id, dn) in &proof.nodes {
        let kind = match &dn.kind {
            NodeKind::Rule(r) => NodeKind::Rule(r.clone()),
            NodeKind::Bud { companion } => NodeKind::Bud {
                companion: map[companion],
            },
            NodeKind::Open => NodeKind::Open,
        };
        let premises = dn.premises.iter().map(|p| map[p]).collect();
        b.fill(map[id], dn.sequent.clone(), kind, premises);
    }
}

// ---------------------------------------------------------------------------
// Necessitation
// ---------------------------------------------------------------------------

fn boxed_set(alpha: &Program, gamma: &BTreeSet<Formula>) -> BTreeSet<Formula> {
    gamma
        .iter()
        .map(|f| Formula::boxed(alpha.clone(), f.clone()))
        .collect()
}

fn seq_at(x: &Label, ant: &BTreeSet<Formula>, con: &Formula) -> Sequent {
    Sequent {
        ant: ant.iter().map(|f| Item::fml(x.clone(), f.clone())).collect(),
        con: BTreeSet::from([Item::fml(x.clone(), con.clone())]),
    }
}

/// Builds the necessitation fragment for `α`, `Γ` (formulas at `x`), `φ`
/// into `b`, rooted at the reserved `node`. The conclusion filled at
/// `node` is `[α]Γ ⊢ x:[α]φ`; the returned ids are reserved, unfilled
/// leaves, each carrying the sequent `Γ ⊢ x:φ`, in left-to-right order.
fn necessitation_at(
    b: &mut ProofBuilder,
    node: NodeId,
    x: &Label,
    alpha: &Program,
    gamma: &BTreeSet<Formula>,
    phi: &Formula,
) -> Vec<NodeId> {
    let conclusion = seq_at(x, &boxed_set(alpha, gamma), &Formula::boxed(alpha.clone(), phi.clone()));
    let leaf = seq_at(x, gamma, phi);
    let leaves = match alpha {
        Program::Atom(_) => {
            let mut gen = LabelGen::seeded_from([x]);
            let y = gen.fresh_for(&BTreeSet::from([x.clone()]));
            let boxed_phi = Formula::boxed(alpha.clone(), phi.clone());
            let mut ch = Chain::new(b, node, conclusion);
            // Substitute the conclusion label away so it can return as the
            // fresh successor introduced by the box-right step.
            ch.step(RuleInstance::subst(y.clone(), x.clone()));
            ch.step(RuleInstance::box_r(Item::fml(y.clone(), boxed_phi), x.clone()));
            for psi in gamma {
                let principal = Item::fml(y.clone(), Formula::boxed(alpha.clone(), psi.clone()));
                ch.step(RuleInstance::box_l(principal, x.clone()));
            }
            let a = match alpha {
                Program::Atom(a) => a.clone(),
                _ => unreachable!(),
            };
            ch.step(RuleInstance::with_principal(
                RuleName::WL,
                Item::rel(y, a, x.clone()),
            ));
            let tail = ch.node;
            debug_assert_eq!(ch.seq, leaf);
            vec![tail]
        }
        Program::Seq(a1, a2) => {
            let mut ch = Chain::new(b, node, conclusion);
            let principal = |f: &Formula| Item::fml(x.clone(), Formula::boxed(alpha.clone(), f.clone()));
            ch.step(RuleInstance::with_principal(RuleName::SeqR, principal(phi)));
            for psi in gamma {
                ch.step(RuleInstance::with_principal(RuleName::SeqL, principal(psi)));
            }
            let inner_gamma = boxed_set(a2, gamma);
            let inner_phi = Formula::boxed((**a2).clone(), phi.clone());
            let tail = ch.node;
            let mids = necessitation_at(b, tail, x, a1, &inner_gamma, &inner_phi);
            let mut out = Vec::new();
            for mid in mids {
                out.extend(necessitation_at(b, mid, x, a2, gamma, phi));
            }
            out
        }
        Program::Choice(a1, a2) => {
            let mut ch = Chain::new(b, node, conclusion);
            let principal = |f: &Formula| Item::fml(x.clone(), Formula::boxed(alpha.clone(), f.clone()));
            for psi in gamma {
                ch.step(RuleInstance::with_principal(RuleName::ChoiceL, principal(psi)));
            }
            let tips = ch.split(RuleInstance::with_principal(RuleName::ChoiceR, principal(phi)));
            let mut out = Vec::new();
            for (tip, (keep, drop)) in tips.into_iter().zip([(a1, a2), (a2, a1)]) {
                let (tip_node, tip_seq) = tip;
                let keep_set = boxed_set(keep, gamma);
                let mut ch = Chain::new(b, tip_node, tip_seq);
                for f in boxed_set(drop, gamma).difference(&keep_set) {
                    ch.step(RuleInstance::with_principal(
                        RuleName::WL,
                        Item::fml(x.clone(), f.clone()),
                    ));
                }
                let tail = ch.node;
                out.extend(necessitation_at(b, tail, x, keep, gamma, phi));
            }
            out
        }
        Program::Test(test) => {
            let mut ch = Chain::new(b, node, conclusion);
            let principal = |f: &Formula| Item::fml(x.clone(), Formula::boxed(alpha.clone(), f.clone()));
            let test_item = Item::fml(x.clone(), (**test).clone());
            ch.step(RuleInstance::with_principal(RuleName::TestR, principal(phi)));
            for psi in gamma {
                let mut tips = Chain::new(ch.b, ch.node, ch.seq.clone())
                    .split(RuleInstance::with_principal(RuleName::TestL, principal(psi)));
                let (cont_node, cont_seq) = tips.remove(1);
                let (ax_node, ax_seq) = tips.remove(0);
                close_axiomatically(ch.b, ax_node, ax_seq);
                ch.node = cont_node;
                ch.seq = cont_seq;
            }
            if !gamma.contains(test) {
                ch.step(RuleInstance::with_principal(RuleName::WL, test_item));
            }
            let tail = ch.node;
            debug_assert_eq!(ch.seq, leaf);
            vec![tail]
        }
        Program::Star(a1) => {
            let companion = node;
            let companion_seq = conclusion.clone();
            let mut ch = Chain::new(b, node, conclusion);
            let principal = |f: &Formula| Item::fml(x.clone(), Formula::boxed(alpha.clone(), f.clone()));
            for psi in gamma {
                ch.step(RuleInstance::with_principal(RuleName::StarL, principal(psi)));
            }
            let mut tips = ch.split(RuleInstance::with_principal(RuleName::StarR, principal(phi)));
            let (right_node, right_seq) = tips.remove(1);
            let (left_node, left_seq) = tips.remove(0);

            // Left premise: weaken away the unfolded step formulas to
            // expose the open leaf `Γ ⊢ x:φ`.
            let step_set: BTreeSet<Formula> = gamma
                .iter()
                .map(|f| {
                    Formula::boxed(
                        (**a1).clone(),
                        Formula::boxed(alpha.clone(), f.clone()),
                    )
                })
                .collect();
            let mut chl = Chain::new(b, left_node, left_seq);
            for f in step_set.difference(gamma) {
                chl.step(RuleInstance::with_principal(
                    RuleName::WL,
                    Item::fml(x.clone(), f.clone()),
                ));
            }
            debug_assert_eq!(chl.seq, leaf);
            let open_leaf = chl.node;

            // Right premise: weaken away the hypotheses themselves, then
            // recurse on the step program; the recursive leaves repeat the
            // conclusion and become buds.
            let mut chr = Chain::new(b, right_node, right_seq);
            for f in gamma.difference(&step_set) {
                chr.step(RuleInstance::with_principal(
                    RuleName::WL,
                    Item::fml(x.clone(), f.clone()),
                ));
            }
            let tail = chr.node;
            let star_gamma = boxed_set(alpha, gamma);
            let star_phi = Formula::boxed(alpha.clone(), phi.clone());
            let rec_leaves = necessitation_at(b, tail, x, a1, &star_gamma, &star_phi);
            for l in rec_leaves {
                b.fill(l, companion_seq.clone(), NodeKind::Bud { companion }, vec![]);
            }
            vec![open_leaf]
        }
    };
    leaves
}

/// Builds an open derivation of `[α]Γ ⊢ x:[α]φ` from hypotheses `Γ`, all
/// labelled with the same `x`; every open leaf carries `Γ ⊢ x:φ`. With an
/// empty `Γ` the label defaults to `x`. Errors with
/// [`SchemataError::MultiLabelGamma`] when the hypotheses mix labels.
pub fn build_necessitation(
    alpha: &Program,
    gamma: &BTreeSet<LabelledFormula>,
    phi: &Formula,
) -> Result<OpenDerivation, SchemataError> {
    let labels: BTreeSet<&Label> = gamma.iter().map(|lf| &lf.label).collect();
    if labels.len() > 1 {
        return Err(SchemataError::MultiLabelGamma);
    }
    let x = labels
        .iter()
        .next()
        .map(|l| (*l).clone())
        .unwrap_or_else(|| Label::new("x"));
    let formulas: BTreeSet<Formula> = gamma.iter().map(|lf| lf.formula.clone()).collect();

    let mut b = ProofBuilder::new();
    let root = b.reserve();
    let leaves = necessitation_at(&mut b, root, &x, alpha, &formulas, phi);
    let leaf_seq = seq_at(&x, &formulas, phi);
    for l in &leaves {
        b.fill(*l, leaf_seq.clone(), NodeKind::Open, vec![]);
    }
    Ok(OpenDerivation {
        derivation: b.finish(root),
        open_leaves: leaves,
    })
}

// ---------------------------------------------------------------------------
// Axiom schemas
// ---------------------------------------------------------------------------

/// Parameters instantiating an axiom schema. Axioms use the subset of
/// fields they need: 1 and 2 take `alpha`, `phi`, `psi`; 3 and 4 take
/// `alpha`, `beta`, `phi`; 5 takes `phi`, `psi` (the test); 6 takes
/// `alpha`, `phi`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AxiomParams {
    pub alpha: Option<Program>,
    pub beta: Option<Program>,
    pub phi: Option<Formula>,
    pub psi: Option<Formula>,
}

impl AxiomParams {
    fn alpha(&self) -> Result<&Program, SchemataError> {
        self.alpha
            .as_ref()
            .ok_or_else(|| SchemataError::BadParams("missing program parameter `alpha`".into()))
    }
    fn beta(&self) -> Result<&Program, SchemataError> {
        self.beta
            .as_ref()
            .ok_or_else(|| SchemataError::BadParams("missing program parameter `beta`".into()))
    }
    fn phi(&self) -> Result<&Formula, SchemataError> {
        self.phi
            .as_ref()
            .ok_or_else(|| SchemataError::BadParams("missing formula parameter `phi`".into()))
    }
    fn psi(&self) -> Result<&Formula, SchemataError> {
        self.psi
            .as_ref()
            .ok_or_else(|| SchemataError::BadParams("missing formula parameter `psi`".into()))
    }
}

/// The instance formula proved by [`derive_axiom`] for the same arguments.
pub fn axiom_formula(id: u8, params: &AxiomParams) -> Result<Formula, SchemataError> {
    let iff = |a: Formula, b: Formula| Formula::and(Formula::imp(a.clone(), b.clone()), Formula::imp(b, a));
    match id {
        1 => {
            let (alpha, phi, psi) = (params.alpha()?, params.phi()?, params.psi()?);
            Ok(Formula::imp(
                Formula::boxed(alpha.clone(), Formula::imp(phi.clone(), psi.clone())),
                Formula::imp(
                    Formula::boxed(alpha.clone(), phi.clone()),
                    Formula::boxed(alpha.clone(), psi.clone()),
                ),
            ))
        }
        2 => {
            let (alpha, phi, psi) = (params.alpha()?, params.phi()?, params.psi()?);
            Ok(Formula::imp(
                Formula::boxed(alpha.clone(), Formula::and(phi.clone(), psi.clone())),
                Formula::and(
                    Formula::boxed(alpha.clone(), phi.clone()),
                    Formula::boxed(alpha.clone(), psi.clone()),
                ),
            ))
        }
        3 => {
            let (alpha, beta, phi) = (params.alpha()?, params.beta()?, params.phi()?);
            Ok(iff(
                Formula::boxed(Program::choice(alpha.clone(), beta.clone()), phi.clone()),
                Formula::and(
                    Formula::boxed(alpha.clone(), phi.clone()),
                    Formula::boxed(beta.clone(), phi.clone()),
                ),
            ))
        }
        4 => {
            let (alpha, beta, phi) = (params.alpha()?, params.beta()?, params.phi()?);
            Ok(iff(
                Formula::boxed(Program::seq(alpha.clone(), beta.clone()), phi.clone()),
                Formula::boxed(alpha.clone(), Formula::boxed(beta.clone(), phi.clone())),
            ))
        }
        5 => {
            let (phi, psi) = (params.phi()?, params.psi()?);
            Ok(iff(
                Formula::boxed(Program::test(psi.clone()), phi.clone()),
                Formula::imp(psi.clone(), phi.clone()),
            ))
        }
        6 => {
            let (alpha, phi) = (params.alpha()?, params.phi()?);
            Ok(Formula::imp(
                Formula::and(
                    phi.clone(),
                    Formula::boxed(
                        Program::star(alpha.clone()),
                        Formula::imp(phi.clone(), Formula::boxed(alpha.clone(), phi.clone())),
                    ),
                ),
                Formula::boxed(Program::star(alpha.clone()), phi.clone()),
            ))
        }
        other => Err(SchemataError::BadParams(format!(
            "unknown axiom id {other}; expected 1..=6"
        ))),
    }
}

/// Closes a reserved leaf of sequent `x:χ→ω, (x:χ) ⊢ x:ω`-shape by a
/// left-implication split whose premises are axiomatic, falling back to a
/// direct axiom when the sequent already closes.
fn close_by_imp_l(b: &mut ProofBuilder, node: NodeId, seq: Sequent, principal: Item) {
    if seq.ant.intersection(&seq.con).next().is_some() {
        close_axiomatically(b, node, seq);
        return;
    }
    let tips = Chain::new(b, node, seq).split(RuleInstance::with_principal(RuleName::ImpL, principal));
    for (n, s) in tips {
        close_axiomatically(b, n, s);
    }
}

/// Derives the requested axiom instance as a closed cyclic pre-proof of
/// `⊢ x:A` for the instance formula `A`. Instances of 1, 2, and 6 are
/// built around the necessitation fragment; 3, 4, and 5 are small finite
/// derivations.
pub fn derive_axiom(id: u8, params: &AxiomParams) -> Result<CyclicPreProof, SchemataError> {
    let x = Label::new("x");
    let a = axiom_formula(id, params)?;
    let root_seq = Sequent {
        ant: BTreeSet::new(),
        con: BTreeSet::from([Item::fml(x.clone(), a.clone())]),
    };
    let mut b = ProofBuilder::new();
    let root = b.reserve();

    match id {
        1 => {
            let (alpha, phi, psi) = (
                params.alpha()?.clone(),
                params.phi()?.clone(),
                params.psi()?.clone(),
            );
            let imp = Formula::imp(phi.clone(), psi.clone());
            let mut ch = Chain::new(&mut b, root, root_seq);
            ch.step(RuleInstance::with_principal(
                RuleName::ImpR,
                Item::fml(x.clone(), a.clone()),
            ));
            let inner = match &a {
                Formula::Imp(_, inner) => (**inner).clone(),
                _ => unreachable!(),
            };
            ch.step(RuleInstance::with_principal(
                RuleName::ImpR,
                Item::fml(x.clone(), inner),
            ));
            let tail = ch.node;
            let gamma = BTreeSet::from([imp.clone(), phi.clone()]);
            let leaves = necessitation_at(&mut b, tail, &x, &alpha, &gamma, &psi);
            let leaf_seq = seq_at(&x, &gamma, &psi);
            for l in leaves {
                close_by_imp_l(&mut b, l, leaf_seq.clone(), Item::fml(x.clone(), imp.clone()));
            }
        }
        2 => {
            let (alpha, phi, psi) = (
                params.alpha()?.clone(),
                params.phi()?.clone(),
                params.psi()?.clone(),
            );
            let conj = Formula::and(phi.clone(), psi.clone());
            let mut ch = Chain::new(&mut b, root, root_seq);
            ch.step(RuleInstance::with_principal(
                RuleName::ImpR,
                Item::fml(x.clone(), a.clone()),
            ));
            let inner = match &a {
                Formula::Imp(_, inner) => (**inner).clone(),
                _ => unreachable!(),
            };
            let tips = ch.split(RuleInstance::with_principal(
                RuleName::AndR,
                Item::fml(x.clone(), inner),
            ));
            let gamma = BTreeSet::from([conj.clone()]);
            for ((tip, tip_seq), target) in tips.into_iter().zip([&phi, &psi]) {
                debug_assert_eq!(
                    tip_seq,
                    seq_at(&x, &boxed_set(&alpha, &gamma), &Formula::boxed(alpha.clone(), (*target).clone()))
                );
                let leaves = necessitation_at(&mut b, tip, &x, &alpha, &gamma, target);
                let leaf_seq = seq_at(&x, &gamma, target);
                for l in leaves {
                    if leaf_seq.ant.intersection(&leaf_seq.con).next().is_some() {
                        close_axiomatically(&mut b, l, leaf_seq.clone());
                        continue;
                    }
                    let tips = Chain::new(&mut b, l, leaf_seq.clone()).split(
                        RuleInstance::with_principal(
                            RuleName::AndL,
                            Item::fml(x.clone(), conj.clone()),
                        ),
                    );
                    for (n, s) in tips {
                        close_axiomatically(&mut b, n, s);
                    }
                }
            }
        }
        3 | 4 | 5 => {
            let (fwd, bwd) = match &a {
                Formula::And(fwd, bwd) => ((**fwd).clone(), (**bwd).clone()),
                _ => unreachable!(),
            };
            let tips = Chain::new(&mut b, root, root_seq).split(RuleInstance::with_principal(
                RuleName::AndR,
                Item::fml(x.clone(), a.clone()),
            ));
            for (direction, ((tip, tip_seq), dir)) in
                tips.into_iter().zip([fwd, bwd]).enumerate()
            {
                let mut ch = Chain::new(&mut b, tip, tip_seq);
                ch.step(RuleInstance::with_principal(
                    RuleName::ImpR,
                    Item::fml(x.clone(), dir.clone()),
                ));
                let (lhs, _rhs) = match dir {
                    Formula::Imp(l, r) => ((*l).clone(), (*r).clone()),
                    _ => unreachable!(),
                };
                derive_direction(ch, &x, id, direction, &lhs)?;
            }
        }
        6 => {
            let (alpha, phi) = (params.alpha()?.clone(), params.phi()?.clone());
            let step = Formula::imp(phi.clone(), Formula::boxed(alpha.clone(), phi.clone()));
            let invariant = Formula::boxed(Program::star(alpha.clone()), step.clone());
            let goal = Formula::boxed(Program::star(alpha.clone()), phi.clone());
            let conj = Formula::and(phi.clone(), invariant.clone());

            let mut ch = Chain::new(&mut b, root, root_seq);
            ch.step(RuleInstance::with_principal(
                RuleName::ImpR,
                Item::fml(x.clone(), a.clone()),
            ));
            ch.step(RuleInstance::with_principal(
                RuleName::AndL,
                Item::fml(x.clone(), conj.clone()),
            ));
            // `ch` now sits at the companion: x:φ, x:[α*](φ→[α]φ) ⊢ x:[α*]φ.
            let companion = ch.node;
            let companion_seq = ch.seq.clone();
            let tips = Chain::new(ch.b, companion, companion_seq.clone()).split(
                RuleInstance::with_principal(RuleName::StarR, Item::fml(x.clone(), goal.clone())),
            );
            let (left, right) = (tips[0].clone(), tips[1].clone());
            close_axiomatically(&mut b, left.0, left.1);

            let mut chr = Chain::new(&mut b, right.0, right.1);
            chr.step(RuleInstance::with_principal(
                RuleName::StarL,
                Item::fml(x.clone(), invariant.clone()),
            ));
            let mut tips = Chain::new(chr.b, chr.node, chr.seq.clone()).split(
                RuleInstance::with_principal(RuleName::ImpL, Item::fml(x.clone(), step.clone())),
            );
            let (cont_node, cont_seq) = tips.remove(1);
            let (ax_node, ax_seq) = tips.remove(0);
            close_axiomatically(&mut b, ax_node, ax_seq);

            let mut chc = Chain::new(&mut b, cont_node, cont_seq);
            chc.step(RuleInstance::with_principal(
                RuleName::WL,
                Item::fml(x.clone(), phi.clone()),
            ));
            let tail = chc.node;
            let gamma = BTreeSet::from([phi.clone(), invariant.clone()]);
            let rec_leaves = necessitation_at(&mut b, tail, &x, &alpha, &gamma, &goal);
            for l in rec_leaves {
                b.fill(l, companion_seq.clone(), NodeKind::Bud { companion }, vec![]);
            }
        }
        _ => unreachable!("axiom_formula validated the id"),
    }
    Ok(b.finish(root))
}

/// Finishes one implication direction of axioms 3–5 after the outer
/// right-implication step; `lhs` is the hypothesis just moved left.
fn derive_direction(
    mut ch: Chain<'_>,
    x: &Label,
    id: u8,
    direction: usize,
    lhs: &Formula,
) -> Result<(), SchemataError> {
    let goal_of = |seq: &Sequent| match seq.con.iter().next().cloned() {
        Some(Item::Fml(lf)) => lf.formula,
        _ => unreachable!("direction goals are single labelled formulas"),
    };
    match (id, direction) {
        // [α∪β]φ ⊢ [α]φ ∧ [β]φ
        (3, 0) => {
            let principal = Item::fml(x.clone(), lhs.clone());
            let inner = goal_of(&ch.seq);
            let Chain { b, node, seq } = ch;
            let tips = Chain::new(&mut *b, node, seq).split(RuleInstance::with_principal(
                RuleName::AndR,
                Item::fml(x.clone(), inner),
            ));
            for (n, s) in tips {
                let inner_tips = Chain::new(&mut *b, n, s).split(
                    RuleInstance::with_principal(RuleName::ChoiceL, principal.clone()),
                );
                for (n2, s2) in inner_tips {
                    close_axiomatically(b, n2, s2);
                }
            }
            Ok(())
        }
        // [α]φ ∧ [β]φ ⊢ [α∪β]φ
        (3, 1) => {
            ch.step(RuleInstance::with_principal(
                RuleName::AndL,
                Item::fml(x.clone(), lhs.clone()),
            ));
            let goal = goal_of(&ch.seq);
            let Chain { b, node, seq } = ch;
            let tips = Chain::new(&mut *b, node, seq).split(RuleInstance::with_principal(
                RuleName::ChoiceR,
                Item::fml(x.clone(), goal),
            ));
            for (n, s) in tips {
                close_axiomatically(b, n, s);
            }
            Ok(())
        }
        // [α;β]φ ⊢ [α][β]φ
        (4, 0) => {
            ch.step(RuleInstance::with_principal(
                RuleName::SeqL,
                Item::fml(x.clone(), lhs.clone()),
            ));
            let Chain { b, node, seq } = ch;
            close_axiomatically(b, node, seq);
            Ok(())
        }
        // [α][β]φ ⊢ [α;β]φ
        (4, 1) => {
            let goal = goal_of(&ch.seq);
            ch.step(RuleInstance::with_principal(
                RuleName::SeqR,
                Item::fml(x.clone(), goal),
            ));
            let Chain { b, node, seq } = ch;
            close_axiomatically(b, node, seq);
            Ok(())
        }
        // [ψ?]φ ⊢ ψ→φ
        (5, 0) => {
            let principal = Item::fml(x.clone(), lhs.clone());
            let goal = goal_of(&ch.seq);
            ch.step(RuleInstance::with_principal(
                RuleName::ImpR,
                Item::fml(x.clone(), goal),
            ));
            let Chain { b, node, seq } = ch;
            if seq.ant.intersection(&seq.con).next().is_some() {
                close_axiomatically(b, node, seq);
                return Ok(());
            }
            let tips = Chain::new(&mut *b, node, seq)
                .split(RuleInstance::with_principal(RuleName::TestL, principal));
            for (n, s) in tips {
                close_axiomatically(b, n, s);
            }
            Ok(())
        }
        // ψ→φ ⊢ [ψ?]φ
        (5, 1) => {
            let goal = goal_of(&ch.seq);
            ch.step(RuleInstance::with_principal(
                RuleName::TestR,
                Item::fml(x.clone(), goal),
            ));
            let principal = Item::fml(x.clone(), lhs.clone());
            let Chain { b, node, seq } = ch;
            close_by_imp_l(b, node, seq, principal);
            Ok(())
        }
        _ => Err(SchemataError::BadParams(format!(
            "axiom {id} direction does not match its schema"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Hilbert proofs
// ---------------------------------------------------------------------------

/// One line of a Hilbert-style proof. Indices refer to earlier lines.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HilbertStep {
    /// An instance of axiom schema 1–6.
    Axiom { id: u8, params: AxiomParams },
    /// A classical tautology, possibly with boxed subformulas treated as
    /// opaque units; discharged by the built-in propositional prover.
    Tautology(Formula),
    /// From lines `premise: χ` and `implication: χ→ω`, conclude `ω`.
    ModusPonens { premise: usize, implication: usize },
    /// From line `premise: χ`, conclude `[α]χ`.
    Necessitation { premise: usize, program: Program },
}

/// A Hilbert-style proof: a sequence of steps whose last line is the
/// theorem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertProof {
    pub steps: Vec<HilbertStep>,
}

fn ill(msg: impl Into<String>) -> SchemataError {
    SchemataError::IllFormedHilbertProof(msg.into())
}

/// Proves `⊢ x:φ` treating boxed formulas as opaque atoms; `None` when
/// `φ` is not a classical tautology under that reading. All propositional
/// rules used are invertible, so the simple backward search is complete.
fn prove_propositional(x: &Label, phi: &Formula) -> Option<CyclicPreProof> {
    let mut b = ProofBuilder::new();
    let root = b.reserve();
    let seq = Sequent {
        ant: BTreeSet::new(),
        con: BTreeSet::from([Item::fml(x.clone(), phi.clone())]),
    };
    if prove_prop_at(&mut b, root, seq) {
        Some(b.finish(root))
    } else {
        None
    }
}

fn prove_prop_at(b: &mut ProofBuilder, node: NodeId, seq: Sequent) -> bool {
    if seq.ant.intersection(&seq.con).next().is_some()
        || seq
            .ant
            .iter()
            .any(|i| matches!(i, Item::Fml(lf) if lf.formula == Formula::Bot))
    {
        close_axiomatically(b, node, seq);
        return true;
    }
    let connective = |items: &BTreeSet<Item>| {
        items
            .iter()
            .find(|i| {
                matches!(
                    i,
                    Item::Fml(lf)
                        if matches!(lf.formula, Formula::And(..) | Formula::Or(..) | Formula::Imp(..))
                )
            })
            .cloned()
    };
    let (principal, rule) = if let Some(item) = connective(&seq.con) {
        let rule = match &item {
            Item::Fml(lf) => match lf.formula {
                Formula::And(..) => RuleName::AndR,
                Formula::Or(..) => RuleName::OrR,
                Formula::Imp(..) => RuleName::ImpR,
                _ => unreachable!(),
            },
            _ => unreachable!(),
        };
        (item, rule)
    } else if let Some(item) = connective(&seq.ant) {
        let rule = match &item {
            Item::Fml(lf) => match lf.formula {
                Formula::And(..) => RuleName::AndL,
                Formula::Or(..) => RuleName::OrL,
                Formula::Imp(..) => RuleName::ImpL,
                _ => unreachable!(),
            },
            _ => unreachable!(),
        };
        (item, rule)
    } else {
        return false;
    };
    let inst = RuleInstance::with_principal(rule, principal);
    let prems = apply_rule(&seq, &inst).expect("propositional step");
    let ids: Vec<NodeId> = prems.iter().map(|_| b.reserve()).collect();
    b.fill(node, seq, NodeKind::Rule(inst), ids.clone());
    ids.into_iter()
        .zip(prems)
        .all(|(n, s)| prove_prop_at(b, n, s))
}

/// Compiles a Hilbert-style proof into a cyclic pre-proof of `⊢ x:ψ` for
/// its final theorem `ψ`. Modus ponens becomes a cut on the conjunction of
/// its premise and implication; necessitation wraps the premise derivation
/// in the necessitation fragment.
pub fn hilbert_to_cyclic(h: &HilbertProof) -> Result<CyclicPreProof, SchemataError> {
    if h.steps.is_empty() {
        return Err(ill("a proof needs at least one step"));
    }
    let x = Label::new("x");
    let mut derived: Vec<(Formula, CyclicPreProof)> = Vec::new();
    for (i, step) in h.steps.iter().enumerate() {
        let line = match step {
            HilbertStep::Axiom { id, params } => {
                let proof = derive_axiom(*id, params)?;
                let formula = axiom_formula(*id, params)?;
                (formula, proof)
            }
            HilbertStep::Tautology(f) => {
                let proof = prove_propositional(&x, f)
                    .ok_or_else(|| ill(format!("step {i}: `{f}` is not a tautology")))?;
                (f.clone(), proof)
            }
            HilbertStep::ModusPonens {
                premise,
                implication,
            } => {
                if *premise >= i || *implication >= i {
                    return Err(ill(format!("step {i}: modus ponens references a later line")));
                }
                let (chi, d_chi) = &derived[*premise];
                let (imp, d_imp) = &derived[*implication];
                let omega = match imp {
                    Formula::Imp(l, r) if **l == *chi => (**r).clone(),
                    _ => {
                        return Err(ill(format!(
                            "step {i}: line {implication} is not an implication from line {premise}"
                        )))
                    }
                };
                let proof = modus_ponens_proof(&x, chi, imp, &omega, d_chi, d_imp);
                (omega, proof)
            }
            HilbertStep::Necessitation { premise, program } => {
                if *premise >= i {
                    return Err(ill(format!("step {i}: necessitation references a later line")));
                }
                let (chi, d_chi) = &derived[*premise];
                let boxed = Formula::boxed(program.clone(), chi.clone());
                let mut b = ProofBuilder::new();
                let root = b.reserve();
                let leaves = necessitation_at(&mut b, root, &x, program, &BTreeSet::new(), chi);
                for l in leaves {
                    graft_proof_at(&mut b, l, d_chi);
                }
                (boxed, b.finish(root))
            }
        };
        derived.push(line);
    }
    Ok(derived.pop().expect("nonempty").1)
}

/// The modus ponens gadget: concludes `⊢ x:ω` from derivations of
/// `⊢ x:χ` and `⊢ x:χ→ω` by cutting on `χ ∧ (χ→ω)`.
fn modus_ponens_proof(
    x: &Label,
    chi: &Formula,
    imp: &Formula,
    omega: &Formula,
    d_chi: &CyclicPreProof,
    d_imp: &CyclicPreProof,
) -> CyclicPreProof {
    let conj = Formula::and(chi.clone(), imp.clone());
    let conj_item = Item::fml(x.clone(), conj.clone());
    let goal = Sequent {
        ant: BTreeSet::new(),
        con: BTreeSet::from([Item::fml(x.clone(), omega.clone())]),
    };

    let mut b = ProofBuilder::new();
    let root = b.reserve();
    let mut tips = Chain::new(&mut b, root, goal).split(RuleInstance::cut(conj_item.clone()));
    let (right_node, right_seq) = tips.remove(1);
    let (left_node, left_seq) = tips.remove(0);

    // Left premise ⊢ x:ω, x:χ∧(χ→ω): drop the goal, split the conjunction,
    // and graft the two ingredient derivations.
    let mut chl = Chain::new(&mut b, left_node, left_seq);
    chl.step(RuleInstance::with_principal(
        RuleName::WR,
        Item::fml(x.clone(), omega.clone()),
    ));
    let and_tips = Chain::new(chl.b, chl.node, chl.seq.clone())
        .split(RuleInstance::with_principal(RuleName::AndR, conj_item.clone()));
    graft_proof_at(&mut b, and_tips[0].0, d_chi);
    graft_proof_at(&mut b, and_tips[1].0, d_imp);

    // Right premise x:χ∧(χ→ω) ⊢ x:ω: split and discharge classically.
    let mut chr = Chain::new(&mut b, right_node, right_seq);
    chr.step(RuleInstance::with_principal(RuleName::AndL, conj_item));
    let node = chr.node;
    let seq = chr.seq.clone();
    close_by_imp_l(&mut b, node, seq, Item::fml(x.clone(), imp.clone()));

    b.finish(root)
}
