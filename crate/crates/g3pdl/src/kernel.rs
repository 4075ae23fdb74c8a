//! The proof kernel: rule schemas, rule application, derivation nodes,
//! cyclic pre-proofs, and local well-formedness checking.
//!
//! A node's premises are recomputed from its conclusion and recorded rule
//! instance, never trusted; checking is therefore deterministic and needs
//! no search. The global trace condition lives in the `traces` module —
//! `check_pre_proof` validates shape only.

use crate::syntax::{Formula, Item, Label, Program, Sequent};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub type NodeId = u64;

/// The rule schemas. `Bud` and `Open` are node kinds, not rules: a bud is
/// a leaf tied to a companion, an open node is an unfinished goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RuleName {
    Ax,
    Bot,
    WL,
    WR,
    AndL,
    AndR,
    OrL,
    OrR,
    ImpL,
    ImpR,
    BoxL,
    BoxR,
    SeqL,
    SeqR,
    ChoiceL,
    ChoiceR,
    TestL,
    TestR,
    StarL,
    StarR,
    Subst,
    Cut,
}

pub const ALL_RULES: [RuleName; 22] = [
    RuleName::Ax,
    RuleName::Bot,
    RuleName::WL,
    RuleName::WR,
    RuleName::AndL,
    RuleName::AndR,
    RuleName::OrL,
    RuleName::OrR,
    RuleName::ImpL,
    RuleName::ImpR,
    RuleName::BoxL,
    RuleName::BoxR,
    RuleName::SeqL,
    RuleName::SeqR,
    RuleName::ChoiceL,
    RuleName::ChoiceR,
    RuleName::TestL,
    RuleName::TestR,
    RuleName::StarL,
    RuleName::StarR,
    RuleName::Subst,
    RuleName::Cut,
];

impl RuleName {
    pub fn arity(self) -> usize {
        use RuleName::*;
        match self {
            Ax | Bot => 0,
            AndR | OrL | ImpL | ChoiceR | TestL | StarR | Cut => 2,
            _ => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        use RuleName::*;
        match self {
            Ax => "Ax",
            Bot => "Bot",
            WL => "WL",
            WR => "WR",
            AndL => "AndL",
            AndR => "AndR",
            OrL => "OrL",
            OrR => "OrR",
            ImpL => "ImpL",
            ImpR => "ImpR",
            BoxL => "BoxL",
            BoxR => "BoxR",
            SeqL => "SeqL",
            SeqR => "SeqR",
            ChoiceL => "ChoiceL",
            ChoiceR => "ChoiceR",
            TestL => "TestL",
            TestR => "TestR",
            StarL => "StarL",
            StarR => "StarR",
            Subst => "Subst",
            Cut => "Cut",
        }
    }

    pub fn from_str(s: &str) -> Option<RuleName> {
        ALL_RULES.iter().copied().find(|r| r.as_str() == s)
    }
}

impl fmt::Display for RuleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Extra parameters a rule instance may carry. Which fields are meaningful
/// depends on the rule: `fresh` for BoxR, `via` for BoxL (the target of the
/// relational atom used), `from`/`to` for Subst, `cut` for Cut. `contract`
/// keeps the principal item in the premise contexts (legal under set
/// semantics, where reintroducing an existing member is a no-op), and is
/// only accepted on rules that consume a principal.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RuleParams {
    pub fresh: Option<Label>,
    pub via: Option<Label>,
    pub from: Option<Label>,
    pub to: Option<Label>,
    pub cut: Option<Item>,
    pub contract: bool,
}

impl RuleParams {
    pub fn is_empty(&self) -> bool {
        self == &RuleParams::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleInstance {
    pub rule: RuleName,
    pub principal: Option<Item>,
    pub params: RuleParams,
}

impl RuleInstance {
    pub fn new(rule: RuleName) -> Self {
        RuleInstance {
            rule,
            principal: None,
            params: RuleParams::default(),
        }
    }

    pub fn with_principal(rule: RuleName, principal: Item) -> Self {
        RuleInstance {
            rule,
            principal: Some(principal),
            params: RuleParams::default(),
        }
    }

    pub fn box_l(principal: Item, via: Label) -> Self {
        let mut r = RuleInstance::with_principal(RuleName::BoxL, principal);
        r.params.via = Some(via);
        r
    }

    pub fn box_r(principal: Item, fresh: Label) -> Self {
        let mut r = RuleInstance::with_principal(RuleName::BoxR, principal);
        r.params.fresh = Some(fresh);
        r
    }

    pub fn subst(from: Label, to: Label) -> Self {
        let mut r = RuleInstance::new(RuleName::Subst);
        r.params.from = Some(from);
        r.params.to = Some(to);
        r
    }

    pub fn cut(item: Item) -> Self {
        let mut r = RuleInstance::new(RuleName::Cut);
        r.params.cut = Some(item);
        r
    }

    /// Marks the instance as contracting: the principal stays in the
    /// premise contexts instead of being consumed.
    pub fn contracted(mut self) -> Self {
        self.params.contract = true;
        self
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("{rule}: principal item {item} does not occur on the required side")]
    PrincipalMissing { rule: RuleName, item: String },
    #[error("{rule}: principal item is required")]
    PrincipalRequired { rule: RuleName },
    #[error("BoxR: label `{label}` is not fresh for the conclusion")]
    FreshnessViolated { label: Label },
    #[error("{rule}: {detail}")]
    SideConditionFailed { rule: RuleName, detail: String },
}

fn side_err(rule: RuleName, detail: impl Into<String>) -> RuleError {
    RuleError::SideConditionFailed {
        rule,
        detail: detail.into(),
    }
}

/// Removes `principal` from `side` unless the instance contracts; errors
/// if it is not a member.
fn consume(
    rule: RuleName,
    side: &BTreeSet<Item>,
    principal: &Item,
    contract: bool,
) -> Result<BTreeSet<Item>, RuleError> {
    if !side.contains(principal) {
        return Err(RuleError::PrincipalMissing {
            rule,
            item: principal.to_string(),
        });
    }
    let mut out = side.clone();
    if !contract {
        out.remove(principal);
    }
    Ok(out)
}

fn with(mut set: BTreeSet<Item>, items: impl IntoIterator<Item = Item>) -> BTreeSet<Item> {
    set.extend(items);
    set
}

fn principal_formula<'a>(
    rule: RuleName,
    principal: &'a Option<Item>,
) -> Result<(&'a Label, &'a Formula), RuleError> {
    match principal {
        Some(Item::Fml(lf)) => Ok((&lf.label, &lf.formula)),
        Some(Item::Rel(_)) => Err(side_err(rule, "principal must be a labelled formula")),
        None => Err(RuleError::PrincipalRequired { rule }),
    }
}

/// Computes the premises of applying `r` to the conclusion `s`. The
/// returned list length always equals `r.rule.arity()`.
pub fn apply_rule(s: &Sequent, r: &RuleInstance) -> Result<Vec<Sequent>, RuleError> {
    use RuleName::*;
    let rule = r.rule;
    let contract = r.params.contract;
    if contract && matches!(rule, Ax | Bot | WL | WR | Subst | Cut) {
        return Err(side_err(rule, "contraction is not applicable to this rule"));
    }

    match rule {
        Ax => {
            match &r.principal {
                Some(item) => {
                    if !(s.ant.contains(item) && s.con.contains(item)) {
                        return Err(RuleError::PrincipalMissing {
                            rule,
                            item: item.to_string(),
                        });
                    }
                }
                None => {
                    if s.ant.intersection(&s.con).next().is_none() {
                        return Err(side_err(rule, "no item shared by both sides"));
                    }
                }
            }
            Ok(vec![])
        }
        Bot => {
            let ok = match &r.principal {
                Some(item) => {
                    matches!(item, Item::Fml(lf) if lf.formula == Formula::Bot)
                        && s.ant.contains(item)
                }
                None => s
                    .ant
                    .iter()
                    .any(|i| matches!(i, Item::Fml(lf) if lf.formula == Formula::Bot)),
            };
            if !ok {
                return Err(side_err(rule, "antecedent contains no labelled falsum"));
            }
            Ok(vec![])
        }
        WL => {
            let principal = r
                .principal
                .as_ref()
                .ok_or(RuleError::PrincipalRequired { rule })?;
            let ant = consume(rule, &s.ant, principal, false)?;
            Ok(vec![Sequent {
                ant,
                con: s.con.clone(),
            }])
        }
        WR => {
            let principal = r
                .principal
                .as_ref()
                .ok_or(RuleError::PrincipalRequired { rule })?;
            let con = consume(rule, &s.con, principal, false)?;
            Ok(vec![Sequent {
                ant: s.ant.clone(),
                con,
            }])
        }
        AndL => {
            let (x, phi) = principal_formula(rule, &r.principal)?;
            let (a, b) = match phi {
                Formula::And(a, b) => (a, b),
                _ => return Err(side_err(rule, "principal is not a conjunction")),
            };
            let ant = consume(rule, &s.ant, r.principal.as_ref().unwrap(), contract)?;
            Ok(vec![Sequent {
                ant: with(
                    ant,
                    [
                        Item::fml(x.clone(), (**a).clone()),
                        Item::fml(x.clone(), (**b).clone()),
                    ],
                ),
                con: s.con.clone(),
            }])
        }
        AndR => {
            let (x, phi) = principal_formula(rule, &r.principal)?;
            let (a, b) = match phi {
                Formula::And(a, b) => (a, b),
                _ => return Err(side_err(rule, "principal is not a conjunction")),
            };
            let con = consume(rule, &s.con, r.principal.as_ref().unwrap(), contract)?;
            Ok(vec![
                Sequent {
                    ant: s.ant.clone(),
                    con: with(con.clone(), [Item::fml(x.clone(), (**a).clone())]),
                },
                Sequent {
                    ant: s.ant.clone(),
                    con: with(con, [Item::fml(x.clone(), (**b).clone())]),
                },
            ])
        }
        OrL => {
            let (x, phi) = principal_formula(rule, &r.principal)?;
            let (a, b) = match phi {
                Formula::Or(a, b) => (a, b),
                _ => return Err(side_err(rule, "principal is not a disjunction")),
            };
            let ant = consume(rule, &s.ant, r.principal.as_ref().unwrap(), contract)?;
            Ok(vec![
                Sequent {
                    ant: with(ant.clone(), [Item::fml(x.clone(), (**a).clone())]),
                    con: s.con.clone(),
                },
                Sequent {
                    ant: with(ant, [Item::fml(x.clone(), (**b).clone())]),
                    con: s.con.clone(),
                },
            ])
        }
        OrR => {
            let (x, phi) = principal_formula(rule, &r.principal)?;
            let (a, b) = match phi {
                Formula::Or(a, b) => (a, b),
                _ => return Err(side_err(rule, "principal is not a disjunction")),
            };
            let con = consume(rule, &s.con, r.principal.as_ref().unwrap(), contract)?;
            Ok(vec![Sequent {
                ant: s.ant.clone(),
                con: with(
                    con,
                    [
                        Item::fml(x.clone(), (**a).clone()),
                        Item::fml(x.clone(), (**b).clone()),
                    ],
                ),
            }])
        }
        ImpL => {
            let (x, phi) = principal_formula(rule, &r.principal)?;
            let (a, b) = match phi {
                Formula::Imp(a, b) => (a, b),
                _ => return Err(side_err(rule, "principal is not an implication")),
            };
            let ant = consume(rule, &s.ant, r.principal.as_ref().unwrap(), contract)?;
            Ok(vec![
                Sequent {
                    ant: ant.clone(),
                    con: with(s.con.clone(), [Item::fml(x.clone(), (**a).clone())]),
                },
                Sequent {
                    ant: with(ant, [Item::fml(x.clone(), (**b).clone())]),
                    con: s.con.clone(),
                },
            ])
        }
        ImpR => {
            let (x, phi) = principal_formula(rule, &r.principal)?;
            let (a, b) = match phi {
                Formula::Imp(a, b) => (a, b),
                _ => return Err(side_err(rule, "principal is not an implication")),
            };
            let con = consume(rule, &s.con, r.principal.as_ref().unwrap(), contract)?;
            Ok(vec![Sequent {
                ant: with(s.ant.clone(), [Item::fml(x.clone(), (**a).clone())]),
                con: with(con, [Item::fml(x.clone(), (**b).clone())]),
            }])
        }
        BoxL => {
            let (x, phi) = principal_formula(rule, &r.principal)?;
            let (prog, body) = match phi {
                Formula::Box(p, body) => (p, body),
                _ => return Err(side_err(rule, "principal is not a boxed formula")),
            };
            let a = match prog {
                Program::Atom(a) => a,
                _ => return Err(side_err(rule, "principal modality is not atomic")),
            };
            let y = r
                .params
                .via
                .as_ref()
                .ok_or_else(|| side_err(rule, "missing `via` label parameter"))?;
            let rel = Item::rel(x.clone(), a.clone(), y.clone());
            if !s.ant.contains(&rel) {
                return Err(side_err(
                    rule,
                    format!("relational atom {rel} is not in the antecedent"),
                ));
            }
            let ant = consume(rule, &s.ant, r.principal.as_ref().unwrap(), contract)?;
            Ok(vec![Sequent {
                ant: with(ant, [Item::fml(y.clone(), (**body).clone())]),
                con: s.con.clone(),
            }])
        }
        BoxR => {
            let (x, phi) = principal_formula(rule, &r.principal)?;
            let (prog, body) = match phi {
                Formula::Box(p, body) => (p, body),
                _ => return Err(side_err(rule, "principal is not a boxed formula")),
            };
            let a = match prog {
                Program::Atom(a) => a,
                _ => return Err(side_err(rule, "principal modality is not atomic")),
            };
            let y = r
                .params
                .fresh
                .as_ref()
                .ok_or_else(|| side_err(rule, "missing `fresh` label parameter"))?;
            if s.labels().contains(y) {
                return Err(RuleError::FreshnessViolated { label: y.clone() });
            }
            let con = consume(rule, &s.con, r.principal.as_ref().unwrap(), contract)?;
            Ok(vec![Sequent {
                ant: with(s.ant.clone(), [Item::rel(x.clone(), a.clone(), y.clone())]),
                con: with(con, [Item::fml(y.clone(), (**body).clone())]),
            }])
        }
        SeqL | SeqR => {
            let (x, phi) = principal_formula(rule, &r.principal)?;
            let (alpha, beta, body) = match phi {
                Formula::Box(Program::Seq(a, b), body) => (a, b, body),
                _ => return Err(side_err(rule, "principal is not a sequenced modality")),
            };
            let unfolded = Item::fml(
                x.clone(),
                Formula::Box(
                    (**alpha).clone(),
                    Box::new(Formula::Box((**beta).clone(), body.clone())),
                ),
            );
            if rule == SeqL {
                let ant = consume(rule, &s.ant, r.principal.as_ref().unwrap(), contract)?;
                Ok(vec![Sequent {
                    ant: with(ant, [unfolded]),
                    con: s.con.clone(),
                }])
            } else {
                let con = consume(rule, &s.con, r.principal.as_ref().unwrap(), contract)?;
                Ok(vec![Sequent {
                    ant: s.ant.clone(),
                    con: with(con, [unfolded]),
                }])
            }
        }
        ChoiceL => {
            let (x, phi) = principal_formula(rule, &r.principal)?;
            let (alpha, beta, body) = match phi {
                Formula::Box(Program::Choice(a, b), body) => (a, b, body),
                _ => return Err(side_err(rule, "principal is not a choice modality")),
            };
            let ant = consume(rule, &s.ant, r.principal.as_ref().unwrap(), contract)?;
            Ok(vec![Sequent {
                ant: with(
                    ant,
                    [
                        Item::fml(x.clone(), Formula::Box((**alpha).clone(), body.clone())),
                        Item::fml(x.clone(), Formula::Box((**beta).clone(), body.clone())),
                    ],
                ),
                con: s.con.clone(),
            }])
        }
        ChoiceR => {
            let (x, phi) = principal_formula(rule, &r.principal)?;
            let (alpha, beta, body) = match phi {
                Formula::Box(Program::Choice(a, b), body) => (a, b, body),
                _ => return Err(side_err(rule, "principal is not a choice modality")),
            };
            let con = consume(rule, &s.con, r.principal.as_ref().unwrap(), contract)?;
            Ok(vec![
                Sequent {
                    ant: s.ant.clone(),
                    con: with(
                        con.clone(),
                        [Item::fml(x.clone(), Formula::Box((**alpha).clone(), body.clone()))],
                    ),
                },
                Sequent {
                    ant: s.ant.clone(),
                    con: with(
                        con,
                        [Item::fml(x.clone(), Formula::Box((**beta).clone(), body.clone()))],
                    ),
                },
            ])
        }
        TestL => {
            let (x, phi) = principal_formula(rule, &r.principal)?;
            let (test, body) = match phi {
                Formula::Box(Program::Test(t), body) => (t, body),
                _ => return Err(side_err(rule, "principal is not a test modality")),
            };
            let ant = consume(rule, &s.ant, r.principal.as_ref().unwrap(), contract)?;
            Ok(vec![
                Sequent {
                    ant: ant.clone(),
                    con: with(s.con.clone(), [Item::fml(x.clone(), (**test).clone())]),
                },
                Sequent {
                    ant: with(ant, [Item::fml(x.clone(), (**body).clone())]),
                    con: s.con.clone(),
                },
            ])
        }
        TestR => {
            let (x, phi) = principal_formula(rule, &r.principal)?;
            let (test, body) = match phi {
                Formula::Box(Program::Test(t), body) => (t, body),
                _ => return Err(side_err(rule, "principal is not a test modality")),
            };
            let con = consume(rule, &s.con, r.principal.as_ref().unwrap(), contract)?;
            Ok(vec![Sequent {
                ant: with(s.ant.clone(), [Item::fml(x.clone(), (**test).clone())]),
                con: with(con, [Item::fml(x.clone(), (**body).clone())]),
            }])
        }
        StarL => {
            let (x, phi) = principal_formula(rule, &r.principal)?;
            let (alpha, body) = match phi {
                Formula::Box(Program::Star(a), body) => (a, body),
                _ => return Err(side_err(rule, "principal is not an iterated modality")),
            };
            let ant = consume(rule, &s.ant, r.principal.as_ref().unwrap(), contract)?;
            let step = Formula::Box(
                (**alpha).clone(),
                Box::new(Formula::Box(Program::star((**alpha).clone()), body.clone())),
            );
            Ok(vec![Sequent {
                ant: with(
                    ant,
                    [
                        Item::fml(x.clone(), (**body).clone()),
                        Item::fml(x.clone(), step),
                    ],
                ),
                con: s.con.clone(),
            }])
        }
        StarR => {
            let (x, phi) = principal_formula(rule, &r.principal)?;
            let (alpha, body) = match phi {
                Formula::Box(Program::Star(a), body) => (a, body),
                _ => return Err(side_err(rule, "principal is not an iterated modality")),
            };
            let con = consume(rule, &s.con, r.principal.as_ref().unwrap(), contract)?;
            let step = Formula::Box(
                (**alpha).clone(),
                Box::new(Formula::Box(Program::star((**alpha).clone()), body.clone())),
            );
            Ok(vec![
                Sequent {
                    ant: s.ant.clone(),
                    con: with(con.clone(), [Item::fml(x.clone(), (**body).clone())]),
                },
                Sequent {
                    ant: s.ant.clone(),
                    con: with(con, [Item::fml(x.clone(), step)]),
                },
            ])
        }
        Subst => {
            let from = r
                .params
                .from
                .clone()
                .ok_or_else(|| side_err(rule, "missing `from` label parameter"))?;
            let to = r
                .params
                .to
                .clone()
                .ok_or_else(|| side_err(rule, "missing `to` label parameter"))?;
            if from == to {
                return Err(side_err(rule, "`from` and `to` must differ"));
            }
            let labels = s.labels();
            if labels.contains(&from) {
                return Err(side_err(
                    rule,
                    format!("label `{from}` already occurs in the conclusion"),
                ));
            }
            if !labels.contains(&to) {
                return Err(side_err(
                    rule,
                    format!("label `{to}` does not occur in the conclusion"),
                ));
            }
            // Premise = conclusion with `to` renamed back to `from`; the
            // downward substitution replaces `from` by `to`.
            Ok(vec![s.subst_label(&to, &from)])
        }
        Cut => {
            let item = r
                .params
                .cut
                .clone()
                .ok_or_else(|| side_err(rule, "missing cut item parameter"))?;
            if !matches!(item, Item::Fml(_)) {
                return Err(side_err(rule, "cut item must be a labelled formula"));
            }
            Ok(vec![
                Sequent {
                    ant: s.ant.clone(),
                    con: with(s.con.clone(), [item.clone()]),
                },
                Sequent {
                    ant: with(s.ant.clone(), [item]),
                    con: s.con.clone(),
                },
            ])
        }
    }
}

// ---------------------------------------------------------------------------
// Derivation trees and cyclic pre-proofs.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Rule(RuleInstance),
    Bud { companion: NodeId },
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivationNode {
    pub id: NodeId,
    pub sequent: Sequent,
    pub kind: NodeKind,
    pub premises: Vec<NodeId>,
}

/// A finite derivation tree whose bud leaves point back at internal rule
/// nodes with syntactically identical sequents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CyclicPreProof {
    pub nodes: BTreeMap<NodeId, DerivationNode>,
    pub root: NodeId,
}

impl CyclicPreProof {
    pub fn node(&self, id: NodeId) -> Option<&DerivationNode> {
        self.nodes.get(&id)
    }

    pub fn buds(&self) -> impl Iterator<Item = &DerivationNode> {
        self.nodes
            .values()
            .filter(|n| matches!(n.kind, NodeKind::Bud { .. }))
    }

    /// Bud id → companion id, for all buds.
    pub fn companion_map(&self) -> BTreeMap<NodeId, NodeId> {
        self.nodes
            .values()
            .filter_map(|n| match n.kind {
                NodeKind::Bud { companion } => Some((n.id, companion)),
                _ => None,
            })
            .collect()
    }

    /// True when the proof has no `Open` nodes.
    pub fn is_closed(&self) -> bool {
        !self.nodes.values().any(|n| matches!(n.kind, NodeKind::Open))
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CheckErrorKind {
    #[error("referenced node {0} does not exist")]
    MissingNode(NodeId),
    #[error("{0}")]
    Rule(RuleError),
    #[error("rule expects {expected} premises, node lists {found}")]
    PremiseCount { expected: usize, found: usize },
    #[error("premise {premise} sequent mismatch: expected `{expected}`, found `{found}`")]
    PremiseMismatch {
        premise: NodeId,
        expected: Sequent,
        found: Sequent,
    },
    #[error("bud and open nodes cannot have premises")]
    LeafWithPremises,
    #[error("companion {0} is not a rule node")]
    CompanionNotRule(NodeId),
    #[error("companion sequent mismatch: companion {companion} has `{expected}`, bud has `{found}`")]
    CompanionMismatch {
        companion: NodeId,
        expected: Sequent,
        found: Sequent,
    },
    #[error("node map key disagrees with the node's own id")]
    IdMismatch,
    #[error("tree shape violated: {0}")]
    NotATree(String),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("node {node}: {kind}")]
pub struct CheckError {
    pub node: NodeId,
    pub kind: CheckErrorKind,
}

fn node_error(node: NodeId, kind: CheckErrorKind) -> CheckError {
    CheckError { node, kind }
}

/// Validates one node: its premise count, recomputed premise sequents, and
/// (for buds) the companion identity condition. Open nodes always pass.
pub fn check_node(proof: &CyclicPreProof, id: NodeId) -> Result<(), Vec<CheckError>> {
    let node = match proof.node(id) {
        Some(n) => n,
        None => return Err(vec![node_error(id, CheckErrorKind::MissingNode(id))]),
    };
    let mut errors = Vec::new();
    match &node.kind {
        NodeKind::Open => {
            if !node.premises.is_empty() {
                errors.push(node_error(id, CheckErrorKind::LeafWithPremises));
            }
        }
        NodeKind::Bud { companion } => {
            if !node.premises.is_empty() {
                errors.push(node_error(id, CheckErrorKind::LeafWithPremises));
            }
            match proof.node(*companion) {
                None => errors.push(node_error(id, CheckErrorKind::MissingNode(*companion))),
                Some(c) => {
                    if !matches!(c.kind, NodeKind::Rule(_)) {
                        errors.push(node_error(id, CheckErrorKind::CompanionNotRule(*companion)));
                    } else if c.sequent != node.sequent {
                        errors.push(node_error(
                            id,
                            CheckErrorKind::CompanionMismatch {
                                companion: *companion,
                                expected: c.sequent.clone(),
                                found: node.sequent.clone(),
                            },
                        ));
                    }
                }
            }
        }
        NodeKind::Rule(r) => match apply_rule(&node.sequent, r) {
            Err(e) => errors.push(node_error(id, CheckErrorKind::Rule(e))),
            Ok(premises) => {
                if premises.len() != node.premises.len() {
                    errors.push(node_error(
                        id,
                        CheckErrorKind::PremiseCount {
                            expected: premises.len(),
                            found: node.premises.len(),
                        },
                    ));
                } else {
                    for (expected, pid) in premises.iter().zip(&node.premises) {
                        match proof.node(*pid) {
                            None => {
                                errors.push(node_error(id, CheckErrorKind::MissingNode(*pid)))
                            }
                            Some(p) if &p.sequent != expected => {
                                errors.push(node_error(
                                    id,
                                    CheckErrorKind::PremiseMismatch {
                                        premise: *pid,
                                        expected: expected.clone(),
                                        found: p.sequent.clone(),
                                    },
                                ));
                            }
                            Some(_) => {}
                        }
                    }
                }
            }
        },
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

fn check_tree_shape(proof: &CyclicPreProof) -> Vec<CheckError> {
    let mut errors = Vec::new();
    if proof.node(proof.root).is_none() {
        errors.push(node_error(
            proof.root,
            CheckErrorKind::MissingNode(proof.root),
        ));
        return errors;
    }
    for (key, node) in &proof.nodes {
        if *key != node.id {
            errors.push(node_error(*key, CheckErrorKind::IdMismatch));
        }
    }
    // Each node has at most one parent; the root has none.
    let mut parent: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    for node in proof.nodes.values() {
        for pid in &node.premises {
            if let Some(prev) = parent.insert(*pid, node.id) {
                errors.push(node_error(
                    *pid,
                    CheckErrorKind::NotATree(format!(
                        "node is a premise of both {prev} and {}",
                        node.id
                    )),
                ));
            }
            if *pid == proof.root {
                errors.push(node_error(
                    *pid,
                    CheckErrorKind::NotATree("the root cannot be a premise".into()),
                ));
            }
        }
    }
    // Every node is reachable from the root through premise edges.
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([proof.root]);
    while let Some(id) = queue.pop_front() {
        if !seen.insert(id) {
            continue;
        }
        if let Some(node) = proof.node(id) {
            queue.extend(node.premises.iter().copied());
        }
    }
    for id in proof.nodes.keys() {
        if !seen.contains(id) {
            errors.push(node_error(
                *id,
                CheckErrorKind::NotATree("node unreachable from the root".into()),
            ));
        }
    }
    errors
}

/// Full local well-formedness: tree shape plus every node passing
/// [`check_node`]. Does not evaluate the global trace condition.
pub fn check_pre_proof(proof: &CyclicPreProof) -> Result<(), Vec<CheckError>> {
    let mut errors = check_tree_shape(proof);
    let ids: Vec<NodeId> = proof.nodes.keys().copied().collect();

    #[cfg(feature = "parallel")]
    let node_errors: Vec<CheckError> = ids
        .par_iter()
        .filter_map(|id| check_node(proof, *id).err())
        .flatten()
        .collect();
    #[cfg(not(feature = "parallel"))]
    let node_errors: Vec<CheckError> = ids
        .iter()
        .filter_map(|id| check_node(proof, *id).err())
        .flatten()
        .collect();

    errors.extend(node_errors);
    errors.sort_by_key(|e| (e.node, format!("{e}")));
    errors.dedup();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// Sequential variant of [`check_pre_proof`], for benchmarking.
pub fn check_pre_proof_seq(proof: &CyclicPreProof) -> Result<(), Vec<CheckError>> {
    let mut errors = check_tree_shape(proof);
    for id in proof.nodes.keys() {
        if let Err(mut errs) = check_node(proof, *id) {
            errors.append(&mut errs);
        }
    }
    errors.sort_by_key(|e| (e.node, format!("{e}")));
    errors.dedup();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

// ---------------------------------------------------------------------------
// The cycle graph: the tree with each bud identified with its companion.
// ---------------------------------------------------------------------------

/// An edge of the cycle graph: from a rule node, along one of its premise
/// positions, to the premise node — or to the bud's companion when that
/// premise is a bud (in which case `via_bud` records the identified bud).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct CgEdge {
    pub premise_index: usize,
    pub via_bud: Option<NodeId>,
    pub target: NodeId,
}

/// The directed graph obtained by identifying each bud with its companion:
/// vertices are the non-bud nodes, edges go from each rule node to its
/// premises with bud targets redirected to companions. Infinite paths in
/// the unfolded pre-proof correspond to infinite walks in this graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleGraph {
    pub succ: BTreeMap<NodeId, Vec<CgEdge>>,
}

impl CycleGraph {
    pub fn successors(&self, id: NodeId) -> &[CgEdge] {
        self.succ.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, CgEdge)> + '_ {
        self.succ
            .iter()
            .flat_map(|(from, outs)| outs.iter().map(move |e| (*from, *e)))
    }

    /// All simple cycles, each reported once as a node list rooted at its
    /// least node id.
    pub fn simple_cycles(&self) -> Vec<Vec<NodeId>> {
        let mut cycles = Vec::new();
        let ids: Vec<NodeId> = self.succ.keys().copied().collect();
        for &start in &ids {
            let mut path = vec![start];
            let mut on_path: BTreeSet<NodeId> = BTreeSet::from([start]);
            self.cycle_dfs(start, start, &mut path, &mut on_path, &mut cycles);
        }
        cycles
    }

    fn cycle_dfs(
        &self,
        start: NodeId,
        current: NodeId,
        path: &mut Vec<NodeId>,
        on_path: &mut BTreeSet<NodeId>,
        cycles: &mut Vec<Vec<NodeId>>,
    ) {
        for edge in self.successors(current) {
            let next = edge.target;
            if next == start {
                cycles.push(path.clone());
            } else if next > start && !on_path.contains(&next) {
                path.push(next);
                on_path.insert(next);
                self.cycle_dfs(start, next, path, on_path, cycles);
                path.pop();
                on_path.remove(&next);
            }
        }
    }

    /// Cycle existence via Kahn peeling (cheaper than cycle enumeration).
    pub fn has_cycle(&self) -> bool {
        let mut indegree: BTreeMap<NodeId, usize> =
            self.succ.keys().map(|id| (*id, 0)).collect();
        for (_, e) in self.edges() {
            *indegree.entry(e.target).or_insert(0) += 1;
        }
        let mut queue: VecDeque<NodeId> = indegree
            .iter()
            .filter(|(_, d)| **d == 0)
            .map(|(id, _)| *id)
            .collect();
        let mut removed = 0usize;
        while let Some(id) = queue.pop_front() {
            removed += 1;
            for e in self.successors(id) {
                let d = indegree.get_mut(&e.target).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push_back(e.target);
                }
            }
        }
        removed < indegree.len()
    }

    /// A shortest path (node list, inclusive) between two vertices, if any.
    pub fn shortest_path(&self, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
        let mut prev: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut queue = VecDeque::from([from]);
        let mut seen = BTreeSet::from([from]);
        while let Some(id) = queue.pop_front() {
            if id == to {
                let mut path = vec![to];
                let mut cur = to;
                while cur != from {
                    cur = prev[&cur];
                    path.push(cur);
                }
                path.reverse();
                return Some(path);
            }
            for e in self.successors(id) {
                if seen.insert(e.target) {
                    prev.insert(e.target, id);
                    queue.push_back(e.target);
                }
            }
        }
        None
    }
}

/// Builds the cycle graph of a pre-proof. Buds are not vertices: an edge
/// whose premise is a bud is redirected to the bud's companion.
pub fn cycle_graph(proof: &CyclicPreProof) -> CycleGraph {
    let mut succ: BTreeMap<NodeId, Vec<CgEdge>> = BTreeMap::new();
    for node in proof.nodes.values() {
        match &node.kind {
            NodeKind::Rule(_) => {
                let outs = succ.entry(node.id).or_default();
                for (i, pid) in node.premises.iter().enumerate() {
                    let (target, via_bud) = match proof.node(*pid).map(|n| &n.kind) {
                        Some(NodeKind::Bud { companion }) => (*companion, Some(*pid)),
                        _ => (*pid, None),
                    };
                    outs.push(CgEdge {
                        premise_index: i,
                        via_bud,
                        target,
                    });
                }
            }
            NodeKind::Open => {
                succ.entry(node.id).or_default();
            }
            NodeKind::Bud { .. } => {}
        }
    }
    CycleGraph { succ }
}

// ---------------------------------------------------------------------------
// Builder.
// ---------------------------------------------------------------------------

/// Imperative constructor for derivations. Ids may be reserved ahead of
/// time so back-links to not-yet-filled ancestors can be recorded.
#[derive(Debug, Default)]
pub struct ProofBuilder {
    nodes: BTreeMap<NodeId, DerivationNode>,
    reserved: BTreeSet<NodeId>,
    next: NodeId,
}

impl ProofBuilder {
    pub fn new() -> Self {
        ProofBuilder::default()
    }

    /// Reserves an id to be filled later with [`ProofBuilder::fill`].
    pub fn reserve(&mut self) -> NodeId {
        let id = self.next;
        self.next += 1;
        self.reserved.insert(id);
        id
    }

    pub fn fill(&mut self, id: NodeId, sequent: Sequent, kind: NodeKind, premises: Vec<NodeId>) {
        assert!(
            self.reserved.remove(&id),
            "fill() requires a reserved, unfilled id"
        );
        self.nodes.insert(
            id,
            DerivationNode {
                id,
                sequent,
                kind,
                premises,
            },
        );
    }

    pub fn add(&mut self, sequent: Sequent, kind: NodeKind, premises: Vec<NodeId>) -> NodeId {
        let id = self.reserve();
        self.fill(id, sequent, kind, premises);
        id
    }

    pub fn add_rule(
        &mut self,
        sequent: Sequent,
        rule: RuleInstance,
        premises: Vec<NodeId>,
    ) -> NodeId {
        self.add(sequent, NodeKind::Rule(rule), premises)
    }

    pub fn add_open(&mut self, sequent: Sequent) -> NodeId {
        self.add(sequent, NodeKind::Open, vec![])
    }

    pub fn add_bud(&mut self, sequent: Sequent, companion: NodeId) -> NodeId {
        self.add(sequent, NodeKind::Bud { companion }, vec![])
    }

    pub fn sequent_of(&self, id: NodeId) -> Option<&Sequent> {
        self.nodes.get(&id).map(|n| &n.sequent)
    }

    pub fn finish(self, root: NodeId) -> CyclicPreProof {
        assert!(
            self.reserved.is_empty(),
            "unfilled reserved ids: {:?}",
            self.reserved
        );
        CyclicPreProof {
            nodes: self.nodes,
            root,
        }
    }
}

/// Small pre-proofs shared by tests across the crate.
#[cfg(test)]
pub(crate) mod test_proofs {
    use super::*;
    use crate::parser::{parse_item, parse_sequent};

    pub(crate) fn seq(s: &str) -> Sequent {
        parse_sequent(s).unwrap()
    }

    pub(crate) fn item(s: &str) -> Item {
        parse_item(s).unwrap()
    }

    /// `⊢ x: p -> p` by ImpR then Ax: the smallest closed tree proof.
    pub(crate) fn tiny_valid_proof() -> CyclicPreProof {
        let mut b = ProofBuilder::new();
        let leaf = b.add_rule(
            seq("x: p |- x: p"),
            RuleInstance::with_principal(RuleName::Ax, item("x: p")),
            vec![],
        );
        let root = b.add_rule(
            seq("|- x: p -> p"),
            RuleInstance::with_principal(RuleName::ImpR, item("x: p -> p")),
            vec![leaf],
        );
        b.finish(root)
    }

    /// The locally well-formed pre-proof of the invalid `⊢ x: [a*]p` that
    /// cycles through weakenings on both premises of a contracted StarR.
    /// Every infinite branch lacks a progressing trace.
    pub(crate) fn wr_loop_preproof() -> CyclicPreProof {
        let mut b = ProofBuilder::new();
        let root = b.reserve();
        let goal = seq("|- x: [a*]p");
        let left_wr = b.add_rule(
            seq("|- x: [a*]p, x: p"),
            RuleInstance::with_principal(RuleName::WR, item("x: p")),
            vec![],
        );
        let left_bud = b.add_bud(goal.clone(), root);
        b.nodes.get_mut(&left_wr).unwrap().premises = vec![left_bud];
        let right_wr = b.add_rule(
            seq("|- x: [a*]p, x: [a][a*]p"),
            RuleInstance::with_principal(RuleName::WR, item("x: [a][a*]p")),
            vec![],
        );
        let right_bud = b.add_bud(goal.clone(), root);
        b.nodes.get_mut(&right_wr).unwrap().premises = vec![right_bud];
        b.fill(
            root,
            goal,
            NodeKind::Rule(
                RuleInstance::with_principal(RuleName::StarR, item("x: [a*]p")).contracted(),
            ),
            vec![left_wr, right_wr],
        );
        b.finish(root)
    }

    /// The cyclic proof of `⊢ x: [a*]p -> [a*;a*]p`: one backlink whose
    /// cycle runs StarR, StarL, BoxR, BoxL, two weakenings, and a label
    /// substitution before returning to the companion.
    pub(crate) fn seq_comp_proof() -> CyclicPreProof {
        let mut b = ProofBuilder::new();
        let ids: Vec<NodeId> = (0..11).map(|_| b.reserve()).collect();
        let mut rule = |i: usize, s: &str, inst: RuleInstance, prems: &[usize]| {
            let prems = prems.iter().map(|p| ids[*p]).collect();
            b.fill(ids[i], seq(s), NodeKind::Rule(inst), prems);
        };
        rule(
            0,
            "|- x: [a*]p -> [a*;a*]p",
            RuleInstance::with_principal(RuleName::ImpR, item("x: [a*]p -> [a*;a*]p")),
            &[1],
        );
        rule(
            1,
            "x: [a*]p |- x: [a*;a*]p",
            RuleInstance::with_principal(RuleName::SeqR, item("x: [a*;a*]p")),
            &[2],
        );
        rule(
            2,
            "x: [a*]p |- x: [a*][a*]p",
            RuleInstance::with_principal(RuleName::StarR, item("x: [a*][a*]p")),
            &[3, 4],
        );
        rule(
            3,
            "x: [a*]p |- x: [a*]p",
            RuleInstance::with_principal(RuleName::Ax, item("x: [a*]p")),
            &[],
        );
        rule(
            4,
            "x: [a*]p |- x: [a][a*][a*]p",
            RuleInstance::with_principal(RuleName::StarL, item("x: [a*]p")),
            &[5],
        );
        rule(
            5,
            "x: p, x: [a][a*]p |- x: [a][a*][a*]p",
            RuleInstance::box_r(item("x: [a][a*][a*]p"), Label::new("y")),
            &[6],
        );
        rule(
            6,
            "x: p, x: [a][a*]p, x -a-> y |- y: [a*][a*]p",
            RuleInstance::box_l(item("x: [a][a*]p"), Label::new("y")),
            &[7],
        );
        rule(
            7,
            "x: p, y: [a*]p, x -a-> y |- y: [a*][a*]p",
            RuleInstance::with_principal(RuleName::WL, item("x: p")),
            &[8],
        );
        rule(
            8,
            "y: [a*]p, x -a-> y |- y: [a*][a*]p",
            RuleInstance::with_principal(RuleName::WL, item("x -a-> y")),
            &[9],
        );
        rule(
            9,
            "y: [a*]p |- y: [a*][a*]p",
            RuleInstance::subst(Label::new("x"), Label::new("y")),
            &[10],
        );
        b.fill(
            ids[10],
            seq("x: [a*]p |- x: [a*][a*]p"),
            NodeKind::Bud { companion: ids[2] },
            vec![],
        );
        b.finish(ids[0])
    }
}
