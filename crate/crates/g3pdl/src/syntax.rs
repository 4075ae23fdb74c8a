//! Core syntax: formulas, programs, labels, and labelled sequents.
//!
//! Formulas and programs are mutually recursive: the modality `[alpha]phi`
//! embeds a program in a formula, and test programs `phi ?` embed a formula in
//! a program. Sequents are pairs of finite *sets* of items, where an item is
//! either a labelled formula `x: phi` or a relational atom `x -a-> y` between
//! labels (atomic programs only). Set semantics gives implicit contraction:
//! adding an item that is already present is a no-op.

use std::collections::BTreeSet;
use std::fmt;

/// A world label occurring in sequents (`x`, `y`, generated `_0`, `_1`, ...).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Label(pub String);

/// An atomic proposition name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PropName(pub String);

/// An atomic program name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProgName(pub String);

impl Label {
    pub fn new(s: impl Into<String>) -> Self {
        Label(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl PropName {
    pub fn new(s: impl Into<String>) -> Self {
        PropName(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl ProgName {
    pub fn new(s: impl Into<String>) -> Self {
        ProgName(s.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
impl fmt::Display for PropName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
impl fmt::Display for ProgName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Programs of the dynamic logic: atomic actions, sequential composition,
/// nondeterministic choice, tests, and finite iteration.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Program {
    Atom(ProgName),
    Seq(Box<Program>, Box<Program>),
    Choice(Box<Program>, Box<Program>),
    Test(Box<Formula>),
    Star(Box<Program>),
}

/// Formulas: falsum, atoms, conjunction, disjunction, implication, and the
/// box modality `[alpha]phi`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    Bot,
    Atom(PropName),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Imp(Box<Formula>, Box<Formula>),
    Box(Program, Box<Formula>),
}

impl Program {
    pub fn atom(name: impl Into<String>) -> Program {
        Program::Atom(ProgName::new(name))
    }
    pub fn seq(a: Program, b: Program) -> Program {
        Program::Seq(Box::new(a), Box::new(b))
    }
    pub fn choice(a: Program, b: Program) -> Program {
        Program::Choice(Box::new(a), Box::new(b))
    }
    pub fn test(phi: Formula) -> Program {
        Program::Test(Box::new(phi))
    }
    pub fn star(a: Program) -> Program {
        Program::Star(Box::new(a))
    }

    /// True when the program contains no test subprogram.
    pub fn is_test_free(&self) -> bool {
        match self {
            Program::Atom(_) => true,
            Program::Seq(a, b) | Program::Choice(a, b) => a.is_test_free() && b.is_test_free(),
            Program::Test(_) => false,
            Program::Star(a) => a.is_test_free(),
        }
    }

    /// True when the program contains an iteration subprogram.
    pub fn contains_star(&self) -> bool {
        match self {
            Program::Atom(_) => false,
            Program::Seq(a, b) | Program::Choice(a, b) => a.contains_star() || b.contains_star(),
            Program::Test(phi) => phi.contains_star(),
            Program::Star(_) => true,
        }
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        match self {
            Program::Atom(_) => 1,
            Program::Seq(a, b) | Program::Choice(a, b) => 1 + a.size() + b.size(),
            Program::Test(phi) => 1 + phi.size(),
            Program::Star(a) => 1 + a.size(),
        }
    }
}

impl Formula {
    pub fn atom(name: impl Into<String>) -> Formula {
        Formula::Atom(PropName::new(name))
    }
    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }
    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }
    pub fn imp(a: Formula, b: Formula) -> Formula {
        Formula::Imp(Box::new(a), Box::new(b))
    }
    pub fn boxed(alpha: Program, phi: Formula) -> Formula {
        Formula::Box(alpha, Box::new(phi))
    }

    /// True when the formula contains no test program.
    pub fn is_test_free(&self) -> bool {
        match self {
            Formula::Bot | Formula::Atom(_) => true,
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Imp(a, b) => {
                a.is_test_free() && b.is_test_free()
            }
            Formula::Box(alpha, phi) => alpha.is_test_free() && phi.is_test_free(),
        }
    }

    pub fn contains_star(&self) -> bool {
        match self {
            Formula::Bot | Formula::Atom(_) => false,
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Imp(a, b) => {
                a.contains_star() || b.contains_star()
            }
            Formula::Box(alpha, phi) => alpha.contains_star() || phi.contains_star(),
        }
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        match self {
            Formula::Bot | Formula::Atom(_) => 1,
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Imp(a, b) => 1 + a.size() + b.size(),
            Formula::Box(alpha, phi) => 1 + alpha.size() + phi.size(),
        }
    }
}

/// Shape classification of a formula, driving rule selection.
///
/// * `Atomic`: falsum or a proposition; no rule decomposes it.
/// * `Basic`: `[a]phi` with `a` atomic; decomposed only against an edge.
/// * `Iterated`: `[alpha*]phi`; subject to the iteration rules.
/// * `Composite`: everything else (connectives, `[alpha;beta]`, `[alpha+beta]`,
///   `[phi?]`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulaClass {
    Atomic,
    Basic,
    Iterated,
    Composite,
}

/// Classify a formula by its outermost shape.
pub fn classify(phi: &Formula) -> FormulaClass {
    match phi {
        Formula::Bot | Formula::Atom(_) => FormulaClass::Atomic,
        Formula::And(_, _) | Formula::Or(_, _) | Formula::Imp(_, _) => FormulaClass::Composite,
        Formula::Box(Program::Atom(_), _) => FormulaClass::Basic,
        Formula::Box(Program::Star(_), _) => FormulaClass::Iterated,
        Formula::Box(_, _) => FormulaClass::Composite,
    }
}

/// A labelled formula `x: phi`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelledFormula {
    pub label: Label,
    pub formula: Formula,
}

impl LabelledFormula {
    pub fn new(label: Label, formula: Formula) -> Self {
        LabelledFormula { label, formula }
    }
}

/// A relational atom `x -a-> y` (atomic programs only).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelAtom {
    pub src: Label,
    pub prog: ProgName,
    pub dst: Label,
}

impl RelAtom {
    pub fn new(src: Label, prog: ProgName, dst: Label) -> Self {
        RelAtom { src, prog, dst }
    }
}

/// One element of a sequent side.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Item {
    Rel(RelAtom),
    Fml(LabelledFormula),
}

impl Item {
    pub fn fml(label: Label, formula: Formula) -> Item {
        Item::Fml(LabelledFormula::new(label, formula))
    }
    pub fn rel(src: Label, prog: ProgName, dst: Label) -> Item {
        Item::Rel(RelAtom::new(src, prog, dst))
    }

    pub fn as_fml(&self) -> Option<&LabelledFormula> {
        match self {
            Item::Fml(lf) => Some(lf),
            Item::Rel(_) => None,
        }
    }

    pub fn as_rel(&self) -> Option<&RelAtom> {
        match self {
            Item::Rel(r) => Some(r),
            Item::Fml(_) => None,
        }
    }

    /// Labels occurring in the item.
    pub fn labels(&self) -> BTreeSet<Label> {
        match self {
            Item::Rel(r) => [r.src.clone(), r.dst.clone()].into_iter().collect(),
            Item::Fml(lf) => [lf.label.clone()].into_iter().collect(),
        }
    }

    /// Replace every occurrence of `from` by `to`.
    pub fn subst_label(&self, from: &Label, to: &Label) -> Item {
        let rn = |l: &Label| if l == from { to.clone() } else { l.clone() };
        match self {
            Item::Rel(r) => Item::rel(rn(&r.src), r.prog.clone(), rn(&r.dst)),
            Item::Fml(lf) => Item::fml(rn(&lf.label), lf.formula.clone()),
        }
    }
}

/// A labelled sequent: antecedent and consequent item sets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Sequent {
    pub ant: BTreeSet<Item>,
    pub con: BTreeSet<Item>,
}

impl Sequent {
    pub fn new(
        ant: impl IntoIterator<Item = Item>,
        con: impl IntoIterator<Item = Item>,
    ) -> Sequent {
        Sequent {
            ant: ant.into_iter().collect(),
            con: con.into_iter().collect(),
        }
    }

    /// All labels occurring anywhere in the sequent.
    pub fn labels(&self) -> BTreeSet<Label> {
        let mut out = BTreeSet::new();
        for it in self.ant.iter().chain(self.con.iter()) {
            out.extend(it.labels());
        }
        out
    }

    /// Labels of the items on one side.
    pub fn side_labels(items: &BTreeSet<Item>) -> BTreeSet<Label> {
        let mut out = BTreeSet::new();
        for it in items {
            out.extend(it.labels());
        }
        out
    }

    /// Labels of consequent formulas whose outermost shape is an iteration.
    pub fn starred_labels(items: &BTreeSet<Item>) -> BTreeSet<Label> {
        items
            .iter()
            .filter_map(Item::as_fml)
            .filter(|lf| classify(&lf.formula) == FormulaClass::Iterated)
            .map(|lf| lf.label.clone())
            .collect()
    }

    /// Replace every occurrence of the label `from` by `to` on both sides.
    /// Distinct items may merge under set semantics.
    pub fn subst_label(&self, from: &Label, to: &Label) -> Sequent {
        Sequent {
            ant: self.ant.iter().map(|i| i.subst_label(from, to)).collect(),
            con: self.con.iter().map(|i| i.subst_label(from, to)).collect(),
        }
    }

    /// True when no test program occurs in any formula of the sequent.
    pub fn is_test_free(&self) -> bool {
        self.ant
            .iter()
            .chain(self.con.iter())
            .filter_map(Item::as_fml)
            .all(|lf| lf.formula.is_test_free())
    }

    /// True when the directed graph of antecedent relational atoms has no
    /// cycle (edges are considered regardless of their program name).
    pub fn is_acyclic(&self) -> bool {
        let edges: Vec<(&Label, &Label)> = self
            .ant
            .iter()
            .filter_map(Item::as_rel)
            .map(|r| (&r.src, &r.dst))
            .collect();
        let nodes: BTreeSet<&Label> = edges.iter().flat_map(|(s, t)| [*s, *t]).collect();
        // Kahn-style: repeatedly remove nodes with no incoming edge.
        let mut remaining: BTreeSet<&Label> = nodes.clone();
        loop {
            let removable: Vec<&Label> = remaining
                .iter()
                .filter(|n| {
                    !edges
                        .iter()
                        .any(|(s, t)| t == *n && remaining.contains(s) && remaining.contains(t))
                })
                .copied()
                .collect();
            if removable.is_empty() {
                return remaining.is_empty();
            }
            for n in removable {
                remaining.remove(n);
            }
        }
    }

    /// Labels reachable in the antecedent edge graph from `start` (not
    /// including `start` itself unless it lies on a cycle through it).
    pub fn reachable_from(&self, start: &Label) -> BTreeSet<Label> {
        let mut seen: BTreeSet<Label> = BTreeSet::new();
        let mut frontier = vec![start.clone()];
        while let Some(l) = frontier.pop() {
            for r in self.ant.iter().filter_map(Item::as_rel) {
                if r.src == l && !seen.contains(&r.dst) {
                    seen.insert(r.dst.clone());
                    frontier.push(r.dst.clone());
                }
            }
        }
        seen
    }
}

/// Prefix every labelled formula in `items` with the modality `[alpha]`,
/// leaving relational atoms unchanged.
pub fn box_prefix(alpha: &Program, items: &BTreeSet<Item>) -> BTreeSet<Item> {
    items
        .iter()
        .map(|it| match it {
            Item::Rel(r) => Item::Rel(r.clone()),
            Item::Fml(lf) => Item::fml(
                lf.label.clone(),
                Formula::boxed(alpha.clone(), lf.formula.clone()),
            ),
        })
        .collect()
}

/// Closure of a formula under the standard decomposition steps:
/// subformulas of connectives, and for modalities
/// `[alpha;beta]psi -> [alpha][beta]psi`,
/// `[alpha+beta]psi -> [alpha]psi, [beta]psi`,
/// `[alpha*]psi -> psi, [alpha][alpha*]psi`,
/// `[chi?]psi -> chi, psi`,
/// `[a]psi -> psi`.
///
/// The result is finite and closed: the closure of every member is a subset.
pub fn fl_closure(phi: &Formula) -> BTreeSet<Formula> {
    let mut out: BTreeSet<Formula> = BTreeSet::new();
    let mut work = vec![phi.clone()];
    while let Some(f) = work.pop() {
        if !out.insert(f.clone()) {
            continue;
        }
        match &f {
            Formula::Bot | Formula::Atom(_) => {}
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Imp(a, b) => {
                work.push((**a).clone());
                work.push((**b).clone());
            }
            Formula::Box(alpha, psi) => match alpha {
                Program::Atom(_) => work.push((**psi).clone()),
                Program::Seq(a, b) => {
                    work.push(Formula::boxed(
                        (**a).clone(),
                        Formula::boxed((**b).clone(), (**psi).clone()),
                    ));
                }
                Program::Choice(a, b) => {
                    work.push(Formula::boxed((**a).clone(), (**psi).clone()));
                    work.push(Formula::boxed((**b).clone(), (**psi).clone()));
                }
                Program::Test(chi) => {
                    work.push((**chi).clone());
                    work.push((**psi).clone());
                }
                Program::Star(a) => {
                    work.push((**psi).clone());
                    work.push(Formula::boxed((**a).clone(), f.clone()));
                }
            },
        }
    }
    out
}

/// Generator of fresh labels `_0`, `_1`, ... with a monotone counter.
///
/// `fresh_for` additionally skips anything that collides with a label in use,
/// so a fresh label never occurs in the sequent it is generated for.
#[derive(Debug, Clone, Default)]
pub struct LabelGen {
    next: u64,
}

impl LabelGen {
    pub fn new() -> Self {
        LabelGen::default()
    }

    /// Start above any generated-style label already in use.
    pub fn seeded_from<'a>(labels: impl IntoIterator<Item = &'a Label>) -> Self {
        let mut next = 0;
        for l in labels {
            if let Some(rest) = l.as_str().strip_prefix('_') {
                if let Ok(n) = rest.parse::<u64>() {
                    next = next.max(n + 1);
                }
            }
        }
        LabelGen { next }
    }

    pub fn fresh(&mut self) -> Label {
        let l = Label::new(format!("_{}", self.next));
        self.next += 1;
        l
    }

    /// A fresh label not occurring in `avoid`.
    pub fn fresh_for(&mut self, avoid: &BTreeSet<Label>) -> Label {
        loop {
            let l = self.fresh();
            if !avoid.contains(&l) {
                return l;
            }
        }
    }
}
