//! Shared helpers for the integration tests: an independently written
//! naive semantics evaluator and randomized generators for formulas,
//! programs, models, sequents, and locally-valid cyclic pre-proofs.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::Rng;

use g3pdl::kernel::{
    apply_rule, CyclicPreProof, NodeId, NodeKind, ProofBuilder, RuleInstance, RuleName,
};
use g3pdl::parser::parse_sequent;
use g3pdl::semantics::{KripkeModel, State};
use g3pdl::syntax::{Formula, Item, Label, Program, ProgName, PropName, Sequent};

// ---------------------------------------------------------------------------
// A naive evaluator, written independently of the library's interpreter:
// per-state truth recursion and per-pair reachability with an explicit
// Warshall closure for iteration, instead of set-algebra fixpoints.
// ---------------------------------------------------------------------------

pub fn naive_pairs(m: &KripkeModel, alpha: &Program) -> BTreeSet<(State, State)> {
    match alpha {
        Program::Atom(a) => m.prog_rel(a).into_iter().collect(),
        Program::Seq(a, b) => {
            let ra = naive_pairs(m, a);
            let rb = naive_pairs(m, b);
            let mut out = BTreeSet::new();
            for (s, u) in &ra {
                for (u2, t) in &rb {
                    if u == u2 {
                        out.insert((s.clone(), t.clone()));
                    }
                }
            }
            out
        }
        Program::Choice(a, b) => {
            let mut out = naive_pairs(m, a);
            out.extend(naive_pairs(m, b));
            out
        }
        Program::Test(phi) => m
            .states
            .iter()
            .filter(|s| naive_sat(m, s, phi))
            .map(|s| (s.clone(), s.clone()))
            .collect(),
        Program::Star(a) => {
            // Reflexive closure, then Floyd–Warshall transitive closure.
            let base = naive_pairs(m, a);
            let states: Vec<&State> = m.states.iter().collect();
            let mut reach: BTreeSet<(State, State)> = base;
            for s in &states {
                reach.insert(((*s).clone(), (*s).clone()));
            }
            for k in &states {
                for i in &states {
                    for j in &states {
                        if reach.contains(&((*i).clone(), (*k).clone()))
                            && reach.contains(&((*k).clone(), (*j).clone()))
                        {
                            reach.insert(((*i).clone(), (*j).clone()));
                        }
                    }
                }
            }
            reach
        }
    }
}

pub fn naive_sat(m: &KripkeModel, s: &State, phi: &Formula) -> bool {
    match phi {
        Formula::Bot => false,
        Formula::Atom(p) => m.prop_set(p).contains(s),
        Formula::And(a, b) => naive_sat(m, s, a) && naive_sat(m, s, b),
        Formula::Or(a, b) => naive_sat(m, s, a) || naive_sat(m, s, b),
        Formula::Imp(a, b) => !naive_sat(m, s, a) || naive_sat(m, s, b),
        Formula::Box(alpha, b) => naive_pairs(m, alpha)
            .iter()
            .filter(|(from, _)| from == s)
            .all(|(_, to)| naive_sat(m, to, b)),
    }
}

pub fn naive_formula_states(m: &KripkeModel, phi: &Formula) -> BTreeSet<State> {
    m.states
        .iter()
        .filter(|s| naive_sat(m, s, phi))
        .cloned()
        .collect()
}

// ---------------------------------------------------------------------------
// Random syntax
// ---------------------------------------------------------------------------

pub const PROPS: [&str; 3] = ["p", "q", "r"];

pub fn random_program(rng: &mut StdRng, size: usize, progs: &[&str], with_tests: bool) -> Program {
    if size <= 1 {
        return Program::atom(progs[rng.gen_range(0..progs.len())]);
    }
    let top = if with_tests { 4 } else { 3 };
    match rng.gen_range(0..top) {
        0 => Program::seq(
            random_program(rng, size / 2, progs, with_tests),
            random_program(rng, size - 1 - size / 2, progs, with_tests),
        ),
        1 => Program::choice(
            random_program(rng, size / 2, progs, with_tests),
            random_program(rng, size - 1 - size / 2, progs, with_tests),
        ),
        2 => Program::star(random_program(rng, size - 1, progs, with_tests)),
        _ => Program::test(random_formula(rng, size.min(3), progs, with_tests)),
    }
}

pub fn random_formula(rng: &mut StdRng, size: usize, progs: &[&str], with_tests: bool) -> Formula {
    if size <= 1 {
        return if rng.gen_bool(0.15) {
            Formula::Bot
        } else {
            Formula::atom(PROPS[rng.gen_range(0..PROPS.len())])
        };
    }
    match rng.gen_range(0..4) {
        0 => Formula::and(
            random_formula(rng, size / 2, progs, with_tests),
            random_formula(rng, size - 1 - size / 2, progs, with_tests),
        ),
        1 => Formula::or(
            random_formula(rng, size / 2, progs, with_tests),
            random_formula(rng, size - 1 - size / 2, progs, with_tests),
        ),
        2 => Formula::imp(
            random_formula(rng, size / 2, progs, with_tests),
            random_formula(rng, size - 1 - size / 2, progs, with_tests),
        ),
        _ => {
            let psize = 1 + rng.gen_range(0..size.min(4));
            Formula::boxed(
                random_program(rng, psize, progs, with_tests),
                random_formula(rng, size.saturating_sub(psize).max(1), progs, with_tests),
            )
        }
    }
}

/// A random test-free acyclic sequent over at most two atomic programs:
/// mostly single-formula goals, sometimes richer two-label sequents.
pub fn random_test_free_sequent(rng: &mut StdRng, max_size: usize) -> Sequent {
    let progs: &[&str] = &["a", "b"][..1 + rng.gen_range(0..2)];
    let x = Label::new("x");
    let y = Label::new("y");
    let mut ant: BTreeSet<Item> = BTreeSet::new();
    let mut con: BTreeSet<Item> = BTreeSet::new();
    if rng.gen_bool(0.7) {
        let size = 2 + rng.gen_range(0..max_size.saturating_sub(1));
        con.insert(Item::fml(x.clone(), random_formula(rng, size, progs, false)));
    } else {
        for _ in 0..rng.gen_range(0..3) {
            let l = if rng.gen_bool(0.7) { &x } else { &y };
            let size = 1 + rng.gen_range(0..max_size / 2);
            ant.insert(Item::fml(l.clone(), random_formula(rng, size, progs, false)));
        }
        if rng.gen_bool(0.5) {
            ant.insert(Item::rel(
                x.clone(),
                ProgName::new(progs[rng.gen_range(0..progs.len())]),
                y.clone(),
            ));
        }
        for _ in 0..1 + rng.gen_range(0..2) {
            let l = if rng.gen_bool(0.7) { &x } else { &y };
            let size = 1 + rng.gen_range(0..max_size / 2);
            con.insert(Item::fml(l.clone(), random_formula(rng, size, progs, false)));
        }
        if con.is_empty() {
            con.insert(Item::fml(x.clone(), Formula::atom("p")));
        }
    }
    Sequent { ant, con }
}

// ---------------------------------------------------------------------------
// Random models
// ---------------------------------------------------------------------------

pub fn random_model(rng: &mut StdRng, max_states: usize) -> KripkeModel {
    let n = 1 + rng.gen_range(0..max_states);
    let states: Vec<State> = (1..=n).map(|i| format!("s{i}")).collect();
    let mut props: BTreeMap<PropName, BTreeSet<State>> = BTreeMap::new();
    for p in PROPS {
        let set: BTreeSet<State> = states
            .iter()
            .filter(|_| rng.gen_bool(0.5))
            .cloned()
            .collect();
        props.insert(PropName::new(p), set);
    }
    let mut progs: BTreeMap<ProgName, BTreeSet<(State, State)>> = BTreeMap::new();
    for a in ["a", "b"] {
        let mut rel = BTreeSet::new();
        for s in &states {
            for t in &states {
                if rng.gen_bool(0.3) {
                    rel.insert((s.clone(), t.clone()));
                }
            }
        }
        progs.insert(ProgName::new(a), rel);
    }
    KripkeModel::new(states, props, progs)
}

// ---------------------------------------------------------------------------
// Random locally-valid cyclic pre-proofs (≤ `max_nodes` nodes)
// ---------------------------------------------------------------------------

/// A parameterized variant of the one-backlink cyclic proof of
/// `⊢ x:[e*]f -> [e*;e*]f`: an accepted pre-proof with a genuine cycle.
pub fn cyclic_template(prog: &str, prop: &str) -> CyclicPreProof {
    let s = |t: &str| {
        parse_sequent(
            &t.replace("A", prog).replace("P", prop),
        )
        .unwrap()
    };
    let it = |t: &str| -> Item {
        g3pdl::parser::parse_item(&t.replace("A", prog).replace("P", prop)).unwrap()
    };
    let mut b = ProofBuilder::new();
    let ids: Vec<NodeId> = (0..11).map(|_| b.reserve()).collect();
    let mut rule = |i: usize, t: &str, inst: RuleInstance, prems: &[usize]| {
        let prems = prems.iter().map(|p| ids[*p]).collect();
        b.fill(ids[i], s(t), NodeKind::Rule(inst), prems);
    };
    rule(
        0,
        "|- x: [A*]P -> [A*;A*]P",
        RuleInstance::with_principal(RuleName::ImpR, it("x: [A*]P -> [A*;A*]P")),
        &[1],
    );
    rule(
        1,
        "x: [A*]P |- x: [A*;A*]P",
        RuleInstance::with_principal(RuleName::SeqR, it("x: [A*;A*]P")),
        &[2],
    );
    rule(
        2,
        "x: [A*]P |- x: [A*][A*]P",
        RuleInstance::with_principal(RuleName::StarR, it("x: [A*][A*]P")),
        &[3, 4],
    );
    rule(
        3,
        "x: [A*]P |- x: [A*]P",
        RuleInstance::with_principal(RuleName::Ax, it("x: [A*]P")),
        &[],
    );
    rule(
        4,
        "x: [A*]P |- x: [A][A*][A*]P",
        RuleInstance::with_principal(RuleName::StarL, it("x: [A*]P")),
        &[5],
    );
    rule(
        5,
        "x: P, x: [A][A*]P |- x: [A][A*][A*]P",
        RuleInstance::box_r(it("x: [A][A*][A*]P"), Label::new("y")),
        &[6],
    );
    rule(
        6,
        "x: P, x: [A][A*]P, x -A-> y |- y: [A*][A*]P",
        RuleInstance::box_l(it("x: [A][A*]P"), Label::new("y")),
        &[7],
    );
    rule(
        7,
        "x: P, y: [A*]P, x -A-> y |- y: [A*][A*]P",
        RuleInstance::with_principal(RuleName::WL, it("x: P")),
        &[8],
    );
    rule(
        8,
        "y: [A*]P, x -A-> y |- y: [A*][A*]P",
        RuleInstance::with_principal(RuleName::WL, it("x -A-> y")),
        &[9],
    );
    rule(
        9,
        "y: [A*]P |- y: [A*][A*]P",
        RuleInstance::subst(Label::new("x"), Label::new("y")),
        &[10],
    );
    b.fill(
        ids[10],
        s("x: [A*]P |- x: [A*][A*]P"),
        NodeKind::Bud { companion: ids[2] },
        vec![],
    );
    b.finish(ids[0])
}

struct GrowTodo {
    node: NodeId,
    seq: Sequent,
    ancestors: Vec<(NodeId, Sequent)>,
}

/// Grows a random locally-valid pre-proof downward from a random goal,
/// closing leaves by axioms, tying them back as buds whenever the sequent
/// repeats an ancestor, and leaving them open when the node budget runs
/// out. Produces trees, accepted cycles, and rejected weakening loops.
fn grow_random_preproof(rng: &mut StdRng, max_nodes: usize) -> CyclicPreProof {
    let goals = [
        "|- x: [a*]p",
        "x: [a*]p |- x: [a*]p",
        "|- x: [(a+b)*]p",
        "|- x: [a*][b*]q",
        "x: q |- x: [a*]p",
        "|- x: [b*]q, x: [a*]p",
        "x: p & q |- x: [a*](p | q)",
    ];
    let goal = parse_sequent(goals[rng.gen_range(0..goals.len())]).unwrap();
    let mut b = ProofBuilder::new();
    let root = b.reserve();
    let mut used = 1usize;
    let mut todo = vec![GrowTodo {
        node: root,
        seq: goal,
        ancestors: Vec::new(),
    }];
    while let Some(t) = todo.pop() {
        // Close by an axiom most of the time when possible.
        if let Some(shared) = t.seq.ant.intersection(&t.seq.con).next().cloned() {
            if rng.gen_bool(0.8) {
                b.fill(
                    t.node,
                    t.seq,
                    NodeKind::Rule(RuleInstance::with_principal(RuleName::Ax, shared)),
                    vec![],
                );
                continue;
            }
        }
        // Tie back to a matching ancestor most of the time when possible.
        if let Some((cid, _)) = t.ancestors.iter().find(|(_, s)| *s == t.seq) {
            if rng.gen_bool(0.85) {
                b.fill(t.node, t.seq, NodeKind::Bud { companion: *cid }, vec![]);
                continue;
            }
        }
        if used >= max_nodes {
            b.fill(t.node, t.seq, NodeKind::Open, vec![]);
            continue;
        }
        let budget_left = max_nodes - used;
        // Prefer a weakening that returns to an ancestor's sequent (the
        // move that manufactures cycles), falling back to a random
        // applicable rule.
        let mut inst: Option<RuleInstance> = None;
        for (_, aseq) in &t.ancestors {
            if aseq.ant == t.seq.ant && aseq.con.is_subset(&t.seq.con) && aseq.con != t.seq.con {
                let extra = t.seq.con.difference(&aseq.con).next().cloned().unwrap();
                if rng.gen_bool(0.8) {
                    inst = Some(RuleInstance::with_principal(RuleName::WR, extra));
                }
                break;
            }
        }
        if inst.is_none() {
            let mut opts: Vec<RuleInstance> = Vec::new();
            for item in &t.seq.con {
                if let Item::Fml(lf) = item {
                    match &lf.formula {
                        Formula::Box(Program::Star(_), _) => {
                            let r = RuleInstance::with_principal(RuleName::StarR, item.clone());
                            opts.push(if rng.gen_bool(0.7) { r.contracted() } else { r });
                        }
                        Formula::Box(Program::Seq(..), _) => {
                            opts.push(RuleInstance::with_principal(RuleName::SeqR, item.clone()))
                        }
                        Formula::Box(Program::Choice(..), _) => {
                            opts.push(RuleInstance::with_principal(RuleName::ChoiceR, item.clone()))
                        }
                        Formula::And(..) => {
                            opts.push(RuleInstance::with_principal(RuleName::AndR, item.clone()))
                        }
                        Formula::Or(..) => {
                            opts.push(RuleInstance::with_principal(RuleName::OrR, item.clone()))
                        }
                        Formula::Imp(..) => {
                            opts.push(RuleInstance::with_principal(RuleName::ImpR, item.clone()))
                        }
                        _ => {}
                    }
                }
                if t.seq.con.len() > 1 {
                    opts.push(RuleInstance::with_principal(RuleName::WR, item.clone()));
                }
            }
            for item in &t.seq.ant {
                if let Item::Fml(lf) = item {
                    match &lf.formula {
                        Formula::Box(Program::Star(_), _) => {
                            opts.push(RuleInstance::with_principal(RuleName::StarL, item.clone()))
                        }
                        Formula::And(..) => {
                            opts.push(RuleInstance::with_principal(RuleName::AndL, item.clone()))
                        }
                        Formula::Or(..) => {
                            opts.push(RuleInstance::with_principal(RuleName::OrL, item.clone()))
                        }
                        _ => {}
                    }
                }
                opts.push(RuleInstance::with_principal(RuleName::WL, item.clone()));
            }
            if !opts.is_empty() {
                inst = Some(opts[rng.gen_range(0..opts.len())].clone());
            }
        }
        let Some(inst) = inst else {
            b.fill(t.node, t.seq, NodeKind::Open, vec![]);
            continue;
        };
        let premises = match apply_rule(&t.seq, &inst) {
            Ok(p) if p.len() <= budget_left => p,
            _ => {
                b.fill(t.node, t.seq, NodeKind::Open, vec![]);
                continue;
            }
        };
        let ids: Vec<NodeId> = premises.iter().map(|_| b.reserve()).collect();
        used += ids.len();
        let mut ancestors = t.ancestors.clone();
        ancestors.push((t.node, t.seq.clone()));
        b.fill(t.node, t.seq, NodeKind::Rule(inst), ids.clone());
        for (id, seq) in ids.into_iter().zip(premises) {
            todo.push(GrowTodo {
                node: id,
                seq,
                ancestors: ancestors.clone(),
            });
        }
    }
    b.finish(root)
}

/// A random locally-valid cyclic pre-proof with at most `max_nodes` nodes.
pub fn random_preproof(rng: &mut StdRng, max_nodes: usize) -> CyclicPreProof {
    grow_random_preproof(rng, max_nodes)
}

// ---------------------------------------------------------------------------
// Rule-instance sampling
// ---------------------------------------------------------------------------

/// Every rule instance applicable to `s`, excluding the premise-free
/// closure rules (whose conclusions are never falsifiable anyway).
pub fn enumerate_instances(s: &Sequent) -> Vec<RuleInstance> {
    let mut out: Vec<RuleInstance> = Vec::new();
    let labels = s.labels();
    let fresh = |stem: &str| -> Label {
        let mut i = 0usize;
        loop {
            let cand = Label::new(format!("{stem}{i}"));
            if !labels.contains(&cand) {
                return cand;
            }
            i += 1;
        }
    };
    for item in &s.con {
        if let Item::Fml(lf) = item {
            match &lf.formula {
                Formula::And(..) => {
                    out.push(RuleInstance::with_principal(RuleName::AndR, item.clone()))
                }
                Formula::Or(..) => {
                    out.push(RuleInstance::with_principal(RuleName::OrR, item.clone()))
                }
                Formula::Imp(..) => {
                    out.push(RuleInstance::with_principal(RuleName::ImpR, item.clone()))
                }
                Formula::Box(Program::Atom(_), _) => {
                    out.push(RuleInstance::box_r(item.clone(), fresh("w")))
                }
                Formula::Box(Program::Seq(..), _) => {
                    out.push(RuleInstance::with_principal(RuleName::SeqR, item.clone()))
                }
                Formula::Box(Program::Choice(..), _) => {
                    out.push(RuleInstance::with_principal(RuleName::ChoiceR, item.clone()))
                }
                Formula::Box(Program::Test(_), _) => {
                    out.push(RuleInstance::with_principal(RuleName::TestR, item.clone()))
                }
                Formula::Box(Program::Star(_), _) => {
                    let r = RuleInstance::with_principal(RuleName::StarR, item.clone());
                    out.push(r.clone());
                    out.push(r.contracted());
                }
                _ => {}
            }
        }
        out.push(RuleInstance::with_principal(RuleName::WR, item.clone()));
    }
    for item in &s.ant {
        if let Item::Fml(lf) = item {
            match &lf.formula {
                Formula::And(..) => {
                    out.push(RuleInstance::with_principal(RuleName::AndL, item.clone()))
                }
                Formula::Or(..) => {
                    out.push(RuleInstance::with_principal(RuleName::OrL, item.clone()))
                }
                Formula::Imp(..) => {
                    out.push(RuleInstance::with_principal(RuleName::ImpL, item.clone()))
                }
                Formula::Box(Program::Atom(a), _) => {
                    for rel in s.ant.iter().filter_map(Item::as_rel) {
                        if rel.src == lf.label && &rel.prog == a {
                            out.push(RuleInstance::box_l(item.clone(), rel.dst.clone()));
                        }
                    }
                }
                Formula::Box(Program::Seq(..), _) => {
                    out.push(RuleInstance::with_principal(RuleName::SeqL, item.clone()))
                }
                Formula::Box(Program::Choice(..), _) => {
                    out.push(RuleInstance::with_principal(RuleName::ChoiceL, item.clone()))
                }
                Formula::Box(Program::Test(_), _) => {
                    out.push(RuleInstance::with_principal(RuleName::TestL, item.clone()))
                }
                Formula::Box(Program::Star(_), _) => {
                    let r = RuleInstance::with_principal(RuleName::StarL, item.clone());
                    out.push(r.clone());
                    out.push(r.contracted());
                }
                _ => {}
            }
        }
        out.push(RuleInstance::with_principal(RuleName::WL, item.clone()));
    }
    for to in &labels {
        out.push(RuleInstance::subst(fresh("z"), to.clone()));
    }
    if let Some(x) = labels.iter().next() {
        out.push(RuleInstance::cut(Item::fml(x.clone(), Formula::atom("p"))));
        out.push(RuleInstance::cut(Item::fml(
            x.clone(),
            Formula::boxed(Program::atom("a"), Formula::atom("q")),
        )));
    }
    out
}

/// A two-layer pre-proof holding just the rule instance at the root and
/// its premises as open leaves — enough structure to ask for trace pairs.
pub fn scratch_proof(
    s: &Sequent,
    inst: &RuleInstance,
) -> Option<(CyclicPreProof, NodeId, Vec<Sequent>)> {
    let premises = apply_rule(s, inst).ok()?;
    let mut b = ProofBuilder::new();
    let root = b.reserve();
    let ids: Vec<NodeId> = premises.iter().map(|_| b.reserve()).collect();
    b.fill(root, s.clone(), NodeKind::Rule(inst.clone()), ids.clone());
    for (id, prem) in ids.iter().zip(&premises) {
        b.fill(*id, prem.clone(), NodeKind::Open, vec![]);
    }
    Some((b.finish(root), root, premises))
}
