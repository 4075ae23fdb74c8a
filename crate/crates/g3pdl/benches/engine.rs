//! Benchmarks comparing the data-parallel engine paths against their
//! sequential fallbacks: brute-force countermodel enumeration and
//! per-node proof checking.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use g3pdl::kernel::{
    apply_rule, check_pre_proof, check_pre_proof_seq, CyclicPreProof, NodeKind, ProofBuilder,
    RuleInstance, RuleName,
};
use g3pdl::parser::parse_sequent;
use g3pdl::semantics::{brute_force_countermodel, brute_force_countermodel_seq};
use g3pdl::syntax::{Formula, Item, Label, Sequent};

/// A balanced conjunction of `2^depth` copies of `p`.
fn tower(depth: u32) -> Formula {
    if depth == 0 {
        Formula::atom("p")
    } else {
        let half = tower(depth - 1);
        Formula::and(half.clone(), half)
    }
}

/// A closed derivation splitting `tower(depth)` down to axioms:
/// `2^(depth+1) - 1` nodes, every one checked independently.
fn conjunction_tree(depth: u32) -> CyclicPreProof {
    let x = Label::new("x");
    let root_seq = Sequent {
        ant: [Item::fml(x.clone(), Formula::atom("p"))].into_iter().collect(),
        con: [Item::fml(x.clone(), tower(depth))].into_iter().collect(),
    };
    let mut b = ProofBuilder::new();
    let root = b.reserve();
    let mut todo = vec![(root, root_seq)];
    while let Some((node, seq)) = todo.pop() {
        let principal = seq.con.iter().next().unwrap().clone();
        let is_and = matches!(
            principal,
            Item::Fml(ref lf) if matches!(lf.formula, Formula::And(..))
        );
        let inst = if is_and {
            RuleInstance::with_principal(RuleName::AndR, principal)
        } else {
            RuleInstance::with_principal(RuleName::Ax, principal)
        };
        let premises = apply_rule(&seq, &inst).expect("tree rules apply");
        let ids: Vec<_> = premises.iter().map(|_| b.reserve()).collect();
        b.fill(node, seq, NodeKind::Rule(inst), ids.clone());
        todo.extend(ids.into_iter().zip(premises));
    }
    b.finish(root)
}

fn bench_brute_force(c: &mut Criterion) {
    // A valid goal: the whole candidate space must be exhausted, which
    // makes the scan size deterministic.
    let valid = parse_sequent("|- x: [(a+b)*](p -> p)").unwrap();
    let mut g = c.benchmark_group("brute_force_countermodel");
    g.bench_function("parallel/exhaustive-2-states", |b| {
        b.iter(|| brute_force_countermodel(black_box(&valid), 2, None, None))
    });
    g.bench_function("sequential/exhaustive-2-states", |b| {
        b.iter(|| brute_force_countermodel_seq(black_box(&valid), 2, None, None))
    });
    g.bench_function("parallel/capped-3-states", |b| {
        b.iter(|| brute_force_countermodel(black_box(&valid), 3, Some(20_000), None))
    });
    g.bench_function("sequential/capped-3-states", |b| {
        b.iter(|| brute_force_countermodel_seq(black_box(&valid), 3, Some(20_000), None))
    });
    g.finish();
}

fn bench_check_pre_proof(c: &mut Criterion) {
    let proof = conjunction_tree(10);
    assert_eq!(proof.nodes.len(), 2047);
    check_pre_proof(&proof).expect("benchmark proof is valid");
    let mut g = c.benchmark_group("check_pre_proof");
    g.bench_function("parallel/2047-nodes", |b| {
        b.iter(|| check_pre_proof(black_box(&proof)))
    });
    g.bench_function("sequential/2047-nodes", |b| {
        b.iter(|| check_pre_proof_seq(black_box(&proof)))
    });
    g.finish();
}

criterion_group!(benches, bench_brute_force, bench_check_pre_proof);
criterion_main!(benches);
