//! Property tests: rendering and parsing are mutually inverse for
//! formulas, programs, items, sequents, and the two document formats.

mod common;

use proptest::collection::btree_set;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use g3pdl::parser::{
    parse_formula, parse_item, parse_model, parse_program, parse_proof, parse_sequent,
    render_model, render_proof,
};
use g3pdl::schemata::{derive_axiom, AxiomParams};
use g3pdl::semantics::Valuation;
use g3pdl::syntax::{Formula, Item, Label, ProgName, Program, Sequent};

fn program_strategy(f: BoxedStrategy<Formula>) -> BoxedStrategy<Program> {
    let leaf = prop_oneof![
        3 => "[ab]".prop_map(Program::atom),
        1 => f.prop_map(Program::test),
    ]
    .boxed();
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Program::seq(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Program::choice(a, b)),
            inner.prop_map(Program::star),
        ]
        .boxed()
    })
    .boxed()
}

fn formula_strategy() -> BoxedStrategy<Formula> {
    let leaf = prop_oneof![
        1 => Just(Formula::Bot),
        4 => "[pqr]".prop_map(Formula::atom),
    ]
    .boxed();
    leaf.prop_recursive(4, 24, 3, |inner| {
        let prog = program_strategy(inner.clone());
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::and(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::or(a, b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Formula::imp(a, b)),
            (prog, inner).prop_map(|(a, f)| Formula::boxed(a, f)),
        ]
        .boxed()
    })
    .boxed()
}

fn label_strategy() -> BoxedStrategy<Label> {
    "[xyz]".prop_map(Label::new).boxed()
}

fn item_strategy() -> BoxedStrategy<Item> {
    prop_oneof![
        4 => (label_strategy(), formula_strategy()).prop_map(|(l, f)| Item::fml(l, f)),
        1 => (label_strategy(), "[ab]", label_strategy())
            .prop_map(|(x, a, y)| Item::rel(x, ProgName::new(a), y)),
    ]
    .boxed()
}

fn sequent_strategy() -> BoxedStrategy<Sequent> {
    (
        btree_set(item_strategy(), 0..4),
        btree_set(item_strategy(), 0..4),
    )
        .prop_map(|(ant, con)| Sequent { ant, con })
        .boxed()
}

proptest! {
    #[test]
    fn formulas_round_trip(f in formula_strategy()) {
        prop_assert_eq!(&parse_formula(&f.to_string()).unwrap(), &f, "text: {}", f);
    }

    #[test]
    fn programs_round_trip(a in program_strategy(formula_strategy())) {
        prop_assert_eq!(&parse_program(&a.to_string()).unwrap(), &a, "text: {}", a);
    }

    #[test]
    fn items_round_trip(i in item_strategy()) {
        prop_assert_eq!(&parse_item(&i.to_string()).unwrap(), &i, "text: {}", i);
    }

    #[test]
    fn sequents_round_trip(s in sequent_strategy()) {
        prop_assert_eq!(&parse_sequent(&s.to_string()).unwrap(), &s, "text: {}", s);
    }

    /// Closed cyclic proofs (axiom derivations over random parameters)
    /// survive the document format unchanged.
    #[test]
    fn proof_documents_round_trip(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let id = 1 + (seed % 6) as u8;
        let sizes = (
            1 + rng.gen_range(0..3),
            1 + rng.gen_range(0..3),
            1 + rng.gen_range(0..4),
            1 + rng.gen_range(0..4),
        );
        let params = AxiomParams {
            alpha: Some(common::random_program(&mut rng, sizes.0, &["a", "b"], true)),
            beta: Some(common::random_program(&mut rng, sizes.1, &["a", "b"], true)),
            phi: Some(common::random_formula(&mut rng, sizes.2, &["a", "b"], true)),
            psi: Some(common::random_formula(&mut rng, sizes.3, &["a", "b"], true)),
        };
        let proof = derive_axiom(id, &params).unwrap();
        let text = render_proof(&proof).unwrap();
        prop_assert_eq!(&parse_proof(&text).unwrap(), &proof);
    }

    #[test]
    fn model_documents_round_trip(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let m = common::random_model(&mut rng, 4);
        let first = m.states.iter().next().unwrap().clone();
        let last = m.states.iter().next_back().unwrap().clone();
        let v: Valuation = [(Label::new("x"), first), (Label::new("y"), last)]
            .into_iter()
            .collect();
        let text = render_model(&m, Some(&v));
        let (m2, v2) = parse_model(&text).unwrap();
        prop_assert_eq!(&m2, &m);
        prop_assert_eq!(v2, Some(v));
    }
}

/// The one shape the documents cannot carry: open nodes.
#[test]
fn open_proofs_have_no_document_form() {
    let mut rng = StdRng::seed_from_u64(7);
    // Grow until a proof with an open leaf appears.
    for _ in 0..200 {
        let p = common::random_preproof(&mut rng, 8);
        if p.nodes.values().any(|n| matches!(n.kind, g3pdl::kernel::NodeKind::Open)) {
            assert!(render_proof(&p).is_err());
            return;
        }
    }
    panic!("no open proof generated in 200 attempts");
}
