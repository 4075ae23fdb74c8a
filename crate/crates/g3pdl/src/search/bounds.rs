//! Size measures used to cap proof search on test-free sequents.
//!
//! `path_max` bounds how long a relational path the search can be forced to
//! build from a given label; `star_max` bounds how many non-atomic consequent
//! formulas an open leaf of a capped unwinding can carry. Both are defined by
//! structural recursion and are only meaningful for test-free inputs: every
//! function here reports `TestNotSupported` when it meets a `?`-program.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::syntax::{Formula, Item, Label, ProgName, Program, Sequent};

/// A word over atomic program names: one element of a program's language.
pub type Word = Vec<ProgName>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BoundsError {
    #[error("size measures are not defined for programs containing tests")]
    TestNotSupported,
}

/// Length of the longest unavoidable unfolding of a program: the least `n`
/// such that every complete run of the program can be cut after at most `n`
/// atomic steps. Iteration does not increase it (zero iterations suffice),
/// sequencing adds, and choice takes the worse branch.
pub fn unfold_len(alpha: &Program) -> Result<u64, BoundsError> {
    Ok(match alpha {
        Program::Atom(_) => 1,
        Program::Seq(a, b) => unfold_len(a)? + unfold_len(b)?,
        Program::Choice(a, b) => unfold_len(a)?.max(unfold_len(b)?),
        Program::Test(_) => return Err(BoundsError::TestNotSupported),
        Program::Star(a) => unfold_len(a)?,
    })
}

/// Positive path measure of a formula (consequent position).
fn path_max_pos(phi: &Formula) -> Result<u64, BoundsError> {
    Ok(match phi {
        Formula::Bot | Formula::Atom(_) => 0,
        Formula::And(a, b) | Formula::Or(a, b) => path_max_pos(a)?.max(path_max_pos(b)?),
        Formula::Imp(a, b) => path_max_neg(a)?.max(path_max_pos(b)?),
        Formula::Box(alpha, a) => path_max_pos(a)?.max(unfold_len(alpha)?),
    })
}

/// Negative path measure of a formula (antecedent position).
fn path_max_neg(phi: &Formula) -> Result<u64, BoundsError> {
    Ok(match phi {
        Formula::Bot | Formula::Atom(_) => 0,
        Formula::And(a, b) | Formula::Or(a, b) => path_max_neg(a)?.max(path_max_neg(b)?),
        Formula::Imp(a, b) => path_max_pos(a)?.max(path_max_neg(b)?),
        Formula::Box(_, a) => path_max_neg(a)?,
    })
}

/// Bound on the length of any relational path the search can grow out of
/// label `x`: the maximum of the negative measures of the antecedent
/// formulas labelled `x` and the positive measures of the consequent
/// formulas labelled `x`. Relational atoms are ignored; a label with no
/// formulas has measure 0.
pub fn path_max(x: &Label, s: &Sequent) -> Result<u64, BoundsError> {
    let mut best = 0;
    for it in &s.ant {
        if let Item::Fml(lf) = it {
            if lf.label == *x {
                best = best.max(path_max_neg(&lf.formula)?);
            }
        }
    }
    for it in &s.con {
        if let Item::Fml(lf) = it {
            if lf.label == *x {
                best = best.max(path_max_pos(&lf.formula)?);
            }
        }
    }
    Ok(best)
}

/// The words of length at most `n` in the language of a test-free program.
pub fn lang_truncated(alpha: &Program, n: u64) -> Result<BTreeSet<Word>, BoundsError> {
    let mut out = BTreeSet::new();
    match alpha {
        Program::Atom(a) => {
            if n >= 1 {
                out.insert(vec![a.clone()]);
            }
        }
        Program::Seq(a, b) => {
            for w1 in lang_truncated(a, n)? {
                for w2 in lang_truncated(b, n - w1.len() as u64)? {
                    let mut w = w1.clone();
                    w.extend(w2);
                    out.insert(w);
                }
            }
        }
        Program::Choice(a, b) => {
            out.extend(lang_truncated(a, n)?);
            out.extend(lang_truncated(b, n)?);
        }
        Program::Test(_) => return Err(BoundsError::TestNotSupported),
        Program::Star(a) => {
            out.insert(Vec::new());
            // Nonempty head followed by a tail from the iteration itself;
            // the strictly smaller budget for the tail makes this terminate.
            for w1 in lang_truncated(a, n)? {
                if w1.is_empty() {
                    continue;
                }
                for w2 in lang_truncated(alpha, n - w1.len() as u64)? {
                    let mut w = w1.clone();
                    w.extend(w2);
                    out.insert(w);
                }
            }
        }
    }
    Ok(out)
}

/// Does `w` belong to the language of `alpha`?
fn in_lang(alpha: &Program, w: &[ProgName]) -> Result<bool, BoundsError> {
    Ok(lang_truncated(alpha, w.len() as u64)?.contains(w))
}

/// The offsets at which an iteration boundary can fall inside a run of
/// `alpha` that reads the word `w`: positions `k` such that some way of
/// running `alpha` over `w` passes the entry of a starred subprogram after
/// exactly `k` atomic steps.
pub fn combinations_for(alpha: &Program, w: &[ProgName]) -> Result<BTreeSet<u64>, BoundsError> {
    let mut out = BTreeSet::new();
    match alpha {
        Program::Atom(_) => {}
        Program::Seq(a, b) => {
            for i in 0..=w.len() {
                let (w1, w2) = w.split_at(i);
                if in_lang(a, w1)? && in_lang(b, w2)? {
                    out.extend(combinations_for(a, w1)?);
                    for k in combinations_for(b, w2)? {
                        out.insert(i as u64 + k);
                    }
                }
            }
        }
        Program::Choice(a, b) => {
            if in_lang(a, w)? {
                out.extend(combinations_for(a, w)?);
            }
            if in_lang(b, w)? {
                out.extend(combinations_for(b, w)?);
            }
        }
        Program::Test(_) => return Err(BoundsError::TestNotSupported),
        Program::Star(a) => {
            if in_lang(alpha, w)? {
                // The entry of the iteration itself is always a boundary.
                out.insert(0);
                for i in 1..=w.len() {
                    let (w1, w2) = w.split_at(i);
                    if in_lang(a, w1)? && in_lang(alpha, w2)? {
                        out.extend(combinations_for(a, w1)?);
                        for k in combinations_for(alpha, w2)? {
                            out.insert(i as u64 + k);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Positive star measure: how many distinct iterated formulas a consequent
/// occurrence can spawn when paths of length at most `n` are explored.
fn star_max_pos(n: u64, phi: &Formula) -> Result<u64, BoundsError> {
    Ok(match phi {
        Formula::Bot | Formula::Atom(_) => 0,
        Formula::And(a, b) => star_max_pos(n, a)?.max(star_max_pos(n, b)?),
        Formula::Or(a, b) => star_max_pos(n, a)? + star_max_pos(n, b)?,
        Formula::Imp(a, b) => star_max_neg(n, a)? + star_max_pos(n, b)?,
        Formula::Box(alpha, a) => {
            if alpha.contains_star() {
                if !alpha.is_test_free() {
                    return Err(BoundsError::TestNotSupported);
                }
                1u64.max(star_max_pos(n, a)?)
            } else {
                if !alpha.is_test_free() {
                    return Err(BoundsError::TestNotSupported);
                }
                star_max_pos(n, a)?
            }
        }
    })
}

/// Negative star measure: how many consequent iterated formulas an
/// antecedent occurrence can force into existence along paths of length at
/// most `n`. Boxes sum over every way the program can read a short word,
/// with the budget shrunk by the boundary offset or the word length.
fn star_max_neg(n: u64, phi: &Formula) -> Result<u64, BoundsError> {
    Ok(match phi {
        Formula::Bot | Formula::Atom(_) => 0,
        Formula::And(a, b) => star_max_neg(n, a)? + star_max_neg(n, b)?,
        Formula::Or(a, b) => star_max_neg(n, a)?.max(star_max_neg(n, b)?),
        Formula::Imp(a, b) => star_max_pos(n, a)?.max(star_max_neg(n, b)?),
        Formula::Box(alpha, a) => {
            let mut total = 0u64;
            for w in lang_truncated(alpha, n)? {
                for k in combinations_for(alpha, &w)? {
                    total += star_max_neg(n.saturating_sub(k), a)?;
                }
                total += star_max_neg(n.saturating_sub(w.len() as u64), a)?;
            }
            total
        }
    })
}

/// Bound on the number of non-atomic consequent formulas any open leaf of a
/// capped unwinding of `s` can carry: each formula contributes its star
/// measure at the path budget of its own label.
pub fn star_max(s: &Sequent) -> Result<u64, BoundsError> {
    let mut total = 0u64;
    for it in &s.ant {
        if let Item::Fml(lf) = it {
            total += star_max_neg(path_max(&lf.label, s)?, &lf.formula)?;
        }
    }
    for it in &s.con {
        if let Item::Fml(lf) = it {
            total += star_max_pos(path_max(&lf.label, s)?, &lf.formula)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_formula, parse_program, parse_sequent};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn prog(s: &str) -> Program {
        parse_program(s).unwrap()
    }
    fn seq(s: &str) -> Sequent {
        parse_sequent(s).unwrap()
    }
    fn x() -> Label {
        Label::new("x")
    }
    fn word(s: &str) -> Word {
        s.chars().map(|c| ProgName::new(c.to_string())).collect()
    }

    #[test]
    fn unfold_len_examples() {
        assert_eq!(unfold_len(&prog("a")), Ok(1));
        assert_eq!(unfold_len(&prog("a; b*")), Ok(2));
        assert_eq!(unfold_len(&prog("(a + b;b)*")), Ok(2));
        assert_eq!(unfold_len(&prog("p?")), Err(BoundsError::TestNotSupported));
        assert_eq!(
            unfold_len(&prog("(a; p?)*")),
            Err(BoundsError::TestNotSupported)
        );
    }

    #[test]
    fn path_max_examples() {
        assert_eq!(path_max(&x(), &seq("|- x: [a*]p")), Ok(1));
        assert_eq!(path_max(&x(), &seq("|- x: p")), Ok(0));
        assert_eq!(path_max(&x(), &seq("x: [a]p |- x: q")), Ok(0));
        // Only the formulas at the queried label count.
        assert_eq!(path_max(&Label::new("y"), &seq("|- x: [a;b]p")), Ok(0));
        assert_eq!(path_max(&x(), &seq("|- x: [a;b]p, x: [a]q")), Ok(2));
        // Implications flip polarity for their antecedent part.
        assert_eq!(path_max(&x(), &seq("|- x: [a]p -> [b;b]q")), Ok(2));
        assert_eq!(path_max(&x(), &seq("x: [a]p -> [b;b]q |- ")), Ok(1));
    }

    #[test]
    fn lang_truncated_examples() {
        let star = lang_truncated(&prog("a*"), 2).unwrap();
        assert_eq!(
            star,
            [word(""), word("a"), word("aa")].into_iter().collect()
        );
        assert!(lang_truncated(&prog("a; b"), 1).unwrap().is_empty());
        assert_eq!(
            lang_truncated(&prog("a + b"), 1).unwrap(),
            [word("a"), word("b")].into_iter().collect()
        );
        assert_eq!(
            lang_truncated(&prog("(a; b)*"), 4).unwrap(),
            [word(""), word("ab"), word("abab")].into_iter().collect()
        );
    }

    #[test]
    fn combinations_for_examples() {
        assert!(combinations_for(&prog("a"), &word("b")).unwrap().is_empty());
        assert_eq!(
            combinations_for(&prog("a*"), &word("a")).unwrap(),
            [0, 1].into_iter().collect()
        );
        assert!(combinations_for(&prog("a; b"), &word("ab"))
            .unwrap()
            .is_empty());
        // A star inside a sequence: boundaries shift by the prefix length.
        assert_eq!(
            combinations_for(&prog("a; b*"), &word("ab")).unwrap(),
            [1, 2].into_iter().collect()
        );
    }

    #[test]
    fn star_max_examples() {
        assert_eq!(star_max(&seq("|- x: [a*]p")), Ok(1));
        assert_eq!(star_max(&seq("|- x: p")), Ok(0));
        assert_eq!(star_max(&seq("x: [a]p |- x: q")), Ok(0));
        assert_eq!(star_max(&seq("|- x: [a*]p -> [a*; a*]p")), Ok(1));
        // Antecedent stars alone spawn nothing on the right...
        assert_eq!(star_max(&seq("x: [a*][b*]p |- x: [a]q")), Ok(0));
        // ...but a star in positive position under an antecedent box does.
        assert_eq!(star_max(&seq("x: [a]([a*]p -> q) |- x: r")), Ok(1));
    }

    #[test]
    fn errors_propagate_from_nested_tests() {
        assert_eq!(
            path_max(&x(), &seq("|- x: [p?]q")),
            Err(BoundsError::TestNotSupported)
        );
        assert_eq!(
            star_max(&seq("x: [(p?)*]q |- ")),
            Err(BoundsError::TestNotSupported)
        );
        assert_eq!(
            lang_truncated(&prog("(q?; a)*"), 3),
            Err(BoundsError::TestNotSupported)
        );
        assert_eq!(
            combinations_for(&prog("q? + a"), &word("a")),
            Err(BoundsError::TestNotSupported)
        );
    }

    /// All test-free formulas of the given size over a small signature.
    fn formulas_of_size(size: usize) -> Vec<Formula> {
        let progs: Vec<Program> = ["a", "b", "a;b", "a+b", "a*", "(a+b)*"]
            .iter()
            .map(|s| prog(s))
            .collect();
        let mut by_size: Vec<Vec<Formula>> = vec![Vec::new(); size + 1];
        if size >= 1 {
            by_size[1] = vec![Formula::Bot, Formula::atom("p")];
        }
        for n in 2..=size {
            let mut acc = Vec::new();
            for phi in &by_size[n - 1] {
                for alpha in &progs {
                    acc.push(Formula::boxed(alpha.clone(), phi.clone()));
                }
            }
            for i in 1..n - 1 {
                let j = n - 1 - i;
                for l in by_size[i].clone() {
                    for r in &by_size[j] {
                        acc.push(Formula::And(Box::new(l.clone()), Box::new(r.clone())));
                        acc.push(Formula::Or(Box::new(l.clone()), Box::new(r.clone())));
                        acc.push(Formula::Imp(Box::new(l.clone()), Box::new(r.clone())));
                    }
                }
            }
            by_size[n] = acc;
        }
        by_size.into_iter().flatten().collect()
    }

    fn random_formula(rng: &mut StdRng, depth: usize) -> Formula {
        let progs = ["a", "b", "a;b", "a+b", "a*", "(a;b)*", "(a+b)*"];
        if depth == 0 || rng.gen_range(0..4) == 0 {
            return if rng.gen_bool(0.5) {
                Formula::atom("p")
            } else {
                Formula::Bot
            };
        }
        match rng.gen_range(0..4) {
            0 => Formula::And(
                Box::new(random_formula(rng, depth - 1)),
                Box::new(random_formula(rng, depth - 1)),
            ),
            1 => Formula::Or(
                Box::new(random_formula(rng, depth - 1)),
                Box::new(random_formula(rng, depth - 1)),
            ),
            2 => Formula::Imp(
                Box::new(random_formula(rng, depth - 1)),
                Box::new(random_formula(rng, depth - 1)),
            ),
            _ => Formula::boxed(
                prog(progs[rng.gen_range(0..progs.len())]),
                random_formula(rng, depth - 1),
            ),
        }
    }

    #[test]
    fn star_measures_are_monotone_in_the_budget() {
        // Exhaustive over small formulas, then a seeded random sample of
        // deeper ones. Both polarities must be monotone in n.
        let mut corpus = formulas_of_size(4);
        let mut rng = StdRng::seed_from_u64(0x5eed);
        for _ in 0..150 {
            corpus.push(random_formula(&mut rng, 4));
        }
        for phi in &corpus {
            let mut prev = (0, 0);
            for n in 0..=3u64 {
                let cur = (star_max_pos(n, phi).unwrap(), star_max_neg(n, phi).unwrap());
                assert!(
                    cur.0 >= prev.0 && cur.1 >= prev.1,
                    "star measure dropped at n={n} for {phi}"
                );
                prev = cur;
            }
        }
    }

    #[test]
    fn path_max_is_monotone_under_adding_items() {
        let base = [
            seq("|- x: [a*]p"),
            seq("x: [a]p |- x: q"),
            seq("x -a-> y, x: p |- y: [a;b]p"),
        ];
        let extras = [
            "x: [b*][a]p",
            "x: p -> [a;a;a]q",
            "y: [a+b]p",
            "x: [(a+b)*]q",
        ];
        for s in &base {
            for e in &extras {
                let lf = parse_formula(&e[3..]).unwrap();
                let label = Label::new(&e[..1]);
                for side in [true, false] {
                    let mut bigger = s.clone();
                    let item = Item::fml(label.clone(), lf.clone());
                    if side {
                        bigger.ant.insert(item);
                    } else {
                        bigger.con.insert(item);
                    }
                    for l in bigger.labels() {
                        assert!(
                            path_max(&l, s).unwrap() <= path_max(&l, &bigger).unwrap(),
                            "path_max shrank at {l} when adding {e} to {s}"
                        );
                    }
                }
            }
        }
    }
}
