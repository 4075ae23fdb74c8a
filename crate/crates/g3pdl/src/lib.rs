//! A proof engine for propositional dynamic logic (PDL) built on a
//! labelled sequent calculus with non-wellfounded and cyclic proofs.
//!
//! The crate provides:
//! - [`syntax`]: formulas, programs, labelled sequents, classification,
//!   and the Fischer–Ladner closure;
//! - [`parser`]: a concrete text grammar plus versioned JSON documents
//!   for proofs and models;
//! - [`semantics`]: finite Kripke models, the relational interpretation,
//!   brute-force countermodel search, and counterexample-path measures;
//! - [`kernel`]: the inference rules, derivation trees, cyclic pre-proofs,
//!   and local checking;
//! - [`traces`]: trace values and the decidable global trace condition
//!   distinguishing proofs from mere pre-proofs;
//! - [`search`]: an automated prover for test-free acyclic sequents with
//!   countermodel extraction, and a bounded fair search-tree expander;
//! - [`schemata`]: programmatic derivations (necessitation, the axioms of
//!   the standard Hilbert axiomatisation, Hilbert-proof translation).
//!
//! The `parallel` feature (on by default) parallelizes bulk work — model
//! enumeration, per-node proof checking — via rayon; every entry point
//! also has a sequential twin for benchmarking and no-thread builds.

pub mod kernel;
pub mod parser;
pub mod schemata;
pub mod search;
pub mod semantics;
pub mod syntax;
pub mod traces;
