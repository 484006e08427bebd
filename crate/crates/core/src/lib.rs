//! Monadic realizability for arithmetic: a typed lambda calculus with state
//! and exceptions, realizer extraction from natural deduction proofs, proof
//! normalization with witness extraction, and learning demos over exact reals.

pub mod arith;
pub mod corpus;
pub mod deduction;
pub mod extraction;
pub mod learning;
pub mod monads;
pub mod normalizer;
pub mod reals;
pub mod syntax;
pub mod term;

pub use arith::{ATerm, Formula, SymbolTable};
pub use learning::{Exception, Outcome, State};
pub use term::{Term, Ty};
