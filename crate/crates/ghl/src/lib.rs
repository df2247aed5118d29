//! Checker and executable semantics for graded Hoare logic over finite models.
//!
//! The crate is organised around a small imperative loop language. Programs
//! are run under pluggable effect backends, judgments are checked against a
//! table-driven rule system graded by a preordered monoid, and every accepted
//! judgment can be validated exhaustively against the denotational semantics
//! on a finite state space.

pub mod assertions;
pub mod backends;
pub mod grading;
pub mod harness;
pub mod kernel;
pub mod parse;
pub mod rules;
pub mod syntax;
