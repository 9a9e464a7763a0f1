//! Exact weighted model counting and uniform/weighted model sampling for
//! sentences of two-variable first-order logic, with support for existential
//! and counting quantifiers, cardinality constraints, and Markov logic
//! network inputs.
//!
//! The crate is organised as a pipeline:
//!
//! * [`logic`] defines predicates, formulas, ground models, grounding and
//!   evaluation.
//! * [`textio`] parses problem/MLN files and serialises models.
//! * [`normalize`] rewrites input sentences into the normal forms the
//!   counting engine consumes, tracking how sampled models map back.
//! * [`cells`] enumerates 1-types, 2-tables and their interactions.
//! * [`wfomc`] holds the lifted counting engine plus a brute-force oracle.
//! * [`sampler`] draws models exactly from the weighted model distribution.
//! * [`harness`] bundles presets, exact reference distributions and
//!   statistical validation.

pub mod cells;
pub mod harness;
pub mod logic;
pub mod normalize;
pub mod sampler;
pub mod textio;
pub mod wfomc;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("predicate `{name}` used with arity {found}, expected {expected}")]
    ArityMismatch { name: String, expected: usize, found: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("sentence is outside the supported fragment: {0}")]
    UnsupportedFragment(String),
    #[error("the sentence has no models over this domain")]
    Unsatisfiable,
    #[error("problem size exceeds configured cap: {0}")]
    CapExceeded(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
