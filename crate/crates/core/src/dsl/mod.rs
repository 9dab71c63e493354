//! The `.rec` text format.
//!
//! ```text
//! # x_n = (x_{n-1} - 1) / x_{n-2}
//! x[0] = 5;
//! x[1] = -5;
//! x[n] = (x[n-1] - 1)/x[n-2] for n in 2..7;
//! ```
//!
//! A program is a list of `param NAME = RATIONAL;`, an optional
//! `prime P;`, and rules `VAR = EXPR (for IDENT in INT..INT)?;`. Indices
//! must be affine in the rule's loop variable and ranges are closed.
//! Bodies are reduced to a single fraction of expanded polynomials with no
//! gcd cancellation; keeping numerator and denominator coprime is up to the
//! author of the file.

mod ast;
mod elaborate;
mod lexer;
mod parser;

use thiserror::Error;

use crate::field::PrimeContext;
use crate::recurrence::{NodeId, RecurrenceSpec, SpecError};

pub use ast::{Affine, Expr, Program, RangeSpec, Rule, VarRef};
pub use elaborate::{elaborate, elaborate_with_cap, DEFAULT_MONOMIAL_CAP};
pub use lexer::Pos;
pub use parser::parse;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("{line}:{col}: {message}")]
    Lex { line: usize, col: usize, message: String },
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax { line: usize, col: usize, message: String },
    #[error("{line}:{col}: unknown identifier `{name}`")]
    UnknownIdentifier { name: String, line: usize, col: usize },
    #[error("{line}:{col}: index is not affine in the loop variable")]
    NonAffineIndex { line: usize, col: usize },
    #[error("`{0}` is used both as a parameter and as a variable")]
    NameClash(String),
    #[error("range {var} in {lo}..{hi} is empty or descending")]
    BadRange { var: String, lo: i64, hi: i64 },
    #[error("node {0} is defined more than once")]
    DuplicateDefinition(NodeId),
    #[error("node {node} refers to undefined node {missing}")]
    UndefinedNode { node: NodeId, missing: NodeId },
    #[error("denominator of node {0} reduces to the zero polynomial")]
    ZeroDenominator(NodeId),
    #[error("node {node} expands to more than {cap} monomials")]
    MonomialCap { node: NodeId, cap: usize },
    #[error(transparent)]
    Spec(SpecError),
}

impl DslError {
    /// `(line, col)` for errors tied to a source position.
    pub fn position(&self) -> Option<(usize, usize)> {
        match self {
            DslError::Lex { line, col, .. }
            | DslError::Syntax { line, col, .. }
            | DslError::UnknownIdentifier { line, col, .. }
            | DslError::NonAffineIndex { line, col } => Some((*line, *col)),
            _ => None,
        }
    }
}

/// `parse` followed by `elaborate`.
pub fn load(text: &str, ctx: &PrimeContext) -> Result<RecurrenceSpec, DslError> {
    elaborate(&parse(text)?, ctx)
}
