//! The first-order language: syntax tree, concrete syntax, and sort checking.

pub mod ast;
mod check;
mod lexer;
mod parser;
mod printer;
mod transform;

pub use ast::*;
pub use check::{check_theory, formula_kind, term_sort, CheckedTheory, Kind};
pub use lexer::{tokenize, Pos, Tok, Token};
pub use parser::{parse_formula, parse_source, parse_theory};
pub use transform::{desugar, is_core};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LogicError {
    #[error("{pos}: {message}")]
    Lex { pos: Pos, message: String },
    #[error("{pos}: expected {}, found {found}", expected.join(" or "))]
    Parse {
        pos: Pos,
        expected: Vec<String>,
        found: String,
    },
    #[error("sort error at `{symbol}`: expected {expected}, found {found}")]
    Sort {
        symbol: String,
        expected: String,
        found: String,
    },
    #[error("unbound symbol `{0}`")]
    Unbound(String),
    #[error("duplicate declaration of `{0}`")]
    Duplicate(String),
}

/// Parse and check a theory source in one step.
pub fn load_theory(source: &str) -> Result<CheckedTheory, Vec<LogicError>> {
    let t = parse_source(source).map_err(|e| vec![e])?;
    check_theory(&t)
}
