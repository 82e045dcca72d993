//! The grounding-program language: parsing, the builtin registry and lowering
//! to a constraint problem.

mod ast;
mod lower;
mod parser;
mod registry;

pub use ast::{render, Call, ProgramStmt, StmtKind, Value};
pub use lower::{
    lower, render_diagnostics, Csp, CspConstraint, CspVariable, Diagnostic, LowerError, Lowered, Polarity, Severity,
};
pub use parser::{parse, ParseError};
pub use registry::{parameters, registry_signatures, resolve_builtin, score_function_list, Builtin};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("{}:{}: error: {}", .0.line, .0.col, .0.message)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Lower(#[from] LowerError),
}

impl ProgramError {
    /// Diagnostics in `line:col: severity: message` form.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            ProgramError::Parse(e) => {
                vec![Diagnostic { line: e.line, col: e.col, severity: Severity::Error, message: e.message.clone() }]
            }
            ProgramError::Lower(e) => e.diagnostics.clone(),
        }
    }
}

/// Parses and lowers program text in one step.
pub fn compile(text: &str, strict: bool) -> Result<Lowered, ProgramError> {
    let stmts = parse(text)?;
    Ok(lower(&stmts, strict)?)
}
