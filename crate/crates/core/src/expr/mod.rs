//! Matcher expressions: parsing and sandboxed evaluation.
//!
//! A matcher is a boolean expression over request attributes (`r.…`), policy
//! rule attributes (`p.…`), literals, and registered stub functions.  The
//! grammar is deliberately small — there are no assignments, no loops, no
//! lambdas — so every expression terminates once the interpreter's step
//! budget is enforced.
//!
//! Operator precedence, tightest first:
//!
//! 1. unary `!`, unary `-`
//! 2. `*`, `/`
//! 3. `+`, `-`
//! 4. `<`, `>`, `<=`, `>=`
//! 5. `==`, `!=`
//! 6. `&&`
//! 7. `||`
//!
//! All binary operators associate to the left; `&&` and `||` short-circuit.

mod eval;
mod lexer;
mod parser;

pub use eval::{
    eval_expr, values_equal, EvalError, FunctionRegistry, Interpreter, RegistryError, Scope,
    StubResult, DEFAULT_STEP_BUDGET,
};
pub(crate) use eval::eval_in_scope;
pub(crate) use lexer::{is_identifier, tokenize, Tok, Token};
pub use parser::parse_expr;
pub(crate) use parser::parse_tokens;

use crate::value::Value;
use thiserror::Error;

/// Errors produced while turning matcher text into an [`ExprAst`].
#[derive(Clone, Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: u32, col: u32, message: String },
    #[error("unknown operator `{op}` at {line}:{col}")]
    UnknownOperator { op: String, line: u32, col: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Not,
    Neg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Mul,
    Div,
    Add,
    Sub,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinaryOp {
    pub(crate) fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::And => "&&",
            BinaryOp::Or => "||",
        }
    }
}

/// Parsed expression tree.
///
/// Bare identifiers that are not the head of an attribute path or a call are
/// folded into [`ExprAst::Literal`] string nodes at parse time, so `allow` and
/// `"allow"` produce identical trees.
#[derive(Clone, Debug, PartialEq)]
pub enum ExprAst {
    Literal(Value),
    /// Dotted attribute path such as `r.sub.role`, split on `.`.
    AttrPath(Vec<String>),
    Unary {
        op: UnaryOp,
        operand: Box<ExprAst>,
    },
    Binary {
        op: BinaryOp,
        left: Box<ExprAst>,
        right: Box<ExprAst>,
    },
    Call {
        name: String,
        args: Vec<ExprAst>,
    },
}

impl ExprAst {
    /// Visits every node in the tree, parents before children.
    pub fn for_each_node(&self, f: &mut impl FnMut(&ExprAst)) {
        f(self);
        match self {
            ExprAst::Literal(_) | ExprAst::AttrPath(_) => {}
            ExprAst::Unary { operand, .. } => operand.for_each_node(f),
            ExprAst::Binary { left, right, .. } => {
                left.for_each_node(f);
                right.for_each_node(f);
            }
            ExprAst::Call { args, .. } => {
                for arg in args {
                    arg.for_each_node(f);
                }
            }
        }
    }

    /// Number of nodes in the tree; used as a cheap complexity measure.
    pub fn node_count(&self) -> usize {
        let mut n = 0;
        self.for_each_node(&mut |_| n += 1);
        n
    }

    /// True when any attribute path in the tree starts with `root`
    /// (e.g. `references_root("p")` for effect conditions over rule fields).
    pub fn references_root(&self, root: &str) -> bool {
        let mut found = false;
        self.for_each_node(&mut |node| {
            if let ExprAst::AttrPath(segs) = node {
                if segs.first().is_some_and(|s| s == root) {
                    found = true;
                }
            }
        });
        found
    }
}
