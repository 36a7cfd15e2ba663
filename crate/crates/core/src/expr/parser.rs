//! Precedence-climbing parser for matcher expressions.

use super::lexer::{tokenize, Tok, Token};
use super::{BinaryOp, ExprAst, ParseError, UnaryOp};
use crate::value::Value;

/// Parenthesis/call nesting deeper than this is rejected up front so that
/// parsing itself cannot blow the stack on adversarial input.
const MAX_NESTING: usize = 200;

/// Parses matcher text into an expression tree.
pub fn parse_expr(src: &str) -> Result<ExprAst, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { tokens: &tokens, pos: 0, depth: 0 };
    let ast = p.expr(0)?;
    if let Some(t) = p.peek() {
        return Err(p.err_at(t.line, t.col, format!("unexpected {}", t.tok.describe())));
    }
    Ok(ast)
}

/// Parses one expression out of an already-lexed token slice, starting at
/// `pos`.  Returns the tree and the index of the first unconsumed token.
/// The effect grammar uses this for `where (…)` conditions.
pub(crate) fn parse_tokens(tokens: &[Token], pos: usize) -> Result<(ExprAst, usize), ParseError> {
    let mut p = Parser { tokens, pos, depth: 0 };
    let ast = p.expr(0)?;
    Ok((ast, p.pos))
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    depth: usize,
}

fn binding_power(tok: &Tok) -> Option<(BinaryOp, u8)> {
    Some(match tok {
        Tok::OrOr => (BinaryOp::Or, 1),
        Tok::AndAnd => (BinaryOp::And, 2),
        Tok::EqEq => (BinaryOp::Eq, 3),
        Tok::NotEq => (BinaryOp::Ne, 3),
        Tok::Lt => (BinaryOp::Lt, 4),
        Tok::Le => (BinaryOp::Le, 4),
        Tok::Gt => (BinaryOp::Gt, 4),
        Tok::Ge => (BinaryOp::Ge, 4),
        Tok::Plus => (BinaryOp::Add, 5),
        Tok::Minus => (BinaryOp::Sub, 5),
        Tok::Star => (BinaryOp::Mul, 6),
        Tok::Slash => (BinaryOp::Div, 6),
        _ => return None,
    })
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos)?;
        self.pos += 1;
        Some(t)
    }

    fn err_at(&self, line: u32, col: u32, message: String) -> ParseError {
        ParseError::Syntax { line, col, message }
    }

    fn err_here(&self, message: impl Into<String>) -> ParseError {
        match self.peek() {
            Some(t) => self.err_at(t.line, t.col, message.into()),
            None => {
                let (line, col) = self
                    .tokens
                    .last()
                    .map(|t| (t.line, t.col + 1))
                    .unwrap_or((1, 1));
                self.err_at(line, col, format!("{}, found end of input", message.into()))
            }
        }
    }

    /// Precedence climbing: parse a prefix operand, then fold in binary
    /// operators whose binding power is at least `min_bp`.  Left
    /// associativity comes from recursing with `bp + 1` on the right.
    fn expr(&mut self, min_bp: u8) -> Result<ExprAst, ParseError> {
        let mut lhs = self.prefix()?;

        while let Some(t) = self.peek() {
            let Some((op, bp)) = binding_power(&t.tok) else { break };
            if bp < min_bp {
                break;
            }
            self.bump();
            let rhs = self.expr(bp + 1)?;
            lhs = ExprAst::Binary { op, left: Box::new(lhs), right: Box::new(rhs) };
        }

        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<ExprAst, ParseError> {
        let Some(t) = self.bump() else {
            return Err(self.err_here("expected expression"));
        };
        match &t.tok {
            Tok::Num(n) => Ok(ExprAst::Literal(Value::Num(*n))),
            Tok::Str(s) => Ok(ExprAst::Literal(Value::Str(s.clone()))),
            Tok::Bang => {
                let operand = self.enter(|p| p.prefix())?;
                Ok(ExprAst::Unary { op: UnaryOp::Not, operand: Box::new(operand) })
            }
            Tok::Minus => {
                let operand = self.enter(|p| p.prefix())?;
                Ok(ExprAst::Unary { op: UnaryOp::Neg, operand: Box::new(operand) })
            }
            Tok::LParen => {
                let inner = self.enter(|p| p.expr(0))?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => self.ident_tail(name),
            other => Err(self.err_at(
                t.line,
                t.col,
                format!("expected expression, found {}", other.describe()),
            )),
        }
    }

    /// Disambiguates what follows a leading identifier: a call, a dotted
    /// attribute path, a boolean keyword, or a bare string literal.
    fn ident_tail(&mut self, name: &str) -> Result<ExprAst, ParseError> {
        match self.peek().map(|t| &t.tok) {
            Some(Tok::LParen) => {
                self.bump();
                let args = self.enter(|p| p.call_args())?;
                Ok(ExprAst::Call { name: name.to_string(), args })
            }
            Some(Tok::Dot) => {
                let mut segs = vec![name.to_string()];
                while self.peek().map(|t| &t.tok) == Some(&Tok::Dot) {
                    self.bump();
                    match self.bump() {
                        Some(Token { tok: Tok::Ident(seg), .. }) => segs.push(seg.clone()),
                        Some(t) => {
                            return Err(self.err_at(
                                t.line,
                                t.col,
                                format!("expected attribute name after `.`, found {}", t.tok.describe()),
                            ))
                        }
                        None => return Err(self.err_here("expected attribute name after `.`")),
                    }
                }
                Ok(ExprAst::AttrPath(segs))
            }
            _ => match name {
                "true" => Ok(ExprAst::Literal(Value::Bool(true))),
                "false" => Ok(ExprAst::Literal(Value::Bool(false))),
                // A bare identifier reads as a string literal, so matchers
                // and effect conditions can say `p.eft == allow`.
                _ => Ok(ExprAst::Literal(Value::Str(name.to_string()))),
            },
        }
    }

    fn call_args(&mut self) -> Result<Vec<ExprAst>, ParseError> {
        let mut args = Vec::new();
        if self.peek().map(|t| &t.tok) == Some(&Tok::RParen) {
            self.bump();
            return Ok(args);
        }
        loop {
            args.push(self.expr(0)?);
            match self.bump() {
                Some(Token { tok: Tok::Comma, .. }) => continue,
                Some(Token { tok: Tok::RParen, .. }) => return Ok(args),
                Some(t) => {
                    return Err(self.err_at(
                        t.line,
                        t.col,
                        format!("expected `,` or `)` in argument list, found {}", t.tok.describe()),
                    ))
                }
                None => return Err(self.err_here("expected `,` or `)` in argument list")),
            }
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        match self.bump() {
            Some(Token { tok: Tok::RParen, .. }) => Ok(()),
            Some(t) => Err(self.err_at(
                t.line,
                t.col,
                format!("expected `)`, found {}", t.tok.describe()),
            )),
            None => Err(self.err_here("expected `)`")),
        }
    }

    fn enter<T>(&mut self, f: impl FnOnce(&mut Self) -> Result<T, ParseError>) -> Result<T, ParseError> {
        self.depth += 1;
        if self.depth > MAX_NESTING {
            return Err(self.err_here("expression nested too deeply"));
        }
        let out = f(self);
        self.depth -= 1;
        out
    }
}
