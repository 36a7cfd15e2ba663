//! Effect expressions: combining per-rule match results into one decision.
//!
//! An effect is a boolean combination of quantifier terms over the set of
//! policy rules whose matcher evaluated true:
//!
//! ```text
//! e = some(where (p.eft == allow))                                  allow-override
//! e = !some(where (p.eft == deny))                                  deny-override
//! e = some(where (p.eft == allow)) && !some(where (p.eft == deny))  both combined
//! e = max(where (p.priority))                                       highest priority wins
//! ```
//!
//! Quantifiers: `some` (existential), `any` (universal over the matched set),
//! `max`/`min` (select the rule with the extremal numeric condition and use
//! its effect).  Conditions see a single binding, `p`, holding the rule's
//! attribute map; the request is not in scope here.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::expr::{
    eval_in_scope, parse_tokens, tokenize, EvalError, ExprAst, FunctionRegistry, ParseError,
    Scope, Tok, Token,
};
use crate::value::Value;

/// Effect of a single policy rule.  Rules that do not carry an explicit
/// `eft` attribute count as [`Eft::Allow`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Eft {
    Allow,
    Deny,
}

impl Eft {
    pub fn as_str(self) -> &'static str {
        match self {
            Eft::Allow => "allow",
            Eft::Deny => "deny",
        }
    }

    /// Parses the two permitted `eft` column values.
    pub fn parse(s: &str) -> Option<Eft> {
        match s {
            "allow" => Some(Eft::Allow),
            "deny" => Some(Eft::Deny),
            _ => None,
        }
    }
}

impl std::fmt::Display for Eft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantifier {
    Some,
    Any,
    Max,
    Min,
}

impl Quantifier {
    fn parse(s: &str) -> Option<Quantifier> {
        match s {
            "some" => Some(Quantifier::Some),
            "any" => Some(Quantifier::Any),
            "max" => Some(Quantifier::Max),
            "min" => Some(Quantifier::Min),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Quantifier::Some => "some",
            Quantifier::Any => "any",
            Quantifier::Max => "max",
            Quantifier::Min => "min",
        }
    }
}

impl std::fmt::Display for Quantifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One quantifier term, e.g. `some(where (p.eft == allow))`.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectTerm {
    pub quantifier: Quantifier,
    pub condition: ExprAst,
    /// Whether the condition inspects `p.eft` itself.  When it does not
    /// (e.g. `some(where (p.weight > 3))`), a rule only witnesses `some` if
    /// its effect is additionally "allow" — a condition that is explicitly
    /// about `eft` already says which effects it accepts.
    mentions_eft: bool,
}

impl EffectTerm {
    pub fn new(quantifier: Quantifier, condition: ExprAst) -> Self {
        let mut mentions_eft = false;
        condition.for_each_node(&mut |node| {
            if let ExprAst::AttrPath(segs) = node {
                if segs.len() >= 2 && segs[0] == "p" && segs[1] == "eft" {
                    mentions_eft = true;
                }
            }
        });
        EffectTerm { quantifier, condition, mentions_eft }
    }
}

/// Parsed effect expression: a boolean tree over quantifier terms.
#[derive(Clone, Debug, PartialEq)]
pub enum EffectAst {
    Term(EffectTerm),
    Not(Box<EffectAst>),
    And(Box<EffectAst>, Box<EffectAst>),
    Or(Box<EffectAst>, Box<EffectAst>),
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EffectParseError {
    #[error(transparent)]
    Expr(#[from] ParseError),
    #[error("unknown quantifier `{name}` at {line}:{col} (expected some, any, max, or min)")]
    UnknownQuantifier { name: String, line: u32, col: u32 },
}

/// A policy rule whose matcher evaluated true, carried into effect merging.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchedRule {
    /// Ordinal of the rule in the policy store; ties in max/min resolve to
    /// the smallest index regardless of the order rules were matched in.
    pub rule_index: usize,
    /// The rule's attribute map, bound as `p` while conditions evaluate.
    /// Always contains an `eft` entry consistent with [`Self::eft`].
    pub bindings: Arc<Value>,
    pub eft: Eft,
}

impl MatchedRule {
    /// Builds a matched rule from its attribute map, forcing the `eft`
    /// binding to agree with `eft`.
    pub fn new(rule_index: usize, mut attrs: BTreeMap<String, Value>, eft: Eft) -> Self {
        attrs.insert("eft".to_string(), Value::str(eft.as_str()));
        MatchedRule { rule_index, bindings: Arc::new(Value::Map(attrs)), eft }
    }
}

/// Outcome of enforcement for one request.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub allowed: bool,
    /// Indices of the rules whose matcher evaluated true.
    pub matched: Vec<usize>,
    /// Present when evaluation failed somewhere; `allowed` is then false.
    pub error: Option<EnforceFailure>,
}

impl Decision {
    pub fn deny_on_error(rule_index: Option<usize>, error: EvalError) -> Self {
        Decision { allowed: false, matched: Vec::new(), error: Some(EnforceFailure { rule_index, error }) }
    }
}

/// Where and how an enforcement evaluation failed.
#[derive(Clone, Debug, PartialEq)]
pub struct EnforceFailure {
    /// Index of the rule being evaluated, when the failure is per-rule.
    pub rule_index: Option<usize>,
    pub error: EvalError,
}

impl std::error::Error for EnforceFailure {}

impl std::fmt::Display for EnforceFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.rule_index {
            Some(i) => write!(f, "rule {i}: {}", self.error),
            None => write!(f, "effect: {}", self.error),
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum MergeError {
    #[error("{quantifier}(where …) condition evaluated to {got} for rule {rule_index}; expected {expected}")]
    ConditionType { quantifier: Quantifier, rule_index: usize, expected: &'static str, got: String },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl MergeError {
    /// Collapses the error into the (rule, evaluation-error) form Decisions
    /// carry.
    pub(crate) fn into_failure(self) -> (Option<usize>, EvalError) {
        match self {
            MergeError::ConditionType { rule_index, .. } => {
                let message = self.to_string();
                (Some(rule_index), EvalError::TypeError { message })
            }
            MergeError::Eval(e) => (None, e),
        }
    }
}

/// Parses effect text such as `some(where (p.eft == allow))`.
///
/// Grammar: `expr := term | '!' expr | expr '&&' expr | expr '||' expr |
/// '(' expr ')'` with `term := quantifier '(' 'where' '(' condition ')' ')'`.
pub fn parse_effect(src: &str) -> Result<EffectAst, EffectParseError> {
    let tokens = tokenize(src)?;
    let mut p = EffectParser { tokens: &tokens, pos: 0 };
    let ast = p.or_expr(0)?;
    if let Some(t) = p.peek() {
        return Err(ParseError::Syntax {
            line: t.line,
            col: t.col,
            message: format!("unexpected {}", t.tok.describe()),
        }
        .into());
    }
    Ok(ast)
}

struct EffectParser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

const EFFECT_MAX_NESTING: usize = 64;

impl<'a> EffectParser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.pos)?;
        self.pos += 1;
        Some(t)
    }

    fn syntax(&self, message: impl Into<String>) -> EffectParseError {
        let (line, col) = match self.peek() {
            Some(t) => (t.line, t.col),
            None => self.tokens.last().map(|t| (t.line, t.col + 1)).unwrap_or((1, 1)),
        };
        ParseError::Syntax { line, col, message: message.into() }.into()
    }

    fn or_expr(&mut self, depth: usize) -> Result<EffectAst, EffectParseError> {
        let mut lhs = self.and_expr(depth)?;
        while self.peek().map(|t| &t.tok) == Some(&Tok::OrOr) {
            self.bump();
            let rhs = self.and_expr(depth)?;
            lhs = EffectAst::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self, depth: usize) -> Result<EffectAst, EffectParseError> {
        let mut lhs = self.unary(depth)?;
        while self.peek().map(|t| &t.tok) == Some(&Tok::AndAnd) {
            self.bump();
            let rhs = self.unary(depth)?;
            lhs = EffectAst::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self, depth: usize) -> Result<EffectAst, EffectParseError> {
        if depth > EFFECT_MAX_NESTING {
            return Err(self.syntax("effect expression nested too deeply"));
        }
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Bang) => {
                self.bump();
                Ok(EffectAst::Not(Box::new(self.unary(depth + 1)?)))
            }
            Some(Tok::LParen) => {
                self.bump();
                let inner = self.or_expr(depth + 1)?;
                match self.bump().map(|t| &t.tok) {
                    Some(Tok::RParen) => Ok(inner),
                    _ => Err(self.syntax("expected `)`")),
                }
            }
            Some(Tok::Ident(_)) => self.term(),
            Some(other) => {
                let other = other.describe();
                Err(self.syntax(format!("expected quantifier term, found {other}")))
            }
            None => Err(self.syntax("expected quantifier term, found end of input")),
        }
    }

    fn term(&mut self) -> Result<EffectAst, EffectParseError> {
        let t = self.bump().expect("caller peeked an identifier");
        let Tok::Ident(name) = &t.tok else { unreachable!() };
        let Some(quantifier) = Quantifier::parse(name) else {
            return Err(EffectParseError::UnknownQuantifier {
                name: name.clone(),
                line: t.line,
                col: t.col,
            });
        };
        self.expect(&Tok::LParen, "expected `(` after quantifier")?;
        match self.bump().map(|t| &t.tok) {
            Some(Tok::Ident(kw)) if kw == "where" => {}
            _ => return Err(self.syntax(format!("expected `where` inside {quantifier}(…)"))),
        }
        self.expect(&Tok::LParen, "expected `(` after `where`")?;
        let (condition, next) = parse_tokens(self.tokens, self.pos)?;
        self.pos = next;
        self.expect(&Tok::RParen, "expected `)` closing the condition")?;
        self.expect(&Tok::RParen, "expected `)` closing the quantifier term")?;
        Ok(EffectAst::Term(EffectTerm::new(quantifier, condition)))
    }

    fn expect(&mut self, want: &Tok, message: &str) -> Result<(), EffectParseError> {
        match self.peek() {
            Some(t) if &t.tok == want => {
                self.bump();
                Ok(())
            }
            _ => Err(self.syntax(message)),
        }
    }
}

/// Scope exposing a single root, `p`, for condition evaluation.
struct RuleScope<'a>(&'a Value);

impl Scope for RuleScope<'_> {
    fn root(&self, name: &str) -> Option<&Value> {
        (name == "p").then_some(self.0)
    }
}

/// Combines the matched rules into a final decision under `effect`.
///
/// The matched list may arrive in any order: quantifier terms are
/// order-independent, and max/min ties resolve by `rule_index`, which is
/// stable metadata rather than list position.
pub fn merge_effects(
    effect: &EffectAst,
    matched: &[MatchedRule],
    funcs: &FunctionRegistry,
) -> Result<Decision, MergeError> {
    let allowed = eval_effect(effect, matched, funcs)?;
    let mut indices: Vec<usize> = matched.iter().map(|m| m.rule_index).collect();
    indices.sort_unstable();
    Ok(Decision { allowed, matched: indices, error: None })
}

fn eval_effect(
    effect: &EffectAst,
    matched: &[MatchedRule],
    funcs: &FunctionRegistry,
) -> Result<bool, MergeError> {
    match effect {
        EffectAst::Not(inner) => Ok(!eval_effect(inner, matched, funcs)?),
        EffectAst::And(l, r) => Ok(eval_effect(l, matched, funcs)? && eval_effect(r, matched, funcs)?),
        EffectAst::Or(l, r) => Ok(eval_effect(l, matched, funcs)? || eval_effect(r, matched, funcs)?),
        EffectAst::Term(term) => eval_term(term, matched, funcs),
    }
}

fn condition_bool(
    term: &EffectTerm,
    rule: &MatchedRule,
    funcs: &FunctionRegistry,
) -> Result<bool, MergeError> {
    let v = eval_in_scope(&term.condition, &RuleScope(&rule.bindings), funcs)?;
    v.as_bool().ok_or_else(|| MergeError::ConditionType {
        quantifier: term.quantifier,
        rule_index: rule.rule_index,
        expected: "a boolean",
        got: v.type_name().to_string(),
    })
}

/// Per-term outcome recorded by [`explain_effects`].
#[derive(Clone, Debug, PartialEq)]
pub struct TermTrace {
    pub quantifier: Quantifier,
    pub value: bool,
    /// Rule index that decided the term: the smallest satisfying witness for
    /// `some`, the extremal rule for `max`/`min`.  `None` for `any` and for
    /// terms no rule satisfies.
    pub witness: Option<usize>,
}

/// Like [`merge_effects`], but additionally reports every quantifier term's
/// value and witness (terms appear in source order).  Unlike the merge path
/// this never short-circuits, so the trace is complete; the decision is
/// identical.
pub fn explain_effects(
    effect: &EffectAst,
    matched: &[MatchedRule],
    funcs: &FunctionRegistry,
) -> Result<(bool, Vec<TermTrace>), MergeError> {
    let mut terms = Vec::new();
    let allowed = explain_tree(effect, matched, funcs, &mut terms)?;
    Ok((allowed, terms))
}

fn explain_tree(
    effect: &EffectAst,
    matched: &[MatchedRule],
    funcs: &FunctionRegistry,
    out: &mut Vec<TermTrace>,
) -> Result<bool, MergeError> {
    match effect {
        EffectAst::Not(inner) => Ok(!explain_tree(inner, matched, funcs, out)?),
        EffectAst::And(l, r) => {
            let lv = explain_tree(l, matched, funcs, out)?;
            let rv = explain_tree(r, matched, funcs, out)?;
            Ok(lv && rv)
        }
        EffectAst::Or(l, r) => {
            let lv = explain_tree(l, matched, funcs, out)?;
            let rv = explain_tree(r, matched, funcs, out)?;
            Ok(lv || rv)
        }
        EffectAst::Term(term) => {
            let (value, witness) = explain_term(term, matched, funcs)?;
            out.push(TermTrace { quantifier: term.quantifier, value, witness });
            Ok(value)
        }
    }
}

fn explain_term(
    term: &EffectTerm,
    matched: &[MatchedRule],
    funcs: &FunctionRegistry,
) -> Result<(bool, Option<usize>), MergeError> {
    match term.quantifier {
        Quantifier::Some => {
            let mut witness: Option<usize> = None;
            for rule in matched {
                if condition_bool(term, rule, funcs)?
                    && (term.mentions_eft || rule.eft == Eft::Allow)
                    && witness.is_none_or(|w| rule.rule_index < w)
                {
                    witness = Some(rule.rule_index);
                }
            }
            Ok((witness.is_some(), witness))
        }
        Quantifier::Any => {
            let mut value = !matched.is_empty();
            for rule in matched {
                if !condition_bool(term, rule, funcs)? {
                    value = false;
                }
            }
            Ok((value, None))
        }
        Quantifier::Max | Quantifier::Min => {
            let value = eval_term(term, matched, funcs)?;
            let witness = extremal_rule(term, matched, funcs)?;
            Ok((value, witness))
        }
    }
}

/// Index of the rule max/min selects, shared by both evaluation paths.
fn extremal_rule(
    term: &EffectTerm,
    matched: &[MatchedRule],
    funcs: &FunctionRegistry,
) -> Result<Option<usize>, MergeError> {
    let want_max = term.quantifier == Quantifier::Max;
    let mut best: Option<(f64, usize)> = None;
    for rule in matched {
        let v = eval_in_scope(&term.condition, &RuleScope(&rule.bindings), funcs)?;
        let n = match v.as_num() {
            Some(n) if !n.is_nan() => n,
            _ => {
                return Err(MergeError::ConditionType {
                    quantifier: term.quantifier,
                    rule_index: rule.rule_index,
                    expected: "a number",
                    got: if v.as_num().is_some() { "NaN".into() } else { v.type_name().into() },
                })
            }
        };
        let better = match &best {
            None => true,
            Some((bn, bi)) => {
                let strictly = if want_max { n > *bn } else { n < *bn };
                strictly || (n == *bn && rule.rule_index < *bi)
            }
        };
        if better {
            best = Some((n, rule.rule_index));
        }
    }
    Ok(best.map(|(_, i)| i))
}

fn eval_term(
    term: &EffectTerm,
    matched: &[MatchedRule],
    funcs: &FunctionRegistry,
) -> Result<bool, MergeError> {
    match term.quantifier {
        Quantifier::Some => {
            for rule in matched {
                if condition_bool(term, rule, funcs)?
                    && (term.mentions_eft || rule.eft == Eft::Allow)
                {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Quantifier::Any => {
            if matched.is_empty() {
                return Ok(false);
            }
            for rule in matched {
                if !condition_bool(term, rule, funcs)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Quantifier::Max | Quantifier::Min => {
            let Some(selected) = extremal_rule(term, matched, funcs)? else {
                return Ok(false);
            };
            Ok(matched
                .iter()
                .find(|m| m.rule_index == selected)
                .is_some_and(|m| m.eft == Eft::Allow))
        }
    }
}
