//! PML model files: the request/policy definitions, role definitions, and
//! the matcher/effect sources.
//!
//! A model is line-oriented text, one `key = value` pair per line:
//!
//! ```text
//! r = sub, obj, act
//! p = sub, obj, act
//! g = _, _
//! m = g(r.sub, p.sub) && key_match(r.obj, p.obj) && regex_match(r.act, p.act)
//! e = some(where (p.eft == allow))
//! ```
//!
//! `#` starts a comment (outside string literals), blank lines are ignored,
//! and `r`, `p`, `m`, `e` are each required exactly once.  Role definitions
//! use keys `g`, `g2`, `g3`, … with `_, _` declaring a global role function
//! (arity 2) and `_, _, _` a tenant-scoped one (arity 3).

use std::collections::BTreeMap;

use thiserror::Error;

use crate::effect::parse_effect;
use crate::expr::{is_identifier, parse_expr, ExprAst};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("line {line} is not a `key = value` pair")]
    BadLine { line: usize },
    #[error("missing `{key}` section")]
    MissingSection { key: &'static str },
    #[error("duplicate `{key}` on line {line}")]
    DuplicateKey { key: String, line: usize },
    #[error("line {line}: role definition `{key}` must be `_, _` (arity 2) or `_, _, _` (arity 3)")]
    BadRoleArity { key: String, line: usize },
    #[error("line {line}: `{key}` declares an empty attribute list")]
    EmptyAttributeList { key: String, line: usize },
    #[error("line {line}: `{key}` declares attribute `{attr}` twice")]
    DuplicateAttribute { key: String, attr: String, line: usize },
    #[error("line {line}: `{name}` is not a valid attribute name")]
    BadAttributeName { name: String, line: usize },
    #[error("line {line}: unknown model key `{key}`")]
    UnknownKey { key: String, line: usize },
    #[error("line {line}: `{key}` has an empty value")]
    EmptyValue { key: String, line: usize },
}

/// A parsed model: what requests and rules look like, which role functions
/// exist, and the matcher/effect sources (parsed later by their own modules).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelDefinition {
    request_attrs: Vec<String>,
    policy_attrs: Vec<String>,
    role_defs: BTreeMap<String, u8>,
    matcher_src: String,
    effect_src: String,
}

impl ModelDefinition {
    /// Attribute names bound from request values, in order (`r = …`).
    pub fn request_attrs(&self) -> &[String] {
        &self.request_attrs
    }

    /// Attribute names bound from rule values, in order (`p = …`).
    pub fn policy_attrs(&self) -> &[String] {
        &self.policy_attrs
    }

    /// Role-function keys (`g`, `g2`, …) mapped to arity 2 (global) or 3
    /// (tenant-scoped).
    pub fn role_defs(&self) -> &BTreeMap<String, u8> {
        &self.role_defs
    }

    pub fn matcher_src(&self) -> &str {
        &self.matcher_src
    }

    pub fn effect_src(&self) -> &str {
        &self.effect_src
    }

    /// Position of `eft` in the policy attributes, when declared.
    pub fn eft_index(&self) -> Option<usize> {
        self.policy_attrs.iter().position(|a| a == "eft")
    }

    /// Canonical model text; `parse_model` maps it back to an equal value.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("r = {}\n", self.request_attrs.join(", ")));
        out.push_str(&format!("p = {}\n", self.policy_attrs.join(", ")));
        for (key, arity) in &self.role_defs {
            let placeholders = vec!["_"; *arity as usize].join(", ");
            out.push_str(&format!("{key} = {placeholders}\n"));
        }
        out.push_str(&format!("m = {}\n", self.matcher_src));
        out.push_str(&format!("e = {}\n", self.effect_src));
        out
    }
}

/// Returns the line with any `#` comment removed, ignoring `#` characters
/// inside double-quoted strings (matchers may compare against `"a#b"`).
fn strip_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    let mut in_quotes = false;
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' if in_quotes => i += 1,
            b'"' => in_quotes = !in_quotes,
            b'#' if !in_quotes => return &line[..i],
            _ => {}
        }
        i += 1;
    }
    line
}

fn is_role_key(key: &str) -> bool {
    let Some(rest) = key.strip_prefix('g') else { return false };
    rest.is_empty() || (!rest.starts_with('0') && rest.bytes().all(|b| b.is_ascii_digit()))
}

fn parse_attr_list(key: &str, value: &str, line: usize) -> Result<Vec<String>, ModelError> {
    if value.is_empty() {
        return Err(ModelError::EmptyAttributeList { key: key.to_string(), line });
    }
    let mut attrs = Vec::new();
    for token in value.split(',') {
        let name = token.trim();
        if !is_identifier(name) {
            return Err(ModelError::BadAttributeName { name: name.to_string(), line });
        }
        if attrs.iter().any(|a| a == name) {
            return Err(ModelError::DuplicateAttribute {
                key: key.to_string(),
                attr: name.to_string(),
                line,
            });
        }
        attrs.push(name.to_string());
    }
    Ok(attrs)
}

/// Parses model text into a [`ModelDefinition`].
pub fn parse_model(text: &str) -> Result<ModelDefinition, ModelError> {
    let mut request_attrs: Option<Vec<String>> = None;
    let mut policy_attrs: Option<Vec<String>> = None;
    let mut role_defs: BTreeMap<String, u8> = BTreeMap::new();
    let mut matcher_src: Option<String> = None;
    let mut effect_src: Option<String> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = strip_comment(raw).trim();
        if stripped.is_empty() {
            continue;
        }
        let Some((key, value)) = stripped.split_once('=') else {
            return Err(ModelError::BadLine { line });
        };
        let key = key.trim();
        let value = value.trim();

        match key {
            "r" => {
                if request_attrs.is_some() {
                    return Err(ModelError::DuplicateKey { key: key.into(), line });
                }
                request_attrs = Some(parse_attr_list(key, value, line)?);
            }
            "p" => {
                if policy_attrs.is_some() {
                    return Err(ModelError::DuplicateKey { key: key.into(), line });
                }
                policy_attrs = Some(parse_attr_list(key, value, line)?);
            }
            "m" | "e" => {
                let slot = if key == "m" { &mut matcher_src } else { &mut effect_src };
                if slot.is_some() {
                    return Err(ModelError::DuplicateKey { key: key.into(), line });
                }
                if value.is_empty() {
                    return Err(ModelError::EmptyValue { key: key.into(), line });
                }
                *slot = Some(value.to_string());
            }
            _ if is_role_key(key) => {
                if role_defs.contains_key(key) {
                    return Err(ModelError::DuplicateKey { key: key.into(), line });
                }
                let tokens: Vec<&str> = value.split(',').map(str::trim).collect();
                let arity = tokens.len();
                if !(2..=3).contains(&arity) || tokens.iter().any(|t| *t != "_") {
                    return Err(ModelError::BadRoleArity { key: key.into(), line });
                }
                role_defs.insert(key.to_string(), arity as u8);
            }
            _ => return Err(ModelError::UnknownKey { key: key.into(), line }),
        }
    }

    Ok(ModelDefinition {
        request_attrs: request_attrs.ok_or(ModelError::MissingSection { key: "r" })?,
        policy_attrs: policy_attrs.ok_or(ModelError::MissingSection { key: "p" })?,
        role_defs,
        matcher_src: matcher_src.ok_or(ModelError::MissingSection { key: "m" })?,
        effect_src: effect_src.ok_or(ModelError::MissingSection { key: "e" })?,
    })
}

/// Structural cross-checks between the matcher/effect sources and the
/// declarations.  Returns human-readable violations; an empty list means the
/// model is internally consistent.  Functions other than the declared role
/// functions are not checked here — whether they exist is a property of the
/// enforcer's registry, not of the model.
pub fn validate_model(model: &ModelDefinition) -> Vec<String> {
    let mut violations = Vec::new();

    let matcher = match parse_expr(model.matcher_src()) {
        Ok(ast) => Some(ast),
        Err(e) => {
            violations.push(format!("matcher: {e}"));
            None
        }
    };
    if let Some(ast) = &matcher {
        check_paths(ast, model, "matcher", true, &mut violations);
        check_role_calls(ast, model, "matcher", &mut violations);
    }

    match parse_effect(model.effect_src()) {
        Ok(effect) => {
            let mut terms = Vec::new();
            collect_conditions(&effect, &mut terms);
            for condition in terms {
                check_paths(condition, model, "effect condition", false, &mut violations);
                check_role_calls(condition, model, "effect condition", &mut violations);
            }
        }
        Err(e) => violations.push(format!("effect: {e}")),
    }

    violations
}

fn collect_conditions<'e>(effect: &'e crate::effect::EffectAst, out: &mut Vec<&'e ExprAst>) {
    use crate::effect::EffectAst;
    match effect {
        EffectAst::Term(t) => out.push(&t.condition),
        EffectAst::Not(inner) => collect_conditions(inner, out),
        EffectAst::And(l, r) | EffectAst::Or(l, r) => {
            collect_conditions(l, out);
            collect_conditions(r, out);
        }
    }
}

/// Checks that every `r.X` / `p.X` path head is declared.  Only the first
/// segment after the root is checked; deeper segments (`r.sub.role`) address
/// into request-supplied maps and are inherently dynamic.
fn check_paths(
    ast: &ExprAst,
    model: &ModelDefinition,
    location: &str,
    request_in_scope: bool,
    violations: &mut Vec<String>,
) {
    ast.for_each_node(&mut |node| {
        let ExprAst::AttrPath(segs) = node else { return };
        let (root, attr) = (segs[0].as_str(), segs.get(1));
        match root {
            "r" if request_in_scope => {
                if let Some(attr) = attr {
                    if !model.request_attrs.iter().any(|a| a == attr) {
                        violations.push(format!(
                            "{location} references undeclared request attribute `{attr}`"
                        ));
                    }
                }
            }
            "r" => violations.push(format!(
                "{location} references `{}`; only rule attributes (`p.*`) are in scope",
                segs.join(".")
            )),
            "p" => {
                if let Some(attr) = attr {
                    // `eft` is always bound on rules (defaulting to allow),
                    // declared or not.
                    if attr != "eft" && !model.policy_attrs.iter().any(|a| a == attr) {
                        violations.push(format!(
                            "{location} references undeclared policy attribute `{attr}`"
                        ));
                    }
                }
            }
            other => violations.push(format!(
                "{location} references unknown root `{other}` (expected `r` or `p`)"
            )),
        }
    });
}

fn check_role_calls(
    ast: &ExprAst,
    model: &ModelDefinition,
    location: &str,
    violations: &mut Vec<String>,
) {
    ast.for_each_node(&mut |node| {
        let ExprAst::Call { name, args } = node else { return };
        if let Some(arity) = model.role_defs.get(name) {
            if args.len() != *arity as usize {
                violations.push(format!(
                    "{location} calls `{name}` with {} arguments; the role definition declares {arity}",
                    args.len()
                ));
            }
        }
    });
}
