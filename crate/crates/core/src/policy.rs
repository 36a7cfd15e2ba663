//! Policy storage and the CSV policy format.
//!
//! One rule per line, first token is the key:
//!
//! ```text
//! p, user, /cache/l*/*, GET
//! g, root, user
//! g, admin, root
//! ```
//!
//! Tokens are comma-separated with surrounding whitespace trimmed; `#`
//! starts a comment.  Tokens containing commas, quotes, `#`, line-significant
//! whitespace, or nothing at all are double-quoted, with embedded quotes
//! doubled (`"te""am"`).  Rule order is preserved — `rule_index` feeds
//! max/min tie-breaking — and exact duplicates are silently dropped.

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::model::ModelDefinition;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("rule `{key}` has {found} values, expected {expected}")]
    ArityMismatch { key: String, expected: usize, found: usize },
    #[error("unknown rule key `{key}`")]
    UnknownKey { key: String },
    #[error("eft value `{value}` is not `allow` or `deny`")]
    BadEft { value: String },
    #[error("{message}")]
    BadCsv { message: String },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<PolicyError>,
    },
}

impl PolicyError {
    fn at(self, line: usize) -> PolicyError {
        PolicyError::AtLine { line, source: Box::new(self) }
    }
}

/// A `p` rule: ordered values positionally bound to the model's policy
/// attributes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyRule {
    pub key: String,
    pub values: Vec<String>,
}

/// A `g`/`g2`/… line: member inherits role, optionally within a tenant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoleLink {
    pub key: String,
    pub member: String,
    pub role: String,
    pub tenant: Option<String>,
}

/// In-memory policy store: ordered rules, ordered role links, and a revision
/// counter that increments on every effective mutation.
#[derive(Clone, Debug, Default)]
pub struct PolicyStore {
    rules: Vec<PolicyRule>,
    links: Vec<RoleLink>,
    revision: u64,
}

/// Stores are equal when they hold the same rules and links in the same
/// order; the revision counter is bookkeeping, not content.
impl PartialEq for PolicyStore {
    fn eq(&self, other: &Self) -> bool {
        self.rules == other.rules && self.links == other.links
    }
}

impl PolicyStore {
    pub fn new() -> Self {
        PolicyStore::default()
    }

    pub fn rules(&self) -> &[PolicyRule] {
        &self.rules
    }

    pub fn links(&self) -> &[RoleLink] {
        &self.links
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    /// Adds a rule or role link; returns whether the store changed.
    /// Duplicates are ignored without bumping the revision.
    pub fn add_rule(
        &mut self,
        key: &str,
        values: &[String],
        model: &ModelDefinition,
    ) -> Result<bool, PolicyError> {
        let entry = check_entry(key, values, model)?;
        Ok(self.insert(entry))
    }

    /// Removes an exact rule or role link; returns whether anything was
    /// removed.
    pub fn remove_rule(
        &mut self,
        key: &str,
        values: &[String],
        model: &ModelDefinition,
    ) -> Result<bool, PolicyError> {
        let entry = check_entry(key, values, model)?;
        let changed = match entry {
            Entry::Rule(rule) => {
                let before = self.rules.len();
                self.rules.retain(|r| r != &rule);
                self.rules.len() != before
            }
            Entry::Link(link) => {
                let before = self.links.len();
                self.links.retain(|l| l != &link);
                self.links.len() != before
            }
        };
        if changed {
            self.revision += 1;
        }
        Ok(changed)
    }

    fn insert(&mut self, entry: Entry) -> bool {
        let changed = match entry {
            Entry::Rule(rule) => {
                if self.rules.contains(&rule) {
                    false
                } else {
                    self.rules.push(rule);
                    true
                }
            }
            Entry::Link(link) => {
                if self.links.contains(&link) {
                    false
                } else {
                    self.links.push(link);
                    true
                }
            }
        };
        if changed {
            self.revision += 1;
        }
        changed
    }
}

enum Entry {
    Rule(PolicyRule),
    Link(RoleLink),
}

/// Validates a (key, values) pair against the model and classifies it.
fn check_entry(key: &str, values: &[String], model: &ModelDefinition) -> Result<Entry, PolicyError> {
    for v in values {
        if v.contains('\n') || v.contains('\r') {
            return Err(PolicyError::BadCsv {
                message: "rule values must not contain line breaks".to_string(),
            });
        }
    }
    if key == "p" {
        let expected = model.policy_attrs().len();
        if values.len() != expected {
            return Err(PolicyError::ArityMismatch {
                key: key.to_string(),
                expected,
                found: values.len(),
            });
        }
        if let Some(i) = model.eft_index() {
            if crate::effect::Eft::parse(&values[i]).is_none() {
                return Err(PolicyError::BadEft { value: values[i].clone() });
            }
        }
        return Ok(Entry::Rule(PolicyRule { key: key.to_string(), values: values.to_vec() }));
    }
    if let Some(arity) = model.role_defs().get(key) {
        let expected = *arity as usize;
        if values.len() != expected {
            return Err(PolicyError::ArityMismatch {
                key: key.to_string(),
                expected,
                found: values.len(),
            });
        }
        if values.iter().any(|v| v.is_empty()) {
            return Err(PolicyError::BadCsv {
                message: format!("role link `{key}` values must be non-empty"),
            });
        }
        return Ok(Entry::Link(RoleLink {
            key: key.to_string(),
            member: values[0].clone(),
            role: values[1].clone(),
            tenant: values.get(2).cloned(),
        }));
    }
    Err(PolicyError::UnknownKey { key: key.to_string() })
}

/// Splits one policy line into tokens.  Returns `None` for blank/comment
/// lines.  Unquoted `#` starts a comment; a quoted token keeps `,`, `#`, and
/// doubled quotes literally.
fn tokenize_line(line: &str) -> Result<Option<Vec<String>>, PolicyError> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().peekable();

    'token: loop {
        // Skip leading whitespace of the next token.
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        match chars.peek() {
            None | Some('#') => {
                // End of line: a trailing comma has already pushed its token,
                // so a missing final token means an empty unquoted one.
                if !tokens.is_empty() {
                    tokens.push(String::new());
                }
                break;
            }
            Some('"') => {
                chars.next();
                let mut token = String::new();
                loop {
                    match chars.next() {
                        None => {
                            return Err(PolicyError::BadCsv {
                                message: "unterminated quoted token".to_string(),
                            })
                        }
                        Some('"') => {
                            if chars.peek() == Some(&'"') {
                                chars.next();
                                token.push('"');
                            } else {
                                break;
                            }
                        }
                        Some(c) => token.push(c),
                    }
                }
                tokens.push(token);
                // Only whitespace may follow before the comma/end.
                loop {
                    match chars.next() {
                        None => break 'token,
                        Some(',') => continue 'token,
                        Some('#') => {
                            for _ in chars.by_ref() {}
                            break 'token;
                        }
                        Some(c) if c.is_whitespace() => {}
                        Some(c) => {
                            return Err(PolicyError::BadCsv {
                                message: format!("unexpected `{c}` after quoted token"),
                            })
                        }
                    }
                }
            }
            Some(_) => {
                let mut token = String::new();
                loop {
                    match chars.peek() {
                        None => {
                            tokens.push(token.trim_end().to_string());
                            break 'token;
                        }
                        Some(',') => {
                            chars.next();
                            tokens.push(token.trim_end().to_string());
                            continue 'token;
                        }
                        Some('#') => {
                            tokens.push(token.trim_end().to_string());
                            for _ in chars.by_ref() {}
                            break 'token;
                        }
                        Some(_) => token.push(chars.next().unwrap()),
                    }
                }
            }
        }
    }

    if tokens.is_empty() || (tokens.len() == 1 && tokens[0].is_empty()) {
        return Ok(None);
    }
    Ok(Some(tokens))
}

/// Parses policy CSV text against a model.
pub fn parse_policy(text: &str, model: &ModelDefinition) -> Result<PolicyStore, PolicyError> {
    let mut store = PolicyStore::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let Some(tokens) = tokenize_line(raw).map_err(|e| e.at(line))? else { continue };
        let entry = check_entry(&tokens[0], &tokens[1..], model).map_err(|e| e.at(line))?;
        store.insert(entry);
    }
    store.revision = 0;
    Ok(store)
}

/// Collects every violation in the text instead of stopping at the first;
/// used by `validate`-style tooling.
pub fn lint_policy(text: &str, model: &ModelDefinition) -> Vec<String> {
    let mut problems = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        match tokenize_line(raw) {
            Err(e) => problems.push(e.at(line).to_string()),
            Ok(None) => {}
            Ok(Some(tokens)) => {
                if let Err(e) = check_entry(&tokens[0], &tokens[1..], model) {
                    problems.push(e.at(line).to_string());
                }
            }
        }
    }
    problems
}

fn write_token(out: &mut String, token: &str) {
    let needs_quoting = token.is_empty()
        || token.contains(',')
        || token.contains('"')
        || token.contains('#')
        || token.trim() != token;
    if needs_quoting {
        out.push('"');
        for c in token.chars() {
            if c == '"' {
                out.push('"');
            }
            out.push(c);
        }
        out.push('"');
    } else {
        out.push_str(token);
    }
}

fn write_line(out: &mut String, key: &str, values: impl Iterator<Item = impl AsRef<str>>) {
    out.push_str(key);
    for v in values {
        out.push_str(", ");
        write_token(out, v.as_ref());
    }
    out.push('\n');
}

/// Renders the store as canonical policy text: p-rules first, then role
/// links, in stored order.  `parse_policy` maps the output back to an equal
/// store.
pub fn save_policy(store: &PolicyStore) -> String {
    let mut out = String::new();
    for rule in &store.rules {
        write_line(&mut out, &rule.key, rule.values.iter());
    }
    for link in &store.links {
        let values = [Some(&link.member), Some(&link.role), link.tenant.as_ref()];
        write_line(&mut out, &link.key, values.into_iter().flatten());
    }
    out
}

/// Pluggable persistence for policy text.  The store itself stays in memory;
/// adapters only move canonical text in and out of a backend.
pub trait PolicyAdapter: Send + Sync {
    fn load(&self) -> io::Result<String>;
    fn save(&self, text: &str) -> io::Result<()>;
}

/// Adapter backed by a single file on disk.
pub struct FileAdapter {
    path: PathBuf,
}

impl FileAdapter {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        FileAdapter { path: path.into() }
    }
}

impl PolicyAdapter for FileAdapter {
    fn load(&self) -> io::Result<String> {
        std::fs::read_to_string(&self.path)
    }

    fn save(&self, text: &str) -> io::Result<()> {
        std::fs::write(&self.path, text)
    }
}
