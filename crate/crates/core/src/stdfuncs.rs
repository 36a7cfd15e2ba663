//! Built-in stub functions: `key_match` and `regex_match`.
//!
//! Both are whole-string matchers.  `key_match` is the resource-path
//! wildcard (`*` matches any run of characters, including `/`); `regex_match`
//! evaluates a full regular expression, implicitly anchored.  Patterns here
//! come from policy files, so both run in time linear in |input|·|pattern| —
//! the wildcard match by construction, the regex by the engine's
//! no-backtracking dialect (alternation, classes, repetition; no
//! backreferences).

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use regex::Regex;

use crate::expr::{EvalError, FunctionRegistry, StubResult};
use crate::value::Value;

/// Wildcard match: `pattern` matches `key` when every literal character
/// lines up and each `*` absorbs any (possibly empty) run of characters.
/// The whole key must be covered — `/cache` does not match key `/cachex`.
pub fn key_match(key: &str, pattern: &str) -> bool {
    let (k, p) = (key.as_bytes(), pattern.as_bytes());
    let (mut ki, mut pi) = (0, 0);
    // Last `*` we can reopen, and the key position its match extends from.
    let mut star: Option<(usize, usize)> = None;

    while ki < k.len() {
        if pi < p.len() && p[pi] == b'*' {
            star = Some((pi, ki));
            pi += 1;
        } else if pi < p.len() && p[pi] == k[ki] {
            pi += 1;
            ki += 1;
        } else if let Some((star_pi, star_ki)) = star {
            // Extend the previous `*` by one more character and retry.
            pi = star_pi + 1;
            ki = star_ki + 1;
            star = Some((star_pi, star_ki + 1));
        } else {
            return false;
        }
    }
    while pi < p.len() && p[pi] == b'*' {
        pi += 1;
    }
    pi == p.len()
}

fn compiled(pattern: &str) -> Result<Regex, EvalError> {
    static CACHE: OnceLock<Mutex<HashMap<String, Regex>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));

    let mut cache = cache.lock().unwrap();
    if let Some(re) = cache.get(pattern) {
        return Ok(re.clone());
    }
    let re = Regex::new(&format!("^(?:{pattern})$")).map_err(|e| EvalError::Function {
        name: "regex_match".to_string(),
        message: format!("bad pattern `{pattern}`: {e}"),
    })?;
    // Patterns come from policies, which are few and stable; if something
    // generates unbounded novel patterns, start over rather than grow.
    if cache.len() >= 1024 {
        cache.clear();
    }
    cache.insert(pattern.to_string(), re.clone());
    Ok(re)
}

/// Anchored regular-expression match: the pattern is wrapped as `^(…)$`, so
/// `(use|manage)` matches exactly `use` or `manage` and nothing longer.
/// Invalid patterns are an evaluation error (and therefore a deny at
/// enforcement time), never a silent non-match.
pub fn regex_match(value: &str, pattern: &str) -> Result<bool, EvalError> {
    Ok(compiled(pattern)?.is_match(value))
}

fn two_strings<'v>(name: &str, args: &'v [Value]) -> Result<(&'v str, &'v str), EvalError> {
    match args {
        [Value::Str(a), Value::Str(b)] => Ok((a, b)),
        [_, _] => Err(EvalError::Function {
            name: name.to_string(),
            message: format!(
                "expected two strings, got ({}, {})",
                args[0].type_name(),
                args[1].type_name()
            ),
        }),
        _ => Err(EvalError::Function {
            name: name.to_string(),
            message: format!("expected 2 arguments, got {}", args.len()),
        }),
    }
}

/// Registry pre-loaded with the built-ins; enforcers start from this.
pub fn default_registry() -> FunctionRegistry {
    let mut funcs = FunctionRegistry::new();
    funcs
        .register("key_match", |args: &[Value]| -> StubResult {
            let (key, pattern) = two_strings("key_match", args)?;
            Ok(Value::Bool(key_match(key, pattern)))
        })
        .expect("fresh registry");
    funcs
        .register("regex_match", |args: &[Value]| -> StubResult {
            let (value, pattern) = two_strings("regex_match", args)?;
            Ok(Value::Bool(regex_match(value, pattern)?))
        })
        .expect("fresh registry");
    funcs
}
