//! The enforcer: load a model, load a policy, evaluate requests.
//!
//! Construction is two-phase.  [`load_model`] parses the model and compiles
//! its matcher and effect, returning an [`EnforcerBuilder`]; custom stub
//! functions register there.  [`EnforcerBuilder::load_policy`] then seals the
//! function registry and yields an [`Enforcer`] — after that the set of
//! callable functions can never change, only policies and role links can.
//!
//! Evaluation is fail-closed: any error while a matcher or effect condition
//! runs (missing attribute, type error, step exhaustion, bad regex, …)
//! produces `allowed: false` with the error attached, never a grant and
//! never a skipped rule.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::effect::{
    explain_effects, merge_effects, parse_effect, Decision, EffectAst, EffectParseError, Eft,
    MatchedRule, TermTrace,
};
use crate::expr::{
    eval_in_scope, parse_expr, EvalError, ExprAst, FunctionRegistry, Interpreter, ParseError,
    RegistryError, Scope, StubResult,
};
use crate::model::{parse_model, ModelDefinition, ModelError};
use crate::policy::{parse_policy, save_policy, PolicyError, PolicyRule, PolicyStore};
use crate::rbac::{RbacError, RoleGraph};
use crate::stdfuncs::default_registry;
use crate::value::Value;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum LoadError {
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("matcher: {0}")]
    Matcher(ParseError),
    #[error("effect: {0}")]
    Effect(#[from] EffectParseError),
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Rbac(#[from] RbacError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EnforceError {
    #[error("request has {found} values; the model declares {expected} request attributes")]
    ArityMismatch { expected: usize, found: usize },
}

/// Parses model text and compiles its expressions; the returned builder
/// accepts custom function registrations before the policy is loaded.
pub fn load_model(text: &str) -> Result<EnforcerBuilder, LoadError> {
    let model = parse_model(text)?;
    let matcher_ast = parse_expr(model.matcher_src()).map_err(LoadError::Matcher)?;
    let effect_ast = parse_effect(model.effect_src())?;

    let mut registry = default_registry();
    let mut roles = BTreeMap::new();
    for (key, arity) in model.role_defs() {
        let graph = Arc::new(RwLock::new(RoleGraph::new()));
        roles.insert(key.clone(), Arc::clone(&graph));
        register_role_fn(&mut registry, key, *arity, graph)?;
    }

    Ok(EnforcerBuilder { model, matcher_ast, effect_ast, registry, roles })
}

/// Binds a `g`-style stub function to its role graph: arity 2 queries the
/// global scope, arity 3 the named tenant's scope.
fn register_role_fn(
    registry: &mut FunctionRegistry,
    key: &str,
    arity: u8,
    graph: Arc<RwLock<RoleGraph>>,
) -> Result<(), RegistryError> {
    fn strings<'v>(name: &str, args: &'v [Value], arity: u8) -> Result<Vec<&'v str>, EvalError> {
        if args.len() != arity as usize {
            return Err(EvalError::Function {
                name: name.to_string(),
                message: format!("expected {arity} arguments, got {}", args.len()),
            });
        }
        args.iter()
            .map(|a| {
                a.as_str().ok_or_else(|| EvalError::Function {
                    name: name.to_string(),
                    message: format!("expected string arguments, got {}", a.type_name()),
                })
            })
            .collect()
    }

    let name = key.to_string();
    if arity == 2 {
        registry.register(key, move |args: &[Value]| -> StubResult {
            let a = strings(&name, args, 2)?;
            Ok(Value::Bool(graph.read().unwrap().has_role(a[0], a[1])))
        })
    } else {
        registry.register(key, move |args: &[Value]| -> StubResult {
            let a = strings(&name, args, 3)?;
            Ok(Value::Bool(graph.read().unwrap().has_tenant_role(a[0], a[1], a[2])))
        })
    }
}

/// An enforcer with its model loaded but no policy yet.  The window where
/// the function registry is still open.
pub struct EnforcerBuilder {
    model: ModelDefinition,
    matcher_ast: ExprAst,
    effect_ast: EffectAst,
    registry: FunctionRegistry,
    roles: BTreeMap<String, Arc<RwLock<RoleGraph>>>,
}

impl EnforcerBuilder {
    pub fn model(&self) -> &ModelDefinition {
        &self.model
    }

    /// Registers a custom stub function callable from the matcher.
    pub fn register_function<F>(&mut self, name: &str, f: F) -> Result<(), RegistryError>
    where
        F: Fn(&[Value]) -> StubResult + Send + Sync + 'static,
    {
        self.registry.register(name, f)
    }

    /// Registers a stub function that may re-enter the interpreter; see
    /// [`FunctionRegistry::register_with_interpreter`].
    pub fn register_function_with_interpreter<F>(
        &mut self,
        name: &str,
        f: F,
    ) -> Result<(), RegistryError>
    where
        F: Fn(&mut Interpreter<'_>, &[Value]) -> StubResult + Send + Sync + 'static,
    {
        self.registry.register_with_interpreter(name, f)
    }

    /// Sets the per-evaluation step budget (default 10,000).
    pub fn set_step_budget(&mut self, budget: u64) {
        self.registry.set_step_budget(budget);
    }

    /// Loads policy text, seals the registry, and produces a ready enforcer.
    pub fn load_policy(mut self, text: &str) -> Result<Enforcer, LoadError> {
        let store = parse_policy(text, &self.model)?;
        for link in store.links() {
            let graph = self.roles.get(&link.key).expect("link keys validated against role defs");
            graph.write().unwrap().add_role_link(&link.member, &link.role, link.tenant.as_deref())?;
        }
        self.registry.seal();
        let rule_cache = store.rules().iter().map(|r| cache_entry(&self.model, r)).collect();
        Ok(Enforcer {
            model: self.model,
            matcher_ast: self.matcher_ast,
            effect_ast: self.effect_ast,
            registry: self.registry,
            store,
            roles: self.roles,
            rule_cache,
        })
    }
}

/// Pre-bound `p` attribute map for one rule, shared with every decision that
/// matches it.
fn cache_entry(model: &ModelDefinition, rule: &PolicyRule) -> (Arc<Value>, Eft) {
    let mut map: BTreeMap<String, Value> = model
        .policy_attrs()
        .iter()
        .zip(&rule.values)
        .map(|(attr, value)| (attr.clone(), Value::str(value)))
        .collect();
    let eft = match map.get("eft").and_then(Value::as_str) {
        Some(s) => Eft::parse(s).expect("eft values validated at policy parse"),
        None => Eft::Allow,
    };
    map.insert("eft".to_string(), Value::str(eft.as_str()));
    (Arc::new(Value::Map(map)), eft)
}

/// Root bindings during matcher evaluation: the request as `r`, one rule's
/// attributes as `p`.
struct RequestScope<'a> {
    r: &'a Value,
    p: &'a Value,
}

impl Scope for RequestScope<'_> {
    fn root(&self, name: &str) -> Option<&Value> {
        match name {
            "r" => Some(self.r),
            "p" => Some(self.p),
            _ => None,
        }
    }
}

/// Matcher outcome for one rule, as recorded by [`Enforcer::enforce_explain`].
#[derive(Clone, Debug, PartialEq)]
pub struct RuleTrace {
    pub rule_index: usize,
    pub outcome: Result<bool, EvalError>,
}

/// Full evaluation trace: every rule's matcher outcome, then every effect
/// term's value (terms are empty when a matcher error short-circuited the
/// decision).
#[derive(Clone, Debug, PartialEq)]
pub struct EnforceTrace {
    pub rules: Vec<RuleTrace>,
    pub terms: Vec<TermTrace>,
}

/// A ready policy engine: immutable model and expressions, mutable policy
/// store and role graphs.
///
/// `enforce` takes `&self`, mutations take `&mut self`, so a single
/// enforcement always observes one consistent policy revision; services
/// wanting concurrent readers put the enforcer behind an `RwLock`.
pub struct Enforcer {
    model: ModelDefinition,
    matcher_ast: ExprAst,
    effect_ast: EffectAst,
    registry: FunctionRegistry,
    store: PolicyStore,
    roles: BTreeMap<String, Arc<RwLock<RoleGraph>>>,
    rule_cache: Vec<(Arc<Value>, Eft)>,
}

impl Enforcer {
    pub fn model(&self) -> &ModelDefinition {
        &self.model
    }

    pub fn registry(&self) -> &FunctionRegistry {
        &self.registry
    }

    pub fn store(&self) -> &PolicyStore {
        &self.store
    }

    /// Current policy revision; bumped by every effective mutation.
    pub fn revision(&self) -> u64 {
        self.store.revision()
    }

    /// Canonical policy text for the current store.
    pub fn policy_text(&self) -> String {
        save_policy(&self.store)
    }

    /// Number of nodes in the compiled matcher, a rough complexity measure.
    pub fn matcher_complexity(&self) -> usize {
        self.matcher_ast.node_count()
    }

    fn bind_request(&self, request: &[Value]) -> Result<Value, EnforceError> {
        let attrs = self.model.request_attrs();
        if request.len() != attrs.len() {
            return Err(EnforceError::ArityMismatch {
                expected: attrs.len(),
                found: request.len(),
            });
        }
        let map: BTreeMap<String, Value> =
            attrs.iter().cloned().zip(request.iter().cloned()).collect();
        Ok(Value::Map(map))
    }

    fn eval_rule(&self, r: &Value, rule_index: usize) -> Result<bool, EvalError> {
        let (bindings, _) = &self.rule_cache[rule_index];
        let scope = RequestScope { r, p: bindings };
        match eval_in_scope(&self.matcher_ast, &scope, &self.registry)? {
            Value::Bool(b) => Ok(b),
            other => Err(EvalError::TypeError {
                message: format!("matcher evaluated to {}, expected a boolean", other.type_name()),
            }),
        }
    }

    /// Decides one request.  `Err` is reserved for calling-contract
    /// violations (wrong arity); evaluation problems come back inside the
    /// Decision as a fail-closed deny.
    pub fn enforce(&self, request: &[Value]) -> Result<Decision, EnforceError> {
        let r = self.bind_request(request)?;
        let mut matched = Vec::new();
        for i in 0..self.rule_cache.len() {
            match self.eval_rule(&r, i) {
                Ok(true) => {
                    let (bindings, eft) = &self.rule_cache[i];
                    matched.push(MatchedRule {
                        rule_index: i,
                        bindings: Arc::clone(bindings),
                        eft: *eft,
                    });
                }
                Ok(false) => {}
                Err(e) => return Ok(Decision::deny_on_error(Some(i), e)),
            }
        }
        match merge_effects(&self.effect_ast, &matched, &self.registry) {
            Ok(decision) => Ok(decision),
            Err(e) => {
                let (rule_index, error) = e.into_failure();
                Ok(Decision::deny_on_error(rule_index, error))
            }
        }
    }

    /// As [`enforce`](Self::enforce), plus a per-rule and per-term trace.
    /// Every rule is evaluated even after an error, so the trace pinpoints
    /// all failures; the decision is identical to `enforce`'s.
    pub fn enforce_explain(&self, request: &[Value]) -> Result<(Decision, EnforceTrace), EnforceError> {
        let r = self.bind_request(request)?;
        let mut rules = Vec::with_capacity(self.rule_cache.len());
        let mut matched = Vec::new();
        let mut first_error: Option<(usize, EvalError)> = None;

        for i in 0..self.rule_cache.len() {
            let outcome = self.eval_rule(&r, i);
            match &outcome {
                Ok(true) => {
                    let (bindings, eft) = &self.rule_cache[i];
                    matched.push(MatchedRule {
                        rule_index: i,
                        bindings: Arc::clone(bindings),
                        eft: *eft,
                    });
                }
                Ok(false) => {}
                Err(e) => {
                    if first_error.is_none() {
                        first_error = Some((i, e.clone()));
                    }
                }
            }
            rules.push(RuleTrace { rule_index: i, outcome });
        }

        if let Some((i, e)) = first_error {
            let trace = EnforceTrace { rules, terms: Vec::new() };
            return Ok((Decision::deny_on_error(Some(i), e), trace));
        }

        match explain_effects(&self.effect_ast, &matched, &self.registry) {
            Ok((allowed, terms)) => {
                let mut indices: Vec<usize> = matched.iter().map(|m| m.rule_index).collect();
                indices.sort_unstable();
                let decision = Decision { allowed, matched: indices, error: None };
                Ok((decision, EnforceTrace { rules, terms }))
            }
            Err(e) => {
                let (rule_index, error) = e.into_failure();
                let trace = EnforceTrace { rules, terms: Vec::new() };
                Ok((Decision::deny_on_error(rule_index, error), trace))
            }
        }
    }

    /// Adds a `p` rule; returns whether the store changed.
    pub fn add_policy(&mut self, values: &[String]) -> Result<bool, PolicyError> {
        let changed = self.store.add_rule("p", values, &self.model)?;
        if changed {
            let rule = self.store.rules().last().expect("just added");
            self.rule_cache.push(cache_entry(&self.model, rule));
        }
        Ok(changed)
    }

    /// Removes an exact `p` rule; returns whether the store changed.
    pub fn remove_policy(&mut self, values: &[String]) -> Result<bool, PolicyError> {
        let changed = self.store.remove_rule("p", values, &self.model)?;
        if changed {
            // Indices shifted; rebuild the per-rule cache.
            self.rule_cache =
                self.store.rules().iter().map(|r| cache_entry(&self.model, r)).collect();
        }
        Ok(changed)
    }

    /// Adds a role link under role-function `key` (tenant required iff the
    /// definition is arity 3); returns whether anything changed.
    pub fn add_role_link(
        &mut self,
        key: &str,
        member: &str,
        role: &str,
        tenant: Option<&str>,
    ) -> Result<bool, LoadError> {
        if member == role {
            return Err(RbacError::SelfLoop(member.to_string()).into());
        }
        let values = link_values(member, role, tenant);
        let changed = self.store.add_rule(key, &values, &self.model).map_err(LoadError::Policy)?;
        if changed {
            let graph = self.roles.get(key).expect("key validated by the store");
            graph
                .write()
                .unwrap()
                .add_role_link(member, role, tenant)
                .expect("self-loop pre-checked");
        }
        Ok(changed)
    }

    /// Removes a role link; returns whether anything changed.
    pub fn remove_role_link(
        &mut self,
        key: &str,
        member: &str,
        role: &str,
        tenant: Option<&str>,
    ) -> Result<bool, PolicyError> {
        let values = link_values(member, role, tenant);
        let changed = self.store.remove_rule(key, &values, &self.model)?;
        if changed {
            let graph = self.roles.get(key).expect("key validated by the store");
            graph.write().unwrap().remove_role_link(member, role, tenant);
        }
        Ok(changed)
    }
}

fn link_values(member: &str, role: &str, tenant: Option<&str>) -> Vec<String> {
    let mut values = vec![member.to_string(), role.to_string()];
    if let Some(t) = tenant {
        values.push(t.to_string());
    }
    values
}
