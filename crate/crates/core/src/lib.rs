//! PML policy engine: PERM models, policy storage, sandboxed matcher
//! evaluation, effect combination, and role graphs.

pub mod bench;
pub mod effect;
pub mod enforcer;
pub mod expr;
pub mod model;
pub mod policy;
pub mod rbac;
pub mod stdfuncs;
pub mod value;

pub use effect::{
    explain_effects, merge_effects, parse_effect, Decision, EffectAst, EffectParseError,
    EffectTerm, Eft, EnforceFailure, MatchedRule, MergeError, Quantifier, TermTrace,
};
pub use enforcer::{
    load_model, EnforceError, EnforceTrace, Enforcer, EnforcerBuilder, LoadError, RuleTrace,
};
pub use expr::{
    eval_expr, parse_expr, values_equal, EvalError, ExprAst, FunctionRegistry, Interpreter,
    ParseError, RegistryError, Scope, StubResult, DEFAULT_STEP_BUDGET,
};
pub use model::{parse_model, validate_model, ModelDefinition, ModelError};
pub use policy::{
    lint_policy, parse_policy, save_policy, FileAdapter, PolicyAdapter, PolicyError, PolicyRule,
    PolicyStore, RoleLink,
};
pub use rbac::{RbacError, RoleGraph};
pub use stdfuncs::{default_registry, key_match, regex_match};
pub use value::{Value, ValueError, MAX_VALUE_DEPTH};
