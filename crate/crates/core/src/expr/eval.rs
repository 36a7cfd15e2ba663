//! Sandboxed expression interpreter.
//!
//! Evaluation is strict about types (no implicit coercions), short-circuits
//! `&&` and `||`, and charges one step per AST node visited plus one per stub
//! function invocation.  When the step budget runs out the evaluation stops
//! with [`EvalError::StepLimitExceeded`] — stub functions that re-enter the
//! interpreter share the same counter, so recursion cannot escape the budget.
//!
//! The interpreter has no access to the filesystem, network, clock, or
//! environment: the only way a matcher can compute anything is through its
//! bindings and the functions explicitly registered before the registry was
//! sealed.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use super::lexer::is_identifier;
use super::{BinaryOp, ExprAst, UnaryOp};
use crate::value::Value;

/// Default number of interpreter steps allowed per evaluation.
pub const DEFAULT_STEP_BUDGET: u64 = 10_000;

/// Nested evaluations (stub functions re-entering the interpreter) deeper
/// than this are cut off even if steps remain, so the native stack is safe.
/// The failure is reported as step exhaustion: depth and steps are the same
/// resource bound, spent at different rates.
const EVAL_DEPTH_LIMIT: usize = 512;

/// Errors raised during expression evaluation.  Enforcement treats every one
/// of these as a denial (fail closed); they are surfaced for diagnostics.
#[derive(Clone, Debug, Error, PartialEq)]
pub enum EvalError {
    /// An attribute path could not be resolved; `path` is the longest prefix
    /// that failed, e.g. `r.sub.role` when `r.sub` is not a map.
    #[error("missing attribute `{path}`")]
    MissingAttribute { path: String },
    #[error("type error: {message}")]
    TypeError { message: String },
    #[error("unknown function `{name}`")]
    UnknownFunction { name: String },
    #[error("step limit exceeded (budget {budget})")]
    StepLimitExceeded { budget: u64 },
    #[error("division by zero")]
    DivisionByZero,
    /// A registered stub function reported a failure of its own.
    #[error("function `{name}`: {message}")]
    Function { name: String, message: String },
}

/// Result type returned by registered stub functions.
pub type StubResult = Result<Value, EvalError>;

type StubFn = dyn Fn(&mut Interpreter<'_>, &[Value]) -> StubResult + Send + Sync;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("function `{0}` is already registered")]
    DuplicateFunction(String),
    #[error("registry is sealed; functions must be registered before policies load")]
    Sealed,
    #[error("`{0}` is not a valid function name")]
    InvalidName(String),
}

/// Closed table of the stub functions a matcher may call.
///
/// The registry is the entire extension surface of the interpreter.  Sealing
/// it (which happens when an enforcer finishes loading) freezes the set, so
/// the functions reachable from a matcher are exactly those wired up during
/// construction — nothing can be injected by policy or request data.
#[derive(Clone)]
pub struct FunctionRegistry {
    funcs: BTreeMap<String, Arc<StubFn>>,
    step_budget: u64,
    sealed: bool,
}

impl Default for FunctionRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl FunctionRegistry {
    pub fn new() -> Self {
        FunctionRegistry { funcs: BTreeMap::new(), step_budget: DEFAULT_STEP_BUDGET, sealed: false }
    }

    /// Registers a plain function of evaluated arguments.
    pub fn register<F>(&mut self, name: &str, f: F) -> Result<(), RegistryError>
    where
        F: Fn(&[Value]) -> StubResult + Send + Sync + 'static,
    {
        self.register_with_interpreter(name, move |_, args| f(args))
    }

    /// Registers a function that may re-enter the interpreter (e.g. to
    /// evaluate a sub-expression).  Re-entrant evaluation draws from the
    /// same step budget as the calling matcher.
    pub fn register_with_interpreter<F>(&mut self, name: &str, f: F) -> Result<(), RegistryError>
    where
        F: Fn(&mut Interpreter<'_>, &[Value]) -> StubResult + Send + Sync + 'static,
    {
        if self.sealed {
            return Err(RegistryError::Sealed);
        }
        if !is_identifier(name) {
            return Err(RegistryError::InvalidName(name.to_string()));
        }
        if self.funcs.contains_key(name) {
            return Err(RegistryError::DuplicateFunction(name.to_string()));
        }
        self.funcs.insert(name.to_string(), Arc::new(f));
        Ok(())
    }

    /// Freezes the function table; further registrations fail.
    pub fn seal(&mut self) {
        self.sealed = true;
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn contains(&self, name: &str) -> bool {
        self.funcs.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.funcs.keys().map(String::as_str)
    }

    /// Sets the per-evaluation step budget (clamped to at least 1).
    pub fn set_step_budget(&mut self, budget: u64) {
        self.step_budget = budget.max(1);
    }

    pub fn step_budget(&self) -> u64 {
        self.step_budget
    }

    fn get(&self, name: &str) -> Option<&Arc<StubFn>> {
        self.funcs.get(name)
    }
}

impl std::fmt::Debug for FunctionRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunctionRegistry")
            .field("functions", &self.funcs.keys().collect::<Vec<_>>())
            .field("step_budget", &self.step_budget)
            .field("sealed", &self.sealed)
            .finish()
    }
}

/// Source of root bindings (`r`, `p`, …) during evaluation.
pub trait Scope {
    fn root(&self, name: &str) -> Option<&Value>;
}

impl Scope for BTreeMap<String, Value> {
    fn root(&self, name: &str) -> Option<&Value> {
        self.get(name)
    }
}

/// Evaluates `ast` against a map of root bindings.
pub fn eval_expr(
    ast: &ExprAst,
    bindings: &BTreeMap<String, Value>,
    funcs: &FunctionRegistry,
) -> Result<Value, EvalError> {
    eval_in_scope(ast, bindings, funcs)
}

pub(crate) fn eval_in_scope(
    ast: &ExprAst,
    scope: &dyn Scope,
    funcs: &FunctionRegistry,
) -> Result<Value, EvalError> {
    let mut itp = Interpreter { registry: funcs, scope, steps: 0, budget: funcs.step_budget(), depth: 0 };
    itp.eval(ast)
}

/// Evaluation result that borrows from the AST or scope when possible, so
/// comparisons like `r.obj == p.obj` never clone the operands.
enum Ev<'t> {
    Ref(&'t Value),
    Owned(Value),
}

impl<'t> Ev<'t> {
    fn get(&self) -> &Value {
        match self {
            Ev::Ref(v) => v,
            Ev::Owned(v) => v,
        }
    }

    fn into_owned(self) -> Value {
        match self {
            Ev::Ref(v) => v.clone(),
            Ev::Owned(v) => v,
        }
    }
}

/// One in-flight evaluation: AST walker plus the step/depth accounting that
/// bounds it.  Stub functions receive `&mut Interpreter` so anything they
/// evaluate is charged to the same budget.
pub struct Interpreter<'a> {
    registry: &'a FunctionRegistry,
    scope: &'a dyn Scope,
    steps: u64,
    budget: u64,
    depth: usize,
}

impl<'a> Interpreter<'a> {
    /// Evaluates an expression tree within this interpreter's budget.
    pub fn eval(&mut self, ast: &ExprAst) -> Result<Value, EvalError> {
        Ok(self.node(ast)?.into_owned())
    }

    /// Steps consumed so far in this evaluation.
    pub fn steps_used(&self) -> u64 {
        self.steps
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    fn out_of_steps(&self) -> EvalError {
        EvalError::StepLimitExceeded { budget: self.budget }
    }

    fn node<'t>(&mut self, ast: &'t ExprAst) -> Result<Ev<'t>, EvalError>
    where
        'a: 't,
    {
        self.steps += 1;
        if self.steps > self.budget {
            return Err(self.out_of_steps());
        }
        self.depth += 1;
        if self.depth > EVAL_DEPTH_LIMIT {
            self.depth -= 1;
            return Err(self.out_of_steps());
        }
        let out = self.node_inner(ast);
        self.depth -= 1;
        out
    }

    fn node_inner<'t>(&mut self, ast: &'t ExprAst) -> Result<Ev<'t>, EvalError>
    where
        'a: 't,
    {
        match ast {
            ExprAst::Literal(v) => Ok(Ev::Ref(v)),
            ExprAst::AttrPath(segs) => Ok(Ev::Ref(self.resolve(segs)?)),
            ExprAst::Unary { op, operand } => {
                let v = self.node(operand)?;
                match op {
                    UnaryOp::Not => Ok(Ev::Owned(Value::Bool(!bool_of(v.get(), "`!`")?))),
                    UnaryOp::Neg => Ok(Ev::Owned(Value::Num(-num_of(v.get(), "`-`")?))),
                }
            }
            ExprAst::Binary { op: BinaryOp::And, left, right } => {
                let l = self.node(left)?;
                if !bool_of(l.get(), "`&&`")? {
                    return Ok(Ev::Owned(Value::Bool(false)));
                }
                let r = self.node(right)?;
                Ok(Ev::Owned(Value::Bool(bool_of(r.get(), "`&&`")?)))
            }
            ExprAst::Binary { op: BinaryOp::Or, left, right } => {
                let l = self.node(left)?;
                if bool_of(l.get(), "`||`")? {
                    return Ok(Ev::Owned(Value::Bool(true)));
                }
                let r = self.node(right)?;
                Ok(Ev::Owned(Value::Bool(bool_of(r.get(), "`||`")?)))
            }
            ExprAst::Binary { op, left, right } => {
                let l = self.node(left)?;
                let r = self.node(right)?;
                binary_op(*op, l.get(), r.get()).map(Ev::Owned)
            }
            ExprAst::Call { name, args } => {
                let Some(f) = self.registry.get(name) else {
                    return Err(EvalError::UnknownFunction { name: name.clone() });
                };
                let f = Arc::clone(f);
                let mut argv = Vec::with_capacity(args.len());
                for arg in args {
                    argv.push(self.node(arg)?.into_owned());
                }
                // The invocation itself costs a step, on top of its nodes.
                self.steps += 1;
                if self.steps > self.budget {
                    return Err(self.out_of_steps());
                }
                f(self, &argv).map(Ev::Owned)
            }
        }
    }

    fn resolve<'t>(&mut self, segs: &'t [String]) -> Result<&'t Value, EvalError>
    where
        'a: 't,
    {
        let mut cur = self
            .scope
            .root(&segs[0])
            .ok_or_else(|| EvalError::MissingAttribute { path: segs[0].clone() })?;
        for i in 1..segs.len() {
            let next = match cur {
                Value::Map(m) => m.get(&segs[i]),
                _ => None,
            };
            cur = next.ok_or_else(|| EvalError::MissingAttribute { path: segs[..=i].join(".") })?;
        }
        Ok(cur)
    }
}

fn bool_of(v: &Value, ctx: &str) -> Result<bool, EvalError> {
    v.as_bool().ok_or_else(|| EvalError::TypeError {
        message: format!("{ctx} requires a boolean, got {}", v.type_name()),
    })
}

fn num_of(v: &Value, ctx: &str) -> Result<f64, EvalError> {
    v.as_num().ok_or_else(|| EvalError::TypeError {
        message: format!("{ctx} requires a number, got {}", v.type_name()),
    })
}

/// Structural equality without coercion: values of different types are
/// simply unequal, never an error.
pub fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Num(x), Value::Num(y)) => x == y,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Map(x), Value::Map(y)) => {
            x.len() == y.len()
                && x.iter()
                    .zip(y.iter())
                    .all(|((ka, va), (kb, vb))| ka == kb && values_equal(va, vb))
        }
        _ => false,
    }
}

fn binary_op(op: BinaryOp, l: &Value, r: &Value) -> Result<Value, EvalError> {
    match op {
        BinaryOp::Eq => Ok(Value::Bool(values_equal(l, r))),
        BinaryOp::Ne => Ok(Value::Bool(!values_equal(l, r))),
        BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => {
            let ordering = match (l, r) {
                (Value::Num(a), Value::Num(b)) => a.partial_cmp(b).ok_or_else(|| {
                    EvalError::TypeError { message: "cannot order NaN".to_string() }
                })?,
                // Strings order by code point, the same total order as `str`.
                (Value::Str(a), Value::Str(b)) => a.cmp(b),
                _ => {
                    return Err(EvalError::TypeError {
                        message: format!(
                            "cannot order {} and {} with `{}`",
                            l.type_name(),
                            r.type_name(),
                            op.symbol()
                        ),
                    })
                }
            };
            let out = match op {
                BinaryOp::Lt => ordering.is_lt(),
                BinaryOp::Le => ordering.is_le(),
                BinaryOp::Gt => ordering.is_gt(),
                _ => ordering.is_ge(),
            };
            Ok(Value::Bool(out))
        }
        BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul | BinaryOp::Div => {
            let a = num_of(l, &format!("`{}`", op.symbol()))?;
            let b = num_of(r, &format!("`{}`", op.symbol()))?;
            let out = match op {
                BinaryOp::Add => a + b,
                BinaryOp::Sub => a - b,
                BinaryOp::Mul => a * b,
                _ => {
                    if b == 0.0 {
                        return Err(EvalError::DivisionByZero);
                    }
                    a / b
                }
            };
            Ok(Value::Num(out))
        }
        BinaryOp::And | BinaryOp::Or => unreachable!("short-circuit ops handled by the walker"),
    }
}
