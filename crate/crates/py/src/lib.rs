//! Python bindings for the PML policy engine, compiled as an abi3 extension
//! module named `pml`.
//!
//! The module mirrors the core library surface: parse a model, load a policy,
//! enforce requests, and mutate policy/role links at runtime. Python callables
//! can be handed to the [`Enforcer`] constructor as extra matcher stub
//! functions; they run inside the sandboxed interpreter and any exception they
//! raise denies the request (fail closed), like every other evaluation error.
//!
//! Values map between the two languages as: `bool` ↔ PML booleans, `int` and
//! `float` ↔ PML numbers (always returned to Python as `float`), `str` ↔ PML
//! strings, and `dict` with string keys ↔ PML maps. Anything else raises
//! `TypeError`.

use std::collections::HashMap;

use pml_core::{load_model, Decision, EvalError, ModelDefinition, StubResult, Value};
use pyo3::exceptions::{PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyString, PyTuple};
use pyo3::IntoPyObjectExt;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts a Python object into a PML value. `bool` must be checked before
/// the numeric extractions: Python's `bool` is a subclass of `int`.
fn to_value(obj: &Bound<'_, PyAny>) -> PyResult<Value> {
    if let Ok(b) = obj.cast::<PyBool>() {
        return Ok(Value::Bool(b.is_true()));
    }
    if let Ok(n) = obj.extract::<i64>() {
        return Ok(Value::Num(n as f64));
    }
    if let Ok(n) = obj.extract::<f64>() {
        return Ok(Value::Num(n));
    }
    if let Ok(s) = obj.extract::<String>() {
        return Ok(Value::Str(s));
    }
    if let Ok(d) = obj.cast::<PyDict>() {
        let mut map = std::collections::BTreeMap::new();
        for (key, item) in d.iter() {
            let key: String = key
                .extract()
                .map_err(|_| PyTypeError::new_err("PML map keys must be strings"))?;
            map.insert(key, to_value(&item)?);
        }
        return Ok(Value::Map(map));
    }
    Err(PyTypeError::new_err(format!(
        "cannot convert {} to a PML value (expected bool, int, float, str, or dict)",
        obj.get_type().name()?,
    )))
}

fn value_to_py(py: Python<'_>, value: &Value) -> PyResult<Py<PyAny>> {
    match value {
        Value::Bool(b) => b.into_py_any(py),
        Value::Num(n) => n.into_py_any(py),
        Value::Str(s) => s.as_str().into_py_any(py),
        Value::Map(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, value_to_py(py, item)?)?;
            }
            dict.into_py_any(py)
        }
    }
}

fn to_request(values: &Bound<'_, PyAny>) -> PyResult<Vec<Value>> {
    if values.cast::<PyString>().is_ok() {
        // A bare string would otherwise be extracted as a sequence of
        // one-character strings, which is never what the caller meant.
        return Err(PyTypeError::new_err(
            "request must be a sequence of values, not a single string",
        ));
    }
    let items: Vec<Bound<'_, PyAny>> = values.extract()?;
    items.iter().map(to_value).collect()
}

fn decision_to_py(py: Python<'_>, decision: &Decision) -> PyResult<Py<PyDict>> {
    let dict = PyDict::new(py);
    dict.set_item("allowed", decision.allowed)?;
    dict.set_item("matched", decision.matched.clone())?;
    match &decision.error {
        Some(failure) => dict.set_item("error", failure.to_string())?,
        None => dict.set_item("error", py.None())?,
    }
    Ok(dict.unbind())
}

/// Bridges a registered Python callable into the interpreter's stub-function
/// interface. Conversion failures and Python exceptions both surface as
/// evaluation errors, so the engine's fail-closed rule applies to them.
fn call_python_stub(name: &str, func: &Py<PyAny>, args: &[Value]) -> StubResult {
    Python::attach(|py| {
        let result = args
            .iter()
            .map(|arg| value_to_py(py, arg))
            .collect::<PyResult<Vec<_>>>()
            .and_then(|items| PyTuple::new(py, items))
            .and_then(|tuple| func.call1(py, tuple))
            .and_then(|ret| to_value(ret.bind(py)));
        result.map_err(|e| EvalError::Function {
            name: name.to_string(),
            message: e.to_string(),
        })
    })
}

/// A parsed PML model: request/policy shapes, role functions, matcher, and
/// effect rule.
#[pyclass(frozen)]
struct Model {
    inner: ModelDefinition,
}

#[pymethods]
impl Model {
    /// Parses model text. Raises `ValueError` if it is not well formed.
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        let inner = pml_core::parse_model(text).map_err(value_err)?;
        Ok(Model { inner })
    }

    /// Names of the request attributes, in declaration order.
    #[getter]
    fn request_attrs(&self) -> Vec<String> {
        self.inner.request_attrs().to_vec()
    }

    /// Names of the policy attributes, in declaration order.
    #[getter]
    fn policy_attrs(&self) -> Vec<String> {
        self.inner.policy_attrs().to_vec()
    }

    /// Role functions as a `{name: arity}` dict (arity 2 is global, 3 is
    /// tenant-scoped).
    #[getter]
    fn role_defs(&self) -> HashMap<String, u8> {
        self.inner.role_defs().iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    /// The matcher expression source.
    #[getter]
    fn matcher(&self) -> String {
        self.inner.matcher_src().to_string()
    }

    /// The effect rule source.
    #[getter]
    fn effect(&self) -> String {
        self.inner.effect_src().to_string()
    }

    /// Runs the static well-formedness checks and returns the list of
    /// violations (empty when the model is valid).
    fn validate(&self) -> Vec<String> {
        pml_core::validate_model(&self.inner)
    }

    /// Renders the model back to canonical text.
    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(r = {}; p = {})",
            self.inner.request_attrs().join(", "),
            self.inner.policy_attrs().join(", "),
        )
    }
}

/// A ready-to-use policy decision point: a model plus a loaded policy.
///
/// Construct with model and policy text. Custom matcher functions are passed
/// as a `{name: callable}` dict and must be registered here, up front: the
/// function registry is sealed once the policy loads.
#[pyclass]
struct Enforcer {
    inner: pml_core::Enforcer,
}

impl Enforcer {
    fn decide(&self, request: &Bound<'_, PyAny>) -> PyResult<Decision> {
        let values = to_request(request)?;
        self.inner.enforce(&values).map_err(value_err)
    }
}

#[pymethods]
impl Enforcer {
    #[new]
    #[pyo3(signature = (model, policy, *, functions = None, step_budget = None))]
    fn new(
        model: &str,
        policy: &str,
        functions: Option<HashMap<String, Py<PyAny>>>,
        step_budget: Option<u64>,
    ) -> PyResult<Self> {
        let mut builder = load_model(model).map_err(value_err)?;
        if let Some(budget) = step_budget {
            builder.set_step_budget(budget);
        }
        for (name, func) in functions.into_iter().flatten() {
            let stub_name = name.clone();
            builder
                .register_function(&name, move |args: &[Value]| {
                    call_python_stub(&stub_name, &func, args)
                })
                .map_err(value_err)?;
        }
        let inner = builder.load_policy(policy).map_err(value_err)?;
        Ok(Enforcer { inner })
    }

    /// Decides a request (a sequence with one value per request attribute)
    /// and returns whether it is allowed. Evaluation errors deny.
    fn enforce(&self, request: &Bound<'_, PyAny>) -> PyResult<bool> {
        Ok(self.decide(request)?.allowed)
    }

    /// Like `enforce`, but returns the full decision as a dict:
    /// `{"allowed": bool, "matched": [rule indices], "error": str | None}`.
    fn enforce_detail(&self, py: Python<'_>, request: &Bound<'_, PyAny>) -> PyResult<Py<PyDict>> {
        let decision = self.decide(request)?;
        decision_to_py(py, &decision)
    }

    /// Appends a `p` rule (one string per policy attribute). Returns `False`
    /// if an identical rule already exists.
    fn add_policy(&mut self, values: Vec<String>) -> PyResult<bool> {
        self.inner.add_policy(&values).map_err(value_err)
    }

    /// Removes a `p` rule. Returns `False` if no such rule exists.
    fn remove_policy(&mut self, values: Vec<String>) -> PyResult<bool> {
        self.inner.remove_policy(&values).map_err(value_err)
    }

    /// Adds a role link under role function `key`; `tenant` is required
    /// exactly when the model declares the function with arity 3.
    #[pyo3(signature = (key, member, role, tenant = None))]
    fn add_role_link(
        &mut self,
        key: &str,
        member: &str,
        role: &str,
        tenant: Option<&str>,
    ) -> PyResult<bool> {
        self.inner.add_role_link(key, member, role, tenant).map_err(value_err)
    }

    /// Removes a role link added by policy or `add_role_link`.
    #[pyo3(signature = (key, member, role, tenant = None))]
    fn remove_role_link(
        &mut self,
        key: &str,
        member: &str,
        role: &str,
        tenant: Option<&str>,
    ) -> PyResult<bool> {
        self.inner.remove_role_link(key, member, role, tenant).map_err(value_err)
    }

    /// Renders the current rules and role links in canonical CSV form.
    fn policy_text(&self) -> String {
        self.inner.policy_text()
    }

    /// Number of effective mutations since the policy was loaded (no-op
    /// duplicates and removals of absent rules do not count).
    #[getter]
    fn revision(&self) -> u64 {
        self.inner.revision()
    }

    /// The model this enforcer was built from.
    fn model(&self) -> Model {
        Model { inner: self.inner.model().clone() }
    }

    fn __repr__(&self) -> String {
        format!(
            "Enforcer(rules={}, revision={})",
            self.inner.store().rules().len(),
            self.inner.revision(),
        )
    }
}

/// Path-pattern match where `*` spans path segments: `key_match("/a/b/c",
/// "/a/*")` is `True`.
#[pyfunction]
fn key_match(key: &str, pattern: &str) -> bool {
    pml_core::key_match(key, pattern)
}

/// Anchored regular-expression match (the pattern must cover the whole
/// string). Raises `ValueError` on an invalid pattern.
#[pyfunction]
fn regex_match(value: &str, pattern: &str) -> PyResult<bool> {
    pml_core::regex_match(value, pattern).map_err(value_err)
}

#[pymodule]
fn pml(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Enforcer>()?;
    m.add_function(wrap_pyfunction!(key_match, m)?)?;
    m.add_function(wrap_pyfunction!(regex_match, m)?)?;
    m.add("DEFAULT_STEP_BUDGET", pml_core::DEFAULT_STEP_BUDGET)?;
    Ok(())
}
