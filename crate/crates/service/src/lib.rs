//! PDP service: an HTTP facade over the enforcer for middleware and
//! sidecars.
//!
//! Endpoints (all under `/v1`; the version segment reserves room for
//! multi-model routing later):
//!
//! | method | path           | body / response                                  |
//! |--------|----------------|--------------------------------------------------|
//! | POST   | `/v1/enforce`  | `{request: [value…]}` → `{allowed, matched, error?}` |
//! | GET    | `/v1/policies` | current policy as canonical CSV text             |
//! | PUT    | `/v1/policies` | policy CSV → `{revision}`                        |
//! | GET    | `/v1/healthz`  | `{status, model_loaded, revision}`               |
//!
//! Policy updates are atomic: the new text is parsed into a complete
//! replacement enforcer first, then swapped in behind an `RwLock`, so an
//! enforce call observes either the old store or the new one, never a
//! half-applied update.  In-flight requests keep the old enforcer alive
//! through its `Arc` until they finish.  A failed parse changes nothing
//! and returns 400.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use pml_core::{load_model, Enforcer, LoadError, Value};

#[derive(Clone, Debug)]
pub struct PdpConfig {
    /// Address the binary serves on; the router itself doesn't bind.
    pub listen_addr: String,
    pub model_path: PathBuf,
    pub policy_path: PathBuf,
    /// Evaluation step budget per matcher/effect-condition run.
    pub step_budget: u64,
    /// Reject PUT /v1/policies when set.
    pub read_only: bool,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("{0}")]
    Config(String),
}

/// Shared service state: the live enforcer plus what's needed to rebuild
/// it on policy updates.
pub struct PdpState {
    config: PdpConfig,
    model_text: String,
    /// `None` until the first successful load; handlers answer 503 then.
    engine: RwLock<Option<Arc<Enforcer>>>,
    /// Count of successful PUTs since startup.
    revision: AtomicU64,
    /// Serializes PUTs; enforce reads never take this.
    update_lock: tokio::sync::Mutex<()>,
}

impl PdpState {
    /// Loads model and policy from the configured paths; both must parse
    /// for the service to come up.
    pub fn initialize(config: PdpConfig) -> Result<Arc<PdpState>, ServiceError> {
        if config.step_budget == 0 {
            return Err(ServiceError::Config("step budget must be at least 1".to_string()));
        }
        let model_text = read(&config.model_path)?;
        let policy_text = read(&config.policy_path)?;
        let enforcer = build_enforcer(&model_text, &policy_text, config.step_budget)?;
        Ok(Arc::new(PdpState {
            config,
            model_text,
            engine: RwLock::new(Some(Arc::new(enforcer))),
            revision: AtomicU64::new(0),
            update_lock: tokio::sync::Mutex::new(()),
        }))
    }

    /// A state whose model never loaded — every endpoint answers 503.
    /// Exists so the not-ready contract stays testable.
    pub fn uninitialized(config: PdpConfig) -> Arc<PdpState> {
        Arc::new(PdpState {
            config,
            model_text: String::new(),
            engine: RwLock::new(None),
            revision: AtomicU64::new(0),
            update_lock: tokio::sync::Mutex::new(()),
        })
    }

    fn enforcer(&self) -> Option<Arc<Enforcer>> {
        self.engine.read().unwrap().clone()
    }

    pub fn revision(&self) -> u64 {
        self.revision.load(Ordering::SeqCst)
    }
}

fn read(path: &Path) -> Result<String, ServiceError> {
    std::fs::read_to_string(path)
        .map_err(|source| ServiceError::Io { path: path.to_path_buf(), source })
}

fn build_enforcer(model: &str, policy: &str, step_budget: u64) -> Result<Enforcer, LoadError> {
    let mut builder = load_model(model)?;
    builder.set_step_budget(step_budget);
    builder.load_policy(policy)
}

pub fn router(state: Arc<PdpState>) -> Router {
    Router::new()
        .route("/v1/enforce", axum::routing::post(enforce))
        .route("/v1/policies", get(get_policies).put(put_policies))
        .route("/v1/healthz", get(healthz))
        .with_state(state)
}

#[derive(Deserialize)]
struct EnforceBody {
    request: Vec<Value>,
}

#[derive(Serialize)]
struct DecisionBody {
    allowed: bool,
    matched: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

fn error_response(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: message.into() })).into_response()
}

fn not_ready() -> Response {
    error_response(StatusCode::SERVICE_UNAVAILABLE, "model not loaded")
}

async fn enforce(
    State(state): State<Arc<PdpState>>,
    body: Result<Json<EnforceBody>, JsonRejection>,
) -> Response {
    let Some(enforcer) = state.enforcer() else {
        return not_ready();
    };
    let Json(body) = match body {
        Ok(body) => body,
        Err(rejection) => return error_response(StatusCode::BAD_REQUEST, rejection.body_text()),
    };
    match enforcer.enforce(&body.request) {
        Ok(decision) => Json(DecisionBody {
            allowed: decision.allowed,
            matched: decision.matched,
            error: decision.error.map(|e| e.to_string()),
        })
        .into_response(),
        // The only enforce error is a request-arity violation: a malformed
        // request, not an evaluation failure.
        Err(e) => error_response(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

async fn get_policies(State(state): State<Arc<PdpState>>) -> Response {
    let Some(enforcer) = state.enforcer() else {
        return not_ready();
    };
    ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], enforcer.policy_text()).into_response()
}

#[derive(Serialize)]
struct RevisionBody {
    revision: u64,
}

async fn put_policies(State(state): State<Arc<PdpState>>, body: String) -> Response {
    if state.config.read_only {
        return error_response(StatusCode::FORBIDDEN, "service is read-only");
    }
    if state.enforcer().is_none() {
        return not_ready();
    }
    let _guard = state.update_lock.lock().await;

    // Parse into a complete replacement before touching anything.
    let enforcer = match build_enforcer(&state.model_text, &body, state.config.step_budget) {
        Ok(enforcer) => Arc::new(enforcer),
        Err(e) => return error_response(StatusCode::BAD_REQUEST, e.to_string()),
    };

    // Persist first (write-then-rename, so the file is never truncated),
    // and only swap the live engine once the new policy is durable.
    let canonical = enforcer.policy_text();
    let tmp = state.config.policy_path.with_extension("csv.tmp");
    let persisted = tokio::fs::write(&tmp, &canonical).await;
    let persisted = match persisted {
        Ok(()) => tokio::fs::rename(&tmp, &state.config.policy_path).await,
        Err(e) => Err(e),
    };
    if let Err(e) = persisted {
        return error_response(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("persisting policy: {e}"),
        );
    }

    *state.engine.write().unwrap() = Some(enforcer);
    let revision = state.revision.fetch_add(1, Ordering::SeqCst) + 1;
    Json(RevisionBody { revision }).into_response()
}

#[derive(Serialize)]
struct HealthBody {
    status: &'static str,
    model_loaded: bool,
    revision: u64,
}

async fn healthz(State(state): State<Arc<PdpState>>) -> Response {
    let loaded = state.enforcer().is_some();
    let body = HealthBody {
        status: if loaded { "ok" } else { "loading" },
        model_loaded: loaded,
        revision: state.revision(),
    };
    let status = if loaded { StatusCode::OK } else { StatusCode::SERVICE_UNAVAILABLE };
    (status, Json(body)).into_response()
}
