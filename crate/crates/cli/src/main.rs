//! `pml` — one-shot enforcement, validation, and benchmarking from the
//! shell.
//!
//! Exit codes follow the decision so pipelines can gate on them:
//! 0 = allow (or: nothing to report), 1 = deny / violations found,
//! 2 = error, including fail-closed denies caused by evaluation errors —
//! a script must be able to tell a clean deny from a broken policy.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pml_core::bench::{measure_fixture_threads, parse_corpus, CorpusCase, Fixture};
use pml_core::{load_model, parse_model, parse_policy, validate_model, Value};

#[derive(Parser)]
#[command(name = "pml", version, about = "PML policy engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide one request; prints "allow" or "deny".
    Enforce {
        /// Model file (.pml)
        #[arg(short, long)]
        model: PathBuf,
        /// Policy file (.csv)
        #[arg(short, long)]
        policy: PathBuf,
        /// Request values, one per declared request attribute; `@file.json`
        /// loads a JSON value for nested attributes
        #[arg(required = true)]
        values: Vec<String>,
    },
    /// Check a model (and optionally a policy) for violations.
    Validate {
        /// Model file (.pml)
        #[arg(short, long)]
        model: PathBuf,
        /// Policy file to check against the model
        #[arg(short, long)]
        policy: Option<PathBuf>,
    },
    /// Measure enforce latency with everything preloaded in memory.
    Bench {
        /// Model file (.pml)
        #[arg(short, long)]
        model: PathBuf,
        /// Policy file (.csv)
        #[arg(short, long)]
        policy: PathBuf,
        /// Number of enforce calls to time
        #[arg(long)]
        requests: usize,
        /// Emit the latency report as JSON
        #[arg(long)]
        json: bool,
        /// Spread the calls over this many worker threads
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Replay requests from a JSON-lines corpus file instead of
        /// synthesizing them from the policy rules
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("pml: {message}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Enforce { model, policy, values } => enforce(&model, &policy, &values),
        Command::Validate { model, policy } => validate(&model, policy.as_deref()),
        Command::Bench { model, policy, requests, json, threads, corpus } => {
            bench(&model, &policy, requests, json, threads, corpus.as_deref())
        }
    }
}

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("reading {}: {e}", path.display()))
}

fn parse_value(arg: &str) -> Result<Value, String> {
    match arg.strip_prefix('@') {
        Some(path) => {
            let text = read(Path::new(path))?;
            let json: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| format!("parsing {path}: {e}"))?;
            Value::from_json(&json).map_err(|e| format!("{path}: {e}"))
        }
        None => Ok(Value::str(arg)),
    }
}

fn enforce(model: &Path, policy: &Path, values: &[String]) -> Result<ExitCode, String> {
    let enforcer = load_model(&read(model)?)
        .map_err(|e| e.to_string())?
        .load_policy(&read(policy)?)
        .map_err(|e| e.to_string())?;
    let request: Vec<Value> = values.iter().map(|v| parse_value(v)).collect::<Result<_, _>>()?;
    let decision = enforcer.enforce(&request).map_err(|e| e.to_string())?;

    println!("{}", if decision.allowed { "allow" } else { "deny" });
    match decision.error {
        Some(failure) => {
            // Fail-closed deny: the decision stands, but scripts need to
            // distinguish it from a clean deny.
            eprintln!("pml: {failure}");
            Ok(ExitCode::from(2))
        }
        None => Ok(ExitCode::from(u8::from(!decision.allowed))),
    }
}

fn validate(model_path: &Path, policy_path: Option<&Path>) -> Result<ExitCode, String> {
    let mut violations = Vec::new();
    let model_text = read(model_path)?;
    match parse_model(&model_text) {
        Ok(model) => {
            violations.extend(validate_model(&model));
            if let Some(path) = policy_path {
                let policy_text = read(path)?;
                violations.extend(pml_core::lint_policy(&policy_text, &model));
            }
        }
        Err(e) => violations.push(e.to_string()),
    }

    if violations.is_empty() {
        println!("ok");
        return Ok(ExitCode::SUCCESS);
    }
    for violation in &violations {
        println!("{violation}");
    }
    Ok(ExitCode::from(1))
}

fn bench(
    model_path: &Path,
    policy_path: &Path,
    requests: usize,
    json: bool,
    threads: usize,
    corpus_path: Option<&Path>,
) -> Result<ExitCode, String> {
    if requests == 0 {
        return Err("--requests must be at least 1".to_string());
    }
    let model_text = read(model_path)?;
    let policy_text = read(policy_path)?;
    let corpus = match corpus_path {
        Some(path) => parse_corpus(&read(path)?).map_err(|e| e.to_string())?,
        None => synthesize_corpus(&model_text, &policy_text)?,
    };
    let stem = model_path.file_stem().map_or_else(
        || model_path.display().to_string(),
        |stem| stem.to_string_lossy().into_owned(),
    );
    // Fixture directories conventionally hold a generic `model.pml`; the
    // directory name is the informative part there.
    let name = match model_path.parent().and_then(Path::file_name) {
        Some(dir) if stem == "model" => dir.to_string_lossy().into_owned(),
        _ => stem,
    };
    let fixture =
        Fixture { name, model: model_text, policy: policy_text, corpus };
    let report =
        measure_fixture_threads(&fixture, requests, threads).map_err(|e| e.to_string())?;

    if json {
        // Contract format: exactly count/min_us/median_us/p99_us/mean_us.
        println!("{}", serde_json::to_string(&report.latency).expect("plain struct"));
    } else {
        println!("fixture: {}", report.fixture);
        println!(
            "rules: {}   matcher nodes: {}   threads: {}",
            report.rules, report.matcher_nodes, report.threads
        );
        println!("count:  {}", report.latency.count);
        println!("min:    {:.2} µs", report.latency.min_us);
        println!("median: {:.2} µs", report.latency.median_us);
        println!("p99:    {:.2} µs", report.latency.p99_us);
        println!("mean:   {:.2} µs", report.latency.mean_us);
    }
    Ok(ExitCode::SUCCESS)
}

/// Without a corpus file, replay each policy rule's values as a request.
/// That only types-checks when the model binds requests and rules to the
/// same attribute count, as exact-match and RBAC-style models do.
fn synthesize_corpus(model_text: &str, policy_text: &str) -> Result<Vec<CorpusCase>, String> {
    let model = parse_model(model_text).map_err(|e| e.to_string())?;
    let store = parse_policy(policy_text, &model).map_err(|e| e.to_string())?;
    let request_arity = model.request_attrs().len();
    let rule_arity = model.policy_attrs().len();
    if request_arity != rule_arity {
        return Err(format!(
            "cannot synthesize requests: the model binds {request_arity} request attributes \
             but rules carry {rule_arity} values; provide --corpus"
        ));
    }
    if store.rules().is_empty() {
        return Err("cannot synthesize requests from an empty policy; provide --corpus".to_string());
    }
    Ok(store
        .rules()
        .iter()
        .map(|rule| CorpusCase {
            request: rule.values.iter().map(Value::str).collect(),
            // Replay corpora only drive the timing loop; expectations are
            // never consulted.
            expected: true,
        })
        .collect())
}
