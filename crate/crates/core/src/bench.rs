//! Fixture suite and measurement harness.
//!
//! A [`Fixture`] bundles a model, a policy, and a request corpus whose
//! expected decisions come from *oracle generators* — small, independent
//! reimplementations of each scenario's semantics that share no code with
//! the engine (no `key_match`, no role graph, no expression evaluator).
//! [`run_fixture`] replays the corpus through a real enforcer and reports
//! every disagreement; [`measure_fixture`] times `enforce` alone, with all
//! parsing and request construction hoisted out of the measured region.
//!
//! Fixtures serialize to a directory of three files — `model.pml`,
//! `policy.csv`, and `corpus.jsonl` (one `{"request": […], "expected": …}`
//! object per line) — so the same corpora drive the CLI, the service tests,
//! and the acceptance suite.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enforcer::{load_model, EnforceError, Enforcer, LoadError};
use crate::value::Value;

pub mod fixtures;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("fixture io: {0}")]
    Io(#[from] io::Error),
    #[error("corpus line {line}: {message}")]
    Corpus { line: usize, message: String },
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("corpus request rejected: {0}")]
    Request(#[from] EnforceError),
}

/// One corpus entry: a request and the oracle's expected decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusCase {
    pub request: Vec<Value>,
    pub expected: bool,
}

/// A named benchmark/equivalence scenario: model text, policy text, and a
/// corpus of oracle-labeled requests.
#[derive(Clone, Debug, PartialEq)]
pub struct Fixture {
    pub name: String,
    pub model: String,
    pub policy: String,
    pub corpus: Vec<CorpusCase>,
}

impl Fixture {
    /// Reads `model.pml`, `policy.csv`, and `corpus.jsonl` from `dir`.
    pub fn load_dir(name: &str, dir: &Path) -> Result<Fixture, FixtureError> {
        let model = fs::read_to_string(dir.join("model.pml"))?;
        let policy = fs::read_to_string(dir.join("policy.csv"))?;
        let corpus = parse_corpus(&fs::read_to_string(dir.join("corpus.jsonl"))?)?;
        Ok(Fixture { name: name.to_string(), model, policy, corpus })
    }

    /// Writes the three fixture files into `dir`, creating it if needed.
    pub fn save_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("model.pml"), &self.model)?;
        fs::write(dir.join("policy.csv"), &self.policy)?;
        fs::write(dir.join("corpus.jsonl"), self.corpus_jsonl())?;
        Ok(())
    }

    /// The corpus as JSON lines, one case per line.
    pub fn corpus_jsonl(&self) -> String {
        let mut out = String::new();
        for case in &self.corpus {
            out.push_str(&serde_json::to_string(case).expect("corpus cases are plain data"));
            out.push('\n');
        }
        out
    }

    /// Builds the enforcer this fixture describes.
    pub fn build(&self) -> Result<Enforcer, LoadError> {
        load_model(&self.model)?.load_policy(&self.policy)
    }
}

/// Parses JSON-lines corpus text; blank lines are ignored.
pub fn parse_corpus(text: &str) -> Result<Vec<CorpusCase>, FixtureError> {
    let mut corpus = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let case: CorpusCase = serde_json::from_str(line)
            .map_err(|e| FixtureError::Corpus { line: i + 1, message: e.to_string() })?;
        corpus.push(case);
    }
    Ok(corpus)
}

/// A corpus entry the engine decided differently from the oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub index: usize,
    pub request: Vec<Value>,
    pub expected: bool,
    pub got: bool,
    /// Evaluation error behind a fail-closed deny, when there was one.
    pub error: Option<String>,
}

/// Outcome of replaying a fixture's corpus through the engine.
#[derive(Clone, Debug, PartialEq)]
pub struct FixtureReport {
    pub name: String,
    pub total: usize,
    pub mismatches: Vec<Mismatch>,
}

impl FixtureReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

impl fmt::Display for FixtureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "{}: {}/{} decisions match", self.name, self.total, self.total);
        }
        writeln!(
            f,
            "{}: {} of {} decisions disagree with the oracle:",
            self.name,
            self.mismatches.len(),
            self.total
        )?;
        for m in &self.mismatches {
            let detail = m.error.as_deref().map(|e| format!(" ({e})")).unwrap_or_default();
            writeln!(
                f,
                "  case {}: expected {}, got {}{} for {:?}",
                m.index,
                if m.expected { "allow" } else { "deny" },
                if m.got { "allow" } else { "deny" },
                detail,
                m.request,
            )?;
        }
        Ok(())
    }
}

/// Replays every corpus case and collects disagreements with the oracle's
/// expectations.
pub fn run_fixture(fixture: &Fixture) -> Result<FixtureReport, FixtureError> {
    let enforcer = fixture.build()?;
    let mut mismatches = Vec::new();
    for (index, case) in fixture.corpus.iter().enumerate() {
        let decision = enforcer.enforce(&case.request)?;
        if decision.allowed != case.expected {
            mismatches.push(Mismatch {
                index,
                request: case.request.clone(),
                expected: case.expected,
                got: decision.allowed,
                error: decision.error.map(|e| e.to_string()),
            });
        }
    }
    Ok(FixtureReport { name: fixture.name.clone(), total: fixture.corpus.len(), mismatches })
}

/// Corpus decisions in corpus order, computed by `threads` workers over a
/// shared enforcer.  With `threads == 1` this is a plain sequential replay;
/// decisions must not depend on the split (fixtures are immutable and
/// `enforce` takes `&self`).
pub fn decisions(
    enforcer: &Enforcer,
    corpus: &[CorpusCase],
    threads: usize,
) -> Result<Vec<bool>, EnforceError> {
    let threads = threads.max(1);
    let mut out = vec![false; corpus.len()];
    if threads == 1 || corpus.len() <= 1 {
        for (case, slot) in corpus.iter().zip(&mut out) {
            *slot = enforcer.enforce(&case.request)?.allowed;
        }
        return Ok(out);
    }
    let chunk = corpus.len().div_ceil(threads);
    let mut result: Result<(), EnforceError> = Ok(());
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (cases, slots) in corpus.chunks(chunk).zip(out.chunks_mut(chunk)) {
            handles.push(scope.spawn(move || -> Result<(), EnforceError> {
                for (case, slot) in cases.iter().zip(slots) {
                    *slot = enforcer.enforce(&case.request)?.allowed;
                }
                Ok(())
            }));
        }
        for handle in handles {
            if let Err(e) = handle.join().expect("worker panicked") {
                result = Err(e);
            }
        }
    });
    result.map(|()| out)
}

/// Latency distribution over individually timed calls, in microseconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub min_us: f64,
    pub median_us: f64,
    pub p99_us: f64,
    pub mean_us: f64,
}

impl LatencyStats {
    fn from_samples(mut samples_ns: Vec<u64>) -> LatencyStats {
        assert!(!samples_ns.is_empty(), "latency stats need at least one sample");
        samples_ns.sort_unstable();
        let count = samples_ns.len();
        let sum: u128 = samples_ns.iter().map(|&ns| ns as u128).sum();
        LatencyStats {
            count,
            min_us: samples_ns[0] as f64 / 1_000.0,
            median_us: percentile_ns(&samples_ns, 50.0) / 1_000.0,
            p99_us: percentile_ns(&samples_ns, 99.0) / 1_000.0,
            mean_us: sum as f64 / count as f64 / 1_000.0,
        }
    }
}

/// Linear-interpolation percentile over sorted samples (numpy-style).
fn percentile_ns(sorted: &[u64], q: f64) -> f64 {
    let rank = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] as f64 * (1.0 - frac) + sorted[hi] as f64 * frac
}

/// Times `n` invocations of `f` individually.
pub fn measure<F: FnMut()>(n: usize, mut f: F) -> LatencyStats {
    assert!(n >= 1, "measure requires n >= 1");
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let start = Instant::now();
        f();
        samples.push(start.elapsed().as_nanos() as u64);
    }
    LatencyStats::from_samples(samples)
}

/// A latency report with enough context to compare across fixtures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub fixture: String,
    /// Number of `p` rules the matcher ran against.
    pub rules: usize,
    /// Matcher AST node count — a rough complexity measure.
    pub matcher_nodes: usize,
    pub threads: usize,
    pub latency: LatencyStats,
}

/// Times `n` enforce calls replaying the corpus round-robin.  The enforcer
/// is built and all requests materialized before timing starts; only
/// `enforce` is inside the measured region.
pub fn measure_fixture(fixture: &Fixture, n: usize) -> Result<BenchReport, FixtureError> {
    measure_fixture_threads(fixture, n, 1)
}

/// As [`measure_fixture`], spreading the `n` calls over `threads` workers;
/// each call is still timed individually and all samples pool into one
/// distribution.
pub fn measure_fixture_threads(
    fixture: &Fixture,
    n: usize,
    threads: usize,
) -> Result<BenchReport, FixtureError> {
    assert!(n >= 1, "measure requires n >= 1");
    let threads = threads.max(1);
    let enforcer = fixture.build()?;
    let requests: Vec<&[Value]> =
        fixture.corpus.iter().map(|case| case.request.as_slice()).collect();
    if requests.is_empty() {
        return Err(FixtureError::Corpus { line: 0, message: "empty corpus".to_string() });
    }
    // Fail fast (and outside the timed loop) if any request has bad arity.
    enforcer.enforce(requests[0])?;

    let time_chunk = |count: usize, offset: usize| -> Vec<u64> {
        let mut samples = Vec::with_capacity(count);
        for i in 0..count {
            let request = requests[(offset + i) % requests.len()];
            let start = Instant::now();
            let decision = enforcer.enforce(request);
            samples.push(start.elapsed().as_nanos() as u64);
            std::hint::black_box(&decision);
        }
        samples
    };

    let samples = if threads == 1 {
        time_chunk(n, 0)
    } else {
        let base = n / threads;
        let extra = n % threads;
        let mut all = Vec::with_capacity(n);
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for t in 0..threads {
                let count = base + usize::from(t < extra);
                if count > 0 {
                    handles.push(scope.spawn(move || time_chunk(count, t * base)));
                }
            }
            for handle in handles {
                all.extend(handle.join().expect("worker panicked"));
            }
        });
        all
    };

    Ok(BenchReport {
        fixture: fixture.name.clone(),
        rules: enforcer.store().rules().len(),
        matcher_nodes: enforcer.matcher_complexity(),
        threads,
        latency: LatencyStats::from_samples(samples),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_fixtures_agree_with_their_oracles() {
        for fixture in fixtures::all() {
            let report = run_fixture(&fixture).unwrap();
            assert!(report.passed(), "{report}");
        }
    }

    #[test]
    fn rmd_corpus_is_the_full_cross_product() {
        let fixture = fixtures::rmd();
        assert_eq!(fixture.corpus.len(), 144);
        let allows = fixture.corpus.iter().filter(|c| c.expected).count();
        assert_eq!(allows, 27, "21 reads + 2 creates + 4 modify/delete");
    }

    #[test]
    fn tenant_corpus_is_the_narrated_quartet() {
        let fixture = fixtures::tenant();
        let expected: Vec<bool> = fixture.corpus.iter().map(|c| c.expected).collect();
        assert_eq!(expected, vec![true, true, true, false]);
    }

    #[test]
    fn openstack_oracle_spot_checks() {
        let sub = |role: &str, is_admin: bool, project: &str| {
            Value::from_json(&serde_json::json!({
                "role": role, "is_admin": is_admin, "project_id": project
            }))
            .unwrap()
        };
        let obj = |project: &str| {
            Value::from_json(&serde_json::json!({ "project_id": project })).unwrap()
        };
        let act = Value::str("compute:start");
        // Hand-walked through the source conditions: role:admin or
        // is_admin:True or project_id:%(project_id)s.
        assert!(fixtures::openstack_oracle(&[sub("admin", false, "p1"), obj("p2"), act.clone()]));
        assert!(fixtures::openstack_oracle(&[sub("member", true, "p1"), obj("p2"), act.clone()]));
        assert!(fixtures::openstack_oracle(&[sub("member", false, "p1"), obj("p1"), act.clone()]));
        assert!(!fixtures::openstack_oracle(&[sub("member", false, "p1"), obj("p2"), act]));
    }

    #[test]
    fn acl_with_zero_rules_denies_everything() {
        let fixture = fixtures::acl(0, 50, 7);
        assert!(fixture.corpus.iter().all(|c| !c.expected));
        let report = run_fixture(&fixture).unwrap();
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn acl_corpus_mixes_hits_and_misses() {
        let fixture = fixtures::acl(100, 200, 7);
        let hits = fixture.corpus.iter().filter(|c| c.expected).count();
        assert!(hits > 50 && hits < 150, "roughly half the corpus should hit: {hits}");
    }

    #[test]
    fn fixture_builders_are_deterministic() {
        assert_eq!(fixtures::openstack(42, 100), fixtures::openstack(42, 100));
        assert_eq!(fixtures::acl(50, 100, 42), fixtures::acl(50, 100, 42));
        assert_ne!(fixtures::openstack(42, 100), fixtures::openstack(43, 100));
    }

    #[test]
    fn corpus_jsonl_round_trips() {
        let fixture = fixtures::openstack(9, 25);
        let text = fixture.corpus_jsonl();
        assert_eq!(parse_corpus(&text).unwrap(), fixture.corpus);
    }

    #[test]
    fn corpus_parse_reports_the_bad_line() {
        let err = parse_corpus("{\"request\": [\"a\"], \"expected\": true}\nnot json\n")
            .unwrap_err();
        assert!(matches!(err, FixtureError::Corpus { line: 2, .. }), "{err}");
    }

    #[test]
    fn fixture_directory_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let fixture = fixtures::rmd();
        fixture.save_dir(dir.path()).unwrap();
        let loaded = Fixture::load_dir("rmd", dir.path()).unwrap();
        assert_eq!(loaded, fixture);
    }

    #[test]
    fn mismatches_are_reported_not_panicked() {
        let mut fixture = fixtures::rmd();
        fixture.corpus[0].expected = !fixture.corpus[0].expected;
        let report = run_fixture(&fixture).unwrap();
        assert_eq!(report.mismatches.len(), 1);
        assert_eq!(report.mismatches[0].index, 0);
        let text = report.to_string();
        assert!(text.contains("case 0"), "{text}");
    }

    #[test]
    fn decisions_are_identical_across_thread_counts() {
        let fixture = fixtures::acl(100, 200, 11);
        let enforcer = fixture.build().unwrap();
        let sequential = decisions(&enforcer, &fixture.corpus, 1).unwrap();
        for threads in [2, 3, 8] {
            assert_eq!(decisions(&enforcer, &fixture.corpus, threads).unwrap(), sequential);
        }
        let expected: Vec<bool> = fixture.corpus.iter().map(|c| c.expected).collect();
        assert_eq!(sequential, expected);
    }

    #[test]
    fn measure_reports_ordered_percentiles() {
        let fixture = fixtures::acl(10, 20, 3);
        let report = measure_fixture(&fixture, 200).unwrap();
        assert_eq!(report.latency.count, 200);
        assert_eq!(report.rules, 10);
        assert!(report.matcher_nodes > 0);
        assert!(report.latency.min_us <= report.latency.median_us);
        assert!(report.latency.median_us <= report.latency.p99_us);
        assert!(report.latency.mean_us > 0.0);
    }

    #[test]
    fn single_sample_measurement_is_valid() {
        let report = measure_fixture(&fixtures::rmd(), 1).unwrap();
        assert_eq!(report.latency.count, 1);
        assert_eq!(report.latency.min_us, report.latency.p99_us);
    }

    #[test]
    fn threaded_measurement_pools_all_samples() {
        let fixture = fixtures::acl(10, 20, 3);
        let report = measure_fixture_threads(&fixture, 101, 4).unwrap();
        assert_eq!(report.latency.count, 101);
        assert_eq!(report.threads, 4);
    }

    #[test]
    fn latency_stats_serialize_with_the_contract_fields() {
        let stats = LatencyStats::from_samples(vec![1_000, 2_000, 3_000]);
        let json: serde_json::Value = serde_json::to_value(stats).unwrap();
        for field in ["count", "min_us", "median_us", "p99_us", "mean_us"] {
            assert!(json.get(field).is_some(), "missing {field}");
        }
        assert_eq!(json["count"], 3);
        assert_eq!(json["min_us"], 1.0);
        assert_eq!(json["median_us"], 2.0);
    }
}
