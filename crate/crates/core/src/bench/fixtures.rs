//! Built-in fixtures and the oracle generators that label their corpora.
//!
//! Each oracle here re-derives decisions from first principles — explicit
//! role-closure tables, per-pattern string predicates, a tiny evaluator for
//! the source rule language — and never calls into the engine.  The corpus
//! files under `fixtures/` in the repository root are these generators'
//! output (see the `gen-corpus` binary); a test regenerates them and fails
//! on any drift.

use std::collections::BTreeMap;
use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::value::Value;

use super::{CorpusCase, Fixture};

/// Seed for the randomized corpora checked into the repository.
pub const CORPUS_SEED: u64 = 0x1a2b_3c4d;

/// All fixtures in their checked-in configurations.
pub fn all() -> Vec<Fixture> {
    vec![rmd(), tenant(), openstack(CORPUS_SEED, 1000), acl(1000, 1000, CORPUS_SEED)]
}

// --- RMD: role chain + path wildcards + action regex ---------------------

const RMD_MODEL: &str = "\
r = sub, obj, act
p = sub, obj, act
g = _, _
m = g(r.sub, p.sub) && key_match(r.obj, p.obj) && regex_match(r.act, p.act)
e = some(where (p.eft == allow))
";

const RMD_POLICY: &str = "\
p, user, /cache/l*/*, GET
p, user, /cache/l*, GET
p, user, /cache, GET
p, user, /policy, GET
p, user, /workloads, GET
p, user, /workloads/*, GET
p, user, /hospitality, GET

p, root, /workloads, POST
p, root, /workloads/*, (PATCH)|(DELETE)

g, root, user
g, admin, root
";

const RMD_SUBJECTS: [&str; 4] = ["user", "root", "admin", "unknown"];
const RMD_ENDPOINTS: [&str; 9] = [
    "/cache",
    "/cache/l1",
    "/cache/l1/2",
    "/cachex",
    "/policy",
    "/workloads",
    "/workloads/5",
    "/hospitality",
    "/metrics",
];
const RMD_METHODS: [&str; 4] = ["GET", "POST", "PATCH", "DELETE"];

/// Hand-derived RMD decision: a direct walk of the nine policy rules with
/// the role closure spelled out and each wildcard pattern re-expressed as a
/// plain string predicate.
pub fn rmd_oracle(sub: &str, obj: &str, act: &str) -> bool {
    // admin inherits root inherits user; everyone holds their own name.
    let closure: &[&str] = match sub {
        "admin" => &["admin", "root", "user"],
        "root" => &["root", "user"],
        other => return rmd_rules().iter().any(|(s, o, a)| *s == other && o(obj) && a(act)),
    };
    rmd_rules().iter().any(|(s, o, a)| closure.contains(s) && o(obj) && a(act))
}

type Pred = fn(&str) -> bool;

/// The nine policy rules with their patterns rewritten independently:
/// `*` in an object pattern spans path segments, so `/cache/l*` is a plain
/// prefix test and `/cache/l*/*` additionally needs a later `/`.
fn rmd_rules() -> [(&'static str, Pred, Pred); 9] {
    fn is_get(a: &str) -> bool {
        a == "GET"
    }
    [
        ("user", |o| o.strip_prefix("/cache/l").is_some_and(|rest| rest.contains('/')), is_get),
        ("user", |o| o.starts_with("/cache/l"), is_get),
        ("user", |o| o == "/cache", is_get),
        ("user", |o| o == "/policy", is_get),
        ("user", |o| o == "/workloads", is_get),
        ("user", |o| o.starts_with("/workloads/"), is_get),
        ("user", |o| o == "/hospitality", is_get),
        ("root", |o| o == "/workloads", |a| a == "POST"),
        ("root", |o| o.starts_with("/workloads/"), |a| a == "PATCH" || a == "DELETE"),
    ]
}

/// RMD fixture: the full subjects × endpoints × methods cross product
/// (144 cases) labeled by [`rmd_oracle`].
pub fn rmd() -> Fixture {
    let mut corpus = Vec::with_capacity(144);
    for sub in RMD_SUBJECTS {
        for obj in RMD_ENDPOINTS {
            for act in RMD_METHODS {
                corpus.push(CorpusCase {
                    request: vec![Value::str(sub), Value::str(obj), Value::str(act)],
                    expected: rmd_oracle(sub, obj, act),
                });
            }
        }
    }
    Fixture {
        name: "rmd".to_string(),
        model: RMD_MODEL.to_string(),
        policy: RMD_POLICY.to_string(),
        corpus,
    }
}

// --- Tenant RBAC: per-tenant roles -----------------------------------------

const TENANT_MODEL: &str = "\
r = sub, obj, act
p = sub, obj, act
g = _, _, _
m = g(r.sub, p.sub, r.obj.tenant) && (r.obj == p.obj || p.obj == \"*\") && regex_match(r.act, p.act)
e = some(where (p.eft == allow))
";

const TENANT_POLICY: &str = "\
p, admin, *, (use)|(manage)
p, user, *, use
g, Alice, admin, tenant1
g, Alice, user, tenant2
";

/// Tenant decision re-derived from the scenario's facts alone: Alice is
/// admin in tenant1 and user in tenant2; admins use and manage, users only
/// use.
pub fn tenant_oracle(sub: &str, tenant: &str, act: &str) -> bool {
    let assignments = [("Alice", "admin", "tenant1"), ("Alice", "user", "tenant2")];
    assignments.iter().any(|(member, role, scope)| {
        *member == sub
            && *scope == tenant
            && match *role {
                "admin" => act == "use" || act == "manage",
                "user" => act == "use",
                _ => false,
            }
    })
}

/// Tenant fixture: Alice acting in each tenant with each action, in the
/// order (tenant1, use), (tenant1, manage), (tenant2, use), (tenant2,
/// manage) — expected allow, allow, allow, deny.
pub fn tenant() -> Fixture {
    let mut corpus = Vec::with_capacity(4);
    for tenant in ["tenant1", "tenant2"] {
        for act in ["use", "manage"] {
            let obj: BTreeMap<String, Value> = [
                ("tenant".to_string(), Value::str(tenant)),
                ("name".to_string(), Value::str("vm1")),
            ]
            .into();
            corpus.push(CorpusCase {
                request: vec![Value::str("Alice"), Value::Map(obj), Value::str(act)],
                expected: tenant_oracle("Alice", tenant, act),
            });
        }
    }
    Fixture {
        name: "tenant".to_string(),
        model: TENANT_MODEL.to_string(),
        policy: TENANT_POLICY.to_string(),
        corpus,
    }
}

// --- OpenStack-equivalent: attribute conditions ------------------------------

const OPENSTACK_MODEL: &str = "\
r = sub, obj, act
p = act
m = r.sub.role == \"admin\" || r.sub.is_admin == true || (r.act == p.act && r.sub.project_id == r.obj.project_id)
e = some(where (p.eft == allow))
";

const OPENSTACK_POLICY: &str = "\
p, compute:get
p, compute:get_all_tenants
p, compute:start
";

/// The source ruleset the PML model above translates, in the upstream
/// action→condition format.  All three actions share one alias; requests
/// for unregistered actions are out of the translation's domain (the PML
/// `role`/`is_admin` arms ignore the action entirely, so equivalence is
/// only claimed for registered actions — matching how the original
/// comparison pre-designed equivalent policy pairs).
const OPENSTACK_RULES: &str = r#"{
  "admin_or_owner": "role:admin or is_admin:True or project_id:%(project_id)s",
  "compute:get": "rule:admin_or_owner",
  "compute:get_all_tenants": "rule:admin_or_owner",
  "compute:start": "rule:admin_or_owner"
}"#;

const OPENSTACK_ACTIONS: [&str; 3] = ["compute:get", "compute:get_all_tenants", "compute:start"];

/// Independent oracle: evaluates the JSON action→condition rules directly.
/// Conditions are `or`-joined clauses of `and`-joined tokens; tokens are
/// `role:X` / `is_admin:True` (subject attribute comparisons),
/// `project_id:%(project_id)s` (subject vs object), `rule:N` (alias), or
/// empty (always true).  Unregistered actions deny.
pub fn openstack_oracle(request: &[Value]) -> bool {
    let rules: serde_json::Value =
        serde_json::from_str(OPENSTACK_RULES).expect("pinned ruleset is valid JSON");
    let [sub, obj, act] = request else {
        panic!("openstack requests are [subject, object, action]");
    };
    let act = act.as_str().expect("action is a string");
    match rules.get(act) {
        Some(condition) => eval_condition(&rules, condition.as_str().unwrap(), sub, obj, 0),
        None => false,
    }
}

fn eval_condition(
    rules: &serde_json::Value,
    condition: &str,
    sub: &Value,
    obj: &Value,
    depth: usize,
) -> bool {
    assert!(depth < 8, "alias cycle in pinned ruleset");
    condition.split(" or ").any(|clause| {
        clause.split(" and ").all(|token| eval_token(rules, token.trim(), sub, obj, depth))
    })
}

fn eval_token(
    rules: &serde_json::Value,
    token: &str,
    sub: &Value,
    obj: &Value,
    depth: usize,
) -> bool {
    if token.is_empty() {
        return true;
    }
    let sub_attr = |key: &str| match sub {
        Value::Map(m) => m.get(key).cloned(),
        _ => None,
    };
    if let Some(alias) = token.strip_prefix("rule:") {
        let condition = rules.get(alias).and_then(|c| c.as_str()).expect("alias is defined");
        return eval_condition(rules, condition, sub, obj, depth + 1);
    }
    if let Some(role) = token.strip_prefix("role:") {
        return sub_attr("role").as_ref().and_then(Value::as_str) == Some(role);
    }
    if token == "is_admin:True" {
        return sub_attr("is_admin") == Some(Value::Bool(true));
    }
    if token == "project_id:%(project_id)s" {
        let target = match obj {
            Value::Map(m) => m.get("project_id").cloned(),
            _ => None,
        };
        return sub_attr("project_id").is_some() && sub_attr("project_id") == target;
    }
    panic!("oracle does not understand token {token:?}");
}

/// OpenStack-equivalent fixture: `count` randomized requests over the
/// registered actions, labeled by [`openstack_oracle`].
pub fn openstack(seed: u64, count: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roles = ["admin", "member", "reader"];
    let projects = ["p1", "p2", "p3", "p4"];
    let mut corpus = Vec::with_capacity(count);
    for _ in 0..count {
        let sub: BTreeMap<String, Value> = [
            ("role".to_string(), Value::str(*roles.choose(&mut rng).unwrap())),
            ("is_admin".to_string(), Value::Bool(rng.gen_bool(0.25))),
            ("project_id".to_string(), Value::str(*projects.choose(&mut rng).unwrap())),
        ]
        .into();
        let obj: BTreeMap<String, Value> =
            [("project_id".to_string(), Value::str(*projects.choose(&mut rng).unwrap()))].into();
        let request = vec![
            Value::Map(sub),
            Value::Map(obj),
            Value::str(*OPENSTACK_ACTIONS.choose(&mut rng).unwrap()),
        ];
        let expected = openstack_oracle(&request);
        corpus.push(CorpusCase { request, expected });
    }
    Fixture {
        name: "openstack".to_string(),
        model: OPENSTACK_MODEL.to_string(),
        policy: OPENSTACK_POLICY.to_string(),
        corpus,
    }
}

// --- Exact-match ACL: the flat-table baseline -------------------------------

const ACL_MODEL: &str = "\
r = sub, obj, act
p = sub, obj, act
m = r.sub == p.sub && r.obj == p.obj && r.act == p.act
e = some(where (p.eft == allow))
";

/// Exact-match ACL fixture with `rules` distinct triples and a corpus of
/// `requests` cases, roughly half hits and half guaranteed misses.  The
/// oracle is set membership over the generated triples.
pub fn acl(rules: usize, requests: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let acts = ["read", "write"];
    let triples: Vec<(String, String, String)> = (0..rules)
        .map(|i| {
            (format!("u{i}"), format!("/res/{i}"), acts[rng.gen_range(0..acts.len())].to_string())
        })
        .collect();
    let table: HashSet<&(String, String, String)> = triples.iter().collect();

    let mut policy = String::new();
    for (sub, obj, act) in &triples {
        policy.push_str(&format!("p, {sub}, {obj}, {act}\n"));
    }

    let mut corpus = Vec::with_capacity(requests);
    for _ in 0..requests {
        let triple = if rules > 0 && rng.gen_bool(0.5) {
            // A hit: replay one of the generated rules verbatim.
            triples[rng.gen_range(0..rules)].clone()
        } else {
            // A miss: the subject index is out of range, so the triple
            // cannot be in the table.
            let i = rng.gen_range(0..rules.max(1));
            (format!("u{}x", i), format!("/res/{i}"), acts[rng.gen_range(0..2)].to_string())
        };
        let expected = table.contains(&triple);
        corpus.push(CorpusCase {
            request: vec![Value::str(&triple.0), Value::str(&triple.1), Value::str(&triple.2)],
            expected,
        });
    }
    Fixture {
        name: "acl".to_string(),
        model: ACL_MODEL.to_string(),
        policy,
        corpus,
    }
}
