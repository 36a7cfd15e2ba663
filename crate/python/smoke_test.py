#!/usr/bin/env python3
"""Smoke test for the `pml` extension module.

Build the module first with `cargo build -p pml-py`. The script stages the
resulting cdylib under the name Python's import machinery expects, imports
it, and exercises the bindings end to end against the checked-in fixtures:
decisions, dict-valued attributes, runtime mutations, Python-registered
matcher functions, and the fail-closed error paths.
"""

import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent

CHECKS = 0


def check(cond, label):
    global CHECKS
    if not cond:
        sys.exit(f"FAIL: {label}")
    CHECKS += 1


def check_raises(exc_types, label, fn, *args, **kwargs):
    try:
        fn(*args, **kwargs)
    except exc_types:
        check(True, label)
    else:
        sys.exit(f"FAIL: {label}: no exception raised")


def locate_cdylib():
    candidates = [
        REPO / "target" / profile / name
        for profile in ("debug", "release")
        for name in ("libpml.so", "libpml.dylib")
    ]
    found = [p for p in candidates if p.exists()]
    if not found:
        sys.exit("pml cdylib not found; run `cargo build -p pml-py` first")
    return max(found, key=lambda p: p.stat().st_mtime)


def load_module(stage_dir):
    staged = Path(stage_dir) / "pml.so"
    shutil.copy2(locate_cdylib(), staged)
    sys.path.insert(0, str(stage_dir))
    import pml

    return pml


def fixture(name):
    base = REPO / "fixtures" / name
    return (base / "model.pml").read_text(), (base / "policy.csv").read_text()


def main():
    with tempfile.TemporaryDirectory() as stage_dir:
        pml = load_module(stage_dir)

        # --- model parsing and validation ------------------------------
        rmd_model, rmd_policy = fixture("rmd")
        model = pml.Model(rmd_model)
        check(model.request_attrs == ["sub", "obj", "act"], "rmd request attrs")
        check(model.policy_attrs == ["sub", "obj", "act"], "rmd policy attrs")
        check(model.role_defs == {"g": 2}, "rmd role defs")
        check(model.validate() == [], "rmd model validates")
        check(pml.Model(model.to_text()).matcher == model.matcher, "to_text round-trips")
        check_raises(ValueError, "malformed model raises", pml.Model, "not a model")

        # --- decisions with role inheritance ---------------------------
        e = pml.Enforcer(rmd_model, rmd_policy)
        check(e.enforce(["root", "/policy", "GET"]), "root inherits user's read access")
        check(not e.enforce(["user", "/workloads", "POST"]), "user cannot create workloads")
        check(e.enforce(["admin", "/workloads/5", "DELETE"]), "admin deletes workload")
        check(not e.enforce(["unknown", "/cache", "GET"]), "unknown subject denied")
        detail = e.enforce_detail(["user", "/cache", "GET"])
        check(detail == {"allowed": True, "matched": [2], "error": None}, "detail dict")
        check(e.model().matcher == model.matcher, "enforcer exposes its model")
        check("rules=9" in repr(e), "repr mentions rule count")

        # --- arity and request-shape errors raise ----------------------
        check_raises(ValueError, "short request raises", e.enforce, ["root", "/policy"])
        check_raises(TypeError, "bare string request raises", e.enforce, "root")

        # --- dict attributes and tenant-scoped roles -------------------
        tenant_model, tenant_policy = fixture("tenant")
        t = pml.Enforcer(tenant_model, tenant_policy)
        vm = {"tenant": "tenant1", "name": "vm1"}
        check(t.enforce(["Alice", vm, "use"]), "tenant1 admin may use")
        check(t.enforce(["Alice", vm, "manage"]), "tenant1 admin may manage")
        check(not t.enforce(["Alice", {"tenant": "tenant2", "name": "vm1"}, "manage"]),
              "tenant2 user may not manage")

        # --- fail-closed: missing attribute denies, error is reported --
        detail = t.enforce_detail(["Alice", {"name": "vm1"}, "use"])
        check(detail["allowed"] is False, "missing attribute denies")
        check("r.obj.tenant" in detail["error"], "error names the attribute")

        # --- fail-closed: step budget ----------------------------------
        tiny = pml.Enforcer(rmd_model, rmd_policy, step_budget=3)
        detail = tiny.enforce_detail(["root", "/policy", "GET"])
        check(detail["allowed"] is False, "tiny budget denies")
        check("step limit" in detail["error"], "error names the step limit")

        # --- runtime mutations ------------------------------------------
        check(e.revision == 0, "fresh enforcer revision")
        check(e.add_policy(["user", "/reports", "GET"]), "add_policy")
        check(not e.add_policy(["user", "/reports", "GET"]), "duplicate add is a no-op")
        check(e.enforce(["user", "/reports", "GET"]), "added rule takes effect")
        check(e.add_role_link("g", "guest", "user"), "add_role_link")
        check(e.enforce(["guest", "/reports", "GET"]), "new member inherits")
        check(e.remove_role_link("g", "guest", "user"), "remove_role_link")
        check(not e.enforce(["guest", "/reports", "GET"]), "membership revoked")
        check(e.remove_policy(["user", "/reports", "GET"]), "remove_policy")
        check(not e.enforce(["user", "/reports", "GET"]), "removed rule gone")
        check(e.revision == 4, "revision counts effective mutations")
        check("p, user, /reports, GET" not in e.policy_text(), "policy text is current")

        # --- Python-registered matcher functions ------------------------
        abac_model = """\
r = sub, obj, act
p = sub, obj, act
m = r.sub == p.sub && starts_with(r.obj, p.obj) && r.act == p.act
e = some(where (p.eft == allow))
"""
        f = pml.Enforcer(
            abac_model,
            "p, alice, /data/, read\n",
            functions={"starts_with": lambda s, prefix: s.startswith(prefix)},
        )
        check(f.enforce(["alice", "/data/report.csv", "read"]), "python stub allows")
        check(not f.enforce(["alice", "/etc/passwd", "read"]), "python stub denies")

        # A raising stub denies and surfaces the function name.
        def boom(s, prefix):
            raise RuntimeError("kaboom")

        g = pml.Enforcer(abac_model, "p, alice, /data/, read\n",
                         functions={"starts_with": boom})
        detail = g.enforce_detail(["alice", "/data/report.csv", "read"])
        check(detail["allowed"] is False, "raising stub denies")
        check("starts_with" in detail["error"] and "kaboom" in detail["error"],
              "error carries the Python exception")

        # --- module-level helpers ---------------------------------------
        check(pml.key_match("/cache/l1/2", "/cache/*"), "key_match spans segments")
        check(not pml.key_match("/cachex", "/cache/*"), "key_match respects separators")
        check(pml.regex_match("GET", "(GET)|(POST)"), "regex_match anchored hit")
        check(not pml.regex_match("GETX", "(GET)|(POST)"), "regex_match anchored miss")
        check_raises(ValueError, "bad regex pattern raises", pml.regex_match, "x", "(")
        check(pml.DEFAULT_STEP_BUDGET == 10_000, "default step budget exported")

    print(f"ok: {CHECKS} checks passed")


if __name__ == "__main__":
    main()
