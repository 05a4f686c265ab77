"""Acceptance criteria, each run at its stated size and tolerance.

Every test records a one-line verdict that appears in the terminal summary
under "acceptance criteria".
"""
import json
import math
import time

import pytest

from levyregen.scenarios import BUILTINS, run_scenario

SECOND_SEED = 977

_cache = {}


def full(name, out_dir):
    """Run a built-in once per session at its default size."""
    if name not in _cache:
        start = time.perf_counter()
        result = run_scenario(name, out_dir)
        _cache[name] = (result, time.perf_counter() - start)
    return _cache[name]


@pytest.fixture(scope="module")
def out_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def test_c01_glued_law_equals_direct_law(out_dir, record):
    result, seconds = full("regen-verify", out_dir)
    report = result.outcome.reports["law_equality"]
    stalls = sum(p["stalled"] for p in result.outcome.details["pairs"])
    ok = report.overall_verdict and seconds <= 600 and stalls == 0
    record(1, ok, f"3 models x 4 rules, {len(report.entries)} tests, min p_adj="
                  f"{report.min_adjusted_p:.3g}, stalls={stalls}, {seconds:.0f}s")
    assert report.overall_verdict
    assert stalls == 0
    assert seconds <= 600


def test_c02_killing_laws(out_dir, record):
    result, _ = full("killing-laws", out_dir)
    entries = result.outcome.reports["lifetimes"].entries
    surv = result.outcome.details["survival"]
    ok = all(e.p > 0.01 for e in entries) and surv["gap"] <= 0.015
    record(2, ok, "lifetime KS p=" + ", ".join(f"{e.p:.3g}" for e in entries)
           + f"; |P(zeta>1) - exp(-0.7)|={surv['gap']:.4f}")
    assert all(e.p > 0.01 for e in entries)
    assert surv["gap"] <= 0.015


def test_c03_counterexamples_reject(out_dir, record):
    half, _ = full("cx-half-jump", out_dir)
    zero, _ = full("cx-last-zero", out_dir)
    p_adj = half.outcome.reports["law_equality"].min_adjusted_p
    ratios = [zero.outcome.details["ratio"], zero.outcome.details["doubled"]["ratio"]]
    ok = p_adj < 1e-6 and min(ratios) >= 5
    record(3, ok, f"half-jump min p_adj={p_adj:.3g}; last-zero occupation ratio "
                  f"{ratios[0]:.1f} (doubled run {ratios[1]:.1f})")
    assert p_adj < 1e-6
    assert min(ratios) >= 5


def test_c04_infimum_identity(out_dir, record):
    literal, _ = full("cx-williams", out_dir)
    depth, _ = full("cx-williams-depth", out_dir)
    rep = literal.outcome.reports["williams"]
    time_p = rep.entries[0].p
    pre_ok = all(not e.reject for e in rep.entries[1:])
    ok = time_p > 0.01 and pre_ok
    record(4, ok, f"infimum time vs Exp(2c) KS p={time_p:.3g}, pre-infimum family "
                  f"{'passes' if pre_ok else 'rejects'}; depth variant "
                  f"{depth.computed} (min p_adj={depth.outcome.reports['williams'].min_adjusted_p:.3g})")
    assert time_p > 0.01
    assert pre_ok


def test_c05_jump_counts_poisson(out_dir, record):
    result, _ = full("jump-counts", out_dir)
    parts = []
    ok = True
    for atom, info in result.outcome.details.items():
        for source in ("direct", "glued"):
            d = info[source]
            ok &= d["mean_within_3se"] and 0.9 <= d["dispersion"] <= 1.1
            parts.append(f"{atom} {source}: mean {d['mean']:.3f}, disp {d['dispersion']:.3f}")
    record(5, ok, "; ".join(parts))
    assert ok


def test_c06_decomposition(out_dir, record):
    trip, _ = full("decompose-roundtrip", out_dir)
    kill, _ = full("cx-killed-vs-cp", out_dir)
    counts = trip.outcome.details["counts"]
    n = trip.outcome.details["trials"]
    checks = kill.outcome.details["checks"]
    ok = n == 1000 and all(v == n for v in counts.values()) and all(checks.values())
    record(6, ok, f"{n} round-trips {counts}; killed-vs-CP checks all hold: {all(checks.values())}")
    assert n == 1000
    assert all(v == n for v in counts.values())
    assert all(checks.values())


def test_c07_chain_analogue(out_dir, record):
    result, _ = full("ctmc-verify", out_dir)
    rep = result.outcome.reports["law_equality"]
    d = result.outcome.details
    ok = rep.overall_verdict and d["stalled_runs"] == 0 and d["degenerate"]["stalled"]
    record(7, ok, f"{len(rep.entries)} chi-squares, min p_adj={rep.min_adjusted_p:.3g}; "
                  f"degenerate chain stalled={d['degenerate']['stalled']} after "
                  f"{d['degenerate']['segments_used']} segments")
    assert ok


def test_c08_strong_markov(out_dir, record):
    result, _ = full("strong-markov", out_dir)
    ok = True
    parts = []
    for label, rep in result.outcome.reports.items():
        if result.outcome.details[label]["expected"] == "pass":
            good = all(e.p > 0.01 for e in rep.entries)
            parts.append(f"{label} min p={min(e.p for e in rep.entries):.3g}")
        else:
            good = rep.min_adjusted_p < 1e-3
            parts.append(f"{label} min p_adj={rep.min_adjusted_p:.3g}")
        ok &= good
    record(8, ok, "; ".join(parts))
    assert ok


def test_c09_adaptedness(out_dir, record):
    result, _ = full("adaptedness", out_dir)
    d = result.outcome.details
    ok = all(v["as_expected"] for v in d.values()) and all(v["pairs"] == 10000 for v in d.values())
    record(9, ok, "; ".join(f"{k} {v['passed']}/{v['pairs']}" if v["adapted"]
                            else f"{k} first violation at pair {v['first_violation']}"
                            for k, v in d.items()))
    assert ok


def test_c10_reproducibility(out_dir, tmp_path, record):
    # byte-identical reruns; the two heaviest flows rerun at reduced size
    reduced = {"regen-verify": {"n": 2000, "death_segments": 2000}, "ctmc-verify": {"n": 2000}}
    mismatched = []
    for name in BUILTINS:
        if name in reduced:
            cfg = {"builtin": name, "params": reduced[name]}
            first = run_scenario(cfg, tmp_path / "a").report_text()
        else:
            first = full(name, out_dir)[0].report_text()
            cfg = name
        if run_scenario(cfg, tmp_path / "b").report_text() != first:
            mismatched.append(name)
        saved = (tmp_path / "b" / name / "report.json").read_text()
        assert json.loads(saved)["scenario"]["name"] == name
    flipped = []
    for name in BUILTINS:
        cfg = BUILTINS[name].to_json()
        cfg["seed"] = SECOND_SEED
        again = run_scenario(cfg)
        if again.computed != full(name, out_dir)[0].computed:
            flipped.append(name)
    ok = not mismatched and not flipped
    record(10, ok, f"byte-identical reruns of {len(BUILTINS)} scenarios (mismatches: {mismatched or 'none'}); "
                   f"seed {SECOND_SEED} verdict changes: {flipped or 'none'}")
    assert not mismatched
    assert not flipped
