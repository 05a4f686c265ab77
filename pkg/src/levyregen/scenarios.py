"""Named verification scenarios and the runner behind ``levyregen run``.

A scenario is a JSON object ``{"name", "flow", "seed", "expected", "params"}``
(or ``{"builtin": name, ...overrides}``).  Every flow returns a computed
verdict, ``"pass"`` or ``"reject"``; the run succeeds when it equals the
declared ``expected`` verdict.  Reports are deterministic functions of the
configuration, so equal configs give byte-identical files.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ctmc
from .decompose import (add_killing, cf_consistency, convolve_laws, jump_count_statistics,
                        models_match, reconcile)
from .levy_core import (DEFAULT_HORIZON, DEFAULT_STEP, AtomicJumpMeasure, LevyModel, grid_index,
                        simulate)
from .regen import (direct_marginals, iter_concatenated, iter_direct, law_equality_tests,
                    regen_marginals, stopped_after_death, strong_markov_diagnostic)
from .rng import STREAM_AUX, STREAM_DIRECT, STREAM_FRESH, STREAM_REGEN, derive_seed, generator
from .stats import (TestReport, chi_square_gof, chi_square_homogeneity, ks_one_sample,
                    ks_two_sample, poisson_dispersion)
from .stopping import (Deterministic, FirstJump, InfimumTime, LastZero, adaptedness_harness,
                       rule_from_json, rule_to_json)

VERDICTS = ("pass", "reject")
MAX_PATHS = 1_000_000
OUTPUT_ENV = "LEVYREGEN_OUTPUT_DIR"
DEFAULT_OUTPUT = "levyregen-out"
# discrete monitoring of a Brownian minimum overshoots by about this many sqrt(h)
GRID_MIN_SHIFT = 0.5826


class ConfigError(ValueError):
    """Malformed or unknown scenario configuration."""


@dataclass
class FlowResult:
    computed: str
    reports: dict[str, TestReport] = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    tables: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    name: str
    flow: str
    seed: int
    expected: str
    params: dict
    description: str = ""

    def to_json(self) -> dict:
        return {"name": self.name, "flow": self.flow, "seed": self.seed,
                "expected": self.expected, "params": self.params, "description": self.description}


@dataclass
class ScenarioResult:
    scenario: Scenario
    outcome: FlowResult

    @property
    def computed(self) -> str:
        return self.outcome.computed

    @property
    def matches(self) -> bool:
        return self.outcome.computed == self.scenario.expected

    def report_json(self) -> dict:
        return {
            "scenario": self.scenario.to_json(),
            "computed": self.outcome.computed,
            "expected": self.scenario.expected,
            "match": self.matches,
            "reports": {k: v.to_json() for k, v in self.outcome.reports.items()},
            "details": self.outcome.details,
        }

    def report_text(self) -> str:
        return dumps(self.report_json())


def _clean(obj):
    """JSON-safe copy: NaN and infinities become strings, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Parameter helpers
# ---------------------------------------------------------------------------


def _model(spec) -> LevyModel:
    try:
        return LevyModel.from_json(spec)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid model: {exc}") from exc


def _rule(spec):
    try:
        return rule_from_json(spec)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid rule: {exc}") from exc


def _size(value, name) -> int:
    if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= MAX_PATHS:
        raise ConfigError(f"{name} must be an integer in [1, {MAX_PATHS}], got {value!r}")
    return value


def _verdict(ok: bool) -> str:
    return "pass" if ok else "reject"


def _marginal_rows(label, source, values, times):
    n, _, d = values.shape
    for i in range(n):
        for j, t in enumerate(times):
            v = values[i, j]
            dead = math.isnan(v[0])
            yield [label, source, i, t, *([""] * d if dead else [float(x) for x in v]),
                   "CEMETERY" if dead else "POINT"]


BM_CP = LevyModel.from_parts(0.3, 1.0, [(1.0, 1.0), (-1.0, 1.0)])
REGEN_MODELS = [
    {"label": "BM", "model": LevyModel.brownian(0.3, 1.0).to_json()},
    {"label": "BM+CP", "model": BM_CP.to_json()},
    {"label": "BM+CP+kill", "model": LevyModel.from_parts(0.3, 1.0, [(1.0, 1.0), (-1.0, 1.0)],
                                                          kill_rate=0.7).to_json()},
]
REGEN_RULES = [{"det": 1.0}, {"first_exit": 1.0}, {"first_jump": True},
               {"min": [{"first_exit": 1.0}, {"det": 1.0}]}]


# ---------------------------------------------------------------------------
# Flows
# ---------------------------------------------------------------------------


def flow_regen_verify(p: dict, seed: int) -> FlowResult:
    """Glued versus direct marginals for every (model, rule) pair, one Holm family."""
    times = [float(t) for t in p["times"]]
    n = _size(p["n"], "n")
    horizon, step = float(p["horizon"]), float(p["step"])
    tests, details, rows = [], {"pairs": []}, []
    death_ok = True
    for mi, mspec in enumerate(p["models"]):
        model = _model(mspec["model"])
        label_m = mspec.get("label", f"model{mi}")
        direct = direct_marginals(model, times, n, derive_seed(seed, STREAM_DIRECT, mi), horizon, step)
        if p["dump_marginals"]:
            rows.extend(_marginal_rows(label_m, "X", direct.values, times))
        for ri, rspec in enumerate(p["rules"]):
            rule = _rule(rspec)
            label = f"{label_m} / {rule.label}"
            glued = regen_marginals(model, rule, times, n, derive_seed(seed, STREAM_REGEN, mi, ri),
                                    horizon, step)
            tests.extend(law_equality_tests(label, glued.values, direct.values, times))
            pair = {"model": label_m, "rule": rule.label, "stalled": glued.n_stalled,
                    "mean_segments": glued.n_segments / n,
                    "fraction_identically_zero": float(np.mean(np.all(glued.values == 0, axis=(1, 2))))}
            if model.is_killed and rule.adapted:
                hits = stopped_after_death(model, rule, p["death_segments"],
                                           derive_seed(seed, STREAM_FRESH, mi, ri), horizon, step)
                pair["segments_with_T_ge_zeta"] = hits
                death_ok &= hits >= 1
            details["pairs"].append(pair)
            if p["dump_marginals"]:
                rows.extend(_marginal_rows(label, "Y", glued.values, times))
    report = TestReport.from_tests(tests, p["family_alpha"])
    details["min_p_adj"] = report.min_adjusted_p
    stalls = sum(pair["stalled"] for pair in details["pairs"])
    ok = report.overall_verdict and death_ok and stalls == 0
    tables = {}
    if p["dump_marginals"]:
        d = max(_model(m["model"]).d for m in p["models"])
        header = ["sample", "source", "path", "time", *(f"coordinate_{i + 1}" for i in range(d)), "state"]
        tables["marginals.csv"] = _csv(header, rows)
    return FlowResult(_verdict(ok), {"law_equality": report}, details, tables)


def flow_williams(p: dict, seed: int) -> FlowResult:
    """Time (or depth) of the overall infimum of BM(+c) and the pre-infimum marginals.

    ``mode="time"`` checks the infimum time against Exp(2c) and compares the
    pre-infimum marginals with BM(-c) killed at an independent Exp(2c) time.
    ``mode="depth"`` checks the infimum depth against Exp(2c) and compares
    with BM(-c) stopped on hitting an independent Exp(2c) level.
    """
    c, horizon, step = float(p["c"]), float(p["horizon"]), float(p["step"])
    n = _size(p["n"], "n")
    times = [float(t) for t in p["times"]]
    mode = p["mode"]
    if mode not in ("time", "depth"):
        raise ConfigError("mode must be 'time' or 'depth'")
    up = LevyModel.brownian(c, 1.0)
    rule = InfimumTime(horizon)
    nodes = [grid_index(t, step) for t in times]
    shift = GRID_MIN_SHIFT * math.sqrt(step)

    stats_a, pre = [], [[] for _ in times]
    for i in range(n):
        x = simulate(up, horizon, step, derive_seed(seed, STREAM_DIRECT, i))
        k = rule.node_index(x)
        stats_a.append(k * step if mode == "time" else -x.points[k, 0] + shift)
        for j, node in enumerate(nodes):
            if node < k:
                pre[j].append(x.points[node, 0])
    stats_a = np.array(stats_a)
    rate = 2.0 * c
    tests = [(f"infimum {mode} vs Exp({rate:g})",
              *ks_one_sample(stats_a, lambda s: 1.0 - np.exp(-rate * np.maximum(s, 0.0))))]

    down_h = max(times)
    oracle = [[] for _ in times]
    if mode == "time":
        killed = LevyModel.brownian(-c, 1.0, kill_rate=rate)
        for i in range(n):
            w = simulate(killed, down_h, step, derive_seed(seed, STREAM_FRESH, i))
            for j, node in enumerate(nodes):
                if w.alive(node):
                    oracle[j].append(w.points[node, 0])
    else:
        down = LevyModel.brownian(-c, 1.0)
        for i in range(n):
            w = simulate(down, down_h, step, derive_seed(seed, STREAM_FRESH, i))
            level = generator(derive_seed(seed, STREAM_AUX, i)).exponential(1.0 / rate)
            running_min = np.minimum.accumulate(w.points[:, 0])
            for j, node in enumerate(nodes):
                # alive while the monitored minimum stays above the shifted level
                if running_min[node] > -level + shift:
                    oracle[j].append(w.points[node, 0])
    for j, t in enumerate(times):
        tests.append((f"pre-infimum marginal t={t:g}", *ks_two_sample(pre[j], oracle[j])))
    report = TestReport.from_tests(tests, p["family_alpha"])

    details = {"mode": mode, "mean_statistic": float(stats_a.mean()), "exp_mean": 1.0 / rate,
               "pre_counts": [len(v) for v in pre], "oracle_counts": [len(v) for v in oracle]}
    if p["bias_n"]:
        # the same statistic on a longer horizon; the two should agree
        long_h = float(p["bias_horizon"])
        long_rule = InfimumTime(long_h)
        long_stats = []
        for i in range(_size(p["bias_n"], "bias_n")):
            x = simulate(up, long_h, step, derive_seed(seed, STREAM_AUX, 1, i))
            k = long_rule.node_index(x)
            long_stats.append(k * step if mode == "time" else -x.points[k, 0] + shift)
        d, pv = ks_two_sample(stats_a, long_stats)
        details["bias_check"] = {"horizon": long_h, "mean": float(np.mean(long_stats)), "ks_stat": d, "p": pv}
    tables = {"infimum.csv": _csv(["path", mode], enumerate(stats_a))}
    return FlowResult(_verdict(report.overall_verdict), {"williams": report}, details, tables)


def flow_marginal_at_stop(p: dict, seed: int) -> FlowResult:
    """BM and the zero process agree at a first-return time but not at a fixed time."""
    horizon, step = float(p["horizon"]), float(p["step"])
    n = _size(p["n"], "n")
    k0 = grid_index(p["start"], step)
    kt = grid_index(p["fixed_time"], step)
    bm = LevyModel.brownian(0.0, 1.0)
    s_bm, v_bm, s_zero, v_zero, x_fixed = [], [], [], [], []
    for i in range(n):
        x = simulate(bm, horizon, step, derive_seed(seed, STREAM_DIRECT, i)).points[:, 0]
        tail = x[k0:]
        idx = np.flatnonzero(tail[:-1] * tail[1:] <= 0)
        if idx.size:
            k = k0 + int(idx[0])
            a, b = x[k], x[k + 1]
            # the zero crossing between nodes k and k+1, by linear interpolation
            frac = 0.0 if a == b else a / (a - b)
            s = (k + frac) * step
            value = a + frac * (b - a)
            value = 0.0 if abs(value) < 1e-12 else value
        else:
            s, value = math.inf, 0.0
        s_bm.append(s)
        v_bm.append(value)
        # the zero process read at the same coupled time
        s_zero.append(s)
        v_zero.append(0.0)
        x_fixed.append(x[kt])
    s_bm, s_zero = np.array(s_bm), np.array(s_zero)
    fin_bm, fin_zero = np.isfinite(s_bm), np.isfinite(s_zero)
    at_s = [
        ("S finite", *chi_square_homogeneity([fin_bm.sum(), (~fin_bm).sum()],
                                             [fin_zero.sum(), (~fin_zero).sum()])),
        ("S given finite", *ks_two_sample(s_bm[fin_bm], s_zero[fin_zero])),
        ("value at S", *ks_two_sample(v_bm, v_zero)),
    ]
    fixed = [(f"value at t={p['fixed_time']:g}", *ks_two_sample(x_fixed, np.zeros(n)))]
    r_at = TestReport.from_tests(at_s, p["family_alpha"])
    r_fixed = TestReport.from_tests(fixed, p["family_alpha"])
    ok = r_at.overall_verdict and not r_fixed.overall_verdict
    details = {"fraction_S_finite": float(fin_bm.mean())}
    tables = {"at_S.csv": _csv(["path", "S", "bm_value", "zero_value"],
                               ([i, s_bm[i], v_bm[i], v_zero[i]] for i in range(n)))}
    return FlowResult(_verdict(ok), {"at_S": r_at, "fixed_time": r_fixed}, details, tables)


def _occupation(path, band: float) -> float:
    x = path.points[:, 0]
    return float(np.mean(np.abs(x) < band))


def flow_last_zero(p: dict, seed: int) -> FlowResult:
    """Gluing at the last zero of BM with negative drift makes 0 recurrent."""
    horizon, step = float(p["horizon"]), float(p["step"])
    n = _size(p["n"], "n")
    band = float(p["band"])
    model = LevyModel.brownian(float(p["drift"]), 1.0)
    rule = LastZero(horizon)

    def run(n_paths, sub):
        y = np.array([_occupation(o.path, band) for o in
                      iter_concatenated(model, rule, n_paths, derive_seed(seed, STREAM_REGEN, sub),
                                        horizon, step)])
        x = np.array([_occupation(path, band) for path in
                      iter_direct(model, n_paths, derive_seed(seed, STREAM_DIRECT, sub), horizon, step)])
        return y, x

    y, x = run(n, 0)
    ratio = y.mean() / x.mean() if x.mean() > 0 else math.inf
    details = {"mean_fraction_Y": float(y.mean()), "mean_fraction_X": float(x.mean()), "ratio": ratio}
    ratios = [ratio]
    if p["doubled"]:
        y2, x2 = run(2 * n, 1)
        r2 = y2.mean() / x2.mean() if x2.mean() > 0 else math.inf
        details["doubled"] = {"n": 2 * n, "mean_fraction_Y": float(y2.mean()),
                              "mean_fraction_X": float(x2.mean()), "ratio": r2}
        ratios.append(r2)
    details["threshold"] = float(p["ratio_threshold"])
    report = TestReport.from_tests([("occupation fraction Y vs X", *ks_two_sample(y, x))],
                                   p["family_alpha"])
    separated = min(ratios) >= float(p["ratio_threshold"])
    tables = {"occupation.csv": _csv(["path", "fraction_Y", "fraction_X"],
                                     ([i, y[i], x[i]] for i in range(n)))}
    return FlowResult("reject" if separated else "pass", {"occupation": report}, details, tables)


def flow_reconcile(p: dict, seed: int) -> FlowResult:
    """Reconcile two models and compare the decomposition with the declared one."""
    a, b = _model(p["model_a"]), _model(p["model_b"])
    rep = reconcile(a, b)
    exp = p["expect"]
    checks = {"equivalent": rep.equivalent_mod_cp_kill == bool(exp.get("equivalent", True))}
    if rep.common_law is not None:
        checks["reassembly_a"] = models_match(rep.reassemble("a"), a)
        checks["reassembly_b"] = models_match(rep.reassemble("b"), b)
    if "residual_a" in exp:
        checks["residual_a"] = rep.residual_a.atoms == AtomicJumpMeasure.from_json(exp["residual_a"], a.d).atoms
    if "residual_b" in exp:
        checks["residual_b"] = rep.residual_b.atoms == AtomicJumpMeasure.from_json(exp["residual_b"], a.d).atoms
    for key in ("kill_a", "kill_b"):
        if key in exp:
            checks[key] = getattr(rep, key) == float(exp[key])
    if "common_law" in exp:
        checks["common_law"] = rep.common_law is not None and models_match(rep.common_law, _model(exp["common_law"]))
    reports = {}
    n = p["n"]
    if n:
        # the law-level claim seen in samples: P(a_t = 0) against P(b alive at t)
        t = float(p["t"])
        step = float(p["step"])
        k = grid_index(t, step)
        za = sum(simulate(a, t, step, derive_seed(seed, STREAM_DIRECT, i)).points[k, 0] == 0 for i in range(n))
        zb = sum(simulate(b, t, step, derive_seed(seed, STREAM_FRESH, i)).alive(k) for i in range(n))
        reports["zero_vs_alive"] = TestReport.from_tests(
            [(f"P(a_t = 0) vs P(b alive at t), t={t:g}", *chi_square_homogeneity([za, n - za], [zb, n - zb]))],
            p["family_alpha"])
        checks["zero_vs_alive"] = reports["zero_vs_alive"].overall_verdict
    ok = all(checks.values())
    return FlowResult(_verdict(ok), reports, {"reconciliation": rep.to_json(), "checks": checks})


_LATTICE = np.arange(-8, 9) / 4.0


def random_cp(rng, d: int, max_atoms: int = 3) -> AtomicJumpMeasure:
    """Random atomic measure on a coarse lattice so that supports often overlap."""
    pairs = []
    for _ in range(int(rng.integers(0, max_atoms + 1))):
        loc = rng.choice(_LATTICE, size=d)
        if np.all(loc == 0):
            continue
        pairs.append((loc, round(float(rng.uniform(0.05, 3.0)), 3)))
    return AtomicJumpMeasure.from_pairs(pairs, dim=d)


def random_common(rng, d: int) -> LevyModel:
    a = rng.normal(size=(d, d))
    sigma = a @ a.T + 0.1 * np.eye(d)
    return LevyModel(rng.normal(size=d), sigma, random_cp(rng, d), 0.0)


def flow_decompose_roundtrip(p: dict, seed: int) -> FlowResult:
    """Randomized reconcile round-trips, perturbation flips and a CF consistency check."""
    trials = _size(p["n_trials"], "n_trials")
    counts = {"verdict_true": 0, "reassembled": 0, "sigma_flip": 0, "drift_flip": 0}
    for i in range(trials):
        rng = generator(derive_seed(seed, STREAM_AUX, i))
        d = int(rng.choice(p["dims"]))
        common = random_common(rng, d)
        q1 = float(rng.choice([0.0, round(float(rng.uniform(0, 2)), 3)]))
        q2 = float(rng.choice([0.0, round(float(rng.uniform(0, 2)), 3)]))
        a = add_killing(convolve_laws(common, LevyModel.compound_poisson(random_cp(rng, d))), q1)
        b = add_killing(convolve_laws(common, LevyModel.compound_poisson(random_cp(rng, d))), q2)
        rep = reconcile(a, b)
        counts["verdict_true"] += rep.equivalent_mod_cp_kill
        if rep.equivalent_mod_cp_kill:
            counts["reassembled"] += models_match(rep.reassemble("a"), a) and models_match(rep.reassemble("b"), b)
        b_sigma = LevyModel(b.gamma, 1.1 * b.sigma_array, b.jumps, b.kill_rate)
        counts["sigma_flip"] += not reconcile(a, b_sigma).equivalent_mod_cp_kill
        bump = np.zeros(d)
        bump[int(rng.integers(d))] = float(p["drift_perturbation"])
        b_drift = LevyModel(b.gamma_array + bump, b.sigma, b.jumps, b.kill_rate)
        counts["drift_flip"] += not reconcile(a, b_drift).equivalent_mod_cp_kill

    common = LevyModel.from_parts(0.2, 0.5, [(0.5, 1.0), (2.0, 0.5)])
    a = add_killing(convolve_laws(common, LevyModel.compound_poisson([(0.5, 1.0), (-0.25, 2.0)])), 0.3)
    b = convolve_laws(common, LevyModel.compound_poisson([(1.5, 1.0)]))
    cf = cf_consistency(reconcile(a, b), float(p["cf_t"]), p["cf_freqs"], _size(p["cf_n"], "cf_n"),
                        derive_seed(seed, STREAM_FRESH))
    ok = all(v == trials for v in counts.values()) and all(c.ok for c in cf)
    details = {"trials": trials, "counts": counts,
               "cf": [{"u": c.u, "delta": c.delta, "se": c.se, "ok": c.ok} for c in cf]}
    return FlowResult(_verdict(ok), {}, details)


def flow_jump_counts(p: dict, seed: int) -> FlowResult:
    """Poisson structure of jump counts on direct and glued paths."""
    model = _model(p["model"])
    rule = _rule(p["rule"])
    n = _size(p["n"], "n")
    horizon, step = float(p["horizon"]), float(p["step"])
    interval = tuple(p["interval"])
    sources = {
        "direct": list(iter_direct(model, n, derive_seed(seed, STREAM_DIRECT), horizon, step)),
        "glued": [o.path for o in iter_concatenated(model, rule, n, derive_seed(seed, STREAM_REGEN),
                                                    horizon, step)],
    }
    tests, details, ok = [], {}, True
    lo, hi = interval
    for atom in p["atoms"]:
        loc = atom if isinstance(atom, list) else [atom]
        expected_mean = float(sum(m for l, m in model.jumps if l == tuple(float(v) for v in loc))) * (hi - lo)
        per = {}
        for name, paths in sources.items():
            summary = jump_count_statistics(paths, [loc], interval)
            mean, disp = poisson_dispersion(summary.counts)
            within = abs(mean - expected_mean) <= 3 * summary.sem
            disp_ok = 0.9 <= disp <= 1.1
            ok &= within and disp_ok
            kmax = int(summary.counts.max()) + 1
            observed = np.bincount(summary.counts, minlength=kmax + 1).astype(float)
            pmf = _poisson_pmf(expected_mean, kmax)
            tests.append((f"{name} counts at {loc} vs Poisson({expected_mean:g})",
                          *chi_square_gof(observed, pmf * n)))
            per[name] = {"mean": mean, "sem": summary.sem, "dispersion": disp,
                         "mean_within_3se": within, "dispersion_in_band": disp_ok,
                         "counts": summary.counts}
        m = max(int(per["direct"]["counts"].max()), int(per["glued"]["counts"].max())) + 1
        tests.append((f"glued vs direct counts at {loc}",
                      *chi_square_homogeneity(np.bincount(per["glued"]["counts"], minlength=m),
                                              np.bincount(per["direct"]["counts"], minlength=m))))
        for v in per.values():
            v.pop("counts")
        details[f"atom {loc}"] = {"expected_mean": expected_mean, **per}
    report = TestReport.from_tests(tests, p["family_alpha"])
    ok &= report.overall_verdict
    return FlowResult(_verdict(ok), {"jump_counts": report}, details)


def _poisson_pmf(mean: float, kmax: int) -> np.ndarray:
    """Poisson pmf on ``0..kmax-1`` with the upper tail folded into the last cell."""
    k = np.arange(kmax)
    logp = -mean + k * math.log(mean) - np.array([math.lgamma(j + 1) for j in k])
    pmf = np.exp(logp)
    return np.append(pmf, max(0.0, 1.0 - pmf.sum()))


def flow_strong_markov(p: dict, seed: int) -> FlowResult:
    """Strong Markov diagnostics; each case declares whether it should pass or reject."""
    reports, details, ok = {}, {}, True
    for ci, case in enumerate(p["cases"]):
        model = _model(case["model"])
        rule = _rule(case["rule"])
        expect = case.get("expected", "pass")
        if expect not in VERDICTS:
            raise ConfigError(f"case expected verdict must be one of {VERDICTS}")
        rep = strong_markov_diagnostic(model, rule, _size(case.get("n", p["n"]), "n"),
                                       derive_seed(seed, ci), float(case.get("delta", 1.0)),
                                       horizon=case.get("horizon"), step=float(p["step"]),
                                       family_alpha=p["family_alpha"])
        label = f"case{ci} {rule.label}"
        reports[label] = rep
        if expect == "pass":
            got = rep.overall_verdict
        else:
            got = rep.min_adjusted_p < float(p["reject_below"])
        details[label] = {"expected": expect, "matched": bool(got), "min_p_adj": rep.min_adjusted_p}
        ok &= bool(got)
    return FlowResult(_verdict(ok), reports, details)


def flow_adaptedness(p: dict, seed: int) -> FlowResult:
    """Stopping-time property on spliced pairs: adapted rules never fail, others do."""
    model = _model(p["model"])
    rules = [_rule(r) for r in p["rules"]]
    results = adaptedness_harness(rules, model, _size(p["n_pairs"], "n_pairs"), seed,
                                  float(p["horizon"]), float(p["step"]))
    ok = True
    details = {}
    for r in results:
        good = r.all_pass if r.adapted_flag else r.first_violation is not None
        ok &= good
        details[r.rule] = {"adapted": r.adapted_flag, "pairs": r.n_pairs, "passed": r.n_pass,
                           "first_violation": r.first_violation, "as_expected": good}
    return FlowResult(_verdict(ok), {}, details)


def flow_killing_laws(p: dict, seed: int) -> FlowResult:
    """Lifetimes against Exp(q) and the survival probability at one time."""
    n = _size(p["n"], "n")
    step = float(p["step"])
    tests, details = [], {}
    for qi, q in enumerate(p["rates"]):
        model = LevyModel.brownian(0.0, 1.0, kill_rate=float(q))
        life = np.array([simulate(model, step, step, derive_seed(seed, qi, i)).lifetime for i in range(n)])
        tests.append((f"lifetime vs Exp({q:g})",
                      *ks_one_sample(life, lambda t, q=float(q): 1.0 - np.exp(-q * t))))
        details[f"q={q:g}"] = {"mean_lifetime": float(life.mean())}
    sc = p["survival_check"]
    q, t = float(sc["q"]), float(sc["t"])
    model = LevyModel.brownian(0.0, 1.0, kill_rate=q)
    k = grid_index(t, step)
    alive = np.mean([simulate(model, t, step, derive_seed(seed, STREAM_AUX, i)).alive(k)
                     for i in range(n)])
    gap = abs(alive - math.exp(-q * t))
    details["survival"] = {"q": q, "t": t, "p_hat": float(alive), "exact": math.exp(-q * t), "gap": gap}
    report = TestReport.from_tests(tests, p["family_alpha"])
    ok = report.overall_verdict and gap <= float(sc["tol"])
    return FlowResult(_verdict(ok), {"lifetimes": report}, details)


def flow_ctmc_verify(p: dict, seed: int) -> FlowResult:
    """Chain gluing versus direct simulation from every start, plus the stall detector."""
    try:
        Q = ctmc.RateMatrix.from_json(p["Q"])
        rules = [ctmc.ctmc_rule_from_json(r) for r in p["rules"]]
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    n = _size(p["n"], "n")
    horizon = float(p["horizon"])
    times = [float(t) for t in p["times"]]
    starts = p["starts"] if p["starts"] is not None else list(range(Q.n_states))
    tests, stalls, rows = [], 0, []
    for x in starts:
        direct = list(ctmc.iter_ctmc_direct(Q, x, horizon, n, derive_seed(seed, STREAM_DIRECT, x)))
        dcounts = {t: ctmc.state_counts(direct, t, Q.n_states) for t in times}
        for ri, rule in enumerate(rules):
            rlabel = json.dumps(ctmc.ctmc_rule_to_json(rule), sort_keys=True)
            outs = list(ctmc.iter_ctmc_regen(Q, rule, x, horizon, n, derive_seed(seed, STREAM_REGEN, x, ri)))
            stalls += sum(o.stalled for o in outs)
            for t in times:
                gcounts = ctmc.state_counts([o.path for o in outs], t, Q.n_states)
                tests.append((f"start {x} / {rlabel} / t={t:g}", *chi_square_homogeneity(gcounts, dcounts[t])))
                rows.append([x, rlabel, t, "glued", *gcounts.astype(int)])
                rows.append([x, rlabel, t, "direct", *dcounts[t].astype(int)])
    report = TestReport.from_tests(tests, p["family_alpha"])
    deg = p["degenerate"]
    fast = ctmc.RateMatrix.from_off_diagonal([[0.0, deg["rate"]], [deg["rate"], 0.0]])
    deg_out = ctmc.concatenate_ctmc(fast, ctmc.ctmc_rule_from_json(deg["rule"]), 0, float(deg["horizon"]),
                                    derive_seed(seed, STREAM_AUX))
    details = {"stalled_runs": stalls, "degenerate": {"stalled": deg_out.stalled,
                                                     "segments_used": deg_out.segments_used,
                                                     "reached": deg_out.regeneration_times[-1]
                                                     if deg_out.regeneration_times else 0.0}}
    ok = report.overall_verdict and stalls == 0 and deg_out.stalled
    header = ["start", "rule", "time", "source", *(f"state_{i}" for i in range(Q.n_states)), "cemetery"]
    return FlowResult(_verdict(ok), {"law_equality": report}, details, {"state_counts.csv": _csv(header, rows)})


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------


FLOWS = {
    "regen-verify": (flow_regen_verify, {
        "models": REGEN_MODELS, "rules": REGEN_RULES, "times": [0.5, 1.0, 2.0, 4.0], "n": 20000,
        "horizon": DEFAULT_HORIZON, "step": DEFAULT_STEP, "family_alpha": 0.01,
        "death_segments": 20000, "dump_marginals": True}),
    "williams": (flow_williams, {
        "c": 0.5, "horizon": 20.0, "n": 5000, "times": [0.25, 0.5, 1.0], "step": DEFAULT_STEP,
        "mode": "time", "bias_horizon": 40.0, "bias_n": 1000, "family_alpha": 0.01}),
    "marginal-at-stop": (flow_marginal_at_stop, {
        "horizon": DEFAULT_HORIZON, "step": DEFAULT_STEP, "n": 10000, "start": 1.0, "fixed_time": 2.0,
        "family_alpha": 0.01}),
    "last-zero": (flow_last_zero, {
        "drift": -0.5, "horizon": 200.0, "step": 2.0**-6, "n": 200, "band": 0.1, "ratio_threshold": 5.0,
        "doubled": True, "family_alpha": 0.01}),
    "reconcile": (flow_reconcile, {
        "model_a": None, "model_b": None, "expect": {}, "n": 0, "t": 1.0, "step": DEFAULT_STEP,
        "family_alpha": 0.01}),
    "decompose-roundtrip": (flow_decompose_roundtrip, {
        "n_trials": 1000, "dims": [1, 2], "drift_perturbation": 1e-3, "cf_t": 1.0,
        "cf_freqs": [0.3, 0.7, 1.0, 1.5, 2.0], "cf_n": 20000}),
    "jump-counts": (flow_jump_counts, {
        "model": LevyModel.compound_poisson([(1.0, 1.0), (-1.0, 2.0)]).to_json(),
        "rule": {"min": [{"first_exit": 1.0}, {"det": 0.5}]}, "atoms": [1.0, -1.0], "n": 10000,
        "horizon": 1.0, "step": DEFAULT_STEP, "interval": [0.0, 1.0], "family_alpha": 0.01}),
    "strong-markov": (flow_strong_markov, {
        "cases": [
            {"model": LevyModel.brownian(0.3, 1.0).to_json(), "rule": {"det": 1.0}, "expected": "pass"},
            {"model": LevyModel.brownian(0.0, 1.0).to_json(), "rule": {"first_exit": 1.0}, "expected": "pass"},
            {"model": BM_CP.to_json(), "rule": {"first_jump": True}, "expected": "pass"},
            {"model": LevyModel.brownian(-0.5, 1.0).to_json(), "rule": {"last_zero": 4.0},
             "expected": "reject"},
        ],
        "n": 20000, "step": DEFAULT_STEP, "family_alpha": 0.01, "reject_below": 1e-3}),
    "adaptedness": (flow_adaptedness, {
        "model": BM_CP.to_json(),
        "rules": [{"det": 1.0}, {"first_exit": 1.0}, {"first_jump": True},
                  {"min": [{"first_exit": 1.0}, {"det": 1.0}]}, {"capped": [{"first_jump": True}, 1.0]},
                  {"half_first_jump": True}, {"last_zero": 4.0}, {"infimum_time": 4.0}],
        "n_pairs": 10000, "horizon": DEFAULT_HORIZON, "step": DEFAULT_STEP}),
    "killing-laws": (flow_killing_laws, {
        "rates": [0.3, 0.7], "n": 10000, "step": DEFAULT_STEP,
        "survival_check": {"q": 0.7, "t": 1.0, "tol": 0.015}, "family_alpha": 0.01}),
    "ctmc-verify": (flow_ctmc_verify, {
        "Q": {"rates": [[-2.0, 1.0, 1.0], [1.0, -1.5, 0.5], [0.3, 0.2, -0.5]]},
        "rules": [{"det": 1.0}, {"first_jump": True}, {"first_entry": [0]},
                  {"min": [{"first_jump": True}, {"det": 0.5}]}],
        "starts": None, "times": [0.5, 2.0], "horizon": 2.0, "n": 20000, "family_alpha": 0.01,
        "degenerate": {"rate": 1e6, "rule": {"first_jump": True}, "horizon": 1.0}}),
}


def _builtin(name, flow, expected, description, seed=20240601, **params):
    return Scenario(name, flow, seed, expected, params, description)


BUILTINS: dict[str, Scenario] = {s.name: s for s in [
    _builtin("regen-verify", "regen-verify", "pass",
             "Glued paths match direct simulation for 3 models x 4 adapted rules."),
    _builtin("regen-zero", "regen-verify", "pass",
             "Zero model under Deterministic(1): glued and direct paths are both identically 0.",
             models=[{"label": "zero", "model": LevyModel.zero().to_json()}], rules=[{"det": 1.0}], n=2000),
    _builtin("cx-half-jump", "regen-verify", "reject",
             "Poisson(1) glued at half its first jump time stays at 0.",
             models=[{"label": "Poisson(1)", "model": LevyModel.poisson(1.0).to_json()}],
             rules=[{"half_first_jump": True}]),
    _builtin("cx-williams", "williams", "pass",
             "BM(+c) infimum time against Exp(2c) and pre-infimum marginals against BM(-c) "
             "killed at rate 2c."),
    _builtin("cx-williams-depth", "williams", "pass",
             "BM(+c) infimum depth against Exp(2c) and pre-infimum marginals against BM(-c) "
             "stopped at an independent Exp(2c) level.", mode="depth", step=2.0**-10),
    _builtin("cx-marginal-at-T", "marginal-at-stop", "pass",
             "BM and the zero process agree at a first return to 0 after time 1, not at time 2."),
    _builtin("cx-last-zero", "last-zero", "reject",
             "Gluing BM(-0.5) at its last zero makes 0 recurrent (occupation ratio >= 5)."),
    _builtin("cx-killed-vs-cp", "reconcile", "pass",
             "Poisson(1) and the zero process killed at rate 1 differ by killing and a compound "
             "Poisson part.",
             model_a=LevyModel.poisson(1.0).to_json(), model_b=LevyModel.zero(kill_rate=1.0).to_json(),
             expect={"equivalent": True, "residual_a": [{"x": [1.0], "mass": 1.0}], "residual_b": [],
                     "kill_a": 0.0, "kill_b": 1.0, "common_law": LevyModel.zero().to_json()},
             n=10000),
    _builtin("decompose-roundtrip", "decompose-roundtrip", "pass",
             "Randomized reconcile round-trips, perturbation flips and CF consistency."),
    _builtin("jump-counts", "jump-counts", "pass",
             "Jump counts per atom are Poisson on direct and glued paths."),
    _builtin("strong-markov", "strong-markov", "pass",
             "Post-T increments are fresh for stopping times and not for the last zero."),
    _builtin("adaptedness", "adaptedness", "pass",
             "Adapted rules pass every spliced pair; anticipating rules fail at least once."),
    _builtin("killing-laws", "killing-laws", "pass",
             "Lifetimes are Exp(q) and P(zeta > 1) matches exp(-0.7)."),
    _builtin("ctmc-verify", "ctmc-verify", "pass",
             "Chain gluing matches direct simulation from every start; the stall detector fires."),
]}


def list_scenarios() -> list[Scenario]:
    return list(BUILTINS.values())


def resolve(config) -> Scenario:
    """Turn a config (built-in name, JSON path, or dict) into a validated :class:`Scenario`."""
    if isinstance(config, Scenario):
        return config
    if isinstance(config, (str, Path)):
        text = str(config)
        if text in BUILTINS:
            return _finalize(BUILTINS[text])
        path = Path(text)
        if not path.is_file():
            raise ConfigError(f"unknown scenario {text!r} (not a built-in name or an existing file)")
        try:
            config = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("scenario config must be a JSON object")
    config = dict(config)
    allowed = {"name", "flow", "seed", "expected", "params", "description", "builtin"}
    extra = set(config) - allowed
    if extra:
        raise ConfigError(f"unknown config fields: {sorted(extra)}")
    if "builtin" in config:
        base = BUILTINS.get(config.pop("builtin"))
        if base is None:
            raise ConfigError("unknown built-in scenario")
        params = {**base.params, **config.pop("params", {})}
        merged = {**base.to_json(), **config, "params": params}
        config = merged
    missing = {"name", "flow", "seed", "expected"} - set(config)
    if missing:
        raise ConfigError(f"missing config fields: {sorted(missing)}")
    return _finalize(Scenario(str(config["name"]), config["flow"], config["seed"], config["expected"],
                              dict(config.get("params", {})), str(config.get("description", ""))))


def _finalize(s: Scenario) -> Scenario:
    if s.flow not in FLOWS:
        raise ConfigError(f"unknown flow {s.flow!r}; known: {sorted(FLOWS)}")
    if s.expected not in VERDICTS:
        raise ConfigError(f"expected must be one of {VERDICTS}, got {s.expected!r}")
    if not isinstance(s.seed, int) or isinstance(s.seed, bool) or not 0 <= s.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if not isinstance(s.params, dict):
        raise ConfigError("params must be an object")
    _, defaults = FLOWS[s.flow]
    unknown = set(s.params) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown params for flow {s.flow!r}: {sorted(unknown)}")
    params = {**copy.deepcopy(defaults), **s.params}
    return Scenario(s.name, s.flow, s.seed, s.expected, params, s.description)


def run_scenario(config, out_dir=None) -> ScenarioResult:
    """Run a scenario and, if ``out_dir`` is given, write ``report.json`` and CSV tables there.

    Raises
    ------
    ConfigError
        Unknown scenario, schema violation or invalid model data.
    """
    scenario = resolve(config)
    flow, _ = FLOWS[scenario.flow]
    try:
        outcome = flow(scenario.params, scenario.seed)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad parameters for {scenario.name}: {exc!r}") from exc
    result = ScenarioResult(scenario, outcome)
    if out_dir is not None:
        target = Path(out_dir) / scenario.name
        target.mkdir(parents=True, exist_ok=True)
        (target / "report.json").write_text(result.report_text())
        for name, text in outcome.tables.items():
            (target / name).write_text(text)
    return result


__all__ = ["BUILTINS", "ConfigError", "FLOWS", "OUTPUT_ENV", "Scenario", "ScenarioResult",
           "list_scenarios", "resolve", "run_scenario"]
