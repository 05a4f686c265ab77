"""Regeneration by gluing i.i.d. segments at their stopping times.

Segment ``k`` is a fresh path ``X^k``; with ``S_0 = 0`` and
``S_k = S_{k-1} + T(X^k)`` the glued path is built by the recursion

    Y^1 = X^1,    Y^{k+1} = splice(Y^k, S_k, X^{k+1}),

so ``Y`` follows the increments of ``X^k`` on ``[S_{k-1}, S_k]``.  If ``X^k``
dies before its stopping time, ``Y`` dies with it and the recursion stops.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .levy_core import (DEFAULT_HORIZON, DEFAULT_STEP, LevyModel, SamplePath,
                        grid_index, simulate, splice)
from .rng import STREAM_DIRECT, STREAM_FRESH, STREAM_REGEN, derive_seed
from .stats import SampleSizeError, TestReport, chi_square_independence, marginal_tests
from .stopping import PilotSummary, StoppingRule, n_max_from_pilot, pilot

MIN_USABLE = 500


@dataclass(frozen=True, eq=False)
class RegenerationOutput:
    """A glued path together with its bookkeeping.

    ``regeneration_indices`` are the finite partial sums ``S_k`` in grid
    steps; ``segments_used`` counts consumed segments, zero-length ones
    included.
    """

    path: SamplePath
    regeneration_indices: tuple[int, ...]
    segments_used: int
    stalled: bool
    stop_times: tuple[int | None, ...] = ()

    @property
    def regeneration_times(self) -> tuple[float, ...]:
        return tuple(k * self.path.step for k in self.regeneration_indices)


def _segment_budget(model, rule, horizon, step, seed, n_max) -> tuple[int, PilotSummary | None]:
    if n_max is not None:
        if n_max < 1:
            raise ValueError("n_max must be at least 1")
        return int(n_max), None
    summary = pilot(model, rule, horizon, step, seed)
    return n_max_from_pilot(summary, horizon), summary


def _glue(model: LevyModel, rule: StoppingRule, n: int, step: float, seed: int,
          n_max: int) -> RegenerationOutput:
    horizon = n * step
    y = None
    s = 0
    partial: list[int] = []
    stops: list[int | None] = []
    for k in range(n_max):
        x = simulate(model, horizon, step, derive_seed(seed, k))
        t = rule.node_index(x)
        stops.append(t)
        y = x if y is None else splice(y, s, x)
        if x.death_index is not None and (t is None or x.death_index <= t):
            # segment died before its stopping time: Y is absorbed at S + zeta
            if t is not None:
                partial.append(s + t)
            return RegenerationOutput(y, tuple(partial), k + 1, False, tuple(stops))
        if t is None:
            return RegenerationOutput(y, tuple(partial), k + 1, False, tuple(stops))
        s += t
        partial.append(s)
        if s >= n:
            return RegenerationOutput(y, tuple(partial), k + 1, False, tuple(stops))
    # budget exhausted: the last segment runs on past its stopping time
    return RegenerationOutput(y, tuple(partial), n_max, True, tuple(stops))


def concatenate(model: LevyModel, rule: StoppingRule, horizon: float = DEFAULT_HORIZON,
                seed: int = 0, n_max: int | None = None, *,
                step: float = DEFAULT_STEP) -> RegenerationOutput:
    """Glue fresh segments of ``model`` cut at ``rule`` into one path on ``[0, horizon]``.

    Segment ``k`` (0-based) uses seed ``derive_seed(seed, k)`` and is simulated
    over the full horizon.  When ``n_max`` is omitted a 1000-path pilot sets
    the budget and checks ``P(T > 0) >= 1%``.

    Raises
    ------
    PilotError
        The rule is almost surely zero.
    """
    n = grid_index(horizon, step, what="horizon")
    if n < 1:
        raise ValueError("horizon must be positive")
    budget, _ = _segment_budget(model, rule, horizon, step, seed, n_max)
    return _glue(model, rule, n, step, seed, budget)


def iter_concatenated(model: LevyModel, rule: StoppingRule, n_paths: int, seed: int,
                      horizon: float = DEFAULT_HORIZON, step: float = DEFAULT_STEP,
                      n_max: int | None = None):
    """Yield ``n_paths`` independent glued outputs sharing one pilot.

    Path ``i`` uses master seed ``derive_seed(seed, STREAM_REGEN, i)``.
    """
    n = grid_index(horizon, step, what="horizon")
    budget, _ = _segment_budget(model, rule, horizon, step, seed, n_max)
    for i in range(n_paths):
        yield _glue(model, rule, n, step, derive_seed(seed, STREAM_REGEN, i), budget)


def iter_direct(model: LevyModel, n_paths: int, seed: int, horizon: float = DEFAULT_HORIZON,
                step: float = DEFAULT_STEP):
    """Yield ``n_paths`` direct simulations with seeds ``derive_seed(seed, STREAM_DIRECT, i)``."""
    for i in range(n_paths):
        yield simulate(model, horizon, step, derive_seed(seed, STREAM_DIRECT, i))


def node_values(path: SamplePath, nodes) -> np.ndarray:
    """Values at the given node indices, NaN rows where the path is dead."""
    return path.points[np.asarray(nodes, dtype=int)]


def collect_marginals(paths, times, step: float) -> np.ndarray:
    """Stack marginals into an array of shape ``(n_paths, len(times), d)``."""
    nodes = [grid_index(t, step) for t in times]
    return np.array([node_values(p, nodes) for p in paths])


@dataclass(frozen=True)
class MarginalSample:
    values: np.ndarray
    n_stalled: int = 0
    n_segments: int = 0


def regen_marginals(model: LevyModel, rule: StoppingRule, times, n_paths: int, seed: int,
                    horizon: float = DEFAULT_HORIZON, step: float = DEFAULT_STEP,
                    n_max: int | None = None) -> MarginalSample:
    nodes = [grid_index(t, step) for t in times]
    values = np.empty((n_paths, len(nodes), model.d))
    stalled = segments = 0
    for i, out in enumerate(iter_concatenated(model, rule, n_paths, seed, horizon, step, n_max)):
        values[i] = node_values(out.path, nodes)
        stalled += out.stalled
        segments += out.segments_used
    return MarginalSample(values, stalled, segments)


def direct_marginals(model: LevyModel, times, n_paths: int, seed: int,
                     horizon: float = DEFAULT_HORIZON, step: float = DEFAULT_STEP) -> MarginalSample:
    nodes = [grid_index(t, step) for t in times]
    values = np.empty((n_paths, len(nodes), model.d))
    for i, path in enumerate(iter_direct(model, n_paths, seed, horizon, step)):
        values[i] = node_values(path, nodes)
    return MarginalSample(values)


def law_equality_tests(label: str, a: np.ndarray, b: np.ndarray, times) -> list[tuple[str, float, float]]:
    """Per-time survival chi-square and per-coordinate KS between two marginal arrays."""
    tests = []
    for j, t in enumerate(times):
        tests.extend(marginal_tests(f"{label} t={t:g}", a[:, j], b[:, j]))
    return tests


# ---------------------------------------------------------------------------
# Renewal counts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RenewalSummary:
    """``N = #{k : S_k <= window}`` over ``n`` draws, with a doubling check.

    ``mean_doubled`` is the mean over ``2n`` draws (the first ``n`` of which
    are ``counts``); ``stable`` holds when the two means agree within three
    standard errors.
    """

    counts: np.ndarray
    mean: float
    sem: float
    mean_doubled: float
    stable: bool
    n_capped: int


def _renewal_draw(model, rule, window_index, seg_horizon, step, seed, cap) -> tuple[int, bool]:
    s = 0
    count = 0
    for k in range(cap):
        t = rule.node_index(simulate(model, seg_horizon, step, derive_seed(seed, k)))
        if t is None:
            return count, False
        s += t
        if s > window_index:
            return count, False
        count += 1
    return count, True


def renewal_count(model: LevyModel, rule: StoppingRule, window: float, n_samples: int, seed: int,
                  *, step: float = DEFAULT_STEP, horizon: float | None = None,
                  n_max: int | None = None) -> RenewalSummary:
    """Sample the number of regeneration times in ``[0, window]``.

    The ``T_k`` are i.i.d. evaluations of ``rule`` on fresh segments over
    ``horizon`` (default ``window``); killing does not stop the count.
    """
    seg_horizon = window if horizon is None else horizon
    w = grid_index(window, step, what="window")
    cap, _ = _segment_budget(model, rule, seg_horizon, step, seed, n_max)
    # a count can reach w only through zero-length segments, so allow more
    cap = max(cap, w + 1)
    draws = [_renewal_draw(model, rule, w, seg_horizon, step,
                           derive_seed(seed, STREAM_REGEN, i), cap) for i in range(2 * n_samples)]
    all_counts = np.array([c for c, _ in draws], dtype=np.int64)
    counts = all_counts[:n_samples]
    mean = float(counts.mean())
    sem = float(counts.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    doubled = float(all_counts.mean())
    stable = abs(mean - doubled) <= 3 * sem if sem > 0 else mean == doubled
    return RenewalSummary(counts, mean, sem, doubled, bool(stable), sum(c for _, c in draws))


def stopped_after_death(model: LevyModel, rule: StoppingRule, n_segments: int, seed: int,
                        horizon: float = DEFAULT_HORIZON, step: float = DEFAULT_STEP) -> int:
    """Number of fresh segments with ``T >= zeta`` (``T = inf`` counts)."""
    hits = 0
    for i in range(n_segments):
        x = simulate(model, horizon, step, derive_seed(seed, STREAM_FRESH, i))
        if x.death_index is None:
            continue
        t = rule.node_index(x)
        hits += t is None or t >= x.death_index
    return hits


# ---------------------------------------------------------------------------
# Strong Markov diagnostic
# ---------------------------------------------------------------------------


def _tertile_bins(x: np.ndarray) -> np.ndarray:
    edges = np.quantile(x, [1 / 3, 2 / 3])
    return np.searchsorted(edges, x, side="right")


def strong_markov_diagnostic(model: LevyModel, rule: StoppingRule, n_samples: int, seed: int,
                             delta: float = 1.0, *, horizon: float | None = None,
                             step: float = DEFAULT_STEP, family_alpha: float = 0.01) -> TestReport:
    """Test that ``X_{T+delta} - X_T`` on ``{T < zeta}`` is a fresh, independent increment.

    Paths are simulated over ``horizon`` (default ``4 + delta``); only draws
    with ``T < zeta`` and ``T + delta <= horizon`` are usable.  The family
    holds a survival chi-square and per-coordinate KS tests against fresh
    ``X_delta`` draws, and chi-square independence tests of the tertile bin of
    the post-T increment (first coordinate) against the bins of ``X_T`` and of
    ``T``.

    Raises
    ------
    SampleSizeError
        Fewer than 500 usable draws.
    """
    horizon = DEFAULT_HORIZON + delta if horizon is None else horizon
    n = grid_index(horizon, step, what="horizon")
    dk = grid_index(delta, step, what="delta")
    if dk < 1:
        raise ValueError("delta must be at least one grid step")
    pre, post, stop = [], [], []
    for i in range(n_samples):
        x = simulate(model, horizon, step, derive_seed(seed, STREAM_DIRECT, i))
        t = rule.node_index(x)
        if t is None or t + dk > n or not x.alive(t):
            continue
        pre.append(x.points[t])
        post.append(x.points[t + dk] - x.points[t])
        stop.append(t * step)
    if len(post) < MIN_USABLE:
        raise SampleSizeError(
            f"only {len(post)} of {n_samples} draws have T < zeta and T + delta <= horizon; "
            f"need {MIN_USABLE}")
    post = np.array(post)
    pre = np.array(pre)
    stop = np.array(stop)
    fresh = np.array([simulate(model, delta, step, derive_seed(seed, STREAM_FRESH, i)).points[dk]
                      for i in range(len(post))])
    tests = marginal_tests("post-T increment vs fresh", post, fresh)
    alive = ~np.isnan(post[:, 0])
    inc_bin = _tertile_bins(post[alive, 0])
    for name, stat_values in (("X_T", pre[alive, 0]), ("T", stop[alive])):
        table = np.zeros((3, 3))
        np.add.at(table, (_tertile_bins(stat_values), inc_bin), 1)
        chi, p = chi_square_independence(table)
        tests.append((f"independence {name} vs increment", chi, p))
    return TestReport.from_tests(tests, family_alpha)


__all__ = [
    "MarginalSample", "RegenerationOutput", "RenewalSummary", "collect_marginals", "concatenate",
    "direct_marginals", "iter_concatenated", "iter_direct", "law_equality_tests", "regen_marginals",
    "renewal_count", "stopped_after_death", "strong_markov_diagnostic",
]
