"""Random times computed from a sample path.

Rules are small immutable combinator trees.  Five of them are stopping times
of the grid filtration (information at node ``k`` = node values up to ``k``
and jump events up to time ``k*h``); three look into the future and exist to
reproduce the counterexamples where the construction breaks down.

Evaluation always returns a grid node index, or ``None`` for "never" (the
event does not happen within the simulated horizon, which is the same as
capping the rule at the horizon).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .levy_core import (GridError, LevyModel, SamplePath, State, grid_ceil, grid_index,
                        simulate, splice)
from .rng import STREAM_PILOT, derive_seed, generator

_TOL = 1e-9

PILOT_SIZE = 1000
PILOT_MIN_POSITIVE = 0.01
N_MAX_FLOOR = 64


class PilotError(ValueError):
    """The rule is zero on (almost) every pilot path, so ``P(T > 0) > 0`` fails."""


def _floor_index(t: float, step: float) -> int:
    ratio = t / step
    k = round(ratio)
    if abs(ratio - k) <= _TOL * max(1.0, abs(ratio)):
        return int(k)
    return int(math.floor(ratio))


def _fmt(t: float) -> str:
    return "inf" if math.isinf(t) else f"{t:g}"


class StoppingRule:
    """Base class; subclasses implement :meth:`node_index`."""

    adapted: bool = True

    def node_index(self, path: SamplePath) -> int | None:
        raise NotImplementedError

    @property
    def label(self) -> str:
        raise NotImplementedError

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class Deterministic(StoppingRule):
    t: float

    def __post_init__(self):
        if not (self.t >= 0):
            raise ValueError(f"deterministic time must be >= 0, got {self.t}")

    def node_index(self, path):
        return grid_ceil(self.t, path.step)

    @property
    def label(self):
        return f"Deterministic({_fmt(self.t)})"


@dataclass(frozen=True)
class FirstExit(StoppingRule):
    """First node at which the Euclidean norm of the value reaches ``radius``."""

    radius: float

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError(f"radius must be positive, got {self.radius}")

    def node_index(self, path):
        pts = path.points
        norms = np.abs(pts[:, 0]) if pts.shape[1] == 1 else np.sqrt((pts * pts).sum(axis=1))
        with np.errstate(invalid="ignore"):
            hit = norms >= self.radius
        k = int(np.argmax(hit))
        return k if hit[k] else None

    @property
    def label(self):
        return f"FirstExit({_fmt(self.radius)})"


@dataclass(frozen=True)
class FirstJump(StoppingRule):
    """First jump time, rounded up to the grid (the jump is seen at that node)."""

    def node_index(self, path):
        if path.jump_times.size == 0:
            return None
        return max(1, grid_ceil(float(path.jump_times[0]), path.step))

    @property
    def label(self):
        return "FirstJump"


@dataclass(frozen=True)
class MinOf(StoppingRule):
    first: StoppingRule
    second: StoppingRule

    @property
    def adapted(self):
        return self.first.adapted and self.second.adapted

    def node_index(self, path):
        a = self.first.node_index(path)
        b = self.second.node_index(path)
        if a is None:
            return b
        if b is None:
            return a
        return min(a, b)

    @property
    def label(self):
        return f"MinOf({self.first.label}, {self.second.label})"


@dataclass(frozen=True)
class CappedAt(StoppingRule):
    rule: StoppingRule
    t: float

    def __post_init__(self):
        if not (self.t >= 0):
            raise ValueError(f"cap must be >= 0, got {self.t}")

    @property
    def adapted(self):
        return self.rule.adapted

    def node_index(self, path):
        cap = grid_ceil(self.t, path.step)
        k = self.rule.node_index(path)
        if k is None:
            return cap
        return k if cap is None else min(k, cap)

    @property
    def label(self):
        return f"CappedAt({self.rule.label}, {_fmt(self.t)})"


@dataclass(frozen=True)
class HalfFirstJump(StoppingRule):
    """Half the first jump time, rounded down. Anticipating."""

    adapted = False

    def node_index(self, path):
        if path.jump_times.size == 0:
            return None
        return _floor_index(float(path.jump_times[0]) / 2.0, path.step)

    @property
    def label(self):
        return "HalfFirstJump"


def _window_end(path: SamplePath, window: float) -> int:
    k = grid_index(window, path.step, what="window")
    if k > path.n_steps:
        raise ValueError(f"window {window} exceeds the path horizon {path.horizon}")
    if path.death_index is not None:
        k = min(k, path.death_index - 1)
    return k


@dataclass(frozen=True)
class LastZero(StoppingRule):
    """Last crossing of zero by the first coordinate within ``[0, window]``.

    The crossing is located between the last pair of consecutive nodes whose
    values have product ``<= 0``; of the two, the node closer to zero is
    returned.  Anticipating.
    """

    window: float
    adapted = False

    def node_index(self, path):
        last = _window_end(path, self.window)
        x = path.points[: last + 1, 0]
        if x.size < 2:
            return 0
        idx = np.flatnonzero(x[:-1] * x[1:] <= 0)
        if idx.size == 0:
            return 0
        k = int(idx[-1])
        return k + 1 if abs(x[k + 1]) < abs(x[k]) else k

    @property
    def label(self):
        return f"LastZero({_fmt(self.window)})"


@dataclass(frozen=True)
class InfimumTime(StoppingRule):
    """First node attaining the minimum of the first coordinate over ``[0, window]``. Anticipating."""

    window: float
    adapted = False

    def node_index(self, path):
        last = _window_end(path, self.window)
        return int(np.argmin(path.points[: last + 1, 0]))

    @property
    def label(self):
        return f"InfimumTime({_fmt(self.window)})"


def evaluate_rule(rule: StoppingRule, path: SamplePath) -> float:
    """The rule's time on ``path``: a grid node, or ``inf``."""
    k = rule.node_index(path)
    return math.inf if k is None else k * path.step


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def _time_json(t: float):
    return "inf" if math.isinf(t) else t


def _time_from(value) -> float:
    if value in ("inf", "Infinity"):
        return math.inf
    return float(value)


def rule_to_json(rule: StoppingRule):
    if isinstance(rule, Deterministic):
        return {"det": _time_json(rule.t)}
    if isinstance(rule, FirstExit):
        return {"first_exit": rule.radius}
    if isinstance(rule, FirstJump):
        return {"first_jump": True}
    if isinstance(rule, HalfFirstJump):
        return {"half_first_jump": True}
    if isinstance(rule, LastZero):
        return {"last_zero": rule.window}
    if isinstance(rule, InfimumTime):
        return {"infimum_time": rule.window}
    if isinstance(rule, MinOf):
        return {"min": [rule_to_json(rule.first), rule_to_json(rule.second)]}
    if isinstance(rule, CappedAt):
        return {"capped": [rule_to_json(rule.rule), _time_json(rule.t)]}
    raise TypeError(f"cannot serialize {rule!r}")


def rule_from_json(data) -> StoppingRule:
    if not isinstance(data, dict) or len(data) != 1:
        raise ValueError(f"a rule is a single-key JSON object, got {data!r}")
    (key, arg), = data.items()
    if key == "det":
        return Deterministic(_time_from(arg))
    if key == "first_exit":
        return FirstExit(float(arg))
    if key == "first_jump":
        return FirstJump()
    if key == "half_first_jump":
        return HalfFirstJump()
    if key == "last_zero":
        return LastZero(float(arg))
    if key == "infimum_time":
        return InfimumTime(float(arg))
    if key == "min":
        if not isinstance(arg, list) or len(arg) < 2:
            raise ValueError("'min' takes a list of at least two rules")
        rules = [rule_from_json(r) for r in arg]
        out = rules[0]
        for r in rules[1:]:
            out = MinOf(out, r)
        return out
    if key == "capped":
        if not isinstance(arg, list) or len(arg) != 2:
            raise ValueError("'capped' takes [rule, time]")
        return CappedAt(rule_from_json(arg[0]), _time_from(arg[1]))
    raise ValueError(f"unknown rule {key!r}")


# ---------------------------------------------------------------------------
# Adaptedness
# ---------------------------------------------------------------------------


def agreement_index(a: SamplePath, b: SamplePath) -> int:
    """Largest node ``k`` such that ``a`` and ``b`` carry the same information at ``k``.

    Returns -1 if they already differ at node 0.
    """
    if a.step != b.step or a.n_steps != b.n_steps or a.dim != b.dim:
        raise GridError("paths do not share a grid")
    n = a.n_steps
    same = (a.states == b.states) & (
        (a.states != State.POINT) | np.all(a.points == b.points, axis=1))
    first_diff = n + 1 if same.all() else int(np.argmin(same))
    limit = first_diff - 1

    na, nb = a.jump_times.size, b.jump_times.size
    j = 0
    while (j < min(na, nb) and a.jump_times[j] == b.jump_times[j]
           and np.array_equal(a.jump_sizes[j], b.jump_sizes[j])):
        j += 1
    if j < max(na, nb):
        tau = min(a.jump_times[j] if j < na else math.inf,
                  b.jump_times[j] if j < nb else math.inf)
        limit = min(limit, grid_ceil(float(tau), a.step) - 1)
    return limit


def check_adapted(rule: StoppingRule, path_a: SamplePath, path_b: SamplePath) -> bool:
    """Whether ``rule`` is consistent with being a stopping time on this pair.

    If ``T(a) <= t`` and the paths agree on ``[0, t]``, then ``T(b)`` must
    equal ``T(a)``.
    """
    m = agreement_index(path_a, path_b)
    ta = rule.node_index(path_a)
    if ta is None or ta > m:
        return True
    return rule.node_index(path_b) == ta


def spliced_pair(model: LevyModel, horizon: float, step: float, seed: int):
    """Two paths that agree up to a random node and then continue independently.

    Returns ``(a, b, m)`` where ``m`` is the splice node.  Both paths have the
    law of ``model``.
    """
    n = grid_index(horizon, step, what="horizon")
    rng = generator(derive_seed(seed, 0))
    a = simulate(model, horizon, step, derive_seed(seed, 1))
    m = int(rng.integers(0, n))
    c = simulate(model, (n - m) * step, step, derive_seed(seed, 2))
    return a, splice(a, m, c), m


@dataclass(frozen=True)
class HarnessResult:
    rule: str
    adapted_flag: bool
    n_pairs: int
    n_pass: int
    first_violation: int | None

    @property
    def all_pass(self) -> bool:
        return self.n_pass == self.n_pairs


def adaptedness_harness(rules, model: LevyModel, n_pairs: int, seed: int,
                        horizon: float = 4.0, step: float = 2.0**-8) -> list[HarnessResult]:
    """Run :func:`check_adapted` (both orders) over ``n_pairs`` spliced pairs."""
    rules = list(rules)
    passes = [0] * len(rules)
    first = [None] * len(rules)
    for i in range(n_pairs):
        a, b, _ = spliced_pair(model, horizon, step, derive_seed(seed, i))
        for r, rule in enumerate(rules):
            if check_adapted(rule, a, b) and check_adapted(rule, b, a):
                passes[r] += 1
            elif first[r] is None:
                first[r] = i
    return [HarnessResult(rule.label, rule.adapted, n_pairs, passes[r], first[r])
            for r, rule in enumerate(rules)]


# ---------------------------------------------------------------------------
# Pilot check of P(T > 0) > 0
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PilotSummary:
    n: int
    fraction_positive: float
    median_time: float
    mean_time: float


def pilot(model: LevyModel, rule: StoppingRule, horizon: float, step: float, seed: int,
          n: int = PILOT_SIZE) -> PilotSummary:
    """Evaluate ``rule`` on ``n`` fresh paths; times past the horizon count as the horizon.

    Raises
    ------
    PilotError
        Fewer than 1% of the pilot paths have ``T > 0``.
    """
    times = np.empty(n)
    for i in range(n):
        path = simulate(model, horizon, step, derive_seed(seed, STREAM_PILOT, i))
        k = rule.node_index(path)
        times[i] = horizon if k is None else min(k * step, horizon)
    summary = PilotSummary(n, float(np.mean(times > 0)), float(np.median(times)), float(np.mean(times)))
    if summary.fraction_positive < PILOT_MIN_POSITIVE:
        raise PilotError(
            f"{rule.label} is positive on only {summary.fraction_positive:.1%} of {n} pilot paths; "
            "the regeneration construction needs P(T > 0) > 0")
    return summary


def n_max_from_pilot(summary: PilotSummary, horizon: float) -> int:
    """Segment budget ``10 * horizon / median(T)``, at least 64."""
    typical = summary.median_time if summary.median_time > 0 else summary.mean_time
    if typical <= 0:
        raise PilotError("pilot stopping times are all zero")
    return max(N_MAX_FLOOR, math.ceil(10.0 * horizon / typical))


ADAPTED_RULES = (Deterministic, FirstExit, FirstJump, MinOf, CappedAt)
ANTICIPATING_RULES = (HalfFirstJump, LastZero, InfimumTime)
