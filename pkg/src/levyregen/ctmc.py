"""Minimal continuous-time Markov chains on a finite state space.

Chains are simulated exactly (Gillespie).  Regeneration restarts a fresh
segment from the current state at each stopping time; the ``n``-th segment
started from state ``y`` is drawn from the pool seeded by
``derive_seed(seed, y, n)``, so segments are independent across states and
indices.
"""
from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .rng import STREAM_DIRECT, STREAM_PILOT, STREAM_REGEN, derive_seed, generator
from .stopping import N_MAX_FLOOR, PILOT_MIN_POSITIVE, PILOT_SIZE, PilotError

DEAD = -1
RATE_TOL = 1e-12
MAX_EVENTS = 1_000_000
N_MAX_CEILING = 10_000


@dataclass(frozen=True)
class RateMatrix:
    """Generator of a possibly sub-stochastic chain on ``{0, ..., m-1}``.

    The row deficit ``-Q[y, y] - sum_{z != y} Q[y, z]`` is the killing rate
    in state ``y``.
    """

    rates: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        q = np.asarray(self.rates, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
            raise ValueError("rate matrix must be square and non-empty")
        if not np.all(np.isfinite(q)):
            raise ValueError("rates must be finite")
        off = q - np.diag(np.diag(q))
        if np.any(off < 0):
            raise ValueError("off-diagonal rates must be non-negative")
        if np.any(q.sum(axis=1) > RATE_TOL * np.maximum(1.0, np.abs(np.diag(q)))):
            raise ValueError("rows must sum to <= 0")
        object.__setattr__(self, "rates", tuple(tuple(float(v) for v in row) for row in q))

    @classmethod
    def from_off_diagonal(cls, off, kill=None) -> "RateMatrix":
        off = np.array(off, dtype=float)
        np.fill_diagonal(off, 0.0)
        kill = np.zeros(off.shape[0]) if kill is None else np.broadcast_to(np.asarray(kill, float), off.shape[:1])
        return cls(off - np.diag(off.sum(axis=1) + kill))

    @property
    def n_states(self) -> int:
        return len(self.rates)

    @cached_property
    def matrix(self) -> np.ndarray:
        out = np.array(self.rates)
        out.setflags(write=False)
        return out

    @cached_property
    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.matrix).copy()

    @cached_property
    def kill_rates(self) -> np.ndarray:
        q = self.matrix
        off = q.sum(axis=1) - np.diag(q)
        return np.clip(self.exit_rates - off, 0.0, None)

    @cached_property
    def _jump_table(self) -> list[tuple[np.ndarray, np.ndarray]]:
        table = []
        for y in range(self.n_states):
            targets = [z for z in range(self.n_states) if z != y and self.rates[y][z] > 0]
            weights = [self.rates[y][z] for z in targets]
            if self.kill_rates[y] > 0:
                targets.append(DEAD)
                weights.append(float(self.kill_rates[y]))
            w = np.array(weights)
            cum = np.cumsum(w) / w.sum() if w.size else w
            if cum.size:
                cum[-1] = 1.0
            table.append((np.array(targets, dtype=int), cum))
        return table

    def to_json(self) -> dict:
        return {"rates": [list(r) for r in self.rates]}

    @classmethod
    def from_json(cls, data) -> "RateMatrix":
        if isinstance(data, dict):
            if "rates" not in data:
                raise ValueError("rate matrix JSON needs a 'rates' field")
            data = data["rates"]
        return cls(data)


def load_rate_matrix(path) -> RateMatrix:
    with open(path) as fh:
        return RateMatrix.from_json(json.load(fh))


@dataclass(frozen=True)
class CTMCPath:
    """Right-continuous step path: ``initial`` until ``times[0]``, then ``states[0]``, ...

    ``states`` uses :data:`DEAD` (``-1``) for the cemetery.  ``zeta`` is the
    absorption time if it happened within the horizon, else ``inf``.
    """

    initial: int
    times: tuple[float, ...]
    states: tuple[int, ...]
    horizon: float
    zeta: float = math.inf
    exploded: bool = False

    def state_at(self, t: float) -> int:
        if not 0 <= t <= self.horizon:
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        i = bisect.bisect_right(self.times, t)
        return self.initial if i == 0 else self.states[i - 1]

    @property
    def events(self) -> list[tuple[float, int]]:
        return list(zip(self.times, self.states))

    def validate(self) -> None:
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("event times must increase strictly")
        if DEAD in self.states and self.states.index(DEAD) != len(self.states) - 1:
            raise ValueError("the cemetery is absorbing")


def _gillespie(Q: RateMatrix, x: int, horizon: float, rng, max_events: int, rule=None):
    """Event lists, absorption time, explosion flag and the rule's time.

    With a ``rule`` the simulation stops as soon as its time is decided; the
    events drawn are then a prefix of those of the full run with the same
    generator.
    """
    times: list[float] = []
    states: list[int] = []
    exit_rates = Q.exit_rates
    table = Q._jump_table
    t = 0.0
    y = x
    while True:
        rate = exit_rates[y]
        t_next = t + rng.exponential(1.0 / rate) if rate > 0 else math.inf
        if rule is not None:
            stop = rule.decide(times, states, min(t_next, horizon))
            if stop is not None and stop < t_next:
                return times, states, math.inf, False, stop
        if t_next > horizon:
            return times, states, math.inf, False, None
        t = t_next
        targets, cum = table[y]
        y = int(targets[min(int(np.searchsorted(cum, rng.random(), side="right")), len(cum) - 1)])
        times.append(t)
        states.append(y)
        if y == DEAD:
            return times, states, t, False, None if rule is None else rule.decide(times, states, t)
        if len(times) >= max_events:
            times.append(math.nextafter(t, math.inf))
            states.append(DEAD)
            return times, states, times[-1], True, None if rule is None else rule.decide(times, states, t)


def simulate_ctmc(Q: RateMatrix, x: int, horizon: float, seed: int,
                  max_events: int = MAX_EVENTS) -> CTMCPath:
    """Exact simulation on ``[0, horizon]``.

    More than ``max_events`` jumps send the chain to the cemetery right after
    the last of them (minimal-chain semantics) and set ``exploded``.
    """
    _check_start(Q, x, horizon)
    times, states, zeta, exploded, _ = _gillespie(Q, x, horizon, generator(seed), max_events)
    return CTMCPath(x, tuple(times), tuple(states), float(horizon), zeta, exploded)


def simulate_until(Q: RateMatrix, x: int, horizon: float, seed: int, rule,
                   max_events: int = MAX_EVENTS) -> tuple[CTMCPath, float]:
    """Simulate only until ``rule`` is decided; returns the partial path and ``T``.

    The partial path agrees with :func:`simulate_ctmc` (same seed) up to ``T``.
    """
    _check_start(Q, x, horizon)
    times, states, zeta, exploded, stop = _gillespie(Q, x, horizon, generator(seed), max_events, rule)
    path = CTMCPath(x, tuple(times), tuple(states), float(horizon), zeta, exploded)
    return path, math.inf if stop is None else stop


def _check_start(Q: RateMatrix, x: int, horizon: float):
    if not 0 <= x < Q.n_states:
        raise ValueError(f"state {x} not in 0..{Q.n_states - 1}")
    if not horizon > 0:
        raise ValueError("horizon must be positive")


# ---------------------------------------------------------------------------
# Stopping rules on the event-time filtration
# ---------------------------------------------------------------------------


class CTMCRule:
    """A stopping time of a chain path: a real time or ``inf``.

    ``decide(times, states, now)`` sees the events up to time ``now`` and
    returns ``T`` if ``T <= now`` is already determined, else ``None``.
    Because every rule is a stopping time, this is enough to simulate a
    segment only as far as its own stopping time.
    """

    def decide(self, times, states, now: float) -> float | None:
        raise NotImplementedError

    def time(self, path: CTMCPath) -> float:
        t = self.decide(path.times, path.states, path.horizon)
        return math.inf if t is None else t


@dataclass(frozen=True)
class AtTime(CTMCRule):
    t: float

    def __post_init__(self):
        if self.t < 0:
            raise ValueError("time must be >= 0")

    def decide(self, times, states, now):
        return self.t if self.t <= now else None


@dataclass(frozen=True)
class FirstJumpTime(CTMCRule):
    """Time of the first event, including a jump to the cemetery."""

    def decide(self, times, states, now):
        return times[0] if times else None


@dataclass(frozen=True)
class FirstEntry(CTMCRule):
    """First jump into ``targets`` (a jump, so the initial state does not count)."""

    targets: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "targets", frozenset(int(s) for s in self.targets))

    def decide(self, times, states, now):
        for t, s in zip(times, states):
            if s in self.targets:
                return t
        return None


@dataclass(frozen=True)
class Earliest(CTMCRule):
    first: CTMCRule
    second: CTMCRule

    def decide(self, times, states, now):
        a = self.first.decide(times, states, now)
        b = self.second.decide(times, states, now)
        if a is None:
            return b
        return a if b is None else min(a, b)


def ctmc_rule_from_json(data) -> CTMCRule:
    if not isinstance(data, dict) or len(data) != 1:
        raise ValueError(f"a rule is a single-key JSON object, got {data!r}")
    (key, arg), = data.items()
    if key == "det":
        return AtTime(float(arg))
    if key == "first_jump":
        return FirstJumpTime()
    if key == "first_entry":
        return FirstEntry(frozenset(arg))
    if key == "min":
        rules = [ctmc_rule_from_json(r) for r in arg]
        if len(rules) < 2:
            raise ValueError("'min' takes at least two rules")
        out = rules[0]
        for r in rules[1:]:
            out = Earliest(out, r)
        return out
    raise ValueError(f"unknown chain rule {key!r}")


def ctmc_rule_to_json(rule: CTMCRule):
    if isinstance(rule, AtTime):
        return {"det": rule.t}
    if isinstance(rule, FirstJumpTime):
        return {"first_jump": True}
    if isinstance(rule, FirstEntry):
        return {"first_entry": sorted(rule.targets)}
    if isinstance(rule, Earliest):
        return {"min": [ctmc_rule_to_json(rule.first), ctmc_rule_to_json(rule.second)]}
    raise TypeError(f"cannot serialize {rule!r}")


# ---------------------------------------------------------------------------
# Regeneration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CTMCRegeneration:
    path: CTMCPath
    regeneration_times: tuple[float, ...]
    segments_used: int
    stalled: bool


def ctmc_pilot(Q: RateMatrix, rule: CTMCRule, x: int, horizon: float, seed: int,
               n: int = PILOT_SIZE) -> int:
    """Check ``P(T > 0) >= 1%`` from ``x`` and return the segment budget.

    The budget is ``10 * horizon / median(T)`` (mean if the median is 0),
    floored at 64 and capped at 10000.
    """
    times = np.array([min(simulate_until(Q, x, horizon, derive_seed(seed, STREAM_PILOT, i), rule)[1],
                          horizon) for i in range(n)])
    if np.mean(times > 0) < PILOT_MIN_POSITIVE:
        raise PilotError(f"rule is positive on only {np.mean(times > 0):.1%} of {n} pilot paths")
    typical = float(np.median(times)) or float(np.mean(times))
    return int(min(N_MAX_CEILING, max(N_MAX_FLOOR, math.ceil(10.0 * horizon / typical))))


def _regen_chain(Q, rule, x, horizon, seed, n_max):
    pool_index = [0] * Q.n_states
    times: list[float] = []
    states: list[int] = []
    regen: list[float] = []
    s = 0.0
    y = x
    for used in range(1, n_max + 1):
        seg_seed = derive_seed(seed, y, pool_index[y])
        pool_index[y] += 1
        last = used == n_max
        seg, t = simulate_until(Q, y, horizon - s, seg_seed, rule)
        if last and math.isfinite(t) and s + t < horizon and seg.zeta > t:
            # stalled: the final segment runs on past its stopping time
            seg = simulate_ctmc(Q, y, horizon - s, seg_seed)
            times.extend(s + et for et in seg.times)
            states.extend(seg.states)
            path = CTMCPath(x, tuple(times), tuple(states), horizon, s + seg.zeta, seg.exploded)
            return CTMCRegeneration(path, tuple(regen), n_max, True)
        for et, es in zip(seg.times, seg.states):
            if et > t:
                break
            times.append(s + et)
            states.append(es)
        if seg.zeta <= t:
            path = CTMCPath(x, tuple(times), tuple(states), horizon, s + seg.zeta, seg.exploded)
            return CTMCRegeneration(path, tuple(regen), used, False)
        if math.isinf(t) or s + t >= horizon:
            if math.isfinite(t):
                regen.append(s + t)
            return CTMCRegeneration(CTMCPath(x, tuple(times), tuple(states), horizon),
                                    tuple(regen), used, False)
        s += t
        regen.append(s)
        y = states[-1] if states else x
    raise AssertionError("unreachable")


def concatenate_ctmc(Q: RateMatrix, rule: CTMCRule, x: int, horizon: float, seed: int,
                     n_max: int | None = None) -> CTMCRegeneration:
    """Glue pool segments restarted from the current state at each stopping time.

    A segment that dies before its stopping time absorbs the glued path.  If
    ``n_max`` segments are used before reaching the horizon the output is
    flagged ``stalled`` and the last segment runs on past its stopping time.
    Segments are simulated lazily over the remaining horizon only.
    """
    if not 0 <= x < Q.n_states:
        raise ValueError(f"state {x} not in 0..{Q.n_states - 1}")
    if n_max is None:
        n_max = ctmc_pilot(Q, rule, x, horizon, seed)
    elif n_max < 1:
        raise ValueError("n_max must be at least 1")
    return _regen_chain(Q, rule, x, horizon, seed, n_max)


def state_marginal(paths, t: float, n_states: int | None = None) -> np.ndarray:
    """Empirical law of the state at ``t``; the last entry is the cemetery.

    Raises
    ------
    ValueError
        Empty collection.
    """
    paths = list(paths)
    if not paths:
        raise ValueError("no paths given")
    return state_counts(paths, t, n_states) / len(paths)


def state_counts(paths, t: float, n_states: int | None = None) -> np.ndarray:
    if n_states is None:
        n_states = 1 + max(max([p.initial, *p.states]) for p in paths)
    counts = np.zeros(n_states + 1)
    for p in paths:
        s = p.state_at(t)
        counts[n_states if s == DEAD else s] += 1
    return counts


def iter_ctmc_direct(Q: RateMatrix, x: int, horizon: float, n_paths: int, seed: int):
    for i in range(n_paths):
        yield simulate_ctmc(Q, x, horizon, derive_seed(seed, STREAM_DIRECT, i))


def iter_ctmc_regen(Q: RateMatrix, rule: CTMCRule, x: int, horizon: float, n_paths: int, seed: int,
                    n_max: int | None = None):
    if n_max is None:
        n_max = ctmc_pilot(Q, rule, x, horizon, seed)
    for i in range(n_paths):
        yield _regen_chain(Q, rule, x, horizon, derive_seed(seed, STREAM_REGEN, i), n_max)


def transition_matrix(Q: RateMatrix, t: float) -> np.ndarray:
    """``exp(tQ)`` extended with the cemetery as the last (absorbing) state."""
    from scipy.linalg import expm

    m = Q.n_states
    full = np.zeros((m + 1, m + 1))
    full[:m, :m] = Q.matrix
    full[:m, m] = Q.kill_rates
    return expm(t * full)


__all__ = [
    "AtTime", "CTMCPath", "CTMCRegeneration", "CTMCRule", "DEAD", "Earliest", "FirstEntry",
    "FirstJumpTime", "RateMatrix", "concatenate_ctmc", "ctmc_pilot", "ctmc_rule_from_json",
    "ctmc_rule_to_json", "iter_ctmc_direct", "iter_ctmc_regen", "load_rate_matrix", "simulate_ctmc",
    "simulate_until",
    "state_counts", "state_marginal", "transition_matrix",
]
