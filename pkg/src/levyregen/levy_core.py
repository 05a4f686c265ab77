"""Possibly-killed finite-activity Lévy processes on a time grid.

A model is a characteristic triplet ``(gamma, sigma, jumps)`` plus a killing
rate ``q``.  ``gamma`` is the drift of the Lévy-Itô decomposition with the
small-jump compensation taken over the *closed* unit ball, i.e. the
characteristic exponent is::

    psi(u) = i<gamma, u> - <u, sigma u>/2
             + sum_x m(x) (exp(i<u, x>) - 1 - i<u, x> 1{|x| <= 1})

Since the jump measure is finite, the path is the sum of a Brownian motion
with drift ``gamma - sum_{|x|<=1} x m(x)`` (see
:attr:`LevyModel.continuous_drift`) and an uncompensated compound Poisson
process.  Both parts are simulated exactly at the grid nodes.  Jump times are
kept exactly and enter the node values at the first node at or after them.
The exponential killing time is rounded up to the next grid node.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .rng import generator

DEFAULT_STEP = 2.0**-8
DEFAULT_HORIZON = 4.0

SYMMETRY_TOL = 1e-12
_GRID_TOL = 1e-9

Location = tuple[float, ...]


class GridError(ValueError):
    """A time is not a node of the path grid, or two grids differ."""


class State(IntEnum):
    POINT = 0
    CEMETERY = 1
    UNOBSERVED = 2


def grid_index(t: float, step: float, *, what: str = "time") -> int:
    """Index ``k`` with ``k * step == t`` (up to float noise), else GridError."""
    if not math.isfinite(t):
        raise GridError(f"{what} must be finite, got {t}")
    ratio = t / step
    k = round(ratio)
    if abs(ratio - k) > _GRID_TOL * max(1.0, abs(ratio)):
        raise GridError(f"{what}={t} is not a multiple of step={step}")
    return int(k)


def grid_ceil(t: float, step: float) -> int | None:
    """Index of the first node ``>= t``; ``None`` for ``t = inf``."""
    if math.isinf(t) and t > 0:
        return None
    ratio = t / step
    k = round(ratio)
    if abs(ratio - k) <= _GRID_TOL * max(1.0, abs(ratio)):
        return int(k)
    return int(math.ceil(ratio))


# ---------------------------------------------------------------------------
# Path values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathValue:
    """A point of R^d, the cemetery state, or the unobserved state."""

    state: State
    point: Location | None = None

    def __post_init__(self):
        if (self.state is State.POINT) != (self.point is not None):
            raise ValueError("exactly the POINT variant carries coordinates")

    @classmethod
    def at(cls, x) -> "PathValue":
        return cls(State.POINT, tuple(float(v) for v in np.atleast_1d(x)))

    @property
    def is_point(self) -> bool:
        return self.state is State.POINT

    def __add__(self, x) -> "PathValue":
        # cemetery and unobserved absorb any increment
        if not self.is_point:
            return self
        if isinstance(x, PathValue):
            if not x.is_point:
                return x
            x = x.point
        inc = np.atleast_1d(np.asarray(x, dtype=float))
        return PathValue.at(np.asarray(self.point) + inc)

    __radd__ = __add__

    def __str__(self) -> str:
        if self.is_point:
            return "(" + ", ".join(f"{v:g}" for v in self.point) + ")"
        return self.state.name


CEMETERY = PathValue(State.CEMETERY)
UNOBSERVED = PathValue(State.UNOBSERVED)


def add_increment(value: PathValue, x) -> PathValue:
    """``value + x`` with the convention ``∂ + x = ∂``."""
    return value + x


# ---------------------------------------------------------------------------
# Jump measures and models
# ---------------------------------------------------------------------------


def _location(x, dim: int) -> Location:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.shape != (dim,):
        raise ValueError(f"atom location {x!r} is not a vector of length {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"atom location {x!r} is not finite")
    # +0.0 folds -0.0 into 0.0 so tuple equality is bitwise on the canonical form
    loc = tuple(float(v) + 0.0 for v in arr)
    if all(v == 0.0 for v in loc):
        raise ValueError("jump measures cannot charge the origin")
    return loc


def _in_closed_unit_ball(loc: Location) -> bool:
    return sum(Fraction(v) ** 2 for v in loc) <= 1


@dataclass(frozen=True)
class AtomicJumpMeasure:
    """Finite measure with finitely many atoms away from the origin.

    Masses are held as exact rationals so that sums and differences of
    measures (``nu + (nu1 - nu)``) reproduce their inputs exactly.  Atoms at
    equal locations are merged on construction and kept sorted.
    """

    dim: int
    atoms: tuple[tuple[Location, Fraction], ...] = ()

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        merged: dict[Location, Fraction] = {}
        for loc, mass in self.atoms:
            loc = _location(loc, self.dim)
            try:
                m = Fraction(mass)
            except (ValueError, OverflowError, TypeError) as exc:
                raise ValueError(f"invalid atom mass {mass!r}") from exc
            if m <= 0:
                raise ValueError(f"atom masses must be positive, got {mass!r} at {loc}")
            merged[loc] = merged.get(loc, Fraction(0)) + m
        object.__setattr__(self, "atoms", tuple(sorted(merged.items())))

    @classmethod
    def empty(cls, dim: int = 1) -> "AtomicJumpMeasure":
        return cls(dim)

    @classmethod
    def from_pairs(cls, pairs: Iterable, dim: int | None = None) -> "AtomicJumpMeasure":
        pairs = [(np.atleast_1d(np.asarray(x, dtype=float)), m) for x, m in pairs]
        if dim is None:
            if not pairs:
                raise ValueError("dimension of an empty measure must be given")
            dim = pairs[0][0].shape[0]
        return cls(dim, tuple(pairs))

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self):
        return iter(self.atoms)

    def __bool__(self) -> bool:
        return bool(self.atoms)

    def mass_at(self, loc) -> Fraction:
        key = _location(loc, self.dim)
        return dict(self.atoms).get(key, Fraction(0))

    @cached_property
    def total_mass(self) -> float:
        return float(sum((m for _, m in self.atoms), Fraction(0)))

    @cached_property
    def locations(self) -> np.ndarray:
        out = np.array([loc for loc, _ in self.atoms], dtype=float).reshape(-1, self.dim)
        out.setflags(write=False)
        return out

    @cached_property
    def masses(self) -> np.ndarray:
        out = np.array([float(m) for _, m in self.atoms], dtype=float)
        out.setflags(write=False)
        return out

    @cached_property
    def _cumulative(self) -> np.ndarray:
        cum = np.cumsum(self.masses) / self.total_mass
        cum[-1] = 1.0
        return cum

    def _check_dim(self, other: "AtomicJumpMeasure"):
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "AtomicJumpMeasure") -> "AtomicJumpMeasure":
        self._check_dim(other)
        return AtomicJumpMeasure(self.dim, self.atoms + other.atoms)

    def minimum(self, other: "AtomicJumpMeasure") -> "AtomicJumpMeasure":
        """Atomwise minimum: the largest measure below both."""
        self._check_dim(other)
        theirs = dict(other.atoms)
        common = [(loc, min(m, theirs[loc])) for loc, m in self.atoms if loc in theirs]
        return AtomicJumpMeasure(self.dim, tuple(common))

    def subtract(self, other: "AtomicJumpMeasure") -> "AtomicJumpMeasure":
        """Atomwise difference; ``other`` must be dominated by ``self``."""
        self._check_dim(other)
        mine = dict(self.atoms)
        for loc, m in other.atoms:
            if mine.get(loc, Fraction(0)) < m:
                raise ValueError(f"cannot subtract: mass at {loc} would become negative")
            mine[loc] -= m
        return AtomicJumpMeasure(self.dim, tuple((l, m) for l, m in mine.items() if m > 0))

    def dominated_by(self, other: "AtomicJumpMeasure") -> bool:
        theirs = dict(other.atoms)
        return all(m <= theirs.get(loc, Fraction(0)) for loc, m in self.atoms)

    def ball_moment_exact(self) -> tuple[Fraction, ...]:
        """``sum_{|x| <= 1} x m(x)`` in exact arithmetic (closed unit ball)."""
        acc = [Fraction(0)] * self.dim
        for loc, m in self.atoms:
            if _in_closed_unit_ball(loc):
                for i, v in enumerate(loc):
                    acc[i] += Fraction(v) * m
        return tuple(acc)

    def ball_moment(self) -> np.ndarray:
        return np.array([float(v) for v in self.ball_moment_exact()])

    def to_json(self) -> list[dict]:
        out = []
        for loc, m in self.atoms:
            entry = {"x": list(loc), "mass": float(m)}
            if Fraction(float(m)) != m:
                entry["mass_exact"] = str(m)
            out.append(entry)
        return out

    @classmethod
    def from_json(cls, atoms: Sequence[dict], dim: int) -> "AtomicJumpMeasure":
        pairs = []
        for entry in atoms:
            if not isinstance(entry, dict) or "x" not in entry or "mass" not in entry:
                raise ValueError(f"atom entries need 'x' and 'mass': {entry!r}")
            mass = Fraction(entry["mass_exact"]) if "mass_exact" in entry else entry["mass"]
            pairs.append((entry["x"], mass))
        return cls(dim, tuple(pairs))

    def __str__(self) -> str:
        body = ", ".join(f"({', '.join(f'{v:g}' for v in loc)}: {float(m):g})" for loc, m in self.atoms)
        return "{" + body + "}"


def _as_vector(x, dim: int | None = None) -> tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1 or (dim is not None and arr.shape[0] != dim):
        raise ValueError(f"expected a vector of length {dim}, got {x!r}")
    return tuple(float(v) + 0.0 for v in arr)


def _as_matrix(s, dim: int) -> tuple[tuple[float, ...], ...]:
    arr = np.asarray(s, dtype=float)
    if arr.ndim == 0 and dim == 1:
        arr = arr.reshape(1, 1)
    if arr.shape != (dim, dim):
        raise ValueError(f"sigma must be {dim}x{dim}, got shape {arr.shape}")
    return tuple(tuple(float(v) + 0.0 for v in row) for row in arr)


@dataclass(frozen=True)
class LevyModel:
    """Characteristic data of a possibly-killed finite-activity Lévy process.

    Parameters
    ----------
    gamma : array_like
        Lévy-Itô drift (small jumps compensated over the closed unit ball).
    sigma : array_like
        Gaussian covariance per unit time, symmetric positive semidefinite.
    jumps : AtomicJumpMeasure, optional
        Finite jump measure; defaults to the zero measure.
    kill_rate : float
        Rate ``q >= 0`` of the exponential lifetime.
    """

    gamma: tuple[float, ...]
    sigma: tuple[tuple[float, ...], ...]
    jumps: AtomicJumpMeasure = None
    kill_rate: float = 0.0

    def __post_init__(self):
        gamma = _as_vector(self.gamma)
        d = len(gamma)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "sigma", _as_matrix(self.sigma, d))
        if self.jumps is None:
            object.__setattr__(self, "jumps", AtomicJumpMeasure.empty(d))
        if self.jumps.dim != d:
            raise ValueError(f"jump measure has dimension {self.jumps.dim}, model has {d}")
        q = float(self.kill_rate)
        if not (math.isfinite(q) and q >= 0):
            raise ValueError(f"kill_rate must be finite and >= 0, got {self.kill_rate}")
        object.__setattr__(self, "kill_rate", q)
        if not all(math.isfinite(v) for v in gamma):
            raise ValueError("gamma must be finite")
        s = self.sigma_array
        if not np.all(np.isfinite(s)):
            raise ValueError("sigma must be finite")
        if np.max(np.abs(s - s.T), initial=0.0) > SYMMETRY_TOL:
            raise ValueError("sigma must be symmetric")
        if np.linalg.eigvalsh(0.5 * (s + s.T)).min() < -SYMMETRY_TOL:
            raise ValueError("sigma must be positive semidefinite")

    # -- constructors -----------------------------------------------------

    @classmethod
    def zero(cls, d: int = 1, kill_rate: float = 0.0) -> "LevyModel":
        return cls((0.0,) * d, np.zeros((d, d)), kill_rate=kill_rate)

    @classmethod
    def brownian(cls, drift=0.0, variance=1.0, kill_rate: float = 0.0) -> "LevyModel":
        gamma = _as_vector(drift)
        var = np.asarray(variance, dtype=float)
        if var.ndim == 0:
            var = var * np.eye(len(gamma))
        return cls(gamma, var, kill_rate=kill_rate)

    @classmethod
    def compound_poisson(cls, jumps: AtomicJumpMeasure | Iterable, kill_rate: float = 0.0,
                         dim: int | None = None) -> "LevyModel":
        """Pure compound Poisson process (no drift between jumps)."""
        if not isinstance(jumps, AtomicJumpMeasure):
            jumps = AtomicJumpMeasure.from_pairs(jumps, dim=dim or 1)
        return cls(jumps.ball_moment(), np.zeros((jumps.dim, jumps.dim)), jumps, kill_rate)

    @classmethod
    def poisson(cls, rate: float, size: float = 1.0, kill_rate: float = 0.0) -> "LevyModel":
        return cls.compound_poisson([(size, rate)], kill_rate=kill_rate)

    @classmethod
    def from_parts(cls, continuous_drift=0.0, variance=0.0, jumps=(), kill_rate: float = 0.0) -> "LevyModel":
        """Build from the drift *between jumps* instead of the triplet drift."""
        drift = _as_vector(continuous_drift)
        d = len(drift)
        if not isinstance(jumps, AtomicJumpMeasure):
            jumps = AtomicJumpMeasure.from_pairs(jumps, dim=d)
        var = np.asarray(variance, dtype=float)
        if var.ndim == 0:
            var = var * np.eye(d)
        return cls(np.asarray(drift) + jumps.ball_moment(), var, jumps, kill_rate)

    # -- derived quantities ---------------------------------------------------

    @property
    def d(self) -> int:
        return len(self.gamma)

    @cached_property
    def gamma_array(self) -> np.ndarray:
        return np.array(self.gamma)

    @cached_property
    def sigma_array(self) -> np.ndarray:
        return np.array(self.sigma, dtype=float).reshape(self.d, self.d)

    @cached_property
    def continuous_drift(self) -> np.ndarray:
        """Drift of the path between jumps: ``gamma - sum_{|x|<=1} x m(x)``."""
        return self.gamma_array - self.jumps.ball_moment()

    @cached_property
    def _gaussian_factor(self) -> np.ndarray | None:
        s = self.sigma_array
        if not np.any(s):
            return None
        w, v = np.linalg.eigh(0.5 * (s + s.T))
        return v * np.sqrt(np.clip(w, 0.0, None))

    @property
    def is_killed(self) -> bool:
        return self.kill_rate > 0

    def without_killing(self) -> "LevyModel":
        return replace(self, kill_rate=0.0)

    def char_exponent(self, u) -> complex:
        """Lévy exponent ``psi(u)`` with ``E[exp(i<u, X_t>) | t < zeta] = exp(t psi(u))``."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        val = 1j * u @ self.gamma_array - 0.5 * u @ self.sigma_array @ u
        for loc, m in self.jumps:
            x = np.asarray(loc)
            comp = 1j * (u @ x) if _in_closed_unit_ball(loc) else 0.0
            val += float(m) * (np.exp(1j * (u @ x)) - 1.0 - comp)
        return complex(val)

    def mean_rate(self) -> np.ndarray:
        """``E[X_t | t < zeta] / t``."""
        return self.continuous_drift + self.jumps.masses @ self.jumps.locations

    # -- serialization ------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "gamma": list(self.gamma),
            "sigma": [list(row) for row in self.sigma],
            "jumps": self.jumps.to_json(),
            "kill_rate": self.kill_rate,
        }

    @classmethod
    def from_json(cls, data: dict) -> "LevyModel":
        if not isinstance(data, dict):
            raise ValueError("model must be a JSON object")
        missing = {"d", "gamma", "sigma"} - data.keys()
        if missing:
            raise ValueError(f"model is missing fields: {sorted(missing)}")
        d = int(data["d"])
        gamma = _as_vector(data["gamma"], d)
        jumps = AtomicJumpMeasure.from_json(data.get("jumps", []), d)
        return cls(gamma, data["sigma"], jumps, data.get("kill_rate", 0.0))


def load_model(path) -> LevyModel:
    with open(path) as fh:
        return LevyModel.from_json(json.load(fh))


def save_model(model: LevyModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_json(), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Sample paths
# ---------------------------------------------------------------------------


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SamplePath:
    """One realization on the grid ``0, h, 2h, ..., horizon``.

    ``points[k]`` holds the coordinates at node ``k`` (NaN unless
    ``states[k] == State.POINT``).  ``death_index`` is the lifetime as a node
    index; ``None`` means an infinite lifetime.  It may exceed the number of
    steps, in which case the process dies after the horizon.
    """

    step: float
    points: np.ndarray
    states: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    death_index: int | None = None

    def __post_init__(self):
        for name in ("points", "states", "jump_times", "jump_sizes"):
            _frozen(getattr(self, name))

    @property
    def n_steps(self) -> int:
        return self.points.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def horizon(self) -> float:
        return self.n_steps * self.step

    @property
    def lifetime(self) -> float:
        return math.inf if self.death_index is None else self.death_index * self.step

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.step

    @property
    def jump_events(self) -> list[tuple[float, Location]]:
        return [(float(t), tuple(float(v) for v in s)) for t, s in zip(self.jump_times, self.jump_sizes)]

    def value(self, k: int) -> PathValue:
        state = State(int(self.states[k]))
        if state is State.POINT:
            return PathValue(state, tuple(float(v) for v in self.points[k]))
        return PathValue(state)

    @property
    def values(self) -> list[PathValue]:
        return [self.value(k) for k in range(self.n_steps + 1)]

    def alive(self, k: int) -> bool:
        return self.death_index is None or k < self.death_index

    def validate(self) -> None:
        """Raise ``ValueError`` if a structural invariant is broken."""
        n = self.n_steps
        if self.death_index is not None and self.death_index < 1:
            raise ValueError("lifetime must be positive")
        if not (self.states[0] == State.POINT and np.all(self.points[0] == 0)):
            raise ValueError("path must start at the origin")
        dead = np.arange(n + 1) >= (self.death_index if self.death_index is not None else n + 1)
        if np.any((self.states == State.CEMETERY) != dead):
            raise ValueError("cemetery must hold exactly from the lifetime on")
        if np.any(self.states == State.UNOBSERVED):
            raise ValueError("sample paths carry no unobserved nodes")
        if np.any(np.diff(self.jump_times) <= 0):
            raise ValueError("jump times must be strictly increasing")
        if self.jump_times.size and not (0 < self.jump_times[0] and self.jump_times[-1] <= self.horizon + 1e-12):
            raise ValueError("jump times must lie in (0, horizon]")
        if self.jump_times.size and self.jump_times[-1] >= self.lifetime:
            raise ValueError("jump after the lifetime")

    def identical_to(self, other: "SamplePath") -> bool:
        """Bitwise equality of every field."""
        return (
            self.step == other.step
            and self.death_index == other.death_index
            and self.points.tobytes() == other.points.tobytes()
            and self.states.tobytes() == other.states.tobytes()
            and self.jump_times.tobytes() == other.jump_times.tobytes()
            and self.jump_sizes.tobytes() == other.jump_sizes.tobytes()
        )

    def to_csv(self, out=None) -> str:
        """CSV with columns ``time, coordinate_1..d, state``."""
        return _grid_csv(self.step, self.points, self.states, out)


def _grid_csv(step, points, states, out=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    d = points.shape[1]
    writer.writerow(["time", *(f"coordinate_{i + 1}" for i in range(d)), "state"])
    for k in range(points.shape[0]):
        state = State(int(states[k]))
        coords = [repr(float(v)) for v in points[k]] if state is State.POINT else [""] * d
        writer.writerow([repr(k * step), *coords, state.name])
    text = buf.getvalue()
    if out is not None:
        Path(out).write_text(text)
    return text


def make_path(step: float, points, states=None, jump_times=(), jump_sizes=None,
              death_index: int | None = None) -> SamplePath:
    """Assemble a :class:`SamplePath` from raw arrays (mainly for tests and tools)."""
    points = np.array(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n1, d = points.shape
    if states is None:
        states = np.full(n1, State.POINT, dtype=np.int8)
        if death_index is not None and death_index < n1:
            states[death_index:] = State.CEMETERY
    states = np.array(states, dtype=np.int8)
    points[states != State.POINT] = np.nan
    jump_times = np.array(jump_times, dtype=float).reshape(-1)
    if jump_sizes is None:
        jump_sizes = np.zeros((jump_times.size, d))
    jump_sizes = np.array(jump_sizes, dtype=float).reshape(jump_times.size, d)
    path = SamplePath(float(step), points, states, jump_times, jump_sizes, death_index)
    path.validate()
    return path


def _n_steps(horizon: float, step: float) -> int:
    if not (step > 0 and math.isfinite(step)):
        raise ValueError(f"step must be positive, got {step}")
    if not (horizon > 0 and math.isfinite(horizon)):
        raise ValueError(f"horizon must be positive, got {horizon}")
    return grid_index(horizon, step, what="horizon")


_NO_TIMES = np.empty(0)


def simulate(model: LevyModel, horizon: float = DEFAULT_HORIZON, step: float = DEFAULT_STEP,
             seed: int = 0) -> SamplePath:
    """Exact grid simulation of a possibly-killed Lévy path.

    Raises
    ------
    ValueError
        Non-positive step or horizon.
    GridError
        Horizon not a multiple of step.
    """
    n = _n_steps(horizon, step)
    rng = generator(seed)
    d = model.d
    horizon = n * step

    death = None
    if model.kill_rate > 0:
        death = max(1, math.ceil(rng.exponential(1.0 / model.kill_rate) / step))

    incr = np.empty((n, d))
    incr[:] = model.continuous_drift * step
    factor = model._gaussian_factor
    if factor is not None:
        z = rng.standard_normal((n, d))
        incr += math.sqrt(step) * (z * factor[0, 0] if d == 1 else z @ factor.T)

    times, sizes = _NO_TIMES, np.empty((0, d))
    jumps = model.jumps
    if jumps:
        count = rng.poisson(jumps.total_mass * horizon)
        if count:
            times = np.sort(rng.uniform(0.0, horizon, count))
            which = np.searchsorted(jumps._cumulative, rng.random(count), side="right")
            sizes = jumps.locations[np.minimum(which, len(jumps) - 1)]
            nodes = np.maximum(np.ceil(times / step).astype(np.int64), 1)
            np.add.at(incr, nodes - 1, sizes)

    points = np.zeros((n + 1, d))
    np.cumsum(incr, axis=0, out=points[1:])
    states = np.zeros(n + 1, dtype=np.int8)
    if death is not None:
        if death <= n:
            points[death:] = np.nan
            states[death:] = State.CEMETERY
        keep = times < death * step
        times, sizes = times[keep], sizes[keep]
    return SamplePath(step, points, states, times, np.ascontiguousarray(sizes), death)


def marginal_at(path: SamplePath, t: float) -> PathValue:
    k = grid_index(t, path.step)
    if not 0 <= k <= path.n_steps:
        raise GridError(f"t={t} lies outside [0, {path.horizon}]")
    return path.value(k)


def apply_killing(path: SamplePath, kill_time: float) -> SamplePath:
    """Kill ``path`` at grid node ``kill_time`` (``inf`` leaves it unchanged)."""
    if math.isinf(kill_time) and kill_time > 0:
        return path
    k = grid_index(kill_time, path.step, what="kill_time")
    if k < 1:
        raise ValueError("kill_time must be positive")
    if path.death_index is not None and path.death_index <= k:
        return path
    points = path.points.copy()
    states = path.states.copy()
    if k <= path.n_steps:
        points[k:] = np.nan
        states[k:] = State.CEMETERY
    keep = path.jump_times < k * path.step
    return SamplePath(path.step, points, states, path.jump_times[keep].copy(),
                      path.jump_sizes[keep].copy(), k)


def splice(prefix: SamplePath, at: int, continuation: SamplePath) -> SamplePath:
    """Follow ``prefix`` on ``[0, at*h]``, then the increments of ``continuation``.

    This is the gluing step ``Y = Y on [0, S); Y_S + X_{. - S} on [S, inf)``.
    ``∂`` absorbs: a prefix already dead at node ``at`` is returned unchanged.
    """
    if continuation.step != prefix.step:
        raise GridError("paths live on different grids")
    n = prefix.n_steps
    if not 0 <= at <= n:
        raise GridError(f"splice node {at} outside [0, {n}]")
    if prefix.death_index is not None and prefix.death_index <= at:
        return prefix
    m = n - at
    if continuation.n_steps < m:
        raise ValueError("continuation is shorter than the remaining horizon")
    points = np.empty_like(prefix.points)
    points[: at + 1] = prefix.points[: at + 1]
    points[at + 1:] = prefix.points[at] + continuation.points[1: m + 1]
    states = np.empty_like(prefix.states)
    states[: at + 1] = prefix.states[: at + 1]
    states[at + 1:] = continuation.states[1: m + 1]
    death = None if continuation.death_index is None else at + continuation.death_index
    cut = at * prefix.step
    mine = prefix.jump_times <= cut
    theirs = continuation.jump_times <= m * prefix.step
    times = np.concatenate([prefix.jump_times[mine], continuation.jump_times[theirs] + cut])
    sizes = np.concatenate([prefix.jump_sizes[mine], continuation.jump_sizes[theirs]])
    return SamplePath(prefix.step, points, states, times, sizes, death)


# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Observation:
    """A path seen on ``[0, T]`` (``closed``) or ``[0, T)``, ``↑`` elsewhere."""

    step: float
    points: np.ndarray
    states: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    window_index: int
    closed: bool

    @property
    def window_end(self) -> float:
        return self.window_index * self.step

    def value(self, k: int) -> PathValue:
        state = State(int(self.states[k]))
        if state is State.POINT:
            return PathValue(state, tuple(float(v) for v in self.points[k]))
        return PathValue(state)

    @property
    def values(self) -> list[PathValue]:
        return [self.value(k) for k in range(self.points.shape[0])]

    @property
    def jump_events(self) -> list[tuple[float, Location]]:
        return [(float(t), tuple(float(v) for v in s)) for t, s in zip(self.jump_times, self.jump_sizes)]

    def to_csv(self, out=None) -> str:
        return _grid_csv(self.step, self.points, self.states, out)


def restrict(path: SamplePath, T: float, closed: bool = True) -> Observation:
    k = grid_index(T, path.step, what="T")
    if not 0 <= k <= path.n_steps:
        raise GridError(f"T={T} lies outside [0, {path.horizon}]")
    last = k if closed else k - 1
    points = path.points.copy()
    states = path.states.copy()
    points[last + 1:] = np.nan
    states[last + 1:] = State.UNOBSERVED
    cut = k * path.step
    keep = path.jump_times <= cut if closed else path.jump_times < cut
    return Observation(path.step, _frozen(points), _frozen(states),
                       _frozen(path.jump_times[keep].copy()), _frozen(path.jump_sizes[keep].copy()),
                       k, bool(closed))


__all__ = [
    "AtomicJumpMeasure", "CEMETERY", "DEFAULT_HORIZON", "DEFAULT_STEP", "GridError",
    "LevyModel", "Observation", "PathValue", "SamplePath", "State", "UNOBSERVED",
    "add_increment", "apply_killing", "grid_ceil", "grid_index", "load_model", "make_path",
    "marginal_at", "restrict", "save_model", "simulate", "splice",
]
