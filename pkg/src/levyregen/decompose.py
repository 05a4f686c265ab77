"""Law-level algebra: common jump parts, compensation, convolution and killing.

Two finite-activity models differ only by compound Poisson parts and killing
exactly when their Gaussian covariances agree and their drifts between jumps
(``gamma`` minus the small-jump moment) agree.  :func:`reconcile` checks this
and returns the decomposition ``model_i = k_{q_i}(common * CP(residual_i))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .levy_core import AtomicJumpMeasure, LevyModel, _location, grid_index, simulate
from .rng import STREAM_DIRECT, derive_seed

RECONCILE_TOL = 1e-9


def common_component(nu1: AtomicJumpMeasure, nu2: AtomicJumpMeasure):
    """Split two measures into a shared part and residuals.

    Returns
    -------
    nu, res1, res2 : AtomicJumpMeasure
        ``nu`` is the atomwise minimum and ``res_i = nu_i - nu``.
    """
    nu = nu1.minimum(nu2)
    return nu, nu1.subtract(nu), nu2.subtract(nu)


def compensation_shift(nu1: AtomicJumpMeasure, nu2: AtomicJumpMeasure) -> np.ndarray:
    """``L = sum_{|x|<=1} x nu1(x) - sum_{|x|<=1} x nu2(x)``."""
    m1, m2 = nu1.ball_moment_exact(), nu2.ball_moment_exact()
    if len(m1) != len(m2):
        raise ValueError("dimension mismatch")
    return np.array([float(a - b) for a, b in zip(m1, m2)])


def _check_same_dim(a: LevyModel, b: LevyModel):
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")


def convolve_laws(a: LevyModel, b: LevyModel) -> LevyModel:
    """Law of the sum of independent unkilled processes (triplets add)."""
    _check_same_dim(a, b)
    if a.is_killed or b.is_killed:
        raise ValueError("convolution is defined for unkilled Lévy laws")
    return LevyModel(a.gamma_array + b.gamma_array, a.sigma_array + b.sigma_array,
                     a.jumps + b.jumps, 0.0)


def add_killing(a: LevyModel, q: float) -> LevyModel:
    """Attach an independent Exp(``q``) lifetime to an unkilled law."""
    if a.is_killed:
        raise ValueError("model is already killed")
    if not (math.isfinite(q) and q >= 0):
        raise ValueError(f"kill rate must be finite and >= 0, got {q}")
    return replace(a, kill_rate=float(q))


def _exact_continuous_drift(m: LevyModel) -> tuple[Fraction, ...]:
    return tuple(Fraction(g) - b for g, b in zip(m.gamma, m.jumps.ball_moment_exact()))


@dataclass(frozen=True)
class ReconciliationReport:
    """Outcome of :func:`reconcile`.

    ``common_law`` is ``None`` when the models are not equivalent.
    """

    equivalent_mod_cp_kill: bool
    common_law: LevyModel | None
    residual_a: AtomicJumpMeasure
    residual_b: AtomicJumpMeasure
    kill_a: float
    kill_b: float
    gaussian_mismatch: float
    drift_mismatch: float
    shift: np.ndarray

    def reassemble(self, which: str) -> LevyModel:
        """Rebuild ``k_q(common * CP(residual))`` for ``which`` in ``{"a", "b"}``."""
        if self.common_law is None:
            raise ValueError("models are not equivalent; nothing to reassemble")
        if which not in ("a", "b"):
            raise ValueError("which must be 'a' or 'b'")
        res, q = (self.residual_a, self.kill_a) if which == "a" else (self.residual_b, self.kill_b)
        return add_killing(convolve_laws(self.common_law, LevyModel.compound_poisson(res)), q)

    def to_json(self) -> dict:
        return {
            "equivalent_mod_cp_kill": self.equivalent_mod_cp_kill,
            "common_law": None if self.common_law is None else self.common_law.to_json(),
            "residual_a": self.residual_a.to_json(),
            "residual_b": self.residual_b.to_json(),
            "kill_a": self.kill_a,
            "kill_b": self.kill_b,
            "gaussian_mismatch": self.gaussian_mismatch,
            "drift_mismatch": self.drift_mismatch,
            "compensation_shift": [float(v) for v in self.shift],
        }


def reconcile(a: LevyModel, b: LevyModel, tol: float = RECONCILE_TOL) -> ReconciliationReport:
    """Decide whether ``a`` and ``b`` differ only modulo compound Poisson parts and killing.

    Examples
    --------
    >>> r = reconcile(LevyModel.poisson(1.0), LevyModel.zero(kill_rate=1.0))
    >>> r.equivalent_mod_cp_kill, str(r.residual_a), r.kill_b
    (True, '{(1: 1)}', 1.0)
    """
    _check_same_dim(a, b)
    nu, res1, res2 = common_component(a.jumps, b.jumps)
    gauss = float(np.max(np.abs(a.sigma_array - b.sigma_array), initial=0.0))
    ca, cb = _exact_continuous_drift(a), _exact_continuous_drift(b)
    drift = float(max(abs(x - y) for x, y in zip(ca, cb)))
    ok = gauss <= tol and drift <= tol
    common = None
    if ok:
        moment = res1.ball_moment_exact()
        gamma = [float(Fraction(g) - m) for g, m in zip(a.gamma, moment)]
        common = LevyModel(gamma, a.sigma_array, nu, 0.0)
    return ReconciliationReport(ok, common, res1, res2, a.kill_rate, b.kill_rate,
                                gauss, drift, compensation_shift(res1, res2))


def models_match(a: LevyModel, b: LevyModel, tol: float = RECONCILE_TOL) -> bool:
    """Atoms equal exactly; drift, covariance and kill rate within ``tol``."""
    return (a.d == b.d and a.jumps.atoms == b.jumps.atoms
            and float(np.max(np.abs(a.gamma_array - b.gamma_array))) <= tol
            and float(np.max(np.abs(a.sigma_array - b.sigma_array))) <= tol
            and abs(a.kill_rate - b.kill_rate) <= tol)


# ---------------------------------------------------------------------------
# Jump counts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JumpCountSummary:
    counts: np.ndarray
    mean: float
    variance: float

    @property
    def dispersion(self) -> float:
        return self.variance / self.mean if self.mean > 0 else math.nan

    @property
    def sem(self) -> float:
        return math.sqrt(self.variance / self.counts.size)


def jump_count_statistics(paths, atom_subset, interval=(0.0, 1.0)) -> JumpCountSummary:
    """Count jump events with time in ``(lo, hi]`` and size in ``atom_subset``.

    Raises
    ------
    ValueError
        Empty collection, or an interval beyond some path's horizon.
    """
    paths = list(paths)
    if not paths:
        raise ValueError("no paths given")
    lo, hi = map(float, interval)
    if not 0 <= lo < hi:
        raise ValueError(f"invalid interval {interval!r}")
    d = paths[0].dim
    subset = np.array([_location(x, d) for x in atom_subset], dtype=float).reshape(-1, d)
    counts = np.empty(len(paths), dtype=np.int64)
    for i, p in enumerate(paths):
        if hi > p.horizon + 1e-12:
            raise ValueError(f"interval end {hi} beyond the path horizon {p.horizon}")
        in_time = (p.jump_times > lo) & (p.jump_times <= hi)
        sizes = p.jump_sizes[in_time] + 0.0
        hit = (sizes[:, None, :] == subset[None, :, :]).all(axis=2).any(axis=1)
        counts[i] = int(hit.sum())
    var = float(counts.var(ddof=1)) if counts.size > 1 else 0.0
    return JumpCountSummary(counts, float(counts.mean()), var)


# ---------------------------------------------------------------------------
# Characteristic-function consistency
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CFCheck:
    u: float
    delta: float
    se: float

    @property
    def ok(self) -> bool:
        return self.delta <= 3.0 * self.se


def _surviving_values(model: LevyModel, t: float, n: int, seed: int, step: float) -> np.ndarray:
    k = grid_index(t, step)
    vals = np.array([simulate(model, t, step, derive_seed(seed, STREAM_DIRECT, i)).points[k]
                     for i in range(n)])
    return vals[~np.isnan(vals[:, 0])]


def cf_consistency(report: ReconciliationReport, t: float, freqs, n: int, seed: int,
                   step: float = 2.0**-6) -> list[CFCheck]:
    """Check that the two reassembled laws differ only through their residuals.

    For each frequency ``u`` (applied along the first axis), the empirical
    characteristic function of model ``i`` at time ``t`` given survival is
    divided by the analytic factor ``exp(t psi_{CP(residual_i)}(u))``; both
    quotients estimate the common law's characteristic function, so their
    difference should be within a few standard errors of zero.
    """
    models = [report.reassemble("a"), report.reassemble("b")]
    residuals = [report.residual_a, report.residual_b]
    samples = [_surviving_values(m, t, n, derive_seed(seed, i), step) for i, m in enumerate(models)]
    out = []
    for u in freqs:
        est, var = [], []
        for res, x in zip(residuals, samples):
            uvec = np.zeros(x.shape[1])
            uvec[0] = u
            z = np.exp(1j * (x @ uvec))
            phi = z.mean()
            factor = np.exp(-t * LevyModel.compound_poisson(res).char_exponent(uvec)) if res else 1.0
            est.append(phi * factor)
            var.append(abs(factor) ** 2 * np.mean(np.abs(z - phi) ** 2) / z.size)
        out.append(CFCheck(float(u), float(abs(est[0] - est[1])), float(math.sqrt(sum(var)))))
    return out


__all__ = [
    "CFCheck", "JumpCountSummary", "ReconciliationReport", "add_killing", "cf_consistency",
    "common_component", "compensation_shift", "convolve_laws", "jump_count_statistics",
    "models_match", "reconcile",
]
