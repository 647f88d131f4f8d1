"""Whittle indices: closed forms, a subsidy-bisection oracle and an indexability audit."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    INFINITE,
    ArmKind,
    ArmModel,
    Criterion,
    belief_step_passive,
    expected_reward,
    gamma_infinity,
    passive_iterate_from,
    subsidy_bounds,
    waiting_time_from,
)
from .dp import bellman_sweep, make_grid
from .values import DEFAULT_GRID, ThresholdResult, optimal_threshold

__all__ = [
    "IndexResult",
    "NoCrossingError",
    "AuditReport",
    "index_discounted",
    "index_average",
    "whittle_index",
    "index_oracle",
    "indexability_audit",
]


@dataclass(frozen=True)
class IndexResult:
    w: float
    regime: str
    criterion: Criterion

    def __float__(self):
        return float(self.w)


class NoCrossingError(RuntimeError):
    """Play-minus-idle advantage kept one sign over the whole subsidy bracket."""


def _wait_from_reset_top(model: ArmModel, pi: float) -> float:
    # K(1, pi): passive steps from belief 1 until the belief drops below pi
    return waiting_time_from(model, 1.0, pi)


def index_discounted(model: ArmModel, beta: float, pi: float) -> IndexResult:
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta!r}")
    crit = Criterion.discounted(beta)
    r0, r1, p = model.rho0, model.rho1, model.p
    dr = r0 - r1

    if model.kind is ArmKind.B:
        if pi == 0.0:
            return IndexResult(r1, "pi=0 boundary", crit)
        if model.is_dual and pi > gamma_infinity(model):
            # idling once moves the belief below pi, where the arm is played
            g = belief_step_passive(model, pi)
            return IndexResult(r1 + dr * (pi - beta * g), "above gamma_inf", crit)
        w = (1.0 - beta) * expected_reward(model, pi) + beta * r1
        return IndexResult(w, "idle forever", crit)

    if model.is_dual and pi < gamma_infinity(model):
        return IndexResult(expected_reward(model, pi), "below gamma_inf", crit)
    k = _wait_from_reset_top(model, pi)
    if k == INFINITE:
        # pi = 0 (base) or pi = gamma_inf (dual): limit of the finite-K formula
        return IndexResult(expected_reward(model, pi), "K=inf limit", crit)
    k = int(k)
    bk1 = beta ** (k + 1)
    if model.is_dual:
        top = passive_iterate_from(model, 1.0, k)
        slope = pi - beta * belief_step_passive(model, pi)
    else:
        top = (1.0 - p) ** k
        slope = (1.0 - beta * (1.0 - p)) * pi
    w = r1 + bk1 * dr * top + dr / (1.0 - beta) * (1.0 - bk1) * slope
    return IndexResult(w, f"K={k}", crit)


def index_average(model: ArmModel, pi: float) -> IndexResult:
    """Average-reward index, the beta -> 1 limit of :func:`index_discounted`.

    For type A the limit of ``(1 - beta^(K+1)) / (1 - beta)`` is ``K + 1``.
    """
    crit = Criterion.average()
    r0, r1, p = model.rho0, model.rho1, model.p
    dr = r0 - r1

    if model.kind is ArmKind.B:
        if model.is_dual and pi > gamma_infinity(model):
            g = belief_step_passive(model, pi)
            return IndexResult(r1 + dr * (pi - g), "above gamma_inf", crit)
        return IndexResult(r1, "constant", crit)

    if model.is_dual and pi < gamma_infinity(model):
        return IndexResult(expected_reward(model, pi), "below gamma_inf", crit)
    k = _wait_from_reset_top(model, pi)
    if k == INFINITE:
        return IndexResult(expected_reward(model, pi), "K=inf limit", crit)
    k = int(k)
    if model.is_dual:
        top = passive_iterate_from(model, 1.0, k)
        slope = pi - belief_step_passive(model, pi)
    else:
        top = (1.0 - p) ** k
        slope = p * pi
    return IndexResult(r1 + dr * top + (k + 1) * dr * slope, f"K={k}", crit)


def whittle_index(model: ArmModel, criterion: Criterion, pi: float) -> IndexResult:
    if criterion.is_average:
        return index_average(model, pi)
    return index_discounted(model, criterion.beta, pi)


def _bracket(model: ArmModel, beta: float, pad: float = 0.1) -> tuple[float, float]:
    rng = subsidy_bounds(model, beta)
    return rng.lambda_low - pad, rng.lambda_high + pad


def index_oracle(model: ArmModel, beta: float, pi: float, lambda_tol: float = 1e-5,
                 grid_size: int = DEFAULT_GRID) -> IndexResult:
    """Smallest subsidy at which idling is optimal at ``pi``, found by bisection.

    Each probe solves the grid dynamic program and compares the play and idle
    branches at ``pi``.  Bisection is valid because the advantage of playing
    decreases in the subsidy.
    """
    model.require_ordered()
    if lambda_tol <= 0:
        raise ValueError("lambda_tol must be positive")
    bg = make_grid(model, grid_size)
    r_pi = expected_reward(model, pi)
    passive_pi = belief_step_passive(model, pi)

    def advantage(lam: float) -> float:
        v = bellman_sweep(bg, beta, lam)
        play = r_pi + beta * v[bg.reset]
        idle = lam + beta * float(np.interp(passive_pi, bg.points, v))
        return play - idle

    lo, hi = _bracket(model, beta)
    if advantage(lo) <= 0.0 or advantage(hi) > 0.0:
        raise NoCrossingError(
            f"no play/idle crossing in [{lo:.4g}, {hi:.4g}] at pi={pi} for {model}"
        )
    while hi - lo > lambda_tol:
        mid = 0.5 * (lo + hi)
        if advantage(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return IndexResult(0.5 * (lo + hi), "oracle", Criterion.discounted(beta))


@dataclass(frozen=True, eq=False)
class AuditReport:
    model: ArmModel
    beta: float
    lambdas: np.ndarray
    thresholds: list[ThresholdResult] = field(repr=False)
    effective: np.ndarray = field(repr=False)
    worst_increase: float
    tolerance: float
    passed: bool

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


def indexability_audit(model: ArmModel, beta: float, lambda_points: int = 50,
                       grid_size: int = DEFAULT_GRID) -> AuditReport:
    """Check that the optimal threshold is non-increasing as the subsidy grows.

    A rise larger than one grid spacing between adjacent subsidies is a FAIL.
    """
    if lambda_points < 3:
        raise ValueError("lambda_points must be at least 3")
    rng = subsidy_bounds(model, beta)
    lambdas = np.linspace(rng.lambda_low, rng.lambda_high, lambda_points)
    results = [optimal_threshold(model, beta, float(lam), grid_size) for lam in lambdas]
    eff = np.array([r.effective for r in results])
    tolerance = 1.0 / (grid_size - 1)
    worst = float(np.max(np.diff(eff), initial=0.0))
    return AuditReport(model, beta, lambdas, results, eff, worst, tolerance, worst <= tolerance)
