"""Single-arm value functions under a subsidy for idling.

``value_iteration`` is the numerical oracle; the ``closed_form_values_*``
functions evaluate the value of a threshold policy analytically (play while
the belief is strictly below ``pi_T``).
"""
from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    INFINITE,
    ArmKind,
    ArmModel,
    expected_reward,
    belief_step_passive,
    gamma_infinity,
    passive_iterate,
    reset_belief,
    waiting_time,
)
from .dp import BeliefGrid, bellman_iterate, bellman_sweep, make_grid

logger = logging.getLogger(__name__)

__all__ = [
    "ValueTable",
    "ThresholdKind",
    "ThresholdResult",
    "ThresholdStructureError",
    "AverageSolution",
    "value_iteration",
    "threshold_policy_value",
    "closed_form_values_typeA",
    "closed_form_values_typeB",
    "closed_form_values_dualspeed",
    "sign_switches",
    "optimal_threshold",
    "average_reward_solve",
    "DEFAULT_GRID",
    "DEFAULT_TOL",
]

DEFAULT_GRID = 2001
DEFAULT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ValueTable:
    model: ArmModel
    grid: np.ndarray
    v: np.ndarray
    v_play: np.ndarray
    v_idle: np.ndarray
    beta: float
    lam: float
    belief_grid: BeliefGrid = field(repr=False)
    iterations: int = 0

    @property
    def spacing(self) -> float:
        return self.belief_grid.spacing

    @property
    def advantage(self) -> np.ndarray:
        """Play-minus-idle value ``d(pi)`` on the grid."""
        return self.v_play - self.v_idle

    def value_at(self, pi):
        return np.interp(pi, self.grid, self.v)

    def branches_at(self, pi: float) -> tuple[float, float]:
        """Play and idle values at an arbitrary belief (one Bellman step off the grid)."""
        m = self.model
        play = expected_reward(m, pi) + self.beta * self.v[self.belief_grid.reset]
        idle = self.lam + self.beta * float(np.interp(belief_step_passive(m, pi), self.grid, self.v))
        return play, idle


def _table_from_values(model, bg: BeliefGrid, v, beta, lam, iterations=0) -> ValueTable:
    right = np.minimum(bg.left + 1, bg.size - 1)
    v_idle = lam + beta * (v[bg.left] * (1.0 - bg.weight) + v[right] * bg.weight)
    v_play = bg.reward + beta * v[bg.reset]
    # report the Bellman image so v == max(v_play, v_idle) holds exactly
    return ValueTable(model, bg.points, np.maximum(v_play, v_idle), v_play, v_idle,
                      beta, lam, bg, iterations)


def value_iteration(model: ArmModel, beta: float, lam: float, grid_size: int = DEFAULT_GRID,
                    tol: float = DEFAULT_TOL, method: str = "iterate") -> ValueTable:
    """Solve the subsidy dynamic program on a uniform belief grid.

    ``method="iterate"`` runs Bellman updates until the sup-norm change is
    below ``tol``.  ``method="sweep"`` returns the exact fixed point of the
    same discretised operator and is what the batteries use; the two agree
    to within the iteration tolerance.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta!r}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    bg = make_grid(model, grid_size)
    if method == "iterate":
        v, its = bellman_iterate(bg, beta, lam, tol)
    elif method == "sweep":
        v, its = bellman_sweep(bg, beta, lam), 0
    else:
        raise ValueError(f"unknown method {method!r}")
    return _table_from_values(model, bg, v, beta, lam, its)


# ---------------------------------------------------------------------------
# closed forms


def _reset_value(model: ArmModel, beta: float, lam: float, pi_T: float) -> float:
    """Value at the reset belief under the threshold policy."""
    r = reset_belief(model)
    k = waiting_time(model, r, pi_T)
    if k == INFINITE:
        return lam / (1.0 - beta)
    if k == 0:
        # reset belief is in the play region: play forever from it
        return expected_reward(model, r) / (1.0 - beta)
    k = int(k)
    bk = beta**k
    return (lam * (1.0 - bk) / (1.0 - beta) + bk * expected_reward(model, passive_iterate(model, r, k))) / (
        1.0 - bk * beta
    )


def threshold_policy_value(model: ArmModel, beta: float, lam: float, pi_T: float, pi: float) -> float:
    """Discounted value of "play iff belief < pi_T" started from ``pi``.

    Idle for ``K(pi, pi_T)`` steps collecting the subsidy, then play and
    restart from the reset belief.
    """
    vr = _reset_value(model, beta, lam, pi_T)
    k = waiting_time(model, pi, pi_T)
    if k == INFINITE:
        return lam / (1.0 - beta)
    k = int(k)
    bk = beta**k
    return lam * (1.0 - bk) / (1.0 - beta) + bk * (
        expected_reward(model, passive_iterate(model, pi, k)) + beta * vr
    )


def _branches(model, beta, lam, pi_T, pi):
    vr = _reset_value(model, beta, lam, pi_T)
    v_play = expected_reward(model, pi) + beta * vr
    v_idle = lam + beta * threshold_policy_value(model, beta, lam, pi_T, belief_step_passive(model, pi))
    return v_play, v_idle


def closed_form_values_typeA(model: ArmModel, beta: float, lam: float, pi_T: float,
                             pi: float) -> tuple[float, float]:
    """Play and idle values of a base type-A arm under threshold ``pi_T``.

    The play branch is ``rho(pi) + beta * V(1)`` with

        V(1) = [lam (1 - b^K) / (1 - b) + b^K rho((1-p)^K)] / (1 - b^(K+1)),  K = K(1, pi_T).
    """
    if model.is_dual or model.kind is not ArmKind.A:
        raise ValueError("closed_form_values_typeA needs a base type-A arm")
    if not 0.0 < pi_T <= 1.0:
        raise ValueError("pi_T = 0 gives an infinite wait from belief 1 (never-play regime)")
    return _branches(model, beta, lam, pi_T, pi)


def closed_form_values_typeB(model: ArmModel, beta: float, lam: float, pi_T: float,
                             pi: float) -> tuple[float, float]:
    if model.is_dual or model.kind is not ArmKind.B:
        raise ValueError("closed_form_values_typeB needs a base type-B arm")
    r0, r1 = model.rho0, model.rho1
    rho = expected_reward(model, pi)
    if pi_T <= 0.0:
        return rho + beta * lam / (1.0 - beta), lam / (1.0 - beta)
    v_play = rho + beta * r1 / (1.0 - beta)
    t = belief_step_passive(model, pi)
    if t < pi_T:
        v_idle = lam + beta * (r0 * t + (1.0 - t) * r1) + beta**2 * r1 / (1.0 - beta)
    else:
        v_idle = lam / (1.0 - beta)
    return v_play, v_idle


def closed_form_values_dualspeed(model: ArmModel, beta: float, lam: float, pi_T: float,
                                 pi: float) -> tuple[float, float]:
    """Dual-speed arm: values of the threshold policy in both regimes of ``pi_T``.

    For type A with ``pi_T`` below the fixed point the wait from belief 1 is
    infinite and ``V(1) = lam / (1 - beta)``; otherwise the finite wait
    ``K(1, pi_T)`` gives the geometric closed form.  Type B always restarts
    from belief 0, which is played forever when ``pi_T > 0``.
    """
    if not model.is_dual:
        raise ValueError("closed_form_values_dualspeed needs a dual-speed arm")
    if model.p + model.q > 1.0 + 1e-12:
        raise ValueError("dual-speed closed forms need p + q <= 1")
    return _branches(model, beta, lam, pi_T, pi)


# ---------------------------------------------------------------------------
# thresholds


class ThresholdKind(str, enum.Enum):
    INTERIOR = "interior"
    ALWAYS_PLAY = "always_play"
    NEVER_PLAY = "never_play"


class ThresholdStructureError(RuntimeError):
    """The play/idle comparison switched sign more than once on the grid."""


@dataclass(frozen=True)
class ThresholdResult:
    kind: ThresholdKind
    pi_T: float | None
    source: str = "oracle"
    switches: int = 0

    @property
    def effective(self) -> float:
        """Threshold as a number: 0 when never playing, just above 1 when always playing."""
        if self.kind is ThresholdKind.NEVER_PLAY:
            return 0.0
        if self.kind is ThresholdKind.ALWAYS_PLAY:
            return math.nextafter(1.0, 2.0)
        return float(self.pi_T)


def sign_switches(d: np.ndarray, atol: float) -> int:
    """Number of sign changes of ``d`` ignoring entries within ``atol`` of zero."""
    s = np.sign(np.where(np.abs(d) <= atol, 0.0, d))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def _advantage_tol(table: ValueTable) -> float:
    m = table.model
    scale = max(abs(table.lam), abs(m.rho0), abs(m.rho1)) / (1.0 - table.beta)
    return 1e-9 * max(1.0, scale)


def threshold_from_table(table: ValueTable, atol: float | None = None) -> ThresholdResult:
    atol = _advantage_tol(table) if atol is None else atol
    d = table.advantage
    switches = sign_switches(d, atol)
    if switches > 1:
        raise ThresholdStructureError(
            f"play/idle advantage changes sign {switches} times (beta={table.beta}, lambda={table.lam})"
        )
    idle = np.flatnonzero(d <= atol)
    if idle.size == 0:
        return ThresholdResult(ThresholdKind.ALWAYS_PLAY, None, switches=switches)
    first = int(idle[0])
    if first == 0:
        return ThresholdResult(ThresholdKind.NEVER_PLAY, 0.0, switches=switches)
    # one bisection pass on the interpolated advantage between the bracketing points
    lo, hi = table.grid[first - 1], table.grid[first]
    d_lo, d_hi = d[first - 1], d[first]
    mid = 0.5 * (lo + hi)
    play, idle = table.branches_at(mid)
    d_mid = play - idle
    if d_mid > atol:
        lo, d_lo = mid, d_mid
    else:
        hi, d_hi = mid, d_mid
    pi_T = hi if d_lo == d_hi else lo + (hi - lo) * d_lo / (d_lo - d_hi)
    return ThresholdResult(ThresholdKind.INTERIOR, float(pi_T), switches=switches)


def optimal_threshold(model: ArmModel, beta: float, lam: float, grid_size: int = DEFAULT_GRID,
                      tol: float = DEFAULT_TOL, method: str = "sweep") -> ThresholdResult:
    """Belief above which idling is optimal under subsidy ``lam``."""
    model.require_ordered()
    return threshold_from_table(value_iteration(model, beta, lam, grid_size, tol, method))


# ---------------------------------------------------------------------------
# average reward


@dataclass(frozen=True, eq=False)
class AverageSolution:
    gain: float
    bias: np.ndarray
    grid: np.ndarray
    lam: float
    reference: float
    trajectory: list[tuple[float, float]]  # (beta, gain_beta) per discount in the sequence


def average_reward_solve(model: ArmModel, lam: float,
                         beta_sequence: Sequence[float] = (0.99, 0.999, 0.9999),
                         grid_size: int = DEFAULT_GRID,
                         stabilization_tol: float = 1e-2) -> AverageSolution:
    """Gain and relative values by letting the discount factor tend to 1.

    The relative value is taken against the reset belief (1 for type A, 0 for
    type B), and the gain is ``(1 - beta) V_beta(reference)``.
    """
    betas = list(beta_sequence)
    if not betas or any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("beta_sequence must be non-empty and strictly increasing")
    ref = reset_belief(model)
    trajectory = []
    bias = None
    table = None
    for beta in betas:
        table = value_iteration(model, beta, lam, grid_size, method="sweep")
        v_ref = float(table.value_at(ref))
        bias = table.v - v_ref
        trajectory.append((beta, (1.0 - beta) * v_ref))
    gains = [g for _, g in trajectory]
    if len(gains) > 1 and abs(gains[-1] - gains[-2]) > stabilization_tol:
        warnings.warn(
            f"gain has not stabilised: successive values {gains[-2]:.6g} and {gains[-1]:.6g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return AverageSolution(gains[-1], bias, table.grid, lam, ref, trajectory)
