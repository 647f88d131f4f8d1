"""Single-arm subsidy problem on a uniform belief grid.

Both solvers work on the same discretisation: the passive image of every
grid point is linearly interpolated between its two neighbouring grid points,
and the play branch jumps to the reset belief (1 for type A, 0 for type B).

* :func:`bellman_iterate` applies the Bellman operator until the sup-norm
  change drops below ``tol``.
* :func:`bellman_sweep` computes the fixed point of the same operator
  directly.  For a fixed value ``c`` at the reset belief, every grid point only
  depends on points closer to the fixed point of the passive map, so one
  ordered sweep gives the exact solution; ``c`` is then found by Newton's
  method on the convex, piecewise-linear map ``c -> V_c(reset) - c``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import ArmKind, ArmModel, gamma_infinity

__all__ = ["BeliefGrid", "bellman_iterate", "bellman_sweep", "iteration_cap"]


@dataclass(frozen=True, eq=False)
class BeliefGrid:
    points: np.ndarray
    left: np.ndarray  # index of the grid point below each passive image
    weight: np.ndarray  # interpolation weight on ``left + 1``
    reward: np.ndarray  # expected reward of playing at each grid point
    reset: int
    fixed_cell: int  # left index of the cell holding the passive fixed point

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def spacing(self) -> float:
        return 1.0 / (self.size - 1)

    def interp(self, values: np.ndarray, x):
        return np.interp(x, self.points, values)


def passive_image(model: ArmModel, pi):
    if model.is_dual:
        out = pi * (1.0 - model.p) + (1.0 - pi) * model.q
    elif model.kind is ArmKind.A:
        out = (1.0 - model.p) * pi
    else:
        out = pi + model.p * (1.0 - pi)
    return np.clip(out, 0.0, 1.0)


def passive_fixed_point(model: ArmModel) -> float:
    if model.is_dual:
        return gamma_infinity(model)
    return 0.0 if model.kind is ArmKind.A else 1.0


def make_grid(model: ArmModel, grid_size: int) -> BeliefGrid:
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    n = grid_size - 1
    points = np.linspace(0.0, 1.0, grid_size)
    pos = passive_image(model, points) * n
    left = np.minimum(np.floor(pos).astype(np.int64), n - 1)
    weight = pos - left

    fc = min(int(math.floor(passive_fixed_point(model) * n)), n - 1)
    idx = np.arange(grid_size)
    # Rounding can push an image a hair across the fixed-point cell; pin it
    # so the ordered sweep never reads an unsolved point.
    upper = idx > fc + 1
    lower = idx < fc
    cell = ~(upper | lower)
    fix = upper & (left < fc)
    left[fix], weight[fix] = fc, 0.0
    fix = lower & (left > fc)
    left[fix], weight[fix] = fc, 1.0
    left[cell] = fc
    weight = np.clip(np.where(cell, pos - fc, weight), 0.0, 1.0)

    reward = points * model.rho0 + (1.0 - points) * model.rho1
    reset = n if model.kind is ArmKind.A else 0
    return BeliefGrid(points, left, weight, reward, reset, fc)


def iteration_cap(beta: float, tol: float, bound: float) -> int:
    """Iterations after which a beta-contraction started within ``bound`` of the fixed point has converged."""
    bound = max(bound, tol)
    return int(math.ceil(math.log(tol * (1.0 - beta) / bound) / math.log(beta))) + 2


def bellman_iterate(grid: BeliefGrid, beta: float, lam: float, tol: float,
                    v0: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """Plain value iteration; returns the converged values and the iteration count."""
    n = grid.size
    right = np.minimum(grid.left + 1, n - 1)
    v = np.zeros(n) if v0 is None else np.array(v0, dtype=float)
    scale = max(abs(lam), float(np.max(np.abs(grid.reward))))
    bound = scale / (1.0 - beta) + float(np.max(np.abs(v)))
    cap = iteration_cap(beta, tol, bound)
    for it in range(1, cap + 1):
        idle = lam + beta * (v[grid.left] * (1.0 - grid.weight) + v[right] * grid.weight)
        play = grid.reward + beta * v[grid.reset]
        nxt = np.maximum(play, idle)
        delta = float(np.max(np.abs(nxt - v)))
        v = nxt
        if delta < tol:
            return v, it
    raise RuntimeError(
        f"value iteration did not converge in {cap} iterations; the operator is a "
        f"{beta}-contraction so this indicates a defect"
    )


@njit(cache=True, inline="always")
def _sweep_node(i, left, weight, reward, beta, lam, c, v, dv, pol, force):
    # pol[i]: 1 play, 0 idle; when ``force`` is set the stored choice is reused
    play = reward[i] + beta * c
    j = left[i]
    w = weight[i]
    self_coef = 0.0
    b = lam
    db = 0.0
    if 1.0 - w != 0.0:
        if j == i:
            self_coef += beta * (1.0 - w)
        else:
            b += beta * (1.0 - w) * v[j]
            db += beta * (1.0 - w) * dv[j]
    if w != 0.0:
        if j + 1 == i:
            self_coef += beta * w
        else:
            b += beta * w * v[j + 1]
            db += beta * w * dv[j + 1]
    idle = b if self_coef == 0.0 else b / (1.0 - self_coef)
    if not force:
        pol[i] = 1 if play >= idle else 0
    if pol[i] == 1:
        v[i] = play
        dv[i] = beta
    else:
        v[i] = idle
        dv[i] = db if self_coef == 0.0 else db / (1.0 - self_coef)


@njit(cache=True)
def _solve_cell(a, left, weight, reward, beta, lam, c, v, dv, pol, force):
    # The two points of the fixed-point cell only reference each other.
    # Evaluate all four stationary policies; the optimal one maximises both.
    best = -1e300
    for choice in range(4):
        if force and choice != pol[a] + 2 * pol[a + 1]:
            continue
        m = np.eye(2)
        r = np.zeros(2)
        d = np.zeros(2)
        for s in range(2):
            i = a + s
            if (choice >> s) & 1:
                r[s] = reward[i] + beta * c
                d[s] = beta
            else:
                r[s] = lam
                j = left[i]
                w = weight[i]
                m[s, j - a] -= beta * (1.0 - w)
                if w != 0.0:
                    m[s, j + 1 - a] -= beta * w
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        x = (r[0] * m[1, 1] - m[0, 1] * r[1]) / det
        y = (m[0, 0] * r[1] - m[1, 0] * r[0]) / det
        if x + y > best:
            best = x + y
            v[a] = x
            v[a + 1] = y
            dv[a] = (d[0] * m[1, 1] - m[0, 1] * d[1]) / det
            dv[a + 1] = (m[0, 0] * d[1] - m[1, 0] * d[0]) / det
            pol[a] = choice & 1
            pol[a + 1] = (choice >> 1) & 1


@njit(cache=True)
def _sweep_pass(left, weight, reward, fixed_cell, beta, lam, c, v, dv, pol, force):
    n = reward.shape[0]
    _solve_cell(fixed_cell, left, weight, reward, beta, lam, c, v, dv, pol, force)
    for i in range(fixed_cell + 2, n):
        _sweep_node(i, left, weight, reward, beta, lam, c, v, dv, pol, force)
    for i in range(fixed_cell - 1, -1, -1):
        _sweep_node(i, left, weight, reward, beta, lam, c, v, dv, pol, force)


@njit(cache=True)
def _sweep_solve(left, weight, reward, reset, fixed_cell, beta, lam, c0, v, max_newton):
    n = reward.shape[0]
    dv = np.zeros(n)
    pol = np.zeros(n, dtype=np.int64)
    c = c0
    for it in range(max_newton):
        _sweep_pass(left, weight, reward, fixed_cell, beta, lam, c, v, dv, pol, False)
        h = v[reset] - c
        step = 0.0
        if abs(h) > 1e-14 * (1.0 + abs(c)):
            step = h / (1.0 - dv[reset])
        if step == 0.0:
            # Polish: with the policy frozen, V(reset) = a + b c is affine in c,
            # so the reset value is a / (1 - b).  Every operation in a pass is
            # monotone under rounding, which makes the result monotone in lam.
            _sweep_pass(left, weight, reward, fixed_cell, beta, lam, 0.0, v, dv, pol, True)
            c = v[reset] / (1.0 - dv[reset])
            _sweep_pass(left, weight, reward, fixed_cell, beta, lam, c, v, dv, pol, True)
            return c, it + 1
        c = c + step
    return c, -1


def bellman_sweep(grid: BeliefGrid, beta: float, lam: float) -> np.ndarray:
    """Exact fixed point of the grid Bellman operator used by :func:`bellman_iterate`."""
    v = np.empty(grid.size)
    # Lower bound on the reset value (always-idle and always-play are feasible),
    # so Newton's iterates on the convex decreasing residual climb monotonically.
    c0 = max(lam, float(np.min(grid.reward))) / (1.0 - beta)
    c, its = _sweep_solve(grid.left, grid.weight, grid.reward, grid.reset, grid.fixed_cell,
                          beta, lam, c0, v, 200)
    if its < 0:
        raise RuntimeError("Newton iteration on the reset value did not terminate")
    return v
