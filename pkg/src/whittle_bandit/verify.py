"""Property suites over a seeded battery of random arm models.

Each check returns a :class:`CheckResult`; ``run_suite`` groups them the way
the ``verify`` subcommand exposes them.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .core import (
    ArmModel,
    belief_step_passive,
    gamma_infinity,
    passive_iterate,
    subsidy_bounds,
    waiting_time,
    waiting_time_floor_formula,
)
from .index import index_average, index_discounted, index_oracle, indexability_audit
from .values import DEFAULT_GRID, sign_switches, value_iteration, _advantage_tol

__all__ = [
    "FAMILIES",
    "BETAS",
    "PIS",
    "CheckResult",
    "battery",
    "check_oracle",
    "check_threshold",
    "check_indexability",
    "check_lipschitz",
    "check_vanishing_discount",
    "check_identities",
    "SUITES",
    "run_suite",
]

FAMILIES = ("base-A", "base-B", "dual-A", "dual-B")
BETAS = (0.5, 0.9, 0.99)
PIS = tuple(np.round(np.arange(1, 10) / 10, 10))
BATTERY_SEED = 20170104


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    bound: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.name}: {self.value:.3g} (bound {self.bound:.3g}) {self.detail}".rstrip()


def battery(per_family: int = 50, seed: int = BATTERY_SEED) -> list[tuple[str, ArmModel]]:
    """Random models: p in [0.05, 0.45], q in [0.05, 1-p-0.05], rho0 in [0.02, 0.3], rho1 in [0.5, 0.95]."""
    out = []
    for fam_idx, fam in enumerate(FAMILIES):
        rng = np.random.default_rng([seed, fam_idx])
        variant, kind = fam.split("-")
        for _ in range(per_family):
            p = rng.uniform(0.05, 0.45)
            q = rng.uniform(0.05, 1.0 - p - 0.05)
            rho0 = rng.uniform(0.02, 0.3)
            rho1 = rng.uniform(0.5, 0.95)
            out.append((fam, ArmModel(kind, p, rho0, rho1, variant, q if variant == "dual" else None)))
    return out


def _timed(fn: Callable[..., CheckResult]) -> Callable[..., CheckResult]:
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_oracle(models, betas=BETAS, pis=PIS, tol=5e-3, grid_size=DEFAULT_GRID,
                 lambda_tol=1e-5) -> CheckResult:
    """Closed-form discounted index against subsidy bisection on the grid program."""
    worst: dict[str, float] = {}
    for fam, m in models:
        for beta in betas:
            for pi in pis:
                gap = abs(index_discounted(m, beta, pi).w - index_oracle(m, beta, pi, lambda_tol, grid_size).w)
                worst[fam] = max(worst.get(fam, 0.0), gap)
    value = max(worst.values())
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
    return CheckResult("closed form vs oracle index", value <= tol, value, tol, detail)


def _lambda_sweep(m: ArmModel, beta: float, n: int) -> np.ndarray:
    rng = subsidy_bounds(m, beta)
    return np.linspace(rng.lambda_low, rng.lambda_high, n)


@_timed
def check_threshold(models, betas=BETAS, n_lambda=20, grid_size=DEFAULT_GRID) -> CheckResult:
    """Play/idle advantage changes sign at most once over the grid."""
    violations = 0
    worst = 0
    total = 0
    for _, m in models:
        for beta in betas:
            for lam in _lambda_sweep(m, beta, n_lambda):
                table = value_iteration(m, beta, float(lam), grid_size, method="sweep")
                s = sign_switches(table.advantage, _advantage_tol(table))
                worst = max(worst, s)
                violations += s > 1
                total += 1
    return CheckResult("single threshold", violations == 0, violations, 0,
                       f"over {total} tables, max switches {worst}")


@_timed
def check_indexability(models, betas=BETAS, lambda_points=50, grid_size=DEFAULT_GRID) -> CheckResult:
    """Optimal threshold is non-increasing in the subsidy."""
    failures = 0
    worst = -math.inf
    for _, m in models:
        for beta in betas:
            rep = indexability_audit(m, beta, lambda_points, grid_size)
            failures += not rep.passed
            worst = max(worst, rep.worst_increase)
    return CheckResult("indexability audit", failures == 0, failures, 0,
                       f"largest threshold rise {worst:.2e} (allowed one grid step)")


def _max_pair_excess(v: np.ndarray, x: np.ndarray, lip: float) -> float:
    """max over pairs i<j of |v_i - v_j| - lip * (x_j - x_i), computed in O(n)."""
    u = v + lip * x
    s = v - lip * x
    down = np.max(np.maximum.accumulate(u)[:-1] - u[1:])
    up = np.max(s[1:] - np.minimum.accumulate(s)[:-1])
    return float(max(down, up))


@_timed
def check_lipschitz(models, betas=BETAS, n_lambda=5, grid_size=DEFAULT_GRID,
                    d_lambda=1e-4) -> CheckResult:
    """Lipschitz bound in the belief and derivative bound in the subsidy."""
    worst_lip = -math.inf
    worst_lo = math.inf
    worst_hi = -math.inf
    failures = 0
    for _, m in models:
        h = 1.0 / (grid_size - 1)
        lip = m.rho1 - m.rho0
        slack = 2.0 * h * lip
        for beta in betas:
            for lam in _lambda_sweep(m, beta, n_lambda):
                t1 = value_iteration(m, beta, float(lam), grid_size, method="sweep")
                t2 = value_iteration(m, beta, float(lam) + d_lambda, grid_size, method="sweep")
                excess = _max_pair_excess(t1.v, t1.grid, lip) - slack
                worst_lip = max(worst_lip, excess)
                cap = 1.0 / (1.0 - beta) + 1e-6
                for a, b in ((t1.v, t2.v), (t1.v_play, t2.v_play), (t1.v_idle, t2.v_idle)):
                    fd = (b - a) / d_lambda
                    worst_lo = min(worst_lo, float(fd.min()))
                    worst_hi = max(worst_hi, float((fd - cap).max()))
                    failures += bool(fd.min() < 0.0 or fd.max() > cap)
                failures += excess > 0.0
    return CheckResult("Lipschitz and subsidy-derivative bounds", failures == 0, failures, 0,
                       f"max Lipschitz excess {worst_lip:.2e}, min dV/dlambda {worst_lo:.2e}, "
                       f"max above 1/(1-beta) {worst_hi:.2e}")


@_timed
def check_vanishing_discount(models, pis=PIS, tol=5e-2,
                             betas=(0.9, 0.99, 0.999, 0.9999)) -> CheckResult:
    """Discounted indices approach the average-reward index as beta -> 1."""
    worst_b = 0.0
    worst_a = 0.0
    non_monotone = 0
    for fam, m in models:
        for pi in pis:
            if fam == "base-B":
                for beta in betas:
                    lhs = abs(index_discounted(m, beta, pi).w - m.rho1)
                    rhs = (1.0 - beta) * (m.rho1 - m.rho0) * pi
                    worst_b = max(worst_b, abs(lhs - rhs))
            elif fam == "base-A":
                avg = index_average(m, pi).w
                gaps = [abs(index_discounted(m, beta, pi).w - avg) for beta in betas]
                worst_a = max(worst_a, gaps[-1])
                non_monotone += any(g2 > g1 for g1, g2 in zip(gaps, gaps[1:]))
    ok = worst_b <= 1e-12 and worst_a <= tol and non_monotone == 0
    return CheckResult("vanishing discount", ok, worst_a, tol,
                       f"base-B identity error {worst_b:.1e}, base-A non-monotone gap sequences {non_monotone}")


@_timed
def check_identities(models) -> CheckResult:
    """Belief identities that need no dynamic programming."""
    from .learning import derived_belief

    worst_derived = 0.0
    tie_mismatch = 0
    worst_gamma = 0.0
    worst_avg_top = 0.0
    for fam, m in models:
        for k in (0, 1, 2, 5, 17, 60):
            for pi0 in (0.0, 0.3, 0.77, 1.0):
                direct = passive_iterate(m.with_params(variant="base", q=None) if m.is_dual else m, pi0, k)
                if not m.is_dual:
                    worst_derived = max(worst_derived, abs(derived_belief(m.kind, m.p, k, pi0) - direct))
        if fam == "base-A":
            for pi in np.linspace(0.01, 1.0, 60):
                for pt in np.linspace(0.01, 1.0, 37):
                    it = waiting_time(m, float(pi), float(pt))
                    # skip points where the log ratio sits on an integer
                    r = math.log(pt / pi) / math.log(1.0 - m.p)
                    if abs(r - round(r)) > 1e-9:
                        tie_mismatch += it != waiting_time_floor_formula(m, float(pi), float(pt))
            worst_avg_top = max(worst_avg_top, abs(index_average(m, 1.0).w - m.rho0))
        if m.is_dual:
            x = 0.9
            for _ in range(200):
                x = belief_step_passive(m, x)
            worst_gamma = max(worst_gamma, abs(x - gamma_infinity(m)))
    ok = worst_derived <= 1e-12 and tie_mismatch == 0 and worst_gamma <= 1e-8
    return CheckResult("core identities", ok, worst_derived, 1e-12,
                       f"waiting-time mismatches {tie_mismatch}, gamma error {worst_gamma:.1e}, "
                       f"|W_avg(1) - rho0| max {worst_avg_top:.3g}")


SUITES: dict[str, Callable[[list], CheckResult]] = {
    "oracle": check_oracle,
    "threshold": check_threshold,
    "indexability": check_indexability,
    "lipschitz": check_lipschitz,
    "vanishing-discount": check_vanishing_discount,
}


def run_suite(name: str, per_family: int = 50, seed: int = BATTERY_SEED) -> list[CheckResult]:
    if name != "all" and name not in SUITES:
        raise KeyError(name)
    models = battery(per_family, seed)
    names: Iterable[str] = SUITES if name == "all" else (name,)
    return [SUITES[n](models) for n in names]
