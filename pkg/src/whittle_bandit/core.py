"""Arm models and belief dynamics.

An arm has a hidden state in {0, 1}; the belief ``pi`` is the probability that
the state is 0 (the low-reward state).  Playing resets the state
deterministically, so the belief after a play never depends on the observed
reward.
"""
from __future__ import annotations

import bisect
import enum
import functools
import math
from dataclasses import dataclass
from typing import Callable

__all__ = [
    "ArmKind",
    "ModelVariant",
    "ArmModel",
    "Criterion",
    "SubsidyRange",
    "INFINITE",
    "clamp_belief",
    "expected_reward",
    "belief_step_passive",
    "belief_step_active",
    "passive_iterate",
    "waiting_time",
    "waiting_time_floor_formula",
    "waiting_time_from",
    "passive_iterate_from",
    "gamma_infinity",
    "reset_belief",
    "subsidy_bounds",
]

INFINITE = math.inf


class ArmKind(str, enum.Enum):
    """Type A ("normal") arms drop to state 0 when played, type B ("viral") rise to state 1."""

    A = "A"
    B = "B"


class ModelVariant(str, enum.Enum):
    BASE = "base"
    DUAL_SPEED = "dual"


@dataclass(frozen=True)
class ArmModel:
    """Parameters of one arm.

    ``p`` is the passive flip rate out of the reset state (0 -> 1 for type A,
    1 -> 0 for type B).  The dual-speed variant adds ``q``, the passive
    1 -> 0 rate, and uses the same passive chain for both kinds.

    Construction only checks that the parameters are probabilities, with
    ``p`` strictly inside (0, 1).
    The analytic routines additionally need ``rho0 < rho1``; call
    :meth:`require_ordered` before relying on threshold structure.
    """

    kind: ArmKind
    p: float
    rho0: float
    rho1: float
    variant: ModelVariant = ModelVariant.BASE
    q: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ArmKind(self.kind))
        object.__setattr__(self, "variant", ModelVariant(self.variant))
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p!r}")
        for name in ("rho0", "rho1"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
        if self.variant is ModelVariant.DUAL_SPEED:
            if self.q is None or not 0.0 < self.q < 1.0:
                raise ValueError(f"q must lie in (0, 1) for the dual-speed variant, got {self.q!r}")
            if self.p + self.q > 1.0 + 1e-12:
                raise ValueError(f"dual-speed variant needs p + q <= 1, got {self.p + self.q!r}")
        elif self.q is not None:
            raise ValueError("q is only defined for the dual-speed variant")

    @property
    def is_ordered(self) -> bool:
        return self.rho0 < self.rho1

    def require_ordered(self) -> "ArmModel":
        if not self.is_ordered:
            raise ValueError(
                f"threshold analysis needs rho0 < rho1, got rho0={self.rho0}, rho1={self.rho1}"
            )
        return self

    @property
    def is_dual(self) -> bool:
        return self.variant is ModelVariant.DUAL_SPEED

    def with_params(self, **changes) -> "ArmModel":
        fields = dict(kind=self.kind, p=self.p, rho0=self.rho0, rho1=self.rho1,
                      variant=self.variant, q=self.q)
        fields.update(changes)
        return ArmModel(**fields)


@dataclass(frozen=True)
class Criterion:
    """Discounted reward with factor ``beta`` or, when ``beta`` is None, long-run average."""

    beta: float | None = None

    def __post_init__(self):
        if self.beta is not None and not 0.0 < self.beta < 1.0:
            raise ValueError(f"discount factor must lie in (0, 1), got {self.beta!r}")

    @classmethod
    def discounted(cls, beta: float) -> "Criterion":
        return cls(beta)

    @classmethod
    def average(cls) -> "Criterion":
        return cls(None)

    @property
    def is_average(self) -> bool:
        return self.beta is None

    def __str__(self):
        return "average" if self.is_average else f"discounted(beta={self.beta:g})"


@dataclass(frozen=True)
class SubsidyRange:
    lambda_low: float
    lambda_high: float

    def __post_init__(self):
        if self.lambda_low > self.lambda_high:
            raise ValueError("lambda_low must not exceed lambda_high")


def clamp_belief(pi: float) -> float:
    return min(1.0, max(0.0, pi))


def expected_reward(model: ArmModel, pi: float) -> float:
    return pi * model.rho0 + (1.0 - pi) * model.rho1


def belief_step_passive(model: ArmModel, pi: float) -> float:
    if model.is_dual:
        nxt = pi * (1.0 - model.p) + (1.0 - pi) * model.q
    elif model.kind is ArmKind.A:
        nxt = (1.0 - model.p) * pi
    else:
        nxt = pi + model.p * (1.0 - pi)
    return clamp_belief(nxt)


def reset_belief(model: ArmModel) -> float:
    """Belief right after the arm is played."""
    return 1.0 if model.kind is ArmKind.A else 0.0


def belief_step_active(model: ArmModel, pi: float) -> float:
    return reset_belief(model)


def passive_iterate(model: ArmModel, pi: float, k: int) -> float:
    for _ in range(k):
        pi = belief_step_passive(model, pi)
    return pi


def gamma_infinity(model: ArmModel) -> float:
    """Fixed point q/(p+q) of the dual-speed passive map."""
    if not model.is_dual:
        raise ValueError("gamma_infinity is only defined for the dual-speed variant")
    return model.q / (model.p + model.q)


def _never_crosses(model: ArmModel, pi: float, pi_T: float) -> bool:
    if pi < pi_T:
        return False
    if model.is_dual:
        # iterates approach the fixed point monotonically and never pass it
        return pi_T <= gamma_infinity(model)
    if model.kind is ArmKind.A:
        return pi_T <= 0.0
    return True  # type B passive beliefs only increase


def waiting_time(model: ArmModel, pi: float, pi_T: float, max_steps: int = 10_000_000) -> float:
    """Smallest k >= 0 with the k-fold passive image of ``pi`` strictly below ``pi_T``.

    Returns ``INFINITE`` when no finite k exists.  Ties (image equal to
    ``pi_T``) do not count as crossed.
    """
    if not 0.0 <= pi_T <= 1.0:
        raise ValueError(f"pi_T must lie in [0, 1], got {pi_T!r}")
    if _never_crosses(model, pi, pi_T):
        return INFINITE
    k = 0
    x = pi
    step: Callable[[ArmModel, float], float] = belief_step_passive
    while not x < pi_T:
        x = step(model, x)
        k += 1
        if k > max_steps:
            return INFINITE
    return k


class _Orbit:
    """Passive iterates of one model started at a fixed belief, extended on demand."""

    __slots__ = ("model", "neg", "done")

    def __init__(self, model: ArmModel, start: float):
        self.model = model
        self.neg = [-start]  # negated so the list is non-decreasing for bisect
        self.done = False

    def extend_below(self, pi_T: float, max_steps: int) -> None:
        neg, model = self.neg, self.model
        x = -neg[-1]
        while not self.done and x >= pi_T:
            nxt = belief_step_passive(model, x)
            if nxt == x or len(neg) > max_steps:
                self.done = True
                break
            neg.append(-nxt)
            x = nxt

    def first_below(self, pi_T: float, max_steps: int) -> float:
        self.extend_below(pi_T, max_steps)
        k = bisect.bisect_right(self.neg, -pi_T)
        return k if k < len(self.neg) else INFINITE

    def at(self, k: int) -> float:
        while len(self.neg) <= k and not self.done:
            nxt = belief_step_passive(self.model, -self.neg[-1])
            if nxt == -self.neg[-1]:
                self.done = True
                break
            self.neg.append(-nxt)
        return -self.neg[min(k, len(self.neg) - 1)]


@functools.lru_cache(maxsize=4096)
def _orbit(model: ArmModel, start: float) -> _Orbit:
    return _Orbit(model, start)


def waiting_time_from(model: ArmModel, start: float, pi_T: float, max_steps: int = 10_000_000) -> float:
    """:func:`waiting_time` for a recurring start belief, answered from a cached orbit.

    Only valid for starts the passive map moves monotonically downward
    (belief 1 for type A and for the dual-speed chain above its fixed point).
    """
    if not 0.0 <= pi_T <= 1.0:
        raise ValueError(f"pi_T must lie in [0, 1], got {pi_T!r}")
    if _never_crosses(model, start, pi_T):
        return INFINITE
    return _orbit(model, start).first_below(pi_T, max_steps)


def passive_iterate_from(model: ArmModel, start: float, k: int) -> float:
    """Cached equivalent of :func:`passive_iterate` for a recurring start belief."""
    return _orbit(model, start).at(k)


def waiting_time_floor_formula(model: ArmModel, pi: float, pi_T: float) -> float:
    """Logarithmic closed form of :func:`waiting_time` for the base type-A chain.

    Kept as a cross-check only; it disagrees with the iterative definition at
    exact ties because of floating-point rounding in the logarithms.
    """
    if model.is_dual or model.kind is not ArmKind.A:
        raise ValueError("floor formula only applies to the base type-A chain")
    if pi < pi_T:
        return 0
    if pi_T <= 0.0:
        return INFINITE
    return math.floor(math.log(pi_T / pi) / math.log(1.0 - model.p)) + 1


def subsidy_bounds(model: ArmModel, beta: float | None) -> SubsidyRange:
    """Subsidy range outside which the optimal action is the same at every belief.

    ``beta=None`` selects the average-reward criterion.  The lower bound is
    the index of the belief 1 (the smallest index an arm can have).
    """
    r0, r1, p = model.rho0, model.rho1, model.p
    high = r1
    if model.kind is ArmKind.A:
        low = r0 + (1.0 if beta is None else beta) * p * (r0 - r1)
    elif not model.is_dual:
        low = r1 if beta is None else r1 + (1.0 - beta) * (r0 - r1)
    else:
        # dual-speed type B: belief 1 idles once to 1-p before the play pays off
        g1 = 1.0 - p
        low = r1 + (r0 - r1) * (1.0 - g1) if beta is None else r1 + (r0 - r1) * (1.0 - beta * g1)
    return SubsidyRange(min(low, high), high)
