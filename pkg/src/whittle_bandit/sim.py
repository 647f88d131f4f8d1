"""Multi-arm environment, index and myopic policies, and Monte-Carlo batches.

Randomness is split per (seed, role, arm): every arm draws its own stream of
uniforms up front, so two policies run with the same seed face the same
reward and transition coin flips (common random numbers) and adding arms
never perturbs the draws of existing ones.
"""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import ArmKind, ArmModel, Criterion, ModelVariant, expected_reward, reset_belief
from .index import whittle_index

__all__ = [
    "Policy",
    "GeneratorSpec",
    "SimConfig",
    "EnvState",
    "SimulationTrace",
    "BatchResult",
    "PolicySummary",
    "IndexCache",
    "TYPE_SPLITS",
    "ROLE_ENV",
    "ROLE_POSTERIOR",
    "ROLE_MODELS",
    "ROLE_RANDOM",
    "arm_stream",
    "generate_arms",
    "select_whittle",
    "select_myopic",
    "initial_state",
    "env_step",
    "run_episode",
    "run_batch",
    "default_workers",
]

ROLE_ENV = 0
ROLE_POSTERIOR = 1
ROLE_MODELS = 2
ROLE_RANDOM = 3

# random-model generator: total arms -> number of type B arms
TYPE_SPLITS = {10: 1, 50: 2, 200: 10}


class Policy(str, enum.Enum):
    WHITTLE = "whittle"
    MYOPIC = "myopic"
    RANDOM = "random"


def arm_stream(seed: int, role: int, arm: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), role, arm])


@dataclass(frozen=True)
class GeneratorSpec:
    """Random arms with rho0 = 0.01+0.19u, rho1 = 0.6+0.3u, p = 0.01+0.29u."""

    n_arms: int
    n_type_b: int | None = None
    initial_belief: float = 0.4

    def __post_init__(self):
        if self.n_arms < 1:
            raise ValueError("n_arms must be positive")
        if self.n_type_b is None:
            object.__setattr__(self, "n_type_b", TYPE_SPLITS.get(self.n_arms, max(1, self.n_arms // 20)))
        if not 0 <= self.n_type_b <= self.n_arms:
            raise ValueError("n_type_b must lie in [0, n_arms]")
        if not 0.0 <= self.initial_belief <= 1.0:
            raise ValueError("initial_belief must lie in [0, 1]")


def generate_arms(spec: GeneratorSpec, seed: int) -> list[ArmModel]:
    """Draw a model set; the last ``n_type_b`` arms are type B."""
    rng = np.random.default_rng([int(seed), ROLE_MODELS])
    n = spec.n_arms
    rho0 = 0.01 + 0.19 * rng.random(n)
    rho1 = 0.6 + 0.3 * rng.random(n)
    p = 0.01 + 0.29 * rng.random(n)
    kinds = [ArmKind.A] * (n - spec.n_type_b) + [ArmKind.B] * spec.n_type_b
    return [ArmModel(k, float(pp), float(r0), float(r1)) for k, pp, r0, r1 in zip(kinds, p, rho0, rho1)]


@dataclass(frozen=True)
class SimConfig:
    arms: tuple[ArmModel, ...]
    initial_beliefs: tuple[float, ...]
    criterion: Criterion = field(default_factory=lambda: Criterion.discounted(0.99))
    policy: Policy = Policy.WHITTLE
    horizon: int = 800
    seeds: tuple[int, ...] = (0,)
    generator: GeneratorSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(self.arms))
        object.__setattr__(self, "initial_beliefs", tuple(float(b) for b in self.initial_beliefs))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "policy", Policy(self.policy))
        if self.generator is None:
            if not self.arms:
                raise ValueError("at least one arm is required")
            if len(self.arms) != len(self.initial_beliefs):
                raise ValueError("arms and initial_beliefs must have equal length")
        if any(not 0.0 <= b <= 1.0 for b in self.initial_beliefs):
            raise ValueError("initial beliefs must lie in [0, 1]")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")

    def arms_for(self, seed: int) -> tuple[tuple[ArmModel, ...], tuple[float, ...]]:
        """Arms and initial beliefs used by the episode with this seed."""
        if self.generator is None:
            return self.arms, self.initial_beliefs
        arms = tuple(generate_arms(self.generator, seed))
        return arms, (self.generator.initial_belief,) * len(arms)


class _Dynamics:
    """Per-arm transition parameters in array form.

    Passive chains: ``p01`` is the 0 -> 1 rate, ``p10`` the 1 -> 0 rate.
    The belief update reproduces :func:`core.belief_step_passive` bit for bit.
    """

    def __init__(self, arms: Sequence[ArmModel]):
        n = len(arms)
        self.n = n
        self.rho0 = np.array([a.rho0 for a in arms])
        self.rho1 = np.array([a.rho1 for a in arms])
        self.p = np.array([a.p for a in arms])
        self.q = np.array([a.q if a.is_dual else 0.0 for a in arms])
        self.is_a = np.array([a.kind is ArmKind.A for a in arms])
        self.dual = np.array([a.is_dual for a in arms])
        self.p01 = np.where(self.dual | self.is_a, self.p, 0.0)
        self.p10 = np.where(self.dual, self.q, np.where(self.is_a, 0.0, self.p))
        self.reset_state = np.where(self.is_a, 0, 1).astype(np.int8)
        self.reset_belief = np.array([reset_belief(a) for a in arms])

    def passive_beliefs(self, pi: np.ndarray) -> np.ndarray:
        base_a = (1.0 - self.p) * pi
        base_b = pi + self.p * (1.0 - pi)
        dual = pi * (1.0 - self.p) + (1.0 - pi) * self.q
        out = np.where(self.dual, dual, np.where(self.is_a, base_a, base_b))
        return np.clip(out, 0.0, 1.0)


@dataclass
class EnvState:
    hidden: np.ndarray  # true states, invisible to policies
    beliefs: np.ndarray
    steps_since_play: np.ndarray
    t: int = 0


def initial_state(arms: Sequence[ArmModel], initial_beliefs: Sequence[float],
                  u0: np.ndarray) -> EnvState:
    """Hidden state of arm n is 0 with probability equal to its initial belief."""
    beliefs = np.asarray(initial_beliefs, dtype=float)
    hidden = np.where(np.asarray(u0) < beliefs, 0, 1).astype(np.int8)
    return EnvState(hidden, beliefs.copy(), np.zeros(len(arms), dtype=np.int64), 0)


def env_step(state: EnvState, dyn: _Dynamics | Sequence[ArmModel], action: int,
             rng: np.random.Generator | np.ndarray) -> tuple[int, EnvState]:
    """Play ``action`` for one step.

    ``rng`` is either a generator or an ``(n_arms, 2)`` array of uniforms:
    column 0 decides the reward of the played arm, column 1 the passive
    transitions of the others.
    """
    if not isinstance(dyn, _Dynamics):
        dyn = _Dynamics(dyn)
    if not 0 <= action < dyn.n:
        raise IndexError(f"arm {action} out of range")
    u = rng.random((dyn.n, 2)) if isinstance(rng, np.random.Generator) else rng
    h = state.hidden
    rho = dyn.rho0[action] if h[action] == 0 else dyn.rho1[action]
    reward = int(u[action, 0] < rho)

    flip = np.where(h == 0, u[:, 1] < dyn.p01, u[:, 1] < dyn.p10)
    hidden = np.where(flip, 1 - h, h).astype(np.int8)
    hidden[action] = dyn.reset_state[action]
    beliefs = dyn.passive_beliefs(state.beliefs)
    beliefs[action] = dyn.reset_belief[action]
    steps = state.steps_since_play + 1
    steps[action] = 0
    return reward, EnvState(hidden, beliefs, steps, state.t + 1)


class IndexCache:
    """Memoised Whittle indices per arm, keyed by the exact belief value.

    Beliefs are produced by a deterministic recursion from a handful of
    starting values, so the same floats recur and the hit rate is high.
    """

    def __init__(self, arms: Sequence[ArmModel], criterion: Criterion):
        self.arms = list(arms)
        self.criterion = criterion
        self._memo: list[dict[float, float]] = [dict() for _ in self.arms]

    def index(self, n: int, pi: float) -> float:
        memo = self._memo[n]
        w = memo.get(pi)
        if w is None:
            w = whittle_index(self.arms[n], self.criterion, pi).w
            memo[pi] = w
        return w

    def all(self, beliefs: Sequence[float]) -> np.ndarray:
        return np.array([self.index(n, float(b)) for n, b in enumerate(beliefs)])


def _argmax_lowest(values: np.ndarray) -> int:
    # np.argmax returns the first maximum, i.e. the lowest arm identifier
    return int(np.argmax(values))


def select_whittle(beliefs: Sequence[float], arms: Sequence[ArmModel], criterion: Criterion,
                   cache: IndexCache | None = None) -> int:
    if cache is None:
        cache = IndexCache(arms, criterion)
    return _argmax_lowest(cache.all(beliefs))


def select_myopic(beliefs: Sequence[float], arms: Sequence[ArmModel]) -> int:
    return _argmax_lowest(np.array([expected_reward(a, float(b)) for a, b in zip(arms, beliefs)]))


@dataclass(frozen=True, eq=False)
class SimulationTrace:
    policy: Policy
    seed: int
    actions: np.ndarray
    rewards: np.ndarray
    beliefs: np.ndarray | None  # post-step beliefs, shape (horizon, n_arms)
    n_arms: int

    @property
    def horizon(self) -> int:
        return int(self.actions.shape[0])

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.rewards, dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.rewards.sum())

    @property
    def play_counts(self) -> np.ndarray:
        return np.bincount(self.actions, minlength=self.n_arms)

    def same_as(self, other: "SimulationTrace") -> bool:
        return (np.array_equal(self.actions, other.actions) and np.array_equal(self.rewards, other.rewards)
                and (self.beliefs is None) == (other.beliefs is None)
                and (self.beliefs is None or np.array_equal(self.beliefs, other.beliefs)))


class EnvironmentRun:
    """Environment plus the pre-drawn uniforms for one seed."""

    def __init__(self, arms: Sequence[ArmModel], initial_beliefs: Sequence[float], horizon: int, seed: int):
        self.arms = list(arms)
        self.dyn = _Dynamics(self.arms)
        u0 = np.empty(len(self.arms))
        self.uniforms = np.empty((horizon, len(self.arms), 2))
        for n in range(len(self.arms)):
            g = arm_stream(seed, ROLE_ENV, n)
            u0[n] = g.random()
            self.uniforms[:, n, :] = g.random((horizon, 2))
        self.state = initial_state(self.arms, initial_beliefs, u0)

    def step(self, action: int) -> int:
        reward, self.state = env_step(self.state, self.dyn, action, self.uniforms[self.state.t])
        return reward


def _selector(policy: Policy, arms, criterion: Criterion, seed: int) -> Callable[[np.ndarray], int]:
    if policy is Policy.WHITTLE:
        cache = IndexCache(arms, criterion)
        return lambda b: select_whittle(b, arms, criterion, cache)
    if policy is Policy.MYOPIC:
        rho0 = np.array([a.rho0 for a in arms])
        rho1 = np.array([a.rho1 for a in arms])
        return lambda b: _argmax_lowest(b * rho0 + (1.0 - b) * rho1)
    rng = np.random.default_rng([int(seed), ROLE_RANDOM])
    return lambda b: int(rng.integers(len(arms)))


def run_episode(config: SimConfig, seed: int, policy: Policy | str | None = None,
                record_beliefs: bool = True) -> SimulationTrace:
    """One seeded run; deterministic given the configuration, seed and policy."""
    policy = config.policy if policy is None else Policy(policy)
    arms, init = config.arms_for(seed)
    env = EnvironmentRun(arms, init, config.horizon, seed)
    select = _selector(policy, arms, config.criterion, seed)
    actions = np.empty(config.horizon, dtype=np.int64)
    rewards = np.empty(config.horizon, dtype=np.int8)
    beliefs = np.empty((config.horizon, len(arms))) if record_beliefs else None
    for t in range(config.horizon):
        a = select(env.state.beliefs)
        actions[t] = a
        rewards[t] = env.step(a)
        if beliefs is not None:
            beliefs[t] = env.state.beliefs
    return SimulationTrace(policy, int(seed), actions, rewards, beliefs, len(arms))


@dataclass(frozen=True, eq=False)
class PolicySummary:
    policy: Policy
    mean_curve: np.ndarray
    stderr_curve: np.ndarray
    finals: np.ndarray  # final cumulative reward per seed, in seed order
    play_counts: np.ndarray  # shape (n_seeds, n_arms)

    @property
    def final_mean(self) -> float:
        return float(self.mean_curve[-1]) if self.mean_curve.size else 0.0

    @property
    def final_stderr(self) -> float:
        return float(self.stderr_curve[-1]) if self.stderr_curve.size else 0.0

    @property
    def mean_play_counts(self) -> np.ndarray:
        return self.play_counts.mean(axis=0)


@dataclass(frozen=True, eq=False)
class BatchResult:
    seeds: tuple[int, ...]
    horizon: int
    summaries: dict[Policy, PolicySummary]
    traces: dict[Policy, list[SimulationTrace]] = field(repr=False)

    def __getitem__(self, policy) -> PolicySummary:
        return self.summaries[Policy(policy)]


def default_workers() -> int:
    """Worker processes for batches, from ``WHITTLE_BANDIT_WORKERS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("WHITTLE_BANDIT_WORKERS", "1")))
    except ValueError:
        return 1


def _episode_job(args):
    config, seed, policy = args
    return run_episode(config, seed, policy, record_beliefs=False)


def _summarise(policy: Policy, traces: list[SimulationTrace], horizon: int) -> PolicySummary:
    if not traces:
        raise ValueError("at least one seed is required")
    cum = np.array([tr.cumulative for tr in traces], dtype=float).reshape(len(traces), horizon)
    mean = cum.mean(axis=0)
    if len(traces) > 1:
        se = cum.std(axis=0, ddof=1) / math.sqrt(len(traces))
    else:
        se = np.zeros(horizon)
    finals = cum[:, -1] if horizon else np.zeros(len(traces))
    counts = np.array([tr.play_counts for tr in traces])
    return PolicySummary(policy, mean, se, finals, counts)


def run_batch(config: SimConfig, policies: Sequence[Policy | str] | None = None,
              workers: int | None = None) -> BatchResult:
    """Run every seed under each policy and aggregate mean and standard-error curves."""
    pols = [config.policy] if policies is None else [Policy(p) for p in policies]
    jobs = [(config, s, p) for p in pols for s in config.seeds]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            traces = list(ex.map(_episode_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        traces = [_episode_job(j) for j in jobs]
    by_policy: dict[Policy, list[SimulationTrace]] = {p: [] for p in pols}
    for (_, _, p), tr in zip(jobs, traces):
        by_policy[p].append(tr)
    summaries = {p: _summarise(p, by_policy[p], config.horizon) for p in pols}
    return BatchResult(config.seeds, config.horizon, summaries, by_policy)


# Parameter table for the five-arm experiments; arms 1-4 are type A, arm 5 type B.
FIVE_ARM_PARAMETERS = {
    "a": dict(rho0=[0.07, 0.04, 0.05, 0.12, 0.99], rho1=[0.71, 0.85, 0.77, 0.76, 0.88],
              p=[0.09, 0.23, 0.23, 0.12, 0.27]),
    "b": dict(rho0=[0.02, 0.02, 0.11, 0.16, 0.19], rho1=[0.64, 0.77, 0.74, 0.60, 0.76],
              p=[0.06, 0.24, 0.10, 0.16, 0.15]),
    "c": dict(rho0=[0.07, 0.09, 0.01, 0.19, 0.04], rho1=[0.63, 0.71, 0.66, 0.75, 0.77],
              p=[0.29, 0.28, 0.03, 0.22, 0.18]),
}


def five_arm_models(row: str) -> list[ArmModel]:
    prm = FIVE_ARM_PARAMETERS[row]
    kinds = [ArmKind.A] * 4 + [ArmKind.B]
    return [ArmModel(k, p, r0, r1, ModelVariant.BASE)
            for k, p, r0, r1 in zip(kinds, prm["p"], prm["rho0"], prm["rho1"])]


def five_arm_config(row: str, seeds: Sequence[int] = range(100), horizon: int = 800,
                beta: float = 0.99, policy: Policy = Policy.WHITTLE) -> SimConfig:
    arms = five_arm_models(row)
    return SimConfig(tuple(arms), (0.4,) * len(arms), Criterion.discounted(beta), policy, horizon, tuple(seeds))


__all__ += ["FIVE_ARM_PARAMETERS", "five_arm_models", "five_arm_config", "EnvironmentRun"]
