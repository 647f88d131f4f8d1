"""Thompson sampling over a finite parameter grid per arm.

Each arm keeps a posterior over candidate ``(p, rho0, rho1)`` triples of its
known kind.  At every step the learner evaluates the base policy with the
currently sampled candidates, observes the reward of the played arm, updates
that arm's posterior and resamples its candidate.

Steps are counted from the last reset: ``k = 0`` means the arm was played on
the previous step, so its hidden state is exactly the reset state.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import ArmKind, ArmModel, Criterion, expected_reward, passive_iterate_from, reset_belief
from .sim import (
    ROLE_POSTERIOR,
    EnvironmentRun,
    IndexCache,
    Policy,
    SimConfig,
    SimulationTrace,
    arm_stream,
    run_episode,
)

__all__ = [
    "ZeroEvidence",
    "Candidate",
    "product_grid",
    "LearningConfig",
    "PosteriorState",
    "RegretReport",
    "LearningRun",
    "LearningSummary",
    "likelihood",
    "derived_belief",
    "posterior_update",
    "run_learning",
    "run_learning_batch",
    "learning_fixture",
]


class ZeroEvidence(ArithmeticError):
    """Every candidate assigned zero probability to the observed reward."""


@dataclass(frozen=True)
class Candidate:
    p: float
    rho0: float
    rho1: float

    def model(self, kind: ArmKind) -> ArmModel:
        return ArmModel(kind, self.p, self.rho0, self.rho1)

    def matches(self, model: ArmModel, tol: float = 1e-12) -> bool:
        return (abs(self.p - model.p) <= tol and abs(self.rho0 - model.rho0) <= tol
                and abs(self.rho1 - model.rho1) <= tol)


def product_grid(ps: Sequence[float], rho0s: Sequence[float], rho1s: Sequence[float]) -> list[Candidate]:
    """Cartesian grid; pass a single ``rho1`` to declare it known."""
    return [Candidate(p, r0, r1) for p, r0, r1 in itertools.product(ps, rho0s, rho1s)]


def derived_belief(kind: ArmKind | str, p_hat: float, k: int, pi0: float | None = None) -> float:
    """Belief after ``k`` passive steps from ``pi0`` (the reset belief if omitted)."""
    kind = ArmKind(kind)
    if k < 0:
        raise ValueError("k must be nonnegative")
    decay = (1.0 - p_hat) ** k
    if kind is ArmKind.A:
        ref = 1.0 if pi0 is None else pi0
        return decay * ref
    ref = 0.0 if pi0 is None else pi0
    return 1.0 - decay * (1.0 - ref)


def likelihood(kind: ArmKind | str, theta: Candidate, k: int, r: int, pi_ref: float | None = None) -> float:
    """Probability of reward ``r`` when the arm is played ``k`` passive steps after ``pi_ref``."""
    pi = derived_belief(kind, theta.p, k, pi_ref)
    f = pi * theta.rho0 + (1.0 - pi) * theta.rho1
    return f if r == 1 else 1.0 - f


@dataclass
class PosteriorState:
    log_weights: list[np.ndarray]
    sampled: np.ndarray  # candidate index per arm
    steps_since_play: np.ndarray
    reference: np.ndarray  # belief the passive count starts from

    @property
    def weights(self) -> list[np.ndarray]:
        return [np.exp(lw) for lw in self.log_weights]

    @classmethod
    def from_prior(cls, priors: Sequence[np.ndarray], initial_beliefs: Sequence[float]) -> "PosteriorState":
        logs = []
        for w in priors:
            w = np.asarray(w, dtype=float)
            with np.errstate(divide="ignore"):
                lw = np.log(w / w.sum())
            logs.append(lw)
        n = len(priors)
        return cls(logs, np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64),
                   np.asarray(initial_beliefs, dtype=float).copy())


def _log_normalise(lw: np.ndarray) -> np.ndarray:
    top = np.max(lw)
    if not np.isfinite(top):
        raise ZeroEvidence("posterior has no mass left")
    return lw - (top + math.log(np.sum(np.exp(lw - top))))


def posterior_update(post: PosteriorState, arm: int, kind: ArmKind, grid: Sequence[Candidate],
                     k: int, r: int, pi_ref: float | None = None) -> PosteriorState:
    """Bayes update of one arm in place; other arms are left untouched."""
    lik = np.array([likelihood(kind, c, k, r, pi_ref) for c in grid])
    with np.errstate(divide="ignore"):
        post.log_weights[arm] = _log_normalise(post.log_weights[arm] + np.log(lik))
    return post


def _sample(rng: np.random.Generator, lw: np.ndarray) -> int:
    cdf = np.cumsum(np.exp(lw))
    return int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), cdf.size - 1))


@dataclass(frozen=True)
class LearningConfig:
    true_arms: tuple[ArmModel, ...]
    grids: tuple[tuple[Candidate, ...], ...]
    priors: tuple[np.ndarray, ...] | None = None
    initial_beliefs: tuple[float, ...] | None = None
    criterion: Criterion = field(default_factory=lambda: Criterion.discounted(0.99))
    base_policy: Policy = Policy.WHITTLE
    horizon: int = 5000
    seeds: tuple[int, ...] = tuple(range(20))
    resample_all: bool = False

    def __post_init__(self):
        object.__setattr__(self, "true_arms", tuple(self.true_arms))
        object.__setattr__(self, "grids", tuple(tuple(g) for g in self.grids))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "base_policy", Policy(self.base_policy))
        n = len(self.true_arms)
        if n == 0 or len(self.grids) != n:
            raise ValueError("one nonempty grid per arm is required")
        if self.base_policy is Policy.RANDOM:
            raise ValueError("base policy must be whittle or myopic")
        if self.initial_beliefs is None:
            object.__setattr__(self, "initial_beliefs", (1.0,) * n)
        object.__setattr__(self, "initial_beliefs", tuple(float(b) for b in self.initial_beliefs))
        if len(self.initial_beliefs) != n:
            raise ValueError("initial_beliefs must match the number of arms")
        if self.priors is None:
            object.__setattr__(self, "priors", tuple(np.full(len(g), 1.0 / len(g)) for g in self.grids))
        priors = tuple(np.asarray(w, dtype=float) for w in self.priors)
        object.__setattr__(self, "priors", priors)
        for g, w in zip(self.grids, priors):
            if not g:
                raise ValueError("grids must be nonempty")
            if w.shape != (len(g),) or np.any(w < 0) or w.sum() <= 0:
                raise ValueError("each prior must be a nonnegative vector matching its grid")
        for arm, g in zip(self.true_arms, self.grids):
            for c in g:
                c.model(arm.kind)  # raises on invalid parameters

    def true_indices(self) -> list[int | None]:
        out = []
        for arm, g in zip(self.true_arms, self.grids):
            hits = [i for i, c in enumerate(g) if c.matches(arm)]
            out.append(hits[0] if hits else None)
        return out

    def oracle_config(self, policy: Policy = Policy.WHITTLE) -> SimConfig:
        return SimConfig(self.true_arms, self.initial_beliefs, self.criterion, policy, self.horizon, self.seeds)


@dataclass(frozen=True, eq=False)
class RegretReport:
    """Per-step diagnostics; regret is the oracle cumulative reward minus the learner's."""

    regret: np.ndarray
    mismatch: np.ndarray  # cumulative count of steps with some sampled candidate wrong
    true_mass: np.ndarray  # shape (horizon, n_arms)

    def __post_init__(self):
        if not (len(self.regret) == len(self.mismatch) == len(self.true_mass)):
            raise ValueError("diagnostic series must share the horizon length")


@dataclass(frozen=True, eq=False)
class LearningRun:
    trace: SimulationTrace
    report: RegretReport
    sampled: np.ndarray  # sampled candidate per arm after each step, shape (horizon, n_arms)
    final_weights: list[np.ndarray]


def run_learning(config: LearningConfig, seed: int) -> LearningRun:
    arms = config.true_arms
    n = len(arms)
    horizon = config.horizon
    true_idx = config.true_indices()
    models = [[c.model(a.kind) for c in g] for a, g in zip(arms, config.grids)]
    caches = [IndexCache(ms, config.criterion) for ms in models]
    rngs = [arm_stream(seed, ROLE_POSTERIOR, i) for i in range(n)]

    post = PosteriorState.from_prior(config.priors, config.initial_beliefs)
    for i in range(n):
        post.sampled[i] = _sample(rngs[i], post.log_weights[i])
    env = EnvironmentRun(arms, config.initial_beliefs, horizon, seed)

    actions = np.empty(horizon, dtype=np.int64)
    rewards = np.empty(horizon, dtype=np.int8)
    beliefs = np.empty((horizon, n))
    sampled_hist = np.empty((horizon, n), dtype=np.int64)
    mismatch = np.zeros(horizon, dtype=np.int64)
    mass = np.full((horizon, n), np.nan)
    miss = 0

    for t in range(horizon):
        scores = np.empty(n)
        believed = np.empty(n)
        for i in range(n):
            j = int(post.sampled[i])
            m = models[i][j]
            pi = passive_iterate_from(m, float(post.reference[i]), int(post.steps_since_play[i]))
            believed[i] = pi
            if config.base_policy is Policy.WHITTLE:
                scores[i] = caches[i].index(j, pi)
            else:
                scores[i] = expected_reward(m, pi)
        a = int(np.argmax(scores))
        r = env.step(a)
        actions[t], rewards[t] = a, r

        posterior_update(post, a, arms[a].kind, config.grids[a], int(post.steps_since_play[a]), r,
                         float(post.reference[a]))
        for i in range(n) if config.resample_all else (a,):
            post.sampled[i] = _sample(rngs[i], post.log_weights[i])
        post.steps_since_play += 1
        post.steps_since_play[a] = 0
        post.reference[a] = reset_belief(arms[a])

        # post-step beliefs under the candidates now sampled, matching the environment's record
        for i in range(n):
            m = models[i][int(post.sampled[i])]
            believed[i] = passive_iterate_from(m, float(post.reference[i]), int(post.steps_since_play[i]))
        beliefs[t] = believed
        sampled_hist[t] = post.sampled
        miss += any(true_idx[i] is None or post.sampled[i] != true_idx[i] for i in range(n))
        mismatch[t] = miss
        for i in range(n):
            if true_idx[i] is not None:
                mass[t, i] = math.exp(post.log_weights[i][true_idx[i]])

    trace = SimulationTrace(config.base_policy, int(seed), actions, rewards, beliefs, n)
    oracle = run_episode(config.oracle_config(), seed, Policy.WHITTLE, record_beliefs=False)
    regret = (oracle.cumulative - trace.cumulative).astype(float)
    report = RegretReport(regret, mismatch, mass)
    return LearningRun(trace, report, sampled_hist, post.weights)


@dataclass(frozen=True, eq=False)
class LearningSummary:
    seeds: tuple[int, ...]
    regret_mean: np.ndarray
    regret_stderr: np.ndarray
    mismatch_mean: np.ndarray
    true_mass_mean: np.ndarray  # shape (horizon, n_arms)
    random_regret_mean: np.ndarray
    runs: list[LearningRun] = field(repr=False)

    @property
    def final_true_mass(self) -> np.ndarray:
        return self.true_mass_mean[-1]


def run_learning_batch(config: LearningConfig) -> LearningSummary:
    runs = [run_learning(config, s) for s in config.seeds]
    reg = np.array([r.report.regret for r in runs])
    se = reg.std(axis=0, ddof=1) / math.sqrt(len(runs)) if len(runs) > 1 else np.zeros(config.horizon)
    rnd = []
    ocfg = config.oracle_config()
    for s in config.seeds:
        oracle = run_episode(ocfg, s, Policy.WHITTLE, record_beliefs=False)
        baseline = run_episode(ocfg, s, Policy.RANDOM, record_beliefs=False)
        rnd.append((oracle.cumulative - baseline.cumulative).astype(float))
    return LearningSummary(
        config.seeds,
        reg.mean(axis=0),
        se,
        np.array([r.report.mismatch for r in runs], dtype=float).mean(axis=0),
        np.array([r.report.true_mass for r in runs]).mean(axis=0),
        np.array(rnd).mean(axis=0),
        runs,
    )


def learning_fixture(horizon: int = 5000, seeds: Sequence[int] = range(20),
                    base_policy: Policy = Policy.WHITTLE) -> LearningConfig:
    """Five arms (four type A, one type B) with rho1 = 0.7 known and a 2 x 2 grid over (p, rho0)."""
    ps = [0.15, 0.25, 0.25, 0.15, 0.15]
    rho0s = [0.2, 0.2, 0.1, 0.1, 0.1]
    kinds = [ArmKind.A] * 4 + [ArmKind.B]
    arms = tuple(ArmModel(k, p, r0, 0.7) for k, p, r0 in zip(kinds, ps, rho0s))
    grid = tuple(product_grid([0.15, 0.25], [0.1, 0.2], [0.7]))
    return LearningConfig(arms, (grid,) * 5, criterion=Criterion.discounted(0.99),
                          base_policy=base_policy, horizon=horizon, seeds=tuple(seeds))
