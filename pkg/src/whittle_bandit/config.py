"""JSON experiment configuration, validated before any computation.

Unknown keys are rejected at every level.  ``schema_version`` must equal
:data:`SCHEMA_VERSION`.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Literal, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .core import ArmKind, ArmModel, Criterion, ModelVariant
from .learning import Candidate, LearningConfig, product_grid
from .sim import FIVE_ARM_PARAMETERS, GeneratorSpec, Policy, SimConfig

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "ArmSpec",
    "GeneratorModel",
    "SeedRange",
    "GridSpec",
    "LearningSpec",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "builtin_fixtures",
    "fixture_names",
    "load_fixture",
    "write_fixtures",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Configuration could not be read or failed validation."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ArmSpec(_Strict):
    kind: ArmKind
    variant: ModelVariant = ModelVariant.BASE
    p: float = Field(gt=0.0, lt=1.0)
    q: float | None = Field(default=None, gt=0.0, lt=1.0)
    rho0: float = Field(ge=0.0, le=1.0)
    rho1: float = Field(ge=0.0, le=1.0)
    initial_belief: float = Field(default=0.4, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_model(self):
        self.to_model()
        return self

    def to_model(self) -> ArmModel:
        return ArmModel(self.kind, self.p, self.rho0, self.rho1, self.variant, self.q)


class GeneratorModel(_Strict):
    n_arms: int = Field(gt=0)
    n_type_b: int | None = Field(default=None, ge=0)
    initial_belief: float = Field(default=0.4, ge=0.0, le=1.0)

    def to_spec(self) -> GeneratorSpec:
        return GeneratorSpec(self.n_arms, self.n_type_b, self.initial_belief)


class SeedRange(_Strict):
    start: int = 0
    count: int = Field(gt=0)

    def to_list(self) -> list[int]:
        return list(range(self.start, self.start + self.count))


class GridSpec(_Strict):
    """Candidates for one arm: an explicit list or a product of value lists."""

    candidates: list[tuple[float, float, float]] | None = None
    p: list[float] | None = None
    rho0: list[float] | None = None
    rho1: list[float] | None = None
    prior: list[float] | None = None

    @model_validator(mode="after")
    def _one_form(self):
        product = [self.p, self.rho0, self.rho1]
        if self.candidates is None and any(v is None for v in product):
            raise ValueError("give either candidates or all of p, rho0, rho1")
        if self.candidates is not None and any(v is not None for v in product):
            raise ValueError("candidates and product lists are mutually exclusive")
        n = len(self.to_candidates())
        if n == 0:
            raise ValueError("grid is empty")
        if self.prior is not None and len(self.prior) != n:
            raise ValueError(f"prior has {len(self.prior)} entries for {n} candidates")
        return self

    def to_candidates(self, known: dict[str, float] | None = None) -> list[Candidate]:
        if self.candidates is not None:
            cands = [Candidate(*c) for c in self.candidates]
        else:
            cands = product_grid(self.p, self.rho0, self.rho1)
        if known:
            seen = []
            for c in cands:
                c = Candidate(**{**c.__dict__, **known})
                if c not in seen:
                    seen.append(c)
            cands = seen
        return cands


class LearningSpec(_Strict):
    grids: list[GridSpec]
    known: dict[Literal["p", "rho0", "rho1"], float] = Field(default_factory=dict)
    base_policy: Literal["whittle", "myopic"] = "whittle"
    resample_all: bool = False


class ExperimentConfig(_Strict):
    schema_version: int
    arms: list[ArmSpec] | None = None
    generator: GeneratorModel | None = None
    criterion: Union[float, Literal["average"]] = 0.99
    policies: list[Policy] = Field(default_factory=lambda: [Policy.WHITTLE, Policy.MYOPIC], min_length=1)
    horizon: int = Field(default=800, ge=0)
    seeds: Union[list[int], SeedRange] = Field(default_factory=lambda: [0])
    output: str | None = None
    learning: LearningSpec | None = None

    @field_validator("schema_version")
    @classmethod
    def _version(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}, expected {SCHEMA_VERSION}")
        return v

    @field_validator("criterion")
    @classmethod
    def _beta(cls, v):
        if v != "average" and not 0.0 < v < 1.0:
            raise ValueError("criterion must be a discount factor in (0, 1) or \"average\"")
        return v

    @model_validator(mode="after")
    def _arms_xor_generator(self):
        if (self.arms is None) == (self.generator is None):
            raise ValueError("exactly one of arms or generator must be given")
        if self.arms is not None and not self.arms:
            raise ValueError("arms must be nonempty")
        if self.learning is not None:
            if self.arms is None:
                raise ValueError("learning runs need explicit arms")
            if len(self.learning.grids) != len(self.arms):
                raise ValueError("learning.grids needs one grid per arm")
            self.to_learning_config()
        return self

    @property
    def criterion_obj(self) -> Criterion:
        return Criterion.average() if self.criterion == "average" else Criterion.discounted(self.criterion)

    @property
    def seed_list(self) -> list[int]:
        return self.seeds.to_list() if isinstance(self.seeds, SeedRange) else list(self.seeds)

    def models(self) -> list[ArmModel]:
        if self.arms is None:
            raise ConfigError("this configuration uses a generator; models depend on the seed")
        return [a.to_model() for a in self.arms]

    def to_sim_config(self) -> SimConfig:
        gen = self.generator.to_spec() if self.generator else None
        arms = tuple(self.models()) if self.arms else ()
        init = tuple(a.initial_belief for a in self.arms) if self.arms else ()
        return SimConfig(arms, init, self.criterion_obj, self.policies[0], self.horizon,
                         tuple(self.seed_list), gen)

    def to_learning_config(self) -> LearningConfig:
        if self.learning is None:
            raise ConfigError("configuration has no learning section")
        spec = self.learning
        grids = tuple(tuple(g.to_candidates(spec.known)) for g in spec.grids)
        priors = []
        for i, (g, cands) in enumerate(zip(spec.grids, grids)):
            if g.prior is None:
                priors.append([1.0] * len(cands))
            elif len(g.prior) != len(cands):
                raise ValueError(f"grid {i}: prior has {len(g.prior)} entries but known parameters "
                                 f"leave {len(cands)} candidates")
            else:
                priors.append(g.prior)
        return LearningConfig(tuple(self.models()), grids, tuple(priors),
                              tuple(a.initial_belief for a in self.arms), self.criterion_obj,
                              Policy(spec.base_policy), self.horizon, tuple(self.seed_list),
                              spec.resample_all)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2, exclude_none=True)


def _describe(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict | str) -> ExperimentConfig:
    try:
        if isinstance(data, str):
            return ExperimentConfig.model_validate_json(data)
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_describe(err)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    """Read a config file, or a shipped fixture when given ``fixture:<name>``."""
    path = str(path)
    if path.startswith("fixture:"):
        return load_fixture(path.split(":", 1)[1])
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err.strerror}") from None
    return parse_config(text)


def _five_arm(row: str) -> ExperimentConfig:
    prm = FIVE_ARM_PARAMETERS[row]
    arms = [dict(kind="A" if i < 4 else "B", p=prm["p"][i], rho0=prm["rho0"][i], rho1=prm["rho1"][i],
                 initial_belief=0.4) for i in range(5)]
    return parse_config(dict(schema_version=SCHEMA_VERSION, arms=arms, criterion=0.99,
                             policies=["whittle", "myopic"], horizon=800,
                             seeds=dict(start=0, count=100)))


def _generated(n: int) -> ExperimentConfig:
    return parse_config(dict(schema_version=SCHEMA_VERSION, generator=dict(n_arms=n, initial_belief=0.4),
                             criterion=0.99, policies=["whittle", "myopic"], horizon=800,
                             seeds=dict(start=0, count=30)))


def _learning() -> ExperimentConfig:
    ps = [0.15, 0.25, 0.25, 0.15, 0.15]
    rho0s = [0.2, 0.2, 0.1, 0.1, 0.1]
    arms = [dict(kind="A" if i < 4 else "B", p=ps[i], rho0=rho0s[i], rho1=0.7, initial_belief=1.0)
            for i in range(5)]
    grid = dict(p=[0.15, 0.25], rho0=[0.1, 0.2], rho1=[0.7])
    return parse_config(dict(schema_version=SCHEMA_VERSION, arms=arms, criterion=0.99,
                             policies=["whittle"], horizon=5000, seeds=dict(start=0, count=20),
                             learning=dict(grids=[grid] * 5, known=dict(rho1=0.7))))


def builtin_fixtures() -> dict[str, ExperimentConfig]:
    return {
        "five_arm_a": _five_arm("a"),
        "five_arm_b": _five_arm("b"),
        "five_arm_c": _five_arm("c"),
        "generated_n10": _generated(10),
        "generated_n50": _generated(50),
        "generated_n200": _generated(200),
        "learning": _learning(),
    }


def fixture_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(__package__).joinpath("fixtures").iterdir()
                  if p.name.endswith(".json"))


def load_fixture(name: str) -> ExperimentConfig:
    res = resources.files(__package__).joinpath("fixtures").joinpath(f"{name}.json")
    if not res.is_file():
        raise ConfigError(f"unknown fixture {name!r}; available: {', '.join(fixture_names())}")
    return parse_config(res.read_text(encoding="utf-8"))


def write_fixtures(directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for name, cfg in builtin_fixtures().items():
        path = directory / f"{name}.json"
        path.write_text(cfg.to_json() + "\n", encoding="utf-8")
        out.append(path)
    return out


if __name__ == "__main__":  # regenerate the shipped fixtures
    for p in write_fixtures(Path(__file__).with_name("fixtures")):
        print(p)
