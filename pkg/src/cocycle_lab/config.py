"""Experiment configuration: YAML text validated against strict schemas.

Unknown keys are errors.  Diagnostics name the offending key path and the
line it sits on in the source file.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .groups import FreeGroup, FreeProductOfCyclics, GroupBackend, IntegerLine
from .measures import DrivingMeasure, GeometricLength, Lazy, simple_random_walk, table
from .walk import AdditiveSum, BrooksCounting, Cocycle, EndPoint, FirstLetterSign, LengthCocycle, TableFunction


class ConfigError(ValueError):
    """Invalid configuration; the message carries the key path and line."""


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# -- group and measure specs ------------------------------------------------------------------


class BackendSpec(Strict):
    kind: Literal["free_group", "free_product", "integer_line"]
    rank: Optional[int] = None
    orders: Optional[list[int]] = None

    @model_validator(mode="after")
    def _shape(self):
        if self.kind == "free_group" and (self.rank is None or self.rank < 1):
            raise ValueError("free_group needs a positive rank")
        if self.kind == "free_product" and not self.orders:
            raise ValueError("free_product needs a list of factor orders")
        return self

    def build(self) -> GroupBackend:
        if self.kind == "free_group":
            return FreeGroup(self.rank)
        if self.kind == "free_product":
            return FreeProductOfCyclics(self.orders)
        return IntegerLine()


class MeasureSpec(Strict):
    backend: BackendSpec
    family: Literal["srw", "table", "geometric", "lazy"]
    table: Optional[dict[str, float]] = None
    p: Optional[float] = None
    q: Optional[float] = None
    base: Optional["MeasureSpec"] = None

    @model_validator(mode="after")
    def _shape(self):
        need = {"table": "table", "geometric": "p", "lazy": "q"}.get(self.family)
        if need and getattr(self, need) is None:
            raise ValueError(f"family {self.family!r} needs {need!r}")
        return self

    def build(self) -> DrivingMeasure:
        b = self.backend.build()
        if self.family == "srw":
            return simple_random_walk(b)
        if self.family == "table":
            return table(b, self.table)
        if self.family == "geometric":
            return GeometricLength(b, self.p)
        base = self.base.build() if self.base is not None else simple_random_walk(b)
        return Lazy(base, self.q).to_table() if base.is_finite else Lazy(base, self.q)


class CocycleSpec(Strict):
    kind: Literal["length", "additive", "end_point"] = "length"
    function: Optional[Literal["first_letter_sign", "table", "brooks"]] = None
    table: Optional[dict[str, float]] = None

    def build(self, backend: GroupBackend) -> Cocycle:
        if self.kind == "length":
            return LengthCocycle()
        if self.function == "table":
            f = TableFunction(tuple((backend.element(k), float(v)) for k, v in (self.table or {}).items()))
        elif self.function == "brooks":
            f = BrooksCounting()
        else:
            f = FirstLetterSign()
        name = f"{self.kind}:{self.function or 'first_letter_sign'}"
        return AdditiveSum(f, name) if self.kind == "additive" else EndPoint(f, name)


class BudgetSpec(Strict):
    max_steps: float = 5e8


class Output(Strict):
    dir: str = "out"
    figures: bool = True
    trajectory_dump: int = 0


# -- suite parameters -----------------------------------------------------------------------------


class DeviationParams(Strict):
    measures: list[str]
    grid: list[int] = [50, 100, 200]
    thresholds: list[float] = Field(default_factory=lambda: [float(c) for c in range(21)])
    samples: int = 10000
    max_variation: float = 0.2
    tau_grid: list[int] = [16, 32, 64, 128]
    tau_samples: int = 4000
    variance_grid: list[int] = [64, 128, 256, 512, 1024]
    variance_samples: int = 2000
    moment_p: float = 4.0
    moment_grid: list[int] = [64, 128, 256, 512, 1024]
    moment_samples: int = 2000
    efron_stein_n: int = 256
    efron_stein_samples: int = 200
    additive: CocycleSpec = CocycleSpec(kind="additive", function="first_letter_sign")


class CltParams(Strict):
    measure: str
    control: Optional[str] = None
    n_grid: list[int] = [125, 250, 500, 1000]
    samples: int = 5000
    ks_threshold: float = 0.03
    speed_n: int = 1000
    speed_samples: int = 10000
    speed_expected: Optional[float] = None
    speed_tolerance: float = 0.01
    bracket_grid: list[int] = [16, 32, 64]
    bracket_samples: int = 2000


class GreenTarget(Strict):
    word: str
    trials: int


class GreenParams(Strict):
    measure: str
    targets: list[GreenTarget]
    horizon: int = 2000
    radius: int = 16
    tolerance: float = 0.02
    spectral_k: int = 5
    cache: Optional[str] = None


class EntropyParams(Strict):
    measure: str
    n_grid: list[int] = [8, 16, 24, 32, 40]
    samples: int = 1000
    horizon: int = 200
    trials: int = 16
    pilot_trials: int = 2000
    exact_n: int = 6
    tolerance: float = 0.05


class CurveSpec(Strict):
    base: str
    end: str
    expect_zero: bool = False
    nu: Optional[dict[str, float]] = None


class PairSpec(Strict):
    base: str
    other: str


class SensitivityParams(Strict):
    curves: list[CurveSpec]
    n_grid: list[int] = [50, 100, 200]
    samples: int = 10000
    ts: list[float] = [0.05, 0.025]
    girsanov: PairSpec
    girsanov_n: int = 100
    girsanov_samples: int = 5000
    identity_n: int = 4
    lipschitz: list[PairSpec]
    lipschitz_n: int = 200
    lipschitz_samples: int = 4000
    tau_samples: int = 1000

    @field_validator("ts")
    @classmethod
    def _two(cls, v):
        if len(v) != 2:
            raise ValueError("exactly two finite-difference steps")
        return v


class DecomposeParams(Strict):
    measure: str
    n_max: int = 1024
    trajectories: int = 4
    gromov_samples: int = 100000
    gromov_trajectories: int = 16
    gromov_horizon: int = 512
    cocycles: list[CocycleSpec] = [
        CocycleSpec(kind="length"),
        CocycleSpec(kind="additive", function="first_letter_sign"),
    ]
    quasimorphism_samples: int = 100000
    tolerance: float = 1e-9


class LazyParams(Strict):
    measure: str
    n_max: int = 4
    tolerance: float = 1e-10


class ProgressParams(Strict):
    measure: str
    control: Optional[str] = None
    C: float = 4.0
    n_grid: list[int] = Field(default_factory=lambda: list(range(8, 161, 8)))
    samples: int = 50000
    min_r2: float = 0.9


PARAMS = {
    "deviation": DeviationParams,
    "clt": CltParams,
    "green": GreenParams,
    "entropy": EntropyParams,
    "sensitivity": SensitivityParams,
    "decompose-check": DecomposeParams,
    "lazy-check": LazyParams,
    "linear-progress": ProgressParams,
}


class ExperimentConfig(Strict):
    experiment: str
    suite: Optional[str] = None
    seed: Optional[int] = None
    workers: int = 1
    budget: BudgetSpec = BudgetSpec()
    output: Output = Output()
    measures: dict[str, MeasureSpec]
    params: dict[str, Any] = Field(default_factory=dict)

    @field_validator("seed")
    @classmethod
    def _seed(cls, v):
        if v is not None and v < 0:
            raise ValueError("seed must be non-negative")
        return v

    def measure(self, name: str) -> DrivingMeasure:
        if name not in self.measures:
            raise ConfigError(f"unknown measure {name!r}; declared: {sorted(self.measures)}")
        return self.measures[name].build()

    def fingerprint(self) -> str:
        """Stable hash of everything that affects results (not workers or output paths)."""
        body = self.model_dump(mode="json", exclude={"workers", "output"})
        blob = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- loading --------------------------------------------------------------------------------------


def _line_of(node: yaml.Node | None, loc: tuple) -> int | None:
    """Line (1-based) of the deepest node reachable along ``loc``."""
    line = None
    for key in loc:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == str(key):
                    line = k.start_mark.line + 1
                    nxt = v
                    break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            break
    if node is not None:
        line = node.start_mark.line + 1 if line is None else line
    return line


def _raise(err: ValidationError, root: yaml.Node | None, prefix: tuple = ()) -> None:
    msgs = []
    for e in err.errors():
        loc = prefix + tuple(x for x in e["loc"] if not isinstance(x, str) or x not in ("build",))
        line = _line_of(root, loc)
        where = ".".join(str(x) for x in loc) or "<root>"
        kind = "unknown key" if e["type"] == "extra_forbidden" else e["msg"]
        msgs.append(f"line {line if line is not None else '?'}: {where}: {kind}")
    raise ConfigError("invalid configuration\n  " + "\n  ".join(msgs))


def parse_config(text: str, suite: str | None = None) -> tuple[ExperimentConfig, BaseModel | None]:
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        _raise(exc, root)
    name = suite or cfg.suite
    if cfg.suite is not None and suite is not None and cfg.suite != suite:
        raise ConfigError(f"config declares suite {cfg.suite!r} but {suite!r} was requested")
    params = None
    if name is not None:
        if name not in PARAMS:
            raise ConfigError(f"unknown suite {name!r}")
        try:
            params = PARAMS[name].model_validate(cfg.params)
        except ValidationError as exc:
            _raise(exc, root, ("params",))
    return cfg, params


def load_config(path: str, suite: str | None = None) -> tuple[ExperimentConfig, BaseModel | None]:
    with open(path) as fh:
        return parse_config(fh.read(), suite)

