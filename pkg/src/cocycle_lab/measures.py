"""Driving measures on a group backend and exact convolution powers."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .groups import IDENTITY, GroupBackend, GroupElement, Syllable, push_syllable, uniform_word


class IncomparableMeasuresError(ValueError):
    """The two measures do not share a support, so their distance is undefined."""


class NothingToStripError(ValueError):
    """lazify() was called on a measure without an atom at the identity."""


class ConvolutionCapError(RuntimeError):
    """An exact convolution would exceed the configured support cap."""


class MeasureError(ValueError):
    pass


DEFAULT_SUPPORT_CAP = 500_000


class DrivingMeasure:
    """Common surface of every driving measure.

    Subclasses provide ``pmf``, ``sample_syllables`` and ``describe``; finite
    measures also expose ``support`` and ``probs``.
    """

    backend: GroupBackend
    tail_class: str = "finite"
    family: str = ""

    @property
    def is_finite(self) -> bool:
        return False

    def pmf(self, g: GroupElement) -> float:
        raise NotImplementedError

    def sample_syllables(self, rng: np.random.Generator, size: int) -> list[tuple[Syllable, ...]]:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int | None = None):
        words = self.sample_syllables(rng, 1 if size is None else size)
        out = [GroupElement(w) for w in words]
        return out[0] if size is None else out

    def describe(self) -> dict:
        raise NotImplementedError

    def fingerprint(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        raise NotImplementedError

    def radial_form(self) -> tuple[float, float, float] | None:
        """(c, a, b) with pmf(id)=c and pmf(g)=a*b^|g|/N_|g| for g != id, if applicable."""
        return None


@dataclass(eq=False)
class FiniteTable(DrivingMeasure):
    backend: GroupBackend
    support: tuple[GroupElement, ...]
    probs: np.ndarray
    tail_class: str = "finite"
    label: str = ""
    family: str = field(default="table", init=False)

    def __post_init__(self):
        self.support = tuple(self.support)
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (len(self.support),) or not len(self.support):
            raise MeasureError("support and probabilities must be non-empty and of equal length")
        if np.any(probs <= 0) or not np.all(np.isfinite(probs)):
            raise MeasureError("table probabilities must be strictly positive")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise MeasureError(f"table probabilities sum to {probs.sum()!r}, not 1")
        self.probs = probs / probs.sum()
        self.index_of = {g: i for i, g in enumerate(self.support)}
        if len(self.index_of) != len(self.support):
            raise MeasureError("support contains duplicate elements")
        for g in self.support:
            for f, _ in g.syllables:
                self.backend.check_factor(f)
        self.cdf = np.cumsum(self.probs)
        self.cdf[-1] = 1.0
        self._syl = [g.syllables for g in self.support]

    @property
    def is_finite(self) -> bool:
        return True

    def pmf(self, g: GroupElement) -> float:
        i = self.index_of.get(g)
        return 0.0 if i is None else float(self.probs[i])

    def sample_indices(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.indices_from_uniforms(rng.random(size))

    def indices_from_uniforms(self, u: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.cdf, u, side="right")
        return np.minimum(idx, len(self.support) - 1)

    def sample_syllables(self, rng, size):
        syl = self._syl
        return [syl[i] for i in self.sample_indices(rng, size)]

    def describe(self) -> dict:
        return {
            "family": "table",
            "backend": list(self.backend.orders),
            "table": [[str(g), repr(float(p))] for g, p in zip(self.support, self.probs)],
        }

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        for g, p in zip(self.support, self.probs):
            if abs(self.pmf(self.backend.invert(g)) - p) > tol:
                return False
        return True

    def items(self):
        return zip(self.support, (float(p) for p in self.probs))

    def to_table(self) -> "FiniteTable":
        return self


@dataclass(eq=False)
class GeometricLength(DrivingMeasure):
    """Length L ~ p(1-p)^L, then a uniform normal-form word of length L."""

    backend: GroupBackend
    p: float
    tail_class: str = field(default="exponential", init=False)
    family: str = field(default="geometric", init=False)

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise MeasureError("stop probability must lie in (0, 1]")

    def pmf(self, g: GroupElement) -> float:
        L = g.length
        return self.p * (1 - self.p) ** L / self.backend.count_words(L)

    def length_pmf(self, L: int) -> float:
        return self.p * (1 - self.p) ** L

    def sample_syllables(self, rng, size):
        lengths = rng.geometric(self.p, size=size) - 1
        return [uniform_word(self.backend, int(L), rng) if L else () for L in lengths]

    def describe(self) -> dict:
        return {"family": "geometric", "backend": list(self.backend.orders), "p": repr(float(self.p))}

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        return True

    def radial_form(self):
        return (self.p, self.p, 1 - self.p)


@dataclass(eq=False)
class Lazy(DrivingMeasure):
    """With probability q stay put, otherwise step according to ``base``."""

    base: DrivingMeasure
    q: float
    family: str = field(default="lazy", init=False)

    def __post_init__(self):
        if not 0 <= self.q < 1:
            raise MeasureError("laziness must lie in [0, 1)")
        self.backend = self.base.backend
        self.tail_class = self.base.tail_class

    @property
    def is_finite(self) -> bool:
        return self.base.is_finite

    def pmf(self, g: GroupElement) -> float:
        p = (1 - self.q) * self.base.pmf(g)
        if g.is_identity():
            p += self.q
        return p

    def sample_syllables(self, rng, size):
        u = rng.random(size)
        moving = np.flatnonzero(u >= self.q)
        steps = self.base.sample_syllables(rng, len(moving))
        out: list[tuple[Syllable, ...]] = [()] * size
        for i, w in zip(moving, steps):
            out[i] = w
        return out

    def describe(self) -> dict:
        return {"family": "lazy", "q": repr(float(self.q)), "base": self.base.describe()}

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        return self.base.is_symmetric(tol)

    def to_table(self) -> FiniteTable:
        if not self.base.is_finite:
            raise MeasureError("lazy measure over an infinite base has no finite table")
        weights: dict[GroupElement, float] = {IDENTITY: self.q}
        for g, p in self.base.to_table().items():
            weights[g] = weights.get(g, 0.0) + (1 - self.q) * p
        if self.q == 0:
            weights = {g: p for g, p in weights.items() if p > 0}
        return FiniteTable(self.backend, tuple(weights), np.array(list(weights.values())))

    @property
    def support(self):
        return self.to_table().support

    def radial_form(self):
        r = self.base.radial_form()
        if r is None:
            return None
        c, a, b = r
        return (self.q + (1 - self.q) * c, (1 - self.q) * a, b)


@dataclass(eq=False)
class Stripped(DrivingMeasure):
    """``base`` conditioned on not being the identity (infinite-support lazify)."""

    base: DrivingMeasure
    family: str = field(default="stripped", init=False)

    def __post_init__(self):
        self.backend = self.base.backend
        self.tail_class = self.base.tail_class
        self.mass = 1.0 - self.base.pmf(IDENTITY)
        if self.mass <= 0:
            raise MeasureError("base measure is concentrated on the identity")

    def pmf(self, g: GroupElement) -> float:
        if g.is_identity():
            return 0.0
        return self.base.pmf(g) / self.mass

    def sample_syllables(self, rng, size):
        out = []
        while len(out) < size:
            for w in self.base.sample_syllables(rng, size - len(out)):
                if w:
                    out.append(w)
        return out

    def describe(self) -> dict:
        return {"family": "stripped", "base": self.base.describe()}

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        return self.base.is_symmetric(tol)

    def radial_form(self):
        r = self.base.radial_form()
        if r is None:
            return None
        _, a, b = r
        return (0.0, a / self.mass, b)


# -- constructors ----------------------------------------------------------------


def simple_random_walk(backend: GroupBackend) -> FiniteTable:
    gens = backend.generators()
    return FiniteTable(backend, tuple(gens), np.full(len(gens), 1.0 / len(gens)), label="srw")


def table(backend: GroupBackend, weights: Mapping[str | GroupElement, float]) -> FiniteTable:
    support, probs = [], []
    for k, p in weights.items():
        g = backend.element(k) if isinstance(k, str) else k
        support.append(g)
        probs.append(float(p))
    return FiniteTable(backend, tuple(support), np.array(probs))


def dirac(backend: GroupBackend, g: GroupElement | str) -> FiniteTable:
    return table(backend, {g: 1.0})


def lazify(m: DrivingMeasure) -> DrivingMeasure:
    """Strip the atom at the identity and renormalize."""
    q = m.pmf(IDENTITY)
    if q <= 0:
        raise NothingToStripError("measure has no mass at the identity")
    if q >= 1:
        raise MeasureError("measure is the Dirac mass at the identity")
    if isinstance(m, Lazy) and m.base.pmf(IDENTITY) == 0:
        return m.base
    if m.is_finite:
        items = [(g, p) for g, p in m.to_table().items() if not g.is_identity()]
        return FiniteTable(m.backend, tuple(g for g, _ in items), np.array([p / (1 - q) for _, p in items]))
    if isinstance(m, Lazy):
        return lazify(m.base)
    return Stripped(m)


# -- distance between measures ------------------------------------------------------


def _ratio_term(x: float, y: float) -> float:
    if x <= 0 or y <= 0:
        raise IncomparableMeasuresError("measures disagree on the support")
    return max(x / y, y / x) - 1.0


def measure_distance(m0: DrivingMeasure, m1: DrivingMeasure) -> float:
    """sup over the common support of max(m0/m1, m1/m0) - 1."""
    if m0.backend.orders != m1.backend.orders:
        raise IncomparableMeasuresError("measures live on different groups")
    if m0.is_finite and m1.is_finite:
        t0, t1 = m0.to_table(), m1.to_table()
        if set(t0.support) != set(t1.support):
            raise IncomparableMeasuresError("finite measures have different supports")
        return max(_ratio_term(float(p), t1.pmf(g)) for g, p in t0.items())
    r0, r1 = m0.radial_form(), m1.radial_form()
    if r0 is None or r1 is None or m0.is_finite or m1.is_finite:
        raise IncomparableMeasuresError("no closed form for this pair of measures")
    (c0, a0, b0), (c1, a1, b1) = r0, r1
    if (c0 == 0) != (c1 == 0):
        raise IncomparableMeasuresError("one support contains the identity and the other does not")
    # the pmf ratio is (a0/a1)(b0/b1)^L for L >= 1: monotone, so the sup sits at L=1 or L=inf
    if b0 != b1:
        return math.inf
    out = _ratio_term(a0, a1)
    if c0 > 0:
        out = max(out, _ratio_term(c0, c1))
    return out


# -- perturbation curves --------------------------------------------------------------


@dataclass(eq=False)
class MeasureCurve:
    """Linear interpolation mu_t = mu0 + t (mu1 - mu0) between two finite tables."""

    mu0: FiniteTable
    mu1: FiniteTable

    def __post_init__(self):
        self.mu0 = self.mu0.to_table()
        self.mu1 = self.mu1.to_table()
        if set(self.mu0.support) != set(self.mu1.support):
            raise IncomparableMeasuresError("curve endpoints must share a support")
        self.support = self.mu0.support
        self.p0 = self.mu0.probs
        self.p1 = np.array([self.mu1.pmf(g) for g in self.support])
        if abs(float(np.dot(self.direction_array(), self.p0))) > 1e-12:
            raise MeasureError("direction is not centered under mu0")

    def at(self, t: float) -> FiniteTable:
        if not 0 <= t <= 1:
            raise ValueError("curve parameter must lie in [0, 1]")
        return FiniteTable(self.mu0.backend, self.support, self.p0 + t * (self.p1 - self.p0))

    def direction_array(self, t: float = 0.0) -> np.ndarray:
        return (self.p1 - self.p0) / (self.p0 + t * (self.p1 - self.p0))

    def direction(self, t: float = 0.0) -> dict[GroupElement, float]:
        return dict(zip(self.support, map(float, self.direction_array(t))))

    def sup_direction(self) -> float:
        return float(max(np.abs(self.direction_array(0.0)).max(), np.abs(self.direction_array(1.0)).max()))

    def check_direction_table(self, nu: Mapping[GroupElement, float], tol: float = 1e-12) -> None:
        expected = self.direction()
        if set(nu) != set(expected):
            raise MeasureError("explicit direction table does not cover the support")
        for g, v in nu.items():
            if abs(v - expected[g]) > tol:
                raise MeasureError(f"direction at {g} is {v}, curve rule gives {expected[g]}")


# -- exact distributions --------------------------------------------------------------


@dataclass
class ExactDistribution:
    backend: GroupBackend
    probs: dict[GroupElement, float]
    n: int = 1

    def __post_init__(self):
        total = math.fsum(self.probs.values())
        if abs(total - 1.0) > 1e-10:
            raise MeasureError(f"distribution sums to {total!r}")

    def __getitem__(self, g: GroupElement) -> float:
        return self.probs.get(g, 0.0)

    def __len__(self) -> int:
        return len(self.probs)

    @classmethod
    def delta(cls, backend: GroupBackend, g: GroupElement = IDENTITY) -> "ExactDistribution":
        return cls(backend, {g: 1.0}, 0)

    @classmethod
    def from_measure(cls, m: DrivingMeasure) -> "ExactDistribution":
        if not m.is_finite:
            raise MeasureError("exact distributions need a finitely supported measure")
        return cls(m.backend, dict(m.to_table().items()), 1)

    def total_variation(self, other: "ExactDistribution") -> float:
        keys = set(self.probs) | set(other.probs)
        return 0.5 * math.fsum(abs(self[k] - other[k]) for k in keys)


def convolve_exact(
    d1: ExactDistribution, d2: ExactDistribution, cap: int = DEFAULT_SUPPORT_CAP
) -> ExactDistribution:
    """(d1 * d2)(z) = sum_g d1(g) d2(g^-1 z)."""
    orders = d1.backend.orders
    acc: dict[tuple, float] = {}
    right = [(h.syllables, p) for h, p in d2.probs.items()]
    for g, pg in d1.probs.items():
        base = list(g.syllables)
        for hs, ph in right:
            stack = base.copy()
            for f, e in hs:
                push_syllable(stack, f, e, orders)
            key = tuple(stack)
            acc[key] = acc.get(key, 0.0) + pg * ph
        if len(acc) > cap:
            raise ConvolutionCapError(f"convolution support exceeds cap {cap}")
    return ExactDistribution(d1.backend, {GroupElement(k): v for k, v in acc.items()}, d1.n + d2.n)


def convolution_powers(m: DrivingMeasure, n_max: int, cap: int = DEFAULT_SUPPORT_CAP) -> list[ExactDistribution]:
    """[mu^0, mu^1, ..., mu^n_max] by repeated exact convolution."""
    one = ExactDistribution.from_measure(m)
    out = [ExactDistribution.delta(m.backend)]
    for _ in range(n_max):
        out.append(convolve_exact(out[-1], one, cap))
    return out


def entropy_of(d: ExactDistribution) -> float:
    """Shannon entropy in nats, with 0 log 0 = 0."""
    return math.fsum(-p * math.log(p) for p in d.probs.values() if p > 0)


def moment(m: DrivingMeasure, p: float, tol: float = 1e-15) -> float:
    """chi_p = sum_g |g|^p m(g), exact for tables and summed in L for radial families."""
    if m.is_finite:
        return math.fsum(g.length ** p * w for g, w in m.to_table().items())
    r = m.radial_form()
    if r is None:
        raise MeasureError("no closed-form moment for this measure")
    _, a, b = r
    out, L = 0.0, 1
    while True:
        term = L ** p * a * b ** L
        out += term
        if term < tol and L > 10:
            return out
        L += 1
