"""Exact arithmetic on free products of cyclic groups.

Every supported backend is a free product of cyclic factors: a free group of
rank k is the free product of k copies of Z, the integer line is Z itself, and
Z2*Z2*Z2 is a product of three involutions.  Elements are stored as tuples of
syllables ``(factor, exponent)`` with exponents in the canonical range of the
factor, so that the word length of the normal form is exactly ``sum(|e|)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

Syllable = tuple[int, int]
ALPHABET = "abcdefghijklmnopqrstuvwxyz"


class MalformedElementError(ValueError):
    """Raised when a word uses a generator the backend does not have."""


@dataclass(frozen=True)
class Generator:
    index: int
    sign: int = 1

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise MalformedElementError(f"generator sign must be +1 or -1, got {self.sign}")


@dataclass(frozen=True)
class GroupElement:
    """A group element in normal form; ``syllables`` is the canonical word."""

    syllables: tuple[Syllable, ...] = ()

    @property
    def length(self) -> int:
        return sum(abs(e) for _, e in self.syllables)

    def is_identity(self) -> bool:
        return not self.syllables

    @property
    def letters(self) -> tuple[Generator, ...]:
        out = []
        for f, e in self.syllables:
            g = Generator(f, 1 if e > 0 else -1)
            out.extend([g] * abs(e))
        return tuple(out)

    def __str__(self) -> str:
        return format_element(self)

    def __len__(self) -> int:
        return self.length


IDENTITY = GroupElement(())


@dataclass(frozen=True)
class GroupBackend:
    """A free product of cyclic groups with its word metric.

    ``orders[i] == 0`` marks an infinite cyclic factor.  The generating set is
    ``{s_i, s_i^-1}``, so the word metric is the Cayley-graph distance.
    """

    kind: str
    orders: tuple[int, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in ("free", "free_product", "integer_line"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if not self.orders:
            raise ValueError("backend needs at least one factor")
        for m in self.orders:
            if m == 1 or m < 0:
                raise ValueError(f"factor order must be 0 (infinite) or >= 2, got {m}")

    @property
    def rank(self) -> int:
        return len(self.orders)

    @property
    def is_amenable(self) -> bool:
        # Free products of two Z2's and Z itself are virtually cyclic.
        if self.rank == 1:
            return True
        return self.rank == 2 and self.orders == (2, 2)

    # -- syllable arithmetic -------------------------------------------------

    def reduce_exponent(self, f: int, e: int) -> int:
        m = self.orders[f]
        if m == 0:
            return e
        e %= m
        if 2 * e > m:
            e -= m
        return e

    def check_factor(self, f: int) -> None:
        if not 0 <= f < self.rank:
            raise MalformedElementError(
                f"generator index {f} out of range for {self.describe()} (rank {self.rank})"
            )

    def normalize_syllables(self, syllables: Iterable[Syllable]) -> tuple[Syllable, ...]:
        stack: list[Syllable] = []
        for f, e in syllables:
            self.check_factor(f)
            push_syllable(stack, f, e, self.orders)
        return tuple(stack)

    def normalize(self, letters: Iterable[Generator | Syllable]) -> GroupElement:
        syl = []
        for x in letters:
            if isinstance(x, Generator):
                syl.append((x.index, x.sign))
            else:
                syl.append(tuple(x))
        return GroupElement(self.normalize_syllables(syl))

    def element(self, text: str) -> GroupElement:
        return parse_element(text, self)

    def generators(self) -> list[GroupElement]:
        """The symmetric generating set, involutions listed once."""
        out = []
        for f, m in enumerate(self.orders):
            out.append(GroupElement(((f, 1),)))
            if m != 2:
                out.append(GroupElement(((f, -1),)))
        return out

    def multiply(self, g: GroupElement, h: GroupElement) -> GroupElement:
        stack = list(g.syllables)
        for f, e in h.syllables:
            self.check_factor(f)
            push_syllable(stack, f, e, self.orders)
        return GroupElement(tuple(stack))

    def invert(self, g: GroupElement) -> GroupElement:
        return GroupElement(
            tuple((f, self.reduce_exponent(f, -e)) for f, e in reversed(g.syllables))
        )

    def word_length(self, g: GroupElement) -> int:
        return g.length

    def distance(self, x: GroupElement, y: GroupElement) -> int:
        return distance_syllables(x.syllables, y.syllables, self.orders)

    def gromov_product2(self, x: GroupElement, y: GroupElement, w: GroupElement) -> int:
        """Twice the Gromov product (x, y)_w, an exact integer."""
        return self.distance(w, x) + self.distance(w, y) - self.distance(x, y)

    def gromov_product(self, x: GroupElement, y: GroupElement, w: GroupElement) -> Fraction:
        return Fraction(self.gromov_product2(x, y, w), 2)

    # -- counting and uniform words -------------------------------------------

    def count_words(self, length: int) -> int:
        """Number of normal-form words of the given length (N_L)."""
        return _word_counts(self.orders, length)[0]

    def describe(self) -> str:
        if self.name:
            return self.name
        return backend_label(self)


def push_syllable(stack: list[Syllable], f: int, e: int, orders: Sequence[int]) -> None:
    """Right-multiply the reduced word ``stack`` by the syllable ``s_f^e`` in place."""
    m = orders[f]
    if stack and stack[-1][0] == f:
        e += stack[-1][1]
        stack.pop()
    if m:
        e %= m
        if 2 * e > m:
            e -= m
    if e:
        stack.append((f, e))


def _reduce(e: int, m: int) -> int:
    if m:
        e %= m
        if 2 * e > m:
            e -= m
    return e


def distance_syllables(x: Sequence[Syllable], y: Sequence[Syllable], orders: Sequence[int]) -> int:
    """|x^-1 y| for normal-form syllable words."""
    k = 0
    lim = min(len(x), len(y))
    while k < lim and x[k] == y[k]:
        k += 1
    rest_x = sum(abs(e) for _, e in x[k:])
    rest_y = sum(abs(e) for _, e in y[k:])
    if k < len(x) and k < len(y) and x[k][0] == y[k][0]:
        f = x[k][0]
        ex, ey = x[k][1], y[k][1]
        return rest_x - abs(ex) + rest_y - abs(ey) + abs(_reduce(ey - ex, orders[f]))
    return rest_x + rest_y


@lru_cache(maxsize=None)
def _syllable_length_counts(m: int, max_len: int) -> tuple[int, ...]:
    """counts[l] = number of canonical syllables of length l in Z_m (m=0: Z)."""
    counts = [0] * (max_len + 1)
    if m == 0:
        for l in range(1, max_len + 1):
            counts[l] = 2
        return tuple(counts)
    for e in range(1, m):
        r = abs(_reduce(e, m))
        if r <= max_len:
            counts[r] += 1
    return tuple(counts)


@lru_cache(maxsize=None)
def _word_counts(orders: tuple[int, ...], length: int) -> tuple[int, tuple[int, ...]]:
    """(total, per-factor) counts of normal-form words of ``length``.

    per_factor[i] counts words of that length whose first syllable lies in factor
    i (equal, by reversal, to the count of words ending in factor i).
    """
    if length == 0:
        return 1, tuple(0 for _ in orders)
    per = []
    for i, m in enumerate(orders):
        counts = _syllable_length_counts(m, length)
        s = 0
        for l in range(1, length + 1):
            if counts[l]:
                tot, pf = _word_counts(orders, length - l)
                s += counts[l] * (tot - pf[i])
        per.append(s)
    return sum(per), tuple(per)


def completions(orders: tuple[int, ...], length: int, prev: int) -> int:
    """Normal-form words of ``length`` whose first factor differs from ``prev``."""
    tot, per = _word_counts(orders, length)
    if prev < 0:
        return tot
    return tot - per[prev]


def uniform_word(backend: GroupBackend, length: int, rng) -> tuple[Syllable, ...]:
    """Draw a uniformly random normal-form word of the given length."""
    orders = backend.orders
    out: list[Syllable] = []
    prev = -1
    remaining = length
    while remaining > 0:
        total = completions(orders, remaining, prev)
        u = rng.random() * total
        acc = 0.0
        chosen = None
        for f, m in enumerate(orders):
            if f == prev:
                continue
            counts = _syllable_length_counts(m, remaining)
            for l in range(1, remaining + 1):
                c = counts[l]
                if not c:
                    continue
                w = completions(orders, remaining - l, f)
                if not w:
                    continue
                weight = c * w
                if u < acc + weight:
                    # pick one of the c syllables of this length uniformly
                    j = int((u - acc) // w)
                    chosen = (f, _syllable_of_length(m, l, j))
                    break
                acc += weight
            if chosen is not None:
                break
        if chosen is None:  # floating round-off at the top end
            chosen = _last_choice(backend, remaining, prev)
        out.append(chosen)
        remaining -= abs(chosen[1])
        prev = chosen[0]
    return tuple(out)


def _syllable_of_length(m: int, l: int, j: int) -> int:
    if m == 0 or 2 * l < m:
        return l if j == 0 else -l
    return l  # the unique syllable of length m/2


def _last_choice(backend: GroupBackend, remaining: int, prev: int) -> Syllable:
    for f in reversed(range(backend.rank)):
        if f == prev:
            continue
        m = backend.orders[f]
        counts = _syllable_length_counts(m, remaining)
        for l in reversed(range(1, remaining + 1)):
            if counts[l] and completions(backend.orders, remaining - l, f):
                return (f, -l if m == 0 or 2 * l < m else l)
    raise RuntimeError("no normal-form word of requested length")


# -- backends -----------------------------------------------------------------


def FreeGroup(rank: int) -> GroupBackend:
    if rank < 1:
        raise ValueError("free group rank must be >= 1")
    return GroupBackend("free", (0,) * rank, f"F{rank}")


def FreeProductOfCyclics(orders: Sequence[int]) -> GroupBackend:
    orders = tuple(int(m) for m in orders)
    name = "*".join("Z" if m == 0 else f"Z{m}" for m in orders)
    return GroupBackend("free_product", orders, name)


def IntegerLine() -> GroupBackend:
    return GroupBackend("integer_line", (0,), "Z")


def backend_label(b: GroupBackend) -> str:
    if b.kind == "free":
        return f"F{b.rank}"
    if b.kind == "integer_line":
        return "Z"
    return "*".join("Z" if m == 0 else f"Z{m}" for m in b.orders)


# -- text rendering -----------------------------------------------------------

_TOKEN = re.compile(r"([a-zA-Z])(\^(-?\d+)|⁻¹)?")


def parse_element(text: str, backend: GroupBackend) -> GroupElement:
    """Parse words like ``"abA"``, ``"a^-1b"``, ``"ab⁻¹"`` or ``"id"``."""
    s = text.replace(" ", "").replace("·", "").replace("*", "")
    if s in ("", "id", "e", "1"):
        return IDENTITY
    pos = 0
    syl: list[Syllable] = []
    while pos < len(s):
        m = _TOKEN.match(s, pos)
        if not m:
            raise MalformedElementError(f"cannot parse {text!r} at position {pos}")
        ch = m.group(1)
        f = ALPHABET.index(ch.lower())
        e = 1 if ch.islower() else -1
        if m.group(2) == "⁻¹":
            e = -e
        elif m.group(3) is not None:
            e *= int(m.group(3))
        backend.check_factor(f)
        syl.append((f, e))
        pos = m.end()
    return GroupElement(backend.normalize_syllables(syl))


def format_element(g: GroupElement) -> str:
    if not g.syllables:
        return "id"
    parts = []
    for f, e in g.syllables:
        ch = ALPHABET[f]
        parts.append((ch if e > 0 else ch.upper()) * abs(e))
    return "".join(parts)


def backend_from_spec(spec: dict) -> GroupBackend:
    kind = spec.get("kind", "free")
    if kind == "free":
        return FreeGroup(int(spec.get("rank", 2)))
    if kind == "free_product":
        return FreeProductOfCyclics(spec["orders"])
    if kind == "integer_line":
        return IntegerLine()
    raise ValueError(f"unknown backend kind {kind!r}")
