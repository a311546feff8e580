"""Trajectories, cocycles, defects and the dyadic decomposition.

Positions of a trajectory live in a hash-consed syllable trie: every prefix of
a normal form is a unique node, so ``Z_j`` costs one node per step and the
distance between two positions costs O(their distance), not O(word length).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import rng as rngmod
from .groups import IDENTITY, GroupBackend, GroupElement, Syllable, push_syllable
from .measures import DrivingMeasure, FiniteTable


class Node:
    __slots__ = ("parent", "f", "e", "depth", "length", "children")

    def __init__(self, parent: "Node | None", f: int, e: int):
        self.parent = parent
        self.f = f
        self.e = e
        self.children = None
        if parent is None:
            self.depth = 0
            self.length = 0
        else:
            self.depth = parent.depth + 1
            self.length = parent.length + abs(e)

    def child(self, f: int, e: int) -> "Node":
        ch = self.children
        if ch is None:
            ch = self.children = {}
        key = (f, e)
        node = ch.get(key)
        if node is None:
            node = ch[key] = Node(self, f, e)
        return node

    def syllables(self) -> tuple[Syllable, ...]:
        out = []
        node = self
        while node.parent is not None:
            out.append((node.f, node.e))
            node = node.parent
        return tuple(reversed(out))


def new_root() -> Node:
    return Node(None, -1, 0)


def right_multiply(node: Node, word: Sequence[Syllable], orders: Sequence[int]) -> Node:
    for f, e in word:
        if node.f == f:
            m = orders[f]
            e += node.e
            node = node.parent
        else:
            m = orders[f]
        if m:
            e %= m
            if 2 * e > m:
                e -= m
        if e:
            node = node.child(f, e)
    return node


def node_at(root: Node, syllables: Sequence[Syllable]) -> Node:
    node = root
    for f, e in syllables:
        node = node.child(f, e)
    return node


def _split(x: Node, y: Node):
    """Climb to the divergence point; returns (a, b) children of the LCA, or None."""
    a, b = x, y
    while a.depth > b.depth:
        a = a.parent
    while b.depth > a.depth:
        b = b.parent
    if a is b:
        return None
    while a.parent is not b.parent:
        a = a.parent
        b = b.parent
    return a, b


def node_distance(x: Node, y: Node, orders: Sequence[int]) -> int:
    if x is y:
        return 0
    split = _split(x, y)
    if split is None:
        return abs(x.length - y.length)
    a, b = split
    if a.f == b.f:
        m = orders[a.f]
        e = b.e - a.e
        if m:
            e %= m
            if 2 * e > m:
                e -= m
        return (x.length - a.length) + (y.length - b.length) + abs(e)
    base = a.parent.length
    return x.length + y.length - 2 * base


def node_segment(x: Node, y: Node, orders: Sequence[int]) -> tuple[Syllable, ...]:
    """Normal form of x^-1 y."""
    if x is y:
        return ()
    split = _split(x, y)
    if split is None:
        if x.depth >= y.depth:
            up, stop, invert = x, y, True
        else:
            up, stop, invert = y, x, False
        part = []
        while up is not stop:
            part.append((up.f, up.e))
            up = up.parent
        if invert:
            return tuple((f, _neg(f, e, orders)) for f, e in part)
        return tuple(reversed(part))
    a, b = split
    left = []
    node = x
    while node is not a:
        left.append((node.f, _neg(node.f, node.e, orders)))
        node = node.parent
    right = []
    node = y
    while node is not b:
        right.append((node.f, node.e))
        node = node.parent
    out = left
    if a.f == b.f:
        e = b.e - a.e
        m = orders[a.f]
        if m:
            e %= m
            if 2 * e > m:
                e -= m
        if e:
            out.append((a.f, e))
    else:
        out.append((a.f, _neg(a.f, a.e, orders)))
        out.append((b.f, b.e))
    out.extend(reversed(right))
    return tuple(out)


def _neg(f: int, e: int, orders: Sequence[int]) -> int:
    m = orders[f]
    e = -e
    if m:
        e %= m
        if 2 * e > m:
            e -= m
    return e


# -- trajectories ------------------------------------------------------------------------


class Trajectory:
    """One random-walk path: increments X_1..X_n and positions Z_0..Z_n."""

    def __init__(
        self,
        backend: GroupBackend,
        increments: Sequence[tuple[Syllable, ...]],
        seed: int | None = None,
        index: int | None = None,
        root: Node | None = None,
        nodes: list[Node] | None = None,
        indices: np.ndarray | None = None,
    ):
        self.backend = backend
        self.seed = seed
        self.index = index
        self.increments = list(increments)
        self.indices = indices
        self.root = root if root is not None else new_root()
        orders = backend.orders
        if nodes is None:
            nodes = [self.root]
            node = self.root
            for w in self.increments:
                node = right_multiply(node, w, orders)
                nodes.append(node)
        self.nodes = nodes

    @property
    def n(self) -> int:
        return len(self.increments)

    def __len__(self) -> int:
        return self.n

    def increment(self, j: int) -> GroupElement:
        """X_j for 1 <= j <= n."""
        if not 1 <= j <= self.n:
            raise IndexError(f"increment index {j} outside 1..{self.n}")
        return GroupElement(tuple(self.increments[j - 1]))

    def position(self, j: int) -> GroupElement:
        return GroupElement(self.nodes[j].syllables())

    def length_at(self, j: int) -> int:
        return self.nodes[j].length

    def distance(self, i: int, j: int) -> int:
        return node_distance(self.nodes[i], self.nodes[j], self.backend.orders)

    def segment(self, i: int, j: int) -> GroupElement:
        """Z_i^-1 Z_j, i.e. Z_{j-i} of the shifted path."""
        return GroupElement(node_segment(self.nodes[i], self.nodes[j], self.backend.orders))

    def shift(self, s: int) -> "Trajectory":
        """The trajectory theta_s: increments X_{s+1}, X_{s+2}, ..."""
        if not 0 <= s <= self.n:
            raise IndexError("shift beyond trajectory length")
        idx = None if self.indices is None else self.indices[s:]
        return Trajectory(self.backend, self.increments[s:], self.seed, self.index, indices=idx)

    def check_consistency(self) -> None:
        b = self.backend
        for j in range(1, self.n + 1):
            expect = b.multiply(self.position(j - 1), self.increment(j))
            if expect != self.position(j):
                raise AssertionError(f"Z_{j} != Z_{j-1} X_{j}")

    def dump_lines(self, cocycle: "Cocycle | None" = None) -> list[str]:
        """Debug dump, one line per step: ``j X_j Z_j Q_j``."""
        lines = []
        q = cocycle.values(self) if cocycle is not None else None
        for j in range(self.n + 1):
            x = "-" if j == 0 else str(self.increment(j))
            qv = "-" if q is None else repr(float(q[j]))
            lines.append(f"{j} {x} {self.position(j)} {qv}")
        return lines


def generate(measure: DrivingMeasure, n: int, index: int, master_seed: int) -> Trajectory:
    """Draw the trajectory keyed by (master_seed, index)."""
    if n < 0:
        raise ValueError("trajectory length must be non-negative")
    rng = rngmod.substream(master_seed, index, rngmod.WALK)
    if isinstance(measure, FiniteTable):
        idx = measure.sample_indices(rng, n)
        syl = measure._syl
        return Trajectory(measure.backend, [syl[i] for i in idx], master_seed, index, indices=idx)
    return Trajectory(measure.backend, measure.sample_syllables(rng, n), master_seed, index)


def from_uniforms(measure: FiniteTable, u: np.ndarray, seed=None, index=None) -> Trajectory:
    """Inverse-CDF path from given uniforms; equal uniforms couple two measures."""
    idx = measure.indices_from_uniforms(u)
    syl = measure._syl
    return Trajectory(measure.backend, [syl[i] for i in idx], seed, index, indices=idx)


def from_elements(backend: GroupBackend, increments: Sequence[GroupElement | str]) -> Trajectory:
    words = []
    for x in increments:
        g = backend.element(x) if isinstance(x, str) else x
        words.append(g.syllables)
    return Trajectory(backend, words)


def replace_increment(t: Trajectory, k: int, x_new: GroupElement) -> Trajectory:
    """The path with X_k replaced by ``x_new``; positions before k are shared."""
    if not 1 <= k <= t.n:
        raise IndexError(f"replacement index {k} outside 1..{t.n}")
    incs = t.increments.copy()
    incs[k - 1] = x_new.syllables
    orders = t.backend.orders
    nodes = t.nodes[:k]
    node = nodes[-1]
    for w in incs[k - 1 :]:
        node = right_multiply(node, w, orders)
        nodes.append(node)
    return Trajectory(t.backend, incs, t.seed, t.index, root=t.root, nodes=nodes)


# -- cocycles ------------------------------------------------------------------------------


class Cocycle:
    """A defective adapted cocycle Q_n, evaluated on trajectory prefixes.

    ``shifted(t, s, m)`` is Q_m o theta_s, computed without building the
    shifted trajectory.
    """

    kind = "cocycle"
    name = "cocycle"
    is_length = False
    is_end_point = False

    def value(self, t: Trajectory, n: int) -> float:
        raise NotImplementedError

    def shifted(self, t: Trajectory, s: int, m: int) -> float:
        raise NotImplementedError

    def values(self, t: Trajectory) -> np.ndarray:
        return np.array([self.value(t, j) for j in range(t.n + 1)], dtype=float)


class LengthCocycle(Cocycle):
    """Q_n = d(id, Z_n) in the word metric."""

    kind = "length"
    name = "length"
    is_length = True
    is_end_point = True

    def value(self, t, n):
        return t.nodes[n].length

    def shifted(self, t, s, m):
        return t.distance(s, s + m)

    def values(self, t):
        return np.array([node.length for node in t.nodes], dtype=float)

    def q(self, g: GroupElement) -> float:
        return g.length


class AdditiveSum(Cocycle):
    """Q_n = sum_{j<=n} f(X_j); its defect vanishes identically."""

    kind = "additive"
    is_end_point = False

    def __init__(self, f: Callable[[GroupElement], float], name: str = "additive"):
        self.f = f
        self.name = name
        self._cache_key = None
        self._prefix = None

    def _prefix_sums(self, t: Trajectory) -> list[float]:
        if self._cache_key is not t:
            vals = [0.0]
            acc = 0.0
            for w in t.increments:
                acc += self.f(GroupElement(tuple(w)))
                vals.append(acc)
            self._cache_key = t
            self._prefix = vals
        return self._prefix

    def __getstate__(self):
        return {"f": self.f, "name": self.name, "_cache_key": None, "_prefix": None}

    def value(self, t, n):
        return self._prefix_sums(t)[n]

    def shifted(self, t, s, m):
        p = self._prefix_sums(t)
        return p[s + m] - p[s]

    def values(self, t):
        return np.array(self._prefix_sums(t), dtype=float)


class EndPoint(Cocycle):
    """Q_n = q(Z_n) for a function q on the group."""

    kind = "end_point"
    is_end_point = True

    def __init__(self, q: Callable[[GroupElement], float], name: str = "end_point"):
        self.q = q
        self.name = name

    def value(self, t, n):
        if n == 0:
            return 0.0
        return self.q(t.position(n))

    def shifted(self, t, s, m):
        if m == 0:
            return 0.0
        return self.q(t.segment(s, s + m))


# picklable helper functions for common cocycles


@dataclass(frozen=True)
class TableFunction:
    """f(g) from a lookup table, ``default`` off the table."""

    values: tuple[tuple[GroupElement, float], ...]
    default: float = 0.0

    def __call__(self, g: GroupElement) -> float:
        for k, v in self.values:
            if k == g:
                return v
        return self.default


@dataclass(frozen=True)
class FirstLetterSign:
    """+1 if the word starts with a positive generator, -1 if negative, 0 for id."""

    def __call__(self, g: GroupElement) -> float:
        if not g.syllables:
            return 0.0
        return 1.0 if g.syllables[0][1] > 0 else -1.0


@dataclass(frozen=True)
class ZeroFunction:
    def __call__(self, g: GroupElement) -> float:
        return 0.0


@dataclass(frozen=True)
class BrooksCounting:
    """Occurrences of ``pattern`` minus occurrences of its inverse in the reduced word.

    With pattern ``ab`` on F2 this is the classical Brooks counting
    quasimorphism (count of "ab" minus count of "b^-1 a^-1").
    """

    pattern: tuple[tuple[int, int], ...] = ((0, 1), (1, 1))

    def __call__(self, g: GroupElement) -> float:
        letters = [(x.index, x.sign) for x in g.letters]
        pat = list(self.pattern)
        inv = [(f, -s) for f, s in reversed(pat)]
        k = len(pat)
        count = 0
        for i in range(len(letters) - k + 1):
            window = letters[i : i + k]
            if window == pat:
                count += 1
            if window == inv:
                count -= 1
        return float(count)


def zero_cocycle() -> AdditiveSum:
    return AdditiveSum(ZeroFunction(), "zero")


def brooks_cocycle() -> EndPoint:
    return EndPoint(BrooksCounting(), "brooks_ab")


# -- defects ------------------------------------------------------------------------------


@dataclass(frozen=True)
class DefectSample:
    n: int
    m: int
    value: float


def defect(c: Cocycle, t: Trajectory, n: int, m: int) -> DefectSample:
    """Psi_{n,m} = Q_{n+m} - Q_n - Q_m o theta_n."""
    if n < 0 or m < 0 or n + m > t.n:
        raise IndexError(f"defect indices ({n}, {m}) exceed trajectory length {t.n}")
    if m == 0 or n == 0:
        return DefectSample(n, m, 0.0)
    v = c.value(t, n + m) - c.value(t, n) - c.shifted(t, n, m)
    return DefectSample(n, m, v)


def shifted_defect(c: Cocycle, t: Trajectory, s: int, a: int, b: int) -> float:
    """Psi_{a,b} o theta_s."""
    if a == 0 or b == 0:
        return 0.0
    return c.shifted(t, s, a + b) - c.shifted(t, s, a) - c.shifted(t, s + a, b)


def gromov_at(t: Trajectory, n: int, m: int) -> int:
    """Twice (id, Z_{n+m})_{Z_n}, exact."""
    return t.length_at(n) + t.distance(n, n + m) - t.length_at(n + m)


# -- dyadic decomposition ------------------------------------------------------------------


@dataclass
class Gamma:
    a: int
    b: int
    shift: int
    value: float


@dataclass
class DyadicDecomposition:
    n: int
    M: int
    target: float
    gammas: list[Gamma]
    base: list[float]
    layers: dict[int, list[float]]
    blocks: list[float]
    remainder_terms: int
    remainder: float
    full_reconstruction: float
    block_reconstruction: float
    residual_full: float = field(init=False)
    residual: float = field(init=False)

    def __post_init__(self):
        self.residual_full = abs(self.full_reconstruction - self.target)
        self.residual = abs(self.block_reconstruction - self.target)

    @property
    def top_level(self) -> int:
        return self.n.bit_length() - 1


def binary_parts(n: int) -> list[int]:
    """Exponents of the binary expansion of n, largest first."""
    return [i for i in reversed(range(n.bit_length())) if n >> i & 1]


@dataclass
class _DyadicParts:
    n: int
    target: float
    gammas: list[Gamma]
    base: list[float]
    layers: dict[int, list[float]]


def _dyadic_parts(c: Cocycle, t: Trajectory, n: int) -> _DyadicParts:
    if n < 1 or n > t.n:
        raise IndexError(f"decomposition length {n} outside 1..{t.n}")
    top = n.bit_length() - 1
    gammas = []
    s = 0
    for l in binary_parts(n)[:-1]:
        size = 1 << l
        rest = n - s - size
        gammas.append(Gamma(size, rest, s, shifted_defect(c, t, s, size, rest)))
        s += size
    base = [c.shifted(t, j, 1) for j in range(n)]
    layers: dict[int, list[float]] = {}
    for i in range(1, top + 1):
        half = 1 << (i - 1)
        layers[i] = [shifted_defect(c, t, j << i, half, half) for j in range(n >> i)]
    return _DyadicParts(n, c.value(t, n), gammas, base, layers)


def _assemble(c: Cocycle, t: Trajectory, parts: _DyadicParts, M: int) -> DyadicDecomposition:
    n = parts.n
    top = n.bit_length() - 1
    if not 0 <= M <= top:
        raise IndexError(f"block exponent {M} outside 0..{top}")
    J = n >> M
    cut = J << M
    blocks = [c.shifted(t, j << M, 1 << M) for j in range(J)]
    rem = parts.base[cut:]
    for i in range(1, M + 1):
        rem.extend(parts.layers[i][cut >> i :])
    gsum = math.fsum(g.value for g in parts.gammas)
    full = math.fsum([gsum, math.fsum(parts.base)] + [math.fsum(v) for v in parts.layers.values()])
    remainder = math.fsum(rem)
    upper = [math.fsum(parts.layers[i]) for i in range(M + 1, top + 1)]
    block_recon = math.fsum([gsum, math.fsum(blocks), remainder] + upper)
    return DyadicDecomposition(
        n=n,
        M=M,
        target=parts.target,
        gammas=parts.gammas,
        base=parts.base,
        layers=parts.layers,
        blocks=blocks,
        remainder_terms=len(rem),
        remainder=remainder,
        full_reconstruction=full,
        block_reconstruction=block_recon,
    )


def dyadic_decompose(c: Cocycle, t: Trajectory, M: int, n: int | None = None) -> DyadicDecomposition:
    """Decompose Q_n into boundary terms, single steps, dyadic defect layers and blocks.

    Boundary terms come from splitting n = 2^{l_1} + 2^{l_2} + ... (l_1 > l_2 > ...)
    left to right: gamma_j = Psi_{2^{l_j}, n - s_j} o theta_{s_{j-1}} with
    s_j the partial sums.  Blocks of length 2^M replace the lowest M layers;
    the terms those blocks do not cover form the remainder R_M.
    """
    n = t.n if n is None else n
    parts = _dyadic_parts(c, t, n)
    return _assemble(c, t, parts, M)


def dyadic_sweep(c: Cocycle, t: Trajectory, n: int) -> list[DyadicDecomposition]:
    """Decompositions of Q_n for every valid block exponent, sharing the M-independent terms."""
    parts = _dyadic_parts(c, t, n)
    return [_assemble(c, t, parts, M) for M in range(n.bit_length())]
