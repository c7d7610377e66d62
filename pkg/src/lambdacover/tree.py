"""Binary-word addressing, the tree metric, the Cantor boundary and vertex measures.

A vertex of the infinite binary tree is a finite bit string ``(i_1, ..., i_m)``,
stored bit-packed as ``(depth, word)`` with ``i_1`` the most significant bit.
Boundary points are only ever represented by eventually-zero sequences
``i000...`` (:class:`LeafAddress`).

Edges leaving depth ``m`` have length ``lam**m``; with conductance ``lam**-m``
the effective resistance of the finite tree ``T_n`` is the path length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Union

import numpy as np

MAX_DEPTH = 30

ROOT_TEXT = "∅"


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a tree operation."""


@dataclass(frozen=True, order=True)
class Vertex:
    """Vertex of the binary tree, ``word`` read as ``depth`` bits."""

    depth: int
    word: int = 0

    def __post_init__(self):
        if self.depth < 0:
            raise DomainError(f"negative depth {self.depth}")
        if not 0 <= self.word < (1 << self.depth):
            raise DomainError(f"word {self.word} does not fit in {self.depth} bits")

    @property
    def is_root(self) -> bool:
        return self.depth == 0

    @property
    def parent(self) -> "Vertex":
        if self.depth == 0:
            raise DomainError("the root has no parent")
        return Vertex(self.depth - 1, self.word >> 1)

    def child(self, bit: int) -> "Vertex":
        return Vertex(self.depth + 1, (self.word << 1) | (bit & 1))

    @property
    def children(self) -> tuple["Vertex", "Vertex"]:
        return self.child(0), self.child(1)

    @property
    def bits(self) -> tuple[int, ...]:
        return tuple((self.word >> (self.depth - 1 - k)) & 1 for k in range(self.depth))

    @property
    def heap_index(self) -> int:
        """1-based breadth-first index: root 1, children of ``i`` are ``2i, 2i+1``."""
        return (1 << self.depth) | self.word

    @classmethod
    def from_heap_index(cls, index: int) -> "Vertex":
        if index < 1:
            raise DomainError(f"heap index must be >= 1, got {index}")
        depth = index.bit_length() - 1
        return cls(depth, index - (1 << depth))

    @classmethod
    def from_bits(cls, bits) -> "Vertex":
        word = 0
        for b in bits:
            word = (word << 1) | (int(b) & 1)
        return cls(len(bits), word)

    def ancestor(self, depth: int) -> "Vertex":
        if not 0 <= depth <= self.depth:
            raise DomainError(f"no ancestor at depth {depth} for {self}")
        return Vertex(depth, self.word >> (self.depth - depth))

    def is_ancestor_of(self, other: "Vertex") -> bool:
        return other.depth >= self.depth and other.ancestor(self.depth) == self

    def pad(self, depth: int) -> "Vertex":
        """Append zeros up to ``depth``."""
        if depth < self.depth:
            raise DomainError(f"cannot pad depth {self.depth} down to {depth}")
        return Vertex(depth, self.word << (depth - self.depth))

    @property
    def text(self) -> str:
        if self.depth == 0:
            return ROOT_TEXT
        return format(self.word, f"0{self.depth}b")

    @classmethod
    def parse(cls, text: str) -> "Vertex":
        text = text.strip()
        if text in (ROOT_TEXT, "e", ""):
            return cls(0, 0)
        if set(text) - {"0", "1"}:
            raise DomainError(f"not a vertex address: {text!r}")
        return cls(len(text), int(text, 2))

    def __str__(self):
        return self.text


ROOT = Vertex(0, 0)


@dataclass(frozen=True)
class LeafAddress:
    """The boundary point ``prefix + (0, 0, 0, ...)``.

    Equality and hashing use the point itself, so ``"10|0*"`` and ``"100|0*"``
    compare equal.
    """

    prefix: Vertex

    @cached_property
    def canonical(self) -> Vertex:
        v = self.prefix
        while v.depth > 0 and v.word & 1 == 0:
            v = v.parent
        return v

    def __eq__(self, other):
        if not isinstance(other, LeafAddress):
            return NotImplemented
        return self.canonical == other.canonical

    def __hash__(self):
        return hash(("leaf", self.canonical.depth, self.canonical.word))

    def padded(self, depth: int) -> Vertex:
        return self.canonical.pad(depth)

    def digit(self, k: int) -> int:
        """k-th digit (1-based) of the infinite sequence."""
        if k <= self.prefix.depth:
            return (self.prefix.word >> (self.prefix.depth - k)) & 1
        return 0

    @property
    def text(self) -> str:
        body = "" if self.prefix.depth == 0 else self.prefix.text
        return f"{body}|0*"

    @classmethod
    def parse(cls, text: str) -> "LeafAddress":
        if not text.endswith("|0*"):
            raise DomainError(f"not a leaf address: {text!r}")
        return cls(Vertex.parse(text[:-3]))

    def __str__(self):
        return self.text


Point = Union[Vertex, LeafAddress]


def parse_point(text: str) -> Point:
    if text.endswith("|0*"):
        return LeafAddress.parse(text)
    return Vertex.parse(text)


@dataclass(frozen=True)
class Params:
    """Bias ``lam`` and tree depth ``n``."""

    lam: float
    n: int
    max_depth: int = MAX_DEPTH

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise DomainError(f"lambda must be finite and positive, got {self.lam}")
        if not 0 <= self.n <= self.max_depth:
            raise DomainError(f"depth must lie in [0, {self.max_depth}], got {self.n}")

    @cached_property
    def powers(self) -> np.ndarray:
        """``lam**m`` for ``m = 0..max(n, max_depth)+1`` by repeated multiplication."""
        size = max(self.n, self.max_depth) + 2
        out = np.empty(size)
        out[0] = 1.0
        for m in range(1, size):
            out[m] = out[m - 1] * self.lam
        return out

    @cached_property
    def tail_sums(self) -> np.ndarray:
        """``S[m] = sum_{j<m} lam**j``, so a path from depth a down to b has length S[b]-S[a]."""
        return np.concatenate(([0.0], np.cumsum(self.powers)))

    @property
    def num_vertices(self) -> int:
        return (1 << (self.n + 1)) - 1

    @property
    def is_subcritical(self) -> bool:
        return self.lam < 1


def vertices(n: int) -> Iterator[Vertex]:
    """All vertices of ``T_n`` in breadth-first (heap) order."""
    for m in range(n + 1):
        for w in range(1 << m):
            yield Vertex(m, w)


def level(m: int) -> list[Vertex]:
    return [Vertex(m, w) for w in range(1 << m)]


def lca(x: Point, y: Point) -> Vertex:
    """Deepest common ancestor; for boundary points, of the infinite sequences."""
    if isinstance(x, LeafAddress) or isinstance(y, LeafAddress):
        return _boundary_lca(x, y)
    if x.depth > y.depth:
        x = x.ancestor(y.depth)
    elif y.depth > x.depth:
        y = y.ancestor(x.depth)
    diff = x.word ^ y.word
    up = diff.bit_length()
    return Vertex(x.depth - up, x.word >> up)


def _boundary_lca(x: Point, y: Point) -> Vertex:
    xv = x.canonical if isinstance(x, LeafAddress) else x
    yv = y.canonical if isinstance(y, LeafAddress) else y
    depth = max(xv.depth, yv.depth)
    # only the boundary side may be extended by its zero tail
    if isinstance(x, LeafAddress):
        xv = xv.pad(depth)
    if isinstance(y, LeafAddress):
        yv = yv.pad(depth)
    return lca(xv, yv)


def _depth_to(p: Params, top: int, target: Point) -> float:
    """Length of the geodesic from the ancestor at depth ``top`` down to ``target``."""
    if isinstance(target, LeafAddress):
        if p.lam >= 1:
            raise DomainError("boundary points are at infinite distance unless lambda < 1")
        return p.lam**top / (1.0 - p.lam)
    return float(p.tail_sums[target.depth] - p.tail_sums[top])


def metric_d(x: Point, y: Point, p: Params) -> float:
    """Path metric with edge length ``lam**m`` below depth ``m``."""
    if x == y:
        return 0.0
    a = lca(x, y)
    return _depth_to(p, a.depth, x) + _depth_to(p, a.depth, y)


def boundary_distance_bound(x: Vertex, p: Params) -> float:
    """``lam**n / (1 - lam)`` bounds the distance from ``x`` to anything below it."""
    if p.lam >= 1:
        return math.inf
    return p.lam**x.depth / (1.0 - p.lam)


def mu_n_vertex(x: Vertex, p: Params) -> float:
    """Sum of conductances incident to ``x`` in ``T_n``."""
    n, m = p.n, x.depth
    if m > n:
        raise DomainError(f"vertex at depth {m} is not in T_{n}")
    if n == 0:
        return 0.0
    if m == 0:
        return 2.0
    if m < n:
        return 1.0 / p.powers[m - 1] + 2.0 / p.powers[m]
    return 1.0 / p.powers[n - 1]


def mu_n_levels(p: Params) -> np.ndarray:
    """Per-level value of ``mu_n`` (every vertex of a level carries the same mass)."""
    return np.array([mu_n_vertex(Vertex(m, 0), p) for m in range(p.n + 1)])


def b_n(p: Params) -> float:
    """Total conductance ``mu_n(T_n)``."""
    lam, n = p.lam, p.n
    if n == 0:
        return 0.0
    if lam == 2.0:
        return 4.0 * n
    return 4.0 * lam / (2.0 - lam) * ((2.0 / lam) ** n - 1.0)


def b_n_by_sum(p: Params) -> float:
    """``b_n`` as the explicit level sum; valid for every ``lam``."""
    return float(sum((1 << m) * v for m, v in enumerate(mu_n_levels(p))))


def bar_low_level(n: int, log_base: float = math.e) -> int:
    """Top level ``max(0, n - ceil(log n))`` of the window kept by the traced chain."""
    if n <= 1:
        return 0
    return max(0, n - math.ceil(math.log(n) / math.log(log_base) - 1e-12))


def bar_set(n: int, log_base: float = math.e) -> list[Vertex]:
    """Vertices of levels ``bar_low_level(n)`` through ``n``."""
    return [v for m in range(bar_low_level(n, log_base), n + 1) for v in level(m)]


def mu_sigma_cylinder(i: Vertex) -> float:
    return 2.0 ** (-i.depth)


def mu_T_edge_mass(m: int, lam: float) -> float:
    """Mass of one edge leaving depth ``m`` under the normalized length measure."""
    return (1.0 / lam - 1.0) * (2.0 / lam) ** (-m - 1)


def cantor_embed(i: Point) -> Union[float, tuple[float, float]]:
    """Image in the middle-thirds Cantor set.

    A :class:`LeafAddress` maps to the point with ternary digits ``2*i_k``; a
    :class:`Vertex` prefix maps to the closed interval covering its cylinder.
    """
    v = i.canonical if isinstance(i, LeafAddress) else i
    left = 0.0
    scale = 1.0
    for b in v.bits:
        scale /= 3.0
        left += 2.0 * b * scale
    if isinstance(i, LeafAddress):
        return left
    return left, left + scale


def covering_exponent(lam: float) -> float:
    return -math.log(2.0 / lam) / math.log(lam)


def covering_bound(eps: float, p: Params) -> int:
    """Explicit count ``2**n (lam**-n + 2)`` of ``eps``-balls covering the tree.

    ``n`` is the first level whose subtree radius bound ``lam**n/(1-lam)``
    is at most ``eps``.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    lam = p.lam
    if lam >= 1:
        raise DomainError("the covering bound needs lambda < 1")
    n = 0
    radius = 1.0 / (1.0 - lam)
    while radius > eps:
        n += 1
        radius *= lam
    return int(math.ceil(2.0**n * (lam**-n + 2.0) - 1e-9))


# vectorised helpers on heap indices -------------------------------------------------


def heap_depths(n: int) -> np.ndarray:
    """Depth of each heap index ``1..2**(n+1)-1`` (entry 0 unused, set to -1)."""
    d = np.full(1 << (n + 1), -1, dtype=np.int64)
    for m in range(n + 1):
        d[1 << m: 1 << (m + 1)] = m
    return d

