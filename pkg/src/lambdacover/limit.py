"""The boundary chain, the bar chain and nested cover times on the Cantor boundary.

The boundary chain lives on the ``2**n`` points ``i000...`` with ``i`` a
depth-``n`` word, each of mass ``2**-n``. Its conductances come from tracing
the tree network onto those points. By the symmetry of the tree, the rate of
a jump from ``x`` to ``y`` depends only on the depth ``j`` of their common
ancestor, so a cover run only needs the ``n`` level rates ``q_j``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from .network import Network, NetworkError, build_tree_network, trace_network
from .streams import kernel_state, map_samples, numpy_rng
from .tree import DomainError, LeafAddress, Params, Vertex, b_n, bar_low_level, bar_set, level

TILDE_CAP = 12
LEVEL_SYMMETRY_RTOL = 1e-9


# networks --------------------------------------------------------------------------------


def tree_with_tails(p: Params) -> Network:
    """``T_n`` plus a resistor of ``lam**n/(1-lam)`` from each leaf to its boundary point.

    The extra resistor stands in for the whole subtree below the leaf, whose
    boundary points all sit at that distance.
    """
    if p.lam >= 1:
        raise DomainError("boundary points are only at finite distance when lambda < 1")
    base = build_tree_network(p)
    nv = len(base)
    leaves = level(p.n)
    tails = [LeafAddress(v) for v in leaves]
    size = nv + len(tails)
    g_tail = (1.0 - p.lam) / p.powers[p.n]
    rows = np.arange(nv - len(leaves), nv)
    cols = np.arange(nv, size)
    base_coo = base.csr.tocoo()
    r = np.concatenate([base_coo.row, rows, cols])
    c = np.concatenate([base_coo.col, cols, rows])
    d = np.concatenate([base_coo.data, np.full(len(tails), g_tail), np.full(len(tails), g_tail)])
    mat = sp.csr_matrix((d, (r, c)), shape=(size, size))
    measure = np.asarray(mat.sum(axis=1)).ravel()
    return Network(base.vertices + tuple(tails), mat, measure, label=f"T_{p.n}+tails(lam={p.lam!r})")


def build_tilde_chain(p: Params, boundary_tails: bool = True, cap: int = TILDE_CAP) -> Network:
    """The boundary chain on ``2**n`` states with mass ``2**-n`` each.

    With ``boundary_tails`` the states are the boundary points ``i000...`` and
    resistances equal the boundary distances ``2 lam**j/(1-lam)``. Without,
    the states are the leaves of ``T_n`` themselves (trace of ``T_n`` onto its
    leaves), which also works for ``lam >= 1``.
    """
    if p.n > cap:
        raise NetworkError(f"boundary chain is capped at depth {cap}, got {p.n}")
    if p.n == 0:
        v = LeafAddress(Vertex(0, 0)) if boundary_tails else Vertex(0, 0)
        return Network((v,), np.zeros((1, 1)), np.ones(1), label="tilde_0")
    mass = np.full(1 << p.n, 2.0 ** -p.n)
    if boundary_tails:
        net = tree_with_tails(p)
        keep = [LeafAddress(v) for v in level(p.n)]
    else:
        net = build_tree_network(p)
        keep = level(p.n)
    out = trace_network(net, keep, new_measure=mass)
    return Network(out.vertices, out.conductance, out.measure, label=f"tilde_{p.n}(lam={p.lam!r})")


def bar_network(p: Params, log_base: float = math.e) -> Network:
    """Trace of ``T_n`` onto levels ``bar_low_level(n)..n`` with ``mu_n`` restricted."""
    net = build_tree_network(p)
    keep = bar_set(p.n, log_base)
    return trace_network(net, keep)


def level_rates(net: Network, n: int) -> np.ndarray:
    """Total jump rate ``q_j`` from a state to the states with common ancestor at depth ``j``.

    Reads the row of the all-zeros state and checks that every state sees the
    same conductance profile.
    """
    if len(net) != 1 << n:
        raise NetworkError("expected one state per depth-n word")
    dense = net.dense()
    words = np.array([_word(v, n) for v in net.vertices])
    order = np.argsort(words)
    dense = dense[np.ix_(order, order)]
    mass = net.measure[order]
    q = np.zeros(n)
    for j in range(n):
        lo, hi = 1 << (n - j - 1), 1 << (n - j)
        block = dense[0, lo:hi]
        q[j] = block.sum() / mass[0]
    # every state must see the same profile
    idx = np.arange(1 << n)
    for x in np.unique(np.linspace(0, (1 << n) - 1, 9).astype(int)):
        depth = n - 1 - np.floor(np.log2(np.maximum(idx ^ x, 1))).astype(int)
        depth[x] = -1
        prof = np.array([dense[x, depth == j].sum() for j in range(n)]) / mass[x]
        if not np.allclose(prof, q, rtol=LEVEL_SYMMETRY_RTOL, atol=0):
            raise NetworkError("boundary chain is not level-symmetric")
    return q


def _word(v, n: int) -> int:
    if isinstance(v, LeafAddress):
        return v.padded(n).word
    if v.depth != n:
        raise NetworkError(f"state {v} is not at depth {n}")
    return v.word


# samplers --------------------------------------------------------------------------------


@dataclass(frozen=True)
class LadderSpec:
    """Top depth, ladder levels and sampling budget for nested boundary cover times."""

    lam: float
    n: int
    levels: tuple = ()
    samples: int = 1000
    seed: int = 0
    boundary_tails: bool = True
    uniform_start: bool = False

    def __post_init__(self):
        levels = self.levels or default_levels(self.n)
        levels = tuple(sorted(set(int(m) for m in levels)))
        if levels[0] < 0 or levels[-1] > self.n:
            raise DomainError(f"ladder levels must lie in [0, {self.n}]")
        object.__setattr__(self, "levels", levels)

    @property
    def params(self) -> Params:
        return Params(self.lam, self.n)


def default_levels(n: int) -> tuple:
    levels = tuple(m for m in range(4, n + 1) if m % 2 == 0)
    return levels or (n,)


@dataclass(frozen=True, eq=False)
class TildeEngine:
    n: int
    rates: np.ndarray
    level_cum: np.ndarray

    @property
    def holding_rate(self) -> float:
        return float(self.level_cum[-1]) if self.n > 0 else 0.0


_TILDE_CACHE: dict = {}


def tilde_engine(p: Params, boundary_tails: bool = True) -> TildeEngine:
    key = (p.lam, p.n, boundary_tails)
    if key not in _TILDE_CACHE:
        if p.n == 0:
            _TILDE_CACHE[key] = TildeEngine(0, np.zeros(0), np.zeros(0))
        else:
            q = level_rates(build_tilde_chain(p, boundary_tails), p.n)
            _TILDE_CACHE[key] = TildeEngine(p.n, q, np.cumsum(q))
    return _TILDE_CACHE[key]


def _tilde_path(eng: TildeEngine, seed: int, index: int, uniform_start: bool):
    n = eng.n
    ladder = np.full(n + 1, -1, dtype=np.int64)
    if n == 0:
        return 0, np.zeros(1, dtype=np.int64), 0
    state = kernel_state(seed, index)
    start = 0
    if uniform_start:
        start = int(numpy_rng(seed, index, stream=2).integers(1 << n))
    total = K.leaf_chain_cover(n, eng.level_cum, start, ladder, state)
    return total, ladder, start


def sample_tilde_cover(p: Params, samples: int, seed: int, workers: int = 1, first_index: int = 0,
                       boundary_tails: bool = True, uniform_start: bool = False,
                       with_jumps: bool = False):
    """Cover times of the boundary chain (and their jump counts with ``with_jumps``)."""
    spec = LadderSpec(p.lam, p.n, (p.n,), samples, seed, boundary_tails, uniform_start)
    times, jumps = _ladder_runs(spec, workers, first_index)
    return (times[:, -1], jumps[:, -1]) if with_jumps else times[:, -1]


def sample_limit_cover(spec: LadderSpec, workers: int = 1, first_index: int = 0) -> np.ndarray:
    """Nested cover times, shape ``(samples, len(levels))``.

    Column ``k`` is the first time every state ``i000...`` with ``i`` of depth
    ``levels[k]`` has been visited by the depth-``n`` boundary chain.
    """
    return _ladder_runs(spec, workers, first_index)[0]


def _ladder_runs(spec: LadderSpec, workers: int, first_index: int):
    eng = tilde_engine(spec.params, spec.boundary_tails)
    levels = np.asarray(spec.levels)
    rate = eng.holding_rate

    def one(i):
        _, ladder, _ = _tilde_path(eng, spec.seed, i, spec.uniform_start)
        jumps = ladder[levels]
        if np.any(jumps < 0):
            raise RuntimeError("ladder level never completed")
        if np.any(np.diff(jumps) < 0):
            raise AssertionError("nested cover jump counts must be nondecreasing")
        rng = numpy_rng(spec.seed, i)
        inc = np.diff(np.concatenate(([0], jumps)))
        gam = np.array([rng.gamma(k) if k > 0 else 0.0 for k in inc])
        times = np.cumsum(gam) / rate if rate > 0 else np.zeros(len(levels))
        return times, jumps

    rows = map_samples(one, range(first_index, first_index + spec.samples), workers)
    times = np.array([r[0] for r in rows], dtype=float).reshape(spec.samples, len(levels))
    jumps = np.array([r[1] for r in rows], dtype=np.int64).reshape(spec.samples, len(levels))
    if np.any(np.diff(times, axis=1) < 0):
        raise AssertionError("nested cover times must be nondecreasing along each path")
    return times, jumps


# rescaling and sample sets ---------------------------------------------------------------


def theorem_constant(p: Params) -> float:
    """``(2 - lam)/(4 lam) * (lam/2)**n``."""
    return (2.0 - p.lam) / (4.0 * p.lam) * (p.lam / 2.0) ** p.n


@dataclass(frozen=True)
class RescaledSample:
    raw: float
    rescaled: float
    family: str
    n: int
    lam: float
    by_total_conductance: float


def rescale_cover(tau: float, family: str, p: Params) -> RescaledSample:
    """Put a cover time on the boundary time scale.

    Tree chains (``raw`` and ``bar``) are multiplied by the asymptotic constant
    ``(2-lam)/(4 lam) (lam/2)**n``; ``by_total_conductance`` uses ``1/b_n``
    instead. Boundary-chain (``tilde``) times are returned unchanged.
    """
    if family not in ("raw", "bar", "tilde"):
        raise ValueError(f"unknown family {family!r}")
    if not tau > 0 and not (tau == 0 and p.n == 0):
        raise DomainError("cover time must be positive")
    if family == "tilde":
        return RescaledSample(tau, tau, family, p.n, p.lam, tau)
    bn = b_n(p)
    alt = tau / bn if bn > 0 else math.nan
    return RescaledSample(tau, theorem_constant(p) * tau, family, p.n, p.lam, alt)


def rescale_array(taus: np.ndarray, family: str, p: Params, normalization: str = "theorem") -> np.ndarray:
    taus = np.asarray(taus, dtype=float)
    if family == "tilde":
        return taus.copy()
    if normalization == "theorem":
        return theorem_constant(p) * taus
    if normalization == "bn":
        return taus / b_n(p)
    raise ValueError(f"unknown normalization {normalization!r}")


SAMPLE_COLUMNS = ("family", "lambda", "n", "level", "seed", "index", "tau", "rescaled")


@dataclass
class CoverSampleSet:
    """Cover-time samples with their provenance."""

    family: str
    lam: float
    n: int
    seed: int
    tau: np.ndarray
    rescaled: np.ndarray
    level: Optional[int] = None
    index: Optional[np.ndarray] = None

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.rescaled = np.asarray(self.rescaled, dtype=float)
        if self.index is None:
            self.index = np.arange(len(self.tau))
        if len(self.tau) != len(self.rescaled):
            raise ValueError("tau and rescaled differ in length")

    def __len__(self):
        return len(self.tau)

    @property
    def key(self) -> tuple:
        return (self.family, self.lam, self.n, self.level, self.seed)

    def merge(self, other: "CoverSampleSet") -> "CoverSampleSet":
        """Union of two batches of the same experiment, ordered by sample index."""
        if other.key != self.key:
            raise ValueError("cannot merge sample sets from different experiments")
        idx = np.concatenate([self.index, other.index])
        if len(np.unique(idx)) != len(idx):
            raise ValueError("sample indices overlap")
        order = np.argsort(idx, kind="stable")
        return CoverSampleSet(self.family, self.lam, self.n, self.seed,
                              np.concatenate([self.tau, other.tau])[order],
                              np.concatenate([self.rescaled, other.rescaled])[order], self.level, idx[order])

    def rows(self):
        lvl = self.n if self.level is None else self.level
        for i, t, r in zip(self.index, self.tau, self.rescaled):
            yield {"family": self.family, "lambda": repr(float(self.lam)), "n": self.n, "level": lvl,
                   "seed": self.seed, "index": int(i), "tau": repr(float(t)), "rescaled": repr(float(r))}


def write_samples_csv(path, sets: Iterable[CoverSampleSet]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SAMPLE_COLUMNS)
        w.writeheader()
        for s in sets:
            for row in s.rows():
                w.writerow(row)


def read_samples_csv(path) -> list[CoverSampleSet]:
    """Read sample sets back, grouped by (family, lambda, n, level, seed)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(SAMPLE_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"sample file {path} lacks columns {sorted(missing)}")
        groups: dict = {}
        for row in reader:
            key = (row["family"], float(row["lambda"]), int(row["n"]), int(row["level"]), int(row["seed"]))
            g = groups.setdefault(key, ([], [], []))
            g[0].append(int(row["index"]))
            g[1].append(float(row["tau"]))
            g[2].append(float(row["rescaled"]))
    if not groups:
        raise ValueError(f"sample file {path} has no rows")
    out = []
    for (fam, lam, n, lvl, seed), (idx, tau, resc) in groups.items():
        out.append(CoverSampleSet(fam, lam, n, seed, np.array(tau), np.array(resc), lvl, np.array(idx)))
    return out
