"""The centred Gaussian field on ``T_n`` with ``E(eta(x) - eta(y))**2 = d(x, y)``.

The field is built from one independent ``N(0, lam**m)`` increment per edge
leaving depth ``m``, summed down from ``eta(root) = 0``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse.csgraph as csgraph

from .network import build_tree_network
from .streams import numpy_rng
from .tree import Params, Vertex, heap_depths

FIELD_BLOCK = 1000
GAUSSIAN_STREAM = 3


@dataclass
class FieldSample:
    """Field values in heap order (entry ``i-1`` belongs to heap index ``i``)."""

    params: Params
    values: np.ndarray

    def __getitem__(self, v: Vertex) -> float:
        return float(self.values[..., v.heap_index - 1])

    def sup(self) -> np.ndarray:
        return self.values.max(axis=-1)


def _edge_scales(p: Params) -> np.ndarray:
    """Standard deviation of the increment into each non-root heap index."""
    depth = heap_depths(p.n)[2:]
    return np.sqrt(p.powers[depth - 1])


def _fill(p: Params, noise: np.ndarray) -> np.ndarray:
    """Sum edge increments down the tree, one level at a time; ``noise`` has shape ``(k, 2**(n+1)-2)``."""
    k = noise.shape[0]
    vals = np.zeros((k, p.num_vertices))
    incr = noise * _edge_scales(p)
    for m in range(1, p.n + 1):
        lo, hi = (1 << m), (1 << (m + 1))
        idx = np.arange(lo, hi)
        vals[:, lo - 1:hi - 1] = vals[:, idx // 2 - 1] + incr[:, lo - 2:hi - 2]
    return vals


def sample_field(p: Params, rng: np.random.Generator, size: Optional[int] = None) -> FieldSample:
    """One field (or ``size`` fields stacked along the first axis)."""
    k = 1 if size is None else size
    noise = rng.standard_normal((k, p.num_vertices - 1))
    vals = _fill(p, noise)
    return FieldSample(p, vals[0] if size is None else vals)


def field_block(p: Params, seed: int, block: int, size: int = FIELD_BLOCK) -> FieldSample:
    """Block ``block`` of fields from its own stream, so any split of blocks gives the same draws."""
    return sample_field(p, numpy_rng(seed, block, GAUSSIAN_STREAM), size)


def _blocked(p: Params, samples: int, seed: int, fn) -> list:
    out = []
    nblocks = -(-samples // FIELD_BLOCK)
    for b in range(nblocks):
        f = field_block(p, seed, b)
        take = min(FIELD_BLOCK, samples - b * FIELD_BLOCK)
        out.append(fn(f.values[:take]))
    return out


@dataclass
class SupEstimate:
    lam: float
    n: int
    estimate: float
    stderr: float
    samples: int
    seed: int

    def to_json(self) -> str:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return json.dumps(d, sort_keys=True)


def estimate_esup(p: Params, samples: int, seed: int) -> SupEstimate:
    """Monte Carlo mean of ``sup_x eta(x)`` with its standard error."""
    if samples < 100:
        raise ValueError("need at least 100 samples")
    sups = np.concatenate(_blocked(p, samples, seed, lambda v: v.max(axis=1)))
    return SupEstimate(p.lam, p.n, float(sups.mean()), float(sups.std(ddof=1) / math.sqrt(samples)),
                       samples, seed)


def increment_moments(p: Params, pairs: Sequence[tuple[Vertex, Vertex]], samples: int, seed: int):
    """Sample mean and standard error of ``(eta(x) - eta(y))**2`` for each pair."""
    ix = np.array([x.heap_index - 1 for x, _ in pairs])
    iy = np.array([y.heap_index - 1 for _, y in pairs])
    parts = _blocked(p, samples, seed, lambda v: (v[:, ix] - v[:, iy]) ** 2)
    sq = np.concatenate(parts, axis=0)
    return sq.mean(axis=0), sq.std(axis=0, ddof=1) / math.sqrt(samples)


# chaining --------------------------------------------------------------------------------


def net_budget(k: int, scale: float = 1.0) -> int:
    """Allowed size of the ``k``-th net: 1 for ``k = 0``, else ``scale * 2**(2**k)``."""
    if k == 0:
        return 1
    if k >= 6:
        return 1 << 62
    return max(1, int(scale * (1 << (1 << k))))


def net_depths(p: Params, scale: float = 1.0) -> list[int]:
    """Depth ``m_k`` of the net ``C_k = {depth <= m_k}``, until the whole tree fits."""
    out = []
    k = 0
    while True:
        budget = net_budget(k, scale)
        m = -1
        while m + 1 <= p.n and (1 << (m + 2)) - 1 <= budget:
            m += 1
        m = max(m, 0)
        out.append(m)
        if m >= p.n:
            return out
        k += 1


def chaining_sum(p: Params, nets: Sequence[Sequence[Vertex]]) -> float:
    """``sup_x sum_k 2**(k/2) sqrt(d(x, C_k))`` for explicit nets, by multi-source shortest paths."""
    if p.n == 0:
        return 0.0
    g = build_tree_network(p).csr.copy()
    g.data = 1.0 / g.data  # edge lengths
    total = np.zeros(p.num_vertices)
    for k, net in enumerate(nets):
        src = sorted({v.heap_index - 1 for v in net})
        dist = csgraph.dijkstra(g, directed=False, indices=src, min_only=True)
        total += 2.0 ** (k / 2) * np.sqrt(np.maximum(dist, 0.0))
    return float(total.max())


def gamma2_upper(p: Params, budget_scale: float = 1.0) -> float:
    """Upper bound on the chaining functional from the nets ``C_k = {depth <= m_k}``.

    Every vertex below ``m_k`` is farthest from ``C_k`` at a leaf, where the
    distance is ``sum_{j=m_k}^{n-1} lam**j``; the supremum is attained at a leaf.
    """
    if p.n == 0:
        return 0.0
    total = 0.0
    for k, m in enumerate(net_depths(p, budget_scale)):
        gap = float(p.tail_sums[p.n] - p.tail_sums[m])
        total += 2.0 ** (k / 2) * math.sqrt(gap)
    return total


def depth_nets(p: Params, budget_scale: float = 1.0) -> list[list[Vertex]]:
    return [[v for d in range(m + 1) for v in _level(d)] for m in net_depths(p, budget_scale)]


def _level(m: int) -> list[Vertex]:
    return [Vertex(m, w) for w in range(1 << m)]


# tail of the cover time --------------------------------------------------------------------

TAIL_GRID = 100
TAIL_FRACTION = 0.2
TAIL_MIN_EXCEED = 10


class InsufficientTail(ValueError):
    pass


@dataclass
class TailFit:
    lam: float
    n: int
    C: float
    c: float
    residual: float
    u: np.ndarray
    exceedance: np.ndarray
    fit_mask: np.ndarray

    @property
    def fitted(self) -> np.ndarray:
        return self.C * np.exp(-self.c * self.u)

    def rows(self):
        for u, e, f in zip(self.u, self.exceedance, self.fitted):
            yield {"u": repr(float(u)), "exceedance": repr(float(e)), "fitted": repr(float(f))}


def exceedance_curve(taus: np.ndarray, p: Params, u: np.ndarray) -> np.ndarray:
    """``P(tau >= u (2/lam)**n)`` on the grid ``u``."""
    scaled = np.sort(np.asarray(taus, dtype=float) * (p.lam / 2.0) ** p.n)
    return 1.0 - np.searchsorted(scaled, u, side="left") / len(scaled)


def concentration_tail_check(taus: np.ndarray, p: Params) -> TailFit:
    """Exponential fit ``C exp(-c u)`` to the upper tail of ``tau (lam/2)**n``.

    The grid runs from 0 to the largest scaled sample. The fit uses the top 20%
    of grid points among those with at least 10 exceedances.
    """
    taus = np.asarray(taus, dtype=float)
    if len(taus) < 1000:
        raise InsufficientTail("the tail fit needs at least 1000 samples")
    scaled = taus * (p.lam / 2.0) ** p.n
    u = np.linspace(0.0, scaled.max(), TAIL_GRID)
    exc = exceedance_curve(taus, p, u)
    counts = np.rint(exc * len(taus))
    ok = np.flatnonzero(counts >= TAIL_MIN_EXCEED)
    top = ok[ok >= np.quantile(ok, 1.0 - TAIL_FRACTION)] if len(ok) else ok
    if len(top) < 3:
        raise InsufficientTail("too few tail points with 10 exceedances; raise the sample count")
    mask = np.zeros(TAIL_GRID, dtype=bool)
    mask[top] = True
    slope, icpt = np.polyfit(u[mask], np.log(exc[mask]), 1)
    resid = float(np.sqrt(np.mean((np.log(exc[mask]) - (icpt + slope * u[mask])) ** 2)))
    return TailFit(p.lam, p.n, float(math.exp(icpt)), float(-slope), resid, u, exc, mask)


def tail_band_distance(a: np.ndarray, pa: Params, b: np.ndarray, pb: Params, points: int = TAIL_GRID) -> float:
    """Largest gap between two scaled exceedance curves on a shared grid."""
    top = max(np.max(a) * (pa.lam / 2) ** pa.n, np.max(b) * (pb.lam / 2) ** pb.n)
    u = np.linspace(0.0, top, points)
    return float(np.abs(exceedance_curve(a, pa, u) - exceedance_curve(b, pb, u)).max())
