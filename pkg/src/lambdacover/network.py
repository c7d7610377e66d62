"""Finite electrical networks and exact linear-algebra oracles.

A :class:`Network` couples a symmetric conductance matrix with a vertex
measure ``nu``; the associated continuous-time chain jumps from ``x`` to ``y``
at rate ``c(x, y) / nu(x)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .tree import LeafAddress, Params, Point, Vertex, parse_point

DENSE_THRESHOLD = 1 << 12
COVER_DP_CAP = 16
CLAMP_RELATIVE = 1e-15


class NetworkError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Network:
    """Vertices, a symmetric conductance matrix (dense or CSR) and a vertex measure."""

    vertices: tuple
    conductance: Union[np.ndarray, sp.csr_matrix]
    measure: np.ndarray
    label: str = ""

    def __post_init__(self):
        n = len(self.vertices)
        if self.conductance.shape != (n, n):
            raise NetworkError(f"conductance shape {self.conductance.shape} != ({n}, {n})")
        if self.measure.shape != (n,):
            raise NetworkError("measure must have one entry per vertex")
        if np.any(~np.isfinite(self.measure)) or np.any(self.measure <= 0):
            raise NetworkError("measure must be finite and strictly positive")

    def __len__(self):
        return len(self.vertices)

    @property
    def is_dense(self) -> bool:
        return isinstance(self.conductance, np.ndarray)

    @cached_property
    def index(self) -> dict:
        return {v: i for i, v in enumerate(self.vertices)}

    def index_of(self, v) -> int:
        if isinstance(v, (int, np.integer)):
            return int(v)
        try:
            return self.index[v]
        except KeyError:
            raise NetworkError(f"{v} is not a vertex of this network") from None

    def indices_of(self, vs: Iterable) -> np.ndarray:
        return np.array([self.index_of(v) for v in vs], dtype=np.int64)

    @cached_property
    def csr(self) -> sp.csr_matrix:
        if self.is_dense:
            return sp.csr_matrix(self.conductance)
        return self.conductance.tocsr()

    def dense(self) -> np.ndarray:
        if self.is_dense:
            return self.conductance
        return self.conductance.toarray()

    @cached_property
    def row_sums(self) -> np.ndarray:
        return np.asarray(self.csr.sum(axis=1)).ravel()

    @cached_property
    def rates(self) -> np.ndarray:
        """Total jump rate out of each vertex."""
        return self.row_sums / self.measure

    @property
    def total_measure(self) -> float:
        return float(self.measure.sum())

    def laplacian(self) -> sp.csr_matrix:
        c = self.csr
        return (sp.diags(self.row_sums) - c).tocsr()

    def with_measure(self, measure) -> "Network":
        return Network(self.vertices, self.conductance, np.asarray(measure, dtype=float), self.label)

    def measure_is_row_sums(self, rtol=1e-12) -> bool:
        return bool(np.allclose(self.measure, self.row_sums, rtol=rtol, atol=0.0))

    def is_connected(self) -> bool:
        k, _ = connected_components(self.csr, directed=False)
        return k == 1

    # serialization ---------------------------------------------------------------

    def to_dict(self) -> dict:
        coo = sp.triu(self.csr, k=1).tocoo()
        return {
            "vertices": [v.text if hasattr(v, "text") else str(v) for v in self.vertices],
            "conductance": [[int(i), int(j), float(c).hex()] for i, j, c in zip(coo.row, coo.col, coo.data)],
            "measure": [float(m).hex() for m in self.measure],
            "label": self.label,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_dict(cls, data: dict) -> "Network":
        verts = tuple(parse_point(t) for t in data["vertices"])
        n = len(verts)
        rows, cols, vals = [], [], []
        for i, j, c in data["conductance"]:
            c = _read_float(c)
            rows += [i, j]
            cols += [j, i]
            vals += [c, c]
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
        measure = np.array([_read_float(m) for m in data["measure"]])
        return cls(verts, mat, measure, data.get("label", ""))

    @classmethod
    def from_json(cls, text: str) -> "Network":
        return cls.from_dict(json.loads(text))


def _read_float(x) -> float:
    if isinstance(x, str):
        return float.fromhex(x) if "x" in x.lower() else float(x)
    return float(x)


# construction -------------------------------------------------------------------------


def build_tree_network(p: Params) -> Network:
    """``T_n`` in heap order with ``c(i, ij) = lam**-m`` for ``i`` at depth ``m``."""
    if p.n < 1:
        raise NetworkError("the tree network needs depth >= 1")
    size = p.num_vertices
    child = np.arange(2, size + 1)  # heap indices of non-root vertices
    parent = child // 2
    depth_parent = np.floor(np.log2(parent)).astype(np.int64)
    cond = 1.0 / p.powers[depth_parent]
    rows = np.concatenate([child - 1, parent - 1])
    cols = np.concatenate([parent - 1, child - 1])
    mat = sp.csr_matrix((np.concatenate([cond, cond]), (rows, cols)), shape=(size, size))
    verts = tuple(Vertex.from_heap_index(i) for i in range(1, size + 1))
    # row sums make every holding rate exactly 1; they agree with mu_n to rounding
    measure = np.asarray(mat.sum(axis=1)).ravel()
    return Network(verts, mat, measure, label=f"T_{p.n}(lam={p.lam!r})")


# effective resistance ------------------------------------------------------------------


class ResistanceSolver:
    """Effective resistances from one factorisation of the grounded Laplacian."""

    def __init__(self, net: Network, ground: int = 0):
        if not net.is_connected():
            raise NetworkError("effective resistance needs a connected network")
        self.net = net
        self.ground = ground
        n = len(net)
        keep = np.ones(n, dtype=bool)
        keep[ground] = False
        self._map = np.full(n, -1, dtype=np.int64)
        self._map[keep] = np.arange(n - 1)
        lap = net.laplacian()[keep][:, keep]
        if n - 1 <= DENSE_THRESHOLD:
            self._chol = sla.cho_factor(lap.toarray(), lower=True)
            self._solve = lambda b: sla.cho_solve(self._chol, b)
        else:
            lu = spla.splu(lap.tocsc())
            self._solve = lu.solve

    def potentials(self, x: int, y: int) -> np.ndarray:
        """Voltages (ground removed) for a unit current from ``x`` to ``y``."""
        b = np.zeros(len(self.net) - 1)
        if self._map[x] >= 0:
            b[self._map[x]] += 1.0
        if self._map[y] >= 0:
            b[self._map[y]] -= 1.0
        return self._solve(b)

    def resistance(self, x: int, y: int) -> float:
        if x == y:
            return 0.0
        v = self.potentials(x, y)
        vx = v[self._map[x]] if self._map[x] >= 0 else 0.0
        vy = v[self._map[y]] if self._map[y] >= 0 else 0.0
        return float(vx - vy)

    def matrix(self, idx: Sequence[int]) -> np.ndarray:
        """Pairwise resistances among ``idx`` via columns of the grounded inverse."""
        idx = np.asarray(idx, dtype=np.int64)
        pos = self._map[idx]
        inner = np.flatnonzero(pos >= 0)
        rhs = np.zeros((len(self.net) - 1, len(inner)))
        rhs[pos[inner], np.arange(len(inner))] = 1.0
        sol = self._solve(rhs)
        g = np.zeros((len(idx), len(idx)))
        g[np.ix_(inner, inner)] = sol[pos[inner]]
        d = np.diag(g)
        return d[:, None] + d[None, :] - 2.0 * g


def effective_resistance(net: Network, x, y) -> float:
    """Resistance between two vertices by a Laplacian solve with unit current."""
    i, j = net.index_of(x), net.index_of(y)
    if i == j:
        return 0.0
    return ResistanceSolver(net, ground=j).resistance(i, j)


def tree_path_resistance(net: Network, x, y) -> float:
    """Series sum of ``1/c`` along the unique path; requires a tree network."""
    c = net.csr
    n = len(net)
    if c.nnz != 2 * (n - 1) or not net.is_connected():
        raise NetworkError("path-sum resistance needs a tree network")
    i, j = net.index_of(x), net.index_of(y)
    if i == j:
        return 0.0
    # breadth-first search from i, then walk the predecessor chain back from j
    from scipy.sparse.csgraph import breadth_first_order

    _, pred = breadth_first_order(c, i, directed=False, return_predecessors=True)
    total = 0.0
    k = j
    while k != i:
        a = pred[k]
        total += 1.0 / c[a, k]
        k = a
    return total


# trace / Schur complement --------------------------------------------------------------


@dataclass(frozen=True)
class ReductionReport:
    kept: tuple
    eliminated: int
    max_fill: int
    asymmetry: float


def default_elimination_order(net: Network, eliminate: np.ndarray) -> np.ndarray:
    """Deepest vertices first; boundary points count as infinitely deep."""

    def key(i):
        v = net.vertices[i]
        if isinstance(v, LeafAddress):
            return (-math.inf, i)
        if isinstance(v, Vertex):
            return (-v.depth, v.word)
        return (0, i)

    return np.array(sorted(eliminate.tolist(), key=key), dtype=np.int64)


def trace_with_report(net: Network, keep, new_measure=None, order=None) -> tuple[Network, ReductionReport]:
    """Schur complement of the weighted Laplacian onto ``keep`` by star-mesh elimination."""
    keep_list = [net.index_of(v) for v in keep]
    keep_idx = np.asarray(keep_list, dtype=np.int64)
    if len(keep_list) == 0:
        raise NetworkError("keep set is empty")
    if len(set(keep_list)) != len(keep_list):
        raise NetworkError("keep set has duplicates")
    n = len(net)
    ncomp, labels = connected_components(net.csr, directed=False)
    if len(set(labels[keep_idx].tolist())) > 1:
        raise NetworkError("keep set touches more than one connected component")
    if new_measure is None:
        measure = net.measure[keep_list]
    else:
        measure = np.asarray(new_measure, dtype=float)
        if measure.shape != (len(keep_list),) or np.any(measure <= 0):
            raise NetworkError("new measure must be strictly positive on the keep set")

    kpos = np.full(n, -1, dtype=np.int64)
    kpos[keep_list] = np.arange(len(keep_list))
    comp_mask = labels == labels[keep_list[0]]
    eliminate = np.flatnonzero((kpos < 0) & comp_mask)
    if order is None:
        order = default_elimination_order(net, eliminate)
    else:
        order = np.asarray([net.index_of(v) for v in order], dtype=np.int64)
        if sorted(order.tolist()) != sorted(eliminate.tolist()):
            raise NetworkError("elimination order must list exactly the non-kept vertices")

    k = len(keep_list)
    kk = np.zeros((k, k))
    adj: list = [None] * n
    for i in np.flatnonzero(comp_mask):
        adj[i] = {}
    coo = sp.triu(net.csr, k=1).tocoo()
    for i, j, c in zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()):
        if not comp_mask[i]:
            continue
        if kpos[i] >= 0 and kpos[j] >= 0:
            kk[kpos[i], kpos[j]] += c
            kk[kpos[j], kpos[i]] += c
        else:
            adj[i][j] = adj[i].get(j, 0.0) + c
            adj[j][i] = adj[j].get(i, 0.0) + c

    max_fill = 0
    for v in order.tolist():
        nb = adj[v]
        adj[v] = None
        if not nb:
            continue
        max_fill = max(max_fill, len(nb))
        for u in nb:
            del adj[u][v]
        tot = sum(nb.values())
        kept_n = [u for u in nb if kpos[u] >= 0]
        free_n = [u for u in nb if kpos[u] < 0]
        if kept_n:
            pos = kpos[kept_n]
            w = np.array([nb[u] for u in kept_n])
            kk[np.ix_(pos, pos)] += np.outer(w, w) / tot
        for a_i, a in enumerate(free_n):
            wa = nb[a]
            for b in kept_n:
                add = wa * nb[b] / tot
                adj[a][b] = adj[a].get(b, 0.0) + add
                adj[b][a] = adj[b].get(a, 0.0) + add
            for b in free_n[a_i + 1:]:
                add = wa * nb[b] / tot
                adj[a][b] = adj[a].get(b, 0.0) + add
                adj[b][a] = adj[b].get(a, 0.0) + add

    np.fill_diagonal(kk, 0.0)
    top = kk.max() if k > 1 else 0.0
    asym = float(np.abs(kk - kk.T).max() / top) if top > 0 else 0.0
    kk[kk < CLAMP_RELATIVE * top] = 0.0
    kk = 0.5 * (kk + kk.T)
    verts = tuple(net.vertices[i] for i in keep_list)
    mat = kk if k <= DENSE_THRESHOLD else sp.csr_matrix(kk)
    report = ReductionReport(verts, int(len(order)), int(max_fill), asym)
    return Network(verts, mat, measure, label=f"trace({net.label})"), report


def trace_network(net: Network, keep, new_measure=None, order=None) -> Network:
    return trace_with_report(net, keep, new_measure, order)[0]


# hitting and cover times ----------------------------------------------------------------


def hitting_times(net: Network, targets) -> np.ndarray:
    """``E_x tau_targets`` for every vertex ``x`` of the chain with rates ``c/nu``."""
    tgt = np.atleast_1d(net.indices_of(targets if isinstance(targets, (list, tuple, set)) else [targets]))
    n = len(net)
    free = np.ones(n, dtype=bool)
    free[tgt] = False
    out = np.zeros(n)
    if not free.any():
        return out
    q = sp.diags(1.0 / net.measure) @ net.csr
    a = (sp.diags(np.asarray(q.sum(axis=1)).ravel()) - q).tocsr()[free][:, free]
    if n <= DENSE_THRESHOLD:
        try:
            sol = sla.solve(a.toarray(), np.ones(free.sum()))
        except sla.LinAlgError as e:
            raise NetworkError("hitting-time system is singular (disconnected network?)") from e
    else:
        sol = spla.spsolve(a.tocsc(), np.ones(free.sum()))
    if not np.all(np.isfinite(sol)):
        raise NetworkError("hitting-time system is singular (disconnected network?)")
    out[free] = sol
    return out


def expected_hitting_time(net: Network, start, target) -> float:
    return float(hitting_times(net, [target])[net.index_of(start)])


def commute_identity_check(net: Network, pairs=None, n_pairs: int = 20, seed: int = 0) -> float:
    """Largest relative gap in ``E_x tau_y + E_y tau_x = R(x, y) nu(V)``."""
    if not net.measure_is_row_sums():
        raise NetworkError("commute identity needs measure equal to conductance row sums")
    n = len(net)
    if pairs is None:
        rng = np.random.default_rng(seed)
        pairs = []
        while len(pairs) < n_pairs:
            x, y = rng.integers(0, n, size=2)
            if x != y:
                pairs.append((int(x), int(y)))
    else:
        pairs = [(net.index_of(x), net.index_of(y)) for x, y in pairs]
    solver = ResistanceSolver(net)
    cache: dict = {}

    def h(t):
        if t not in cache:
            cache[t] = hitting_times(net, [t])
        return cache[t]

    total = net.total_measure
    worst = 0.0
    for x, y in pairs:
        if x == y:
            continue
        commute = h(y)[x] + h(x)[y]
        rhs = solver.resistance(x, y) * total
        worst = max(worst, abs(commute - rhs) / rhs)
    return worst


def exact_expected_cover_time(net: Network, start, cap: int = COVER_DP_CAP) -> float:
    """Exact ``E tau_cov`` by linear solves over (vertex, visited set) states."""
    n = len(net)
    if n > cap:
        raise NetworkError(
            f"exact cover-time oracle is capped at {cap} vertices (got {n}); use Monte Carlo instead"
        )
    s = net.index_of(start)
    if n == 1:
        return 0.0
    c = net.dense()
    rates = c.sum(axis=1) / net.measure
    jump = c / c.sum(axis=1, keepdims=True)
    full = (1 << n) - 1
    nbr_masks = [int(sum(1 << j for j in np.flatnonzero(c[i] > 0))) for i in range(n)]

    # visited sets of a path are connected and contain the start
    reach = {1 << s}
    frontier = [1 << s]
    while frontier:
        nxt = []
        for m in frontier:
            border = 0
            for i in range(n):
                if m >> i & 1:
                    border |= nbr_masks[i]
            border &= ~m
            j = 0
            while border:
                if border & 1:
                    m2 = m | (1 << j)
                    if m2 not in reach:
                        reach.add(m2)
                        nxt.append(m2)
                border >>= 1
                j += 1
        frontier = nxt

    value: dict[int, np.ndarray] = {full: np.zeros(n)}
    for m in sorted(reach, key=lambda m: -bin(m).count("1")):
        if m == full:
            continue
        inside = [i for i in range(n) if m >> i & 1]
        p_in = jump[np.ix_(inside, inside)]
        rhs = 1.0 / rates[inside]
        for a_pos, a in enumerate(inside):
            for b in np.flatnonzero(jump[a] > 0):
                if not m >> b & 1:
                    rhs[a_pos] += jump[a, b] * value[m | (1 << b)][b]
        sol = np.linalg.solve(np.eye(len(inside)) - p_in, rhs)
        vec = np.zeros(n)
        vec[inside] = sol
        value[m] = vec
    return float(value[1 << s][s])
