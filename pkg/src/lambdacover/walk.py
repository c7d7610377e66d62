"""Continuous-time jump chains on networks: cover times, local times and time changes.

The chain on a :class:`~lambdacover.network.Network` holds at ``x`` for an
exponential time of rate ``r(x) = sum_y c(x, y) / nu(x)`` and then jumps to ``y``
with probability ``c(x, y) / sum_y c(x, y)``.

Cover times are usually sampled by running only the jump chain and adding the
holding times afterwards: the total holding at ``x`` over ``k`` visits is
``Gamma(k, 1/r(x))``. Path-level quantities (local times, excision) use
:func:`simulate_until`, which draws every holding time.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .network import Network, NetworkError, build_tree_network
from .streams import kernel_state, map_samples, numpy_rng
from .tree import Params, Vertex, bar_low_level

FAMILIES = ("raw", "bar", "tilde")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class JumpChainEngine:
    """Alias tables for the jump law out of each vertex plus the holding rates."""

    network: Network
    indptr: np.ndarray
    indices: np.ndarray
    prob: np.ndarray
    alias: np.ndarray
    rates: np.ndarray

    @classmethod
    def from_network(cls, net: Network) -> "JumpChainEngine":
        csr = net.csr.tocsr()
        csr.sort_indices()
        indptr = csr.indptr.astype(np.int64)
        indices = csr.indices.astype(np.int64)
        data = csr.data.astype(np.float64)
        if np.any(~np.isfinite(data)) or np.any(data < 0):
            raise SimulationError("conductances must be finite and nonnegative")
        rates = net.rates
        if np.any(~np.isfinite(rates)):
            raise SimulationError("non-finite holding rates")
        if len(net) > 1 and np.any(np.diff(indptr) == 0):
            raise SimulationError("a vertex has no neighbours")
        prob, alias_pos = K.build_alias(indptr, data)
        alias = indices[alias_pos]
        return cls(net, indptr, indices, prob, alias, rates)

    def jump_probabilities(self, v) -> dict:
        i = self.network.index_of(v)
        lo, hi = self.indptr[i], self.indptr[i + 1]
        w = self.network.csr[i].toarray().ravel()
        w = w / w.sum()
        return {self.network.vertices[j]: float(w[j]) for j in self.indices[lo:hi]}

    def alias_probabilities(self, v) -> np.ndarray:
        """Jump law reconstructed from the alias table (for checking the tables)."""
        i = self.network.index_of(v)
        lo, hi = self.indptr[i], self.indptr[i + 1]
        deg = hi - lo
        out = np.zeros(len(self.network))
        for k in range(lo, hi):
            out[self.indices[k]] += self.prob[k] / deg
            out[self.alias[k]] += (1.0 - self.prob[k]) / deg
        return out


def canonical_engine(p: Params) -> JumpChainEngine:
    """Engine for ``T_n``; every holding rate is exactly one."""
    eng = JumpChainEngine.from_network(build_tree_network(p))
    if not np.all(eng.rates == 1.0):
        raise SimulationError("canonical tree must have unit holding rates")
    return eng


@dataclass
class RunRecord:
    seed: int
    index: int
    family: str
    lam: float
    n: int
    tau: float
    jumps: int
    visits: Optional[np.ndarray] = None
    trajectory: Optional["Trajectory"] = None
    start: int = 0

    def row(self) -> dict:
        return {"family": self.family, "lambda": repr(self.lam), "n": self.n, "seed": self.seed,
                "index": self.index, "tau": repr(self.tau), "jumps": self.jumps}


RUN_COLUMNS = ("family", "lambda", "n", "seed", "index", "tau", "jumps")


def write_runs_csv(path, records: Iterable[RunRecord]):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RUN_COLUMNS)
        w.writeheader()
        for r in records:
            w.writerow(r.row())


@dataclass
class Trajectory:
    """States in visiting order with the time spent in each."""

    vertices: np.ndarray
    holdings: np.ndarray

    @cached_property
    def jump_times(self) -> np.ndarray:
        """Entrance time of each event."""
        return np.concatenate(([0.0], np.cumsum(self.holdings)[:-1]))

    @property
    def elapsed(self) -> float:
        return float(self.holdings.sum())

    def __len__(self):
        return len(self.vertices)

    def to_bytes(self) -> bytes:
        """Little-endian records of (uint32 vertex, float64 holding)."""
        rec = np.empty(len(self), dtype=[("v", "<u4"), ("h", "<f8")])
        rec["v"] = self.vertices
        rec["h"] = self.holdings
        return rec.tobytes()

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Trajectory":
        rec = np.frombuffer(raw, dtype=[("v", "<u4"), ("h", "<f8")])
        return cls(rec["v"].astype(np.int64), rec["h"].astype(np.float64))


@dataclass
class LocalTimeLedger:
    """Occupied time per vertex; local time is occupied time over the vertex measure."""

    occupied: np.ndarray
    measure: np.ndarray
    elapsed: float

    @property
    def local_times(self) -> np.ndarray:
        return self.occupied / self.measure

    @classmethod
    def from_trajectory(cls, traj: Trajectory, net: Network) -> "LocalTimeLedger":
        occ = np.bincount(traj.vertices, weights=traj.holdings, minlength=len(net))
        return cls(occ, net.measure.copy(), traj.elapsed)


# stopping rules --------------------------------------------------------------------------


@dataclass(frozen=True)
class StopRule:
    kind: str
    targets: tuple = ()
    horizon: float = math.inf

    @classmethod
    def hit(cls, *targets):
        return cls("hit", tuple(targets))

    @classmethod
    def cover(cls, targets):
        return cls("cover", tuple(targets))

    @classmethod
    def at_time(cls, t: float):
        return cls("horizon", (), float(t))

    def mask(self, net: Network) -> np.ndarray:
        m = np.zeros(len(net), dtype=np.bool_)
        if self.kind in ("hit", "cover"):
            m[net.indices_of(self.targets)] = True
        return m


_STOP_CODES = {"hit": K.STOP_HIT, "cover": K.STOP_COVER, "horizon": K.STOP_HORIZON}


# simulation ------------------------------------------------------------------------------


def _engine(net_or_engine) -> JumpChainEngine:
    if isinstance(net_or_engine, JumpChainEngine):
        return net_or_engine
    return JumpChainEngine.from_network(net_or_engine)


def simulate_cover(net, start, seed: int, index: int = 0, family: str = "raw",
                   params: Optional[Params] = None, targets=None) -> RunRecord:
    """One cover time by the Gamma assembly over per-vertex visit counts.

    ``targets`` restricts the cover to a vertex subset (default: all vertices).
    """
    eng = _engine(net)
    net = eng.network
    s = net.index_of(start)
    if len(net) == 1:
        return RunRecord(seed, index, family, params.lam if params else math.nan,
                         params.n if params else 0, 0.0, 0, np.zeros(1, dtype=np.int64), start=s)
    mask = np.ones(len(net), dtype=np.bool_) if targets is None else StopRule.cover(targets).mask(net)
    visits = K.cover_counts(eng.indptr, eng.indices, eng.prob, eng.alias, s, mask, kernel_state(seed, index))
    rng = numpy_rng(seed, index)
    hit = visits > 0
    tau = float(rng.gamma(visits[hit], 1.0 / eng.rates[hit]).sum()) if hit.any() else 0.0
    return RunRecord(seed, index, family, params.lam if params else math.nan,
                     params.n if params else 0, tau, int(visits.sum()), visits, start=s)


def sample_cover_times(net, start, samples: int, seed: int, workers: int = 1, first_index: int = 0,
                       targets=None) -> np.ndarray:
    eng = _engine(net)
    recs = map_samples(lambda i: simulate_cover(eng, start, seed, i, targets=targets).tau,
                       range(first_index, first_index + samples), workers)
    return np.asarray(recs, dtype=float)


def simulate_until(net, start, stop: StopRule, seed: int, index: int = 0, max_events: int = 10**8,
                   family: str = "raw", params: Optional[Params] = None):
    """Path-exact run with every holding time drawn; returns ``(RunRecord, LocalTimeLedger)``."""
    eng = _engine(net)
    net = eng.network
    s = net.index_of(start)
    mask = stop.mask(net)
    vs, hs = K.event_path(eng.indptr, eng.indices, eng.prob, eng.alias, eng.rates, s,
                          _STOP_CODES[stop.kind], mask, stop.horizon, max_events, kernel_state(seed, index))
    traj = Trajectory(vs.copy(), hs.copy())
    ledger = LocalTimeLedger.from_trajectory(traj, net)
    rec = RunRecord(seed, index, family, params.lam if params else math.nan, params.n if params else 0,
                    traj.elapsed, len(traj) - 1, trajectory=traj, start=s)
    return rec, ledger


def occupation_identity_check(ledger: LocalTimeLedger, net: Network, f) -> float:
    """Relative gap between ``sum f o`` and ``sum f L nu``."""
    fv = _vertex_values(net, f)
    lhs = float(np.dot(fv, ledger.occupied))
    rhs = float(np.dot(fv, ledger.local_times * ledger.measure))
    return abs(lhs - rhs) / max(1.0, abs(lhs))


def _vertex_values(net: Network, f) -> np.ndarray:
    if callable(f):
        return np.array([f(v) for v in net.vertices], dtype=float)
    if isinstance(f, dict):
        out = np.zeros(len(net))
        for v, val in f.items():
            out[net.index_of(v)] = val
        return out
    return np.asarray(f, dtype=float)


def additive_functional(ledger: LocalTimeLedger, net: Network, weights) -> float:
    """``sum_x L(x) w(x)`` over the vertices carrying weight."""
    w = _vertex_values(net, weights)
    return float(np.dot(ledger.local_times, w))


def additive_functional_path(traj: Trajectory, net: Network, weights) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoints ``(t_k, A_{t_k})`` of the piecewise-linear clock ``A_t``."""
    w = _vertex_values(net, weights)
    slope = w[traj.vertices] / net.measure[traj.vertices]
    values = np.concatenate(([0.0], np.cumsum(slope * traj.holdings)))
    times = np.concatenate(([0.0], np.cumsum(traj.holdings)))
    return times, values


def inverse_clock(times: np.ndarray, values: np.ndarray, t: float) -> float:
    """Right-continuous inverse ``inf{s : A_s > t}`` of a nondecreasing piecewise-linear clock."""
    k = int(np.searchsorted(values, t, side="right"))
    if k >= len(values):
        return math.inf
    if k == 0:
        return 0.0
    v0, v1 = values[k - 1], values[k]
    s0, s1 = times[k - 1], times[k]
    return float(s0 + (t - v0) / (v1 - v0) * (s1 - s0))


def excise(traj: Trajectory, keep_mask: np.ndarray) -> Trajectory:
    """Delete time spent outside ``keep_mask`` and merge repeated consecutive states."""
    sel = keep_mask[traj.vertices]
    if not sel.any():
        raise SimulationError("trajectory never enters the kept set")
    vs = traj.vertices[sel]
    hs = traj.holdings[sel]
    new = np.concatenate(([True], vs[1:] != vs[:-1]))
    group = np.cumsum(new) - 1
    merged = np.bincount(group, weights=hs)
    return Trajectory(vs[new], merged)


def first_cover_time(traj: Trajectory, target_mask: np.ndarray) -> float:
    """Arrival time at the last not-yet-seen target state, or ``inf``."""
    targets = np.flatnonzero(target_mask)
    if len(targets) == 0:
        return 0.0
    pos = np.full(len(target_mask), -1, dtype=np.int64)
    vs = traj.vertices
    # first occurrence of each state along the path
    first = np.unique(vs, return_index=True)
    pos[first[0]] = first[1]
    if np.any(pos[targets] < 0):
        return math.inf
    last = pos[targets].max()
    return float(traj.jump_times[last])


def excise_time_change(record: RunRecord, net: Network, keep) -> RunRecord:
    """The traced run on ``keep``: the path with time outside ``keep`` cut out."""
    mask = np.zeros(len(net), dtype=bool)
    mask[net.indices_of(keep)] = True
    if record.trajectory is None:
        raise SimulationError("excision needs a recorded trajectory (use simulate_until)")
    sub = excise(record.trajectory, mask)
    tau = first_cover_time(sub, mask)
    return RunRecord(record.seed, record.index, "bar", record.lam, record.n, tau,
                     max(len(sub) - 1, 0), trajectory=sub, start=int(sub.vertices[0]))


# the canonical tree ----------------------------------------------------------------------

EXCURSION_TABLE_CAP = 1 << 21
EXCURSION_TAIL_TOL = 1e-13
EXCURSION_MAX_TAIL = 1e-6


@dataclass(frozen=True, eq=False)
class ExcursionTables:
    """Tabulated laws of the time spent in a fully visited subtree, by height."""

    p_up: float
    max_h: int
    cdfs: np.ndarray
    offsets: np.ndarray
    lengths: np.ndarray
    tails: np.ndarray


_TABLE_CACHE: dict = {}


def excursion_tables(lam: float, n: int, cap: int = EXCURSION_TABLE_CAP) -> ExcursionTables:
    """Tables for heights ``0..max_h`` where the untabulated tail stays below ``1e-6``."""
    key = (lam, n, cap)
    if key in _TABLE_CACHE:
        return _TABLE_CACHE[key]
    p_up = lam / (2.0 + lam)
    cdfs, tails = [], []
    for h in range(max(n - 1, 0) + 1):
        cdf, tail = K.excursion_table(p_up, h, cap, EXCURSION_TAIL_TOL)
        if 1.0 - cdf[-1] > EXCURSION_MAX_TAIL:
            break
        cdfs.append(cdf)
        tails.append(tail)
    max_h = len(cdfs) - 1
    lengths = np.array([len(c) for c in cdfs], dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(lengths)[:-1])).astype(np.int64)
    tail_arr = np.zeros((max_h + 1, max_h + 1))
    for h, t in enumerate(tails):
        tail_arr[h, : len(t)] = t
    out = ExcursionTables(p_up, max_h, np.concatenate(cdfs), offsets, lengths, tail_arr)
    _TABLE_CACHE[key] = out
    return out


def tree_jump_counts(p: Params, seed: int, index: int, bar_low: int = 0, compress: bool = True):
    """``(K, K_in)`` for one cover of ``T_n`` from the root (see ``tree_cover_counts``)."""
    if p.n < 1:
        return 0, 0
    tabs = excursion_tables(p.lam, p.n)
    max_h = tabs.max_h if compress else -1
    return K.tree_cover_counts(p.n, tabs.p_up, max_h, bar_low, tabs.cdfs, tabs.offsets, tabs.lengths,
                               tabs.tails, kernel_state(seed, index))


def sample_tree_cover(p: Params, samples: int, seed: int, workers: int = 1, first_index: int = 0,
                      compress: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Cover times of the biased walk on ``T_n`` from the root, with their jump counts."""

    def one(i):
        k, _ = tree_jump_counts(p, seed, i, compress=compress)
        tau = float(numpy_rng(seed, i).gamma(k)) if k > 0 else 0.0
        return tau, k

    out = map_samples(one, range(first_index, first_index + samples), workers)
    taus = np.array([o[0] for o in out])
    jumps = np.array([o[1] for o in out], dtype=np.int64)
    return taus, jumps


def sample_coupled_cover(p: Params, samples: int, seed: int, workers: int = 1, first_index: int = 0,
                         bar_low: Optional[int] = None, with_jumps: bool = False):
    """Pairs ``(tau_cov(X^n), tau_cov(Xbar^n))`` on the same path.

    The traced chain is the walk with the time spent above level ``bar_low``
    excised. The last vertex covered is a leaf, so the traced cover time is the
    time spent at depth ``>= bar_low`` before the walk's cover time. With
    ``with_jumps`` the two jump counts are returned as well.
    """
    low = bar_low_level(p.n) if bar_low is None else bar_low

    def one(i):
        k, k_in = tree_jump_counts(p, seed, i, bar_low=low)
        rng = numpy_rng(seed, i)
        t_in = float(rng.gamma(k_in)) if k_in > 0 else 0.0
        t_out = float(rng.gamma(k - k_in)) if k > k_in else 0.0
        return t_in + t_out, t_in, k, k_in

    out = np.array(map_samples(one, range(first_index, first_index + samples), workers), dtype=float)
    out = out.reshape(samples, 4)
    if with_jumps:
        return out[:, 0], out[:, 1], out[:, 2].astype(np.int64), out[:, 3].astype(np.int64)
    return out[:, 0], out[:, 1]
