"""Empirical distributions, Kolmogorov-Smirnov distances, norms and growth-rate fits."""
from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .network import build_tree_network
from .streams import map_samples
from .tree import Params, b_n_by_sum

KS_ALPHA = 0.01


@dataclass(frozen=True)
class EmpiricalDistribution:
    values: np.ndarray
    tag: str = ""

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=float).ravel())
        if len(v) == 0:
            raise ValueError("empirical distribution needs at least one value")
        if np.any(np.isnan(v)):
            raise ValueError("samples contain NaN")
        object.__setattr__(self, "values", v)

    @property
    def count(self) -> int:
        return len(self.values)

    def cdf(self, x) -> np.ndarray:
        return np.searchsorted(self.values, x, side="right") / self.count

    def mean(self) -> float:
        return float(self.values.mean())

    def stderr(self) -> float:
        return float(self.values.std(ddof=1) / math.sqrt(self.count)) if self.count > 1 else math.nan

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.values, q))


def _as_dist(x) -> EmpiricalDistribution:
    return x if isinstance(x, EmpiricalDistribution) else EmpiricalDistribution(x)


def _cdf_gaps(a: EmpiricalDistribution, b: EmpiricalDistribution) -> np.ndarray:
    # both CDFs evaluated just after every point of the merged sample
    pts = np.concatenate([a.values, b.values])
    return a.cdf(pts) - b.cdf(pts)


def ks_two_sample(a, b) -> float:
    """``sup_x |F_a(x) - F_b(x)|`` over the merged order statistics."""
    a, b = _as_dist(a), _as_dist(b)
    return float(np.abs(_cdf_gaps(a, b)).max())


def ks_one_sided(a, b) -> float:
    """``sup_x (F_a(x) - F_b(x))^+``: how far ``a`` sits above ``b`` in CDF."""
    a, b = _as_dist(a), _as_dist(b)
    return float(max(0.0, _cdf_gaps(a, b).max()))


def ks_critical_value(n: int, m: int, alpha: float = KS_ALPHA) -> float:
    """Asymptotic two-sample critical value ``c(alpha) sqrt((n+m)/(n m))``."""
    c = math.sqrt(-0.5 * math.log(alpha / 2.0))
    return c * math.sqrt((n + m) / (n * m))


@dataclass(frozen=True)
class NormEstimate:
    p: float
    value: float
    stderr: float


def p_norm(dist, p: float) -> NormEstimate:
    """``(mean |x|**p)**(1/p)`` with a leave-one-out jackknife standard error."""
    if p < 1:
        raise ValueError("p must be at least 1")
    x = np.abs(_as_dist(dist).values)
    n = len(x)
    xp = x**p
    s = xp.sum()
    value = float((s / n) ** (1.0 / p))
    if n < 2:
        return NormEstimate(p, value, math.nan)
    loo = ((s - xp) / (n - 1)) ** (1.0 / p)
    se = math.sqrt((n - 1) / n * float(((loo - loo.mean()) ** 2).sum()))
    return NormEstimate(p, value, se)


# regimes ---------------------------------------------------------------------------------

REGIMES = ("lambda<1", "lambda=1", "1<lambda<2", "lambda=2", "lambda>2")
RATE_TOL_EXACT = 0.1
RATE_TOL_COVER = 0.15


def classify(lam: float) -> str:
    if lam < 1:
        return REGIMES[0]
    if lam == 1:
        return REGIMES[1]
    if lam < 2:
        return REGIMES[2]
    if lam == 2:
        return REGIMES[3]
    return REGIMES[4]


def predicted(lam: float) -> dict:
    """Tabulated growth of each column as ``(geometric base, power of n)``."""
    g = 2.0 / lam
    table = {
        REGIMES[0]: {"resistance": (1.0, 0), "conductance": (g, 0), "cover": (g, 0)},
        REGIMES[1]: {"resistance": (1.0, 1), "conductance": (g, 0), "cover": (2.0, 2)},
        REGIMES[2]: {"resistance": (lam, 0), "conductance": (g, 0), "cover": (2.0, 1)},
        REGIMES[3]: {"resistance": (lam, 0), "conductance": (1.0, 1), "cover": (2.0, 2)},
        REGIMES[4]: {"resistance": (lam, 0), "conductance": (1.0, 0), "cover": (lam, 1)},
    }
    return table[classify(lam)]


def resistance_diameter(p: Params) -> float:
    """Largest distance in ``T_n``: two leaves whose common ancestor is the root."""
    return 2.0 * float(p.tail_sums[p.n])


def geometric_rate(depths: Sequence[int], values: Sequence[float], poly_power: int = 0) -> float:
    """Least-squares slope of ``log(value / n**poly_power)`` against ``n``."""
    d = np.asarray(depths, dtype=float)
    y = np.log(np.asarray(values, dtype=float)) - poly_power * np.log(d)
    return float(np.polyfit(d, y, 1)[0])


@dataclass
class RegimeRow:
    lam: float
    regime: str
    resistance_rate: float
    conductance_rate: float
    cover_rate: float
    predicted: dict
    errors: dict
    depths: tuple
    cover_means: tuple
    note: str = ("rates are slopes of log(quantity / n**k) against n, with n**k the tabulated "
                 "polynomial factor; only the geometric factor is compared")

    @property
    def passed(self) -> dict:
        return {"resistance": abs(self.errors["resistance"]) <= RATE_TOL_EXACT,
                "conductance": abs(self.errors["conductance"]) <= RATE_TOL_EXACT,
                "cover": abs(self.errors["cover"]) <= RATE_TOL_COVER}

    def as_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["passed"] = self.passed
        return d


def mean_cover_times(lam: float, depths: Sequence[int], samples: int, seed: int, workers: int = 1) -> np.ndarray:
    """Monte Carlo mean cover time of ``T_n`` from the root for each depth."""
    from .walk import sample_tree_cover

    out = []
    for n in depths:
        taus, _ = sample_tree_cover(Params(lam, n), samples, seed + n, workers)
        out.append(taus.mean())
    return np.array(out)


def regime_table(lambdas: Sequence[float], depths: Sequence[int], samples: int = 200, seed: int = 0,
                 workers: int = 1, cover_depths: Optional[Sequence[int]] = None) -> list[RegimeRow]:
    """Fitted growth rates of resistance diameter, total conductance and mean cover time.

    The first two columns are exact; the cover column uses Monte Carlo means
    (``cover_depths`` defaults to ``depths``).
    """
    depths = tuple(int(n) for n in depths)
    if len(depths) < 4:
        raise ValueError("the depth range must span at least 4 levels")
    cdepths = tuple(depths if cover_depths is None else cover_depths)
    rows = []
    for lam in lambdas:
        pred = predicted(lam)
        res = [resistance_diameter(Params(lam, n)) for n in depths]
        cond = [b_n_by_sum(Params(lam, n)) for n in depths]
        cov = mean_cover_times(lam, cdepths, samples, seed, workers)
        rates = {
            "resistance": geometric_rate(depths, res, pred["resistance"][1]),
            "conductance": geometric_rate(depths, cond, pred["conductance"][1]),
            "cover": geometric_rate(cdepths, cov, pred["cover"][1]),
        }
        errors = {k: rates[k] - math.log(pred[k][0]) for k in rates}
        rows.append(RegimeRow(lam, classify(lam), rates["resistance"], rates["conductance"], rates["cover"],
                              {k: math.log(v[0]) for k, v in pred.items()}, errors, cdepths,
                              tuple(float(c) for c in cov)))
    return rows


def figure_value(lam: float) -> float:
    """Limit of ``E[tau]**(1/n)`` implied by the tabulated cover-time column."""
    return predicted(lam)["cover"][0]


def growth_rate_plot_data(lambdas: Sequence[float], depths: Sequence[int] = range(5, 10), samples: int = 200,
                          seed: int = 0, workers: int = 1, remove_polynomial: bool = True) -> list[tuple]:
    """``(lam, exp(rate))`` with ``rate`` the fitted slope of ``log E tau`` in ``n``.

    With ``remove_polynomial`` the tabulated power of ``n`` is divided out first,
    so finite depths see only the geometric factor.
    """
    out = []
    for lam in lambdas:
        cov = mean_cover_times(lam, depths, samples, seed, workers)
        power = predicted(lam)["cover"][1] if remove_polynomial else 0
        out.append((float(lam), math.exp(geometric_rate(list(depths), cov, power))))
    return out


# plotting --------------------------------------------------------------------------------


def svg_plot(series: dict, xlabel: str, ylabel: str, title: str = "", logy: bool = False,
             logx: bool = False) -> str:
    """Self-contained SVG of one or more ``name -> (x, y)`` series; byte-stable across runs."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "lambdacover", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for name, (x, y) in series.items():
            ax.plot(x, y, marker="o", label=name)
        if logy:
            ax.set_yscale("log")
        if logx:
            ax.set_xscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()
