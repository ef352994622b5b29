"""Evaluation metrics: high-quality speakers, MST speaker variation, histograms, correlation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np

# two-sided standard normal quantiles
Z_CRIT = {0.90: 1.644854, 0.95: 1.959964, 0.99: 2.575829}


@dataclass(frozen=True)
class HqThreshold:
    value: float
    source: str = "reference-model minimum"


def hq_threshold(reference_scores: Mapping[str, float], source: str = "reference-model minimum") -> HqThreshold:
    """Lowest speaker score of the reference model."""
    if not reference_scores:
        raise ValueError("reference scores are empty")
    return HqThreshold(float(min(reference_scores.values())), source)


def format_ratio(count: int, total: int) -> str:
    """Exact percentage rounded half-up to one decimal, e.g. ``42.6%``."""
    if total <= 0:
        raise ValueError("total must be positive")
    pct = Fraction(100 * count, total)
    d = (Decimal(pct.numerator) / Decimal(pct.denominator)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    return f"{d}%"


@dataclass(frozen=True)
class HqCount:
    count: int
    total: int

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.count, self.total)

    @property
    def ratio_str(self) -> str:
        return format_ratio(self.count, self.total)

    def __iter__(self):
        yield self.count
        yield self.ratio_str


def count_hq(scores: Mapping[str, float], t) -> HqCount:
    """Speakers scoring strictly higher than the threshold."""
    if not scores:
        raise ValueError("no speaker scores")
    value = t.value if isinstance(t, HqThreshold) else float(t)
    return HqCount(sum(1 for s in scores.values() if s > value), len(scores))


def mst_cost(points) -> float:
    """Total edge length of the Euclidean minimum spanning tree (dense Prim, O(n^2))."""
    x = np.asarray(points, dtype=float)
    if x.ndim != 2:
        raise ValueError("points must share one dimension")
    n = len(x)
    if n < 2:
        raise ValueError("need at least two points")
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    best[0] = 0.0
    total = 0.0
    for _ in range(n):
        cand = np.where(in_tree, np.inf, best)
        i = int(np.argmin(cand))
        total += best[i]
        in_tree[i] = True
        d = np.sqrt(((x - x[i]) ** 2).sum(axis=1))
        best = np.minimum(best, d)
    return float(total)


def cumulative_histogram(scores: Sequence[float], grid: Sequence[float]) -> list[int]:
    """Number of scores strictly above each grid value."""
    g = np.asarray(grid, dtype=float)
    if len(g) > 1 and not np.all(np.diff(g) > 0):
        raise ValueError("grid must be strictly ascending")
    s = np.sort(np.asarray(scores, dtype=float))
    return [int(len(s) - np.searchsorted(s, v, side="right")) for v in g]


def parse_grid(spec: str) -> list[float]:
    """``"lo:hi:step"`` -> inclusive ascending grid."""
    lo, hi, step = (float(p) for p in spec.split(":"))
    if step <= 0 or hi < lo:
        raise ValueError(f"bad grid {spec!r}")
    n = int(round((hi - lo) / step)) + 1
    return [round(lo + i * step, 10) for i in range(n)]


def pearson_r(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be equal-length vectors")
    if len(x) < 3:
        raise ValueError("need at least 3 pairs")
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = float(xc @ xc), float(yc @ yc)
    if sxx == 0 or syy == 0:
        raise ValueError("zero variance")
    r = float(xc @ yc) / math.sqrt(sxx * syy)
    return min(max(r, -1.0), 1.0)


def fisher_ci(r: float, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Confidence interval for a correlation via the Fisher z-transform."""
    if not abs(r) < 1:
        raise ValueError("|r| must be < 1")
    if n < 4:
        raise ValueError("n must be >= 4")
    try:
        zc = Z_CRIT[round(confidence, 4)]
    except KeyError:
        raise ValueError(f"unsupported confidence {confidence}; use one of {sorted(Z_CRIT)}") from None
    z = math.atanh(r)
    hw = zc / math.sqrt(n - 3)
    return math.tanh(z - hw), math.tanh(z + hw)


@dataclass
class Report:
    speaker_scores: dict[str, float]
    threshold: HqThreshold
    hq: HqCount
    mst_cost: Optional[float]
    grid: list[float]
    histogram: list[int]
    correlation: Optional[dict] = None
    cost: Optional[dict] = None
    extra: Optional[dict] = None

    @property
    def mean_score(self) -> float:
        return float(np.mean(list(self.speaker_scores.values())))

    def to_dict(self) -> dict:
        r6 = lambda v: float(f"{v:.6g}")
        d = {
            "speakers": {g: r6(s) for g, s in sorted(self.speaker_scores.items())},
            "mean_score": r6(self.mean_score),
            "hq": {
                "threshold": r6(self.threshold.value),
                "threshold_source": self.threshold.source,
                "count": self.hq.count,
                "total": self.hq.total,
                "ratio": f"{self.hq.ratio.numerator}/{self.hq.ratio.denominator}",
                "ratio_str": self.hq.ratio_str,
            },
            "mst_cost": None if self.mst_cost is None else r6(self.mst_cost),
            "histogram": {"grid": self.grid, "counts": self.histogram},
        }
        if self.correlation is not None:
            d["correlation"] = {k: (r6(v) if isinstance(v, float) else v) for k, v in self.correlation.items()}
        if self.cost is not None:
            d["cost"] = self.cost
        if self.extra is not None:
            d["extra"] = self.extra
        return d


def speaker_embeddings(pool, speakers=None) -> dict[str, np.ndarray]:
    """Speaker-mean embedding per group (one vector per speaker)."""
    out = {}
    for g, recs in pool.groups().items():
        if speakers is None or g in speakers:
            out[g] = np.mean([r.embedding for r in recs], axis=0)
    return out


def build_report(speaker_scores: Mapping[str, float], reference_scores: Mapping[str, float],
                 grid: Sequence[float], embeddings: Optional[Mapping[str, np.ndarray]] = None,
                 actual_scores: Optional[Mapping[str, float]] = None,
                 cost: Optional[dict] = None, extra: Optional[dict] = None) -> Report:
    t = hq_threshold(reference_scores)
    hq = count_hq(speaker_scores, t)
    w = None
    if embeddings is not None:
        hq_spk = sorted(g for g, s in speaker_scores.items() if s > t.value and g in embeddings)
        w = mst_cost([embeddings[g] for g in hq_spk]) if len(hq_spk) >= 2 else 0.0
    corr = None
    if actual_scores is not None:
        common = sorted(set(speaker_scores) & set(actual_scores))
        x = [speaker_scores[g] for g in common]
        y = [actual_scores[g] for g in common]
        r = pearson_r(x, y)
        corr = {"r": r, "n": len(common)}
        if abs(r) < 1 and len(common) >= 4:
            lo, hi = fisher_ci(r, len(common))
            corr.update(ci_low=lo, ci_high=hi)
    return Report(dict(speaker_scores), t, hq, w, list(grid),
                  cumulative_histogram(list(speaker_scores.values()), grid), corr, cost, extra)
