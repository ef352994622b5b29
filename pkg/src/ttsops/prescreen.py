"""Pre-screening: drop badly aligned utterances and inconsistent speaker groups."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .manifest import Manifest, ManifestError


class EmptyResultError(ManifestError):
    pass


@dataclass(frozen=True)
class PrescreenConfig:
    ctc_threshold: float = -0.3
    compactness_low: float = 1.0
    compactness_high: float = 7.0

    def __post_init__(self):
        if not self.compactness_low < self.compactness_high:
            raise ValueError("compactness_low must be below compactness_high")


def ctc_filter(m: Manifest, threshold: float) -> Manifest:
    keep = [r for r in m.records if r.ctc_score >= threshold]
    if not keep:
        raise EmptyResultError("all candidates filtered by the CTC threshold")
    return m.with_records(keep)


def compactness_score(group: Sequence[Sequence[float]]) -> float:
    """Mean squared distance of the embeddings from their centroid.

    Equal to the trace of the biased (1/n) covariance matrix.
    """
    if len(group) == 0:
        raise ValueError("empty group")
    dims = {len(e) for e in group}
    if len(dims) != 1:
        raise ValueError(f"embedding dimension mismatch: {sorted(dims)}")
    x = np.asarray(group, dtype=float)
    centered = x - x.mean(axis=0)
    return float(np.einsum("ij,ij->", centered, centered) / len(x))


def group_compactness(m: Manifest) -> dict[str, float]:
    return {g: compactness_score([r.embedding for r in recs]) for g, recs in m.groups().items()}


def compactness_filter(m: Manifest, cfg: PrescreenConfig) -> Manifest:
    scores = group_compactness(m)
    ok = {g for g, s in scores.items() if cfg.compactness_low <= s <= cfg.compactness_high}
    keep = [r for r in m.records if r.group_id in ok]
    if not keep:
        raise EmptyResultError("all candidates filtered by speaker compactness")
    return m.with_records(keep)


def prescreen(m: Manifest, cfg: PrescreenConfig = PrescreenConfig()) -> Manifest:
    return compactness_filter(ctc_filter(m, cfg.ctc_threshold), cfg)
