"""Evaluation-in-the-loop scoring of training data.

One loop per cleansing variant: train on the candidates (all, or a seeded
sample), evaluate every speaker on common sentences, regress utterance
features onto speaker scores, and score every candidate with the regressor.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import timedelta
from typing import Mapping, Optional, Protocol

import numpy as np

from .manifest import IDENTITY, Manifest, atomic_write_text, check_variant, variant_order
from .regressor import FittedRegressor, RegressorConfig, fit
from .seeding import derive_seed, rng_for, variant_seed
from .selection import CorpusSelection

log = logging.getLogger(__name__)


class Trainer(Protocol):
    def train(self, selection: CorpusSelection, pool, seed: int): ...


class Evaluator(Protocol):
    def eval_speaker(self, model, speaker: str, seed: int) -> float: ...


class LoopError(RuntimeError):
    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


@dataclass(frozen=True)
class LoopConfig:
    sampling_fraction: float = 1.0
    regressor: RegressorConfig = field(default_factory=RegressorConfig)
    seed: int = 0
    variants: tuple[str, ...] = (IDENTITY,)

    def __post_init__(self):
        if not 0.0 < self.sampling_fraction <= 1.0:
            raise ValueError("sampling_fraction must lie in (0, 1]")
        object.__setattr__(self, "variants", tuple(variant_order(self.variants)))


@dataclass
class QualityTable:
    """Training data quality per (utterance_id, variant), plus speaker-wise pseudo MOS per variant."""

    scores: dict[tuple[str, str], float]
    speaker_scores: dict[str, dict[str, float]]
    variants: list[str]
    # diagnostics, not serialized
    sampled: dict[str, list[str]] = field(default_factory=dict, compare=False, repr=False)
    regressors: dict[str, FittedRegressor] = field(default_factory=dict, compare=False, repr=False)
    models: dict = field(default_factory=dict, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.scores)

    @property
    def utterance_ids(self) -> list[str]:
        return sorted({u for u, _ in self.scores})

    def for_variant(self, variant: str) -> dict[str, float]:
        return {u: s for (u, v), s in self.scores.items() if v == variant}

    def merge(self, other: "QualityTable") -> "QualityTable":
        overlap = set(self.variants) & set(other.variants)
        if overlap:
            raise ValueError(f"variants scored twice: {sorted(overlap)}")
        return QualityTable(
            scores={**self.scores, **other.scores},
            speaker_scores={**self.speaker_scores, **other.speaker_scores},
            variants=variant_order(self.variants + other.variants),
            sampled={**self.sampled, **other.sampled},
            regressors={**self.regressors, **other.regressors},
            models={**self.models, **other.models},
        )


def _clamp_score(x: float, where: str) -> float:
    if not math.isfinite(x):
        raise LoopError("evaluate", f"non-finite score for {where}")
    if x < 1.0 or x > 5.0:
        log.warning("evaluator score %.4f for %s outside [1, 5]; clamped", x, where)
        return min(max(x, 1.0), 5.0)
    return float(x)


def sample_ids(pool: Manifest, fraction: float, seed: int) -> list[str]:
    """Seeded uniform sample of ceil(fraction * |pool|) ids, returned in pool order."""
    if fraction >= 1.0:
        return pool.ids
    n = math.ceil(fraction * len(pool))
    if n < 1:
        raise LoopError("sample", "empty sample")
    idx = rng_for(seed, "sample").choice(len(pool), size=n, replace=False)
    return [pool.records[i].utterance_id for i in sorted(idx)]


def run_quality_loop(pool: Manifest, trainer: Trainer, evaluator: Evaluator,
                     cfg: LoopConfig, seed: Optional[int] = None) -> QualityTable:
    """Score every utterance of a single-variant pool."""
    seed = cfg.seed if seed is None else seed
    variant = pool.variant

    ids = sample_ids(pool, cfg.sampling_fraction, seed)
    selection = CorpusSelection(tuple((u, variant) for u in ids), method="unselected",
                                provenance={"fraction": cfg.sampling_fraction})
    try:
        model = trainer.train(selection, pool, derive_seed(seed, "train"))
    except Exception as exc:
        raise LoopError("train", f"{type(exc).__name__}: {exc}") from exc

    eval_seed = derive_seed(seed, "evaluate")
    speaker_scores = {}
    for g in sorted(pool.groups()):
        try:
            raw = evaluator.eval_speaker(model, g, eval_seed)
        except Exception as exc:
            raise LoopError("evaluate", f"speaker {g}: {type(exc).__name__}: {exc}") from exc
        speaker_scores[g] = _clamp_score(float(raw), f"speaker {g}")

    # regressor targets: sampled utterances, i.e. speakers actually seen in training
    sampled = [pool[u] for u in ids]
    x = [r.features for r in sampled]
    y = [speaker_scores[r.group_id] for r in sampled]
    try:
        reg = fit(x, y, cfg.regressor)
    except Exception as exc:
        raise LoopError("regress", f"{type(exc).__name__}: {exc}") from exc
    preds = reg.predict_many(np.array([r.features for r in pool]))
    scores = {(r.utterance_id, variant): float(p) for r, p in zip(pool, preds)}
    return QualityTable(scores=scores, speaker_scores={variant: speaker_scores}, variants=[variant],
                        sampled={variant: ids}, regressors={variant: reg}, models={variant: model})


def run_variant_loops(pool_variants: Mapping[str, Manifest], trainer: Trainer, evaluator: Evaluator,
                      cfg: LoopConfig, max_workers: Optional[int] = None) -> QualityTable:
    """Independent loops, one per variant, merged.

    Each variant's seed is ``cfg.seed XOR stable_hash(variant)``, so results do
    not depend on execution order. ``max_workers > 1`` runs the loops on a
    thread pool; the merged table is identical to sequential execution.
    """
    variants = variant_order(pool_variants)
    if not variants:
        raise ValueError("no variants")
    ref_ids = set(pool_variants[variants[0]].ids)
    for v in variants:
        check_variant(v)
        if pool_variants[v].variant != v:
            raise ValueError(f"manifest under {v!r} is tagged {pool_variants[v].variant!r}")
        if set(pool_variants[v].ids) != ref_ids:
            raise ValueError(f"utterance ids of variant {v!r} differ from {variants[0]!r}")

    def one(v):
        return run_quality_loop(pool_variants[v], trainer, evaluator, cfg, seed=variant_seed(cfg.seed, v))

    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as ex:
            tables = list(ex.map(one, variants))
    else:
        tables = [one(v) for v in variants]
    out = tables[0]
    for t in tables[1:]:
        out = out.merge(t)
    return out


def cost_account(train_time: timedelta, eval_time: timedelta, regress_time: timedelta) -> timedelta:
    """Wall-clock total: initial training and retraining, one evaluation pass, one regression pass."""
    for t in (train_time, eval_time, regress_time):
        if t < timedelta(0):
            raise ValueError("durations must be non-negative")
    return 2 * train_time + eval_time + regress_time


def format_duration(t: timedelta) -> str:
    total = int(t.total_seconds())
    h, rem = divmod(total, 3600)
    m, s = divmod(rem, 60)
    return f"{h}h{m}m{s}s"


# ---------------------------------------------------------------------------
# serialization: quality.jsonl + quality.speakers.jsonl sidecar


def speaker_sidecar(path):
    from pathlib import Path
    path = Path(path)
    return path.with_name(f"{path.stem}.speakers{path.suffix}")


def write_quality(q: QualityTable, path) -> None:
    lines = [json.dumps({"utterance_id": u, "variant": v, "score": float(f"{s:.6g}")},
                        separators=(",", ":"))
             for (u, v), s in sorted(q.scores.items())]
    atomic_write_text(path, "\n".join(lines) + "\n")
    spk = [json.dumps({"variant": v, "group_id": g, "score": float(f"{s:.6g}")}, separators=(",", ":"))
           for v in q.variants for g, s in sorted(q.speaker_scores[v].items())]
    atomic_write_text(speaker_sidecar(path), "\n".join(spk) + "\n")


def load_quality(path) -> QualityTable:
    scores = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                r = json.loads(line)
                scores[(r["utterance_id"], r["variant"])] = float(r["score"])
    speaker_scores: dict[str, dict[str, float]] = {}
    side = speaker_sidecar(path)
    with open(side, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                r = json.loads(line)
                speaker_scores.setdefault(r["variant"], {})[r["group_id"]] = float(r["score"])
    variants = variant_order({v for _, v in scores})
    return QualityTable(scores=scores, speaker_scores=speaker_scores, variants=variants)
