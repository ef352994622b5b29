"""Corpus determination: per-utterance variant switching and the selection rules.

Methods:

* ``unselected``      every pre-screened utterance
* ``acoustic_theta``  acoustic quality strictly above a threshold
* ``ours_utt``        top-n utterances by estimated training data quality
* ``ours_spk``        whole speakers by speaker-wise pseudo MOS, filled up to n
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

from .manifest import IDENTITY, Manifest, atomic_write_text, check_variant, variant_order

log = logging.getLogger(__name__)

METHODS = ("unselected", "acoustic_theta", "ours_utt", "ours_spk")


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusSelection:
    entries: tuple[tuple[str, str], ...]
    method: str
    n: int = -1
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((str(u), str(v)) for u, v in self.entries))
        if self.method not in METHODS:
            raise SelectionError(f"unknown method {self.method!r}")
        if self.n < 0:
            object.__setattr__(self, "n", len(self.entries))
        if self.method in ("ours_utt", "ours_spk") and self.n != len(self.entries):
            raise SelectionError(f"selection holds {len(self.entries)} entries, expected {self.n}")
        ids = [u for u, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise SelectionError("duplicate utterance_id in selection")
        for _, v in self.entries:
            check_variant(v)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> list[str]:
        return [u for u, _ in self.entries]

    def variant_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for _, v in self.entries:
            counts[v] = counts.get(v, 0) + 1
        return counts


def write_selection(sel: CorpusSelection, path) -> None:
    """First line: header with method, n, provenance. Then one entry per line, sorted by id."""
    header = {"method": sel.method, "n": sel.n, "provenance": sel.provenance}
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for u, v in sorted(sel.entries):
        lines.append(json.dumps({"utterance_id": u, "variant": v}, separators=(",", ":")))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_selection(path) -> CorpusSelection:
    with open(path, encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    if not rows:
        raise SelectionError(f"{path}: empty selection file")
    header, body = rows[0], rows[1:]
    return CorpusSelection(
        entries=tuple((r["utterance_id"], r["variant"]) for r in body),
        method=header["method"],
        n=int(header["n"]),
        provenance=header.get("provenance", {}),
    )


# ---------------------------------------------------------------------------
# variant switching


def switch_variants(quality, variants=None) -> dict[str, tuple[str, float]]:
    """Per utterance, the variant with the highest training data quality.

    ``quality`` is a ``QualityTable`` or a mapping ``(utterance_id, variant) -> score``.
    Ties go to the earliest registered variant, so identity wins a full tie.
    """
    scores = getattr(quality, "scores", quality)
    if variants is None:
        variants = getattr(quality, "variants", None) or sorted({v for _, v in scores})
    variants = variant_order(variants)
    utts = sorted({u for u, _ in scores})
    out = {}
    for u in utts:
        best_v, best = None, None
        for v in variants:
            try:
                s = scores[(u, v)]
            except KeyError:
                raise SelectionError(f"quality table lacks ({u!r}, {v!r})") from None
            if best is None or s > best:
                best_v, best = v, s
        out[u] = (best_v, best)
    return out


def acoustic_switch(pool_variants: Mapping[str, Manifest]) -> dict[str, tuple[str, float]]:
    """Baseline switching: per utterance, the variant whose record has the highest acoustic quality."""
    variants = variant_order(pool_variants)
    first = pool_variants[variants[0]]
    out = {}
    for u in first.ids:
        best_v, best = None, None
        for v in variants:
            aq = pool_variants[v][u].acoustic_quality
            if best is None or aq > best:
                best_v, best = v, aq
        out[u] = (best_v, best)
    return out


# ---------------------------------------------------------------------------
# selection rules


def _as_scored(scored) -> dict[str, tuple[str, float]]:
    out = {}
    for u, val in scored.items():
        if isinstance(val, tuple):
            out[u] = (val[0], float(val[1]))
        else:
            out[u] = (IDENTITY, float(val))
    return out


def select_top_n(scored: Mapping, n: int, variant: Optional[str] = None,
                 method: str = "ours_utt") -> CorpusSelection:
    """The ``n`` highest-scoring utterances; ties broken by utterance_id.

    ``scored`` maps utterance_id to a score, or to ``(variant, score)`` as
    returned by :func:`switch_variants`.
    """
    items = _as_scored(scored)
    if n <= 0:
        raise SelectionError("n must be positive")
    if n > len(items):
        raise SelectionError(f"n={n} exceeds the {len(items)} scored utterances")
    order = sorted(items, key=lambda u: (-items[u][1], u))[:n]
    entries = [(u, variant or items[u][0]) for u in order]
    return CorpusSelection(tuple(entries), method=method, n=n, provenance={"rule": "top_n"})


def select_speaker_wise(speaker_scores: Mapping[str, float], pool: Manifest, n: int,
                        speaker_variants: Optional[Mapping[str, str]] = None) -> CorpusSelection:
    """Admit whole speakers best-first while the total stays within ``n``.

    A speaker that would overflow ``n`` is skipped and the scan continues, so
    the result never splits a speaker and never exceeds ``n``.
    """
    if n <= 0:
        raise SelectionError("n must be positive")
    groups = pool.groups()
    order = sorted(groups, key=lambda g: (-speaker_scores[g], g))
    entries: list[tuple[str, str]] = []
    chosen = []
    for g in order:
        size = len(groups[g])
        if len(entries) + size > n:
            continue
        v = (speaker_variants or {}).get(g, pool.variant)
        entries.extend((r.utterance_id, v) for r in groups[g])
        chosen.append(g)
        if len(entries) == n:
            break
    return CorpusSelection(tuple(entries), method="ours_spk", n=len(entries),
                           provenance={"rule": "speaker_greedy", "target_n": n, "speakers": len(chosen)})


def acoustic_threshold_select(pool: Union[Manifest, Mapping[str, Manifest]], theta: float) -> CorpusSelection:
    """Utterances whose acoustic quality is strictly higher than ``theta``.

    Given a mapping of variant manifests, each utterance first takes the
    variant with the highest acoustic quality.
    """
    if not 1.0 <= theta <= 5.0:
        raise SelectionError(f"theta={theta} outside [1, 5]")
    if isinstance(pool, Manifest):
        scored = {r.utterance_id: (pool.variant, r.acoustic_quality) for r in pool}
    else:
        scored = acoustic_switch(pool)
    entries = [(u, v) for u, (v, aq) in sorted(scored.items()) if aq > theta]
    if not entries:
        log.warning("acoustic threshold %.3f selected nothing", theta)
    return CorpusSelection(tuple(entries), method="acoustic_theta", n=len(entries),
                           provenance={"theta": theta})


def theta_for_size(acoustic_scores, n: int) -> float:
    """Largest threshold whose strict selection admits at least ``n`` utterances.

    Returns the (n+1)-th highest score (or 1.0 when ``n`` covers everything),
    so the strict rule yields exactly ``n`` utterances unless scores tie there.
    """
    vals = sorted((float(s[1]) if isinstance(s, tuple) else float(s) for s in acoustic_scores), reverse=True)
    if n <= 0 or n > len(vals):
        raise SelectionError(f"cannot match size {n} with {len(vals)} utterances")
    if n == len(vals):
        return 1.0
    return min(max(vals[n], 1.0), 5.0)


def unselected(pool: Manifest) -> CorpusSelection:
    return CorpusSelection(tuple((r.utterance_id, pool.variant) for r in pool), method="unselected")
