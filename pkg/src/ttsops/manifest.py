"""Candidate-corpus data model and the line-delimited JSON manifest format.

One JSON object per line, UTF-8. Cleansed variants of a corpus live in sibling
files named ``<stem>.<variant>.jsonl``; a file without a variant suffix holds
the uncleansed ("identity") records.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

IDENTITY = "identity"

_registry: list[str] = [IDENTITY]


class ManifestError(ValueError):
    """Invalid manifest content. ``lineno`` is 1-based when known."""

    def __init__(self, message: str, lineno: Optional[int] = None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}"
        if lineno is not None:
            where = f"{where}, line {lineno}" if where else f"line {lineno}"
        super().__init__(f"{where}: {message}" if where else message)


def register_variant(name: str) -> str:
    if not name or "." in name or "/" in name:
        raise ValueError(f"invalid variant name {name!r}")
    if name not in _registry:
        _registry.append(name)
    return name


def registered_variants() -> tuple[str, ...]:
    """Registered cleansing variants in registration order (identity first)."""
    return tuple(_registry)


def check_variant(name: str) -> str:
    if name not in _registry:
        raise KeyError(f"unregistered variant {name!r}")
    return name


def variant_order(variants: Iterable[str]) -> list[str]:
    """Sort variant names by registration order."""
    vs = list(dict.fromkeys(variants))
    for v in vs:
        check_variant(v)
    return sorted(vs, key=_registry.index)


for _v in ("denoise", "restore"):
    register_variant(_v)


def round_sig(x: float, digits: int = 6) -> float:
    return float(f"{x:.{digits}g}")


@dataclass(frozen=True)
class LatentState:
    """Simulation-only ground truth behind an utterance."""

    base_quality: float
    noise_level: float
    device_distortion: float

    def to_dict(self) -> dict:
        return {
            "base_quality": round_sig(self.base_quality),
            "noise_level": round_sig(self.noise_level),
            "device_distortion": round_sig(self.device_distortion),
        }


@dataclass(frozen=True)
class UtteranceRecord:
    utterance_id: str
    group_id: str
    ctc_score: float
    embedding: tuple[float, ...]
    features: tuple[float, ...]
    duration_s: float
    acoustic_quality: float
    latent: Optional[LatentState] = None

    def __post_init__(self):
        # accept lists / arrays but store immutable tuples
        object.__setattr__(self, "embedding", tuple(float(v) for v in self.embedding))
        object.__setattr__(self, "features", tuple(float(v) for v in self.features))

    def validate(self) -> None:
        if not self.utterance_id:
            raise ManifestError("empty utterance_id")
        values = [self.ctc_score, self.duration_s, self.acoustic_quality, *self.embedding, *self.features]
        if not all(math.isfinite(v) for v in values):
            raise ManifestError(f"{self.utterance_id}: non-finite value")
        if self.ctc_score > 0:
            raise ManifestError(f"{self.utterance_id}: ctc_score {self.ctc_score} > 0")
        if self.duration_s <= 0:
            raise ManifestError(f"{self.utterance_id}: duration_s must be positive")
        if not 1.0 <= self.acoustic_quality <= 5.0:
            raise ManifestError(f"{self.utterance_id}: acoustic_quality {self.acoustic_quality} outside [1, 5]")
        if self.latent is not None:
            lat = self.latent
            if not all(math.isfinite(v) for v in (lat.base_quality, lat.noise_level, lat.device_distortion)):
                raise ManifestError(f"{self.utterance_id}: non-finite latent state")

    def to_dict(self, include_latent: bool = True) -> dict:
        d = {
            "utterance_id": self.utterance_id,
            "group_id": self.group_id,
            "ctc_score": round_sig(self.ctc_score),
            "embedding": [round_sig(v) for v in self.embedding],
            "features": [round_sig(v) for v in self.features],
            "duration_s": round_sig(self.duration_s),
            "acoustic_quality": round_sig(self.acoustic_quality),
        }
        if include_latent and self.latent is not None:
            d["latent"] = self.latent.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "UtteranceRecord":
        latent = d.get("latent")
        try:
            return cls(
                utterance_id=str(d["utterance_id"]),
                group_id=str(d["group_id"]),
                ctc_score=float(d["ctc_score"]),
                embedding=d["embedding"],
                features=d["features"],
                duration_s=float(d["duration_s"]),
                acoustic_quality=float(d["acoustic_quality"]),
                latent=None if latent is None else LatentState(
                    base_quality=float(latent["base_quality"]),
                    noise_level=float(latent["noise_level"]),
                    device_distortion=float(latent["device_distortion"]),
                ),
            )
        except KeyError as exc:
            raise ManifestError(f"missing field {exc.args[0]!r}") from None
        except (TypeError, ValueError) as exc:
            raise ManifestError(f"bad field value: {exc}") from None

    def canonical(self) -> "UtteranceRecord":
        """This record with every real rounded as it would be on disk."""
        return UtteranceRecord.from_dict(self.to_dict())


@dataclass(frozen=True)
class Manifest:
    records: tuple[UtteranceRecord, ...]
    variant: str = IDENTITY
    embedding_dim: int = field(default=-1)
    feature_dim: int = field(default=-1)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        check_variant(self.variant)
        if not self.records:
            raise ManifestError("manifest must be non-empty")
        first = self.records[0]
        if self.embedding_dim < 0:
            object.__setattr__(self, "embedding_dim", len(first.embedding))
        if self.feature_dim < 0:
            object.__setattr__(self, "feature_dim", len(first.features))
        self._validate()
        object.__setattr__(self, "_index", {r.utterance_id: i for i, r in enumerate(self.records)})

    def _validate(self) -> None:
        seen = set()
        for i, rec in enumerate(self.records, start=1):
            try:
                rec.validate()
            except ManifestError as exc:
                raise ManifestError(str(exc), lineno=i) from None
            if rec.utterance_id in seen:
                raise ManifestError(f"duplicate utterance_id {rec.utterance_id!r}", lineno=i)
            seen.add(rec.utterance_id)
            if len(rec.embedding) != self.embedding_dim:
                raise ManifestError(
                    f"embedding dimension {len(rec.embedding)} != {self.embedding_dim}", lineno=i)
            if len(rec.features) != self.feature_dim:
                raise ManifestError(
                    f"feature dimension {len(rec.features)} != {self.feature_dim}", lineno=i)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __contains__(self, utterance_id: str) -> bool:
        return utterance_id in self._index

    def __getitem__(self, utterance_id: str) -> UtteranceRecord:
        return self.records[self._index[utterance_id]]

    def index_of(self, utterance_id: str) -> int:
        return self._index[utterance_id]

    @property
    def ids(self) -> list[str]:
        return [r.utterance_id for r in self.records]

    def groups(self) -> dict[str, list[UtteranceRecord]]:
        """Records per group_id, groups in order of first appearance."""
        out: dict[str, list[UtteranceRecord]] = {}
        for r in self.records:
            out.setdefault(r.group_id, []).append(r)
        return out

    def subset(self, keep: Iterable[str]) -> "Manifest":
        keep = set(keep)
        recs = [r for r in self.records if r.utterance_id in keep]
        return replace(self, records=tuple(recs))

    def with_records(self, records: Sequence[UtteranceRecord]) -> "Manifest":
        return replace(self, records=tuple(records))

    def canonical(self) -> "Manifest":
        recs = sorted((r.canonical() for r in self.records), key=lambda r: r.utterance_id)
        return replace(self, records=tuple(recs))


def variant_path(path, variant: str) -> Path:
    """``corpus.jsonl`` -> ``corpus.<variant>.jsonl``; identity maps to the path itself."""
    path = Path(path)
    if variant == IDENTITY:
        return path
    return path.with_name(f"{path.stem}.{variant}{path.suffix}")


def _variant_from_name(path: Path) -> str:
    parts = path.name.split(".")
    if len(parts) >= 3 and parts[-2] in _registry:
        return parts[-2]
    return IDENTITY


def load_manifest(path, variant: Optional[str] = None) -> Manifest:
    """Read a manifest; the variant defaults to the one named by the file suffix."""
    path = Path(path)
    if variant is None:
        variant = _variant_from_name(path)
    records = []
    seen: dict[str, int] = {}
    dims: Optional[tuple[int, int]] = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"malformed JSON ({exc.msg})", lineno, path) from None
            if not isinstance(obj, dict):
                raise ManifestError("record must be a JSON object", lineno, path)
            try:
                rec = UtteranceRecord.from_dict(obj)
                rec.validate()
            except ManifestError as exc:
                raise ManifestError(str(exc), lineno, path) from None
            if rec.utterance_id in seen:
                raise ManifestError(
                    f"duplicate utterance_id {rec.utterance_id!r} (first on line {seen[rec.utterance_id]})",
                    lineno, path)
            seen[rec.utterance_id] = lineno
            d = (len(rec.embedding), len(rec.features))
            if dims is None:
                dims = d
            elif d != dims:
                raise ManifestError(
                    f"inconsistent dimensions (embedding, features) {d}, expected {dims}", lineno, path)
            records.append(rec)
    if not records:
        raise ManifestError("manifest is empty", path=path)
    return Manifest(tuple(records), variant=variant)


def dumps_record(rec: UtteranceRecord) -> str:
    return json.dumps(rec.to_dict(), ensure_ascii=False, separators=(",", ":"))


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_manifest(m: Manifest, path) -> None:
    """Write ``m`` in canonical form: sorted by utterance_id, reals at 6 significant digits."""
    if not m.records:
        raise ManifestError("manifest must be non-empty")
    lines = [dumps_record(r) for r in sorted(m.records, key=lambda r: r.utterance_id)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_variants(path, variants: Sequence[str]) -> dict[str, Manifest]:
    return {v: load_manifest(variant_path(path, v), variant=v) for v in variants}


def write_variants(manifests: Mapping[str, Manifest], path) -> dict[str, Path]:
    out = {}
    for v, m in manifests.items():
        p = variant_path(path, v)
        write_manifest(m, p)
        out[v] = p
    return out
