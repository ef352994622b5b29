"""End-to-end corpus construction with on-disk stage artifacts.

Stages, each reading and writing files under the output directory::

    simgen     corpus.jsonl, corpus.<variant>.jsonl          (simulation mode)
    prescreen  prescreened.jsonl, prescreened.<variant>.jsonl
    loop       quality.jsonl, quality.speakers.jsonl
    select     selection.jsonl
    retrain    retrained.speakers.jsonl (+ retrained.actual.jsonl in simulation mode)
    report     report.json, report.csv

With ``resume=True`` a stage whose outputs already exist is skipped. Every
stage loads its inputs back from disk, so a resumed run produces the same
report bytes as an uninterrupted one.
"""
from __future__ import annotations

import importlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

from .loop import LoopConfig, load_quality, run_variant_loops, write_quality
from .manifest import (IDENTITY, Manifest, atomic_write_text, load_variants, variant_order,
                       variant_path, write_variants)
from .metrics import Report, build_report, parse_grid, speaker_embeddings
from .prescreen import PrescreenConfig, prescreen
from .regressor import RegressorConfig
from .selection import (CorpusSelection, acoustic_switch, acoustic_threshold_select, load_selection,
                        select_speaker_wise, select_top_n, switch_variants, theta_for_size, unselected,
                        write_selection)
from .seeding import derive_seed
from .sim_env import (SimConfig, SimEvaluator, SimTrainer, generate_variants, reference_speaker_scores)

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "TTSOPS_OUTPUT_DIR"
STAGES = ("simgen", "prescreen", "loop", "select", "retrain", "report")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException, completed: Mapping[str, list[str]]):
        self.stage = stage
        self.cause = cause
        self.completed = dict(completed)
        done = "; ".join(f"{s}: {', '.join(p)}" for s, p in self.completed.items()) or "none"
        super().__init__(f"stage {stage!r} failed: {type(cause).__name__}: {cause} "
                         f"(completed artifacts: {done}; re-run with --resume)")


def normalize_method(name: str) -> str:
    name = name.replace("-", "_").lower()
    aliases = {"acoustic": "acoustic_theta", "utt": "ours_utt", "spk": "ours_spk"}
    name = aliases.get(name, name)
    if name not in ("unselected", "acoustic_theta", "ours_utt", "ours_spk"):
        raise ConfigError(f"unknown selection method {name!r}")
    return name


@dataclass
class SelectionSpec:
    method: str = "ours_utt"
    n: Optional[int] = None
    n_fraction: Optional[float] = 0.25
    theta: Optional[float] = None

    def __post_init__(self):
        self.method = normalize_method(self.method)


@dataclass
class PipelineConfig:
    output_dir: Path
    seed: int = 0
    sim: Optional[SimConfig] = None
    real: Optional[dict] = None
    variants: tuple[str, ...] = ("identity", "denoise", "restore")
    prescreen: PrescreenConfig = field(default_factory=PrescreenConfig)
    sampling_fraction: float = 1.0
    regressor: RegressorConfig = field(default_factory=RegressorConfig)
    max_workers: int = 1
    selection: SelectionSpec = field(default_factory=SelectionSpec)
    grid: str = "1.0:5.0:0.05"

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        if (self.sim is None) == (self.real is None):
            raise ConfigError("exactly one of the 'sim' and 'real' stanzas is required")
        try:
            self.variants = tuple(variant_order(self.variants))
        except KeyError as exc:
            raise ConfigError(str(exc)) from None
        if self.real is not None:
            for key in ("pool", "adapter", "reference_scores"):
                if key not in self.real:
                    raise ConfigError(f"real stanza lacks {key!r}")
        try:
            parse_grid(self.grid)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def loop_config(self) -> LoopConfig:
        return LoopConfig(sampling_fraction=self.sampling_fraction, regressor=self.regressor,
                          seed=self.seed, variants=self.variants)

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "variants": list(self.variants),
            "prescreen": {"ctc_threshold": self.prescreen.ctc_threshold,
                          "compactness_low": self.prescreen.compactness_low,
                          "compactness_high": self.prescreen.compactness_high},
            "loop": {"sampling_fraction": self.sampling_fraction, "regressor": self.regressor.to_dict(),
                     "max_workers": self.max_workers},
            "selection": {"method": self.selection.method, "n": self.selection.n,
                          "n_fraction": self.selection.n_fraction, "theta": self.selection.theta},
            "report": {"grid": self.grid},
        }
        if self.sim is not None:
            d["sim"] = self.sim.to_dict()
        else:
            d["real"] = dict(self.real)
        return d

    @classmethod
    def from_dict(cls, d: Mapping, output_dir=None, base_dir=None) -> "PipelineConfig":
        d = dict(d)
        try:
            out = output_dir or os.environ.get(OUTPUT_DIR_ENV) or d.get("output_dir")
            if out is None:
                raise ConfigError("no output_dir (config, flag or $%s)" % OUTPUT_DIR_ENV)
            seed = int(d.get("seed", 0))
            sim = None
            if "sim" in d:
                sd = dict(d["sim"] or {})
                sd.setdefault("rng_seed", seed)
                sim = SimConfig.from_dict(sd)
            real = d.get("real")
            if real is not None and base_dir is not None:
                real = dict(real)
                for key in ("pool", "reference_scores"):
                    if key in real:
                        real[key] = str(Path(base_dir, real[key]))
            loop = dict(d.get("loop", {}))
            sel = dict(d.get("selection", {}))
            if "method" in sel:
                sel["method"] = normalize_method(sel["method"])
            return cls(
                output_dir=Path(out),
                seed=seed,
                sim=sim,
                real=real,
                variants=tuple(d.get("variants", ("identity", "denoise", "restore"))),
                prescreen=PrescreenConfig(**d.get("prescreen", {})),
                sampling_fraction=float(loop.get("sampling_fraction", 1.0)),
                regressor=RegressorConfig.from_dict(loop.get("regressor", {})),
                max_workers=int(loop.get("max_workers", 1)),
                selection=SelectionSpec(**sel),
                grid=d.get("report", {}).get("grid", "1.0:5.0:0.05"),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid pipeline config: {exc}") from exc


def load_pipeline_config(path, output_dir=None) -> PipelineConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return PipelineConfig.from_dict(d, output_dir=output_dir, base_dir=path.parent)


# ---------------------------------------------------------------------------
# adapters and small file formats


def load_adapter(spec: str):
    """``"package.module:factory"`` -> ``(trainer, evaluator)`` from ``factory()``."""
    mod_name, _, attr = spec.partition(":")
    if not attr:
        raise ConfigError(f"adapter must look like 'module:factory', got {spec!r}")
    try:
        factory = getattr(importlib.import_module(mod_name), attr)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot load adapter {spec!r}: {exc}") from exc
    return factory()


def write_speaker_scores(scores: Mapping[str, float], path) -> None:
    lines = [json.dumps({"group_id": g, "score": float(f"{s:.6g}")}, separators=(",", ":"))
             for g, s in sorted(scores.items())]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_speaker_scores(path) -> dict[str, float]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                r = json.loads(line)
                out[r["group_id"]] = float(r["score"])
    return out


def write_report(report: Report, path, csv_path=None) -> None:
    atomic_write_text(path, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    if csv_path is not None:
        rows = ["threshold,count"] + [f"{g},{c}" for g, c in zip(report.grid, report.histogram)]
        atomic_write_text(csv_path, "\n".join(rows) + "\n")


# ---------------------------------------------------------------------------
# stage bodies, shared with the CLI


def resolve_n(spec: SelectionSpec, pool: Manifest, pool_variants: Mapping[str, Manifest]) -> int:
    """Target size: explicit n, else the size of the acoustic selection at theta, else a pool fraction."""
    if spec.n is not None:
        return int(spec.n)
    if spec.theta is not None and spec.method != "acoustic_theta":
        return len(acoustic_threshold_select(pool_variants, spec.theta))
    if spec.n_fraction is not None:
        return max(1, round(spec.n_fraction * len(pool)))
    raise ConfigError("selection needs n, n_fraction or theta")


def make_selection(spec: SelectionSpec, quality, pool_variants: Mapping[str, Manifest]) -> CorpusSelection:
    variants = variant_order(pool_variants)
    pool = pool_variants[IDENTITY] if IDENTITY in pool_variants else pool_variants[variants[0]]
    method = spec.method
    if method == "unselected":
        return unselected(pool)
    if method == "acoustic_theta":
        if spec.theta is not None:
            return acoustic_threshold_select(pool_variants, spec.theta)
        n = resolve_n(spec, pool, pool_variants)
        theta = theta_for_size(list(acoustic_switch(pool_variants).values()), n)
        sel = acoustic_threshold_select(pool_variants, theta)
        return CorpusSelection(sel.entries, "acoustic_theta", provenance={"theta": theta, "matched_n": n})
    n = resolve_n(spec, pool, pool_variants)
    if method == "ours_utt":
        sel = select_top_n(switch_variants(quality, variants), n)
        return CorpusSelection(sel.entries, "ours_utt", n=n, provenance={"rule": "top_n", "variants": variants})
    # speaker-wise: best variant per speaker by speaker pseudo MOS (earliest variant on ties)
    speakers = sorted(pool.groups())
    spk_score, spk_variant = {}, {}
    for g in speakers:
        best_v = max(variants, key=lambda v: (quality.speaker_scores[v][g], -variants.index(v)))
        spk_variant[g] = best_v
        spk_score[g] = quality.speaker_scores[best_v][g]
    return select_speaker_wise(spk_score, pool, n, spk_variant)


def retrain_and_evaluate(selection: CorpusSelection, pool_variants: Mapping[str, Manifest],
                         trainer, evaluator, seed: int):
    model = trainer.train(selection, pool_variants, derive_seed(seed, "retrain"))
    eval_seed = derive_seed(seed, "final-eval")
    first = pool_variants[IDENTITY] if IDENTITY in pool_variants else next(iter(pool_variants.values()))
    scores = {g: float(evaluator.eval_speaker(model, g, eval_seed)) for g in sorted(first.groups())}
    return model, scores


# ---------------------------------------------------------------------------


class Pipeline:
    def __init__(self, cfg: PipelineConfig, resume: bool = False):
        self.cfg = cfg
        self.resume = resume
        self.out = cfg.output_dir
        self.completed: dict[str, list[str]] = {}
        self.timings: dict[str, float] = {}
        if cfg.sim is not None:
            self.trainer, self.evaluator = SimTrainer(cfg.sim), SimEvaluator(cfg.sim)
        else:
            self.trainer, self.evaluator = load_adapter(cfg.real["adapter"])

    # paths
    def p(self, name: str) -> Path:
        return self.out / name

    def _variant_paths(self, stem: str) -> list[Path]:
        return [variant_path(self.p(stem), v) for v in self._pool_variants()]

    def _pool_variants(self) -> list[str]:
        # prescreening reads the uncleansed manifest, so identity is always materialized
        return variant_order(set(self.cfg.variants) | {IDENTITY})

    def _stage(self, name: str, outputs: list[Path], body) -> None:
        if self.resume and all(p.exists() for p in outputs):
            log.info("stage %s: outputs present, skipped", name)
            self.completed[name] = [str(p) for p in outputs]
            return
        t0 = time.perf_counter()
        try:
            body()
        except Exception as exc:
            raise StageError(name, exc, self.completed) from exc
        self.timings[name] = time.perf_counter() - t0
        self.completed[name] = [str(p) for p in outputs]

    # stages
    def simgen(self) -> None:
        corpus = self.p("corpus.jsonl")
        if self.cfg.sim is None:
            return

        def body():
            write_variants(generate_variants(self.cfg.sim, self._pool_variants()), corpus)
        self._stage("simgen", self._variant_paths("corpus.jsonl"), body)

    def _raw_pool_path(self) -> Path:
        return self.p("corpus.jsonl") if self.cfg.sim is not None else Path(self.cfg.real["pool"])

    def prescreen(self) -> None:
        def body():
            raw = load_variants(self._raw_pool_path(), self._pool_variants())
            kept = prescreen(raw[IDENTITY], self.cfg.prescreen)
            write_variants({v: m.subset(kept.ids) for v, m in raw.items()}, self.p("prescreened.jsonl"))
        self._stage("prescreen", self._variant_paths("prescreened.jsonl"), body)

    def pool_variants(self, loop_only: bool = False) -> dict[str, Manifest]:
        vs = self.cfg.variants if loop_only else self._pool_variants()
        return load_variants(self.p("prescreened.jsonl"), vs)

    def loop(self) -> None:
        out = self.p("quality.jsonl")

        def body():
            pv = self.pool_variants(loop_only=True)
            q = run_variant_loops(pv, self.trainer, self.evaluator, self.cfg.loop_config,
                                  max_workers=self.cfg.max_workers)
            write_quality(q, out)
        self._stage("loop", [out, self.p("quality.speakers.jsonl")], body)

    def select(self) -> None:
        out = self.p("selection.jsonl")

        def body():
            q = load_quality(self.p("quality.jsonl"))
            spec = self.cfg.selection
            pv = self.pool_variants(loop_only=True)
            write_selection(make_selection(spec, q, pv), out)
        self._stage("select", [out], body)

    def retrain(self) -> None:
        outs = [self.p("retrained.speakers.jsonl"), self.p("reference.speakers.jsonl")]
        if self.cfg.sim is not None:
            outs.append(self.p("retrained.actual.jsonl"))

        def body():
            sel = load_selection(self.p("selection.jsonl"))
            pv = self.pool_variants()
            model, scores = retrain_and_evaluate(sel, pv, self.trainer, self.evaluator, self.cfg.seed)
            write_speaker_scores(scores, outs[0])
            if self.cfg.sim is not None:
                write_speaker_scores(reference_speaker_scores(self.cfg.sim, self.cfg.seed), outs[1])
                write_speaker_scores({g: model.quality[g] for g in scores}, outs[2])
            else:
                write_speaker_scores(load_speaker_scores(self.cfg.real["reference_scores"]), outs[1])
        self._stage("retrain", outs, body)

    def report(self) -> None:
        out, csv = self.p("report.json"), self.p("report.csv")

        def body():
            scores = load_speaker_scores(self.p("retrained.speakers.jsonl"))
            ref = load_speaker_scores(self.p("reference.speakers.jsonl"))
            actual_path = self.p("retrained.actual.jsonl")
            actual = load_speaker_scores(actual_path) if actual_path.exists() else None
            sel = load_selection(self.p("selection.jsonl"))
            pool = self.pool_variants()[IDENTITY]
            seen = sorted({pool[u].group_id for u in sel.ids})
            extra = {"method": sel.method, "selected": len(sel), "pool_size": len(pool),
                     "speakers": len(pool.groups()), "seen_speakers": len(seen),
                     "variant_counts": dict(sorted(sel.variant_counts().items())),
                     "provenance": sel.provenance}
            rep = build_report(scores, ref, parse_grid(self.cfg.grid), speaker_embeddings(pool),
                               actual_scores=actual, extra=extra)
            write_report(rep, out, csv)
        self._stage("report", [out, csv], body)

    def run(self) -> dict:
        self.out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(self.p("config.json"), json.dumps(self.cfg.to_dict(), indent=2, sort_keys=True) + "\n")
        for name in STAGES:
            getattr(self, name)()
        timings = {k: round(v, 3) for k, v in self.timings.items()}
        atomic_write_text(self.p("timings.json"), json.dumps(timings, indent=2, sort_keys=True) + "\n")
        with open(self.p("report.json"), encoding="utf-8") as fh:
            return json.load(fh)


def run_pipeline(cfg: PipelineConfig, resume: bool = False) -> dict:
    """Run every stage; returns the report as a dict."""
    return Pipeline(cfg, resume=resume).run()

