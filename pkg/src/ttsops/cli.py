"""Command-line entry point: ``ttsops <subcommand>``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 stage failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from datetime import timedelta
from pathlib import Path

from . import __version__
from .loop import LoopConfig, LoopError, cost_account, format_duration, load_quality, run_variant_loops, write_quality
from .manifest import ManifestError, load_manifest, load_variants, variant_order, write_manifest, write_variants
from .metrics import build_report, parse_grid, speaker_embeddings
from .pipeline import (ConfigError, PipelineConfig, SelectionSpec, StageError, load_adapter,
                       load_pipeline_config, load_speaker_scores, make_selection, retrain_and_evaluate,
                       run_pipeline, write_report, write_speaker_scores)
from .prescreen import PrescreenConfig, prescreen
from .regressor import RegressorConfig, RegressorError, dump_regressor
from .selection import SelectionError, load_selection, select_top_n, switch_variants, write_selection
from .sim_env import SimConfig, SimError, SimEvaluator, SimTrainer, generate_variants, load_sim_config

log = logging.getLogger("ttsops")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_STAGE = 0, 2, 3, 4


def _variants(text: str) -> list[str]:
    try:
        return variant_order(v.strip() for v in text.split(",") if v.strip())
    except KeyError as exc:
        raise ConfigError(str(exc)) from None


def _interval(text: str) -> tuple[float, float]:
    lo, _, hi = text.partition(":")
    return float(lo), float(hi)


def _duration(text: str) -> timedelta:
    """``1h26m27s`` / ``9m7s`` / ``42s`` -> timedelta."""
    m = re.fullmatch(r"\s*(?:(\d+)h)?\s*(?:(\d+)m)?\s*(?:(\d+)s)?\s*", text)
    if not m or not any(m.groups()):
        raise ConfigError(f"bad duration {text!r}")
    h, mi, s = (int(g or 0) for g in m.groups())
    return timedelta(hours=h, minutes=mi, seconds=s)


def _trainer(args):
    if getattr(args, "adapter", None):
        return load_adapter(args.adapter)
    if not getattr(args, "sim", None):
        raise ConfigError("a trainer is required: pass --sim <sim.json> or --adapter module:factory")
    cfg = load_sim_config(args.sim)
    return SimTrainer(cfg), SimEvaluator(cfg)


# ---------------------------------------------------------------------------


def cmd_simgen(args) -> int:
    cfg = load_sim_config(args.config) if args.config else SimConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    variants = _variants(args.variants) if args.variants else ["identity"]
    paths = write_variants(generate_variants(cfg, variants), args.out)
    for v, p in paths.items():
        print(f"{v}\t{p}")
    return EXIT_OK


def cmd_prescreen(args) -> int:
    cfg = PrescreenConfig(args.ctc, *_interval(args.compactness))
    variants = _variants(args.variants) if args.variants else None
    if variants is None:
        m = load_manifest(args.inp)
        kept = prescreen(m, cfg)
        write_manifest(kept, args.out)
        print(f"kept {len(kept)}/{len(m)}")
        return EXIT_OK
    raw = load_variants(args.inp, variant_order(set(variants) | {"identity"}))
    kept = prescreen(raw["identity"], cfg)
    write_variants({v: m.subset(kept.ids) for v, m in raw.items()}, args.out)
    print(f"kept {len(kept)}/{len(raw['identity'])}")
    return EXIT_OK


def cmd_loop(args) -> int:
    trainer, evaluator = _trainer(args)
    variants = _variants(args.variants)
    pv = load_variants(args.pool, variants)
    reg = RegressorConfig(kind=args.regressor, k=args.k, lam=args.lam)
    cfg = LoopConfig(sampling_fraction=args.fraction, regressor=reg, seed=args.seed, variants=tuple(variants))
    q = run_variant_loops(pv, trainer, evaluator, cfg, max_workers=args.workers)
    write_quality(q, args.out)
    if args.dump_regressor:
        base = Path(args.dump_regressor)
        for v, r in q.regressors.items():
            dump_regressor(r, base.with_name(f"{base.stem}.{v}{base.suffix}"))
    print(f"scored {len(q)} (utterance, variant) pairs")
    return EXIT_OK


def cmd_select(args) -> int:
    spec = SelectionSpec(method=args.method, n=args.n, n_fraction=args.fraction, theta=args.theta)
    quality = load_quality(args.quality) if args.quality else None
    if spec.method in ("ours_utt", "ours_spk") and quality is None:
        raise ConfigError(f"--quality is required for {spec.method}")
    if args.pool:
        variants = _variants(args.variants) if args.variants else (quality.variants if quality else ["identity"])
        pv = load_variants(args.pool, variants)
    elif spec.method == "ours_utt" and spec.n is not None:
        pv = {}
    else:
        raise ConfigError(f"--pool is required for {spec.method}")
    if not pv:
        sel = select_top_n(switch_variants(quality), spec.n)
    else:
        sel = make_selection(spec, quality, pv)
    write_selection(sel, args.out)
    print(f"{sel.method}: {len(sel)} utterances")
    return EXIT_OK


def cmd_retrain(args) -> int:
    trainer, evaluator = _trainer(args)
    sel = load_selection(args.selection)
    variants = _variants(args.variants) if args.variants else sorted(sel.variant_counts())
    pv = load_variants(args.pool, variant_order(set(variants) | {"identity"}))
    _, scores = retrain_and_evaluate(sel, pv, trainer, evaluator, args.seed)
    write_speaker_scores(scores, args.out)
    print(f"evaluated {len(scores)} speakers")
    return EXIT_OK


def cmd_report(args) -> int:
    scores = load_speaker_scores(args.scores)
    ref = load_speaker_scores(args.reference)
    emb = speaker_embeddings(load_manifest(args.pool)) if args.pool else None
    actual = load_speaker_scores(args.actual) if args.actual else None
    cost = None
    if args.cost:
        parts = [_duration(p) for p in args.cost.split(",")]
        if len(parts) != 3:
            raise ConfigError("--cost takes train,eval,regress")
        cost = {"training": format_duration(parts[0]), "evaluation": format_duration(parts[1]),
                "regression": format_duration(parts[2]), "total": format_duration(cost_account(*parts))}
    rep = build_report(scores, ref, parse_grid(args.grid), emb, actual_scores=actual, cost=cost)
    write_report(rep, args.out, args.plot_csv)
    print(f"high-quality speakers: {rep.hq.count}/{rep.hq.total} ({rep.hq.ratio_str})")
    return EXIT_OK


def cmd_run(args) -> int:
    if args.config:
        cfg = load_pipeline_config(args.config, output_dir=args.out_dir)
    else:
        cfg = PipelineConfig.from_dict({"sim": {}}, output_dir=args.out_dir)
    if args.seed is not None:
        cfg.seed = args.seed
        if cfg.sim is not None:
            cfg.sim = cfg.sim.with_seed(args.seed)
    if args.method:
        cfg.selection = SelectionSpec(args.method, args.n, cfg.selection.n_fraction, args.theta)
    if args.fraction is not None:
        cfg.sampling_fraction = args.fraction
    if args.workers is not None:
        cfg.max_workers = args.workers
    report = run_pipeline(cfg, resume=args.resume)
    hq = report["hq"]
    print(f"report: {cfg.output_dir / 'report.json'}")
    print(f"high-quality speakers: {hq['count']}/{hq['total']} ({hq['ratio_str']}); "
          f"mean pseudo MOS {report['mean_score']}")
    return EXIT_OK


def cmd_version(args) -> int:
    print(__version__)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ttsops", description="Evaluation-in-the-loop TTS corpus construction.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simgen", help="generate a simulated candidate corpus")
    p.add_argument("--config", help="SimConfig JSON (defaults if omitted)")
    p.add_argument("--out", required=True)
    p.add_argument("--variants", help="comma list, writes <stem>.<variant>.jsonl siblings")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simgen)

    p = sub.add_parser("prescreen", help="CTC and speaker-compactness filtering")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ctc", type=float, default=-0.3)
    p.add_argument("--compactness", default="1:7", help="low:high")
    p.add_argument("--variants", help="also subset these sibling variant manifests")
    p.set_defaults(func=cmd_prescreen)

    p = sub.add_parser("loop", help="score training data quality per (utterance, variant)")
    p.add_argument("--pool", required=True)
    p.add_argument("--variants", default="identity")
    p.add_argument("--sim", help="SimConfig JSON for the simulated trainer/evaluator")
    p.add_argument("--adapter", help="module:factory returning (trainer, evaluator)")
    p.add_argument("--out", required=True)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--regressor", choices=("knn", "ridge"), default="knn")
    p.add_argument("--k", type=int, default=RegressorConfig().k)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--dump-regressor", help="write fitted regressors as JSON (<stem>.<variant>.json)")
    p.set_defaults(func=cmd_loop)

    p = sub.add_parser("select", help="build a corpus selection")
    p.add_argument("--quality")
    p.add_argument("--method", required=True, help="ours-utt | ours-spk | acoustic | unselected")
    p.add_argument("--n", type=int)
    p.add_argument("--fraction", type=float, default=0.25, help="n as a fraction of the pool when --n and --theta are absent")
    p.add_argument("--theta", type=float)
    p.add_argument("--pool", help="pre-screened manifest (variant siblings alongside)")
    p.add_argument("--variants")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("retrain", help="train on a selection and evaluate every speaker")
    p.add_argument("--selection", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--variants")
    p.add_argument("--sim")
    p.add_argument("--adapter")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("report", help="HQ speakers, MST diversity, histograms, correlation")
    p.add_argument("--scores", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--grid", default="1.0:5.0:0.05")
    p.add_argument("--pool", help="manifest with speaker embeddings, enables MST cost")
    p.add_argument("--actual", help="actual scores per speaker for correlation")
    p.add_argument("--cost", help="train,eval,regress durations such as 1h26m27s,1h11m36s,9m7s")
    p.add_argument("--out", required=True)
    p.add_argument("--plot-csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("run", help="full pipeline")
    p.add_argument("--config")
    p.add_argument("--out-dir")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--method")
    p.add_argument("--n", type=int)
    p.add_argument("--theta", type=float)
    p.add_argument("--fraction", type=float)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("version")
    p.set_defaults(func=cmd_version)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except LoopError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ConfigError, SimError, RegressorError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ManifestError, SelectionError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
