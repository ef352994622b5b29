"""Utterance-wise vs speaker-wise vs acoustic-threshold selection at the same corpus size.

    python3 demos/03_compare_selections.py [seed]
"""
import sys

import numpy as np

from ttsops.loop import LoopConfig, run_variant_loops
from ttsops.metrics import build_report, parse_grid, speaker_embeddings
from ttsops.pipeline import SelectionSpec, make_selection, retrain_and_evaluate
from ttsops.prescreen import prescreen
from ttsops.sim_env import SimConfig, SimEvaluator, SimTrainer, generate_corpus, generate_variants, \
    reference_speaker_scores

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
cfg = SimConfig(rng_seed=seed)
pool = prescreen(generate_corpus(cfg))
pv = generate_variants(cfg, base=pool)
trainer, evaluator = SimTrainer(cfg), SimEvaluator(cfg)
quality = run_variant_loops(pv, trainer, evaluator, LoopConfig(seed=seed, variants=tuple(pv)))

n = round(0.25 * len(pool))
reference = reference_speaker_scores(cfg, seed)
emb = speaker_embeddings(pool)
grid = parse_grid("3.0:4.5:0.5")
print(f"pool {len(pool)} utterances, selecting n = {n}\n")
print(f"{'method':<16}{'size':>6}{'mean MOS':>10}{'HQ speakers':>16}{'MST w':>9}   > 3.0/3.5/4.0/4.5")
for method in ("unselected", "acoustic", "ours_spk", "ours_utt"):
    sel = make_selection(SelectionSpec(method, n=n), quality, pv)
    _, scores = retrain_and_evaluate(sel, pv, trainer, evaluator, seed)
    rep = build_report(scores, reference, grid, emb)
    print(f"{method:<16}{len(sel):>6}{np.mean(list(scores.values())):>10.3f}"
          f"{rep.hq.count:>7} ({rep.hq.ratio_str:>6}){rep.mst_cost:>9.1f}   {rep.histogram}")
