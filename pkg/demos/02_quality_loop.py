"""Scoring training data by training, evaluating per speaker and regressing back to utterances.

    python3 demos/02_quality_loop.py
"""
from scipy.stats import spearmanr

from ttsops.loop import LoopConfig, run_variant_loops
from ttsops.prescreen import prescreen
from ttsops.selection import switch_variants
from ttsops.sim_env import SimConfig, SimEvaluator, SimTrainer, best_latent_variant, generate_corpus, \
    generate_variants, q_of

cfg = SimConfig(rng_seed=1)
pool = prescreen(generate_corpus(cfg))
variants = generate_variants(cfg, base=pool)  # identity / denoise / restore versions of every utterance

# one independent loop per cleansing variant
quality = run_variant_loops(variants, SimTrainer(cfg), SimEvaluator(cfg),
                            LoopConfig(seed=1, variants=tuple(variants)), max_workers=3)

for v in quality.variants:
    pred = quality.for_variant(v)
    truth = [q_of(variants[v][u], cfg) for u in pred]
    print(f"{v:>8}: Spearman(predicted, latent) = {spearmanr(list(pred.values()), truth)[0]:.2f}")

switched = switch_variants(quality)
picks = [v for v, _ in switched.values()]
oracle = [best_latent_variant(variants["identity"][u], cfg)[0] for u in switched]
for v in quality.variants:
    print(f"{v:>8}: chosen for {picks.count(v) / len(picks):5.1%}  (ground-truth best: {oracle.count(v) / len(oracle):5.1%})")
agree = sum(a == b for a, b in zip(picks, oracle)) / len(picks)
print(f"switching agrees with the ground-truth variant on {agree:.1%} of utterances")
