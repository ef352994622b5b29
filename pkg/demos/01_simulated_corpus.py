"""A simulated pool of noisy web speech, and what pre-screening keeps.

    python3 demos/01_simulated_corpus.py
"""
import numpy as np

from ttsops.prescreen import PrescreenConfig, group_compactness, prescreen
from ttsops.sim_env import SimConfig, generate_corpus, q_of

cfg = SimConfig(rng_seed=0)
corpus = generate_corpus(cfg)
print(f"{len(corpus)} candidate utterances from {len(corpus.groups())} groups")

# every record carries its hidden ground truth; q is the training quality the loop must recover
q = np.array([q_of(r, cfg) for r in corpus])
aq = np.array([r.acoustic_quality for r in corpus])
print(f"latent training quality: mean {q.mean():.2f}, sd {q.std():.2f}")
print(f"acoustic quality vs training quality: r = {np.corrcoef(aq, q)[0, 1]:.2f}")

# group spread of the embeddings; inconsistent groups sit above 7
comp = np.array(list(group_compactness(corpus).values()))
print(f"group compactness: median {np.median(comp):.2f}, {np.sum(comp > 7)} groups above 7")

pool = prescreen(corpus, PrescreenConfig(ctc_threshold=-0.3, compactness_low=1.0, compactness_high=7.0))
print(f"after pre-screening: {len(pool)} utterances, {len(pool.groups())} speakers")
