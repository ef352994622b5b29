"""Plugging in your own trainer and evaluator.

The loop only needs two objects:

    trainer.train(selection, pool, seed) -> model
    evaluator.eval_speaker(model, speaker, seed) -> pseudo MOS in [1, 5]

``pool`` is the mapping of variant manifests; ``selection.entries`` lists the
(utterance_id, variant) pairs to train on. For the ``run`` subcommand, expose a
zero-argument factory returning ``(trainer, evaluator)`` and point the config's
``real.adapter`` at it as ``"package.module:factory"``.

    python3 demos/05_custom_adapter.py
"""
import numpy as np

from ttsops.loop import LoopConfig, run_quality_loop
from ttsops.manifest import Manifest, UtteranceRecord
from ttsops.regressor import RegressorConfig


class MeanDurationTrainer:
    """Toy "model": longer utterances make a better voice."""

    def train(self, selection, pool, seed):
        manifest = pool if isinstance(pool, Manifest) else pool["identity"]
        per_spk = {}
        for uid, _ in selection.entries:
            rec = manifest[uid]
            per_spk.setdefault(rec.group_id, []).append(rec.duration_s)
        return {g: 1.0 + 4.0 * min(np.mean(d) / 10.0, 1.0) for g, d in per_spk.items()}


class LookupEvaluator:
    def eval_speaker(self, model, speaker, seed):
        return model.get(speaker, 1.0)


rng = np.random.default_rng(0)
records = []
for s in range(12):
    center = rng.normal(size=4)
    for j in range(10):
        dur = float(rng.uniform(1, 12))
        records.append(UtteranceRecord(
            utterance_id=f"s{s:02d}_{j}", group_id=f"s{s:02d}", ctc_score=-0.05,
            embedding=center + rng.normal(0, 0.3, 4), features=[dur, rng.normal(), rng.normal()],
            duration_s=dur, acoustic_quality=3.0))
pool = Manifest(tuple(records))

q = run_quality_loop(pool, MeanDurationTrainer(), LookupEvaluator(), LoopConfig(regressor=RegressorConfig(k=5)))
scores = q.for_variant("identity")
durs = [pool[u].duration_s for u in scores]
print(f"{len(scores)} utterances scored; corr(score, duration) = {np.corrcoef(list(scores.values()), durs)[0, 1]:.2f}")
