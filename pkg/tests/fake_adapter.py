"""Stand-in "real" adapter used by the real-mode tests."""
from ttsops.sim_env import SimConfig, SimEvaluator, SimTrainer

CFG = SimConfig(n_speakers=25, utterances_per_speaker=(8, 12), rng_seed=11)
FAIL = {"retrain": False}


class FlakyTrainer(SimTrainer):
    def train(self, selection, pool, seed):
        if FAIL["retrain"] and selection.method != "unselected":
            raise RuntimeError("node lost")
        return super().train(selection, pool, seed)


def factory():
    return FlakyTrainer(CFG), SimEvaluator(CFG)
