import numpy as np
import pytest

from ttsops.manifest import LatentState, Manifest, UtteranceRecord
from ttsops.sim_env import SimConfig, TrainerParams


def random_manifest(rng, n_groups=None, d=4, f=3, with_latent=True, variant="identity"):
    n_groups = n_groups or int(rng.integers(1, 6))
    recs = []
    for g in range(n_groups):
        for j in range(int(rng.integers(1, 6))):
            lat = None
            if with_latent and rng.random() < 0.7:
                lat = LatentState(*rng.uniform([1, 0, 0], [5, 2, 2]).tolist())
            recs.append(UtteranceRecord(
                utterance_id=f"g{g}_u{j}_{int(rng.integers(1e6))}",
                group_id=f"g{g}",
                ctc_score=-float(rng.exponential(0.3)),
                embedding=rng.normal(size=d) * 10 ** rng.uniform(-3, 3),
                features=rng.normal(size=f),
                duration_s=float(rng.uniform(0.5, 20)),
                acoustic_quality=float(rng.uniform(1, 5)),
                latent=lat,
            ))
    order = rng.permutation(len(recs))
    return Manifest(tuple(recs[i] for i in order), variant=variant)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_cfg():
    return SimConfig(n_speakers=30, utterances_per_speaker=(8, 12), rng_seed=3)


@pytest.fixture(scope="session")
def noiseless_cfg():
    return SimConfig(n_speakers=20, utterances_per_speaker=(5, 8), rng_seed=5,
                     trainer=TrainerParams(sigma_train=0.0, sigma_eval=0.0))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[num])
