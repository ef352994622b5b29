"""A small, fully deterministic stand-in for a TTS training world.

It generates a candidate corpus with hidden ground truth, applies simulated
cleansers, "trains" a multi-speaker model whose per-speaker synthesis quality
is a closed-form function of the training selection, and "evaluates" that
model with pseudo-MOS noise. Every function is pure in (inputs, seed).

Latent training quality of an utterance::

    q(u) = clamp(b - w_a * a - w_d * d, 1, 5)

with ``b`` base quality, ``a`` additive noise level and ``d`` device/room
distortion. Randomness: PCG64 streams keyed by BLAKE2b digests (see
:mod:`ttsops.seeding`).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Mapping, Optional, Union

import numpy as np

from .manifest import (IDENTITY, LatentState, Manifest, UtteranceRecord, check_variant,
                       registered_variants, round_sig)
from .seeding import rng_for
from .selection import CorpusSelection


class SimError(ValueError):
    pass


@dataclass(frozen=True)
class CleanserParams:
    noise_reduction: float = 0.0
    distortion_reduction: float = 0.0
    artifact_cost: float = 0.0

    def __post_init__(self):
        for name in ("noise_reduction", "distortion_reduction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SimError(f"{name} must lie in [0, 1]")
        if self.artifact_cost < 0:
            raise SimError("artifact_cost must be non-negative")


def _default_cleansers() -> dict[str, CleanserParams]:
    return {
        IDENTITY: CleanserParams(),
        "denoise": CleanserParams(noise_reduction=0.8, distortion_reduction=0.0, artifact_cost=0.15),
        "restore": CleanserParams(noise_reduction=0.9, distortion_reduction=0.85, artifact_cost=0.18),
    }


@dataclass(frozen=True)
class TrainerParams:
    mu0: float = 0.5
    alpha: float = 0.8
    beta: float = 0.05
    sigma_train: float = 0.05
    sigma_eval: float = 0.3
    unseen_damping: float = 0.5


@dataclass(frozen=True)
class SimConfig:
    n_speakers: int = 200
    utterances_per_speaker: tuple[int, int] = (10, 30)
    embedding_dim: int = 16
    feature_dim: int = 8
    rng_seed: int = 0
    w_a: float = 1.0
    w_d: float = 1.0
    cleansers: Mapping[str, CleanserParams] = field(default_factory=_default_cleansers)
    trainer: TrainerParams = field(default_factory=TrainerParams)
    eval_sentences: int = 100
    # corpus generation
    speaker_base_mean: float = 3.9
    speaker_base_sd: float = 0.2
    utterance_base_sd: float = 0.4
    # background noise: each utterance is clean with a per-speaker probability
    clean_utterance_rate: float = 0.5
    clean_rate_concentration: float = 0.3
    noise_mean_clean: float = 0.04
    noise_mean_noisy: float = 0.7
    # device distortion: per speaker (one recording setup per group)
    good_device_fraction: float = 0.5
    distortion_mean_clean: float = 0.03
    distortion_mean_noisy: float = 0.5
    utterance_spread: float = 0.5
    # observed acoustic quality (NISQA-style minimum over metrics)
    acoustic_offset: float = 3.4
    acoustic_base_weight: float = 0.1
    acoustic_noise_weight: float = 2.0
    acoustic_distortion_weight: float = 0.3
    acoustic_obs_sd: float = 0.7
    # speaker embeddings; compactness is about embedding_dim * within_sd**2
    embedding_between_sd: float = 1.0
    embedding_within_sd: float = 0.5
    inconsistent_group_fraction: float = 0.05
    inconsistent_within_sd: float = 0.9
    feature_noise_sd: float = 0.15
    # reference (studio) corpus used for the high-quality-speaker threshold
    reference_base_offset: float = 0.6
    ctc_scale: float = 0.08

    def __post_init__(self):
        lo, hi = self.utterances_per_speaker
        if self.n_speakers <= 0 or lo < 1 or hi < lo:
            raise SimError("invalid speaker/utterance counts")
        if self.embedding_dim < 1 or self.feature_dim < 3:
            raise SimError("embedding_dim >= 1 and feature_dim >= 3 required")
        if self.eval_sentences < 1:
            raise SimError("eval_sentences must be >= 1")
        if self.w_a < 0 or self.w_d < 0:
            raise SimError("quality weights must be non-negative")
        tp = self.trainer
        if tp.sigma_train < 0 or tp.sigma_eval < 0:
            raise SimError("noise levels must be non-negative")
        reals = [v for v in asdict(self).values() if isinstance(v, float)]
        reals += [v for v in asdict(tp).values()]
        if not all(np.isfinite(reals)):
            raise SimError("non-finite config value")
        if IDENTITY not in self.cleansers:
            raise SimError("identity cleanser is required")
        for v in self.cleansers:
            check_variant(v)

    @property
    def variants(self) -> list[str]:
        return [v for v in registered_variants() if v in self.cleansers]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["utterances_per_speaker"] = list(self.utterances_per_speaker)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SimConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SimError(f"unknown SimConfig fields: {sorted(unknown)}")
        if "utterances_per_speaker" in d:
            d["utterances_per_speaker"] = tuple(d["utterances_per_speaker"])
        if "cleansers" in d:
            d["cleansers"] = {k: CleanserParams(**v) for k, v in d["cleansers"].items()}
        if "trainer" in d:
            d["trainer"] = TrainerParams(**d["trainer"])
        return cls(**d)

    def with_seed(self, seed: int) -> "SimConfig":
        return replace(self, rng_seed=int(seed))


def load_sim_config(path) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        return SimConfig.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# corpus


def latent_quality(latent: LatentState, cfg: SimConfig) -> float:
    q = latent.base_quality - cfg.w_a * latent.noise_level - cfg.w_d * latent.device_distortion
    return float(min(max(q, 1.0), 5.0))


def q_of(rec: UtteranceRecord, cfg: SimConfig) -> float:
    if rec.latent is None:
        raise SimError(f"{rec.utterance_id}: record has no latent state")
    return latent_quality(rec.latent, cfg)


def _feature_map(cfg: SimConfig) -> np.ndarray:
    # fixed linear "SSL" map from (b, a, d) to feature space
    return rng_for(cfg.rng_seed, "feature-map").normal(size=(cfg.feature_dim, 3))


def _observe(uid: str, group_id: str, ctc: float, embedding, duration: float,
             latent: LatentState, cfg: SimConfig, fmap: np.ndarray) -> UtteranceRecord:
    """Observable fields of an utterance given its (possibly cleansed) latent state.

    Observation noise is keyed by utterance id only, so cleansing changes the
    observations purely through the latent state.
    """
    rng = rng_for(cfg.rng_seed, "observe", uid)
    obs_eps = rng.standard_normal()
    feat_eps = rng.standard_normal(cfg.feature_dim)
    b, a, d = latent.base_quality, latent.noise_level, latent.device_distortion
    aq = (cfg.acoustic_offset + cfg.acoustic_base_weight * b - cfg.acoustic_noise_weight * a
          - cfg.acoustic_distortion_weight * d + cfg.acoustic_obs_sd * obs_eps)
    aq = min(max(aq, 1.0), 5.0)
    z = np.array([b - cfg.speaker_base_mean, a, d])
    feats = fmap @ z + cfg.feature_noise_sd * feat_eps
    return UtteranceRecord(
        utterance_id=uid,
        group_id=group_id,
        ctc_score=ctc,
        embedding=tuple(embedding),
        features=tuple(round_sig(float(v)) for v in feats),
        duration_s=duration,
        acoustic_quality=round_sig(aq),
        latent=latent,
    )


def generate_corpus(cfg: SimConfig) -> Manifest:
    """Synthetic candidate corpus with latent ground truth; deterministic in ``cfg.rng_seed``."""
    rng = rng_for(cfg.rng_seed, "corpus")
    fmap = _feature_map(cfg)
    lo, hi = cfg.utterances_per_speaker
    records = []
    for s in range(cfg.n_speakers):
        gid = f"spk{s:04d}"
        n_utt = int(rng.integers(lo, hi + 1))
        b_s = rng.normal(cfg.speaker_base_mean, cfg.speaker_base_sd)
        conc = cfg.clean_rate_concentration
        rate = cfg.clean_utterance_rate
        p_clean = rate if rate in (0.0, 1.0) else rng.beta(rate * conc, (1.0 - rate) * conc)
        a_s = rng.exponential(cfg.noise_mean_noisy)
        good_device = rng.random() < cfg.good_device_fraction
        d_s = rng.exponential(cfg.distortion_mean_clean if good_device else cfg.distortion_mean_noisy)
        center = rng.normal(0.0, cfg.embedding_between_sd, cfg.embedding_dim)
        inconsistent = rng.random() < cfg.inconsistent_group_fraction
        spread = cfg.inconsistent_within_sd if inconsistent else cfg.embedding_within_sd
        for j in range(n_utt):
            uid = f"{gid}_u{j:03d}"
            b = min(max(b_s + rng.normal(0.0, cfg.utterance_base_sd), 1.0), 5.0)
            if rng.random() < p_clean:
                a = rng.exponential(cfg.noise_mean_clean)
            else:
                a = a_s * rng.lognormal(0.0, cfg.utterance_spread)
            d = d_s * rng.lognormal(0.0, cfg.utterance_spread)
            latent = LatentState(round_sig(b), round_sig(a), round_sig(d))
            emb = [round_sig(v) for v in center + rng.normal(0.0, spread, cfg.embedding_dim)]
            ctc = round_sig(-rng.exponential(cfg.ctc_scale))
            dur = round_sig(rng.uniform(1.5, 12.0))
            records.append(_observe(uid, gid, ctc, emb, dur, latent, cfg, fmap))
    return Manifest(tuple(records), variant=IDENTITY)


def cleanse_latent(latent: LatentState, variant: str, cfg: SimConfig) -> LatentState:
    check_variant(variant)
    if variant not in cfg.cleansers:
        raise SimError(f"no simulated cleanser for variant {variant!r}")
    p = cfg.cleansers[variant]
    if variant == IDENTITY:
        return latent
    return LatentState(
        base_quality=round_sig(latent.base_quality - p.artifact_cost),
        noise_level=round_sig(latent.noise_level * (1.0 - p.noise_reduction)),
        device_distortion=round_sig(latent.device_distortion * (1.0 - p.distortion_reduction)),
    )


def sim_cleanse(u: UtteranceRecord, variant: str, cfg: SimConfig,
                _fmap: Optional[np.ndarray] = None) -> UtteranceRecord:
    """Apply a simulated cleanser; ids, embedding, CTC score and duration are kept."""
    if u.latent is None:
        raise SimError(f"{u.utterance_id}: cannot cleanse a record without latent state")
    new_latent = cleanse_latent(u.latent, variant, cfg)
    if variant == IDENTITY:
        return u
    fmap = _feature_map(cfg) if _fmap is None else _fmap
    return _observe(u.utterance_id, u.group_id, u.ctc_score, u.embedding, u.duration_s,
                    new_latent, cfg, fmap)


def cleanse_manifest(m: Manifest, variant: str, cfg: SimConfig) -> Manifest:
    fmap = _feature_map(cfg)
    return Manifest(tuple(sim_cleanse(r, variant, cfg, fmap) for r in m), variant=variant)


def generate_variants(cfg: SimConfig, variants=None, base: Optional[Manifest] = None) -> dict[str, Manifest]:
    base = generate_corpus(cfg) if base is None else base
    variants = cfg.variants if variants is None else list(variants)
    return {v: base if v == IDENTITY else cleanse_manifest(base, v, cfg) for v in variants}


def best_latent_variant(u: UtteranceRecord, cfg: SimConfig, variants=None) -> tuple[str, float]:
    """Ground-truth switching choice: argmax of latent q over variants (registration-order ties)."""
    best_v, best = None, None
    for v in (cfg.variants if variants is None else variants):
        q = latent_quality(cleanse_latent(u.latent, v, cfg), cfg)
        if best is None or q > best:
            best_v, best = v, q
    return best_v, best


# ---------------------------------------------------------------------------
# trainer / evaluator


@dataclass(frozen=True)
class SimModel:
    quality: Mapping[str, float]
    seen: frozenset
    digest: str
    seed: int

    def __contains__(self, speaker: str) -> bool:
        return speaker in self.quality


PoolLike = Union[Manifest, Mapping[str, Manifest]]


def _lookup(pool: PoolLike, uid: str, variant: str) -> UtteranceRecord:
    if isinstance(pool, Manifest):
        return pool[uid]
    return pool[variant][uid]


def _speaker_pool(pool: PoolLike) -> Manifest:
    if isinstance(pool, Manifest):
        return pool
    return pool[IDENTITY] if IDENTITY in pool else next(iter(pool.values()))


def selection_digest(selection: CorpusSelection) -> str:
    h = hashlib.sha256()
    for u, v in sorted(selection.entries):
        h.update(f"{u}\x1f{v}\n".encode())
    return h.hexdigest()[:16]


def sim_train(selection: CorpusSelection, pool: PoolLike, cfg: SimConfig, seed: int) -> SimModel:
    """Closed-form "training": per-speaker synthesis quality from the selected utterances.

    Seen speaker ``s``::

        Q(s) = clamp(mu0 + alpha * mean_q(selected of s) + beta * mean_q(selected) + eps_s, 1, 5)

    An unseen speaker borrows the speaker term of the nearest seen speaker
    (speaker-mean embedding distance) scaled by ``unseen_damping``.
    ``pool`` is a manifest or a mapping of variant manifests; selection
    entries are resolved by (utterance_id, variant).
    """
    if len(selection) == 0:
        raise SimError("empty training selection")
    tp = cfg.trainer
    per_speaker: dict[str, list[float]] = {}
    all_q = []
    for uid, v in selection.entries:
        try:
            rec = _lookup(pool, uid, v)
        except KeyError:
            raise SimError(f"selected utterance {uid!r} ({v}) not in pool") from None
        q = q_of(rec, cfg)
        per_speaker.setdefault(rec.group_id, []).append(q)
        all_q.append(q)
    corpus_term = tp.beta * float(np.mean(all_q))

    spk_pool = _speaker_pool(pool)
    groups = spk_pool.groups()
    for g in per_speaker:
        groups.setdefault(g, [])
    names = sorted(groups)
    seen = sorted(per_speaker)
    spk_term = {g: tp.alpha * float(np.mean(per_speaker[g])) for g in seen}

    emb = {}
    for g in names:
        recs = groups[g]
        if recs:
            emb[g] = np.mean([r.embedding for r in recs], axis=0)
    seen_with_emb = [g for g in seen if g in emb]
    seen_mat = np.array([emb[g] for g in seen_with_emb]) if seen_with_emb else None

    quality = {}
    for g in names:
        eps = tp.sigma_train * rng_for(seed, "train-noise", g).standard_normal()
        if g in spk_term:
            term = spk_term[g]
        elif seen_mat is not None and g in emb:
            dist = np.sqrt(((seen_mat - emb[g]) ** 2).sum(axis=1))
            nn = seen_with_emb[int(np.argmin(dist))]
            term = tp.unseen_damping * spk_term[nn]
        else:
            term = 0.0
        quality[g] = float(min(max(tp.mu0 + term + corpus_term + eps, 1.0), 5.0))
    return SimModel(quality=quality, seen=frozenset(seen), digest=selection_digest(selection), seed=int(seed))


def sim_eval_speaker(model: SimModel, speaker: str, cfg: SimConfig, seed: int) -> float:
    """Mean pseudo MOS over ``eval_sentences`` common sentences."""
    if speaker not in model.quality:
        raise SimError(f"unknown speaker {speaker!r}")
    q = model.quality[speaker]
    sd = cfg.trainer.sigma_eval
    if sd == 0:
        return q
    eps = rng_for(seed, "eval-noise", model.digest, speaker).standard_normal(cfg.eval_sentences)
    return float(np.mean(np.clip(q + sd * eps, 1.0, 5.0)))


class SimTrainer:
    """Trainer adapter over :func:`sim_train`."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg

    def train(self, selection, pool, seed):
        return sim_train(selection, pool, self.cfg, seed)


class SimEvaluator:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg

    def eval_speaker(self, model, speaker, seed):
        return sim_eval_speaker(model, speaker, self.cfg, seed)


# ---------------------------------------------------------------------------
# reference corpus for the high-quality-speaker threshold


def reference_corpus(cfg: SimConfig, n_speakers: int = 100, utterances: int = 100) -> Manifest:
    """Studio-quality reference corpus (clean, consistent speakers)."""
    ref = replace(cfg, n_speakers=n_speakers, utterances_per_speaker=(utterances, utterances),
                  clean_utterance_rate=1.0, good_device_fraction=1.0,
                  noise_mean_clean=0.0, distortion_mean_clean=0.0,
                  speaker_base_mean=cfg.speaker_base_mean + cfg.reference_base_offset, speaker_base_sd=0.15,
                  inconsistent_group_fraction=0.0, rng_seed=cfg.rng_seed ^ 0x5EED)
    return generate_corpus(ref)


def reference_speaker_scores(cfg: SimConfig, seed: int = 0) -> dict[str, float]:
    """Speaker-wise pseudo MOS of a model trained on the reference corpus."""
    pool = reference_corpus(cfg)
    sel = CorpusSelection(tuple((r.utterance_id, IDENTITY) for r in pool), method="unselected")
    model = sim_train(sel, pool, cfg, seed)
    return {g: sim_eval_speaker(model, g, cfg, seed) for g in sorted(model.quality)}
