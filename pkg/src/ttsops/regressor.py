"""Training-data-quality estimators: utterance features -> speaker-wise pseudo MOS.

Two deterministic kinds, both over optionally standardized features:

* ``knn``   mean target of the k nearest training points (Euclidean);
            distance ties go to the earlier-inserted training point
* ``ridge`` L2-regularized least squares with an unpenalized intercept

Predictions are clamped to [1, 5].
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

KINDS = ("knn", "ridge")


class RegressorError(ValueError):
    pass


@dataclass(frozen=True)
class RegressorConfig:
    kind: str = "knn"
    # k above the typical per-speaker utterance count, so a prediction is not just
    # the utterance's own speaker label
    k: int = 30
    lam: float = 0.0
    standardize: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RegressorError(f"unknown regressor kind {self.kind!r}")
        if self.k < 1:
            raise RegressorError("k must be >= 1")
        if not self.lam >= 0:
            raise RegressorError("lambda must be >= 0")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k, "lambda": self.lam, "standardize": self.standardize}

    @classmethod
    def from_dict(cls, d) -> "RegressorConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class FittedRegressor:
    kind: str
    mean: np.ndarray
    std: np.ndarray
    k: int = 0
    # knn state
    train_x: Optional[np.ndarray] = None
    train_y: Optional[np.ndarray] = None
    # ridge state, in standardized coordinates
    weights: Optional[np.ndarray] = None
    intercept: float = 0.0

    @property
    def n_features(self) -> int:
        return len(self.mean)

    @property
    def coef(self) -> np.ndarray:
        """Ridge weights in the original feature units."""
        if self.kind != "ridge":
            raise RegressorError("coef is defined for ridge only")
        return self.weights / self.std

    @property
    def raw_intercept(self) -> float:
        if self.kind != "ridge":
            raise RegressorError("raw_intercept is defined for ridge only")
        return float(self.intercept - self.mean @ (self.weights / self.std))

    def transform(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_features:
            raise RegressorError(f"feature dimension {x.shape[-1]} != {self.n_features}")
        return (x - self.mean) / self.std

    def predict_raw(self, x) -> np.ndarray:
        z = np.atleast_2d(self.transform(x))
        if self.kind == "ridge":
            return z @ self.weights + self.intercept
        out = np.empty(len(z))
        k = self.k
        n = len(self.train_y)
        for start in range(0, len(z), 256):
            block = z[start:start + 256]
            d2 = cdist(block, self.train_x, "sqeuclidean")
            if k < n:
                kth = np.partition(d2, k - 1, axis=1)[:, k - 1:k]
            for row, dist in enumerate(d2):
                cand = np.arange(n) if k >= n else np.flatnonzero(dist <= kth[row, 0])
                # equal distances go to the earlier training point
                order = np.lexsort((cand, dist[cand]))[:k]
                out[start + row] = self.train_y[cand[order]].mean()
        return out

    def predict_many(self, x) -> np.ndarray:
        return np.clip(self.predict_raw(x), 1.0, 5.0)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "mean": self.mean.tolist(), "std": self.std.tolist()}
        if self.kind == "knn":
            d.update(k=self.k, train_x=self.train_x.tolist(), train_y=self.train_y.tolist())
        else:
            d.update(weights=self.weights.tolist(), intercept=self.intercept)
        return d

    @classmethod
    def from_dict(cls, d) -> "FittedRegressor":
        arr = lambda key: None if key not in d else np.asarray(d[key], dtype=float)
        return cls(kind=d["kind"], mean=arr("mean"), std=arr("std"), k=int(d.get("k", 0)),
                   train_x=arr("train_x"), train_y=arr("train_y"), weights=arr("weights"),
                   intercept=float(d.get("intercept", 0.0)))


def fit(features: Sequence[Sequence[float]], targets: Sequence[float],
        cfg: RegressorConfig = RegressorConfig()) -> FittedRegressor:
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or len(x) != len(y):
        raise RegressorError(f"features {x.shape} and targets {y.shape} do not match")
    if len(y) < max(2, cfg.k if cfg.kind == "knn" else 2):
        raise RegressorError(f"need at least max(k, 2) training pairs, got {len(y)}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise RegressorError("non-finite training input")

    if cfg.standardize:
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std[std == 0] = 1.0
    else:
        mean = np.zeros(x.shape[1])
        std = np.ones(x.shape[1])
    z = (x - mean) / std

    if cfg.kind == "knn":
        return FittedRegressor("knn", mean, std, k=cfg.k, train_x=z, train_y=y.copy())

    zm, ym = z.mean(axis=0), y.mean()
    zc, yc = z - zm, y - ym
    gram = zc.T @ zc + cfg.lam * np.eye(z.shape[1])
    rhs = zc.T @ yc
    try:
        w = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        # singular system (lambda = 0 with collinear features): minimum-norm solution
        w = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    return FittedRegressor("ridge", mean, std, weights=w, intercept=float(ym - zm @ w))


def predict(r: FittedRegressor, feature: Sequence[float]) -> float:
    x = np.asarray(feature, dtype=float)
    if x.ndim != 1:
        raise RegressorError("predict takes a single feature vector")
    return float(r.predict_many(x[None, :])[0])


def dump_regressor(r: FittedRegressor, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(r.to_dict(), fh, sort_keys=True)


def load_regressor(path) -> FittedRegressor:
    with open(path, encoding="utf-8") as fh:
        return FittedRegressor.from_dict(json.load(fh))
