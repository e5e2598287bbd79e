"""Tabular LIME with a binary "same bin as the instance" interpretable space."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ValidationError
from ..tabular import MISSING, Dataset
from ..trees import EnsembleModel, predict_proba
from .importance import ImportanceVector

MIN_BACKGROUND = 8


@dataclass(frozen=True)
class LimeConfig:
    n_samples: int = 1000
    kernel_width: float | None = None  # None -> 0.75 * sqrt(n_features)
    k: int = 3
    ridge: float = 1e-3
    seed: int = 0

    def width(self, n_features):
        return self.kernel_width if self.kernel_width is not None else 0.75 * math.sqrt(n_features)


@dataclass
class LimeExplanation:
    instance_id: int
    feature_weights: dict
    intercept: float
    kernel_width: float
    n_samples: int
    seed: int
    coefficients: dict = field(default_factory=dict)


class _Binner:
    """Quartile bins for numeric columns, one bin per category for ordinals.
    Missing values form their own bin."""

    def __init__(self, background: Dataset, feature_names):
        if background.row_count < MIN_BACKGROUND:
            raise ValidationError(
                f"background has {background.row_count} rows; LIME needs at least {MIN_BACKGROUND}")
        names = background.feature_names
        missing = [f for f in feature_names if f not in names]
        if missing:
            raise ValidationError(f"background lacks model features {missing}")
        cols = [names.index(f) for f in feature_names]
        self.X = background.X[:, cols]
        self.edges = []
        for j, c in enumerate(cols):
            if background.columns[c].kind == "ordinal":
                self.edges.append(None)
            else:
                v = self.X[:, j]
                v = v[v != MISSING]
                self.edges.append(np.quantile(v, [0.25, 0.5, 0.75]) if v.size else np.array([]))

    def bins(self, X):
        X = np.atleast_2d(X)
        out = np.empty(X.shape, dtype=np.int64)
        for j, e in enumerate(self.edges):
            col = X[:, j]
            b = col.astype(np.int64) if e is None else np.searchsorted(e, col, side="left")
            out[:, j] = np.where(col == MISSING, -1, b)
        return out


def _weighted_ridge(Z, y, w, lam):
    sw = w.sum()
    zm = w @ Z / sw
    ym = w @ y / sw
    Zc = Z - zm
    yc = y - ym
    A = Zc.T @ (Zc * w[:, None]) + lam * np.eye(Z.shape[1])
    b = Zc.T @ (w * yc)
    coef = np.linalg.solve(A, b)
    return coef, float(ym - zm @ coef)


def _explain(m, binner, instance, cfg, instance_id):
    d = m.n_features
    if cfg.n_samples < 10 * cfg.k:
        raise ValidationError(f"n_samples={cfg.n_samples} is below 10*k={10 * cfg.k}")
    instance = np.asarray(instance, dtype=float).ravel()
    if instance.size != d:
        raise ValidationError(f"instance has {instance.size} values, model expects {d}")
    rng = np.random.default_rng([cfg.seed, instance_id])
    bg = binner.X
    picks = rng.integers(0, bg.shape[0], size=(cfg.n_samples - 1, d))
    samples = np.vstack([instance, bg[picks, np.arange(d)]])
    Z = (binner.bins(samples) == binner.bins(instance)).astype(float)
    dist = d - Z.sum(axis=1)
    width = cfg.width(d)
    w = np.exp(-(dist ** 2) / width ** 2)
    target = predict_proba(m, samples)
    coef, intercept = _weighted_ridge(Z, target, w, cfg.ridge)
    order = np.argsort(-np.abs(coef), kind="stable")
    top = [j for j in order[: cfg.k] if abs(coef[j]) > 1e-10]
    names = m.feature_names
    return LimeExplanation(
        instance_id=instance_id,
        feature_weights={names[j]: float(coef[j]) for j in top},
        intercept=intercept,
        kernel_width=width,
        n_samples=cfg.n_samples,
        seed=cfg.seed,
        coefficients=dict(zip(names, coef.tolist())),
    )


def lime_local(m: EnsembleModel, background: Dataset, instance, cfg: LimeConfig = LimeConfig(),
               instance_id: int = 0) -> LimeExplanation:
    """Fit a weighted ridge surrogate to the class-1 probability around `instance`.

    Perturbations draw each feature independently from the background's
    empirical distribution; sample weights are exp(-D^2 / width^2) where D
    is the Hamming distance to the instance in the binary space. Only the
    k largest non-zero coefficients (by magnitude) are reported.
    """
    return _explain(m, _Binner(background, m.feature_names), instance, cfg, instance_id)


def lime_global(m: EnsembleModel, d: Dataset, cfg: LimeConfig = LimeConfig(), k: int | None = None,
                background: Dataset | None = None, model_id: str = "") -> ImportanceVector:
    """Fraction of instances in `d` whose local top-k contains each feature."""
    if d.row_count == 0:
        raise ValidationError("lime_global needs a non-empty dataset")
    if k is not None:
        cfg = replace(cfg, k=k)
    binner = _Binner(background if background is not None else d, m.feature_names)
    names = d.feature_names
    absent = [f for f in m.feature_names if f not in names]
    if absent:
        raise ValidationError(f"dataset lacks model features {absent}")
    X = d.X[:, [names.index(f) for f in m.feature_names]]
    counts = dict.fromkeys(m.feature_names, 0)
    for i, row in enumerate(X):
        for f in _explain(m, binner, row, cfg, i).feature_weights:
            counts[f] += 1
    return ImportanceVector("lime", model_id, {f: c / d.row_count for f, c in counts.items()}, False)
