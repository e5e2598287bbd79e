import numpy as np

from ..errors import ValidationError
from ..tabular import Dataset
from ..trees import EnsembleModel, predict
from .importance import ImportanceVector


def _accuracy(m, X, y):
    return float(np.mean(predict(m, X) == y))


def mda(m: EnsembleModel, d: Dataset, n_repeats: int = 10, seed: int = 0,
        model_id: str = "") -> ImportanceVector:
    """Permutation importance: mean accuracy drop when one column is shuffled.

    Feature j draws its shuffles from the stream (seed, j), so results do
    not depend on evaluation order. Negative means are kept as-is.
    """
    if d.row_count == 0:
        raise ValidationError("mda needs a non-empty dataset")
    if n_repeats < 1:
        raise ValidationError("n_repeats must be >= 1")
    names = d.feature_names
    missing = [f for f in m.feature_names if f not in names]
    if missing:
        raise ValidationError(f"dataset lacks model features {missing}")
    X = d.X[:, [names.index(f) for f in m.feature_names]]
    base = _accuracy(m, X, d.y)
    scores = {}
    for j, f in enumerate(m.feature_names):
        rng = np.random.default_rng([seed, j])
        drops = []
        for _ in range(n_repeats):
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(len(X)), j]
            drops.append(base - _accuracy(m, Xp, d.y))
        scores[f] = float(np.mean(drops))
    return ImportanceVector("mda", model_id, scores, False)
