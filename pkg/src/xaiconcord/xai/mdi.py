import numpy as np

from ..trees import EnsembleModel
from .importance import ImportanceVector


def _tree_mdi(tree, n_features, weighted):
    out = np.zeros(n_features)
    root = tree.n_samples[0]
    for i in range(tree.node_count):
        if tree.is_leaf(i):
            continue
        w = tree.n_samples[i] / root if weighted else 1.0
        out[tree.feature[i]] += w * tree.gain[i]
    return out


def mdi(m: EnsembleModel, model_id: str = "") -> ImportanceVector:
    """Mean decrease in impurity.

    Gini trees weight each split's gain by the fraction of root samples
    reaching the node; boosted trees use the raw structure gain. Per-tree
    totals are averaged over the ensemble, then normalised to sum 1
    (left unnormalised when no split exists).
    """
    weighted = m.kind != "additive_logit"
    total = sum(_tree_mdi(t, m.n_features, weighted) for t in m.trees) / len(m.trees)
    s = total.sum()
    normalized = bool(s > 0)
    if normalized:
        total = total / s
    return ImportanceVector("mdi", model_id, dict(zip(m.feature_names, total.tolist())), normalized)
