"""Path-dependent tree SHAP.

Conditional expectations use each node's training cover (n_samples): a
feature outside the coalition splits the incoming weight between the two
children in proportion to their covers. The recursion keeps the set of
unique features on the current root-to-node path together with, for each
one, the fraction of paths that flow through when the feature is absent
(`zero`) or present (`one`), and a table of permutation weights that is
extended when a feature enters the path and unwound when it is revisited.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError
from ..tabular import MISSING, Dataset
from ..trees import EnsembleModel, Tree
from .importance import ImportanceVector

FEAT, ZERO, ONE, PW = range(4)


def _extend(path, zero, one, feature):
    depth = len(path)
    path = [e[:] for e in path]
    path.append([feature, zero, one, 1.0 if depth == 0 else 0.0])
    for i in range(depth - 1, -1, -1):
        path[i + 1][PW] += one * path[i][PW] * (i + 1) / (depth + 1)
        path[i][PW] = zero * path[i][PW] * (depth - i) / (depth + 1)
    return path


def _unwind(path, k):
    depth = len(path) - 1
    path = [e[:] for e in path]
    one, zero = path[k][ONE], path[k][ZERO]
    carry = path[depth][PW]
    for i in range(depth - 1, -1, -1):
        if one != 0:
            t = path[i][PW]
            path[i][PW] = carry * (depth + 1) / ((i + 1) * one)
            carry = t - path[i][PW] * zero * (depth - i) / (depth + 1)
        else:
            path[i][PW] = path[i][PW] * (depth + 1) / (zero * (depth - i))
    for i in range(k, depth):
        path[i][FEAT], path[i][ZERO], path[i][ONE] = path[i + 1][FEAT], path[i + 1][ZERO], path[i + 1][ONE]
    return path[:depth]


def _unwound_sum(path, k):
    # total permutation weight of the path with element k removed
    depth = len(path) - 1
    one, zero = path[k][ONE], path[k][ZERO]
    carry = path[depth][PW]
    total = 0.0
    for i in range(depth - 1, -1, -1):
        if one != 0:
            t = carry * (depth + 1) / ((i + 1) * one)
            total += t
            carry = path[i][PW] - t * zero * (depth - i) / (depth + 1)
        else:
            total += path[i][PW] * (depth + 1) / (zero * (depth - i))
    return total


def _goes_left(tree, node, x):
    v = x[tree.feature[node]]
    return v == MISSING or v <= tree.threshold[node]


def tree_shap(tree: Tree, x, phi, scale=1.0):
    """Add the SHAP values of one tree at row `x` (times `scale`) into `phi`."""
    cover = tree.n_samples

    def recurse(node, path, zero, one, feature):
        path = _extend(path, zero, one, feature)
        if tree.is_leaf(node):
            v = scale * tree.value[node]
            for i in range(1, len(path)):
                w = _unwound_sum(path, i)
                phi[path[i][FEAT]] += w * (path[i][ONE] - path[i][ZERO]) * v
            return
        f = tree.feature[node]
        if _goes_left(tree, node, x):
            hot, cold = tree.left[node], tree.right[node]
        else:
            hot, cold = tree.right[node], tree.left[node]
        in_zero, in_one = 1.0, 1.0
        for k in range(1, len(path)):
            if path[k][FEAT] == f:
                in_zero, in_one = path[k][ZERO], path[k][ONE]
                path = _unwind(path, k)
                break
        recurse(hot, path, in_zero * cover[hot] / cover[node], in_one, f)
        recurse(cold, path, in_zero * cover[cold] / cover[node], 0.0, f)

    recurse(0, [], 1.0, 1.0, -1)


def expected_value(tree: Tree) -> float:
    """Cover-weighted mean leaf value."""
    leaves = tree.feature < 0
    return float(np.sum(tree.n_samples[leaves] * tree.value[leaves]) / tree.n_samples[0])


def _tree_scale(m: EnsembleModel):
    if m.kind == "additive_logit":
        return m.learning_rate
    return 1.0 / len(m.trees)


@dataclass
class ShapMatrix:
    feature_names: list
    values: np.ndarray
    base_value: float

    def rows(self):
        return [dict(zip(self.feature_names, r.tolist())) for r in self.values]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.feature_names) + ["base_value"])
        for r in self.values:
            w.writerow([repr(float(v)) for v in r] + [repr(float(self.base_value))])
        return buf.getvalue()


def shap_values(m: EnsembleModel, d: Dataset | np.ndarray) -> ShapMatrix:
    """Per-instance attributions of `raw_output(m, .)`.

    Boosted models are explained in logit space (trees summed with the
    learning rate). Vote ensembles are explained on the mean per-tree leaf
    probability rather than on the discontinuous vote.
    """
    if not m.trees or any(int(t.n_samples.min()) <= 0 for t in m.trees):
        raise ValidationError("model lacks node covers (n_samples); cannot compute SHAP")
    if isinstance(d, Dataset):
        names = d.feature_names
        missing = [f for f in m.feature_names if f not in names]
        if missing:
            raise ValidationError(f"dataset lacks model features {missing}")
        X = d.X[:, [names.index(f) for f in m.feature_names]]
    else:
        X = np.atleast_2d(np.asarray(d, dtype=float))
    scale = _tree_scale(m)
    base = sum(expected_value(t) for t in m.trees) * scale
    if m.kind == "additive_logit":
        base += m.base_score
    out = np.zeros((X.shape[0], m.n_features))
    for r, x in enumerate(X):
        for t in m.trees:
            tree_shap(t, x, out[r], scale)
    return ShapMatrix(list(m.feature_names), out, float(base))


def shap_global(sm: ShapMatrix, model_id: str = "") -> ImportanceVector:
    """Mean absolute attribution per feature."""
    if sm.values.shape[0] == 0:
        raise ValidationError("empty SHAP matrix")
    scores = np.mean(np.abs(sm.values), axis=0)
    return ImportanceVector("shap", model_id, dict(zip(sm.feature_names, scores.tolist())), False)
