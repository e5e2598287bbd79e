"""CART decision trees, bagged random forests and Newton-boosted logistic trees.

All three share one array-backed tree representation (`Tree`) and one
split-search routine; only the node statistics differ (class counts for
Gini, gradient/hessian sums for boosting). Missing values (MISSING) are
always routed to the left child.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np

from .errors import FormatVersionError, ValidationError
from .tabular import MISSING, Dataset

FORMAT_VERSION = "1"
KINDS = {"dt": "single", "rf": "vote", "gbt": "additive_logit"}


@dataclass(frozen=True)
class ModelParams:
    model_kind: str
    max_depth: int = 3
    min_samples_leaf: int = 1
    n_estimators: int = 100
    max_features: int | str = "sqrt"
    bootstrap: bool = True
    learning_rate: float = 0.3
    l2_lambda: float = 1.0
    min_gain: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.model_kind not in KINDS:
            raise ValidationError(f"unknown model_kind {self.model_kind!r}")
        if self.max_depth < 1:
            raise ValidationError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValidationError("min_samples_leaf must be >= 1")
        if self.n_estimators < 1:
            raise ValidationError("n_estimators must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValidationError("learning_rate must lie in (0, 1]")
        if self.l2_lambda < 0 or self.min_gain < 0:
            raise ValidationError("l2_lambda and min_gain must be >= 0")
        mf = self.max_features
        if not (mf in ("sqrt", "all") or (isinstance(mf, int) and not isinstance(mf, bool) and mf >= 1)):
            raise ValidationError(f"max_features must be 'sqrt', 'all' or a positive int, got {mf!r}")

    def resolved_max_features(self, n_features):
        if self.max_features == "all":
            return n_features
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(n_features)))
        return min(int(self.max_features), n_features)


@dataclass
class Tree:
    """Array-of-nodes binary tree. Node 0 is the root; leaves have feature -1."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    n_samples: np.ndarray
    impurity: np.ndarray
    gain: np.ndarray
    value: np.ndarray
    class_counts: np.ndarray | None = None

    @property
    def node_count(self):
        return len(self.feature)

    def is_leaf(self, i):
        return self.feature[i] < 0

    @cached_property
    def max_depth(self):
        depths = np.zeros(self.node_count, dtype=int)
        for i in range(self.node_count):
            if not self.is_leaf(i):
                depths[self.left[i]] = depths[self.right[i]] = depths[i] + 1
        return int(depths.max())

    def apply(self, X):
        """Leaf index reached by every row of X."""
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        rows = np.arange(n)
        for _ in range(self.max_depth):
            f = self.feature[node]
            internal = f >= 0
            if not internal.any():
                break
            x = X[rows, np.where(internal, f, 0)]
            go_left = (x <= self.threshold[node]) | (x == MISSING)
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)
        return node

    def predict_value(self, X):
        return self.value[self.apply(X)]


@dataclass
class EnsembleModel:
    kind: str
    trees: list
    base_score: float
    learning_rate: float
    params: ModelParams
    feature_names: list = field(default_factory=list)

    @property
    def n_features(self):
        return len(self.feature_names)


# split search --------------------------------------------------------------


def _gini(pos, n):
    p = pos / n
    return 1.0 - p * p - (1.0 - p) * (1.0 - p)


class _GiniStats:
    def __init__(self, y):
        self.y = y.astype(float)

    def node(self, idx):
        n = len(idx)
        pos = float(self.y[idx].sum())
        return n, pos

    def impurity(self, stats):
        n, pos = stats
        return _gini(pos, n)

    def split_gains(self, parent, left_n, left_pos):
        n, pos = parent
        right_n, right_pos = n - left_n, pos - left_pos
        gl = _gini(left_pos, np.maximum(left_n, 1))
        gr = _gini(right_pos, np.maximum(right_n, 1))
        return _gini(pos, n) - (left_n / n) * gl - (right_n / n) * gr


class _NewtonStats:
    def __init__(self, g, h, lam, gamma):
        self.g, self.h, self.lam, self.gamma = g, h, lam, gamma

    def node(self, idx):
        return len(idx), float(self.g[idx].sum()), float(self.h[idx].sum())

    def score(self, G, H):
        den = H + self.lam
        return np.where(den > 0, G * G / np.where(den > 0, den, 1.0), 0.0)

    def impurity(self, stats):
        _, G, H = stats
        return float(-0.5 * self.score(G, H))

    def leaf_weight(self, stats):
        _, G, H = stats
        den = H + self.lam
        return -G / den if den > 0 else 0.0


def _tree_from_lists(nodes, with_counts):
    def col(key, dtype):
        return np.array([nd[key] for nd in nodes], dtype=dtype)

    return Tree(
        feature=col("feature", np.int64),
        threshold=col("threshold", float),
        left=col("left", np.int64),
        right=col("right", np.int64),
        n_samples=col("n_samples", np.int64),
        impurity=col("impurity", float),
        gain=col("gain", float),
        value=col("value", float),
        class_counts=np.array([nd["class_counts"] for nd in nodes], dtype=np.int64).reshape(-1, 2)
        if with_counts else None,
    )


def _best_split(X, idx, features, msl, gains_fn):
    """Best (feature, threshold, gain, left_idx, right_idx) over `features`.

    `gains_fn(missing_rows, sorted_rows)` returns, for every cut position k,
    the gain of sending the missing rows plus sorted_rows[:k+1] left.
    Ties keep the earlier feature and the lower threshold.
    """
    best = None
    n = len(idx)
    for j in features:
        v = X[idx, j]
        miss = v == MISSING
        present = idx[~miss]
        if len(present) < 2:
            continue
        order = present[np.argsort(X[present, j], kind="stable")]
        vs = X[order, j]
        n_miss = int(miss.sum())
        left_n = n_miss + np.arange(1, len(order))
        distinct = vs[:-1] != vs[1:]
        ok = distinct & (left_n >= msl) & (n - left_n >= msl)
        if not ok.any():
            continue
        gains = gains_fn(idx[miss], order)
        gains = np.where(ok, gains, -np.inf)
        k = int(np.argmax(gains))
        if best is None or gains[k] > best[2]:
            thr = 0.5 * (vs[k] + vs[k + 1])
            best = (j, thr, float(gains[k]), k, order, idx[miss])
    if best is None:
        return None
    j, thr, gain, k, order, miss_idx = best
    left = np.concatenate([miss_idx, order[: k + 1]])
    right = order[k + 1:]
    return j, thr, gain, left, right


def _grow_gini(X, y, rows, params, rng, feature_pool):
    stats = _GiniStats(y)
    msl = params.min_samples_leaf
    nodes = []

    def gains_fn(parent):
        def fn(miss_idx, order):
            left_n = len(miss_idx) + np.arange(1, len(order))
            left_pos = stats.y[miss_idx].sum() + np.cumsum(stats.y[order])[:-1]
            return stats.split_gains(parent, left_n.astype(float), left_pos)
        return fn

    def build(idx, depth):
        parent = stats.node(idx)
        n, pos = parent
        imp = stats.impurity(parent)
        me = len(nodes)
        nodes.append(None)
        split = None
        if depth < params.max_depth and 0 < pos < n:
            feats = feature_pool(rng)
            split = _best_split(X, idx, feats, msl, gains_fn(parent))
            # zero-gain splits stay admissible so XOR-like structure can be learned
            if split is not None and split[2] < -1e-12:
                split = None
        if split is None:
            nodes[me] = dict(feature=-1, threshold=0.0, left=-1, right=-1, n_samples=n,
                             impurity=imp, gain=0.0, value=pos / n,
                             class_counts=(int(n - pos), int(pos)))
            return me
        j, thr, _, lidx, ridx = split
        l = build(lidx, depth + 1)
        r = build(ridx, depth + 1)
        nl, nr = nodes[l]["n_samples"], nodes[r]["n_samples"]
        gain = imp - (nl / n) * nodes[l]["impurity"] - (nr / n) * nodes[r]["impurity"]
        nodes[me] = dict(feature=int(j), threshold=float(thr), left=l, right=r, n_samples=n,
                         impurity=imp, gain=max(gain, 0.0), value=pos / n,
                         class_counts=(int(n - pos), int(pos)))
        return me

    build(np.asarray(rows, dtype=np.int64), 0)
    return _tree_from_lists(nodes, with_counts=True)


def _grow_newton(X, g, h, params):
    stats = _NewtonStats(g, h, params.l2_lambda, params.min_gain)
    msl = params.min_samples_leaf
    nodes = []

    def gains_fn(parent):
        _, G, H = parent

        def fn(miss_idx, order):
            GL = g[miss_idx].sum() + np.cumsum(g[order])[:-1]
            HL = h[miss_idx].sum() + np.cumsum(h[order])[:-1]
            return 0.5 * (stats.score(GL, HL) + stats.score(G - GL, H - HL) - stats.score(G, H)) - stats.gamma
        return fn

    def build(idx, depth):
        parent = stats.node(idx)
        imp = stats.impurity(parent)
        me = len(nodes)
        nodes.append(None)
        split = None
        if depth < params.max_depth:
            split = _best_split(X, idx, range(X.shape[1]), msl, gains_fn(parent))
            if split is not None and not split[2] > 0.0:
                split = None
        if split is None:
            nodes[me] = dict(feature=-1, threshold=0.0, left=-1, right=-1, n_samples=len(idx),
                             impurity=imp, gain=0.0, value=float(stats.leaf_weight(parent)))
            return me
        j, thr, gain, lidx, ridx = split
        l = build(lidx, depth + 1)
        r = build(ridx, depth + 1)
        nodes[me] = dict(feature=int(j), threshold=float(thr), left=l, right=r, n_samples=len(idx),
                         impurity=imp, gain=gain, value=float(stats.leaf_weight(parent)))
        return me

    build(np.arange(X.shape[0]), 0)
    return _tree_from_lists(nodes, with_counts=False)


# trainers ------------------------------------------------------------------


def _check_train(train: Dataset, p: ModelParams, kind):
    if p.model_kind != kind:
        raise ValidationError(f"expected model_kind {kind!r}, got {p.model_kind!r}")
    if train.row_count == 0:
        raise ValidationError("empty training dataset")
    if p.min_samples_leaf > train.row_count:
        raise ValidationError(
            f"min_samples_leaf={p.min_samples_leaf} exceeds row count {train.row_count}")


def train_decision_tree(train: Dataset, p: ModelParams) -> EnsembleModel:
    _check_train(train, p, "dt")
    all_feats = list(range(len(train.columns)))
    tree = _grow_gini(train.X, train.y, np.arange(train.row_count), p, None, lambda rng: all_feats)
    return EnsembleModel("single", [tree], 0.0, 1.0, p, train.feature_names)


def _member_rng(seed, member):
    return np.random.default_rng([seed, member])


def train_random_forest(train: Dataset, p: ModelParams) -> EnsembleModel:
    """Bagged Gini trees; each member draws from its own (seed, index) stream."""
    _check_train(train, p, "rf")
    d = len(train.columns)
    k = p.resolved_max_features(d)
    all_feats = list(range(d))

    def pool(rng):
        if k >= d:
            return all_feats
        return sorted(rng.choice(d, size=k, replace=False).tolist())

    n = train.row_count
    trees = []
    for m in range(p.n_estimators):
        rng = _member_rng(p.seed, m)
        rows = rng.integers(0, n, size=n) if p.bootstrap else np.arange(n)
        trees.append(_grow_gini(train.X, train.y, np.sort(rows), p, rng, pool))
    return EnsembleModel("vote", trees, 0.0, 1.0, p, train.feature_names)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def logistic_loss(y, margin):
    """Mean binary log-loss of labels `y` under logit `margin`."""
    y = np.asarray(y, dtype=float)
    margin = np.asarray(margin, dtype=float)
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def train_gradient_boosting(train: Dataset, p: ModelParams) -> EnsembleModel:
    """Second-order boosting on the logistic loss, prior-log-odds start."""
    _check_train(train, p, "gbt")
    y = train.y.astype(float)
    prior = y.mean()
    if prior in (0.0, 1.0):
        raise ValidationError("single-class training target: prior log-odds is infinite")
    base = math.log(prior / (1.0 - prior))
    margin = np.full(train.row_count, base)
    trees = []
    for _ in range(p.n_estimators):
        prob = _sigmoid(margin)
        g = prob - y
        h = prob * (1.0 - prob)
        tree = _grow_newton(train.X, g, h, p)
        trees.append(tree)
        margin = margin + p.learning_rate * tree.predict_value(train.X)
    return EnsembleModel("additive_logit", trees, base, p.learning_rate, p, train.feature_names)


TRAINERS = {"dt": train_decision_tree, "rf": train_random_forest, "gbt": train_gradient_boosting}


def train(train_set: Dataset, p: ModelParams) -> EnsembleModel:
    return TRAINERS[p.model_kind](train_set, p)


# prediction ----------------------------------------------------------------


def _as_matrix(m: EnsembleModel, X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != m.n_features:
        raise ValidationError(f"row arity {X.shape[1]} != model feature count {m.n_features}")
    return X, single


def _out(v, single):
    return v[0] if single else v


def raw_output(m: EnsembleModel, X):
    """Quantity explained by SHAP: leaf probability (single), mean leaf
    probability (vote) or logit margin (additive_logit)."""
    X, single = _as_matrix(m, X)
    if m.kind == "additive_logit":
        out = m.base_score + m.learning_rate * sum(t.predict_value(X) for t in m.trees)
    else:
        out = sum(t.predict_value(X) for t in m.trees) / len(m.trees)
    return _out(np.asarray(out, dtype=float), single)


def staged_margins(m: EnsembleModel, X):
    """Yield the logit margin after each boosting round."""
    X, _ = _as_matrix(m, X)
    margin = np.full(X.shape[0], m.base_score)
    for t in m.trees:
        margin = margin + m.learning_rate * t.predict_value(X)
        yield margin


def _votes(m, X):
    return sum((t.predict_value(X) >= 0.5).astype(np.int64) for t in m.trees)


def predict_proba(m: EnsembleModel, X):
    """Class-1 probability; for vote ensembles the fraction of trees voting 1."""
    X, single = _as_matrix(m, X)
    if m.kind == "single":
        out = m.trees[0].predict_value(X)
    elif m.kind == "vote":
        out = _votes(m, X) / len(m.trees)
    else:
        out = _sigmoid(raw_output(m, X))
    return _out(np.asarray(out, dtype=float), single)


def predict(m: EnsembleModel, X):
    """Class 1 iff probability >= 0.5; vote ensembles need a strict majority
    (a tie goes to class 0)."""
    X, single = _as_matrix(m, X)
    if m.kind == "vote":
        out = (2 * _votes(m, X) > len(m.trees)).astype(np.int64)
    else:
        out = (predict_proba(m, X) >= 0.5).astype(np.int64)
    return _out(out, single)


# serialization -------------------------------------------------------------


def _node_to_dict(t: Tree, i, names):
    if t.is_leaf(i):
        d = {"value": float(t.value[i]), "n_samples": int(t.n_samples[i])}
        if t.class_counts is not None:
            d["class_counts"] = [int(c) for c in t.class_counts[i]]
        return d
    return {
        "feature": names[t.feature[i]],
        "threshold": float(t.threshold[i]),
        "left": _node_to_dict(t, t.left[i], names),
        "right": _node_to_dict(t, t.right[i], names),
        "n_samples": int(t.n_samples[i]),
        "impurity": float(t.impurity[i]),
        "gain": float(t.gain[i]),
    }


def model_to_dict(m: EnsembleModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": m.kind,
        "params": asdict(m.params),
        "base_score": float(m.base_score),
        "learning_rate": float(m.learning_rate),
        "feature_names": list(m.feature_names),
        "trees": [_node_to_dict(t, 0, m.feature_names) for t in m.trees],
    }


def save_model(m: EnsembleModel) -> str:
    return json.dumps(model_to_dict(m), indent=2)


def _tree_from_dict(doc, names):
    nodes = []
    with_counts = True

    def visit(nd):
        nonlocal with_counts
        if not isinstance(nd, dict):
            raise ValidationError("malformed node: expected an object")
        me = len(nodes)
        nodes.append(None)
        if "feature" in nd:
            if "left" not in nd or "right" not in nd:
                raise ValidationError("malformed node: internal node missing a child")
            if nd["feature"] not in names:
                raise ValidationError(f"malformed node: unknown feature {nd['feature']!r}")
            l = visit(nd["left"])
            r = visit(nd["right"])
            nodes[me] = dict(feature=names.index(nd["feature"]), threshold=float(nd["threshold"]),
                             left=l, right=r, n_samples=int(nd.get("n_samples", 0)),
                             impurity=float(nd.get("impurity", 0.0)), gain=float(nd.get("gain", 0.0)),
                             value=0.0, class_counts=(0, 0))
        elif "value" in nd:
            counts = nd.get("class_counts")
            if counts is None:
                with_counts = False
                counts = (0, 0)
            nodes[me] = dict(feature=-1, threshold=0.0, left=-1, right=-1,
                             n_samples=int(nd.get("n_samples", 0)), impurity=0.0, gain=0.0,
                             value=float(nd["value"]), class_counts=tuple(counts))
        else:
            raise ValidationError("malformed node: neither internal nor leaf")
        return me

    visit(doc)
    return _tree_from_lists(nodes, with_counts)


def model_from_dict(doc: dict) -> EnsembleModel:
    version = str(doc.get("format_version"))
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"unsupported model format_version {version!r} (expected {FORMAT_VERSION!r})")
    try:
        params = ModelParams(**doc["params"])
        names = list(doc["feature_names"])
        kind = doc["kind"]
        if kind not in KINDS.values():
            raise ValidationError(f"unknown model kind {kind!r}")
        trees = [_tree_from_dict(t, names) for t in doc["trees"]]
        if not trees:
            raise ValidationError("model has no trees")
        return EnsembleModel(kind, trees, float(doc["base_score"]), float(doc["learning_rate"]), params, names)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed model document: {exc}") from None


def load_model(doc) -> EnsembleModel:
    """Accepts a JSON string or an already-parsed dict."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"model is not valid JSON: {exc}") from None
    return model_from_dict(doc)
