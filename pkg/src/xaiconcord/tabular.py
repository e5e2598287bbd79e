"""Typed tabular datasets: CSV loading, feature selection, splitting, synthesis."""

from __future__ import annotations

import ast
import csv
import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import UnknownCategoryError, UnknownFeatureError, ValidationError
from .features import read_feature_list, resolve_name

log = logging.getLogger(__name__)

MISSING = -1.0


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str = "numeric"
    categories: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        if self.kind == "numeric":
            if self.categories:
                raise ValidationError(f"numeric column {self.name!r} cannot declare categories")
        elif self.kind == "ordinal":
            if len(self.categories) < 2:
                raise ValidationError(f"ordinal column {self.name!r} needs at least 2 categories")
            if len(set(self.categories)) != len(self.categories):
                raise ValidationError(f"ordinal column {self.name!r} has duplicate categories")
        else:
            raise ValidationError(f"column {self.name!r}: unknown kind {self.kind!r}")

    def encode(self, raw: str) -> float:
        if self.kind == "ordinal":
            return float(self.categories.index(raw))
        return float(raw)

    def decode(self, value: float):
        if value == MISSING:
            return None
        if self.kind == "ordinal":
            return self.categories[int(value)]
        return value


@dataclass(frozen=True)
class Dataset:
    """Encoded feature matrix plus binary target. Arrays are read-only."""

    columns: tuple
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True).reshape(len(self.y), len(self.columns))
        y = np.array(self.y, dtype=np.int64, copy=True)
        if y.size and not np.isin(y, (0, 1)).all():
            raise ValidationError("target must be binary {0,1}")
        for j, col in enumerate(self.columns):
            if col.kind == "ordinal":
                v = X[:, j]
                ok = (v == MISSING) | ((v >= 0) & (v <= len(col.categories) - 1))
                if not ok.all():
                    raise ValidationError(f"encoded values out of range in column {col.name!r}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def feature_names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def row_count(self) -> int:
        return len(self.y)

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise UnknownFeatureError(f"unknown feature {name!r}")

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.columns, self.X[rows], self.y[rows])

    def with_matrix(self, X) -> "Dataset":
        return Dataset(self.columns, X, self.y)

    def require_both_classes(self):
        if self.row_count == 0:
            raise ValidationError("empty dataset")
        if len(np.unique(self.y)) < 2:
            raise ValidationError("training data needs at least one row of each class")


@dataclass(frozen=True)
class FeatureSet:
    name: str
    features: tuple

    def __post_init__(self):
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise ValidationError(f"feature set {self.name!r} is empty")
        if len(set(self.features)) != len(self.features):
            raise ValidationError(f"feature set {self.name!r} has duplicates")

    @classmethod
    def from_file(cls, path, name=None):
        path = Path(path)
        return cls(name or path.stem, tuple(read_feature_list(path)))


@dataclass(frozen=True)
class SplitPair:
    train: Dataset
    test: Dataset
    seed: int
    test_fraction: float
    train_rows: np.ndarray = field(repr=False)
    test_rows: np.ndarray = field(repr=False)


@dataclass
class LoadSummary:
    rows_read: int = 0
    rows_kept: int = 0
    missing_cells_per_column: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "rows_read": self.rows_read,
                "rows_kept": self.rows_kept,
                "missing_cells_per_column": self.missing_cells_per_column,
            },
            indent=2,
        )


@dataclass(frozen=True)
class Schema:
    columns: tuple
    target: str | None = None
    positive_label: str | None = None


def load_schema(path) -> Schema:
    """Read a schema JSON file.

    Format::

        {"target": "therapy", "positive_label": "1",
         "columns": [{"name": "Age", "kind": "numeric"},
                     {"name": "T", "kind": "ordinal", "categories": ["TX", "T1"]}]}
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"schema file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"schema {path}: invalid JSON ({exc})") from None
    cols = tuple(
        ColumnSpec(c["name"], c.get("kind", "numeric"), tuple(c.get("categories", ())))
        for c in doc.get("columns", [])
    )
    if not cols:
        raise ValidationError(f"schema {path} declares no columns")
    return Schema(cols, doc.get("target"), doc.get("positive_label"))


def dump_schema(schema: Schema) -> str:
    doc = {"columns": []}
    if schema.target is not None:
        doc["target"] = schema.target
    if schema.positive_label is not None:
        doc["positive_label"] = schema.positive_label
    for c in schema.columns:
        entry = {"name": c.name, "kind": c.kind}
        if c.kind == "ordinal":
            entry["categories"] = list(c.categories)
        doc["columns"].append(entry)
    return json.dumps(doc, indent=2)


def _parse_target(raw, positive_label, row):
    raw = raw.strip()
    if raw == "":
        raise ValidationError(f"missing target at row {row}")
    if positive_label is not None:
        return 1 if raw == positive_label else 0
    if raw in ("0", "1"):
        return int(raw)
    try:
        v = float(raw)
    except ValueError:
        v = None
    if v in (0.0, 1.0):
        return int(v)
    raise ValidationError(f"target value {raw!r} at row {row} is not 0/1")


def load_csv(path, schema: Sequence[ColumnSpec], target_column: str,
             positive_label: str | None = None, summary: LoadSummary | None = None) -> Dataset:
    """Load a CSV into a Dataset.

    Ordinal cells are encoded by category index; empty cells become MISSING.
    Row numbers in error messages count data rows from 1.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"data file not found: {path}")
    summary = summary if summary is not None else LoadSummary()
    schema = list(schema)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing_cols = [c.name for c in schema if c.name not in header]
        if missing_cols:
            raise UnknownFeatureError(f"{path}: header lacks columns {missing_cols}")
        if target_column not in header:
            raise ValidationError(f"{path}: header lacks target column {target_column!r}")
        rows, target = [], []
        missing = {c.name: 0 for c in schema}
        for i, rec in enumerate(reader, start=1):
            summary.rows_read += 1
            encoded = []
            for col in schema:
                raw = (rec.get(col.name) or "").strip()
                if raw == "":
                    missing[col.name] += 1
                    encoded.append(MISSING)
                    continue
                if col.kind == "ordinal":
                    if raw not in col.categories:
                        raise UnknownCategoryError(col.name, i, raw)
                    encoded.append(col.encode(raw))
                else:
                    try:
                        encoded.append(float(raw))
                    except ValueError:
                        raise ValidationError(
                            f"non-numeric value {raw!r} in numeric column {col.name!r} at row {i}"
                        ) from None
            target.append(_parse_target(rec.get(target_column) or "", positive_label, i))
            rows.append(encoded)
    summary.rows_kept = len(rows)
    summary.missing_cells_per_column = missing
    if any(missing.values()):
        log.info("missing cells: %s", {k: v for k, v in missing.items() if v})
    X = np.array(rows, dtype=float).reshape(len(rows), len(schema))
    return Dataset(tuple(schema), X, np.array(target, dtype=np.int64))


def select_features(d: Dataset, fs: FeatureSet) -> Dataset:
    names = d.feature_names
    idx = []
    for f in fs.features:
        if f not in names:
            hit = resolve_name(f, names)
            if hit is None:
                raise UnknownFeatureError(f"feature set {fs.name!r}: unknown feature {f!r}")
            f = hit
        idx.append(names.index(f))
    return Dataset(tuple(d.columns[j] for j in idx), d.X[:, idx], d.y)


def _stratified_test_counts(class_sizes, n_test):
    # largest-remainder allocation: each class gets floor or ceil of its share
    exact = [s * n_test / sum(class_sizes) for s in class_sizes]
    counts = [int(np.floor(e)) for e in exact]
    order = sorted(range(len(exact)), key=lambda k: (-(exact[k] - counts[k]), k))
    for k in order[: n_test - sum(counts)]:
        counts[k] += 1
    return counts


def split(d: Dataset, test_fraction: float = 0.3, seed: int = 0, stratify: bool = True) -> SplitPair:
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = d.row_count
    if n < 4:
        raise ValidationError(f"need at least 4 rows to split, got {n}")
    n_test = int(round(n * test_fraction))
    n_test = min(max(n_test, 1), n - 1)
    rng = np.random.default_rng(seed)
    if stratify:
        test_idx = []
        classes = [np.flatnonzero(d.y == c) for c in (0, 1)]
        counts = _stratified_test_counts([len(c) for c in classes], n_test)
        for members, k in zip(classes, counts):
            test_idx.extend(rng.permutation(members)[:k].tolist())
        test_idx = np.sort(np.array(test_idx, dtype=np.int64))
    else:
        test_idx = np.sort(rng.permutation(n)[:n_test])
    mask = np.zeros(n, dtype=bool)
    mask[test_idx] = True
    train_idx = np.flatnonzero(~mask)
    return SplitPair(d.take(train_idx), d.take(test_idx), seed, test_fraction, train_idx, test_idx)


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a synthetic dataset.

    `rule` is a boolean numpy expression over column names, e.g. ``"x1 ^ x2"``
    or ``"Stage >= 2"``. Ordinal columns take their category index. Numeric
    columns are drawn uniformly from `ranges[name]` (default ``(0, 1)``).
    ``design="grid"`` cycles through the Cartesian product of all ordinal
    domains instead of sampling.
    """

    n_rows: int
    columns: tuple
    rule: str
    noise: float = 0.0
    seed: int = 0
    ranges: dict = field(default_factory=dict)
    design: str = "random"


_RULE_FUNCS = {"abs": np.abs, "where": np.where, "logical_and": np.logical_and,
               "logical_or": np.logical_or, "logical_xor": np.logical_xor}


def _rule_names(rule):
    try:
        tree = ast.parse(rule, mode="eval")
    except SyntaxError as exc:
        raise ValidationError(f"cannot parse rule {rule!r}: {exc}") from None
    return {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}


def synthesize(spec: GeneratorSpec) -> Dataset:
    if spec.n_rows < 1:
        raise ValidationError("n_rows must be >= 1")
    cols = tuple(spec.columns)
    names = [c.name for c in cols]
    unknown = _rule_names(spec.rule) - set(names) - set(_RULE_FUNCS)
    if unknown:
        raise UnknownFeatureError(f"rule references unknown columns {sorted(unknown)}")
    feat_seq, noise_seq = np.random.SeedSequence(spec.seed).spawn(2)
    rng = np.random.default_rng(feat_seq)
    X = np.empty((spec.n_rows, len(cols)))
    if spec.design == "grid":
        if any(c.kind != "ordinal" for c in cols):
            raise ValidationError("grid design needs ordinal columns only")
        grid = list(itertools.product(*[range(len(c.categories)) for c in cols]))
        for i in range(spec.n_rows):
            X[i] = grid[i % len(grid)]
    elif spec.design == "random":
        for j, c in enumerate(cols):
            if c.kind == "ordinal":
                X[:, j] = rng.integers(0, len(c.categories), spec.n_rows)
            else:
                lo, hi = spec.ranges.get(c.name, (0.0, 1.0))
                X[:, j] = rng.uniform(lo, hi, spec.n_rows)
    else:
        raise ValidationError(f"unknown design {spec.design!r}")
    env = dict(_RULE_FUNCS)
    for j, c in enumerate(cols):
        env[c.name] = X[:, j].astype(np.int64) if c.kind == "ordinal" else X[:, j]
    y = np.asarray(eval(compile(spec.rule, "<rule>", "eval"), {"__builtins__": {}}, env))
    y = np.broadcast_to(y, (spec.n_rows,)).astype(bool).astype(np.int64)
    if spec.noise > 0:
        flips = np.random.default_rng(noise_seq).random(spec.n_rows) < spec.noise
        y = np.where(flips, 1 - y, y)
    return Dataset(cols, X, y)
