"""Relevance bands, rank weights and (weighted) Jaccard similarity matrices."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import UniverseMismatchError, UnknownFeatureError, ValidationError
from .features import MAXIMUM, resolve_name
from .xai.importance import ImportanceVector

RANKS = (1, 2, 3)
UNRANKED = None
DEFAULT_WEIGHT_MAP = {1: 3.0, 2: 2.0, 3: 1.0, UNRANKED: 0.0}


@dataclass(frozen=True)
class RankAssignment:
    label: str
    ranks: dict

    def __post_init__(self):
        for f, r in self.ranks.items():
            if r is not UNRANKED and r not in RANKS:
                raise ValidationError(f"{self.label}: rank {r!r} for {f!r} is not 1, 2, 3 or unranked")

    @property
    def features(self):
        return list(self.ranks)

    def ranked(self):
        return {f: r for f, r in self.ranks.items() if r is not UNRANKED}

    def restrict(self, features) -> "RankAssignment":
        return RankAssignment(self.label, {f: self.ranks.get(f, UNRANKED) for f in features})


@dataclass(frozen=True)
class WeightVector:
    label: str
    weights: dict
    weight_map: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHT_MAP))

    def __post_init__(self):
        bad = {f: w for f, w in self.weights.items() if not (w >= 0 and math.isfinite(w))}
        if bad:
            raise ValidationError(f"{self.label}: weights must be finite and >= 0, got {bad}")


@dataclass(frozen=True)
class SimilarityMatrix:
    labels: list
    values: np.ndarray

    def __getitem__(self, pair):
        a, b = pair
        return float(self.values[self.labels.index(a), self.labels.index(b)])

    def to_csv(self, decimals=2):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + list(self.labels))
        for lab, row in zip(self.labels, self.values):
            w.writerow([lab] + [f"{v:.{decimals}f}" for v in row])
        return buf.getvalue()

    def to_json(self):
        return json.dumps({"labels": list(self.labels), "values": self.values.tolist()}, indent=2)


# discretization ------------------------------------------------------------


@dataclass(frozen=True)
class ThresholdPolicy:
    """Bands on max-normalised scores: >= t1 -> 1, >= t2 -> 2, >= floor -> 3."""

    t1: float = 2 / 3
    t2: float = 1 / 3
    floor: float = 0.05

    def __post_init__(self):
        if not 0 <= self.floor <= self.t2 <= self.t1 <= 1:
            raise ValidationError("thresholds must satisfy 0 <= floor <= t2 <= t1 <= 1")

    def bands(self, s: np.ndarray):
        out = []
        for v in s:
            if v >= self.t1:
                out.append(1)
            elif v >= self.t2:
                out.append(2)
            elif v >= self.floor:
                out.append(3)
            else:
                out.append(UNRANKED)
        return out


@dataclass(frozen=True)
class QuantilePolicy:
    """Features at or above `floor` (normalised) are split into three
    equal-count bands by descending score; tied scores share a band."""

    floor: float = 0.05

    def bands(self, s: np.ndarray):
        eligible = [i for i in np.argsort(-s, kind="stable") if s[i] >= self.floor and s[i] > 0]
        out = [UNRANKED] * len(s)
        m = len(eligible)
        by_score = {}
        for pos, i in enumerate(eligible):
            band = by_score.setdefault(float(s[i]), 1 + (3 * pos) // m)
            out[i] = band
        return out


def discretize(iv: ImportanceVector, policy=ThresholdPolicy(), label: str | None = None) -> RankAssignment:
    """Turn importance scores into relevance bands.

    Negative scores (possible for permutation importance) are floored at 0
    first. Scores are divided by their maximum; an all-zero vector leaves
    every feature unranked.
    """
    names = list(iv.scores)
    s = np.array([iv.scores[f] for f in names], dtype=float)
    if not np.all(np.isfinite(s)):
        raise ValidationError(f"non-finite importance score in {iv.method!r} vector")
    s = np.maximum(s, 0.0)
    if label is None:
        label = f"{iv.method.upper()}-{iv.model_id}" if iv.model_id else iv.method.upper()
    top = s.max() if s.size else 0.0
    if top <= 0:
        return RankAssignment(label, dict.fromkeys(names, UNRANKED))
    return RankAssignment(label, dict(zip(names, policy.bands(s / top))))


def ranks_to_weights(ra: RankAssignment, weight_map: Mapping | None = None) -> WeightVector:
    wm = dict(DEFAULT_WEIGHT_MAP if weight_map is None else weight_map)
    for r in (1, 2, 3, UNRANKED):
        if r not in wm:
            raise ValidationError(f"weight_map has no entry for rank {r!r}")
    seq = [wm[1], wm[2], wm[3], wm[UNRANKED]]
    if any(w < 0 for w in seq):
        raise ValidationError("weight_map entries must be >= 0")
    if not all(a > b for a, b in zip(seq, seq[1:])):
        raise ValidationError("weight_map must be strictly decreasing from rank 1 to unranked")
    return WeightVector(ra.label, {f: float(wm[r]) for f, r in ra.ranks.items()}, wm)


# similarity ----------------------------------------------------------------


def jaccard(a, b) -> float:
    """|a & b| / |a | b|; two empty sets count as identical (1.0)."""
    a, b = set(a), set(b)
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def _weights(v):
    return v.weights if isinstance(v, WeightVector) else dict(v)


def weighted_jaccard(x, y) -> float:
    """sum(min) / sum(max) over a shared feature universe.

    Both vectors all-zero counts as identical (1.0).
    """
    wx, wy = _weights(x), _weights(y)
    if set(wx) != set(wy):
        raise UniverseMismatchError(
            f"feature universes differ: only in first {sorted(set(wx) - set(wy))}, "
            f"only in second {sorted(set(wy) - set(wx))}")
    lo = hi = 0.0
    for f in wx:
        a, b = wx[f], wy[f]
        if a < 0 or b < 0:
            raise ValidationError("weighted Jaccard needs non-negative weights")
        lo += min(a, b)
        hi += max(a, b)
    if hi == 0:
        return 1.0
    return lo / hi


def similarity_matrix(vs: Sequence[WeightVector]) -> SimilarityMatrix:
    vs = list(vs)
    if len(vs) < 2:
        raise ValidationError("need at least two weight vectors")
    labels = [v.label for v in vs]
    dupes = sorted({l for l in labels if labels.count(l) > 1})
    if dupes:
        raise ValidationError(f"duplicate labels {dupes}")
    universe = set(vs[0].weights)
    for v in vs[1:]:
        if set(v.weights) != universe:
            raise UniverseMismatchError(f"{v.label!r} and {vs[0].label!r} have different feature universes")
    n = len(vs)
    M = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            M[i, j] = M[j, i] = weighted_jaccard(vs[i], vs[j])
    return SimilarityMatrix(labels, M)


# rank CSV ------------------------------------------------------------------


def rank_csv(ra: RankAssignment, comments: Sequence[str] = ()) -> str:
    """`feature,rank` CSV with blank rank for unranked features."""
    buf = io.StringIO()
    buf.write(f"# label: {ra.label}\n")
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "rank"])
    for f, r in ra.ranks.items():
        w.writerow([f, "" if r is UNRANKED else r])
    return buf.getvalue()


def _parse_rank_cell(raw, path, row):
    raw = raw.strip()
    if raw == "":
        return UNRANKED
    if raw in ("1", "2", "3"):
        return int(raw)
    raise ValidationError(f"{path}: rank {raw!r} at row {row} is not 1, 2, 3 or blank")


def read_rank_csv(path, universe: Sequence[str] | None = None, label: str | None = None) -> RankAssignment:
    """Read a `feature,rank` file.

    With a `universe`, names resolve through the abbreviation table and
    universe members absent from the file are unranked. Rows naming a
    catalogue feature outside the universe are skipped, so one full
    reference file serves every feature set; any other name is rejected. Without one, the file's own features form the universe.
    The label comes from a `# label:` comment, else the file stem.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"rank file not found: {path}") from None
    body = []
    for line in text.splitlines():
        s = line.strip()
        if s.startswith("#"):
            key, _, val = s[1:].partition(":")
            if key.strip() == "label" and label is None:
                label = val.strip()
            continue
        if s:
            body.append(line)
    label = label or path.stem
    ranks = {}
    if body:
        reader = csv.reader(body)
        header = [h.strip().lower() for h in next(reader)]
        if header[:2] != ["feature", "rank"]:
            raise ValidationError(f"{path}: expected header 'feature,rank', got {header}")
        for i, rec in enumerate(reader, start=1):
            if not rec:
                continue
            name = rec[0].strip()
            cell = rec[1] if len(rec) > 1 else ""
            r = _parse_rank_cell(cell, path, i)
            if universe is not None:
                hit = resolve_name(name, universe)
                if hit is None:
                    if resolve_name(name, MAXIMUM) is not None:
                        continue  # a catalogue feature outside this universe
                    raise UnknownFeatureError(f"{path}: unknown feature {name!r} at row {i}")
                name = hit
            if name in ranks:
                raise ValidationError(f"{path}: feature {name!r} listed twice")
            ranks[name] = r
    if universe is not None:
        ranks = {f: ranks.get(f, UNRANKED) for f in universe}
    return RankAssignment(label, ranks)


def load_reference_ranking(path, universe, label: str | None = None) -> RankAssignment:
    """Reference (guideline/expert) ranking resolved against a feature universe."""
    features = list(getattr(universe, "features", universe))
    return read_rank_csv(path, features, label)
