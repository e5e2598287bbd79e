from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DATA, GOLDEN
from xaiconcord.concordance import (
    QuantilePolicy,
    RankAssignment,
    ThresholdPolicy,
    WeightVector,
    discretize,
    jaccard,
    load_reference_ranking,
    rank_csv,
    ranks_to_weights,
    read_rank_csv,
    similarity_matrix,
    weighted_jaccard,
)
from xaiconcord.errors import UniverseMismatchError, UnknownFeatureError, ValidationError
from xaiconcord.features import MINIMUM
from xaiconcord.xai import ImportanceVector

FIVE = ("Age", "Stage", "T", "N", "M")


def iv(scores, method="mdi", model_id="DT"):
    return ImportanceVector(method, model_id, dict(scores), False)


def wv(label, values, names=FIVE):
    return WeightVector(label, dict(zip(names, map(float, values))))


def test_discretize_default_thresholds():
    ra = discretize(iv({"Stage": 0.60, "N": 0.25, "Age": 0.15, "T": 0.0, "M": 0.0}))
    assert ra.ranks == {"Stage": 1, "N": 2, "Age": 3, "T": None, "M": None}
    assert ra.label == "MDI-DT"


def test_discretize_all_zero_and_single():
    assert set(discretize(iv(dict.fromkeys(FIVE, 0.0))).ranks.values()) == {None}
    ra = discretize(iv({"Age": 0.0, "Stage": 0.01, "T": 0.0}))
    assert ra.ranks == {"Age": None, "Stage": 1, "T": None}


def test_discretize_floors_negative_scores():
    ra = discretize(iv({"Age": -0.2, "Stage": 0.4, "T": 0.1}, "mda"))
    assert ra.ranks == {"Age": None, "Stage": 1, "T": 3}


def test_discretize_rejects_non_finite():
    with pytest.raises(ValidationError):
        discretize(iv({"Age": float("nan")}))


def test_threshold_policy_validation():
    with pytest.raises(ValidationError):
        ThresholdPolicy(t1=0.2, t2=0.5)


def test_quantile_policy_bands():
    scores = {"a": 6, "b": 5, "c": 4, "d": 3, "e": 2, "f": 1, "g": 0}
    ra = discretize(iv(scores), QuantilePolicy())
    assert ra.ranks == {"a": 1, "b": 1, "c": 2, "d": 2, "e": 3, "f": 3, "g": None}


@pytest.mark.parametrize("ranks, expect", [
    ({"Stage": 1, "N": 2, "Age": 2, "T": 3, "M": None}, [3, 2, 2, 1, 0]),
    (dict.fromkeys(FIVE), [0] * 5),
])
def test_ranks_to_weights(ranks, expect):
    assert list(ranks_to_weights(RankAssignment("x", ranks)).weights.values()) == expect


def test_custom_weight_map():
    w = ranks_to_weights(RankAssignment("x", {"f": 1, "g": 3}), {1: 10, 2: 5, 3: 1, None: 0})
    assert w.weights == {"f": 10, "g": 1}


@pytest.mark.parametrize("wm", [{1: 3, 2: 2, 3: 1}, {1: 1, 2: 2, 3: 3, None: 0}, {1: 3, 2: 2, 3: 1, None: -1}])
def test_bad_weight_maps(wm):
    with pytest.raises(ValidationError):
        ranks_to_weights(RankAssignment("x", {"f": 1}), wm)


def test_rank_assignment_rejects_rank_four():
    with pytest.raises(ValidationError):
        RankAssignment("x", {"f": 4})


@pytest.mark.parametrize("a, b, expect", [
    ({"a", "b"}, {"a", "b"}, 1.0), ({"a"}, {"b"}, 0.0), ({"a", "b"}, {"b", "c"}, 1 / 3), (set(), set(), 1.0),
])
def test_jaccard(a, b, expect):
    assert jaccard(a, b) == pytest.approx(expect)


@pytest.mark.parametrize("x, y, expect", [
    ([1, 3, 2, 2, 2], [2, 3, 1, 2, 3], 9 / 12),
    ([2, 3, 0, 2, 0], [1, 3, 2, 2, 2], 6 / 11),
    ([2, 3, 2, 2, 2], [1, 3, 2, 2, 2], 10 / 11),
    ([1, 2, 3, 0, 0], [1, 2, 3, 0, 0], 1.0),
    ([0] * 5, [0] * 5, 1.0),
])
def test_weighted_jaccard_examples(x, y, expect):
    assert weighted_jaccard(wv("x", x), wv("y", y)) == pytest.approx(expect, abs=1e-15)


def test_weighted_jaccard_universe_mismatch():
    with pytest.raises(UniverseMismatchError):
        weighted_jaccard({"a": 1.0}, {"b": 1.0})


def test_similarity_matrix_shape_and_labels():
    sm = similarity_matrix([wv("A", [3, 2, 1, 0, 0]), wv("B", [3, 2, 1, 0, 0])])
    assert sm.values.tolist() == [[1.0, 1.0], [1.0, 1.0]]
    assert sm["A", "B"] == 1.0
    assert sm.to_csv().splitlines()[0] == ",A,B"


def test_similarity_matrix_rejects_duplicates_and_mismatch():
    with pytest.raises(ValidationError):
        similarity_matrix([wv("A", [1] * 5), wv("A", [2] * 5)])
    with pytest.raises(UniverseMismatchError):
        similarity_matrix([wv("A", [1] * 5), wv("B", [1, 1], ["x", "y"])])


weights = st.lists(st.floats(0, 100, allow_nan=False), min_size=1, max_size=12)


@settings(max_examples=300)
@given(st.data())
def test_weighted_jaccard_properties(data):
    x = data.draw(weights)
    y = data.draw(st.lists(st.floats(0, 100, allow_nan=False), min_size=len(x), max_size=len(x)))
    names = [f"f{i}" for i in range(len(x))]
    a, b = dict(zip(names, x)), dict(zip(names, y))
    s = weighted_jaccard(a, b)
    assert 0.0 <= s <= 1.0
    assert s == weighted_jaccard(b, a)
    assert weighted_jaccard(a, a) == 1.0


@settings(max_examples=300)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=12), st.data())
def test_scale_invariance_is_exact(x, data):
    y = data.draw(st.lists(st.integers(0, 6), min_size=len(x), max_size=len(x)))
    c = data.draw(st.sampled_from([2, 4, 0.5, 8]))
    names = [f"f{i}" for i in range(len(x))]
    a, b = dict(zip(names, map(float, x))), dict(zip(names, map(float, y)))
    scaled = weighted_jaccard({k: c * v for k, v in a.items()}, {k: c * v for k, v in b.items()})
    assert scaled == weighted_jaccard(a, b)


@settings(max_examples=300)
@given(st.lists(st.booleans(), min_size=1, max_size=15), st.data())
def test_binary_reduction_to_jaccard(x, data):
    y = data.draw(st.lists(st.booleans(), min_size=len(x), max_size=len(x)))
    names = [f"f{i}" for i in range(len(x))]
    a = {n for n, v in zip(names, x) if v}
    b = {n for n, v in zip(names, y) if v}
    wa = {n: float(v) for n, v in zip(names, x)}
    wb = {n: float(v) for n, v in zip(names, y)}
    union = a | b
    expect = Fraction(len(a & b), len(union)) if union else Fraction(1)
    assert weighted_jaccard(wa, wb) == float(expect) == jaccard(a, b)


# rank files -------------------------------------------------------------------


def test_rank_csv_format():
    ra = discretize(iv({"Stage": 0.6, "N": 0.25, "Age": 0.15, "T": 0, "M": 0}))
    text = rank_csv(ra, ["policy: threshold"])
    assert text.splitlines() == ["# label: MDI-DT", "# policy: threshold", "feature,rank",
                                 "Stage,1", "N,2", "Age,3", "T,", "M,"]


def test_rank_csv_round_trip(tmp_path):
    ra = RankAssignment("SHAP-RF", {"Age": 2, "Stage": 1, "T": None})
    p = tmp_path / "r.csv"
    p.write_text(rank_csv(ra))
    assert read_rank_csv(p) == ra


def test_reference_guidelines_minimum():
    ra = load_reference_ranking(DATA / "guidelines.csv", MINIMUM)
    assert ra.label == "Guidelines"
    assert ra.ranks == {"Age": 3, "T": 2, "N": 2, "M": 2, "Stage": 1}


# The recommended-set rank table disagrees with the reference table on four
# expert ranks; everything else matches.
KNOWN_EXPERT_DIFFS = {"Year of initial diagnosis": (2, 1), "Adenocarcinoma invasion": (2, 1),
                      "Neoplasm cancer status": (1, 2), "Neoplasm histologic grade": (3, 1)}


@pytest.mark.parametrize("fs", ["minimum", "recommended", "maximum"])
@pytest.mark.parametrize("ref", ["Guidelines", "Experts"])
def test_golden_transcriptions_against_bundled_references(fs, ref):
    gold = read_rank_csv(GOLDEN / fs / f"{ref}.csv")
    bundled = load_reference_ranking(DATA / f"{ref.lower()}.csv", gold.features)
    diffs = {f: (gold.ranks[f], bundled.ranks[f]) for f in gold.ranks if gold.ranks[f] != bundled.ranks[f]}
    assert diffs == (KNOWN_EXPERT_DIFFS if (fs, ref) == ("recommended", "Experts") else {})


def test_empty_rank_file_is_all_unranked(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("feature,rank\n")
    assert set(read_rank_csv(p, FIVE).ranks.values()) == {None}


def test_rank_file_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("feature,rank\nAge,1\nStage,4\n")
    with pytest.raises(ValidationError, match="row 2"):
        read_rank_csv(p)
    p.write_text("feature,rank\nTumour,1\n")
    with pytest.raises(UnknownFeatureError):
        read_rank_csv(p, FIVE)
    with pytest.raises(ValidationError, match="not found"):
        read_rank_csv(tmp_path / "none.csv")


def test_abbreviations_resolve_in_rank_files(tmp_path):
    p = tmp_path / "abbr.csv"
    p.write_text("feature,rank\nAdeno.,1\nDimensi.,2\n")
    ra = read_rank_csv(p, ["Adenocarcinoma invasion", "Maximum tumor dimension", "Age"], "X")
    assert ra.ranks == {"Adenocarcinoma invasion": 1, "Maximum tumor dimension": 2, "Age": None}


def test_restrict_keeps_order():
    ra = RankAssignment("x", {"a": 1, "b": 2, "c": None})
    assert ra.restrict(["c", "a", "z"]).ranks == {"c": None, "a": 1, "z": None}
    assert ra.ranked() == {"a": 1, "b": 2}


# Cells of the published matrices that the published rank tables do not
# reproduce within 0.005. Pinned so any change in the arithmetic shows up.
KNOWN_OFF_CELLS = {
    ("minimum", "XGB"): {("MDI-XGB", "LIME-XGB")},
    ("minimum", "DT"): set(),
    ("recommended", "DT"): set(),
    ("recommended", "XGB"): {("MDI-XGB", "SHAP-XGB"), ("MDI-XGB", "LIME-XGB"), ("MDA-XGB", "SHAP-XGB"),
                             ("MDA-XGB", "LIME-XGB"), ("SHAP-XGB", "Experts"), ("LIME-XGB", "Guidelines"),
                             ("LIME-XGB", "Experts")},
    ("maximum", "DT"): {("SHAP-DT", "Guidelines")},
    ("maximum", "XGB"): {("MDI-XGB", "LIME-XGB"), ("MDA-XGB", "LIME-XGB"), ("SHAP-XGB", "LIME-XGB"),
                         ("LIME-XGB", "Guidelines"), ("LIME-XGB", "Experts")},
}


@pytest.mark.parametrize("fs, model", sorted(KNOWN_OFF_CELLS))
def test_published_matrices_from_rank_tables(fs, model):
    import csv
    with open(GOLDEN / fs / f"published_{model}.csv") as fh:
        rows = list(csv.reader(fh))
    labels = rows[0][1:]
    published = {r[0]: dict(zip(labels, map(float, r[1:]))) for r in rows[1:]}
    sm = similarity_matrix([ranks_to_weights(read_rank_csv(GOLDEN / fs / f"{l}.csv")) for l in labels])
    off = {(a, b) for i, a in enumerate(labels) for b in labels[i + 1:]
           if abs(sm[a, b] - published[a][b]) > 0.005}
    assert off == KNOWN_OFF_CELLS[(fs, model)]
    assert np.allclose(np.diag(sm.values), 1.0)
