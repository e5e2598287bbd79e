import csv
import json

import pytest

from conftest import write_tcga_extract
from xaiconcord import cli
from xaiconcord.errors import ValidationError
from xaiconcord.pipeline import PipelineConfig, run_report

SMALL = """\
[run]
data = tcga.csv
schema = tcga_schema.json
seed = 3
output = out
methods = mdi, shap, mda, lime
explain_on = {explain_on}

[feature_set minimum]
builtin = minimum

[model dt]
kind = dt
max_depth = 2
min_samples_leaf = 5

[model xgb]
kind = gbt
max_depth = 2
n_estimators = 5

[reference Guidelines]
path = guidelines.csv

[mda]
n_repeats = 2

[lime]
n_samples = 60
"""


@pytest.fixture
def workdir(tmp_path):
    write_tcga_extract(tmp_path, n_rows=80, seed=2)
    return tmp_path


def write_config(workdir, text, name="small.ini"):
    p = workdir / name
    p.write_text(text)
    return p


@pytest.mark.parametrize("explain_on", ["train", "test", "all"])
def test_small_report(workdir, explain_on):
    cfg = PipelineConfig.read(write_config(workdir, SMALL.format(explain_on=explain_on)))
    man = run_report(cfg)
    out = workdir / "out"
    assert man["completed"] and (out / "manifest.json").exists()
    paths = {a["path"] for a in man["artifacts"]}
    for model in ("dt", "xgb"):
        cell = f"{model}/minimum"
        for name in ["model.json", "metrics.json", "shap_values.csv", "similarity.csv", "ranks_Guidelines.csv"]:
            assert f"{cell}/{name}" in paths
    labels = json.loads((out / "xgb/minimum/similarity.json").read_text())["labels"]
    assert labels == ["MDI-XGB", "SHAP-XGB", "MDA-XGB", "LIME-XGB", "Guidelines"]


def test_config_round_trip(workdir):
    cfg = PipelineConfig.read(write_config(workdir, SMALL.format(explain_on="test")))
    again = PipelineConfig.from_ini(cfg.to_ini(), base_dir=workdir)
    assert again == cfg


def test_missing_reference_fails_before_training(workdir, capsys):
    text = SMALL.format(explain_on="test").replace("guidelines.csv", "nowhere.csv")
    p = write_config(workdir, text)
    assert cli.main(["report", "--config", str(p)]) == 2
    assert "nowhere.csv" in capsys.readouterr().err
    assert not (workdir / "out").exists()


@pytest.mark.parametrize("edit, match", [
    (("[mda]", "[bogus]"), "unknown config section"),
    (("seed = 3\n", ""), "seed"),
    (("kind = dt", "kind = svm"), "model_kind"),
    (("n_samples = 60", "n_samples = 20"), "10\\*k"),
    (("explain_on = test", "explain_on = holdout"), "explain_on"),
])
def test_invalid_configs(workdir, edit, match):
    text = SMALL.format(explain_on="test").replace(*edit)
    with pytest.raises(ValidationError, match=match):
        PipelineConfig.from_ini(text, base_dir=workdir).validate()


def test_runtime_failure_writes_incomplete_manifest(workdir, monkeypatch):
    import xaiconcord.pipeline as pl

    def boom(*a, **k):
        raise RuntimeError("no")
    monkeypatch.setattr(pl, "shap_values", boom)
    cfg = PipelineConfig.read(write_config(workdir, SMALL.format(explain_on="test")))
    with pytest.raises(RuntimeError):
        run_report(cfg)
    man = json.loads((workdir / "out" / "manifest.json").read_text())
    assert man["completed"] is False
    assert "dt/minimum/model.json" in {a["path"] for a in man["artifacts"]}


@pytest.fixture(scope="module")
def full_grid(tmp_path_factory):
    d = tmp_path_factory.mktemp("grid")
    config = write_tcga_extract(d)
    assert cli.main(["report", "--config", str(config), "--quiet"]) == 0
    return d / "report"


def test_grid_artifact_counts(full_grid):
    man = json.loads((full_grid / "manifest.json").read_text())
    paths = [a["path"] for a in man["artifacts"]]
    assert sum(p.endswith("/metrics.json") for p in paths) == 9
    assert sum("/importance_" in p for p in paths) == 36
    assert sum(p.endswith("/similarity.csv") for p in paths) == 9
    assert all(len(a["digest"]) == 64 for a in man["artifacts"])
    assert man["hash_algorithm"] == "sha256" and man["completed"]


def test_grid_accuracy_table(full_grid):
    with open(full_grid / "accuracy_table.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["Model", "Parameters", "Feature Set", "Accuracy", "Precision", "Recall", "F1-Score"]
    grid = [(r["Model"], r["Parameters"], r["Feature Set"]) for r in rows]
    assert grid == [
        ("DT", "md=3, msl=5", "Minimum"), ("DT", "md=2, msl=30", "Recommended"), ("DT", "md=3, msl=20", "Maximum"),
        ("RF", "md=2, msl=5", "Minimum"), ("RF", "md=3, msl=5", "Recommended"), ("RF", "md=4, msl=5", "Maximum"),
        ("XGB", "md=2, ne=50", "Minimum"), ("XGB", "md=4, ne=40", "Recommended"),
        ("XGB", "md=3, ne=40", "Maximum"),
    ]
    for r in rows:
        assert r["Recall"] == r["Accuracy"]
