"""Config-driven experiment grid: train, evaluate, explain, band, compare."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .concordance import (
    DEFAULT_WEIGHT_MAP,
    QuantilePolicy,
    ThresholdPolicy,
    UNRANKED,
    discretize,
    load_reference_ranking,
    rank_csv,
    ranks_to_weights,
    similarity_matrix,
)
from .errors import ValidationError
from .features import BUILTIN_SETS
from .metrics import confusion, evaluate
from .tabular import Dataset, FeatureSet, LoadSummary, load_csv, load_schema, select_features, split
from .trees import ModelParams, predict, save_model, train
from .xai import LimeConfig, lime_global, mda, mdi, shap_global, shap_values

log = logging.getLogger(__name__)

METHODS = ("mdi", "mda", "shap", "lime")
MODEL_LABELS = {"dt": "DT", "rf": "RF", "gbt": "XGB"}
TABLE_COLUMNS = ["Model", "Parameters", "Feature Set", "Accuracy", "Precision", "Recall", "F1-Score"]
HASH_ALGORITHM = "sha256"


@dataclass
class ModelSpec:
    name: str
    params: ModelParams
    feature_sets: list
    label: str = ""

    def __post_init__(self):
        self.label = self.label or MODEL_LABELS[self.params.model_kind]

    def parameter_string(self):
        p = self.params
        if p.model_kind == "gbt":
            return f"md={p.max_depth}, ne={p.n_estimators}"
        return f"md={p.max_depth}, msl={p.min_samples_leaf}"


@dataclass
class PipelineConfig:
    data: Path
    schema: Path
    seed: int
    output: Path
    target: str | None = None
    test_fraction: float = 0.3
    stratify: bool = True
    methods: list = field(default_factory=lambda: list(METHODS))
    explain_on: str = "test"
    feature_sets: dict = field(default_factory=dict)  # name -> path or builtin:<name>
    models: list = field(default_factory=list)
    policy: object = field(default_factory=ThresholdPolicy)
    weight_map: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHT_MAP))
    references: dict = field(default_factory=dict)  # label -> path
    mda_repeats: int = 10
    lime: LimeConfig = field(default_factory=LimeConfig)
    base_dir: Path = field(default_factory=Path.cwd)

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def validate(self):
        problems = []
        for what, p in [("data", self.data), ("schema", self.schema)]:
            if not self.resolve(p).exists():
                problems.append(f"{what} file not found: {p}")
        for name, src in self.feature_sets.items():
            if str(src).startswith("builtin:"):
                if str(src)[8:] not in BUILTIN_SETS:
                    problems.append(f"feature set {name!r}: unknown builtin {src!r}")
            elif not self.resolve(src).exists():
                problems.append(f"feature set {name!r}: file not found: {src}")
        for label, p in self.references.items():
            if not self.resolve(p).exists():
                problems.append(f"reference {label!r}: file not found: {p}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            problems.append(f"unknown xai methods {bad}")
        if self.explain_on not in ("train", "test", "all"):
            problems.append(f"explain_on must be train, test or all, got {self.explain_on!r}")
        if not self.models:
            problems.append("no [model ...] sections")
        for spec in self.models:
            for fs in spec.feature_sets:
                if fs not in self.feature_sets:
                    problems.append(f"model {spec.name!r} references unknown feature set {fs!r}")
        if "lime" in self.methods and self.lime.n_samples < 10 * self.lime.k:
            problems.append(f"lime n_samples={self.lime.n_samples} is below 10*k={10 * self.lime.k}")
        if problems:
            raise ValidationError("invalid config:\n  " + "\n  ".join(problems))

    # file form ---------------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        run = {
            "data": str(self.data),
            "schema": str(self.schema),
            "seed": str(self.seed),
            "output": str(self.output),
            "test_fraction": repr(self.test_fraction),
            "stratify": str(self.stratify).lower(),
            "methods": ", ".join(self.methods),
            "explain_on": self.explain_on,
        }
        if self.target is not None:
            run["target"] = self.target
        cp["run"] = run
        for name, src in self.feature_sets.items():
            src = str(src)
            cp[f"feature_set {name}"] = {"builtin": src[8:]} if src.startswith("builtin:") else {"path": src}
        for spec in self.models:
            p = spec.params
            sec = {
                "kind": p.model_kind,
                "label": spec.label,
                "feature_sets": ", ".join(spec.feature_sets),
                "max_depth": str(p.max_depth),
                "min_samples_leaf": str(p.min_samples_leaf),
                "n_estimators": str(p.n_estimators),
                "max_features": str(p.max_features),
                "bootstrap": str(p.bootstrap).lower(),
                "learning_rate": repr(p.learning_rate),
                "l2_lambda": repr(p.l2_lambda),
                "min_gain": repr(p.min_gain),
                "seed": str(p.seed),
            }
            cp[f"model {spec.name}"] = sec
        if isinstance(self.policy, QuantilePolicy):
            cp["discretize"] = {"policy": "quantile", "floor": repr(self.policy.floor)}
        else:
            cp["discretize"] = {"policy": "threshold", "t1": repr(self.policy.t1),
                                "t2": repr(self.policy.t2), "floor": repr(self.policy.floor)}
        cp["weights"] = {("unranked" if r is UNRANKED else str(r)): repr(float(w))
                         for r, w in self.weight_map.items()}
        for label, p in self.references.items():
            cp[f"reference {label}"] = {"path": str(p)}
        cp["mda"] = {"n_repeats": str(self.mda_repeats)}
        lime = {"n_samples": str(self.lime.n_samples), "k": str(self.lime.k), "ridge": repr(self.lime.ridge)}
        if self.lime.kernel_width is not None:
            lime["kernel_width"] = repr(self.lime.kernel_width)
        cp["lime"] = lime
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, base_dir=None) -> "PipelineConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";",))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ValidationError(f"cannot parse config: {exc}") from None
        if "run" not in cp:
            raise ValidationError("config lacks a [run] section")
        run = cp["run"]
        try:
            if "seed" not in run:
                raise ValidationError("config [run] section must set seed")
            seed = run.getint("seed")
            cfg = cls(
                data=Path(run["data"]),
                schema=Path(run["schema"]),
                seed=seed,
                output=Path(run.get("output", "report")),
                target=run.get("target"),
                test_fraction=run.getfloat("test_fraction", 0.3),
                stratify=run.getboolean("stratify", True),
                methods=_list(run.get("methods", ", ".join(METHODS))),
                explain_on=run.get("explain_on", "test"),
                base_dir=Path(base_dir) if base_dir is not None else Path.cwd(),
            )
            for sec in cp.sections():
                kind, _, name = sec.partition(" ")
                s = cp[sec]
                if kind == "feature_set":
                    cfg.feature_sets[name] = f"builtin:{s['builtin']}" if "builtin" in s else s["path"]
                elif kind == "model":
                    mf = s.get("max_features", "sqrt")
                    params = ModelParams(
                        model_kind=s["kind"],
                        max_depth=s.getint("max_depth", 3),
                        min_samples_leaf=s.getint("min_samples_leaf", 1),
                        n_estimators=s.getint("n_estimators", 100),
                        max_features=int(mf) if mf.isdigit() else mf,
                        bootstrap=s.getboolean("bootstrap", True),
                        learning_rate=s.getfloat("learning_rate", 0.3),
                        l2_lambda=s.getfloat("l2_lambda", 1.0),
                        min_gain=s.getfloat("min_gain", 0.0),
                        seed=s.getint("seed", seed),
                    )
                    fsets = _list(s.get("feature_sets", "")) or None
                    cfg.models.append(ModelSpec(name, params, fsets, s.get("label", "")))
                elif kind == "reference":
                    cfg.references[name] = s["path"]
                elif sec == "discretize":
                    if s.get("policy", "threshold") == "quantile":
                        cfg.policy = QuantilePolicy(s.getfloat("floor", 0.05))
                    else:
                        cfg.policy = ThresholdPolicy(s.getfloat("t1", 2 / 3), s.getfloat("t2", 1 / 3),
                                                     s.getfloat("floor", 0.05))
                elif sec == "weights":
                    cfg.weight_map = {(UNRANKED if k == "unranked" else int(k)): float(v) for k, v in s.items()}
                elif sec == "mda":
                    cfg.mda_repeats = s.getint("n_repeats", 10)
                elif sec == "lime":
                    kw = s.get("kernel_width")
                    cfg.lime = LimeConfig(s.getint("n_samples", 1000), float(kw) if kw else None,
                                          s.getint("k", 3), s.getfloat("ridge", 1e-3), seed)
                elif sec != "run":
                    raise ValidationError(f"unknown config section [{sec}]")
        except (KeyError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"invalid config value: {exc}") from None
        for spec in cfg.models:
            if spec.feature_sets is None:
                spec.feature_sets = list(cfg.feature_sets)
        cfg.lime = replace(cfg.lime, seed=cfg.seed)
        return cfg

    @classmethod
    def read(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise ValidationError(f"config not found: {path}") from None
        return cls.from_ini(text, base_dir=path.parent)


def _list(s):
    return [x.strip() for x in s.split(",") if x.strip()]


def digest(path) -> str:
    h = hashlib.new(HASH_ALGORITHM)
    h.update(Path(path).read_bytes())
    return h.hexdigest()


class _Writer:
    """Writes artifacts under `root` and remembers them for the manifest."""

    def __init__(self, root: Path):
        self.root = root
        self.files = []

    def write(self, rel, text):
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8", newline="\n")
        self.files.append(rel)
        return p

    def manifest(self, config_text, started, completed):
        return {
            "tool": "xaiconcord",
            "tool_version": __version__,
            "hash_algorithm": HASH_ALGORITHM,
            "config_digest": hashlib.new(HASH_ALGORITHM, config_text.encode()).hexdigest(),
            "started_at": started,
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "completed": completed,
            "artifacts": [{"path": f, "digest": digest(self.root / f)} for f in sorted(self.files)],
        }


def accuracy_table_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for r in rows:
        w.writerow([r[c] if c in ("Model", "Parameters", "Feature Set") else f"{r[c]:.2f}" for c in TABLE_COLUMNS])
    return buf.getvalue()


def _feature_set(cfg, name):
    src = str(cfg.feature_sets[name])
    if src.startswith("builtin:"):
        return FeatureSet(name, BUILTIN_SETS[src[8:]])
    return FeatureSet.from_file(cfg.resolve(src), name)


def run_report(cfg: PipelineConfig, out_dir=None, config_text: str | None = None) -> dict:
    """Run the whole grid and return the manifest dict.

    Validation happens before any training. On a runtime error the
    manifest is still written (``completed: false``) listing the artifacts
    finished so far, and the error propagates.
    """
    cfg.validate()
    root = Path(out_dir) if out_dir is not None else cfg.resolve(cfg.output)
    config_text = config_text if config_text is not None else cfg.to_ini()
    started = datetime.now(timezone.utc).isoformat()
    schema = load_schema(cfg.resolve(cfg.schema))
    target = cfg.target or schema.target
    if target is None:
        raise ValidationError("no target column: set [run] target or the schema's 'target'")
    fsets = {name: _feature_set(cfg, name) for name in cfg.feature_sets}
    summary = LoadSummary()
    data = load_csv(cfg.resolve(cfg.data), schema.columns, target, schema.positive_label, summary)
    for fs in fsets.values():
        select_features(data, fs)
    refs = {label: load_reference_ranking(cfg.resolve(p), data.feature_names, label)
            for label, p in cfg.references.items()}

    w = _Writer(root)
    try:
        w.write("load_summary.json", summary.to_json() + "\n")
        w.write("config.ini", config_text)
        sp = split(data, cfg.test_fraction, cfg.seed, cfg.stratify)
        table = []
        for spec in cfg.models:
            for fs_name in spec.feature_sets:
                fs = fsets[fs_name]
                table.append(_run_cell(cfg, spec, fs, sp, refs, w))
        w.write("accuracy_table.csv", accuracy_table_csv(table))
        w.write("accuracy_table.json", json.dumps(table, indent=2) + "\n")
    except Exception:
        _write_manifest(w, config_text, started, False)
        raise
    return _write_manifest(w, config_text, started, True)


def _write_manifest(w, config_text, started, completed):
    man = w.manifest(config_text, started, completed)
    (w.root / "manifest.json").write_text(json.dumps(man, indent=2) + "\n", encoding="utf-8")
    return man


def _run_cell(cfg, spec, fs, sp, refs, w):
    cell = f"{spec.name}/{fs.name}"
    log.info("cell %s", cell)
    tr = select_features(sp.train, fs)
    te = select_features(sp.test, fs)
    model = train(tr, spec.params)
    w.write(f"{cell}/model.json", save_model(model) + "\n")
    report = evaluate(confusion(predict(model, te.X), te.y))
    w.write(f"{cell}/metrics.json", report.to_json() + "\n")

    target = {"train": tr, "test": te}.get(cfg.explain_on)
    if target is None:
        target = Dataset(tr.columns, np.vstack([tr.X, te.X]), np.concatenate([tr.y, te.y]))
    vectors = []
    for method in cfg.methods:
        if method == "mdi":
            iv = mdi(model, spec.label)
        elif method == "mda":
            iv = mda(model, target, cfg.mda_repeats, cfg.seed, spec.label)
        elif method == "shap":
            sm = shap_values(model, target)
            w.write(f"{cell}/shap_values.csv", sm.to_csv())
            iv = shap_global(sm, spec.label)
        else:
            iv = lime_global(model, target, cfg.lime, background=tr, model_id=spec.label)
        w.write(f"{cell}/importance_{method}.json", iv.to_json() + "\n")
        ra = discretize(iv, cfg.policy, label=f"{method.upper()}-{spec.label}")
        w.write(f"{cell}/ranks_{method}.csv", rank_csv(ra, _policy_comments(cfg.policy)))
        vectors.append(ranks_to_weights(ra, cfg.weight_map))
    for label, ref in refs.items():
        ra = ref.restrict(fs.features)
        w.write(f"{cell}/ranks_{label}.csv", rank_csv(ra))
        vectors.append(ranks_to_weights(ra, cfg.weight_map))
    if len(vectors) >= 2:
        sm = similarity_matrix(vectors)
        w.write(f"{cell}/similarity.csv", sm.to_csv())
        w.write(f"{cell}/similarity.json", sm.to_json() + "\n")
    return {
        "Model": spec.label,
        "Parameters": spec.parameter_string(),
        "Feature Set": fs.name.capitalize(),
        "Accuracy": report.accuracy,
        "Precision": report.precision,
        "Recall": report.recall,
        "F1-Score": report.f1,
    }


def _policy_comments(policy):
    if isinstance(policy, QuantilePolicy):
        return [f"policy: quantile floor={policy.floor!r}"]
    return [f"policy: threshold t1={policy.t1!r} t2={policy.t2!r} floor={policy.floor!r}"]
