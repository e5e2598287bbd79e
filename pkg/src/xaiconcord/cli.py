"""Command-line interface.

Exit codes: 0 success, 1 runtime failure, 2 validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .concordance import (
    DEFAULT_WEIGHT_MAP,
    UNRANKED,
    QuantilePolicy,
    RankAssignment,
    ThresholdPolicy,
    discretize,
    rank_csv,
    ranks_to_weights,
    read_rank_csv,
    similarity_matrix,
)
from .errors import UniverseMismatchError, ValidationError
from .features import BUILTIN_SETS
from .metrics import AVERAGING, confusion, evaluate
from .pipeline import PipelineConfig, run_report
from .tabular import FeatureSet, LoadSummary, load_csv, load_schema, select_features, split
from .trees import ModelParams, load_model, predict, save_model, train
from .xai import ImportanceVector, LimeConfig, lime_global, mda, mdi, shap_global, shap_values

log = logging.getLogger("xaiconcord")


def _out(args, text):
    if not args.quiet:
        print(text)


def _load_dataset(args):
    schema = load_schema(args.schema)
    target = args.target or schema.target
    if target is None:
        raise ValidationError("no target column: pass --target or set 'target' in the schema")
    summary = LoadSummary()
    data = load_csv(args.data, schema.columns, target, schema.positive_label, summary)
    return data, summary


def _feature_set(spec):
    if spec in BUILTIN_SETS:
        return FeatureSet(spec, BUILTIN_SETS[spec])
    p = Path(spec)
    if not p.exists():
        raise ValidationError(f"feature set file not found: {spec}")
    return FeatureSet.from_file(p)


def _max_features(v):
    return int(v) if v.isdigit() else v


def cmd_train(args):
    data, summary = _load_dataset(args)
    if args.features:
        data = select_features(data, _feature_set(args.features))
    params = ModelParams(
        model_kind=args.model,
        max_depth=args.max_depth,
        min_samples_leaf=args.min_samples_leaf,
        n_estimators=args.n_estimators,
        max_features=_max_features(args.max_features),
        bootstrap=not args.no_bootstrap,
        learning_rate=args.learning_rate,
        l2_lambda=args.l2_lambda,
        min_gain=args.min_gain,
        seed=args.seed,
    )
    sp = split(data, args.test_fraction, args.seed, not args.no_stratify)
    model = train(sp.train, params)
    report = evaluate(confusion(predict(model, sp.test.X), sp.test.y), args.averaging)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "model.json").write_text(save_model(model) + "\n", encoding="utf-8")
    (out / "metrics.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / "load_summary.json").write_text(summary.to_json() + "\n", encoding="utf-8")
    (out / "split.json").write_text(json.dumps({
        "seed": args.seed, "test_fraction": args.test_fraction,
        "train_rows": sp.train_rows.tolist(), "test_rows": sp.test_rows.tolist()}) + "\n", encoding="utf-8")
    _out(args, f"accuracy  {report.accuracy:.4f}\nprecision {report.precision:.4f}\n"
               f"recall    {report.recall:.4f}\nf1        {report.f1:.4f}")
    return 0


def _read_model(path):
    try:
        return load_model(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"model file not found: {path}") from None


def _model_view(model, data):
    missing = [f for f in model.feature_names if f not in data.feature_names]
    if missing:
        raise ValidationError(f"data lacks model features {missing}")
    return select_features(data, FeatureSet("model", model.feature_names))


def cmd_evaluate(args):
    model = _read_model(args.model)
    data, _ = _load_dataset(args)
    data = _model_view(model, data)
    report = evaluate(confusion(predict(model, data.X), data.y), args.averaging)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    _out(args, report.to_json())
    return 0


def cmd_explain(args):
    if args.method in ("mda", "lime") and args.seed is None:
        raise ValidationError(f"--seed is required for method {args.method}")
    model = _read_model(args.model)
    data, _ = _load_dataset(args)
    data = _model_view(model, data)
    out = Path(args.out)
    model_id = args.model_id or Path(args.model).stem
    if args.method == "mdi":
        iv = mdi(model, model_id)
    elif args.method == "mda":
        iv = mda(model, data, args.n_repeats, args.seed, model_id)
    elif args.method == "shap":
        sm = shap_values(model, data)
        out.mkdir(parents=True, exist_ok=True)
        (out / "shap_values.csv").write_text(sm.to_csv(), encoding="utf-8")
        iv = shap_global(sm, model_id)
    else:
        cfg = LimeConfig(args.lime_samples, args.kernel_width, args.lime_k, args.ridge, args.seed)
        if cfg.n_samples < 10 * cfg.k:
            raise ValidationError(f"--lime-samples {cfg.n_samples} is below 10*k={10 * cfg.k}")
        iv = lime_global(model, data, cfg, model_id=model_id)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"importance_{args.method}.json").write_text(iv.to_json() + "\n", encoding="utf-8")
    _out(args, iv.to_json())
    return 0


def cmd_rank(args):
    iv = ImportanceVector.read(args.importance)
    if args.policy == "quantile":
        policy = QuantilePolicy(args.floor)
        audit = [f"policy: quantile floor={policy.floor!r}"]
    else:
        policy = ThresholdPolicy(args.t1, args.t2, args.floor)
        audit = [f"policy: threshold t1={policy.t1!r} t2={policy.t2!r} floor={policy.floor!r}"]
    ra = discretize(iv, policy, label=args.label)
    audit.append(f"source: {Path(args.importance).name} method={iv.method}")
    text = rank_csv(ra, audit)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    _out(args, text.rstrip("\n"))
    return 0


def parse_weight_map(spec):
    """"1=3,2=2,3=1,unranked=0" -> {1: 3.0, 2: 2.0, 3: 1.0, None: 0.0}"""
    if not spec:
        return dict(DEFAULT_WEIGHT_MAP)
    wm = {}
    for part in spec.split(","):
        key, sep, val = part.partition("=")
        if not sep:
            raise ValidationError(f"bad weight map entry {part!r}")
        key = key.strip()
        try:
            wm[UNRANKED if key == "unranked" else int(key)] = float(val)
        except ValueError:
            raise ValidationError(f"bad weight map entry {part!r}") from None
    return wm


def cmd_similarity(args):
    if len(args.ranks) < 2:
        raise ValidationError("need at least two rank files")
    ras = [read_rank_csv(p) for p in args.ranks]
    base = set(ras[0].ranks)
    for p, ra in zip(args.ranks[1:], ras[1:]):
        if set(ra.ranks) != base:
            raise UniverseMismatchError(f"feature universe of {p} differs from {args.ranks[0]}")
    wm = parse_weight_map(args.weights)
    seen = {}
    for i, ra in enumerate(ras):
        # the same label twice (e.g. one file passed twice) gets a numeric suffix
        seen[ra.label] = seen.get(ra.label, 0) + 1
        if seen[ra.label] > 1:
            ras[i] = RankAssignment(f"{ra.label}#{seen[ra.label]}", ra.ranks)
    sm = similarity_matrix([ranks_to_weights(ra, wm) for ra in ras])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "similarity.csv").write_text(sm.to_csv(), encoding="utf-8")
        (out / "similarity.json").write_text(sm.to_json() + "\n", encoding="utf-8")
    _out(args, sm.to_csv().rstrip("\n"))
    return 0


def cmd_report(args):
    cfg = PipelineConfig.read(args.config)
    text = Path(args.config).read_text(encoding="utf-8")
    man = run_report(cfg, args.out, config_text=text)
    _out(args, f"{len(man['artifacts'])} artifacts written; manifest at "
               f"{(Path(args.out) if args.out else cfg.resolve(cfg.output)) / 'manifest.json'}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="xaiconcord", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true")
    common.add_argument("-v", "--verbose", action="store_true")

    def data_flags(p):
        p.add_argument("--data", required=True)
        p.add_argument("--schema", required=True)
        p.add_argument("--target")

    p = sub.add_parser("train", parents=[common], help="train a model and score a holdout split")
    data_flags(p)
    p.add_argument("--features", help="feature-set file or builtin name (minimum/recommended/maximum)")
    p.add_argument("--model", required=True, choices=("dt", "rf", "gbt"))
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--n-estimators", type=int, default=100)
    p.add_argument("--max-features", default="sqrt")
    p.add_argument("--no-bootstrap", action="store_true")
    p.add_argument("--learning-rate", type=float, default=0.3)
    p.add_argument("--l2-lambda", type=float, default=1.0)
    p.add_argument("--min-gain", type=float, default=0.0)
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.add_argument("--no-stratify", action="store_true")
    p.add_argument("--averaging", choices=AVERAGING, default="weighted")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score a saved model on a dataset")
    data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--averaging", choices=AVERAGING, default="weighted")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("explain", parents=[common], help="feature importance of a saved model")
    data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--method", required=True, choices=("mdi", "mda", "shap", "lime"))
    p.add_argument("--model-id")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-repeats", type=int, default=10)
    p.add_argument("--lime-samples", type=int, default=1000)
    p.add_argument("--lime-k", type=int, default=3)
    p.add_argument("--kernel-width", type=float)
    p.add_argument("--ridge", type=float, default=1e-3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("rank", parents=[common], help="band an importance vector into ranks 1/2/3")
    p.add_argument("--importance", required=True)
    p.add_argument("--policy", choices=("threshold", "quantile"), default="threshold")
    p.add_argument("--t1", type=float, default=2 / 3)
    p.add_argument("--t2", type=float, default=1 / 3)
    p.add_argument("--floor", type=float, default=0.05)
    p.add_argument("--label")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("similarity", parents=[common], help="weighted Jaccard matrix of rank files")
    p.add_argument("ranks", nargs="+")
    p.add_argument("--weights", help='rank->weight map, e.g. "1=3,2=2,3=1,unranked=0"')
    p.add_argument("--out")
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("report", parents=[common], help="run a full config-driven grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the config's output directory")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
