"""Batch command-line front-end.

Subcommands cover the whole pipeline: train a base MLP, export a feature
bundle, retrain a lifted head on a bundle (from this tool or an external
export), sweep the projection width, and evaluate saved models. Every run
writes a JSON manifest sufficient to reproduce it and prints key=value lines.

Exit codes: 0 ok, 2 bad flags, 3 data problem, 4 training divergence,
5 guarantee violation (which indicates a defect, not user error).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import data as datamod
from . import layer as layermod
from . import nn, persist
from .errors import (ConstraintError, DataFormatError, NonFiniteError,
                     ShapeError, TrainingDivergedError)

EXIT_OK = 0
EXIT_FLAGS = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4
EXIT_GUARANTEE = 5


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _emit(key, value):
    if isinstance(value, bool):
        value = "true" if value else "false"
    elif isinstance(value, float):
        value = f"{value:.17g}"
    print(f"{key}={value}")


def _now():
    return datetime.now(timezone.utc).isoformat()


def _file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _resolve_seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("REDENSE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError(EXIT_FLAGS, f"REDENSE_SEED={env!r} is not an integer") from None
    return 0


def _write_manifest(path, subcommand, args, seed, started_at, outputs, results):
    flags = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "subcommand": subcommand,
        "flags": flags,
        "seed": seed,
        "started_at": started_at,
        "finished_at": _now(),
        "outputs": {k: str(v) for k, v in outputs.items()},
        "results": results,
    }
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    return manifest


def _add_data_flags(parser):
    parser.add_argument("--images", help="IDX image file")
    parser.add_argument("--labels", help="IDX label file")
    parser.add_argument("--csv", help="CSV dataset (last column = class label)")
    parser.add_argument("--synthetic", choices=("blobs", "moons"))
    parser.add_argument("--samples", type=int, default=300)
    parser.add_argument("--classes", type=int, default=2)
    parser.add_argument("--noise", type=float, default=0.15)
    parser.add_argument("--test-images", help="IDX image file for the test set")
    parser.add_argument("--test-labels", help="IDX label file for the test set")
    parser.add_argument("--test-csv")
    parser.add_argument("--train-fraction", type=float, default=0.8)
    parser.add_argument("--val-fraction", type=float, default=0.1)
    parser.add_argument("--standardize", action="store_true",
                        help="zero-mean/unit-variance inputs (off by default)")


def _load_primary_dataset(args, seed):
    if args.synthetic:
        try:
            return datamod.gen_synthetic(args.synthetic, args.samples, args.classes,
                                         args.noise, seed)
        except ValueError as exc:
            raise CliError(EXIT_FLAGS, str(exc)) from None
    if args.images or args.labels:
        if not (args.images and args.labels):
            raise CliError(EXIT_FLAGS, "--images and --labels must be given together")
        return datamod.load_idx(args.images, args.labels)
    if args.csv:
        return datamod.load_csv(args.csv)
    raise CliError(EXIT_FLAGS, "no data source: pass --synthetic, --images/--labels or --csv")


def _resolve_datasets(args, seed):
    """Return (train, test) datasets from the data flags.

    An explicit test source wins; otherwise the primary dataset is shuffled
    into train/validation/test with the given fractions (validation is set
    aside, unused by the batch commands).
    """
    primary = _load_primary_dataset(args, seed)
    if args.test_images or args.test_labels:
        if not (args.test_images and args.test_labels):
            raise CliError(EXIT_FLAGS, "--test-images and --test-labels must be given together")
        test = datamod.load_idx(args.test_images, args.test_labels)
        train = primary
    elif args.test_csv:
        test = datamod.load_csv(args.test_csv)
        train = primary
    else:
        try:
            spec = datamod.SplitSpec(args.train_fraction, args.val_fraction, seed)
            train, _val, test = datamod.split(primary, spec)
        except ValueError as exc:
            raise CliError(EXIT_FLAGS, str(exc)) from None
    if args.standardize:
        mean = train.inputs.mean(axis=0)
        std = train.inputs.std(axis=0)
        train = datamod.standardize_inputs(train, mean, std)
        test = datamod.standardize_inputs(test, mean, std)
    return train, test


def _parse_hidden(text):
    if not text:
        return []
    try:
        widths = [int(w) for w in text.split(",")]
    except ValueError:
        raise CliError(EXIT_FLAGS, f"bad --hidden value {text!r}") from None
    if any(w < 1 for w in widths):
        raise CliError(EXIT_FLAGS, f"hidden widths must be positive, got {text!r}")
    return widths


def cmd_train(args):
    started = _now()
    seed = _resolve_seed(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_ds, test_ds = _resolve_datasets(args, seed)
    try:
        loss = nn.make_loss(args.loss, delta=args.huber_delta)
        cfg = nn.TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                             batch_size=args.batch_size, weight_decay=args.weight_decay,
                             optimizer=args.optimizer, seed=seed)
    except ValueError as exc:
        raise CliError(EXIT_FLAGS, str(exc)) from None
    model = nn.make_mlp(train_ds.inputs.shape[1], _parse_hidden(args.hidden),
                        train_ds.targets.shape[1], activation=args.activation,
                        leaky_slope=args.leaky_slope, seed=seed)
    model, curve = nn.train_base(model, train_ds, loss, cfg, eval_data=test_ds)

    model_path = out_dir / "model.rdnm"
    curve_path = out_dir / "curve.csv"
    persist.save_model(model_path, model, loss)
    persist.write_curve(curve_path, curve)
    checksum = _file_sha256(model_path)

    final = curve[-1]
    results = {
        "final_train_loss": final.train_loss,
        "final_test_loss": final.eval_loss,
        "final_test_accuracy": final.eval_accuracy,
        "model_sha256": checksum,
    }
    manifest_path = out_dir / "train_manifest.json"
    _write_manifest(manifest_path, "train", args, seed, started,
                    {"model": model_path, "curve": curve_path, "manifest": manifest_path},
                    results)
    for key, value in results.items():
        _emit(key, value)
    _emit("model", model_path)
    _emit("curve", curve_path)
    _emit("manifest", manifest_path)
    return EXIT_OK


def cmd_features(args):
    started = _now()
    seed = _resolve_seed(args)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    model, loss, _ = persist.load_model(args.model)
    if args.no_split:
        train_ds = _load_primary_dataset(args, seed)
        if args.standardize:
            train_ds = datamod.standardize_inputs(train_ds)
    else:
        train_ds, _test_ds = _resolve_datasets(args, seed)
    if train_ds.inputs.shape[1] != model.input_width:
        raise CliError(EXIT_DATA, f"data width {train_ds.inputs.shape[1]} does not match "
                                  f"model input width {model.input_width}")
    logits, features = nn.forward(model, train_ds.inputs)
    base_train_loss = nn.loss_value(loss, logits, train_ds.targets)
    ce_train_loss = nn.loss_value(layermod.TRAIN_LOSS, logits, train_ds.targets)
    metadata = {
        "source_model": Path(args.model).name,
        "base_loss": loss.kind,
        "huber_delta": f"{loss.delta:.17g}",
        "base_train_loss": f"{base_train_loss:.17g}",
        "ce_train_loss": f"{ce_train_loss:.17g}",
    }
    bundle = datamod.FeatureBundle(features, train_ds.targets, model.output_weight, metadata)
    datamod.save_feature_bundle(out_path, bundle)

    results = {
        "rows": features.shape[0],
        "feature_width": features.shape[1],
        "n_outputs": train_ds.targets.shape[1],
        "base_train_loss": base_train_loss,
        "ce_train_loss": ce_train_loss,
        "bundle_sha256": _file_sha256(out_path),
    }
    manifest_path = out_path.with_suffix(out_path.suffix + ".manifest.json")
    _write_manifest(manifest_path, "features", args, seed, started,
                    {"bundle": out_path, "manifest": manifest_path}, results)
    for key, value in results.items():
        _emit(key, value)
    _emit("bundle", out_path)
    _emit("manifest", manifest_path)
    return EXIT_OK


def _load_eval_bundle(path, n):
    eval_bundle = datamod.load_feature_bundle(path)
    if eval_bundle.features.shape[1] != n:
        raise CliError(EXIT_DATA, f"eval bundle feature width {eval_bundle.features.shape[1]} "
                                  f"does not match training bundle width {n}")
    return eval_bundle


def _train_head(bundle, m, seed, lr, epochs, eval_bundle=None):
    n = bundle.features.shape[1]
    layer = layermod.build(bundle.output_weight, n, m, seed)
    cfg = nn.TrainConfig(learning_rate=lr, epochs=epochs, batch_size=len(bundle.features),
                         optimizer="adam", seed=seed)
    base_loss = None
    base_old = None
    if "base_loss" in bundle.metadata:
        base_loss = nn.make_loss(bundle.metadata["base_loss"],
                                 delta=float(bundle.metadata.get("huber_delta", 1.0)))
        if "base_train_loss" in bundle.metadata:
            base_old = float(bundle.metadata["base_train_loss"])
    eval_feats = eval_bundle.features if eval_bundle is not None else bundle.features
    eval_targets = eval_bundle.targets if eval_bundle is not None else bundle.targets
    return layermod.train(layer, bundle.features, bundle.targets, cfg,
                          eval_features=eval_feats, eval_targets=eval_targets,
                          base_loss=base_loss, base_old_loss=base_old)


def cmd_redense(args):
    started = _now()
    seed = _resolve_seed(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = datamod.load_feature_bundle(args.bundle)
    n = bundle.features.shape[1]
    m = args.m if args.m is not None else n
    if m < n:
        raise CliError(EXIT_FLAGS, f"projection width must satisfy m >= n: m={m}, n={n}")
    eval_bundle = _load_eval_bundle(args.eval_bundle, n) if args.eval_bundle else None

    trained, report, curve = _train_head(bundle, m, seed, args.lr, args.epochs, eval_bundle)
    if not layermod.guarantee_check(report):
        _print_report(report)
        print("guarantee violated: this is a defect in the tool, not in the inputs",
              file=sys.stderr)
        return EXIT_GUARANTEE

    if args.model:
        model, stored_loss, _ = persist.load_model(args.model)
        if model.feature_width != n:
            raise CliError(EXIT_DATA, f"model feature width {model.feature_width} does not "
                                      f"match bundle width {n}")
        model_out = out_dir / "model_with_redense.rdnm"
        persist.save_model(model_out, model, stored_loss, redense_layer=trained)
    else:
        # external bundle: persist a standalone head (no hidden layers)
        head = nn.MlpModel([], bundle.output_weight,
                           np.zeros(bundle.output_weight.shape[0]))
        model_out = out_dir / "redense_head.rdnm"
        persist.save_model(model_out, head, layermod.TRAIN_LOSS, redense_layer=trained)

    curve_path = out_dir / "redense_curve.csv"
    persist.write_curve(curve_path, curve)

    results = _report_dict(report)
    results["eval_source"] = "eval_bundle" if eval_bundle is not None else "training_features"
    results["final_eval_loss"] = curve[-1].eval_loss
    results["final_eval_accuracy"] = curve[-1].eval_accuracy
    results["m"] = m
    results["model_sha256"] = _file_sha256(model_out)
    manifest_path = out_dir / "redense_manifest.json"
    _write_manifest(manifest_path, "redense", args, seed, started,
                    {"model": model_out, "curve": curve_path, "manifest": manifest_path},
                    results)
    _print_report(report)
    _emit("eval_source", results["eval_source"])
    _emit("final_eval_loss", results["final_eval_loss"])
    _emit("final_eval_accuracy", results["final_eval_accuracy"])
    _emit("model", model_out)
    _emit("curve", curve_path)
    _emit("manifest", manifest_path)
    return EXIT_OK


def _report_dict(report):
    out = {
        "old_loss": report.old_loss,
        "init_loss": report.init_loss,
        "final_loss": report.final_loss,
        "epsilon": report.epsilon,
        "guarantee_holds": report.guarantee_holds,
    }
    if report.base_loss_kind is not None:
        out["base_loss_kind"] = report.base_loss_kind
        out["base_old_loss"] = report.base_old_loss
        out["base_final_loss"] = report.base_final_loss
    return out


def _print_report(report):
    for key, value in _report_dict(report).items():
        _emit(key, value)


def cmd_sweep_m(args):
    started = _now()
    seed = _resolve_seed(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = datamod.load_feature_bundle(args.bundle)
    n = bundle.features.shape[1]
    try:
        m_values = [int(v) for v in args.m_values.split(",")]
    except ValueError:
        raise CliError(EXIT_FLAGS, f"bad --m-values {args.m_values!r}") from None
    bad = [m for m in m_values if m < n]
    if bad:
        raise CliError(EXIT_FLAGS, f"projection widths {bad} are below n={n}")
    eval_bundle = _load_eval_bundle(args.eval_bundle, n) if args.eval_bundle else None

    csv_path = out_dir / "sweep.csv"
    rows = []
    for m in m_values:
        for s in range(args.seeds):
            run_seed = seed + s
            _trained, report, curve = _train_head(bundle, m, run_seed, args.lr,
                                                  args.epochs, eval_bundle)
            if not layermod.guarantee_check(report):
                print(f"guarantee violated at m={m}, seed={run_seed}: this is a "
                      "defect in the tool, not in the inputs", file=sys.stderr)
                return EXIT_GUARANTEE
            rows.append((m, run_seed, report.epsilon, report.final_loss,
                         curve[-1].eval_accuracy))
    with open(csv_path, "w") as f:
        f.write("m,seed,epsilon,final_train_loss,test_accuracy\n")
        for m, s, eps, fl, acc in rows:
            f.write(f"{m},{s},{eps:.17g},{fl:.17g},{acc:.17g}\n")

    results = {"rows": len(rows), "m_values": m_values, "seeds": args.seeds}
    manifest_path = out_dir / "sweep_manifest.json"
    _write_manifest(manifest_path, "sweep-m", args, seed, started,
                    {"table": csv_path, "manifest": manifest_path}, results)
    _emit("rows", len(rows))
    _emit("table", csv_path)
    _emit("manifest", manifest_path)
    return EXIT_OK


def cmd_eval(args):
    started = _now()
    seed = _resolve_seed(args)
    model, loss, redense_layer = persist.load_model(args.model)
    dataset = _load_primary_dataset(args, seed)
    if args.standardize:
        dataset = datamod.standardize_inputs(dataset)
    if dataset.inputs.shape[1] != model.input_width:
        raise CliError(EXIT_DATA, f"data width {dataset.inputs.shape[1]} does not match "
                                  f"model input width {model.input_width}")
    logits, features = nn.forward(model, dataset.inputs)
    base_loss = nn.loss_value(loss, logits, dataset.targets)
    base_acc = nn.accuracy(logits, dataset.targets)
    results = {"loss_kind": loss.kind, "base_loss": base_loss, "base_accuracy": base_acc}
    if redense_layer is not None:
        head_logits = layermod.predict(redense_layer, features)
        results["redense_loss"] = nn.loss_value(loss, head_logits, dataset.targets)
        results["redense_accuracy"] = nn.accuracy(head_logits, dataset.targets)
    for key, value in results.items():
        _emit(key, value)
    manifest_path = Path(args.manifest) if args.manifest \
        else Path(args.out_dir) / "eval_manifest.json"
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    _write_manifest(manifest_path, "eval", args, seed, started,
                    {"manifest": manifest_path}, results)
    _emit("manifest", manifest_path)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="redense",
                                     description="Random ReLU lifting for trained networks")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("train", help="train a base MLP")
    _add_data_flags(p)
    p.add_argument("--hidden", default="16", help="comma-separated hidden widths")
    p.add_argument("--activation", default="relu", choices=("relu", "leaky_relu", "identity"))
    p.add_argument("--leaky-slope", type=float, default=0.01)
    p.add_argument("--loss", default="ce", help="ce | mse | poisson | huber")
    p.add_argument("--huber-delta", type=float, default=1.0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--optimizer", default="adam", choices=("adam", "sgd"))
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("features", help="export a feature bundle from a trained model")
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="bundle output path")
    p.add_argument("--no-split", action="store_true",
                   help="use the whole primary dataset instead of its train partition")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("redense", help="retrain a lifted head on a feature bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--model", help="model file to attach the trained layer to")
    p.add_argument("--eval-bundle", help="bundle with held-out features for curve columns")
    p.add_argument("--m", type=int, default=None, help="projection width (default: n)")
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_redense)

    p = sub.add_parser("sweep-m", help="sweep projection widths and seeds")
    p.add_argument("--bundle", required=True)
    p.add_argument("--eval-bundle")
    p.add_argument("--m-values", required=True, help="comma-separated widths")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_sweep_m)

    p = sub.add_parser("eval", help="evaluate a saved model on a dataset")
    _add_data_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", help="manifest path (default: eval_manifest.json in --out-dir)")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_FLAGS
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConstraintError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FLAGS
    except (DataFormatError, ShapeError, NonFiniteError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
