"""Command-line entry point: EDA, training, fine-tuning, evaluation, prediction.

Exit codes are a stable contract:
    0  success
    2  configuration, schema, or data errors
    3  checkpoint/dataset compatibility errors
    4  corrupt checkpoint artifacts
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict

from . import __version__
from .data import DatasetSchema, eda_report, emit_eda, load_csv
from .errors import (
    CheckpointFormatError,
    CompatibilityError,
    ConfigError,
    DataError,
    DimensionError,
    SchemaError,
    ValidationError,
)
from .metrics import format_report
from .model import param_count, predict_proba
from .data import apply_norm
from .training import (
    TrainConfig,
    evaluate,
    finetune,
    load_checkpoint,
    save_checkpoint,
    train_scratch,
    validation_split,
    write_curves_svg,
    write_epoch_log,
)

_EXIT_DATA = 2
_EXIT_COMPAT = 3
_EXIT_CORRUPT = 4


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir: str, command: str, config: dict, inputs: list[str]) -> None:
    manifest = {
        "tool": "msclstm",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {p: _sha256(p) for p in inputs if p},
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _load_schema(path: str | None) -> DatasetSchema:
    return DatasetSchema.from_json(path) if path else DatasetSchema()


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=args.seed,
        val_fraction=args.val_fraction,
        smote_enabled=not args.no_smote,
        freeze_features=getattr(args, "freeze_features", False),
        threshold=args.threshold,
    )


def _add_train_flags(p: argparse.ArgumentParser, epochs: int, lr: float) -> None:
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=lr)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--no-smote", action="store_true", help="disable SMOTE on the training split")
    p.add_argument("--threshold", type=float, default=0.5)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msclstm",
        description="Anomaly detection on cellular-network KPI telemetry",
    )
    parser.add_argument("--version", action="version", version=f"msclstm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_eda = sub.add_parser("eda", help="class distribution and feature correlation reports")
    p_eda.add_argument("data")
    p_eda.add_argument("--schema")
    p_eda.add_argument("--out", required=True)
    p_eda.add_argument("--seed", type=int, default=0)

    p_train = sub.add_parser("train", help="train a model from scratch")
    p_train.add_argument("data")
    p_train.add_argument("--schema")
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--seed", type=int, default=0)
    _add_train_flags(p_train, epochs=100, lr=1e-3)

    p_ft = sub.add_parser("finetune", help="fine-tune a checkpoint on another dataset")
    p_ft.add_argument("checkpoint")
    p_ft.add_argument("data")
    p_ft.add_argument("--schema")
    p_ft.add_argument("--out", required=True)
    p_ft.add_argument("--seed", type=int, default=0)
    p_ft.add_argument("--freeze-features", action="store_true",
                      help="keep both conv branches fixed while fine-tuning")
    _add_train_flags(p_ft, epochs=20, lr=1e-4)

    p_eval = sub.add_parser("evaluate", help="score a labeled dataset with a checkpoint")
    p_eval.add_argument("checkpoint")
    p_eval.add_argument("data")
    p_eval.add_argument("--schema")
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--threshold", type=float, default=0.5)
    p_eval.add_argument("--seed", type=int, default=0)

    p_pred = sub.add_parser("predict", help="write per-row probability,label")
    p_pred.add_argument("checkpoint")
    p_pred.add_argument("data")
    p_pred.add_argument("--schema")
    p_pred.add_argument("--out", required=True)
    p_pred.add_argument("--threshold", type=float, default=0.5)
    p_pred.add_argument("--seed", type=int, default=0)

    p_ins = sub.add_parser("inspect", help="print checkpoint metadata and tensor shapes")
    p_ins.add_argument("checkpoint")
    p_ins.add_argument("--out")

    return parser


def _cmd_eda(args) -> int:
    schema = _load_schema(args.schema)
    ds = load_csv(args.data, schema)
    os.makedirs(args.out, exist_ok=True)
    emit_eda(eda_report(ds), args.out)
    _write_manifest(args.out, "eda", {"data": args.data, "schema": args.schema,
                                      "seed": args.seed},
                    [args.data, args.schema])
    print(f"EDA written to {args.out} ({len(ds)} rows, {ds.dropped_rows} dropped)")
    return 0


def _finish_training(args, command, ds, ckpt, logs, cfg) -> int:
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "checkpoint.mscl")
    save_checkpoint(ckpt, ckpt_path)
    write_epoch_log(logs, os.path.join(args.out, "epoch_log.csv"))
    write_curves_svg(logs, os.path.join(args.out, "curves.svg"))
    val_report = evaluate(ckpt, validation_split(ds, cfg), cfg.threshold)
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(format_report(val_report, "json"))
        fh.write("\n")
    inputs = [args.data, args.schema]
    if command == "finetune":
        inputs.append(args.checkpoint)
    config = dict(asdict(cfg), data=args.data, schema=args.schema,
                  source_checkpoint=getattr(args, "checkpoint", None))
    _write_manifest(args.out, command, config, inputs)
    last = logs[-1]
    print(f"{command}: {cfg.epochs} epochs, final val_loss={last.val_loss:.4f} "
          f"val_acc={last.val_acc:.4f}")
    print(format_report(val_report, "text"))
    print(f"checkpoint: {ckpt_path}")
    return 0


def _cmd_train(args) -> int:
    cfg = _train_config(args)
    ds = load_csv(args.data, _load_schema(args.schema))
    ckpt, logs = train_scratch(ds, cfg)
    return _finish_training(args, "train", ds, ckpt, logs, cfg)


def _cmd_finetune(args) -> int:
    cfg = _train_config(args)
    source = load_checkpoint(args.checkpoint)
    ds = load_csv(args.data, _load_schema(args.schema))
    ckpt, logs = finetune(source, ds, cfg)
    return _finish_training(args, "finetune", ds, ckpt, logs, cfg)


def _cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    ds = load_csv(args.data, _load_schema(args.schema))
    rep = evaluate(ckpt, ds, args.threshold)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(format_report(rep, "json"))
        fh.write("\n")
    _write_manifest(args.out, "evaluate",
                    {"data": args.data, "schema": args.schema,
                     "checkpoint": args.checkpoint, "threshold": args.threshold},
                    [args.data, args.schema, args.checkpoint])
    print(format_report(rep, "text"))
    return 0


def _cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    ds = load_csv(args.data, _load_schema(args.schema))
    if ds.X.shape[1] != ckpt.feature_count:
        raise CompatibilityError(
            f"feature count mismatch: checkpoint has F={ckpt.feature_count} "
            f"(fingerprint {ckpt.fingerprint:#018x}), dataset has F={ds.X.shape[1]} "
            f"(fingerprint {ds.fingerprint:#018x})")
    p = predict_proba(ckpt.params, apply_norm(ckpt.norm_stats, ds.X))
    os.makedirs(args.out, exist_ok=True)
    out_csv = os.path.join(args.out, "predictions.csv")
    with open(out_csv, "w", encoding="utf-8", newline="") as fh:
        fh.write("probability,label\n")
        for pi in p:
            fh.write(f"{float(pi)!r},{int(pi >= args.threshold)}\n")
    _write_manifest(args.out, "predict",
                    {"data": args.data, "schema": args.schema,
                     "checkpoint": args.checkpoint, "threshold": args.threshold},
                    [args.data, args.schema, args.checkpoint])
    print(f"wrote {len(p)} predictions to {out_csv}")
    return 0


def _cmd_inspect(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    print(f"checkpoint: {args.checkpoint}")
    print(f"format version: {ckpt.version}")
    print(f"feature count: {ckpt.feature_count}")
    print(f"schema fingerprint: {ckpt.fingerprint:#018x}")
    for name, w in ckpt.params.named_weights().items():
        print(f"  {name}: {'x'.join(map(str, w.shape))}")
    print(f"total parameters: {param_count(ckpt.params)}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_manifest(args.out, "inspect", {"checkpoint": args.checkpoint},
                        [args.checkpoint])
    return 0


_COMMANDS = {
    "eda": _cmd_eda,
    "train": _cmd_train,
    "finetune": _cmd_finetune,
    "evaluate": _cmd_evaluate,
    "predict": _cmd_predict,
    "inspect": _cmd_inspect,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DataError, SchemaError, ValidationError, DimensionError,
            FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_DATA
    except CompatibilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_COMPAT
    except CheckpointFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_CORRUPT


if __name__ == "__main__":
    sys.exit(main())
