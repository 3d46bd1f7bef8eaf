"""Training loops (scratch and fine-tune), checkpoints, and evaluation.

The transfer workflow is: train on a source dataset, save the checkpoint
(weights + normalization statistics + schema fingerprint), then fine-tune
those weights on a target dataset with a smaller learning rate and fewer
epochs, optionally freezing both convolutional branches.

Checkpoint binary format, little-endian, no padding:

    magic "MSCL" | u32 version=1 | u32 feature_count | u64 fingerprint
    | u32 norm_count | norm_count x (f32 mean, f32 std)
    | u32 tensor_count | per tensor:
        u16 name_len | UTF-8 name | u8 ndim | ndim x u32 dims
        | prod(dims) x f32 row-major values
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from . import model as M
from .data import Dataset, NormStats, apply_norm, normalize, smote, stratified_split
from .errors import CheckpointFormatError, CompatibilityError, ConfigError, DataError
from .layers import LayerParams
from .metrics import EvalReport, confusion, report
from .optim import OptimizerState, adam_step, bce_loss
from .tensor import assert_finite

CHECKPOINT_MAGIC = b"MSCL"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    """Hyperparameters of one training run; defaults are the scratch regime."""

    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    val_fraction: float = 0.2
    smote_enabled: bool = True
    freeze_features: bool = False
    threshold: float = 0.5

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.learning_rate < 0.0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")


def finetune_defaults(seed: int = 0) -> TrainConfig:
    """Fine-tune regime: 20 epochs at a tenth of the scratch learning rate."""
    return TrainConfig(epochs=20, learning_rate=1e-4, seed=seed)


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class Checkpoint:
    params: M.ModelParams
    norm_stats: NormStats
    fingerprint: int
    feature_count: int
    version: int = CHECKPOINT_VERSION


def minibatches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle n indices and cut them into ceil(n / batch_size) batches."""
    order = rng.permutation(n)
    return [order[s:s + batch_size] for s in range(0, n, batch_size)]


def _run_epochs(params: M.ModelParams, X_train, y_train, X_val, y_val,
                cfg: TrainConfig, shuffle_rng: np.random.Generator) -> list[EpochLog]:
    state = OptimizerState(learning_rate=cfg.learning_rate)
    layers = list(params.layers.values())
    logs = []
    for epoch in range(1, cfg.epochs + 1):
        loss_sum = 0.0
        correct = 0
        for idx in minibatches(len(y_train), cfg.batch_size, shuffle_rng):
            p, cache = M.forward_batch(params, X_train[idx])
            assert_finite(p, "model output")
            loss, dp = bce_loss(p, y_train[idx])
            grads = M.backward_batch(params, cache, dp)
            adam_step(state, layers, grads)
            loss_sum += loss * len(idx)
            correct += int(((p >= cfg.threshold).astype(int) == y_train[idx]).sum())
        p_val = M.predict_proba(params, X_val)
        val_loss, _ = bce_loss(p_val, y_val)
        val_acc = float(((p_val >= cfg.threshold).astype(int) == y_val).mean())
        logs.append(EpochLog(
            epoch=epoch,
            train_loss=loss_sum / len(y_train),
            train_acc=correct / len(y_train),
            val_loss=val_loss,
            val_acc=val_acc,
        ))
    return logs


def _prepare_splits(ds: Dataset, cfg: TrainConfig, split_seed, smote_seed):
    """Split, fit normalization on the training side only, then oversample it."""
    train_raw, val_raw = stratified_split(ds, cfg.val_fraction, split_seed)
    X_train, stats = normalize(train_raw.X)
    train = replace(train_raw, X=X_train, norm_stats=stats)
    if cfg.smote_enabled:
        train = smote(train, seed=smote_seed)
    X_val = apply_norm(stats, val_raw.X)
    return train.X, train.y, X_val, val_raw.y, stats


def validation_split(ds: Dataset, cfg: TrainConfig) -> Dataset:
    """The exact (raw, un-normalized) validation split a run with `cfg` holds out."""
    split_seed = np.random.SeedSequence(cfg.seed).spawn(4)[0]
    _, val_raw = stratified_split(ds, cfg.val_fraction, split_seed)
    return val_raw


def train_scratch(ds: Dataset, cfg: TrainConfig) -> tuple[Checkpoint, list[EpochLog]]:
    """Train a fresh model; returns the final checkpoint and per-epoch metrics."""
    cfg.validate()
    split_seed, smote_seed, init_seed, shuffle_seed = np.random.SeedSequence(cfg.seed).spawn(4)
    X_train, y_train, X_val, y_val, stats = _prepare_splits(ds, cfg, split_seed, smote_seed)
    params = M.build_model(ds.X.shape[1], init_seed)
    logs = _run_epochs(params, X_train, y_train, X_val, y_val, cfg,
                       np.random.default_rng(shuffle_seed))
    ckpt = Checkpoint(params=params, norm_stats=stats, fingerprint=ds.fingerprint,
                      feature_count=ds.X.shape[1])
    return ckpt, logs


def _clone_params(params: M.ModelParams) -> M.ModelParams:
    return M.ModelParams(
        feature_count=params.feature_count,
        layers={name: LayerParams(name, {w: arr.copy() for w, arr in lp.weights.items()},
                                  lp.trainable)
                for name, lp in params.layers.items()},
    )


def finetune(source: Checkpoint, target_ds: Dataset,
             cfg: TrainConfig) -> tuple[Checkpoint, list[EpochLog]]:
    """Continue training from a source checkpoint on a target dataset.

    Normalization statistics are refitted on the target training split. With
    freeze_features both conv branches are excluded from updates. The source
    checkpoint is not mutated.
    """
    cfg.validate()
    F = target_ds.X.shape[1]
    if F != source.feature_count:
        raise CompatibilityError(
            f"feature count mismatch: checkpoint has F={source.feature_count} "
            f"(fingerprint {source.fingerprint:#018x}), dataset has F={F} "
            f"(fingerprint {target_ds.fingerprint:#018x})")
    if source.version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {source.version}")
    split_seed, smote_seed, _, shuffle_seed = np.random.SeedSequence(cfg.seed).spawn(4)
    X_train, y_train, X_val, y_val, stats = _prepare_splits(target_ds, cfg, split_seed, smote_seed)
    params = _clone_params(source.params)
    if cfg.freeze_features:
        params.layers["conv_a"].trainable = False
        params.layers["conv_b"].trainable = False
    logs = _run_epochs(params, X_train, y_train, X_val, y_val, cfg,
                       np.random.default_rng(shuffle_seed))
    ckpt = Checkpoint(params=params, norm_stats=stats, fingerprint=target_ds.fingerprint,
                      feature_count=F)
    return ckpt, logs


# ---------------------------------------------------------------------------
# Checkpoint serialization
# ---------------------------------------------------------------------------

def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    """Write the bit-exact binary format described in the module docstring."""
    out = bytearray()
    out += CHECKPOINT_MAGIC
    out += struct.pack("<II", ckpt.version, ckpt.feature_count)
    out += struct.pack("<Q", ckpt.fingerprint)
    mean = ckpt.norm_stats.mean.astype("<f4")
    std = ckpt.norm_stats.std.astype("<f4")
    out += struct.pack("<I", mean.shape[0])
    for m, s in zip(mean, std):
        out += struct.pack("<ff", m, s)
    named = ckpt.params.named_weights()
    out += struct.pack("<I", len(named))
    for name, w in named.items():
        encoded = name.encode("utf-8")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<B", w.ndim)
        for dim in w.shape:
            out += struct.pack("<I", dim)
        out += np.ascontiguousarray(w, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(out))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.buf):
            raise CheckpointFormatError(
                f"truncated checkpoint: needed {n} bytes at byte offset {self.off}, "
                f"file has {len(self.buf)}")
        chunk = self.buf[self.off:self.off + n]
        self.off += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path: str) -> Checkpoint:
    """Read and validate a checkpoint; rebuilds the full parameter set."""
    with open(path, "rb") as fh:
        buf = fh.read()
    r = _Reader(buf)
    if r.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path} is not a checkpoint (bad magic)")
    version, feature_count = r.unpack("<II")
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    (fingerprint,) = r.unpack("<Q")
    (norm_count,) = r.unpack("<I")
    if norm_count != feature_count:
        raise CheckpointFormatError(
            f"normalization entry count {norm_count} does not match feature count {feature_count}")
    mean = np.empty(norm_count, dtype=np.float32)
    std = np.empty(norm_count, dtype=np.float32)
    for i in range(norm_count):
        mean[i], std[i] = r.unpack("<ff")
    (tensor_count,) = r.unpack("<I")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(tensor_count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        dims = tuple(r.unpack("<" + "I" * ndim)) if ndim else ()
        count = int(np.prod(dims, dtype=np.int64)) if dims else 1
        data = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(dims)
        tensors[name] = data.astype(np.float32)
    if r.off != len(buf):
        raise CheckpointFormatError(
            f"trailing data after checkpoint payload at byte offset {r.off}")

    params = _params_from_tensors(feature_count, tensors)
    stats = NormStats(mean=mean, std=std)
    return Checkpoint(params=params, norm_stats=stats, fingerprint=fingerprint,
                      feature_count=feature_count, version=version)


def _params_from_tensors(feature_count: int, tensors: dict[str, np.ndarray]) -> M.ModelParams:
    expected = M.build_model(feature_count, seed=0).named_weights()
    missing = set(expected) - set(tensors)
    extra = set(tensors) - set(expected)
    if missing or extra:
        raise CheckpointFormatError(
            f"checkpoint tensor names do not match the architecture "
            f"(missing {sorted(missing)}, unexpected {sorted(extra)})")
    layers: dict[str, LayerParams] = {}
    for layer_name in M.LAYER_ORDER:
        weights = {}
        for key, arr in tensors.items():
            ln, wname = key.split(".", 1)
            if ln == layer_name:
                if expected[key].shape != arr.shape:
                    raise CheckpointFormatError(
                        f"tensor {key!r} has shape {arr.shape}, expected {expected[key].shape}")
                weights[wname] = arr
        layers[layer_name] = LayerParams(layer_name, weights)
    return M.ModelParams(feature_count=feature_count, layers=layers)


# ---------------------------------------------------------------------------
# Evaluation and epoch-log export
# ---------------------------------------------------------------------------

def evaluate(ckpt: Checkpoint, ds: Dataset, threshold: float = 0.5) -> EvalReport:
    """Normalize with the checkpoint statistics, predict, and report."""
    if ds.X.shape[1] != ckpt.feature_count:
        raise CompatibilityError(
            f"feature count mismatch: checkpoint has F={ckpt.feature_count} "
            f"(fingerprint {ckpt.fingerprint:#018x}), dataset has F={ds.X.shape[1]} "
            f"(fingerprint {ds.fingerprint:#018x})")
    if len(ds) == 0:
        raise DataError("cannot evaluate on an empty dataset")
    Xn = apply_norm(ckpt.norm_stats, ds.X)
    p = M.predict_proba(ckpt.params, Xn)
    y_pred = (p >= threshold).astype(int)
    return report(confusion(ds.y, y_pred))


def write_epoch_log(logs: list[EpochLog], path: str) -> None:
    """CSV export: epoch,train_loss,train_acc,val_loss,val_acc."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,train_loss,train_acc,val_loss,val_acc\n")
        for log in logs:
            fh.write(f"{log.epoch},{log.train_loss!r},{log.train_acc!r},"
                     f"{log.val_loss!r},{log.val_acc!r}\n")


def _polyline(xs, ys, color: str, width=1.5) -> str:
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    return f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{pts}"/>'


def _panel(logs, fields, colors, title, x0, y0, w, h, y_range=None):
    values = [[getattr(log, f) for log in logs] for f in fields]
    lo = 0.0 if y_range else min(min(v) for v in values)
    hi = 1.0 if y_range else max(max(v) for v in values)
    if hi - lo < 1e-12:
        hi = lo + 1.0
    n = len(logs)
    xs = [x0 + w * i / max(n - 1, 1) for i in range(n)]
    parts = [
        f'<rect x="{x0}" y="{y0}" width="{w}" height="{h}" fill="none" stroke="#444"/>',
        f'<text x="{x0 + w / 2}" y="{y0 - 8}" text-anchor="middle">{title}</text>',
    ]
    for series, field, color in zip(values, fields, colors):
        ys = [y0 + h - h * (v - lo) / (hi - lo) for v in series]
        parts.append(_polyline(xs, ys, color))
    for i, (field, color) in enumerate(zip(fields, colors)):
        parts.append(f'<text x="{x0 + 6}" y="{y0 + h + 16 + 14 * i}" fill="{color}">{field}</text>')
    parts.append(f'<text x="{x0}" y="{y0 + h + 16 + 14 * len(fields)}" fill="#444">'
                 f'y: {lo:.3g} to {hi:.3g}, x: epoch 1 to {n}</text>')
    return parts


def write_curves_svg(logs: list[EpochLog], path: str) -> None:
    """Accuracy and loss line charts for one training run, side by side."""
    if not logs:
        raise ConfigError("cannot plot an empty epoch log")
    width, height = 760, 330
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="12">'
    ]
    parts += _panel(logs, ("train_acc", "val_acc"), ("#1666b0", "#d64545"),
                    "accuracy", 40, 30, 320, 200, y_range=(0, 1))
    parts += _panel(logs, ("train_loss", "val_loss"), ("#1666b0", "#d64545"),
                    "loss", 410, 30, 320, 200)
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")
