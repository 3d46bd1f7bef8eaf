"""KPI telemetry ingestion, encoding, splitting, SMOTE, and EDA statistics.

The pipeline keeps feature matrices in float64; the model casts to its own
(float32) precision at the forward boundary. Normalization statistics are
rounded to float32 the moment they are computed, because that is the
precision checkpoints persist them at, so training-time and loaded-model
normalization are identical.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

import numpy as np

from .errors import DataError, SchemaError, ValidationError

SMOTE_K = 5
ZERO_STD = 1e-12

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_TIMESTAMP_FORMATS = ("%Y-%m-%d %H:%M:%S", "%Y-%m-%d %H:%M", "%d/%m/%Y %H:%M")


def fnv1a64(text: str) -> int:
    """FNV-1a 64-bit hash of a UTF-8 string."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass
class DatasetSchema:
    """Column roles for a telemetry CSV.

    feature_columns=None means "every non-label column". The label column
    defaults to the last CSV column. Categorical columns are one-hot
    encoded in first-appearance order; a timestamp column is expanded into
    hour-of-day and day-of-week numerics.
    """

    feature_columns: list[str] | None = None
    categorical_columns: list[str] = field(default_factory=list)
    label_column: str | None = None
    timestamp_column: str | None = None

    @classmethod
    def from_json(cls, path: str) -> "DatasetSchema":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {"feature_columns", "categorical_columns", "label_column", "timestamp_column"}
        unknown = set(raw) - known
        if unknown:
            raise SchemaError(f"unknown schema keys: {sorted(unknown)}")
        return cls(
            feature_columns=raw.get("feature_columns"),
            categorical_columns=raw.get("categorical_columns", []),
            label_column=raw.get("label_column"),
            timestamp_column=raw.get("timestamp_column"),
        )


@dataclass
class NormStats:
    """Per-feature z-score statistics, stored at checkpoint (float32) precision."""

    mean: np.ndarray
    std: np.ndarray


@dataclass
class Dataset:
    """Encoded feature matrix with binary labels.

    X is raw (un-normalized) unless norm_stats is set, in which case X holds
    z-scored values produced with exactly those statistics.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    schema: DatasetSchema
    norm_stats: NormStats | None = None
    dropped_rows: int = 0

    @property
    def fingerprint(self) -> int:
        return fnv1a64(",".join(self.feature_names))

    def __len__(self) -> int:
        return int(self.y.shape[0])


@dataclass
class EdaReport:
    class_counts: dict[int, int]
    class_fractions: dict[int, float]
    correlation: np.ndarray
    feature_names: list[str]
    dropped_row_count: int


def _parse_timestamp(text: str) -> tuple[float, float]:
    """Return (hour-of-day, day-of-week) from an ISO-ish timestamp or epoch seconds."""
    try:
        dt = datetime.fromisoformat(text)
    except ValueError:
        dt = None
    if dt is None:
        for fmt in _TIMESTAMP_FORMATS:
            try:
                dt = datetime.strptime(text, fmt)
                break
            except ValueError:
                continue
    if dt is None:
        dt = datetime.fromtimestamp(float(text), tz=timezone.utc)
    return float(dt.hour), float(dt.weekday())


def load_csv(path: str, schema: DatasetSchema | None = None) -> Dataset:
    """Parse a labeled telemetry CSV into an encoded Dataset.

    Rows with unparseable numerics, bad timestamps, non-finite values, or
    labels outside {0, 1} are dropped and counted in dropped_rows. Category
    order for one-hot columns is first appearance among kept rows.
    """
    schema = schema or DatasetSchema()
    if not os.path.exists(path):
        raise FileNotFoundError(f"dataset file not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty, expected a header row") from None
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]

    label_col = schema.label_column if schema.label_column is not None else header[-1]
    if label_col not in header:
        raise SchemaError(f"label column {label_col!r} not present in {header}")
    feature_cols = schema.feature_columns
    if feature_cols is None:
        feature_cols = [h for h in header if h != label_col]
    else:
        missing = [c for c in feature_cols if c not in header]
        if missing:
            raise SchemaError(f"feature columns {missing} not present in {header}")
        if label_col in feature_cols:
            raise SchemaError(f"label column {label_col!r} cannot also be a feature")
    for c in schema.categorical_columns:
        if c not in feature_cols:
            raise SchemaError(f"categorical column {c!r} is not a feature column")
    if schema.timestamp_column is not None and schema.timestamp_column not in feature_cols:
        raise SchemaError(f"timestamp column {schema.timestamp_column!r} is not a feature column")

    col_index = {name: header.index(name) for name in header}
    categorical = set(schema.categorical_columns)
    categories: dict[str, list[str]] = {c: [] for c in categorical}

    kept: list[tuple[dict, int]] = []
    dropped = 0
    for row in rows:
        if len(row) != len(header):
            dropped += 1
            continue
        cells = [c.strip() for c in row]
        try:
            label_f = float(cells[col_index[label_col]])
        except ValueError:
            dropped += 1
            continue
        if label_f not in (0.0, 1.0):
            dropped += 1
            continue
        values: dict[str, object] = {}
        ok = True
        for col in feature_cols:
            text = cells[col_index[col]]
            if col in categorical:
                values[col] = text
            elif col == schema.timestamp_column:
                try:
                    values[col] = _parse_timestamp(text)
                except (ValueError, OverflowError, OSError):
                    ok = False
                    break
            else:
                try:
                    v = float(text)
                except ValueError:
                    ok = False
                    break
                if not math.isfinite(v):
                    ok = False
                    break
                values[col] = v
        if not ok:
            dropped += 1
            continue
        for col in feature_cols:
            if col in categorical and values[col] not in categories[col]:
                categories[col].append(values[col])
        kept.append((values, int(label_f)))

    if not kept:
        raise DataError(f"no usable rows in {path} ({dropped} dropped)")

    names: list[str] = []
    for col in feature_cols:
        if col in categorical:
            names.extend(f"{col}={v}" for v in categories[col])
        elif col == schema.timestamp_column:
            names.extend((f"{col}_hour", f"{col}_dow"))
        else:
            names.append(col)

    X = np.zeros((len(kept), len(names)), dtype=np.float64)
    y = np.zeros(len(kept), dtype=np.int64)
    for r, (values, label) in enumerate(kept):
        pos = 0
        for col in feature_cols:
            if col in categorical:
                cats = categories[col]
                X[r, pos + cats.index(values[col])] = 1.0
                pos += len(cats)
            elif col == schema.timestamp_column:
                X[r, pos], X[r, pos + 1] = values[col]
                pos += 2
            else:
                X[r, pos] = values[col]
                pos += 1
        y[r] = label

    return Dataset(X=X, y=y, feature_names=names, schema=schema, dropped_rows=dropped)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def normalize(X: np.ndarray) -> tuple[np.ndarray, NormStats]:
    """Fit per-column z-score statistics on training features and apply them.

    Population std; columns with std below 1e-12 are centered only. Stats are
    rounded to float32 (checkpoint precision) before being applied.
    """
    X = np.asarray(X, dtype=np.float64)
    mean = X.mean(axis=0).astype(np.float32)
    std = X.std(axis=0).astype(np.float32)
    stats = NormStats(mean=mean, std=std)
    return apply_norm(stats, X), stats


def apply_norm(stats: NormStats, X: np.ndarray) -> np.ndarray:
    """Z-score features with previously fitted statistics."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != stats.mean.shape[0]:
        raise SchemaError(
            f"feature count {X.shape[1]} does not match normalization stats "
            f"({stats.mean.shape[0]} features)")
    divisor = np.where(stats.std.astype(np.float64) < ZERO_STD, 1.0,
                       stats.std.astype(np.float64))
    return (X - stats.mean.astype(np.float64)) / divisor


def normalize_dataset(ds: Dataset) -> tuple[Dataset, NormStats]:
    Xn, stats = normalize(ds.X)
    return replace(ds, X=Xn, norm_stats=stats), stats


def apply_norm_dataset(stats: NormStats, ds: Dataset) -> Dataset:
    return replace(ds, X=apply_norm(stats, ds.X), norm_stats=stats)


# ---------------------------------------------------------------------------
# Splitting and oversampling
# ---------------------------------------------------------------------------

def _take(ds: Dataset, idx: np.ndarray) -> Dataset:
    return replace(ds, X=ds.X[idx], y=ds.y[idx], dropped_rows=0)


def stratified_split(ds: Dataset, val_fraction: float = 0.2,
                     seed: int = 0) -> tuple[Dataset, Dataset]:
    """Per-class proportional train/validation split, deterministic given seed."""
    if not 0.0 < val_fraction < 1.0:
        raise ValidationError(f"val_fraction must be in (0, 1), got {val_fraction}")
    classes = np.unique(ds.y)
    if classes.size < 2:
        raise DataError("both classes must be present to split")
    rng = np.random.default_rng(seed)
    train_idx: list[np.ndarray] = []
    val_idx: list[np.ndarray] = []
    for c in classes:
        members = np.flatnonzero(ds.y == c)
        if members.size < 2:
            raise DataError(f"class {int(c)} has fewer than 2 samples")
        perm = rng.permutation(members)
        n_val = min(int(members.size * val_fraction + 0.5), members.size - 1)
        val_idx.append(perm[:n_val])
        train_idx.append(perm[n_val:])
    train = np.sort(np.concatenate(train_idx))
    val = np.sort(np.concatenate(val_idx))
    return _take(ds, train), _take(ds, val)


def smote(ds: Dataset, k: int = SMOTE_K, seed: int = 0) -> Dataset:
    """Oversample the minority class by segment interpolation until classes balance.

    Synthetic points are x_i + u * (x_j - x_i) with u ~ U[0, 1), where x_i
    cycles round-robin over minority points and x_j is one of its k nearest
    minority neighbours (Euclidean; k truncated to minority_count - 1).
    Original rows are preserved untouched as a prefix of the output.
    """
    counts = {int(c): int(n) for c, n in zip(*np.unique(ds.y, return_counts=True))}
    if len(counts) < 2:
        raise DataError("SMOTE needs both classes present")
    minority_label = min(counts, key=lambda c: (counts[c], c))
    n_min = counts[minority_label]
    n_maj = max(counts.values())
    if n_min < 2:
        raise DataError("minority class needs at least 2 samples for SMOTE")
    need = n_maj - n_min
    if need == 0:
        return _take(ds, np.arange(len(ds)))

    minority = ds.X[ds.y == minority_label]
    k_eff = min(k, n_min - 1)
    # squared distances via the gram matrix; self excluded explicitly
    sq = (minority * minority).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (minority @ minority.T)
    np.fill_diagonal(d2, np.inf)
    neighbours = np.argsort(d2, axis=1, kind="stable")[:, :k_eff]

    rng = np.random.default_rng(seed)
    synth = np.empty((need, ds.X.shape[1]), dtype=np.float64)
    for j in range(need):
        i = j % n_min
        nbr = neighbours[i, rng.integers(0, k_eff)]
        u = rng.random()
        synth[j] = minority[i] + u * (minority[nbr] - minority[i])

    X = np.concatenate([ds.X, synth], axis=0)
    y = np.concatenate([ds.y, np.full(need, minority_label, dtype=ds.y.dtype)])
    return replace(ds, X=X, y=y, dropped_rows=0)


# ---------------------------------------------------------------------------
# EDA statistics
# ---------------------------------------------------------------------------

def class_distribution(ds: Dataset) -> tuple[dict[int, int], dict[int, float]]:
    """Per-label counts and fractions (fractions sum to 1)."""
    total = len(ds)
    counts = {label: int((ds.y == label).sum()) for label in (0, 1)}
    fractions = {label: counts[label] / total for label in (0, 1)}
    return counts, fractions


def pearson_correlation(X: np.ndarray) -> np.ndarray:
    """F x F Pearson matrix; zero-variance columns get r=0 off-diagonal, 1 on it.

    Each entry is computed from centered dot products, pairwise, and the
    upper triangle is mirrored, so the matrix is exactly symmetric and
    corr(x, x) / corr(x, -x) come out exactly +-1.
    """
    X = np.asarray(X, dtype=np.float64)
    n, f = X.shape
    if n < 2:
        raise DataError("correlation needs at least 2 rows")
    centered = X - X.mean(axis=0)
    constant = np.array([X[:, j].max() == X[:, j].min() for j in range(f)])
    auto = np.array([np.dot(centered[:, j], centered[:, j]) for j in range(f)])
    r = np.zeros((f, f), dtype=np.float64)
    for i in range(f):
        r[i, i] = 1.0
        for j in range(i + 1, f):
            if constant[i] or constant[j]:
                continue
            cov = np.dot(centered[:, i], centered[:, j])
            r_ij = cov / math.sqrt(auto[i] * auto[j])
            r[i, j] = r_ij
            r[j, i] = r_ij
    return r


def eda_report(ds: Dataset) -> EdaReport:
    counts, fractions = class_distribution(ds)
    return EdaReport(
        class_counts=counts,
        class_fractions=fractions,
        correlation=pearson_correlation(ds.X),
        feature_names=list(ds.feature_names),
        dropped_row_count=ds.dropped_rows,
    )


# ---------------------------------------------------------------------------
# EDA artifacts
# ---------------------------------------------------------------------------

def _diverging_color(r: float) -> str:
    """Red at +1, white at 0, blue at -1."""
    r = max(-1.0, min(1.0, r))
    if r >= 0:
        other = int(round(255 * (1.0 - r)))
        return f"#ff{other:02x}{other:02x}"
    other = int(round(255 * (1.0 + r)))
    return f"#{other:02x}{other:02x}ff"


def _correlation_svg(report: EdaReport) -> str:
    names = report.feature_names
    f = len(names)
    cell = 24
    left = 10 + 7 * max((len(n) for n in names), default=0)
    top = left
    width = left + f * cell + 10
    height = top + f * cell + 10
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="11">'
    ]
    for i, name in enumerate(names):
        y = top + i * cell + cell // 2 + 4
        parts.append(f'<text x="{left - 6}" y="{y}" text-anchor="end">{name}</text>')
        x = left + i * cell + cell // 2
        parts.append(
            f'<text x="{x}" y="{top - 6}" text-anchor="start" '
            f'transform="rotate(-60 {x} {top - 6})">{name}</text>')
    for i in range(f):
        for j in range(f):
            color = _diverging_color(float(report.correlation[i, j]))
            parts.append(
                f'<rect x="{left + j * cell}" y="{top + i * cell}" width="{cell}" '
                f'height="{cell}" fill="{color}" stroke="none"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def emit_eda(report: EdaReport, out_dir: str) -> dict[str, str]:
    """Write class_distribution.json, correlation.csv, and correlation.svg.

    Returns the written paths keyed by artifact name.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "class_distribution": os.path.join(out_dir, "class_distribution.json"),
        "correlation_csv": os.path.join(out_dir, "correlation.csv"),
        "correlation_svg": os.path.join(out_dir, "correlation.svg"),
    }
    payload = {
        "counts": {str(k): v for k, v in report.class_counts.items()},
        "fractions": {str(k): v for k, v in report.class_fractions.items()},
        "dropped_row_count": report.dropped_row_count,
    }
    with open(paths["class_distribution"], "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    with open(paths["correlation_csv"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature"] + report.feature_names)
        for name, row in zip(report.feature_names, report.correlation):
            writer.writerow([name] + [f"{v:.10g}" for v in row])
    with open(paths["correlation_svg"], "w", encoding="utf-8") as fh:
        fh.write(_correlation_svg(report))
        fh.write("\n")
    return paths
