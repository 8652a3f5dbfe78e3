"""Real-data loaders, regression metrics and experiment records."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .datagen import Dataset
from .errors import IngestionError, SchemaError, ShapeError

SCHEMA_VERSION = 1

CONCRETE_ROWS = 1030
CONCRETE_FEATURES = 8
FIRE_ROWS = 517
FIRE_FEATURES = ("temp", "RH", "wind", "rain")


# ---------------------------------------------------------------------------
# Metrics


def _paired(a, b, min_len=1):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < min_len:
        raise ShapeError(f"need at least {min_len} values, got {a.size}")
    return a, b


def rmse(a, b) -> float:
    a, b = _paired(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def pearson(a, b) -> float:
    """Product-moment correlation; raises ``ValueError`` if either vector is constant."""
    a, b = _paired(a, b, 2)
    da, db = a - a.mean(), b - b.mean()
    sa, sb = np.sqrt(da @ da), np.sqrt(db @ db)
    if sa == 0 or sb == 0:
        raise ValueError("correlation is undefined for a constant vector")
    return float(np.clip((da @ db) / (sa * sb), -1.0, 1.0))


def r_squared(y_true, y_pred) -> float:
    y_true, y_pred = _paired(y_true, y_pred, 2)
    tss = np.sum((y_true - y_true.mean()) ** 2)
    if tss == 0:
        raise ValueError("R^2 is undefined for a constant target")
    return float(1.0 - np.sum((y_true - y_pred) ** 2) / tss)


def regression_metrics(y_true, y_pred) -> dict:
    out = {"rmse": rmse(y_true, y_pred), "r2": r_squared(y_true, y_pred)}
    try:
        out["rho"] = pearson(y_true, y_pred)
    except ValueError:
        out["rho"] = float("nan")
    return out


# ---------------------------------------------------------------------------
# Loaders


def _read_rows(path):
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8-sig") as fh:
            rows = [r for r in csv.reader(fh) if r]
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise IngestionError(f"{path} is empty")
    return rows[0], rows[1:]


def _to_float(cell, line, col):
    try:
        v = float(cell)
    except ValueError:
        raise IngestionError(f"line {line}, column {col!r}: non-numeric value {cell!r}") from None
    if not math.isfinite(v):
        raise IngestionError(f"line {line}, column {col!r}: non-finite value {cell!r}")
    return v


def _numeric_block(header, rows, columns):
    idx = [header.index(c) for c in columns]
    out = np.empty((len(rows), len(idx)))
    for i, row in enumerate(rows):
        line = i + 2  # 1-based, after the header
        if len(row) != len(header):
            raise IngestionError(f"line {line}: expected {len(header)} fields, found {len(row)}")
        for j, k in enumerate(idx):
            out[i, j] = _to_float(row[k].strip(), line, columns[j])
    return out


def load_concrete(path, expected_rows: Optional[int] = CONCRETE_ROWS) -> Dataset:
    """Compressive-strength table: eight mixture/age columns, strength last.

    The file needs a header row; column names are not checked, only their
    count.
    """
    header, rows = _read_rows(path)
    header = [h.strip() for h in header]
    if len(header) != CONCRETE_FEATURES + 1:
        raise IngestionError(f"expected {CONCRETE_FEATURES + 1} columns, found {len(header)}")
    if expected_rows is not None and len(rows) != expected_rows:
        raise IngestionError(f"expected {expected_rows} data rows, found {len(rows)}")
    data = _numeric_block(header, rows, header)
    return Dataset(data[:, :-1], data[:, -1], {"source": "concrete", "path": str(path),
                                              "features": header[:-1], "target": header[-1]})


def load_fire(path, expected_rows: Optional[int] = FIRE_ROWS) -> Dataset:
    """Forest-fire table reduced to the weather columns; response is ``log(area + 1)``."""
    header, rows = _read_rows(path)
    header = [h.strip() for h in header]
    missing = [c for c in (*FIRE_FEATURES, "area") if c not in header]
    if missing:
        raise IngestionError(f"missing expected columns: {missing}")
    if expected_rows is not None and len(rows) != expected_rows:
        raise IngestionError(f"expected {expected_rows} data rows, found {len(rows)}")
    data = _numeric_block(header, rows, [*FIRE_FEATURES, "area"])
    if np.any(data[:, -1] < 0):
        raise IngestionError("burned area must be nonnegative")
    return Dataset(data[:, :-1], np.log1p(data[:, -1]),
                   {"source": "fire", "path": str(path), "features": list(FIRE_FEATURES),
                    "target": "log(area+1)"})


def fire_inverse(y):
    """Map log-area predictions back to hectares."""
    return np.expm1(np.asarray(y, dtype=float))


# ---------------------------------------------------------------------------
# Records and tables


def _plain(obj):
    """Recursively convert numpy containers/scalars to JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass
class ExperimentRecord:
    command: str
    config: dict = field(default_factory=dict)
    hyperparameters: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    timing: float = 0.0
    seed: int = 0
    artifacts: list = field(default_factory=list)
    status: str = "ok"

    def to_json(self) -> str:
        body = {"schema_version": SCHEMA_VERSION, **_plain(asdict(self))}
        # NaN is kept as the JSON5-style token Python emits, so it round-trips
        return json.dumps(body, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentRecord":
        try:
            body = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"record is not valid JSON: {exc}") from exc
        version = body.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise SchemaError(f"record schema version {version!r}, expected {SCHEMA_VERSION}")
        unknown = set(body) - set(cls.__dataclass_fields__)
        if unknown:
            raise SchemaError(f"unknown record fields: {sorted(unknown)}")
        return cls(**body)


def write_record(record: ExperimentRecord, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(record.to_json(), encoding="utf-8", newline="\n")
    return path


def read_record(path) -> ExperimentRecord:
    return ExperimentRecord.from_json(Path(path).read_text(encoding="utf-8"))


def write_table(path, header: Sequence[str], columns) -> Path:
    """Comma-separated table with a header row; ``columns`` are equal-length 1-D sequences."""
    cols = [np.asarray(c).ravel() for c in columns]
    if len(cols) != len(header) or len({len(c) for c in cols}) > 1:
        raise ShapeError("need one equal-length column per header entry")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def read_table(path):
    """Inverse of :func:`write_table` for numeric tables: ``(header, n x k array)``."""
    header, rows = _read_rows(path)
    return header, _numeric_block(header, rows, header)
