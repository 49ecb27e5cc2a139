"""CSV ingestion and report writers."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from pathlib import Path

import numpy as np

from .core import FeaturePanel, PriceSeries
from .errors import EmptyIntersection, NonFinite, ParseError, UnsortedInput

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FILL_POLICIES = ("strict", "ffill")


def _parse_date(text: str, row: int, path) -> np.datetime64:
    try:
        ts = np.datetime64(text.strip())
    except ValueError as exc:
        raise ParseError(f"{path}: row {row}, column 'date': bad date {text!r}") from exc
    if np.isnat(ts):
        raise ParseError(f"{path}: row {row}, column 'date': empty date")
    return ts.astype("datetime64[s]")


def _parse_value(text: str, row: int, col: str, path) -> float:
    text = text.strip()
    if text == "" or text.lower() in ("nan", "na", "null"):
        return math.nan
    try:
        return float(text)
    except ValueError as exc:
        raise ParseError(f"{path}: row {row}, column {col!r}: bad number {text!r}") from exc


def _forward_fill(values: np.ndarray, names, path, fill: str) -> np.ndarray:
    missing = ~np.isfinite(values)
    if not np.any(missing):
        return values
    if fill == "strict":
        r, c = np.argwhere(missing)[0]
        raise NonFinite(
            f"{path}: missing or non-finite value at data row {r + 1}, column "
            f"{names[c]!r} (use fill='ffill' to forward-fill)"
        )
    values = values.copy()
    for c in range(values.shape[1]):
        col = values[:, c]
        bad = ~np.isfinite(col)
        if not bad.any():
            continue
        if bad[0]:
            raise NonFinite(f"{path}: column {names[c]!r} has no value to forward-fill from")
        idx = np.where(bad, 0, np.arange(col.size))
        np.maximum.accumulate(idx, out=idx)
        values[:, c] = col[idx]
        logger.info("%s: forward-filled %d values in column %r", path, int(bad.sum()), names[c])
    return values


def read_table(path, fill: str = "strict"):
    """Parse a ``date,<col>,...`` CSV into ``(timestamps, values, names)``."""
    path = Path(path)
    if fill not in FILL_POLICIES:
        raise ParseError(f"fill policy must be one of {FILL_POLICIES}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0].lower() != "date":
            raise ParseError(f"{path}: header must start with 'date' and name value columns")
        names = tuple(header[1:])
        stamps, rows = [], []
        for i, rec in enumerate(reader, start=1):
            if not rec or all(not x.strip() for x in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(
                    f"{path}: row {i} has {len(rec)} fields, expected {len(header)}"
                )
            stamps.append(_parse_date(rec[0], i, path))
            rows.append([_parse_value(x, i, c, path) for x, c in zip(rec[1:], names)])
    ts = np.array(stamps, dtype="datetime64[s]")
    values = np.array(rows, dtype=float).reshape(len(rows), len(names))
    for i in range(1, ts.size):
        if ts[i] == ts[i - 1]:
            raise UnsortedInput(f"{path}: duplicated date {format_dates(ts[i:i + 1])[0]}")
        if ts[i] < ts[i - 1]:
            raise UnsortedInput(f"{path}: date {format_dates(ts[i:i + 1])[0]} out of order")
    values = _forward_fill(values, names, path, fill)
    return ts, values, names


def load_csv(path, kind: str, fill: str = "strict"):
    """Load a price file (``date,price``) or a feature file (``date,f1,...``)."""
    ts, values, names = read_table(path, fill)
    if kind == "prices":
        if values.shape[1] != 1:
            raise ParseError(f"{path}: a price file has exactly one value column")
        return PriceSeries(ts, values[:, 0])
    if kind == "features":
        return FeaturePanel(ts, values, names)
    raise ValueError(f"kind must be 'prices' or 'features', not {kind!r}")


def load_inputs(prices_path, features_path, fill: str = "strict"):
    """Load both files and restrict them to their common timestamps.

    Returns ``(prices, panel, alignment)`` where ``alignment`` counts the rows
    dropped from each side.
    """
    p_ts, p_vals, _ = read_table(prices_path, fill)
    f_ts, f_vals, names = read_table(features_path, fill)
    if p_vals.shape[1] != 1:
        raise ParseError(f"{prices_path}: a price file has exactly one value column")
    common, pi, fi = np.intersect1d(p_ts, f_ts, assume_unique=True, return_indices=True)
    if common.size == 0:
        raise EmptyIntersection("price and feature files share no dates")
    alignment = {
        "rows": int(common.size),
        "dropped_from_prices": int(p_ts.size - common.size),
        "dropped_from_features": int(f_ts.size - common.size),
    }
    if alignment["dropped_from_prices"] or alignment["dropped_from_features"]:
        logger.info(
            "date intersection kept %d rows (dropped %d price rows, %d feature rows)",
            common.size, alignment["dropped_from_prices"], alignment["dropped_from_features"],
        )
    prices = PriceSeries(common, p_vals[pi, 0])
    panel = FeaturePanel(common, f_vals[fi], names)
    return prices, panel, alignment


def format_dates(ts) -> list:
    ts = np.asarray(ts).astype("datetime64[s]")
    unit = "D" if np.all(ts == ts.astype("datetime64[D]")) else "s"
    return list(np.datetime_as_string(ts, unit=unit))


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def write_json(path, payload: dict) -> None:
    text = json.dumps(_clean(payload), indent=2, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _num(x: float) -> str:
    return repr(float(x)) if math.isfinite(x) else "nan"


def write_report_csv(path, report) -> None:
    dates = format_dates(report.timestamps)
    cum = report.cum_pnl
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "signal", "gated", "position", "pnl", "cum_pnl"])
        for i, d in enumerate(dates):
            w.writerow([
                d, _num(report.signal[i]), int(bool(report.gated[i])),
                _num(report.position[i]), _num(report.pnl[i]), _num(cum[i]),
            ])


def write_sweep_csv(path, rows, columns) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            out = []
            for c in columns:
                v = row.get(c)
                if v is None:
                    out.append("")
                elif isinstance(v, float):
                    out.append(_num(v))
                else:
                    out.append(str(v))
            w.writerow(out)


def write_dataset(directory, prices: PriceSeries, panel: FeaturePanel) -> tuple:
    """Write ``prices.csv`` and ``features.csv`` in the CLI input format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    dates = format_dates(prices.timestamps)
    p_path, f_path = directory / "prices.csv", directory / "features.csv"
    with open(p_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "price"])
        for d, v in zip(dates, prices.prices):
            w.writerow([d, repr(float(v))])
    with open(f_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *panel.names])
        for d, row in zip(dates, panel.values):
            w.writerow([d, *(repr(float(v)) for v in row)])
    return p_path, f_path
