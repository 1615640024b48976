"""CSV interchange for payment datasets.

A dataset is five UTF-8 CSV files with header rows: users.csv, merchants.csv,
p2b.csv, p2p.csv and invites.csv. Timestamps are ISO-8601 UTC
(``2019-01-01T00:00:00Z``), amounts are decimal euros with at most two
fractional digits, channels are ``online`` or ``offline``.
"""
from __future__ import annotations

import os
from pathlib import Path
from typing import Mapping, Union

import numpy as np
import pandas as pd

from .graph_model import (TABLE_COLUMNS, Channel, PaymentDataset, Violation, _INT_COLUMNS,
                          validate)

FILE_NAMES = {name: f"{name}.csv" for name in TABLE_COLUMNS}

# column names in the files differ from the in-memory ones for P2P and P2B
FILE_COLUMNS = {
    "users": ["id", "enrollment_time", "campaign_id", "age_band", "gender", "region",
              "occupation"],
    "merchants": ["id", "category", "province"],
    "p2b": ["user_id", "merchant_id", "time", "amount", "channel"],
    "p2p": ["src_id", "dst_id", "time", "amount"],
    "invites": ["inviter_id", "invitee_id", "time"],
}
_TIME_COLUMNS = {"enrollment_time", "time"}
_MONEY_COLUMNS = {"amount"}

_INT_RE = r"-?\d+"
_TIME_RE = r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z"
_MONEY_RE = r"-?\d+(?:\.\d{1,2})?"

PathSet = Union[str, os.PathLike, Mapping[str, Union[str, os.PathLike]]]


class ParseError(ValueError):
    def __init__(self, file, line: int, reason: str):
        self.file, self.line, self.reason = str(file), line, reason
        super().__init__(f"{self.file}:{line}: {reason}")


class ValidationFailed(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        lines = "\n".join(f"  {v}" for v in violations[:20])
        more = f"\n  ... {len(violations) - 20} more" if len(violations) > 20 else ""
        super().__init__(f"{len(violations)} violation(s):\n{lines}{more}")


def resolve_paths(paths: PathSet) -> dict[str, Path]:
    if isinstance(paths, Mapping):
        return {name: Path(paths[name]) for name in TABLE_COLUMNS}
    root = Path(paths)
    return {name: root / fname for name, fname in FILE_NAMES.items()}


def format_times(seconds) -> np.ndarray:
    s = np.datetime_as_string(np.asarray(seconds, dtype="datetime64[s]"), unit="s")
    return np.char.add(s.astype(str), "Z")


def parse_times(text: np.ndarray) -> np.ndarray:
    return np.asarray([t[:-1] for t in text], dtype="datetime64[s]").astype(np.int64)


def _cents_to_text(cents: np.ndarray) -> np.ndarray:
    cents = np.asarray(cents, dtype=np.int64)
    if cents.size == 0:
        return np.zeros(0, dtype=str)
    whole, frac = np.divmod(np.abs(cents), 100)
    sign = np.where(cents < 0, "-", "")
    return np.char.add(np.char.add(np.char.add(sign, whole.astype(str)), "."),
                       np.char.zfill(frac.astype(str), 2))


def _text_to_cents(text: pd.Series) -> np.ndarray:
    if text.empty:
        return np.zeros(0, dtype=np.int64)
    parts = text.str.partition(".")
    whole = parts[0].str.lstrip("-").astype(np.int64).to_numpy()
    frac = parts[2].str.ljust(2, "0").replace("", "00").astype(np.int64).to_numpy()
    sign = np.where(text.str.startswith("-").to_numpy(), -1, 1)
    return sign * (whole * 100 + frac)


def _fail_first(path, mask: np.ndarray, reason: str, values: pd.Series):
    bad = np.flatnonzero(~mask)
    if bad.size:
        i = int(bad[0])
        raise ParseError(path, i + 2, f"{reason}: {values.iloc[i]!r}")


def _read_table(name: str, path: Path) -> pd.DataFrame:
    cols = FILE_COLUMNS[name]
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            header = fh.readline().rstrip("\r\n")
    except UnicodeDecodeError as exc:
        raise ParseError(path, 1, f"not UTF-8: {exc}") from exc
    if header.lstrip("﻿").split(",") != cols:
        raise ParseError(path, 1, f"expected header {','.join(cols)!r}, got {header!r}")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8",
                          na_filter=False)
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise ParseError(path, 0, str(exc)) from exc
    if list(raw.columns) != cols:
        raise ParseError(path, 1, f"expected columns {cols}, got {list(raw.columns)}")

    out = {}
    for col in cols:
        text = raw[col].astype(str)
        if col in _TIME_COLUMNS:
            _fail_first(path, text.str.fullmatch(_TIME_RE).to_numpy(), f"bad timestamp in {col}",
                        text)
            try:
                out[col] = parse_times(text.to_numpy())
            except ValueError:
                ok = np.array([_is_time(t) for t in text.to_numpy()], dtype=bool)
                _fail_first(path, ok, f"bad timestamp in {col}", text)
                raise
        elif col in _MONEY_COLUMNS:
            _fail_first(path, text.str.fullmatch(_MONEY_RE).to_numpy(), "bad amount", text)
            out[col] = _text_to_cents(text)
        elif col in _INT_COLUMNS:
            _fail_first(path, text.str.fullmatch(_INT_RE).to_numpy(), f"bad integer in {col}",
                        text)
            out[col] = text.astype(np.int64).to_numpy()
        elif col == "channel":
            ok = text.isin([c.value for c in Channel]).to_numpy()
            _fail_first(path, ok, "channel must be online or offline", text)
            out[col] = text.to_numpy(dtype=object)
        else:
            out[col] = text.to_numpy(dtype=object)
    return pd.DataFrame(out, columns=cols)


def _is_time(t: str) -> bool:
    try:
        np.datetime64(t[:-1], "s")
        return True
    except ValueError:
        return False


def load_dataset(paths: PathSet, check: bool = True) -> PaymentDataset:
    """Read the five CSV files; raises ParseError or ValidationFailed."""
    files = resolve_paths(paths)
    tables = {}
    for name, path in files.items():
        if not path.exists():
            raise FileNotFoundError(f"missing {name} table: {path}")
        tables[name] = _read_table(name, path)
    dataset = PaymentDataset(**tables)
    if check:
        violations = validate(dataset)
        if violations:
            raise ValidationFailed(violations)
    return dataset


def write_dataset(dataset: PaymentDataset, paths: PathSet) -> None:
    """Write the dataset in canonical row order (by id, then time)."""
    files = resolve_paths(paths)
    canon = dataset.canonical()
    for name, path in files.items():
        path.parent.mkdir(parents=True, exist_ok=True)
        df = getattr(canon, name).copy()
        for col in df.columns:
            if col in _TIME_COLUMNS:
                df[col] = format_times(df[col].to_numpy())
            elif col in _MONEY_COLUMNS:
                df[col] = _cents_to_text(df[col].to_numpy())
        df.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
