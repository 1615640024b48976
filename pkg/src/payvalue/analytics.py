"""Distribution, inequality and campaign statistics over user values."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from ._validation import LengthMismatch, check_same_length, check_workers
from .graph_model import PaymentDataset

DEFAULT_PERCENTILES = (25, 50, 75, 90, 99)


class EmptyInput(ValueError):
    pass


class AllZero(ValueError):
    pass


class ZeroVariance(ValueError):
    pass


def gini(values) -> float:
    """Gini coefficient from the ascending sorted-rank formula."""
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = x.size
    if n == 0:
        raise EmptyInput("gini of an empty sample")
    if (x < 0).any():
        raise ValueError("gini needs non-negative values")
    total = x.sum()
    if total == 0:
        raise AllZero("gini undefined when every value is zero")
    ranks = np.arange(1, n + 1, dtype=np.float64)
    return float(np.dot(2 * ranks - n - 1, x) / (n * total))


def pearson(x, y) -> float:
    x, y = check_same_length(x, y)
    if x.size < 2:
        raise LengthMismatch("pearson needs at least two points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = np.dot(dx, dx), np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise ZeroVariance("pearson undefined for a constant sample")
    return float(np.clip(np.dot(dx, dy) / math.sqrt(sxx * syy), -1.0, 1.0))


def top_share(values, fraction: float) -> float:
    """Share of the total held by the top ceil(fraction * n) values."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyInput("top_share of an empty sample")
    total = x.sum()
    if total <= 0:
        raise AllZero("top_share needs a positive total")
    k = min(x.size, math.ceil(fraction * x.size))
    return float(np.sort(x)[::-1][:k].sum() / total)


def nearest_rank_percentile(values, q: float) -> float:
    """Smallest sample with at least q% of the samples at or below it."""
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if x.size == 0:
        raise EmptyInput("percentile of an empty sample")
    if not 0 <= q <= 100:
        raise ValueError(f"percentile {q} outside [0, 100]")
    rank = max(1, math.ceil(q / 100 * x.size))
    return float(x[rank - 1])


def empirical_cdf(values) -> pd.DataFrame:
    """Exact CDF: one row per distinct value with P(X <= value)."""
    x = np.asarray(values, dtype=np.float64).ravel()
    uniq, counts = np.unique(x, return_counts=True)
    return pd.DataFrame({"value": uniq, "count": counts, "cdf": counts.cumsum() / max(x.size, 1)})


def value_cdf_tables(result) -> dict[str, pd.DataFrame]:
    """CDFs of overall, intrinsic and network value (plot with a log x-axis)."""
    return {"V": empirical_cdf(result.V), "I": empirical_cdf(result.I),
            "N": empirical_cdf(result.N)}


def value_cdf_frame(result) -> pd.DataFrame:
    parts = []
    for name, table in value_cdf_tables(result).items():
        parts.append(table.assign(quantity=name)[["quantity", "value", "count", "cdf"]])
    return pd.concat(parts, ignore_index=True)


# ---------------------------------------------------------------- 2-D histogram


@dataclass
class Histogram2D:
    """Rectangular 2-D histogram.

    ``x_edges``/``y_edges`` are the regular bin edges. On a log-scaled axis
    values <= 0 go to an underflow bin, stored as row/column 0 of ``counts``
    with bounds (0, 0).
    """

    x_edges: np.ndarray
    y_edges: np.ndarray
    x_log: bool
    y_log: bool
    counts: np.ndarray

    def _bins(self, edges, log):
        bins = list(zip(edges[:-1], edges[1:]))
        return [(0.0, 0.0)] + bins if log else bins

    def to_frame(self, keep_empty: bool = False) -> pd.DataFrame:
        xb, yb = self._bins(self.x_edges, self.x_log), self._bins(self.y_edges, self.y_log)
        rows = []
        for i, (xlo, xhi) in enumerate(xb):
            for j, (ylo, yhi) in enumerate(yb):
                c = int(self.counts[i, j])
                if c or keep_empty:
                    rows.append((xlo, xhi, ylo, yhi, c))
        return pd.DataFrame(rows, columns=["x_bin_lo", "x_bin_hi", "y_bin_lo", "y_bin_hi",
                                           "count"])


def _edges(v: np.ndarray, bins, log: bool) -> np.ndarray:
    if not np.isscalar(bins):
        return np.asarray(bins, dtype=np.float64)
    pos = v[v > 0] if log else v
    if pos.size == 0:
        lo, hi = (1.0, 10.0) if log else (0.0, 1.0)
    else:
        lo, hi = float(pos.min()), float(pos.max())
    if lo == hi:
        lo, hi = (lo / 2, hi * 2) if log else (lo - 0.5, hi + 0.5)
    return np.geomspace(lo, hi, int(bins) + 1) if log else np.linspace(lo, hi, int(bins) + 1)


def _digitize(v: np.ndarray, edges: np.ndarray, log: bool) -> np.ndarray:
    # right-most edge is inclusive; out-of-range values clamp to the end bins
    idx = np.clip(np.searchsorted(edges, v, side="right") - 1, 0, edges.size - 2)
    if log:
        idx = np.where(v > 0, idx + 1, 0)
    return idx


def hist2d(x, y, bins=20, log_flags=(False, False)) -> Histogram2D:
    x, y = check_same_length(x, y)
    x_log, y_log = log_flags
    xe, ye = _edges(x, bins if np.isscalar(bins) else bins[0], x_log), \
        _edges(y, bins if np.isscalar(bins) else bins[1], y_log)
    counts = np.zeros((xe.size - 1 + x_log, ye.size - 1 + y_log), dtype=np.int64)
    np.add.at(counts, (_digitize(x, xe, x_log), _digitize(y, ye, y_log)), 1)
    return Histogram2D(xe, ye, bool(x_log), bool(y_log), counts)


# ---------------------------------------------------------------- business tables


def campaign_report(dataset: PaymentDataset, values: pd.DataFrame) -> pd.DataFrame:
    """Per campaign: acquired users and mean/median of their value.

    ``values`` has columns user_id and V. Users without a campaign are skipped.
    """
    users = dataset.users[["id", "campaign_id"]]
    users = users[users["campaign_id"] != ""]
    merged = users.merge(values[["user_id", "V"]], left_on="id", right_on="user_id")
    cols = ["campaign_id", "n_acquired_users", "mean_value", "median_value"]
    if merged.empty:
        return pd.DataFrame(columns=cols)
    grouped = merged.groupby("campaign_id", sort=True)["V"]
    out = pd.DataFrame({"n_acquired_users": grouped.size(), "mean_value": grouped.mean(),
                        "median_value": grouped.median()}).reset_index()
    return out[cols]


def p2p_activity(dataset: PaymentDataset) -> pd.DataFrame:
    """Euros sent plus euros received per user; columns user_id, p2p."""
    ids = np.sort(dataset.users["id"].to_numpy())
    p2p = dataset.p2p
    cents = np.zeros(ids.size, dtype=np.int64)
    amount = p2p["amount"].to_numpy()
    for col in ("src_id", "dst_id"):
        np.add.at(cents, np.searchsorted(ids, p2p[col].to_numpy()), amount)
    return pd.DataFrame({"user_id": ids, "p2p": cents / 100.0})


def temporal_cutoffs(start: int, end: int, step) -> list[int]:
    """Cutoffs start + k*step (k >= 1) before ``end``, followed by ``end``.

    ``step`` is seconds or a pandas DateOffset (e.g. ``DateOffset(months=3)``).
    """
    if not start < end:
        raise ValueError("temporal sweep needs start < end")
    out = []
    if isinstance(step, (int, np.integer, float)):
        if step <= 0:
            raise ValueError("step must be positive")
        t = start + step
        while t < end:
            out.append(int(t))
            t += step
    else:
        origin = pd.Timestamp(start, unit="s", tz="UTC")
        k = 1
        while True:
            t = int((origin + k * step).timestamp())
            if t >= end:
                break
            out.append(t)
            k += 1
    out.append(int(end))
    return out


def temporal_percentiles(dataset: PaymentDataset, start: int, end: int, step,
                         percentiles: Sequence[float] = DEFAULT_PERCENTILES,
                         model=None, workers: int = 1) -> pd.DataFrame:
    """Expanding-window percentiles of user value.

    At each cutoff the dataset is restricted to the cutoff, intrinsic and
    network value are recomputed with the cutoff as evaluation time, and the
    requested nearest-rank percentiles of V over enrolled users are emitted.
    ``model`` is an unfitted UserValueModel used as a template.
    """
    from .model import UserValueModel
    from sklearn.base import clone

    template = model if model is not None else UserValueModel()
    cutoffs = temporal_cutoffs(start, end, step)

    def at(cutoff):
        m = clone(template).set_params(eval_time=cutoff, workers=1)
        scores = m.fit(dataset).scores_
        v = scores["V"].to_numpy()
        if v.size == 0:
            return []
        return [(cutoff, float(p), nearest_rank_percentile(v, p)) for p in percentiles]

    workers = check_workers(workers)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(at, cutoffs))
    else:
        parts = [at(c) for c in cutoffs]
    rows = [r for part in parts for r in part]
    return pd.DataFrame(rows, columns=["cutoff", "percentile", "value"])


def summary_statistics(scores: pd.DataFrame) -> dict:
    """Headline figures: inequality, concentration and value correlations."""
    V, I, N = (scores[c].to_numpy() for c in ("V", "I", "N"))
    out = {"n_users": int(V.size)}

    def safe(fn, *args):
        try:
            return fn(*args)
        except ValueError:
            return None

    out["gini_value"] = safe(gini, V)
    out["top_share"] = {"0.01": safe(top_share, V, 0.01), "0.1": safe(top_share, V, 0.1)}
    out["pearson"] = {"V_I": safe(pearson, V, I), "V_N": safe(pearson, V, N),
                      "I_N": safe(pearson, I, N)}
    out["median_value"] = safe(nearest_rank_percentile, V, 50)
    out["fraction_positive_network_value"] = float((N > 0).mean()) if V.size else None
    return out
