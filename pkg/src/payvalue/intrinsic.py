"""Continuous RFM-style intrinsic value with an invitation-degree factor.

    I(u) = M(u) * sigma_R(R(u)) * sigma_F(F(u)) * sigma_E(E(u))

M is the channel-weighted P2B spend in euros, R the months since the last
P2B transaction, F the P2B transactions per week of tenure and E the degree in
the invitation forest. Each sigma is a generalized logistic bounded in (a, b).
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .graph_model import Channel, PaymentDataset, PaymentGraph, build_graph, restrict_to_window

DAY = 86_400
MONTH_SECONDS = 30.4375 * DAY
WEEK_SECONDS = 7 * DAY
EXP_CLAMP = 500.0


@dataclass(frozen=True)
class SigmoidParams:
    c: float
    s: float
    a: float = 0.5
    b: float = 2.0

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"sigmoid needs a < b, got a={self.a}, b={self.b}")
        if self.s == 0:
            raise ValueError("sigmoid slope must be nonzero")


RECENCY = SigmoidParams(c=2.0, s=-1.3)
FREQUENCY = SigmoidParams(c=0.25, s=3.5)
EXPANSION = SigmoidParams(c=1.5, s=1.0)


def sigmoid(x, p: SigmoidParams):
    """a + (b - a) / (1 + exp(-s (x - c))), with the exponent clamped to +-500."""
    arg = np.clip(-p.s * (np.asarray(x, dtype=float) - p.c), -EXP_CLAMP, EXP_CLAMP)
    out = p.a + (p.b - p.a) / (1.0 + np.exp(arg))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class IntrinsicParams:
    w_online: float = 1.0
    w_offline: float = 1.0
    recency: SigmoidParams = RECENCY
    frequency: SigmoidParams = FREQUENCY
    expansion: SigmoidParams = EXPANSION
    eval_time: Optional[int] = None
    # count P2P transfers as activity for R and F (off: only P2B counts)
    include_p2p: bool = False

    def __post_init__(self):
        if self.w_online < 0 or self.w_offline < 0:
            raise ValueError("channel weights must be non-negative")


@dataclass(frozen=True)
class IntrinsicScore:
    user: int
    M: float
    R: float
    F: float
    E: int
    I: float


class NoTransactions(ValueError):
    """Recency is undefined for a user without transactions."""


# ---------------------------------------------------------------- per user


def _node(graph: PaymentGraph, user: int) -> int:
    return int(graph.network.index_of([user])[0])


def _activity_times(graph: PaymentGraph, node: int, include_p2p: bool) -> np.ndarray:
    ds = graph.dataset
    times = [ds.p2b["time"].to_numpy()[graph.p2b.rows(node)]]
    if include_p2p:
        times.append(ds.p2p["time"].to_numpy()[graph.p2p_sent.rows(node)])
        times.append(ds.p2p["time"].to_numpy()[graph.p2p_received.rows(node)])
    return np.concatenate(times)


def monetary(graph: PaymentGraph, user: int, params: IntrinsicParams = IntrinsicParams()) -> float:
    rows = graph.p2b.rows(_node(graph, user))
    p2b = graph.dataset.p2b
    amount = p2b["amount"].to_numpy()[rows]
    online = p2b["channel"].to_numpy()[rows] == Channel.ONLINE.value
    online_cents = int(amount[online].sum())
    offline_cents = int(amount[~online].sum())
    return (params.w_online * online_cents + params.w_offline * offline_cents) / 100.0


def recency(graph: PaymentGraph, user: int, eval_time: int, include_p2p: bool = False) -> float:
    times = _activity_times(graph, _node(graph, user), include_p2p)
    if times.size == 0:
        raise NoTransactions(f"user {user} has no transactions")
    return max(0.0, (eval_time - int(times.max())) / MONTH_SECONDS)


def frequency(graph: PaymentGraph, user: int, eval_time: int, include_p2p: bool = False) -> float:
    node = _node(graph, user)
    count = _activity_times(graph, node, include_p2p).size
    enrolled = int(graph.dataset.users.set_index("id").at[user, "enrollment_time"])
    weeks = max(1.0, (eval_time - enrolled) / WEEK_SECONDS)
    return count / weeks


def expansion(graph: PaymentGraph, user: int) -> int:
    net = graph.network
    node = _node(graph, user)
    return int(net.out_ptr[node + 1] - net.out_ptr[node]) + int(net.parent[node] >= 0)


def intrinsic_value(graph: PaymentGraph, user: int,
                    params: IntrinsicParams = IntrinsicParams()) -> IntrinsicScore:
    eval_time = params.eval_time if params.eval_time is not None else graph.dataset.max_time()
    M = monetary(graph, user, params)
    F = frequency(graph, user, eval_time, params.include_p2p)
    E = expansion(graph, user)
    try:
        R = recency(graph, user, eval_time, params.include_p2p)
    except NoTransactions:
        R = float("nan")
    if M == 0:
        return IntrinsicScore(user, M, R, F, E, 0.0)
    I = M * sigmoid(R, params.recency) * sigmoid(F, params.frequency) \
        * sigmoid(E, params.expansion)
    return IntrinsicScore(user, M, R, F, E, float(I))


# ---------------------------------------------------------------- vectorized


def intrinsic_scores(graph: PaymentGraph, params: IntrinsicParams = IntrinsicParams()) -> pd.DataFrame:
    """Score every user of ``graph``; columns user_id, M, R, F, E, I.

    R is NaN for users without transactions (their I is 0 regardless).
    """
    ds, net = graph.dataset, graph.network
    n = net.n_nodes
    eval_time = params.eval_time if params.eval_time is not None else ds.max_time()

    p2b_node = graph.p2b.node_of_row
    amount = ds.p2b["amount"].to_numpy()
    online = ds.p2b["channel"].to_numpy() == Channel.ONLINE.value
    online_cents = np.bincount(p2b_node[online], weights=amount[online], minlength=n)
    offline_cents = np.bincount(p2b_node[~online], weights=amount[~online], minlength=n)
    M = (params.w_online * online_cents + params.w_offline * offline_cents) / 100.0

    act_node = [p2b_node]
    act_time = [ds.p2b["time"].to_numpy()]
    if params.include_p2p:
        t = ds.p2p["time"].to_numpy()
        act_node += [graph.p2p_sent.node_of_row, graph.p2p_received.node_of_row]
        act_time += [t, t]
    act_node = np.concatenate(act_node)
    act_time = np.concatenate(act_time).astype(np.int64)

    count = np.bincount(act_node, minlength=n)
    last = np.full(n, np.iinfo(np.int64).min, dtype=np.int64)
    np.maximum.at(last, act_node, act_time)
    R = np.where(count > 0, np.maximum(0.0, (eval_time - last) / MONTH_SECONDS), np.nan)

    enroll = ds.users.set_index("id").loc[net.ids, "enrollment_time"].to_numpy()
    weeks = np.maximum(1.0, (eval_time - enroll) / WEEK_SECONDS)
    F = count / weeks
    E = net.out_degree() + (net.parent >= 0)

    factors = (sigmoid(np.nan_to_num(R), params.recency) * sigmoid(F, params.frequency)
               * sigmoid(E, params.expansion))
    I = np.where(M > 0, M * factors, 0.0)
    return pd.DataFrame({"user_id": net.ids, "M": M, "R": R, "F": F, "E": E, "I": I})


class IntrinsicValue(TransformerMixin, BaseEstimator):
    """Transformer from a PaymentDataset to per-user intrinsic scores.

    ``fit`` fixes the evaluation time (the end of the dataset unless
    ``eval_time`` is given); ``transform`` restricts the dataset to that window
    and returns the score table.
    """

    def __init__(self, w_online=1.0, w_offline=1.0, recency=RECENCY, frequency=FREQUENCY,
                 expansion=EXPANSION, eval_time=None, include_p2p=False):
        self.w_online = w_online
        self.w_offline = w_offline
        self.recency = recency
        self.frequency = frequency
        self.expansion = expansion
        self.eval_time = eval_time
        self.include_p2p = include_p2p

    def fit(self, X: PaymentDataset, y=None):
        self.eval_time_ = int(self.eval_time if self.eval_time is not None else X.max_time())
        self.params_ = IntrinsicParams(
            w_online=self.w_online, w_offline=self.w_offline, recency=self.recency,
            frequency=self.frequency, expansion=self.expansion, eval_time=self.eval_time_,
            include_p2p=self.include_p2p,
        )
        return self

    def transform(self, X: PaymentDataset) -> pd.DataFrame:
        check_is_fitted(self, "params_")
        graph = build_graph(restrict_to_window(X, self.eval_time_))
        return intrinsic_scores(graph, self.params_)

    @classmethod
    def from_params(cls, params: IntrinsicParams) -> "IntrinsicValue":
        return cls(w_online=params.w_online, w_offline=params.w_offline, recency=params.recency,
                   frequency=params.frequency, expansion=params.expansion,
                   eval_time=params.eval_time, include_p2p=params.include_p2p)


def with_eval_time(params: IntrinsicParams, eval_time: int) -> IntrinsicParams:
    return replace(params, eval_time=int(eval_time))
