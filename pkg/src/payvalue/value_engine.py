"""Damped averaging fixed point over the invitation network.

Each user's value is its intrinsic value plus ``alpha`` times the mean value of
the users it invited:

    V(u) = alpha * mean(V(v) for v invited by u) + I(u)

The mean over an empty set is 0. Iterating from V_0 = 0 contracts in the
max-norm with ratio alpha on any graph; on a forest of depth D it reaches the
fixed point exactly after D + 1 supersteps, since values only travel from
invitees up to inviters.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np
import pandas as pd
import scipy.sparse as sp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_alpha, check_epsilon, check_intrinsic, check_workers
from .graph_model import Digraph

DIRECT_SOLVE_MAX_NODES = 2_000


class NotConverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ValueParams:
    alpha: float = 0.85
    # max-norm change threshold, relative to max(1, max I)
    epsilon: float = 1e-9
    # None: 10 * (depth + 1) on forests, geometric bound otherwise
    max_iters: Optional[int] = None

    def __post_init__(self):
        check_alpha(self.alpha)
        check_epsilon(self.epsilon)


@dataclass
class ValueResult:
    user_ids: np.ndarray
    I: np.ndarray
    N: np.ndarray
    V: np.ndarray
    iterations: int
    residual: float
    residuals: list = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"user_id": self.user_ids, "I": self.I, "N": self.N, "V": self.V})


def error_bound(change: float, alpha: float) -> float:
    """Max-norm distance to the fixed point implied by the last superstep change."""
    return change * alpha / (1.0 - alpha)


def default_max_iters(graph: Digraph, alpha: float, epsilon: float) -> int:
    if graph.is_forest:
        return 10 * (graph.max_depth + 1)
    # change at step t is at most alpha**(t-1) * max I; the stopping test also
    # divides by (1 - alpha)
    steps = math.log(epsilon * (1.0 - alpha) / alpha) / math.log(alpha)
    return 10 * (math.ceil(steps) + 1)


# ---------------------------------------------------------------- vectorized supersteps


def _chunks(n: int, k: int) -> list[tuple[int, int]]:
    bounds = np.linspace(0, n, min(k, max(n, 1)) + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


class _Propagator:
    """Computes the neighbour mean for every node, optionally across threads.

    Each node's incoming values are summed in ascending sender-id order, so the
    result does not depend on how nodes are split across workers.
    """

    def __init__(self, graph: Digraph, workers: int = 1):
        deg = graph.out_degree()
        self.n = graph.n_nodes
        self.idx = graph.out_idx
        self.rows = np.flatnonzero(deg > 0)
        self.starts = graph.out_ptr[self.rows]
        self.ends = graph.out_ptr[self.rows + 1]
        self.deg = deg[self.rows].astype(np.float64)
        self.workers = workers
        self._pool = ThreadPoolExecutor(workers) if workers > 1 and self.rows.size > 1 else None

    def _part(self, V, lo, hi):
        if lo == hi:
            return np.empty(0)
        gathered = V[self.idx[self.starts[lo]:self.ends[hi - 1]]]
        return np.add.reduceat(gathered, self.starts[lo:hi] - self.starts[lo]) / self.deg[lo:hi]

    def __call__(self, V: np.ndarray) -> np.ndarray:
        N = np.zeros(self.n)
        if self.rows.size == 0:
            return N
        if self._pool is None:
            N[self.rows] = self._part(V, 0, self.rows.size)
        else:
            parts = self._pool.map(lambda ab: self._part(V, *ab),
                                   _chunks(self.rows.size, self.workers))
            N[self.rows] = np.concatenate(list(parts))
        return N

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()


def network_term(graph: Digraph, V, workers: int = 1) -> np.ndarray:
    """Mean of ``V`` over each node's out-neighbours (0 for nodes without any)."""
    prop = _Propagator(graph, check_workers(workers))
    try:
        return prop(np.asarray(V, dtype=np.float64))
    finally:
        prop.close()


def value_iterates(graph: Digraph, I, alpha: float, workers: int = 1) -> Iterator[np.ndarray]:
    """Yield V_1, V_2, ... of the damped iteration started at V_0 = 0."""
    I = check_intrinsic(I, graph.n_nodes)
    alpha = check_alpha(alpha)
    prop = _Propagator(graph, check_workers(workers))
    try:
        V = np.zeros(graph.n_nodes)
        while True:
            V = alpha * prop(V) + I
            yield V
    finally:
        prop.close()


def solve_value(graph: Digraph, I, params: ValueParams = ValueParams(),
                workers: int = 1) -> ValueResult:
    """Iterate supersteps until V is provably within tolerance of the fixed point.

    The test is ``change * alpha / (1 - alpha) <= tol``, which bounds the
    max-norm distance to the fixed point and implies ``change <= tol``. On forests the iteration also stops after depth + 1 supersteps, where it
    is exact. Raises NotConverged if ``max_iters`` is exhausted first.
    """
    I = check_intrinsic(I, graph.n_nodes)
    tol = params.epsilon * max(1.0, float(I.max(initial=0.0)))
    max_iters = params.max_iters or default_max_iters(graph, params.alpha, params.epsilon)
    exact_after = graph.max_depth + 1 if graph.is_forest else None

    prev = np.zeros(graph.n_nodes)
    residuals = []
    V, t = prev, 0
    for t, V in enumerate(value_iterates(graph, I, params.alpha, workers), start=1):
        change = float(np.max(np.abs(V - prev), initial=0.0))
        residuals.append(change)
        if error_bound(change, params.alpha) <= tol or (exact_after is not None
                                                         and t >= exact_after):
            break
        if t >= max_iters:
            raise NotConverged(f"max-norm change {change:.3e} > {tol:.3e} after {t} supersteps")
        prev = V
    N = network_term(graph, V, workers)
    return ValueResult(graph.ids, I, N, V, t, residuals[-1] if residuals else 0.0, residuals)


# ---------------------------------------------------------------- oracle


def _adjacency(graph_or_matrix) -> sp.csr_matrix:
    if isinstance(graph_or_matrix, Digraph):
        g = graph_or_matrix
        data = np.ones(g.n_edges)
        return sp.csr_matrix((data, g.out_idx, g.out_ptr), shape=(g.n_nodes, g.n_nodes))
    A = sp.csr_matrix(graph_or_matrix, dtype=np.float64)
    A.data[:] = 1.0
    return A


def direct_solve(graph_or_matrix, I, alpha: float) -> np.ndarray:
    """Solve (Id - alpha W) V = I by dense elimination.

    ``W`` is the row-normalized out-adjacency; rows of nodes without
    out-neighbours are zero. Accepts a Digraph or any square adjacency matrix,
    so the neighbourhood convention can be varied. Meant as a test oracle for
    up to DIRECT_SOLVE_MAX_NODES nodes.
    """
    A = _adjacency(graph_or_matrix)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("adjacency must be square")
    if n > DIRECT_SOLVE_MAX_NODES:
        raise ValueError(f"direct_solve supports at most {DIRECT_SOLVE_MAX_NODES} nodes, got {n}")
    alpha = check_alpha(alpha)
    I = check_intrinsic(I, n)
    deg = np.asarray(A.sum(axis=1)).ravel()
    W = A.toarray()
    nz = deg > 0
    W[nz] /= deg[nz, None]
    # ||alpha W||_inf <= alpha < 1, so the system is never singular
    assert np.abs(alpha * W).sum(axis=1).max(initial=0.0) < 1.0
    return np.linalg.solve(np.eye(n) - alpha * W, I)


# ---------------------------------------------------------------- pregel-style runtime


@dataclass
class SuperstepRun:
    states: list
    supersteps: int


def superstep_runtime(
    graph: Digraph,
    node_init: Callable[[int], object],
    message_fn: Callable[[int, object], object],
    combine_fn: Callable[[int, object, list], object],
    halt_fn: Optional[Callable[[int, list, list], bool]] = None,
    max_supersteps: int = 10_000,
    workers: int = 1,
) -> SuperstepRun:
    """Bulk-synchronous message passing over node indices.

    In every superstep each node ``v`` emits ``message_fn(v, state)`` (None
    means no message) to every node that has an edge into ``v``, i.e. against
    edge direction, child to parent on the invitation forest. After the
    barrier each node ``u`` computes ``combine_fn(u, state, inbox)`` where
    ``inbox`` is a list of ``(sender, message)`` sorted by sender. The run
    stops when ``halt_fn(step, old_states, new_states)`` is true, by default
    when no state changed.
    """
    workers = check_workers(workers)
    n = graph.n_nodes
    halt_fn = halt_fn or (lambda step, old, new: old == new)
    states = [node_init(v) for v in range(n)]
    spans = _chunks(n, workers)
    pool = ThreadPoolExecutor(workers) if workers > 1 else None

    def run(fn):
        if pool is None:
            return fn(0, n)
        out = []
        for part in pool.map(lambda ab: fn(*ab), spans):
            out.extend(part)
        return out

    try:
        step = 0
        while step < max_supersteps:
            step += 1
            old = states
            messages = run(lambda lo, hi: [message_fn(v, old[v]) for v in range(lo, hi)])

            def update(lo, hi):
                out = []
                for u in range(lo, hi):
                    senders = graph.out_idx[graph.out_ptr[u]:graph.out_ptr[u + 1]]
                    inbox = [(int(v), messages[v]) for v in senders if messages[v] is not None]
                    out.append(combine_fn(u, old[u], inbox))
                return out

            states = run(update)
            if halt_fn(step, old, states):
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return SuperstepRun(states, step)


def pregel_value(graph: Digraph, I, params: ValueParams = ValueParams(),
                 workers: int = 1) -> ValueResult:
    """Value iteration expressed as per-node superstep functions."""
    I = check_intrinsic(I, graph.n_nodes)
    alpha = params.alpha
    tol = params.epsilon * max(1.0, float(I.max(initial=0.0)))
    max_iters = params.max_iters or default_max_iters(graph, alpha, params.epsilon)
    exact_after = graph.max_depth + 1 if graph.is_forest else None
    residuals = []

    def combine(u, state, inbox):
        if not inbox:
            return float(I[u])
        total = 0.0
        for _, msg in inbox:
            total += msg
        return alpha * (total / len(inbox)) + float(I[u])

    def halt(step, old, new):
        change = max((abs(a - b) for a, b in zip(new, old)), default=0.0)
        residuals.append(change)
        return error_bound(change, alpha) <= tol or (exact_after is not None
                                                     and step >= exact_after)

    run = superstep_runtime(graph, lambda v: 0.0, lambda v, s: s, combine, halt,
                            max_supersteps=max_iters, workers=workers)
    if residuals and error_bound(residuals[-1], alpha) > tol and not (exact_after and run.supersteps >= exact_after):
        raise NotConverged(f"max-norm change {residuals[-1]:.3e} after {run.supersteps} supersteps")
    V = np.asarray(run.states, dtype=np.float64)
    N = network_term(graph, V)
    return ValueResult(graph.ids, I, N, V, run.supersteps,
                       residuals[-1] if residuals else 0.0, residuals)


# ---------------------------------------------------------------- estimator


class NetworkValue(BaseEstimator):
    """Fit the value fixed point for a graph and its intrinsic values.

    After ``fit(graph, intrinsic)``: ``value_``, ``network_value_``,
    ``n_iter_``, ``residual_`` and the full ``result_``.
    """

    def __init__(self, alpha=0.85, epsilon=1e-9, max_iters=None, workers=1):
        self.alpha = alpha
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.workers = workers

    def fit(self, graph: Digraph, intrinsic):
        params = ValueParams(self.alpha, self.epsilon, self.max_iters)
        self.result_ = solve_value(graph, intrinsic, params, workers=self.workers)
        self.value_ = self.result_.V
        self.network_value_ = self.result_.N
        self.n_iter_ = self.result_.iterations
        self.residual_ = self.result_.residual
        return self

    def fit_transform(self, graph: Digraph, intrinsic) -> np.ndarray:
        return self.fit(graph, intrinsic).value_

    def to_frame(self) -> pd.DataFrame:
        check_is_fitted(self, "result_")
        return self.result_.to_frame()
