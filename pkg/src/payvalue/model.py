"""End-to-end user value estimator: window, graph, intrinsic value, fixed point."""
from __future__ import annotations

import pandas as pd
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .graph_model import PaymentDataset, build_graph, restrict_to_window
from .intrinsic import EXPANSION, FREQUENCY, RECENCY, IntrinsicParams, intrinsic_scores
from .value_engine import ValueParams, solve_value


class UserValueModel(BaseEstimator):
    """Compute intrinsic, network and overall value for every user.

    ``fit`` takes a PaymentDataset, keeps the events up to ``eval_time``
    (default: the end of the dataset) and stores ``scores_``, a frame with
    columns user_id, M, R, F, E, I, N, V, plus ``graph_`` and ``result_``.
    """

    def __init__(self, alpha=0.85, epsilon=1e-9, max_iters=None, w_online=1.0, w_offline=1.0,
                 recency=RECENCY, frequency=FREQUENCY, expansion=EXPANSION, eval_time=None,
                 include_p2p=False, workers=1):
        self.alpha = alpha
        self.epsilon = epsilon
        self.max_iters = max_iters
        self.w_online = w_online
        self.w_offline = w_offline
        self.recency = recency
        self.frequency = frequency
        self.expansion = expansion
        self.eval_time = eval_time
        self.include_p2p = include_p2p
        self.workers = workers

    @classmethod
    def from_params(cls, intrinsic: IntrinsicParams, value: ValueParams, workers=1):
        return cls(alpha=value.alpha, epsilon=value.epsilon, max_iters=value.max_iters,
                   w_online=intrinsic.w_online, w_offline=intrinsic.w_offline,
                   recency=intrinsic.recency, frequency=intrinsic.frequency,
                   expansion=intrinsic.expansion, eval_time=intrinsic.eval_time,
                   include_p2p=intrinsic.include_p2p, workers=workers)

    def fit(self, X: PaymentDataset, y=None):
        self.eval_time_ = int(self.eval_time if self.eval_time is not None else X.max_time())
        self.intrinsic_params_ = IntrinsicParams(
            w_online=self.w_online, w_offline=self.w_offline, recency=self.recency,
            frequency=self.frequency, expansion=self.expansion, eval_time=self.eval_time_,
            include_p2p=self.include_p2p)
        self.value_params_ = ValueParams(self.alpha, self.epsilon, self.max_iters)

        self.graph_ = build_graph(restrict_to_window(X, self.eval_time_))
        intrinsic = intrinsic_scores(self.graph_, self.intrinsic_params_)
        self.result_ = solve_value(self.graph_.network, intrinsic["I"].to_numpy(),
                                   self.value_params_, workers=self.workers)
        self.scores_ = intrinsic.assign(N=self.result_.N, V=self.result_.V)
        return self

    def fit_transform(self, X: PaymentDataset, y=None) -> pd.DataFrame:
        return self.fit(X).scores_

    @property
    def n_iter_(self) -> int:
        check_is_fitted(self, "result_")
        return self.result_.iterations
