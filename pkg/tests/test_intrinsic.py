import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import DAY, T0, chain_dataset
from payvalue.graph_model import (InviteEdge, MerchantRecord, P2BEvent, P2PEvent, PaymentDataset,
                                  UserRecord, build_graph)
from payvalue.intrinsic import (EXPANSION, FREQUENCY, RECENCY, IntrinsicParams, IntrinsicValue,
                                NoTransactions, SigmoidParams, expansion, frequency,
                                intrinsic_scores, intrinsic_value, monetary, recency, sigmoid)
from payvalue.synth import SynthConfig, generate

FACTORS = {"recency": RECENCY, "frequency": FREQUENCY, "expansion": EXPANSION}

# reference values computed independently at 50 significant digits
SIGMA_R_0 = 1.89629236948498
SIGMA_F_0 = 0.941322458244483
SIGMA_E_0 = 0.773638285709535
SIGMA_F_1 = 1.89867996329056
SIGMA_E_4 = 1.88621272996813
I_M100_ALL_ZERO = 138.096182018910


def reference_sigmoid(x, p):
    return p.a + (p.b - p.a) / (1.0 + math.exp(-p.s * (x - p.c)))


@pytest.mark.parametrize("name", FACTORS)
def test_sigmoid_midpoint(name):
    p = FACTORS[name]
    assert abs(sigmoid(p.c, p) - (p.a + p.b) / 2) <= 1e-12


@pytest.mark.parametrize("p, x, expected", [
    (RECENCY, 0.0, SIGMA_R_0),
    (FREQUENCY, 0.0, SIGMA_F_0),
    (EXPANSION, 0.0, SIGMA_E_0),
    (FREQUENCY, 1.0, SIGMA_F_1),
    (EXPANSION, 4.0, SIGMA_E_4),
])
def test_sigmoid_reference_values(p, x, expected):
    assert sigmoid(x, p) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("p, x", [(RECENCY, 0.0), (FREQUENCY, 1.0), (EXPANSION, 4.0)])
def test_saturation_points_near_upper_bound(p, x):
    assert 2.0 - sigmoid(x, p) <= 0.12


def test_sigmoid_extremes_do_not_overflow():
    p = SigmoidParams(c=0.0, s=50.0)
    with np.errstate(all="raise"):
        out = sigmoid(np.array([-1e6, 0.0, 1e6]), p)
    assert out[0] == pytest.approx(0.5) and out[2] == pytest.approx(2.0)


def test_sigmoid_array_matches_scalar():
    xs = np.linspace(-5, 10, 61)
    for p in FACTORS.values():
        np.testing.assert_allclose(sigmoid(xs, p), [reference_sigmoid(x, p) for x in xs],
                                   rtol=0, atol=1e-14)


def test_sigmoid_params_checked():
    with pytest.raises(ValueError):
        SigmoidParams(c=0, s=0)
    with pytest.raises(ValueError):
        SigmoidParams(c=0, s=1, a=2, b=1)


def test_center_probe():
    m = 100.0
    product = sigmoid(2.0, RECENCY) * sigmoid(0.25, FREQUENCY) * sigmoid(1.5, EXPANSION)
    assert m * product == pytest.approx(195.3125, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 500), st.floats(0, 10), st.integers(0, 200))
def test_monotone_in_each_factor(r, f, e):
    assert sigmoid(r, RECENCY) >= sigmoid(r + 0.5, RECENCY)
    assert sigmoid(f, FREQUENCY) <= sigmoid(f + 0.1, FREQUENCY)
    assert sigmoid(e, EXPANSION) <= sigmoid(e + 1, EXPANSION)


# ---------------------------------------------------------------- per-user factors


def one_user(p2b=(), p2p=(), invites=(), extra_users=()):
    users = [UserRecord(1, T0)] + [UserRecord(u, T0) for u in extra_users]
    return build_graph(PaymentDataset.from_records(
        users=users, merchants=[MerchantRecord(1)], p2b=list(p2b), p2p=list(p2p),
        invites=list(invites)))


def test_recency_two_months():
    g = one_user([P2BEvent(1, 1, T0, "1")])
    assert recency(g, 1, T0 + int(60.875 * DAY)) == pytest.approx(2.0, abs=1e-12)


def test_recency_without_transactions():
    with pytest.raises(NoTransactions):
        recency(one_user(), 1, T0)


def test_frequency_over_weeks():
    g = one_user([P2BEvent(1, 1, T0 + i * DAY, "1") for i in range(10)])
    assert frequency(g, 1, T0 + 40 * 7 * DAY) == pytest.approx(0.25, abs=1e-12)


def test_frequency_short_tenure_uses_one_week():
    g = one_user([P2BEvent(1, 1, T0 + DAY * i // 2, "1") for i in range(3)])
    assert frequency(g, 1, T0 + 2 * DAY) == pytest.approx(3.0, abs=1e-12)


def test_p2p_counted_only_when_enabled():
    g = one_user([P2BEvent(1, 1, T0, "1")], p2p=[P2PEvent(1, 2, T0 + 3 * DAY, "5")],
                 extra_users=[2])
    t = T0 + 14 * DAY
    assert frequency(g, 1, t) == pytest.approx(0.5)
    assert frequency(g, 1, t, include_p2p=True) == pytest.approx(1.0)
    assert recency(g, 1, t, include_p2p=True) < recency(g, 1, t)


@pytest.mark.parametrize("weights, expected", [((1.0, 1.0), 150.0), ((2.0, 1.0), 250.0),
                                               ((0.0, 1.0), 50.0)])
def test_monetary_channel_weights(weights, expected):
    g = one_user([P2BEvent(1, 1, T0, "60.00", "online"), P2BEvent(1, 1, T0, "40.00", "online"),
                  P2BEvent(1, 1, T0, "50.00", "offline")])
    params = IntrinsicParams(w_online=weights[0], w_offline=weights[1])
    assert monetary(g, 1, params) == pytest.approx(expected, abs=1e-12)


def test_expansion_counts_both_directions():
    assert expansion(one_user(), 1) == 0
    g = one_user(invites=[InviteEdge(9, 1, T0), InviteEdge(1, 2, T0), InviteEdge(1, 3, T0),
                          InviteEdge(1, 4, T0)], extra_users=[2, 3, 4, 9])
    assert expansion(g, 1) == 4
    assert expansion(g, 2) == 1


def test_expansion_cascade_root(cascade_network):
    root = cascade_network.index_of([1])[0]
    assert cascade_network.out_degree()[root] + int(cascade_network.parent[root] >= 0) == 8


def test_zero_spend_means_zero_value():
    g = one_user(invites=[InviteEdge(1, 2, T0)], extra_users=[2])
    score = intrinsic_value(g, 1, IntrinsicParams(eval_time=T0 + DAY))
    assert score.M == 0 and score.I == 0.0


def test_all_zero_factors():
    # a real purchase always makes F positive, so the product is checked directly
    m = 100.0
    i = m * sigmoid(0.0, RECENCY) * sigmoid(0.0, FREQUENCY) * sigmoid(0.0, EXPANSION)
    assert i == pytest.approx(I_M100_ALL_ZERO, abs=1e-9)


def test_chain_intrinsic_value():
    ds = chain_dataset()
    scores = intrinsic_scores(build_graph(ds)).set_index("user_id")
    assert scores.loc[1, "I"] == 0 and scores.loc[2, "I"] == 0
    s = scores.loc[3]
    expected = 25.0 * sigmoid(0.0, RECENCY) * sigmoid(s.F, FREQUENCY) * sigmoid(1, EXPANSION)
    assert s.I == pytest.approx(expected, rel=1e-14)


# ---------------------------------------------------------------- vectorized path


@pytest.fixture(scope="module")
def synth_graph():
    return build_graph(generate(SynthConfig(seed=5, n_users=10_000, n_merchants=200, months=18)))


def test_vectorized_matches_per_user(synth_graph):
    params = IntrinsicParams(w_online=1.5)
    table = intrinsic_scores(synth_graph, params)
    rng = np.random.default_rng(0)
    for row in table.iloc[rng.choice(len(table), 300, replace=False)].itertuples():
        ref = intrinsic_value(synth_graph, row.user_id, params)
        assert row.M == pytest.approx(ref.M, rel=1e-12)
        assert row.F == pytest.approx(ref.F, rel=1e-12)
        assert row.E == ref.E
        if math.isnan(ref.R):
            assert math.isnan(row.R)
        else:
            assert row.R == pytest.approx(ref.R, rel=1e-12, abs=1e-12)
        assert row.I == pytest.approx(ref.I, rel=1e-12)


def test_bounds_on_ten_thousand_users(synth_graph):
    table = intrinsic_scores(synth_graph)
    assert len(table) == 10_000
    spend = table[table["M"] > 0]
    assert len(spend) > 1000
    assert ((spend["I"] > spend["M"] / 8) & (spend["I"] < 8 * spend["M"])).all()
    assert (table.loc[table["M"] == 0, "I"] == 0).all()


def test_bounds_on_random_factors():
    rng = np.random.default_rng(1)
    m = rng.lognormal(3, 2, 10_000)
    factors = (sigmoid(rng.exponential(6, m.size), RECENCY)
               * sigmoid(rng.exponential(1, m.size), FREQUENCY)
               * sigmoid(rng.integers(0, 500, m.size), EXPANSION))
    i = m * factors
    assert np.all((i > m / 8) & (i < 8 * m))


def test_estimator_restricts_window():
    ds = chain_dataset()
    early = IntrinsicValue(eval_time=T0 + 5 * DAY).fit_transform(ds)
    assert (early["I"] == 0).all()
    late = IntrinsicValue().fit(ds)
    assert late.eval_time_ == ds.max_time()
    assert late.transform(ds).set_index("user_id").loc[3, "I"] > 0


def test_estimator_params_round_trip():
    est = IntrinsicValue(w_online=2.0, eval_time=T0)
    assert est.get_params()["w_online"] == 2.0
    clone = IntrinsicValue.from_params(est.fit(chain_dataset()).params_)
    assert clone.get_params() == est.get_params()
