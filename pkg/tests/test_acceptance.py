"""Acceptance criteria 1 to 10, one test each.

Every test records a PASS/FAIL line that is printed in the terminal summary.
Criterion 10 is a soft performance target: a miss is reported as FLAG and
emits a warning instead of failing the run.
"""
import filecmp
import time
import warnings

import numpy as np
import pandas as pd
import pytest
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from conftest import CASCADE_EDGES, T0, network_from_edges, random_digraph, random_forest
from test_analytics import (gini_pairwise, pearson_definition, percentile_by_counting,
                            stopping_user)
from test_cli import REPRO_ARGS, tree_files
from payvalue import analytics, topology
from payvalue.cli import main
from payvalue.graph_model import Digraph, build_graph
from payvalue.intrinsic import EXPANSION, FREQUENCY, RECENCY, intrinsic_scores, sigmoid
from payvalue.model import UserValueModel
from payvalue.synth import SynthConfig, generate, generate_forest
from payvalue.value_engine import (ValueParams, direct_solve, solve_value, superstep_runtime,
                                   value_iterates)


def test_criterion_01_fixed_point_matches_direct_solve(acceptance):
    rng = np.random.default_rng(2024)
    worst = 0.0
    start = time.perf_counter()
    for _ in range(200):
        net = random_forest(rng, int(rng.integers(10, 2001)), root_share=rng.uniform(0, 0.1))
        I = rng.exponential(1.0, net.n_nodes) * (rng.random(net.n_nodes) < 0.7)
        alpha = float(rng.choice([0.5, 0.85, 0.99]))
        V = solve_value(net, I, ValueParams(alpha=alpha)).V
        worst = max(worst, float(np.max(np.abs(V - direct_solve(net, I, alpha)))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 30
    acceptance(1, ok, f"200 forests, max |V - direct| = {worst:.2e} (<= 1e-8), "
                      f"{elapsed:.1f} s (< 30 s)")
    assert ok


def fixture_forests():
    rng = np.random.default_rng(7)
    yield "cascade", network_from_edges(34, CASCADE_EDGES)
    yield "cascade+", network_from_edges(37, CASCADE_EDGES + [(35, 36)])
    yield "chain", network_from_edges(3, [(1, 2), (2, 3)])
    yield "two-leaf", network_from_edges(3, [(1, 2), (1, 3)])
    yield "edgeless", network_from_edges(4, [])
    for k in range(5):
        yield f"random-{k}", random_forest(rng, 1500, root_share=0.01)
    yield "synthetic", generate_forest(SynthConfig(seed=3, n_users=20_000))


def run_supersteps(net, I, steps, alpha=0.85):
    """States after exactly ``steps`` supersteps of the per-node value update."""
    def combine(u, state, inbox):
        if not inbox:
            return float(I[u])
        total = 0.0
        for _, msg in inbox:
            total += msg
        return alpha * (total / len(inbox)) + float(I[u])

    run = superstep_runtime(net, lambda v: 0.0, lambda v, s: s, combine,
                            halt_fn=lambda step, old, new: step >= steps)
    return run.states


def test_criterion_02_forest_exact_after_depth_plus_one(acceptance):
    rng = np.random.default_rng(8)
    failures = []
    checked = 0
    for name, net in fixture_forests():
        I = rng.exponential(10.0, net.n_nodes)
        D = net.max_depth
        it = value_iterates(net, I, 0.85)
        vs = [next(it).copy() for _ in range(D + 2)]
        if not np.array_equal(vs[D], vs[D + 1]):
            failures.append(name)
        if net.n_nodes <= 2000:
            # message-passing runtime with sender-sorted inboxes
            if run_supersteps(net, I, D + 1) != run_supersteps(net, I, D + 2):
                failures.append(name + " (superstep runtime)")
        checked += 1
    ok = not failures
    acceptance(2, ok, f"V_(D+1) == V_(D+2) bitwise on {checked} fixture forests"
                      + (f"; mismatches: {failures}" if failures else ""))
    assert ok


def has_cycle(g: Digraph) -> bool:
    A = sp.csr_matrix((np.ones(g.n_edges), g.out_idx, g.out_ptr), shape=(g.n_nodes,) * 2)
    n_strong, _ = connected_components(A, directed=True, connection="strong")
    return n_strong < g.n_nodes or bool(A.diagonal().any())


def test_criterion_03_generic_topology_convergence(acceptance):
    rng = np.random.default_rng(9)
    worst, worst_ratio, n_graphs, contracts = 0.0, 0.0, 0, True
    while n_graphs < 50:
        g = random_digraph(rng, int(rng.integers(2, 501)), mean_degree=rng.uniform(1, 4))
        if not has_cycle(g):
            continue
        n_graphs += 1
        I = rng.uniform(0, 1, g.n_nodes)
        alpha = float(rng.choice([0.5, 0.85, 0.99]))
        res = solve_value(g, I, ValueParams(alpha=alpha))
        worst = max(worst, float(np.max(np.abs(res.V - direct_solve(g, I, alpha)))))
        r = np.asarray(res.residuals)
        # a few ulps of the largest value absorb rounding in each superstep
        slack = 8 * np.finfo(float).eps * max(1.0, float(res.V.max()))
        contracts &= bool(np.all(r[1:] <= alpha * r[:-1] + slack))
        big = r[:-1] > 1e-4 * slack / np.finfo(float).eps
        if big.any():
            worst_ratio = max(worst_ratio, float(np.max(r[1:][big] / r[:-1][big]) / alpha))
    ok = worst <= 1e-8 and contracts
    acceptance(3, ok, f"50 cyclic graphs, max |V - direct| = {worst:.2e} (<= 1e-8), "
                      f"residual_(t+1) <= alpha * residual_t + rounding slack: {contracts} "
                      f"(max ratio / alpha above rounding level {worst_ratio:.6f})")
    assert ok


def test_criterion_04_intrinsic_unit_suite(acceptance):
    checks = {}
    checks["midpoints"] = all(abs(sigmoid(p.c, p) - (p.a + p.b) / 2) <= 1e-12
                              for p in (RECENCY, FREQUENCY, EXPANSION))
    saturation = [sigmoid(0.0, RECENCY), sigmoid(1.0, FREQUENCY), sigmoid(4.0, EXPANSION)]
    checks["saturation"] = all(2.0 - v <= 0.12 for v in saturation)

    ds = generate(SynthConfig(seed=4, n_users=10_000, n_merchants=200, months=24))
    scores = intrinsic_scores(build_graph(ds))
    M, I = scores["M"].to_numpy(), scores["I"].to_numpy()
    spend = M > 0
    checks["zero spend"] = bool((I[~spend] == 0).all()) and (~spend).any()
    checks["bounds"] = bool(np.all((I[spend] > M[spend] / 8) & (I[spend] < 8 * M[spend])))
    ok = all(checks.values())
    acceptance(4, ok, ", ".join(f"{k}: {'ok' if v else 'FAILED'}" for k, v in checks.items())
               + f" ({len(scores)} users; saturation gaps "
               + "/".join(f"{2 - v:.3f}" for v in saturation) + ")")
    assert ok


def test_criterion_05_structural_suite(acceptance):
    problems = []
    for seed in range(100):
        ds = generate(SynthConfig(seed=seed, n_users=500, n_merchants=20, months=12))
        net = build_graph(ds).network  # raises on cycles or double acceptance
        if net.in_degree().max(initial=0) > 1:
            problems.append((seed, "in-degree"))
        reach = topology.reachable_counts(net)
        expected = np.array([sum(reach[c] + 1 for c in net.successors(u))
                             for u in range(net.n_nodes)])
        if not np.array_equal(reach, expected):
            problems.append((seed, "reachable recurrence"))
        if not np.array_equal(topology.wcc_labels_bfs(net), topology.wcc_labels_union_find(net)):
            problems.append((seed, "wcc"))
    ok = not problems
    acceptance(5, ok, "100 seeds: in-degree <= 1, acyclic, reachable recurrence, "
                      "BFS == union-find" + (f"; problems: {problems[:5]}" if problems else ""))
    assert ok


def test_criterion_06_statistics_oracles(acceptance):
    rng = np.random.default_rng(6)
    gini_err = 0.0
    for _ in range(500):
        x = rng.lognormal(0, 2, int(rng.integers(1, 501)))
        x[rng.random(x.size) < 0.3] = 0
        if x.sum() == 0:
            x[0] = 1.0
        gini_err = max(gini_err, abs(analytics.gini(x) - gini_pairwise(x)))
    pearson_err = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 200))
        x, y = rng.normal(size=n), rng.normal(size=n) + rng.normal() * np.arange(n)
        pearson_err = max(pearson_err, abs(analytics.pearson(x, y)
                                           - pearson_definition(list(x), list(y))))
    conserved = True
    for _ in range(200):
        n = int(rng.integers(0, 400))
        x = rng.lognormal(0, 3, n) * (rng.random(n) < 0.7)
        y = rng.exponential(1, n) * (rng.random(n) < 0.7)
        logs = (bool(rng.random() < 0.5), bool(rng.random() < 0.5))
        h = analytics.hist2d(x, y, bins=int(rng.integers(1, 50)), log_flags=logs)
        conserved &= int(h.counts.sum()) == n
    percentiles_ok = True
    for _ in range(200):
        x = rng.integers(0, 100, int(rng.integers(1, 80))).tolist()
        for q in (1, 25, 50, 75, 90, 99, 100):
            percentiles_ok &= analytics.nearest_rank_percentile(x, q) == percentile_by_counting(x, q)
    ok = gini_err <= 1e-12 and pearson_err <= 1e-12 and conserved and percentiles_ok
    acceptance(6, ok, f"gini err {gini_err:.1e}, pearson err {pearson_err:.1e}, "
                      f"hist2d conserved: {conserved}, nearest-rank: {percentiles_ok}")
    assert ok


def test_criterion_07_hand_worked_fixtures(acceptance):
    got = {}
    two_leaf = solve_value(network_from_edges(3, [(1, 2), (1, 3)]), [0.0, 10.0, 20.0]).V
    got["two-leaf root"] = (two_leaf[0], 12.75)
    chain = solve_value(network_from_edges(3, [(1, 2), (2, 3)]), [0.0, 0.0, 8.0]).V
    for name, v, want in zip(("chain r", "chain a", "chain b"), chain, (5.78, 6.8, 8.0)):
        got[name] = (v, want)
    cycle = solve_value(Digraph.from_edges([1, 2], [1, 2], [2, 1]), [1.0, 1.0]).V
    got["2-cycle"] = (cycle[0], 20 / 3)
    numeric_ok = all(abs(a - b) <= 1e-8 for a, b in got.values())

    cascade = network_from_edges(34, CASCADE_EDGES)
    wcc = topology.weakly_connected_components(cascade)
    root = cascade.index_of([1])[0]
    structure = (int(wcc["size"].iloc[0]), int(cascade.out_degree()[root]),
                 int(topology.reachable_counts(cascade)[root]))
    ok = numeric_ok and structure == (34, 8, 33) and len(wcc) == 1
    acceptance(7, ok, "two-leaf 12.75, chain 5.78/6.8/8, 2-cycle 6.6667: "
                      + ("ok" if numeric_ok else f"FAILED {got}")
                      + f"; cascade size/out-degree/reach = {structure}")
    assert ok


def test_criterion_08_temporal_consistency(acceptance, synth_small):
    start, end = synth_small.time_span()
    series = analytics.temporal_percentiles(synth_small, start, end, pd.DateOffset(months=3))
    last = series[series["cutoff"] == end]
    V = UserValueModel().fit(synth_small).scores_["V"].to_numpy()
    consistent = len(last) == 5 and all(
        row.value == analytics.nearest_rank_percentile(V, row.percentile)
        for row in last.itertuples())

    ds = stopping_user()
    cutoffs = [T0 + 60 * 86_400, T0 + 120 * 86_400, T0 + 180 * 86_400]
    values = [UserValueModel(eval_time=c).fit(ds).scores_.set_index("user_id").loc[1, "V"]
              for c in cutoffs]
    decreasing = values[0] > values[1] > values[2]
    ok = consistent and decreasing
    acceptance(8, ok, f"final cutoff equals one-shot: {consistent}; stopping user V "
                      + " > ".join(f"{v:.2f}" for v in values))
    assert ok


def test_criterion_09_repro_determinism(acceptance, tmp_path):
    runs = {"a": "1", "b": "1", "c": "4"}
    for name, workers in runs.items():
        assert main(["repro", *REPRO_ARGS, "--out", str(tmp_path / name),
                     "--workers", workers]) == 0
    names = tree_files(tmp_path / "a")
    same = all(tree_files(tmp_path / k) == names for k in runs) and all(
        filecmp.cmp(tmp_path / "a" / n, tmp_path / k / n, shallow=False)
        for k in ("b", "c") for n in names)
    acceptance(9, same, f"repro byte-identical across 2 runs and --workers 1/4 "
                        f"({len(names)} files)")
    assert same


@pytest.mark.slow
def test_criterion_10_million_node_performance(acceptance):
    net = generate_forest(SynthConfig(seed=10, n_users=1_000_000))
    I = np.random.default_rng(10).exponential(20.0, net.n_nodes)
    start = time.perf_counter()
    res = solve_value(net, I)
    elapsed = time.perf_counter() - start
    ok = elapsed < 60
    acceptance(10, ok, f"solve_value on {net.n_nodes:,} nodes (depth {net.max_depth}) took "
                       f"{elapsed:.2f} s (< 60 s soft target), {res.iterations} supersteps",
               soft=True)
    if not ok:
        warnings.warn(f"performance target missed: {elapsed:.1f} s")
