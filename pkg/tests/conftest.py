import numpy as np
import pytest

from payvalue.graph_model import (Digraph, InvitationNetwork, InviteEdge, MerchantRecord, P2BEvent,
                                  P2PEvent, PaymentDataset, UserRecord)
from payvalue.synth import SynthConfig, generate

T0 = 1_546_300_800  # 2019-01-01T00:00:00Z
DAY = 86_400

# cascade of the 34-user example component: root 1 with 8 accepted invitations
CASCADE_EDGES = (
    [(1, c) for c in range(2, 10)]
    + [(2, c) for c in range(10, 15)]
    + [(3, c) for c in range(15, 18)]
    + [(4, 18)]
    + [(10, c) for c in range(19, 23)]
    + [(15, 23), (15, 24)]
    + [(19, c) for c in range(25, 28)]
    + [(5, c) for c in range(28, 31)]
    + [(28, c) for c in range(31, 35)]
)


def network_from_edges(n_users, edges, first_id=1):
    ids = np.arange(first_id, first_id + n_users)
    src = [a for a, _ in edges]
    dst = [b for _, b in edges]
    return InvitationNetwork.from_invites(ids, src, dst)


@pytest.fixture
def cascade_network():
    return network_from_edges(34, CASCADE_EDGES)


@pytest.fixture
def cascade_plus_network():
    """The 34-user cascade plus a 2-user component and an isolated user."""
    return network_from_edges(37, CASCADE_EDGES + [(35, 36)])


def chain_dataset():
    """r(1) -> a(2) -> b(3); only b spends."""
    users = [UserRecord(i, T0) for i in (1, 2, 3)]
    return PaymentDataset.from_records(
        users=users,
        merchants=[MerchantRecord(1, "grocery", "MI")],
        p2b=[P2BEvent(3, 1, T0 + 10 * DAY, "25.00", "offline")],
        invites=[InviteEdge(1, 2, T0 + DAY), InviteEdge(2, 3, T0 + 2 * DAY)],
    )


def make_small_dataset():
    users = [UserRecord(1, T0, "C001", "25-34", "F", "Lazio", "employee"),
             UserRecord(2, T0 + DAY, None, "18-24", "M", "Valle d'Aosta/Vallée d'Aoste"),
             UserRecord(3, T0 + 2 * DAY)]
    return PaymentDataset.from_records(
        users=users,
        merchants=[MerchantRecord(1, "grocery", "MI"), MerchantRecord(2, "fuel", "AO")],
        p2b=[P2BEvent(1, 1, T0 + 3 * DAY, "12.30", "online"),
             P2BEvent(1, 2, T0 + 4 * DAY, "7.05", "offline"),
             P2BEvent(2, 1, T0 + 5 * DAY, "100", "offline"),
             P2BEvent(3, 2, T0 + 6 * DAY, "0.99", "online")],
        p2p=[P2PEvent(1, 2, T0 + 7 * DAY, "10.00")],
        invites=[InviteEdge(1, 2, T0 + DAY), InviteEdge(1, 3, T0 + 2 * DAY)],
    )


@pytest.fixture
def small_dataset():
    return make_small_dataset()


@pytest.fixture(scope="session")
def synth_small():
    return generate(SynthConfig(seed=11, n_users=2_000, n_merchants=100, months=24))


def random_forest(rng, n, root_share=0.05):
    """Random invitation forest on ids 1..n; parents always precede children."""
    parent = np.full(n, -1, dtype=np.int64)
    for i in range(1, n):
        if rng.random() >= root_share:
            parent[i] = rng.integers(0, i)
    return InvitationNetwork.from_parents(np.arange(1, n + 1), parent)


def random_digraph(rng, n, mean_degree=2.0):
    """Random directed graph on ids 1..n, cycles and self-loops included."""
    m = rng.poisson(mean_degree * n)
    return Digraph.from_edges(np.arange(1, n + 1), rng.integers(1, n + 1, m),
                              rng.integers(1, n + 1, m))


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def acceptance():
    """Record one status line per acceptance criterion."""
    def record(number, passed, detail, soft=False):
        status = "PASS" if passed else ("FLAG" if soft else "FAIL")
        ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {status}  {detail}"
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
