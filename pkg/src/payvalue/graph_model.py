"""Heterogeneous payment dataset and the invitation forest built from it.

Tables are held as pandas DataFrames with integer epoch-second timestamps and
integer euro-cent amounts. The invitation network is stored in CSR form over
node indices, where node ``i`` is the user with the ``i``-th smallest id.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Iterable, Optional

import numpy as np
import pandas as pd

USER_COLUMNS = ["id", "enrollment_time", "campaign_id", "age_band", "gender", "region", "occupation"]
MERCHANT_COLUMNS = ["id", "category", "province"]
P2B_COLUMNS = ["user_id", "merchant_id", "time", "amount", "channel"]
P2P_COLUMNS = ["src_id", "dst_id", "time", "amount"]
INVITE_COLUMNS = ["inviter_id", "invitee_id", "time"]

_INT_COLUMNS = {"id", "enrollment_time", "user_id", "merchant_id", "time", "amount",
                "src_id", "dst_id", "inviter_id", "invitee_id"}

# total orders used for canonical row ordering: by id, then time, then the rest
_SORT_KEYS = {
    "users": ["id"],
    "merchants": ["id"],
    "p2b": ["user_id", "time", "merchant_id", "amount", "channel"],
    "p2p": ["src_id", "time", "dst_id", "amount"],
    "invites": ["invitee_id", "time", "inviter_id"],
}
TABLE_COLUMNS = {
    "users": USER_COLUMNS,
    "merchants": MERCHANT_COLUMNS,
    "p2b": P2B_COLUMNS,
    "p2p": P2P_COLUMNS,
    "invites": INVITE_COLUMNS,
}


class Channel(str, enum.Enum):
    ONLINE = "online"
    OFFLINE = "offline"


def to_cents(amount) -> int:
    """Convert a euro amount (str, int, float or Decimal) to integer cents."""
    d = amount if isinstance(amount, Decimal) else Decimal(str(amount))
    return int((d * 100).quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


def format_cents(cents: int) -> str:
    sign = "-" if cents < 0 else ""
    q, r = divmod(abs(int(cents)), 100)
    return f"{sign}{q}.{r:02d}"


# ---------------------------------------------------------------- records


@dataclass(frozen=True)
class UserRecord:
    id: int
    enrollment_time: int
    campaign_id: Optional[str] = None
    age_band: Optional[str] = None
    gender: Optional[str] = None
    region: Optional[str] = None
    occupation: Optional[str] = None


@dataclass(frozen=True)
class MerchantRecord:
    id: int
    category: str = ""
    province: str = ""


@dataclass(frozen=True)
class P2BEvent:
    user: int
    merchant: int
    time: int
    amount: Decimal | float | str
    channel: Channel | str = Channel.OFFLINE


@dataclass(frozen=True)
class P2PEvent:
    src: int
    dst: int
    time: int
    amount: Decimal | float | str


@dataclass(frozen=True)
class InviteEdge:
    inviter: int
    invitee: int
    time: int


# ---------------------------------------------------------------- dataset


def _frame(rows, columns) -> pd.DataFrame:
    df = pd.DataFrame(rows, columns=columns)
    for col in columns:
        if col in _INT_COLUMNS:
            df[col] = df[col].astype(np.int64)
        else:
            df[col] = df[col].fillna("").astype(str).astype(object)
    return df.reset_index(drop=True)


@dataclass(eq=False)
class PaymentDataset:
    """Users, merchants and the three event tables.

    Missing optional string attributes are stored as empty strings.
    """

    users: pd.DataFrame = field(default_factory=lambda: _frame([], USER_COLUMNS))
    merchants: pd.DataFrame = field(default_factory=lambda: _frame([], MERCHANT_COLUMNS))
    p2b: pd.DataFrame = field(default_factory=lambda: _frame([], P2B_COLUMNS))
    p2p: pd.DataFrame = field(default_factory=lambda: _frame([], P2P_COLUMNS))
    invites: pd.DataFrame = field(default_factory=lambda: _frame([], INVITE_COLUMNS))

    def __post_init__(self):
        for name, cols in TABLE_COLUMNS.items():
            setattr(self, name, _frame(getattr(self, name)[cols], cols))

    @classmethod
    def from_records(
        cls,
        users: Iterable[UserRecord] = (),
        merchants: Iterable[MerchantRecord] = (),
        p2b: Iterable[P2BEvent] = (),
        p2p: Iterable[P2PEvent] = (),
        invites: Iterable[InviteEdge] = (),
    ) -> "PaymentDataset":
        return cls(
            users=_frame([(u.id, u.enrollment_time, u.campaign_id, u.age_band, u.gender,
                           u.region, u.occupation) for u in users], USER_COLUMNS),
            merchants=_frame([(m.id, m.category, m.province) for m in merchants],
                             MERCHANT_COLUMNS),
            p2b=_frame([(e.user, e.merchant, e.time, to_cents(e.amount), Channel(e.channel).value)
                        for e in p2b], P2B_COLUMNS),
            p2p=_frame([(e.src, e.dst, e.time, to_cents(e.amount)) for e in p2p], P2P_COLUMNS),
            invites=_frame([(e.inviter, e.invitee, e.time) for e in invites], INVITE_COLUMNS),
        )

    def canonical(self) -> "PaymentDataset":
        """Copy with every table sorted into canonical row order."""
        out = {}
        for name, keys in _SORT_KEYS.items():
            df = getattr(self, name)
            out[name] = df.sort_values(keys, kind="mergesort").reset_index(drop=True)
        return PaymentDataset(**out)

    def __eq__(self, other):
        if not isinstance(other, PaymentDataset):
            return NotImplemented
        a, b = self.canonical(), other.canonical()
        return all(getattr(a, n).equals(getattr(b, n)) for n in TABLE_COLUMNS)

    def event_times(self) -> np.ndarray:
        return np.concatenate([self.p2b["time"].to_numpy(), self.p2p["time"].to_numpy(),
                               self.invites["time"].to_numpy()]).astype(np.int64)

    def time_span(self) -> tuple[int, int]:
        """(earliest, latest) over enrollment and event timestamps."""
        times = np.concatenate([self.users["enrollment_time"].to_numpy(), self.event_times()])
        if times.size == 0:
            return (0, 0)
        return int(times.min()), int(times.max())

    def max_time(self) -> int:
        return self.time_span()[1]

    def __repr__(self):
        sizes = ", ".join(f"{n}={len(getattr(self, n))}" for n in TABLE_COLUMNS)
        return f"PaymentDataset({sizes})"


def restrict_to_window(dataset: PaymentDataset, cutoff: int) -> PaymentDataset:
    """Keep users enrolled and events that happened at or before ``cutoff``."""
    def keep(df, col):
        return df[df[col].to_numpy() <= cutoff]

    return PaymentDataset(
        users=keep(dataset.users, "enrollment_time"),
        merchants=dataset.merchants,
        p2b=keep(dataset.p2b, "time"),
        p2p=keep(dataset.p2p, "time"),
        invites=keep(dataset.invites, "time"),
    )


# ---------------------------------------------------------------- errors


class GraphError(ValueError):
    pass


class DanglingReference(GraphError):
    pass


class DuplicateAcceptance(GraphError):
    pass


class CycleDetected(GraphError):
    pass


# ---------------------------------------------------------------- graphs


def _gather(ptr: np.ndarray, idx: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    """Concatenate the CSR rows of ``nodes`` in order."""
    starts = ptr[nodes]
    counts = ptr[nodes + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    offsets = np.repeat(starts - np.concatenate(([0], np.cumsum(counts)[:-1])), counts)
    return idx[np.arange(total, dtype=np.int64) + offsets]


def _csr(n: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((dst, src))
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=ptr[1:])
    return ptr, dst[order].astype(np.int64)


class Digraph:
    """Directed graph over user ids with out-adjacency in CSR form.

    Rows are sorted by target index, so iterating a row visits out-neighbours in
    ascending id order. Duplicate edges are collapsed.
    """

    is_forest = False

    def __init__(self, ids, out_ptr, out_idx):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.out_ptr = np.asarray(out_ptr, dtype=np.int64)
        self.out_idx = np.asarray(out_idx, dtype=np.int64)

    @classmethod
    def from_edges(cls, ids, src_ids, dst_ids) -> "Digraph":
        ids = np.unique(np.asarray(ids, dtype=np.int64))
        src = _lookup(ids, src_ids, "edge source")
        dst = _lookup(ids, dst_ids, "edge target")
        if src.size:
            pairs = np.unique(np.stack([src, dst], axis=1), axis=0)
            src, dst = pairs[:, 0], pairs[:, 1]
        ptr, idx = _csr(ids.size, src, dst)
        return cls(ids, ptr, idx)

    @property
    def n_nodes(self) -> int:
        return int(self.ids.size)

    @property
    def n_edges(self) -> int:
        return int(self.out_idx.size)

    def out_degree(self) -> np.ndarray:
        return np.diff(self.out_ptr)

    def in_degree(self) -> np.ndarray:
        return np.bincount(self.out_idx, minlength=self.n_nodes)

    def index_of(self, user_ids) -> np.ndarray:
        return _lookup(self.ids, user_ids, "user")

    def successors(self, node: int) -> np.ndarray:
        return self.out_idx[self.out_ptr[node]:self.out_ptr[node + 1]]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """(src, dst) node-index arrays in CSR order."""
        return np.repeat(np.arange(self.n_nodes), self.out_degree()), self.out_idx

    def predecessors_csr(self) -> tuple[np.ndarray, np.ndarray]:
        src, dst = self.edges()
        return _csr(self.n_nodes, dst, src)

    def __repr__(self):
        return f"{type(self).__name__}(n_nodes={self.n_nodes}, n_edges={self.n_edges})"


class InvitationNetwork(Digraph):
    """The invitation forest: edges point from inviter to invitee.

    Besides the CSR adjacency it keeps ``parent`` (-1 for roots), ``depth``
    (distance from the component root) and ``order``, a root-first
    topological order of all nodes.
    """

    is_forest = True

    def __init__(self, ids, parent):
        ids = np.asarray(ids, dtype=np.int64)
        parent = np.asarray(parent, dtype=np.int64)
        n = ids.size
        child = np.flatnonzero(parent >= 0)
        ptr, idx = _csr(n, parent[child], child)
        super().__init__(ids, ptr, idx)
        self.parent = parent

        depth = np.full(n, -1, dtype=np.int64)
        frontier = np.flatnonzero(parent < 0)
        levels, d = [], 0
        while frontier.size:
            depth[frontier] = d
            levels.append(frontier)
            frontier = _gather(self.out_ptr, self.out_idx, frontier)
            d += 1
        if (depth < 0).any():
            bad = self.ids[np.flatnonzero(depth < 0)[0]]
            raise CycleDetected(f"user {bad} lies on an invitation cycle")
        self.depth = depth
        self.levels = levels
        self.order = np.concatenate(levels) if levels else np.empty(0, dtype=np.int64)

    @classmethod
    def from_parents(cls, ids, parent) -> "InvitationNetwork":
        return cls(ids, parent)

    @classmethod
    def from_invites(cls, user_ids, inviter_ids, invitee_ids) -> "InvitationNetwork":
        ids = np.unique(np.asarray(user_ids, dtype=np.int64))
        src = _lookup(ids, inviter_ids, "inviter")
        dst = _lookup(ids, invitee_ids, "invitee")
        if (src == dst).any():
            raise CycleDetected(f"user {ids[src[src == dst][0]]} invited itself")
        counts = np.bincount(dst, minlength=ids.size)
        if (counts > 1).any():
            bad = ids[np.flatnonzero(counts > 1)[0]]
            raise DuplicateAcceptance(f"user {bad} accepted more than one invitation")
        parent = np.full(ids.size, -1, dtype=np.int64)
        parent[dst] = src
        return cls(ids, parent)

    @property
    def max_depth(self) -> int:
        return int(self.depth.max()) if self.depth.size else 0

    def roots(self) -> np.ndarray:
        return np.flatnonzero(self.parent < 0)


def _lookup(ids: np.ndarray, values, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    pos = np.searchsorted(ids, values)
    pos_c = np.minimum(pos, max(ids.size - 1, 0))
    ok = (pos < ids.size) & (ids[pos_c] == values) if ids.size else np.zeros(values.shape, bool)
    if not ok.all():
        raise DanglingReference(f"unknown {what} id {values[~ok][0]}")
    return pos.astype(np.int64)


class EventIndex:
    """Row numbers of an event table grouped by node index (CSR)."""

    def __init__(self, n: int, node_of_row: np.ndarray):
        self.node_of_row = node_of_row
        self.order = np.argsort(node_of_row, kind="stable")
        self.ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(node_of_row, minlength=n), out=self.ptr[1:])

    def rows(self, node: int) -> np.ndarray:
        return self.order[self.ptr[node]:self.ptr[node + 1]]

    def counts(self) -> np.ndarray:
        return np.diff(self.ptr)


@dataclass(eq=False)
class PaymentGraph:
    """A dataset together with its invitation network and per-user event indexes."""

    dataset: PaymentDataset
    network: InvitationNetwork
    p2b: EventIndex
    p2p_sent: EventIndex
    p2p_received: EventIndex
    invites_sent: EventIndex
    invites_accepted: EventIndex
    merchant_ids: np.ndarray

    @property
    def user_ids(self) -> np.ndarray:
        return self.network.ids


def build_graph(dataset: PaymentDataset) -> PaymentGraph:
    """Index a dataset and extract its invitation forest.

    Raises DanglingReference, DuplicateAcceptance or CycleDetected.
    """
    user_ids = dataset.users["id"].to_numpy()
    ids = np.unique(user_ids)
    if ids.size != user_ids.size:
        raise GraphError("duplicate user id")
    merchant_ids = np.unique(dataset.merchants["id"].to_numpy())
    network = InvitationNetwork.from_invites(
        ids, dataset.invites["inviter_id"].to_numpy(), dataset.invites["invitee_id"].to_numpy()
    )
    n = ids.size
    p2b_user = _lookup(ids, dataset.p2b["user_id"].to_numpy(), "P2B user")
    _lookup(merchant_ids, dataset.p2b["merchant_id"].to_numpy(), "merchant")
    inv = dataset.invites
    return PaymentGraph(
        dataset=dataset,
        network=network,
        p2b=EventIndex(n, p2b_user),
        p2p_sent=EventIndex(n, _lookup(ids, dataset.p2p["src_id"].to_numpy(), "P2P sender")),
        p2p_received=EventIndex(n, _lookup(ids, dataset.p2p["dst_id"].to_numpy(), "P2P receiver")),
        invites_sent=EventIndex(n, _lookup(ids, inv["inviter_id"].to_numpy(), "inviter")),
        invites_accepted=EventIndex(n, _lookup(ids, inv["invitee_id"].to_numpy(), "invitee")),
        merchant_ids=merchant_ids,
    )


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class Violation:
    rule: str
    table: str
    record: str
    message: str

    def __str__(self):
        return f"{self.rule}: {self.table} {self.record}: {self.message}"


def _violations(rule, table, mask, df, fmt) -> list[Violation]:
    rows = np.flatnonzero(np.asarray(mask))
    return [Violation(rule, table, f"row {int(i)}", fmt(df.iloc[int(i)])) for i in rows]


def validate(dataset: PaymentDataset) -> list[Violation]:
    """Check every per-record and referential invariant; empty list means valid."""
    out: list[Violation] = []
    users, merchants = dataset.users, dataset.merchants
    p2b, p2p, invites = dataset.p2b, dataset.p2p, dataset.invites

    uid = users["id"].to_numpy()
    mid = merchants["id"].to_numpy()
    out += _violations("DuplicateUserId", "users", pd.Series(uid).duplicated().to_numpy(), users,
                       lambda r: f"user id {r['id']} appears more than once")
    out += _violations("DuplicateMerchantId", "merchants",
                       pd.Series(mid).duplicated().to_numpy(), merchants,
                       lambda r: f"merchant id {r['id']} appears more than once")
    out += _violations("NegativeId", "users", uid < 0, users, lambda r: f"id {r['id']} < 0")
    out += _violations("NegativeId", "merchants", mid < 0, merchants,
                       lambda r: f"id {r['id']} < 0")

    enroll = pd.Series(users["enrollment_time"].to_numpy(), index=uid)
    enroll = enroll[~enroll.index.duplicated()]

    def known(col):
        return np.isin(col, uid)

    def enrolled_by(ids, times):
        e = enroll.reindex(ids).to_numpy()
        return ~(np.nan_to_num(e, nan=-np.inf) > times)

    # P2B
    u, m, t = p2b["user_id"].to_numpy(), p2b["merchant_id"].to_numpy(), p2b["time"].to_numpy()
    out += _violations("NegativeAmount", "p2b", p2b["amount"].to_numpy() < 0, p2b,
                       lambda r: f"amount {format_cents(r['amount'])} < 0")
    out += _violations("DanglingReference", "p2b", ~known(u), p2b,
                       lambda r: f"unknown user {r['user_id']}")
    out += _violations("DanglingReference", "p2b",
                       ~np.isin(m, mid), p2b,
                       lambda r: f"unknown merchant {r['merchant_id']}")
    out += _violations("InvalidChannel", "p2b",
                       ~p2b["channel"].isin([c.value for c in Channel]).to_numpy(), p2b,
                       lambda r: f"channel {r['channel']!r} is not online/offline")
    out += _violations("EventBeforeEnrollment", "p2b", ~enrolled_by(u, t), p2b,
                       lambda r: f"user {r['user_id']} transacts before enrolling")

    # P2P
    s, d, t = p2p["src_id"].to_numpy(), p2p["dst_id"].to_numpy(), p2p["time"].to_numpy()
    out += _violations("NegativeAmount", "p2p", p2p["amount"].to_numpy() < 0, p2p,
                       lambda r: f"amount {format_cents(r['amount'])} < 0")
    out += _violations("SelfTransfer", "p2p", s == d, p2p,
                       lambda r: f"user {r['src_id']} transfers to itself")
    out += _violations("DanglingReference", "p2p", ~known(s), p2p,
                       lambda r: f"unknown sender {r['src_id']}")
    out += _violations("DanglingReference", "p2p", ~known(d), p2p,
                       lambda r: f"unknown receiver {r['dst_id']}")
    out += _violations("EventBeforeEnrollment", "p2p", ~(enrolled_by(s, t) & enrolled_by(d, t)),
                       p2p, lambda r: f"transfer {r['src_id']}->{r['dst_id']} precedes enrollment")

    # invites
    a, b, t = invites["inviter_id"].to_numpy(), invites["invitee_id"].to_numpy(), \
        invites["time"].to_numpy()
    self_inv = a == b
    out += _violations("SelfInvite", "invites", self_inv, invites,
                       lambda r: f"user {r['inviter_id']} invites itself")
    out += _violations("DanglingReference", "invites", ~known(a), invites,
                       lambda r: f"unknown inviter {r['inviter_id']}")
    out += _violations("DanglingReference", "invites", ~known(b), invites,
                       lambda r: f"unknown invitee {r['invitee_id']}")
    dup = pd.Series(b).duplicated().to_numpy()
    out += _violations("DuplicateAcceptance", "invites", dup, invites,
                       lambda r: f"user {r['invitee_id']} already accepted an invitation")
    out += _violations("EventBeforeEnrollment", "invites",
                       ~(enrolled_by(a, t) & enrolled_by(b, t)), invites,
                       lambda r: f"invite {r['inviter_id']}->{r['invitee_id']} precedes enrollment")

    # cycles among the well-formed edges only; other rules already cover the rest
    ok = known(a) & known(b) & ~dup & ~self_inv
    if ok.any():
        ids = np.unique(uid)
        try:
            InvitationNetwork.from_invites(ids, a[ok], b[ok])
        except CycleDetected as exc:
            out.append(Violation("CycleDetected", "invites", "-", str(exc)))
    return out
