"""Reproducible synthetic payment datasets with heavy-tailed invitation cascades.

Users enroll over the horizon at a linearly growing rate. Each user draws a
number of invitations it will send (a geometric count for most users, a
truncated power law for a small share of spreaders, a fixed large count for
the very first user) and each invitation is
accepted independently. Accepted invitations become open slots; a newly
enrolling user takes a uniformly random open slot if there is one, otherwise
it joins organically as a root and is tagged with a marketing campaign.
Since every user takes at most one slot from an earlier user, the invitation
graph is a forest by construction.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np
import pandas as pd

from .graph_model import Channel, InvitationNetwork, PaymentDataset
from .intrinsic import MONTH_SECONDS, WEEK_SECONDS

AGE_BANDS = ["18-24", "25-34", "35-44", "45-54", "55-64", "65+"]
GENDERS = ["F", "M", "X"]
REGIONS = ["Lombardia", "Lazio", "Campania", "Sicilia", "Veneto", "Emilia-Romagna", "Piemonte",
           "Puglia", "Toscana", "Calabria", "Sardegna", "Liguria", "Marche", "Abruzzo",
           "Friuli-Venezia Giulia", "Trentino-Alto Adige/Südtirol", "Umbria", "Basilicata",
           "Molise", "Valle d'Aosta/Vallée d'Aoste"]
OCCUPATIONS = ["student", "employee", "self-employed", "unemployed", "retired", "other"]
CATEGORIES = ["grocery", "restaurant", "fuel", "fashion", "electronics", "travel", "health",
              "entertainment", "services", "e-commerce"]
PROVINCES = ["MI", "RM", "NA", "TO", "PA", "BA", "BO", "FI", "GE", "VE", "CA", "BZ", "AO"]


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 7
    n_users: int = 100_000
    n_merchants: int = 2_000
    months: int = 36
    start: str = "2019-01-01T00:00:00Z"
    # invitations
    invite_accept_prob: float = 0.5
    mean_invites_sent: float = 0.8
    spreader_fraction: float = 0.002
    fanout_tail_exponent: float = 1.6
    fanout_min: int = 20
    fanout_max: int = 5_000
    # invitations sent by the first enrolled user, as a share of n_users
    launch_fanout_share: float = 0.2
    # spending
    spend_mu: float = 3.0
    spend_sigma: float = 1.1
    txn_rate_per_week: float = 0.25
    activity_sigma: float = 1.0
    inactive_share: float = 0.35
    mean_lifetime_months: float = 14.0
    online_share: float = 0.3
    # transfers
    p2p_rate_per_week: float = 0.08
    campaign_count: int = 63

    def __post_init__(self):
        for name in ("invite_accept_prob", "spreader_fraction", "online_share", "inactive_share"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        for name in ("n_users", "n_merchants", "months", "campaign_count", "fanout_min"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.fanout_max < self.fanout_min:
            raise ValueError("fanout_max must be >= fanout_min")
        for name in ("spend_sigma", "activity_sigma", "mean_lifetime_months"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("txn_rate_per_week", "p2p_rate_per_week", "mean_invites_sent"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.launch_fanout_share < 0:
            raise ValueError("launch_fanout_share must be non-negative")
        if self.fanout_tail_exponent <= 1:
            raise ValueError("fanout_tail_exponent must exceed 1")

    @property
    def start_seconds(self) -> int:
        return int(np.datetime64(self.start.rstrip("Z"), "s").astype(np.int64))

    @property
    def end_seconds(self) -> int:
        return self.start_seconds + int(self.months * MONTH_SECONDS)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return asdict(self)


def _truncated_power_law(rng, size, exponent, lo, hi) -> np.ndarray:
    # inverse CDF of p(k) ~ k**-exponent on [lo, hi + 1)
    u = rng.random(size)
    e = 1.0 - exponent
    a, b = lo ** e, (hi + 1.0) ** e
    return np.floor((a + u * (b - a)) ** (1.0 / e)).astype(np.int64).clip(lo, hi)


def _enrollment_offsets(rng, cfg: SynthConfig) -> np.ndarray:
    horizon = int(cfg.months * MONTH_SECONDS)
    # linearly increasing arrival rate
    return np.sort(np.floor(horizon * np.sqrt(rng.random(cfg.n_users))).astype(np.int64))


def _accepted_invitations(rng, cfg: SynthConfig) -> np.ndarray:
    n = cfg.n_users
    p = 1.0 / (1.0 + cfg.mean_invites_sent)
    sent = rng.geometric(p, size=n) - 1
    spreader = rng.random(n) < cfg.spreader_fraction
    heavy = _truncated_power_law(rng, n, cfg.fanout_tail_exponent, cfg.fanout_min,
                                 cfg.fanout_max)
    sent = np.where(spreader, heavy, sent)
    sent[0] = round(cfg.launch_fanout_share * n)
    return rng.binomial(sent, cfg.invite_accept_prob)


def _assign_parents(rng, accepted: np.ndarray) -> np.ndarray:
    n = accepted.size
    parent = np.full(n, -1, dtype=np.int64)
    u = rng.random(n)
    pool: list[int] = []
    acc = accepted.tolist()
    for j in range(n):
        if pool:
            r = int(u[j] * len(pool))
            parent[j] = pool[r]
            pool[r] = pool[-1]
            pool.pop()
        if acc[j]:
            pool.extend([j] * acc[j])
    return parent


def generate_forest(cfg: SynthConfig) -> InvitationNetwork:
    """Only the invitation forest of ``generate(cfg)``, with ids 1..n."""
    rng = np.random.default_rng(cfg.seed)
    _enrollment_offsets(rng, cfg)
    parent = _assign_parents(rng, _accepted_invitations(rng, cfg))
    return InvitationNetwork.from_parents(np.arange(1, cfg.n_users + 1), parent)


def generate(cfg: SynthConfig = SynthConfig()) -> PaymentDataset:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_users
    start, end = cfg.start_seconds, cfg.end_seconds
    ids = np.arange(1, n + 1, dtype=np.int64)

    enroll = start + _enrollment_offsets(rng, cfg)
    parent = _assign_parents(rng, _accepted_invitations(rng, cfg))

    is_root = parent < 0
    campaign = np.where(is_root, rng.integers(1, cfg.campaign_count + 1, size=n), 0)
    campaign_id = np.where(campaign > 0,
                           np.char.add("C", np.char.zfill(campaign.astype(str), 3)), "")
    users = pd.DataFrame({
        "id": ids,
        "enrollment_time": enroll,
        "campaign_id": campaign_id,
        "age_band": np.asarray(AGE_BANDS)[rng.integers(0, len(AGE_BANDS), n)],
        "gender": np.asarray(GENDERS)[rng.integers(0, len(GENDERS), n)],
        "region": np.asarray(REGIONS, dtype=object)[rng.integers(0, len(REGIONS), n)],
        "occupation": np.asarray(OCCUPATIONS)[rng.integers(0, len(OCCUPATIONS), n)],
    })

    m = cfg.n_merchants
    merchants = pd.DataFrame({
        "id": np.arange(1, m + 1, dtype=np.int64),
        "category": np.asarray(CATEGORIES)[rng.integers(0, len(CATEGORIES), m)],
        "province": np.asarray(PROVINCES)[rng.integers(0, len(PROVINCES), m)],
    })

    child = np.flatnonzero(~is_root)
    invites = pd.DataFrame({"inviter_id": ids[parent[child]], "invitee_id": ids[child],
                            "time": enroll[child]})

    # activity span: enrollment until churn or the end of the horizon
    lifetime = rng.exponential(cfg.mean_lifetime_months * MONTH_SECONDS, n)
    stop = np.minimum(enroll + lifetime.astype(np.int64), end)
    weeks = (stop - enroll) / WEEK_SECONDS
    mult = rng.lognormal(-cfg.activity_sigma ** 2 / 2, cfg.activity_sigma, n)
    active = rng.random(n) >= cfg.inactive_share

    n_p2b = np.where(active, rng.poisson(cfg.txn_rate_per_week * mult * weeks), 0)
    who = np.repeat(np.arange(n), n_p2b)
    t = enroll[who] + np.floor(rng.random(who.size) * (stop[who] - enroll[who] + 1)).astype(
        np.int64)
    amount = np.maximum(1, np.round(rng.lognormal(cfg.spend_mu, cfg.spend_sigma, who.size)
                                    * 100)).astype(np.int64)
    merchant = (np.floor(m * rng.random(who.size) ** 2)).astype(np.int64) + 1
    channel = np.where(rng.random(who.size) < cfg.online_share, Channel.ONLINE.value,
                       Channel.OFFLINE.value)
    p2b = pd.DataFrame({"user_id": ids[who], "merchant_id": merchant, "time": t,
                        "amount": amount, "channel": channel})

    p2p_mult = rng.lognormal(-cfg.activity_sigma ** 2 / 2, cfg.activity_sigma, n)
    n_p2p = rng.poisson(cfg.p2p_rate_per_week * p2p_mult * weeks)
    src = np.repeat(np.arange(n), n_p2p)
    t = enroll[src] + np.floor(rng.random(src.size) * (stop[src] - enroll[src] + 1)).astype(
        np.int64)
    # counterpart: any other user already enrolled at time t
    k = np.searchsorted(enroll, t, side="right")
    dst = np.floor(rng.random(src.size) * (k - 1)).astype(np.int64)
    dst = np.where(dst >= src, dst + 1, dst)
    keep = k > 1
    amount = np.maximum(1, np.round(rng.lognormal(cfg.spend_mu, cfg.spend_sigma, src.size)
                                    * 100)).astype(np.int64)
    p2p = pd.DataFrame({"src_id": ids[src[keep]], "dst_id": ids[dst[keep]], "time": t[keep],
                        "amount": amount[keep]})

    return PaymentDataset(users=users, merchants=merchants, p2b=p2b, p2p=p2p, invites=invites)

