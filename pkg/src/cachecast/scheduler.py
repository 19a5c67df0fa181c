"""Delivery schedule construction: XOR design, transmission blocks,
replica bookkeeping and the exactly-once / counting checks."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

from .errors import SizeMismatch
from .model import (
    DeliverySubfileId,
    DemandVector,
    UserSet,
    ValidatedConfig,
    enumerate_subsets,
    full_set,
)
from .placement import needed_pieces, subpacketization


class ReplicaCounter:
    """Hands out replica indices 1, 2, ... per (sigma, tau, k) triple."""

    def __init__(self):
        self._next: Counter = Counter()

    def next(self, sigma, tau, k) -> int:
        key = (sigma, tau, k)
        self._next[key] += 1
        return self._next[key]

    def counts(self) -> dict:
        return dict(self._next)


@dataclass(frozen=True)
class XorMessage:
    parts: tuple  # DeliverySubfileId, one per member of mu, same order as mu
    mu: UserSet
    nu: UserSet
    sigma: UserSet

    def recipient_of(self, part: DeliverySubfileId) -> int:
        return self.mu[self.parts.index(part)]

    def part_for(self, k: int) -> DeliverySubfileId:
        return self.parts[self.mu.index(k)]


@dataclass(frozen=True)
class TransmissionBlock:
    lam: UserSet
    pi: UserSet
    s: int
    xors: tuple
    phi: tuple

    @property
    def active(self) -> UserSet:
        return self.lam | self.pi

    @property
    def L(self) -> int:
        return len(self.lam)

    @property
    def feedback_cost(self) -> int:
        # CSIT is needed only from the precoded users
        return len(self.lam)

    def xor_index_for(self, k: int) -> int:
        for i, x in enumerate(self.xors):
            if k in x.mu:
                return i
        raise KeyError(f"user {k} receives nothing in this block")

    def desired_part(self, k: int) -> DeliverySubfileId:
        return self.xors[self.xor_index_for(k)].part_for(k)


def build_xor(mu, nu, sigma, demand: DemandVector, counter: ReplicaCounter, *, t: int, L: int) -> XorMessage:
    """One XOR for recipients ``mu``, fully cached by ``nu``, tagged ``sigma``.

    The part for k in mu is the piece of file d_k cached at (nu | mu) - {k}.
    """
    mu, nu, sigma = UserSet.of(mu), UserSet.of(nu), UserSet.of(sigma)
    if len(mu) != t // L + 1 or len(nu) != t * (L - 1) // L or len(sigma) != L - 1 or t % L:
        raise SizeMismatch(f"|mu|={len(mu)}, |nu|={len(nu)}, |sigma|={len(sigma)} for t={t}, L={L}")
    if not (mu.isdisjoint(nu) and mu.isdisjoint(sigma) and nu.isdisjoint(sigma)):
        raise SizeMismatch("mu, nu and sigma must be pairwise disjoint")
    pool = nu | mu
    parts = []
    for k in mu:
        tau = pool - (k,)
        parts.append(DeliverySubfileId(demand.file(k), tau, sigma, counter.next(sigma, tau, k)))
    return XorMessage(tuple(parts), mu, nu, sigma)


def partition_pi(pi: UserSet, L: int) -> tuple:
    size = len(pi) // L
    return tuple(UserSet(pi[i * size:(i + 1) * size]) for i in range(L))


def schedule(vc: ValidatedConfig, demand: DemandVector) -> list[TransmissionBlock]:
    """All transmission blocks in lexicographic (lambda, pi, s) order."""
    vc.require_schedulable()
    K, L, t = vc.K, vc.L_eff, vc.t
    counter = ReplicaCounter()
    users = full_set(K)
    blocks = []
    for lam in enumerate_subsets(users, L):
        for pi in enumerate_subsets(users - lam, t):
            phi = partition_pi(pi, L)
            for s in range(L):
                xors = []
                for ell in range(1, L + 1):
                    chunk = phi[(s + ell - 1) % L]
                    head = lam[ell - 1]
                    xors.append(build_xor((head,) + chunk, pi - chunk, lam - (head,),
                                          demand, counter, t=t, L=L))
                blocks.append(TransmissionBlock(lam, pi, s, tuple(xors), phi))
    return blocks


@dataclass
class UniquenessReport:
    missing: list = field(default_factory=list)
    duplicated: list = field(default_factory=list)
    unexpected: list = field(default_factory=list)
    triple_violations: dict = field(default_factory=dict)
    triple_counts: Counter = field(default_factory=Counter)

    @property
    def ok(self) -> bool:
        return not (self.missing or self.duplicated or self.unexpected or self.triple_violations)

    def summary(self) -> dict:
        return {
            "ok": self.ok,
            "missing": len(self.missing),
            "duplicated": len(self.duplicated),
            "unexpected": len(self.unexpected),
            "triple_violations": len(self.triple_violations),
        }


def verify_exactly_once(blocks, demand: DemandVector, vc: ValidatedConfig) -> UniquenessReport:
    """Check every needed piece is sent once and every (sigma, tau, k) triple L+t times."""
    needed = needed_pieces(vc, demand)
    seen = Counter()
    triples = Counter()
    for b in blocks:
        for x in b.xors:
            for k, part in zip(x.mu, x.parts):
                seen[part] += 1
                triples[(part.sigma, part.tau, k)] += 1
    need_set = set(needed)
    rep = UniquenessReport(triple_counts=triples)
    rep.missing = [p for p in needed if seen[p] == 0]
    rep.duplicated = [p for p, c in seen.items() if c > 1]
    rep.unexpected = [p for p in seen if p not in need_set]
    want = vc.L_eff + vc.t
    expected_triples = {(p.sigma, p.tau, demand.user_of(p.n)) for p in needed}
    for tr in expected_triples | set(triples):
        if triples[tr] != want:
            rep.triple_violations[tr] = triples[tr]
    return rep


@dataclass(frozen=True)
class DeliveryMetrics:
    subpacketization: int
    block_count: int
    T: Fraction
    dof: Fraction
    feedback_cost: int

    def to_dict(self) -> dict:
        return {"subpacketization": self.subpacketization, "block_count": self.block_count,
                "T": str(self.T), "DoF": str(self.dof), "feedback_cost": self.feedback_cost}


def delivery_metrics(vc: ValidatedConfig) -> DeliveryMetrics:
    vc.require_schedulable()
    K, L, t = vc.K, vc.L_eff, vc.t
    S = subpacketization(vc)
    blocks = comb(K, L) * comb(K - L, t) * L
    T = Fraction(blocks, S)
    dof = Fraction(K - t) / T
    return DeliveryMetrics(S, blocks, T, dof, min(vc.L, vc.C))


def block_to_dict(b: TransmissionBlock) -> dict:
    return {
        "lambda": list(b.lam),
        "pi": list(b.pi),
        "s": b.s,
        "xors": [[{"n": p.n, "tau": list(p.tau), "sigma": list(p.sigma), "r": p.r}
                  for p in x.parts] for x in b.xors],
    }


def schedule_json(blocks) -> str:
    return json.dumps([block_to_dict(b) for b in blocks], indent=1)
