import json
from collections import Counter
from fractions import Fraction
from math import comb
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cachecast.converse import block_instance, check_feasible
from cachecast.errors import NonIntegerPartition, SizeMismatch
from cachecast.model import DemandVector, SystemConfig, UserSet, validate_config
from cachecast.placement import needed_pieces, place_receiver_caches
from cachecast.scheduler import (
    ReplicaCounter,
    build_xor,
    delivery_metrics,
    schedule,
    schedule_json,
    verify_exactly_once,
)

FIXTURES = Path(__file__).parent / "fixtures"


def vc_of(K, L, t, **kw):
    return validate_config(SystemConfig.from_t(K, L, t, **kw))


def load_fixture(name):
    return json.loads((FIXTURES / name).read_text())


def part_key(p, with_r=True):
    key = (p["n"], tuple(p["tau"]), tuple(p["sigma"]))
    return key + (p["r"],) if with_r else key


def ours(blocks):
    return [{"lambda": list(b.lam), "pi": list(b.pi), "s": b.s,
             "xors": [[{"n": p.n, "tau": list(p.tau), "sigma": list(p.sigma), "r": p.r}
                       for p in x.parts] for x in b.xors]} for b in blocks]


def test_extended_example_matches_exactly():
    """Every block and XOR, in order, including replica indices and shift labels."""
    fx = load_fixture("example_k6_l2_t4.json")
    got = ours(schedule(vc_of(6, 2, 4), DemandVector(tuple(fx["demand"]))))
    assert len(got) == len(fx["blocks"]) == 30
    for mine, ref in zip(got, fx["blocks"]):
        assert mine["lambda"] == ref["lambda"] and mine["pi"] == ref["pi"]
        assert mine["s"] + 1 == ref["label"]
        # XOR is commutative: parts inside one XOR compare as a set
        assert [{part_key(p) for p in x} for x in mine["xors"]] == \
               [{part_key(p) for p in x} for x in ref["xors"]]


def test_small_example_matches_up_to_labels():
    """The published listing orders shifts and replicas differently, so
    compare per (lambda, pi) the set of XOR part-sets without r."""
    fx = load_fixture("example_k4_l2_t2.json")

    def keyed(blocks):
        out = Counter()
        for b in blocks:
            xs = frozenset(frozenset(part_key(p, with_r=False) for p in x) for x in b["xors"])
            out[(tuple(b["lambda"]), tuple(b["pi"]), xs)] += 1
        return out

    got = ours(schedule(vc_of(4, 2, 2), DemandVector(tuple(fx["demand"]))))
    assert keyed(got) == keyed(fx["blocks"])


def test_single_transmission_example():
    b = schedule(vc_of(4, 2, 2), DemandVector.identity(4))[0]
    assert (b.lam, b.pi, b.s) == ((1, 2), (3, 4), 0)
    assert [[(p.n, p.tau) for p in x.parts] for x in b.xors] == [
        [(1, (3, 4)), (3, (1, 4))],
        [(2, (3, 4)), (4, (2, 3))],
    ]


def test_build_xor_three_recipients():
    x = build_xor((1, 2, 3), (4, 5), (6,), DemandVector.identity(6), ReplicaCounter(), t=4, L=2)
    assert [(p.n, p.tau, p.sigma) for p in x.parts] == [
        (1, (2, 3, 4, 5), (6,)), (2, (1, 3, 4, 5), (6,)), (3, (1, 2, 4, 5), (6,))]


def test_build_xor_protected_user_caches_all():
    x = build_xor((1, 3), (4,), (2,), DemandVector.identity(4), ReplicaCounter(), t=2, L=2)
    assert len(x.parts) == 2
    assert all(4 in p.tau for p in x.parts)


@pytest.mark.parametrize("mu, nu, sigma", [((1, 2), (4, 5), (6,)), ((1, 2, 3), (4,), (6,)),
                                           ((1, 2, 3), (3, 5), (6,))])
def test_build_xor_size_mismatch(mu, nu, sigma):
    with pytest.raises(SizeMismatch):
        build_xor(mu, nu, sigma, DemandVector.identity(6), ReplicaCounter(), t=4, L=2)


@pytest.mark.parametrize("K, L, t, blocks", [(4, 2, 2, 12), (6, 2, 4, 30), (4, 2, 0, 12)])
def test_block_counts(K, L, t, blocks):
    bs = schedule(vc_of(K, L, t), DemandVector.identity(K))
    assert len(bs) == blocks == comb(K, L) * comb(K - L, t) * L
    keys = [(b.lam, b.pi, b.s) for b in bs]
    assert keys == sorted(keys)
    if t == 0:
        assert all(len(x.parts) == 1 for b in bs for x in b.xors)


def test_non_integer_partition_rejected():
    with pytest.raises(NonIntegerPartition):
        schedule(vc_of(6, 2, 3), DemandVector.identity(6))


@pytest.mark.parametrize("K, L, t", [(4, 2, 2), (6, 2, 4), (6, 3, 3), (5, 1, 2), (6, 2, 2)])
def test_exactly_once(K, L, t):
    vc = vc_of(K, L, t)
    d = DemandVector.identity(K)
    rep = verify_exactly_once(schedule(vc, d), d, vc)
    assert rep.ok, rep.summary()
    assert set(rep.triple_counts.values()) == {L + t}
    assert sum(rep.triple_counts.values()) == len(needed_pieces(vc, d))


def test_deleted_block_is_flagged():
    vc = vc_of(4, 2, 2)
    d = DemandVector.identity(4)
    blocks = schedule(vc, d)
    rep = verify_exactly_once(blocks[1:], d, vc)
    assert len(rep.missing) == vc.L + vc.t
    assert not rep.ok


def test_duplicated_block_is_flagged():
    vc = vc_of(4, 2, 2)
    d = DemandVector.identity(4)
    blocks = schedule(vc, d)
    rep = verify_exactly_once(blocks + blocks[:1], d, vc)
    assert len(rep.duplicated) == 4 and not rep.ok


@pytest.mark.parametrize("K, L, t, T, dof", [(4, 2, 2, Fraction(1, 2), 4), (6, 2, 4, Fraction(1, 3), 6)])
def test_metrics(K, L, t, T, dof):
    m = delivery_metrics(vc_of(K, L, t))
    assert (m.T, m.dof, m.feedback_cost) == (T, dof, L)


def test_metrics_limited_feedback():
    m = delivery_metrics(vc_of(4, 2, 2, C=1))
    assert m.dof == 3 and m.feedback_cost == 1


def test_metric_identity_exhaustive():
    for K in range(1, 13):
        for L in range(1, K + 1):
            for t in range(0, K - L + 1, L):
                m = delivery_metrics(vc_of(K, L, t))
                assert m.T == Fraction(K - t, L + t)
                assert m.dof == L + t


@pytest.mark.parametrize("K, L, t", [(4, 2, 2), (6, 3, 3), (6, 2, 2), (5, 1, 1)])
def test_block_structure(K, L, t):
    vc = vc_of(K, L, t)
    d = DemandVector.identity(K)
    caches = {c.user: c for c in place_receiver_caches(vc)}
    by_pair: dict = {}
    for b in schedule(vc, d):
        assert b.lam.isdisjoint(b.pi) and len(b.active) == L + t
        assert b.feedback_cost == L
        for ell, x in enumerate(b.xors):
            assert b.lam[ell] in x.mu
            assert x.sigma == b.lam - (b.lam[ell],)
            assert all(caches[u].holds(p.n, p.tau) for u in x.nu for p in x.parts)
            for k, p in zip(x.mu, x.parts):
                assert p.n == d.file(k) and k not in p.tau and k not in p.sigma
        # each active user receives exactly one desired piece
        receivers = [k for x in b.xors for k in x.mu]
        assert sorted(receivers) == list(b.active)
        assert check_feasible(block_instance(b, vc))
        by_pair.setdefault((b.lam, b.pi), []).append(b)
    for (lam, pi), bs in by_pair.items():
        pairs = {(head, frozenset(x.mu) - {head})
                 for b in bs for head, x in zip(b.lam, b.xors)}
        assert len(pairs) == L * L  # every lambda user meets every chunk once


@settings(max_examples=25, deadline=None)
@given(st.permutations(list(range(1, 7))))
def test_demand_relabeling_equivariance(perm):
    vc = vc_of(6, 2, 2)
    base = schedule(vc, DemandVector.identity(6))
    other = schedule(vc, DemandVector(tuple(perm)))
    for a, b in zip(base, other):
        for xa, xb in zip(a.xors, b.xors):
            assert [(perm[p.n - 1], p.tau, p.sigma, p.r) for p in xa.parts] == \
                   [(p.n, p.tau, p.sigma, p.r) for p in xb.parts]


def test_schedule_json_field_order():
    blocks = schedule(vc_of(4, 2, 2), DemandVector.identity(4))
    doc = json.loads(schedule_json(blocks))
    assert list(doc[0]) == ["lambda", "pi", "s", "xors"]
    assert list(doc[0]["xors"][0][0]) == ["n", "tau", "sigma", "r"]
    assert schedule_json(blocks) == schedule_json(schedule(vc_of(4, 2, 2), DemandVector.identity(4)))
