import json
from collections import Counter
from fractions import Fraction
from math import comb

import numpy as np
import pytest

from cachecast.errors import ConfigError, DecodeFailure, NonIntegerTxCache
from cachecast.model import CacheSubfileId, DemandVector, SystemConfig, UserSet, validate_config
from cachecast.placement import (
    Library,
    delivery_split,
    needed_pieces,
    place_receiver_caches,
    place_transmitter_caches,
    placement_dump,
    split_file,
    subpacketization,
)

from oracles import brute_force_pieces


def vc_of(K, L, t, **kw):
    return validate_config(SystemConfig.from_t(K, L, t, **kw))


@pytest.mark.parametrize("K, t, count", [(4, 2, 6), (6, 4, 15), (4, 0, 1)])
def test_split_file_counts(K, t, count):
    subs = split_file(1, vc_of(K, 1, t))
    assert len(subs) == count
    assert all(len(s.tau) == t for s in subs)


def test_receiver_cache_user_one():
    caches = place_receiver_caches(vc_of(4, 2, 2))
    assert sorted(s.tau for s in caches[0].contents if s.n == 1) == [(1, 2), (1, 3), (1, 4)]


@pytest.mark.parametrize("K, t", [(4, 2), (6, 4), (5, 0), (7, 3)])
def test_cache_fraction_and_replication(K, t):
    vc = vc_of(K, 1, t)
    caches = place_receiver_caches(vc)
    holders = Counter()
    for c in caches:
        assert all(c.user in s.tau for s in c.contents)
        per_file = Counter(s.n for s in c.contents)
        for n in range(1, vc.N + 1):
            assert Fraction(per_file[n], comb(K, t)) == Fraction(t, K)
        holders.update(c.contents)
    assert set(holders.values()) <= {t}


def test_zero_cache_is_empty():
    assert all(not c.contents for c in place_receiver_caches(vc_of(4, 2, 0)))


def multi(K_T, gamma_T, N, K=4):
    return validate_config(SystemConfig(K=K, N=N, mode="multi-tx", K_T=K_T, L_T=1,
                                        gamma_T=gamma_T, gamma=Fraction(2, K)))


def test_tx_full_replication():
    caches = place_transmitter_caches(multi(2, 1, 4))
    assert [sorted(c.files) for c in caches] == [[1, 2, 3, 4]] * 2


def test_tx_cyclic_wrap():
    caches = place_transmitter_caches(multi(3, Fraction(2, 3), 3, K=3))
    assert [sorted(c.files) for c in caches] == [[1, 2], [1, 3], [2, 3]]
    counts = Counter(n for c in caches for n in c.files)
    assert set(counts.values()) == {2}


def test_tx_disjoint_halves():
    caches = place_transmitter_caches(multi(2, Fraction(1, 2), 4))
    assert [sorted(c.files) for c in caches] == [[1, 2], [3, 4]]


def test_tx_non_integer_files():
    with pytest.raises(NonIntegerTxCache):
        place_transmitter_caches(multi(2, Fraction(1, 2), 5))


@pytest.mark.parametrize("K, L, t, per_file", [(4, 2, 2, 24), (6, 2, 4, 90), (5, 1, 2, 30)])
def test_subpacketization(K, L, t, per_file):
    vc = vc_of(K, L, t)
    assert subpacketization(vc) == per_file
    sub = CacheSubfileId(1, UserSet(range(2, t + 2)))
    pieces = delivery_split(sub, 1, vc)
    assert len(pieces) == comb(K - t - 1, L - 1) * (L + t)
    if L == 1:
        assert {p.sigma for p in pieces} == {()}


@pytest.mark.parametrize("K, L, t", [(3, 1, 1), (4, 2, 2), (5, 2, 2), (6, 2, 4), (6, 3, 3)])
def test_split_union_matches_brute_force(K, L, t):
    vc = vc_of(K, L, t)
    for k in range(1, K + 1):
        got = [(frozenset(p.tau), frozenset(p.sigma), p.r)
               for sub in split_file(k, vc) if k not in sub.tau
               for p in delivery_split(sub, k, vc)]
        assert len(got) == len(set(got))
        assert set(got) == brute_force_pieces(K, L, t, k)


def test_split_rejects_cached_subfile():
    with pytest.raises(ValueError):
        delivery_split(CacheSubfileId(1, UserSet((1, 2))), 1, vc_of(4, 2, 2))


def test_library_layout_partitions_file():
    vc = vc_of(4, 2, 2)
    demand = DemandVector.identity(4)
    lib = Library(vc, demand, piece_bytes=4, seed=3)
    assert lib.file_size == 24 * 4
    for k in range(1, 5):
        offs = sorted(lib.piece_offset(p) for p in needed_pieces(vc, demand) if p.n == k)
        cached = sorted(lib.subfile_offset(s.tau) for s in split_file(k, vc) if k in s.tau)
        # the needed pieces tile exactly the subfiles the user lacks
        assert len(offs) == 12
        assert not set(offs) & {o + j * 4 for o in cached for j in range(4)}
    assert np.array_equal(lib.file(1), Library(vc, demand, 4, seed=3).file(1))
    assert not np.array_equal(lib.file(1), lib.file(2))


def test_library_rejects_odd_payload():
    with pytest.raises(ConfigError):
        Library(vc_of(4, 2, 2), DemandVector.identity(4), piece_bytes=3)


def test_cache_lookup_miss():
    vc = vc_of(4, 2, 2)
    demand = DemandVector.identity(4)
    lib = Library(vc, demand, 2)
    cache = place_receiver_caches(vc)[0]
    miss = next(p for p in needed_pieces(vc, demand) if 1 not in p.tau)
    with pytest.raises(DecodeFailure):
        cache.lookup(miss, lib)


def test_placement_dump_shape():
    d = json.loads(placement_dump(vc_of(4, 2, 2)))
    assert d["transmitters"] == {"1": [1, 2, 3, 4]}
    assert d["receivers"]["1"][:3] == [[1, [1, 2]], [1, [1, 3]], [1, [1, 4]]]
