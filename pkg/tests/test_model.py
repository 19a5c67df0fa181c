from fractions import Fraction
from math import comb

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cachecast.errors import (
    ConfigError,
    LibraryTooSmall,
    NonIntegerPartition,
    NonIntegerT,
    NonIntegerTxCache,
    TrivialFullCache,
)
from cachecast.model import (
    DeliverySubfileId,
    DemandVector,
    SystemConfig,
    UserSet,
    enumerate_subsets,
    validate_config,
)


def test_validate_small_example():
    vc = validate_config(SystemConfig(K=4, L=2, gamma=Fraction(1, 2), N=4, C=2))
    assert (vc.t, vc.L_eff, vc.schedulable) == (2, 2, True)


def test_validate_zero_cache():
    vc = validate_config(SystemConfig(K=4, L=2, gamma=0, N=4, C=2))
    assert vc.t == 0 and vc.schedulable


def test_partition_error_is_deferred():
    vc = validate_config(SystemConfig(K=6, L=2, gamma=Fraction(1, 2), N=6, C=2))
    assert vc.t == 3 and not vc.schedulable
    with pytest.raises(NonIntegerPartition):
        vc.require_schedulable()


def test_full_cache_rejected_by_scheduler():
    vc = validate_config(SystemConfig.from_t(4, 2, 4))
    with pytest.raises(TrivialFullCache):
        vc.require_schedulable()


@pytest.mark.parametrize("cfg, err", [
    (SystemConfig(K=4, L=2, gamma=Fraction(1, 3)), NonIntegerT),
    (SystemConfig(K=4, L=2, gamma=Fraction(1, 2), N=3), LibraryTooSmall),
    (SystemConfig(K=4, L=2, gamma=Fraction(3, 2)), ConfigError),
    (SystemConfig(K=4, L=2, C=0), ConfigError),
    (SystemConfig(K=4, mode="multi-tx", K_T=3, L_T=1, gamma_T=Fraction(1, 2)), NonIntegerTxCache),
    (SystemConfig(K=4, mode="multi-tx", K_T=2, L_T=1, gamma_T=Fraction(1, 4)), ConfigError),
])
def test_validate_errors(cfg, err):
    with pytest.raises(err):
        validate_config(cfg)


def test_feedback_below_antennas_shuts_down_antennas():
    vc = validate_config(SystemConfig.from_t(4, 2, 2, C=1))
    assert (vc.L, vc.L_eff, vc.C) == (2, 1, 1)


def test_multi_tx_derives_antenna_count():
    vc = validate_config(SystemConfig(K=6, mode="multi-tx", K_T=3, L_T=2,
                                      gamma_T=Fraction(2, 3), gamma=Fraction(2, 3)))
    assert (vc.t_T, vc.L, vc.n_antennas, vc.C) == (2, 4, 6, 4)


def test_validate_is_pure():
    cfg = SystemConfig.from_t(6, 3, 3, C=2)
    assert validate_config(cfg) == validate_config(cfg)


def test_enumerate_examples():
    assert enumerate_subsets([1, 2, 3], 2) == [(1, 2), (1, 3), (2, 3)]
    assert enumerate_subsets([1, 2, 3, 4], 0) == [()]
    assert len(enumerate_subsets(range(1, 7), 4)) == 15
    with pytest.raises(ValueError):
        enumerate_subsets([1, 2], 3)


def test_subset_counts_exhaustive():
    for n in range(13):
        for k in range(n + 1):
            subs = enumerate_subsets(range(1, n + 1), k)
            assert len(subs) == comb(n, k)
            assert len(set(subs)) == len(subs)
            assert subs == sorted(subs)


@given(st.sets(st.integers(1, 30), max_size=12))
def test_userset_invariant(members):
    us = UserSet.of(members)
    assert list(us) == sorted(members)
    other = UserSet.of(m + 1 for m in members)
    for derived in (us | other, us - other, us & other):
        assert list(derived) == sorted(set(derived))


def test_userset_rejects_unsorted():
    with pytest.raises(ValueError):
        UserSet((2, 1))
    with pytest.raises(ValueError):
        UserSet((0, 1))


def test_demand_must_be_distinct():
    with pytest.raises(ConfigError):
        DemandVector((1, 1, 2))
    d = DemandVector((3, 1, 2))
    assert d.file(1) == 3 and d.user_of(2) == 3 and d.user_of(9) is None


def test_piece_label():
    p = DeliverySubfileId(1, UserSet((3, 4)), UserSet((2,)), 1)
    assert p.label() == "W1[2;3,4]^1"
