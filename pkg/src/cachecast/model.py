"""Domain types, user-set combinatorics and configuration validation.

Users, files and transmitters are 1-indexed throughout, including in every
serialized form.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional

from .errors import (
    ConfigError,
    LibraryTooSmall,
    NonIntegerPartition,
    NonIntegerT,
    NonIntegerTxCache,
    TrivialFullCache,
)

SINGLE_TX = "single-tx"
MULTI_TX = "multi-tx"


class UserSet(tuple):
    """Strictly ascending tuple of positive indices.

    The raw constructor asserts the ordering; use :meth:`of` to build one
    from an arbitrary iterable.
    """

    __slots__ = ()

    def __new__(cls, members: Iterable[int] = ()):
        self = super().__new__(cls, members)
        prev = 0
        for m in self:
            if not isinstance(m, int) or m <= prev:
                raise ValueError(f"UserSet members must be strictly ascending positive ints: {tuple(self)}")
            prev = m
        return self

    @classmethod
    def of(cls, members: Iterable[int]) -> "UserSet":
        return cls(sorted(set(members)))

    def __or__(self, other) -> "UserSet":
        return UserSet.of(itertools.chain(self, other))

    def __sub__(self, other) -> "UserSet":
        drop = set(other)
        return UserSet(m for m in self if m not in drop)

    def __and__(self, other) -> "UserSet":
        keep = set(other)
        return UserSet(m for m in self if m in keep)

    def isdisjoint(self, other) -> bool:
        return set(self).isdisjoint(other)

    def label(self) -> str:
        return ",".join(map(str, self))

    def __repr__(self) -> str:
        return "{" + self.label() + "}"


def enumerate_subsets(ground: Iterable[int], size: int) -> list[UserSet]:
    """All ``size``-subsets of ``ground`` in lexicographic order."""
    ground = UserSet.of(ground)
    if not 0 <= size <= len(ground):
        raise ValueError(f"subset size {size} outside [0, {len(ground)}]")
    return [UserSet(c) for c in itertools.combinations(ground, size)]


def full_set(K: int) -> UserSet:
    return UserSet(range(1, K + 1))


@dataclass(frozen=True, order=True)
class CacheSubfileId:
    n: int
    tau: UserSet


@dataclass(frozen=True, order=True)
class DeliverySubfileId:
    n: int
    tau: UserSet
    sigma: UserSet
    r: int

    def label(self) -> str:
        return f"W{self.n}[{self.sigma.label()};{self.tau.label()}]^{self.r}"


@dataclass(frozen=True)
class DemandVector:
    """File index requested by each user; ``d[k-1]`` is user k's file."""

    d: tuple

    def __post_init__(self):
        object.__setattr__(self, "d", tuple(int(x) for x in self.d))
        if len(set(self.d)) != len(self.d):
            raise ConfigError(f"demand vector must have distinct entries: {self.d}")

    @classmethod
    def identity(cls, K: int) -> "DemandVector":
        return cls(tuple(range(1, K + 1)))

    @property
    def K(self) -> int:
        return len(self.d)

    def file(self, k: int) -> int:
        return self.d[k - 1]

    def user_of(self, n: int) -> Optional[int]:
        try:
            return self.d.index(n) + 1
        except ValueError:
            return None


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10**6)
    return Fraction(str(x))


@dataclass(frozen=True)
class SystemConfig:
    """Scenario parameters.

    ``C`` defaults to the nominal antenna count (full feedback). In multi-tx
    mode ``L`` is derived as ``L_T * t_T`` and any explicit value is ignored.
    """

    K: int
    L: Optional[int] = None
    gamma: Fraction = Fraction(0)
    N: Optional[int] = None
    C: Optional[int] = None
    seed: int = 0
    mode: str = SINGLE_TX
    K_T: Optional[int] = None
    L_T: Optional[int] = None
    gamma_T: Optional[Fraction] = None

    def __post_init__(self):
        object.__setattr__(self, "gamma", _frac(self.gamma))
        if self.gamma_T is not None:
            object.__setattr__(self, "gamma_T", _frac(self.gamma_T))
        if self.N is None:
            object.__setattr__(self, "N", self.K)
        if self.mode not in (SINGLE_TX, MULTI_TX):
            raise ConfigError(f"unknown mode {self.mode!r}")

    @classmethod
    def from_t(cls, K: int, L: int, t: int, **kw) -> "SystemConfig":
        return cls(K=K, L=L, gamma=Fraction(t, K), **kw)

    def to_dict(self) -> dict:
        out = {
            "K": self.K, "L": self.L, "gamma": str(self.gamma), "N": self.N,
            "C": self.C, "seed": self.seed, "mode": self.mode,
        }
        if self.mode == MULTI_TX:
            out.update(K_T=self.K_T, L_T=self.L_T, gamma_T=str(self.gamma_T))
        return out


@dataclass(frozen=True)
class ValidatedConfig:
    cfg: SystemConfig
    t: int
    L: int  # nominal antennas (L_T * t_T in multi-tx mode)
    L_eff: int  # after shutting down antennas when C < L
    C: int
    t_T: int = 1
    n_antennas: int = 0
    partition_error: Optional[str] = field(default=None, compare=False)

    @property
    def K(self) -> int:
        return self.cfg.K

    @property
    def N(self) -> int:
        return self.cfg.N

    @property
    def mode(self) -> str:
        return self.cfg.mode

    @property
    def K_T(self) -> int:
        return self.cfg.K_T if self.mode == MULTI_TX else 1

    @property
    def L_T(self) -> int:
        return self.cfg.L_T if self.mode == MULTI_TX else self.L

    @property
    def schedulable(self) -> bool:
        return self.partition_error is None

    def require_schedulable(self) -> "ValidatedConfig":
        if self.partition_error is None:
            return self
        if self.t > self.K - self.L_eff:
            raise TrivialFullCache(self.partition_error)
        raise NonIntegerPartition(self.partition_error)


def validate_config(cfg: SystemConfig) -> ValidatedConfig:
    """Check invariants and derive ``t``, ``t_T`` and the effective antenna count.

    Raises on hard errors. A configuration the scheduler cannot handle
    (``t / L_eff`` not integral, or no room for the cache-only group) is
    returned with ``partition_error`` set; call ``require_schedulable``.
    """
    K = cfg.K
    if K < 1:
        raise ConfigError("K must be >= 1")
    if not 0 <= cfg.gamma <= 1:
        raise ConfigError(f"gamma must lie in [0, 1], got {cfg.gamma}")
    t = K * cfg.gamma
    if t.denominator != 1:
        raise NonIntegerT(f"K*gamma = {t} is not an integer")
    t = int(t)
    if cfg.N < K:
        raise LibraryTooSmall(f"N = {cfg.N} < K = {K}")

    if cfg.mode == MULTI_TX:
        if not cfg.K_T or not cfg.L_T or cfg.gamma_T is None:
            raise ConfigError("multi-tx mode needs K_T, L_T and gamma_T")
        if not Fraction(1, cfg.K_T) <= cfg.gamma_T <= 1:
            raise ConfigError(f"gamma_T must lie in [1/K_T, 1], got {cfg.gamma_T}")
        t_T = cfg.K_T * cfg.gamma_T
        if t_T.denominator != 1:
            raise NonIntegerTxCache(f"K_T*gamma_T = {t_T} is not an integer")
        t_T = int(t_T)
        L = cfg.L_T * t_T
        n_ant = cfg.K_T * cfg.L_T
    else:
        if not cfg.L or cfg.L < 1:
            raise ConfigError("L must be >= 1")
        t_T = 1
        L = cfg.L
        n_ant = L

    C = L if cfg.C is None else cfg.C
    if C < 1:
        raise ConfigError("feedback cost C must be >= 1")
    L_eff = min(L, C)
    if L_eff > K:
        raise ConfigError(f"effective antennas {L_eff} exceed user count {K}")

    err = None
    if t % L_eff:
        err = f"t/L_eff = {t}/{L_eff} is not an integer"
    elif t > K - L_eff:
        err = f"t = {t} leaves no room for {L_eff} precoded users among K = {K}"
    return ValidatedConfig(cfg=cfg, t=t, L=L, L_eff=L_eff, C=C, t_T=t_T,
                           n_antennas=n_ant, partition_error=err)
