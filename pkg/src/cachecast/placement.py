"""Receiver and transmitter cache placement, delivery-time subfile splits,
and the optional byte payloads used for bit-exact decoding checks."""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np

from .errors import ConfigError, DecodeFailure, NonIntegerTxCache
from .model import (
    MULTI_TX,
    CacheSubfileId,
    DeliverySubfileId,
    DemandVector,
    UserSet,
    ValidatedConfig,
    enumerate_subsets,
    full_set,
)


@dataclass(frozen=True)
class ReceiverCache:
    user: int
    contents: frozenset

    def holds(self, n: int, tau) -> bool:
        return CacheSubfileId(n, tau) in self.contents

    def lookup(self, pid: DeliverySubfileId, library: "Library") -> np.ndarray:
        """Bytes of a delivery piece, read from the cached parent subfile."""
        if not self.holds(pid.n, pid.tau):
            raise DecodeFailure(f"user {self.user} has not cached {pid.label()}")
        return library.piece(pid)


@dataclass(frozen=True)
class TransmitterCache:
    tx: int
    files: frozenset


def split_file(n: int, vc: ValidatedConfig) -> list[CacheSubfileId]:
    return [CacheSubfileId(n, tau) for tau in enumerate_subsets(full_set(vc.K), vc.t)]


def place_receiver_caches(vc: ValidatedConfig) -> list[ReceiverCache]:
    taus = enumerate_subsets(full_set(vc.K), vc.t)
    caches = []
    for k in range(1, vc.K + 1):
        held = frozenset(CacheSubfileId(n, tau) for n in range(1, vc.N + 1)
                         for tau in taus if k in tau)
        caches.append(ReceiverCache(k, held))
    return caches


def place_transmitter_caches(vc: ValidatedConfig) -> list[TransmitterCache]:
    """Cyclic whole-file placement: Tx k_T stores the k_T-th run of M_T files."""
    if vc.mode != MULTI_TX:
        return [TransmitterCache(1, frozenset(range(1, vc.N + 1)))]
    M_T = vc.cfg.gamma_T * vc.N
    if M_T.denominator != 1:
        raise NonIntegerTxCache(f"gamma_T*N = {M_T} is not an integer")
    M_T = int(M_T)
    out = []
    for k_T in range(1, vc.K_T + 1):
        idx = range(1 + (k_T - 1) * M_T, k_T * M_T + 1)
        out.append(TransmitterCache(k_T, frozenset((n - 1) % vc.N + 1 for n in idx)))
    return out


def file_holders(tx_caches: list[TransmitterCache]) -> dict[int, UserSet]:
    """Map file index -> ascending set of transmitters storing it."""
    holders: dict[int, list[int]] = {}
    for tc in tx_caches:
        for n in tc.files:
            holders.setdefault(n, []).append(tc.tx)
    return {n: UserSet.of(txs) for n, txs in holders.items()}


def sigma_candidates(K: int, tau, k: int, L: int) -> list[UserSet]:
    return _sigma_candidates(K, tuple(tau), k, L)


@lru_cache(maxsize=None)
def _sigma_candidates(K, tau, k, L):
    rest = [u for u in range(1, K + 1) if u != k and u not in tau]
    if L - 1 > len(rest):
        return []
    return enumerate_subsets(rest, L - 1)


def delivery_split(sub: CacheSubfileId, k: int, vc: ValidatedConfig) -> list[DeliverySubfileId]:
    """Split a subfile needed by user ``k`` into (sigma, r) pieces."""
    if k in sub.tau:
        raise ValueError(f"user {k} already caches {sub}")
    L = vc.L_eff
    return [DeliverySubfileId(sub.n, sub.tau, sigma, r)
            for sigma in sigma_candidates(vc.K, sub.tau, k, L)
            for r in range(1, L + vc.t + 1)]


def pieces_per_subfile(vc: ValidatedConfig) -> int:
    return comb(vc.K - vc.t - 1, vc.L_eff - 1) * (vc.L_eff + vc.t)


def subpacketization(vc: ValidatedConfig) -> int:
    return comb(vc.K, vc.t) * pieces_per_subfile(vc)


def needed_pieces(vc: ValidatedConfig, demand: DemandVector) -> list[DeliverySubfileId]:
    """Every piece a user wants but has not cached, in (user, tau, sigma, r) order."""
    out = []
    for k in range(1, vc.K + 1):
        for sub in split_file(demand.file(k), vc):
            if k not in sub.tau:
                out.extend(delivery_split(sub, k, vc))
    return out


class Library:
    """Seeded byte content for every file, sliced per subfile and piece.

    A file is the concatenation of its subfiles in lexicographic tau order;
    a subfile demanded by user k is the concatenation of its pieces in
    (sigma, r) order. Every piece holds ``piece_bytes`` bytes.
    """

    def __init__(self, vc: ValidatedConfig, demand: DemandVector, piece_bytes: int = 64, seed: int = 0):
        if piece_bytes < 2 or piece_bytes % 2:
            raise ConfigError(f"payload bytes per piece must be a positive even number, got {piece_bytes}")
        self.vc = vc
        self.demand = demand
        self.piece_bytes = piece_bytes
        self.seed = seed
        self.per_subfile = pieces_per_subfile(vc)
        self.subfile_bytes = self.per_subfile * piece_bytes
        self._tau_index = {tau: i for i, tau in enumerate(enumerate_subsets(full_set(vc.K), vc.t))}
        self._files: dict[int, np.ndarray] = {}

    @property
    def file_size(self) -> int:
        return len(self._tau_index) * self.subfile_bytes

    def file(self, n: int) -> np.ndarray:
        buf = self._files.get(n)
        if buf is None:
            rng = np.random.default_rng([self.seed, n])
            buf = rng.integers(0, 256, size=self.file_size, dtype=np.uint8)
            buf.setflags(write=False)
            self._files[n] = buf
        return buf

    def subfile_offset(self, tau) -> int:
        return self._tau_index[tau] * self.subfile_bytes

    def piece_offset(self, pid: DeliverySubfileId) -> int:
        k = self.demand.user_of(pid.n)
        if k is None:
            raise KeyError(f"file {pid.n} is not demanded")
        sigmas = sigma_candidates(self.vc.K, pid.tau, k, self.vc.L_eff)
        j = sigmas.index(pid.sigma) * (self.vc.L_eff + self.vc.t) + pid.r - 1
        return self.subfile_offset(pid.tau) + j * self.piece_bytes

    def piece(self, pid: DeliverySubfileId) -> np.ndarray:
        off = self.piece_offset(pid)
        return self.file(pid.n)[off:off + self.piece_bytes]


def placement_dump(vc: ValidatedConfig) -> str:
    """JSON: user -> sorted (n, tau) pairs; transmitter -> file list."""
    rx = {str(c.user): [[s.n, list(s.tau)] for s in sorted(c.contents)]
          for c in place_receiver_caches(vc)}
    tx = {str(c.tx): sorted(c.files) for c in place_transmitter_caches(vc)}
    return json.dumps({"receivers": rx, "transmitters": tx}, indent=2)
