"""Lower bounds on the normalized delivery time and an exhaustive oracle.

The per-block feasibility limit says a block can serve at most
``min(C'_k, L_T |eps_k|) + |delta_k|`` users, where ``delta_k`` are the served
users already caching k's packet, ``eps_k`` the transmitters storing it, and
``C'_k`` the CSIT budget plus one if k itself reported no CSIT. Summing that
limit over packet orders gives the closed-form bound

    c(u, v) = (K - v) / (min(C, L_T u) + v)

at integer transmitter/receiver replication (u, v); fractional points use
a lower convex envelope.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, floor
from typing import Optional, Union

import numpy as np

from .errors import BudgetExceeded
from .model import (
    MULTI_TX,
    DemandVector,
    SystemConfig,
    UserSet,
    ValidatedConfig,
    enumerate_subsets,
    full_set,
)
from .placement import file_holders, place_transmitter_caches

MAX_ORACLE_PACKETS = 12
MAX_AVERAGE_FILES = 4


# ---------------------------------------------------------------- feasibility

@dataclass(frozen=True)
class FeasibilityInstance:
    kappa: UserSet  # served users
    eta: UserSet  # users whose CSIT the transmitter holds
    delta: dict  # k -> users caching k's packet
    epsilon: dict  # k -> transmitters storing k's packet
    L_T: int
    C: Optional[int] = None  # CSIT budget; defaults to |eta|

    def __post_init__(self):
        if not set(self.eta) <= set(self.kappa):
            raise ValueError("eta must be a subset of kappa")
        for k in self.kappa:
            if k in self.delta[k]:
                raise ValueError(f"user {k} cannot cache its own packet")
            if len(self.epsilon[k]) < 1:
                raise ValueError(f"packet of user {k} is stored at no transmitter")

    @property
    def budget(self) -> int:
        return len(self.eta) if self.C is None else self.C


def user_limit(inst: FeasibilityInstance, k: int) -> int:
    c_k = inst.budget + (k not in inst.eta)
    cachers = len(set(inst.delta[k]) & set(inst.kappa))
    return min(c_k, inst.L_T * len(inst.epsilon[k])) + cachers


def feasibility_max_users(inst: FeasibilityInstance) -> int:
    """Largest block size the instance's packets allow."""
    return min(user_limit(inst, k) for k in inst.kappa)


def check_feasible(inst: FeasibilityInstance) -> bool:
    return all(len(inst.kappa) <= user_limit(inst, k) for k in inst.kappa)


def block_instance(block, vc: ValidatedConfig, holders: Optional[dict] = None) -> FeasibilityInstance:
    """Feasibility view of a scheduled block, with CSIT from the precoded users."""
    if holders is None:
        holders = file_holders(place_transmitter_caches(vc))
    delta, eps = {}, {}
    for k in block.active:
        part = block.desired_part(k)
        delta[k] = part.tau
        eps[k] = holders[part.n]
    return FeasibilityInstance(block.active, block.lam, delta, eps, L_T=vc.L_T, C=vc.L_eff)


def packet_order_limit(u: int, v: int, C: int, L_T: int) -> int:
    """Most packets of order (u, v) that can share a block."""
    if u < 1 or v < 0:
        raise ValueError("need u >= 1 and v >= 0")
    return min(C, L_T * u) + v


@dataclass
class PacketOrderProfile:
    """Packet counts by (transmitter replication u, receiver replication v)."""

    b: dict = field(default_factory=dict)  # (u, v) -> count

    def by_tx(self) -> dict:
        out: dict = {}
        for (u, _), n in self.b.items():
            out[u] = out.get(u, 0) + n
        return out

    def by_rx(self) -> dict:
        out: dict = {}
        for (_, v), n in self.b.items():
            out[v] = out.get(v, 0) + n
        return out

    @property
    def total(self) -> int:
        return sum(self.b.values())

    def rx_memory(self) -> int:
        return sum(v * n for v, n in self.by_rx().items())

    def tx_memory(self) -> int:
        return sum(u * n for u, n in self.by_tx().items())


def packet_order_profile(vc: ValidatedConfig, F: int) -> PacketOrderProfile:
    """Profile of the library under this package's placement, F packets per file."""
    per_sub, rem = divmod(F, comb(vc.K, vc.t))
    if rem:
        raise ValueError(f"F = {F} is not a multiple of the {comb(vc.K, vc.t)} cache subfiles")
    holders = file_holders(place_transmitter_caches(vc))
    prof = PacketOrderProfile()
    for n in range(1, vc.N + 1):
        key = (len(holders[n]), vc.t)
        prof.b[key] = prof.b.get(key, 0) + F
    return prof


# ---------------------------------------------------------------- bound

def order_cost(K: int, u: int, v: int, C: int, L_T: int) -> Fraction:
    """Normalized delivery cost of a library made only of order-(u, v) packets."""
    return Fraction(K - v, min(C, L_T * u) + v)


def _lerp(lo_val: Fraction, hi_val: Fraction, frac: Fraction) -> Fraction:
    return lo_val + (hi_val - lo_val) * frac


def envelope_at(K: int, t, t_T, C: int, L_T: int) -> Fraction:
    """Closed form at integer points, linear interpolation between neighbors otherwise.

    Interpolation runs along the receiver axis first and then along the
    transmitter axis.
    """
    t, t_T = Fraction(t), Fraction(t_T)

    def along_v(u: int) -> Fraction:
        lo = floor(t)
        if lo == t:
            return order_cost(K, u, lo, C, L_T)
        return _lerp(order_cost(K, u, lo, C, L_T), order_cost(K, u, lo + 1, C, L_T), t - lo)

    lo_u = floor(t_T)
    if lo_u == t_T:
        return along_v(lo_u)
    return _lerp(along_v(lo_u), along_v(lo_u + 1), t_T - lo_u)


@dataclass(frozen=True)
class BoundResult:
    T_lb: Fraction
    dof_ub: Optional[Fraction]  # None when nothing needs delivering


def _bound_params(cfg: Union[SystemConfig, ValidatedConfig]):
    if isinstance(cfg, ValidatedConfig):
        cfg = cfg.cfg
    K = cfg.K
    t = cfg.gamma * K
    if cfg.mode == MULTI_TX:
        return K, t, cfg.gamma_T * cfg.K_T, cfg.L_T, (cfg.C if cfg.C is not None else cfg.L_T * cfg.gamma_T * cfg.K_T)
    return K, t, Fraction(1), cfg.L, (cfg.C if cfg.C is not None else cfg.L)


def lower_bound_delivery(cfg: Union[SystemConfig, ValidatedConfig]) -> BoundResult:
    """Lower bound on the normalized delivery time and the implied DoF ceiling.

    Fractional receiver or transmitter memory is allowed here (no
    validation of integrality), since the bound is meaningful there.
    """
    K, t, t_T, L_T, C = _bound_params(cfg)
    C = int(C)
    T_lb = envelope_at(K, t, t_T, C, L_T)
    dof = None if T_lb == 0 else (K - t) / T_lb
    return BoundResult(T_lb, dof)


# ------------------------------------------------- hull-based reference

def _grid_points(K: int, K_T: int, C: int, L_T: int):
    return [(u, v, order_cost(K, u, v, C, L_T)) for u in range(1, K_T + 1) for v in range(K + 1)]


class HullEnvelope:
    """Exact lower convex envelope of c(u, v) over the integer grid.

    Candidate supporting planes come from every non-degenerate point triple
    (point pairs when there is a single transmitter). A float pass discards
    planes that cut above a grid point, the survivors are re-checked in
    rational arithmetic, and the envelope is the maximum of the supporting
    planes.
    """

    def __init__(self, K: int, K_T: int, C: int, L_T: int):
        self.K, self.K_T = K, K_T
        self.points = _grid_points(K, K_T, C, L_T)
        self.planes = self._supporting_lines() if K_T == 1 else self._supporting_planes()

    def _supporting_lines(self):
        pts = [(v, c) for _, v, c in self.points]
        out = set()
        for (v0, c0), (v1, c1) in itertools.combinations(pts, 2):
            slope = (c1 - c0) / (v1 - v0)
            icpt = c0 - slope * v0
            if all(c >= slope * v + icpt for v, c in pts):
                out.add((Fraction(0), slope, icpt))
        return sorted(out)

    def _supporting_planes(self):
        P = np.array([[float(u), float(v), float(c)] for u, v, c in self.points])
        idx = np.array(list(itertools.combinations(range(len(P)), 3)))
        A, B, Cc = P[idx[:, 0]], P[idx[:, 1]], P[idx[:, 2]]
        normal = np.cross(B - A, Cc - A)
        keep = np.abs(normal[:, 2]) > 1e-12  # drop vertical / collinear triples
        idx, A, normal = idx[keep], A[keep], normal[keep]
        # plane z = a u + b v + d
        a = -normal[:, 0] / normal[:, 2]
        b = -normal[:, 1] / normal[:, 2]
        d = A[:, 2] - a * A[:, 0] - b * A[:, 1]
        gap = P[:, 2][None, :] - (a[:, None] * P[:, 0][None, :] + b[:, None] * P[:, 1][None, :] + d[:, None])
        cand = idx[(gap >= -1e-9).all(axis=1)]
        out = set()
        for tri in cand:
            plane = self._exact_plane([self.points[i] for i in tri])
            if plane is None or plane in out:
                continue
            a_, b_, d_ = plane
            if all(c >= a_ * u + b_ * v + d_ for u, v, c in self.points):
                out.add(plane)
        return sorted(out)

    @staticmethod
    def _exact_plane(tri):
        (u0, v0, c0), (u1, v1, c1), (u2, v2, c2) = tri
        det = (u1 - u0) * (v2 - v0) - (u2 - u0) * (v1 - v0)
        if det == 0:
            return None
        a = Fraction((c1 - c0) * (v2 - v0) - (c2 - c0) * (v1 - v0)) / det
        b = Fraction((u1 - u0) * (c2 - c0) - (u2 - u0) * (c1 - c0)) / det
        return (a, b, c0 - a * u0 - b * v0)

    def __call__(self, u, v) -> Fraction:
        u, v = Fraction(u), Fraction(v)
        if not (1 <= u <= self.K_T and 0 <= v <= self.K):
            raise ValueError(f"({u}, {v}) is outside the grid")
        return max(a * u + b * v + d for a, b, d in self.planes)


def envelope_deviation(K: int, K_T: int, C: int, L_T: int, step: Fraction = Fraction(1, 2)):
    """Max |interpolated - hull| over grid points spaced by ``step``.

    Returns (deviation, worst point).
    """
    hull = HullEnvelope(K, K_T, C, L_T)
    worst, at = Fraction(0), None
    us = [1 + i * step for i in range(int((K_T - 1) / step) + 1)]
    vs = [i * step for i in range(int(K / step) + 1)]
    for u in us:
        for v in vs:
            dev = abs(envelope_at(K, v, u, C, L_T) - hull(u, v))
            if dev > worst:
                worst, at = dev, (u, v)
    return worst, at


# ---------------------------------------------------------------- oracle

@dataclass(frozen=True)
class Packet:
    user: int
    delta: frozenset  # receivers caching it
    epsilon: frozenset  # transmitters storing it
    label: str = ""


@dataclass(frozen=True)
class TinyInstance:
    packets: tuple
    K: int
    K_T: int
    L_T: int
    C: int
    F: int
    demand: Optional[DemandVector] = None

    def __post_init__(self):
        for p in self.packets:
            if p.user in p.delta or not p.epsilon:
                raise ValueError(f"ill-formed packet {p}")


def tiny_from_placement(vc: ValidatedConfig, demand: DemandVector, F: int) -> TinyInstance:
    """Needed packets when each cache subfile is cut into F / C(K, t) packets."""
    n_sub = comb(vc.K, vc.t)
    per_sub, rem = divmod(F, n_sub)
    if rem or per_sub < 1:
        raise ValueError(f"F = {F} must be a positive multiple of C(K, t) = {n_sub}")
    holders = file_holders(place_transmitter_caches(vc))
    packets = []
    for k in range(1, vc.K + 1):
        n = demand.file(k)
        for tau in enumerate_subsets(full_set(vc.K), vc.t):
            if k in tau:
                continue
            for j in range(per_sub):
                packets.append(Packet(k, frozenset(tau), frozenset(holders[n]), f"{n}:{tau.label()}:{j}"))
    L_T = vc.L_T
    return TinyInstance(tuple(packets), vc.K, vc.K_T, L_T, vc.C, F, demand)


def _group_feasible(tiny: TinyInstance, group) -> bool:
    users = [p.user for p in group]
    if len(set(users)) != len(users):
        return False
    kappa = UserSet.of(users)
    delta = {p.user: p.delta for p in group}
    eps = {p.user: p.epsilon for p in group}
    size = min(tiny.C, len(kappa))
    for eta in itertools.combinations(kappa, size):
        inst = FeasibilityInstance(kappa, UserSet(eta), delta, eps, L_T=tiny.L_T, C=tiny.C)
        if check_feasible(inst):
            return True
    return False


def feasible_groups(tiny: TinyInstance) -> list[int]:
    """Bitmasks of every packet subset that can share one block."""
    n = len(tiny.packets)
    out = []
    for mask in range(1, 1 << n):
        group = [tiny.packets[i] for i in range(n) if mask >> i & 1]
        if _group_feasible(tiny, group):
            out.append(mask)
    return out


def _check_budget(tiny: TinyInstance):
    if len(tiny.packets) > MAX_ORACLE_PACKETS:
        raise BudgetExceeded(f"{len(tiny.packets)} needed packets exceed the oracle budget of {MAX_ORACLE_PACKETS}")


def brute_force_min_blocks(tiny: TinyInstance) -> int:
    """Exact minimum number of feasible blocks covering every needed packet.

    Dynamic program over packet subsets: the lowest uncovered packet must
    go into some feasible group, so only groups containing it are tried.
    """
    _check_budget(tiny)
    n = len(tiny.packets)
    if n == 0:
        return 0
    groups = feasible_groups(tiny)
    by_low: dict[int, list[int]] = {}
    for g in groups:
        by_low.setdefault((g & -g).bit_length() - 1, []).append(g)
    full = (1 << n) - 1
    INF = n + 1
    best = [INF] * (1 << n)
    best[0] = 0
    # best[mask] = min blocks to cover the packets in mask
    for mask in range(1, full + 1):
        low = (mask & -mask).bit_length() - 1
        m = INF
        for g in by_low.get(low, ()):
            if g & mask == g:
                r = best[mask ^ g] + 1
                if r < m:
                    m = r
        best[mask] = m
    return best[full]


def greedy_blocks(tiny: TinyInstance) -> int:
    """Upper bound: repeatedly take the largest feasible group still available."""
    _check_budget(tiny)
    groups = sorted(feasible_groups(tiny), key=lambda g: (-bin(g).count("1"), g))
    left = (1 << len(tiny.packets)) - 1
    blocks = 0
    while left:
        g = next(g for g in groups if g & left == g)
        left ^= g
        blocks += 1
    return blocks


def average_over_demands(vc: ValidatedConfig, F: int) -> Fraction:
    """Mean oracle block count over every demand of distinct files."""
    if vc.N > MAX_AVERAGE_FILES:
        raise BudgetExceeded(f"N = {vc.N} exceeds the averaging budget of {MAX_AVERAGE_FILES}")
    total, count = 0, 0
    for d in itertools.permutations(range(1, vc.N + 1), vc.K):
        total += brute_force_min_blocks(tiny_from_placement(vc, DemandVector(d), F))
        count += 1
    return Fraction(total, count)
