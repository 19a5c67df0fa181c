"""Noiseless high-SNR physical layer.

Channel rows are the conjugate-transposed user channels, so user k observes
``y_k = H[k] @ x``. Each XOR (single-tx) or each subfile (multi-tx, where
precoders depend on which transmitters hold the file) becomes one stream:
a precoding vector times a sequence of complex symbols. A payload of B bytes
maps to B/2 symbols, byte pairs becoming the real and imaginary parts.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ChannelDegenerate, DecodeFailure, SupportTooSmall
from .model import MULTI_TX, DemandVector, UserSet, ValidatedConfig
from .placement import (
    Library,
    ReceiverCache,
    file_holders,
    place_receiver_caches,
    place_transmitter_caches,
)
from .scheduler import TransmissionBlock, schedule

NULL_TOL = 1e-9
DECODE_TOL = 1e-6
COND_GUARD = 1e6
MAX_RESAMPLES = 16


@dataclass(frozen=True)
class ChannelMatrix:
    entries: np.ndarray  # K x M
    block_index: int = 0
    attempts: int = 1

    def row(self, k: int) -> np.ndarray:
        return self.entries[k - 1]

    def sub(self, users, antennas=None) -> np.ndarray:
        rows = self.entries[[u - 1 for u in users]]
        return rows if antennas is None else rows[:, antennas]

    def condition(self, users, antennas=None) -> float:
        return float(np.linalg.cond(self.sub(users, antennas)))


def tx_antennas(tx: int, L_T: int) -> list[int]:
    return list(range((tx - 1) * L_T, tx * L_T))


def support_antennas(epsilon, vc: ValidatedConfig) -> list[int]:
    """Antenna indices usable for a subfile held by transmitters ``epsilon``.

    Only the first ``L_eff`` antennas are kept, which is how a feedback
    cost below the antenna count is realized.
    """
    if vc.mode != MULTI_TX:
        return list(range(vc.L_eff))
    ants = [a for tx in epsilon for a in tx_antennas(tx, vc.L_T)]
    return ants[:vc.L_eff]


def sample_channel(vc: ValidatedConfig, block_index: int, *, trial: int = 0, checks=()) -> ChannelMatrix:
    """I.i.d. CN(0, 1) channel keyed by (seed, trial, block_index).

    ``checks`` lists (users, antennas) square submatrices that must be well
    conditioned; the draw is repeated (with a new key) until they are.
    """
    for attempt in range(MAX_RESAMPLES + 1):
        rng = np.random.default_rng([vc.cfg.seed, trial, block_index, attempt])
        shape = (vc.K, vc.n_antennas)
        H = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
        ch = ChannelMatrix(H, block_index, attempt + 1)
        if all(ch.condition(u, a) < COND_GUARD for u, a in checks):
            return ch
    raise ChannelDegenerate(f"block {block_index}: no well-conditioned draw in {MAX_RESAMPLES + 1} attempts")


@dataclass(frozen=True)
class Precoder:
    lam: UserSet
    columns: np.ndarray  # M x L; column l is orthogonal to lam minus its l-th user

    def column(self, ell: int) -> np.ndarray:
        return self.columns[:, ell]


def _inverse_columns(sub: np.ndarray) -> np.ndarray:
    if np.linalg.cond(sub) >= COND_GUARD:
        raise ChannelDegenerate("precoded-user submatrix is ill conditioned")
    inv = np.linalg.inv(sub)
    return inv / np.linalg.norm(inv, axis=0, keepdims=True)


def zf_precoder(H: ChannelMatrix, lam, antennas=None) -> Precoder:
    """Normalized inverse of the lambda-submatrix, embedded in the full array."""
    lam = UserSet.of(lam)
    M = H.entries.shape[1]
    ants = list(range(len(lam))) if antennas is None else list(antennas)
    cols = np.zeros((M, len(lam)), dtype=complex)
    cols[ants] = _inverse_columns(H.sub(lam, ants))
    return Precoder(lam, cols)


def distributed_precoder(H: ChannelMatrix, lam, ell: int, epsilon, vc: ValidatedConfig) -> np.ndarray:
    """Unit vector on the antennas of ``epsilon`` that nulls lam minus lam[ell].

    ``ell`` is 0-based. Entries outside the support are exactly zero.
    """
    lam = UserSet.of(lam)
    if len(epsilon) < vc.t_T:
        raise SupportTooSmall(f"|epsilon| = {len(epsilon)} < t_T = {vc.t_T}")
    ants = support_antennas(epsilon, vc)
    vec = np.zeros(H.entries.shape[1], dtype=complex)
    vec[ants] = _inverse_columns(H.sub(lam, ants))[:, ell]
    return vec


def bytes_to_symbols(b: np.ndarray) -> np.ndarray:
    b = b.astype(np.float64)
    return b[0::2] + 1j * b[1::2]


def symbols_to_bytes(z: np.ndarray) -> tuple[np.ndarray, float]:
    re, im = np.rint(z.real), np.rint(z.imag)
    resid = float(max(np.max(np.abs(z.real - re)), np.max(np.abs(z.imag - im))))
    out = np.empty(2 * len(z), dtype=np.float64)
    out[0::2], out[1::2] = re, im
    if out.min() < 0 or out.max() > 255:
        return np.zeros(len(out), dtype=np.uint8), float("inf")
    return out.astype(np.uint8), resid


@dataclass(frozen=True)
class Stream:
    """One precoded symbol sequence inside a block."""

    xor: int  # index into block.xors
    parts: tuple  # DeliverySubfileId carried (XORed) by this stream
    epsilon: tuple  # transmitters holding the content


def block_streams(block: TransmissionBlock, vc: ValidatedConfig, holders: Optional[dict] = None) -> list[Stream]:
    if vc.mode != MULTI_TX:
        return [Stream(i, x.parts, (1,)) for i, x in enumerate(block.xors)]
    return [Stream(i, (p,), tuple(holders[p.n])) for i, x in enumerate(block.xors) for p in x.parts]


def stream_vectors(block, streams, H: ChannelMatrix, vc: ValidatedConfig) -> np.ndarray:
    """M x len(streams) matrix of precoding vectors."""
    if vc.mode != MULTI_TX:
        return zf_precoder(H, block.lam, range(vc.L_eff)).columns
    cache: dict = {}
    cols = []
    for s in streams:
        key = (s.xor, s.epsilon)
        if key not in cache:
            cache[key] = distributed_precoder(H, block.lam, s.xor, s.epsilon, vc)
        cols.append(cache[key])
    return np.stack(cols, axis=1)


def stream_payload(stream: Stream, library: Library) -> np.ndarray:
    data = library.piece(stream.parts[0]).copy()
    for p in stream.parts[1:]:
        data ^= library.piece(p)
    return data


@dataclass
class ReceivedBlock:
    observations: dict  # user -> complex symbols
    streams: list
    vectors: np.ndarray


def transmit_block(block, H: ChannelMatrix, vc: ValidatedConfig, library: Library,
                   streams=None, vectors=None, symbols=None, users=None) -> ReceivedBlock:
    """Superpose all precoded streams and return each user's observation."""
    if streams is None:
        holders = file_holders(place_transmitter_caches(vc))
        streams = block_streams(block, vc, holders)
    if vectors is None:
        vectors = stream_vectors(block, streams, H, vc)
    if symbols is None:
        symbols = np.stack([bytes_to_symbols(stream_payload(s, library)) for s in streams])
    x = vectors @ symbols
    users = block.active if users is None else users
    y = H.sub(users) @ x
    return ReceivedBlock({u: y[i] for i, u in enumerate(users)}, streams, vectors)


@dataclass
class CsirResult:
    products: dict  # (user, stream index) -> complex
    downlink_slots: int
    uplink_slots: int


def csir_training(block, H: ChannelMatrix, vectors: np.ndarray, *, pilot: complex = 1.0, users=None) -> CsirResult:
    """Broadcast one pilot per distinct precoder; every listener learns h_k^H p."""
    users = block.active if users is None else users
    distinct: dict = {}
    owner = []
    for j in range(vectors.shape[1]):
        key = vectors[:, j].tobytes()
        owner.append(distinct.setdefault(key, len(distinct)))
    uniq = np.stack([vectors[:, owner.index(i)] for i in range(len(distinct))], axis=1)
    rx = H.sub(users) @ (uniq * pilot)  # one slot per distinct precoder
    products = {}
    for ui, u in enumerate(users):
        for j, o in enumerate(owner):
            products[(u, j)] = rx[ui, o] / pilot
    return CsirResult(products, downlink_slots=len(distinct), uplink_slots=len(block.lam))


def decode_user(k: int, received: ReceivedBlock, cache: ReceiverCache, csir: CsirResult,
                block: TransmissionBlock, library: Library) -> np.ndarray:
    """Recover user k's desired piece from its observation.

    Streams whose content is fully cached are subtracted using the CSIR
    products; the remaining non-target streams must have been nulled by the
    precoder, which the demapping residual check enforces.
    """
    return _decode(k, received, cache, csir, block, library)[0]


def _decode(k, received, cache, csir, block, library):
    if k not in block.active:
        raise DecodeFailure(f"user {k} is not active in this block")
    want = block.desired_part(k)
    y = received.observations[k].copy()
    target = None
    for j, s in enumerate(received.streams):
        if want in s.parts:
            target = j
            continue
        if all(cache.holds(p.n, p.tau) for p in s.parts):
            y -= csir.products[(k, j)] * bytes_to_symbols(stream_payload(s, library))
    if target is None:
        raise DecodeFailure(f"no stream carries {want.label()}")
    coef = csir.products[(k, target)]
    if abs(coef) == 0:
        raise DecodeFailure(f"user {k}: target stream is nulled")
    data, resid = symbols_to_bytes(y / coef)
    if resid > DECODE_TOL:
        raise DecodeFailure(f"user {k}: residual {resid:.3g} above tolerance in block {block.lam}/{block.pi}/{block.s}")
    for p in received.streams[target].parts:
        if p != want:
            data ^= cache.lookup(p, library)
    return data, resid


def zf_residuals(block, H: ChannelMatrix, streams, vectors) -> float:
    """Worst normalized leakage of a stream onto a precoded user it must avoid."""
    worst = 0.0
    for j, s in enumerate(streams):
        own = block.lam[s.xor]
        p = vectors[:, j]
        pn = np.linalg.norm(p)
        for k in block.lam:
            if k == own:
                continue
            h = H.row(k)
            worst = max(worst, abs(h @ p) / (np.linalg.norm(h) * pn))
    return worst


def rank_condition_rows(block: TransmissionBlock) -> dict:
    """Rows of the zero-forcing system each packet imposes, with CSIT from lambda.

    For the packet of user i the rows are the served users that neither cache
    nor want it and whose CSIT is known.
    """
    kappa = set(block.active)
    eta = set(block.lam)
    rows = {}
    for i in block.active:
        part = block.desired_part(i)
        rows[i] = UserSet.of((kappa - set(part.tau) - {i}) & eta)
    return rows


@dataclass
class SimulationResult:
    trials: int = 0
    blocks: int = 0
    decodes: int = 0
    decode_failures: int = 0
    files_ok: int = 0
    files_bad: int = 0
    max_zf_residual: float = 0.0
    max_decode_residual: float = 0.0
    max_rank_rows: int = 0
    csit_slots: set = field(default_factory=set)
    csir_slots: set = field(default_factory=set)
    failures: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.decode_failures == 0 and self.files_bad == 0 and self.max_zf_residual <= NULL_TOL

    def to_dict(self) -> dict:
        return {
            "trials": self.trials, "blocks": self.blocks, "decodes": self.decodes,
            "decode_failures": self.decode_failures, "files_ok": self.files_ok,
            "files_bad": self.files_bad, "max_zf_residual": self.max_zf_residual,
            "max_decode_residual": self.max_decode_residual,
            "max_rank_rows": self.max_rank_rows,
            "csit_slots_per_block": sorted(self.csit_slots),
            "csir_slots_per_block": sorted(self.csir_slots),
            "failures": self.failures[:20],
        }


def _channel_checks(block, streams, vc):
    if vc.mode != MULTI_TX:
        return [(block.lam, list(range(vc.L_eff)))]
    seen = {s.epsilon for s in streams}
    return [(block.lam, support_antennas(e, vc)) for e in sorted(seen)]


def _trace_entry(bi, block, H, vectors, resid, verdicts):
    return {
        "block": bi, "lambda": list(block.lam), "pi": list(block.pi), "s": block.s,
        "channel": [[[z.real, z.imag] for z in row] for row in H.entries],
        "precoder": [[[z.real, z.imag] for z in row] for row in vectors],
        "zf_residual": resid,
        # user -> demapping residual, or null when decoding failed
        "decode_residuals": {str(k): r for k, r in verdicts.items()},
    }


def simulate(vc: ValidatedConfig, demand: DemandVector, *, trials: int = 1, payload_bytes: int = 64,
             blocks=None, trace: bool = False) -> SimulationResult:
    """Run the full schedule over ``trials`` channel realizations.

    Every active user decodes every block; afterwards each user's file is
    reassembled from its cache plus the decoded pieces and compared
    bit-exactly with the library.
    """
    vc.require_schedulable()
    blocks = schedule(vc, demand) if blocks is None else blocks
    library = Library(vc, demand, payload_bytes, seed=vc.cfg.seed)
    caches = {c.user: c for c in place_receiver_caches(vc)}
    holders = file_holders(place_transmitter_caches(vc))
    prepared = []
    for b in blocks:
        streams = block_streams(b, vc, holders)
        syms = np.stack([bytes_to_symbols(stream_payload(s, library)) for s in streams])
        prepared.append((b, streams, syms, _channel_checks(b, streams, vc)))
    res = SimulationResult()
    res.max_rank_rows = max((max(len(r) for r in rank_condition_rows(b).values()) for b in blocks), default=0)

    for trial in range(trials):
        rebuilt = {k: bytearray(library.file_size) for k in range(1, vc.K + 1)}
        for k, buf in rebuilt.items():
            n = demand.file(k)
            full = library.file(n)
            for sub in caches[k].contents:
                if sub.n == n:
                    off = library.subfile_offset(sub.tau)
                    buf[off:off + library.subfile_bytes] = full[off:off + library.subfile_bytes].tobytes()
        for bi, (b, streams, syms, checks) in enumerate(prepared):
            H = sample_channel(vc, bi, trial=trial, checks=checks)
            vectors = stream_vectors(b, streams, H, vc)
            rx = transmit_block(b, H, vc, library, streams=streams, vectors=vectors, symbols=syms)
            csir = csir_training(b, H, vectors)
            res.csit_slots.add(csir.uplink_slots)
            res.csir_slots.add(csir.downlink_slots)
            resid = zf_residuals(b, H, streams, vectors)
            res.max_zf_residual = max(res.max_zf_residual, resid)
            verdicts = {}
            for k in b.active:
                want = b.desired_part(k)
                try:
                    data, dres = _decode(k, rx, caches[k], csir, b, library)
                except DecodeFailure as exc:
                    res.decode_failures += 1
                    res.failures.append(str(exc))
                    verdicts[k] = None
                    continue
                res.decodes += 1
                res.max_decode_residual = max(res.max_decode_residual, dres)
                off = library.piece_offset(want)
                rebuilt[k][off:off + library.piece_bytes] = data.tobytes()
                verdicts[k] = dres
            res.blocks += 1
            if trace and trial == 0:
                res.trace.append(_trace_entry(bi, b, H, vectors, resid, verdicts))
        for k, buf in rebuilt.items():
            if bytes(buf) == library.file(demand.file(k)).tobytes():
                res.files_ok += 1
            else:
                res.files_bad += 1
        res.trials += 1
    return res
