"""Proof-of-work protocol: block model, hash-to-matrix construction, mining.

The work function is optimization: block content maps deterministically
to a coupling matrix, the miner submits a configuration, and verifiers
accept if its exactly-recomputed objective beats a budgeted, digest-
seeded simulated-annealing baseline by the target's margin.  The
encoded solution is hashed into the block id, so the optimizer output
literally names the block.

All digests are SHA-256.  Wire formats are fixed-width little-endian.
"""

import hashlib
import itertools
import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import gdsim
from .baselines import SaParams, baseline_threshold, instance_seed, quantized_phases, sa_qco, sa_qubo
from .problem import (
    CouplingMatrix,
    as_spins,
    entry_count,
    evaluate_qco,
    evaluate_qubo,
    phase_code,
    phase_from_code,
    uniform_positions,
)
from .rng import SALT_MINER, derive_seed

MODES = ("qubo", "qco")
_MODE_CODE = {"qubo": 0, "qco": 1}
_MODE_NAME = {0: "qubo", 1: "qco"}

_TARGET_FMT = "<IIddBQQ"
_HEADER_FMT = "<I32s32sQ"
HEADER_SIZE = struct.calcsize(_HEADER_FMT) + struct.calcsize(_TARGET_FMT) + 4

MAX_PAYLOAD = 1024
GENESIS_PREV = bytes(32)


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


class MiningError(Exception):
    pass


class VerifyError(Exception):
    """Verification failure with a machine-readable reason code."""

    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


@dataclass(frozen=True)
class Transaction:
    payload: bytes

    def __post_init__(self):
        if not isinstance(self.payload, bytes):
            raise ValueError("payload must be bytes")
        if not 1 <= len(self.payload) <= MAX_PAYLOAD:
            raise ValueError(f"payload length must be 1..{MAX_PAYLOAD}")

    @property
    def txid(self) -> bytes:
        return digest(self.payload)


@dataclass(frozen=True)
class DifficultyTarget:
    """Hardness dial: instance shape plus verifier budget and margin."""

    n: int
    density_pct: int
    j_min: float
    j_max: float
    mode: str
    sa_sweeps: int
    margin_ppm: int = 0

    def __post_init__(self):
        # the header packs these as integers; reject floats up front
        for name in ("n", "density_pct", "sa_sweeps", "margin_ppm"):
            if not isinstance(getattr(self, name), int):
                raise ValueError(f"{name} must be an integer")
        if self.n < 8:
            raise ValueError("target n must be at least 8")
        if not 1 <= self.density_pct <= 100:
            raise ValueError("density_pct must be an integer percent in 1..100")
        if not self.j_min < self.j_max:
            raise ValueError("j_min must be below j_max")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.sa_sweeps < 0:
            raise ValueError("sa_sweeps must be non-negative")
        if self.margin_ppm < 0:
            raise ValueError("margin_ppm must be non-negative")
        if self.m < 1:
            raise ValueError("target density yields an empty matrix")

    @property
    def m(self) -> int:
        return entry_count(self.n, self.density_pct)

    def pack(self) -> bytes:
        return struct.pack(
            _TARGET_FMT, self.n, self.density_pct, self.j_min, self.j_max,
            _MODE_CODE[self.mode], self.sa_sweeps, self.margin_ppm,
        )

    @classmethod
    def unpack(cls, data: bytes) -> "DifficultyTarget":
        n, dens, j_min, j_max, mode_code, sweeps, margin = struct.unpack(_TARGET_FMT, data)
        if mode_code not in _MODE_NAME:
            raise ValueError(f"unknown mode code {mode_code}")
        return cls(n, dens, j_min, j_max, _MODE_NAME[mode_code], sweeps, margin)


@dataclass(frozen=True)
class BlockHeader:
    version: int
    prev_id: bytes
    merkle_root: bytes
    timestamp: int
    target: DifficultyTarget
    nonce: int

    def __post_init__(self):
        if len(self.prev_id) != 32 or len(self.merkle_root) != 32:
            raise ValueError("prev_id and merkle_root must be 32 bytes")
        if not 0 <= self.nonce < 2**32:
            raise ValueError("nonce must fit u32")
        if not 0 <= self.timestamp < 2**64:
            raise ValueError("timestamp must fit u64")

    def pack(self) -> bytes:
        return (
            struct.pack(_HEADER_FMT, self.version, self.prev_id, self.merkle_root, self.timestamp)
            + self.target.pack()
            + struct.pack("<I", self.nonce)
        )

    @classmethod
    def unpack(cls, data: bytes) -> "BlockHeader":
        if len(data) != HEADER_SIZE:
            raise ValueError(f"header must be {HEADER_SIZE} bytes")
        base = struct.calcsize(_HEADER_FMT)
        tsize = struct.calcsize(_TARGET_FMT)
        version, prev_id, merkle, ts = struct.unpack(_HEADER_FMT, data[:base])
        target = DifficultyTarget.unpack(data[base : base + tsize])
        (nonce,) = struct.unpack("<I", data[base + tsize :])
        return cls(version, prev_id, merkle, ts, target, nonce)


def encode_spins(spins) -> bytes:
    """1 bit per spin, LSB-first within each byte, +1 encoded as 1."""
    arr = np.asarray(spins)
    out = bytearray((len(arr) + 7) // 8)
    for i, s in enumerate(arr.tolist()):
        if s == 1:
            out[i >> 3] |= 1 << (i & 7)
        elif s != -1:
            raise ValueError("spins must be +1/-1")
    return bytes(out)


def decode_spins(data: bytes, n: int) -> np.ndarray:
    if len(data) != (n + 7) // 8:
        raise ValueError("spin encoding has wrong length")
    spins = np.empty(n, dtype=np.int8)
    for i in range(n):
        spins[i] = 1 if (data[i >> 3] >> (i & 7)) & 1 else -1
    for i in range(n, 8 * len(data)):
        if (data[i >> 3] >> (i & 7)) & 1:
            raise ValueError("nonzero padding bit in spin encoding")
    return spins


def encode_phases(phases) -> bytes:
    """16-bit fixed point per phase: round(theta * 65536 / 2pi), little-endian."""
    codes = [phase_code(t) for t in np.asarray(phases, dtype=np.float64).tolist()]
    return struct.pack(f"<{len(codes)}H", *codes)


def decode_phases(data: bytes, n: int) -> np.ndarray:
    if len(data) != 2 * n:
        raise ValueError("phase encoding has wrong length")
    codes = struct.unpack(f"<{n}H", data)
    return np.array([phase_from_code(c) for c in codes], dtype=np.float64)


@dataclass(frozen=True)
class Solution:
    mode: str
    encoded: bytes
    claimed_objective: float

    def decode(self, n: int) -> np.ndarray:
        if self.mode == "qubo":
            return decode_spins(self.encoded, n)
        return decode_phases(self.encoded, n)


def make_solution(q: CouplingMatrix, mode: str, config) -> Solution:
    """Quantize a solver configuration and attach its exact objective."""
    if mode == "qubo":
        encoded = encode_spins(as_spins(config, q.n))
        value = evaluate_qubo(q, decode_spins(encoded, q.n))
    elif mode == "qco":
        encoded = encode_phases(config)
        value = evaluate_qco(q, decode_phases(encoded, q.n))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Solution(mode, encoded, value)


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    transactions: tuple
    solution: Solution
    block_id: bytes = b""

    def __post_init__(self):
        object.__setattr__(self, "transactions", tuple(self.transactions))
        if not self.block_id:
            object.__setattr__(
                self, "block_id", digest(self.header.pack() + self.solution.encoded)
            )
        if len(self.block_id) != 32:
            raise ValueError("block_id must be 32 bytes")

    # convenience aliases used by the chain and simulator layers
    @property
    def prev_id(self) -> bytes:
        return self.header.prev_id

    @property
    def timestamp(self) -> int:
        return self.header.timestamp

    @property
    def target(self) -> DifficultyTarget:
        return self.header.target

    def serialize(self) -> bytes:
        parts = [self.header.pack(), struct.pack("<I", len(self.transactions))]
        for tx in self.transactions:
            parts.append(struct.pack("<I", len(tx.payload)))
            parts.append(tx.payload)
        parts.append(struct.pack("<BI", _MODE_CODE[self.solution.mode], len(self.solution.encoded)))
        parts.append(self.solution.encoded)
        parts.append(struct.pack("<d", self.solution.claimed_objective))
        return b"".join(parts)

    @classmethod
    def deserialize(cls, data: bytes) -> "Block":
        try:
            header = BlockHeader.unpack(data[:HEADER_SIZE])
            off = HEADER_SIZE
            (ntx,) = struct.unpack_from("<I", data, off)
            off += 4
            txs = []
            for _ in range(ntx):
                (plen,) = struct.unpack_from("<I", data, off)
                off += 4
                if plen > MAX_PAYLOAD:
                    raise ValueError("oversized payload")
                payload = data[off : off + plen]
                if len(payload) != plen:
                    raise ValueError("truncated payload")
                off += plen
                txs.append(Transaction(payload))
            mode_code, slen = struct.unpack_from("<BI", data, off)
            off += 5
            if mode_code not in _MODE_NAME:
                raise ValueError("unknown solution mode")
            encoded = data[off : off + slen]
            if len(encoded) != slen:
                raise ValueError("truncated solution")
            off += slen
            (objective,) = struct.unpack_from("<d", data, off)
            off += 8
        except struct.error as exc:
            raise ValueError(f"malformed block: {exc}") from exc
        if off != len(data):
            raise ValueError("trailing bytes after block")
        return cls(header, tuple(txs), Solution(_MODE_NAME[mode_code], encoded, objective))


def merkle_root(txs) -> bytes:
    """Binary Merkle tree over txids; an odd level duplicates its last node."""
    if not txs:
        raise ValueError("merkle root of zero transactions")
    level = [tx.txid for tx in txs]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [digest(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def h0_map(data: bytes, j_min: float, j_max: float) -> float:
    """Digest-prefix-to-range map: first 8 bytes of SHA-256, big-endian."""
    if not j_min < j_max:
        raise ValueError("j_min must be below j_max")
    u = int.from_bytes(digest(data)[:8], "big")
    return j_min + (u / 2**64) * (j_max - j_min)


def _value_items(txs, m: int):
    """Byte-string stream hashed (header-prefixed) into entry values.

    X=m: one payload each.  X>m: m balanced consecutive payload groups,
    each collapsed to its digest.  X<m: payloads, then txid pairs
    (1,2),(1,3),...,(2,3),..., then higher-order txid combinations; if
    those run out, counter items keep the stream going.
    """
    x = len(txs)
    if x == m:
        for tx in txs:
            yield tx.payload
        return
    if x > m:
        hi = math.ceil(x / m)
        cut = x - m * (hi - 1) if hi > 1 else m  # groups of size hi, then hi-1
        start = 0
        for g in range(m):
            size = hi if g < cut else hi - 1
            chunk = b"".join(tx.payload for tx in txs[start : start + size])
            start += size
            yield digest(chunk)
        return
    count = 0
    for tx in txs:
        yield tx.payload
        count += 1
    txids = [tx.txid for tx in txs]
    for k in range(2, x + 1):
        for combo in itertools.combinations(txids, k):
            if count >= m:
                return
            yield b"".join(combo)
            count += 1
    t = count
    while True:
        yield txids[t % x] + struct.pack("<Q", t)
        t += 1


def build_coupling_matrix(header: BlockHeader, txs) -> CouplingMatrix:
    """Deterministic block-content-to-instance map.

    Positions: first m pairs of an upper-triangle permutation seeded by
    DIGEST(prev_id || merkle_root || nonce).  Values: the value-item
    stream, header-prefixed, through h0_map.
    """
    if not txs:
        raise ValueError("a block needs at least one transaction")
    target = header.target
    m = target.m
    pos_seed = int.from_bytes(
        digest(header.prev_id + header.merkle_root + struct.pack("<I", header.nonce))[:8], "big"
    )
    positions = uniform_positions(target.n, m, pos_seed)
    hdr = header.pack()
    values = []
    for item in _value_items(list(txs), m):
        values.append(h0_map(hdr + item, target.j_min, target.j_max))
        if len(values) == m:
            break
    entries = [(i, j, v) for (i, j), v in zip(positions, values)]
    return CouplingMatrix.from_entries(target.n, entries)


def verifier_sa_params(target: DifficultyTarget) -> SaParams:
    """Baseline budget for a target; derivable by every verifier identically."""
    jscale = max(abs(target.j_min), abs(target.j_max))
    avg_deg = 2.0 * target.m / target.n
    t_hi = 4.0 * jscale * math.sqrt(avg_deg)
    t_lo = 0.05 * jscale
    return SaParams(sweeps=target.sa_sweeps, temp_hi=t_hi, temp_lo=t_lo, restarts=1, seed=0)


def threshold_for(q: CouplingMatrix, target: DifficultyTarget) -> float:
    return baseline_threshold(q, verifier_sa_params(target), target.mode)


def required_objective(threshold: float, target: DifficultyTarget) -> float:
    return (1.0 + target.margin_ppm * 1e-6) * threshold


def sa_miner(budget_factor: float = 4.0, restarts: int = 2):
    """Mining solver: SA with a multiple of the verifier budget, miner-salted seed."""

    def solve(q: CouplingMatrix, target: DifficultyTarget, iseed: int):
        base = verifier_sa_params(target)
        p = replace(
            base,
            sweeps=int(math.ceil(base.sweeps * budget_factor)),
            restarts=restarts,
            seed=derive_seed(iseed, SALT_MINER),
        )
        if target.mode == "qubo":
            return sa_qubo(q, p)[0]
        return sa_qco(q, p)[0]

    return solve


def gd_miner(params: gdsim.GdParams | None = None):
    """Mining solver backed by the gain-dissipative emulator."""

    def solve(q: CouplingMatrix, target: DifficultyTarget, iseed: int):
        base = params if params is not None else gdsim.GdParams()
        p = replace(base, seed=derive_seed(iseed, SALT_MINER))
        if target.mode == "qubo":
            return gdsim.solve_qubo(q, p)[0]
        return gdsim.solve_qco(q, p)[0]

    return solve


def baseline_miner():
    """Replicates the verifier's baseline run exactly (teaching/testing aid)."""

    def solve(q: CouplingMatrix, target: DifficultyTarget, iseed: int):
        p = replace(verifier_sa_params(target), seed=instance_seed(q))
        if target.mode == "qubo":
            return sa_qubo(q, p)[0]
        return quantized_phases(sa_qco(q, p)[0], q.n)

    return solve


def mine(parent, txs, target: DifficultyTarget, solver, timestamp: int,
         version: int = 1, start_nonce: int = 0, max_nonce: int = 2**32) -> Block:
    """Scan nonces until the solver beats the margin-scaled baseline.

    `parent` is a Block or a raw 32-byte id.  `solver(q, target, iseed)`
    returns a spin or phase configuration for the instance; it is
    quantized through the wire encoding before scoring.
    """
    prev_id = parent.block_id if isinstance(parent, Block) else bytes(parent)
    if len(prev_id) != 32:
        raise ValueError("parent id must be 32 bytes")
    txs = tuple(txs)
    root = merkle_root(txs)
    for nonce in range(start_nonce, min(max_nonce, 2**32)):
        header = BlockHeader(version, prev_id, root, timestamp, target, nonce)
        q = build_coupling_matrix(header, txs)
        config = solver(q, target, instance_seed(q))
        solution = make_solution(q, target.mode, config)
        if solution.claimed_objective >= required_objective(threshold_for(q, target), target):
            return Block(header, txs, solution)
    raise MiningError(f"nonce space exhausted after {min(max_nonce, 2**32) - start_nonce} attempts")


def verify(block: Block, parent_id: bytes, target: DifficultyTarget) -> None:
    """Full block check; raises VerifyError(reason) on the first failure.

    Checks in order: parent link, declared target, merkle root, solution
    decoding, exact objective recomputation, baseline threshold, block id.
    """
    if block.header.prev_id != parent_id:
        raise VerifyError("prev_mismatch")
    if block.header.target != target:
        raise VerifyError("target_mismatch")
    if not block.transactions:
        raise VerifyError("merkle_mismatch", "no transactions")
    if merkle_root(block.transactions) != block.header.merkle_root:
        raise VerifyError("merkle_mismatch")
    if block.solution.mode != target.mode:
        raise VerifyError("bad_solution", "mode differs from target")
    q = build_coupling_matrix(block.header, block.transactions)
    try:
        config = block.solution.decode(target.n)
    except ValueError as exc:
        raise VerifyError("bad_solution", str(exc)) from exc
    value = evaluate_qubo(q, config) if target.mode == "qubo" else evaluate_qco(q, config)
    if value != block.solution.claimed_objective:
        raise VerifyError("objective_mismatch")
    if not value >= required_objective(threshold_for(q, target), target):
        raise VerifyError("below_threshold")
    if digest(block.header.pack() + block.solution.encoded) != block.block_id:
        raise VerifyError("id_mismatch")


def genesis_block(target: DifficultyTarget) -> Block:
    """Deterministic chain root: zero parent, timestamp 0, all-zero solution."""
    txs = (Transaction(b"genesis"),)
    header = BlockHeader(1, GENESIS_PREV, merkle_root(txs), 0, target, 0)
    q = build_coupling_matrix(header, txs)
    if target.mode == "qubo":
        config = np.full(target.n, -1, dtype=np.int8)
    else:
        config = np.zeros(target.n)
    return Block(header, txs, make_solution(q, target.mode, config))


def adjust_difficulty(target: DifficultyTarget, recent, target_interval: float,
                      window: int) -> DifficultyTarget:
    """Retarget the baseline budget from observed block spacing.

    sa_sweeps scales by clamp(target_interval*window / observed_span,
    1/4, 4), rounded, floored at 1; all other fields are unchanged.
    `recent` is the (height, timestamp) list whose first/last entries
    bound the observed span.
    """
    if window < 2:
        raise ValueError("retarget window must be at least 2")
    if len(recent) < 2:
        raise ValueError("need at least two (height, timestamp) points")
    span = float(recent[-1][1]) - float(recent[0][1])
    ideal = target_interval * window
    ratio = 4.0 if span <= 0 else ideal / span
    ratio = min(4.0, max(0.25, ratio))
    sweeps = max(1, round(target.sa_sweeps * ratio))
    return replace(target, sa_sweeps=sweeps)
