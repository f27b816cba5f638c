"""Optimization instances: QUBO/QCO objectives, Ising/XY energies, oracles.

A problem is a real symmetric coupling matrix with zero or more diagonal
terms, stored as sorted upper-triangle triplets.  Spin and phase
configurations are plain numpy arrays (int8 in {-1,+1}, float64 radians)
validated at the API boundary.

Objective values are consensus-critical: every sum runs in fixed
row-major storage order through the kernel backends, so two nodes
always agree on the exact double.  The QUBO/Ising and QCO/XY identities
(objective = trace - 2*energy) hold exactly, not just to rounding,
because both sides share one pair-sum.
"""

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .rng import SALT_POSITIONS, SALT_VALUES, TWO_PI, SplitMix64, derive_seed

BRUTE_FORCE_CAP = 24
GRID_BUDGET_CAP = 1_000_000_000
PHASE_LEVELS = 65536


@dataclass(eq=False)
class CouplingMatrix:
    """Sparse symmetric coupling matrix Q.

    Only i<j entries are stored; (j,i) is implied.  `ii/jj/vv` are
    parallel arrays sorted by (i,j); `diag` holds the n diagonal values
    (zero for every matrix the chain protocol produces, but carried so
    trace identities stay testable).
    """

    n: int
    ii: np.ndarray
    jj: np.ndarray
    vv: np.ndarray
    diag: np.ndarray

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise ValueError("n must be a positive integer")
        self.ii = np.ascontiguousarray(self.ii, dtype=np.int32)
        self.jj = np.ascontiguousarray(self.jj, dtype=np.int32)
        self.vv = np.ascontiguousarray(self.vv, dtype=np.float64)
        self.diag = np.ascontiguousarray(self.diag, dtype=np.float64)
        if not (self.ii.shape == self.jj.shape == self.vv.shape) or self.ii.ndim != 1:
            raise ValueError("entry arrays must be 1-D and equal length")
        if self.diag.shape != (self.n,):
            raise ValueError("diag must have length n")
        if self.m:
            if self.ii.min() < 0 or self.jj.max() >= self.n:
                raise ValueError("entry index out of range")
            if not (self.ii < self.jj).all():
                raise ValueError("entries must satisfy i < j")
            order = np.lexsort((self.jj, self.ii))
            self.ii = np.ascontiguousarray(self.ii[order])
            self.jj = np.ascontiguousarray(self.jj[order])
            self.vv = np.ascontiguousarray(self.vv[order])
            same = (self.ii[1:] == self.ii[:-1]) & (self.jj[1:] == self.jj[:-1])
            if same.any():
                raise ValueError("duplicate (i, j) entry")
        if not np.isfinite(self.vv).all() or not np.isfinite(self.diag).all():
            raise ValueError("couplings must be finite")

    @classmethod
    def from_entries(cls, n: int, entries, diag=None) -> "CouplingMatrix":
        entries = list(entries)
        ii = np.array([e[0] for e in entries], dtype=np.int32)
        jj = np.array([e[1] for e in entries], dtype=np.int32)
        vv = np.array([e[2] for e in entries], dtype=np.float64)
        if diag is None:
            diag = np.zeros(n, dtype=np.float64)
        return cls(n, ii, jj, vv, diag)

    @property
    def m(self) -> int:
        return int(self.ii.shape[0])

    def entries(self):
        for k in range(self.m):
            yield int(self.ii[k]), int(self.jj[k]), float(self.vv[k])

    @property
    def trace(self) -> float:
        t = self.__dict__.get("_trace")
        if t is None:
            t = 0.0
            for d in self.diag.tolist():
                t += d
            self.__dict__["_trace"] = t
        return t

    def csr(self):
        """Symmetric adjacency (indptr, nbr, w) with sorted neighbor lists."""
        c = self.__dict__.get("_csr")
        if c is None:
            counts = [0] * self.n
            iil = self.ii.tolist()
            jjl = self.jj.tolist()
            vvl = self.vv.tolist()
            for k in range(len(iil)):
                counts[iil[k]] += 1
                counts[jjl[k]] += 1
            indptr = np.zeros(self.n + 1, dtype=np.int32)
            for i in range(self.n):
                indptr[i + 1] = indptr[i] + counts[i]
            nbr = np.zeros(2 * len(iil), dtype=np.int32)
            w = np.zeros(2 * len(iil), dtype=np.float64)
            cursor = indptr[: self.n].copy()
            for k in range(len(iil)):
                a, b, v = iil[k], jjl[k], vvl[k]
                nbr[cursor[a]] = b
                w[cursor[a]] = v
                cursor[a] += 1
                nbr[cursor[b]] = a
                w[cursor[b]] = v
                cursor[b] += 1
            c = (indptr, nbr, w)
            self.__dict__["_csr"] = c
        return c

    def digest(self) -> bytes:
        """Canonical 32-byte digest of the matrix contents."""
        d = self.__dict__.get("_digest")
        if d is None:
            h = hashlib.sha256()
            h.update(b"HAMQ1")
            h.update(struct.pack("<II", self.n, self.m))
            for k in range(self.m):
                h.update(struct.pack("<IId", int(self.ii[k]), int(self.jj[k]), float(self.vv[k])))
            for x in self.diag.tolist():
                h.update(struct.pack("<d", x))
            d = h.digest()
            self.__dict__["_digest"] = d
        return d


@dataclass(frozen=True)
class InstanceSpec:
    """Parameters of a random benchmark instance."""

    n: int
    density_pct: float
    j_min: float
    j_max: float
    seed: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 0.0 < self.density_pct <= 100.0:
            raise ValueError("density must be in (0, 100]")
        if not self.j_min < self.j_max:
            raise ValueError("j_min must be below j_max")


def entry_count(n: int, density_pct: float) -> int:
    """m = round(n(n-1)*D/200): nonzero upper-triangle entries at density D%."""
    return int(round(n * (n - 1) * float(density_pct) / 200.0))


def as_spins(s, n: int) -> np.ndarray:
    arr = np.asarray(s)
    if arr.shape != (n,):
        raise ValueError(f"expected {n} spins, got shape {arr.shape}")
    if not np.isin(arr, (-1, 1)).all():
        raise ValueError("spins must be exactly +1 or -1")
    return np.ascontiguousarray(arr, dtype=np.int8)


def as_angles(theta, n: int) -> np.ndarray:
    arr = np.ascontiguousarray(theta, dtype=np.float64)
    if arr.shape != (n,):
        raise ValueError(f"expected {n} phases, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("phases must be finite")
    return arr


def normalize_phases(theta, n: int) -> np.ndarray:
    """Wrap angles into [0, 2*pi)."""
    arr = as_angles(theta, n)
    out = np.mod(arr, TWO_PI)
    out[out == TWO_PI] = 0.0
    return out


def evaluate_qubo(q: CouplingMatrix, s) -> float:
    """z^T Q z for z = s in {-1,+1}^n: trace + 2*sum_{i<j} Q_ij s_i s_j."""
    arr = as_spins(s, q.n)
    return q.trace + 2.0 * kernels.qubo_pair_sum(q.ii, q.jj, q.vv, arr)


def evaluate_qco(q: CouplingMatrix, theta) -> float:
    """z^H Q z for z_i = e^{i theta_i}: trace + 2*sum Q_ij cos(theta_i - theta_j)."""
    arr = as_angles(theta, q.n)
    return q.trace + 2.0 * kernels.qco_pair_sum(q.ii, q.jj, q.vv, arr)


def ising_energy(q: CouplingMatrix, s) -> float:
    """-sum_{i<j} J_ij s_i s_j (diagonal ignored)."""
    arr = as_spins(s, q.n)
    return -kernels.qubo_pair_sum(q.ii, q.jj, q.vv, arr)


def xy_energy(q: CouplingMatrix, theta) -> float:
    """-sum_{i<j} J_ij cos(theta_i - theta_j)."""
    arr = as_angles(theta, q.n)
    return -kernels.qco_pair_sum(q.ii, q.jj, q.vv, arr)


def brute_force_qubo(q: CouplingMatrix):
    """Exact QUBO maximizer by Gray-code walk over half the hypercube.

    Ties go to the lexicographically smallest spin vector (-1 before +1).
    Capped at n = 24.
    """
    if q.n > BRUTE_FORCE_CAP:
        raise ValueError(f"brute force capped at n={BRUTE_FORCE_CAP}, got n={q.n}")
    indptr, nbr, w = q.csr()
    spins, pair_sum = kernels.brute_force_qubo(q.n, indptr, nbr, w, q.ii, q.jj, q.vv)
    return spins, q.trace + 2.0 * pair_sum


def _grid_order(q: CouplingMatrix):
    """Greedy node ordering: each next node maximizes weight into placed set."""
    indptr, nbr, w = q.csr()
    ptr = indptr.tolist()
    nb = nbr.tolist()
    wl = w.tolist()
    tot = [0.0] * q.n
    for i in range(q.n):
        for p in range(ptr[i], ptr[i + 1]):
            tot[i] += abs(wl[p])
    placed_w = [0.0] * q.n
    placed = [False] * q.n
    order = []
    for _ in range(q.n):
        best = -1
        for i in range(q.n):
            if placed[i]:
                continue
            if best < 0 or (placed_w[i], tot[i], -i) > (placed_w[best], tot[best], -best):
                best = i
        order.append(best)
        placed[best] = True
        for p in range(ptr[best], ptr[best + 1]):
            placed_w[nb[p]] += abs(wl[p])
    return order


def grid_search_qco(q: CouplingMatrix, k: int):
    """Best objective over phases restricted to multiples of 2*pi/k.

    The first placed node's phase is pinned to 0 (global-rotation
    invariance), so the search space is k^(n-1), capped at 1e9; pruning
    via a branch-and-bound weight bound keeps the visited set far
    smaller on structured instances.
    """
    if k < 1:
        raise ValueError("grid resolution must be at least 1")
    if k ** max(q.n - 1, 0) > GRID_BUDGET_CAP:
        raise ValueError(f"grid budget k^(n-1) exceeds {GRID_BUDGET_CAP:g}")
    order = _grid_order(q)
    lev_of = [0] * q.n
    for lev, node in enumerate(order):
        lev_of[node] = lev
    indptr, nbr, w = q.csr()
    ptr = indptr.tolist()
    nb = nbr.tolist()
    wl = w.tolist()
    lev_edges = [[] for _ in range(q.n)]
    for lev, node in enumerate(order):
        for p in range(ptr[node], ptr[node + 1]):
            other = lev_of[nb[p]]
            if other < lev:
                lev_edges[lev].append((other, wl[p]))
        lev_edges[lev].sort()
    lev_ptr = np.zeros(q.n + 1, dtype=np.int32)
    flat_nbr = []
    flat_w = []
    for lev in range(q.n):
        for other, val in lev_edges[lev]:
            flat_nbr.append(other)
            flat_w.append(val)
        lev_ptr[lev + 1] = len(flat_nbr)
    suffix = np.zeros(q.n + 1, dtype=np.float64)
    acc = 0.0
    for lev in range(q.n - 1, -1, -1):
        for _, val in lev_edges[lev]:
            acc += abs(val)
        suffix[lev] = acc
    digits, _ = kernels.grid_search_qco(
        k,
        q.n,
        lev_ptr,
        np.array(flat_nbr, dtype=np.int32),
        np.array(flat_w, dtype=np.float64),
        suffix,
    )
    theta = np.zeros(q.n, dtype=np.float64)
    for lev, node in enumerate(order):
        theta[node] = (TWO_PI * int(digits[lev])) / k
    return theta, evaluate_qco(q, theta)


def random_instance(spec: InstanceSpec) -> CouplingMatrix:
    """Deterministic random instance: m seeded positions, uniform values."""
    m = entry_count(spec.n, spec.density_pct)
    if m < 1:
        raise ValueError("density yields an empty matrix")
    pos = uniform_positions(spec.n, m, derive_seed(spec.seed, SALT_POSITIONS))
    g = SplitMix64(derive_seed(spec.seed, SALT_VALUES))
    span = spec.j_max - spec.j_min
    entries = [(i, j, spec.j_min + g.uniform() * span) for i, j in pos]
    return CouplingMatrix.from_entries(spec.n, entries)


def unrank_pair(n: int, t: int):
    """The t-th pair of the row-major upper-triangle enumeration."""
    r = n * (n - 1) // 2 - 1 - t
    b = (math.isqrt(8 * r + 1) - 1) // 2
    i = n - 2 - b
    j = n - 1 - (r - b * (b + 1) // 2)
    return i, j


def uniform_positions(n: int, m: int, seed: int):
    """First m pairs of a seeded pseudorandom upper-triangle permutation."""
    total = n * (n - 1) // 2
    if m > total:
        raise ValueError("more positions requested than pairs exist")
    perm = np.arange(total, dtype=np.int64)
    g = SplitMix64(seed)
    for k in range(m):
        r = k + g.below(total - k)
        perm[k], perm[r] = perm[r], perm[k]
    return [unrank_pair(n, int(t)) for t in perm[:m]]


def phase_code(theta: float) -> int:
    """Quantize an angle to the 16-bit protocol grid."""
    return int(round(theta * PHASE_LEVELS / TWO_PI)) % PHASE_LEVELS


def phase_from_code(code: int) -> float:
    """Exact grid angle for a 16-bit code; round-trips through phase_code."""
    return (TWO_PI * code) / PHASE_LEVELS


def write_instance(q: CouplingMatrix, path, j_min: float, j_max: float) -> None:
    """Write the plain-text instance format: `n m j_min j_max`, then entries."""
    if not j_min < j_max:
        raise ValueError("j_min must be below j_max")
    if np.any(q.diag != 0.0):
        raise ValueError("instance files carry no diagonal; matrix has nonzero diag")
    lines = [f"{q.n} {q.m} {j_min!r} {j_max!r}"]
    for i, j, v in q.entries():
        lines.append(f"{i} {j} {v!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_instance(path) -> CouplingMatrix:
    with open(path) as fh:
        tokens = fh.read().split("\n")
    head = tokens[0].split()
    if len(head) != 4:
        raise ValueError("header must be 'n m j_min j_max'")
    n, m = int(head[0]), int(head[1])
    j_min, j_max = float(head[2]), float(head[3])
    if not j_min < j_max:
        raise ValueError("header range invalid")
    body = [ln for ln in tokens[1:] if ln.strip()]
    if len(body) != m:
        raise ValueError(f"expected {m} entries, found {len(body)}")
    entries = []
    for ln in body:
        parts = ln.split()
        if len(parts) != 3:
            raise ValueError(f"bad entry line: {ln!r}")
        i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        if not j_min <= v <= j_max:
            raise ValueError(f"value {v!r} outside declared range")
        entries.append((i, j, v))
    return CouplingMatrix.from_entries(n, entries)
