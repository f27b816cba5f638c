"""Shared oracle helpers.

Expected values throughout the suite come from these independent
re-implementations (dense linear algebra, exhaustive enumeration,
hashlib), never from the code under test.
"""

import itertools
import math

import numpy as np

from hamchain.problem import CouplingMatrix, InstanceSpec, random_instance

TWO_PI = 2.0 * math.pi


def dense(q: CouplingMatrix) -> np.ndarray:
    """Dense symmetric matrix rebuilt straight from the COO entries."""
    mat = np.zeros((q.n, q.n))
    for i, j, v in q.entries():
        mat[i, j] = v
        mat[j, i] = v
    mat += np.diag(q.diag)
    return mat


def dense_qubo(q: CouplingMatrix, s) -> float:
    s = np.asarray(s, dtype=np.float64)
    return float(s @ dense(q) @ s)


def dense_qco(q: CouplingMatrix, theta) -> float:
    z = np.exp(1j * np.asarray(theta, dtype=np.float64))
    return float(np.real(np.conjugate(z) @ dense(q) @ z))


def exhaustive_qubo_opt(q: CouplingMatrix):
    """Enumerate every sign-pinned spin vector; first maximum wins.

    Spin 0 is fixed at -1 and candidates are visited in lexicographic
    order (-1 before +1), so on exact-arithmetic instances ties resolve
    the same way the package contract does: smallest vector first.
    """
    mat = dense(q)
    best = -math.inf
    best_s = None
    for tail in itertools.product((-1.0, 1.0), repeat=q.n - 1):
        s = np.array((-1.0,) + tail)
        val = float(s @ mat @ s)
        if val > best:
            best = val
            best_s = s
    return best_s.astype(np.int8), best


def exhaustive_grid_opt(q: CouplingMatrix, k: int) -> float:
    """Best k-point phase-grid objective; node 0 pinned (rotation symmetry)."""
    best = -math.inf
    for tail in itertools.product(range(k), repeat=q.n - 1):
        theta = np.array((0,) + tail, dtype=np.float64) * (TWO_PI / k)
        val = dense_qco(q, theta)
        if val > best:
            best = val
    return best


def rand_inst(n: int, density: float = 50.0, seed: int = 0,
              j_min: float = -1.0, j_max: float = 1.0) -> CouplingMatrix:
    return random_instance(InstanceSpec(n, density, j_min, j_max, seed))


def triangle(j: float = -1.0) -> CouplingMatrix:
    # frustrated for j < 0: the classic 120-degree ground state
    return CouplingMatrix.from_entries(3, [(0, 1, j), (0, 2, j), (1, 2, j)])
