"""Kernel backend selection.

The compiled extension is preferred when importable; otherwise the
pure-Python fallback is used.  Both produce bit-identical results (the
test suite enforces this), so the choice only affects speed.  Set
HAMCHAIN_PURE=1 to force the fallback, e.g. for the kernel benchmark.
"""

import os

from ._fallback import CD_CYCLES, CD_TOL, SEG_SWEEPS

if os.environ.get("HAMCHAIN_PURE") == "1":
    from . import _fallback as _impl

    BACKEND = "fallback"
else:
    try:
        from . import _native as _impl  # type: ignore[attr-defined]

        BACKEND = "native"
    except ImportError:
        from . import _fallback as _impl

        BACKEND = "fallback"

qubo_pair_sum = _impl.qubo_pair_sum
qco_pair_sum = _impl.qco_pair_sum
greedy_polish_qubo = _impl.greedy_polish_qubo
cd_polish_qco = _impl.cd_polish_qco
brute_force_qubo = _impl.brute_force_qubo
grid_search_qco = _impl.grid_search_qco
sa_qubo_run = _impl.sa_qubo_run
sa_qco_run = _impl.sa_qco_run
gd_run = _impl.gd_run

__all__ = [
    "BACKEND",
    "CD_CYCLES",
    "CD_TOL",
    "SEG_SWEEPS",
    "brute_force_qubo",
    "cd_polish_qco",
    "gd_run",
    "greedy_polish_qubo",
    "grid_search_qco",
    "qco_pair_sum",
    "qubo_pair_sum",
    "sa_qco_run",
    "sa_qubo_run",
]
