"""Solver-quality benchmark and compiled-vs-fallback kernel comparison.

The default table contains only deterministic quantities (objectives,
ratios, step counts), so repeated runs produce byte-identical output.
Wall-clock columns appear only behind --timings / --kernels.
"""

import hashlib
import time
from dataclasses import replace

import numpy as np

from .baselines import SaParams, sa_qubo
from .gdsim import GdParams, _scaled_csr, _split, initial_state
from .gdsim import solve_qubo as gd_solve_qubo
from .kernels import BACKEND
from .problem import InstanceSpec, brute_force_qubo, random_instance

QUALITY_SIZES = (12, 16)
QUALITY_SEEDS = (0, 1, 2)
QUALITY_DENSITY = 50.0

_SA = SaParams(sweeps=256, temp_hi=4.0, temp_lo=0.05, restarts=2, seed=1)
_GD = GdParams(max_steps=20000, seed=1)


def quality_rows(sizes=QUALITY_SIZES, seeds=QUALITY_SEEDS, density=QUALITY_DENSITY,
                 timings: bool = False):
    """Per-instance optimum vs heuristic objectives on a seeded suite."""
    rows = []
    for n in sizes:
        for seed in seeds:
            q = random_instance(InstanceSpec(n, density, -1.0, 1.0, seed))
            t0 = time.perf_counter()
            _, opt = brute_force_qubo(q)
            t_brute = time.perf_counter() - t0
            t0 = time.perf_counter()
            _, sa_val = sa_qubo(q, _SA)
            t_sa = time.perf_counter() - t0
            t0 = time.perf_counter()
            _, gd_val, report = gd_solve_qubo(q, _GD)
            t_gd = time.perf_counter() - t0
            row = {
                "n": n,
                "seed": seed,
                "optimum": opt,
                "sa": sa_val,
                "sa_ratio": sa_val / opt,
                "gd": gd_val,
                "gd_ratio": gd_val / opt,
                "gd_steps": report.steps,
                "gd_converged": report.converged,
            }
            if timings:
                row["brute_s"] = t_brute
                row["sa_s"] = t_sa
                row["gd_s"] = t_gd
            rows.append(row)
    return rows


def _gd_once(mod, q, p: GdParams, steps: int):
    state = initial_state(q, p)
    re, im, gm = _split(state)
    indptr, nbr, w, _ = _scaled_csr(q)
    t0 = time.perf_counter()
    out = mod.gd_run(
        q.n, indptr, nbr, w, re, im, gm, p.v_array(q.n),
        p.sigma, p.u, p.ramp_rate, p.feedback_gain, p.dt,
        p.noise_rho, p.noise_theta, p.density_tol, p.phase_rate_tol,
        steps, p.seed, 0, False,
    )
    elapsed = time.perf_counter() - t0
    digest = hashlib.sha256(re.tobytes() + im.tobytes() + gm.tobytes()).hexdigest()
    return out, digest, elapsed


def kernel_rows(n: int = 48, density: float = 30.0, sweeps: int = 400, gd_steps: int = 3000):
    """Run identical workloads on every available backend.

    Returns (rows, bit_identical).  Results must agree bit for bit; the
    timing columns are the only thing the compiled extension buys.
    """
    from .kernels import _fallback

    backends = [("fallback", _fallback)]
    try:
        from .kernels import _native  # type: ignore[attr-defined]

        backends.append(("native", _native))
    except ImportError:
        pass
    q = random_instance(InstanceSpec(n, density, -1.0, 1.0, 7))
    indptr, nbr, w = q.csr()
    p = replace(_GD, seed=5)
    rows = []
    for name, mod in backends:
        t0 = time.perf_counter()
        spins, sa_val = mod.sa_qubo_run(
            q.n, indptr, nbr, w, q.ii, q.jj, q.vv, q.trace,
            sweeps, 4.0, 0.05, 2, 11,
        )
        t_sa = time.perf_counter() - t0
        (_, _, mu, resid, spread), gd_digest, t_gd = _gd_once(mod, q, p, gd_steps)
        rows.append({
            "backend": name,
            "sa_value": sa_val,
            "sa_spins": hashlib.sha256(np.asarray(spins, dtype=np.int8).tobytes()).hexdigest()[:16],
            "sa_s": t_sa,
            "gd_mu": mu,
            "gd_resid": resid,
            "gd_state": gd_digest[:16],
            "gd_s": t_gd,
        })
    keys = ("sa_value", "sa_spins", "gd_mu", "gd_resid", "gd_state")
    identical = all(all(r[k] == rows[0][k] for k in keys) for r in rows)
    return rows, identical


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return format(value, ".6f")
    return str(value)


def render_table(rows, columns) -> str:
    header = [c for c in columns]
    cells = [[_fmt(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(h), *(len(row[i]) for row in cells)) if cells else len(h)
              for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


def run_bench(timings: bool = False, kernels: bool = False) -> str:
    """Text report used by the CLI."""
    out = [f"solver quality (backend: {BACKEND})"]
    cols = ["n", "seed", "optimum", "sa", "sa_ratio", "gd", "gd_ratio",
            "gd_steps", "gd_converged"]
    if timings:
        cols += ["brute_s", "sa_s", "gd_s"]
    out.append(render_table(quality_rows(timings=timings), cols))
    if kernels:
        rows, identical = kernel_rows()
        out.append("")
        out.append("kernel backends (identical workloads)")
        out.append(render_table(
            rows, ["backend", "sa_value", "sa_spins", "sa_s", "gd_mu", "gd_resid",
                   "gd_state", "gd_s"]))
        out.append(f"bit-identical across backends: {'yes' if identical else 'NO'}")
        if len(rows) == 2 and rows[1]["gd_s"] > 0:
            out.append(
                "native speedup: sa {:.1f}x, gd {:.1f}x".format(
                    rows[0]["sa_s"] / max(rows[1]["sa_s"], 1e-9),
                    rows[0]["gd_s"] / max(rows[1]["gd_s"], 1e-9),
                )
            )
    return "\n".join(out)
