"""Gain-dissipative oscillator network emulator.

Integrates the rate equation

    dpsi_i/dt = (gamma_i - i v_i - sigma |psi_i|^2 - i U |psi_i|^2) psi_i
                + sum_j J_ij psi_j  (+ noise)

with a slowly ramped, density-feedback-controlled gain, and reads the
optimizer off the phases at the condensation threshold: the first
coherent steady state with equalized densities carries phases that
(locally) minimize the XY energy of J, i.e. maximize the QCO objective.

The hot loop lives in the kernel backends; this module owns parameter
handling, state types, steady-state reporting, solution extraction,
and the waveform-overlap geometry used to build physically motivated
instances.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .problem import CouplingMatrix, evaluate_qubo, normalize_phases
from .rng import SALT_GD_INIT, SplitMix64, derive_seed


@dataclass(frozen=True)
class GdParams:
    """Integrator and control parameters.

    `v` may be a scalar (broadcast) or a length-n sequence.  The solver
    entry points rescale couplings to unit maximum row weight before
    integrating, so these defaults are in rescaled units and work across
    coupling magnitudes; `step` applies them to the raw matrix.
    """

    sigma: float = 1.0
    u: float = 0.0
    v: object = 0.0
    gamma0: float = -0.6
    ramp_rate: float = 0.002
    dt: float = 0.05
    noise_rho: float = 0.01
    noise_theta: float = 0.01
    density_tol: float = 5e-3
    phase_rate_tol: float = 2e-2
    max_steps: int = 60000
    feedback_gain: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.u >= 0:
            raise ValueError("u must be non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (self.density_tol > 0 and self.phase_rate_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.noise_rho < 0 or self.noise_theta < 0:
            raise ValueError("noise amplitudes must be non-negative")

    def v_array(self, n: int) -> np.ndarray:
        arr = np.asarray(self.v, dtype=np.float64)
        if arr.ndim == 0:
            arr = np.full(n, float(arr))
        if arr.shape != (n,):
            raise ValueError("v must be scalar or length n")
        return np.ascontiguousarray(arr)


@dataclass
class OscillatorState:
    """Network state: complex amplitudes, per-node gains, elapsed time."""

    psi: np.ndarray
    gamma_eff: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.psi = np.ascontiguousarray(self.psi, dtype=np.complex128)
        self.gamma_eff = np.ascontiguousarray(self.gamma_eff, dtype=np.float64)
        if self.psi.shape != self.gamma_eff.shape or self.psi.ndim != 1:
            raise ValueError("psi and gamma_eff must be 1-D and equal length")

    @property
    def n(self) -> int:
        return int(self.psi.shape[0])

    def rho(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def theta(self) -> np.ndarray:
        return np.angle(self.psi)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.psi).all() and np.isfinite(self.gamma_eff).all())


@dataclass(frozen=True)
class SteadyStateReport:
    converged: bool
    steps: int
    mu: float
    max_density_residual: float
    density_spread: float
    phase_rate_spread: float


def initial_state(q: CouplingMatrix, p: GdParams) -> OscillatorState:
    """Small seeded random amplitudes below threshold, uniform gain."""
    g = SplitMix64(derive_seed(p.seed, SALT_GD_INIT))
    re = np.empty(q.n)
    im = np.empty(q.n)
    for i in range(q.n):
        re[i] = 1e-3 * (2.0 * g.uniform() - 1.0)
        im[i] = 1e-3 * (2.0 * g.uniform() - 1.0)
    return OscillatorState(re + 1j * im, np.full(q.n, p.gamma0), 0.0)


def _split(state: OscillatorState):
    re = np.ascontiguousarray(state.psi.real)
    im = np.ascontiguousarray(state.psi.imag)
    gm = state.gamma_eff.copy()
    return re, im, gm


def step(state: OscillatorState, q: CouplingMatrix, p: GdParams) -> OscillatorState:
    """One explicit Euler-Maruyama step of the rate equation.

    Applies the gain ramp but no density feedback (see pump_feedback).
    The noise stream is indexed by the global step number round(t/dt),
    so trajectories are reproducible however stepping is chunked.
    """
    if state.n != q.n:
        raise ValueError("state and matrix dimensions differ")
    if not state.is_finite():
        raise ValueError("state is non-finite")
    indptr, nbr, w = q.csr()
    re, im, gm = _split(state)
    idx = int(round(state.t / p.dt))
    kernels.gd_run(
        q.n, indptr, nbr, w, re, im, gm, p.v_array(q.n),
        p.sigma, p.u, p.ramp_rate, 0.0, p.dt,
        p.noise_rho, p.noise_theta, p.density_tol, p.phase_rate_tol,
        1, p.seed, idx, False,
    )
    out = OscillatorState(re + 1j * im, gm, state.t + p.dt)
    if not out.is_finite():
        raise ValueError(f"blow-up: non-finite amplitudes at step {idx + 1}")
    return out


def pump_feedback(state: OscillatorState, p: GdParams) -> OscillatorState:
    """Proportional pump control: lower gain where density exceeds the mean."""
    rho = state.rho()
    gm = state.gamma_eff - p.feedback_gain * (rho - rho.mean()) * p.dt
    return OscillatorState(state.psi.copy(), gm, state.t)


def _scaled_csr(q: CouplingMatrix):
    indptr, nbr, w = q.csr()
    scale = 0.0
    ptr = indptr.tolist()
    wl = w.tolist()
    for i in range(q.n):
        row = 0.0
        for pp in range(ptr[i], ptr[i + 1]):
            row += abs(wl[pp])
        if row > scale:
            scale = row
    if scale == 0.0:
        scale = 1.0
    return indptr, nbr, w / scale, scale


def solve_qco(q: CouplingMatrix, p: GdParams | None = None, collect=None):
    """Integrate with pump feedback until the steady state; read out phases.

    Returns (phases, report) with phases normalized so theta_0 = 0.
    When `collect` is a list, (t, rho, theta, gamma_eff) snapshots are
    appended each step (same trajectory, chunk-invariant noise).
    """
    if p is None:
        p = GdParams()
    indptr, nbr, w, _ = _scaled_csr(q)
    state = initial_state(q, p)
    re, im, gm = _split(state)
    varr = p.v_array(q.n)
    args = (q.n, indptr, nbr, w, re, im, gm, varr,
            p.sigma, p.u, p.ramp_rate, p.feedback_gain, p.dt,
            p.noise_rho, p.noise_theta, p.density_tol, p.phase_rate_tol)
    if collect is None:
        steps, conv, mu, resid, rate_spread = kernels.gd_run(
            *args, p.max_steps, p.seed, 0, True)
    else:
        steps = 0
        conv = False
        mu = resid = rate_spread = math.inf
        for s in range(p.max_steps):
            _, conv, mu, resid, rate_spread = kernels.gd_run(
                *args, 1, p.seed, s, False)
            steps = s + 1
            collect.append((steps * p.dt,
                            re * re + im * im,
                            np.arctan2(im, re),
                            gm.copy()))
            if conv:
                break
    psi = re + 1j * im
    if not (np.isfinite(psi).all() and np.isfinite(gm).all()):
        raise ValueError(f"blow-up: non-finite amplitudes at step {steps}")
    theta = np.arctan2(im, re)
    phases = normalize_phases(theta - theta[0], q.n)
    rho = re * re + im * im
    report = SteadyStateReport(
        converged=bool(conv),
        steps=int(steps),
        mu=float(mu),
        max_density_residual=float(resid),
        density_spread=float(rho.max() - rho.min()),
        phase_rate_spread=float(rate_spread),
    )
    return phases, report


def solve_qubo(q: CouplingMatrix, p: GdParams | None = None):
    """Solve QCO, project spins s_i = sign(cos theta_i), polish greedily.

    Returns (spins, objective, report); report.converged propagates the
    steady-state flag.
    """
    phases, report = solve_qco(q, p)
    cosines = np.cos(phases)
    spins = np.where(cosines >= 0.0, 1, -1).astype(np.int8)
    indptr, nbr, w = q.csr()
    kernels.greedy_polish_qubo(q.n, indptr, nbr, w, spins)
    return spins, evaluate_qubo(q, spins), report


def step_polar(state: OscillatorState, q: CouplingMatrix, p: GdParams) -> OscillatorState:
    """One Euler step of the polar form (density/phase equations).

    Diagnostic twin of `step` (zero noise): the two must agree to
    O(dt^2), which the consistency tests check by Richardson
    extrapolation.  Requires all densities nonzero.
    """
    rho = state.rho()
    if not (rho > 0).all():
        raise ValueError("polar form needs nonzero densities")
    theta = state.theta()
    gm = state.gamma_eff
    varr = p.v_array(q.n)
    indptr, nbr, w = q.csr()
    ptr = indptr.tolist()
    drho = np.zeros(q.n)
    dth = np.zeros(q.n)
    for i in range(q.n):
        ci = 0.0
        si = 0.0
        for pp in range(ptr[i], ptr[i + 1]):
            j = int(nbr[pp])
            ci += w[pp] * math.sqrt(rho[i] * rho[j]) * math.cos(theta[i] - theta[j])
            si += w[pp] * math.sqrt(rho[j] / rho[i]) * math.sin(theta[i] - theta[j])
        drho[i] = 2.0 * ((gm[i] - p.sigma * rho[i]) * rho[i] + ci)
        dth[i] = -varr[i] - p.u * rho[i] - si
    rho2 = rho + p.dt * drho
    th2 = theta + p.dt * dth
    if (rho2 < 0).any():
        raise ValueError("polar step drove a density negative; reduce dt")
    psi = np.sqrt(rho2) * (np.cos(th2) + 1j * np.sin(th2))
    gm2 = gm + p.dt * p.ramp_rate
    return OscillatorState(psi, gm2, state.t + p.dt)


def phase_flow_step(q: CouplingMatrix, theta: np.ndarray, dt: float) -> np.ndarray:
    """Euler step of the equal-density phase flow dtheta_i/dt = -sum_j J_ij sin(theta_i - theta_j).

    This is the gradient descent of xy_energy; used to check the
    energy-non-increasing property.
    """
    indptr, nbr, w = q.csr()
    ptr = indptr.tolist()
    out = np.array(theta, dtype=np.float64)
    grad = np.zeros(q.n)
    for i in range(q.n):
        s = 0.0
        for pp in range(ptr[i], ptr[i + 1]):
            s += w[pp] * math.sin(theta[i] - theta[int(nbr[pp])])
        grad[i] = s
    return out - dt * grad


@dataclass(frozen=True)
class WaveformSpec:
    """Geometry for overlap-derived couplings: Gaussian waveforms on a plane."""

    positions: tuple
    width: float
    grid_extent: float
    grid_step: float

    def __post_init__(self):
        object.__setattr__(self, "positions", tuple((float(x), float(y)) for x, y in self.positions))
        if not self.width > 0:
            raise ValueError("width must be positive")
        if not self.grid_step > 0:
            raise ValueError("grid_step must be positive")
        reach = max((max(abs(x), abs(y)) for x, y in self.positions), default=0.0)
        if self.grid_extent < reach + 5.0 * self.width:
            raise ValueError("grid must cover all positions plus 5 waists")

    @property
    def n(self) -> int:
        return len(self.positions)


def _axes(spec: WaveformSpec):
    if spec.grid_step > spec.width / 4.0:
        raise ValueError("grid too coarse: step must be at most width/4")
    return np.arange(-spec.grid_extent, spec.grid_extent + 0.5 * spec.grid_step, spec.grid_step)


def _waveforms(spec: WaveformSpec):
    ax = _axes(spec)
    xg, yg = np.meshgrid(ax, ax, indexing="ij")
    out = []
    for (x0, y0) in spec.positions:
        r2 = (xg - x0) ** 2 + (yg - y0) ** 2
        out.append(np.exp(-r2 / (2.0 * spec.width**2)))
    return out


def total_mass(spec: WaveformSpec, theta) -> float:
    """Quadrature of the total particle number integral for given phases."""
    th = np.asarray(theta, dtype=np.float64)
    if th.shape != (spec.n,):
        raise ValueError("phase count must match node count")
    waves = _waveforms(spec)
    fr = np.zeros_like(waves[0])
    fi = np.zeros_like(waves[0])
    for i, wv in enumerate(waves):
        fr += wv * math.cos(th[i])
        fi += wv * math.sin(th[i])
    cell = spec.grid_step * spec.grid_step
    return float(np.sum(fr * fr + fi * fi) * cell)


def waveform_norms(spec: WaveformSpec) -> np.ndarray:
    """Per-node quadrature of the waveform intensity integral."""
    waves = _waveforms(spec)
    cell = spec.grid_step * spec.grid_step
    return np.array([float(np.sum(wv * wv) * cell) for wv in waves])


def overlap_couplings(spec: WaveformSpec) -> CouplingMatrix:
    """Geometry-derived couplings J_ij = 2 * integral(Psi_i Psi_j) (real waveforms)."""
    waves = _waveforms(spec)
    cell = spec.grid_step * spec.grid_step
    entries = []
    for i in range(spec.n):
        for j in range(i + 1, spec.n):
            entries.append((i, j, 2.0 * float(np.sum(waves[i] * waves[j]) * cell)))
    return CouplingMatrix.from_entries(spec.n, entries)
