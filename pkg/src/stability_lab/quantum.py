"""Schrodinger evolution and its Madelung (hydrodynamic) reading.

A wave field psi = A exp(iS/hbar) is evolved with Crank-Nicolson, split into
density P = A**2 and action S, and the pair (P, S) is checked against the
continuity and quantum Hamilton-Jacobi equations.  Bohmian trajectories follow
the velocity field dS/dx / m.

Spatial terms in the two-snapshot residuals are averaged over both snapshots so
that, together with the forward difference in time, every residual is centred
at the half step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import lapack

from .errors import (
    AmplitudeBelowFloorError,
    BoundaryLeakWarning,
    TrajectoryLeftGridError,
)
from .numerics import (
    DEFAULT_AMPLITUDE_FLOOR,
    Field,
    Grid1D,
    check_amplitude,
    gradient_array,
    integrate,
    laplacian_array,
    same_grid,
    unwrap_phase,
    wrap_angle,
)

EDGE_LEAK_RATIO = 1e-6
RESOLVED_AMPLITUDE = 1e-6


@dataclass(frozen=True)
class WaveField:
    psi: Field
    m: float = 1.0
    hbar: float = 1.0
    t: float = 0.0

    def __post_init__(self):
        if not (self.m > 0 and self.hbar > 0):
            raise ValueError("mass and hbar must be positive")

    @property
    def grid(self) -> Grid1D:
        return self.psi.grid

    @property
    def x(self):
        return self.psi.grid.x

    def norm(self) -> float:
        return integrate(Field(self.grid, np.abs(self.psi.values) ** 2))

    def normalized(self) -> "WaveField":
        return WaveField(Field(self.grid, self.psi.values / np.sqrt(self.norm())),
                         self.m, self.hbar, self.t)


@dataclass(frozen=True)
class MadelungFields:
    P: Field
    S: Field
    A: Field
    m: float = 1.0
    hbar: float = 1.0
    t: float = 0.0
    amplitude_floor: float = field(default=DEFAULT_AMPLITUDE_FLOOR, compare=False)

    def __post_init__(self):
        same_grid(self.P, self.S, self.A)
        if np.any(self.P.values < 0):
            raise ValueError("density must be non-negative")

    @property
    def grid(self) -> Grid1D:
        return self.P.grid

    @property
    def x(self):
        return self.P.grid.x


# --------------------------------------------------------------------------
# States with closed forms

def gaussian_packet(grid: Grid1D, sigma: float, x0: float = 0.0, p0: float = 0.0,
                    m: float = 1.0, hbar: float = 1.0, t: float = 0.0) -> WaveField:
    """Normalized Gaussian whose density has standard deviation ``sigma``."""
    x = grid.x
    psi = (2 * np.pi * sigma**2) ** -0.25 * np.exp(-((x - x0) ** 2) / (4 * sigma**2) + 1j * p0 * x / hbar)
    return WaveField(Field(grid, psi), m, hbar, t)


def harmonic_ground_state(grid: Grid1D, m: float = 1.0, omega: float = 1.0,
                          hbar: float = 1.0, t: float = 0.0) -> WaveField:
    """Exact stationary ground state, including its phase exp(-i omega t / 2)."""
    x = grid.x
    a = m * omega / hbar
    psi = (a / np.pi) ** 0.25 * np.exp(-0.5 * a * x**2 - 0.5j * omega * t)
    return WaveField(Field(grid, psi), m, hbar, t)


def free_packet_sigma2(t, sigma0: float, m: float = 1.0, hbar: float = 1.0):
    """Position variance of a free Gaussian packet released at rest."""
    return sigma0**2 * (1.0 + (hbar * np.asarray(t) / (2 * m * sigma0**2)) ** 2)


def harmonic_potential(grid: Grid1D, m: float = 1.0, omega: float = 1.0) -> Field:
    return Field(grid, 0.5 * m * omega**2 * grid.x**2)


def position_moments(w: WaveField):
    """Mean and variance of |psi|^2 (assumed normalized)."""
    P = np.abs(w.psi.values) ** 2
    g = w.grid
    mean = integrate(Field(g, g.x * P))
    var = integrate(Field(g, (g.x - mean) ** 2 * P))
    return mean, var


def overlap(a: WaveField, b: WaveField) -> complex:
    same_grid(a.psi, b.psi)
    return integrate(Field(a.grid, np.conj(a.psi.values) * b.psi.values))


def kinetic_expectation(w: WaveField, method: str = "spectral") -> float:
    """<psi| -(hbar^2/2m) d^2/dx^2 |psi>.

    ``spectral`` evaluates it in momentum space with the FFT, which is exact for
    smooth states that vanish at both edges; ``stencil`` uses the same 3-point
    operator as the Crank-Nicolson propagator.
    """
    psi = w.psi.values
    dx = w.grid.dx
    if method == "spectral":
        k = 2 * np.pi * np.fft.fftfreq(psi.size, d=dx)
        phi = np.fft.fft(psi)
        # Parseval on the periodic extension: sum|psi|^2 dx = sum|phi|^2 dx / N
        return float(np.sum(k**2 * np.abs(phi) ** 2) * dx / psi.size * w.hbar**2 / (2 * w.m))
    if method == "stencil":
        lap = laplacian_array(psi, dx)
        return float(np.real(integrate(Field(w.grid, np.conj(psi) * lap))) * -w.hbar**2 / (2 * w.m))
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# Crank-Nicolson

class CrankNicolson:
    """Implicit-midpoint propagator for i hbar psi_t = -(hbar^2/2m) psi_xx + U psi.

    Dirichlet boundaries: the wave function vanishes one spacing beyond each
    end.  The tridiagonal left-hand operator is LU-factorized once.
    """

    def __init__(self, grid: Grid1D, U: Field, dt: float, m: float = 1.0, hbar: float = 1.0):
        if not dt > 0:
            raise ValueError("dt must be positive")
        same_grid(U, Field(grid, np.zeros(grid.n_points)))
        self.grid, self.dt, self.m, self.hbar = grid, dt, m, hbar
        n = grid.n_points
        kin = hbar**2 / (2 * m * grid.dx**2)
        diag = 2 * kin + U.values
        off = -kin * np.ones(n - 1)
        c = 0.5j * dt / hbar
        self._rhs_diag = 1 - c * diag
        self._rhs_off = -c * off
        dl, d, du, du2, ipiv, info = lapack.zgttrf(c * off, 1 + c * diag, c * off)
        if info:
            raise np.linalg.LinAlgError(f"tridiagonal factorization failed (info={info})")
        self._lu = (dl, d, du, du2, ipiv)

    def step(self, psi: np.ndarray) -> np.ndarray:
        b = self._rhs_diag * psi
        b[:-1] += self._rhs_off * psi[1:]
        b[1:] += self._rhs_off * psi[:-1]
        x, info = lapack.zgttrs(*self._lu, b)
        if info:
            raise np.linalg.LinAlgError(f"tridiagonal solve failed (info={info})")
        return x


def _warn_if_leaking(psi: np.ndarray):
    edge = max(abs(psi[0]), abs(psi[-1]))
    if edge > EDGE_LEAK_RATIO * np.abs(psi).max():
        warnings.warn(f"|psi| at the grid edge is {edge:.2e}; boundary reflections likely",
                      BoundaryLeakWarning, stacklevel=3)


def evolve_cn_history(w: WaveField, U: Field, dt: float, n_steps: int,
                      snapshot_stride: int = 1) -> list[WaveField]:
    """Evolve and keep every ``snapshot_stride``-th state (the first and last always)."""
    prop = CrankNicolson(w.grid, U, dt, w.m, w.hbar)
    psi = np.array(w.psi.values, dtype=complex)
    _warn_if_leaking(psi)
    out = [w]
    for i in range(1, n_steps + 1):
        psi = prop.step(psi)
        if i % snapshot_stride == 0 or i == n_steps:
            out.append(WaveField(Field(w.grid, psi.copy()), w.m, w.hbar, w.t + i * dt))
    _warn_if_leaking(psi)
    return out


def evolve_cn(w: WaveField, U: Field, dt: float, n_steps: int) -> WaveField:
    return evolve_cn_history(w, U, dt, n_steps, snapshot_stride=max(n_steps, 1))[-1]


# --------------------------------------------------------------------------
# Madelung decomposition

def decompose(w: WaveField, amplitude_floor: float = DEFAULT_AMPLITUDE_FLOOR) -> MadelungFields:
    S = unwrap_phase(w.psi, w.hbar, amplitude_floor)
    A = np.abs(w.psi.values)
    return MadelungFields(Field(w.grid, A**2), S, Field(w.grid, A), w.m, w.hbar, w.t,
                          amplitude_floor)


def recompose(mf: MadelungFields) -> WaveField:
    psi = mf.A.values * np.exp(1j * mf.S.values / mf.hbar)
    return WaveField(Field(mf.grid, psi), mf.m, mf.hbar, mf.t)


def _log_amplitude(mf: MadelungFields) -> np.ndarray:
    return np.log(check_amplitude(mf.A, mf.amplitude_floor))


def quantum_potential_amplitude_form(mf: MadelungFields) -> Field:
    """-(hbar^2/2m) A''/A, evaluated as (ln A)'' + ((ln A)')^2.

    The logarithmic route is algebraically identical and is exact on Gaussian
    amplitudes, where ln A is quadratic.
    """
    lnA = _log_amplitude(mf)
    dx = mf.grid.dx
    ratio = laplacian_array(lnA, dx) + gradient_array(lnA, dx) ** 2
    return Field(mf.grid, -(mf.hbar**2 / (2 * mf.m)) * ratio)


def quantum_potential_density_form(mf: MadelungFields) -> Field:
    """-(hbar^2/4m) [P''/P - (P'/P)^2 / 2] via ln P."""
    lnP = 2.0 * _log_amplitude(mf)
    dx = mf.grid.dx
    ratio = laplacian_array(lnP, dx) + 0.5 * gradient_array(lnP, dx) ** 2
    return Field(mf.grid, -(mf.hbar**2 / (4 * mf.m)) * ratio)


def quantum_potential_direct(mf: MadelungFields) -> Field:
    """-(hbar^2/2m) laplacian(A)/A with the plain 3-point stencil on A."""
    A = check_amplitude(mf.A, mf.amplitude_floor)
    return Field(mf.grid, -(mf.hbar**2 / (2 * mf.m)) * laplacian_array(A, mf.grid.dx) / A)


def quantum_potential(mf: MadelungFields, rtol: float = 1e-6) -> Field:
    """Bohm quantum potential Q = -(hbar^2/2m) A''/A.

    Cross-checked against the density form wherever the amplitude is resolved
    (above 1e-6 of its peak); far tails of evolved states carry roundoff-level
    amplitudes whose Q is meaningless and is not compared.
    """
    qa = quantum_potential_amplitude_form(mf)
    qp = quantum_potential_density_form(mf)
    resolved = mf.A.values > RESOLVED_AMPLITUDE * mf.A.values.max()
    gap = np.abs(qa.values - qp.values)[resolved]
    if np.any(gap > rtol * (1.0 + np.abs(qa.values[resolved]))):
        raise ArithmeticError("amplitude and density forms of Q disagree")
    return qa


def _check_pair(mf_t: MadelungFields, mf_tp: MadelungFields):
    same_grid(mf_t.P, mf_tp.P)


def _action_rate(mf_t, mf_tp, dt):
    # S is only defined modulo 2*pi*hbar between snapshots; take the short way round.
    h = mf_t.hbar
    dS = mf_tp.S.values - mf_t.S.values
    return h * wrap_angle(dS / h) / dt


def _midpoint(f, mf_t, mf_tp):
    return 0.5 * (f(mf_t) + f(mf_tp))


def _flux_divergence(mf: MadelungFields) -> np.ndarray:
    dx = mf.grid.dx
    j = mf.P.values * gradient_array(mf.S.values, dx) / mf.m
    return gradient_array(j, dx)


def continuity_residual(mf_t: MadelungFields, mf_tp: MadelungFields, dt: float) -> Field:
    """dP/dt + d/dx (P S_x / m), centred at the half step."""
    _check_pair(mf_t, mf_tp)
    dP = (mf_tp.P.values - mf_t.P.values) / dt
    return Field(mf_t.grid, dP + _midpoint(_flux_divergence, mf_t, mf_tp))


def continuity_omitted_term(mf: MadelungFields) -> Field:
    """P S_xx / m: what the gradient-only transport law leaves out of the divergence."""
    return Field(mf.grid, mf.P.values * laplacian_array(mf.S.values, mf.grid.dx) / mf.m)


def amplitude_transport_residual(mf_t: MadelungFields, mf_tp: MadelungFields, dt: float) -> Field:
    """dA/dt + (A S_xx + 2 A_x S_x) / 2m, centred at the half step."""
    _check_pair(mf_t, mf_tp)

    def spatial(mf):
        dx = mf.grid.dx
        A, S = mf.A.values, mf.S.values
        return (A * laplacian_array(S, dx) + 2 * gradient_array(A, dx) * gradient_array(S, dx)) / (2 * mf.m)

    dA = (mf_tp.A.values - mf_t.A.values) / dt
    return Field(mf_t.grid, dA + _midpoint(spatial, mf_t, mf_tp))


def amplitude_transport_l0_gap(mf: MadelungFields) -> Field:
    """A S_xx / 2m: the difference between the full transport law and its L = 0 form."""
    return Field(mf.grid, mf.A.values * laplacian_array(mf.S.values, mf.grid.dx) / (2 * mf.m))


def quantum_hj_residual(mf_t: MadelungFields, mf_tp: MadelungFields, U: Field, dt: float) -> Field:
    """dS/dt + S_x^2/2m + U + Q, centred at the half step."""
    _check_pair(mf_t, mf_tp)
    same_grid(mf_t.P, U)

    def spatial(mf):
        Sx = gradient_array(mf.S.values, mf.grid.dx)
        return Sx**2 / (2 * mf.m) + U.values + quantum_potential(mf).values

    return Field(mf_t.grid, _action_rate(mf_t, mf_tp, dt) + _midpoint(spatial, mf_t, mf_tp))


def kinetic_from_wave_form(mf: MadelungFields) -> Field:
    """S_x^2 / 2m rebuilt from psi_x/psi and A_x/A alone (k = 1/hbar).

    Uses S_x = (psi_x/psi - A_x/A) / (ik) squared out, with the cross term
    rewritten through A_x S_x.  psi_x is the finite difference of the complex
    wave itself, so this is an independent discretization of the kinetic term.
    """
    dx = mf.grid.dx
    k = 1.0 / mf.hbar
    psi = recompose(mf).psi.values
    A = check_amplitude(mf.A, mf.amplitude_floor)
    a = gradient_array(A, dx) / A
    b = gradient_array(psi, dx) / psi
    s = gradient_array(mf.S.values, dx)
    T = (-(b**2) / (2 * k**2) + a**2 / (2 * k**2) + 1j * a * s / k) / mf.m
    return Field(mf.grid, np.real(T))


def chetaev_q_consistency(mf_t: MadelungFields, mf_tp: MadelungFields, U: Field, dt: float) -> Field:
    """Q from -dS/dt - U - T (T in wave form) minus Q from -(hbar^2/2m) A''/A."""
    _check_pair(mf_t, mf_tp)
    same_grid(mf_t.P, U)
    q_action = -_action_rate(mf_t, mf_tp, dt) - U.values - _midpoint(
        lambda mf: kinetic_from_wave_form(mf).values, mf_t, mf_tp)
    q_amp = _midpoint(lambda mf: quantum_potential(mf).values, mf_t, mf_tp)
    return Field(mf_t.grid, q_action - q_amp)


def stability_condition_residual(mf: MadelungFields) -> tuple[Field, Field]:
    """The stability divergence in wave form and in action form (metric 1/m).

    Wave form: (1/ik) d/dx [ (psi_x/psi - A_x/A) / m ], with psi_x/psi the
    logarithmic derivative of psi on its continuous branch.  Action form:
    S_xx / m.  The two coincide identically.
    """
    dx = mf.grid.dx
    k = 1.0 / mf.hbar
    psi = recompose(mf).psi
    A = check_amplitude(mf.A, mf.amplitude_floor)
    log_psi = np.log(np.abs(psi.values)) + 1j * unwrap_phase(psi, 1.0, mf.amplitude_floor).values
    bracket = gradient_array(log_psi, dx) - gradient_array(np.log(A), dx)
    wave_form = gradient_array(bracket / mf.m, dx) / (1j * k)
    action_form = gradient_array(gradient_array(mf.S.values, dx) / mf.m, dx)
    return Field(mf.grid, np.real(wave_form)), Field(mf.grid, action_form)


def perturbation_action(mf: MadelungFields) -> float:
    """Integral of Q P over the grid (no minimization)."""
    return integrate(Field(mf.grid, quantum_potential(mf).values * mf.P.values))


# --------------------------------------------------------------------------
# Bohmian trajectories

@dataclass(frozen=True)
class BohmEnsemble:
    t: np.ndarray          # (n_times,)
    x: np.ndarray          # (n_times, n_seeds)

    def trajectory(self, i):
        return self.x[:, i]


def velocity_field(w: WaveField, amplitude_floor: float = DEFAULT_AMPLITUDE_FLOOR):
    """(v, valid): S_x/m on the grid and a mask of nodes above the amplitude floor."""
    amp = np.abs(w.psi.values)
    valid = amp > amplitude_floor * amp.max()
    theta = np.angle(w.psi.values)
    phase = np.concatenate([[0.0], np.cumsum(wrap_angle(np.diff(theta)))])
    v = w.hbar * gradient_array(phase, w.grid.dx) / w.m
    return v, valid


def _interp_velocity(x, grid, v, valid):
    if np.any(x < grid.x_min) or np.any(x > grid.x_max):
        bad = x[(x < grid.x_min) | (x > grid.x_max)][0]
        raise TrajectoryLeftGridError(f"trajectory left the grid at x={bad:.6g}")
    idx = np.clip(((x - grid.x_min) / grid.dx).astype(int), 0, grid.n_points - 2)
    ok = valid[idx] & valid[idx + 1]
    if not np.all(ok):
        i = int(idx[~ok][0])
        raise AmplitudeBelowFloorError(i, float(grid.x[i]), float("nan"), float("nan"))
    return np.interp(x, grid.x, v)


def bohm_trajectories(history: Sequence[WaveField], seeds,
                      amplitude_floor: float = DEFAULT_AMPLITUDE_FLOOR) -> BohmEnsemble:
    """Integrate dx/dt = S_x(x, t)/m through a sequence of snapshots with RK4.

    Velocities are interpolated linearly in x between grid points and linearly
    in t between snapshots; all seeds advance together.
    """
    grid = history[0].grid
    x = np.array(seeds, dtype=float)
    fields = [velocity_field(w, amplitude_floor) for w in history]
    t = np.array([w.t for w in history])
    out = np.empty((len(history), x.size))
    out[0] = x
    for n in range(len(history) - 1):
        (v0, ok0), (v1, ok1) = fields[n], fields[n + 1]
        vm, okm = 0.5 * (v0 + v1), ok0 & ok1
        h = t[n + 1] - t[n]
        k1 = _interp_velocity(x, grid, v0, ok0)
        k2 = _interp_velocity(x + 0.5 * h * k1, grid, vm, okm)
        k3 = _interp_velocity(x + 0.5 * h * k2, grid, vm, okm)
        k4 = _interp_velocity(x + h * k3, grid, v1, ok1)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[n + 1] = x
    return BohmEnsemble(t, out)


def sample_density(w: WaveField, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw positions from |psi|^2 by inverting its piecewise-linear CDF."""
    cdf = density_cdf(w)
    return np.interp(rng.random(n), cdf, w.grid.x)


def density_cdf(w: WaveField) -> np.ndarray:
    P = np.abs(w.psi.values) ** 2
    dx = w.grid.dx
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (P[1:] + P[:-1]) * dx)])
    return cdf / cdf[-1]
