"""Classical side: Hamiltonian flows, their variational equations and
Hamilton-Jacobi stability diagnostics.

The Hamiltonian is H = (1/2) p.g(q).p + s U(q) with s = +1 (``T_plus_U``) or
s = -1 (``T_minus_U``).  Both conventions appear in the literature; the bundled
factories choose U so that the physical system is the same under either flag.

Index convention for metric derivatives: ``dg(q)[i, j, s] = d g_ij / d q_s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BranchSingularityError,
    DimensionMismatchError,
    EmptyTailError,
    NotIndependentError,
    ValidationError,
    ZeroEnergyError,
    ZeroMagnitudeError,
)
from .numerics import OdeStepperSpec, ode_solve, step_times

SIGN_CONVENTIONS = ("T_plus_U", "T_minus_U")
FD_STEP = 1e-5
FD_RTOL = 1e-6
BRANCH_FLOOR = 1e-8


def _fd_check(name, analytic, numeric):
    analytic, numeric = np.asarray(analytic, float), np.asarray(numeric, float)
    scale = max(1.0, float(np.max(np.abs(analytic), initial=0.0)))
    err = float(np.max(np.abs(analytic - numeric), initial=0.0))
    if err > FD_RTOL * scale:
        raise ValidationError(f"{name} disagrees with finite differences by {err:.3e}")


def _central(f, x, h=FD_STEP):
    """Central differences of f along every component of x; axis appended last."""
    x = np.asarray(x, float)
    cols = []
    for s in range(x.size):
        e = np.zeros_like(x)
        e[s] = h
        cols.append((np.asarray(f(x + e), float) - np.asarray(f(x - e), float)) / (2 * h))
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class HamiltonianSystem:
    n: int
    g: Callable
    dg: Callable
    U: Callable
    dU: Callable
    d2U: Callable
    sign_convention: str = "T_plus_U"
    d2g: Callable | None = None
    probes: tuple = ()

    def __post_init__(self):
        if self.sign_convention not in SIGN_CONVENTIONS:
            raise ValueError(f"sign_convention must be one of {SIGN_CONVENTIONS}")
        for q in self.probes:
            self.validate(q)

    @property
    def potential_sign(self) -> float:
        return 1.0 if self.sign_convention == "T_plus_U" else -1.0

    def validate(self, q):
        q = np.asarray(q, float)
        gq = np.asarray(self.g(q), float)
        if gq.shape != (self.n, self.n) or not np.allclose(gq, gq.T):
            raise ValidationError("metric must be a symmetric n x n matrix")
        if np.linalg.eigvalsh(gq).min() <= 0:
            raise ValidationError("metric must be positive definite")
        _fd_check("dg", self.dg(q), _central(self.g, q))
        _fd_check("dU", self.dU(q), _central(self.U, q))
        _fd_check("d2U", self.d2U(q), _central(self.dU, q))
        if self.d2g is not None:
            _fd_check("d2g", self.d2g(q), _central(self.dg, q))

    def _d2g(self, q):
        if self.d2g is not None:
            return np.asarray(self.d2g(q), float)
        return _central(self.dg, q)

    def hamiltonian(self, q, p) -> float:
        q, p = np.asarray(q, float), np.asarray(p, float)
        return 0.5 * p @ self.g(q) @ p + self.potential_sign * float(self.U(q))

    def dH_dp(self, q, p):
        return np.asarray(self.g(q), float) @ p

    def dH_dq(self, q, p):
        dg = np.asarray(self.dg(q), float)
        quad = (p[:, None, None] * dg * p[None, :, None]).sum(axis=(0, 1))
        return 0.5 * quad + self.potential_sign * np.asarray(self.dU(q), float)

    def hessian_blocks(self, q, p):
        """(H_qq, H_qp, H_pp) with H_qp[s, i] = d^2H / dq_s dp_i."""
        q, p = np.asarray(q, float), np.asarray(p, float)
        dg = np.asarray(self.dg(q), float)
        H_pp = np.asarray(self.g(q), float)
        H_qp = (dg * p[None, :, None]).sum(axis=1).T
        d2g = self._d2g(q)
        H_qq = 0.5 * (p[:, None, None, None] * d2g * p[None, :, None, None]).sum(axis=(0, 1)) \
            + self.potential_sign * np.asarray(self.d2U(q), float)
        return H_qq, H_qp, H_pp

    def has_constant_metric(self, q) -> bool:
        return not np.any(np.asarray(self.dg(q)))


@dataclass(frozen=True)
class PhasePoint:
    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "q", np.atleast_1d(np.asarray(self.q, float)))
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, float)))
        if self.q.shape != self.p.shape:
            raise DimensionMismatchError("q and p must have the same length")
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.p))):
            raise ValueError("phase point has non-finite entries")


@dataclass(frozen=True)
class VariationalState:
    xi: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "xi", np.atleast_1d(np.asarray(self.xi, float)))
        object.__setattr__(self, "eta", np.atleast_1d(np.asarray(self.eta, float)))
        if self.xi.shape != self.eta.shape:
            raise DimensionMismatchError("xi and eta must have the same length")
        if not (np.all(np.isfinite(self.xi)) and np.all(np.isfinite(self.eta))):
            raise ValueError("variational state has non-finite entries")

    def as_array(self):
        return np.concatenate([self.xi, self.eta])

    @classmethod
    def from_array(cls, y):
        n = len(y) // 2
        return cls(y[:n], y[n:])


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    q: np.ndarray   # (n_times, n)
    p: np.ndarray

    def point(self, k) -> PhasePoint:
        return PhasePoint(self.q[k], self.p[k], float(self.t[k]))

    def energy(self, sys: HamiltonianSystem) -> np.ndarray:
        return np.array([sys.hamiltonian(q, p) for q, p in zip(self.q, self.p)])


# --------------------------------------------------------------------------
# Bundled systems

def _const(value):
    return lambda q: value


def free_particle(n: int = 1, m: float = 1.0, sign_convention: str = "T_plus_U") -> HamiltonianSystem:
    eye = np.eye(n) / m
    return HamiltonianSystem(
        n, _const(eye), _const(np.zeros((n, n, n))), lambda q: 0.0,
        lambda q: np.zeros(n), lambda q: np.zeros((n, n)), sign_convention,
        d2g=_const(np.zeros((n, n, n, n))), probes=(np.zeros(n),))


def harmonic_oscillator(m: float = 1.0, omega=1.0, sign_convention: str = "T_plus_U") -> HamiltonianSystem:
    """Oscillator with frequencies ``omega`` (one per axis); same physics under both flags."""
    omega = np.atleast_1d(np.asarray(omega, float))
    n = omega.size
    s = 1.0 if sign_convention == "T_plus_U" else -1.0
    k = m * omega**2
    return HamiltonianSystem(
        n, _const(np.eye(n) / m), _const(np.zeros((n, n, n))),
        lambda q: s * 0.5 * float(np.sum(k * np.asarray(q) ** 2)),
        lambda q: s * k * np.asarray(q), lambda q: s * np.diag(k), sign_convention,
        d2g=_const(np.zeros((n, n, n, n))), probes=(np.zeros(n), 0.3 * np.ones(n)))


def linear_potential(m: float = 1.0, force: float = 1.0, sign_convention: str = "T_plus_U") -> HamiltonianSystem:
    """1D particle in U = force * q."""
    s = 1.0 if sign_convention == "T_plus_U" else -1.0
    return HamiltonianSystem(
        1, _const(np.eye(1) / m), _const(np.zeros((1, 1, 1))),
        lambda q: s * force * float(np.asarray(q)[0]),
        lambda q: np.array([s * force]), lambda q: np.zeros((1, 1)), sign_convention,
        d2g=_const(np.zeros((1, 1, 1, 1))), probes=(np.zeros(1),))


# --------------------------------------------------------------------------
# Flows

def hamilton_flow(sys: HamiltonianSystem, x0: PhasePoint, stepper: OdeStepperSpec,
                  n_steps: int) -> Trajectory:
    n = sys.n
    if stepper.method == "leapfrog" and not sys.has_constant_metric(x0.q):
        raise ValueError("leapfrog needs a separable Hamiltonian (constant metric)")

    def rhs(t, y):
        q, p = y[:n], y[n:]
        return np.concatenate([sys.dH_dp(q, p), -sys.dH_dq(q, p)])

    ys = ode_solve(rhs, np.concatenate([x0.q, x0.p]),
                   OdeStepperSpec(stepper.method, stepper.dt, x0.t), n_steps)
    return Trajectory(step_times(OdeStepperSpec(stepper.method, stepper.dt, x0.t), n_steps),
                      ys[:, :n], ys[:, n:])


def _variational_matrix(sys, q, p):
    H_qq, H_qp, H_pp = sys.hessian_blocks(q, p)
    n = sys.n
    # d xi/dt = H_qp^T xi + H_pp eta ;  d eta/dt = -H_qq xi - H_qp eta
    M = np.empty((2 * n, 2 * n))
    M[:n, :n], M[:n, n:] = H_qp.T, H_pp
    M[n:, :n], M[n:, n:] = -H_qq, -H_qp
    return M


def variational_rhs(sys: HamiltonianSystem, x: PhasePoint, v: VariationalState) -> VariationalState:
    """Time derivative of the first-order perturbation (xi, eta) along x."""
    if v.xi.size != sys.n:
        raise DimensionMismatchError("variational state dimension differs from the system")
    return VariationalState.from_array(_variational_matrix(sys, x.q, x.p) @ v.as_array())


def variational_flow(sys: HamiltonianSystem, x0: PhasePoint, v0: Sequence[VariationalState],
                     stepper: OdeStepperSpec, n_steps: int):
    """Integrate the reference orbit together with several perturbations (RK4).

    Returns the trajectory and an array of shape (n_times, n_perturbations, 2n).
    """
    if stepper.method != "rk4":
        raise ValueError("variational flow is integrated with rk4")
    n, k = sys.n, len(v0)

    def rhs(t, y):
        q, p = y[:n], y[n:2 * n]
        V = y[2 * n:].reshape(k, 2 * n)
        M = _variational_matrix(sys, q, p)
        return np.concatenate([sys.dH_dp(q, p), -sys.dH_dq(q, p), (V @ M.T).ravel()])

    y0 = np.concatenate([x0.q, x0.p] + [v.as_array() for v in v0])
    spec = OdeStepperSpec("rk4", stepper.dt, x0.t)
    ys = ode_solve(rhs, y0, spec, n_steps)
    traj = Trajectory(step_times(spec, n_steps), ys[:, :n], ys[:, n:2 * n])
    return traj, ys[:, 2 * n:].reshape(-1, k, 2 * n)


def bilinear_invariant(v1: VariationalState, v2: VariationalState) -> float:
    """sum_s (xi_s eta'_s - eta_s xi'_s) for v1 = (xi, eta), v2 = (xi', eta')."""
    if v1.xi.shape != v2.xi.shape:
        raise DimensionMismatchError("variational states differ in dimension")
    return float(v1.xi @ v2.eta - v1.eta @ v2.xi)


def lyapunov_characteristic_value(samples, tail_fraction: float = 0.5) -> float:
    """Finite-horizon estimate of -limsup log|f(t)|/t.

    Fits log|f| against t by least squares over the final ``tail_fraction`` of
    the samples and returns minus the slope, so f = exp(lambda t) gives -lambda.
    """
    samples = np.asarray(samples, float)
    if samples.ndim != 2 or samples.shape[1] != 2:
        raise ValueError("samples must be a sequence of (t, magnitude) pairs")
    n_tail = int(math.ceil(tail_fraction * len(samples)))
    tail = samples[len(samples) - n_tail:]
    if n_tail < 2:
        raise EmptyTailError("need at least two samples in the fitted tail")
    t, mag = tail[:, 0], np.abs(tail[:, 1])
    if np.any(mag == 0):
        raise ZeroMagnitudeError("zero magnitude inside the fitted tail")
    slope = np.polyfit(t, np.log(mag), 1)[0]
    return float(-slope)


# --------------------------------------------------------------------------
# Hamilton-Jacobi complete integrals

@dataclass(frozen=True)
class CompleteIntegral:
    """S(t, q, alpha) with its derivatives; ``alpha`` fixes the member of the family.

    All callables take ``(t, q, alpha)`` except ``E(alpha)``.
    """

    n: int
    S: Callable
    dS_dq: Callable
    dS_dt: Callable
    d2S_dqdq: Callable
    d2S_dqdalpha: Callable
    E: Callable
    alpha: np.ndarray
    probes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.atleast_1d(np.asarray(self.alpha, float)))
        for t, q in self.probes:
            self.validate(t, q)

    def validate(self, t, q):
        q = np.atleast_1d(np.asarray(q, float))
        a = self.alpha
        _fd_check("dS_dq", self.dS_dq(t, q, a), _central(lambda x: self.S(t, x, a), q))
        h = FD_STEP
        _fd_check("dS_dt", self.dS_dt(t, q, a), (self.S(t + h, q, a) - self.S(t - h, q, a)) / (2 * h))
        _fd_check("d2S_dqdq", self.d2S_dqdq(t, q, a), _central(lambda x: self.dS_dq(t, x, a), q))
        mixed = np.asarray(self.d2S_dqdalpha(t, q, a), float)
        _fd_check("d2S_dqdalpha", mixed, _central(lambda al: self.dS_dq(t, q, al), a))
        if abs(np.linalg.det(mixed)) < 1e-12:
            raise ValidationError("mixed Hessian d2S/dq dalpha is singular")

    def energy(self) -> float:
        return float(self.E(self.alpha))

    def momentum(self, t, q):
        return np.atleast_1d(np.asarray(self.dS_dq(t, np.atleast_1d(q), self.alpha), float))

    def hessian(self, t, q):
        return np.atleast_2d(np.asarray(self.d2S_dqdq(t, np.atleast_1d(q), self.alpha), float))

    def action(self, t, q):
        return float(self.S(t, np.atleast_1d(q), self.alpha))


def free_integral(alpha, m: float = 1.0) -> CompleteIntegral:
    """S = alpha.q - |alpha|^2 t / 2m (plane-wave family)."""
    alpha = np.atleast_1d(np.asarray(alpha, float))
    n = alpha.size
    return CompleteIntegral(
        n,
        S=lambda t, q, a: float(a @ q - (a @ a) * t / (2 * m)),
        dS_dq=lambda t, q, a: np.array(a, float),
        dS_dt=lambda t, q, a: -float(a @ a) / (2 * m),
        d2S_dqdq=lambda t, q, a: np.zeros((n, n)),
        d2S_dqdalpha=lambda t, q, a: np.eye(n),
        E=lambda a: float(a @ a) / (2 * m),
        alpha=alpha, probes=((0.3, 0.1 * np.ones(n)),))


def harmonic_integral(energies, omega=1.0, m: float = 1.0, branch=1.0,
                      probes: tuple | None = None) -> CompleteIntegral:
    """Separable oscillator integral; alpha are the per-axis energies.

    S = sum_i W_i(q_i) - (sum_i E_i) t with W_i' = branch_i sqrt(2 m E_i - m^2 w_i^2 q_i^2).
    ``branch`` selects the sign of the momentum on each axis.
    """
    energies = np.atleast_1d(np.asarray(energies, float))
    n = energies.size
    omega = np.broadcast_to(np.asarray(omega, float), (n,)).copy()
    branch = np.broadcast_to(np.asarray(branch, float), (n,)).copy()

    def radicand(q, a):
        return 2 * m * a - (m * omega * q) ** 2

    def S(t, q, a):
        r = np.sqrt(radicand(q, a))
        W = 0.5 * q * r + (a / omega) * np.arcsin(np.clip(m * omega * q / np.sqrt(2 * m * a), -1, 1))
        return float(np.sum(branch * W) - np.sum(a) * t)

    def dS_dq(t, q, a):
        return branch * np.sqrt(radicand(q, a))

    def d2S_dqdq(t, q, a):
        return np.diag(-(m * omega) ** 2 * q / dS_dq(t, q, a))

    def d2S_dqdalpha(t, q, a):
        return np.diag(m / dS_dq(t, q, a))

    if probes is None:
        amp = np.sqrt(2 * energies / m) / omega
        probes = ((0.2, 0.3 * amp),)
    return CompleteIntegral(n, S, dS_dq, lambda t, q, a: -float(np.sum(a)), d2S_dqdq, d2S_dqdalpha,
                            lambda a: float(np.sum(a)), energies, probes)


def linear_integral(energy: float, force: float = 1.0, m: float = 1.0, branch: float = 1.0) -> CompleteIntegral:
    """1D integral for U = force * q; alpha is the energy."""

    def r(q, a):
        return 2 * m * (a[0] - force * q[0])

    return CompleteIntegral(
        1,
        S=lambda t, q, a: float(-branch * r(q, a) ** 1.5 / (3 * m * force) - a[0] * t),
        dS_dq=lambda t, q, a: np.array([branch * np.sqrt(r(q, a))]),
        dS_dt=lambda t, q, a: -float(a[0]),
        d2S_dqdq=lambda t, q, a: np.array([[-m * force / (branch * np.sqrt(r(q, a)))]]),
        d2S_dqdalpha=lambda t, q, a: np.array([[m / (branch * np.sqrt(r(q, a)))]]),
        E=lambda a: float(a[0]), alpha=[energy],
        probes=((0.1, np.array([energy / force - 1.0])),))


def harmonic_integral_on_path(q0: float, t: float, omega: float = 1.0, m: float = 1.0) -> CompleteIntegral:
    """Member of the oscillator family that carries q(t) = q0 sin(omega t).

    The momentum branch follows the sign of cos(omega t).
    """
    branch = 1.0 if math.cos(omega * t) >= 0 else -1.0
    return harmonic_integral(0.5 * m * omega**2 * q0**2, omega, m, branch, probes=())


# --------------------------------------------------------------------------
# Stability conditions

def constrain_eta(ci: CompleteIntegral, t, q, xi) -> np.ndarray:
    """eta_i = sum_j S_{q_i q_j} xi_j."""
    return ci.hessian(t, q) @ np.atleast_1d(np.asarray(xi, float))


def _check_branch(ci, t, q):
    Sq = ci.momentum(t, q)
    if np.linalg.norm(Sq) < BRANCH_FLOOR:
        raise BranchSingularityError(f"|dS/dq| = {np.linalg.norm(Sq):.2e} at q={np.atleast_1d(q)}: caustic")
    return Sq


def reduced_variational_matrix(sys: HamiltonianSystem, ci: CompleteIntegral, t, q) -> np.ndarray:
    """A[i, s] = d/dq_s ( sum_j g_ij dS/dq_j )."""
    q = np.atleast_1d(np.asarray(q, float))
    Sq = _check_branch(ci, t, q)
    dg = np.asarray(sys.dg(q), float)
    return np.einsum("ijs,j->is", dg, Sq) + np.asarray(sys.g(q), float) @ ci.hessian(t, q)


def reduced_variational_rhs(sys, ci, t, q, xi) -> np.ndarray:
    return reduced_variational_matrix(sys, ci, t, q) @ np.atleast_1d(np.asarray(xi, float))


def stability_divergence(sys: HamiltonianSystem, ci: CompleteIntegral, t, q) -> float:
    """L = sum_ij d/dq_i ( g_ij dS/dq_j )."""
    q = np.atleast_1d(np.asarray(q, float))
    Sq = _check_branch(ci, t, q)
    dg = np.asarray(sys.dg(q), float)
    return float(np.einsum("iji,j->", dg, Sq) + np.sum(np.asarray(sys.g(q), float) * ci.hessian(t, q)))


def hj_residual(sys: HamiltonianSystem, ci: CompleteIntegral, t, q) -> float:
    """sum g_ij S_qi S_qj - 2 (E - s U): zero for a genuine complete integral.

    With the T_minus_U flag this is the familiar 2T - 2(U + E).
    """
    q = np.atleast_1d(np.asarray(q, float))
    Sq = ci.momentum(t, q)
    twice_T = Sq @ np.asarray(sys.g(q), float) @ Sq
    return float(twice_T - 2 * (ci.energy() - sys.potential_sign * float(sys.U(q))))


def wave_equation_residual(sys: HamiltonianSystem, ci: CompleteIntegral, dphi: Callable,
                           d2phi: Callable, t, q):
    """div(g grad Phi) - [2T/E^2] d^2Phi/dt^2 for Phi evaluated at u = S(t, q).

    Phi is passed through its first and second derivatives.  By the chain rule
    div(g grad Phi) = Phi'(u) L + Phi''(u) g S_q S_q and d^2Phi/dt^2 =
    Phi''(u) (dS/dt)^2, with the kinetic energy 2T = 2(E - sU).
    """
    E = ci.energy()
    if E == 0:
        raise ZeroEnergyError("wave-equation coefficient needs E != 0")
    q = np.atleast_1d(np.asarray(q, float))
    u = ci.action(t, q)
    Sq = ci.momentum(t, q)
    L = stability_divergence(sys, ci, t, q)
    spatial = dphi(u) * L + d2phi(u) * (Sq @ np.asarray(sys.g(q), float) @ Sq)
    two_T = 2 * (E - sys.potential_sign * float(sys.U(q)))
    d_t = float(ci.dS_dt(t, q, ci.alpha))
    return spatial - two_T / E**2 * d2phi(u) * d_t**2


@dataclass(frozen=True)
class AbelResult:
    t: np.ndarray
    det_w: np.ndarray
    predicted: np.ndarray   # det W(t0) * exp(int_t0^t L dt)
    integral_L: np.ndarray

    @property
    def rel_err(self) -> np.ndarray:
        return np.abs(self.det_w - self.predicted) / np.maximum(np.abs(self.predicted), 1e-300)


def abel_determinant_check(sys: HamiltonianSystem, ci_at: Callable, trajectory: Callable,
                           xi0, t0: float, t1: float, n_steps: int) -> AbelResult:
    """Both sides of det W(t) = det W(t0) exp(int L dt) along a reference path.

    ``trajectory(t)`` gives q on the unperturbed motion and ``ci_at(t)`` the
    complete integral (branch) valid there; ``xi0`` holds the n initial
    perturbations as columns.  The reduced system and the integral of L are
    advanced together with RK4.
    """
    xi0 = np.atleast_2d(np.asarray(xi0, float))
    n = sys.n
    if xi0.shape != (n, n):
        raise DimensionMismatchError(f"need an {n} x {n} matrix of initial perturbations")
    det0 = np.linalg.det(xi0)
    if abs(det0) < 1e-12:
        raise NotIndependentError(f"initial perturbations are dependent (det = {det0:.2e})")

    def rhs(t, y):
        q = np.atleast_1d(trajectory(t))
        ci = ci_at(t)
        A = reduced_variational_matrix(sys, ci, t, q)
        W = y[:-1].reshape(n, n)
        return np.concatenate([(A @ W).ravel(), [np.trace(A)]])

    dt = (t1 - t0) / n_steps
    spec = OdeStepperSpec("rk4", dt, t0)
    ys = ode_solve(rhs, np.concatenate([xi0.ravel(), [0.0]]), spec, n_steps)
    det_w = np.array([np.linalg.det(y[:-1].reshape(n, n)) for y in ys])
    integral = ys[:, -1]
    return AbelResult(step_times(spec, n_steps), det_w, det0 * np.exp(integral), integral)


def symmetric_period_average(f: Callable, period: float, caustics: Sequence[float],
                             eps_fraction: float = 1e-3, n_samples: int = 20000) -> float:
    """Mean of f over one period on a midpoint grid starting at the first caustic.

    Samples within eps_fraction*period of any caustic are dropped; the grid is
    symmetric about each caustic, so principal-value cancellations survive.
    """
    c0 = float(caustics[0])
    h = period / n_samples
    t = c0 + (np.arange(n_samples) + 0.5) * h
    centres = np.concatenate([np.asarray(caustics, float), [c0 + period]])
    keep = np.all(np.abs(t[:, None] - centres[None, :]) >= eps_fraction * period, axis=1)
    return float(np.mean([f(tk) for tk in t[keep]]))
