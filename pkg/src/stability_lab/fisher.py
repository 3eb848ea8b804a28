"""Fisher-information form of the quantum correction and its scale laws.

Momentum fluctuations are derived from the position density alone,
delta p = P'/P (or -(hbar/2) P'/P), and their mean square is the Fisher
information.  Scale transformations act on (position, momentum) variances so
as to preserve the Heisenberg bound; dilatations act on the fields.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AmplitudeBelowFloorError, BoundaryLeakWarning, SupportOverflowError
from .numerics import DEFAULT_AMPLITUDE_FLOOR, Field, Grid1D, gradient_array, integrate
from .quantum import MadelungFields, perturbation_action, quantum_potential

DENSITY_FLOOR = DEFAULT_AMPLITUDE_FLOOR**2
CONVENTIONS = ("bare", "half_hbar")


def _log_density(P: Field, floor: float = DENSITY_FLOOR) -> np.ndarray:
    p = P.values
    limit = floor * p.max()
    bad = np.flatnonzero(p <= limit)
    if bad.size:
        i = int(bad[0])
        raise AmplitudeBelowFloorError(i, float(P.x[i]), float(p[i]), float(limit))
    return np.log(p)


def momentum_fluctuation(P: Field, convention: str = "bare", hbar: float = 1.0,
                         floor: float = DENSITY_FLOOR) -> Field:
    """P'/P (``bare``) or -(hbar/2) P'/P (``half_hbar``), via the derivative of ln P."""
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    bare = gradient_array(_log_density(P, floor), P.grid.dx)
    return Field(P.grid, bare if convention == "bare" else -0.5 * hbar * bare)


def fisher_information(P: Field, floor: float = DENSITY_FLOOR) -> float:
    """Integral of (P')^2 / P = integral of P (ln P)'^2."""
    d = momentum_fluctuation(P, "bare", floor=floor).values
    return integrate(Field(P.grid, P.values * d**2))


def fisher_hamiltonian_term(P: Field, c: float | None = None, m: float = 1.0,
                            hbar: float = 1.0, floor: float = DENSITY_FLOOR) -> float:
    """(c/2m) times the Fisher information; c defaults to hbar^2/4."""
    if c is None:
        c = hbar**2 / 4
    return c / (2 * m) * fisher_information(P, floor)


def _mf_floor(mf: MadelungFields) -> float:
    return mf.amplitude_floor**2


def total_quantum_hamiltonian(mf: MadelungFields) -> float:
    """Integral of P S'^2/2m + (hbar^2/2m) ((sqrt P)')^2."""
    Sx = gradient_array(mf.S.values, mf.grid.dx)
    classical = integrate(Field(mf.grid, mf.P.values * Sx**2)) / (2 * mf.m)
    return classical + fisher_hamiltonian_term(mf.P, mf.hbar**2 / 4, mf.m, floor=_mf_floor(mf))


def classical_hamiltonian(mf: MadelungFields) -> float:
    Sx = gradient_array(mf.S.values, mf.grid.dx)
    return integrate(Field(mf.grid, mf.P.values * Sx**2)) / (2 * mf.m)


def _warn_edge(P: Field, tol=1e-8):
    if max(P.values[0], P.values[-1]) > tol:
        warnings.warn("density is not negligible at the grid edge; boundary terms survive",
                      BoundaryLeakWarning, stacklevel=3)


def pq_integral_identity(mf: MadelungFields) -> tuple[float, float]:
    """(integral of P Q, (hbar^2/8m) Fisher information): equal by parts."""
    _warn_edge(mf.P)
    lhs = perturbation_action(mf)
    rhs = mf.hbar**2 / (8 * mf.m) * fisher_information(mf.P, _mf_floor(mf))
    return lhs, rhs


def position_variance(P: Field) -> float:
    x = P.x
    mean = integrate(Field(P.grid, x * P.values))
    return integrate(Field(P.grid, (x - mean) ** 2 * P.values))


def exact_uncertainty_check(P: Field, hbar: float = 1.0, floor: float = DENSITY_FLOOR):
    """(position variance, mean square of -(hbar/2) P'/P, their product)."""
    dq2 = position_variance(P)
    dp = momentum_fluctuation(P, "half_hbar", hbar, floor).values
    dp2 = integrate(Field(P.grid, P.values * dp**2))
    return dq2, dp2, dq2 * dp2


# --------------------------------------------------------------------------
# Scale transformations of uncertainty pairs

@dataclass(frozen=True)
class UncertaintyPair:
    dx2: float
    dp2: float
    hbar: float = 1.0

    def __post_init__(self):
        if not (self.dx2 > 0 and self.dp2 > 0):
            raise ValueError("variances must be positive")
        bound = self.hbar**2 / 4
        if self.product < bound - 1e-12 * max(1.0, bound):
            raise ValueError(f"pair violates the Heisenberg bound: {self.product} < {bound}")

    @property
    def product(self) -> float:
        return self.dx2 * self.dp2


@dataclass(frozen=True)
class ScaleParameter:
    alpha: float

    def __post_init__(self):
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")


def scale_transform(u: UncertaintyPair, s: ScaleParameter | float) -> UncertaintyPair:
    """dx2 -> e^-a dx2 ;  dp2 -> e^-a dp2 + (hbar^2/4)(e^a - e^-a)/dx2."""
    a = s.alpha if isinstance(s, ScaleParameter) else float(s)
    # Written around b = hbar^2/(4 dx2) so that the Heisenberg slack dp2 - b is
    # scaled rather than recovered from a cancellation of large terms.
    b = (u.hbar**2 / 4) / u.dx2
    dx2 = math.exp(-a) * u.dx2
    dp2 = math.exp(-a) * (u.dp2 - b) + math.exp(a) * b
    return UncertaintyPair(dx2, dp2, u.hbar)


def product_map(product: float, alpha: float, hbar: float = 1.0) -> float:
    """Closed form of the product after scale_transform."""
    bound = hbar**2 / 4
    return math.exp(-2 * alpha) * (product - bound) + bound


# --------------------------------------------------------------------------
# Dilatations of fields

def dilate_fields(mf: MadelungFields, s: ScaleParameter | float, grid: Grid1D | None = None,
                  support_tol: float = 1e-12) -> MadelungFields:
    """x -> e^(-a/2) x with P'(x) = e^(a/2) P(e^(a/2) x), S'(x) = e^-a S(e^(a/2) x).

    Without ``grid`` the samples are carried over exactly onto the contracted
    grid.  With ``grid`` they are interpolated onto it, and the density may
    not spill past its ends (above ``support_tol`` of the peak).
    """
    a = s.alpha if isinstance(s, ScaleParameter) else float(s)
    k = math.exp(-a / 2)
    src = mf.grid
    new = Grid1D(src.x_min * k, src.x_max * k, src.n_points)
    P = mf.P.values / k
    S = mf.S.values * math.exp(-a)
    if grid is not None:
        xs = new.x
        support = xs[P > support_tol * P.max()]
        if support.min() < grid.x_min or support.max() > grid.x_max:
            raise SupportOverflowError(
                f"dilated support [{support.min():.4g}, {support.max():.4g}] exceeds the grid")
        P = np.interp(grid.x, xs, P, left=0.0, right=0.0)
        S = np.interp(grid.x, xs, S)
        new = grid
    return MadelungFields(Field(new, P), Field(new, S), Field(new, np.sqrt(P)),
                          mf.m, mf.hbar, mf.t, mf.amplitude_floor)


def mean_momentum(mf: MadelungFields) -> float:
    Sx = gradient_array(mf.S.values, mf.grid.dx)
    return integrate(Field(mf.grid, mf.P.values * Sx))


def classical_momentum_uncertainty(mf: MadelungFields, return_mean: bool = False):
    """Integral of P (S' - <S'>)^2; the mean momentum is always removed first."""
    Sx = gradient_array(mf.S.values, mf.grid.dx)
    mean = integrate(Field(mf.grid, mf.P.values * Sx))
    var = integrate(Field(mf.grid, mf.P.values * (Sx - mean) ** 2))
    return (var, mean) if return_mean else var


def quantum_correction_functional(P: Field, beta: float = 1.0, floor: float = DENSITY_FLOOR) -> float:
    """beta * integral of ((sqrt P)')^2, computed as (beta/4) * Fisher information."""
    return beta / 4 * fisher_information(P, floor)


@dataclass(frozen=True)
class ScaleCovarianceReport:
    alpha: float
    dx2: float
    dp2_classical: float
    correction: float
    dp2_quantum: float
    dx2_dilated: float
    dp2_classical_dilated: float
    correction_dilated: float
    dp2_quantum_dilated: float
    dp2_predicted: float        # from the uncertainty-pair transformation law
    scale_law_residual: float   # Q' - e^-a Q - (e^a - e^-a) / (4 dx2)
    covariance_residuals: dict = field(default_factory=dict)

    @property
    def product(self):
        return self.dx2 * self.dp2_quantum

    @property
    def product_dilated(self):
        return self.dx2_dilated * self.dp2_quantum_dilated

    @property
    def pair_law_residual(self) -> float:
        return self.dp2_quantum_dilated - self.dp2_predicted


def scale_covariance_check(mf: MadelungFields, s: ScaleParameter | float,
                           hbar: float | None = None) -> ScaleCovarianceReport:
    """Quantum momentum variance (classical part + hbar^2 Q) before and after a dilatation.

    ``scale_law_residual`` measures the correction's transformation law against the
    one demanded by the uncertainty-pair rule; it vanishes exactly when
    Q = 1/(4 dx2).  ``covariance_residuals`` holds the change-of-variables laws
    (variance, classical momentum variance, Q), which hold for any density.
    """
    a = s.alpha if isinstance(s, ScaleParameter) else float(s)
    h = mf.hbar if hbar is None else hbar
    floor = _mf_floor(mf)
    dil = dilate_fields(mf, a)
    dx2, dx2d = position_variance(mf.P), position_variance(dil.P)
    pc, pcd = classical_momentum_uncertainty(mf), classical_momentum_uncertainty(dil)
    Q, Qd = quantum_correction_functional(mf.P, 1.0, floor), quantum_correction_functional(dil.P, 1.0, floor)
    dp2, dp2d = pc + h**2 * Q, pcd + h**2 * Qd
    ea, ema = math.exp(a), math.exp(-a)
    predicted = ema * dp2 + h**2 / 4 * (ea - ema) / dx2
    return ScaleCovarianceReport(
        a, dx2, pc, Q, dp2, dx2d, pcd, Qd, dp2d, predicted,
        scale_law_residual=Qd - ema * Q - (ea - ema) / (4 * dx2),
        covariance_residuals={
            "position_variance": dx2d - ema * dx2,
            "classical_momentum_variance": pcd - ema * pc,
            "correction": Qd - ea * Q,
        })
