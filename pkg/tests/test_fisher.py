import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stability_lab import fisher as fs
from stability_lab import quantum as qm
from stability_lab.errors import AmplitudeBelowFloorError, BoundaryLeakWarning, SupportOverflowError
from stability_lab.numerics import Field, Grid1D

FLOOR = 1e-30


def gaussian_P(sigma, extent=8.0, per_sigma=100, mu=0.0):
    g = Grid1D(mu - extent * sigma, mu + extent * sigma, int(2 * extent * per_sigma) + 1)
    return Field(g, np.exp(-(g.x - mu) ** 2 / (2 * sigma**2)) / math.sqrt(2 * math.pi * sigma**2))


def fields_from_P(P, S=None, hbar=1.0):
    S = Field(P.grid, np.zeros(P.grid.n_points)) if S is None else S
    return qm.MadelungFields(P, S, Field(P.grid, np.sqrt(P.values)), 1.0, hbar, 0.0, FLOOR)


def mixture_wave(grid, centres=(-3.0, 3.0)):
    psi = sum(np.exp(-(grid.x - c) ** 2 / 4) for c in centres) + 0j
    return qm.WaveField(Field(grid, psi)).normalized()


def test_momentum_fluctuation_examples():
    P = gaussian_P(1.0)
    bare = fs.momentum_fluctuation(P)
    assert np.allclose(bare.values, -P.x, atol=1e-9)
    half = fs.momentum_fluctuation(P, "half_hbar", hbar=0.7)
    assert np.array_equal(half.values, -0.35 * bare.values)
    g = Grid1D(0, 1, 50)
    assert np.allclose(fs.momentum_fluctuation(Field(g, np.ones(50))).values, 0.0)
    with pytest.raises(ValueError):
        fs.momentum_fluctuation(P, "other")


def test_density_floor():
    g = Grid1D(-1, 1, 21)
    with pytest.raises(AmplitudeBelowFloorError):
        fs.fisher_information(Field(g, g.x**2))


def test_fisher_hamiltonian_term_values():
    assert fs.fisher_hamiltonian_term(gaussian_P(1.0), c=1.0) == pytest.approx(0.5, abs=1e-10)
    assert fs.fisher_hamiltonian_term(gaussian_P(2.0), c=1.0) == pytest.approx(0.125, abs=1e-10)
    P = gaussian_P(1.0)
    assert fs.fisher_hamiltonian_term(P) == pytest.approx(0.125, abs=1e-10)
    g = Grid1D(-8, 8, 1601)
    mf = qm.decompose(qm.gaussian_packet(g, 1.0), FLOOR)
    assert fs.fisher_hamiltonian_term(mf.P) == pytest.approx(qm.perturbation_action(mf), abs=1e-8)


def test_total_quantum_hamiltonian(grid_8):
    mf = qm.decompose(qm.harmonic_ground_state(grid_8), FLOOR)
    assert fs.total_quantum_hamiltonian(mf) == pytest.approx(0.25, abs=1e-8)
    moving = qm.decompose(qm.gaussian_packet(grid_8, 1.0, p0=1.5), FLOOR)
    assert fs.classical_hamiltonian(moving) == pytest.approx(1.5**2 / 2, abs=1e-8)


@pytest.mark.parametrize("make", [
    lambda g: qm.gaussian_packet(g, 1.0, x0=0.3, p0=-0.8),
    lambda g: mixture_wave(g),
    lambda g: qm.gaussian_packet(g, 0.8),
])
def test_total_equals_kinetic_expectation(make):
    g = Grid1D(-12, 12, 4801)
    w = make(g)
    assert fs.total_quantum_hamiltonian(qm.decompose(w, FLOOR)) == pytest.approx(qm.kinetic_expectation(w), abs=1e-6)


def test_pq_identity_values(grid_8):
    lhs, rhs = fs.pq_integral_identity(qm.decompose(qm.gaussian_packet(grid_8, 1.0), FLOOR))
    assert lhs == pytest.approx(0.125, abs=1e-6) and rhs == pytest.approx(0.125, abs=1e-6)
    g = Grid1D(-16, 16, 3201)
    lhs, rhs = fs.pq_integral_identity(qm.decompose(qm.gaussian_packet(g, 2.0), FLOOR))
    assert lhs == pytest.approx(0.03125, abs=1e-6) and rhs == pytest.approx(0.03125, abs=1e-6)
    g = Grid1D(-12, 12, 2401)
    lhs, rhs = fs.pq_integral_identity(qm.decompose(mixture_wave(g), FLOOR))
    assert lhs == pytest.approx(rhs, abs=1e-5)


def test_pq_identity_warns_on_edge_density():
    g = Grid1D(-2, 2, 401)
    with pytest.warns(BoundaryLeakWarning):
        fs.pq_integral_identity(qm.decompose(qm.gaussian_packet(g, 1.0)))


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_exact_uncertainty_gaussian(sigma):
    _, _, prod = fs.exact_uncertainty_check(gaussian_P(sigma))
    assert prod == pytest.approx(0.25, abs=1e-8)


def test_exact_uncertainty_bimodal():
    g = Grid1D(-12, 12, 2401)
    P = qm.decompose(mixture_wave(g), FLOOR).P
    _, _, prod = fs.exact_uncertainty_check(P, floor=FLOOR)
    assert prod > 0.25 + 0.01


@pytest.mark.parametrize("family", ["sech2", "quartic", "skewed"])
def test_cramer_rao_non_gaussian(family):
    g = Grid1D(-5, 5, 2001) if family == "quartic" else Grid1D(-15, 15, 3001)
    x = g.x
    P = {"sech2": 1 / np.cosh(x) ** 2, "quartic": np.exp(-(x**4) / 4),
         "skewed": np.exp(-x**2 / 2) * (1 + 0.5 * np.tanh(x)) + 1e-12}[family]
    P = Field(g, P / np.trapezoid(P, dx=g.dx))
    _, _, prod = fs.exact_uncertainty_check(P, floor=1e-100)
    assert prod >= 0.25 - 1e-10
    assert prod - 0.25 > 1e-8


@given(lam=st.floats(0.3, 3.0))
@settings(max_examples=20, deadline=None)
def test_uncertainty_product_scale_invariant(lam):
    _, _, prod = fs.exact_uncertainty_check(gaussian_P(1.0 / lam))
    assert prod == pytest.approx(0.25, abs=1e-8)


# -- scale transformations -------------------------------------------------

def test_uncertainty_pair_admissibility():
    with pytest.raises(ValueError):
        fs.UncertaintyPair(1.0, 0.2)
    with pytest.raises(ValueError):
        fs.UncertaintyPair(-1.0, 1.0)
    with pytest.raises(ValueError):
        fs.ScaleParameter(math.inf)


def test_scale_transform_examples():
    u = fs.scale_transform(fs.UncertaintyPair(2.0, 1 / 8), fs.ScaleParameter(math.log(2)))
    assert u.dx2 == pytest.approx(1.0, abs=1e-15)
    assert u.dp2 == pytest.approx(0.25, abs=1e-15)
    assert u.product == pytest.approx(0.25, abs=1e-15)
    start = fs.UncertaintyPair(1.0, 1.0)
    products = [fs.scale_transform(start, a).product for a in np.linspace(0, 15, 31)]
    assert np.all(np.diff(products) < 0)
    assert products[-1] == pytest.approx(0.25, abs=1e-12)


@given(a=st.floats(-10, 10), dx2=st.floats(0.1, 10), slack=st.floats(0, 5))
@settings(max_examples=60, deadline=None)
def test_scale_transform_properties(a, dx2, slack):
    u = fs.UncertaintyPair(dx2, (0.25 + slack) / dx2)
    v = fs.scale_transform(u, a)
    assert v.product >= 0.25 - 1e-12 * max(1.0, v.product)
    # for alpha < 0 the map magnifies the Heisenberg slack, and its rounding, by e^(-2 alpha)
    assert v.product == pytest.approx(fs.product_map(u.product, a), rel=1e-12,
                                      abs=1e-12 * max(1.0, math.exp(-2 * a)))
    fixed = fs.scale_transform(fs.UncertaintyPair(dx2, 0.25 / dx2), a)
    assert fixed.product == pytest.approx(0.25, abs=1e-12)


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), slack=st.floats(0, 2))
@settings(max_examples=60, deadline=None)
def test_scale_group_property(a, b, slack):
    u = fs.UncertaintyPair(1.7, (0.25 + slack) / 1.7)
    w1 = fs.scale_transform(fs.scale_transform(u, a), b)
    w2 = fs.scale_transform(u, a + b)
    assert w1.dx2 == pytest.approx(w2.dx2, rel=1e-12)
    assert w1.dp2 == pytest.approx(w2.dp2, rel=1e-12)


# -- dilatations -----------------------------------------------------------

def chirped_gaussian(sigma=1.0, chirp=0.3):
    P = gaussian_P(sigma)
    return fields_from_P(P, Field(P.grid, chirp * P.x**2))


def test_dilate_identity():
    mf = chirped_gaussian()
    d = fs.dilate_fields(mf, 0.0)
    assert np.array_equal(d.P.values, mf.P.values) and np.array_equal(d.S.values, mf.S.values)


@pytest.mark.parametrize("alpha", [-1.0, 0.5, 2.0])
def test_dilate_covariance_laws(alpha):
    mf = chirped_gaussian()
    d = fs.dilate_fields(mf, fs.ScaleParameter(alpha))
    assert np.trapezoid(d.P.values, dx=d.grid.dx) == pytest.approx(1.0, abs=1e-12)
    assert fs.position_variance(d.P) == pytest.approx(math.exp(-alpha), rel=1e-10)
    assert fs.classical_momentum_uncertainty(d) == pytest.approx(
        math.exp(-alpha) * fs.classical_momentum_uncertainty(mf), rel=1e-8)
    assert fs.quantum_correction_functional(d.P) == pytest.approx(
        math.exp(alpha) * fs.quantum_correction_functional(mf.P), rel=1e-8)


def test_dilate_onto_supplied_grid():
    mf = chirped_gaussian()
    target = Grid1D(-20, 20, 4001)
    d = fs.dilate_fields(mf, -1.0, grid=target)
    assert d.grid == target
    assert fs.position_variance(d.P) == pytest.approx(math.e, rel=1e-4)
    with pytest.raises(SupportOverflowError):
        fs.dilate_fields(mf, -1.0, grid=Grid1D(-3, 3, 601))


def test_classical_momentum_uncertainty_examples():
    P = gaussian_P(1.0)
    assert fs.classical_momentum_uncertainty(fields_from_P(P)) == 0.0
    drift = fields_from_P(P, Field(P.grid, 1.3 * P.x))
    var, mean = fs.classical_momentum_uncertainty(drift, return_mean=True)
    assert abs(var) < 1e-12 and mean == pytest.approx(1.3, abs=1e-12)


@pytest.mark.parametrize("sigma,expect", [(1.0, 0.25), (2.0, 0.0625)])
def test_quantum_correction_functional(sigma, expect):
    assert fs.quantum_correction_functional(gaussian_P(sigma)) == pytest.approx(expect, abs=1e-10)
    assert fs.quantum_correction_functional(gaussian_P(sigma), beta=3.0) == pytest.approx(3 * expect, abs=1e-10)


@pytest.mark.parametrize("alpha", [-1.0, 0.5, 2.0])
def test_scale_covariance_gaussian(alpha):
    r = fs.scale_covariance_check(chirped_gaussian(), alpha)
    assert abs(r.scale_law_residual) <= 1e-8
    assert abs(r.pair_law_residual) <= 1e-8
    assert all(abs(v) <= 1e-8 for v in r.covariance_residuals.values())
    flat = fs.scale_covariance_check(fields_from_P(gaussian_P(1.0)), alpha)
    assert flat.product == pytest.approx(0.25, abs=1e-8)
    assert flat.product_dilated == pytest.approx(0.25, abs=1e-8)


def test_scale_covariance_non_gaussian_separates_laws():
    g = Grid1D(-20, 20, 4001)
    P = Field(g, 0.5 / np.cosh(g.x) ** 2)
    r = fs.scale_covariance_check(fields_from_P(P, Field(g, 0.2 * g.x**2)), 0.5)
    # change-of-variables laws hold for any density
    assert all(abs(v) <= 1e-8 for v in r.covariance_residuals.values())
    # the correction's transformation law is tied to Q = 1/(4 dx2), which only a Gaussian meets
    assert r.scale_law_residual == pytest.approx(
        (math.exp(0.5) - math.exp(-0.5)) * (r.correction - 1 / (4 * r.dx2)), rel=1e-8)
    assert r.correction > 1 / (4 * r.dx2)
