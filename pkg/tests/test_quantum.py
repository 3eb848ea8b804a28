import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stability_lab import quantum as qm
from stability_lab.errors import (
    AmplitudeBelowFloorError,
    BoundaryLeakWarning,
    GridMismatchError,
    TrajectoryLeftGridError,
)
from stability_lab.numerics import Field, Grid1D, laplacian_array

FLOOR = 1e-30


def zero(grid):
    return Field(grid, np.zeros(grid.n_points))


def plane_wave(grid, p, t=0.0, m=1.0, hbar=1.0):
    return qm.WaveField(Field(grid, np.exp(1j * (p * grid.x - p**2 * t / (2 * m)) / hbar)), m, hbar, t)


# -- states and propagation ------------------------------------------------

def test_wavefield_validation(grid_8):
    with pytest.raises(ValueError):
        qm.WaveField(Field(grid_8, np.ones(grid_8.n_points) + 0j), m=0.0)


def test_gaussian_packet_normalized(grid_8):
    w = qm.gaussian_packet(grid_8, 1.0, x0=0.5, p0=1.0)
    assert w.norm() == pytest.approx(1.0, abs=1e-10)
    mean, var = qm.position_moments(w)
    assert mean == pytest.approx(0.5, abs=1e-10)
    assert var == pytest.approx(1.0, abs=1e-10)


def test_cn_ground_state_is_stationary():
    g = Grid1D.from_spacing(-8, 8, 0.05)
    w0 = qm.harmonic_ground_state(g)
    n = int(round(2 * np.pi / 1e-3))
    w1 = qm.evolve_cn(w0, qm.harmonic_potential(g), 2 * np.pi / n, n)
    assert abs(qm.overlap(w0, w1)) == pytest.approx(1.0, abs=1e-8)


def test_cn_free_width_law():
    g = Grid1D(-20, 20, 801)
    w = qm.evolve_cn(qm.gaussian_packet(g, 1.0), zero(g), 5e-3, 400)
    assert w.t == pytest.approx(2.0)
    _, var = qm.position_moments(w)
    assert var / qm.free_packet_sigma2(2.0, 1.0) == pytest.approx(1.0, rel=5e-3)


def test_cn_norm_per_step():
    g = Grid1D(-20, 20, 801)
    w = qm.gaussian_packet(g, 2.0, p0=1.5)
    prop = qm.CrankNicolson(g, zero(g), 1e-2)
    psi = np.array(w.psi.values)
    n0 = w.norm()
    for _ in range(50):
        psi = prop.step(psi)
        n1 = qm.WaveField(Field(g, psi)).norm()
        assert abs(n1 - n0) <= 1e-12
        n0 = n1


def test_cn_history_snapshots(grid_8):
    w = qm.harmonic_ground_state(grid_8)
    hist = qm.evolve_cn_history(w, qm.harmonic_potential(grid_8), 1e-2, 25, snapshot_stride=10)
    assert [round(h.t, 10) for h in hist] == [0.0, 0.1, 0.2, 0.25]


def test_cn_boundary_leak_warns():
    g = Grid1D(-2, 2, 101)
    w = qm.gaussian_packet(g, 1.0)
    with pytest.warns(BoundaryLeakWarning):
        qm.evolve_cn(w, zero(g), 1e-2, 2)


def test_cn_rejects_bad_dt(grid_8):
    with pytest.raises(ValueError):
        qm.CrankNicolson(grid_8, zero(grid_8), 0.0)


def test_kinetic_expectation_methods(grid_8):
    w = qm.gaussian_packet(grid_8, 1.0, p0=1.0)
    assert qm.kinetic_expectation(w) == pytest.approx(0.5 + 0.125, abs=1e-10)
    assert qm.kinetic_expectation(w, "stencil") == pytest.approx(0.625, abs=1e-3)


# -- Madelung decomposition ------------------------------------------------

def test_decompose_real_gaussian(grid_8):
    w = qm.gaussian_packet(grid_8, 1.0)
    mf = qm.decompose(w, FLOOR)
    assert np.all(mf.S.values == 0)
    assert np.allclose(mf.A.values, w.psi.values.real)
    assert np.allclose(mf.P.values, mf.A.values**2, atol=1e-12)


def test_decompose_plane_wave_phase(grid_8):
    mf = qm.decompose(qm.gaussian_packet(grid_8, 1.0, p0=2.5), FLOOR)
    S = mf.S.values
    assert np.allclose(S - S[800], 2.5 * (grid_8.x - grid_8.x[800]), atol=1e-9)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_decompose_round_trip(seed):
    rng = np.random.default_rng(seed)
    g = Grid1D(-3, 3, 200)
    amp = 0.5 + rng.random(g.n_points)
    phase = np.cumsum(rng.normal(0, 0.5, g.n_points))
    w = qm.WaveField(Field(g, amp * np.exp(1j * phase)))
    back = qm.recompose(qm.decompose(w))
    assert np.max(np.abs(back.psi.values - w.psi.values)) < 1e-12


def test_decompose_node_raises():
    g = Grid1D(-1, 1, 21)
    with pytest.raises(AmplitudeBelowFloorError):
        qm.decompose(qm.WaveField(Field(g, g.x + 0j)))


# -- quantum potential -----------------------------------------------------

def test_quantum_potential_harmonic(grid_8):
    mf = qm.decompose(qm.harmonic_ground_state(grid_8), FLOOR)
    Q = qm.quantum_potential(mf)
    win = np.abs(grid_8.x) <= 4
    assert np.max(np.abs(Q.values - (0.5 - 0.5 * grid_8.x**2))[win]) <= 1e-4
    assert Q.values[800] == pytest.approx(0.5, abs=1e-4)


def test_quantum_potential_plane_wave_zero():
    g = Grid1D(-5, 5, 201)
    Q = qm.quantum_potential(qm.decompose(plane_wave(g, 1.3)))
    assert np.allclose(Q.values, 0.0, atol=1e-12)


def test_quantum_potential_forms_agree():
    g = Grid1D(-6, 6, 1201)
    psi = np.exp(-g.x**2 / 4) * (1.2 + 0.3 * np.sin(g.x)) * np.exp(0.4j * g.x)
    mf = qm.decompose(qm.WaveField(Field(g, psi)).normalized(), FLOOR)
    qa = qm.quantum_potential_amplitude_form(mf).values
    qp = qm.quantum_potential_density_form(mf).values
    assert np.max(np.abs(qa - qp)) <= 1e-8


def test_quantum_potential_log_form_matches_direct_stencil():
    g = Grid1D(-6, 6, 2401)
    mf = qm.decompose(qm.gaussian_packet(g, 1.0) , FLOOR)
    qa = qm.quantum_potential(mf).values
    qd = qm.quantum_potential_direct(mf).values
    win = np.abs(g.x) <= 3
    assert np.max(np.abs(qa - qd)[win]) < 1e-4


def test_quantum_potential_floor():
    g = Grid1D(-30, 30, 601)
    A = np.exp(-g.x**2 / 4)
    mf = qm.MadelungFields(Field(g, A**2), Field(g, 0 * A), Field(g, A), amplitude_floor=1e-10)
    with pytest.raises(AmplitudeBelowFloorError):
        qm.quantum_potential(mf)


# -- residuals -------------------------------------------------------------

def ground_pair(grid, dt=1e-3):
    a = qm.decompose(qm.harmonic_ground_state(grid), FLOOR)
    b = qm.decompose(qm.harmonic_ground_state(grid, t=dt), FLOOR)
    return a, b


def test_stationary_residuals(grid_8):
    a, b = ground_pair(grid_8)
    U = qm.harmonic_potential(grid_8)
    win = np.abs(grid_8.x) <= 4
    assert np.max(np.abs(qm.continuity_residual(a, b, 1e-3).values)) < 1e-10
    assert np.max(np.abs(qm.quantum_hj_residual(a, b, U, 1e-3).values[win])) <= 1e-6
    assert np.max(np.abs(qm.chetaev_q_consistency(a, b, U, 1e-3).values[win])) <= 1e-6


def test_plane_wave_residuals():
    g = Grid1D(-5, 5, 201)
    dt = 1e-3
    a, b = qm.decompose(plane_wave(g, 0.8)), qm.decompose(plane_wave(g, 0.8, t=dt))
    U = zero(g)
    assert np.allclose(qm.continuity_residual(a, b, dt).values, 0, atol=1e-10)
    assert np.allclose(qm.quantum_hj_residual(a, b, U, dt).values, 0, atol=1e-9)



def test_plane_wave_chetaev_vanishes_at_second_order():
    # the wave-form kinetic term differences psi itself, so it carries O(dx^2) error
    errs = []
    for n in (201, 401):
        g = Grid1D(-5, 5, n)
        dt = 1e-3
        a, b = qm.decompose(plane_wave(g, 0.8)), qm.decompose(plane_wave(g, 0.8, t=dt))
        errs.append(np.max(np.abs(qm.chetaev_q_consistency(a, b, zero(g), dt).values)))
    assert errs[0] < 1e-3
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_residual_grid_mismatch(grid_8):
    a, _ = ground_pair(grid_8)
    other = qm.decompose(qm.harmonic_ground_state(Grid1D(-8, 8, 801)), FLOOR)
    with pytest.raises(GridMismatchError):
        qm.continuity_residual(a, other, 1e-3)


def _free_levels(dx, dt):
    g = Grid1D.from_spacing(-10, 10, dx)
    n = int(round(1.0 / dt))
    hist = qm.evolve_cn_history(qm.gaussian_packet(g, 1.0), zero(g), dt, n)
    a, b = qm.decompose(hist[-2]), qm.decompose(hist[-1])
    win = np.abs(g.x) <= 4
    U = zero(g)
    return np.array([np.max(np.abs(f.values[win])) for f in (
        qm.continuity_residual(a, b, dt), qm.quantum_hj_residual(a, b, U, dt),
        qm.chetaev_q_consistency(a, b, U, dt))])


def test_evolved_residuals_second_order():
    coarse, fine = _free_levels(0.1, 0.01), _free_levels(0.05, 0.005)
    orders = np.log2(coarse / fine)
    assert np.all(orders >= 1.8), orders


def test_omitted_continuity_term_is_nonzero_for_spreading_packet():
    g = Grid1D(-10, 10, 401)
    w = qm.evolve_cn(qm.gaussian_packet(g, 1.0), zero(g), 0.01, 100)
    mf = qm.decompose(w)
    assert np.max(np.abs(qm.continuity_omitted_term(mf).values)) > 1e-2
    assert np.max(np.abs(qm.amplitude_transport_l0_gap(mf).values)) > 1e-2


def test_amplitude_transport_residual_small():
    g = Grid1D(-10, 10, 801)
    hist = qm.evolve_cn_history(qm.gaussian_packet(g, 1.0), zero(g), 0.005, 100)
    a, b = qm.decompose(hist[-2], 1e-14), qm.decompose(hist[-1], 1e-14)
    win = np.abs(g.x) <= 4
    assert np.max(np.abs(qm.amplitude_transport_residual(a, b, 0.005).values[win])) < 1e-3


def test_stability_condition_forms():
    g = Grid1D(-2, 2, 801)
    x = g.x
    psi = np.exp(-x**2 / 4) * np.exp(1j * x**3)
    wave, action = qm.stability_condition_residual(qm.decompose(qm.WaveField(Field(g, psi))))
    inner = slice(2, -2)
    assert np.allclose(wave.values, action.values, atol=1e-8)
    assert np.max(np.abs(action.values[inner] - 6 * x[inner])) < 1e-3
    wave, action = qm.stability_condition_residual(qm.decompose(plane_wave(g, 1.1)))
    assert np.allclose(wave.values, 0, atol=1e-9) and np.allclose(action.values, 0, atol=1e-9)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_stability_condition_forms_random(seed):
    rng = np.random.default_rng(seed)
    g = Grid1D(-3, 3, 300)
    c = rng.normal(size=4)
    S = c[0] * g.x + c[1] * g.x**2 + 0.3 * c[2] * np.sin(2 * g.x)
    amp = np.exp(-g.x**2 / 3) * (1.5 + 0.5 * np.tanh(c[3] * g.x))
    wave, action = qm.stability_condition_residual(qm.decompose(qm.WaveField(Field(g, amp * np.exp(1j * S)))))
    assert np.max(np.abs(wave.values - action.values)) <= 1e-8 * (1 + np.max(np.abs(action.values)))


def test_perturbation_action_values(grid_8):
    mf = qm.decompose(qm.gaussian_packet(grid_8, 1.0), FLOOR)
    assert qm.perturbation_action(mf) == pytest.approx(0.125, abs=1e-8)
    g = Grid1D(-5, 5, 201)
    assert abs(qm.perturbation_action(qm.decompose(plane_wave(g, 0.5)))) < 1e-12


# -- Bohm trajectories -----------------------------------------------------

def test_bohm_ground_state_static(grid_8):
    U = qm.harmonic_potential(grid_8)
    hist = qm.evolve_cn_history(qm.harmonic_ground_state(grid_8), U, 1e-2, 100)
    seeds = [-1.0, 0.0, 0.7]
    ens = qm.bohm_trajectories(hist, seeds)
    assert np.allclose(ens.x, np.array(seeds)[None, :], atol=1e-6)


def test_bohm_free_scaling():
    g = Grid1D(-20, 20, 801)
    hist = qm.evolve_cn_history(qm.gaussian_packet(g, 1.0), zero(g), 5e-3, 400)
    seeds = np.array([-2.0, -1.0, 0.5, 1.5])
    ens = qm.bohm_trajectories(hist, seeds)
    expect = seeds * math.sqrt(qm.free_packet_sigma2(2.0, 1.0))
    assert np.allclose(ens.x[-1], expect, rtol=1e-2)
    assert np.all(np.diff(ens.x, axis=1) > 0)


def test_bohm_plane_wave_velocity():
    g = Grid1D(-10, 10, 401)
    hist = [plane_wave(g, 0.7, t=0.01 * k) for k in range(101)]
    ens = qm.bohm_trajectories(hist, [0.0, 1.0])
    assert np.allclose(ens.x[-1], np.array([0.0, 1.0]) + 0.7, atol=1e-10)
    assert np.allclose(ens.trajectory(1), 1.0 + 0.7 * ens.t, atol=1e-10)


def test_bohm_left_grid():
    g = Grid1D(-1, 1, 101)
    hist = [plane_wave(g, 5.0, t=0.1 * k) for k in range(10)]
    with pytest.raises(TrajectoryLeftGridError):
        qm.bohm_trajectories(hist, [0.5])


def test_sample_density_matches_cdf(grid_8, rng):
    w = qm.gaussian_packet(grid_8, 1.0)
    xs = qm.sample_density(w, 20000, rng)
    assert np.mean(xs) == pytest.approx(0.0, abs=0.03)
    assert np.var(xs) == pytest.approx(1.0, abs=0.05)
