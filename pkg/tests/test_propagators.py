import numpy as np
import pytest

from peridyn import InvalidArgumentError, MacroGrid, StepTooLargeError
from peridyn.nonlocal_ops import long_range_operator, short_range_operator
from peridyn.propagators import (
    SeriesPropagator,
    propagate_series,
    propagate_verlet,
    series_terms_needed,
    stability_budget,
)


def test_free_drift_exact():
    u, v = propagate_series(np.zeros((2, 2)), [1.0, -1.0], [2.0, 0.5], None, 3.0)
    assert np.array_equal(u, [7.0, 0.5])
    assert np.array_equal(v, [2.0, 0.5])


def test_harmonic_oscillator_closed_form():
    omega = 2.0
    for t in (1.0, 2.5, 5.0):  # up to omega * t = 10
        u, v = propagate_series(np.array([[-(omega**2)]]), [1.0], [1.0], None, t)
        assert abs(u[0] - (np.cos(omega * t) + np.sin(omega * t) / omega)) < 1e-10
        assert abs(v[0] - (-omega * np.sin(omega * t) + np.cos(omega * t))) < 1e-10


def test_constant_forcing_closed_form():
    u, _ = propagate_series(
        np.array([[-1.0]]), [0.0], [0.0], lambda t: np.array([1.0]), 1.0, samples=200
    )
    assert abs(u[0] - (1.0 - np.cos(1.0))) < 1e-8


def test_time_reversibility():
    omega = 1.7
    mat = np.array([[-(omega**2)]])
    u0, v0 = np.array([0.8]), np.array([-0.3])
    u1, v1 = propagate_series(mat, u0, v0, None, 2.0)
    u2, v2 = propagate_series(mat, u1, -v1, None, 2.0)
    assert abs(u2[0] - u0[0]) < 1e-10
    assert abs(v2[0] + v0[0]) < 1e-10


def test_duhamel_linearity():
    mat = np.array([[-2.0]])
    g1 = lambda t: np.array([np.sin(t)])  # noqa: E731
    g2 = lambda t: np.array([np.cos(2 * t)])  # noqa: E731
    g12 = lambda t: g1(t) + g2(t)  # noqa: E731
    u1, v1 = propagate_series(mat, [0.0], [0.0], g1, 1.5)
    u2, v2 = propagate_series(mat, [0.0], [0.0], g2, 1.5)
    u12, v12 = propagate_series(mat, [0.0], [0.0], g12, 1.5)
    assert abs(u12[0] - u1[0] - u2[0]) < 1e-12
    assert abs(v12[0] - v1[0] - v2[0]) < 1e-12


def test_series_step_too_large():
    with pytest.raises(StepTooLargeError):
        SeriesPropagator(np.array([[-100.0]]), 10.0)
    assert series_terms_needed(1.0, 0.5) <= 12


def test_verlet_free_drift_exact_at_every_step():
    traj = propagate_verlet(
        lambda u: 0.0 * u, np.array([1.0, -2.0]), np.array([0.5, 0.25]), None,
        0.125, 1.0, 0.0,
    )
    for k, t in enumerate(traj.times):
        assert np.array_equal(traj.states[k], [1.0 + 0.5 * t, -2.0 + 0.25 * t])
        assert np.array_equal(traj.velocities[k], [0.5, 0.25])


def test_verlet_second_order_richardson():
    omega, T = 2.0, 5.0
    errs = []
    for dt in (1e-2, 5e-3):
        traj = propagate_verlet(
            lambda u: -(omega**2) * u,
            np.array([1.0]),
            np.array([0.0]),
            None,
            dt,
            T,
            omega**2,
            stride=10**9,
        )
        errs.append(abs(traj.final()[0] - np.cos(omega * T)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)


def test_verlet_matches_series_on_assembled_system(micro1d, rng):
    g = MacroGrid((0.0,), (1.0,), (32,))
    op_mat = (
        long_range_operator(g, 1.0, 0.25).as_matrix()
        + short_range_operator(g, micro1d, 0.5).as_matrix()
    )
    u0 = rng.standard_normal(32)
    v0 = rng.standard_normal(32) * 0.2
    dt, T = 1e-3, 1.0
    traj = propagate_verlet(
        lambda u: op_mat @ u, u0, v0, None, dt, T, np.linalg.norm(op_mat, 2), stride=10**9
    )
    u_ref, _ = propagate_series(op_mat, u0, v0, None, T)
    scale = np.linalg.norm(op_mat, 2) * np.max(np.abs(u0))
    assert np.max(np.abs(traj.final() - u_ref)) <= 10 * dt**2 * scale


def test_verlet_energy_drift_bounded(micro1d):
    g = MacroGrid((0.0,), (1.0,), (32,))
    mat = (
        long_range_operator(g, 1.0, 0.25).as_matrix()
        + short_range_operator(g, micro1d, 0.5).as_matrix()
    )
    norm = np.linalg.norm(mat, 2)
    dt = 0.2 * stability_budget(norm)
    u = np.sin(np.pi * g.nodes()[:, 0])
    v = np.zeros_like(u)

    def energy(uu, vv):
        return 0.5 * vv @ vv - 0.5 * uu @ (mat @ uu)

    e0 = energy(u, v)
    energies = []
    a = mat @ u
    for k in range(10_000):
        u = u + dt * v + 0.5 * dt * dt * a
        a_next = mat @ u
        v = v + 0.5 * dt * (a + a_next)
        a = a_next
        energies.append(energy(u, v))
    energies = np.asarray(energies)
    assert np.max(np.abs(energies - e0)) <= 0.05 * abs(e0)
    head = energies[:1000].mean()
    tail = energies[-1000:].mean()
    assert abs(tail - head) <= 0.01 * abs(e0)


def test_verlet_rejects_step_over_budget():
    with pytest.raises(InvalidArgumentError):
        propagate_verlet(
            lambda u: -100.0 * u, np.array([1.0]), np.array([0.0]), None,
            1.0, 2.0, 100.0,
        )


def test_verlet_rejects_non_dividing_step():
    with pytest.raises(InvalidArgumentError):
        propagate_verlet(
            lambda u: -u, np.array([1.0]), np.array([0.0]), None, 0.3, 1.0, 1.0
        )
