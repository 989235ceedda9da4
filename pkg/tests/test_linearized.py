import numpy as np
import pytest

from galmix.errors import MissingIncrementsError
from galmix.integrate import integrate_increments, simulate_path
from galmix.linearized import (eta_h3_budget, evolve_eta,
                               fd_directional_derivative)
from galmix.noise import make_noise_spec
from galmix.rng import RngStream
from galmix.spectral import build_shell_model


@pytest.fixture(scope="module")
def setup():
    model = build_shell_model(5, 0.3, mu1=1.0)
    spec = make_noise_spec(model, "modulated_diagonal", s=2.75,
                           modulation_amplitude=0.5, scale=0.5)
    return model, spec


def test_zero_direction(setup):
    model, spec = setup
    traj = simulate_path(model, spec, 0.2 * np.ones(5), 0.3, 1e-3, RngStream(30))
    eta = evolve_eta(model, spec, traj, 0.0, np.zeros(5))
    assert np.all(eta.states == 0.0)


def test_linear_constant_noise_exact(setup):
    model = build_shell_model(4, 0.0, mu1=1.0)
    spec = make_noise_spec(model, "constant_diagonal", s=2.75)
    traj = simulate_path(model, spec, np.ones(4), 0.4, 1e-3, RngStream(31))
    h = np.array([1.0, -0.5, 2.0, 0.0])
    eta = evolve_eta(model, spec, traj, 0.0, h)
    exact = np.exp(-model.eigenvalues[None, :] * traj.times[:, None]) * h
    assert np.max(np.abs(eta.states - exact)) < 1e-12


def test_matches_common_noise_finite_difference(setup):
    model, spec = setup
    x0 = 0.2 * np.ones(5)
    gen = RngStream(32).generator()
    for k in range(5):
        h = gen.standard_normal(5)
        stream = RngStream(33, k)
        traj = simulate_path(model, spec, x0, 0.3, 1e-3, stream)
        eta = evolve_eta(model, spec, traj, 0.0, h)
        fd = fd_directional_derivative(model, spec, x0, h, 1e-5, 0.3, 1e-3,
                                       stream)
        rel = np.linalg.norm(eta.states[-1] - fd) / np.linalg.norm(fd)
        assert rel < 1e-3


def test_fd_linear_independent_of_eps():
    model = build_shell_model(4, 0.0, mu1=1.0)
    spec = make_noise_spec(model, "constant_diagonal", s=2.75)
    h = np.ones(4)
    outs = [fd_directional_derivative(model, spec, np.ones(4), h, eps, 0.2,
                                      1e-3, RngStream(34))
            for eps in (1e-3, 1e-6)]
    assert np.max(np.abs(outs[0] - outs[1])) < 1e-9


def test_fd_richardson(setup):
    model, spec = setup
    x0, h = 0.2 * np.ones(5), np.array([1.0, 1.0, 0.0, 0.0, 0.0])
    stream = RngStream(35)
    f1 = fd_directional_derivative(model, spec, x0, h, 1e-3, 0.3, 1e-3, stream)
    f2 = fd_directional_derivative(model, spec, x0, h, 5e-4, 0.3, 1e-3, stream)
    # central difference error is O(eps^2): quartering under eps/2
    traj = simulate_path(model, spec, x0, 0.3, 1e-3, stream)
    eta = evolve_eta(model, spec, traj, 0.0, h).states[-1]
    e1 = np.linalg.norm(f1 - eta)
    e2 = np.linalg.norm(f2 - eta)
    assert e2 < max(0.5 * e1, 1e-12)


def test_fd_degree_one_homogeneous(setup):
    model, spec = setup
    x0, h = 0.2 * np.ones(5), np.array([0.5, -0.2, 0.1, 0.0, 0.0])
    stream = RngStream(36)
    eps = 1e-4
    f1 = fd_directional_derivative(model, spec, x0, h, eps, 0.3, 1e-3, stream)
    f2 = fd_directional_derivative(model, spec, x0, 2 * h, eps, 0.3, 1e-3, stream)
    assert np.linalg.norm(f2 - 2 * f1) < 1e-5 * np.linalg.norm(f1)


def test_pathwise_linearity(setup):
    model, spec = setup
    traj = simulate_path(model, spec, 0.2 * np.ones(5), 0.3, 1e-3, RngStream(37))
    gen = RngStream(38).generator()
    h1, h2 = gen.standard_normal((2, 5))
    e1 = evolve_eta(model, spec, traj, 0.0, h1).states[-1]
    e2 = evolve_eta(model, spec, traj, 0.0, h2).states[-1]
    e12 = evolve_eta(model, spec, traj, 0.0, h1 + h2).states[-1]
    assert np.max(np.abs(e12 - (e1 + e2))) < 1e-10 * max(1.0, np.max(np.abs(e12)))


def test_cocycle(setup):
    model, spec = setup
    traj = simulate_path(model, spec, 0.2 * np.ones(5), 0.4, 1e-3, RngStream(39))
    h = np.array([1.0, 0.0, -1.0, 0.5, 0.0])
    s = 0.2
    full = evolve_eta(model, spec, traj, 0.0, h)
    mid = full.at(s)
    restarted = evolve_eta(model, spec, traj, s, mid)
    gap = np.linalg.norm(restarted.states[-1] - full.states[-1])
    assert gap < 1e-8 * max(1.0, np.linalg.norm(full.states[-1]))


def test_gradient_chain_rule(setup):
    # E <grad g(X_T), eta_T> against the CRN finite difference of E g(X_T)
    model, spec = setup
    x0 = 0.2 * np.ones(5)
    h = np.array([1.0, 0.5, 0.0, 0.0, 0.0])
    T, dt, eps, n = 0.3, 1e-3, 1e-4, 300
    chain, fd = [], []
    for i in range(n):
        stream = RngStream(40, i)
        traj = simulate_path(model, spec, x0, T, dt, stream)
        eta = evolve_eta(model, spec, traj, 0.0, h)
        chain.append(eta.states[-1][0])  # g = first coordinate, grad g = e_1
        d = fd_directional_derivative(model, spec, x0, h, eps, T, dt, stream)
        fd.append(d[0])
    chain, fd = np.asarray(chain), np.asarray(fd)
    diff = chain - fd
    se = np.std(diff, ddof=1) / np.sqrt(n) + 1e-12
    assert abs(np.mean(diff)) < 3 * se + 1e-6


def test_eta_h3_budget(setup):
    model, spec = setup
    traj = simulate_path(model, spec, 0.2 * np.ones(5), 0.3, 1e-3, RngStream(41))
    zero = evolve_eta(model, spec, traj, 0.0, np.zeros(5))
    assert eta_h3_budget(model, zero, 0.3) == 0.0

    h = np.array([1.0, -1.0, 0.5, 0.0, 0.0])
    b1 = eta_h3_budget(model, evolve_eta(model, spec, traj, 0.0, h), 0.3)
    b2 = eta_h3_budget(model, evolve_eta(model, spec, traj, 0.0, 2 * h), 0.3)
    assert b2 == pytest.approx(4.0 * b1, rel=1e-10)

    # Monte Carlo mean is stable under doubling the sample
    vals = []
    for i in range(200):
        t = simulate_path(model, spec, 0.2 * np.ones(5), 0.3, 1e-3, RngStream(42, i))
        vals.append(eta_h3_budget(model, evolve_eta(model, spec, t, 0.0, h), 0.3))
    vals = np.asarray(vals)
    m1, m2 = np.mean(vals[:100]), np.mean(vals)
    se = np.std(vals, ddof=1) / np.sqrt(100)
    assert np.isfinite(m2)
    assert abs(m1 - m2) < 3 * se


def test_requires_increments(setup):
    model, spec = setup
    traj = integrate_increments(model, spec, np.zeros(5), 1e-3, np.zeros((10, 5)))
    traj.increments = np.empty((0, 5))
    with pytest.raises(MissingIncrementsError):
        evolve_eta(model, spec, traj, 0.0, np.ones(5))
