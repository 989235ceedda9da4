"""The numba kernels and their pure-numpy fallbacks must agree.

Per-path stepping performs identical elementwise operations in both
backends, so results are compared bitwise; only reductions (norms inside
the pair kernel) may reorder sums, and the proximity decision is checked
for agreement instead.
"""

import numpy as np
import pytest

from galmix import kernels
from galmix.noise import make_noise_spec
from galmix.rng import RngStream

needs_numba = pytest.mark.skipif(not kernels.USE_NUMBA,
                                 reason="numba backend disabled")


def _setup(shell5):
    spec = make_noise_spec(shell5, "modulated_diagonal", s=2.75,
                           modulation_amplitude=0.5)
    gen = RngStream(99).generator()
    x0 = 0.3 * gen.standard_normal(shell5.n_modes)
    incs = gen.standard_normal((200, shell5.n_modes)) * np.sqrt(1e-3)
    return spec, x0, incs


@needs_numba
def test_bilinear_backends_agree(shell5):
    gen = RngStream(3).generator()
    u, v = gen.standard_normal((2, shell5.n_modes))
    a = kernels.bilinear_numpy(shell5.tensor_l, shell5.tensor_m,
                               shell5.tensor_n, shell5.tensor_v, u, v)
    b = kernels.bilinear_numba(shell5.tensor_l, shell5.tensor_m,
                               shell5.tensor_n, shell5.tensor_v, u, v)
    assert np.array_equal(a, b)


@needs_numba
@pytest.mark.parametrize("scheme", [kernels.EULER, kernels.SEMI_IMPLICIT])
def test_integrate_path_backends_agree(shell5, scheme):
    spec, x0, incs = _setup(shell5)
    out = {}
    for name, fn in (("np", kernels.integrate_path_numpy),
                     ("nb", kernels.integrate_path_numba)):
        states = np.zeros((len(incs) + 1, shell5.n_modes))
        done = fn(x0, shell5.eigenvalues, shell5.nu, shell5.forcing,
                  shell5.tensor_l, shell5.tensor_m, shell5.tensor_n,
                  shell5.tensor_v, spec.kind_code, spec.base_amplitudes,
                  spec.modulation_amplitude, 1e-3, scheme, incs, states)
        out[name] = (done, states)
    assert out["np"][0] == out["nb"][0]
    assert np.array_equal(out["np"][1], out["nb"][1])


@needs_numba
def test_integrate_eta_backends_agree(shell5):
    spec, x0, incs = _setup(shell5)
    states = np.zeros((len(incs) + 1, shell5.n_modes))
    kernels.integrate_path_numpy(
        x0, shell5.eigenvalues, shell5.nu, shell5.forcing,
        shell5.tensor_l, shell5.tensor_m, shell5.tensor_n, shell5.tensor_v,
        spec.kind_code, spec.base_amplitudes, spec.modulation_amplitude,
        1e-3, kernels.SEMI_IMPLICIT, incs, states)
    h = np.ones(shell5.n_modes)
    outs = []
    for fn in (kernels.integrate_eta_numpy, kernels.integrate_eta_numba):
        eta = np.zeros_like(states)
        fn(states, incs, h, 0, shell5.eigenvalues, shell5.nu,
           shell5.tensor_l, shell5.tensor_m, shell5.tensor_n, shell5.tensor_v,
           spec.kind_code, spec.base_amplitudes, spec.modulation_amplitude,
           1e-3, kernels.SEMI_IMPLICIT, eta)
        outs.append(eta)
    assert np.array_equal(outs[0], outs[1])


@needs_numba
def test_pair_advance_backends_agree(shell5):
    spec, x0, incs = _setup(shell5)
    results = []
    for fn in (kernels.pair_advance_sync_numpy, kernels.pair_advance_sync_numba):
        x1 = x0.copy()
        x2 = x0 + 1e-3 * np.ones(shell5.n_modes)
        stop, status = fn(x1, x2, shell5.eigenvalues, shell5.nu, shell5.forcing,
                          shell5.tensor_l, shell5.tensor_m, shell5.tensor_n,
                          shell5.tensor_v, spec.kind_code, spec.base_amplitudes,
                          spec.modulation_amplitude, 1e-3,
                          kernels.SEMI_IMPLICIT, incs, 0, 0.5)
        results.append((stop, status, x1.copy(), x2.copy()))
    assert results[0][0] == results[1][0]
    assert results[0][1] == results[1][1]
    assert np.allclose(results[0][2], results[1][2], rtol=1e-13, atol=0)
    assert np.allclose(results[0][3], results[1][3], rtol=1e-13, atol=0)


def test_blowup_truncates(shell5):
    spec, x0, incs = _setup(shell5)
    # enormous forcing drives overflow quickly under explicit Euler
    f = np.full(shell5.n_modes, 1e200)
    states = np.zeros((len(incs) + 1, shell5.n_modes))
    done = kernels.integrate_path(
        x0, shell5.eigenvalues, shell5.nu, f,
        shell5.tensor_l, shell5.tensor_m, shell5.tensor_n, shell5.tensor_v,
        spec.kind_code, spec.base_amplitudes, spec.modulation_amplitude,
        1e-3, kernels.EULER, incs, states)
    assert done < len(incs)
    assert np.all(np.isfinite(states[:done + 1]))


def test_backend_name():
    assert kernels.backend_name() in ("numba", "numpy")
