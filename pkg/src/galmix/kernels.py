"""Hot numeric kernels: numba-jitted with a pure-numpy fallback.

The fallback is selected by setting the environment variable
``GALMIX_DISABLE_NUMBA=1`` (or when numba is not importable).  Both paths
perform the same elementwise operations in the same order, so per-path
results agree to the last bit except where reductions reorder sums.

Kernel inventory:

* ``bilinear``            -- sparse triad contraction of the advection tensor
* ``integrate_path``      -- full SDE time-stepping loop for one path
* ``integrate_eta``       -- first-variation flow along a frozen base path
* ``pair_advance_sync``   -- two-component synchronous stepping until the
                             noise-weighted proximity trigger fires

``benchmarks/bench_kernels.py`` times the two paths against each other.

Scheme flags: 0 = euler_maruyama, 1 = semi_implicit.
Noise kinds:  0 = constant diagonal, 1 = modulated diagonal
              (per-mode amplitude * (1 + mod_amp * sin(x[0]))).
"""

from __future__ import annotations

import os

import numpy as np

_DISABLE = os.environ.get("GALMIX_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")

if not _DISABLE:
    try:
        from numba import njit

        HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        HAVE_NUMBA = False
else:
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not _DISABLE

EULER, SEMI_IMPLICIT = 0, 1
NOISE_CONST, NOISE_MODULATED = 0, 1

BLOWUP_LIMIT = 1e12


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------

def bilinear_numpy(tl, tm, tn, tv, u, v):
    out = np.zeros_like(u)
    np.add.at(out, tn, tv * u[tl] * v[tm])
    return out


def _phi_numpy(x, kind, base, mod_amp):
    if kind == NOISE_MODULATED:
        return base * (1.0 + mod_amp * np.sin(x[0]))
    return base.copy()


def _state_ok(x):
    return bool(np.all(np.isfinite(x)) and np.max(np.abs(x)) < BLOWUP_LIMIT)


def integrate_path_numpy(x0, eig, nu, f, tl, tm, tn, tv,
                         noise_kind, noise_base, mod_amp,
                         dt, scheme, increments, states_out):
    n_steps = increments.shape[0]
    edt = np.exp(-nu * eig * dt)
    x = x0.copy()
    states_out[0] = x
    for i in range(n_steps):
        drift = -bilinear_numpy(tl, tm, tn, tv, x, x) + f
        phi = _phi_numpy(x, noise_kind, noise_base, mod_amp)
        if scheme == SEMI_IMPLICIT:
            x = edt * (x + dt * drift + phi * increments[i])
        else:
            x = x + dt * (-nu * eig * x + drift) + phi * increments[i]
        if not _state_ok(x):
            return i
        states_out[i + 1] = x
    return n_steps


def integrate_eta_numpy(base_states, increments, eta0, start, eig, nu,
                        tl, tm, tn, tv, noise_kind, noise_base, mod_amp,
                        dt, scheme, eta_out):
    n_steps = increments.shape[0]
    edt = np.exp(-nu * eig * dt)
    eta = eta0.copy()
    eta_out[start] = eta
    for i in range(start, n_steps):
        x = base_states[i]
        bt = (bilinear_numpy(tl, tm, tn, tv, x, eta)
              + bilinear_numpy(tl, tm, tn, tv, eta, x))
        if noise_kind == NOISE_MODULATED:
            dphi = noise_base * (mod_amp * np.cos(x[0]) * eta[0])
        else:
            dphi = np.zeros_like(eta)
        if scheme == SEMI_IMPLICIT:
            eta = edt * (eta + dt * (-bt) + dphi * increments[i])
        else:
            eta = eta + dt * (-nu * eig * eta - bt) + dphi * increments[i]
        if not _state_ok(eta):
            return i
        eta_out[i + 1] = eta
    return n_steps


def pair_advance_sync_numpy(x1, x2, eig, nu, f, tl, tm, tn, tv,
                            noise_kind, noise_base, mod_amp,
                            dt, scheme, increments, start, rho):
    """Advance both states with common increments from substep ``start``.

    Stops either when the noise-weighted distance between the states drops
    to ``rho`` (returning status 1, before consuming that substep), at the
    end of the increment array (status 0), or on blow-up (status -1).
    Returns (stop_index, status); x1 and x2 are updated in place.
    """
    n_steps = increments.shape[0]
    edt = np.exp(-nu * eig * dt)
    sqdt = np.sqrt(dt)
    for i in range(start, n_steps):
        phi1 = _phi_numpy(x1, noise_kind, noise_base, mod_amp)
        phi2 = _phi_numpy(x2, noise_kind, noise_base, mod_amp)
        scale = sqdt * np.minimum(phi1, phi2)
        if scheme == SEMI_IMPLICIT:
            scale = scale * edt
        r2 = float(np.sum(((x1 - x2) / scale) ** 2))
        if r2 <= rho * rho:
            return i, 1
        drift1 = -bilinear_numpy(tl, tm, tn, tv, x1, x1) + f
        drift2 = -bilinear_numpy(tl, tm, tn, tv, x2, x2) + f
        if scheme == SEMI_IMPLICIT:
            x1_new = edt * (x1 + dt * drift1 + phi1 * increments[i])
            x2_new = edt * (x2 + dt * drift2 + phi2 * increments[i])
        else:
            x1_new = x1 + dt * (-nu * eig * x1 + drift1) + phi1 * increments[i]
            x2_new = x2 + dt * (-nu * eig * x2 + drift2) + phi2 * increments[i]
        x1[:] = x1_new
        x2[:] = x2_new
        if not (_state_ok(x1) and _state_ok(x2)):
            return i, -1
    return n_steps, 0


# ---------------------------------------------------------------------------
# numba twins
# ---------------------------------------------------------------------------

if USE_NUMBA:

    @njit(cache=True)
    def _bilinear_jit(tl, tm, tn, tv, u, v):
        out = np.zeros_like(u)
        for t in range(tl.shape[0]):
            out[tn[t]] += tv[t] * u[tl[t]] * v[tm[t]]
        return out

    @njit(cache=True)
    def _phi_jit(x, kind, base, mod_amp):
        if kind == NOISE_MODULATED:
            return base * (1.0 + mod_amp * np.sin(x[0]))
        return base.copy()

    @njit(cache=True)
    def _state_ok_jit(x):
        for j in range(x.shape[0]):
            if not np.isfinite(x[j]) or np.abs(x[j]) >= BLOWUP_LIMIT:
                return False
        return True

    @njit(cache=True)
    def _integrate_path_jit(x0, eig, nu, f, tl, tm, tn, tv,
                            noise_kind, noise_base, mod_amp,
                            dt, scheme, increments, states_out):
        n_steps = increments.shape[0]
        edt = np.exp(-nu * eig * dt)
        x = x0.copy()
        states_out[0] = x
        for i in range(n_steps):
            drift = -_bilinear_jit(tl, tm, tn, tv, x, x) + f
            phi = _phi_jit(x, noise_kind, noise_base, mod_amp)
            if scheme == SEMI_IMPLICIT:
                x = edt * (x + dt * drift + phi * increments[i])
            else:
                x = x + dt * (-nu * eig * x + drift) + phi * increments[i]
            if not _state_ok_jit(x):
                return i
            states_out[i + 1] = x
        return n_steps

    @njit(cache=True)
    def _integrate_eta_jit(base_states, increments, eta0, start, eig, nu,
                           tl, tm, tn, tv, noise_kind, noise_base, mod_amp,
                           dt, scheme, eta_out):
        n_steps = increments.shape[0]
        edt = np.exp(-nu * eig * dt)
        eta = eta0.copy()
        eta_out[start] = eta
        for i in range(start, n_steps):
            x = base_states[i]
            bt = (_bilinear_jit(tl, tm, tn, tv, x, eta)
                  + _bilinear_jit(tl, tm, tn, tv, eta, x))
            if noise_kind == NOISE_MODULATED:
                dphi = noise_base * (mod_amp * np.cos(x[0]) * eta[0])
            else:
                dphi = np.zeros_like(eta)
            if scheme == SEMI_IMPLICIT:
                eta = edt * (eta + dt * (-bt) + dphi * increments[i])
            else:
                eta = eta + dt * (-nu * eig * eta - bt) + dphi * increments[i]
            if not _state_ok_jit(eta):
                return i
            eta_out[i + 1] = eta
        return n_steps

    @njit(cache=True)
    def _pair_advance_sync_jit(x1, x2, eig, nu, f, tl, tm, tn, tv,
                               noise_kind, noise_base, mod_amp,
                               dt, scheme, increments, start, rho):
        n_steps = increments.shape[0]
        edt = np.exp(-nu * eig * dt)
        sqdt = np.sqrt(dt)
        for i in range(start, n_steps):
            phi1 = _phi_jit(x1, noise_kind, noise_base, mod_amp)
            phi2 = _phi_jit(x2, noise_kind, noise_base, mod_amp)
            r2 = 0.0
            for j in range(x1.shape[0]):
                s = sqdt * min(phi1[j], phi2[j])
                if scheme == SEMI_IMPLICIT:
                    s = s * edt[j]
                d = (x1[j] - x2[j]) / s
                r2 += d * d
            if r2 <= rho * rho:
                return i, 1
            drift1 = -_bilinear_jit(tl, tm, tn, tv, x1, x1) + f
            drift2 = -_bilinear_jit(tl, tm, tn, tv, x2, x2) + f
            if scheme == SEMI_IMPLICIT:
                x1_new = edt * (x1 + dt * drift1 + phi1 * increments[i])
                x2_new = edt * (x2 + dt * drift2 + phi2 * increments[i])
            else:
                x1_new = x1 + dt * (-nu * eig * x1 + drift1) + phi1 * increments[i]
                x2_new = x2 + dt * (-nu * eig * x2 + drift2) + phi2 * increments[i]
            x1[:] = x1_new
            x2[:] = x2_new
            if not (_state_ok_jit(x1) and _state_ok_jit(x2)):
                return i, -1
        return n_steps, 0

    def bilinear_numba(tl, tm, tn, tv, u, v):
        return _bilinear_jit(tl, tm, tn, tv, u, v)

    integrate_path_numba = _integrate_path_jit
    integrate_eta_numba = _integrate_eta_jit

    def pair_advance_sync_numba(x1, x2, eig, nu, f, tl, tm, tn, tv,
                                noise_kind, noise_base, mod_amp,
                                dt, scheme, increments, start, rho):
        return _pair_advance_sync_jit(x1, x2, eig, nu, f, tl, tm, tn, tv,
                                      noise_kind, noise_base, mod_amp,
                                      dt, scheme, increments, start, rho)

    bilinear = bilinear_numba
    integrate_path = integrate_path_numba
    integrate_eta = integrate_eta_numba
    pair_advance_sync = pair_advance_sync_numba
else:
    bilinear = bilinear_numpy
    integrate_path = integrate_path_numpy
    integrate_eta = integrate_eta_numpy
    pair_advance_sync = pair_advance_sync_numpy


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
