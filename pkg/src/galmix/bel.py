"""Monte Carlo semigroup-gradient estimation with a truncated cutoff.

One sample simulates a path X and its first variation eta (same noise)
and evaluates

    g(X(T)) psi * (1/T) int_0^sigma ( phi^-1(X) . eta , dW )
  + 2 g(X(T)) psi' * int_0^sigma (1 - t/T) ( A X , A eta ) dt

where psi is a smooth cutoff of the energy integral int_0^T ||X||_2^2 dt
descending from 1 to 0 on [K0, K0+1], and sigma stops both integrals when
the running energy integral reaches K0 + 1.  Averaged over theta-line
base points, these samples reconstruct differences of cutoff-weighted
expectations between two initial conditions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .integrate import (BatchSimulator, TrajectoryRecord, bilinear_batch,
                        phi_batch, simulate_path)
from .linearized import EtaRecord, evolve_eta
from .noise import NoiseSpec
from .rng import RngStream
from .spectral import GalerkinModel


@dataclass(frozen=True)
class CutoffSpec:
    """Quintic smoothstep cutoff: 1 below K0, 0 above K0 + 1, C^2."""

    K0: float

    def __post_init__(self):
        if not (self.K0 > 0 or np.isinf(self.K0)):
            raise ValueError("K0 must be positive (np.inf disables the cutoff)")


def psi_cutoff(spec: CutoffSpec, r) -> tuple[np.ndarray, np.ndarray]:
    """Value and derivative of the cutoff at energy r (vectorized)."""
    r = np.asarray(r, dtype=float)
    if np.isinf(spec.K0):
        return np.ones_like(r), np.zeros_like(r)
    u = np.clip(r - spec.K0, 0.0, 1.0)
    val = 1.0 - (10.0 * u ** 3 - 15.0 * u ** 4 + 6.0 * u ** 5)
    dval = -(30.0 * u ** 2 - 60.0 * u ** 3 + 30.0 * u ** 4)
    return val, dval


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

class Observable:
    """Named bounded functional, evaluable on a single state or a batch."""

    def __init__(self, name: str, fn, params: dict):
        self.name, self._fn, self.params = name, fn, params

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = self._fn(x, **self.params)
        return out[0] if out.shape == (1,) else out


def make_observable(name: str, **params) -> Observable:
    """Registry: coordinate(index), squared_norm_capped(cap),
    smooth_indicator(radius, width)."""
    if name == "coordinate":
        idx = int(params.get("index", 0))
        return Observable(name, lambda X, index=idx: X[:, index], {"index": idx})
    if name == "squared_norm_capped":
        cap = float(params.get("cap", 1.0))
        return Observable(name,
                          lambda X, cap=cap: np.minimum(np.sum(X * X, axis=1), cap),
                          {"cap": cap})
    if name == "smooth_indicator":
        radius = float(params.get("radius", 1.0))
        width = float(params.get("width", 0.1))
        def fn(X, radius=radius, width=width):
            return 1.0 / (1.0 + np.exp((np.sum(X * X, axis=1) - radius ** 2) / width))
        return Observable(name, fn, {"radius": radius, "width": width})
    raise ValueError(f"unknown observable {name!r}")


# ---------------------------------------------------------------------------
# single-sample estimator
# ---------------------------------------------------------------------------

@dataclass
class BelSample:
    g_value: float
    psi: float
    psi_prime: float
    ito_integral: float      # int_0^sigma (phi^-1(X) eta, dW), left-point sums
    drift_integral: float    # int_0^sigma (1 - t/T)(AX, A eta) dt, trapezoid
    sigma: float
    T: float
    censored: bool = False

    @property
    def value(self) -> float:
        if self.censored:
            return np.nan
        return (self.g_value * self.psi * self.ito_integral / self.T
                + 2.0 * self.g_value * self.psi_prime * self.drift_integral)


def _integrals_from_records(model: GalerkinModel, spec: NoiseSpec,
                            traj: TrajectoryRecord, eta: EtaRecord,
                            cutoff: CutoffSpec, T: float):
    """(energy_T, sigma_idx, ito, drift) from recorded X and eta arrays."""
    mu2 = model.eigenvalues ** 2
    X = traj.states
    E = eta.states
    n = traj.n_steps
    h2sq = np.sum(mu2 * X * X, axis=1)
    cell = traj.dt * 0.5 * (h2sq[1:] + h2sq[:-1])
    running = np.cumsum(cell)
    energy_T = float(running[-1])
    crossed = np.nonzero(running >= cutoff.K0 + 1.0)[0]
    sigma_idx = int(crossed[0] + 1) if len(crossed) else n

    if spec.kind_code == kernels.NOISE_MODULATED:
        phis = spec.base_amplitudes[None, :] * (
            1.0 + spec.modulation_amplitude * np.sin(X[:-1, 0]))[:, None]
    else:
        phis = np.broadcast_to(spec.base_amplitudes, (n, model.n_modes))
    w = E[:-1] / phis
    ito = float(np.sum(w[:sigma_idx] * traj.increments[:sigma_idx]))

    q = np.sum(mu2 * X * E, axis=1)
    wgt = 1.0 - traj.times / T
    cells = traj.dt * 0.5 * (wgt[:-1] * q[:-1] + wgt[1:] * q[1:])
    drift = float(np.sum(cells[:sigma_idx]))
    return energy_T, sigma_idx, ito, drift


def bel_gradient_sample(model: GalerkinModel, spec: NoiseSpec,
                        cutoff: CutoffSpec, g: Observable, x0: np.ndarray,
                        h: np.ndarray, T: float, dt: float,
                        stream: RngStream) -> BelSample:
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T) or n_steps < 1:
        raise ValueError("T must be a positive multiple of dt")
    traj = simulate_path(model, spec, x0, T, dt, stream)
    if traj.blown_up:
        return BelSample(np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, T,
                         censored=True)
    eta = evolve_eta(model, spec, traj, 0.0, h)
    if eta.blown_up:
        return BelSample(np.nan, np.nan, np.nan, np.nan, np.nan, np.nan, T,
                         censored=True)
    energy_T, sigma_idx, ito, drift = _integrals_from_records(
        model, spec, traj, eta, cutoff, T)
    psi, dpsi = psi_cutoff(cutoff, energy_T)
    return BelSample(g_value=float(g(traj.states[-1])), psi=float(psi),
                     psi_prime=float(dpsi), ito_integral=ito,
                     drift_integral=drift, sigma=sigma_idx * dt, T=T)


# ---------------------------------------------------------------------------
# batched estimator (vectorized over samples)
# ---------------------------------------------------------------------------

def bel_samples_batch(model: GalerkinModel, spec: NoiseSpec,
                      cutoff: CutoffSpec, g: Observable, x0: np.ndarray,
                      h: np.ndarray, T: float, dt: float, n_samples: int,
                      stream: RngStream):
    """Vector of estimator samples; nan entries mark censored paths.

    Also returns the vector of psi' values so that cutoff-inactivity can
    be asserted directly.
    """
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T) or n_steps < 1:
        raise ValueError("T must be a positive multiple of dt")
    x0 = model.check_state(x0)
    h = model.check_state(h)
    P, d = int(n_samples), model.n_modes
    mu2 = model.eigenvalues ** 2

    sim = BatchSimulator(model, spec, np.tile(x0, (P, 1)), dt, stream)
    E = np.tile(h, (P, 1))
    edt = sim.edt
    running = np.zeros(P)
    energy_T = np.zeros(P)
    stopped = np.zeros(P, dtype=bool)
    sigma_idx = np.full(P, n_steps, dtype=np.int64)
    ito = np.zeros(P)
    drift = np.zeros(P)

    h2sq_prev = np.sum(mu2 * sim.X ** 2, axis=1)
    q_prev = np.sum(mu2 * sim.X * E, axis=1)
    for i in range(n_steps):
        Xi = sim.X.copy()
        phi = phi_batch(spec, Xi)
        dW = sim.step()
        active = ~stopped & sim.alive
        ito[active] += np.sum((E[active] / phi[active]) * dW[active], axis=1)

        bt = bilinear_batch(model, Xi, E) + bilinear_batch(model, E, Xi)
        if spec.kind_code == kernels.NOISE_MODULATED:
            dphi = spec.base_amplitudes[None, :] * (
                spec.modulation_amplitude * np.cos(Xi[:, 0]) * E[:, 0])[:, None]
            noise_term = dphi * dW
        else:
            noise_term = 0.0
        if sim.scheme_code == kernels.SEMI_IMPLICIT:
            E = edt * (E + dt * (-bt) + noise_term)
        else:
            E = E + dt * (-model.nu * model.eigenvalues * E - bt) + noise_term

        h2sq = np.sum(mu2 * sim.X ** 2, axis=1)
        q = np.sum(mu2 * sim.X * E, axis=1)
        cell = dt * 0.5 * (h2sq_prev + h2sq)
        t_i, t_ip = i * dt, (i + 1) * dt
        wcell = dt * 0.5 * ((1.0 - t_i / T) * q_prev + (1.0 - t_ip / T) * q)
        running[active] += cell[active]
        drift[active] += wcell[active]
        energy_T[sim.alive] += cell[sim.alive]
        newly = active & (running >= cutoff.K0 + 1.0)
        sigma_idx[newly] = i + 1
        stopped |= newly
        h2sq_prev, q_prev = h2sq, q

        eta_ok = np.all(np.isfinite(E), axis=1) & (
            np.max(np.abs(E), axis=1) < kernels.BLOWUP_LIMIT)
        sim.alive &= eta_ok

    psi, dpsi = psi_cutoff(cutoff, energy_T)
    gv = np.asarray(g(sim.X), dtype=float)
    values = gv * psi * ito / T + 2.0 * gv * dpsi * drift
    values[~sim.alive] = np.nan
    return values, dpsi, sim.n_censored


@dataclass
class GradientEstimate:
    estimate: float
    se: float
    n_samples: int
    n_censored: int


def bel_gradient_mean(model, spec, cutoff, g, x0, h, T, dt, n_samples,
                      stream) -> GradientEstimate:
    values, _, n_cens = bel_samples_batch(model, spec, cutoff, g, x0, h, T, dt,
                                          n_samples, stream)
    good = values[np.isfinite(values)]
    mean = float(np.mean(good))
    se = float(np.std(good, ddof=1) / np.sqrt(len(good)))
    return GradientEstimate(mean, se, len(good), n_cens)


def gradient_difference(model: GalerkinModel, spec: NoiseSpec,
                        cutoff: CutoffSpec, g: Observable,
                        x0_1: np.ndarray, x0_2: np.ndarray, T: float,
                        dt: float, n_samples: int, theta_nodes: int,
                        stream: RngStream) -> GradientEstimate:
    """Gauss-Legendre line integral over base points between x0_1 and x0_2.

    Reconstructs E[g psi](x0_2) - E[g psi](x0_1) with a standard error
    propagated across the quadrature nodes.
    """
    if n_samples < 1 or theta_nodes < 1:
        raise ValueError("need n_samples >= 1 and theta_nodes >= 1")
    x0_1 = model.check_state(x0_1)
    x0_2 = model.check_state(x0_2)
    h = x0_2 - x0_1
    if not np.any(h):
        return GradientEstimate(0.0, 0.0, 0, 0)
    xi, wi = np.polynomial.legendre.leggauss(theta_nodes)
    thetas = 1.5 + 0.5 * xi
    weights = 0.5 * wi
    total, var, censored = 0.0, 0.0, 0
    for j, (theta, w) in enumerate(zip(thetas, weights)):
        x0_theta = (2.0 - theta) * x0_1 + (theta - 1.0) * x0_2
        est = bel_gradient_mean(model, spec, cutoff, g, x0_theta, h, T, dt,
                                n_samples, stream.child(j))
        total += w * est.estimate
        var += (w * est.se) ** 2
        censored += est.n_censored
    return GradientEstimate(total, float(np.sqrt(var)),
                            theta_nodes * n_samples, censored)


def _batch_g_psi(model: GalerkinModel, spec: NoiseSpec, cutoff: CutoffSpec,
                 g: Observable, x0: np.ndarray, T: float, dt: float,
                 n_samples: int, stream: RngStream) -> np.ndarray:
    """Per-sample g(X(T)) psi_X values; nan marks censored paths."""
    n_steps = int(round(T / dt))
    mu2 = model.eigenvalues ** 2
    sim = BatchSimulator(model, spec, np.tile(model.check_state(x0),
                                              (n_samples, 1)), dt, stream)
    energy = np.zeros(n_samples)
    prev = np.sum(mu2 * sim.X ** 2, axis=1)
    for _ in range(n_steps):
        sim.step()
        cur = np.sum(mu2 * sim.X ** 2, axis=1)
        energy[sim.alive] += (dt * 0.5 * (prev + cur))[sim.alive]
        prev = cur
    psi, _ = psi_cutoff(cutoff, energy)
    vals = np.asarray(g(sim.X), dtype=float) * psi
    vals[~sim.alive] = np.nan
    return vals


def direct_difference(model: GalerkinModel, spec: NoiseSpec,
                      cutoff: CutoffSpec, g: Observable, x0_1: np.ndarray,
                      x0_2: np.ndarray, T: float, dt: float, n_samples: int,
                      stream: RngStream) -> GradientEstimate:
    """Two-point Monte Carlo oracle with common random numbers:
    E[g psi](x0_2) - E[g psi](x0_1) from paired samples."""
    v1 = _batch_g_psi(model, spec, cutoff, g, x0_1, T, dt, n_samples, stream)
    v2 = _batch_g_psi(model, spec, cutoff, g, x0_2, T, dt, n_samples, stream)
    diff = v2 - v1
    good = diff[np.isfinite(diff)]
    return GradientEstimate(float(np.mean(good)),
                            float(np.std(good, ddof=1) / np.sqrt(len(good))),
                            len(good), int(n_samples - len(good)))


def calibrate_K0(model: GalerkinModel, spec: NoiseSpec, x0: np.ndarray,
                 T: float, dt: float, n_pilot: int, stream: RngStream,
                 quantile: float = 0.9) -> float:
    """Default cutoff level: a quantile of the observed energy integral."""
    mu2 = model.eigenvalues ** 2
    n_steps = int(round(T / dt))
    sim = BatchSimulator(model, spec, np.tile(model.check_state(x0), (n_pilot, 1)),
                         dt, stream)
    energy = np.zeros(n_pilot)
    prev = np.sum(mu2 * sim.X ** 2, axis=1)
    for _ in range(n_steps):
        sim.step()
        cur = np.sum(mu2 * sim.X ** 2, axis=1)
        energy[sim.alive] += (dt * 0.5 * (prev + cur))[sim.alive]
        prev = cur
    return float(np.quantile(energy[sim.alive], quantile))
