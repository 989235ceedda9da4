"""First-variation flow along a recorded trajectory.

eta solves the linearization of the path equation around a frozen base
path, driven by the SAME increments:

    d eta + nu A eta dt + Bt(X, eta) dt = (phi'(X) . eta) dW,
    eta(s) = h,        Bt(X, eta) = B(X, eta) + B(eta, X).

Discretely, eta is the exact Jacobian action of the base scheme's step
map (base states frozen at the left endpoint of each step), so the
common-random-number finite difference of the path map reproduces it to
O(eps) and the cocycle identity holds to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import MissingIncrementsError
from .integrate import TrajectoryRecord, simulate_path, integrate_increments
from .noise import NoiseSpec
from .rng import RngStream
from .spectral import GalerkinModel


@dataclass
class EtaRecord:
    base: TrajectoryRecord
    start_time: float
    direction: np.ndarray
    states: np.ndarray       # (n_steps + 1, n_modes); zeros before start
    blown_up: bool = False

    def at(self, t: float) -> np.ndarray:
        return self.states[self.base.index_of(t)]


def evolve_eta(model: GalerkinModel, spec: NoiseSpec,
               trajectory: TrajectoryRecord, s: float,
               h: np.ndarray) -> EtaRecord:
    if trajectory.increments is None or len(trajectory.increments) == 0:
        raise MissingIncrementsError("base trajectory carries no increments")
    h = model.check_state(h)
    start = trajectory.index_of(s)
    code = (kernels.SEMI_IMPLICIT if trajectory.scheme == "semi_implicit"
            else kernels.EULER)
    out = np.zeros_like(trajectory.states)
    done = kernels.integrate_eta(
        trajectory.states, trajectory.increments, h, start,
        model.eigenvalues, model.nu,
        model.tensor_l, model.tensor_m, model.tensor_n, model.tensor_v,
        spec.kind_code, spec.base_amplitudes, spec.modulation_amplitude,
        trajectory.dt, code, out)
    blown = done < trajectory.n_steps
    if blown:
        out[done + 1:] = np.nan
    return EtaRecord(base=trajectory, start_time=s, direction=h,
                     states=out, blown_up=blown)


def fd_directional_derivative(model: GalerkinModel, spec: NoiseSpec,
                              x0: np.ndarray, h: np.ndarray, eps: float,
                              T: float, dt: float, stream: RngStream,
                              scheme: str = "semi_implicit") -> np.ndarray:
    """(X(T, x0 + eps h) - X(T, x0 - eps h)) / (2 eps), common increments."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x0 = model.check_state(x0)
    h = model.check_state(h)
    base = simulate_path(model, spec, x0 + eps * h, T, dt, stream, scheme)
    if base.blown_up:
        raise RuntimeError("forward branch blew up in finite difference")
    minus = integrate_increments(model, spec, x0 - eps * h, dt,
                                 base.increments, scheme=scheme)
    if minus.blown_up:
        raise RuntimeError("backward branch blew up in finite difference")
    return (base.states[-1] - minus.states[-1]) / (2.0 * eps)


def eta_h3_budget(model: GalerkinModel, eta: EtaRecord, sigma: float) -> float:
    """Pathwise trapezoidal integral of ||eta(t)||_3^2 from start to sigma."""
    i_s = eta.base.index_of(eta.start_time)
    i_e = eta.base.index_of(sigma)
    if i_e < i_s:
        raise ValueError("sigma precedes the start of the eta record")
    h3sq = np.sum(model.eigenvalues ** 3 * eta.states[i_s:i_e + 1] ** 2, axis=1)
    if len(h3sq) < 2:
        return 0.0
    return float(np.trapezoid(h3sq, dx=eta.base.dt))
