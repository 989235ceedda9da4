"""Paired-chain coupling: branch construction, meeting, return times.

Macro steps of length T advance a pair of chains by one of three branches
chosen from the current pair of states:

* ``synchronous``  -- states equal: one path drives both, bitwise;
* ``near_maximal`` -- both states in the H2 ball of squared radius delta:
  substeps share increments until the noise-weighted distance between the
  states falls to rho, then the two one-substep Gaussian transition
  kernels are coupled maximally; composition over substeps keeps each
  component's marginal law exact;
* ``independent``  -- otherwise, the two components consume disjoint
  increment blocks.

Meeting (exact equality) persists forever through the synchronous branch.
Return times: tau is the first positive macro time with both states in
the delta-ball; tau_k its successive occurrences; k0 the index of the
first occurrence followed immediately by a meet; tau_l2 caps tau by the
first joint return of the L2 norms under delta3.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InsufficientDataError
from .noise import NoiseSpec, phi_values
from .rng import RngStream
from .spectral import GalerkinModel

SYNCHRONOUS, NEAR_MAXIMAL, INDEPENDENT = "synchronous", "near_maximal", "independent"

_MAX_REJECTS = 1_000_000


@dataclass(frozen=True)
class CouplingParams:
    T: float = 0.3
    delta: float = 0.02
    dt: float = 5e-4
    rho: float = 1.5
    max_macro_steps: int = 200
    delta3: float | None = None     # tau_l2 ball; None = linear pilot proxy

    def __post_init__(self):
        if not 0 < self.dt <= self.T:
            raise ValueError("need 0 < dt <= T")
        if self.delta <= 0 or self.rho <= 0:
            raise ValueError("delta and rho must be positive")
        n_sub = round(self.T / self.dt)
        if abs(n_sub * self.dt - self.T) > 1e-9:
            raise ValueError("T must be an integer multiple of dt")

    @property
    def n_substeps(self) -> int:
        return int(round(self.T / self.dt))


def default_delta3(model: GalerkinModel, spec: NoiseSpec) -> float:
    """Four times the linear-regime stationary L2 energy, a pilot proxy."""
    b = spec.base_amplitudes * (1.0 + spec.modulation_amplitude)
    return 4.0 * float(np.sum(b ** 2 / (2.0 * model.nu * model.eigenvalues)))


def maximal_coupling_gaussian(mean1, cov_diag1, mean2, cov_diag2, stream):
    """Sample (z1, z2) with the prescribed diagonal-Gaussian marginals and
    P(z1 = z2) equal to one minus their total-variation distance.

    Draw z from the first law and accept z for both with probability
    min(1, q(z)/p(z)); on rejection, resample z' from the second law until
    it is accepted with probability max(0, 1 - p(z')/q(z')).
    """
    m1 = np.asarray(mean1, dtype=float)
    m2 = np.asarray(mean2, dtype=float)
    v1 = np.asarray(cov_diag1, dtype=float)
    v2 = np.asarray(cov_diag2, dtype=float)
    if np.any(v1 <= 0) or np.any(v2 <= 0):
        raise ValueError("covariance entries must be strictly positive")
    gen = stream.generator() if isinstance(stream, RngStream) else stream

    def logp(z):
        return -0.5 * float(np.sum((z - m1) ** 2 / v1) + np.sum(np.log(v1)))

    def logq(z):
        return -0.5 * float(np.sum((z - m2) ** 2 / v2) + np.sum(np.log(v2)))

    z = m1 + np.sqrt(v1) * gen.standard_normal(m1.shape)
    if np.log(gen.uniform()) <= logq(z) - logp(z):
        return z, z.copy(), True
    for _ in range(_MAX_REJECTS):
        zp = m2 + np.sqrt(v2) * gen.standard_normal(m2.shape)
        if np.log(gen.uniform()) > logp(zp) - logq(zp):
            return z, zp, False
    raise RuntimeError("maximal coupling residual sampler failed to accept")


def _substep_kernel(model: GalerkinModel, spec: NoiseSpec, scheme_code: int,
                    x: np.ndarray, dt: float, edt: np.ndarray):
    """Mean and diagonal variance of the one-substep Gaussian transition."""
    drift = kernels.bilinear(model.tensor_l, model.tensor_m, model.tensor_n,
                             model.tensor_v, x, x)
    drift = -drift + model.forcing
    phi = phi_values(spec, model, x)
    if scheme_code == kernels.SEMI_IMPLICIT:
        mean = edt * (x + dt * drift)
        std = edt * phi * np.sqrt(dt)
    else:
        mean = x + dt * (-model.nu * model.eigenvalues * x + drift)
        std = phi * np.sqrt(dt)
    return mean, std ** 2


def h2_sq(model: GalerkinModel, x: np.ndarray) -> float:
    return float(np.sum(model.eigenvalues ** 2 * x * x))


@dataclass
class MacroStepResult:
    x1: np.ndarray
    x2: np.ndarray
    branch: str
    met: bool
    censored: bool = False
    attempts: int = 0


def _single_path_update(model, spec, scheme_code, x, dt, increments, start):
    """Advance one state through increments[start:]; None on blow-up."""
    n = increments.shape[0] - start
    if n <= 0:
        return x
    states = np.empty((n + 1, model.n_modes))
    done = kernels.integrate_path(
        x, model.eigenvalues, model.nu, model.forcing,
        model.tensor_l, model.tensor_m, model.tensor_n, model.tensor_v,
        spec.kind_code, spec.base_amplitudes, spec.modulation_amplitude,
        dt, scheme_code, np.ascontiguousarray(increments[start:]), states)
    if done < n:
        return None
    return states[-1]


def coupled_macro_step(model: GalerkinModel, spec: NoiseSpec,
                       params: CouplingParams, x1: np.ndarray, x2: np.ndarray,
                       stream) -> MacroStepResult:
    """One macro step of length T; each component's marginal is exact."""
    x1 = model.check_state(x1).copy()
    x2 = model.check_state(x2).copy()
    gen = stream.generator() if isinstance(stream, RngStream) else stream
    dt, n_sub = params.dt, params.n_substeps
    scheme_code = kernels.SEMI_IMPLICIT
    sqdt = np.sqrt(dt)
    edt = np.exp(-model.nu * model.eigenvalues * dt)

    if np.array_equal(x1, x2):
        incs = gen.standard_normal((n_sub, model.n_modes)) * sqdt
        out = _single_path_update(model, spec, scheme_code, x1, dt, incs, 0)
        if out is None:
            return MacroStepResult(x1, x2, SYNCHRONOUS, met=False, censored=True)
        return MacroStepResult(out, out.copy(), SYNCHRONOUS, met=True)

    in_ball = (h2_sq(model, x1) <= params.delta
               and h2_sq(model, x2) <= params.delta)
    if not in_ball:
        incs1 = gen.standard_normal((n_sub, model.n_modes)) * sqdt
        incs2 = gen.standard_normal((n_sub, model.n_modes)) * sqdt
        o1 = _single_path_update(model, spec, scheme_code, x1, dt, incs1, 0)
        o2 = _single_path_update(model, spec, scheme_code, x2, dt, incs2, 0)
        if o1 is None or o2 is None:
            return MacroStepResult(x1, x2, INDEPENDENT, met=False, censored=True)
        return MacroStepResult(o1, o2, INDEPENDENT, met=False)

    incs = gen.standard_normal((n_sub, model.n_modes)) * sqdt
    i = 0
    attempts = 0
    while i < n_sub:
        i, status = kernels.pair_advance_sync(
            x1, x2, model.eigenvalues, model.nu, model.forcing,
            model.tensor_l, model.tensor_m, model.tensor_n, model.tensor_v,
            spec.kind_code, spec.base_amplitudes, spec.modulation_amplitude,
            dt, scheme_code, incs, i, params.rho)
        if status == -1:
            return MacroStepResult(x1, x2, NEAR_MAXIMAL, met=False,
                                   censored=True, attempts=attempts)
        if status == 0:
            break
        m1, v1 = _substep_kernel(model, spec, scheme_code, x1, dt, edt)
        m2, v2 = _substep_kernel(model, spec, scheme_code, x2, dt, edt)
        z1, z2, met_now = maximal_coupling_gaussian(m1, v1, m2, v2, gen)
        attempts += 1
        x1, x2 = z1, z2
        i += 1
        if met_now:
            out = _single_path_update(model, spec, scheme_code, x1, dt, incs, i)
            if out is None:
                return MacroStepResult(x1, x2, NEAR_MAXIMAL, met=False,
                                       censored=True, attempts=attempts)
            x1, x2 = out, out.copy()
            break
        if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
            return MacroStepResult(x1, x2, NEAR_MAXIMAL, met=False,
                                   censored=True, attempts=attempts)
    return MacroStepResult(x1, x2, NEAR_MAXIMAL,
                           met=bool(np.array_equal(x1, x2)), attempts=attempts)


@dataclass
class CouplingRecord:
    """Macro-grid history of one coupled pair and its return times."""

    times: np.ndarray                 # (n+1,), macro grid including t=0
    states1: np.ndarray               # (n+1, d)
    states2: np.ndarray
    branches: list
    met_flags: np.ndarray             # met (exact equality) after each step
    meet_step: int | None             # first macro index with equality
    tau: float | None                 # first t in T*N\{0} with both in ball
    tau_l2: float | None
    tau_ks: np.ndarray                # successive ball-return times
    k0: int | None                    # 1-based index into tau_ks
    censored: bool
    unmet: bool
    attempts_total: int = 0

    @property
    def met(self) -> bool:
        return self.meet_step is not None


def run_coupled_chain(model: GalerkinModel, spec: NoiseSpec,
                      params: CouplingParams, x0_1: np.ndarray,
                      x0_2: np.ndarray, stream: RngStream,
                      stop_when_complete: bool = True) -> CouplingRecord:
    """Iterate coupled macro steps on the grid T, 2T, ...

    With ``stop_when_complete`` the chain halts once the meeting time and
    every return-time statistic are known; otherwise it runs the full
    ``max_macro_steps`` horizon so marginal states exist at every grid
    time.
    """
    if params.max_macro_steps < 1:
        raise ValueError("max_macro_steps must be >= 1")
    x1 = model.check_state(x0_1).copy()
    x2 = model.check_state(x0_2).copy()
    gen = stream.generator()
    delta3 = params.delta3 if params.delta3 is not None else default_delta3(model, spec)

    n_max = params.max_macro_steps
    d = model.n_modes
    states1 = np.empty((n_max + 1, d))
    states2 = np.empty((n_max + 1, d))
    states1[0], states2[0] = x1, x2
    branches = []
    met_flags = np.zeros(n_max + 1, dtype=bool)
    met_flags[0] = bool(np.array_equal(x1, x2))
    meet_step = 0 if met_flags[0] else None
    tau = tau_l2 = None
    tau_ks: list[float] = []
    k0 = None
    censored = False
    attempts_total = 0
    pending_attempt_k = None          # index of tau_k event at previous time
    n_done = 0

    for step_i in range(1, n_max + 1):
        res = coupled_macro_step(model, spec, params, x1, x2, gen)
        x1, x2 = res.x1, res.x2
        states1[step_i], states2[step_i] = x1, x2
        branches.append(res.branch)
        attempts_total += res.attempts
        n_done = step_i
        if res.censored:
            censored = True
            met_flags[step_i] = met_flags[step_i - 1]
            break
        met_flags[step_i] = res.met
        if res.met and meet_step is None:
            meet_step = step_i
        if pending_attempt_k is not None and k0 is None and res.met:
            k0 = pending_attempt_k
        pending_attempt_k = None

        t = step_i * params.T
        in_ball = (h2_sq(model, x1) <= params.delta
                   and h2_sq(model, x2) <= params.delta)
        if in_ball:
            tau_ks.append(t)
            if tau is None:
                tau = t
            pending_attempt_k = len(tau_ks)
        l2_in = (float(x1 @ x1) <= delta3 and float(x2 @ x2) <= delta3)
        if tau_l2 is None and (l2_in or (tau is not None and tau == t)):
            tau_l2 = t
        if stop_when_complete and (meet_step is not None and tau is not None
                                   and tau_l2 is not None and k0 is not None):
            break

    return CouplingRecord(
        times=params.T * np.arange(n_done + 1),
        states1=states1[:n_done + 1], states2=states2[:n_done + 1],
        branches=branches, met_flags=met_flags[:n_done + 1],
        meet_step=meet_step, tau=tau, tau_l2=tau_l2,
        tau_ks=np.asarray(tau_ks), k0=k0, censored=censored,
        unmet=meet_step is None, attempts_total=attempts_total)


@dataclass
class ReturnTimeStats:
    alphas: np.ndarray
    moments: np.ndarray          # empirical E[exp(alpha tau)]
    diverging: np.ndarray        # stability flags, True = unstable moment
    tail_times: np.ndarray       # t grid for P(tau > t)
    tail_probs: np.ndarray
    tail_rate: float             # fitted exponential tail rate (per time)
    n_used: int
    n_censored: int


def return_time_stats(records, alphas=None) -> ReturnTimeStats:
    """Exponential moments of tau over an alpha grid, with stability flags.

    A moment is flagged as diverging when a single sample dominates the
    empirical sum (max share above 1/4) or the two half-sample means
    disagree by more than a factor 2: both are signatures of an infinite
    moment being approximated by a finite sum.
    """
    taus = np.array([r.tau for r in records
                     if not r.censored and r.tau is not None], dtype=float)
    n_cens = len(records) - len(taus)
    if len(taus) < 30:
        raise InsufficientDataError(
            f"need >= 30 un-censored return times, have {len(taus)}")
    if alphas is None:
        tmax = float(np.max(taus))
        alphas = np.linspace(0.1, 2.0, 8) / max(tmax, 1e-12)
    alphas = np.asarray(alphas, dtype=float)
    moments = np.empty_like(alphas)
    diverging = np.zeros(len(alphas), dtype=bool)
    half = len(taus) // 2
    for j, a in enumerate(alphas):
        contrib = np.exp(a * taus)
        total = float(np.sum(contrib))
        moments[j] = total / len(taus)
        max_share = float(np.max(contrib)) / total
        m1 = float(np.mean(contrib[:half]))
        m2 = float(np.mean(contrib[half:]))
        drift = abs(m2 - m1) / max(min(m1, m2), 1e-300)
        diverging[j] = bool(max_share > 0.25 or drift > 1.0)

    t_grid = np.unique(taus)
    tail = np.array([np.mean(taus > t) for t in t_grid])
    pos = tail > 0
    if np.sum(pos) >= 2:
        slope = np.polyfit(t_grid[pos], np.log(tail[pos]), 1)[0]
    else:
        slope = -np.inf
    return ReturnTimeStats(alphas=alphas, moments=moments, diverging=diverging,
                           tail_times=t_grid, tail_probs=tail,
                           tail_rate=float(-slope), n_used=len(taus),
                           n_censored=n_cens)
