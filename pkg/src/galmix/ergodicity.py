"""Experiment drivers and statistics for mixing, invariant measures and
small-noise probabilities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coupling import (CouplingParams, CouplingRecord, coupled_macro_step,
                       return_time_stats, run_coupled_chain)
from .errors import InsufficientDataError
from .integrate import BatchSimulator, phi_batch
from .noise import NoiseSpec
from .rng import RngStream
from .spectral import GalerkinModel


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


@dataclass
class MeetEstimate:
    p_hat: float
    ci_low: float
    ci_high: float
    n_chains: int
    n_censored: int


def sample_h2_ball(model: GalerkinModel, radius: float,
                   gen: np.random.Generator) -> np.ndarray:
    """Uniform draw from the H2 ball of the given radius."""
    g = gen.standard_normal(model.n_modes)
    h2 = np.sqrt(np.sum(model.eigenvalues ** 2 * g * g))
    r = radius * gen.uniform() ** (1.0 / model.n_modes)
    return g * (r / h2)


def estimate_meet_probability(model: GalerkinModel, spec: NoiseSpec,
                              params: CouplingParams, ball_radius: float,
                              n_chains: int, stream: RngStream) -> MeetEstimate:
    """Fraction of pairs, started i.i.d. in the H2 ball, meeting in one
    macro step."""
    if n_chains < 100:
        raise ValueError("need n_chains >= 100 for a usable interval")
    met = 0
    censored = 0
    used = 0
    for i in range(n_chains):
        gen = stream.child(i).generator()
        x1 = sample_h2_ball(model, ball_radius, gen)
        x2 = sample_h2_ball(model, ball_radius, gen)
        res = coupled_macro_step(model, spec, params, x1, x2, gen)
        if res.censored:
            censored += 1
            continue
        used += 1
        met += int(res.met)
    if used < max(30, n_chains // 2):
        raise InsufficientDataError(
            f"only {used} un-censored chains out of {n_chains}")
    lo, hi = wilson_interval(met, used)
    return MeetEstimate(met / used, lo, hi, used, censored)


@dataclass
class DecayFit:
    series_n: np.ndarray
    series_p: np.ndarray
    C: float
    gamma: float
    r_squared: float
    censored_count: int = 0


def fit_exponential_decay(series, censored_count: int = 0) -> DecayFit:
    """Least squares of log p against the index for p = C exp(-gamma n)."""
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("series must be an iterable of (n, p) pairs")
    ns, ps = arr[:, 0], arr[:, 1]
    mask = ps > 0
    if np.sum(mask) < 4:
        raise InsufficientDataError("need at least 4 positive points to fit")
    x, y = ns[mask], np.log(ps[mask])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(series_n=ns, series_p=ps, C=float(np.exp(intercept)),
                    gamma=float(-slope), r_squared=r2,
                    censored_count=censored_count)


@dataclass
class EmpiricalMeasure:
    samples: np.ndarray          # occupation samples on the macro grid
    mean_l2sq: float
    se_l2sq: float
    mean_h1sq: float
    se_h1sq: float
    n_censored: int
    burn_in: float
    sample_dt: float


def _batch_means_se(x: np.ndarray, n_batches: int = 20) -> float:
    """Autocorrelation-robust standard error via batch means."""
    n = len(x)
    if n < 2 * n_batches:
        return float(np.std(x, ddof=1) / np.sqrt(n))
    m = n // n_batches
    means = x[:m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(n_batches))


def estimate_invariant_measure(model: GalerkinModel, spec: NoiseSpec,
                               burn_in: float, n_samples: int,
                               stream: RngStream, dt: float = 1e-3,
                               sample_dt: float = 0.1,
                               x0: np.ndarray | None = None) -> EmpiricalMeasure:
    """Time-averaged occupation samples of one long path after burn-in."""
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    if n_samples < 2:
        raise ValueError("need at least 2 samples")
    stride = max(1, int(round(sample_dt / dt)))
    sample_dt = stride * dt
    n_burn = int(round(burn_in / dt))
    x0 = model.zero_state() if x0 is None else model.check_state(x0)
    sim = BatchSimulator(model, spec, x0[None, :], dt, stream)
    for _ in range(n_burn):
        sim.step()
    samples = np.empty((n_samples, model.n_modes))
    censored = 0
    for j in range(n_samples):
        for _ in range(stride):
            sim.step()
        if not sim.alive[0]:
            censored += 1
        samples[j] = sim.X[0]
    l2sq = np.sum(samples ** 2, axis=1)
    h1sq = np.sum(model.eigenvalues * samples ** 2, axis=1)
    return EmpiricalMeasure(
        samples=samples,
        mean_l2sq=float(np.mean(l2sq)), se_l2sq=_batch_means_se(l2sq),
        mean_h1sq=float(np.mean(h1sq)), se_h1sq=_batch_means_se(h1sq),
        n_censored=censored, burn_in=burn_in, sample_dt=sample_dt)


@dataclass
class SmallNoiseEstimate:
    M: float
    p_hat: float
    ci_low: float
    ci_high: float
    n_samples: int


def small_noise_probability(model: GalerkinModel, spec: NoiseSpec, t: float,
                            M: float, n_samples: int, stream: RngStream,
                            dt: float = 1e-3,
                            x0: np.ndarray | None = None) -> SmallNoiseEstimate:
    """Monte Carlo estimate of P(sup_(0,t) ||Z||_2^2 <= M) along paths.

    Z is the stochastic convolution driven by the same increments as the
    simulated paths, advanced by the same exponential recursion.
    """
    if M <= 0:
        raise ValueError("M must be positive")
    n_steps = int(round(t / dt))
    x0 = model.zero_state() if x0 is None else model.check_state(x0)
    sim = BatchSimulator(model, spec, np.tile(x0, (n_samples, 1)), dt, stream)
    Z = np.zeros_like(sim.X)
    edt = sim.edt
    mu2 = model.eigenvalues ** 2
    sup_z = np.zeros(n_samples)
    for _ in range(n_steps):
        Xi = sim.X.copy()
        dW = sim.step()
        Z = edt * (Z + phi_batch(spec, Xi) * dW)
        sup_z = np.maximum(sup_z, np.sum(mu2 * Z * Z, axis=1))
    ok = sup_z[sim.alive] <= M
    k, n = int(np.sum(ok)), int(np.sum(sim.alive))
    lo, hi = wilson_interval(k, n)
    return SmallNoiseEstimate(M=M, p_hat=k / n, ci_low=lo, ci_high=hi,
                              n_samples=n)


# ---------------------------------------------------------------------------
# the assembled mixing experiment
# ---------------------------------------------------------------------------

@dataclass
class MixingResult:
    decay_fit: DecayFit | None       # None when < 4 positive decay points
    p_series: np.ndarray             # columns: n, t, p_unmet, se
    k0_tail: np.ndarray              # columns: n, p(k0 > n)
    per_attempt_rate: float          # fraction of ball visits followed by a meet
    return_stats: object
    invariant: EmpiricalMeasure
    records: list = field(repr=False, default_factory=list)
    tv_series: np.ndarray | None = None   # n, tv_hat, bound
    n_censored: int = 0
    n_chains: int = 0


def _binned_tv(obs1: np.ndarray, obs2: np.ndarray, edges: np.ndarray):
    """Histogram TV lower bound and its null mean + 3 sd allowance."""
    n = len(obs1)
    c1, _ = np.histogram(obs1, bins=edges)
    c2, _ = np.histogram(obs2, bins=edges)
    p1, p2 = c1 / n, c2 / n
    tv = 0.5 * float(np.sum(np.abs(p1 - p2)))
    pbar = 0.5 * (p1 + p2)
    var_diff = 2.0 * pbar * (1 - pbar) / n
    null_mean = 0.5 * float(np.sum(np.sqrt(2.0 * var_diff / np.pi)))
    null_sd = 0.5 * float(np.sqrt(np.sum(var_diff)))
    return tv, null_mean + 3.0 * null_sd


def run_mixing_chains(model: GalerkinModel, spec: NoiseSpec,
                      params: CouplingParams, x0_pairs, n_steps: int,
                      stream: RngStream, workers: int = 1):
    """Run one coupled chain per initial pair over the full horizon."""
    chain_params = CouplingParams(T=params.T, delta=params.delta, dt=params.dt,
                                  rho=params.rho, max_macro_steps=n_steps,
                                  delta3=params.delta3)
    args = [(model, spec, chain_params, x1, x2, stream.child(i))
            for i, (x1, x2) in enumerate(x0_pairs)]
    if workers > 1:
        from multiprocessing import get_context
        with get_context("fork").Pool(workers) as pool:
            return pool.starmap(_run_chain_full, args)
    return [_run_chain_full(*a) for a in args]


def _run_chain_full(model, spec, params, x1, x2, stream) -> CouplingRecord:
    return run_coupled_chain(model, spec, params, x1, x2, stream,
                             stop_when_complete=False)


def mixing_experiment(model: GalerkinModel, spec: NoiseSpec,
                      params: CouplingParams, x0_pairs, n_steps: int,
                      stream: RngStream, alphas=None, workers: int = 1,
                      invariant_kwargs: dict | None = None,
                      max_censored_fraction: float = 0.1) -> MixingResult:
    """Coupled-chain decay series, return times, and solo-chain moments."""
    records = run_mixing_chains(model, spec, params, x0_pairs, n_steps,
                                stream.child(0), workers=workers)
    n_chains = len(records)
    censored = sum(r.censored for r in records)
    if censored > max_censored_fraction * n_chains:
        raise InsufficientDataError(
            f"{censored}/{n_chains} chains censored, above the "
            f"{max_censored_fraction:.0%} threshold")
    good = [r for r in records if not r.censored]

    rows = []
    for n in range(1, n_steps + 1):
        unmet = np.array([not bool(r.met_flags[n]) for r in good])
        p = float(np.mean(unmet))
        se = float(np.sqrt(max(p * (1 - p), 1e-12) / len(good)))
        rows.append((n, n * params.T, p, se))
    p_series = np.asarray(rows)
    try:
        fit = fit_exponential_decay(p_series[:, [1, 2]], censored_count=censored)
    except InsufficientDataError:
        # meeting resolved faster than the fit needs points; report the
        # series without a rate estimate rather than failing the run
        fit = None

    k0s = np.array([r.k0 for r in good if r.k0 is not None], dtype=float)
    n_attempting = len(k0s)
    k0_rows = []
    if n_attempting:
        for n in range(0, int(np.max(k0s)) + 1):
            k0_rows.append((n, float(np.mean(k0s > n))))
    k0_tail = np.asarray(k0_rows) if k0_rows else np.empty((0, 2))
    # geometric rate: attempts counted only until the first success
    attempts = sum(r.k0 if r.k0 is not None else len(r.tau_ks) for r in good)
    meets_after_attempt = sum(1 for r in good if r.k0 is not None)
    per_attempt = meets_after_attempt / attempts if attempts else 0.0

    try:
        stats = return_time_stats(good, alphas=alphas)
    except InsufficientDataError:
        stats = None

    inv_kwargs = dict(burn_in=5.0, n_samples=500, dt=params.dt,
                      sample_dt=params.T)
    inv_kwargs.update(invariant_kwargs or {})
    invariant = estimate_invariant_measure(model, spec, stream=stream.child(1),
                                           **inv_kwargs)

    tv_rows = []
    if len(good) >= 100:
        obs_all = np.array([[r.states1[n][0], r.states2[n][0]]
                            for r in good for n in (n_steps,)])
        edges = np.histogram_bin_edges(obs_all.ravel(), bins=8)
        for n in range(1, n_steps + 1):
            o1 = np.array([r.states1[n][0] for r in good])
            o2 = np.array([r.states2[n][0] for r in good])
            tv, allowance = _binned_tv(o1, o2, edges)
            p_n = p_series[n - 1, 2]
            se_n = p_series[n - 1, 3]
            tv_rows.append((n, tv, p_n + 3 * se_n + allowance))
    tv_series = np.asarray(tv_rows) if tv_rows else None

    return MixingResult(decay_fit=fit, p_series=p_series, k0_tail=k0_tail,
                        per_attempt_rate=per_attempt, return_stats=stats,
                        invariant=invariant, records=records,
                        tv_series=tv_series, n_censored=censored,
                        n_chains=n_chains)
