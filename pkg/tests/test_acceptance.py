"""Acceptance suite: one test per criterion, each printing PASS/FAIL.

The calibrated configuration (shell ladder, constant diagonal noise with
decay exponent 2.75, small forcing) is the one documented in the README;
its parameters are pinned here.
"""

import itertools

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import ks_2samp, norm

from galmix.bel import (CutoffSpec, bel_gradient_mean, bel_samples_batch,
                        calibrate_K0, direct_difference, gradient_difference,
                        make_observable)
from galmix.coupling import (CouplingParams, maximal_coupling_gaussian,
                             return_time_stats, run_coupled_chain)
from galmix.ergodicity import (estimate_meet_probability, fit_exponential_decay,
                               mixing_experiment, sample_h2_ball,
                               small_noise_probability)
from galmix.integrate import BatchSimulator, decompose_YZ, simulate_path
from galmix.linearized import evolve_eta, fd_directional_derivative
from galmix.noise import make_noise_spec
from galmix.rng import RngStream
from galmix.spectral import (bilinear_B, build_shell_model, build_torus_model,
                             sobolev_norm)

from quadrature_oracle import tensor_quadrature

# ---------------------------------------------------------------------------
# the documented calibration configuration
# ---------------------------------------------------------------------------

CAL = dict(n_shells=5, coupling=0.05, mu1=16.0, f_amplitude=0.01,
           s=2.75, T=0.3, delta=0.006, dt=5e-4, rho=1.5)


def test_shipped_config_matches_pinned_constants():
    import os

    from galmix.config import load_config
    cfg = load_config(os.path.join(os.path.dirname(__file__), "..",
                                   "configs", "calibrated.yaml"))
    assert cfg.model["n_shells"] == CAL["n_shells"]
    assert cfg.model["coupling"] == CAL["coupling"]
    assert cfg.model["mu1"] == CAL["mu1"]
    assert cfg.model["f_amplitude"] == CAL["f_amplitude"]
    assert cfg.noise["s"] == CAL["s"]
    assert cfg.coupling["T"] == CAL["T"]
    assert cfg.coupling["delta"] == CAL["delta"]
    assert cfg.coupling["dt"] == CAL["dt"]
    assert cfg.coupling["rho"] == CAL["rho"]


@pytest.fixture(scope="module")
def cal_model():
    return build_shell_model(CAL["n_shells"], CAL["coupling"], mu1=CAL["mu1"],
                             f={"amplitude": CAL["f_amplitude"], "modes": [0]})


@pytest.fixture(scope="module")
def cal_noise(cal_model):
    return make_noise_spec(cal_model, "constant_diagonal", s=CAL["s"])


@pytest.fixture(scope="module")
def cal_params():
    return CouplingParams(T=CAL["T"], delta=CAL["delta"], dt=CAL["dt"],
                          rho=CAL["rho"], max_macro_steps=60)


@pytest.fixture(scope="module")
def mixing_result(cal_model, cal_noise, cal_params):
    """10^3 coupled chains over 20 macro steps, shared by A9/A11/A12."""
    pairs = []
    for i in range(1000):
        gen = RngStream(7001).child(i).generator()
        pairs.append(
            (sample_h2_ball(cal_model, 3 * np.sqrt(CAL["delta"]), gen),
             sample_h2_ball(cal_model, 3 * np.sqrt(CAL["delta"]), gen)))
    return mixing_experiment(cal_model, cal_noise, cal_params, pairs,
                             n_steps=20, stream=RngStream(7002),
                             invariant_kwargs={"burn_in": 3.0,
                                               "n_samples": 500})


def report(name: str, ok: bool, detail: str) -> None:
    print(f"{name} {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------------------


def test_A1_bilinear_algebra():
    models = [build_torus_model(2), build_shell_model(5, 0.3)]
    worst1 = worst2 = 0.0
    for model in models:
        gen = RngStream(8101).generator()
        for _ in range(1000):
            u, v, w = (gen.standard_normal(model.n_modes) for _ in range(3))
            Buv = bilinear_B(model, u, v)
            s1 = (np.linalg.norm(u) * np.linalg.norm(v)
                  * sobolev_norm(model, 1.0, v)) + 1e-300
            worst1 = max(worst1, abs(Buv @ v) / s1)
            Buw = bilinear_B(model, u, w)
            s2 = np.linalg.norm(u) * (
                np.linalg.norm(v) * sobolev_norm(model, 1.0, w)
                + np.linalg.norm(w) * sobolev_norm(model, 1.0, v)) + 1e-300
            worst2 = max(worst2, abs(Buv @ w + Buw @ v) / s2)
        entries = {(l, m, n): val for l, m, n, val in
                   zip(model.tensor_l, model.tensor_m, model.tensor_n,
                       model.tensor_v)}
        antisym = all(entries[(l, n, m)] == -val
                      for (l, m, n), val in entries.items())
        assert antisym
    ok = worst1 <= 1e-10 and worst2 <= 1e-10
    report("A1", ok, f"energy-identity residual {worst1:.2e}, "
                     f"antisymmetry-identity residual {worst2:.2e} "
                     f"(both <= 1e-10; tensor antisymmetry exact)")


def test_A2_torus_tensor_oracle():
    model = build_torus_model(2)
    oracle = tensor_quadrature(model, grid=16)
    dense = np.zeros_like(oracle)
    dense[model.tensor_l, model.tensor_m, model.tensor_n] = model.tensor_v
    gap = float(np.max(np.abs(dense - oracle)))
    report("A2", gap <= 1e-8,
           f"max |tensor - quadrature| = {gap:.2e} over all "
           f"{model.n_modes}^3 triads (<= 1e-8)")


def test_A3_ou_gate():
    model = build_shell_model(3, 0.0, mu1=1.0)
    spec = make_noise_spec(model, "constant_diagonal", s=2.75)
    mu, b = model.eigenvalues, spec.base_amplitudes
    dt, P = 2.5e-4, 10000
    x0 = np.array([1.0, 0.4, 0.1])
    sim = BatchSimulator(model, spec, np.tile(x0, (P, 1)), dt, RngStream(8103))
    checks = {int(round(t / dt)): t for t in (0.25, 1.0, 3.0)}
    worst_z = 0.0
    for i in range(1, max(checks) + 1):
        sim.step()
        if i in checks:
            t = checks[i]
            target = (np.exp(-2 * mu * t) * x0 ** 2
                      + b ** 2 * (1 - np.exp(-2 * mu * t)) / (2 * mu))
            m2 = np.mean(sim.X ** 2, axis=0)
            se = np.std(sim.X ** 2, axis=0, ddof=1) / np.sqrt(P)
            worst_z = max(worst_z, float(np.max(np.abs(m2 - target) / se)))
    report("A3", worst_z <= 3.0,
           f"per-mode second moments within {worst_z:.2f} SE of the exact "
           f"transient/stationary values (<= 3 SE, {P} paths)")


def test_A4_yz_decomposition():
    model = build_shell_model(5, 0.8, mu1=1.0)
    spec = make_noise_spec(model, "constant_diagonal", s=2.75, scale=0.5)
    ratios, defects = [], []
    for i in range(10):
        d = {}
        for dt in (1e-3, 5e-4):
            rec = simulate_path(model, spec, 0.5 * np.ones(5), 0.5, dt,
                                RngStream(8104, i))
            d[dt] = decompose_YZ(model, spec, rec).defect
        defects.append(d[1e-3])
        ratios.append(d[1e-3] / d[5e-4])
    ratios = np.array(ratios)
    bound_ok = max(defects) <= 1.0 * 1e-3          # defect <= C dt, C = 1
    halving_ok = np.all((ratios > 1.4) & (ratios < 3.0))
    report("A4", bound_ok and halving_ok,
           f"max defect {max(defects):.2e} <= C*dt, dt/2 ratios in "
           f"[{ratios.min():.2f}, {ratios.max():.2f}] (expect ~2), 10 paths")


def test_A5_linearized_flow():
    model = build_shell_model(5, 0.3, mu1=1.0)
    spec = make_noise_spec(model, "modulated_diagonal", s=2.75,
                           modulation_amplitude=0.5, scale=0.5)
    x0, T, dt, eps = 0.2 * np.ones(5), 0.3, 1e-3, 1e-5
    gen = RngStream(8105).generator()
    worst = 0.0
    for k in range(20):
        h = gen.standard_normal(5)
        stream = RngStream(8106, k)
        traj = simulate_path(model, spec, x0, T, dt, stream)
        eta = evolve_eta(model, spec, traj, 0.0, h)
        fd = fd_directional_derivative(model, spec, x0, h, eps, T, dt, stream)
        worst = max(worst, float(np.linalg.norm(eta.states[-1] - fd)
                                 / np.linalg.norm(fd)))
    # cocycle identity along one path
    traj = simulate_path(model, spec, x0, T, dt, RngStream(8107))
    h = np.array([1.0, -0.5, 0.2, 0.0, 0.0])
    full = evolve_eta(model, spec, traj, 0.0, h)
    two_leg = evolve_eta(model, spec, traj, 0.15, full.at(0.15))
    cocycle = float(np.linalg.norm(two_leg.states[-1] - full.states[-1])
                    / np.linalg.norm(full.states[-1]))
    ok = worst <= 1e-3 and cocycle <= 1e-8
    report("A5", ok, f"worst FD relative error {worst:.2e} over 20 directions "
                     f"(<= 1e-3), cocycle residual {cocycle:.2e}")


def test_A6_bel_estimator(cal_model, cal_noise):
    g = make_observable("coordinate", index=0)
    # (i) exact OU gradient
    ou = build_shell_model(3, 0.0, mu1=1.0)
    ou_noise = make_noise_spec(ou, "constant_diagonal", s=2.75)
    T = 0.5
    est = bel_gradient_mean(ou, ou_noise, CutoffSpec(np.inf), g, np.zeros(3),
                            np.array([1.0, 0.0, 0.0]), T, 1e-3, 10000,
                            RngStream(8108))
    target = np.exp(-ou.eigenvalues[0] * T)
    z_ou = abs(est.estimate - target) / est.se

    # (ii) agreement with the direct-difference oracle, nonlinear shell model
    gen = RngStream(8109).generator()
    x1 = sample_h2_ball(cal_model, np.sqrt(CAL["delta"]), gen)
    x2 = sample_h2_ball(cal_model, np.sqrt(CAL["delta"]), gen)
    Tn, dtn = 0.2, 1e-3
    K0 = calibrate_K0(cal_model, cal_noise, x1, Tn, dtn, 300, RngStream(8110))
    cut = CutoffSpec(K0)
    bel = gradient_difference(cal_model, cal_noise, cut, g, x1, x2, Tn, dtn,
                              1500, 8, RngStream(8111))
    direct = direct_difference(cal_model, cal_noise, cut, g, x1, x2, Tn, dtn,
                               12000, RngStream(8112))
    se = float(np.hypot(bel.se, direct.se))
    z_diff = abs(bel.estimate - direct.estimate) / se

    # (iii) the cutoff-derivative term vanishes identically when K0 = inf
    _, dpsi, _ = bel_samples_batch(cal_model, cal_noise, CutoffSpec(np.inf),
                                   g, x1, x2 - x1, Tn, dtn, 1000,
                                   RngStream(8113))
    psi_inactive = bool(np.all(dpsi == 0.0))

    ok = z_ou <= 3.0 and z_diff <= 3.0 and psi_inactive
    report("A6", ok, f"OU gradient z={z_ou:.2f} (<=3), oracle agreement "
                     f"z={z_diff:.2f} (<=3), psi'-term identically zero for "
                     f"K0=inf: {psi_inactive}")


def test_A7_maximal_coupling_kernel():
    pairs = [((0.0, 1.0), (1.0, 1.0)),
             ((0.0, 1.0), (0.0, 4.0)),
             ((0.5, 1.0), (0.0, 2.25))]
    worst = 0.0
    for j, ((m1, v1), (m2, v2)) in enumerate(pairs):
        overlap, _ = quad(lambda x: np.minimum(
            norm.pdf(x, m1, np.sqrt(v1)), norm.pdf(x, m2, np.sqrt(v2))),
            -40, 40, limit=400)
        gen = RngStream(8114, j).generator()
        met = 0
        n = 100000
        for _ in range(n):
            _, _, f = maximal_coupling_gaussian(np.array([m1]), np.array([v1]),
                                                np.array([m2]), np.array([v2]),
                                                gen)
            met += f
        worst = max(worst, abs(met / n - overlap))
    report("A7", worst <= 0.01,
           f"max |empirical meet rate - (1 - TV)| = {worst:.4f} over 3 "
           f"Gaussian pairs, 1e5 draws each (<= 0.01)")


@pytest.fixture(scope="module")
def marginal_records(cal_model, cal_noise, cal_params):
    x1_0 = np.array([0.006, 0.0005, 0.0, 0.0, 0.0])
    x2_0 = np.array([-0.004, 0.0, 0.0001, 0.0, 0.0])
    recs = []
    for i in range(1000):
        recs.append(run_coupled_chain(cal_model, cal_noise, cal_params,
                                      x1_0, x2_0, RngStream(8115, i),
                                      stop_when_complete=False))
    return x1_0, recs


def test_A8_marginal_exactness(cal_model, cal_noise, cal_params,
                               marginal_records):
    x1_0, recs = marginal_records
    n_check = 5
    coupled = [r.states1[n_check][0] for r in recs if not r.censored]
    solo = []
    for i in range(1000):
        tr = simulate_path(cal_model, cal_noise, x1_0,
                           n_check * cal_params.T, cal_params.dt,
                           RngStream(8116, i))
        solo.append(tr.states[-1][0])
    stat, p = ks_2samp(coupled, solo)
    report("A8", p > 0.01,
           f"two-sample KS p = {p:.3f} (> 0.01), coupled vs solo marginal, "
           f"n = {len(coupled)}/{len(solo)}")


def test_A9_meeting_persistence(marginal_records, mixing_result):
    _, recs = marginal_records
    violations = 0
    scanned = 0
    for rec in itertools.chain(recs, mixing_result.records):
        if rec.meet_step is None:
            continue
        for n in range(rec.meet_step, len(rec.times)):
            scanned += 1
            if not (np.array_equal(rec.states1[n], rec.states2[n])
                    and rec.met_flags[n]):
                violations += 1
    report("A9", violations == 0,
           f"{violations} violations of met => bitwise equality over "
           f"{scanned} post-meeting macro states")


def test_A10_meet_probability_calibration(cal_model, cal_noise, cal_params):
    est = estimate_meet_probability(cal_model, cal_noise, cal_params,
                                    np.sqrt(CAL["delta"]), 400,
                                    RngStream(8117))
    ok = est.p_hat >= 0.75 and est.ci_low > 0.70
    report("A10", ok,
           f"meet probability from the delta-ball = {est.p_hat:.3f} "
           f"(>= 0.75), Wilson 95% CI [{est.ci_low:.3f}, {est.ci_high:.3f}] "
           f"excludes 0.70")


def test_A11_exponential_mixing(cal_params, mixing_result):
    res = mixing_result
    fit = fit_exponential_decay(res.p_series[:, [1, 2]])
    gamma_ok = fit.gamma > 0 and fit.r_squared >= 0.9

    p = res.per_attempt_rate
    k0_ok = True
    detail_k0 = "no ball visits"
    if len(res.k0_tail):
        n_att = sum(1 for r in res.records
                    if not r.censored and len(r.tau_ks) > 0)
        for n_row, p_gt in res.k0_tail:
            se = np.sqrt(max(p_gt * (1 - p_gt), 1e-12) / n_att)
            if p_gt > (1 - p) ** n_row + 3 * se:
                k0_ok = False
        detail_k0 = f"P(k0>n) <= (1-{p:.3f})^n + 3 SE"
    ok = gamma_ok and k0_ok
    report("A11", ok,
           f"decay fit gamma = {fit.gamma:.2f} > 0, R^2 = {fit.r_squared:.3f}"
           f" >= 0.9 over 20 macro steps x 1000 chains; {detail_k0}")


def test_A12_return_time_moments(cal_model, cal_noise, cal_params,
                                 mixing_result):
    stats = return_time_stats([r for r in mixing_result.records
                               if not r.censored])
    stable = [(a, m) for a, m, d in zip(stats.alphas, stats.moments,
                                        stats.diverging) if not d and a > 0]
    moment_ok = len(stable) > 0 and all(np.isfinite(m) for _, m in stable)

    # affine dependence on the initial L2 magnitudes
    mags = [0.002, 0.02, 0.1, 0.3, 0.6]
    alpha = stable[0][0] if stable else 0.5
    xs, ys = [], []
    for j, mag in enumerate(mags):
        taus = []
        for i in range(150):
            gen = RngStream(8118, j).child(i).generator()
            x1 = mag * gen.standard_normal(5) / 4.0
            x2 = mag * gen.standard_normal(5) / 4.0
            rec = run_coupled_chain(cal_model, cal_noise, cal_params, x1, x2,
                                    RngStream(8119, j).child(i))
            if rec.tau is not None:
                taus.append(rec.tau)
                xs.append(1.0 + x1 @ x1 + x2 @ x2)
                ys.append(np.exp(alpha * rec.tau))
    slope, intercept = np.polyfit(xs, ys, 1)
    ok = moment_ok and slope >= 0 and intercept >= 0
    report("A12", ok,
           f"{len(stable)} stable exponential moments (alpha up to "
           f"{max(a for a, _ in stable) if stable else 0:.2f}); regression of "
           f"E[e^(alpha tau)] on 1+|x1|^2+|x2|^2: slope {slope:.3f} >= 0, "
           f"intercept {intercept:.2f} >= 0")


def test_A13_small_noise_probability(cal_model, cal_noise, cal_params):
    t, n = cal_params.T, 400
    sups = []
    for i in range(200):
        rec = simulate_path(cal_model, cal_noise, np.zeros(5), t,
                            cal_params.dt, RngStream(8120, i))
        from galmix.noise import stochastic_convolution
        z = stochastic_convolution(cal_model, cal_noise, rec)
        sups.append(float(np.max(np.sum(
            cal_model.eigenvalues ** 2 * z * z, axis=1))))
    m_grid = [float(np.quantile(sups, q)) for q in (0.2, 0.4, 0.6, 0.8, 0.95)]
    ests = [small_noise_probability(cal_model, cal_noise, t, M, n,
                                    RngStream(8121, j), dt=cal_params.dt)
            for j, M in enumerate(m_grid)]
    probs = [e.p_hat for e in ests]
    positive = all(p >= 1.0 / n for p in probs)
    monotone = all(a <= b + 1e-12 for a, b in zip(probs, probs[1:]))
    report("A13", positive and monotone,
           f"P(sup ||Z||_2^2 <= M) = {[round(p, 3) for p in probs]} on the "
           f"5-point quantile grid: strictly positive and monotone in M")
