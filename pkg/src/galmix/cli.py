"""Command-line entry point: validates a config, dispatches experiments,
manages output directories and seeds.

Exit codes: 0 success, 2 configuration failure, 3 censoring overflow.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__, kernels
from .bel import (CutoffSpec, calibrate_K0, direct_difference,
                  gradient_difference, make_observable)
from .config import (COMMANDS, ExperimentConfig, apply_overrides,
                     config_from_dict, load_config)
from .coupling import run_coupled_chain
from .errors import ConfigError, GalmixError, InsufficientDataError
from .ergodicity import (estimate_invariant_measure, estimate_meet_probability,
                         mixing_experiment, sample_h2_ball,
                         small_noise_probability)
from .integrate import simulate_path
from .io import (DECAY_COLUMNS, K0_TAIL_COLUMNS, MEET_SWEEP_COLUMNS,
                 MOMENTS_COLUMNS, TAU_SAMPLES_COLUMNS, TAU_TAIL_COLUMNS,
                 coupling_summary, ensure_outdir, save_trajectory,
                 write_coupling_record, write_series, write_summary)
from .rng import RngStream


def write_manifest(outdir: str, command: str, cfg: ExperimentConfig) -> None:
    write_summary(os.path.join(outdir, "manifest.json"), {
        "tool": "galmix",
        "version": __version__,
        "backend": kernels.backend_name(),
        "command": command,
        "root_seed": cfg.run["root_seed"],
        "config": cfg.as_dict(),
    })


def _context(cfg: ExperimentConfig):
    model = cfg.build_model()
    spec = cfg.build_noise(model)
    params = cfg.build_coupling_params()
    stream = RngStream(int(cfg.run["root_seed"]))
    return model, spec, params, stream


def _pair_starts(model, params, cfg, stream, n):
    radius = cfg.run["pair_radius"]
    radius = 3.0 * np.sqrt(params.delta) if radius is None else float(radius)
    pairs = []
    for i in range(n):
        gen = stream.child(9, i).generator()
        pairs.append((sample_h2_ball(model, radius, gen),
                      sample_h2_ball(model, radius, gen)))
    return pairs


def run_simulate(cfg: ExperimentConfig, outdir: str) -> int:
    model, spec, params, stream = _context(cfg)
    record = simulate_path(model, spec, model.zero_state(),
                           float(cfg.run["horizon"]), params.dt,
                           stream.child(0))
    save_trajectory(os.path.join(outdir, "trajectory.npz"), record)
    write_summary(os.path.join(outdir, "summary.json"), {
        "n_steps": record.n_steps,
        "blown_up": record.blown_up,
        "final_l2sq": float(record.states[-1] @ record.states[-1]),
    })
    return 0


def run_couple(cfg: ExperimentConfig, outdir: str) -> int:
    model, spec, params, stream = _context(cfg)
    n_chains = int(cfg.run["n_chains"])
    pairs = _pair_starts(model, params, cfg, stream, n_chains)
    rows = []
    summaries = []
    for i, (x1, x2) in enumerate(pairs):
        rec = run_coupled_chain(model, spec, params, x1, x2, stream.child(0, i))
        if i < 10:
            write_coupling_record(
                os.path.join(outdir, f"coupling_chain{i:03d}.csv"), rec)
        rows.append((i, rec.tau if rec.tau is not None else np.nan,
                     rec.tau_l2 if rec.tau_l2 is not None else np.nan,
                     rec.k0 if rec.k0 is not None else -1,
                     rec.met,
                     rec.meet_step * params.T if rec.meet_step is not None else np.nan,
                     rec.censored))
        summaries.append(coupling_summary(rec))
    write_series(os.path.join(outdir, "tau_samples.csv"), TAU_SAMPLES_COLUMNS, rows)
    n_met = sum(1 for s in summaries if s["met"])
    write_summary(os.path.join(outdir, "summary.json"), {
        "n_chains": n_chains,
        "n_met": n_met,
        "n_censored": sum(1 for s in summaries if s["censored"]),
        "chains": summaries[:20],
    })
    return 0


def _workers(cfg: ExperimentConfig) -> int:
    n = int(cfg.run["threads"])
    return n if n > 0 else (os.cpu_count() or 1)


def run_mix(cfg: ExperimentConfig, outdir: str) -> int:
    model, spec, params, stream = _context(cfg)
    n_chains = int(cfg.run["n_chains"])
    n_steps = int(cfg.run["decay_steps"])
    pairs = _pair_starts(model, params, cfg, stream, n_chains)
    alphas = cfg.run["alphas"] or None
    result = mixing_experiment(
        model, spec, params, pairs, n_steps, stream.child(0), alphas=alphas,
        workers=_workers(cfg),
        invariant_kwargs={"burn_in": float(cfg.run["burn_in"]),
                          "n_samples": int(cfg.run["n_samples"])})

    write_series(os.path.join(outdir, "decay.csv"), DECAY_COLUMNS,
                 [tuple(r) for r in result.p_series])
    write_series(os.path.join(outdir, "k0_tail.csv"), K0_TAIL_COLUMNS,
                 [tuple(r) for r in result.k0_tail])
    st = result.return_stats
    if st is not None:
        write_series(os.path.join(outdir, "tau_tail.csv"), TAU_TAIL_COLUMNS,
                     list(zip(st.tail_times, st.tail_probs)))
    rows = [(i, r.tau if r.tau is not None else np.nan,
             r.tau_l2 if r.tau_l2 is not None else np.nan,
             r.k0 if r.k0 is not None else -1, r.met,
             r.meet_step * params.T if r.meet_step is not None else np.nan,
             r.censored) for i, r in enumerate(result.records)]
    write_series(os.path.join(outdir, "tau_samples.csv"), TAU_SAMPLES_COLUMNS, rows)
    inv = result.invariant
    cum = np.cumsum(np.sum(inv.samples ** 2, axis=1)) / np.arange(1, len(inv.samples) + 1)
    cumh = (np.cumsum(np.sum(model.eigenvalues * inv.samples ** 2, axis=1))
            / np.arange(1, len(inv.samples) + 1))
    mom_rows = [((j + 1) * inv.sample_dt, cum[j], inv.se_l2sq, cumh[j], inv.se_h1sq)
                for j in range(len(cum))]
    write_series(os.path.join(outdir, "moments.csv"), MOMENTS_COLUMNS, mom_rows)
    if result.tv_series is not None:
        write_series(os.path.join(outdir, "tv_check.csv"),
                     ("n", "tv_hat", "bound"),
                     [tuple(r) for r in result.tv_series])
    radius = cfg.run["ball_radius"]
    radius = np.sqrt(params.delta) if radius is None else float(radius)
    meet = estimate_meet_probability(model, spec, params, radius,
                                     max(100, n_chains // 4), stream.child(3))
    fit = result.decay_fit
    write_summary(os.path.join(outdir, "summary.json"), {
        "decay_fit": None if fit is None else
            {"C": fit.C, "gamma": fit.gamma, "r_squared": fit.r_squared},
        "per_attempt_meet_rate": result.per_attempt_rate,
        "meet_probability": {"estimate": meet.p_hat, "ci_low": meet.ci_low,
                             "ci_high": meet.ci_high, "n": meet.n_chains},
        "return_moments": None if st is None else
            {"alphas": st.alphas, "moments": st.moments,
             "diverging": st.diverging, "tail_rate": st.tail_rate},
        "invariant": {"mean_l2sq": inv.mean_l2sq, "se_l2sq": inv.se_l2sq,
                      "mean_h1sq": inv.mean_h1sq, "se_h1sq": inv.se_h1sq},
        "n_chains": result.n_chains,
        "n_censored": result.n_censored,
    })
    return 0


def run_bel_check(cfg: ExperimentConfig, outdir: str) -> int:
    model, spec, params, stream = _context(cfg)
    g = make_observable(cfg.run["observable"],
                        index=int(cfg.run["observable_index"]))
    T, dt = float(cfg.run["bel_T"]), params.dt
    gen = stream.child(9, 0).generator()
    x0_1 = sample_h2_ball(model, np.sqrt(params.delta), gen)
    x0_2 = sample_h2_ball(model, np.sqrt(params.delta), gen)
    K0 = cfg.run["bel_K0"]
    if K0 is None:
        K0 = calibrate_K0(model, spec, x0_1, T, dt, 200, stream.child(1))
    cutoff = CutoffSpec(K0=float(K0))
    n = int(cfg.run["n_samples"])
    est = gradient_difference(model, spec, cutoff, g, x0_1, x0_2, T, dt,
                              n, int(cfg.run["theta_nodes"]), stream.child(2))
    direct = direct_difference(model, spec, cutoff, g, x0_1, x0_2, T, dt,
                               8 * n, stream.child(3))
    se = float(np.hypot(est.se, direct.se))
    write_summary(os.path.join(outdir, "summary.json"), {
        "K0": float(K0),
        "estimator": {"value": est.estimate, "se": est.se,
                      "n_samples": est.n_samples, "n_censored": est.n_censored},
        "direct_oracle": {"value": direct.estimate, "se": direct.se,
                          "n_samples": direct.n_samples},
        "discrepancy": est.estimate - direct.estimate,
        "combined_se": se,
        "within_3se": bool(abs(est.estimate - direct.estimate) <= 3 * se),
    })
    return 0


def run_invariant(cfg: ExperimentConfig, outdir: str) -> int:
    model, spec, params, stream = _context(cfg)
    inv = estimate_invariant_measure(
        model, spec, burn_in=float(cfg.run["burn_in"]),
        n_samples=int(cfg.run["n_samples"]), stream=stream.child(0),
        dt=params.dt, sample_dt=params.T)
    cum = np.cumsum(np.sum(inv.samples ** 2, axis=1)) / np.arange(1, len(inv.samples) + 1)
    cumh = (np.cumsum(np.sum(model.eigenvalues * inv.samples ** 2, axis=1))
            / np.arange(1, len(inv.samples) + 1))
    rows = [((j + 1) * inv.sample_dt, cum[j], inv.se_l2sq, cumh[j], inv.se_h1sq)
            for j in range(len(cum))]
    write_series(os.path.join(outdir, "moments.csv"), MOMENTS_COLUMNS, rows)
    write_summary(os.path.join(outdir, "summary.json"), {
        "mean_l2sq": inv.mean_l2sq, "se_l2sq": inv.se_l2sq,
        "mean_h1sq": inv.mean_h1sq, "se_h1sq": inv.se_h1sq,
        "n_samples": len(inv.samples), "n_censored": inv.n_censored,
    })
    return 0


def run_small_noise(cfg: ExperimentConfig, outdir: str) -> int:
    model, spec, params, stream = _context(cfg)
    t = params.T
    n = int(cfg.run["n_samples"])
    m_grid = [float(m) for m in cfg.run["m_grid"]]
    if not m_grid:
        pilot = small_noise_probability(model, spec, t, 1e300, 200,
                                        stream.child(1), dt=params.dt)
        # quantile-pegged grid from a pilot of sup ||Z||_2^2
        sups = _pilot_sup_z(model, spec, t, 200, stream.child(1), params.dt)
        m_grid = [float(np.quantile(sups, q)) for q in
                  (0.2, 0.4, 0.6, 0.8, 0.95)]
        del pilot
    rows = []
    results = []
    for j, M in enumerate(m_grid):
        est = small_noise_probability(model, spec, t, M, n, stream.child(2, j),
                                      dt=params.dt)
        rows.append((M, est.p_hat, est.ci_low, est.ci_high, est.n_samples))
        results.append(est)
    write_series(os.path.join(outdir, "small_noise.csv"), MEET_SWEEP_COLUMNS, rows)
    write_summary(os.path.join(outdir, "summary.json"), {
        "t": t,
        "m_grid": m_grid,
        "estimates": [e.p_hat for e in results],
        "all_positive": bool(all(e.p_hat > 0 for e in results)),
        "monotone": bool(all(results[j].p_hat <= results[j + 1].p_hat + 1e-12
                             for j in range(len(results) - 1))),
    })
    return 0


def _pilot_sup_z(model, spec, t, n, stream, dt):
    from .integrate import BatchSimulator, phi_batch

    sim = BatchSimulator(model, spec, np.zeros((n, model.n_modes)), dt, stream)
    Z = np.zeros_like(sim.X)
    mu2 = model.eigenvalues ** 2
    sup_z = np.zeros(n)
    for _ in range(int(round(t / dt))):
        Xi = sim.X.copy()
        dW = sim.step()
        Z = sim.edt * (Z + phi_batch(spec, Xi) * dW)
        sup_z = np.maximum(sup_z, np.sum(mu2 * Z * Z, axis=1))
    return sup_z[sim.alive]


_RUNNERS = {
    "simulate": run_simulate,
    "couple": run_couple,
    "mix": run_mix,
    "bel-check": run_bel_check,
    "invariant": run_invariant,
    "small-noise": run_small_noise,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="galmix",
        description="Spectral-Galerkin mixing laboratory")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML/JSON config (or a previous manifest)")
    p.add_argument("--out", help="output directory (overrides run.out_dir)")
    p.add_argument("--seed", type=int, help="root seed (overrides run.root_seed)")
    p.add_argument("--threads", type=int, help="worker count; 0 = cpu count")
    p.add_argument("--override", action="append", default=[],
                   metavar="KEY=VALUE", help="dotted config override")
    p.add_argument("--version", action="version", version=__version__)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else config_from_dict({})
        overrides = list(args.override)
        if args.out is not None:
            overrides.append(f"run.out_dir={args.out}")
        if args.seed is not None:
            overrides.append(f"run.root_seed={args.seed}")
        if args.threads is not None:
            n = args.threads if args.threads > 0 else (os.cpu_count() or 1)
            overrides.append(f"run.threads={n}")
        if overrides:
            cfg = apply_overrides(cfg, overrides)
    except ConfigError as exc:
        print(f"galmix: configuration error: {exc}", file=sys.stderr)
        return 2
    outdir = ensure_outdir(cfg.run["out_dir"])
    write_manifest(outdir, args.command, cfg)
    try:
        return _RUNNERS[args.command](cfg, outdir)
    except InsufficientDataError as exc:
        print(f"galmix: censoring overflow / insufficient data: {exc}",
              file=sys.stderr)
        return 3
    except ConfigError as exc:
        print(f"galmix: configuration error: {exc}", file=sys.stderr)
        return 2
    except GalmixError as exc:
        print(f"galmix: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
