"""Benchmark the numba kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py [--repeats N]

Covers the three hot loops: triad contraction, full-path integration and
the coupled-pair synchronous advance.  The same comparison can be forced
end-to-end by running any experiment with GALMIX_DISABLE_NUMBA=1.
"""

import argparse
import time

import numpy as np

from galmix import kernels
from galmix.noise import make_noise_spec
from galmix.rng import RngStream
from galmix.spectral import build_shell_model, build_torus_model


def timeit(fn, repeats):
    fn()  # warm-up / JIT compile
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba unavailable; nothing to compare")

    shell = build_shell_model(8, 0.3)
    torus = build_torus_model(2)
    rows = []

    for name, model in (("shell8", shell), ("torus2", torus)):
        spec = make_noise_spec(model, "constant_diagonal", s=2.75)
        gen = RngStream(1).generator()
        u, v = gen.standard_normal((2, model.n_modes))
        incs = gen.standard_normal((2000, model.n_modes)) * np.sqrt(1e-3)
        states = np.empty((2001, model.n_modes))
        x0 = 0.1 * gen.standard_normal(model.n_modes)

        def bil(fn):
            return lambda: fn(model.tensor_l, model.tensor_m, model.tensor_n,
                              model.tensor_v, u, v)

        def path(fn):
            return lambda: fn(x0, model.eigenvalues, model.nu, model.forcing,
                              model.tensor_l, model.tensor_m, model.tensor_n,
                              model.tensor_v, spec.kind_code,
                              spec.base_amplitudes, spec.modulation_amplitude,
                              1e-3, kernels.SEMI_IMPLICIT, incs, states)

        def pair(fn):
            def run():
                x1 = x0.copy()
                x2 = x0 + 1e-3
                fn(x1, x2, model.eigenvalues, model.nu, model.forcing,
                   model.tensor_l, model.tensor_m, model.tensor_n,
                   model.tensor_v, spec.kind_code, spec.base_amplitudes,
                   spec.modulation_amplitude, 1e-3, kernels.SEMI_IMPLICIT,
                   incs, 0, 1e-12)
            return run

        for label, np_fn, nb_fn in (
                ("bilinear", bil(kernels.bilinear_numpy),
                 bil(kernels.bilinear_numba)),
                ("integrate_path/2000", path(kernels.integrate_path_numpy),
                 path(kernels.integrate_path_numba)),
                ("pair_advance/2000", pair(kernels.pair_advance_sync_numpy),
                 pair(kernels.pair_advance_sync_numba))):
            t_np = timeit(np_fn, args.repeats)
            t_nb = timeit(nb_fn, args.repeats)
            rows.append((name, label, t_np, t_nb, t_np / t_nb))

    print(f"{'model':8s} {'kernel':22s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}")
    for name, label, t_np, t_nb, s in rows:
        print(f"{name:8s} {label:22s} {t_np * 1e6:>10.1f}us {t_nb * 1e6:>10.1f}us "
              f"{s:>8.1f}x")


if __name__ == "__main__":
    main()
