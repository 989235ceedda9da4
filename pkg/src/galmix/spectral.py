"""Finite divergence-free spectral phase space.

Two model families share one container:

* the periodic-torus model on (0,1)^3, with real trigonometric
  divergence-free modes, exact eigenvalues 4*pi^2*|k|^2 and an advection
  tensor computed from exact product identities of sines and cosines;
* a synthetic shell model (geometric wavenumber ladder, handcrafted
  antisymmetric triad tensor) used as a fast surrogate with the same
  algebra.

States are plain float64 coefficient vectors over the model's mode list.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError
from . import kernels

MODEL_SCHEMA_VERSION = 1

# tensor entries below this magnitude are dropped from the triad list
_TENSOR_TOL = 1e-14

_COS, _SIN = "cos", "sin"


@dataclass(frozen=True)
class WaveMode:
    """One real trigonometric velocity mode.

    wavevector : integer 3-vector k != 0, one representative per +-k pair
    polarization : 0 or 1, selecting one of two unit vectors orthogonal to k
    parity : "cos" or "sin", the real trigonometric component
    """

    wavevector: tuple[int, int, int]
    polarization: int
    parity: str


@dataclass(frozen=True)
class GalerkinModel:
    """Immutable finite spectral system; safe to share across workers."""

    kind: str                     # "torus" or "shell"
    modes: tuple[WaveMode, ...]
    eigenvalues: np.ndarray       # mu_n, sorted nondecreasing, > 0
    nu: float
    forcing: np.ndarray           # coefficients of f on the basis
    tensor_l: np.ndarray          # triad indices, int64
    tensor_m: np.ndarray
    tensor_n: np.ndarray
    tensor_v: np.ndarray          # triad values, float64
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.n_modes)

    def check_state(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n_modes,):
            raise DimensionMismatchError(
                f"state has shape {u.shape}, model has {self.n_modes} modes"
            )
        return u


def _half_space_representative(k: tuple[int, int, int]) -> bool:
    """Pick one of each +-k pair: positive in the last nonzero component."""
    kx, ky, kz = k
    if kz != 0:
        return kz > 0
    if ky != 0:
        return ky > 0
    return kx > 0


def _polarization_pair(k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal pair orthogonal to k (divergence-free)."""
    khat = k / np.linalg.norm(k)
    helper = np.array([0.0, 0.0, 1.0])
    if abs(abs(khat @ helper) - 1.0) < 1e-12:
        helper = np.array([1.0, 0.0, 0.0])
    d1 = np.cross(khat, helper)
    d1 /= np.linalg.norm(d1)
    d2 = np.cross(khat, d1)
    d2 /= np.linalg.norm(d2)
    return d1, d2


def polarization_vector(mode: WaveMode) -> np.ndarray:
    d1, d2 = _polarization_pair(np.asarray(mode.wavevector, dtype=float))
    return d1 if mode.polarization == 0 else d2


# coefficients of cos/sin in the basis e^{i theta}, e^{-i theta}
_TRIG_COEFF = {
    _COS: {+1: 0.5 + 0.0j, -1: 0.5 + 0.0j},
    _SIN: {+1: -0.5j, -1: +0.5j},
}


def _triple_trig_integral(spec1, spec2, spec3) -> float:
    """Exact integral over the unit torus of a product of three factors.

    Each spec is (parity, wavevector, scale) with parity in {cos, sin};
    the integral of the product is evaluated by expanding every factor in
    complex exponentials and keeping the sign patterns whose wavevectors
    cancel.  Exact for trigonometric polynomials.
    """
    total = 0.0 + 0.0j
    (p1, k1, s1f), (p2, k2, s2f), (p3, k3, s3f) = spec1, spec2, spec3
    for s1, s2, s3 in itertools.product((+1, -1), repeat=3):
        if any(s1 * a + s2 * b + s3 * c for a, b, c in zip(k1, k2, k3)):
            continue
        total += _TRIG_COEFF[p1][s1] * _TRIG_COEFF[p2][s2] * _TRIG_COEFF[p3][s3]
    return float((s1f * s2f * s3f) * total.real)


def _torus_tensor_entry(mode_l: WaveMode, d_l, mode_m: WaveMode, d_m,
                        mode_n: WaveMode, d_n) -> float:
    """Entry ((e_l . grad) e_m, e_n) from exact trigonometric identities.

    e = sqrt(2) d chi(2 pi k . x); the gradient turns chi_m into its
    derivative type and brings a factor 2 pi (d_l . k_m).
    """
    k_m = np.asarray(mode_m.wavevector, dtype=float)
    geom = float(d_l @ k_m) * float(d_m @ d_n)
    if geom == 0.0:
        return 0.0
    # d/dtheta cos = -sin ; d/dtheta sin = +cos
    if mode_m.parity == _COS:
        deriv_spec = (_SIN, mode_m.wavevector, -1.0)
    else:
        deriv_spec = (_COS, mode_m.wavevector, +1.0)
    integral = _triple_trig_integral(
        (mode_l.parity, mode_l.wavevector, 1.0),
        deriv_spec,
        (mode_n.parity, mode_n.wavevector, 1.0),
    )
    # sqrt(2)^3 from the three normalizations, 2 pi from the gradient
    return 4.0 * np.sqrt(2.0) * np.pi * geom * integral


def _resolve_forcing(n_modes: int, f) -> np.ndarray:
    if f is None:
        return np.zeros(n_modes)
    if isinstance(f, dict):
        amp = float(f.get("amplitude", 0.0))
        modes = f.get("modes", [0])
        out = np.zeros(n_modes)
        for i in modes:
            if not 0 <= int(i) < n_modes:
                raise ValueError(f"forcing mode index {i} out of range")
            out[int(i)] = amp
        f = out
    f = np.asarray(f, dtype=float)
    if f.shape != (n_modes,):
        raise DimensionMismatchError(
            f"forcing has shape {f.shape}, model has {n_modes} modes"
        )
    if not np.all(np.isfinite(f)):
        raise ValueError("forcing contains non-finite entries")
    return f


def _assemble_tensor(entry_fn, n_modes: int):
    """Collect triads (l, m, n) with m < n and mirror them exactly.

    The continuum identity (B(u,v),w) = -(B(u,w),v) pairs every entry with
    its negation, so only one of each pair is computed and the mirror is
    stored as the exact float negation.
    """
    ls, ms, ns, vs = [], [], [], []
    for l in range(n_modes):
        for m in range(n_modes):
            for n in range(m + 1, n_modes):
                v = entry_fn(l, m, n)
                if abs(v) <= _TENSOR_TOL:
                    continue
                ls.extend((l, l))
                ms.extend((m, n))
                ns.extend((n, m))
                vs.extend((v, -v))
    return (np.asarray(ls, dtype=np.int64), np.asarray(ms, dtype=np.int64),
            np.asarray(ns, dtype=np.int64), np.asarray(vs, dtype=float))


def build_torus_model(cutoff: int, nu: float = 1.0, f=None) -> GalerkinModel:
    """All divergence-free real trigonometric modes with |k|^2 <= cutoff.

    Modes come in (representative k) x (2 polarizations) x (cos, sin);
    eigenvalues are 4 pi^2 |k|^2, sorted nondecreasing.
    """
    cutoff = int(cutoff)
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1 (no modes otherwise)")
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    kmax = int(np.floor(np.sqrt(cutoff)))
    reps = []
    for kx in range(-kmax, kmax + 1):
        for ky in range(-kmax, kmax + 1):
            for kz in range(-kmax, kmax + 1):
                k = (kx, ky, kz)
                if k == (0, 0, 0) or kx * kx + ky * ky + kz * kz > cutoff:
                    continue
                if _half_space_representative(k):
                    reps.append(k)
    modes = [
        WaveMode(k, pol, parity)
        for k in reps
        for pol in (0, 1)
        for parity in (_COS, _SIN)
    ]
    modes.sort(key=lambda md: (
        sum(c * c for c in md.wavevector), md.wavevector, md.polarization, md.parity,
    ))
    modes = tuple(modes)
    eig = np.array([4.0 * np.pi ** 2 * sum(c * c for c in md.wavevector) for md in modes])

    pol_vecs = [polarization_vector(md) for md in modes]

    def entry(l, m, n):
        return _torus_tensor_entry(modes[l], pol_vecs[l], modes[m], pol_vecs[m],
                                   modes[n], pol_vecs[n])

    tl, tm, tn, tv = _assemble_tensor(entry, len(modes))
    forcing = _resolve_forcing(len(modes), f)
    return GalerkinModel(
        kind="torus", modes=modes, eigenvalues=eig, nu=float(nu),
        forcing=forcing, tensor_l=tl, tensor_m=tm, tensor_n=tn, tensor_v=tv,
        meta={"cutoff": cutoff},
    )


def build_shell_model(n_shells: int, coupling: float, nu: float = 1.0,
                      mu1: float = 1.0, spacing: float = 2.0, f=None) -> GalerkinModel:
    """Synthetic geometric-shell surrogate with the same tensor algebra.

    Shell wavenumbers k_j = spacing^j give eigenvalues mu1 * spacing^(2j),
    so consecutive eigenvalue ratios are spacing^2.  Each adjacent shell
    pair (a, a+1) interacts through the antisymmetric entry pair
    T[a][a][a+1] = coupling * k_a = -T[a][a+1][a], which conserves energy
    identically, transfers it toward the dissipative end, and at the
    default spacing 2 satisfies the same wavevector convolution
    constraint as the torus triads (k_a + k_a - k_{a+1} = 0).
    """
    n_shells = int(n_shells)
    if n_shells < 3:
        raise ValueError("need at least 3 shells for an interacting ladder")
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    modes = tuple(
        WaveMode((int(round(spacing ** j)), 0, 0), 0, _COS) for j in range(n_shells)
    )
    eig = mu1 * spacing ** (2.0 * np.arange(n_shells))

    ls, ms, ns, vs = [], [], [], []
    for a in range(n_shells - 1):
        v = coupling * spacing ** a
        if abs(v) <= _TENSOR_TOL:
            continue
        ls.extend((a, a))
        ms.extend((a, a + 1))
        ns.extend((a + 1, a))
        vs.extend((v, -v))
    forcing = _resolve_forcing(n_shells, f)
    return GalerkinModel(
        kind="shell", modes=modes, eigenvalues=np.asarray(eig, dtype=float),
        nu=float(nu), forcing=forcing,
        tensor_l=np.asarray(ls, dtype=np.int64),
        tensor_m=np.asarray(ms, dtype=np.int64),
        tensor_n=np.asarray(ns, dtype=np.int64),
        tensor_v=np.asarray(vs, dtype=float),
        meta={"n_shells": n_shells, "coupling": float(coupling),
              "mu1": float(mu1), "spacing": float(spacing)},
    )


def bilinear_B(model: GalerkinModel, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Projected advection term: result_n = sum_{l,m} u_l v_m T[l,m,n]."""
    u = model.check_state(u)
    v = model.check_state(v)
    return kernels.bilinear(model.tensor_l, model.tensor_m, model.tensor_n,
                            model.tensor_v, u, v)


def apply_A_power(model: GalerkinModel, s: float, u: np.ndarray) -> np.ndarray:
    """Fractional power of the Stokes operator: multiply mode n by mu_n^s."""
    u = model.check_state(u)
    return model.eigenvalues ** s * u


def sobolev_norm(model: GalerkinModel, s: float, u: np.ndarray) -> float:
    """( sum_n mu_n^s u_n^2 )^(1/2); s=0 is the L2 norm."""
    u = model.check_state(u)
    return float(np.sqrt(np.sum(model.eigenvalues ** s * u * u)))


def project(model: GalerkinModel, n_keep: int, u: np.ndarray) -> np.ndarray:
    """Keep the first n_keep modes (eigenvalue order), zero the rest."""
    u = model.check_state(u)
    if not 0 <= n_keep <= model.n_modes:
        raise ValueError(f"projection level {n_keep} out of range [0, {model.n_modes}]")
    out = u.copy()
    out[n_keep:] = 0.0
    return out


def model_to_dict(model: GalerkinModel) -> dict:
    """JSON-ready description; field names fixed in docs/schemas.md."""
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kind": model.kind,
        "nu": model.nu,
        "meta": model.meta,
        "modes": [
            {"k": list(md.wavevector), "polarization": md.polarization,
             "parity": md.parity}
            for md in model.modes
        ],
        "eigenvalues": model.eigenvalues.tolist(),
        "forcing": model.forcing.tolist(),
        "tensor": {
            "l": model.tensor_l.tolist(),
            "m": model.tensor_m.tolist(),
            "n": model.tensor_n.tolist(),
            "value": model.tensor_v.tolist(),
        },
    }


def save_model(model: GalerkinModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
