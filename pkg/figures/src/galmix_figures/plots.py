"""Deterministic figure rendering with a machine-readable metadata sidecar."""

from __future__ import annotations

import hashlib
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .series import SeriesFile, load_series  # noqa: E402

# fixed hash salt + stripped date make SVG output byte-stable across runs
matplotlib.rcParams["svg.hashsalt"] = "galmix-figures"


def _fit_exponential(x: np.ndarray, p: np.ndarray):
    mask = p > 0
    if np.sum(mask) < 2:
        return None
    slope, intercept = np.polyfit(x[mask], np.log(p[mask]), 1)
    resid = np.log(p[mask]) - (slope * x[mask] + intercept)
    ss = float(np.sum((np.log(p[mask]) - np.mean(np.log(p[mask]))) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss if ss > 0 else 1.0
    return float(np.exp(intercept)), float(-slope), r2


def _plot_decay(sf: SeriesFile, ax):
    t, p, se = sf.col("t"), sf.col("p_unmet"), sf.col("se")
    pos = p > 0
    ax.errorbar(t[pos], p[pos], yerr=np.minimum(se[pos], 0.999 * p[pos]),
                fmt="o", ms=4, capsize=2, label="observed")
    fit = _fit_exponential(t, p)
    annotation = "no exponential fit (fewer than 2 positive points)"
    if fit is not None:
        C, gamma, r2 = fit
        tt = np.linspace(t.min(), t.max(), 200)
        ax.plot(tt, C * np.exp(-gamma * tt), "-",
                label=f"fit C e^(-gamma t)")
        annotation = f"gamma={gamma:.4g}, R^2={r2:.3f}"
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("unmet probability")
    ax.set_title("Coupled-chain decay")
    ax.legend(loc="upper right")
    return annotation


def _plot_tau_tail(sf: SeriesFile, ax):
    t, p = sf.data[:, 0], sf.col("p_gt")
    pos = p > 0
    ax.plot(t[pos], p[pos], "o-", ms=4, label="observed")
    fit = _fit_exponential(t, p)
    annotation = "no exponential fit"
    if fit is not None:
        _, rate, r2 = fit
        annotation = f"tail rate={rate:.4g}, R^2={r2:.3f}"
    ax.set_yscale("log")
    ax.set_xlabel(sf.columns[0])
    ax.set_ylabel("tail probability")
    ax.set_title("Return-time tail")
    ax.legend(loc="upper right")
    return annotation


def _plot_meet_sweep(sf: SeriesFile, ax):
    x = sf.col("param")
    est = sf.col("estimate")
    ax.fill_between(x, sf.col("ci_low"), sf.col("ci_high"), alpha=0.3,
                    label="95% CI")
    ax.plot(x, est, "o-", ms=4, label="estimate")
    ax.set_xlabel("parameter")
    ax.set_ylabel("probability")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("Probability sweep")
    ax.legend(loc="lower right")
    return f"{len(x)} sweep points"


def _plot_moments(sf: SeriesFile, ax):
    t = sf.col("t")
    for name, label in (("mean_l2sq", "|x|^2"), ("mean_h1sq", "||x||_1^2")):
        m = sf.col(name)
        se = sf.col("se_" + name.split("_")[1])
        ax.plot(t, m, label=f"running mean {label}")
        ax.fill_between(t, m - 3 * se, m + 3 * se, alpha=0.2)
    ax.set_xlabel("t")
    ax.set_ylabel("moment")
    ax.set_title("Occupation-measure moments")
    ax.legend(loc="upper right")
    final = sf.col("mean_l2sq")[-1]
    return f"final |x|^2 mean = {final:.4g}"


_PLOTTERS = {
    "decay": _plot_decay,
    "tau_tail": _plot_tau_tail,
    "meet_sweep": _plot_meet_sweep,
    "moments": _plot_moments,
}


def render(series_path, kind: str, out_path) -> dict:
    """Render one series file; returns the metadata written alongside.

    The figure is written only after the series validates, and the
    sidecar <out>.meta.json carries title, axis labels, annotation and a
    digest of the input so identical inputs give identical metadata.
    """
    sf = load_series(series_path, kind)
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=100)
    try:
        annotation = _PLOTTERS[kind](sf, ax)
        ax.text(0.02, 0.02, annotation, transform=ax.transAxes, fontsize=9)
        with open(series_path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        meta = {
            "kind": kind,
            "title": ax.get_title(),
            "xlabel": ax.get_xlabel(),
            "ylabel": ax.get_ylabel(),
            "annotation": annotation,
            "rows": int(sf.data.shape[0]),
            "input_sha256": digest,
        }
        fig.tight_layout()
        fig.savefig(out_path, metadata=_strip_dates(out_path))
    finally:
        plt.close(fig)
    sidecar = str(out_path) + ".meta.json"
    with open(sidecar, "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return meta


def _strip_dates(out_path) -> dict:
    ext = os.path.splitext(str(out_path))[1].lower()
    if ext == ".svg":
        return {"Date": None}
    if ext == ".png":
        return {"Software": None}
    return {}
