"""Delimited-text and binary writers for experiment outputs.

Column layouts and file names are fixed in docs/schemas.md; the figures
component consumes these files without importing this package.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .integrate import TRAJECTORY_SCHEMA_VERSION, TrajectoryRecord

SERIES_SCHEMA_VERSION = 1

DECAY_COLUMNS = ("n", "t", "p_unmet", "se")
TAU_TAIL_COLUMNS = ("t", "p_gt")
K0_TAIL_COLUMNS = ("n", "p_gt")
MEET_SWEEP_COLUMNS = ("param", "estimate", "ci_low", "ci_high", "n")
MOMENTS_COLUMNS = ("t", "mean_l2sq", "se_l2sq", "mean_h1sq", "se_h1sq")
COUPLING_COLUMNS = ("step", "t", "branch", "dist_l2", "met")
TAU_SAMPLES_COLUMNS = ("chain", "tau", "tau_l2", "k0", "met", "meet_time",
                       "censored")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) or isinstance(x, np.floating):
        if np.isnan(x):
            return "nan"
        return format(float(x), ".17g")
    return str(x)


def write_series(path, columns, rows) -> None:
    """Comma-separated text with a single header row."""
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_summary(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def save_trajectory(path, record: TrajectoryRecord) -> None:
    np.savez(path,
             schema_version=np.array(TRAJECTORY_SCHEMA_VERSION),
             times=record.times, states=record.states,
             increments=record.increments,
             scheme=np.array(record.scheme),
             dt=np.array(record.dt),
             blown_up=np.array(record.blown_up),
             root_seed=np.array(record.stream.root_seed if record.stream else -1),
             stream=np.array(record.stream.stream if record.stream else -1))


def load_trajectory(path) -> TrajectoryRecord:
    from .rng import RngStream

    with np.load(path) as data:
        seed = int(data["root_seed"])
        stream = RngStream(seed, int(data["stream"])) if seed >= 0 else None
        return TrajectoryRecord(
            times=data["times"], states=data["states"],
            increments=data["increments"], scheme=str(data["scheme"]),
            dt=float(data["dt"]), stream=stream,
            blown_up=bool(data["blown_up"]))


def write_coupling_record(path, record) -> None:
    rows = []
    for i in range(1, len(record.times)):
        dist = float(np.linalg.norm(record.states1[i] - record.states2[i]))
        rows.append((i, record.times[i], record.branches[i - 1], dist,
                     bool(record.met_flags[i])))
    write_series(path, COUPLING_COLUMNS, rows)


def coupling_summary(record) -> dict:
    return {
        "met": record.met,
        "meet_step": record.meet_step,
        "tau": record.tau,
        "tau_l2": record.tau_l2,
        "tau_ks": record.tau_ks.tolist(),
        "k0": record.k0,
        "censored": record.censored,
        "n_macro_steps": len(record.times) - 1,
        "attempts_total": record.attempts_total,
    }


def ensure_outdir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path
