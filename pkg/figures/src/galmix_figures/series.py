"""Parsing and validation of the simulator's delimited series files."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SchemaError(ValueError):
    """Series file does not match the documented column layout."""


# per kind: accepted header layouts (first match wins) and the index of
# the column that must be monotone
SCHEMAS = {
    "decay": (("n", "t", "p_unmet", "se"),),
    "tau_tail": (("t", "p_gt"), ("n", "p_gt")),
    "meet_sweep": (("param", "estimate", "ci_low", "ci_high", "n"),),
    "moments": (("t", "mean_l2sq", "se_l2sq", "mean_h1sq", "se_h1sq"),),
}

KINDS = tuple(SCHEMAS)


@dataclass
class SeriesFile:
    path: str
    kind: str
    columns: tuple
    data: np.ndarray        # shape (rows, len(columns))

    def col(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]


def load_series(path, kind: str) -> SeriesFile:
    if kind not in SCHEMAS:
        raise SchemaError(f"unknown series kind {kind!r}; expected one of {KINDS}")
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise SchemaError(f"cannot read series file {path}: {exc}")
    if not lines:
        raise SchemaError(f"{path}: file is empty (no header row)")
    header = tuple(c.strip() for c in lines[0].split(","))
    for layout in SCHEMAS[kind]:
        if header == layout:
            columns = layout
            break
    else:
        expected = " or ".join(",".join(l) for l in SCHEMAS[kind])
        raise SchemaError(
            f"{path}: header {','.join(header)!r} does not match the "
            f"{kind} schema (expected {expected})")
    if len(lines) == 1:
        raise SchemaError(f"{path}: series has a header but no data rows")
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split(",")
        if len(parts) != len(columns):
            raise SchemaError(
                f"{path}:{i}: expected {len(columns)} columns, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise SchemaError(f"{path}:{i}: non-numeric value ({exc})")
    data = np.asarray(rows)
    axis = data[:, 0]
    if np.any(np.diff(axis) < 0):
        raise SchemaError(
            f"{path}: column {columns[0]!r} must be monotone nondecreasing")
    return SeriesFile(path=str(path), kind=kind, columns=columns, data=data)
