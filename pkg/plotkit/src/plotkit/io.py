"""CSV loading with schema validation.

Input schemas (produced by the divfree-flow CLI):
  profile.csv:  y, y_plus, u_plus, uu, vv, uv, k, nut_ratio
  spectrum CSV: k, E_hat
Extra columns are tolerated; missing required columns are a SchemaError.
"""

from __future__ import annotations

import csv

import numpy as np

PROFILE_COLUMNS = ("y", "y_plus", "u_plus", "uu", "vv", "uv", "k", "nut_ratio")
SPECTRUM_COLUMNS = ("k", "E_hat")


class SchemaError(ValueError):
    """Input CSV does not match the documented schema; maps to exit 2."""


def _read_table(path: str, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}; header {header}")
        rows = []
        for lineno, row in enumerate(reader, 2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise SchemaError(
                    f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}"
                )
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as e:
                raise SchemaError(f"{path}: line {lineno}: {e}") from e
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=float)
    return {name: data[:, header.index(name)] for name in required}


def load_profile(path: str) -> dict[str, np.ndarray]:
    return _read_table(path, PROFILE_COLUMNS)


def load_spectrum(path: str) -> dict[str, np.ndarray]:
    out = _read_table(path, SPECTRUM_COLUMNS)
    if np.any(out["k"] <= 0.0):
        raise SchemaError(f"{path}: wavenumbers must be positive")
    return out
