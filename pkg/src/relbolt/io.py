"""Diagnostics CSV and grid-state dumps.

Both formats start with the magic string ``RELBOLT1``: as a ``#`` comment
line in the CSV, and as the first line of the state dump.  A state dump is

    RELBOLT1\\n
    {"n_per_axis": ..., "p_max": ..., "rho": ..., ...}\\n
    <n^3 little-endian float64 values, C order>
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from .grid import GridFunction, MomentumGrid

MAGIC = "RELBOLT1"

CSV_COLUMNS = (
    "t",
    "mass",
    "px",
    "py",
    "pz",
    "energy",
    "H",
    "D",
    "linf",
    "linf_rho",
    "l1_1",
    "l1_rho",
    "dist_l1_J",
    "clipped_mass",
    "cap_count",
)


class FormatError(ValueError):
    """A file does not follow the RELBOLT1 layout."""


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


class CsvWriter:
    """Streams diagnostics rows (17 significant digits) to ``path``."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="")
        self._fh.write(f"# {MAGIC}\n")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(CSV_COLUMNS)

    def write(self, record) -> None:
        self._writer.writerow([_fmt(v) for v in record.row()])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv(path) -> dict[str, np.ndarray]:
    """Columns of a diagnostics CSV as float arrays."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != f"# {MAGIC}":
            raise FormatError(f"{path}: missing {MAGIC} marker")
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if tuple(header) != CSV_COLUMNS:
        raise FormatError(f"{path}: unexpected header {header}")
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def write_state(path, f: GridFunction, rho: float, **extra) -> None:
    """Write ``f`` as a RELBOLT1 state dump (atomically, via a temporary file)."""
    header = {"n_per_axis": f.grid.n_per_axis, "p_max": f.grid.p_max, "rho": float(rho), **extra}
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(f"{MAGIC}\n".encode())
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    os.replace(tmp, path)


def read_state(path) -> tuple[GridFunction, dict]:
    """Read a state dump; returns the grid function and its header."""
    with open(path, "rb") as fh:
        magic = fh.readline().decode(errors="replace").strip()
        if magic != MAGIC:
            raise FormatError(f"{path}: expected magic {MAGIC!r}, found {magic[:16]!r}")
        try:
            header = json.loads(fh.readline().decode())
            grid = MomentumGrid(header["n_per_axis"], header["p_max"])
        except (ValueError, KeyError) as exc:
            raise FormatError(f"{path}: bad header ({exc})") from None
        raw = fh.read()
    if len(raw) != 8 * grid.size:
        raise FormatError(f"{path}: expected {8 * grid.size} bytes of values, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f8").reshape(grid.shape)
    return GridFunction(grid, values), header
