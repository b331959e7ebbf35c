"""CSV emission with a reproducibility stamp.

Every file starts with a comment line carrying the resolved-config digest
and the seed, then a header row.  Floats are written with repr so identical
runs produce byte-identical files.
"""
from __future__ import annotations

import os

import numpy as np


def _fmt(val) -> str:
    if isinstance(val, (float, np.floating)):
        return repr(float(val))
    if isinstance(val, (int, np.integer)):
        return str(int(val))
    return str(val)


def write_csv(path, header, rows, stamp: str) -> None:
    lines = [f"# {stamp}", ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path):
    """Header and float matrix, skipping stamp comments (round-trip helper)."""
    header = None
    data = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            data.append([float(x) for x in line.split(",")])
    return header, np.asarray(data)


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)
