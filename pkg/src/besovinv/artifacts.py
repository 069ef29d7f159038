"""On-disk formats: grid dumps, CSV tables, chain output and run manifests.

Binary grid layout (little endian): 32-byte header, then n**d float64 values
in C order.

    offset 0   8s   magic b"BESOVGRD"
    offset 8   u4   d
    offset 12  u4   n_per_axis
    offset 16  16x  reserved (zero)
"""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .basis import GridFunction

GRID_MAGIC = b"BESOVGRD"
_HEADER = struct.Struct("<8sII16x")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# grid functions


def write_grid_binary(path, f: GridFunction) -> Path:
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(GRID_MAGIC, f.dim, f.n_per_axis))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
    return path


def read_grid_binary(path) -> GridFunction:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("file too short for a grid header")
    magic, d, n = _HEADER.unpack_from(raw)
    if magic != GRID_MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != n**d:
        raise ValueError(f"expected {n**d} values, found {body.size}")
    return GridFunction(body.reshape((n,) * d).astype(float))


def write_grid_csv(path, f: GridFunction) -> Path:
    """One row per cell: cell-centre coordinates then the value."""
    n, d = f.n_per_axis, f.dim
    rows = []
    for idx in np.ndindex(*f.values.shape):
        rows.append([(i + 0.5) / n for i in idx] + [f.values[idx]])
    header = [f"x{i + 1}" for i in range(d)] + ["value"]
    return write_csv(path, header, rows)


def read_grid_csv(path) -> GridFunction:
    header, rows = read_csv(path)
    d = len(header) - 1
    vals = np.array([float(r[-1]) for r in rows])
    n = round(len(vals) ** (1.0 / d))
    return GridFunction(vals.reshape((n,) * d))


# chains


def write_chain(path_csv, summary, spec_digest: str) -> tuple[Path, Path]:
    """Chain samples as CSV plus a JSON sidecar (seed, acceptance, spec hash)."""
    path_csv = Path(path_csv)
    N = summary.samples.shape[1]
    header = ["step", "phi", "log_prior"] + [f"coef_{l}" for l in range(1, N + 1)]
    rows = (
        [summary.steps[i], summary.phi[i], summary.log_prior[i], *summary.samples[i]]
        for i in range(len(summary.steps))
    )
    write_csv(path_csv, header, rows)
    side = write_json(
        path_csv.with_suffix(".json"),
        {
            "seed": summary.seed,
            "acceptance": summary.acceptance_rate,
            "n_steps": summary.n_steps,
            "n_failed": summary.n_failed,
            "step_size": summary.step_size,
            "spec_hash": spec_digest,
        },
    )
    return path_csv, side


def read_chain(path_csv) -> np.ndarray:
    header, rows = read_csv(path_csv)
    return np.array([[float(v) for v in r[3:]] for r in rows])
