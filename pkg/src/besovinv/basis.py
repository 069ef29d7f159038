"""Periodic orthonormal bases on the torus (0,1]^d.

Two families are provided:

* periodic Haar wavelets, built as tensor products of the 1-d periodic Haar
  system, with grid values interpreted as cell averages;
* the real Fourier system (constant, cos, sin, cos, sin, ...), with grid
  values interpreted as point samples at cell centres.

Wavelets carry a flat index ``l >= 1``.  ``l = 1`` is the scaling function
and level ``j`` occupies ``l in [2**(j*d) + 1, 2**((j+1)*d)]``; inside a
level the wavelet type ``m`` is the outer loop and the shift ``k`` is
enumerated in C (row-major) order.

Coefficient arrays may carry leading batch dimensions: the last axis is the
coefficient index (position ``l - 1``).
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np


class Family(str, enum.Enum):
    HAAR = "haar"
    FOURIER = "fourier"


@dataclass(frozen=True)
class BasisSpec:
    family: Family = Family.HAAR
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        _check_dim(self.dim)

    @property
    def regularity(self) -> float:
        """Hölder regularity of the family; Haar supports C^t claims only for t < 1."""
        return 1.0 if self.family is Family.HAAR else math.inf

    @property
    def is_wavelet(self) -> bool:
        return self.family is Family.HAAR


@dataclass(frozen=True)
class WaveletIndex:
    """(level, type, shift) triple; ``level is None`` marks the scaling function."""

    level: Optional[int]
    m: int = 0
    k: Tuple[int, ...] = ()

    @property
    def is_scaling(self) -> bool:
        return self.level is None


@dataclass(frozen=True)
class GridFunction:
    """Values of a periodic function on the uniform grid with ``n_per_axis**d`` cells."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim < 1 or v.ndim > 3:
            raise ValueError(f"grid function must have 1 to 3 axes, got {v.ndim}")
        if len(set(v.shape)) != 1:
            raise ValueError(f"grid must be square, got shape {v.shape}")
        log2n(v.shape[0])
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def n_per_axis(self) -> int:
        return self.values.shape[0]

    def mean(self) -> float:
        return float(self.values.mean())


def _check_dim(d: int) -> None:
    if d not in (1, 2, 3):
        raise ValueError(f"dimension must be 1, 2 or 3, got {d}")


def log2n(n: int) -> int:
    """Return J with n == 2**J, or raise ValueError."""
    n = int(n)
    if n < 1 or n & (n - 1):
        raise ValueError(f"n_per_axis must be a power of two, got {n}")
    return n.bit_length() - 1


def cell_centers(n: int, d: int) -> Tuple[np.ndarray, ...]:
    """Meshgrid (ij indexing) of cell centres ``(i + 1/2)/n``."""
    x = (np.arange(n) + 0.5) / n
    return tuple(np.meshgrid(*([x] * d), indexing="ij"))


# ---------------------------------------------------------------------------
# index map


def index_to_level(l: int, d: int) -> WaveletIndex:
    _check_dim(d)
    l = int(l)
    if l < 1:
        raise ValueError(f"flat index must be >= 1, got {l}")
    if l == 1:
        return WaveletIndex(None, 0, (0,) * d)
    j = ((l - 1).bit_length() - 1) // d
    per_type = 1 << (j * d)
    offset = l - per_type - 1
    m, kflat = divmod(offset, per_type)
    k = np.unravel_index(kflat, (1 << j,) * d)
    return WaveletIndex(j, m + 1, tuple(int(x) for x in k))


def level_to_index(w: WaveletIndex, d: int) -> int:
    _check_dim(d)
    if w.is_scaling:
        return 1
    j = int(w.level)
    if j < 0:
        raise ValueError(f"level must be >= 0, got {j}")
    if not 1 <= w.m <= (1 << d) - 1:
        raise ValueError(f"wavelet type m={w.m} outside 1..{(1 << d) - 1}")
    if len(w.k) != d or any(not 0 <= ki < (1 << j) for ki in w.k):
        raise ValueError(f"shift {w.k} out of range for level {j} in d={d}")
    per_type = 1 << (j * d)
    kflat = int(np.ravel_multi_index(w.k, (1 << j,) * d))
    return per_type + 1 + (w.m - 1) * per_type + kflat


# ---------------------------------------------------------------------------
# Haar


@lru_cache(maxsize=None)
def _haar_signs(d: int) -> np.ndarray:
    """Sign of each wavelet type on the 2**d children of its support.

    Row ``m - 1``, column = child offset ``e`` flattened in C order.  Axis
    ``i`` carries the mother wavelet when bit ``d-1-i`` of ``m`` is set
    (+1 on the left half-cell, -1 on the right), the box function otherwise.
    """
    rows = []
    for m in range(1, 1 << d):
        bits = [(m >> (d - 1 - i)) & 1 for i in range(d)]
        row = []
        for e in itertools.product((0, 1), repeat=d):
            s = 1
            for b, ei in zip(bits, e):
                if b and ei:
                    s = -s
            row.append(s)
        rows.append(row)
    out = np.array(rows, dtype=float)
    out.setflags(write=False)
    return out


def _interleave(child: np.ndarray, nb: int, nj: int, d: int) -> np.ndarray:
    # (batch..., nj**d, 2**d) -> (batch..., 2nj, ..., 2nj)
    batch = child.shape[:nb]
    child = child.reshape(batch + (nj,) * d + (2,) * d)
    order = list(range(nb))
    for i in range(d):
        order += [nb + i, nb + d + i]
    return child.transpose(order).reshape(batch + (2 * nj,) * d)


def _deinterleave(a: np.ndarray, nb: int, nj: int, d: int) -> np.ndarray:
    # (batch..., 2nj, ..., 2nj) -> (batch..., nj**d, 2**d)
    batch = a.shape[:nb]
    a = a.reshape(batch + sum(((nj, 2) for _ in range(d)), ()))
    order = list(range(nb)) + [nb + 2 * i for i in range(d)] + [nb + 2 * i + 1 for i in range(d)]
    return a.transpose(order).reshape(batch + (nj**d, 2**d))


def _levels_needed(N: int, d: int) -> int:
    J = 0
    while (1 << (J * d)) < N:
        J += 1
    return J


def _haar_synthesize(c: np.ndarray, d: int, J: int) -> np.ndarray:
    nb = c.ndim - 1
    batch = c.shape[:-1]
    N = c.shape[-1]
    Jc = _levels_needed(N, d)
    full = np.zeros(batch + (1 << (Jc * d),))
    full[..., :N] = c
    signs = _haar_signs(d)
    a = full[..., :1].reshape(batch + (1,) * d)
    for j in range(Jc):
        nj = 1 << j
        det = full[..., nj**d : (2 * nj) ** d].reshape(batch + ((1 << d) - 1, nj**d))
        coarse = a.reshape(batch + (nj**d, 1))
        child = coarse + 2.0 ** (j * d / 2) * np.einsum("...mk,me->...ke", det, signs)
        a = _interleave(child, nb, nj, d)
    rep = 1 << (J - Jc)
    for ax in range(d):
        a = np.repeat(a, rep, axis=nb + ax)
    return a


def _haar_analyze(f: np.ndarray, d: int, N: int) -> np.ndarray:
    nb = f.ndim - d
    batch = f.shape[:nb]
    J = log2n(f.shape[-1])
    signs = _haar_signs(d)
    levels = []
    a = f
    for j in range(J - 1, -1, -1):
        nj = 1 << j
        child = _deinterleave(a, nb, nj, d)
        det = 2.0 ** (-j * d / 2) * 2.0**-d * np.einsum("...ke,me->...mk", child, signs)
        levels.append(det.reshape(batch + (-1,)))
        a = child.mean(axis=-1).reshape(batch + (nj,) * d)
    out = np.concatenate([a.reshape(batch + (1,))] + levels[::-1], axis=-1)
    return out[..., :N]


# ---------------------------------------------------------------------------
# Fourier


@lru_cache(maxsize=None)
def _fourier_multi_indices(N: int, d: int) -> np.ndarray:
    """1-based per-axis 1-d indices for the first N d-dimensional functions.

    Tensor products are ordered by the largest per-axis index, then
    lexicographically, so l <= A**d spans per-axis indices <= A.
    """
    out = []
    A = 0
    while len(out) < N:
        A += 1
        for a in itertools.product(range(1, A + 1), repeat=d):
            if max(a) == A:
                out.append(a)
    arr = np.array(out[:N], dtype=int)
    arr.setflags(write=False)
    return arr


def _fourier_1d(A: int, n: int) -> np.ndarray:
    """Rows a-1 = 1-d function a sampled at the n cell centres."""
    x = (np.arange(n) + 0.5) / n
    rows = np.empty((A, n))
    rows[0] = 1.0
    for a in range(2, A + 1):
        freq = a // 2
        trig = np.cos if a % 2 == 0 else np.sin
        rows[a - 1] = math.sqrt(2.0) * trig(2 * np.pi * freq * x)
    return rows


def _fourier_check(N: int, d: int, n: int) -> int:
    A = int(_fourier_multi_indices(N, d).max())
    if A // 2 >= n / 2:
        raise ValueError(
            f"Fourier truncation N={N} needs frequency {A // 2}, at or above Nyquist for n={n}"
        )
    return A


def _fourier_synthesize(c: np.ndarray, d: int, n: int) -> np.ndarray:
    N = c.shape[-1]
    A = _fourier_check(N, d, n)
    idx = _fourier_multi_indices(N, d) - 1
    table = np.zeros(c.shape[:-1] + (A,) * d)
    table[(Ellipsis,) + tuple(idx.T)] = c
    rows = _fourier_1d(A, n)
    nb = c.ndim - 1
    out = table
    for _ in range(d):
        # contract the leading coefficient axis; its grid axis lands last
        out = np.tensordot(out, rows, axes=([nb], [0]))
    return out


def _fourier_analyze(f: np.ndarray, d: int, N: int) -> np.ndarray:
    n = f.shape[-1]
    A = _fourier_check(N, d, n)
    rows = _fourier_1d(A, n) / n
    nb = f.ndim - d
    out = f
    for _ in range(d):
        out = np.tensordot(out, rows, axes=([nb], [1]))
    idx = _fourier_multi_indices(N, d) - 1
    return out[(Ellipsis,) + tuple(idx.T)]


# ---------------------------------------------------------------------------
# public synthesis / analysis


def _check_resolution(N: int, d: int, n: int) -> None:
    if N < 1:
        raise ValueError("need at least one coefficient")
    if N > n**d:
        raise ValueError(f"N={N} coefficients exceed grid resolution {n}**{d}")


def synthesize_batch(coefs: np.ndarray, basis: BasisSpec, n_per_axis: int) -> np.ndarray:
    """Evaluate sum_l c_l psi_l on the grid for every leading batch index.

    Returns an array of shape ``coefs.shape[:-1] + (n,) * d``.
    """
    c = np.asarray(coefs, dtype=float)
    d = basis.dim
    J = log2n(n_per_axis)
    _check_resolution(c.shape[-1], d, n_per_axis)
    if basis.family is Family.HAAR:
        return _haar_synthesize(c, d, J)
    return _fourier_synthesize(c, d, n_per_axis)


def analyze_batch(values: np.ndarray, basis: BasisSpec, N: int) -> np.ndarray:
    """Inner products <f, psi_l>, l = 1..N, of grid values (batch axes first)."""
    f = np.asarray(values, dtype=float)
    d = basis.dim
    n = f.shape[-1]
    log2n(n)
    _check_resolution(N, d, n)
    if basis.family is Family.HAAR:
        return _haar_analyze(f, d, N)
    return _fourier_analyze(f, d, N)


def synthesize(coefs: np.ndarray, basis: BasisSpec, n_per_axis: int) -> GridFunction:
    c = np.asarray(coefs, dtype=float)
    if c.ndim != 1:
        raise ValueError("synthesize takes a single coefficient vector; use synthesize_batch")
    return GridFunction(synthesize_batch(c, basis, n_per_axis))


def analyze(f: GridFunction, basis: BasisSpec, N: int) -> np.ndarray:
    if f.dim != basis.dim:
        raise ValueError(f"grid dimension {f.dim} does not match basis dimension {basis.dim}")
    return analyze_batch(f.values, basis, N)


def project(coefs: np.ndarray, N: int) -> np.ndarray:
    """Orthogonal projection onto span{psi_1..psi_N}: zero every coefficient past N."""
    c = np.array(coefs, dtype=float, copy=True)
    c[..., N:] = 0.0
    return c
