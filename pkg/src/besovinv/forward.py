"""Periodic elliptic forward model and pointwise observation map.

Discretisation of -div(e^u grad p) = f + div g on (0,1]^d: cell-centred finite
volumes, harmonic-mean face permeabilities, mean-zero gauge for p.  In d=1
the discrete system is solved exactly by integrating the flux; in d=2 by
Jacobi-preconditioned conjugate gradients.  Both solve the same linear system.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .basis import GridFunction, cell_centers, synthesize_batch, project
from .prior import PriorParams

log = logging.getLogger(__name__)


class ForwardSolveError(RuntimeError):
    def __init__(self, msg: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


def _mean_zero_tol(b: np.ndarray) -> float:
    return 1e-10 * max(1.0, float(np.max(np.abs(b))) if b.size else 1.0)


def divergence_of(g: Sequence[np.ndarray], n: int) -> np.ndarray:
    """Centred discrete divergence; face values are averages of the adjacent cells."""
    h = 1.0 / n
    out = np.zeros_like(np.asarray(g[0], dtype=float))
    for ax, gi in enumerate(g):
        gi = np.asarray(gi, dtype=float)
        up = 0.5 * (gi + np.roll(gi, -1, axis=ax))
        out += (up - np.roll(up, 1, axis=ax)) / h
    return out


@dataclass(frozen=True)
class EllipticProblem:
    f: GridFunction
    g: Optional[Tuple[GridFunction, ...]] = None
    solver_tol: float = 1e-10
    max_iter: Optional[int] = None
    rhs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        d, n = self.f.dim, self.f.n_per_axis
        if d == 3:
            raise NotImplementedError("unsupported dimension: the solver ships d in {1, 2}")
        if self.solver_tol <= 0:
            raise ValueError("solver_tol must be positive")
        b = np.array(self.f.values, dtype=float)
        if self.g is not None:
            if len(self.g) != d:
                raise ValueError(f"g needs {d} components, got {len(self.g)}")
            for gi in self.g:
                if gi.dim != d or gi.n_per_axis != n:
                    raise ValueError("g components must live on the same grid as f")
            b = b + divergence_of([gi.values for gi in self.g], n)
        if abs(b.mean()) > _mean_zero_tol(b):
            raise ValueError(f"right-hand side must have zero mean (periodic solvability), mean={b.mean():.3e}")
        b.setflags(write=False)
        object.__setattr__(self, "rhs", b)

    @property
    def dim(self) -> int:
        return self.f.dim

    @property
    def n_per_axis(self) -> int:
        return self.f.n_per_axis

    @property
    def iteration_cap(self) -> int:
        return self.max_iter if self.max_iter is not None else 20 * self.n_per_axis


def harmonic_faces(k: np.ndarray, axis: int) -> np.ndarray:
    """Permeability on the face between cell i and i+1 along ``axis``."""
    kn = np.roll(k, -1, axis=axis)
    return 2.0 * k * kn / (k + kn)


def assemble_operator(u: np.ndarray) -> sparse.csr_matrix:
    """Matrix of the discrete operator p -> -div(e^u grad p), C-order unknowns."""
    u = np.asarray(u, dtype=float)
    d, n = u.ndim, u.shape[0]
    h2 = (1.0 / n) ** 2
    k = np.exp(u)
    idx = np.arange(n**d).reshape(u.shape)
    rows, cols, vals = [], [], []
    diag = np.zeros(u.shape)
    for ax in range(d):
        kf = harmonic_faces(k, ax) / h2
        nb = np.roll(idx, -1, axis=ax)
        rows += [idx.ravel(), nb.ravel()]
        cols += [nb.ravel(), idx.ravel()]
        vals += [-kf.ravel(), -kf.ravel()]
        diag += kf + np.roll(kf, 1, axis=ax)
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    A = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n**d, n**d)
    )
    return A.tocsr()


def apply_operator(u: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Matrix-free -div(e^u grad p) in flux form."""
    d, n = u.ndim, u.shape[0]
    k = np.exp(u)
    out = np.zeros_like(p, dtype=float)
    for ax in range(d):
        flux = -harmonic_faces(k, ax) * (np.roll(p, -1, axis=ax) - p) * n
        out += (flux - np.roll(flux, 1, axis=ax)) * n
    return out


def pcg(A: sparse.spmatrix, b: np.ndarray, tol: float, max_iter: int) -> Tuple[np.ndarray, int, float]:
    """Jacobi-preconditioned CG for a symmetric PSD A with b in its range."""
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0:
        return x, 0, 0.0
    dinv = 1.0 / A.diagonal()
    r = b.copy()
    z = dinv * r
    p = z.copy()
    rz = r @ z
    res = 1.0
    for it in range(1, max_iter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, it, res
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ForwardSolveError(f"CG did not converge in {max_iter} iterations", residual=res, iterations=max_iter)


def _solve_1d_direct(u: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact solve of the 1-d periodic system, vectorised over leading axes.

    Flux F_{i+1/2} = c + h * cumsum(b)_i; c is fixed by periodicity of p.
    """
    n = u.shape[-1]
    h = 1.0 / n
    k = np.exp(u)
    kn = np.roll(k, -1, axis=-1)
    inv_face = (k + kn) / (2.0 * k * kn)
    S = h * np.cumsum(b, axis=-1)
    c = -np.sum(S * inv_face, axis=-1, keepdims=True) / np.sum(inv_face, axis=-1, keepdims=True)
    incr = -h * (c + S) * inv_face  # p_{i+1} - p_i
    p = np.concatenate([np.zeros(incr.shape[:-1] + (1,)), np.cumsum(incr[..., :-1], axis=-1)], axis=-1)
    return p - p.mean(axis=-1, keepdims=True)


def _solve_cg(u: np.ndarray, prob: EllipticProblem) -> np.ndarray:
    b = prob.rhs.ravel()
    if not np.any(b):
        return np.zeros(u.shape)
    A = assemble_operator(u)
    x, it, res = pcg(A, b, prob.solver_tol, prob.iteration_cap)
    log.debug("cg converged in %d iterations, residual %.2e", it, res)
    x = x.reshape(u.shape)
    return x - x.mean()


def solve_batch(u: np.ndarray, prob: EllipticProblem, method: str = "auto") -> np.ndarray:
    """Pressure fields for log-permeabilities ``u`` of shape (..., n, ..., n)."""
    u = np.asarray(u, dtype=float)
    d, n = prob.dim, prob.n_per_axis
    if u.shape[u.ndim - d :] != (n,) * d:
        raise ValueError(f"log-permeability grid {u.shape} does not match problem grid {(n,) * d}")
    if not np.all(np.isfinite(u)):
        raise ValueError("log-permeability must be finite")
    if method not in ("auto", "direct", "cg"):
        raise ValueError(f"unknown method {method!r}")
    if method == "direct" and d != 1:
        raise ValueError("the direct solver is one-dimensional")
    if d == 1 and method in ("auto", "direct"):
        return _solve_1d_direct(u, prob.rhs)
    batch = u.shape[: u.ndim - d]
    flat = u.reshape((-1,) + (n,) * d)
    out = np.stack([_solve_cg(ui, prob) for ui in flat]) if flat.shape[0] else np.zeros(flat.shape)
    return out.reshape(batch + (n,) * d)


def solve_elliptic(u: GridFunction, prob: EllipticProblem, method: str = "auto") -> GridFunction:
    if u.dim != prob.dim or u.n_per_axis != prob.n_per_axis:
        raise ValueError("u and the problem must share the grid")
    return GridFunction(solve_batch(u.values, prob, method=method))


# ---------------------------------------------------------------------------
# observations


@dataclass(frozen=True)
class ObservationSetup:
    points: np.ndarray
    gamma: np.ndarray
    y: Optional[np.ndarray] = None
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            pts = pts.reshape(0, max(pts.shape[-1], 1))
        K = pts.shape[0]
        if np.any(pts <= 0) or np.any(pts > 1):
            raise ValueError("observation points must lie in the torus (0, 1]^d")
        gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float)) if K else np.zeros((0, 0))
        if gamma.shape != (K, K):
            raise ValueError(f"noise covariance must be {K}x{K}, got {gamma.shape}")
        if not np.allclose(gamma, gamma.T, rtol=0, atol=1e-14 * max(1.0, np.abs(gamma).max(initial=0))):
            raise ValueError("noise covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(gamma) if K else np.zeros((0, 0))
        except np.linalg.LinAlgError as exc:
            raise ValueError("noise covariance must be positive definite") from exc
        y = None
        if self.y is not None:
            y = np.asarray(self.y, dtype=float).reshape(K)
            y.setflags(write=False)
        for a in (pts, gamma, chol):
            a.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "chol", chol)
        object.__setattr__(self, "y", y)

    @classmethod
    def isotropic(cls, points, sigma: float, y=None) -> "ObservationSetup":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(pts, sigma**2 * np.eye(pts.shape[0]), y)

    @property
    def K(self) -> int:
        return self.points.shape[0]

    def with_data(self, y) -> "ObservationSetup":
        return ObservationSetup(self.points, self.gamma, y)

    def whiten(self, r: np.ndarray) -> np.ndarray:
        """Gamma^{-1/2} r along the last axis (via the Cholesky factor)."""
        from scipy.linalg import solve_triangular

        r = np.asarray(r, dtype=float)
        if self.K == 0:
            return r
        flat = r.reshape(-1, self.K).T
        return solve_triangular(self.chol, flat, lower=True).T.reshape(r.shape)


def _interp_weights(points: np.ndarray, n: int):
    s = points * n - 0.5
    i0 = np.floor(s).astype(int)
    w = s - i0
    return i0 % n, (i0 + 1) % n, w


def observe_batch(p: np.ndarray, obs: ObservationSetup) -> np.ndarray:
    """Periodic multilinear interpolation of cell-centred values at the points."""
    p = np.asarray(p, dtype=float)
    d = obs.points.shape[1]
    n = p.shape[-1]
    lo, hi, w = _interp_weights(obs.points, n)
    out = np.zeros(p.shape[: p.ndim - d] + (obs.K,))
    for corner in np.ndindex(*(2,) * d):
        idx = tuple(np.where(corner[a], hi[:, a], lo[:, a]) for a in range(d))
        wt = np.prod([np.where(corner[a], w[:, a], 1 - w[:, a]) for a in range(d)], axis=0)
        out += wt * p[(Ellipsis,) + idx]
    return out


def observe(p: GridFunction, obs: ObservationSetup) -> np.ndarray:
    if obs.points.shape[1] != p.dim:
        raise ValueError("observation points and grid dimension differ")
    return observe_batch(p.values, obs)


def forward_batch(
    coefs: np.ndarray,
    prior: PriorParams,
    prob: EllipticProblem,
    obs: ObservationSetup,
    truncation: Optional[int] = None,
    method: str = "auto",
) -> np.ndarray:
    """G(u) (or G(P^M u) when ``truncation`` is M) for coefficient arrays (..., N)."""
    c = np.asarray(coefs, dtype=float)
    if truncation is not None:
        c = project(c, truncation)
    u = synthesize_batch(c, prior.basis, prob.n_per_axis)
    return observe_batch(solve_batch(u, prob, method=method), obs)


def forward_G(c, prior: PriorParams, prob: EllipticProblem, obs: ObservationSetup, truncation: Optional[int] = None) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.ndim != 1:
        raise ValueError("forward_G takes one coefficient vector; use forward_batch")
    return forward_batch(c, prior, prob, obs, truncation)


# ---------------------------------------------------------------------------
# sources


def manufactured_source(n: int, d: int, amplitude: float = 1.0) -> GridFunction:
    """f with exact solution p = amplitude * prod_i sin(2 pi x_i) when u = 0."""
    return GridFunction(d * (2 * np.pi) ** 2 * manufactured_solution(n, d, amplitude))


def manufactured_solution(n: int, d: int, amplitude: float = 1.0) -> np.ndarray:
    xs = cell_centers(n, d)
    out = amplitude * np.ones((n,) * d)
    for x in xs:
        out = out * np.sin(2 * np.pi * x)
    return out


def sine_flux(n: int, d: int, amplitude: float = 1.0) -> Tuple[GridFunction, ...]:
    """g_i = amplitude * sin(2 pi x_i), used to exercise the div g term."""
    xs = cell_centers(n, d)
    return tuple(GridFunction(amplitude * np.sin(2 * np.pi * x)) for x in xs)
