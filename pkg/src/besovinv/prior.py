"""Besov (kappa, X^{s,q}) measures on truncated coefficient space.

A draw is ``u_l = gamma_l * xi_l`` with ``gamma_l = l**-(s/d + 1/2 - 1/q) * kappa**(-1/q)``
and ``xi_l`` i.i.d. with density proportional to ``exp(-|x|**q / 2)``.
Coefficient vectors are plain float arrays; the last axis is ``l - 1``.
"""
from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
import numpy as np
from scipy import integrate, optimize

from .basis import BasisSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PriorParams:
    s: float
    q: float
    kappa: float = 1.0
    basis: BasisSpec = field(default_factory=BasisSpec)

    def __post_init__(self):
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if self.s <= 0:
            raise ValueError(f"s must be positive, got {self.s}")
        if self.kappa <= 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.s <= self.dim / self.q:
            warnings.warn(
                f"s={self.s} <= d/q={self.dim / self.q}: draws are not continuous functions",
                stacklevel=3,
            )

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def decay(self) -> float:
        """Exponent of l in the coefficient weight."""
        return self.s / self.dim + 0.5 - 1.0 / self.q

    @property
    def holder_threshold(self) -> float:
        """Draws lie in C^t (and X^{t,q}) exactly for t below this value."""
        return self.s - self.dim / self.q


def sample_xi(q: float, rng: np.random.Generator, size=None) -> np.ndarray | float:
    """Draw from the density proportional to exp(-|x|^q / 2).

    |xi| = (2 G)^(1/q) with G ~ Gamma(1/q, 1), times an independent sign.
    """
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    g = rng.standard_gamma(1.0 / q, size=size)
    sign = np.where(rng.random(size=size) < 0.5, -1.0, 1.0)
    out = sign * (2.0 * g) ** (1.0 / q)
    return float(out) if size is None else out


def coefficient_weights(p: PriorParams, N: int) -> np.ndarray:
    l = np.arange(1, N + 1, dtype=float)
    return l ** (-p.decay) * p.kappa ** (-1.0 / p.q)


def coefficient_weight(l: int, p: PriorParams) -> float:
    return float(l ** (-p.decay) * p.kappa ** (-1.0 / p.q))


def sample_prior(p: PriorParams, N: int, rng: np.random.Generator, size=None) -> np.ndarray:
    """Coefficient vector(s) of a prior draw truncated to N terms.

    ``size`` adds leading batch dimensions (``size=M`` gives shape (M, N)).
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    shape = (N,) if size is None else tuple(np.atleast_1d(size)) + (N,)
    return coefficient_weights(p, N) * sample_xi(p.q, rng, size=shape)


def whiten(c: np.ndarray, p: PriorParams) -> np.ndarray:
    """xi_l = u_l / gamma_l."""
    c = np.asarray(c, dtype=float)
    return c / coefficient_weights(p, c.shape[-1])


def colour(xi: np.ndarray, p: PriorParams) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return xi * coefficient_weights(p, xi.shape[-1])


def norm_Xtq(c: np.ndarray, t: float, q: float, d: int) -> np.ndarray | float:
    """Truncated X^{t,q} norm (sum_l l^(tq/d + q/2 - 1) |c_l|^q)^(1/q) along the last axis."""
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    c = np.asarray(c, dtype=float)
    l = np.arange(1, c.shape[-1] + 1, dtype=float)
    total = np.sum(l ** (t * q / d + q / 2 - 1) * np.abs(c) ** q, axis=-1)
    out = total ** (1.0 / q)
    return float(out) if np.ndim(out) == 0 else out


def norm_Ct_proxy(c: np.ndarray, t: float, p: PriorParams) -> np.ndarray | float:
    """Coefficient form of the B^t_{inf,inf} norm: sup_l l^(t/d + 1/2) |c_l|.

    Only meaningful for wavelet bases.
    """
    if not p.basis.is_wavelet:
        raise NotImplementedError("the C^t coefficient norm is a wavelet identity; Fourier is unsupported")
    c = np.asarray(c, dtype=float)
    l = np.arange(1, c.shape[-1] + 1, dtype=float)
    out = np.max(l ** (t / p.dim + 0.5) * np.abs(c), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def log_prior_density(c: np.ndarray, p: PriorParams) -> np.ndarray | float:
    """Unnormalised log-density -(kappa/2) ||c||^q_{X^{s,q}} of the first N coefficients."""
    c = np.asarray(c, dtype=float)
    l = np.arange(1, c.shape[-1] + 1, dtype=float)
    q = p.q
    out = -0.5 * p.kappa * np.sum(l ** (q * p.s / p.dim + q / 2 - 1) * np.abs(c) ** q, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Fernique constants


@dataclass(frozen=True)
class FerniqueConstants:
    c0: float  # integral of exp(-|x|^q/2) over R^d
    cd: float  # surface area of the unit sphere in R^d
    c01: float
    nu: int
    cqd: float
    r1: float
    rstar: float


def sphere_area(d: int) -> float:
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def c0_closed_form(q: float, d: int) -> float:
    return sphere_area(d) * 2.0 ** (d / q) * math.gamma(d / q) / q


def c0_quadrature(q: float, d: int) -> float:
    val, _ = integrate.quad(lambda r: r ** (d - 1) * math.exp(-0.5 * r**q), 0, math.inf, epsabs=0, epsrel=1e-12)
    return sphere_area(d) * val


def log_tail_integral(r: float, power: float, beta: float) -> float:
    """log of int_r^inf x^power exp(-x^beta / 2) dx, by adaptive quadrature.

    With w = x^beta / 2 the integral is 2^a / beta * int_{w0}^inf w^(a-1) e^-w dw,
    a = (power + 1) / beta; the integrand is rescaled by its maximum on
    [w0, inf) so that large exponents neither overflow nor underflow.
    """
    a = (power + 1.0) / beta
    w0 = 0.5 * r**beta
    w_peak = max(w0, a - 1.0)
    logf = lambda w: (a - 1.0) * math.log(w) - w if w > 0 else (-math.inf if a > 1 else 0.0)
    peak = logf(w_peak) if w_peak > 0 else 0.0
    width = math.sqrt(max(a, 1.0))
    pts = [w0, max(w0, w_peak - 10 * width), w_peak + 10 * width]
    f = lambda w: math.exp(logf(w) - peak)
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi > lo:
            total += integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-10, limit=200)[0]
    total += integrate.quad(f, pts[-1], math.inf, epsabs=1e-14, epsrel=1e-10, limit=200)[0]
    return a * math.log(2.0) - math.log(beta) + peak + math.log(total)


def fernique_constants(s: float, t: float, q: float, d: int) -> FerniqueConstants:
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    if t >= s - d / q:
        raise ValueError(f"need t < s - d/q, got t={t}, s - d/q={s - d / q}")
    cd = sphere_area(d)
    c0 = c0_quadrature(q, d)
    c01 = 2.0**d * math.gamma(d)

    if q < 1.75:
        nu, cqd = 0, (2.0**d * q * c0 / cd) ** (1.0 / (d - q + 1))
    else:
        nu, cqd = 1, max(1.0, 2.0 ** (d + 2) * q * c0 / cd)

    beta = (s - t) / d - 1.0 / q
    r1 = 0.0
    for k in range(d + 1):
        bound = c01 / (4 * (d + 1)) / (2 ** (k + 1) * math.comb(d, k))
        power = (d - k) * beta
        g = lambda r: log_tail_integral(r, power, beta) - math.log(bound)
        if g(0.0) < 0:
            continue
        hi = 1e6
        while g(hi) >= 0:
            hi *= 10.0
            if hi > 1e300:
                raise ArithmeticError(f"r_1 exceeds 1e300 for beta={beta}")
        rk = optimize.bisect(g, 0.0, hi, xtol=1e-12, rtol=1e-10, maxiter=2000)
        r1 = max(r1, rk)

    rstar = math.log(2.0) * max(r1, cqd)
    return FerniqueConstants(c0=c0, cd=cd, c01=c01, nu=nu, cqd=cqd, r1=r1, rstar=rstar)


def fernique_rstar(s: float, t: float, q: float, d: int) -> float:
    return fernique_constants(s, t, q, d).rstar


class Context(str, enum.Enum):
    WELL_DEFINED = "well_defined"
    WELL_POSED = "well_posed"
    APPROXIMATION = "approximation"


def kappa_star(alpha1: float, alpha2: float, alpha3: float, c_e: float, rstar: float, context) -> float:
    """Threshold on kappa above which the posterior results apply."""
    if min(alpha1, alpha2, alpha3, c_e, rstar) < 0:
        raise ValueError("kappa_star inputs must be nonnegative")
    context = Context(context)
    if context is Context.WELL_DEFINED:
        a = alpha1
    elif context is Context.WELL_POSED:
        a = alpha1 + 2 * alpha2
    else:
        a = alpha1 + 2 * alpha3
    return 2.0 * c_e * rstar * a
