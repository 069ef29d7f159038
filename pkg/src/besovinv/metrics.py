"""Hellinger estimates between posteriors and prior-moment diagnostics.

Hellinger distances use the prior as reference measure: with M common prior
draws and weights a_i = exp(-Phi_a), b_i = exp(-Phi_b),

    d^2 = 1 - mean(sqrt(a b)) / sqrt(mean(a) mean(b)).
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .basis import synthesize_batch
from .forward import solve_batch
from .inference import ChainSummary, PosteriorSpec, phi_from_outputs
from .prior import PriorParams, norm_Ct_proxy, sample_prior

log = logging.getLogger(__name__)

Potential = Callable[[np.ndarray], np.ndarray]


ESS_WARN = 0.01


class DegenerateEstimateError(ArithmeticError):
    pass


@dataclass(frozen=True)
class HellingerEstimate:
    value: float
    std_error: float
    n_samples: int
    shared_seed: Optional[int] = None
    clamped: bool = False
    ess_fraction: float = 1.0  # smaller effective-sample fraction of the two weight sets

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"Hellinger distance {self.value} outside [0, 1]")
        if self.std_error < 0:
            raise ValueError("negative standard error")


def hellinger_from_potentials(phi_a: np.ndarray, phi_b: np.ndarray, seed: Optional[int] = None) -> HellingerEstimate:
    """Hellinger distance between exp(-phi_a) mu_0 and exp(-phi_b) mu_0 from shared draws."""
    phi_a = np.asarray(phi_a, dtype=float)
    phi_b = np.asarray(phi_b, dtype=float)
    M = phi_a.shape[0]
    if phi_b.shape != phi_a.shape:
        raise ValueError("potentials must be evaluated on the same draws")
    ok = np.isfinite(phi_a) & np.isfinite(phi_b)
    if not np.any(np.isfinite(phi_a)) or not np.any(np.isfinite(phi_b)):
        raise DegenerateEstimateError("every importance weight is zero")

    # normalisation absorbs constants: identical up to a shift means d = 0
    diff = phi_a[ok] - phi_b[ok]
    scale = 1.0 + max(np.abs(phi_a[ok]).max(initial=0.0), np.abs(phi_b[ok]).max(initial=0.0))
    if ok.all() and (diff.size == 0 or np.ptp(diff) <= 1e-13 * scale):
        return HellingerEstimate(0.0, 0.0, M, seed)

    a = _weights(phi_a)
    b = _weights(phi_b)
    ma, mb = a.mean(), b.mean()
    ess = min(_ess_fraction(a), _ess_fraction(b))
    if ess < ESS_WARN:
        log.warning("importance weights degenerate: effective sample fraction %.2e", ess)
    ra, rb = np.sqrt(a / ma), np.sqrt(b / mb)
    if not np.any(ra * rb):
        return HellingerEstimate(1.0, 0.0, M, seed, ess_fraction=ess)
    # 1 - mean(sqrt(ab))/sqrt(mean a mean b) written without cancellation
    D = ra - rb
    d2 = 0.5 * float(np.mean(D * D))
    clamped = False
    if d2 > 1 + 1e-12:
        log.warning("Hellinger estimate clamped: raw d^2 = %.3e", d2)
        clamped = True
    d2 = min(d2, 1.0)

    # delta method via the influence function of d^2 (symmetric in a and b)
    psi = 0.5 * (D * D) - 0.5 * d2 * (ra * ra + rb * rb)
    psi -= psi.mean()
    se2 = float(np.sqrt(np.mean(psi * psi) / M))
    d = float(np.sqrt(d2))
    se = se2 / (2.0 * d) if d > 0 else float(np.sqrt(se2))
    return HellingerEstimate(d, se, M, seed, clamped, ess)


def _ess_fraction(w: np.ndarray) -> float:
    return float(w.sum() ** 2 / (w @ w) / w.size)


def _weights(phi: np.ndarray) -> np.ndarray:
    fin = np.isfinite(phi)
    return np.where(fin, np.exp(-(phi - phi[fin].min())), 0.0)


def hellinger_prior_mc(
    phi_a: Potential,
    phi_b: Potential,
    prior: PriorParams,
    N: int,
    M: int,
    seed: int,
) -> HellingerEstimate:
    """Estimate the Hellinger distance with M common prior draws of N coefficients."""
    if M < 100:
        raise ValueError(f"need at least 100 prior samples, got {M}")
    draws = sample_prior(prior, N, np.random.default_rng(seed), size=M)
    return hellinger_from_potentials(phi_a(draws), phi_b(draws), seed)


# ---------------------------------------------------------------------------
# helpers


def _chunked_forward(spec: PosteriorSpec, draws: np.ndarray, threads: int = 1, chunk: int = 2000) -> np.ndarray:
    """G over many draws; results concatenated in draw order regardless of threads."""
    pieces = [draws[i : i + chunk] for i in range(0, len(draws), chunk)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(spec.forward_map, pieces))
    else:
        outs = [spec.forward_map(p) for p in pieces]
    return np.concatenate(outs, axis=0)


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


@dataclass
class ConvergenceTable:
    N: List[int]
    d: List[float]
    std_error: List[float]
    slope: float
    N_ref: int
    proxy_bias: float
    proxy_bias_se: float
    M: int
    seed: int
    ess_fraction: List[float] = field(default_factory=list)

    def nonincreasing(self, n_se: float = 2.0) -> bool:
        """Each value is at most the previous one plus n_se combined standard errors."""
        return all(
            self.d[i + 1] <= self.d[i] + n_se * np.hypot(self.std_error[i], self.std_error[i + 1])
            for i in range(len(self.d) - 1)
        )

    def rows(self):
        return list(zip(self.N, self.d, self.std_error, self.ess_fraction))


def truncation_convergence(
    spec: PosteriorSpec,
    N_list: Sequence[int],
    M: int,
    seed: int,
    threads: int = 1,
) -> ConvergenceTable:
    """d_Hell(mu^{y,N_ref}, mu^{y,N}) for each N, with N_ref = spec.N, on common draws."""
    N_ref = spec.N
    N_list = [int(n) for n in N_list]
    if max(N_list) > N_ref:
        raise ValueError(f"N_list exceeds the reference truncation {N_ref}")
    if not spec.prior.basis.is_wavelet:
        raise ValueError("truncation rates are stated for wavelet bases")
    if M < 100:
        raise ValueError(f"need at least 100 prior samples, got {M}")
    draws = sample_prior(spec.prior, N_ref, np.random.default_rng(seed), size=M)
    ref_spec = spec.with_truncation(None)
    phi_ref = phi_from_outputs(_chunked_forward(ref_spec, draws, threads), ref_spec)

    def phi_at(n):
        if n == N_ref:
            return phi_ref
        s = spec.with_truncation(n)
        return phi_from_outputs(_chunked_forward(s, draws, threads), s)

    ests = [hellinger_from_potentials(phi_at(n), phi_ref, seed) for n in N_list]
    half = hellinger_from_potentials(phi_at(max(N_ref // 2, 1)), phi_ref, seed)
    ds = [e.value for e in ests]
    slope = loglog_slope(N_list, ds)
    return ConvergenceTable(
        N_list, ds, [e.std_error for e in ests], slope, N_ref, half.value, half.std_error, M, seed, [e.ess_fraction for e in ests]
    )


@dataclass
class LipschitzTable:
    delta: List[float]
    data_distance: List[float]
    d: List[float]
    std_error: List[float]
    ratio: List[float]
    slope: float
    max_ratio: float
    M: int
    seed: int
    ess_fraction: List[float] = field(default_factory=list)


def data_lipschitz(
    spec: PosteriorSpec,
    perturbations: Sequence[float],
    direction: np.ndarray,
    M: int,
    seed: int,
    threads: int = 1,
) -> LipschitzTable:
    """d_Hell(mu^y, mu^{y + delta e}) on common prior draws; G is evaluated once."""
    e = np.asarray(direction, dtype=float)
    if e.shape != (spec.obs.K,):
        raise ValueError(f"direction must have {spec.obs.K} entries")
    if not np.isclose(np.linalg.norm(e), 1.0):
        raise ValueError("direction must be a unit vector")
    pos = [abs(x) for x in perturbations if x != 0]
    if pos and max(pos) / min(pos) < 10:
        raise ValueError("perturbations must span at least a decade")
    draws = sample_prior(spec.prior, spec.N, np.random.default_rng(seed), size=M)
    G = _chunked_forward(spec, draws, threads)
    phi0 = phi_from_outputs(G, spec)
    deltas, dist, ds, ses, ratios, ess = [], [], [], [], [], []
    for delta in perturbations:
        s = spec.with_data(spec.obs.y + delta * e)
        est = hellinger_from_potentials(phi0, phi_from_outputs(G, s), seed)
        dy = float(np.linalg.norm(delta * e))
        deltas.append(float(delta))
        dist.append(dy)
        ds.append(est.value)
        ses.append(est.std_error)
        ess.append(est.ess_fraction)
        ratios.append(est.value / dy if dy > 0 else 0.0)
    slope = loglog_slope(dist, ds)
    return LipschitzTable(deltas, dist, ds, ses, ratios, slope, max(ratios), M, seed, ess)


@dataclass
class MgfRow:
    alpha: float
    mean: float
    drift: float
    stable: bool
    trajectory: np.ndarray = field(repr=False)


def empirical_mgf(
    p: PriorParams,
    t: float,
    alpha_list: Sequence[float],
    N: int,
    M: int,
    seed: int,
    chunk: int = 10000,
    tolerance: float = 0.05,
) -> List[MgfRow]:
    """Running means of exp(alpha ||u||_{C^t}) over M prior draws.

    ``stable`` is true when the running mean moves by less than ``tolerance``
    (relative) over the second half of the draws.
    """
    if t >= p.holder_threshold:
        raise ValueError(f"need t < s - d/q = {p.holder_threshold}")
    rng = np.random.default_rng(seed)
    norms = np.empty(M)
    for i in range(0, M, chunk):
        m = min(chunk, M - i)
        norms[i : i + m] = norm_Ct_proxy(sample_prior(p, N, rng, size=m), t, p)
    rows = []
    counts = np.arange(1, M + 1)
    for alpha in alpha_list:
        vals = np.exp(alpha * norms)
        traj = np.cumsum(vals) / counts
        mean = float(traj[-1])
        drift = abs(mean - float(traj[M // 2 - 1])) / mean
        rows.append(MgfRow(float(alpha), mean, drift, bool(drift < tolerance), traj))
    return rows


@dataclass
class DichotomyTable:
    t: List[float]
    N: List[int]
    medians: np.ndarray  # (len(t), len(N))
    threshold: float

    def relative_change(self, i_t: int, i_from: int = 0, i_to: int = -1) -> float:
        a, b = self.medians[i_t, i_from], self.medians[i_t, i_to]
        return float((b - a) / a)


def prop22_dichotomy(
    p: PriorParams,
    t_list: Sequence[float],
    N_list: Sequence[int],
    M: int,
    seed: int,
) -> DichotomyTable:
    """Median truncated X^{t,q} norms of M prior draws for every (t, N).

    Draws are nested: the N-term truncations share their leading coefficients.
    """
    N_list = sorted(int(n) for n in N_list)
    Nmax = N_list[-1]
    c = sample_prior(p, Nmax, np.random.default_rng(seed), size=M)
    l = np.arange(1, Nmax + 1, dtype=float)
    d, q = p.dim, p.q
    med = np.empty((len(t_list), len(N_list)))
    absq = np.abs(c) ** q
    for i, t in enumerate(t_list):
        partial = np.cumsum(l ** (t * q / d + q / 2 - 1) * absq, axis=-1)
        for j, n in enumerate(N_list):
            med[i, j] = np.median(partial[:, n - 1] ** (1.0 / q))
    return DichotomyTable([float(t) for t in t_list], N_list, med, p.holder_threshold)


# ---------------------------------------------------------------------------
# weak errors


@dataclass
class WeakErrors:
    mean_sup_error: float
    mean_sup_se: float
    cov_diag_sup_error: float
    mean_ref: np.ndarray = field(repr=False)
    mean_N: np.ndarray = field(repr=False)


def pressure_fields(samples: np.ndarray, spec: PosteriorSpec, N: Optional[int] = None) -> np.ndarray:
    c = np.asarray(samples, dtype=float)
    if N is not None:
        c = c[..., :N]
    u = synthesize_batch(c, spec.prior.basis, spec.prob.n_per_axis)
    return solve_batch(u, spec.prob)


def _batch_means_se(x: np.ndarray, n_batches: int = 20) -> np.ndarray:
    n = (len(x) // n_batches) * n_batches
    if n == 0:
        return np.full(x.shape[1:], np.inf)
    bm = x[:n].reshape((n_batches, -1) + x.shape[1:]).mean(axis=1)
    return bm.std(axis=0, ddof=1) / np.sqrt(n_batches)


def weak_errors(spec: PosteriorSpec, N: int, chain_ref: ChainSummary, chain_N: ChainSummary) -> WeakErrors:
    """Sup-norm differences of posterior pressure means and pointwise variances.

    The reference chain targets mu^{y,N_ref}; the second chain targets the
    N-term marginal with forward map G^N.  The pointwise-variance difference
    stands in for the covariance-operator error.
    """
    for ch in (chain_ref, chain_N):
        if not 0.1 <= ch.acceptance_rate <= 0.5:
            warnings.warn(f"chain acceptance {ch.acceptance_rate:.3f} outside [0.1, 0.5]; chain may be unconverged", stacklevel=2)
    p_ref = pressure_fields(chain_ref.samples, spec)
    p_N = pressure_fields(chain_N.samples, spec, N)
    m_ref, m_N = p_ref.mean(axis=0), p_N.mean(axis=0)
    se = np.sqrt(_batch_means_se(p_ref) ** 2 + _batch_means_se(p_N) ** 2)
    return WeakErrors(
        mean_sup_error=float(np.abs(m_ref - m_N).max()),
        mean_sup_se=float(se.max()),
        cov_diag_sup_error=float(np.abs(p_ref.var(axis=0) - p_N.var(axis=0)).max()),
        mean_ref=m_ref,
        mean_N=m_N,
    )
