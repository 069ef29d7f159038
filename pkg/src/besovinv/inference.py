"""Gaussian-noise potential, unnormalised posterior and random-walk Metropolis.

Chains move in whitened coordinates xi_l = u_l / gamma_l, so one step size
serves every coefficient; the prior term uses -(1/2) sum |xi_l|^q exactly.
"""
from __future__ import annotations

import hashlib
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .forward import EllipticProblem, ForwardSolveError, ObservationSetup, forward_batch
from .prior import PriorParams, colour, log_prior_density, whiten

log = logging.getLogger(__name__)

ForwardMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class PosteriorSpec:
    """Truncated posterior: prior on N coefficients, forward model and data.

    ``forward`` replaces the elliptic forward map (coefficients (..., N) to
    observations (..., K)); test harnesses use it for linear surrogates.
    """

    prior: PriorParams
    N: int
    obs: ObservationSetup
    prob: Optional[EllipticProblem] = None
    forward_truncation: Optional[int] = None
    forward: Optional[ForwardMap] = field(default=None, compare=False)
    phi_offset: float = 0.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.obs.y is None:
            raise ValueError("the observation setup carries no data y")
        if self.forward_truncation is not None and not 1 <= self.forward_truncation <= self.N:
            raise ValueError(f"forward_truncation must lie in 1..{self.N}")
        if self.forward is None and self.prob is None and self.obs.K > 0:
            raise ValueError("need an elliptic problem or an explicit forward map")

    def forward_map(self, coefs: np.ndarray) -> np.ndarray:
        c = np.asarray(coefs, dtype=float)
        if self.obs.K == 0:
            return np.zeros(c.shape[:-1] + (0,))
        if self.forward is not None:
            if self.forward_truncation is not None:
                c = c.copy()
                c[..., self.forward_truncation :] = 0.0
            return np.asarray(self.forward(c), dtype=float)
        return forward_batch(c, self.prior, self.prob, self.obs, self.forward_truncation)

    def with_truncation(self, M: Optional[int]) -> "PosteriorSpec":
        return replace(self, forward_truncation=M)

    def with_data(self, y) -> "PosteriorSpec":
        return replace(self, obs=self.obs.with_data(y))

    @property
    def data_energy(self) -> float:
        """(1/2) |Gamma^{-1/2} y|^2, the lower bound offset of Phi."""
        wy = self.obs.whiten(self.obs.y)
        return 0.5 * float(wy @ wy)


def phi_from_outputs(G: np.ndarray, spec: PosteriorSpec) -> np.ndarray:
    wr = spec.obs.whiten(spec.obs.y - G)
    out = 0.5 * np.sum(wr * wr, axis=-1) - spec.data_energy + spec.phi_offset
    return out


def potential_phi(c: np.ndarray, spec: PosteriorSpec) -> np.ndarray | float:
    """Phi(u; y) = |Gamma^{-1/2}(y - G(u))|^2 / 2 - |Gamma^{-1/2} y|^2 / 2."""
    out = phi_from_outputs(spec.forward_map(c), spec)
    return float(out) if np.ndim(out) == 0 else out


def log_posterior_unnorm(c: np.ndarray, spec: PosteriorSpec) -> np.ndarray | float:
    return -potential_phi(c, spec) + log_prior_density(c, spec.prior)


def spec_hash(spec: PosteriorSpec) -> str:
    h = hashlib.sha256()
    p = spec.prior
    h.update(repr((p.s, p.q, p.kappa, p.basis.family.value, p.dim, spec.N, spec.forward_truncation)).encode())
    for arr in (spec.obs.points, spec.obs.gamma, spec.obs.y):
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    if spec.prob is not None:
        h.update(np.ascontiguousarray(spec.prob.rhs, dtype="<f8").tobytes())
        h.update(repr(spec.prob.solver_tol).encode())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# random-walk Metropolis


@dataclass(frozen=True)
class ChainState:
    coefs: np.ndarray
    phi: float
    log_prior: float
    rng: np.random.Generator = field(compare=False)
    step: int = 0
    n_accepted: int = 0
    n_failed: int = 0

    @classmethod
    def start(cls, spec: PosteriorSpec, rng: np.random.Generator, coefs=None) -> "ChainState":
        c = np.zeros(spec.N) if coefs is None else np.array(coefs, dtype=float)
        return cls(c, potential_phi(c, spec), log_prior_density(c, spec.prior), rng)

    @property
    def log_target(self) -> float:
        return -self.phi + self.log_prior


def rwm_step(state: ChainState, spec: PosteriorSpec, step_size: float) -> ChainState:
    """One Metropolis step with an isotropic Gaussian proposal in xi-space."""
    if step_size <= 0:
        raise ValueError("step_size must be positive")
    rng = state.rng
    w = rng.standard_normal(state.coefs.shape[-1])
    log_u = np.log(rng.random())
    xi = whiten(state.coefs, spec.prior) + step_size * w
    prop = colour(xi, spec.prior)
    lp = -0.5 * float(np.sum(np.abs(xi) ** spec.prior.q))
    try:
        phi = potential_phi(prop, spec)
    except ForwardSolveError as exc:
        log.info("proposal rejected after solver failure at step %d: %s", state.step + 1, exc)
        return replace(state, step=state.step + 1, n_failed=state.n_failed + 1)
    if np.isfinite(phi) and log_u < (-phi + lp) - state.log_target:
        return replace(state, coefs=prop, phi=phi, log_prior=lp, step=state.step + 1, n_accepted=state.n_accepted + 1)
    return replace(state, step=state.step + 1)


@dataclass
class ChainSummary:
    samples: np.ndarray  # (n_kept, N)
    phi: np.ndarray
    log_prior: np.ndarray
    steps: np.ndarray
    n_steps: int
    n_accepted: int
    n_failed: int
    seed: int
    step_size: float

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_steps

    @property
    def running_means(self) -> np.ndarray:
        return np.cumsum(self.samples, axis=0) / np.arange(1, len(self.samples) + 1)[:, None]

    def merge(self, other: "ChainSummary") -> "ChainSummary":
        """Pool two chains' samples; counters add."""
        return ChainSummary(
            samples=np.concatenate([self.samples, other.samples]),
            phi=np.concatenate([self.phi, other.phi]),
            log_prior=np.concatenate([self.log_prior, other.log_prior]),
            steps=np.concatenate([self.steps, other.steps]),
            n_steps=self.n_steps + other.n_steps,
            n_accepted=self.n_accepted + other.n_accepted,
            n_failed=self.n_failed + other.n_failed,
            seed=self.seed,
            step_size=self.step_size,
        )


def run_chain(
    spec: PosteriorSpec,
    n_steps: int,
    step_size: float,
    seed: int,
    thin: int = 1,
    init: Optional[np.ndarray] = None,
) -> ChainSummary:
    """Run RWM for ``n_steps`` and keep the states after steps thin, 2 thin, ..."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    state = ChainState.start(spec, np.random.default_rng(seed), init)
    n_keep = n_steps // thin
    samples = np.empty((n_keep, spec.N))
    phis = np.empty(n_keep)
    lps = np.empty(n_keep)
    steps = np.empty(n_keep, dtype=int)
    j = 0
    for _ in range(n_steps):
        state = rwm_step(state, spec, step_size)
        if state.step % thin == 0:
            samples[j] = state.coefs
            phis[j] = state.phi
            lps[j] = state.log_prior
            steps[j] = state.step
            j += 1
    out = ChainSummary(samples, phis, lps, steps, n_steps, state.n_accepted, state.n_failed, seed, step_size)
    if not 0.1 <= out.acceptance_rate <= 0.5:
        warnings.warn(f"acceptance rate {out.acceptance_rate:.3f} outside [0.1, 0.5]", stacklevel=2)
    return out


def tune_step_size(
    spec: PosteriorSpec,
    step_size: float,
    seed: int,
    n_trial: int = 200,
    rounds: int = 12,
    target: float = 0.25,
) -> float:
    """Pre-run doubling/halving search for ``target`` acceptance; result is then frozen."""
    h = step_size
    lo, hi = None, None
    state = ChainState.start(spec, np.random.default_rng(seed))
    for _ in range(rounds):
        acc0 = state.n_accepted
        for _ in range(n_trial):
            state = rwm_step(state, spec, h)
        rate = (state.n_accepted - acc0) / n_trial
        if abs(rate - target) < 0.05:
            break
        if rate > target:
            lo = h
            h = 2 * h if hi is None else 0.5 * (h + hi)
        else:
            hi = h
            h = 0.5 * h if lo is None else 0.5 * (h + lo)
    return h
