"""Named experiments: build objects from a config, run, write artifacts."""
from __future__ import annotations

import logging
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .artifacts import (
    sha256_file,
    write_chain,
    write_csv,
    write_grid_binary,
    write_grid_csv,
    write_json,
)
from .basis import GridFunction, synthesize, synthesize_batch
from .config import Experiment, ExperimentConfig
from .forward import (
    EllipticProblem,
    ObservationSetup,
    manufactured_solution,
    manufactured_source,
    observe_batch,
    sine_flux,
    solve_batch,
    solve_elliptic,
)
from .inference import PosteriorSpec, run_chain, spec_hash, tune_step_size
from .metrics import (
    data_lipschitz,
    empirical_mgf,
    prop22_dichotomy,
    truncation_convergence,
    weak_errors,
)
from .prior import fernique_constants, sample_prior

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# builders


def build_problem(cfg: ExperimentConfig, n: Optional[int] = None) -> EllipticProblem:
    n = n or cfg.grid.n_per_axis
    d = cfg.prior.dim
    fc = cfg.forcing
    if fc.f == "manufactured":
        f = manufactured_source(n, d, fc.f_amplitude)
    else:
        f = GridFunction(np.zeros((n,) * d))
    g = sine_flux(n, d, fc.g_amplitude) if fc.g == "sine" else None
    return EllipticProblem(f, g, solver_tol=cfg.grid.solver_tol)


def build_points(cfg: ExperimentConfig) -> np.ndarray:
    o, d = cfg.observation, cfg.prior.dim
    if o.points is not None:
        return np.asarray(o.points, dtype=float).reshape(-1, d)
    K = o.n_points
    if d == 1:
        return ((np.arange(K) + 0.5) / K)[:, None]
    k = round(K ** (1.0 / d))
    if k**d != K:
        raise ValueError(f"n_points={K} is not a perfect {d}-th power; list points explicitly")
    axis = (np.arange(k) + 0.5) / k
    return np.stack([m.ravel() for m in np.meshgrid(*([axis] * d), indexing="ij")], axis=1)


def build_gamma(cfg: ExperimentConfig, K: int) -> np.ndarray:
    o = cfg.observation
    if o.gamma is not None:
        return np.asarray(o.gamma, dtype=float)
    return o.sigma**2 * np.eye(K)


def generate_synthetic_data(cfg: ExperimentConfig, N: Optional[int] = None):
    """Noisy observations of a prior draw, solved on a finer grid than inversions use.

    The truth uses twice the grid resolution and four times the truncation
    (capped by the finer grid).  Returns (y, truth_record).
    """
    prior = cfg.prior.build()
    d = cfg.prior.dim
    N = N or cfg.sampling.N_ref or cfg.sampling.N
    n_fine = 2 * cfg.grid.n_per_axis
    o = cfg.observation
    if o.truth_coefs is not None:
        truth = np.asarray(o.truth_coefs, dtype=float)
        truth_src = "config"
    else:
        n_truth = min(4 * N, n_fine**d)
        seed = o.truth_seed if o.truth_seed is not None else [cfg.seed, 1]
        truth = sample_prior(prior, n_truth, np.random.default_rng(seed))
        truth_src = f"prior draw, seed {seed}"
    prob = build_problem(cfg, n_fine)
    points = build_points(cfg)
    gamma = build_gamma(cfg, len(points))
    u = synthesize_batch(truth, prior.basis, n_fine)
    g_true = observe_batch(solve_batch(u, prob), ObservationSetup(points, gamma))
    noise = np.random.default_rng([cfg.seed, 2]).multivariate_normal(np.zeros(len(points)), gamma, method="cholesky")
    y = g_true + noise
    record = {
        "truth_coefs": truth,
        "truth_source": truth_src,
        "n_truth": len(truth),
        "grid_n_per_axis": n_fine,
        "noiseless": g_true,
        "y": y,
        "points": points,
        "noise_seed": [cfg.seed, 2],
    }
    return y, record


def build_spec(cfg: ExperimentConfig, N: Optional[int] = None, y=None) -> PosteriorSpec:
    N = N or cfg.sampling.N
    prior = cfg.prior.build()
    points = build_points(cfg)
    gamma = build_gamma(cfg, len(points))
    if y is None:
        y = cfg.observation.y if cfg.observation.y is not None else generate_synthetic_data(cfg, N)[0]
    return PosteriorSpec(prior, N, ObservationSetup(points, gamma, y), build_problem(cfg))


# ---------------------------------------------------------------------------
# runners; each writes artifacts into ``out`` and returns a summary dict


def _sample_prior(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    prior = cfg.prior.build()
    N, M = cfg.sampling.N, cfg.sampling.M
    c = sample_prior(prior, N, np.random.default_rng(cfg.seed), size=M)
    write_csv(out / "coefs.csv", ["sample"] + [f"coef_{l}" for l in range(1, N + 1)], ([i, *row] for i, row in enumerate(c)))
    summary = {"N": N, "M": M}
    n = cfg.grid.n_per_axis
    if N <= n**cfg.prior.dim:
        u = synthesize(c[0], prior.basis, n)
        write_grid_csv(out / "field.csv", u)
        write_grid_binary(out / "field.bin", u)
        summary["field_sup"] = float(np.abs(u.values).max())
    return summary


def _solve_forward(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    d = cfg.prior.dim
    ns = cfg.grid.n_list or [cfg.grid.n_per_axis]
    prior = cfg.prior.build()
    coefs = None
    if cfg.forcing.u == "prior_draw":
        coefs = sample_prior(prior, cfg.sampling.N, np.random.default_rng(cfg.seed))
    exact = cfg.forcing.u == "zero" and cfg.forcing.f == "manufactured" and cfg.forcing.g == "zero"
    rows = []
    for n in ns:
        prob = build_problem(cfg, n)
        u = GridFunction(np.zeros((n,) * d)) if coefs is None else synthesize(coefs, prior.basis, n)
        p = solve_elliptic(u, prob)
        write_grid_csv(out / f"pressure_n{n}.csv", p)
        write_grid_binary(out / f"pressure_n{n}.bin", p)
        err = float(np.abs(p.values - manufactured_solution(n, d, cfg.forcing.f_amplitude)).max()) if exact else float("nan")
        rows.append((n, err, float(np.abs(p.values).max())))
    write_csv(out / "forward.csv", ["n_per_axis", "max_error", "sup_pressure"], rows)
    ratios = [rows[i][1] / rows[i + 1][1] for i in range(len(rows) - 1)] if exact else []
    return {"n": ns, "max_error": [r[1] for r in rows], "error_ratios": ratios}


def _make_data(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    y, rec = generate_synthetic_data(cfg)
    pts = rec["points"]
    write_csv(
        out / "data.csv",
        [f"x{i + 1}" for i in range(pts.shape[1])] + ["y", "noiseless"],
        ([*pts[j], y[j], rec["noiseless"][j]] for j in range(len(y))),
    )
    write_json(out / "truth.json", rec)
    return {"K": len(y)}


def _data(cfg: ExperimentConfig, out: Path, N: int):
    if cfg.observation.y is not None:
        return np.asarray(cfg.observation.y, dtype=float)
    y, rec = generate_synthetic_data(cfg, N)
    write_json(out / "truth.json", rec)
    return y


def _run_chain(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    N = cfg.sampling.N
    spec = build_spec(cfg, N, _data(cfg, out, N))
    m = cfg.mcmc
    h = tune_step_size(spec, m.step_size, cfg.seed + 1) if m.tune else m.step_size
    chain = run_chain(spec, m.n_steps, h, cfg.seed, m.thin)
    write_chain(out / "chain.csv", chain, spec_hash(spec))
    return {"acceptance": chain.acceptance_rate, "step_size": h, "n_failed": chain.n_failed}


def _truncation_convergence(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    N_ref = cfg.sampling.N_ref or cfg.sampling.N
    spec = build_spec(cfg, N_ref, _data(cfg, out, N_ref))
    tab = truncation_convergence(spec, cfg.lists.N_list, cfg.sampling.M, cfg.seed, threads)
    write_csv(out / "convergence.csv", ["N", "d_hell", "std_error", "ess_fraction"], tab.rows())
    summary = {
        "slope": tab.slope,
        "rate_bound": -cfg.sampling.t / cfg.prior.dim,
        "nonincreasing_2se": tab.nonincreasing(2.0),
        "N_ref": N_ref,
        "proxy_bias": tab.proxy_bias,
        "proxy_bias_se": tab.proxy_bias_se,
        "M": tab.M,
    }
    write_json(out / "convergence.json", summary)
    return summary


def _data_lipschitz(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    N = cfg.sampling.N
    spec = build_spec(cfg, N, _data(cfg, out, N))
    # perturb the first observation: the all-ones direction is nearly blind
    # to mean-zero pressures sampled on a uniform point set
    e = np.zeros(spec.obs.K)
    e[0] = 1.0
    tab = data_lipschitz(spec, cfg.lists.delta_list, e, cfg.sampling.M, cfg.seed, threads)
    write_csv(
        out / "lipschitz.csv",
        ["delta", "data_distance", "d_hell", "std_error", "ratio", "ess_fraction"],
        zip(tab.delta, tab.data_distance, tab.d, tab.std_error, tab.ratio, tab.ess_fraction),
    )
    summary = {"slope": tab.slope, "max_ratio": tab.max_ratio, "direction": e, "M": tab.M}
    write_json(out / "lipschitz.json", summary)
    return summary


def _fernique(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    p = cfg.prior
    prior = p.build()
    t = cfg.sampling.t
    consts = fernique_constants(p.s, t, p.q, p.dim)
    alphas = cfg.lists.alpha_list or [0.0, p.kappa / (4 * consts.rstar)]
    rows = empirical_mgf(prior, t, alphas, cfg.sampling.N, cfg.sampling.M, cfg.seed)
    write_csv(out / "fernique.csv", ["alpha", "mean", "drift", "stable"], ((r.alpha, r.mean, r.drift, int(r.stable)) for r in rows))
    summary = {
        "c0": consts.c0,
        "cd": consts.cd,
        "c01": consts.c01,
        "nu": consts.nu,
        "cqd": consts.cqd,
        "r1": consts.r1,
        "rstar": consts.rstar,
        "alpha_bound": p.kappa / (2 * consts.rstar),
        "all_stable": all(r.stable for r in rows),
    }
    write_json(out / "fernique.json", summary)
    return summary


def _prop22(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    prior = cfg.prior.build()
    tab = prop22_dichotomy(prior, cfg.lists.t_list, cfg.lists.N_list, cfg.sampling.M, cfg.seed)
    write_csv(
        out / "prop22.csv",
        ["t", "N", "median_norm"],
        ((t, n, tab.medians[i, j]) for i, t in enumerate(tab.t) for j, n in enumerate(tab.N)),
    )
    summary = {
        "threshold": tab.threshold,
        "relative_change": {str(t): tab.relative_change(i) for i, t in enumerate(tab.t)},
    }
    write_json(out / "prop22.json", summary)
    return summary


def _weak_errors(cfg: ExperimentConfig, out: Path, threads: int) -> dict:
    N_ref = cfg.sampling.N_ref or cfg.sampling.N
    y = _data(cfg, out, N_ref)
    spec_ref = build_spec(cfg, N_ref, y)
    m = cfg.mcmc
    h = tune_step_size(spec_ref, m.step_size, cfg.seed + 1) if m.tune else m.step_size
    ref = run_chain(spec_ref, m.n_steps, h, cfg.seed, m.thin)
    write_chain(out / f"chain_N{N_ref}.csv", ref, spec_hash(spec_ref))
    rows = []
    for i, N in enumerate(cfg.lists.N_list):
        spec_N = build_spec(cfg, N, y)
        hN = tune_step_size(spec_N, m.step_size, cfg.seed + 1) if m.tune else m.step_size
        ch = ref if N == N_ref else run_chain(spec_N, m.n_steps, hN, cfg.seed + 2 + i, m.thin)
        if N != N_ref:
            write_chain(out / f"chain_N{N}.csv", ch, spec_hash(spec_N))
        w = weak_errors(spec_ref, N, ref, ch)
        rows.append((N, w.mean_sup_error, w.mean_sup_se, w.cov_diag_sup_error))
    write_csv(out / "weak_errors.csv", ["N", "mean_sup_error", "mean_sup_se", "var_sup_error"], rows)
    return {"rows": rows}


RUNNERS = {
    Experiment.SAMPLE_PRIOR: _sample_prior,
    Experiment.SOLVE_FORWARD: _solve_forward,
    Experiment.RUN_CHAIN: _run_chain,
    Experiment.TRUNCATION_CONVERGENCE: _truncation_convergence,
    Experiment.DATA_LIPSCHITZ: _data_lipschitz,
    Experiment.FERNIQUE_CHECK: _fernique,
    Experiment.PROP22_CHECK: _prop22,
    Experiment.WEAK_ERRORS: _weak_errors,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None, threads: int = 1, make_data_only: bool = False) -> dict:
    """Run the configured experiment and write a manifest next to its artifacts."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    runner = _make_data if make_data_only else RUNNERS[cfg.experiment]
    summary = runner(cfg, out, threads)
    wall = time.perf_counter() - start
    (out / "config.yaml").write_text(cfg.dumps())
    files = sorted(p for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    write_json(
        out / "manifest.json",
        {
            "experiment": "MakeData" if make_data_only else cfg.experiment.value,
            "config": cfg.to_dict(),
            "config_hash": cfg.digest(),
            "code_version": __version__,
            "wall_time_s": wall,
            "threads": threads,
            "artifacts": {p.name: sha256_file(p) for p in files},
            "summary": summary,
        },
    )
    return summary
