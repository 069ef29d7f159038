import warnings
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from besovinv.config import ConfigError, Experiment, ExperimentConfig, load_config, parse_config

CONFIG_DIR = Path(__file__).resolve().parents[1] / "scripts" / "configs"

BASE = """
experiment: TruncationConvergence
seed: 3
prior: {s: 1.2, q: 1.5, kappa: 1.0, dim: 1, basis: haar}
sampling: {N: 64, N_ref: 64, M: 500, t: 0.4}
lists: {N_list: [8, 16]}
"""


def parse_quiet(text):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return parse_config(text)


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.yaml")), ids=lambda p: p.stem)
def test_shipped_configs_parse_and_roundtrip(path):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cfg = load_config(path)
        again = parse_config(cfg.dumps())
    assert again == cfg
    assert again.dumps() == cfg.dumps()


@settings(max_examples=30, deadline=None)
@given(
    st.sampled_from(list(Experiment)),
    st.integers(0, 2**31),
    st.floats(1.0, 3.0),
    st.floats(2.0, 4.0),
    st.lists(st.integers(1, 64), min_size=1, max_size=4),
)
def test_roundtrip_property(exp, seed, q, s, nlist):
    text = f"""
experiment: {exp.value}
seed: {seed}
prior: {{s: {s!r}, q: {q!r}}}
sampling: {{N: 64, N_ref: 64, t: 0.1}}
lists: {{N_list: {nlist}, t_list: [0.1, 2.0], delta_list: [0.001, 0.1]}}
"""
    cfg = parse_quiet(text)
    assert parse_quiet(cfg.dumps()) == cfg


def test_defaults_and_types():
    cfg = parse_quiet(BASE)
    assert cfg.experiment is Experiment.TRUNCATION_CONVERGENCE
    assert cfg.grid.n_per_axis == 256 and cfg.observation.sigma == 0.1
    assert isinstance(cfg.prior.s, float)


def test_digest_ignores_output_dir():
    a = parse_quiet(BASE)
    b = parse_quiet(BASE + "output_dir: elsewhere\n")
    c = parse_quiet(BASE.replace("seed: 3", "seed: 4"))
    assert a.digest() == b.digest() != c.digest()


def test_seed_required():
    with pytest.raises(ConfigError, match="seed: required"):
        parse_quiet(BASE.replace("seed: 3\n", ""))


def test_unknown_field_named():
    with pytest.raises(ConfigError, match=r"prior: unknown field\(s\) \['sigma'\]"):
        parse_quiet(BASE.replace("basis: haar}", "basis: haar, sigma: 1}"))


def test_wrong_type_names_path():
    with pytest.raises(ConfigError, match=r"sampling\.M: expected an integer"):
        parse_quiet(BASE.replace("M: 500", "M: lots"))
    with pytest.raises(ConfigError, match=r"lists\.N_list\[1\]"):
        parse_quiet(BASE.replace("[8, 16]", "[8, x]"))


def test_yaml_error_reports_line():
    with pytest.raises(ConfigError, match="line 5, column 5"):
        parse_config("experiment: SamplePrior\nseed: 1\nprior:\n  s: 1\n   q: 2\n")


def test_exponent_literals_without_dot():
    cfg = parse_quiet(BASE + "observation: {sigma: 1e-12}\n")
    assert cfg.observation.sigma == 1e-12
    with pytest.raises(ConfigError, match="observation.sigma"):
        parse_quiet(BASE + "observation: {sigma: tiny}\n")


def test_unknown_experiment():
    with pytest.raises(ConfigError, match="not one of"):
        parse_quiet(BASE.replace("TruncationConvergence", "Nope"))


def test_rejects_t_at_or_above_threshold():
    with pytest.raises(ConfigError, match="s - d/q"):
        parse_quiet(BASE.replace("t: 0.4", "t: 0.6"))


def test_rejects_haar_t_at_least_one():
    text = BASE.replace("s: 1.2", "s: 3.0").replace("t: 0.4", "t: 1.0")
    with pytest.raises(ConfigError, match="Haar"):
        parse_quiet(text)


@pytest.mark.parametrize(
    "old,new,msg",
    [
        ("kappa: 1.0", "kappa: 0.0", "prior.kappa"),
        ("M: 500", "M: 0", "sampling.M"),
        ("seed: 3", "seed: 3\ngrid: {solver_tol: -1.0}", "grid.solver_tol"),
        ("seed: 3", "seed: 3\ngrid: {n_per_axis: 100}", "powers of two"),
        ("seed: 3", "seed: 3\nobservation: {sigma: 0.0}", "observation.sigma"),
        ("seed: 3", "seed: 3\nmcmc: {step_size: 0.0}", "mcmc.step_size"),
        ("[8, 16]", "[8, 128]", "N_ref"),
        ("q: 1.5", "q: 0.5", "prior.q"),
    ],
)
def test_positivity_and_ranges(old, new, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_quiet(BASE.replace(old, new))


def test_list_requirements():
    with pytest.raises(ConfigError, match="N_list"):
        parse_quiet(BASE.replace("lists: {N_list: [8, 16]}", ""))
    with pytest.raises(ConfigError, match="delta_list"):
        parse_quiet("experiment: DataLipschitz\nseed: 1\n")
    with pytest.raises(ConfigError, match="t_list"):
        parse_quiet("experiment: Prop22Check\nseed: 1\nlists: {N_list: [4]}\n")


def test_solver_dimension_check():
    with pytest.raises(ConfigError, match="d in"):
        parse_quiet("experiment: SolveForward\nseed: 1\nprior: {s: 3.0, dim: 3}\n")


def test_kappa_warning_for_non_gaussian_priors():
    with pytest.warns(UserWarning, match="kappa"):
        parse_config(BASE)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        parse_config(BASE.replace("q: 1.5", "q: 2.0").replace("t: 0.4", "t: 0.3"))
        parse_config("experiment: SamplePrior\nseed: 1\n")


def test_prior_build():
    cfg = parse_quiet(BASE)
    p = cfg.prior.build()
    assert (p.s, p.q, p.kappa, p.dim) == (1.2, 1.5, 1.0, 1)


def test_validate_is_explicit_for_constructed_configs():
    cfg = ExperimentConfig(Experiment.PROP22_CHECK, seed=1)
    with pytest.raises(ConfigError):
        cfg.validate()
