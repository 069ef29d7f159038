import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from besovinv.basis import BasisSpec, Family
from besovinv.prior import (
    Context,
    PriorParams,
    c0_closed_form,
    c0_quadrature,
    coefficient_weight,
    coefficient_weights,
    colour,
    fernique_constants,
    fernique_rstar,
    kappa_star,
    log_prior_density,
    log_tail_integral,
    norm_Ct_proxy,
    norm_Xtq,
    sample_prior,
    sample_xi,
    whiten,
)


def density_moment(q, power):
    """E|xi|^power under exp(-|x|^q/2), by quadrature of the unnormalised density."""
    f = lambda x: math.exp(-0.5 * x**q)
    z = integrate.quad(f, 0, math.inf, epsrel=1e-12)[0]
    m = integrate.quad(lambda x: x**power * f(x), 0, math.inf, epsrel=1e-12)[0]
    return m / z


@pytest.mark.parametrize("q", [1.0, 1.5, 2.0, 3.0])
def test_moment_oracle_agrees_with_two_over_q(q):
    assert density_moment(q, q) == pytest.approx(2.0 / q, rel=1e-9)


@pytest.mark.parametrize("q", [1.0, 1.5, 2.0, 3.0])
def test_xi_moments(q):
    xi = sample_xi(q, np.random.default_rng(int(10 * q)), size=10**6)
    assert np.mean(np.abs(xi) ** q) == pytest.approx(density_moment(q, q), rel=0.01)
    assert abs(np.mean(xi)) < 0.01


def test_xi_gaussian_and_laplace():
    xi = sample_xi(2.0, np.random.default_rng(1), size=10**6)
    assert abs(xi.mean()) < 0.01 and abs(np.mean(xi**2) - 1) < 0.01
    lap = sample_xi(1.0, np.random.default_rng(2), size=10**6)
    assert abs(np.mean(np.abs(lap)) - 2.0) < 0.02


def test_xi_scalar_and_rejects():
    assert isinstance(sample_xi(1.5, np.random.default_rng(0)), float)
    with pytest.raises(ValueError):
        sample_xi(0.5, np.random.default_rng(0))


def test_coefficient_weights():
    p = PriorParams(1.0, 2.0, 1.0)
    assert coefficient_weight(4, p) == pytest.approx(0.25)
    p3 = PriorParams(0.9, 1.3, 3.0)
    assert coefficient_weight(1, p3) == pytest.approx(3.0 ** (-1 / 1.3))
    s = 1.7
    g = coefficient_weights(PriorParams(s, 2.0, 1.0), 50)
    assert np.allclose(g, np.arange(1, 51) ** (-s))
    assert np.all(np.diff(g) < 0)


def test_prior_variance_gaussian_case():
    s = 1.0
    p = PriorParams(s, 2.0, 1.0)
    c = sample_prior(p, 8, np.random.default_rng(3), size=10**5)
    assert np.allclose(c.var(axis=0), np.arange(1, 9) ** (-2.0 * s), rtol=0.05)


def test_expected_besov_norm():
    N, q, kappa = 1024, 1.5, 2.0
    p = PriorParams(1.0, q, kappa)
    c = sample_prior(p, N, np.random.default_rng(4), size=2000)
    assert np.mean(norm_Xtq(c, 1.0, q, 1) ** q) == pytest.approx(2 * N / (q * kappa), rel=0.02)


def test_sample_prior_single_coefficient():
    p = PriorParams(1.2, 1.5, 2.0)
    a = sample_prior(p, 1, np.random.default_rng(5), size=1000)[:, 0]
    b = coefficient_weight(1, p) * sample_xi(1.5, np.random.default_rng(5), size=(1000, 1))[:, 0]
    assert np.array_equal(a, b)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**63 - 1), st.integers(1, 64))
def test_seed_determinism(seed, N):
    p = PriorParams(1.2, 1.5)
    a = sample_prior(p, N, np.random.default_rng(seed), size=3)
    b = sample_prior(p, N, np.random.default_rng(seed), size=3)
    assert a.tobytes() == b.tobytes()


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(1.0, 4.0), st.floats(0.1, 10.0), st.integers(0, 2**32 - 1))
def test_whiten_colour_inverse(s, q, kappa, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        p = PriorParams(s, q, kappa)
    c = sample_prior(p, 40, np.random.default_rng(seed))
    assert np.allclose(colour(whiten(c, p), p), c)


def test_norm_examples():
    assert norm_Xtq(np.zeros(5), 0.5, 2, 1) == 0.0
    assert norm_Xtq(np.r_[2.0, np.zeros(7)], 0.3, 1.5, 1) == pytest.approx(2.0)
    # u_l = 1/l, t=0.5, q=2, d=1: weights l^(2*0.5 + 1 - 1) = l, so sum l * l^-2 = sum 1/l
    u = 1.0 / np.arange(1, 5)
    assert norm_Xtq(u, 0.5, 2, 1) == pytest.approx(math.sqrt(1 + 1 / 2 + 1 / 3 + 1 / 4), rel=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 100))
def test_norm_monotone_in_N(seed, N):
    c = np.random.default_rng(seed).standard_normal(N)
    vals = [norm_Xtq(c[:n], 0.4, 1.5, 1) for n in range(1, N + 1)]
    assert np.all(np.diff(vals) >= 0)


def test_ct_proxy():
    p = PriorParams(1.2, 1.5)
    assert norm_Ct_proxy(np.zeros(4), 0.3, p) == 0.0
    assert norm_Ct_proxy(np.r_[3.0, np.zeros(7)], 0.9, p) == pytest.approx(3.0)
    with pytest.raises(NotImplementedError):
        norm_Ct_proxy(np.zeros(3), 0.1, PriorParams(1.2, 1.5, basis=BasisSpec(Family.FOURIER, 1)))


@pytest.mark.parametrize("s,q,t,d", [(1.2, 1.5, 0.4, 1), (2.0, 2.0, 0.5, 2), (1.5, 1.0, 0.2, 1)])
def test_ct_proxy_identity(s, q, t, d):
    p = PriorParams(s, q, 1.0, BasisSpec(Family.HAAR, d))
    N = 512
    rng = np.random.default_rng(6)
    xi = sample_xi(q, rng, size=(50, N))
    c = colour(xi, p)
    l = np.arange(1, N + 1)
    other = np.max(l ** ((t - s) / d + 1 / q) * np.abs(xi), axis=-1)
    assert np.allclose(norm_Ct_proxy(c, t, p), other, rtol=1e-12)


def test_log_prior_density():
    p = PriorParams(1.2, 1.5, 1.0)
    assert log_prior_density(np.zeros(10), p) == 0.0
    c = sample_prior(p, 64, np.random.default_rng(7))
    xi = whiten(c, p)
    assert log_prior_density(c, p) == pytest.approx(-0.5 * np.sum(np.abs(xi) ** 1.5), rel=1e-12)
    p2 = PriorParams(1.2, 1.5, 2.0)
    assert log_prior_density(c, p2) == pytest.approx(2 * log_prior_density(c, p), rel=1e-14)


def test_prior_params_validation():
    with pytest.raises(ValueError):
        PriorParams(1.0, 0.9)
    with pytest.raises(ValueError):
        PriorParams(1.0, 2.0, 0.0)
    with pytest.raises(ValueError):
        PriorParams(-1.0, 2.0)
    with pytest.warns(UserWarning):
        PriorParams(0.5, 1.0)


# Fernique constants


@pytest.mark.parametrize("q,d", [(1.0, 1), (1.5, 1), (2.0, 2), (3.0, 3), (1.2, 2)])
def test_c0_quadrature_matches_closed_form(q, d):
    assert c0_quadrature(q, d) == pytest.approx(c0_closed_form(q, d), rel=1e-10)


@pytest.mark.parametrize("r,power,beta", [(0.0, 0.0, 0.8), (3.0, 1.0, 0.5), (50.0, 0.3, 0.3), (1e4, 2.0, 0.2), (1e6, 0.0, 1.5)])
def test_log_tail_integral_closed_form(r, power, beta):
    a = (power + 1) / beta
    w0 = 0.5 * r**beta
    exact = a * math.log(2) - math.log(beta) + special.gammaln(a) + math.log(special.gammaincc(a, w0)) if special.gammaincc(a, w0) > 0 else None
    if exact is None:
        # deep tail: asymptotic log Gamma(a, w0) ~ (a-1) log w0 - w0
        exact = a * math.log(2) - math.log(beta) + (a - 1) * math.log(w0) - w0 + math.log1p((a - 1) / w0)
        assert log_tail_integral(r, power, beta) == pytest.approx(exact, rel=1e-6)
    else:
        assert log_tail_integral(r, power, beta) == pytest.approx(exact, rel=1e-9, abs=1e-9)


def test_fernique_branches():
    assert fernique_constants(2.0, 0.5, 1.5, 1).nu == 0
    assert fernique_constants(2.0, 0.5, 2.0, 1).nu == 1
    assert fernique_constants(3.0, 0.5, 1.75, 1).nu == 1


def test_fernique_regression_pins():
    c = fernique_constants(2.0, 0.5, 1.5, 1)
    assert math.isfinite(c.rstar) and c.rstar > 0
    assert c.r1 == pytest.approx(20.3155, rel=1e-4)
    assert c.cqd == pytest.approx(18.4819, rel=1e-4)
    assert c.rstar == pytest.approx(math.log(2) * max(c.r1, c.cqd))
    assert c.rstar == pytest.approx(14.0816, rel=1e-4)
    c2 = fernique_constants(2.0, 0.5, 2.0, 1)
    assert c2.rstar == pytest.approx(13.8997, rel=1e-4)


def test_r1_satisfies_its_defining_bound():
    s, t, q, d = 2.0, 0.5, 1.5, 1
    c = fernique_constants(s, t, q, d)
    beta = (s - t) / d - 1 / q
    bounds = [c.c01 / (4 * (d + 1)) / (2 ** (k + 1) * math.comb(d, k)) for k in range(d + 1)]
    ok = lambda r: all(log_tail_integral(r, (d - k) * beta, beta) < math.log(bounds[k]) + 1e-9 for k in range(d + 1))
    assert ok(c.r1 * (1 + 1e-8))
    assert not ok(c.r1 * (1 - 1e-4))


def test_r1_monotone_in_gap():
    r1 = [fernique_constants(2.0, t, 1.5, 1).r1 for t in (0.1, 0.3, 0.5, 0.8, 1.0)]
    assert np.all(np.diff(r1) > 0)


def test_fernique_rejects_t_above_threshold():
    with pytest.raises(ValueError):
        fernique_rstar(1.2, 0.6, 1.5, 1)


def test_kappa_star():
    assert kappa_star(0, 5, 5, 1, 10.0, Context.WELL_DEFINED) == 0.0
    r = 14.08
    assert kappa_star(0, 1, 0, 1, r, "well_posed") == pytest.approx(4 * r)
    assert kappa_star(1, 0, 2, 1.5, r, Context.APPROXIMATION) == pytest.approx(2 * 1.5 * r * 5)
    assert kappa_star(0.3, 1, 2, 1, 2 * r, Context.WELL_POSED) == pytest.approx(2 * kappa_star(0.3, 1, 2, 1, r, Context.WELL_POSED))
    with pytest.raises(ValueError):
        kappa_star(-1, 0, 0, 1, r, Context.WELL_DEFINED)
