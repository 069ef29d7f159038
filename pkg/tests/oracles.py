"""Independent reference computations shared by the test modules."""
import math

import numpy as np

from besovinv.forward import ObservationSetup
from besovinv.inference import PosteriorSpec
from besovinv.prior import PriorParams, coefficient_weights

# linear-Gaussian surrogate used for the conjugate checks
CONJ_A = np.array([[0.8, 0.3], [0.2, 1.6]])
CONJ_Y = np.array([1.0, -0.8])
CONJ_SIGMA = 1.0


def conjugate_spec(A=CONJ_A, y=CONJ_Y, sigma=CONJ_SIGMA, s=1.0, kappa=1.0):
    prior = PriorParams(s, 2.0, kappa)
    K = A.shape[0]
    pts = (np.arange(K)[:, None] + 0.5) / K
    obs = ObservationSetup.isotropic(pts, sigma, y)
    return PosteriorSpec(prior, A.shape[1], obs, forward=lambda c: c @ A.T)


def conjugate_posterior(spec, A=CONJ_A):
    """Closed-form Gaussian posterior (mean, covariance) for G(c) = A c."""
    g = coefficient_weights(spec.prior, spec.N)
    C0inv = np.diag(1.0 / g**2)
    Ginv = np.linalg.inv(spec.obs.gamma)
    cov = np.linalg.inv(A.T @ Ginv @ A + C0inv)
    mean = cov @ A.T @ Ginv @ spec.obs.y
    return mean, cov


def gaussian_logpdf(x, mean, cov):
    r = x - mean
    return -0.5 * np.einsum("...i,ij,...j->...", r, np.linalg.inv(cov), r) - 0.5 * math.log(np.linalg.det(2 * np.pi * cov))


def no_data_spec(prior, N):
    obs = ObservationSetup(np.zeros((0, 1)), np.zeros((0, 0)), np.zeros(0))
    return PosteriorSpec(prior, N, obs)
