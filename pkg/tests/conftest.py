"""Shared oracles: naive from-scratch GP assembly used to cross-check the engine."""

import numpy as np
import pytest

from regmark.annotation import Annotation
from regmark.kernels import KernelSpec, cross_gram, gram_matrix, kernel_eval


def naive_posterior(spec: KernelSpec, annotations, q):
    """Posterior (mean, cov) at one point, assembled from the closed form.

    Uses dense numpy inversion and explicit block stacking, independent of the
    cached-inverse machinery in DeformationGP.
    """
    q = np.asarray(q, dtype=float)
    prior_cov = kernel_eval(spec, q, q)
    if not annotations:
        return q.copy(), prior_cov
    X = np.stack([a.x for a in annotations])
    Y = np.stack([a.y for a in annotations])
    K_aa = gram_matrix(spec, X, noise=[a.sigma for a in annotations])
    K_x = cross_gram(spec, X, q[None, :])
    K_aa_inv = np.linalg.inv(K_aa)
    mean = q + K_x.T @ K_aa_inv @ (Y - X).reshape(-1)
    cov = prior_cov - K_x.T @ K_aa_inv @ K_x
    return mean, cov


def naive_joint_entropy(spec: KernelSpec, annotations, T):
    """Joint entropy over T from dense closed-form assembly."""
    d = spec.dimension
    T = np.asarray(T, dtype=float)
    K_tt = gram_matrix(spec, T)
    if annotations:
        X = np.stack([a.x for a in annotations])
        K_aa = gram_matrix(spec, X, noise=[a.sigma for a in annotations])
        K_xt = cross_gram(spec, X, T)
        K_tt = K_tt - K_xt.T @ np.linalg.inv(K_aa) @ K_xt
    sign, logdet = np.linalg.slogdet(K_tt)
    return 0.5 * d * T.shape[0] * np.log(2 * np.pi * np.e) + 0.5 * logdet


def random_psd(rng, d, scale=1.0, floor=0.1):
    """Random well-conditioned covariance matrix."""
    A = rng.normal(size=(d, d))
    Q, _ = np.linalg.qr(A)
    eig = rng.uniform(floor, scale, size=d)
    return (Q * eig) @ Q.T


def random_annotations(rng, spec, n, lo=0.0, hi=40.0, noise_scale=1.0):
    out = []
    for _ in range(n):
        x = rng.uniform(lo, hi, size=spec.dimension)
        y = x + rng.normal(0, 1.0, size=spec.dimension)
        out.append(Annotation(x=x, y=y, sigma=random_psd(rng, spec.dimension, noise_scale)))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(0)
