"""Gaussian-process posterior over a deformation field.

The estimator follows the scikit-learn conventions (fit/predict/get_params)
while also supporting incremental conditioning: ``add_annotation`` returns a
new fitted estimator whose cached inverse Gram matrix is updated through the
Schur complement of the appended block rather than re-inverted from scratch.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import kernels
from .annotation import Annotation, annotations_from_json, annotations_to_json
from .kernels import KernelSpec
from .linalg import block_inverse_update, cholesky_jittered, inv_psd, logdet_psd
from .validation import ValidationError, as_point, as_points

LOG_2PIE = math.log(2.0 * math.pi * math.e)


@dataclass(frozen=True)
class PosteriorGaussian:
    """Posterior marginal of the deformation at one point."""

    mean: np.ndarray
    cov: np.ndarray


def _clip_psd(cov: np.ndarray) -> np.ndarray:
    """Symmetrize and clip eigenvalues at zero."""
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    if w[0] >= 0:
        return cov
    return (V * np.maximum(w, 0.0)) @ V.T


class DeformationGP(BaseEstimator):
    """GP model of a deformation, conditioned on noisy landmark annotations.

    Parameters
    ----------
    kernel : KernelSpec
        Multi-scale radial-basis kernel bundle.
    mean : "identity" or callable
        Prior mean transformation; the identity corresponds to a prior
        centered on zero displacement.
    """

    def __init__(self, kernel: KernelSpec | None = None, mean="identity"):
        self.kernel = kernel
        self.mean = mean
        self._annotations: list[Annotation] = []
        self._inv_kaa = np.zeros((0, 0))

    # --- parameters and state ------------------------------------------------

    @property
    def spec(self) -> KernelSpec:
        return self.kernel if self.kernel is not None else KernelSpec()

    @property
    def dimension(self) -> int:
        return self.spec.dimension

    @property
    def annotations(self) -> tuple[Annotation, ...]:
        return tuple(self._annotations)

    @property
    def n_annotations(self) -> int:
        return len(self._annotations)

    @property
    def inv_kaa(self) -> np.ndarray:
        """Cached inverse of the noisy Gram matrix (read-only view)."""
        view = self._inv_kaa.view()
        view.flags.writeable = False
        return view

    def mean_fn(self, X: np.ndarray) -> np.ndarray:
        X = as_points(X, self.dimension)
        if self.mean == "identity":
            return X
        return np.stack([np.asarray(self.mean(x), dtype=float) for x in X])

    # --- fitting --------------------------------------------------------------

    def fit(self, X, Y, sigma=None):
        """Condition on annotations given as arrays.

        X, Y : (L, d) queried and annotated locations; sigma : (L, d, d)
        per-annotation covariances (identity * SIGMA_MIN**2 floor if omitted).
        """
        from .validation import SIGMA_MIN

        X = as_points(X, self.dimension)
        Y = as_points(Y, self.dimension)
        if X.shape != Y.shape:
            raise ValidationError("X and Y must have identical shapes")
        d = self.dimension
        if sigma is None:
            sigma = np.broadcast_to(SIGMA_MIN**2 * np.eye(d), (X.shape[0], d, d))
        annotations = [Annotation(x=x, y=y, sigma=s) for x, y, s in zip(X, Y, sigma)]
        return self.fit_annotations(annotations)

    def fit_annotations(self, annotations):
        """Condition on a list of Annotation triplets (replaces any previous fit)."""
        self._annotations = list(annotations)
        if self._annotations:
            X = np.stack([a.x for a in self._annotations])
            sigmas = [a.sigma for a in self._annotations]
            self._inv_kaa = inv_psd(kernels.gram_matrix(self.spec, X, noise=sigmas))
        else:
            self._inv_kaa = np.zeros((0, 0))
        return self

    def add_annotation(self, a: Annotation) -> "DeformationGP":
        """Return a new session with the annotation appended.

        The cached inverse is extended via the Schur complement of the new
        d x d block; the receiver is left untouched.
        """
        if a.dimension != self.dimension:
            raise ValidationError("annotation dimension does not match the kernel")
        out = copy.copy(self)
        out._annotations = self._annotations + [a]
        if self.n_annotations == 0:
            out._inv_kaa = inv_psd(kernels.kernel_eval(self.spec, a.x, a.x) + a.sigma)
        else:
            X = np.stack([ann.x for ann in self._annotations])
            B = kernels.cross_gram(self.spec, X, a.x[None, :])
            C = kernels.kernel_eval(self.spec, a.x, a.x) + a.sigma
            out._inv_kaa = block_inverse_update(self._inv_kaa, B, C)
        return out

    # --- posterior queries ------------------------------------------------------

    def _data_arrays(self):
        X = np.stack([a.x for a in self._annotations])
        Y = np.stack([a.y for a in self._annotations])
        return X, Y

    def posterior_mean(self, Q) -> np.ndarray:
        """Posterior mean transformation at each query point, shape (M, d)."""
        Q = as_points(Q, self.dimension)
        mu_q = self.mean_fn(Q)
        if self.n_annotations == 0:
            return mu_q
        X, Y = self._data_arrays()
        resid = (self._inv_kaa @ (Y - self.mean_fn(X)).reshape(-1)).reshape(X.shape)
        P = kernels.profile_matrix(self.spec, X, Q)  # (L, M)
        return mu_q + P.T @ resid

    def posterior_cov(self, Q) -> np.ndarray:
        """Posterior d x d covariance block at each query point, shape (M, d, d)."""
        Q = as_points(Q, self.dimension)
        d = self.dimension
        c0 = self.spec.total_variance
        M = Q.shape[0]
        if self.n_annotations == 0:
            return np.broadcast_to(c0 * np.eye(d), (M, d, d)).copy()
        X, _ = self._data_arrays()
        L = X.shape[0]
        P = kernels.profile_matrix(self.spec, X, Q)  # (L, M)
        inv4 = self._inv_kaa.reshape(L, d, L, d)
        red = np.einsum("lq,lamb,mq->qab", P, inv4, P, optimize=True)
        covs = c0 * np.eye(d)[None, :, :] - red
        return np.stack([_clip_psd(c) for c in covs])

    def predict(self, X, return_cov: bool = False):
        """Posterior mean at X; with return_cov, also the per-point covariance blocks."""
        means = self.posterior_mean(X)
        if return_cov:
            return means, self.posterior_cov(X)
        return means

    def posterior_at(self, x) -> PosteriorGaussian:
        x = as_point(x, self.dimension)
        return PosteriorGaussian(
            mean=self.posterior_mean(x[None, :])[0],
            cov=self.posterior_cov(x[None, :])[0],
        )

    def posterior_cross_cov(self, x, x2) -> np.ndarray:
        """Posterior cross-covariance block between two points."""
        x = as_point(x, self.dimension)
        x2 = as_point(x2, self.dimension)
        prior = kernels.kernel_eval(self.spec, x, x2)
        if self.n_annotations == 0:
            return prior
        X, _ = self._data_arrays()
        Kx = kernels.cross_gram(self.spec, X, x[None, :])
        Kx2 = kernels.cross_gram(self.spec, X, x2[None, :])
        return prior - Kx.T @ self._inv_kaa @ Kx2

    def _conditional_gram(self, T: np.ndarray) -> np.ndarray:
        """K_TT - K_XT^T K_AA^{-1} K_XT for a stack of target points."""
        K_tt = kernels.gram_matrix(self.spec, T)
        if self.n_annotations == 0:
            return K_tt
        X, _ = self._data_arrays()
        K_xt = kernels.cross_gram(self.spec, X, T)
        return K_tt - K_xt.T @ self._inv_kaa @ K_xt

    def joint_entropy(self, T) -> float:
        """Joint differential entropy (nats) of the deformation at the target points."""
        T = as_points(T, self.dimension)
        if T.shape[0] < 1:
            raise ValidationError("at least one target point is required")
        if len({tuple(t) for t in map(tuple, T)}) != T.shape[0]:
            raise ValidationError("target points must be distinct")
        d = self.dimension
        cond = self._conditional_gram(T)
        return 0.5 * d * T.shape[0] * LOG_2PIE + 0.5 * logdet_psd(cond)

    def log_det_conditional(self, extra) -> float:
        """Half log-determinant of the posterior covariance at one extra point."""
        extra = as_point(extra, self.dimension)
        cond = self._conditional_gram(extra[None, :])
        return 0.5 * logdet_psd(cond)

    # --- persistence -------------------------------------------------------------

    def to_json(self) -> str:
        """Serialize kernel, annotations and mean tag; caches are rebuilt on load."""
        if self.mean != "identity":
            raise ValidationError("only the identity mean function is serializable")
        return json.dumps(
            {
                "kernel": json.loads(self.spec.to_json()),
                "mean": "identity",
                "annotations": json.loads(annotations_to_json(self._annotations)),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "DeformationGP":
        doc = json.loads(text)
        spec = KernelSpec.from_json(json.dumps(doc["kernel"]))
        session = cls(kernel=spec, mean=doc.get("mean", "identity"))
        session.fit_annotations(annotations_from_json(json.dumps(doc["annotations"])))
        return session


def new_session(spec: KernelSpec, mean_fn="identity") -> DeformationGP:
    """Create an empty session whose posterior equals the prior."""
    return DeformationGP(kernel=spec, mean=mean_fn)
