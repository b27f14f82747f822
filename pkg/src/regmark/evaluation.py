"""Scoring and ranking candidate transformations against the posterior.

Covers the classical landmark metrics, the posterior-mean score, the expected
squared-L2 decomposition, Spearman rank agreement, and dense chi-squared
error / entropy maps with PNG or raw-volume export.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
import scipy.special
import scipy.stats

from .fields import GridGeometry
from .gp import LOG_2PIE, DeformationGP
from .suggestion import TargetSet
from .validation import ValidationError, as_points

# Dense per-pixel GP queries are quadratic in the annotation count, so maps
# are computed on a strided grid by default and upsampled at export.
DEFAULT_MAP_STRIDE_2D = 2
DEFAULT_MAP_STRIDE_3D = 4


def p_norm_error(phi_hat, reference, T: TargetSet, p) -> float:
    """p-norm summary of displacement errors over the target set.

    ``reference`` maps points to points (callable on an (N, d) array or on
    single points). p = 1 gives the mean error, 2 the RMSE, inf the maximum.
    """
    pts = T.points
    if pts.shape[0] == 0:
        raise ValidationError("target set is empty")
    pred = np.asarray(phi_hat(pts), dtype=float)
    ref = np.asarray(reference(pts), dtype=float)
    errs = np.linalg.norm(pred - ref, axis=1)
    if p == math.inf or p == "inf":
        return float(errs.max())
    p = float(p)
    return float((np.mean(errs**p)) ** (1.0 / p))


def landmark_score(phi_hat, annotations, p) -> float:
    """Classical landmark-based score: errors against y_l at the annotated x_l only."""
    if not annotations:
        raise ValidationError("annotation list is empty")
    X = np.stack([a.x for a in annotations])
    Y = np.stack([a.y for a in annotations])
    lookup = {tuple(x): y for x, y in zip(X, Y)}

    def reference(pts):
        return np.stack([lookup[tuple(pt)] for pt in np.atleast_2d(pts)])

    return p_norm_error(phi_hat, reference, TargetSet(points=X), p)


def proposed_score(phi_hat, session: DeformationGP, T: TargetSet, p) -> float:
    """Uncertainty-aware score: errors against the posterior mean over T."""
    return p_norm_error(phi_hat, session.posterior_mean, T, p)


def expected_l2_decomposition(phi_hat, session: DeformationGP, T: TargetSet):
    """Split the expected squared L2 error into a mean term and a trace term.

    expected_sq = |T| * proposed_score(p=2)**2 + sum of posterior covariance
    traces; the trace term does not depend on phi_hat, so ranking by the
    proposed p=2 score equals ranking by the expected squared error.
    """
    s2 = proposed_score(phi_hat, session, T, 2)
    mean_term = T.points.shape[0] * s2**2
    covs = session.posterior_cov(T.points)
    trace_term = float(np.trace(covs, axis1=1, axis2=2).sum())
    return mean_term + trace_term, mean_term, trace_term


def spearman(pred_scores, true_scores) -> float:
    """Spearman rank correlation with average-rank tie handling.

    Equals 1 - 6 sum(d^2) / (K (K^2 - 1)) when there are no ties. Constant
    inputs have no defined ranking and raise instead of propagating NaN.
    """
    a = np.asarray(pred_scores, dtype=float)
    b = np.asarray(true_scores, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.shape[0] < 2:
        raise ValidationError("need two equally sized score vectors with K >= 2")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise ValidationError("constant score vector has no defined ranking")
    ra = scipy.stats.rankdata(a)
    rb = scipy.stats.rankdata(b)
    return float(np.corrcoef(ra, rb)[0, 1])


@dataclass
class ScoreReport:
    """Per-candidate p-norm scores and the induced ranking for one method."""

    method: str
    candidate_ids: list
    s1: np.ndarray
    s2: np.ndarray
    sinf: np.ndarray
    ranks: np.ndarray  # ranks of s2, 1 = best (lowest error)

    @classmethod
    def build(cls, method, candidate_ids, s1, s2, sinf) -> "ScoreReport":
        s2 = np.asarray(s2, dtype=float)
        ranks = np.empty(len(s2), dtype=int)
        ranks[np.argsort(s2, kind="stable")] = np.arange(1, len(s2) + 1)
        return cls(method, list(candidate_ids), np.asarray(s1, float), s2, np.asarray(sinf, float), ranks)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["candidate_id", "s1", "s2", "sinf", "rank"])
        for cid, a, b, c, r in zip(self.candidate_ids, self.s1, self.s2, self.sinf, self.ranks):
            writer.writerow([cid, repr(float(a)), repr(float(b)), repr(float(c)), int(r)])
        return buf.getvalue()


def score_candidates(phi_hats, session: DeformationGP, T: TargetSet, method: str = "proposed") -> ScoreReport:
    """Score a list of candidate transformations with one method."""
    s = {1: [], 2: [], math.inf: []}
    for phi_hat in phi_hats:
        for p in s:
            if method == "proposed":
                s[p].append(proposed_score(phi_hat, session, T, p))
            elif method == "landmark":
                s[p].append(landmark_score(phi_hat, session.annotations, p))
            else:
                raise ValidationError(f"unknown method {method!r}")
    return ScoreReport.build(method, list(range(len(phi_hats))), s[1], s[2], s[math.inf])


# --- dense maps ----------------------------------------------------------------


@dataclass
class ScalarMap:
    """Scalar field over the domain on a (possibly strided) grid."""

    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.geometry.shape:
            raise ValidationError("map values must match the grid shape")


ErrorMap = ScalarMap
EntropyMap = ScalarMap


def chi2_cdf(x, d: int):
    return scipy.special.gammainc(d / 2.0, np.asarray(x, dtype=float) / 2.0)


def error_heat_map(phi_hat, session: DeformationGP, geometry: GridGeometry) -> ScalarMap:
    """Chi-squared p-value map of the deviation of phi_hat from the posterior.

    At each node, the squared Mahalanobis distance between phi_hat(x) and the
    posterior mean (in the posterior covariance metric) is passed through the
    chi-squared(d) CDF. Directions with zero posterior variance are treated as
    infinitely confident: any deviation there saturates the score at 1.
    """
    d = session.dimension
    nodes = geometry.node_points()
    means = session.posterior_mean(nodes)
    covs = session.posterior_cov(nodes)
    dev = np.asarray(phi_hat(nodes), dtype=float) - means
    values = np.empty(nodes.shape[0])
    for i, (cov, delta) in enumerate(zip(covs, dev)):
        w, V = np.linalg.eigh(cov)
        comps = V.T @ delta
        stat = 0.0
        saturated = False
        for var, c in zip(w, comps):
            if var <= 1e-300:
                if abs(c) > 1e-9:
                    saturated = True
                    break
            else:
                stat += c**2 / var
        values[i] = 1.0 if saturated else float(chi2_cdf(stat, d))
    return ScalarMap(geometry=geometry, values=values.reshape(geometry.shape))


def entropy_map(session: DeformationGP, geometry: GridGeometry) -> ScalarMap:
    """Per-node differential entropy of the posterior marginal."""
    d = session.dimension
    covs = session.posterior_cov(geometry.node_points())
    # guard against exactly-zero posterior variance at annotated nodes
    logdets = np.array([np.linalg.slogdet(c + 1e-300 * np.eye(d))[1] for c in covs])
    values = 0.5 * d * LOG_2PIE + 0.5 * logdets
    return ScalarMap(geometry=geometry, values=values.reshape(geometry.shape))


# simple blue-to-red colormap for error maps
def _error_colormap(values01: np.ndarray) -> np.ndarray:
    v = np.clip(values01, 0.0, 1.0)
    rgb = np.empty(v.shape + (3,))
    rgb[..., 0] = v
    rgb[..., 1] = 4 * v * (1 - v) * 0.6
    rgb[..., 2] = 1 - v
    return (255 * rgb).astype(np.uint8)


def blended_map(error: ScalarMap, entropy: ScalarMap, background: np.ndarray | None = None) -> np.ndarray:
    """RGBA composite: error colormap with alpha = 1 - min-max normalized entropy.

    High-entropy (poorly annotated) areas become transparent. Returns a uint8
    array of shape grid + (4,); 2-D grids only, optionally composited over a
    grayscale background image of the same shape.
    """
    if error.geometry != entropy.geometry:
        raise ValidationError("error and entropy maps use different grids")
    ent = entropy.values
    rng = np.ptp(ent)
    alpha = np.ones_like(ent) if rng == 0 else 1.0 - (ent - ent.min()) / rng
    rgb = _error_colormap(error.values)
    rgba = np.concatenate([rgb, (255 * alpha[..., None]).astype(np.uint8)], axis=-1)
    if background is not None:
        bg = np.asarray(background, dtype=float)
        if bg.shape != error.values.shape:
            raise ValidationError("background shape mismatch")
        bg01 = bg if np.ptp(bg) == 0 else (bg - bg.min()) / np.ptp(bg)
        out = alpha[..., None] * rgb / 255.0 + (1 - alpha[..., None]) * bg01[..., None]
        rgba = np.concatenate([(255 * out).astype(np.uint8), np.full(ent.shape + (1,), 255, np.uint8)], axis=-1)
    return rgba


def save_map(m: ScalarMap, path_base: str) -> None:
    """2-D maps: 8-bit PNG + JSON sidecar; 3-D maps: raw float32 + JSON header."""
    geom = m.geometry
    if geom.dimension == 2:
        from PIL import Image

        vmin, vmax = float(m.values.min()), float(m.values.max())
        scale = (m.values - vmin) / (vmax - vmin) if vmax > vmin else np.zeros_like(m.values)
        Image.fromarray((255 * scale).astype(np.uint8)).save(path_base + ".png")
        sidecar = {**geom.to_dict(), "value_range": [vmin, vmax]}
        with open(path_base + ".json", "w") as f:
            json.dump(sidecar, f)
    else:
        m.values.astype("<f4").tofile(path_base + ".raw")
        header = {**geom.to_dict(), "dtype": "<f4"}
        with open(path_base + ".json", "w") as f:
            json.dump(header, f)


def load_map(path_base: str) -> ScalarMap:
    with open(path_base + ".json") as f:
        header = json.load(f)
    geom = GridGeometry.from_dict(header)
    if geom.dimension == 2:
        from PIL import Image

        raw = np.asarray(Image.open(path_base + ".png"), dtype=float) / 255.0
        vmin, vmax = header["value_range"]
        return ScalarMap(geometry=geom, values=vmin + raw * (vmax - vmin))
    data = np.fromfile(path_base + ".raw", dtype=header["dtype"]).astype(float)
    return ScalarMap(geometry=geom, values=data.reshape(geom.shape))
