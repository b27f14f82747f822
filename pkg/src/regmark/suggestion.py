"""Active selection of the next location to annotate.

Implements the greedy entropy strategy (score each unconsumed candidate by
the entropy reduction a perfect annotation there would bring), plus the
furthest-point heuristic and random baselines, Harris candidate detection and
the suggest/annotate protocol loop.
"""

from __future__ import annotations

import csv
import enum
import io
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.ndimage

from . import kernels
from .annotation import Annotation
from .gp import LOG_2PIE, DeformationGP
from .linalg import inv_psd, logdet_psd
from .validation import ValidationError, as_point, as_points

HARRIS_KAPPA = 0.05
HARRIS_SIGMA = 1.5
DEFAULT_MIN_SPACING = 10.0


class Strategy(str, enum.Enum):
    ENTROPY = "entropy"
    HEURISTIC = "heuristic"
    RANDOM = "random"


@dataclass
class TargetSet:
    """Locations over which registration accuracy matters."""

    points: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.points = as_points(self.points)
        if self.points.shape[0] < 1:
            raise ValidationError("target set must contain at least one point")
        if len({tuple(p) for p in self.points}) != self.points.shape[0]:
            raise ValidationError("target points must be distinct")

    def contains(self, x) -> bool:
        """Exact coordinate membership; callers wanting tolerance must canonicalize."""
        return any(np.array_equal(x, t) for t in self.points)


@dataclass
class CandidateSet:
    """Salient locations eligible for annotation queries, with consumption tracking."""

    points: np.ndarray
    consumed: np.ndarray = field(default=None)

    def __post_init__(self):
        self.points = as_points(self.points)
        if len({tuple(p) for p in self.points}) != self.points.shape[0]:
            raise ValidationError("candidate points must be distinct")
        if self.consumed is None:
            self.consumed = np.zeros(self.points.shape[0], dtype=bool)
        else:
            self.consumed = np.asarray(self.consumed, dtype=bool).copy()

    @property
    def unconsumed_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.consumed)

    def consume(self, index: int) -> None:
        if self.consumed[index]:
            raise ValidationError(f"candidate {index} already consumed")
        self.consumed[index] = True


@dataclass(frozen=True)
class SuggestionScore:
    index: int
    delta_h: float


def _augmented_session(session: DeformationGP, T: TargetSet) -> DeformationGP:
    """Session additionally conditioned on perfect (noiseless) observations at T."""
    d = session.dimension
    pseudo = [Annotation(x=t, y=t, sigma=np.zeros((d, d))) for t in T.points]
    return DeformationGP(kernel=session.spec, mean=session.mean).fit_annotations(
        list(session.annotations) + pseudo
    )


def delta_h(session: DeformationGP, x, T: TargetSet, _aug: DeformationGP | None = None) -> float:
    """Entropy reduction of a hypothetical perfect annotation at x.

    For x in T (exact coordinate match) this is the current entropy of the
    deformation at x; otherwise the entropy at x conditioned additionally on
    perfect observations of all of T is subtracted.
    """
    x = as_point(x, session.dimension)
    d = session.dimension
    h_x = 0.5 * d * LOG_2PIE + session.log_det_conditional(x)
    if T.contains(x):
        return h_x
    aug = _aug if _aug is not None else _augmented_session(session, T)
    h_x_given_t = 0.5 * d * LOG_2PIE + aug.log_det_conditional(x)
    return h_x - h_x_given_t


def _delta_h_batch(session: DeformationGP, C: CandidateSet, T: TargetSet) -> np.ndarray:
    """delta_h over the unconsumed candidates, vectorized; NaN for consumed entries."""
    idx = C.unconsumed_indices
    if idx.size == 0:
        raise ValidationError("no unconsumed candidates")
    pts = C.points[idx]
    in_t = np.array([T.contains(p) for p in pts])
    d = session.dimension
    covs = session.posterior_cov(pts)
    scores = np.full(C.points.shape[0], np.nan)
    h_x = 0.5 * d * LOG_2PIE + 0.5 * np.array([logdet_psd(c) for c in covs])
    scores[idx] = h_x
    if not in_t.all():
        aug = _augmented_session(session, T)
        covs_t = aug.posterior_cov(pts[~in_t])
        h_given_t = 0.5 * d * LOG_2PIE + 0.5 * np.array([logdet_psd(c) for c in covs_t])
        scores[idx[~in_t]] -= h_given_t
    return scores


def suggest_next_entropy(session: DeformationGP, C: CandidateSet, T: TargetSet) -> SuggestionScore:
    """Greedy argmax of delta_h over unconsumed candidates; ties break on lowest index."""
    scores = _delta_h_batch(session, C, T)
    best = int(np.nanargmax(scores))
    return SuggestionScore(index=best, delta_h=float(scores[best]))


def suggest_next_heuristic(annotated, C: CandidateSet, rng) -> SuggestionScore:
    """Furthest-point baseline; the first pick (no annotations yet) is seeded-random."""
    idx = C.unconsumed_indices
    if idx.size == 0:
        raise ValidationError("no unconsumed candidates")
    annotated = np.asarray(annotated, dtype=float).reshape(-1, C.points.shape[1])
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if annotated.shape[0] == 0:
        return SuggestionScore(index=int(rng.choice(idx)), delta_h=float("nan"))
    dists = np.linalg.norm(C.points[idx][:, None, :] - annotated[None, :, :], axis=2)
    min_d = dists.min(axis=1)
    best = idx[int(np.argmax(min_d))]
    return SuggestionScore(index=int(best), delta_h=float("nan"))


def suggest_next_random(C: CandidateSet, rng) -> SuggestionScore:
    """Uniform seeded pick among unconsumed candidates."""
    idx = C.unconsumed_indices
    if idx.size == 0:
        raise ValidationError("no unconsumed candidates")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    return SuggestionScore(index=int(rng.choice(idx)), delta_h=float("nan"))


# --- candidate detection -----------------------------------------------------


def detect_candidates(image, max_count: int = 100, min_spacing: float = DEFAULT_MIN_SPACING) -> CandidateSet:
    """Harris corner candidates with non-max suppression at min_spacing.

    Works in 2-D and 3-D: structure tensor of Gaussian-smoothed gradients,
    response det - kappa * trace**ndim, then greedy spacing-constrained selection
    of the strongest responses. Constant images yield an empty set.
    """
    img = np.asarray(image, dtype=float)
    d = img.ndim
    if d not in (2, 3):
        raise ValidationError("image must be 2-D or 3-D")
    if img.size == 0 or np.ptp(img) == 0:
        return CandidateSet(points=np.zeros((0, d)))
    smoothed = scipy.ndimage.gaussian_filter(img, HARRIS_SIGMA)
    grads = np.gradient(smoothed)
    # structure tensor entries, window-averaged
    tensor = np.empty((d, d) + img.shape)
    for i in range(d):
        for j in range(i, d):
            tensor[i, j] = tensor[j, i] = scipy.ndimage.gaussian_filter(grads[i] * grads[j], HARRIS_SIGMA)
    if d == 2:
        det = tensor[0, 0] * tensor[1, 1] - tensor[0, 1] ** 2
        trace = tensor[0, 0] + tensor[1, 1]
    else:
        t = tensor
        det = (
            t[0, 0] * (t[1, 1] * t[2, 2] - t[1, 2] ** 2)
            - t[0, 1] * (t[0, 1] * t[2, 2] - t[1, 2] * t[0, 2])
            + t[0, 2] * (t[0, 1] * t[1, 2] - t[1, 1] * t[0, 2])
        )
        trace = t[0, 0] + t[1, 1] + t[2, 2]
    # penalty exponent matches the degree of det so the response stays
    # scale-consistent: trace**2 in 2-D, trace**3 in 3-D; the cubic penalty
    # needs a smaller kappa since an ideal corner has det = trace**3 / 27
    kappa = HARRIS_KAPPA if d == 2 else HARRIS_KAPPA / 10.0
    response = det - kappa * trace**d
    # clamp a detection margin equal to the smoothing radius
    margin = int(np.ceil(2 * HARRIS_SIGMA))
    mask = np.zeros_like(response, dtype=bool)
    interior = tuple(slice(margin, max(margin + 1, s - margin)) for s in img.shape)
    mask[interior] = True
    response = np.where(mask, response, -np.inf)
    order = np.argsort(response, axis=None)[::-1]
    selected: list[np.ndarray] = []
    for flat in order:
        if len(selected) >= max_count:
            break
        if not np.isfinite(response.flat[flat]) or response.flat[flat] <= 0:
            break
        p = np.array(np.unravel_index(flat, img.shape), dtype=float)
        if all(np.linalg.norm(p - q) >= min_spacing for q in selected):
            selected.append(p)
    pts = np.stack(selected) if selected else np.zeros((0, d))
    return CandidateSet(points=pts)


# --- protocol loop -----------------------------------------------------------


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    strategy: str
    x: np.ndarray
    delta_h: float
    wall_ms: float


def run_protocol(
    session: DeformationGP,
    C: CandidateSet,
    T: TargetSet,
    budget: int,
    annotator,
    strategy: Strategy = Strategy.ENTROPY,
    rng_seed: int = 0,
    delta_h_floor: float | None = None,
    on_iteration=None,
):
    """Suggest/annotate loop: returns (final session, per-iteration trace).

    ``annotator(x)`` must return an (y, sigma) pair. The optional delta_h
    floor stops early once the best candidate falls below it (disabled by
    default). ``on_iteration(session)`` is called after each update, useful
    for recording held-out error.
    """
    strategy = Strategy(strategy)
    if budget > C.points.shape[0]:
        raise ValidationError("budget exceeds candidate pool size")
    rng = np.random.default_rng(rng_seed)
    trace: list[TraceRow] = []
    for it in range(budget):
        t0 = time.perf_counter()
        if strategy is Strategy.ENTROPY:
            pick = suggest_next_entropy(session, C, T)
            if delta_h_floor is not None and pick.delta_h < delta_h_floor:
                break
        elif strategy is Strategy.HEURISTIC:
            annotated = (
                np.stack([a.x for a in session.annotations])
                if session.n_annotations
                else np.zeros((0, session.dimension))
            )
            pick = suggest_next_heuristic(annotated, C, rng)
        else:
            pick = suggest_next_random(C, rng)
        x = C.points[pick.index]
        y, sigma = annotator(x)
        session = session.add_annotation(Annotation(x=x, y=np.asarray(y, float), sigma=sigma))
        C.consume(pick.index)
        wall_ms = 1000.0 * (time.perf_counter() - t0)
        trace.append(TraceRow(iteration=it, strategy=strategy.value, x=x, delta_h=pick.delta_h, wall_ms=wall_ms))
        if on_iteration is not None:
            on_iteration(session)
    return session, trace


def trace_to_csv(trace) -> str:
    """Serialize a protocol trace: iteration, strategy, x (d cols), delta_h, wall_ms."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    d = trace[0].x.shape[0] if trace else 2
    writer.writerow(["iteration", "strategy"] + [f"x{i}" for i in range(d)] + ["delta_h", "wall_ms"])
    for row in trace:
        writer.writerow([row.iteration, row.strategy] + [repr(v) for v in row.x] + [repr(row.delta_h), repr(row.wall_ms)])
    return buf.getvalue()
