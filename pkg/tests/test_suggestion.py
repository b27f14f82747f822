"""Suggestion strategies, candidate detection and the protocol loop."""

import math

import numpy as np
import pytest

from conftest import random_annotations
from regmark.annotation import Annotation
from regmark.gp import LOG_2PIE, DeformationGP, new_session
from regmark.kernels import KernelSpec
from regmark.suggestion import (
    CandidateSet,
    Strategy,
    TargetSet,
    delta_h,
    detect_candidates,
    run_protocol,
    suggest_next_entropy,
    suggest_next_heuristic,
    suggest_next_random,
    trace_to_csv,
)
from regmark.validation import ValidationError

SPEC = KernelSpec(scales=(6.0, 12.0), weights=(1.0, 0.5), dimension=2)


def _brute_force_pick(session, C, T):
    """Oracle: minimize the remaining-entropy objective directly.

    For each unconsumed candidate x, condition on a perfect annotation at x and
    evaluate the joint entropy of the rest of the targets from scratch.
    """
    best_idx, best_h = None, math.inf
    for idx in C.unconsumed_indices:
        x = C.points[idx]
        aug = DeformationGP(kernel=session.spec).fit_annotations(
            list(session.annotations) + [Annotation(x=x, y=x, sigma=np.zeros((2, 2)))]
        )
        rest = np.stack([t for t in T.points if not np.array_equal(t, x)])
        h = aug.joint_entropy(rest)
        if h < best_h - 1e-12:
            best_idx, best_h = int(idx), h
    return best_idx


# --- domain types ---------------------------------------------------------------------


def test_target_set_invariants():
    with pytest.raises(ValidationError):
        TargetSet(points=np.zeros((0, 2)))
    with pytest.raises(ValidationError):
        TargetSet(points=np.array([[1.0, 1.0], [1.0, 1.0]]))
    t = TargetSet(points=np.array([[1.0, 2.0]]))
    assert t.contains([1.0, 2.0]) and not t.contains([1.0, 2.0000001])


def test_candidate_set_consumption():
    c = CandidateSet(points=np.array([[0.0, 0.0], [1.0, 1.0]]))
    c.consume(0)
    assert list(c.unconsumed_indices) == [1]
    with pytest.raises(ValidationError):
        c.consume(0)


# --- delta_h --------------------------------------------------------------------------


def test_delta_h_prior_closed_form():
    sigma_sq = SPEC.total_variance
    T = TargetSet(points=np.array([[3.0, 3.0], [20.0, 20.0]]))
    val = delta_h(new_session(SPEC), [3.0, 3.0], T)
    assert val == pytest.approx(LOG_2PIE + math.log(sigma_sq), abs=1e-12)


def test_delta_h_far_from_annotations_unchanged(rng):
    # compact support: annotations beyond the kernel radius cannot move the score
    x = np.array([200.0, 200.0])
    T = TargetSet(points=np.array([x, [210.0, 210.0]]))
    s0 = new_session(SPEC)
    s1 = DeformationGP(kernel=SPEC).fit_annotations(random_annotations(rng, SPEC, 4, hi=30.0))
    assert delta_h(s0, x, T) == pytest.approx(delta_h(s1, x, T), abs=1e-12)


def test_delta_h_chain_rule(rng):
    # both branches: H(T \ {x} | annotations + perfect obs at x) must equal
    # H(T | annotations) - delta_h(x)
    for _ in range(10):
        anns = random_annotations(rng, SPEC, int(rng.integers(1, 5)), hi=30.0)
        s = DeformationGP(kernel=SPEC).fit_annotations(anns)
        T_pts = rng.uniform(0, 30, size=(int(rng.integers(2, 8)), 2))
        T = TargetSet(points=T_pts)
        candidates = [T_pts[0], rng.uniform(0, 30, size=2)]
        h_t = s.joint_entropy(T_pts)
        for x in candidates:
            dh = delta_h(s, x, T)
            aug = DeformationGP(kernel=SPEC).fit_annotations(
                list(anns) + [Annotation(x=x, y=x, sigma=np.zeros((2, 2)))]
            )
            rest = np.stack([t for t in T_pts if not np.array_equal(t, x)])
            assert aug.joint_entropy(rest) == pytest.approx(h_t - dh, abs=1e-8)


# --- entropy strategy --------------------------------------------------------------------


def test_entropy_single_candidate():
    C = CandidateSet(points=np.array([[5.0, 5.0]]))
    T = TargetSet(points=np.array([[5.0, 5.0]]))
    assert suggest_next_entropy(new_session(SPEC), C, T).index == 0


def test_entropy_symmetric_tie_breaks_low_index():
    # two candidates mirrored about the annotation: identical scores, pick index 0
    a = Annotation(x=[10.0, 10.0], y=[10.0, 10.0], sigma=0.5 * np.eye(2))
    s = new_session(SPEC).add_annotation(a)
    pts = np.array([[6.0, 10.0], [14.0, 10.0]])
    pick = suggest_next_entropy(s, CandidateSet(points=pts), TargetSet(points=pts))
    assert pick.index == 0


def test_entropy_equals_brute_force(rng):
    for _ in range(5):
        anns = random_annotations(rng, SPEC, 2, hi=30.0)
        s = DeformationGP(kernel=SPEC).fit_annotations(anns)
        T_pts = rng.uniform(0, 30, size=(8, 2))
        C_pts = np.concatenate([T_pts[:3], rng.uniform(0, 30, size=(2, 2))])
        C = CandidateSet(points=C_pts)
        T = TargetSet(points=T_pts)
        assert suggest_next_entropy(s, C, T).index == _brute_force_pick(s, C, T)


def test_entropy_skips_consumed(rng):
    pts = rng.uniform(0, 30, size=(4, 2))
    C = CandidateSet(points=pts)
    T = TargetSet(points=pts)
    s = new_session(SPEC)
    seen = set()
    for _ in range(4):
        pick = suggest_next_entropy(s, C, T)
        assert pick.index not in seen
        seen.add(pick.index)
        C.consume(pick.index)


def test_entropy_target_set_independence_when_contained(rng):
    # with C inside T, extending T further cannot change the sequence
    C_pts = rng.uniform(0, 30, size=(6, 2))
    extra = rng.uniform(0, 30, size=(4, 2))
    T1 = TargetSet(points=C_pts.copy())
    T2 = TargetSet(points=np.concatenate([C_pts, extra]))
    seqs = []
    for T in (T1, T2):
        s = new_session(SPEC)
        C = CandidateSet(points=C_pts.copy())
        seq = []
        for _ in range(4):
            pick = suggest_next_entropy(s, C, T)
            seq.append(pick.index)
            C.consume(pick.index)
            s = s.add_annotation(
                Annotation(x=C_pts[pick.index], y=C_pts[pick.index], sigma=0.3 * np.eye(2))
            )
        seqs.append(seq)
    assert seqs[0] == seqs[1]


# --- baselines ------------------------------------------------------------------------------


def test_heuristic_first_pick_seeded():
    C = CandidateSet(points=np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]))
    a = suggest_next_heuristic(np.zeros((0, 2)), C, 42)
    b = suggest_next_heuristic(np.zeros((0, 2)), C, 42)
    assert a.index == b.index


def test_heuristic_opposite_corner():
    square = np.array([[0.0, 0.0], [0.0, 10.0], [10.0, 0.0], [10.0, 10.0]])
    pick = suggest_next_heuristic(np.array([[0.0, 0.0]]), CandidateSet(points=square), 0)
    np.testing.assert_array_equal(square[pick.index], [10.0, 10.0])


def test_heuristic_collinear():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]])
    pick = suggest_next_heuristic(np.array([[0.0, 0.0]]), CandidateSet(points=pts), 0)
    assert pick.index == 2


def test_random_single_candidate():
    C = CandidateSet(points=np.array([[4.0, 4.0]]))
    assert suggest_next_random(C, 7).index == 0


def test_random_reproducible():
    pts = np.arange(20, dtype=float).reshape(10, 2)
    seq_a = [suggest_next_random(CandidateSet(points=pts), seed).index for seed in range(10)]
    seq_b = [suggest_next_random(CandidateSet(points=pts), seed).index for seed in range(10)]
    assert seq_a == seq_b


def test_random_uniformity():
    pts = np.arange(10, dtype=float).reshape(5, 2)
    C = CandidateSet(points=pts)
    rng = np.random.default_rng(0)
    counts = np.zeros(5)
    n = 10_000
    for _ in range(n):
        counts[suggest_next_random(C, rng).index] += 1
    p = 1.0 / 5.0
    bound = 3.0 * math.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) <= bound)


def test_empty_pool_rejected():
    C = CandidateSet(points=np.array([[0.0, 0.0]]))
    C.consume(0)
    with pytest.raises(ValidationError):
        suggest_next_random(C, 0)
    with pytest.raises(ValidationError):
        suggest_next_heuristic(np.zeros((0, 2)), C, 0)


# --- candidate detection -----------------------------------------------------------------------


def test_constant_image_empty():
    assert detect_candidates(np.ones((32, 32))).points.shape == (0, 2)


def test_square_corners_detected():
    img = np.zeros((64, 64))
    img[20:44, 20:44] = 1.0
    C = detect_candidates(img, max_count=4, min_spacing=8.0)
    corners = np.array([[20, 20], [20, 43], [43, 20], [43, 43]], dtype=float)
    assert C.points.shape[0] == 4
    for c in corners:
        assert min(np.linalg.norm(C.points - c, axis=1)) <= 2.0


def test_min_spacing_respected(rng):
    img = rng.normal(size=(64, 64))
    C = detect_candidates(img, max_count=30, min_spacing=9.0)
    pts = C.points
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            assert np.linalg.norm(pts[i] - pts[j]) >= 9.0


def test_detect_3d_smoke(rng):
    img = np.zeros((24, 24, 24))
    img[8:16, 8:16, 8:16] = 1.0
    C = detect_candidates(img, max_count=10, min_spacing=4.0)
    assert C.points.shape[1] == 3 and C.points.shape[0] > 0


# --- protocol loop ---------------------------------------------------------------------------


def _noisy_annotator(rng):
    def annotate(x):
        return np.asarray(x) + rng.normal(0, 0.5, 2), 0.25 * np.eye(2)

    return annotate


def test_budget_zero(rng):
    pts = rng.uniform(0, 30, size=(4, 2))
    s, trace = run_protocol(
        new_session(SPEC), CandidateSet(points=pts), TargetSet(points=pts), 0, _noisy_annotator(rng)
    )
    assert s.n_annotations == 0 and trace == []


def test_full_budget_consumes_all(rng):
    pts = rng.uniform(0, 30, size=(5, 2))
    C = CandidateSet(points=pts)
    s, trace = run_protocol(new_session(SPEC), C, TargetSet(points=pts), 5, _noisy_annotator(rng))
    assert s.n_annotations == 5 and len(trace) == 5
    assert C.unconsumed_indices.size == 0


def test_budget_exceeding_pool_rejected(rng):
    pts = rng.uniform(0, 30, size=(3, 2))
    with pytest.raises(ValidationError):
        run_protocol(new_session(SPEC), CandidateSet(points=pts), TargetSet(points=pts), 4, _noisy_annotator(rng))


def test_suggestions_independent_of_y(rng):
    # entropy strategy with fixed covariances: the visited sequence and scores
    # must be bit-identical under arbitrary y perturbations
    pts = rng.uniform(0, 30, size=(8, 2))

    def annotator_factory(offset):
        def annotate(x):
            return np.asarray(x) + offset, 0.25 * np.eye(2)

        return annotate

    traces = []
    for offset in (np.zeros(2), np.array([17.0, -4.0])):
        _, trace = run_protocol(
            new_session(SPEC),
            CandidateSet(points=pts.copy()),
            TargetSet(points=pts.copy()),
            5,
            annotator_factory(offset),
            strategy=Strategy.ENTROPY,
        )
        traces.append([(r.iteration, tuple(r.x), r.delta_h) for r in trace])
    assert traces[0] == traces[1]


def test_delta_h_floor_stops_early(rng):
    pts = rng.uniform(0, 30, size=(6, 2))
    s, trace = run_protocol(
        new_session(SPEC),
        CandidateSet(points=pts),
        TargetSet(points=pts),
        6,
        _noisy_annotator(rng),
        delta_h_floor=1e9,
    )
    assert s.n_annotations == 0 and trace == []


def test_trace_csv_schema(rng):
    pts = rng.uniform(0, 30, size=(3, 2))
    _, trace = run_protocol(
        new_session(SPEC), CandidateSet(points=pts), TargetSet(points=pts), 2, _noisy_annotator(rng)
    )
    lines = trace_to_csv(trace).splitlines()
    assert lines[0] == "iteration,strategy,x0,x1,delta_h,wall_ms"
    assert len(lines) == 3
