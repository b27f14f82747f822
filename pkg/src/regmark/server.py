"""HTTP service exposing interactive annotation sessions to the UI.

All endpoints are versioned under /v1. A session fixes its kernel, candidate
and target sets and suggestion strategy at creation; annotations are appended
through a per-session lock (one writer, many readers) and logged to disk when
a store directory is configured, so a restart can replay identical state.
"""

from __future__ import annotations

import io
import json
import os
import pathlib
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel, Field

from . import evaluation
from .annotation import Annotation, Ellipse, covariance_from_ellipse
from .fields import TransformField
from .gp import DeformationGP
from .kernels import KernelSpec
from .suggestion import (
    CandidateSet,
    Strategy,
    SuggestionScore,
    TargetSet,
    suggest_next_entropy,
    suggest_next_heuristic,
    suggest_next_random,
)
from .validation import ValidationError, check_covariance

ENTROPY_SUMMARY_POINTS = 256


class CreateSessionRequest(BaseModel):
    kernel: dict
    candidates: list[list[float]]
    targets: list[list[float]] | None = None
    strategy: str = "entropy"
    seed: int = 0
    alpha: float = 0.01
    fixed_image: str | None = None
    moving_image: str | None = None


class AnnotationRequest(BaseModel):
    x: list[float] = Field(description="The suggested location being answered.")
    y: list[float]
    sigma: list[list[float]] | None = None
    ellipse: dict | None = None  # {axes, radii, alpha?}


@dataclass
class SessionRecord:
    id: str
    session: DeformationGP
    candidates: CandidateSet
    targets: TargetSet
    strategy: Strategy
    rng: np.random.Generator
    alpha: float
    fixed_image: str | None = None
    moving_image: str | None = None
    pending: SuggestionScore | None = None
    trace: list = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


def _entropy_summary(rec: SessionRecord) -> float:
    pts = rec.targets.points
    if pts.shape[0] > ENTROPY_SUMMARY_POINTS:
        idx = np.linspace(0, pts.shape[0] - 1, ENTROPY_SUMMARY_POINTS).astype(int)
        pts = pts[idx]
    return rec.session.joint_entropy(pts)


def _suggest(rec: SessionRecord) -> SuggestionScore:
    if rec.strategy is Strategy.ENTROPY:
        return suggest_next_entropy(rec.session, rec.candidates, rec.targets)
    if rec.strategy is Strategy.HEURISTIC:
        annotated = (
            np.stack([a.x for a in rec.session.annotations])
            if rec.session.n_annotations
            else np.zeros((0, rec.session.dimension))
        )
        return suggest_next_heuristic(annotated, rec.candidates, rec.rng)
    return suggest_next_random(rec.candidates, rec.rng)


def create_app(store_dir: str | None = None, data_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="regmark")
    sessions: dict[str, SessionRecord] = {}
    store = pathlib.Path(store_dir) if store_dir else None
    if store:
        store.mkdir(parents=True, exist_ok=True)

    def _persist_meta(rec: SessionRecord, req: CreateSessionRequest):
        if not store:
            return
        (store / f"{rec.id}.meta.json").write_text(req.model_dump_json())

    def _log_annotation(rec: SessionRecord, a: Annotation):
        if not store:
            return
        line = json.dumps({"x": list(a.x), "y": list(a.y), "sigma": [list(r) for r in a.sigma]})
        with open(store / f"{rec.id}.log", "a") as f:
            f.write(line + "\n")
            f.flush()
            os.fsync(f.fileno())

    def _restore():
        if not store:
            return
        for meta_path in store.glob("*.meta.json"):
            sid = meta_path.name[: -len(".meta.json")]
            req = CreateSessionRequest(**json.loads(meta_path.read_text()))
            rec = _build_record(sid, req)
            log = store / f"{sid}.log"
            if log.exists():
                for line in log.read_text().splitlines():
                    doc = json.loads(line)
                    a = Annotation(x=np.array(doc["x"]), y=np.array(doc["y"]), sigma=np.array(doc["sigma"]))
                    idx = int(np.argmin(np.linalg.norm(rec.candidates.points - a.x, axis=1)))
                    if not rec.candidates.consumed[idx] and np.allclose(rec.candidates.points[idx], a.x):
                        rec.candidates.consume(idx)
                    rec.session = rec.session.add_annotation(a)
            sessions[sid] = rec

    def _build_record(sid: str, req: CreateSessionRequest) -> SessionRecord:
        spec = KernelSpec.from_json(json.dumps(req.kernel))
        candidates = CandidateSet(points=np.asarray(req.candidates, dtype=float))
        target_pts = np.asarray(req.targets, dtype=float) if req.targets else candidates.points.copy()
        return SessionRecord(
            id=sid,
            session=DeformationGP(kernel=spec),
            candidates=candidates,
            targets=TargetSet(points=target_pts),
            strategy=Strategy(req.strategy),
            rng=np.random.default_rng(req.seed),
            alpha=req.alpha,
            fixed_image=req.fixed_image,
            moving_image=req.moving_image,
        )

    def _get(sid: str) -> SessionRecord:
        if sid not in sessions:
            raise HTTPException(status_code=404, detail="unknown session")
        return sessions[sid]

    @app.post("/v1/sessions", status_code=201)
    def create_session(req: CreateSessionRequest):
        try:
            rec = _build_record(uuid.uuid4().hex, req)
        except (ValidationError, ValueError) as exc:
            raise HTTPException(status_code=422, detail={"code": "invalid_session", "message": str(exc)})
        sessions[rec.id] = rec
        _persist_meta(rec, req)
        return {"id": rec.id, "strategy": rec.strategy.value, "n_candidates": int(rec.candidates.points.shape[0])}

    @app.get("/v1/sessions/{sid}/suggestion")
    def get_suggestion(sid: str):
        rec = _get(sid)
        if rec.pending is None:
            if rec.candidates.unconsumed_indices.size == 0:
                raise HTTPException(status_code=409, detail={"code": "exhausted", "message": "all candidates consumed"})
            rec.pending = _suggest(rec)
        point = rec.candidates.points[rec.pending.index]
        dh = rec.pending.delta_h
        return {"x": list(point), "delta_h": None if np.isnan(dh) else dh, "iteration": rec.session.n_annotations}

    @app.post("/v1/sessions/{sid}/annotations")
    def post_annotation(sid: str, req: AnnotationRequest):
        rec = _get(sid)
        if not rec.lock.acquire(blocking=False):
            raise HTTPException(status_code=409, detail={"code": "busy", "message": "conflicting mutation in flight"})
        try:
            x = np.asarray(req.x, dtype=float)
            y = np.asarray(req.y, dtype=float)
            d = rec.session.dimension
            if x.shape != (d,) or y.shape != (d,):
                raise HTTPException(status_code=422, detail={"code": "bad_dimension", "message": "point dimension mismatch"})
            if req.sigma is not None:
                try:
                    sigma = check_covariance(np.asarray(req.sigma, dtype=float), d)
                except ValidationError as exc:
                    raise HTTPException(status_code=422, detail={"code": "non_psd_sigma", "message": str(exc)})
            elif req.ellipse is not None:
                try:
                    e = Ellipse(
                        center=y,
                        axes=np.asarray(req.ellipse["axes"], dtype=float),
                        radii=np.asarray(req.ellipse["radii"], dtype=float),
                        alpha=float(req.ellipse.get("alpha", rec.alpha)),
                    )
                    sigma = covariance_from_ellipse(e)
                except (ValidationError, KeyError) as exc:
                    raise HTTPException(status_code=422, detail={"code": "bad_ellipse", "message": str(exc)})
            else:
                raise HTTPException(status_code=422, detail={"code": "missing_sigma", "message": "provide sigma or ellipse"})

            if rec.pending is None or not np.array_equal(rec.candidates.points[rec.pending.index], x):
                matches = np.flatnonzero([np.array_equal(p, x) for p in rec.candidates.points])
                if matches.size == 0:
                    raise HTTPException(status_code=422, detail={"code": "unknown_point", "message": "x is not a candidate"})
                if rec.candidates.consumed[matches[0]]:
                    raise HTTPException(status_code=409, detail={"code": "consumed", "message": "candidate already annotated"})
                index = int(matches[0])
            else:
                index = rec.pending.index

            a = Annotation(x=x, y=y, sigma=sigma)
            rec.session = rec.session.add_annotation(a)
            rec.candidates.consume(index)
            dh = rec.pending.delta_h if rec.pending is not None else float("nan")
            rec.trace.append((rec.session.n_annotations - 1, rec.strategy.value, x, dh))
            rec.pending = None
            _log_annotation(rec, a)
            return {
                "n_annotations": rec.session.n_annotations,
                "entropy_summary": _entropy_summary(rec),
                "sigma": [list(row) for row in sigma],
            }
        finally:
            rec.lock.release()

    @app.post("/v1/sessions/{sid}/skip")
    def skip(sid: str):
        rec = _get(sid)
        with rec.lock:
            if rec.pending is None:
                raise HTTPException(status_code=409, detail={"code": "no_pending", "message": "nothing to skip"})
            rec.candidates.consume(rec.pending.index)
            rec.pending = None
        return {"skipped": True}

    @app.get("/v1/sessions/{sid}/trace")
    def get_trace(sid: str):
        rec = _get(sid)
        d = rec.session.dimension
        lines = ["iteration,strategy," + ",".join(f"x{i}" for i in range(d)) + ",delta_h"]
        for it, strat, x, dh in rec.trace:
            lines.append(f"{it},{strat}," + ",".join(repr(v) for v in x) + f",{repr(dh)}")
        return Response("\n".join(lines) + "\n", media_type="text/csv")

    @app.get("/v1/sessions/{sid}/maps/{kind}")
    def get_map(sid: str, kind: str, transform: str, stride: int | None = None):
        rec = _get(sid)
        if kind not in ("error", "entropy", "blended"):
            raise HTTPException(status_code=404, detail="unknown map kind")
        try:
            phi_hat = TransformField.load(transform)
        except FileNotFoundError:
            raise HTTPException(status_code=422, detail={"code": "bad_transform", "message": "transform not found"})
        if stride is None:
            stride = evaluation.DEFAULT_MAP_STRIDE_2D if rec.session.dimension == 2 else evaluation.DEFAULT_MAP_STRIDE_3D
        geom = phi_hat.geometry.strided(stride)
        from PIL import Image

        if kind == "entropy":
            m = evaluation.entropy_map(rec.session, geom)
            vals = m.values
            rngv = np.ptp(vals)
            img = ((vals - vals.min()) / rngv * 255 if rngv else np.zeros_like(vals)).astype(np.uint8)
            image = Image.fromarray(img)
        elif kind == "error":
            m = evaluation.error_heat_map(phi_hat, rec.session, geom)
            image = Image.fromarray((m.values * 255).astype(np.uint8))
        else:
            err = evaluation.error_heat_map(phi_hat, rec.session, geom)
            ent = evaluation.entropy_map(rec.session, geom)
            image = Image.fromarray(evaluation.blended_map(err, ent), mode="RGBA")
        buf = io.BytesIO()
        image.save(buf, format="PNG")
        return Response(buf.getvalue(), media_type="image/png")

    @app.get("/v1/images/{image_id}/tile")
    def get_tile(image_id: str, x0: int = 0, y0: int = 0, w: int = 256, h: int = 256):
        if not data_dir:
            raise HTTPException(status_code=404, detail="no image directory configured")
        path = pathlib.Path(data_dir) / image_id
        if not path.exists() or not path.resolve().is_relative_to(pathlib.Path(data_dir).resolve()):
            raise HTTPException(status_code=404, detail="unknown image")
        from PIL import Image

        img = Image.open(path).convert("L")
        tile = img.crop((x0, y0, x0 + w, y0 + h))
        buf = io.BytesIO()
        tile.save(buf, format="PNG")
        return Response(buf.getvalue(), media_type="image/png")

    _restore()
    return app
