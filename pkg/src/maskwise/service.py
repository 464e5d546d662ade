"""HTTP API for interactive explanation sessions.

Each session holds one uploaded image and walks a fixed state machine:
upload -> mask -> segment -> (edit)* -> explain. Requests that skip a
stage get a 409 with a machine-readable code. Sessions live in memory
under an LRU cap; an evicted session answers 410 from then on. Every
binary artifact a route returns inline (base64) is also retrievable by
GET under .../artifact/{name}.

Error envelope everywhere: {"code": <machine readable>, "message": ...}.

Requests within one session are serialized by a per-session lock and
mutate the session only after the computation succeeds, so readers never
observe a half-updated session.
"""

from __future__ import annotations

import base64
import threading
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel

from . import editor, explainer
from .errors import (
    EmptyMask,
    MaskwiseError,
    ProtocolViolation,
    RegionLeftImage,
    RemoteUnavailable,
    SolverDiverged,
    TooFewPixels,
)
from .imgcore import (
    ImageTensor,
    RegionMask,
    decode_image,
    decode_mask,
    encode_mask_png,
    encode_png,
    encode_trinary_png,
    rasterize_polygon,
)
from .predictor import Predictor, RemotePredictor
from .segmentation import SegmentationConfig, SuperpixelMap, segment, suggest_counts

MAX_SESSIONS = 64


def suggested_total_k(height: int, width: int) -> int:
    """Cube-root heuristic: ~9 for a 28x28 digit, ~38 for a 224x224 photo."""
    return int(np.clip(round((height * width) ** (1.0 / 3.0)), 2, 64))


@dataclass
class Session:
    id: str
    original: ImageTensor
    predictor: Predictor
    mask: RegionMask | None = None
    superpixels: SuperpixelMap | None = None
    edits: list = field(default_factory=list)
    edited: ImageTensor | None = None
    last_explanation: dict | None = None
    artifacts: dict = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def current_image(self) -> ImageTensor:
        return self.edited if self.edited is not None else self.original


class SessionStore:
    """Thread-safe LRU map of live sessions; remembers evicted ids."""

    def __init__(self, cap: int = MAX_SESSIONS):
        self._cap = cap
        self._lock = threading.Lock()
        self._live: OrderedDict[str, Session] = OrderedDict()
        self._evicted: set = set()

    def add(self, session: Session) -> None:
        with self._lock:
            self._live[session.id] = session
            self._live.move_to_end(session.id)
            while len(self._live) > self._cap:
                old_id, _ = self._live.popitem(last=False)
                self._evicted.add(old_id)

    def get(self, session_id: str) -> Session:
        with self._lock:
            if session_id in self._live:
                self._live.move_to_end(session_id)
                return self._live[session_id]
            if session_id in self._evicted:
                raise HTTPException(410, detail={"code": "session_evicted",
                                                 "message": "session was evicted from the LRU cache"})
        raise HTTPException(404, detail={"code": "unknown_session",
                                         "message": f"no session {session_id!r}"})


class CreateSessionBody(BaseModel):
    image: str
    predictor: dict | None = None


class MaskBody(BaseModel):
    mask: str | None = None
    polygon: list | None = None


class SegmentBody(BaseModel):
    total_k: int | None = None
    inner_k: int | None = None
    outer_k: int | None = None
    spatial_weight: float = 1.0
    seed: int = 0


class EditBody(BaseModel):
    edits: list


class ExplainBody(BaseModel):
    num_samples: int = 1000
    num_features: int = 5
    kernel_width: float = 0.25
    ridge_alpha: float = 1.0
    occlusion: str = "mean-color"
    target_class: int | None = None
    distance_mode: str = "class"
    seed: int = 0


def _b64(raw: bytes) -> str:
    return base64.b64encode(raw).decode("ascii")


def _unb64(text: str) -> bytes:
    try:
        return base64.b64decode(text, validate=True)
    except Exception as exc:
        raise HTTPException(400, detail={"code": "malformed_image",
                                         "message": f"invalid base64: {exc}"}) from exc


_ERROR_STATUS = {
    "malformed_image": 400,
    "unsupported_format": 400,
    "empty_mask": 422,
    "too_few_pixels": 422,
    "region_left_image": 422,
    "mask_covers_everything": 422,
    "remote_unavailable": 502,
    "protocol_violation": 502,
    "solver_diverged": 500,
}


def _raise_for(err: MaskwiseError):
    status = _ERROR_STATUS.get(err.code, 400)
    raise HTTPException(status, detail={"code": err.code, "message": str(err)})


def _need(condition: bool, code: str, message: str):
    if not condition:
        raise HTTPException(409, detail={"code": code, "message": message})


def create_app(default_predictor: Predictor, max_sessions: int = MAX_SESSIONS,
               static_dir: str | None = None) -> FastAPI:
    """Build the app around a predictor instance.

    Session creation may override the predictor with a remote one; builtin
    kinds in the request fall back to ``default_predictor`` since weights
    only live server-side.
    """
    app = FastAPI(title="maskwise", docs_url=None, redoc_url=None)
    store = SessionStore(cap=max_sessions)

    @app.exception_handler(HTTPException)
    async def _http_error(request: Request, exc: HTTPException):
        detail = exc.detail
        if not isinstance(detail, dict) or "code" not in detail:
            detail = {"code": f"http_{exc.status_code}", "message": str(detail)}
        return JSONResponse(status_code=exc.status_code, content=detail)

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=422, content={
            "code": "validation_error",
            "message": "; ".join(f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}"
                                 for e in exc.errors()),
        })

    @app.get("/api/health")
    def health():
        return {"status": "ok"}

    @app.post("/api/session")
    def create_session(body: CreateSessionBody):
        try:
            img = decode_image(_unb64(body.image))
        except MaskwiseError as err:
            _raise_for(err)
        predictor = default_predictor
        if body.predictor and body.predictor.get("kind") == "remote":
            spec = body.predictor
            try:
                predictor = RemotePredictor(spec["endpoint"], tuple(spec["input_dims"]),
                                            batch_limit=int(spec.get("batch_limit", 128)))
            except (KeyError, TypeError, ValueError) as exc:
                raise HTTPException(422, detail={"code": "validation_error",
                                                 "message": f"bad predictor spec: {exc}"})
        session = Session(id=uuid.uuid4().hex, original=img, predictor=predictor)
        store.add(session)
        return {
            "session_id": session.id,
            "suggested_total_k": suggested_total_k(img.height, img.width),
            "height": img.height,
            "width": img.width,
            "channels": img.channels,
        }

    @app.put("/api/session/{session_id}/mask")
    def put_mask(session_id: str, body: MaskBody):
        session = store.get(session_id)
        with session.lock:
            dims = (session.original.height, session.original.width)
            try:
                if body.polygon is not None:
                    if len(body.polygon) < 3:
                        raise HTTPException(422, detail={"code": "validation_error",
                                                         "message": "polygon needs >= 3 vertices"})
                    mask = rasterize_polygon(body.polygon, dims)
                    mask.require_selection()
                elif body.mask is not None:
                    mask = decode_mask(_unb64(body.mask), dims)
                else:
                    raise HTTPException(422, detail={"code": "validation_error",
                                                     "message": "provide mask or polygon"})
            except MaskwiseError as err:
                _raise_for(err)
            session.mask = mask
            session.superpixels = None
            session.edits = []
            session.edited = None
            session.last_explanation = None
            session.artifacts["mask.png"] = encode_mask_png(mask)
            total = dims[0] * dims[1]
            return {
                "pixels": mask.count,
                "coverage_pct": 100.0 * mask.count / total,
            }

    @app.post("/api/session/{session_id}/segment")
    def post_segment(session_id: str, body: SegmentBody):
        session = store.get(session_id)
        with session.lock:
            _need(session.mask is not None, "mask_required",
                  "set a mask before segmenting")
            if body.inner_k is not None and body.outer_k is not None:
                inner_k, outer_k = body.inner_k, body.outer_k
            elif body.total_k is not None:
                inner_k, outer_k = suggest_counts(session.mask, body.total_k)
            else:
                raise HTTPException(422, detail={"code": "validation_error",
                                                 "message": "provide total_k or inner_k and outer_k"})
            try:
                cfg = SegmentationConfig(inner_k=inner_k, outer_k=outer_k,
                                         spatial_weight=body.spatial_weight, seed=body.seed)
                spmap = segment(session.original, session.mask, cfg)
            except (ValueError, MaskwiseError) as err:
                if isinstance(err, MaskwiseError):
                    _raise_for(err)
                raise HTTPException(422, detail={"code": "validation_error", "message": str(err)})
            session.superpixels = spmap
            session.last_explanation = None
            label_png = spmap.to_label_png()
            session.artifacts["labels.png"] = label_png
            return {
                "superpixels": spmap.to_json_dict(),
                "inner_k": inner_k,
                "outer_k": outer_k,
                "label_png": _b64(label_png),
            }

    @app.post("/api/session/{session_id}/edit")
    def post_edit(session_id: str, body: EditBody):
        session = store.get(session_id)
        with session.lock:
            _need(session.mask is not None, "mask_required", "set a mask before editing")
            _need(session.superpixels is not None, "segment_required",
                  "segment before editing")
            try:
                ops = editor.parse_edit_spec(body.edits)
            except (KeyError, TypeError, ValueError) as exc:
                raise HTTPException(422, detail={"code": "validation_error",
                                                 "message": f"bad edit spec: {exc}"})
            try:
                result = editor.apply_edits(session.original, session.mask, ops)
                before, after = session.predictor.predict_batch(
                    [session.original, result.image])
            except RemoteUnavailable as err:
                _raise_for(err)
            except ProtocolViolation as err:
                _raise_for(err)
            except (SolverDiverged, RegionLeftImage, EmptyMask) as err:
                _raise_for(err)
            session.edits = list(ops)
            session.edited = result.image
            session.last_explanation = None
            edited_png = encode_png(result.image)
            session.artifacts["edited.png"] = edited_png
            return {
                "edited_png": _b64(edited_png),
                "inpainted_pixels": result.inpainted_pixels,
                "report": explainer.compare_predictions(before, after),
                "edits": editor.edit_spec_to_json(ops),
            }

    @app.post("/api/session/{session_id}/explain")
    def post_explain(session_id: str, body: ExplainBody):
        session = store.get(session_id)
        with session.lock:
            _need(session.superpixels is not None, "segment_required",
                  "segment before explaining")
            try:
                cfg = explainer.ExplainConfig(
                    num_samples=body.num_samples, num_features=body.num_features,
                    kernel_width=body.kernel_width, ridge_alpha=body.ridge_alpha,
                    occlusion=body.occlusion, target_class=body.target_class,
                    distance_mode=body.distance_mode, seed=body.seed)
            except ValueError as exc:
                raise HTTPException(422, detail={"code": "validation_error", "message": str(exc)})
            img = session.current_image()
            try:
                exp = explainer.explain(img, session.superpixels, session.predictor, cfg)
            except (RemoteUnavailable, ProtocolViolation) as err:
                _raise_for(err)
            except MaskwiseError as err:
                _raise_for(err)
            overlay_png = encode_png(explainer.render_overlay(img, session.superpixels, exp))
            trinary_png = encode_trinary_png(explainer.trinary_mask(session.superpixels, exp))
            exp_json = exp.to_json_dict(session.superpixels)
            session.last_explanation = exp_json
            session.artifacts["overlay.png"] = overlay_png
            session.artifacts["trinary.png"] = trinary_png
            return {
                "explanation": exp_json,
                "overlay_png": _b64(overlay_png),
                "trinary_png": _b64(trinary_png),
            }

    @app.get("/api/session/{session_id}")
    def get_session(session_id: str):
        session = store.get(session_id)
        with session.lock:
            return {
                "session_id": session.id,
                "height": session.original.height,
                "width": session.original.width,
                "channels": session.original.channels,
                "has_mask": session.mask is not None,
                "mask_pixels": session.mask.count if session.mask is not None else 0,
                "superpixels": (session.superpixels.to_json_dict()
                                if session.superpixels is not None else None),
                "edits": editor.edit_spec_to_json(session.edits),
                "last_explanation": session.last_explanation,
                "predictor": session.predictor.spec.to_json_dict(),
                "artifacts": sorted(session.artifacts),
            }

    @app.get("/api/session/{session_id}/artifact/{name}")
    def get_artifact(session_id: str, name: str):
        session = store.get(session_id)
        with session.lock:
            if name not in session.artifacts:
                raise HTTPException(404, detail={"code": "unknown_artifact",
                                                 "message": f"no artifact {name!r}"})
            return Response(content=session.artifacts[name], media_type="image/png")

    if static_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
