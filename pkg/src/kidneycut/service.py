"""Local HTTP job service behind the annotation UI.

Images are stored under content-hash ids (uploads are idempotent); jobs run
on a bounded worker pool and their results are immutable once done. All
state lives on the filesystem under the data directory.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import __version__, evalkit
from .errors import FormatError, KidneycutError
from .gabor import gabor_feature_map
from .raster import GrayImage, load_image, save_image_png, save_mask_png
from .segmenter import SegConfig, run_segmentation


def _error(status: int, code: str, message: str, field_path: str | None = None) -> JSONResponse:
    body = {"code": code, "message": message}
    if field_path:
        body["field_path"] = field_path
    return JSONResponse(status_code=status, content=body)


class ServiceError(Exception):
    def __init__(self, status, code, message, field_path=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.field_path = field_path


def rle_encode(mask: np.ndarray) -> list:
    """Per-row run-length encoding: rows of [start_x, length] pairs."""
    rows = []
    for row in mask:
        runs = []
        padded = np.concatenate([[False], row, [False]])
        flips = np.nonzero(padded[1:] != padded[:-1])[0]
        for start, stop in zip(flips[0::2], flips[1::2]):
            runs.append([int(start), int(stop - start)])
        rows.append(runs)
    return rows


def rle_decode(rows: list, width: int) -> np.ndarray:
    mask = np.zeros((len(rows), width), dtype=bool)
    for y, runs in enumerate(rows):
        for start, length in runs:
            mask[y, start : start + length] = True
    return mask


class ImageStore:
    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)

    def put(self, data: bytes, content_type: str) -> dict:
        img = load_image(data)  # validates 8-bit grayscale PNG/PGM
        image_id = hashlib.sha256(data).hexdigest()
        blob = self.root / f"{image_id}.bin"
        if not blob.exists():
            blob.write_bytes(data)
            (self.root / f"{image_id}.json").write_text(
                json.dumps({"content_type": content_type, "width": img.width,
                            "height": img.height})
            )
        meta = json.loads((self.root / f"{image_id}.json").read_text())
        return {"image_id": image_id, "width": meta["width"], "height": meta["height"]}

    def get_bytes(self, image_id: str) -> tuple:
        blob = self.root / f"{image_id}.bin"
        if not blob.exists():
            raise ServiceError(404, "unknown_image", f"no image {image_id}")
        meta = json.loads((self.root / f"{image_id}.json").read_text())
        return blob.read_bytes(), meta

    def get_image(self, image_id: str) -> GrayImage:
        data, _ = self.get_bytes(image_id)
        return load_image(data)


class JobStore:
    """In-memory registry mirrored to per-job JSON files."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._jobs: dict[str, dict] = {}

    def create(self, request: dict) -> dict:
        job = {
            "id": uuid.uuid4().hex,
            "status": "queued",
            "image_id": request["image_id"],
            "points": request["points"],
            "config": request.get("config", {}),
            "truth_image_id": request.get("truth_image_id"),
            "submitted_at": time.time(),
            "started_at": None,
            "finished_at": None,
            "result": None,
            "error": None,
        }
        with self._lock:
            self._jobs[job["id"]] = job
            self._persist(job)
        return job

    def update(self, job_id: str, **fields) -> dict:
        with self._lock:
            job = self._jobs[job_id]
            job.update(fields)
            self._persist(job)
            return dict(job)

    def get(self, job_id: str) -> dict:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise ServiceError(404, "unknown_job", f"no job {job_id}")
            return dict(job)

    def job_dir(self, job_id: str) -> Path:
        d = self.root / job_id
        d.mkdir(parents=True, exist_ok=True)
        return d

    def _persist(self, job: dict) -> None:
        d = self.root / job["id"]
        d.mkdir(parents=True, exist_ok=True)
        (d / "job.json").write_text(json.dumps(job, indent=2, sort_keys=True))


def _validate_points(points, width, height):
    if not isinstance(points, list) or len(points) < 3:
        raise ServiceError(422, "invalid_points", "need at least 3 init points", "points")
    for i, pt in enumerate(points):
        if (not isinstance(pt, (list, tuple))) or len(pt) != 2:
            raise ServiceError(422, "invalid_points", "each point is an [x, y] pair",
                               f"points[{i}]")
        x, y = pt
        if not (isinstance(x, (int, float)) and isinstance(y, (int, float))):
            raise ServiceError(422, "invalid_points", "coordinates must be numbers",
                               f"points[{i}]")
        if not (0 <= x <= width - 1):
            raise ServiceError(422, "invalid_points", f"x={x} outside [0, {width - 1}]",
                               f"points[{i}][0]")
        if not (0 <= y <= height - 1):
            raise ServiceError(422, "invalid_points", f"y={y} outside [0, {height - 1}]",
                               f"points[{i}][1]")


def create_app(data_dir, workers: int = 2, ui_dir=None) -> FastAPI:
    data_root = Path(data_dir)
    images = ImageStore(data_root / "images")
    jobs = JobStore(data_root / "jobs")
    pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="segjob")
    app = FastAPI(title="kidneycut service", version=__version__)
    app.state.images = images
    app.state.jobs = jobs

    @app.exception_handler(ServiceError)
    async def _handle_service_error(request: Request, exc: ServiceError):
        return _error(exc.status, exc.code, str(exc), exc.field_path)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "version": __version__}

    @app.post("/images")
    async def upload_image(request: Request):
        data = await request.body()
        content_type = request.headers.get("content-type", "application/octet-stream")
        try:
            return images.put(data, content_type)
        except FormatError as exc:
            raise ServiceError(415, "unsupported_format", str(exc))

    @app.get("/images/{image_id}")
    def fetch_image(image_id: str):
        data, meta = images.get_bytes(image_id)
        return Response(content=data, media_type=meta.get("content_type", "application/octet-stream"))

    @app.get("/images/{image_id}/features/gabor.png")
    def gabor_feature_png(image_id: str):
        cache = images.root / f"{image_id}.gabor.png"
        if not cache.exists():
            img = images.get_image(image_id)
            fmap = gabor_feature_map(img)
            save_image_png(GrayImage(fmap.data), cache)
        return Response(content=cache.read_bytes(), media_type="image/png")

    def _execute(job_id: str):
        job = jobs.get(job_id)
        jobs.update(job_id, status="running", started_at=time.time())
        try:
            img = images.get_image(job["image_id"])
            cfg = SegConfig.from_dict(job["config"] or {})
            points = np.asarray(job["points"], dtype=np.float64)
            result = run_segmentation(img, points, cfg)
            job_dir = jobs.job_dir(job_id)
            save_mask_png(result.mask, job_dir / "mask.png")
            doc = {
                "width": result.mask.width,
                "height": result.mask.height,
                "mask_rle": rle_encode(result.mask.data),
                "mask_png_url": f"/jobs/{job_id}/mask.png",
                "contour": [[int(x), int(y)] for x, y in result.contour],
                "iterations": result.iterations_run,
                "converged": result.converged,
                "diagnostics": result.diagnostics,
                "manifest": {
                    "image_id": job["image_id"],
                    "init_points": job["points"],
                    "config": cfg.to_dict(),
                    "toolkit_version": __version__,
                },
            }
            if job.get("truth_image_id"):
                truth_img = images.get_image(job["truth_image_id"])
                from .raster import BinaryMask

                truth = BinaryMask(truth_img.data > 0.5)
                report = evalkit.metric_report(result.mask, truth)
                doc["metrics"] = report.to_dict()
            jobs.update(job_id, status="done", finished_at=time.time(), result=doc)
        except Exception as exc:  # job failure is a result, not a crash
            jobs.update(
                job_id,
                status="failed",
                finished_at=time.time(),
                error={"code": type(exc).__name__, "message": str(exc)},
            )

    @app.post("/jobs")
    async def submit_job(request: Request):
        try:
            body = await request.json()
        except Exception:
            raise ServiceError(422, "invalid_json", "request body is not valid JSON")
        if "image_id" not in body:
            raise ServiceError(422, "missing_field", "image_id is required", "image_id")
        _, meta = images.get_bytes(body["image_id"])
        if body.get("truth_image_id"):
            images.get_bytes(body["truth_image_id"])
        _validate_points(body.get("points"), meta["width"], meta["height"])
        if body.get("config"):
            try:
                SegConfig.from_dict(body["config"])
            except (ValueError, TypeError) as exc:
                raise ServiceError(422, "invalid_config", str(exc), "config")
        job = jobs.create(body)
        pool.submit(_execute, job["id"])
        return {"job_id": job["id"], "status": job["status"]}

    @app.get("/jobs/{job_id}")
    def fetch_job(job_id: str):
        job = jobs.get(job_id)
        doc = {
            "id": job["id"],
            "status": job["status"],
            "image_id": job["image_id"],
            "submitted_at": job["submitted_at"],
            "started_at": job["started_at"],
            "finished_at": job["finished_at"],
        }
        if job["status"] == "done":
            doc["result"] = job["result"]
        elif job["status"] == "failed":
            doc["error"] = job["error"]
        return doc

    @app.get("/jobs/{job_id}/mask.png")
    def fetch_mask(job_id: str):
        job = jobs.get(job_id)
        if job["status"] != "done":
            raise ServiceError(409, "not_done", f"job is {job['status']}")
        path = jobs.job_dir(job_id) / "mask.png"
        return Response(content=path.read_bytes(), media_type="image/png")

    ui_root = Path(ui_dir) if ui_dir else Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if ui_root.is_dir():
        app.mount("/", StaticFiles(directory=str(ui_root), html=True), name="ui")

    return app
