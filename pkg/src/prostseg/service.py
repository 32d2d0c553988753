"""HTTP inference service backing the review UI.

One endpoint does the work: POST /api/v1/predict takes a grayscale image
(base64 PNG in JSON, or multipart upload), runs T stochastic passes, and
returns the decoded mask, the 16-bit uncertainty map, and summary
statistics. The seed is always echoed so any response can be reproduced
bit for bit.
"""

from __future__ import annotations

import base64
import io
import json
import math
import os
import secrets
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse
from PIL import Image, UnidentifiedImageError

from . import uncertainty
from .data.serialization import _flat_palette, quantize_intensities
from .domain import CANONICAL_SIZE, INTENSITY_STEPS, NUM_CLASSES, MriSlice
from .models import Family, ModelHandle, load_weights, set_stochastic

MAX_T = 200


@dataclass
class ServiceConfig:
    port: int = 8000
    model_dir: Path | None = None
    default_t: int = 50

    @classmethod
    def load(cls, path: Path | str | None = None) -> "ServiceConfig":
        """Read a JSON config file, then apply environment overrides."""
        cfg = cls()
        if path is not None:
            raw = json.loads(Path(path).read_text())
            cfg = cls(
                port=int(raw.get("port", cfg.port)),
                model_dir=Path(raw["model_dir"]) if raw.get("model_dir") else None,
                default_t=int(raw.get("default_t", cfg.default_t)),
            )
        if os.environ.get("PORT"):
            cfg.port = int(os.environ["PORT"])
        if os.environ.get("MODEL_DIR"):
            cfg.model_dir = Path(os.environ["MODEL_DIR"])
        if os.environ.get("DEFAULT_T"):
            cfg.default_t = int(os.environ["DEFAULT_T"])
        return cfg


class ModelRegistry:
    """Loaded models by family; mutations are exclusive, reads are free."""

    def __init__(self):
        self._models: dict[Family, ModelHandle] = {}
        self._lock = threading.Lock()
        self._loading = False

    def load_dir(self, model_dir: Path | str) -> int:
        """Load every ``*.pzw`` archive found under the directory."""
        model_dir = Path(model_dir)
        with self._lock:
            self._loading = True
        try:
            count = 0
            for path in sorted(model_dir.rglob("*.pzw")):
                self.load_file(path)
                count += 1
            return count
        finally:
            with self._lock:
                self._loading = False

    def load_file(self, path: Path | str) -> ModelHandle:
        handle = set_stochastic(load_weights(path), True)
        with self._lock:
            self._models[handle.spec.family] = handle
        return handle

    def get(self, family: Family) -> ModelHandle | None:
        with self._lock:
            return self._models.get(family)

    def entries(self) -> list[dict]:
        with self._lock:
            models = dict(self._models)
        return [
            {
                "family": family.value,
                "version": handle.version,
                "parameter_count": handle.parameter_count,
                "dropout_rate": handle.spec.dropout_rate,
            }
            for family, handle in sorted(models.items(), key=lambda kv: kv[0].value)
        ]

    @property
    def status(self) -> str:
        with self._lock:
            if self._loading:
                return "loading"
            return "ok" if self._models else "degraded"

    @property
    def count(self) -> int:
        with self._lock:
            return len(self._models)


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "detail": message})


def _decode_image(data: bytes) -> MriSlice:
    img = Image.open(io.BytesIO(data))
    img.load()
    if img.mode not in ("L", "I", "I;16", "F"):
        img = img.convert("L")
    arr = np.asarray(img)
    if arr.dtype == np.uint8:
        pixels = arr.astype(np.float64) / 255.0
    elif arr.dtype in (np.uint16, np.int32):
        pixels = arr.astype(np.float64) / INTENSITY_STEPS
    else:
        pixels = np.clip(arr.astype(np.float64), 0.0, 1.0)
    if pixels.shape != (CANONICAL_SIZE, CANONICAL_SIZE):
        pil = Image.fromarray(pixels.astype(np.float32), mode="F")
        pil = pil.resize((CANONICAL_SIZE, CANONICAL_SIZE), Image.BILINEAR)
        pixels = np.clip(np.asarray(pil), 0.0, 1.0)
    return MriSlice(pixels=quantize_intensities(pixels))


def _encode_label_png(labels: np.ndarray) -> str:
    img = Image.fromarray(labels.astype(np.uint8))
    img.putpalette(_flat_palette())
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _encode_uncertainty_png(values: np.ndarray) -> str:
    codes = np.rint(values.astype(np.float64) * INTENSITY_STEPS).astype(np.uint16)
    buf = io.BytesIO()
    Image.fromarray(codes).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def create_app(
    config: ServiceConfig | None = None,
    registry: ModelRegistry | None = None,
    frontend_dir: Path | str | None = None,
) -> FastAPI:
    config = config or ServiceConfig()
    registry = registry or ModelRegistry()
    app = FastAPI(title="prostseg inference service")
    app.state.registry = registry
    app.state.config = config
    app.state.started = time.monotonic()

    if config.model_dir is not None:
        registry.load_dir(config.model_dir)

    @app.get("/api/v1/health")
    def health():
        return {
            "status": registry.status,
            "models_loaded": registry.count,
            "uptime_s": time.monotonic() - app.state.started,
        }

    @app.get("/api/v1/models")
    def models():
        return registry.entries()

    @app.post("/api/v1/predict")
    async def predict(request: Request):
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("multipart/"):
            form = await request.form()
            upload = form.get("image")
            if upload is None:
                return _error(400, "UndecodableImage", "multipart field 'image' is required")
            image_bytes = await upload.read()
            fields = {k: v for k, v in form.items() if k != "image"}
        else:
            try:
                body = await request.json()
            except json.JSONDecodeError:
                return _error(400, "UndecodableImage", "body is neither JSON nor multipart")
            if not isinstance(body, dict) or "image" not in body:
                return _error(400, "UndecodableImage", "JSON field 'image' is required")
            try:
                image_bytes = base64.b64decode(body["image"], validate=True)
            except Exception:
                return _error(400, "UndecodableImage", "image is not valid base64")
            fields = body

        if registry.status == "loading":
            return _error(503, "ModelLoading", "models are still loading, retry shortly")

        try:
            t_value = int(fields.get("T", config.default_t))
        except (TypeError, ValueError):
            return _error(422, "TOutOfRange", "T must be an integer")
        if not 1 <= t_value <= MAX_T:
            return _error(422, "TOutOfRange", f"T must lie in 1..{MAX_T}")

        family_raw = fields.get("model_family") or Family.ATT_R2_UNET.value
        try:
            family = Family(str(family_raw))
        except ValueError:
            return _error(404, "UnknownModel", f"unknown family {family_raw!r}")
        handle = registry.get(family)
        if handle is None:
            return _error(404, "UnknownModel", f"no model loaded for {family.value}")

        try:
            slice_ = _decode_image(image_bytes)
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            return _error(400, "UndecodableImage", f"could not decode image: {exc}")

        seed_raw = fields.get("seed")
        seed = int(seed_raw) if seed_raw not in (None, "") else secrets.randbelow(2**31)
        normalize = str(fields.get("normalize_entropy", "true")).lower() != "false"

        stack = uncertainty.mc_sample(handle, slice_, T=t_value, base_seed=seed)
        mean_probs = uncertainty.predictive_mean(stack)
        umap = uncertainty.entropy_map(mean_probs)  # PNG codes are always [0,1]-scaled
        labels = mean_probs.argmax_labels()
        summary = uncertainty.summarize(umap, labels, grouping="by_prediction")
        summary_json = summary.to_json()
        if not normalize:
            # report the summary in raw nats; the map encoding is unchanged
            scale = math.log(float(NUM_CLASSES))
            for key in ("mean_overall", "sd_overall"):
                summary_json[key] *= scale
            for sub in ("per_class_mean", "per_class_sd"):
                summary_json[sub] = {k: v * scale for k, v in summary_json[sub].items()}

        return {
            "mask": _encode_label_png(labels),
            "mean_probs_available": True,
            "uncertainty": _encode_uncertainty_png(umap.values),
            "summary": summary_json,
            "model_version": handle.version,
            "seed": seed,
            "T": t_value,
        }

    if frontend_dir is not None:
        frontend_dir = Path(frontend_dir)

        @app.get("/")
        def index():
            return FileResponse(frontend_dir / "index.html")

        @app.get("/assets/{name}")
        def assets(name: str):
            target = (frontend_dir / name).resolve()
            if frontend_dir.resolve() not in target.parents or not target.exists():
                return _error(404, "NotFound", name)
            return FileResponse(target)

    return app
