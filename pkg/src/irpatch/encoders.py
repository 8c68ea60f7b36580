"""Feature encoders: a self-contained toy backend and a remote HTTP client.

Both expose the same narrow surface: unit-norm embeddings of intensity
images plus per-label class scores. The toy encoder is a fixed seeded
projection of pooled intensity and gradient-energy statistics; it is fast,
deterministic, and has no learned weights, which keeps the whole pipeline
runnable offline. The remote client speaks a small JSON-over-HTTP protocol
to a real embedding server.
"""

from __future__ import annotations

import base64
import hashlib
import io
import itertools
import os
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

import httpx
import numpy as np
from PIL import Image

from .core import IrImage
from .errors import EncoderError, RemoteProtocolError
from .rng import STREAM_PROJECTION, STREAM_PROTOTYPE, stream_rng

DEFAULT_LABELS = (
    "person", "dog", "car", "bicycle", "motorbike",
    "bird", "cat", "horse", "truck", "boat",
)

_POOL = 8
_RESIZE = 32
_RAW_DIM = 3 * _POOL * _POOL  # intensity + horizontal and vertical gradient energy


class Encoder(ABC):
    """Embedding backend with optional zero-shot class scores."""

    kind: str
    feature_dim: int
    class_labels: tuple[str, ...] | None

    @abstractmethod
    def encode(self, img: IrImage) -> np.ndarray:
        """Unit-norm feature vector for one image."""

    @abstractmethod
    def class_scores(self, img: IrImage) -> np.ndarray:
        """Score per label in class_labels order."""

    def encode_batch(self, imgs: list[IrImage]) -> list[np.ndarray]:
        """Elementwise equal to mapping encode over the list."""
        return [self.encode(x) for x in imgs]

    def describe(self) -> str:
        """Backend identity string, recorded in sweep metadata."""
        return self.kind


@lru_cache(maxsize=64)
def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic matrix averaging n_in samples into n_out area bins."""
    w = np.zeros((n_out, n_in))
    width = n_in / n_out
    for i in range(n_out):
        lo, hi = i * width, (i + 1) * width
        j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
        for j in range(j0, min(j1, n_in)):
            w[i, j] = max(0.0, min(hi, j + 1) - max(lo, j)) / width
    return w


def area_resize(data: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Exact box-average resampling to (out_h, out_w)."""
    wr = _area_weights(data.shape[0], out_h)
    wc = _area_weights(data.shape[1], out_w)
    return wr @ data @ wc.T


class ToyEncoder(Encoder):
    """Seeded random-projection encoder over pooled image statistics.

    Pipeline: area-average to 32x32, pool intensities to 8x8, append 8x8
    pools of squared horizontal and vertical gradients (192 raw dims),
    project through a fixed seeded Gaussian matrix, L2-normalize. Class
    scores are 100 x cosine against fixed seeded unit prototypes, one per
    label, derived from (seed, label) so label list order is irrelevant.

    A near-zero projection (e.g. a constant-zero image) falls back to a
    fixed seeded unit vector so encode always returns a valid feature.
    """

    kind = "toy"

    def __init__(self, seed: int = 0, feature_dim: int = 32,
                 labels: tuple[str, ...] | None = DEFAULT_LABELS):
        if feature_dim < 2:
            raise ValueError(f"feature_dim must be >= 2, got {feature_dim}")
        self.seed = int(seed)
        self.feature_dim = int(feature_dim)
        self.class_labels = tuple(labels) if labels is not None else None
        rng = stream_rng(self.seed, STREAM_PROJECTION)
        self._proj = rng.normal(0.0, 1.0, size=(_RAW_DIM, self.feature_dim)) / np.sqrt(_RAW_DIM)
        fb = self._proj.T @ np.ones(_RAW_DIM)
        self._fallback = fb / np.linalg.norm(fb)
        self._protos = (
            np.stack([self.prototype(lb) for lb in self.class_labels])
            if self.class_labels
            else None
        )

    def describe(self) -> str:
        return f"toy(seed={self.seed}, dim={self.feature_dim})"

    def prototype(self, label: str) -> np.ndarray:
        """Fixed unit prototype for a label under this encoder's seed."""
        h = int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "big")
        rng = stream_rng(self.seed, STREAM_PROTOTYPE, h)
        v = rng.normal(0.0, 1.0, size=self.feature_dim)
        return v / np.linalg.norm(v)

    def _raw(self, img: IrImage) -> np.ndarray:
        x = area_resize(img.data, _RESIZE, _RESIZE)
        blk = _RESIZE // _POOL
        pool = x.reshape(_POOL, blk, _POOL, blk).mean(axis=(1, 3))
        gy, gx = np.gradient(x)
        ex = (gx**2).reshape(_POOL, blk, _POOL, blk).mean(axis=(1, 3))
        ey = (gy**2).reshape(_POOL, blk, _POOL, blk).mean(axis=(1, 3))
        return np.concatenate([pool.ravel(), ex.ravel(), ey.ravel()])

    def encode(self, img: IrImage) -> np.ndarray:
        z = self._raw(img) @ self._proj
        n = float(np.linalg.norm(z))
        if n < 1e-12:
            return self._fallback.copy()
        return z / n

    def scores_from_feature(self, z: np.ndarray) -> np.ndarray:
        if self._protos is None:
            raise EncoderError("toy encoder has no labels configured")
        return 100.0 * (self._protos @ z)

    def class_scores(self, img: IrImage) -> np.ndarray:
        return self.scores_from_feature(self.encode(img))


class RemoteEncoder(Encoder):
    """Client for the embedding wire protocol.

    Endpoints: GET /info reports feature_dim and model name; POST /embed and
    POST /scores take a base64 PNG keyed by a request id the server must
    echo. Batches fan out over a thread pool with several requests in
    flight; results return in input order and the first failing index wins
    error reporting.
    """

    kind = "remote"

    def __init__(
        self,
        base_url: str,
        labels: tuple[str, ...] | None = None,
        timeout: float = 30.0,
        client: httpx.Client | None = None,
        max_inflight: int = 8,
    ):
        if max_inflight < 1:
            raise ValueError(f"max_inflight must be >= 1, got {max_inflight}")
        self.base_url = base_url.rstrip("/")
        self.class_labels = tuple(labels) if labels is not None else None
        self.max_inflight = int(max_inflight)
        self._client = client or httpx.Client(
            timeout=timeout,
            limits=httpx.Limits(max_connections=max(8, max_inflight)),
        )
        self._ids = itertools.count()
        self._id_prefix = os.urandom(4).hex()
        info = self._get("/info")
        try:
            self.feature_dim = int(info["feature_dim"])
            self.model_name = str(info["model"])
        except (KeyError, TypeError, ValueError) as e:
            raise RemoteProtocolError(f"malformed /info response: {info!r}") from e

    def describe(self) -> str:
        # model string comes from /info, so stock vs adapted checkpoints
        # stay distinguishable in sweep metadata
        return f"remote({self.model_name})"

    def _next_id(self) -> str:
        return f"{self._id_prefix}-{next(self._ids)}"

    def _get(self, path: str) -> dict:
        try:
            resp = self._client.get(self.base_url + path)
        except httpx.HTTPError as e:
            raise EncoderError(f"GET {path} failed: {e}") from e
        return self._check(resp, path)

    def _post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._client.post(self.base_url + path, json=payload)
        except httpx.HTTPError as e:
            raise EncoderError(f"POST {path} failed: {e}") from e
        return self._check(resp, path)

    @staticmethod
    def _check(resp: httpx.Response, path: str) -> dict:
        if resp.status_code != 200:
            try:
                msg = resp.json().get("error", resp.text)
            except ValueError:
                msg = resp.text
            raise RemoteProtocolError(f"{path} returned {resp.status_code}: {msg}")
        try:
            doc = resp.json()
        except ValueError as e:
            raise RemoteProtocolError(f"{path} returned non-JSON body") from e
        if not isinstance(doc, dict):
            raise RemoteProtocolError(f"{path} returned non-object JSON")
        return doc

    @staticmethod
    def _png_b64(img: IrImage) -> str:
        q = np.round(img.data * 65535.0).astype(np.uint16)
        buf = io.BytesIO()
        Image.fromarray(q).save(buf, format="PNG")  # uint16 -> 16-bit grayscale PNG
        return base64.b64encode(buf.getvalue()).decode("ascii")

    def encode(self, img: IrImage) -> np.ndarray:
        rid = self._next_id()
        doc = self._post("/embed", {"id": rid, "image_png_b64": self._png_b64(img)})
        if doc.get("id") != rid:
            raise RemoteProtocolError(f"/embed response id {doc.get('id')!r} != request {rid!r}")
        values = doc.get("values")
        if not isinstance(values, list) or doc.get("dim") != len(values):
            raise RemoteProtocolError("/embed response dim/values mismatch")
        z = np.asarray(values, dtype=np.float64)
        if z.shape != (self.feature_dim,) or not np.isfinite(z).all():
            raise RemoteProtocolError(f"/embed returned bad vector of shape {z.shape}")
        if abs(float(np.linalg.norm(z)) - 1.0) > 1e-3:
            raise RemoteProtocolError("/embed returned a non-unit feature")
        return z

    def class_scores(self, img: IrImage) -> np.ndarray:
        if not self.class_labels:
            raise EncoderError("remote encoder has no labels configured")
        rid = self._next_id()
        doc = self._post(
            "/scores",
            {"id": rid, "image_png_b64": self._png_b64(img), "labels": list(self.class_labels)},
        )
        if doc.get("id") != rid:
            raise RemoteProtocolError(f"/scores response id {doc.get('id')!r} != request {rid!r}")
        scores = doc.get("scores")
        if not isinstance(scores, list) or len(scores) != len(self.class_labels):
            raise RemoteProtocolError("/scores response length mismatch")
        s = np.asarray(scores, dtype=np.float64)
        if not np.isfinite(s).all():
            raise RemoteProtocolError("/scores returned non-finite values")
        return s

    def encode_batch(self, imgs: list[IrImage]) -> list[np.ndarray]:
        if not imgs:
            return []
        results: list = [None] * len(imgs)
        errors: dict[int, Exception] = {}
        with ThreadPoolExecutor(max_workers=self.max_inflight) as pool:
            futs = {pool.submit(self.encode, im): i for i, im in enumerate(imgs)}
            for fut, i in futs.items():
                try:
                    results[i] = fut.result()
                except Exception as e:  # noqa: BLE001 - collected and re-raised below
                    errors[i] = e
        if errors:
            i = min(errors)
            raise EncoderError(f"batch encode failed at index {i}: {errors[i]}") from errors[i]
        return results

    def close(self) -> None:
        self._client.close()
