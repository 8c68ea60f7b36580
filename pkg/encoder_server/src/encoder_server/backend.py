"""CLIP inference backend.

The vision tower never sees raw thermal radiometry: payloads arrive as
PNG (16-bit grayscale from the client pipeline, though 8-bit and RGB are
accepted), are mapped to [0, 1] by their dtype range, replicated to three
channels, and pushed through the checkpoint's own preprocessing. Features
are the projected pooled output, L2-normalized in float64 on the way out.

A single lock serializes forward passes. Requests still overlap in the
HTTP layer; inference is the scarce resource and eval-mode determinism is
worth more than parallel matmuls on one box.
"""

from __future__ import annotations

import base64
import binascii
import io
import threading

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

DEFAULT_TEMPLATE = "an infrared photo of a {label}"


class BadImageError(ValueError):
    """Client payload is not a decodable image. Maps to HTTP 400."""


class BackendError(RuntimeError):
    """Inference failed on a well-formed request. Maps to HTTP 500."""


def decode_image(image_png_b64: str) -> Image.Image:
    """Base64 PNG to an 8-bit RGB PIL image.

    Grayscale inputs keep their full dtype range when mapped to [0, 1]
    before the 8-bit conversion, so a 16-bit thermal frame is not crushed
    to its top byte.
    """
    try:
        raw = base64.b64decode(image_png_b64, validate=True)
    except (binascii.Error, ValueError) as e:
        raise BadImageError(f"image_png_b64 is not valid base64: {e}") from e
    try:
        with Image.open(io.BytesIO(raw)) as im:
            im.load()
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError, SyntaxError) as e:
        raise BadImageError(f"payload is not a decodable image: {e}") from e

    if arr.ndim == 2:
        if arr.dtype == np.uint8:
            g = arr.astype(np.float64) / 255.0
        elif arr.dtype == np.uint16:
            g = arr.astype(np.float64) / 65535.0
        elif np.issubdtype(arr.dtype, np.integer):
            g = np.clip(arr.astype(np.float64) / 65535.0, 0.0, 1.0)
        else:
            g = np.clip(arr.astype(np.float64), 0.0, 1.0)
        rgb = np.repeat(g[:, :, None], 3, axis=2)
    elif arr.ndim == 3 and arr.shape[2] in (3, 4):
        rgb = arr[:, :, :3].astype(np.float64)
        rgb /= 255.0 if arr.dtype == np.uint8 else max(float(rgb.max()), 1.0)
    else:
        raise BadImageError(f"unsupported image layout: shape {arr.shape}")
    return Image.fromarray(np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8))


class ClipBackend:
    """Embedding and zero-shot scoring over one CLIP checkpoint."""

    def __init__(self, model, processor, model_name: str,
                 template: str = DEFAULT_TEMPLATE, device: str = "cpu"):
        if "{label}" not in template:
            raise ValueError(f"template must contain '{{label}}', got {template!r}")
        self.model = model.to(device).eval()
        self.processor = processor
        self.model_name = model_name
        self.template = template
        self.device = device
        self.feature_dim = int(model.config.projection_dim)
        self.logit_scale = float(model.logit_scale.detach().exp())
        self._lock = threading.Lock()

    @classmethod
    def from_pretrained(cls, model_id: str, device: str = "cpu",
                        template: str = DEFAULT_TEMPLATE,
                        adapted: bool = False) -> "ClipBackend":
        """Load a checkpoint by hub id or local path.

        The reported model name records whether the weights are the stock
        release or a task-adapted variant; that string travels through
        /info into downstream sweep metadata, keeping the two cases
        distinguishable in saved results.
        """
        from transformers import CLIPModel, CLIPProcessor

        model = CLIPModel.from_pretrained(model_id)
        processor = CLIPProcessor.from_pretrained(model_id)
        tag = "adapted" if adapted else "stock"
        return cls(model, processor, f"{model_id} [{tag} weights]",
                   template=template, device=device)

    @staticmethod
    def _pooled(out) -> torch.Tensor:
        # transformers >= 4.48 returns the full vision/text output with the
        # projection written into pooler_output; older releases return the
        # projected tensor directly
        return out.pooler_output if hasattr(out, "pooler_output") else out

    def _image_features(self, image: Image.Image) -> np.ndarray:
        px = self.processor(images=[image], return_tensors="pt")["pixel_values"]
        out = self.model.get_image_features(pixel_values=px.to(self.device))
        return self._pooled(out)[0].cpu().numpy().astype(np.float64)

    def embed(self, image: Image.Image) -> np.ndarray:
        """Unit-norm pooled image feature, float64."""
        with self._lock, torch.no_grad():
            z = self._image_features(image)
        n = float(np.linalg.norm(z))
        if not np.isfinite(n) or n < 1e-12:
            raise BackendError("vision tower produced a degenerate feature")
        return z / n

    def scores(self, image: Image.Image, labels: list[str]) -> np.ndarray:
        """Temperature-scaled cosine logits against templated prompts."""
        prompts = [self.template.format(label=lb) for lb in labels]
        with self._lock, torch.no_grad():
            z = self._image_features(image)
            tok = self.processor(text=prompts, return_tensors="pt", padding=True)
            tok = {k: v.to(self.device) for k, v in tok.items()}
            t = self._pooled(self.model.get_text_features(**tok))
            t = t.cpu().numpy().astype(np.float64)
        zn = np.linalg.norm(z)
        tn = np.linalg.norm(t, axis=1, keepdims=True)
        if not np.isfinite(zn) or zn < 1e-12 or not np.all(np.isfinite(tn)) or tn.min() < 1e-12:
            raise BackendError("degenerate feature during score computation")
        return self.logit_scale * ((t / tn) @ (z / zn))
