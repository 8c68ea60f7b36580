"""Images, regions of interest, and dataset manifests.

Images are single-channel thermal intensity maps stored as float64 arrays in
[0, 1], shape (height, width). PNG is the interchange format: 8- and 16-bit
grayscale load losslessly up to quantization, RGB collapses via BT.601
luminance. Manifests are JSON files listing image paths with per-item ROIs
and a clean-label flag, plus a top-level target category.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageReadError, ManifestError, RoiError, UnsupportedImageError

MIN_ROI_SIDE = 8

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class IrImage:
    """Grayscale intensity image, values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 2 or d.size == 0:
            raise UnsupportedImageError(f"expected 2-d intensity array, got shape {d.shape}")
        if not np.isfinite(d).all():
            raise UnsupportedImageError("image contains non-finite values")
        if d.min() < 0.0 or d.max() > 1.0:
            raise UnsupportedImageError("intensities must lie in [0, 1]")
        object.__setattr__(self, "data", d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Roi:
    """Axis-aligned region of interest in pixel coordinates."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        for name in ("x0", "y0", "w", "h"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise RoiError(f"roi field {name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.x0 < 0 or self.y0 < 0:
            raise RoiError(f"roi origin must be non-negative, got ({self.x0}, {self.y0})")
        if self.w < MIN_ROI_SIDE or self.h < MIN_ROI_SIDE:
            raise RoiError(f"roi sides must be >= {MIN_ROI_SIDE}px, got {self.w}x{self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h

    def bounds_ok(self, img: IrImage) -> bool:
        return self.x0 + self.w <= img.width and self.y0 + self.h <= img.height


@dataclass(frozen=True)
class DatasetItem:
    image: str
    roi: Roi
    clean: bool


@dataclass(frozen=True)
class Dataset:
    """Ordered collection of samples sharing one target category."""

    category: str
    items: tuple[DatasetItem, ...]

    def __post_init__(self):
        if not self.category:
            raise ManifestError("manifest category must be a non-empty string")
        items = tuple(self.items)
        if len(items) < 2:
            raise ManifestError(f"dataset needs at least 2 items, got {len(items)}")
        object.__setattr__(self, "items", items)

    def __len__(self) -> int:
        return len(self.items)


def load_image(path: str) -> IrImage:
    """Load a PNG as intensities in [0, 1].

    Accepts 8-bit grayscale, 16-bit grayscale, and RGB (collapsed by BT.601
    luminance). Anything else is an UnsupportedImageError; unreadable files
    are an ImageReadError.
    """
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "L":
                arr = np.asarray(im, dtype=np.float64) / 255.0
            elif mode in ("I;16", "I;16B", "I;16L", "I;16N"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
            elif mode == "I":
                arr = np.asarray(im, dtype=np.float64)
                if arr.min() < 0 or arr.max() > 65535:
                    raise UnsupportedImageError(f"unsupported integer range in {path}")
                arr = arr / 65535.0
            elif mode == "RGB":
                arr = np.asarray(im, dtype=np.float64) @ _LUMA / 255.0
            elif mode == "RGBA":
                arr = np.asarray(im, dtype=np.float64)[..., :3] @ _LUMA / 255.0
            else:
                raise UnsupportedImageError(f"unsupported image mode {mode!r} in {path}")
    except UnsupportedImageError:
        raise
    except (FileNotFoundError, UnidentifiedImageError, OSError, ValueError) as e:
        raise ImageReadError(f"cannot read image {path}: {e}") from e
    return IrImage(np.clip(arr, 0.0, 1.0))


def save_image(img: IrImage, path: str, bit_depth: int = 8) -> None:
    """Write a PNG at the requested grayscale bit depth (8 or 16)."""
    if bit_depth == 8:
        q = np.round(img.data * 255.0).astype(np.uint8)
        pil = Image.fromarray(q, mode="L")
    elif bit_depth == 16:
        q = np.round(img.data * 65535.0).astype(np.uint16)
        pil = Image.fromarray(q)  # uint16 maps to 16-bit grayscale
    else:
        raise UnsupportedImageError(f"bit_depth must be 8 or 16, got {bit_depth}")
    pil.save(path, format="PNG")


def crop(img: IrImage, roi: Roi) -> IrImage:
    """Extract the ROI as a new image. Raises RoiError if out of bounds."""
    if not roi.bounds_ok(img):
        raise RoiError(
            f"roi ({roi.x0},{roi.y0},{roi.w},{roi.h}) exceeds image {img.width}x{img.height}"
        )
    return IrImage(img.data[roi.y0 : roi.y0 + roi.h, roi.x0 : roi.x0 + roi.w].copy())


def load_manifest(path: str) -> Dataset:
    """Parse a dataset manifest. Image paths resolve relative to the manifest."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except FileNotFoundError as e:
        raise ManifestError(f"manifest not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifest {path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ManifestError(f"manifest {path} must be a JSON object")
    category = doc.get("category")
    if not isinstance(category, str) or not category:
        raise ManifestError(f"manifest {path} missing non-empty 'category'")
    raw_items = doc.get("items")
    if not isinstance(raw_items, list):
        raise ManifestError(f"manifest {path} missing 'items' list")
    base = os.path.dirname(os.path.abspath(path))
    items = []
    for i, rec in enumerate(raw_items):
        if not isinstance(rec, dict):
            raise ManifestError(f"manifest {path} item {i} is not an object")
        img = rec.get("image")
        roi = rec.get("roi")
        if not isinstance(img, str) or not img:
            raise ManifestError(f"manifest {path} item {i} missing 'image' path")
        if not (isinstance(roi, list) and len(roi) == 4):
            raise ManifestError(f"manifest {path} item {i} 'roi' must be [x0, y0, w, h]")
        try:
            roi_t = Roi(*[int(v) for v in roi])
        except (TypeError, ValueError) as e:
            raise ManifestError(f"manifest {path} item {i} bad roi: {e}") from e
        clean = rec.get("clean", False)
        if not isinstance(clean, bool):
            raise ManifestError(f"manifest {path} item {i} 'clean' must be boolean")
        resolved = img if os.path.isabs(img) else os.path.join(base, img)
        items.append(DatasetItem(image=resolved, roi=roi_t, clean=clean))
    return Dataset(category=category, items=tuple(items))


def save_manifest(ds: Dataset, path: str) -> None:
    """Write a manifest; image paths are stored relative to it when possible."""
    base = os.path.dirname(os.path.abspath(path))
    items = []
    for it in ds.items:
        rel = os.path.relpath(it.image, base)
        stored = rel if not rel.startswith("..") else it.image
        items.append(
            {"image": stored, "roi": [it.roi.x0, it.roi.y0, it.roi.w, it.roi.h], "clean": it.clean}
        )
    with open(path, "w") as f:
        json.dump({"category": ds.category, "items": items}, f, indent=2, sort_keys=True)
        f.write("\n")


def unit_normalize(v: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """L2-normalize, raising on a near-zero vector."""
    n = float(np.linalg.norm(v))
    if n < eps:
        raise ValueError("cannot normalize a near-zero vector")
    return v / n


@dataclass(frozen=True)
class LoadedSample:
    """A dataset item with its image decoded into memory."""

    image: IrImage
    roi: Roi
    path: str
    clean: bool


def load_samples(ds: Dataset) -> list[LoadedSample]:
    """Decode every item, validating each ROI against its image."""
    out = []
    for it in ds.items:
        img = load_image(it.image)
        if not it.roi.bounds_ok(img):
            raise RoiError(
                f"roi ({it.roi.x0},{it.roi.y0},{it.roi.w},{it.roi.h}) exceeds "
                f"image {img.width}x{img.height} for {it.image}"
            )
        out.append(LoadedSample(image=img, roi=it.roi, path=it.image, clean=it.clean))
    return out
