"""Simulated capture-condition transforms for robust optimization.

Each candidate is scored in expectation over random viewing and sensor
conditions: geometric jitter (scale, rotation, perspective via corner
jitter, translation, thin-plate-spline bending) followed by photometric
jitter (blur, noise, quantization, brightness/contrast). Stage order is
fixed. A TransformSpec is a concrete sample; applying the same spec to the
same image is deterministic, including the noise field.

Geometric stages compose into a single inverse map so the image is
resampled once (bilinear, edge replicate). Inactive stages are stored as
None and skipped, so an all-identity spec returns the input untouched.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import ndimage

from .core import IrImage
from .rng import STREAM_NOISE, STREAM_TRANSFORM, stream_rng


@dataclass(frozen=True)
class AugmentConfig:
    """Sampling ranges and per-stage apply probabilities."""

    scale_jitter: float = 0.10
    rotation_deg: float = 5.0
    corner_jitter: float = 0.03
    translate_px: float = 4.0
    tps_points: int = 9
    tps_disp: float = 0.05
    blur_sigma: tuple[float, float] = (0.0, 1.5)
    noise_sigma: tuple[float, float] = (0.0, 0.03)
    quantize_levels: tuple[int, int] = (32, 256)
    brightness: float = 0.08
    contrast: tuple[float, float] = (0.9, 1.1)
    p_scale: float = 1.0
    p_rotate: float = 1.0
    p_homography: float = 1.0
    p_translate: float = 1.0
    p_tps: float = 1.0
    p_blur: float = 1.0
    p_noise: float = 1.0
    p_quantize: float = 1.0
    p_brightness_contrast: float = 1.0

    def __post_init__(self):
        if self.scale_jitter < 0 or self.scale_jitter >= 1:
            raise ValueError(f"scale_jitter must be in [0, 1), got {self.scale_jitter}")
        if self.rotation_deg < 0 or self.corner_jitter < 0 or self.translate_px < 0:
            raise ValueError("rotation_deg, corner_jitter, translate_px must be >= 0")
        m = int(round(math.sqrt(self.tps_points)))
        if m * m != self.tps_points or m < 2:
            raise ValueError(f"tps_points must be a square number >= 4, got {self.tps_points}")
        if self.tps_disp < 0:
            raise ValueError(f"tps_disp must be >= 0, got {self.tps_disp}")
        for name in ("blur_sigma", "noise_sigma", "contrast"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is inverted: {getattr(self, name)}")
            object.__setattr__(self, name, (float(lo), float(hi)))
        qlo, qhi = self.quantize_levels
        if int(qlo) < 2 or int(qlo) > int(qhi):
            raise ValueError(f"quantize_levels must satisfy 2 <= lo <= hi, got {self.quantize_levels}")
        object.__setattr__(self, "quantize_levels", (int(qlo), int(qhi)))
        if self.blur_sigma[0] < 0 or self.noise_sigma[0] < 0:
            raise ValueError("blur_sigma and noise_sigma must be >= 0")
        if self.brightness < 0:
            raise ValueError(f"brightness must be >= 0, got {self.brightness}")
        if self.contrast[0] <= 0:
            raise ValueError(f"contrast must be > 0, got {self.contrast}")
        for name in (
            "p_scale", "p_rotate", "p_homography", "p_translate", "p_tps",
            "p_blur", "p_noise", "p_quantize", "p_brightness_contrast",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    @property
    def tps_grid(self) -> int:
        return int(round(math.sqrt(self.tps_points)))


def identity_augment_config() -> AugmentConfig:
    """Config whose every sample is the identity transform."""
    return AugmentConfig(
        scale_jitter=0.0,
        rotation_deg=0.0,
        corner_jitter=0.0,
        translate_px=0.0,
        tps_disp=0.0,
        blur_sigma=(0.0, 0.0),
        noise_sigma=(0.0, 0.0),
        brightness=0.0,
        contrast=(1.0, 1.0),
        p_quantize=0.0,
    )


@dataclass(frozen=True)
class TransformSpec:
    """One concrete transform draw. None marks an inactive stage.

    Spatial parameters are stored in resolution-independent units (scale
    factor, degrees, fractions of side, pixel offsets) and resolved against
    the image at apply time.
    """

    scale: float | None = None
    rotation_deg: float | None = None
    corner_shift: tuple | None = None  # ((dx_frac, dy_frac) x 4), of (w-1, h-1)
    translate: tuple[float, float] | None = None  # pixels
    tps_disp: tuple | None = None  # (m, m, 2) fractions of min(w-1, h-1)
    blur_sigma: float | None = None
    noise_sigma: float | None = None
    noise_seed: int = 0
    quantize_levels: int | None = None
    brightness: float | None = None
    contrast: float | None = None

    def is_identity(self) -> bool:
        return all(
            getattr(self, f) is None
            for f in (
                "scale", "rotation_deg", "corner_shift", "translate", "tps_disp",
                "blur_sigma", "noise_sigma", "quantize_levels", "brightness", "contrast",
            )
        )


def sample_transform(cfg: AugmentConfig, seed: int) -> TransformSpec:
    """Draw one TransformSpec. Same (cfg, seed) yields the same spec.

    The draw layout is fixed: activation flags first, then every stage's
    parameters regardless of activation, so configs with equal ranges
    consume the stream identically.
    """
    rng = stream_rng(seed, STREAM_TRANSFORM)
    flags = rng.random(9)
    m = cfg.tps_grid

    scale = 1.0 + rng.uniform(-cfg.scale_jitter, cfg.scale_jitter)
    rot = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg)
    corners = rng.uniform(-cfg.corner_jitter, cfg.corner_jitter, size=(4, 2))
    trans = rng.uniform(-cfg.translate_px, cfg.translate_px, size=2)
    tps = rng.uniform(-cfg.tps_disp, cfg.tps_disp, size=(m, m, 2))
    blur = rng.uniform(*cfg.blur_sigma)
    noise = rng.uniform(*cfg.noise_sigma)
    noise_seed = int(rng.integers(0, 2**63 - 1))
    qlo, qhi = cfg.quantize_levels
    quant = int(rng.integers(qlo, qhi + 1))
    bright = rng.uniform(-cfg.brightness, cfg.brightness)
    contrast = rng.uniform(*cfg.contrast)

    def active(i: int, p: float, is_ident: bool):
        return flags[i] < p and not is_ident

    return TransformSpec(
        scale=scale if active(0, cfg.p_scale, scale == 1.0) else None,
        rotation_deg=rot if active(1, cfg.p_rotate, rot == 0.0) else None,
        corner_shift=(
            tuple(map(tuple, corners))
            if active(2, cfg.p_homography, not corners.any())
            else None
        ),
        translate=tuple(trans) if active(3, cfg.p_translate, not trans.any()) else None,
        tps_disp=(
            tuple(tuple(map(tuple, row)) for row in tps)
            if active(4, cfg.p_tps, not tps.any())
            else None
        ),
        blur_sigma=blur if active(5, cfg.p_blur, blur == 0.0) else None,
        noise_sigma=noise if active(6, cfg.p_noise, noise == 0.0) else None,
        noise_seed=noise_seed,
        quantize_levels=quant if flags[7] < cfg.p_quantize else None,
        brightness=bright if active(8, cfg.p_brightness_contrast, bright == 0.0 and contrast == 1.0) else None,
        contrast=contrast if active(8, cfg.p_brightness_contrast, bright == 0.0 and contrast == 1.0) else None,
    )


def _affine_about_center(scale: float, rot_deg: float, w: int, h: int) -> np.ndarray:
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    th = math.radians(rot_deg)
    c, s = math.cos(th), math.sin(th)
    # rotate then... caller composes; this is rotation*scale about center
    a = scale * c
    b = scale * s
    return np.array(
        [
            [a, -b, cx - a * cx + b * cy],
            [b, a, cy - b * cx - a * cy],
            [0.0, 0.0, 1.0],
        ]
    )


def _homography_from_corners(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x3 homography mapping the four src points onto dst."""
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i in range(4):
        x, y = src[i]
        u, v = dst[i]
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i] = u
        b[2 * i + 1] = v
    coef = np.linalg.solve(a, b)
    return np.array(
        [
            [coef[0], coef[1], coef[2]],
            [coef[3], coef[4], coef[5]],
            [coef[6], coef[7], 1.0],
        ]
    )


class TpsModel:
    """Exact thin-plate-spline interpolant fitted to point correspondences."""

    def __init__(self, src: np.ndarray, weights: np.ndarray, affine: np.ndarray):
        self._src = src
        self._w = weights  # (n, 2)
        self._a = affine  # (3, 2) rows: const, x, y

    def transform(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        dx = pts[:, 0:1] - self._src[None, :, 0]
        dy = pts[:, 1:2] - self._src[None, :, 1]
        d2 = dx * dx + dy * dy
        u = np.where(d2 > 0.0, 0.5 * d2 * np.log(np.where(d2 > 0.0, d2, 1.0)), 0.0)
        base = np.column_stack([np.ones(len(pts)), pts])
        return base @ self._a + u @ self._w


def tps_fit(src: np.ndarray, dst: np.ndarray) -> TpsModel:
    """Fit a TPS that maps each src point exactly onto its dst point.

    Radial kernel r^2 log r plus an affine part; coefficients come from the
    exact linear system, no smoothing. Duplicate src points are rejected.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.ndim != 2 or src.shape[1] != 2 or src.shape != dst.shape:
        raise ValueError(f"src/dst must be matching (n, 2) arrays, got {src.shape} {dst.shape}")
    n = len(src)
    if n < 3:
        raise ValueError(f"TPS needs at least 3 control points, got {n}")
    d2 = ((src[:, None, :] - src[None]) ** 2).sum(axis=2)
    if (d2 + np.eye(n) <= 0.0).any():
        raise ValueError("duplicate TPS control points")
    k = np.where(d2 > 0.0, 0.5 * d2 * np.log(np.where(d2 > 0.0, d2, 1.0)), 0.0)
    p = np.column_stack([np.ones(n), src])
    a = np.zeros((n + 3, n + 3))
    a[:n, :n] = k
    a[:n, n:] = p
    a[n:, :n] = p.T
    rhs = np.zeros((n + 3, 2))
    rhs[:n] = dst
    try:
        sol = np.linalg.solve(a, rhs)
    except np.linalg.LinAlgError as e:
        raise ValueError(f"degenerate TPS control configuration: {e}") from e
    return TpsModel(src=src, weights=sol[:n], affine=sol[n:])


def tps_warp(img: IrImage, src: np.ndarray, dst: np.ndarray) -> IrImage:
    """Warp so content at each src control point lands at its dst point.

    Backward mapping: a TPS fitted dst -> src supplies, for every output
    pixel, the input location to sample (bilinear, edge replicate).
    """
    model = tps_fit(dst, src)
    h, w = img.data.shape
    ys, xs = np.mgrid[0:h, 0:w]
    pts = np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
    mapped = model.transform(pts)
    out = ndimage.map_coordinates(
        img.data, [mapped[:, 1].reshape(h, w), mapped[:, 0].reshape(h, w)],
        order=1, mode="nearest",
    )
    return IrImage(np.clip(out, 0.0, 1.0))


def apply(spec: TransformSpec, img: IrImage) -> IrImage:
    """Run the transform chain on one image.

    Geometric stages (scale, rotate, perspective, translate, then TPS) fold
    into one backward map and a single bilinear resample; photometric stages
    (blur, noise, quantize, brightness/contrast) follow in order. Output
    dims equal input dims; values clamp to [0, 1].
    """
    data = img.data
    h, w = data.shape

    mapped = _backward_coords(spec, w, h)
    if mapped is not None:
        data = ndimage.map_coordinates(
            data, [mapped[:, 1].reshape(h, w), mapped[:, 0].reshape(h, w)],
            order=1, mode="nearest",
        )

    if spec.blur_sigma is not None and spec.blur_sigma > 0.0:
        data = ndimage.gaussian_filter(data, sigma=spec.blur_sigma, mode="nearest")
    if spec.noise_sigma is not None and spec.noise_sigma > 0.0:
        nrng = stream_rng(spec.noise_seed, STREAM_NOISE)
        data = data + nrng.normal(0.0, spec.noise_sigma, size=data.shape)
    if spec.quantize_levels is not None:
        lv = spec.quantize_levels - 1
        data = np.round(np.clip(data, 0.0, 1.0) * lv) / lv
    if spec.brightness is not None or spec.contrast is not None:
        c = spec.contrast if spec.contrast is not None else 1.0
        b = spec.brightness if spec.brightness is not None else 0.0
        data = (data - 0.5) * c + 0.5 + b

    return IrImage(np.clip(data, 0.0, 1.0))


# EOT batches replay the same spec against every candidate in a population,
# so the backward coordinate field (TPS kernel over all pixels) is cached.
# Geometry fields of TransformSpec are hashable by construction.
_COORD_CACHE: dict = {}
_COORD_CACHE_CAP = 256
_COORD_LOCK = threading.Lock()
_MISS = object()


def _backward_coords(spec: TransformSpec, w: int, h: int) -> np.ndarray | None:
    """Output->input sample coordinates for the geometric fold, or None."""
    key = (spec.scale, spec.rotation_deg, spec.corner_shift,
           spec.translate, spec.tps_disp, w, h)
    with _COORD_LOCK:
        hit = _COORD_CACHE.get(key, _MISS)
    if hit is not _MISS:
        return hit
    geo = _inverse_geometry(spec, w, h)
    if geo is None:
        mapped = None
    else:
        ys, xs = np.mgrid[0:h, 0:w]
        pts = np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
        mapped = geo(pts)
        mapped.setflags(write=False)
    with _COORD_LOCK:
        if len(_COORD_CACHE) >= _COORD_CACHE_CAP:
            _COORD_CACHE.pop(next(iter(_COORD_CACHE)))
        _COORD_CACHE[key] = mapped
    return mapped


def _inverse_geometry(spec: TransformSpec, w: int, h: int):
    """Composed output->input coordinate map, or None when purely identity."""
    mats = []
    if spec.scale is not None:
        mats.append(_affine_about_center(spec.scale, 0.0, w, h))
    if spec.rotation_deg is not None:
        mats.append(_affine_about_center(1.0, spec.rotation_deg, w, h))
    if spec.corner_shift is not None:
        corners = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)
        shift = np.asarray(spec.corner_shift, dtype=np.float64) * np.array([w - 1, h - 1])
        mats.append(_homography_from_corners(corners, corners + shift))
    if spec.translate is not None:
        t = np.eye(3)
        t[0, 2], t[1, 2] = spec.translate
        mats.append(t)

    fwd = None
    for m in mats:
        fwd = m if fwd is None else m @ fwd
    inv = np.linalg.inv(fwd) if fwd is not None else None

    tps_model = None
    if spec.tps_disp is not None:
        disp = np.asarray(spec.tps_disp, dtype=np.float64)
        m = disp.shape[0]
        gx = np.linspace(0.0, w - 1.0, m)
        gy = np.linspace(0.0, h - 1.0, m)
        src = np.array([(x, y) for y in gy for x in gx])
        # disp is indexed (row, col); flatten to match src ordering
        d_px = disp.reshape(m * m, 2) * min(w - 1, h - 1)
        tps_model = tps_fit(src + d_px, src)  # backward: dst -> src

    if inv is None and tps_model is None:
        return None

    def mapping(pts: np.ndarray) -> np.ndarray:
        q = tps_model.transform(pts) if tps_model is not None else pts
        if inv is not None:
            hg = np.column_stack([q, np.ones(len(q))]) @ inv.T
            q = hg[:, :2] / hg[:, 2:3]
        return q

    return mapping


def expected_loss(
    evaluator: Callable[[IrImage], float],
    x: IrImage,
    cfg: AugmentConfig,
    n: int,
    seed: int,
) -> float:
    """Mean evaluator value over n transform draws seeded seed+i.

    Fixed accumulation order, so the result is reproducible bit for bit.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    total = 0.0
    for i in range(n):
        spec = sample_transform(cfg, seed + i)
        total += float(evaluator(apply(spec, x)))
    return total / n
