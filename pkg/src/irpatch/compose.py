"""Pasting a rendered patch into an image region and local context stats.

The patch scales with the target: its side is a fixed fraction of ROI
height, centered horizontally, vertically anchored where a chest-mounted
emitter would sit. Compositing is straight alpha blending against the
patch's intensity field. A background ring just outside the patch support
provides the reference statistics the stealth terms compare against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import IrImage, Roi
from .errors import PasteError, RoiError, StatsError
from .grid import GridConfig, PatchParams, RenderedPatch, render

MIN_PATCH_SIDE = 8


@dataclass(frozen=True)
class PasteConfig:
    """Placement and support-region knobs."""

    patch_side_ratio: float = 0.25
    anchor_ratio: float = 0.30
    ring_width_ratio: float = 0.15
    support_threshold: float = 0.05
    boundary_band: tuple[float, float] = (0.05, 0.95)

    def __post_init__(self):
        if not 0.0 < self.patch_side_ratio <= 1.0:
            raise ValueError(f"patch_side_ratio must be in (0, 1], got {self.patch_side_ratio}")
        if not 0.0 <= self.anchor_ratio <= 1.0:
            raise ValueError(f"anchor_ratio must be in [0, 1], got {self.anchor_ratio}")
        if not 0.0 < self.ring_width_ratio <= 1.0:
            raise ValueError(f"ring_width_ratio must be in (0, 1], got {self.ring_width_ratio}")
        if not 0.0 <= self.support_threshold < 1.0:
            raise ValueError(f"support_threshold must be in [0, 1), got {self.support_threshold}")
        lo, hi = self.boundary_band
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError(f"boundary_band must satisfy 0 <= lo < hi <= 1, got {self.boundary_band}")
        object.__setattr__(self, "boundary_band", (float(lo), float(hi)))


@dataclass(frozen=True)
class PasteResult:
    """Composited image plus full-frame alpha and background-ring masks."""

    image: IrImage
    alpha: np.ndarray  # (H, W) soft patch coverage
    beta: np.ndarray  # (H, W) binary background ring, disjoint from alpha > 0
    roi: Roi
    patch_side: int


@dataclass(frozen=True)
class ContextStats:
    """First and second order statistics of patch vs surrounding ring."""

    mu_patch: float
    sigma_patch: float
    mu_ring: float
    sigma_ring: float
    grad_edge: float  # mean gradient magnitude over partial-coverage pixels
    grad_ring: float


def paste(
    x: IrImage,
    p: PatchParams,
    grid_cfg: GridConfig,
    roi: Roi,
    cfg: PasteConfig,
    prerendered: RenderedPatch | None = None,
) -> PasteResult:
    """Scale, place, and alpha-composite the patch inside the ROI.

    Pixels with zero coverage keep their exact input values. A prerendered
    patch may be supplied to reuse rasterizations across pastes; its side
    must match the placement's computed side.
    """
    if not roi.bounds_ok(x):
        raise RoiError(
            f"roi ({roi.x0},{roi.y0},{roi.w},{roi.h}) exceeds image {x.width}x{x.height}"
        )
    side = int(round(roi.h * cfg.patch_side_ratio))
    if side < MIN_PATCH_SIDE:
        raise PasteError(f"patch side {side}px after scaling is below {MIN_PATCH_SIDE}px")
    if side > roi.w or side > roi.h:
        raise PasteError(f"patch side {side}px does not fit roi {roi.w}x{roi.h}")

    if prerendered is not None:
        if prerendered.side != side:
            raise PasteError(f"prerendered side {prerendered.side} != required {side}")
        rp = prerendered
    else:
        rp = render(p, grid_cfg, side)

    left = roi.x0 + (roi.w - side) // 2
    top = int(round(roi.y0 + cfg.anchor_ratio * roi.h - side / 2))
    top = min(max(top, roi.y0), roi.y0 + roi.h - side)

    out = x.data.copy()
    region = out[top : top + side, left : left + side]
    a = rp.alpha
    region[...] = (1.0 - a) * region + a * rp.intensity

    alpha_full = np.zeros_like(x.data)
    alpha_full[top : top + side, left : left + side] = a

    support = alpha_full > cfg.support_threshold
    ring_px = max(1, int(round(cfg.ring_width_ratio * side)))
    if support.any():
        dilated = ndimage.distance_transform_edt(~support) <= ring_px
    else:
        dilated = np.zeros_like(support)
    beta_full = (dilated & ~(alpha_full > 0.0)).astype(np.float64)

    return PasteResult(
        image=IrImage(np.clip(out, 0.0, 1.0)),
        alpha=alpha_full,
        beta=beta_full,
        roi=roi,
        patch_side=side,
    )


def context_stats(r: PasteResult, cfg: PasteConfig) -> ContextStats:
    """Alpha-weighted patch statistics and ring statistics on the composite.

    Raises StatsError when either support is empty; stats on nothing would
    silently poison the stealth terms.
    """
    img = r.image.data
    wa = float(r.alpha.sum())
    if wa <= 0.0:
        raise StatsError("alpha support is empty")
    nb = float(r.beta.sum())
    if nb <= 0.0:
        raise StatsError("background ring is empty")

    mu_a = float((r.alpha * img).sum() / wa)
    var_a = float((r.alpha * (img - mu_a) ** 2).sum() / wa)
    mu_b = float((r.beta * img).sum() / nb)
    var_b = float((r.beta * (img - mu_b) ** 2).sum() / nb)

    gy, gx = np.gradient(img)
    gm = np.hypot(gx, gy)
    lo, hi = cfg.boundary_band
    edge_mask = (r.alpha > lo) & (r.alpha < hi)
    grad_edge = float(gm[edge_mask].mean()) if edge_mask.any() else 0.0
    grad_ring = float(gm[r.beta > 0].mean())

    return ContextStats(
        mu_patch=mu_a,
        sigma_patch=float(np.sqrt(var_a)),
        mu_ring=mu_b,
        sigma_ring=float(np.sqrt(var_b)),
        grad_edge=grad_edge,
        grad_ring=grad_ring,
    )
