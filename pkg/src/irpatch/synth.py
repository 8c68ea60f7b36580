"""Synthetic thermal-style dataset generator.

Draws bright person-like blobs (head disk plus torso ellipse, sometimes
arms) over varied scene backgrounds, one ROI per image, and writes PNGs
plus a manifest. Scenes differ in ambient level, thermal gradient, surface
texture, and warm clutter objects, and subjects differ in build, pose
lean, warmth, and internal texture, so crops spread out in feature space
instead of clustering. The manifest's target category defaults to
whichever label the configured encoder most often assigns to the clean
crops, so classification metrics are meaningful without any external data
or trained model.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import Dataset, DatasetItem, IrImage, Roi, crop, save_image, save_manifest
from .encoders import Encoder
from .rng import STREAM_SYNTH, stream_rng


@dataclass(frozen=True)
class SynthConfig:
    n_images: int = 32
    height: int = 96
    width: int = 96

    def __post_init__(self):
        if self.n_images < 2:
            raise ValueError(f"n_images must be >= 2, got {self.n_images}")
        if self.height < 48 or self.width < 48:
            raise ValueError("synthetic images must be at least 48x48")


def _person_blob(h: int, w: int, roi: Roi, rng: np.random.Generator) -> np.ndarray:
    """Soft silhouette mask in [0, 1], contained in the ROI."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    cx = roi.x0 + roi.w / 2 + rng.uniform(-roi.w * 0.08, roi.w * 0.08)
    head_r = roi.w * rng.uniform(0.09, 0.17)
    head_cy = roi.y0 + roi.h * rng.uniform(0.10, 0.18)
    torso_cy = roi.y0 + roi.h * rng.uniform(0.46, 0.62)
    torso_a = roi.w * rng.uniform(0.15, 0.30)  # semi-axis x
    torso_b = roi.h * rng.uniform(0.24, 0.40)  # semi-axis y
    lean = rng.uniform(-0.18, 0.18)  # torso center x drift per unit y

    tx = cx + lean * (yy - torso_cy)
    head = ((xx - cx) ** 2 + (yy - head_cy) ** 2) <= head_r**2
    torso = ((xx - tx) / torso_a) ** 2 + ((yy - torso_cy) / torso_b) ** 2 <= 1.0
    mask = head | torso

    # arms: narrow side ellipses, present on most subjects
    arm_flag = rng.random()
    arm_dx = torso_a * rng.uniform(1.05, 1.45)
    arm_cy = torso_cy + roi.h * rng.uniform(-0.10, 0.10)
    arm_a = roi.w * rng.uniform(0.04, 0.08)
    arm_b = roi.h * rng.uniform(0.14, 0.26)
    if arm_flag < 0.7:
        for side in (-1.0, 1.0):
            acx = cx + side * arm_dx
            arm = ((xx - acx) / arm_a) ** 2 + ((yy - arm_cy) / arm_b) ** 2 <= 1.0
            mask = mask | arm

    sigma = rng.uniform(0.8, 2.2)
    return ndimage.gaussian_filter(mask.astype(np.float64), sigma=sigma)


def _scene(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """Background field: ambient level, drift, texture, warm clutter."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    level = rng.uniform(0.10, 0.30)
    noise_amp = rng.uniform(0.03, 0.12)
    smooth = rng.uniform(1.5, 5.0)
    bg = level + ndimage.gaussian_filter(rng.normal(0.0, noise_amp, size=(h, w)), sigma=smooth)

    # oriented ambient drift across the frame
    theta = rng.uniform(0.0, 2.0 * np.pi)
    amp = rng.uniform(0.0, 0.08)
    u = (xx / (w - 1) - 0.5) * np.cos(theta) + (yy / (h - 1) - 0.5) * np.sin(theta)
    bg = bg + amp * u

    # fine surface texture; some scenes are smooth, some grainy
    tex_amp = rng.uniform(0.0, 0.04)
    tex_sigma = rng.uniform(0.5, 1.2)
    bg = bg + tex_amp * ndimage.gaussian_filter(rng.normal(0.0, 1.0, size=(h, w)), sigma=tex_sigma)

    # warm clutter: pipes, windows, machinery seen in thermal scenes
    n_clutter = int(rng.integers(0, 5))
    for _ in range(n_clutter):
        ccx = rng.uniform(0.0, w - 1.0)
        ccy = rng.uniform(0.0, h - 1.0)
        cr = rng.uniform(0.05, 0.20) * min(h, w)
        heat = rng.uniform(0.25, 0.75)
        boxy = rng.random() < 0.4
        soft = rng.uniform(0.8, 2.5)
        aspect = rng.uniform(0.4, 2.5)
        if boxy:
            m = (np.abs(xx - ccx) <= cr * aspect) & (np.abs(yy - ccy) <= cr / aspect)
        else:
            m = ((xx - ccx) / aspect) ** 2 + ((yy - ccy) * aspect) ** 2 <= cr**2
        m = ndimage.gaussian_filter(m.astype(np.float64), sigma=soft)
        bg = bg * (1.0 - m) + heat * m

    return bg


def _enforce_contrast(img: np.ndarray, blob: np.ndarray, roi: Roi) -> np.ndarray:
    """Brighten the subject until the crop reads warmer than the scene.

    Deterministic given its inputs; the 0.035 floor leaves room for the
    8-bit snap while keeping the crop mean clearly above the image mean.
    """
    sl = (slice(roi.y0, roi.y0 + roi.h), slice(roi.x0, roi.x0 + roi.w))
    lift = blob[sl].mean() - blob.mean()
    for _ in range(4):
        gap = img[sl].mean() - img.mean()
        if gap >= 0.035:
            break
        c = (0.04 - gap) / max(lift, 1e-6)
        img = np.clip(img + c * blob, 0.0, 1.0)
    return img


def synth_image(cfg: SynthConfig, seed: int, index: int) -> tuple[IrImage, Roi]:
    """One seeded image and its ROI."""
    rng = stream_rng(seed, STREAM_SYNTH, index)
    h, w = cfg.height, cfg.width

    bg = _scene(h, w, rng)

    roi_w = int(round(w * rng.uniform(0.46, 0.54)))
    roi_h = int(round(h * rng.uniform(0.72, 0.82)))
    x0 = int(round((w - roi_w) / 2 + rng.uniform(-0.04, 0.04) * w))
    y0 = int(round((h - roi_h) / 2 + rng.uniform(-0.02, 0.02) * h))
    x0 = min(max(x0, 0), w - roi_w)
    y0 = min(max(y0, 0), h - roi_h)
    roi = Roi(x0=x0, y0=y0, w=roi_w, h=roi_h)

    blob = _person_blob(h, w, roi, rng)
    warm = rng.uniform(0.65, 0.95)
    body_tex = rng.uniform(0.0, 0.15)
    field = warm * (1.0 + body_tex * ndimage.gaussian_filter(
        rng.normal(0.0, 1.0, size=(h, w)), sigma=1.5))

    # cold chest gear worn by roughly half the subjects: packs, plating,
    # insulated fabric. A strong bimodal mode centered on the upper torso.
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    if rng.random() < 0.55:
        n_panels = 1 + int(rng.random() < 0.4)
        for _ in range(n_panels):
            gcx = roi.x0 + roi.w * rng.uniform(0.35, 0.65)
            gcy = roi.y0 + roi.h * rng.uniform(0.24, 0.50)
            ga = roi.w * rng.uniform(0.10, 0.20)
            gb = roi.h * rng.uniform(0.08, 0.16)
            cold = rng.uniform(0.02, 0.25)
            gm = ((xx - gcx) / ga) ** 2 + ((yy - gcy) / gb) ** 2 <= 1.0
            gm = ndimage.gaussian_filter(gm.astype(np.float64), sigma=rng.uniform(0.8, 1.6))
            field = field * (1.0 - gm) + cold * gm

    img = bg * (1.0 - blob) + field * blob
    img = img + rng.normal(0.0, rng.uniform(0.004, 0.02), size=(h, w))
    img = np.clip(img, 0.0, 1.0)
    img = _enforce_contrast(img, blob, roi)
    # snap to the 8-bit lattice so in-memory and reloaded pixels agree
    img = np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0
    return IrImage(img), roi


def generate_dataset(
    cfg: SynthConfig,
    out_dir: str,
    seed: int,
    encoder: Encoder | None = None,
    category: str | None = None,
) -> str:
    """Write images/ and manifest.json under out_dir; returns manifest path.

    With an encoder given, the manifest category becomes the majority clean
    top-1 label over the generated crops; otherwise `category` (or
    "person") is written as-is.
    """
    img_dir = os.path.join(out_dir, "images")
    os.makedirs(img_dir, exist_ok=True)

    images: list[tuple[IrImage, Roi, str]] = []
    for i in range(cfg.n_images):
        img, roi = synth_image(cfg, seed, i)
        path = os.path.join(img_dir, f"img_{i:04d}.png")
        save_image(img, path, bit_depth=8)
        images.append((img, roi, path))

    if encoder is not None:
        if not encoder.class_labels:
            raise ValueError("encoder must have labels to pick the category")
        votes: dict[str, int] = {}
        for img, roi, _ in images:
            scores = encoder.class_scores(crop(img, roi))
            lbl = encoder.class_labels[int(np.argmax(scores))]
            votes[lbl] = votes.get(lbl, 0) + 1
        category = max(sorted(votes), key=lambda k: votes[k])
    elif category is None:
        category = "person"

    items = tuple(
        DatasetItem(image=path, roi=roi, clean=True) for _, roi, path in images
    )
    manifest_path = os.path.join(out_dir, "manifest.json")
    save_manifest(Dataset(category=category, items=items), manifest_path)
    return manifest_path
