"""Availability-gated smoke check against a stock CLIP checkpoint.

Skipped automatically when the checkpoint cannot be loaded (offline box,
no cached weights). This is a sanity bound, not a benchmark: a strong
cold occlusion on the torso must move the mean cosine similarity to the
clean person prototype by a visible margin.
"""

import numpy as np
import pytest

pytest.importorskip("torch")
pytest.importorskip("transformers")
pytest.importorskip("fastapi")

from fastapi.testclient import TestClient

from encoder_server import create_app
from encoder_server.backend import ClipBackend
from encoder_server.testing import png_b64

MODEL_ID = "openai/clip-vit-base-patch32"
N_IMAGES = 20


@pytest.fixture(scope="module")
def client():
    try:
        backend = ClipBackend.from_pretrained(MODEL_ID, device="cpu")
    except Exception as e:  # noqa: BLE001 - any load failure means skip
        pytest.skip(f"stock checkpoint unavailable: {e}")
    with TestClient(create_app(backend)) as c:
        yield c


def ir_scene(seed, h=96, w=96):
    """Thermal-style frame: cool textured background, warm person blob."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    img = 0.18 + 0.05 * rng.standard_normal((h, w))
    cx = w * (0.5 + 0.08 * rng.uniform(-1, 1))
    head = np.exp(-(((xx - cx) / (0.07 * w)) ** 2 + ((yy - 0.25 * h) / (0.07 * h)) ** 2))
    torso = np.exp(-(((xx - cx) / (0.16 * w)) ** 2 + ((yy - 0.55 * h) / (0.22 * h)) ** 2))
    body = np.clip(head + torso, 0.0, 1.0)
    warm = rng.uniform(0.75, 0.95)
    return np.clip(img * (1 - body) + warm * body, 0.0, 1.0), cx


def paste_black(img, cx):
    """Solid cold square over the torso, side 25 percent of frame height."""
    h, w = img.shape
    side = int(round(0.25 * h))
    y0 = int(round(0.55 * h - side / 2))
    x0 = int(round(cx - side / 2))
    out = img.copy()
    out[y0:y0 + side, x0:x0 + side] = 0.0
    return out


def _embed(client, payload):
    r = client.post("/embed", json={"id": "smoke", "image_png_b64": payload})
    assert r.status_code == 200
    return np.asarray(r.json()["values"], dtype=np.float64)


def test_black_patch_moves_mean_cosine_to_person_prototype(client):
    scenes = [ir_scene(s) for s in range(N_IMAGES)]
    clean = np.stack([_embed(client, png_b64(img)) for img, _ in scenes])
    patched = np.stack([_embed(client, png_b64(paste_black(img, cx)))
                        for img, cx in scenes])
    proto = clean.mean(axis=0)
    proto /= np.linalg.norm(proto)
    drift = abs(float((clean @ proto).mean() - (patched @ proto).mean()))
    assert drift > 0.01, f"mean cosine moved only {drift:.4f}"
