"""Synthetic dataset generation: determinism, lattice snap, manifests."""

import hashlib
import os

import numpy as np
import pytest

from irpatch import (
    SynthConfig,
    ToyEncoder,
    generate_dataset,
    load_image,
    load_manifest,
    synth_image,
)
from irpatch.core import crop

CFG = SynthConfig(n_images=4, height=48, width=48)


class TestSynthImage:
    def test_deterministic_per_index(self):
        a_img, a_roi = synth_image(CFG, 13, 0)
        b_img, b_roi = synth_image(CFG, 13, 0)
        assert np.array_equal(a_img.data, b_img.data)
        assert a_roi == b_roi
        c_img, c_roi = synth_image(CFG, 13, 1)
        assert not np.array_equal(a_img.data, c_img.data)
        d_img, _ = synth_image(CFG, 14, 0)
        assert not np.array_equal(a_img.data, d_img.data)

    def test_snapped_to_8bit_lattice(self):
        img, _ = synth_image(CFG, 13, 2)
        scaled = img.data * 255.0
        assert np.array_equal(scaled, np.round(scaled))
        assert img.data.min() >= 0.0 and img.data.max() <= 1.0

    def test_roi_geometry(self):
        for i in range(4):
            _, roi = synth_image(CFG, 13, i)
            assert 0 <= roi.x0 and roi.x0 + roi.w <= 48
            assert 0 <= roi.y0 and roi.y0 + roi.h <= 48
            assert 0.44 <= roi.w / 48 <= 0.56
            assert 0.70 <= roi.h / 48 <= 0.84

    def test_subject_is_warmer_than_scene(self):
        for i in range(4):
            img, roi = synth_image(CFG, 13, i)
            assert crop(img, roi).data.mean() > img.data.mean() + 0.02


class TestSynthConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(n_images=1)
        with pytest.raises(ValueError):
            SynthConfig(height=32)
        with pytest.raises(ValueError):
            SynthConfig(width=47)


class TestGenerateDataset:
    def test_layout_and_default_category(self, tmp_path):
        out = str(tmp_path / "ds")
        manifest = generate_dataset(CFG, out, seed=21)
        assert manifest == os.path.join(out, "manifest.json")
        ds, items = _load(manifest)
        assert ds.category == "person"
        assert len(items) == 4
        for i, (item, path) in enumerate(items):
            assert os.path.basename(path) == f"img_{i:04d}.png"
            assert item.clean is True

    def test_reloaded_pixels_match_generated(self, tmp_path):
        out = str(tmp_path / "ds")
        manifest = generate_dataset(CFG, out, seed=21)
        _, items = _load(manifest)
        for i, (item, path) in enumerate(items):
            want_img, want_roi = synth_image(CFG, 21, i)
            assert np.array_equal(load_image(path).data, want_img.data)
            assert item.roi == want_roi

    def test_explicit_category_passthrough(self, tmp_path):
        manifest = generate_dataset(CFG, str(tmp_path / "ds"), seed=5, category="dog")
        ds, _ = _load(manifest)
        assert ds.category == "dog"

    def test_encoder_majority_vote(self, tmp_path, toy):
        manifest = generate_dataset(CFG, str(tmp_path / "ds"), seed=5, encoder=toy)
        ds, items = _load(manifest)
        votes = {}
        for item, path in items:
            scores = toy.class_scores(crop(load_image(path), item.roi))
            lbl = toy.class_labels[int(np.argmax(scores))]
            votes[lbl] = votes.get(lbl, 0) + 1
        assert ds.category == max(sorted(votes), key=lambda k: votes[k])

    def test_unlabeled_encoder_rejected(self, tmp_path):
        enc = ToyEncoder(seed=2, feature_dim=8, labels=None)
        with pytest.raises(ValueError, match="labels"):
            generate_dataset(CFG, str(tmp_path / "ds"), seed=5, encoder=enc)

    def test_regeneration_is_byte_identical(self, tmp_path):
        m1 = generate_dataset(CFG, str(tmp_path / "a"), seed=9)
        m2 = generate_dataset(CFG, str(tmp_path / "b"), seed=9)
        assert open(m1).read() == open(m2).read()  # relative paths inside
        for i in range(4):
            h1 = hashlib.sha256(open(os.path.join(tmp_path, "a", "images", f"img_{i:04d}.png"), "rb").read())
            h2 = hashlib.sha256(open(os.path.join(tmp_path, "b", "images", f"img_{i:04d}.png"), "rb").read())
            assert h1.hexdigest() == h2.hexdigest()


def _load(manifest_path):
    ds = load_manifest(manifest_path)
    base = os.path.dirname(manifest_path)
    pairs = []
    for item in ds.items:
        path = item.image if os.path.isabs(item.image) else os.path.join(base, item.image)
        pairs.append((item, path))
    return ds, pairs
