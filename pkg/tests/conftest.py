import numpy as np
import pytest

from irpatch import (
    AugmentConfig,
    GridConfig,
    IrImage,
    ObjectiveWeights,
    PasteConfig,
    Roi,
    SynthConfig,
    ToyEncoder,
)
from irpatch.core import LoadedSample
from irpatch.synth import synth_image


@pytest.fixture
def grid3():
    return GridConfig(grid_dim=3)


@pytest.fixture
def grid5():
    return GridConfig()


@pytest.fixture
def toy():
    return ToyEncoder(seed=3, feature_dim=24)


@pytest.fixture
def flat_image():
    return IrImage(np.full((96, 96), 0.55))


@pytest.fixture
def noise_image():
    rng = np.random.default_rng(7)
    return IrImage(rng.uniform(0.2, 0.8, size=(120, 100)))


def make_samples(n=6, seed=5, h=64, w=64):
    sc = SynthConfig(n_images=n, height=h, width=w)
    out = []
    for i in range(n):
        img, roi = synth_image(sc, seed, i)
        out.append(LoadedSample(image=img, roi=roi, path=f"mem_{i:03d}.png", clean=True))
    return out


@pytest.fixture
def samples6():
    return make_samples()


@pytest.fixture
def paste_cfg():
    return PasteConfig()


@pytest.fixture
def augment_cfg():
    return AugmentConfig()


@pytest.fixture
def weights():
    return ObjectiveWeights()
