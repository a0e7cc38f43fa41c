import numpy as np
import pytest

from volalign import pipeline, volume


@pytest.fixture(scope="session")
def ref_vol64():
    return volume.synth_volume(pipeline.reference_spec(64))


@pytest.fixture(scope="session")
def ref_vol32(ref_vol64):
    return volume.downsample(ref_vol64, 32)


@pytest.fixture(scope="session")
def ref_vol16(ref_vol64):
    return volume.downsample(ref_vol64, 16)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
