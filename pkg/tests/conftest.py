import numpy as np
import pytest

from rawnoise import RawFrame, SensorMeta, make_rng


def make_meta(
    width=64,
    height=48,
    cfa="RGGB",
    black=(512.0, 512.0, 512.0, 512.0),
    white=16383.0,
    iso=800,
    exposure=1.0 / 30.0,
    gain=None,
):
    return SensorMeta(
        width=width,
        height=height,
        cfa_pattern=cfa,
        black_level=black,
        white_level=white,
        iso=iso,
        exposure_time=exposure,
        system_gain_k=gain,
    )


def random_quantized_frame(rng, meta=None, **kwargs):
    meta = meta or make_meta(**kwargs)
    data = np.floor(rng.uniform(0.0, meta.white_level + 1.0, (meta.height, meta.width)))
    return RawFrame(meta, data, quantized=True)


@pytest.fixture
def rng():
    return make_rng(20240817)


@pytest.fixture
def meta():
    return make_meta()
