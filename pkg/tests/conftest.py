import numpy as np
import pytest

from visioblend.conditions import TrainingTriplet, extract_sketch, extract_strokes
from visioblend.schedule import make_schedule
from visioblend.unet import NetworkConfig


def tiny_net_config():
    # smallest config that still has two resolution levels and skip concats
    return NetworkConfig(base_channels=8, channel_multipliers=(1, 2),
                         residual_blocks_per_level=1, time_embed_dim=16)


def micro_net_config():
    # single level, used where gradients or speed matter more than capacity
    return NetworkConfig(base_channels=4, channel_multipliers=(1,),
                         residual_blocks_per_level=1, time_embed_dim=8)


def shape_palette(i):
    cols = [(0.9, -0.8, -0.8), (-0.8, 0.9, -0.8), (-0.8, -0.8, 0.9), (0.9, 0.9, -0.8),
            (0.9, -0.8, 0.9), (-0.8, 0.9, 0.9), (0.95, 0.3, -0.7), (0.5, -0.7, 0.9)]
    return np.array(cols[i % len(cols)], np.float32)


def shape_image(i, size=32):
    """Synthetic 32x32 image i: colored shape on a graded background.

    Shapes cycle disc / square / diamond / ring so sketches differ per index.
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    bg0 = -0.6 + 0.15 * (i % 3)
    img = np.full((size, size, 3), bg0, np.float32)
    img += (yy / (size - 1.0) * 0.25)[:, :, None]
    col = shape_palette(i)
    cy, cx = 10 + 3 * (i % 4), 10 + 3 * (i % 3)
    r = 7 + (i % 3)
    if i % 4 == 0:
        m = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    elif i % 4 == 1:
        m = (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)
    elif i % 4 == 2:
        m = (np.abs(yy - cy) + np.abs(xx - cx)) <= r
    else:
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        m = (d2 <= r * r) & (d2 >= (r - 3) ** 2)
    img[m] = col
    return np.clip(img, -1, 1).astype(np.float32)


def shape_triplet(i, size=32):
    img = shape_image(i, size)
    sk = extract_sketch(img)
    st = extract_strokes(img, sk)
    return TrainingTriplet(image=img, sketch=sk, stroke=st, source_id=f"shape{i}")


@pytest.fixture
def sched10():
    return make_schedule(10, 1e-3, 0.05)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
