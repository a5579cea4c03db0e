import numpy as np
import pytest

from framecast.videodata import (MovingMnistConfig, SequenceWindowing,
                                 generate_moving_mnist, load_digit_glyphs,
                                 window_sequences)


@pytest.fixture(scope="session")
def glyphs():
    return load_digit_glyphs()


@pytest.fixture(scope="session")
def tiny_dataset(glyphs):
    """4 videos x 12 frames at 64x64: one window each under (6, 6)."""
    return generate_moving_mnist(
        MovingMnistConfig(num_videos=4, video_length=12, seed=3), glyphs=glyphs)


@pytest.fixture(scope="session")
def tiny_sequences(tiny_dataset):
    return window_sequences(tiny_dataset, SequenceWindowing(6, 6))


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
