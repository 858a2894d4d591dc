import numpy as np
import pytest

from cdisent.datagen import Factor, FactorSpec, GenSpec, MixingMode, sample_dataset, tabular_recipe
from cdisent.logger import LogLevel, set_log_level
from cdisent.models import CdVaeConfig


@pytest.fixture(autouse=True)
def quiet_logs():
    set_log_level(LogLevel.ERROR)
    yield
    set_log_level(LogLevel.WARNING)


@pytest.fixture
def onehot_spec():
    """Two uniform 4-valued factors rendered as their concatenated one-hot codes."""
    factors = FactorSpec([Factor("a", 4), Factor("b", 4)])
    uniform = [[0.25] * 4, [0.25] * 4]
    return GenSpec(
        factors, [1.0], [uniform], tabular_dim=8, noise_std=0.0, mixing=MixingMode.IDENTITY,
    )


@pytest.fixture
def decode_onehot():
    """Encoder that recovers factor values from identity-mixed observations."""

    def decode(x):
        x = np.asarray(x)
        return np.stack([np.argmax(x[:, 0:4], axis=1), np.argmax(x[:, 4:8], axis=1)], axis=1).astype(np.float64)

    return decode


@pytest.fixture
def tabular_spec():
    return tabular_recipe()


@pytest.fixture
def small_dataset(tabular_spec):
    return sample_dataset(tabular_spec, 300, seed=0)


@pytest.fixture
def tiny_config():
    return CdVaeConfig(
        latent_dim=2, n_labels=2, encoder_hidden=[4], decoder_hidden=[4],
        epochs=2, batch_size=32, seed=0, dtype="float64",
    )
