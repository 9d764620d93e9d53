import numpy as np
import pytest

from attention_blocks import LinearProjection
from synth_world import clean_scene, generate
from temporal_transformer import TransformerConfig
from tensor_core import EmbeddingMatrix, FeatureMap


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_map(rng):
    def fabricar(c=4, h=5, w=6):
        return FeatureMap(rng.standard_normal((c, h, w)))

    return fabricar


@pytest.fixture
def random_embeddings(rng):
    def fabricar(n=6, c=4, block_rows=None):
        return EmbeddingMatrix(rng.standard_normal((n, c)), block_rows)

    return fabricar


@pytest.fixture
def identity_config():
    """Projeções identidade (C -> C): a atenção compara os embeddings crus."""

    def fabricar(channels, **campos):
        identidade = LinearProjection(np.eye(channels))
        return TransformerConfig(
            channels=channels,
            shared_projection=identidade,
            cross_projection=identidade,
            **campos,
        )

    return fabricar


@pytest.fixture
def one_hot_map():
    """C = H·W, cada pixel com um embedding one-hot distinto."""

    def fabricar(h=3, w=3):
        n = h * w
        return FeatureMap(np.eye(n).reshape(n, h, w))

    return fabricar


@pytest.fixture(scope="session")
def clean_frames():
    return generate(clean_scene())
