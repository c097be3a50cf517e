import pytest

from geninvert import GeneratorSpec, build

# the two seeded generators that pinned regression values refer to
REFERENCE_MLP = GeneratorSpec(
    "mlp", latent_dim=100, hidden_sizes=(512,), output_shape=(1, 16, 16), seed=42
)
REFERENCE_DCGAN = GeneratorSpec(
    "dcgan_small", latent_dim=100, output_shape=(1, 16, 16), seed=42
)

# small enough that inversions take well under a second
TINY_MLP = GeneratorSpec(
    "mlp", latent_dim=6, hidden_sizes=(48,), output_shape=(1, 4, 4), seed=7
)


@pytest.fixture(scope="session")
def reference_mlp():
    return build(REFERENCE_MLP)


@pytest.fixture(scope="session")
def reference_dcgan():
    return build(REFERENCE_DCGAN)


@pytest.fixture(scope="session")
def tiny_mlp():
    return build(TINY_MLP)
