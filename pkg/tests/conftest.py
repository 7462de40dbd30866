import numpy as np
import pytest

from dflsim.params import ModelParams


def random_model(rng: np.random.Generator, sizes=(3, 4, 2), arch_id: str | None = None,
                 scale: float = 1.0) -> ModelParams:
    """Random dense model for property tests."""
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        layers.append((scale * rng.standard_normal((fan_in, fan_out)),
                       scale * rng.standard_normal(fan_out)))
    return ModelParams(tuple(layers), arch_id or ("mlp-" + "x".join(map(str, sizes))))


def vector_model(*coords: float) -> ModelParams:
    """Single-layer model whose flattened form is (*coords, 0...0).

    The weight row carries the coordinates and the zero bias pads the tail,
    so tiny numeric examples read off directly; the shared zero tail never
    affects distances, cosines, or coordinate-wise aggregation.
    """
    w = np.array([[float(c) for c in coords]])
    b = np.zeros(len(coords))
    return ModelParams(((w, b),), f"vec-{len(coords)}")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240915)
