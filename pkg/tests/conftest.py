import numpy as np
import pytest

from pandaface.alignment import CpdParams
from pandaface.config import RunConfig
from pandaface.synth import build_prototypes, _perturbed, _rng


def fast_config(**overrides) -> RunConfig:
    """Default pipeline config with a cheaper registration budget for tests."""
    cpd = overrides.pop("cpd", CpdParams(max_points=200, max_iterations=80))
    return RunConfig(cpd=cpd, **overrides)


@pytest.fixture(scope="session")
def textured_rgb():
    """One deterministic face-like RGB image."""
    return build_prototypes(seed=123, ids=1)[0]


@pytest.fixture(scope="session")
def tiny_dataset():
    """Four in-memory images, two identities, two images each."""
    protos = build_prototypes(seed=9, ids=2)
    samples = []
    for ident, proto in enumerate(protos):
        for j in range(2):
            img = _perturbed(proto, _rng(9, 1, ident, j))
            samples.append((f"panda_{ident:02d}_{j}", img, f"panda_{ident:02d}"))
    return samples


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
