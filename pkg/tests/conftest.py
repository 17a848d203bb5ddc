from types import SimpleNamespace

import pytest

from roadalign.config import PipelineConfig
from roadalign.synth import make_pair, preset_mini, preset_street


@pytest.fixture(scope="session")
def street_pair(tmp_path_factory):
    """The default paired dataset, rendered once for the whole session."""
    root = tmp_path_factory.mktemp("street")
    scene, ride_ref, ride_obs = preset_street()
    truth = make_pair(scene, ride_ref, ride_obs, root)
    return SimpleNamespace(root=root, ref=root / "ref", obs=root / "obs",
                           scene=scene, ride_ref=ride_ref, ride_obs=ride_obs,
                           truth=truth)


@pytest.fixture(scope="session")
def street_cfg(street_pair):
    return PipelineConfig.load(street_pair.root / "scene.cfg")


@pytest.fixture(scope="session")
def mini_pair(tmp_path_factory):
    """Small fast pair for CLI and orchestration tests."""
    root = tmp_path_factory.mktemp("mini")
    scene, ride_ref, ride_obs = preset_mini()
    truth = make_pair(scene, ride_ref, ride_obs, root)
    return SimpleNamespace(root=root, ref=root / "ref", obs=root / "obs",
                           scene=scene, truth=truth)
