import numpy as np
import pytest

from comorph.mjcf import load_link_map, parse_file
from comorph.morphspace import load_space
from comorph.sim2d import load_robot
from comorph.sim2d.robot import builtin_design_dir, _DATA_DIR


@pytest.fixture(scope="session")
def space():
    return load_space(_DATA_DIR / "humanoid_space.yaml")


@pytest.fixture(scope="session")
def link_map():
    return load_link_map(_DATA_DIR / "linkmap.yaml", from_file=True)


@pytest.fixture(scope="session")
def alpha_model():
    return load_robot(builtin_design_dir("alpha") / "robot.yaml")


@pytest.fixture(scope="session")
def beta_model():
    return load_robot(builtin_design_dir("beta") / "robot.yaml")


@pytest.fixture(scope="session")
def alpha_doc():
    return parse_file(builtin_design_dir("alpha") / "model.xml")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
