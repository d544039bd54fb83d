#!/usr/bin/env python3

import copy
import os
import shutil
import tempfile
import pytest
import numpy as np

# Add parent directory to sys.path
import sys
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

# Import modules from the package
from barrier import BarrierSpec, DisturbanceBounds, LinearClassK, LinearPotential
from config_manager import read_config
from controller import DockingControllerConfig
from dynamics import CeresAltitude, CeresModel, HcwModel, docking_axis_constraint
from scenarios import docking_barriers

# Layer depth alpha^-1(2) for the docking gain of 25
DOCKING_EPSILON = 2.0 / 25.0


@pytest.fixture
def temp_dir():
    """Create a temporary directory for tests."""
    temp_dir = tempfile.mkdtemp()
    yield temp_dir
    shutil.rmtree(temp_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ceres_model():
    return CeresModel()


@pytest.fixture
def ceres_spec(ceres_model):
    """H1 of the landing scenario with the preset gain."""
    return BarrierSpec.h1(
        CeresAltitude(ceres_model.rho), ceres_model.potential(), 0.1, 1.5, LinearClassK(0.355)
    )


@pytest.fixture
def hcw_model():
    return HcwModel()


@pytest.fixture
def docking_spec():
    """H1 of the docking scenario: Phi = -0.057 lambda, gamma = (0.07, 0.12), k1 = 25."""
    return BarrierSpec.h1(
        docking_axis_constraint(), LinearPotential(-0.057), 0.07, 0.12, LinearClassK(25.0)
    )


@pytest.fixture
def docking_specs():
    physical = {"delta": 0.03, "v_max": 10.0, "left_bound_axis": "lateral"}
    tolerances = {"gamma1": 0.07, "gamma2": 0.12, "l_h": 1.0}
    return docking_barriers(physical, tolerances, DockingControllerConfig())


@pytest.fixture
def quiet_bounds():
    return DisturbanceBounds(w_u_max=0.0, w_x_max=0.0)


@pytest.fixture
def ceres_config():
    return copy.deepcopy(read_config("ceres-landing"))


@pytest.fixture
def docking_config():
    return copy.deepcopy(read_config("leo-docking"))


@pytest.fixture
def layer_config():
    """In-layer docking start at 100 m, tens of seconds to contact."""
    return copy.deepcopy(read_config("leo-docking-layer"))


@pytest.fixture
def short_ceres_config(ceres_config):
    """Landing from 20 km, about 500 s to contact."""
    ceres_config["initial_state"] = [476000.0 + 20000.0, 0.0, 0.0, 0.0, 15.0, 0.0]
    ceres_config["simulation"]["t_max"] = 2000.0
    return ceres_config


@pytest.fixture
def portrait_config():
    return copy.deepcopy(read_config("phase-portrait"))
