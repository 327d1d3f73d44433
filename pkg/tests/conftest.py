from pathlib import Path

import numpy as np
import pytest

from impulsive_mp.config import RunConfig
from impulsive_mp.controls import PiecewiseControl
from impulsive_mp.integrate import simulate
from impulsive_mp.problem import parse_problem_text

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"


@pytest.fixture(scope="session")
def config():
    return RunConfig()


@pytest.fixture(scope="session")
def scalar_jump():
    spec, target = parse_problem_text((PROBLEMS / "scalar_jump.txt").read_text())
    return spec, target


@pytest.fixture(scope="session")
def scalar_jump_process(scalar_jump, config):
    spec, _ = scalar_jump
    ctrl = PiecewiseControl(edges=np.array([0.0, 1.0]), w0=np.array([0.0]),
                            w=np.array([[1.0]]), alpha=np.zeros((1, 1)))
    return simulate(spec, ctrl, config)


@pytest.fixture(scope="session")
def brockett():
    spec, target = parse_problem_text((PROBLEMS / "brockett.txt").read_text())
    return spec, target


@pytest.fixture(scope="session")
def kalman_problem():
    spec, target = parse_problem_text((PROBLEMS / "kalman.txt").read_text())
    return spec, target
