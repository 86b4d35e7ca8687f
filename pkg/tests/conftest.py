import numpy as np
import pytest

from shadowlab.fields import builtin_field
from shadowlab.flow import FlowEngine
from shadowlab.ubconst import SampleSpec, estimate_ub_constants


def _engine(name):
    eng = FlowEngine(builtin_field(name))
    eng.flow_with_jacobian(0.5, np.array([0.1, 0.0]))  # compile the kernel once
    return eng


@pytest.fixture(scope="session")
def shear():
    return _engine("plane-shear")


@pytest.fixture(scope="session")
def torus_ms():
    return _engine("torus-ms")


@pytest.fixture(scope="session")
def torus_irr():
    return _engine("torus-irr")


@pytest.fixture(scope="session")
def engines(shear, torus_ms, torus_irr):
    return {"plane-shear": shear, "torus-ms": torus_ms, "torus-irr": torus_irr}


# base points on the invariant line y = 0 (hyperbolic on the plane, attracting on the torus)
BASE = {"plane-shear": np.array([0.3, 0.0]), "torus-ms": np.array([0.1, 0.0]),
        "torus-irr": np.array([0.1, 0.2])}


@pytest.fixture(scope="session")
def shear_ub(shear):
    box = (np.array([-1.0, -1.0]), np.array([12.0, 1.0]))
    return estimate_ub_constants(shear, SampleSpec(boxes=[box], points_per_axis=7, seed=0))
