import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shadowlab.fields import RestPointError, builtin_field, field_from_dict, field_from_expressions
from shadowlab.flow import FlowEngine
from shadowlab.spaces import ChartError, Euclidean, FlatTorus

coord = st.floats(-3.0, 3.0, allow_nan=False)


@given(st.lists(coord, min_size=2, max_size=2), st.lists(coord, min_size=2, max_size=2))
def test_torus_difference_is_shortest_lift(x, y):
    T = FlatTorus(2)
    diff = T.difference(np.array(x), np.array(y))
    assert np.all(np.abs(diff) <= 0.5 + 1e-12)
    assert T.distance(np.array(x) + diff, np.array(y)) <= 1e-12


def test_torus_log_exp_round_trip_and_chart_limit():
    T = FlatTorus(2)
    x = np.array([0.95, 0.02])
    v = np.array([0.1, -0.2])
    assert np.allclose(T.log(x, T.exp(x, v)), v)
    with pytest.raises(ChartError):
        T.log(np.zeros(2), np.array([0.5, 0.0]))


def test_euclidean_is_plain_vector_space():
    E = Euclidean(3)
    x, y = np.array([1.0, 2.0, 3.0]), np.array([-4.0, 0.0, 7.0])
    assert np.allclose(E.difference(x, y), y - x)
    assert E.distance(x, y) == pytest.approx(np.linalg.norm(y - x))


def test_irrational_flow_matches_translation(torus_irr):
    x = np.array([0.1, 0.2])
    t = 7.3
    alpha = builtin_field("torus-irr").eval(x)[1]
    expect = FlatTorus(2).canonical(x + t * np.array([1.0, alpha]))
    assert np.allclose(torus_irr.flow_map(t, x), expect, atol=1e-12)


def test_shear_flow_closed_form(shear):
    # y' = -tanh y has sinh y(t) = sinh y0 e^{-t}
    x = np.array([0.0, 0.7])
    for t in (-1.0, 0.5, 2.0):
        y = shear.flow_map(t, x)
        assert y[0] == pytest.approx(t, abs=1e-12)
        assert y[1] == pytest.approx(math.asinh(math.sinh(0.7) * math.exp(-t)), abs=1e-11)


def test_jacobian_matches_finite_differences(torus_ms):
    x = np.array([0.2, 0.3])
    _, J = torus_ms.flow_with_jacobian(0.8, x)
    h = 1e-6
    fd = np.column_stack([
        torus_ms.space.difference(torus_ms.flow_map(0.8, x - h * e), torus_ms.flow_map(0.8, x + h * e)) / (2 * h)
        for e in np.eye(2)
    ])
    assert np.allclose(J, fd, atol=1e-7)


def test_torus_ms_linearization_on_invariant_circle(torus_ms):
    _, J = torus_ms.flow_with_jacobian(1.0, np.array([0.0, 0.0]))
    assert J[1, 1] == pytest.approx(math.exp(-2 * math.pi), rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_group_property(shear, s, t):
    x = np.array([0.1, 0.4])
    assert np.allclose(shear.flow_map(s + t, x), shear.flow_map(t, shear.flow_map(s, x)), atol=1e-10)


def test_trajectory_dense_output_agrees_with_flow_map(shear):
    x = np.array([0.0, 0.5])
    times = np.array([-0.37, 0.0, 0.123, 1.0, 1.7771])
    traj = shear.trajectory(x, times)
    for t, p in zip(times, traj):
        assert np.allclose(p, shear.flow_map(t, x), atol=1e-10)


def test_symbolic_field_and_rest_point_detection():
    spec = field_from_expressions("rot", Euclidean(2), ["1 + 0*x", "y**2 - y"], ["x", "y"])
    assert np.allclose(spec.eval(np.array([0.0, 2.0])), [1.0, 2.0])
    assert np.allclose(spec.jacobian(np.array([0.0, 2.0])), [[0, 0], [0, 3.0]])
    with pytest.raises(RestPointError):
        field_from_dict({"name": "sink", "space": "euclidean", "dim": 2,
                         "expressions": ["-x", "-y"], "variables": ["x", "y"],
                         "domain": [[[-1, -1], [1, 1]]]})
