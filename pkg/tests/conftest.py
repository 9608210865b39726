"""Pytest configuration and fixtures for pywardrop tests."""

from __future__ import annotations

from typing import Any

import pytest

from pywardrop.core.assignment import TransportPlan
from pywardrop.core.congestion import CongestionModel
from pywardrop.core.network import Domain, Network, build_custom, build_network


@pytest.fixture
def unit_square() -> Domain:
    """The closed unit square."""
    return Domain.box([0.0, 0.0], [1.0, 1.0])


@pytest.fixture
def grid3(unit_square: Domain) -> Network:
    """Cartesian 3x3 grid on the unit square (eps = 1/2)."""
    return build_network("cartesian", unit_square, 0.5)


@pytest.fixture
def grid4(unit_square: Domain) -> Network:
    """Cartesian 4x4 grid on the unit square (eps = 1/3)."""
    return build_network("cartesian", unit_square, 1.0 / 3.0)


@pytest.fixture
def quadratic_model() -> CongestionModel:
    """Power law q = 2, a = 1, delta = 1 on the four cartesian classes."""
    return CongestionModel.power_law(q=2.0, a=1.0, delta=1.0, n_classes=4)


@pytest.fixture
def pigou() -> Network:
    """Two parallel unit arcs from node 0 to node 1."""
    return build_custom(
        nodes=[[0.0, 0.0], [1.0, 0.0]],
        arcs=[[0, 1, 0], [0, 1, 1]],
        epsilon=1.0,
        vectors=[[1.0, 0.0], [1.0, 0.0]],
    )


@pytest.fixture
def pigou_model() -> CongestionModel:
    """t_0 = m + 1/2 on arc 0 and t_1 = m/2 + 1 on arc 1."""
    return CongestionModel.power_law(q=2.0, a=[1.0, 0.5], delta=[0.5, 1.0])


@pytest.fixture
def corner_plan() -> TransportPlan:
    """Unit mass between opposite corners of the 3x3 grid."""
    return TransportPlan.single(0, 8, 1.0)


@pytest.fixture
def experiment_dict() -> dict[str, Any]:
    """Small three-scale refinement configuration."""
    return {
        "family": "cartesian",
        "domain": "box:0,0,1,1",
        "epsilons": [0.5, 0.25, 0.125],
        "model": {"q": 2.0, "classes": [{"a_const": 1.0, "delta": 1.0}]},
        "plan": {"kind": "atoms", "atoms": [{"x": [0.0, 0.0], "y": [1.0, 1.0], "mass": 1.0}]},
        "test_functions": ["one", "x1"],
        "continuum": {"quadrature_step": 0.125},
        "solver": {"rel_gap_tol": 1e-8},
    }
