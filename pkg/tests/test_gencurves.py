"""Tests for generalized curves and path-measure lifting."""

from __future__ import annotations

import math

import numpy as np
import pytest

from pywardrop.core.assignment import FlowState, TransportPlan, all_or_nothing, solve_beckmann
from pywardrop.core.congestion import CongestionModel
from pywardrop.core.continuum import ThetaMeasure, XiField
from pywardrop.core.gencurves import (
    ArcXi,
    GeneralizedCurve,
    GeneralizedCurveMeasure,
    beckmann_density_objective,
    build_Q_eps,
    cone_constant,
    curve_cost,
    equilibrium_residual,
    lift_path,
    m_Q,
    m_Q_density,
    pushforward,
    reduce_decomposition,
    reparameterize,
)
from pywardrop.core.network import DirectionFamily, Domain, Network
from pywardrop.exceptions import PathError, WardropValidationError, ZeroLengthArcError


@pytest.fixture
def corner_flow(grid3: Network, corner_plan: TransportPlan) -> FlowState:
    """All-or-nothing corner flow under uniform times."""
    return all_or_nothing(grid3, corner_plan, np.ones(grid3.n_arcs))


class TestGeneralizedCurve:
    """Test curve validation and derived quantities."""

    def test_knots_must_increase(self) -> None:
        """Repeated knots are rejected."""
        with pytest.raises(WardropValidationError):
            GeneralizedCurve([[0, 0], [1, 0], [2, 0]], [0.0, 0.5, 0.5], np.ones((2, 4)))

    def test_rho_nonnegative(self) -> None:
        """Weights are nonnegative."""
        with pytest.raises(WardropValidationError):
            GeneralizedCurve([[0, 0], [1, 0]], [0.0, 1.0], [[-1.0, 0, 0, 0]])

    def test_shape_mismatch(self) -> None:
        """One rho row per piece."""
        with pytest.raises(WardropValidationError):
            GeneralizedCurve([[0, 0], [1, 0]], [0.0, 1.0], np.ones((2, 4)))

    def test_geometry(self) -> None:
        """Length, velocity and endpoints of a two-piece curve."""
        curve = GeneralizedCurve([[0, 0], [1, 0], [1, 2]], [0.0, 0.25, 1.0], [[4, 0, 0, 0], [0, 8 / 3, 0, 0]])
        assert curve.length == pytest.approx(3.0)
        np.testing.assert_allclose(curve.velocities, [[4, 0], [0, 8 / 3]])
        np.testing.assert_allclose(curve.end, [1, 2])
        assert curve.rho_l1() == pytest.approx(3.0)
        assert curve.identity_residual(DirectionFamily.cartesian(2)) == pytest.approx(0.0)


class TestLiftPath:
    """Test the canonical curve of a network path."""

    def test_lift(self, grid3: Network) -> None:
        """Knots k/L and rho = L |e| in the arc's class."""
        curve = lift_path(grid3, [0, 1, 2, 5])
        np.testing.assert_allclose(curve.knots, [0, 1 / 3, 2 / 3, 1])
        assert curve.nodes == (0, 1, 2, 5)
        assert curve.rho_l1() == pytest.approx(1.5)
        np.testing.assert_allclose(curve.rho.sum(axis=1), 1.5)
        assert curve.rho[0, 1] == pytest.approx(1.5)
        assert curve.rho[2, 0] == pytest.approx(1.5)
        assert curve.identity_residual(grid3.family) == pytest.approx(0.0, abs=1e-12)

    def test_lift_by_arcs(self, grid3: Network) -> None:
        """Arc ids give the same curve as node sequences."""
        arcs = grid3.arcs_of([0, 3, 6])
        np.testing.assert_allclose(lift_path(grid3, arcs=arcs).points, lift_path(grid3, [0, 3, 6]).points)

    def test_empty_arcs(self, grid3: Network) -> None:
        """A curve needs at least one arc."""
        with pytest.raises(ZeroLengthArcError):
            lift_path(grid3, arcs=[])

    def test_broken_path(self, grid3: Network) -> None:
        """Non-adjacent nodes are not a path."""
        with pytest.raises(PathError):
            lift_path(grid3, [0, 8])


class TestReparameterize:
    """Test constant-speed reparameterisation."""

    def test_preserves_l1_and_cost(self, grid3: Network) -> None:
        """||rho||_1 and L_xi do not change."""
        curve = GeneralizedCurve(
            grid3.nodes[[0, 1, 4]], [0.0, 0.1, 1.0], [[0, 5.0, 0, 0], [5 / 9, 0, 0, 0]]
        )
        xi = XiField.from_config({"classes": [[[[1, 0], 1.0], [[0, 0], 1.0]], 2.0, 1.0, 1.0]})
        again = reparameterize(curve)
        assert again.rho_l1() == pytest.approx(curve.rho_l1())
        assert curve_cost(again, xi) == pytest.approx(curve_cost(curve, xi))
        np.testing.assert_allclose(again.knots, [0.0, 0.5, 1.0])
        np.testing.assert_allclose(np.linalg.norm(again.velocities, axis=1), again.length)

    def test_drops_zero_length_pieces(self) -> None:
        """Stationary pieces disappear."""
        curve = GeneralizedCurve([[0, 0], [0, 0], [1, 0]], [0.0, 0.5, 1.0], [[0, 0, 0, 0], [2, 0, 0, 0]])
        assert reparameterize(curve).n_pieces == 1

    def test_zero_length_curve(self) -> None:
        """A constant curve cannot be reparameterised."""
        curve = GeneralizedCurve([[0, 0], [0, 0]], [0.0, 1.0], [[0, 0, 0, 0]])
        with pytest.raises(ZeroLengthArcError):
            reparameterize(curve)


class TestReduceDecomposition:
    """Test removal of cancelling directions."""

    def test_opposite_pair(self) -> None:
        """+e_1 and -e_1 cancel down to the net velocity."""
        family = DirectionFamily.cartesian(2)
        curve = GeneralizedCurve([[0, 0], [1, 0]], [0.0, 1.0], [[2.0, 0, 1.0, 0]])
        reduced = reduce_decomposition(family, curve)
        np.testing.assert_allclose(reduced.rho, [[1.0, 0, 0, 0]])
        assert reduced.identity_residual(family) == pytest.approx(0.0, abs=1e-12)

    def test_two_cancellations(self) -> None:
        """Both axes are reduced."""
        family = DirectionFamily.cartesian(2)
        curve = GeneralizedCurve([[0, 0], [0.5, 0.5]], [0.0, 1.0], [[1.0, 1.0, 0.5, 0.5]])
        reduced = reduce_decomposition(family, curve)
        np.testing.assert_allclose(reduced.rho, [[0.5, 0.5, 0, 0]], atol=1e-12)

    def test_never_increases(self) -> None:
        """Reduction is bounded by the input weights."""
        family = DirectionFamily.triangular()
        rng = np.random.default_rng(2)
        rho = rng.uniform(0.0, 1.0, (3, 6))
        velocities = np.einsum("lk,kd->ld", rho, family.directions) / 3
        points = np.vstack([[0.0, 0.0], np.cumsum(velocities, axis=0)])
        curve = GeneralizedCurve(points, [0, 1 / 3, 2 / 3, 1], rho)
        reduced = reduce_decomposition(family, curve)
        assert np.all(reduced.rho <= curve.rho + 1e-15)
        assert reduced.identity_residual(family) == pytest.approx(0.0, abs=1e-9)
        assert reduced.rho_l1() <= curve.rho_l1()


class TestConeConstant:
    """Test the sampled cone separation."""

    def test_cartesian(self) -> None:
        """Two orthogonal directions separate at 1/sqrt(2)."""
        result = cone_constant(DirectionFamily.cartesian(2))
        assert result.delta == pytest.approx(1 / math.sqrt(2))
        assert result.C_prime == pytest.approx(math.sqrt(2))

    def test_triangular(self) -> None:
        """Directions 120 degrees apart separate at 1/2."""
        assert cone_constant(DirectionFamily.triangular()).delta == pytest.approx(0.5)


class TestCurveMeasures:
    """Test Q_eps, its pairings and its interchange form."""

    def test_indicator_pairing(self, grid3: Network, quadratic_model: CongestionModel) -> None:
        """Pairing with an arc indicator recovers eps^(d/2-1) |e| m_e."""
        plan = TransportPlan.from_mapping({(0, 8): 1.0, (6, 2): 0.5})
        flow = solve_beckmann(grid3, quadratic_model, plan, {"rel_gap_tol": 1e-8})
        measure = build_Q_eps(grid3, flow)
        for arc in range(grid3.n_arcs):
            paired = m_Q(grid3.family, measure, ArcXi.indicator(grid3, arc))
            assert paired == pytest.approx(grid3.lengths[arc] * flow.arc_masses[arc], abs=1e-12)

    def test_pushforward(self, grid3: Network, corner_flow: FlowState) -> None:
        """Endpoint marginal is the scaled plan."""
        assert pushforward(build_Q_eps(grid3, corner_flow)) == pytest.approx({(0, 8): 1.0})

    def test_self_pairs_skipped(self, grid3: Network) -> None:
        """Paths with no arcs carry no curve."""
        flow = all_or_nothing(grid3, TransportPlan.single(4, 4, 1.0), np.ones(grid3.n_arcs))
        assert len(build_Q_eps(grid3, flow)) == 0

    def test_normalize(self, grid3: Network) -> None:
        """Normalised measures are probability measures."""
        flow = all_or_nothing(grid3, TransportPlan.single(0, 8, 3.0), np.ones(grid3.n_arcs))
        measure = build_Q_eps(grid3, flow, normalize=True)
        assert measure.normalized
        assert measure.total_weight == pytest.approx(1.0, abs=1e-15)

    def test_normalize_zero(self) -> None:
        """The zero measure has no normalisation."""
        with pytest.raises(WardropValidationError):
            GeneralizedCurveMeasure(atoms=()).normalize()

    def test_negative_weight(self, grid3: Network) -> None:
        """Atom weights are nonnegative."""
        with pytest.raises(WardropValidationError):
            GeneralizedCurveMeasure(atoms=((lift_path(grid3, [0, 1]), -1.0),))

    def test_dict_round_trip(self, grid3: Network, corner_flow: FlowState) -> None:
        """Atoms rebuild from nodes, knots and rho."""
        measure = build_Q_eps(grid3, corner_flow)
        again = GeneralizedCurveMeasure.from_dict(measure.to_dict(), grid3)
        assert again.total_weight == pytest.approx(measure.total_weight)
        (curve, _), (rebuilt, _) = measure.atoms[0], again.atoms[0]
        np.testing.assert_allclose(rebuilt.rho, curve.rho)
        assert rebuilt.nodes == curve.nodes

    def test_dict_without_rho(self, grid3: Network) -> None:
        """Missing weights fall back to the lifted path."""
        data = {"atoms": [{"nodes": [0, 1, 2], "rho_knots": [0.0, 0.5, 1.0], "weight": 2.0}]}
        [(curve, weight)] = GeneralizedCurveMeasure.from_dict(data, grid3).atoms
        assert weight == 2.0
        assert curve.rho_l1() == pytest.approx(1.0)


class TestDensityAndEquilibrium:
    """Test binned densities and the continuum equilibrium residual."""

    def test_density_mass(self, grid3: Network, corner_flow: FlowState, unit_square: Domain) -> None:
        """Binned masses add up to sum weight ||rho||_1."""
        measure = build_Q_eps(grid3, corner_flow)
        theta = ThetaMeasure.build(grid3.family, unit_square, {"quadrature_step": 0.125})
        masses = m_Q_density(grid3.family, measure, theta)
        assert masses.sum() == pytest.approx(sum(w * c.rho_l1() for c, w in measure))

    def test_density_objective(
        self, grid3: Network, corner_flow: FlowState, unit_square: Domain, quadratic_model: CongestionModel
    ) -> None:
        """The binned Beckmann value is at least the free-flow part delta * mass."""
        measure = build_Q_eps(grid3, corner_flow)
        theta = ThetaMeasure.build(grid3.family, unit_square, {"quadrature_step": 0.125})
        value = beckmann_density_objective(grid3.family, quadratic_model, measure, theta)
        assert value > 2.0

    def test_geodesics_have_zero_residual(
        self, grid3: Network, corner_flow: FlowState, unit_square: Domain
    ) -> None:
        """Monotone staircases are l1 geodesics for xi = 1."""
        measure = build_Q_eps(grid3, corner_flow)
        result = equilibrium_residual(grid3.family, measure, XiField.constant(1.0, 4), unit_square, 0.25)
        assert result.curve_cost == pytest.approx(2.0)
        assert result.endpoint_cost == pytest.approx(2.0)
        assert result.relative == pytest.approx(0.0, abs=1e-12)

    def test_arc_metric_needs_arcs(self) -> None:
        """Per-arc metrics apply to lifted curves only."""
        curve = GeneralizedCurve([[0, 0], [1, 0]], [0.0, 1.0], [[1.0, 0, 0, 0]])
        with pytest.raises(WardropValidationError):
            curve_cost(curve, ArcXi(network=None, values=np.ones(1)))  # type: ignore[arg-type]

    def test_class_count_mismatch(self, grid3: Network, corner_flow: FlowState) -> None:
        """xi must match the family."""
        with pytest.raises(WardropValidationError):
            m_Q(grid3.family, build_Q_eps(grid3, corner_flow), XiField.constant(1.0, 6))
