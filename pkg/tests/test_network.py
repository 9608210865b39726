"""Tests for domains, direction families, lattice builders and network audits."""

from __future__ import annotations

import math

import numpy as np
import pytest

from pywardrop.constants import FamilyTag
from pywardrop.core.network import (
    DirectionFamily,
    Domain,
    Network,
    build_custom,
    build_network,
    direction_measure_sum,
    validate_hypotheses,
)
from pywardrop.exceptions import (
    EmptyNetworkError,
    NetworkError,
    PathError,
    WardropValidationError,
    WardropValidationWarning,
)


def _class_vectors_match(network: Network) -> bool:
    edges = network.nodes[network.heads] - network.nodes[network.tails]
    units = edges / np.linalg.norm(edges, axis=1, keepdims=True)
    expected = network.family.vectors(network.tail_points)[np.arange(network.n_arcs), network.classes]
    return bool(np.allclose(units, expected, atol=1e-12))


class TestDomain:
    """Test domain construction and membership."""

    def test_box_is_closed(self, unit_square: Domain) -> None:
        """Boundary points belong to a box."""
        points = np.array([[0.0, 0.0], [1.0, 1.0], [0.5, 1.0], [1.0 + 1e-6, 0.5]])
        assert unit_square.contains(points).tolist() == [True, True, True, False]
        assert unit_square.area == pytest.approx(1.0)

    def test_disk_membership(self) -> None:
        """Disk membership uses the Euclidean distance to the center."""
        disk = Domain.disk([0.0, 0.0], 1.0)
        assert disk.contains(np.array([[1.0, 0.0], [0.7, 0.7], [0.8, 0.8]])).tolist() == [True, True, False]
        assert disk.area == pytest.approx(math.pi)

    @pytest.mark.parametrize(
        ("spec", "kind"),
        [("box:0,0,1,1", "box"), ("disk:0,0,1", "disk"), ("blob:0,0", "blob"), ("blob:0,0,0.3", "blob")],
    )
    def test_from_spec(self, spec: str, kind: str) -> None:
        """String specifications parse to the right kind and round-trip."""
        domain = Domain.from_spec(spec)
        assert domain.kind == kind
        again = Domain.from_spec(domain.to_spec())
        assert again.kind == kind
        assert again.lower == pytest.approx(domain.lower)

    @pytest.mark.parametrize("spec", ["ball:0,0,1", "box:0,0,1", "disk:1,2", "box:a,b,c,d"])
    def test_from_spec_rejects_malformed(self, spec: str) -> None:
        """Malformed specifications raise a validation error."""
        with pytest.raises(WardropValidationError):
            Domain.from_spec(spec)

    def test_empty_bounding_box(self) -> None:
        """A box with lower >= upper is rejected."""
        with pytest.raises(WardropValidationError):
            Domain.box([1.0, 0.0], [0.0, 1.0])

    def test_blob_is_not_convex(self) -> None:
        """The smooth blob is flagged non-convex and contains its center."""
        blob = Domain.blob([0.0, 0.0])
        assert not blob.convex
        assert blob.contains(np.zeros((1, 2)))[0]


class TestDirectionFamily:
    """Test built-in and custom direction families."""

    def test_cartesian_classes(self) -> None:
        """Class j is +e_j and class d + j is -e_j."""
        family = DirectionFamily.cartesian(3)
        assert family.size == 6
        vectors = family.vectors(np.zeros(3))[0]
        assert vectors[1].tolist() == [0.0, 1.0, 0.0]
        assert vectors[4].tolist() == [0.0, -1.0, 0.0]

    @pytest.mark.parametrize("tag", ["triangular", "hexagonal"])
    def test_sixfold_angles(self, tag: str) -> None:
        """Six-fold families point at pi/6 + k pi/3."""
        family = DirectionFamily.for_tag(tag)
        vectors = family.vectors(np.zeros(2))[0]
        angles = np.mod(np.arctan2(vectors[:, 1], vectors[:, 0]), 2 * np.pi)
        assert angles == pytest.approx(np.pi / 6 + np.arange(6) * np.pi / 3)

    def test_coefficients(self) -> None:
        """Volume coefficients of the lattice families."""
        assert DirectionFamily.triangular().coefficients[0] == pytest.approx(2 / math.sqrt(3))
        assert DirectionFamily.hexagonal().coefficients[0] == pytest.approx(2 / (3 * math.sqrt(3)))

    def test_non_unit_vectors_rejected(self) -> None:
        """Direction vectors must have unit length."""
        with pytest.raises(WardropValidationError):
            DirectionFamily(dimension=2, directions=np.array([[2.0, 0.0]]), coefficients=np.ones(1))

    def test_callable_family_check(self) -> None:
        """Callable families are sampled by ``check``."""

        def rotating(points: np.ndarray) -> np.ndarray:
            angle = points[:, 0]
            base = np.stack([np.cos(angle), np.sin(angle)], axis=1)
            return np.stack([base, -base], axis=1)

        family = DirectionFamily(
            dimension=2,
            directions=rotating,
            coefficients=lambda points: np.ones((points.shape[0], 2)),
            size=2,
        )
        defect, minimum = family.check(np.random.default_rng(1).uniform(size=(20, 2)))
        assert defect < 1e-12
        assert minimum == 1.0

    def test_custom_tag_has_no_builtin(self) -> None:
        """Custom families are never looked up by tag."""
        with pytest.raises(WardropValidationError):
            DirectionFamily.for_tag(FamilyTag.CUSTOM)


class TestCartesianNetwork:
    """Test the cartesian lattice builder."""

    def test_unit_square_counts(self, grid3: Network) -> None:
        """A 3x3 grid has 9 nodes and 24 arcs, 6 per class."""
        assert grid3.n_nodes == 9
        assert grid3.n_arcs == 24
        assert grid3.class_counts.tolist() == [6, 6, 6, 6]

    def test_node_numbering(self, grid3: Network) -> None:
        """Nodes are numbered in lexicographic order of their lattice keys."""
        expected = np.array([[i * 0.5, j * 0.5] for i in range(3) for j in range(3)])
        np.testing.assert_allclose(grid3.nodes, expected)

    def test_arc_order(self, grid3: Network) -> None:
        """Arcs are sorted by (tail, class)."""
        keys = list(zip(grid3.tails.tolist(), grid3.classes.tolist(), strict=True))
        assert keys == sorted(keys)

    def test_class_vectors(self, grid3: Network) -> None:
        """Every arc points along its class direction and has length eps."""
        assert _class_vectors_match(grid3)
        np.testing.assert_allclose(grid3.lengths, 0.5)

    def test_disk_matches_brute_force(self) -> None:
        """Nodes and arcs on a disk agree with a direct enumeration."""
        eps = 0.25
        network = build_network("cartesian", Domain.disk([0.0, 0.0], 1.0), eps)
        points = {(i, j) for i in range(-4, 5) for j in range(-4, 5) if i * i + j * j <= 16}
        arcs = {
            (p, (p[0] + di, p[1] + dj))
            for p in points
            for di, dj in ((1, 0), (0, 1), (-1, 0), (0, -1))
            if (p[0] + di, p[1] + dj) in points
        }
        assert network.n_nodes == len(points) == 49
        assert network.n_arcs == len(arcs)
        found = {
            (
                tuple(np.rint(network.nodes[t] / eps).astype(int).tolist()),
                tuple(np.rint(network.nodes[h] / eps).astype(int).tolist()),
            )
            for t, h in zip(network.tails, network.heads, strict=True)
        }
        assert found == arcs

    def test_three_dimensional_box(self) -> None:
        """Cartesian lattices work in any dimension."""
        network = build_network("cartesian", Domain.box([0, 0, 0], [1, 1, 1]), 0.5)
        assert network.n_nodes == 27
        assert network.n_arcs == 6 * 2 * 9
        assert network.family.size == 6

    def test_empty_domain(self) -> None:
        """A disk between lattice nodes has no network."""
        with pytest.raises(EmptyNetworkError):
            build_network("cartesian", Domain.disk([0.5, 0.5], 0.1), 1.0)

    def test_isolated_node_dropped(self) -> None:
        """A single node without arcs leaves an empty network."""
        with pytest.raises(EmptyNetworkError):
            build_network("cartesian", Domain.disk([0.0, 0.0], 0.1), 1.0)

    def test_nonpositive_epsilon(self, unit_square: Domain) -> None:
        """The lattice spacing must be positive."""
        with pytest.raises(NetworkError):
            build_network("cartesian", unit_square, 0.0)


class TestTriangularNetwork:
    """Test the triangular lattice builder."""

    def test_hexagon_around_origin(self) -> None:
        """A disk of radius just above eps holds a center and six neighbours."""
        eps = 0.1
        network = build_network("triangular", Domain.disk([0.0, 0.0], 1.01 * eps), eps)
        assert network.n_nodes == 7
        assert network.n_arcs == 24
        np.testing.assert_allclose(network.lengths, eps)
        assert _class_vectors_match(network)

    def test_interior_degree(self, unit_square: Domain) -> None:
        """Interior nodes have six outgoing arcs, one per class."""
        network = build_network("triangular", unit_square, 0.1)
        degree = np.bincount(network.tails, minlength=network.n_nodes)
        assert degree.max() == 6
        center = network.nearest_node([0.5, 0.5])
        assert sorted(network.classes[network.tails == center].tolist()) == list(range(6))


class TestHexagonalNetwork:
    """Test the honeycomb lattice builder."""

    def test_degree_and_lengths(self, unit_square: Domain) -> None:
        """Every node has at most three outgoing arcs of length eps."""
        network = build_network("hexagonal", unit_square, 0.1)
        degree = np.bincount(network.tails, minlength=network.n_nodes)
        assert degree.max() == 3
        np.testing.assert_allclose(network.lengths, 0.1)
        assert _class_vectors_match(network)

    def test_sublattice_classes(self, unit_square: Domain) -> None:
        """Each node uses either the even or the odd classes."""
        network = build_network("hexagonal", unit_square, 0.1)
        for node in range(network.n_nodes):
            parities = set((network.classes[network.tails == node] % 2).tolist())
            assert len(parities) == 1

    def test_node_growth(self) -> None:
        """Halving eps roughly quadruples the node count."""
        disk = Domain.disk([0.0, 0.0], 1.0)
        coarse = build_network("hexagonal", disk, 0.1)
        fine = build_network("hexagonal", disk, 0.05)
        assert 3.5 < fine.n_nodes / coarse.n_nodes < 4.5


class TestNetworkMethods:
    """Test lookups, paths and the interchange format."""

    def test_nearest_node_tie(self, grid3: Network) -> None:
        """Ties go to the lowest node index."""
        assert grid3.nearest_node([0.25, 0.0]) == 0
        assert grid3.nearest_node([0.9, 0.9]) == 8

    def test_arcs_of_and_nodes_of(self, grid3: Network) -> None:
        """Node sequences and arc sequences convert into each other."""
        arcs = grid3.arcs_of([0, 1, 2, 5])
        assert grid3.nodes_of(arcs) == (0, 1, 2, 5)
        assert grid3.nodes_of(()) == ()

    def test_arcs_of_rejects_gaps(self, grid3: Network) -> None:
        """Consecutive nodes must share an arc."""
        with pytest.raises(PathError):
            grid3.arcs_of([0, 4])
        with pytest.raises(PathError):
            grid3.arcs_of([0])

    def test_dict_round_trip(self, grid3: Network) -> None:
        """A lattice network survives its JSON form."""
        again = Network.from_dict(grid3.to_dict())
        assert again.tag is FamilyTag.CARTESIAN
        np.testing.assert_array_equal(again.tails, grid3.tails)
        np.testing.assert_array_equal(again.classes, grid3.classes)

    def test_custom_round_trip(self, pigou: Network) -> None:
        """Custom networks keep their declared directions."""
        again = Network.from_dict(pigou.to_dict())
        assert again.family.size == 2
        assert again.n_arcs == 2

    def test_custom_inferred_directions(self) -> None:
        """Without vectors each class takes the mean direction of its arcs."""
        network = build_custom([[0, 0], [0, 2]], [[0, 1, 0], [1, 0, 1]], epsilon=2.0)
        np.testing.assert_allclose(network.family.vectors(np.zeros(2))[0], [[0, 1], [0, -1]], atol=1e-12)

    def test_self_loop_rejected(self) -> None:
        """Arcs must join distinct nodes."""
        with pytest.raises(NetworkError):
            build_custom([[0, 0], [1, 0]], [[0, 0, 0]], epsilon=1.0)

    def test_custom_not_generated(self, unit_square: Domain) -> None:
        """Custom networks can only be imported."""
        with pytest.raises(NetworkError):
            build_network("custom", unit_square, 0.5)


class TestDirectionMeasure:
    """Test the discrete direction measure against its limit."""

    def test_cartesian_sum_is_exact(self, unit_square: Domain) -> None:
        """On the unit square the cartesian sum is 4 (1 + eps)."""
        for eps in (0.5, 0.25, 0.125):
            network = build_network("cartesian", unit_square, eps)
            assert direction_measure_sum(network) == pytest.approx(4 * (1 + eps))

    def test_cartesian_extrapolates_to_limit(self, unit_square: Domain) -> None:
        """Richardson extrapolation of the sum recovers sum_k c_k |Omega|."""
        coarse = direction_measure_sum(build_network("cartesian", unit_square, 0.25))
        fine = direction_measure_sum(build_network("cartesian", unit_square, 0.125))
        assert 2 * fine - coarse == pytest.approx(4.0, abs=1e-9)

    def test_triangular_extrapolates_to_limit(self, unit_square: Domain) -> None:
        """Triangular sums approach 6 c_t |Omega| = 12 / sqrt(3)."""
        coarse = direction_measure_sum(build_network("triangular", unit_square, 0.05))
        fine = direction_measure_sum(build_network("triangular", unit_square, 0.025))
        assert 2 * fine - coarse == pytest.approx(12 / math.sqrt(3), rel=0.05)

    def test_test_function_weighting(self, grid3: Network) -> None:
        """phi(x, v) = v_1 cancels between opposite classes."""
        assert direction_measure_sum(grid3, lambda x, v: v[:, 0]) == pytest.approx(0.0, abs=1e-12)


class TestValidateHypotheses:
    """Test the structural audit report."""

    def test_lattice_passes(self, grid3: Network) -> None:
        """A cartesian grid passes every structural check."""
        report = validate_hypotheses(grid3)
        assert report.passed
        assert report.reverse_arcs_ok
        assert report.segments_inside is True
        assert report.lower_constant == pytest.approx(1.0)
        assert report.direction_integral == pytest.approx(4.0)
        assert report.direction_error == pytest.approx(2.0)

    def test_blob_segments_inside(self) -> None:
        """Arcs of a non-convex domain stay inside it."""
        network = build_network("cartesian", Domain.blob([0.0, 0.0]), 0.05)
        report = validate_hypotheses(network)
        assert report.segments_inside is True
        assert report.length_bound_ok

    def test_short_arc_warns(self) -> None:
        """Arcs much shorter than eps fail the length bound with a warning."""
        network = build_custom(
            [[0.0, 0.0], [1.0, 0.0], [1.05, 0.0]],
            [[0, 1, 0], [1, 0, 1], [1, 2, 0], [2, 1, 1]],
            epsilon=1.0,
            vectors=[[1.0, 0.0], [-1.0, 0.0]],
        )
        with pytest.warns(WardropValidationWarning):
            report = validate_hypotheses(network)
        assert not report.length_bound_ok
        assert report.segments_inside is None
        assert report.to_dict()["passed"] is False

    def test_network_without_arcs(self) -> None:
        """Auditing needs at least one arc."""
        network = build_custom([[0.0, 0.0]], np.zeros((0, 3), dtype=int), epsilon=1.0, n_classes=1)
        with pytest.raises(NetworkError):
            validate_hypotheses(network)
