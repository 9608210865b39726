"""Generalized curves (sigma, rho) and finitely supported measures over them.

A generalized curve is a piecewise-affine curve sigma on [0, 1] together
with piecewise-constant weights rho_k >= 0 decomposing its velocity in the
direction family: sigma'(t) = sum_k v_k(sigma(t)) rho_k(t). Discrete flows
lift to measures Q_eps with one atom per carried path.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import optimize

from pywardrop.constants import (
    DEFAULT_CONTINUUM_CONFIG,
    AtomDump,
    ContinuumConfig,
    MeasureDump,
    resolve_config,
)
from pywardrop.core.assignment import FlowState
from pywardrop.core.congestion import CongestionModel
from pywardrop.core.continuum import AuxiliaryGraph, ThetaMeasure, XiField
from pywardrop.core.network import DirectionFamily, Domain, Network
from pywardrop.exceptions import (
    WardropValidationError,
    ZeroLengthArcError,
)
from pywardrop.utils import sample_unit_sphere

logger = logging.getLogger(__name__)

_ACTIVE_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class GeneralizedCurve:
    """Piecewise-affine sigma with piecewise-constant rho on shared knots.

    Attributes:
        points: Curve vertices sigma(knots), shape (L + 1, d)
        knots: Increasing breakpoints from 0 to 1, shape (L + 1,)
        rho: Weights per piece and class, shape (L, N)
        nodes: Network node ids of the vertices, when lifted from a path
        arcs: Network arc ids of the pieces, when lifted from a path
    """

    points: np.ndarray
    knots: np.ndarray
    rho: np.ndarray
    nodes: tuple[int, ...] = ()
    arcs: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        """Validate shapes, knots and signs."""
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        knots = np.asarray(self.knots, dtype=float).reshape(-1)
        rho = np.atleast_2d(np.asarray(self.rho, dtype=float))
        if points.shape[0] != knots.size or rho.shape[0] != knots.size - 1:
            msg = "Curve vertices, knots and rho pieces do not match"
            raise WardropValidationError(msg, field_name="knots", invalid_value=knots.size)
        if knots.size < 2 or np.any(np.diff(knots) <= 0):
            msg = "Knots must increase strictly"
            raise WardropValidationError(msg, field_name="knots")
        if np.any(rho < 0):
            msg = "rho must be nonnegative"
            raise WardropValidationError(msg, field_name="rho", invalid_value=float(rho.min()))
        for name, array in (("points", points), ("knots", knots), ("rho", rho)):
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def n_pieces(self) -> int:
        """Number of affine pieces."""
        return int(self.rho.shape[0])

    @property
    def durations(self) -> np.ndarray:
        """Knot spacings."""
        return np.diff(self.knots)

    @property
    def piece_lengths(self) -> np.ndarray:
        """Euclidean length of each piece."""
        return np.linalg.norm(np.diff(self.points, axis=0), axis=1)

    @property
    def length(self) -> float:
        """Length l(sigma)."""
        return float(self.piece_lengths.sum())

    @property
    def velocities(self) -> np.ndarray:
        """sigma' on each piece."""
        return np.diff(self.points, axis=0) / self.durations[:, None]

    @property
    def midpoints(self) -> np.ndarray:
        """sigma at piece midpoints."""
        return 0.5 * (self.points[:-1] + self.points[1:])

    @property
    def start(self) -> np.ndarray:
        """sigma(0)."""
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        """sigma(1)."""
        return self.points[-1]

    def rho_l1(self) -> float:
        """||rho||_{L^1} = sum_k int rho_k."""
        return float(np.sum(self.rho * self.durations[:, None]))

    def identity_residual(self, family: DirectionFamily) -> float:
        """Max |sigma' - sum_k v_k rho_k| over piece midpoints."""
        vectors = family.vectors(self.midpoints)
        combined = np.einsum("lk,lkd->ld", self.rho, vectors)
        return float(np.max(np.linalg.norm(self.velocities - combined, axis=1), initial=0.0))

    def with_rho(self, rho: np.ndarray) -> GeneralizedCurve:
        """Same curve with different weights."""
        return GeneralizedCurve(self.points, self.knots, rho, self.nodes, self.arcs)


def lift_path(
    network: Network,
    path: Sequence[int] | None = None,
    arcs: Sequence[int] | None = None,
) -> GeneralizedCurve:
    """Canonical generalized curve of a network path.

    With L arcs the knots are k/L; on piece k the class of arc k gets
    rho = L |e_k| and every other class 0.

    Args:
        network: Network the path lives on
        path: Node sequence
        arcs: Arc ids, an alternative to ``path`` for parallel arcs

    Raises:
        PathError: If consecutive nodes are not joined by an arc
    """
    arc_ids = tuple(int(a) for a in arcs) if arcs is not None else network.arcs_of(path or ())
    if not arc_ids:
        msg = "Cannot lift an empty path"
        raise ZeroLengthArcError(msg, field_name="path")
    L = len(arc_ids)
    index = np.asarray(arc_ids, dtype=np.int64)
    nodes = network.nodes_of(arc_ids)
    rho = np.zeros((L, network.family.size))
    rho[np.arange(L), network.classes[index]] = L * network.lengths[index]
    return GeneralizedCurve(
        points=network.nodes[list(nodes)],
        knots=np.arange(L + 1) / L,
        rho=rho,
        nodes=nodes,
        arcs=arc_ids,
    )


def reparameterize(curve: GeneralizedCurve) -> GeneralizedCurve:
    """Constant-speed reparameterisation.

    Knots move to arclength fractions and rho_k is multiplied by
    l(sigma) / |sigma'|, which keeps ||rho||_{L^1} and L_xi. Pieces of zero
    length are dropped.

    Raises:
        ZeroLengthArcError: If the curve has zero length
    """
    lengths = curve.piece_lengths
    total = float(lengths.sum())
    if total <= 0:
        msg = "Cannot reparameterise a curve of zero length"
        raise ZeroLengthArcError(msg, field_name="curve", invalid_value=total)
    keep = lengths > 0
    speeds = lengths[keep] / curve.durations[keep]
    rho = curve.rho[keep] * (total / speeds)[:, None]
    vertices = np.vstack([curve.points[:-1][keep], curve.points[-1:]])
    knots = np.concatenate([[0.0], np.cumsum(lengths[keep]) / total])
    knots[-1] = 1.0
    nodes = curve.nodes
    arcs = curve.arcs
    if nodes and not keep.all():
        kept = np.flatnonzero(keep)
        nodes = (*(curve.nodes[i] for i in kept), curve.nodes[-1])
        arcs = tuple(curve.arcs[i] for i in kept) if arcs else ()
    return GeneralizedCurve(points=vertices, knots=knots, rho=rho, nodes=nodes, arcs=arcs)


def _null_combination(vectors: np.ndarray) -> np.ndarray | None:
    """lambda >= 0 with sum lambda = 1 and sum lambda_k v_k = 0, if any."""
    n, d = vectors.shape
    A_eq = np.vstack([vectors.T, np.ones((1, n))])
    b_eq = np.concatenate([np.zeros(d), [1.0]])
    result = optimize.linprog(
        np.arange(1, n + 1, dtype=float), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * n, method="highs"
    )
    if result.status != 0:
        return None
    return np.maximum(result.x, 0.0)


def reduce_decomposition(family: DirectionFamily, curve: GeneralizedCurve) -> GeneralizedCurve:
    """Remove cancelling directions from rho piece by piece.

    While 0 is a convex combination of the active directions, subtract the
    largest feasible multiple of that combination; each pass deactivates at
    least one direction. The result never exceeds rho and keeps the
    decomposition identity.
    """
    vectors_at = family.vectors(curve.midpoints)
    reduced = np.array(curve.rho)
    for i in range(curve.n_pieces):
        r = reduced[i]
        while True:
            active = np.flatnonzero(r > _ACTIVE_TOL * max(1.0, float(r.max(initial=0.0))))
            if active.size < 2:
                break
            lam = _null_combination(vectors_at[i, active])
            if lam is None:
                break
            support = lam > 0
            ratios = r[active[support]] / lam[support]
            j = int(np.argmin(ratios))
            step = float(ratios[j])
            r[active] = np.maximum(r[active] - step * lam, 0.0)
            r[active[np.flatnonzero(support)[j]]] = 0.0
        r[r <= _ACTIVE_TOL * max(1.0, float(curve.rho[i].max(initial=0.0)))] = 0.0
    return curve.with_rho(np.minimum(reduced, curve.rho))


@dataclass(frozen=True)
class ConeConstant:
    """Cone separation delta of a direction family and C' = 1/delta."""

    delta: float
    C_prime: float
    samples: int


def cone_constant(
    family: DirectionFamily,
    x: Sequence[float] | None = None,
    config: ContinuumConfig | dict[str, Any] | None = None,
) -> ConeConstant:
    """Smallest sampled max_u min_{k in S} u . v_k over pointed subsets S.

    Subsets whose directions have 0 in their convex hull have no positive
    separation and are skipped.
    """
    cfg = resolve_config(DEFAULT_CONTINUUM_CONFIG, config)
    d = family.dimension
    point = np.zeros(d) if x is None else np.asarray(x, dtype=float)
    vectors = family.vectors(point)[0]
    count = cfg.cone_directions_2d if d == 2 else cfg.cone_directions_nd
    dots = sample_unit_sphere(d, count) @ vectors.T

    delta = np.inf
    for size in range(1, family.size + 1):
        for subset in itertools.combinations(range(family.size), size):
            separation = float(dots[:, list(subset)].min(axis=1).max())
            if separation > 0:
                delta = min(delta, separation)
    if not np.isfinite(delta):
        msg = "Direction family has no pointed sub-cone"
        raise WardropValidationError(msg, field_name="directions")
    return ConeConstant(delta=float(delta), C_prime=1.0 / float(delta), samples=count)


@dataclass(frozen=True, eq=False)
class GeneralizedCurveMeasure:
    """Finite measure sum_i weight_i delta_{(sigma_i, rho_i)}."""

    atoms: tuple[tuple[GeneralizedCurve, float], ...]
    normalized: bool = False

    def __post_init__(self) -> None:
        """Validate weights and normalisation."""
        weights = [w for _, w in self.atoms]
        if any(w < 0 for w in weights):
            msg = "Atom weights must be nonnegative"
            raise WardropValidationError(msg, field_name="weight", invalid_value=min(weights))
        if self.normalized and abs(sum(weights) - 1.0) > 1e-12:
            msg = "Probability-normalised measure must have total weight 1"
            raise WardropValidationError(msg, field_name="weight", invalid_value=sum(weights))

    def __len__(self) -> int:
        """Number of atoms."""
        return len(self.atoms)

    def __iter__(self) -> Iterator[tuple[GeneralizedCurve, float]]:
        """Iterate (curve, weight)."""
        return iter(self.atoms)

    @property
    def total_weight(self) -> float:
        """Total mass."""
        return float(sum(w for _, w in self.atoms))

    def normalize(self) -> GeneralizedCurveMeasure:
        """Probability-normalised copy.

        Raises:
            WardropValidationError: If the measure is zero
        """
        total = self.total_weight
        if total <= 0:
            msg = "Cannot normalise a zero measure"
            raise WardropValidationError(msg, field_name="weight")
        atoms = [(curve, w / total) for curve, w in self.atoms]
        # absorb rounding so the total is 1 to machine precision
        if atoms:
            drift = 1.0 - sum(w for _, w in atoms)
            atoms[-1] = (atoms[-1][0], atoms[-1][1] + drift)
        return GeneralizedCurveMeasure(atoms=tuple(atoms), normalized=True)

    def to_dict(self) -> MeasureDump:
        """JSON interchange representation."""
        atoms: list[AtomDump] = [
            {
                "nodes": list(curve.nodes),
                "rho_knots": curve.knots.tolist(),
                "rho": curve.rho.tolist(),
                "weight": float(weight),
            }
            for curve, weight in self.atoms
        ]
        return {"atoms": atoms}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], network: Network) -> GeneralizedCurveMeasure:
        """Rebuild atoms from node sequences, knots and rho."""
        atoms = []
        for entry in data.get("atoms", []):
            nodes = tuple(int(n) for n in entry["nodes"])
            arcs = network.arcs_of(nodes) if len(nodes) > 1 else ()
            knots = np.asarray(entry["rho_knots"], dtype=float)
            rho = entry.get("rho")
            curve = (
                GeneralizedCurve(network.nodes[list(nodes)], knots, rho, nodes, arcs)
                if rho is not None
                else reparameterize(lift_path(network, nodes))
            )
            atoms.append((curve, float(entry["weight"])))
        return cls(atoms=tuple(atoms), normalized=bool(data.get("normalized", False)))


def build_Q_eps(
    network: Network, flow: FlowState, normalize: bool = False
) -> GeneralizedCurveMeasure:
    """Q_eps = eps^(d/2 - 1) sum_paths w delta_{(sigma, rho)}.

    Curves are the constant-speed reparameterisations of the lifted paths.
    Paths with no arcs (source equal to sink) carry no curve and are
    skipped.
    """
    factor = network.epsilon ** (network.dimension / 2.0 - 1.0)
    atoms = tuple(
        (reparameterize(lift_path(network, arcs=path)), factor * w)
        for _, path, w in flow.paths()
        if path and w > 0
    )
    measure = GeneralizedCurveMeasure(atoms=atoms)
    logger.debug("Q_eps with %d atoms, total weight %.6g", len(atoms), measure.total_weight)
    return measure.normalize() if normalize and atoms else measure


@dataclass(frozen=True, eq=False)
class ArcXi:
    """Metric that is constant on each arc of a network."""

    network: Network
    values: np.ndarray

    @classmethod
    def indicator(cls, network: Network, arc: int) -> ArcXi:
        """1 on one arc, 0 elsewhere."""
        values = np.zeros(network.n_arcs)
        values[arc] = 1.0
        return cls(network=network, values=values)


def _gauss(count: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(count)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def curve_cost(
    curve: GeneralizedCurve, xi: XiField | ArcXi, gauss_points: int = 5
) -> float:
    """L_xi(sigma, rho) = sum_k int xi(sigma, v_k(sigma)) rho_k dt."""
    durations = curve.durations
    if isinstance(xi, ArcXi):
        if not curve.arcs:
            msg = "Per-arc metrics need curves lifted from network arcs"
            raise WardropValidationError(msg, field_name="arcs")
        per_piece = xi.values[list(curve.arcs)]
        return float(np.sum(per_piece * curve.rho.sum(axis=1) * durations))
    s, w = _gauss(gauss_points)
    starts, ends = curve.points[:-1], curve.points[1:]
    total = 0.0
    for node, weight in zip(s, w, strict=True):
        positions = starts + node * (ends - starts)
        total += weight * float(np.sum(xi.values(positions) * curve.rho * durations[:, None]))
    return total


def m_Q(
    family: DirectionFamily,
    measure: GeneralizedCurveMeasure,
    xi: XiField | ArcXi,
    config: ContinuumConfig | dict[str, Any] | None = None,
) -> float:
    """Pairing int xi dm^Q = sum_atoms weight L_xi(sigma, rho)."""
    cfg = resolve_config(DEFAULT_CONTINUUM_CONFIG, config)
    if isinstance(xi, XiField) and xi.n_classes != family.size:
        msg = "xi field and direction family disagree on the class count"
        raise WardropValidationError(msg, field_name="xi", invalid_value=xi.n_classes)
    return float(sum(w * curve_cost(curve, xi, cfg.gauss_points) for curve, w in measure))


def m_Q_density(
    family: DirectionFamily,
    measure: GeneralizedCurveMeasure,
    theta: ThetaMeasure,
) -> np.ndarray:
    """Masses of m^Q_k per quadrature cell, shape (n_cells, N).

    Each piece is split into sub-pieces no longer than half a cell and
    each sub-piece's weight * int rho_k dt goes to the cell holding its
    midpoint (the nearest cell when it falls outside the quadrature).
    """
    masses = np.zeros((theta.n_cells, family.size))
    cell_size = float(theta.step.min())
    for curve, weight in measure:
        lengths = curve.piece_lengths
        for i in range(curve.n_pieces):
            count = max(1, int(np.ceil(2.0 * lengths[i] / cell_size)))
            fractions = (np.arange(count) + 0.5) / count
            positions = curve.points[i] + fractions[:, None] * (curve.points[i + 1] - curve.points[i])
            cells = theta.locate(positions)
            outside = cells < 0
            if outside.any():
                cells[outside] = [
                    int(np.argmin(np.linalg.norm(theta.centers - pt, axis=1)))
                    for pt in positions[outside]
                ]
            share = weight * curve.rho[i] * curve.durations[i] / count
            np.add.at(masses, cells, np.broadcast_to(share, (count, family.size)))
    return masses


def beckmann_density_objective(
    family: DirectionFamily,
    model: CongestionModel,
    measure: GeneralizedCurveMeasure,
    theta: ThetaMeasure,
) -> float:
    """int sum_k G(x, v_k, dm^Q_k / dtheta) dtheta on the binned density."""
    masses = m_Q_density(family, measure, theta)
    class_weights = theta.class_weights()
    density = np.divide(masses, class_weights, out=np.zeros_like(masses), where=class_weights > 0)
    n, N = density.shape
    G = np.asarray(
        model.G(np.repeat(theta.centers, N, axis=0), np.tile(np.arange(N), n), density.reshape(-1))
    ).reshape(n, N)
    return float(np.sum(class_weights * G))


def pushforward(measure: GeneralizedCurveMeasure) -> dict[tuple[int, int], float]:
    """(e0, e1)-marginal keyed by the endpoint node ids of each atom.

    Raises:
        WardropValidationError: If an atom has no node ids
    """
    marginal: dict[tuple[int, int], float] = {}
    for curve, weight in measure:
        if not curve.nodes:
            msg = "Endpoint marginals need curves lifted from network paths"
            raise WardropValidationError(msg, field_name="nodes")
        key = (curve.nodes[0], curve.nodes[-1])
        marginal[key] = marginal.get(key, 0.0) + weight
    return marginal


@dataclass(frozen=True)
class EquilibriumResidual:
    """int L_xi dQ against int c_xi(sigma(0), sigma(1)) dQ."""

    curve_cost: float
    endpoint_cost: float
    relative: float


def equilibrium_residual(
    family: DirectionFamily,
    measure: GeneralizedCurveMeasure,
    xi: XiField,
    domain: Domain,
    h: float,
    graph: AuxiliaryGraph | None = None,
    config: ContinuumConfig | dict[str, Any] | None = None,
) -> EquilibriumResidual:
    """Equilibrium test of a curve measure under a continuous metric.

    At equilibrium every charged curve is a geodesic, so the two pairings
    agree; the relative residual is (curve - endpoint) / endpoint.

    Raises:
        WardropValidationError: For fields not tagged continuous
    """
    if not xi.is_continuous:
        msg = "The equilibrium residual needs a continuous xi"
        raise WardropValidationError(msg, field_name="regularity", invalid_value=xi.regularity)
    lhs = m_Q(family, measure, xi, config)
    graph = graph or AuxiliaryGraph.build(family, xi, domain, h)
    rhs = float(sum(w * graph.cost(curve.start, curve.end) for curve, w in measure))
    return EquilibriumResidual(
        curve_cost=lhs,
        endpoint_cost=rhs,
        relative=(lhs - rhs) / max(abs(rhs), 1e-30),
    )
