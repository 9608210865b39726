"""Continuum objects: direction measure, Finsler integrand, path cost, limit functional.

The direction measure theta(dx, dv) = sum_k c_k(x) delta_{v_k(x)} dx is
integrated with a midpoint rule on a uniform cell grid. The integrand
Phi_xi(x, z) is the cheapest conical decomposition of z in the direction
family, weighted by xi(x, v_k(x)); the path cost c_xi is approximated by
shortest paths on a fine auxiliary lattice.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pyarrow as pa
from scipy import interpolate, optimize

from pywardrop.constants import (
    DEFAULT_CONTINUUM_CONFIG,
    ContinuumConfig,
    FamilyTag,
    resolve_config,
)
from pywardrop.core.assignment import ShortestPathTree, shortest_path
from pywardrop.core.congestion import CongestionModel
from pywardrop.core.dual import MetricState, discrete_norm
from pywardrop.core.network import (
    DirectionFamily,
    Domain,
    Network,
    TestFunction,
    build_network,
    direction_measure_sum,
)
from pywardrop.exceptions import (
    DecompositionError,
    DisconnectedError,
    WardropValidationError,
)
from pywardrop.utils import SpatialPolynomial, sample_unit_sphere, set_metadata

logger = logging.getLogger(__name__)

ClassFunction = Callable[[np.ndarray], np.ndarray]

_FEASIBILITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ThetaMeasure:
    """Midpoint quadrature of the direction measure over a domain.

    Cells fully inside the domain keep their center and volume; boundary
    cells are sub-sampled and keep the inside fraction of their volume at
    the centroid of their inside samples.
    """

    family: DirectionFamily
    domain: Domain
    centers: np.ndarray
    weights: np.ndarray
    lower: np.ndarray
    step: np.ndarray
    shape: tuple[int, ...]
    cell_ids: np.ndarray

    @classmethod
    def build(
        cls,
        family: DirectionFamily,
        domain: Domain,
        config: ContinuumConfig | dict[str, Any] | None = None,
    ) -> ThetaMeasure:
        """Quadrature at ``config.quadrature_step`` resolution."""
        cfg = resolve_config(DEFAULT_CONTINUUM_CONFIG, config)
        d = domain.dimension
        lower = np.asarray(domain.lower, dtype=float)
        width = np.asarray(domain.upper, dtype=float) - lower
        shape = tuple(max(1, int(np.ceil(w / cfg.quadrature_step - 1e-9))) for w in width)
        step = width / np.asarray(shape)

        index = np.array(np.meshgrid(*(np.arange(n) for n in shape), indexing="ij")).reshape(d, -1).T
        centers = lower + (index + 0.5) * step
        corner_offsets = np.array(list(itertools.product((-0.5, 0.5), repeat=d))) * step
        corners = (centers[:, None, :] + corner_offsets[None, :, :]).reshape(-1, d)
        corners_in = domain.contains(corners).reshape(centers.shape[0], -1)
        full = corners_in.all(axis=1) & domain.contains(centers)

        weights = np.where(full, float(np.prod(step)), 0.0)
        points = centers.copy()
        partial = np.flatnonzero(~full)
        if partial.size:
            s = cfg.subcell_samples
            fractions = (np.arange(s) + 0.5) / s - 0.5
            sub = np.array(list(itertools.product(fractions, repeat=d))) * step
            samples = centers[partial][:, None, :] + sub[None, :, :]
            inside = domain.contains(samples.reshape(-1, d)).reshape(partial.size, -1)
            counts = inside.sum(axis=1)
            weights[partial] = float(np.prod(step)) * counts / sub.shape[0]
            hit = counts > 0
            sums = np.einsum("ns,nsd->nd", inside.astype(float), samples)
            points[partial[hit]] = sums[hit] / counts[hit, None]

        keep = weights > 0
        cell_ids = np.full(centers.shape[0], -1, dtype=np.int64)
        cell_ids[keep] = np.arange(int(keep.sum()))
        measure = cls(
            family=family,
            domain=domain,
            centers=points[keep],
            weights=weights[keep],
            lower=lower,
            step=step,
            shape=shape,
            cell_ids=cell_ids,
        )
        logger.debug(
            "Theta quadrature: %d cells, area %.6g", measure.n_cells, measure.area
        )
        return measure

    @property
    def n_cells(self) -> int:
        """Number of cells with positive weight."""
        return int(self.weights.size)

    @property
    def area(self) -> float:
        """Quadrature approximation of |Omega|."""
        return float(self.weights.sum())

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """Integral of a scalar function of x over the domain."""
        return float(np.dot(self.weights, np.asarray(f(self.centers), dtype=float)))

    def class_weights(self) -> np.ndarray:
        """Cell weight times c_k(x), shape (n_cells, N)."""
        return self.weights[:, None] * self.family.volume_coefficients(self.centers)

    def integrate_classes(self, values: np.ndarray) -> float:
        """sum_cells sum_k weight c_k(x) values[cell, k]."""
        return float(np.sum(self.class_weights() * values))

    def integrate_directions(self, phi: TestFunction | None = None) -> float:
        """Pairing of theta with a test function phi(x, v) (1 when omitted)."""
        if phi is None:
            return float(self.class_weights().sum())
        vectors = self.family.vectors(self.centers)
        n, N, d = vectors.shape
        points = np.repeat(self.centers, N, axis=0)
        values = np.asarray(phi(points, vectors.reshape(n * N, d)), dtype=float).reshape(n, N)
        return self.integrate_classes(values)

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Cell index of each point (-1 outside the quadrature)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        index = np.floor((pts - self.lower) / self.step).astype(np.int64)
        shape = np.asarray(self.shape)
        valid = np.all((index >= 0) & (index < shape), axis=1)
        index = np.clip(index, 0, shape - 1)
        flat = np.ravel_multi_index(tuple(index.T), self.shape)
        return np.where(valid, self.cell_ids[flat], -1)


@dataclass(frozen=True, eq=False)
class XiField:
    """Per-class metric xi_k(x) = xi(x, v_k(x)) >= 0 on the closed domain."""

    functions: tuple[ClassFunction, ...]
    regularity: str = "continuous"
    config: dict[str, Any] | None = field(default=None)

    def __post_init__(self) -> None:
        """Validate the regularity tag."""
        if self.regularity not in ("continuous", "lp"):
            msg = "Regularity must be 'continuous' or 'lp'"
            raise WardropValidationError(msg, field_name="regularity", invalid_value=self.regularity)

    @property
    def n_classes(self) -> int:
        """Number of direction classes."""
        return len(self.functions)

    @property
    def is_continuous(self) -> bool:
        """True for continuous fields."""
        return self.regularity == "continuous"

    @classmethod
    def constant(cls, values: float | Sequence[float], n_classes: int | None = None) -> XiField:
        """Constant field, a scalar broadcast over ``n_classes``."""
        vals = [float(values)] * int(n_classes or 1) if np.ndim(values) == 0 else [float(v) for v in values]  # type: ignore[union-attr]
        return cls.from_polynomials([SpatialPolynomial.constant(v) for v in vals])

    @classmethod
    def from_polynomials(cls, polynomials: Sequence[SpatialPolynomial]) -> XiField:
        """Polynomial field per class."""
        return cls(
            functions=tuple(polynomials),
            config={"classes": [poly.to_config() for poly in polynomials]},
        )

    @classmethod
    def from_grid(
        cls,
        lower: Sequence[float],
        upper: Sequence[float],
        values: np.ndarray,
        regularity: str = "continuous",
    ) -> XiField:
        """Multilinear interpolation of gridded values of shape (N, n_1, ..., n_d)."""
        grid_values = np.asarray(values, dtype=float)
        axes = [
            np.linspace(lo, hi, n)
            for lo, hi, n in zip(lower, upper, grid_values.shape[1:], strict=True)
        ]
        interpolators = tuple(
            interpolate.RegularGridInterpolator(
                axes, grid_values[k], method="linear", bounds_error=False, fill_value=None
            )
            for k in range(grid_values.shape[0])
        )
        return cls(
            functions=interpolators,
            regularity=regularity,
            config={
                "grid": {
                    "lower": list(lower),
                    "upper": list(upper),
                    "values": grid_values.tolist(),
                },
                "regularity": regularity,
            },
        )

    @classmethod
    def from_config(cls, config: Mapping[str, Any], n_classes: int | None = None) -> XiField:
        """Build from ``{const, N}``, ``{classes: [...]}`` or ``{grid: {...}}``.

        Raises:
            WardropValidationError: If the block is malformed
        """
        regularity = str(config.get("regularity", "continuous"))
        if "const" in config:
            values = config["const"]
            count = config.get("N", n_classes)
            field_ = cls.constant(values, count)
        elif "classes" in config:
            field_ = cls.from_polynomials(
                [SpatialPolynomial.from_config(entry) for entry in config["classes"]]
            )
        elif "grid" in config:
            grid = config["grid"]
            return cls.from_grid(grid["lower"], grid["upper"], np.asarray(grid["values"]), regularity)
        else:
            msg = "xi field needs 'const', 'classes' or 'grid'"
            raise WardropValidationError(msg, field_name="xi")
        return cls(functions=field_.functions, regularity=regularity, config={**(field_.config or {}), "regularity": regularity})

    def to_config(self) -> dict[str, Any]:
        """Serialisable form (fields built from callables have none)."""
        if self.config is None:
            msg = "xi field was built from callables and cannot be serialised"
            raise WardropValidationError(msg, field_name="xi")
        return {**self.config, "regularity": self.regularity}

    def values(self, points: np.ndarray) -> np.ndarray:
        """xi_k at points, shape (n, N).

        Raises:
            WardropValidationError: If a sampled value is negative
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.column_stack(
            [np.broadcast_to(np.asarray(f(pts), dtype=float), (pts.shape[0],)) for f in self.functions]
        )
        if np.any(out < 0):
            msg = "xi must be nonnegative"
            raise WardropValidationError(msg, field_name="xi", invalid_value=float(out.min()))
        return out

    def scaled(self, factor: float) -> XiField:
        """Field multiplied by a nonnegative constant."""
        functions = tuple(_scale(f, factor) for f in self.functions)
        return XiField(functions=functions, regularity=self.regularity)

    def lp_norm(self, theta: ThetaMeasure, p: float) -> float:
        """||xi||_{L^p(theta)}."""
        return theta.integrate_classes(self.values(theta.centers) ** p) ** (1.0 / p)


def _scale(f: ClassFunction, factor: float) -> ClassFunction:
    return lambda points: factor * np.asarray(f(points), dtype=float)


@dataclass(frozen=True)
class Decomposition:
    """Optimal conical decomposition z = sum_k Z_k v_k."""

    Z: np.ndarray
    value: float

    @property
    def size(self) -> float:
        """sum_k Z_k, the realized decomposition size."""
        return float(self.Z.sum())


def decompose(
    family: DirectionFamily,
    x: Sequence[float] | np.ndarray,
    z: Sequence[float] | np.ndarray,
    weights: Sequence[float] | np.ndarray,
    config: ContinuumConfig | dict[str, Any] | None = None,
) -> Decomposition:
    """Cheapest decomposition of z in the cone of the directions at x.

    Minimises sum_k Z_k xi_k subject to sum_k Z_k v_k(x) = z, Z >= 0.
    Families of at most ``enumeration_limit`` directions are solved
    exactly by enumerating bases; larger ones with the HiGHS LP solver.

    Raises:
        DecompositionError: If z is not in the cone of the directions
    """
    cfg = resolve_config(DEFAULT_CONTINUUM_CONFIG, config)
    point = np.asarray(x, dtype=float).reshape(-1)
    target = np.asarray(z, dtype=float).reshape(-1)
    cost = np.asarray(weights, dtype=float).reshape(-1)
    vectors = family.vectors(point)[0]
    N, d = vectors.shape
    if not np.any(target):
        return Decomposition(Z=np.zeros(N), value=0.0)
    if N <= cfg.enumeration_limit:
        return _enumerate_bases(vectors, target, cost, point)

    result = optimize.linprog(
        cost, A_eq=vectors.T, b_eq=target, bounds=[(0, None)] * N, method="highs"
    )
    if result.status != 0:
        msg = "Vector has no conical decomposition"
        raise DecompositionError(msg, point=tuple(point), vector=tuple(target))
    return Decomposition(Z=np.maximum(result.x, 0.0), value=float(result.fun))


def _enumerate_bases(
    vectors: np.ndarray, target: np.ndarray, cost: np.ndarray, point: np.ndarray
) -> Decomposition:
    N, d = vectors.shape
    scale = max(1.0, float(np.abs(target).max()))
    best: Decomposition | None = None
    for basis in itertools.combinations(range(N), d):
        matrix = vectors[list(basis)].T
        if abs(np.linalg.det(matrix)) < 1e-12:
            continue
        coefficients = np.linalg.solve(matrix, target)
        if np.any(coefficients < -_FEASIBILITY_TOL * scale):
            continue
        coefficients = np.maximum(coefficients, 0.0)
        value = float(np.dot(cost[list(basis)], coefficients))
        if best is None or value < best.value - 1e-14 * max(1.0, abs(best.value)):
            Z = np.zeros(N)
            Z[list(basis)] = coefficients
            best = Decomposition(Z=Z, value=value)
    if best is None:
        msg = "Vector has no conical decomposition"
        raise DecompositionError(msg, point=tuple(point), vector=tuple(target))
    return best


def phi_xi(
    family: DirectionFamily,
    xi: XiField,
    x: Sequence[float] | np.ndarray,
    y: Sequence[float] | np.ndarray,
    config: ContinuumConfig | dict[str, Any] | None = None,
) -> float:
    """Finsler integrand Phi_xi(x, y), 1-homogeneous and convex in y."""
    weights = xi.values(np.asarray(x, dtype=float))[0]
    return decompose(family, x, y, weights, config).value


@dataclass(frozen=True)
class GenerationReport:
    """Sampled conical-decomposition constant of a direction family."""

    constant: float
    generating: bool
    samples: int


def check_positively_generating(
    family: DirectionFamily,
    points: np.ndarray,
    config: ContinuumConfig | dict[str, Any] | None = None,
) -> GenerationReport:
    """Largest sum_k Z_k over unit vectors z, with Z the smallest decomposition.

    A family that fails to decompose some sampled z is reported as not
    positively generating with an infinite constant.
    """
    cfg = resolve_config(DEFAULT_CONTINUUM_CONFIG, config)
    d = family.dimension
    count = cfg.cone_directions_2d if d == 2 else cfg.cone_directions_nd
    directions = sample_unit_sphere(d, count)
    ones = np.ones(family.size)
    constant = 0.0
    for x in np.atleast_2d(points):
        for z in directions:
            try:
                constant = max(constant, decompose(family, x, z, ones, cfg).value)
            except DecompositionError:
                return GenerationReport(constant=float("inf"), generating=False, samples=count)
    return GenerationReport(constant=constant, generating=True, samples=count)


def _auxiliary_tag(family: DirectionFamily) -> FamilyTag:
    if family.tag is FamilyTag.CARTESIAN:
        return FamilyTag.CARTESIAN
    if family.tag in (FamilyTag.TRIANGULAR, FamilyTag.HEXAGONAL):
        # Every triangular-lattice node carries all six directions
        return FamilyTag.TRIANGULAR
    msg = "Path costs need a cartesian, triangular or hexagonal direction family"
    raise WardropValidationError(msg, field_name="family_tag", invalid_value=family.tag.value)


@dataclass(eq=False)
class AuxiliaryGraph:
    """Fine lattice at scale h carrying arc weights |e| xi_k(tail).

    Shortest-path trees are cached per source node, so repeated path-cost
    queries from the same point are cheap.
    """

    network: Network
    weights: np.ndarray
    h: float
    _trees: dict[int, ShortestPathTree] = field(default_factory=dict, repr=False)

    @classmethod
    def build(
        cls, family: DirectionFamily, xi: XiField, domain: Domain, h: float
    ) -> AuxiliaryGraph:
        """Lattice of the family's geometry over the domain at spacing h."""
        if xi.n_classes != family.size:
            msg = "xi field and direction family disagree on the class count"
            raise WardropValidationError(msg, field_name="xi", invalid_value=xi.n_classes)
        network = build_network(_auxiliary_tag(family), domain, h)
        per_class = xi.values(network.tail_points)
        weights = network.lengths * per_class[np.arange(network.n_arcs), network.classes]
        logger.debug("Auxiliary graph at h=%g: %d arcs", h, network.n_arcs)
        return cls(network=network, weights=weights, h=float(h))

    def tree(self, source: int) -> ShortestPathTree:
        """Cached shortest-path tree from a node."""
        if source not in self._trees:
            self._trees[source] = shortest_path(self.network, self.weights, source)
        return self._trees[source]

    def cost(self, x: Sequence[float], y: Sequence[float]) -> float:
        """Shortest-path cost between the nodes nearest to x and y.

        Raises:
            DisconnectedError: If no path joins them
        """
        source = self.network.nearest_node(x)
        target = self.network.nearest_node(y)
        value = float(self.tree(source).labels[target])
        if not np.isfinite(value):
            msg = f"No path from {tuple(x)} to {tuple(y)} at scale {self.h}"
            raise DisconnectedError(msg)
        return value


@dataclass(frozen=True)
class GeodesicCost:
    """Approximate path cost and the scale it was computed at."""

    value: float
    h: float


def c_xi(
    family: DirectionFamily,
    xi: XiField,
    domain: Domain,
    h: float,
    x: Sequence[float],
    y: Sequence[float],
    graph: AuxiliaryGraph | None = None,
) -> GeodesicCost:
    """Path cost c_xi(x, y) approximated on an auxiliary lattice at scale h.

    Raises:
        DisconnectedError: If x and y are not joined at this scale
    """
    if graph is None:
        graph = AuxiliaryGraph.build(family, xi, domain, h)
    return GeodesicCost(value=graph.cost(x, y), h=graph.h)


def sample_domain(domain: Domain, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` uniform points of the domain by rejection from its bounding box."""
    lower, upper = np.asarray(domain.lower), np.asarray(domain.upper)
    points: list[np.ndarray] = []
    total = 0
    while total < count:
        batch = rng.uniform(lower, upper, size=(2 * count, domain.dimension))
        batch = batch[domain.contains(batch)]
        points.append(batch)
        total += batch.shape[0]
    return np.vstack(points)[:count]


@dataclass(frozen=True)
class HolderReport:
    """Empirical Holder ratio of the path cost."""

    beta: float
    h: float
    max_ratio: float
    mean_ratio: float
    samples: int


def holder_probe(
    family: DirectionFamily,
    xi: XiField,
    domain: Domain,
    h: float,
    p: float,
    sample_pairs: int = 1000,
    n_sources: int = 16,
    seed: int = 0,
    theta: ThetaMeasure | None = None,
    config: ContinuumConfig | dict[str, Any] | None = None,
) -> HolderReport:
    """Max of |c(x1, y1) - c(x2, y2)| / (||xi||_p (|x1 - x2|^b + |y1 - y2|^b)).

    Sources x1, x2 are drawn from a pool of ``n_sources`` points so only
    that many shortest-path trees are needed; targets are uniform. The
    exponent is b = 1 - d/p, so p must exceed d. Degenerate quadruples
    (zero denominator) are skipped.
    """
    d = domain.dimension
    if p <= d:
        msg = "Holder exponent needs p > d"
        raise WardropValidationError(msg, field_name="p", invalid_value=p)
    beta = 1.0 - d / p
    rng = np.random.default_rng(seed)
    pool = sample_domain(domain, n_sources, rng)
    targets = sample_domain(domain, 2 * sample_pairs, rng)
    picks = rng.integers(0, n_sources, size=(sample_pairs, 2))

    theta = theta or ThetaMeasure.build(family, domain, config)
    norm = xi.lp_norm(theta, p)
    graph = AuxiliaryGraph.build(family, xi, domain, h)

    ratios = []
    for i, (a, b) in enumerate(picks):
        x1, x2 = pool[a], pool[b]
        y1, y2 = targets[2 * i], targets[2 * i + 1]
        denominator = norm * (
            np.linalg.norm(x1 - x2) ** beta + np.linalg.norm(y1 - y2) ** beta
        )
        if denominator <= 0:
            continue
        ratios.append(abs(graph.cost(x1, y1) - graph.cost(x2, y2)) / denominator)

    ratio_array = np.asarray(ratios)
    report = HolderReport(
        beta=beta,
        h=h,
        max_ratio=float(ratio_array.max(initial=0.0)),
        mean_ratio=float(ratio_array.mean()) if ratio_array.size else 0.0,
        samples=int(ratio_array.size),
    )
    logger.info("Holder probe at h=%g: max ratio %.4g over %d samples", h, report.max_ratio, report.samples)
    return report


@dataclass(frozen=True, eq=False)
class GammaMeasure:
    """Finitely supported measure on closure(Omega) x closure(Omega)."""

    sources: np.ndarray
    sinks: np.ndarray
    masses: np.ndarray

    def __post_init__(self) -> None:
        """Validate shapes and masses."""
        sources = np.atleast_2d(np.asarray(self.sources, dtype=float))
        sinks = np.atleast_2d(np.asarray(self.sinks, dtype=float))
        masses = np.asarray(self.masses, dtype=float).reshape(-1)
        if masses.size == 0:
            sources = sources.reshape(0, sinks.shape[-1] if sinks.size else 2)
            sinks = sinks.reshape(0, sources.shape[1])
        if sources.shape != sinks.shape or sources.shape[0] != masses.size:
            msg = "gamma atoms need a source, a sink and a mass each"
            raise WardropValidationError(msg, field_name="gamma")
        if np.any(masses < 0):
            msg = "gamma masses must be nonnegative"
            raise WardropValidationError(msg, field_name="gamma", invalid_value=float(masses.min()))
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "sinks", sinks)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_config(cls, config: Mapping[str, Any]) -> GammaMeasure:
        """Build from ``{atoms: [{x, y, mass}, ...]}``."""
        atoms = list(config.get("atoms", []))
        return cls(
            sources=np.array([atom["x"] for atom in atoms], dtype=float),
            sinks=np.array([atom["y"] for atom in atoms], dtype=float),
            masses=np.array([atom["mass"] for atom in atoms], dtype=float),
        )

    def to_config(self) -> dict[str, Any]:
        """Serialisable form."""
        return {
            "atoms": [
                {"x": x.tolist(), "y": y.tolist(), "mass": float(mass)}
                for x, y, mass in zip(self.sources, self.sinks, self.masses, strict=True)
            ]
        }


def I0_limit(model: CongestionModel, xi: XiField, theta: ThetaMeasure) -> float:
    """I0(xi) = int sum_k c_k H(x, v_k, xi_k) dx by midpoint quadrature."""
    values = xi.values(theta.centers)
    n, N = values.shape
    classes = np.tile(np.arange(N), n)
    points = np.repeat(theta.centers, N, axis=0)
    H = np.asarray(model.H(points, classes, values.reshape(-1))).reshape(n, N)
    return theta.integrate_classes(H)


def J_limit(
    family: DirectionFamily,
    model: CongestionModel,
    xi: XiField,
    gamma: GammaMeasure,
    h: float,
    domain: Domain,
    theta: ThetaMeasure | None = None,
    graph: AuxiliaryGraph | None = None,
    config: ContinuumConfig | dict[str, Any] | None = None,
) -> tuple[float, float, float]:
    """Limit functional J(xi) = I0(xi) - I1(xi) with I1 = sum gamma c_xi.

    Returns:
        (J, I0, I1)

    Raises:
        WardropValidationError: For fields not tagged continuous
        DisconnectedError: As :func:`c_xi`
    """
    if not xi.is_continuous:
        msg = "The limit functional is evaluated for continuous xi only"
        raise WardropValidationError(msg, field_name="regularity", invalid_value=xi.regularity)
    theta = theta or ThetaMeasure.build(family, domain, config)
    I0 = I0_limit(model, xi, theta)
    I1 = 0.0
    if gamma.masses.size and gamma.masses.any():
        graph = graph or AuxiliaryGraph.build(family, xi, domain, h)
        for x, y, mass in zip(gamma.sources, gamma.sinks, gamma.masses, strict=True):
            if mass > 0:
                I1 += float(mass) * graph.cost(x, y)
    return I0 - I1, I0, I1


def sample_metric(network: Network, xi: XiField, p: float) -> MetricState:
    """Recovery sequence xi_eps(x, e) = xi(x, e/|e|), read per arc class."""
    values = xi.values(network.tail_points)
    return MetricState.build(network, values[np.arange(network.n_arcs), network.classes], p)


def _one(points: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    return np.ones(points.shape[0])


def _zero(points: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    return np.zeros(points.shape[0])


def _first_coordinate(points: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    return points[:, 0]


def _first_direction(points: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    return vectors[:, 0]


def _bump(points: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    center = np.full(points.shape[1], 0.5)
    return np.exp(-8.0 * np.sum((points - center) ** 2, axis=1))


def _bump_times_direction(points: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    return _bump(points, vectors) * (1.0 + vectors[:, 0] ** 2)


TEST_FUNCTIONS: dict[str, TestFunction] = {
    "zero": _zero,
    "one": _one,
    "x1": _first_coordinate,
    "v1": _first_direction,
    "bump": _bump,
    "bump_v1sq": _bump_times_direction,
}


def weak_convergence_probe(
    sequence: Sequence[tuple[Network, MetricState]],
    xi: XiField | None,
    test_functions: Mapping[str, TestFunction] | None = None,
    theta: ThetaMeasure | None = None,
    config: ContinuumConfig | dict[str, Any] | None = None,
) -> pa.Table:
    """Pairings S_eps(phi) = sum |e|^d phi(x, e/|e|) xi_eps(x, e) per network.

    When ``xi`` is given each pairing is compared with its target
    int phi xi dtheta; otherwise successive differences across the
    sequence are reported.

    Returns:
        Table with columns epsilon, test_function, S_eps, target, residual,
        norm_p and sup_norm_p
    """
    functions = dict(test_functions or TEST_FUNCTIONS)
    rows: dict[str, list[Any]] = {
        "epsilon": [],
        "test_function": [],
        "S_eps": [],
        "target": [],
        "residual": [],
        "norm_p": [],
    }
    if theta is None and xi is not None and sequence and sequence[0][0].domain is not None:
        network0 = sequence[0][0]
        theta = ThetaMeasure.build(network0.family, network0.domain, config)  # type: ignore[arg-type]

    previous: dict[str, float] = {}
    for network, metric in sequence:
        norm = discrete_norm(network, metric.xi, metric.p)
        for name, phi in functions.items():
            S = direction_measure_sum(network, _weighted(phi, network, metric.xi))
            target: float | None = None
            if xi is not None and theta is not None:
                target = _target(theta, xi, phi)
                residual: float | None = abs(S - target)
            else:
                residual = abs(S - previous[name]) if name in previous else None
            previous[name] = S
            rows["epsilon"].append(float(network.epsilon))
            rows["test_function"].append(name)
            rows["S_eps"].append(S)
            rows["target"].append(target)
            rows["residual"].append(residual)
            rows["norm_p"].append(norm)

    norms = rows["norm_p"]
    rows["sup_norm_p"] = [max(norms, default=0.0)] * len(norms)
    table = pa.table(
        rows,
        schema=pa.schema(
            [
                ("epsilon", pa.float64()),
                ("test_function", pa.string()),
                ("S_eps", pa.float64()),
                ("target", pa.float64()),
                ("residual", pa.float64()),
                ("norm_p", pa.float64()),
                ("sup_norm_p", pa.float64()),
            ]
        ),
    )
    return set_metadata(table, tbl_meta={"probe": "weak_convergence", "test_functions": sorted(functions)})


def _weighted(phi: TestFunction, network: Network, xi: np.ndarray) -> TestFunction:
    # direction_measure_sum evaluates at arc tails in arc order
    def weighted(points: np.ndarray, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(phi(points, vectors), dtype=float) * xi

    return weighted


def _target(theta: ThetaMeasure, xi: XiField, phi: TestFunction) -> float:
    vectors = theta.family.vectors(theta.centers)
    n, N, d = vectors.shape
    points = np.repeat(theta.centers, N, axis=0)
    values = np.asarray(phi(points, vectors.reshape(n * N, d)), dtype=float).reshape(n, N)
    return theta.integrate_classes(values * xi.values(theta.centers))
