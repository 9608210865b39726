"""Epsilon-scaled discrete networks: domains, direction families, lattice builders.

A network is a directed graph whose arcs (x, e) are straight segments
[x, x + e] inside a domain, each tagged with the direction class k it
approximates. Three regular planar families are generated here (cartesian,
triangular, hexagonal; cartesian in any dimension) and explicit arc lists
can be imported as custom networks.
"""

from __future__ import annotations

import logging
import math
import re
import warnings
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Any

import numpy as np

from pywardrop.constants import (
    BLOB_COS_COEFFS,
    BLOB_SIN_COEFFS,
    CARTESIAN_COEFFICIENT,
    DEFAULT_NETWORK_CONFIG,
    HEXAGONAL_COEFFICIENT,
    TRIANGULAR_COEFFICIENT,
    FamilyTag,
    NetworkConfig,
    NetworkDump,
    resolve_config,
)
from pywardrop.exceptions import (
    EmptyNetworkError,
    NetworkError,
    PathError,
    WardropValidationError,
    WardropValidationWarning,
)

if TYPE_CHECKING:
    from pywardrop.core.continuum import ThetaMeasure

logger = logging.getLogger(__name__)

PointPredicate = Callable[[np.ndarray], np.ndarray]
TestFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]

_BOUNDARY_TOL = 1e-12


def _blob_profile(
    angles: np.ndarray, cos_coeffs: Sequence[float], sin_coeffs: Sequence[float]
) -> np.ndarray:
    radius = np.zeros_like(angles)
    for n, coefficient in enumerate(cos_coeffs):
        radius = radius + coefficient * np.cos(n * angles)
    for n, coefficient in enumerate(sin_coeffs):
        radius = radius + coefficient * np.sin(n * angles)
    return radius


@dataclass(frozen=True, eq=False)
class Domain:
    """Bounded domain of R^d given by a membership predicate and a bounding box.

    Membership is closed: boundary points belong to the domain. Points
    outside the bounding box never do.
    """

    dimension: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    predicate: PointPredicate
    kind: str = "custom"
    convex: bool = False
    area: float | None = None
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Validate dimension and bounding box."""
        if self.dimension < 2:
            msg = "Domains must have dimension at least 2"
            raise WardropValidationError(msg, field_name="dimension", invalid_value=self.dimension)
        if len(self.lower) != self.dimension or len(self.upper) != self.dimension:
            msg = "Bounding box does not match the domain dimension"
            raise WardropValidationError(msg, field_name="bounding_box")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper, strict=True)):
            msg = "Bounding box is empty"
            raise WardropValidationError(msg, field_name="bounding_box")

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> Domain:
        """Axis-aligned box [lower, upper]."""
        lo = tuple(float(v) for v in lower)
        hi = tuple(float(v) for v in upper)
        lo_arr, hi_arr = np.array(lo), np.array(hi)

        def predicate(points: np.ndarray) -> np.ndarray:
            return np.all(
                (points >= lo_arr - _BOUNDARY_TOL) & (points <= hi_arr + _BOUNDARY_TOL),
                axis=1,
            )

        return cls(
            dimension=len(lo),
            lower=lo,
            upper=hi,
            predicate=predicate,
            kind="box",
            convex=True,
            area=float(np.prod(hi_arr - lo_arr)),
            params={"lower": list(lo), "upper": list(hi)},
        )

    @classmethod
    def disk(cls, center: Sequence[float], radius: float) -> Domain:
        """Closed ball of the given radius (a disk when d = 2)."""
        c = np.asarray(center, dtype=float)
        d = c.size
        r = float(radius)
        if r <= 0:
            msg = "Disk radius must be positive"
            raise WardropValidationError(msg, field_name="radius", invalid_value=r)

        def predicate(points: np.ndarray) -> np.ndarray:
            return np.linalg.norm(points - c, axis=1) <= r * (1.0 + _BOUNDARY_TOL)

        volume = math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r**d
        return cls(
            dimension=d,
            lower=tuple(c - r),
            upper=tuple(c + r),
            predicate=predicate,
            kind="disk",
            convex=True,
            area=volume,
            params={"center": c.tolist(), "radius": r},
        )

    @classmethod
    def blob(
        cls,
        center: Sequence[float] = (0.0, 0.0),
        scale: float = 0.2,
        cos_coeffs: Sequence[float] = BLOB_COS_COEFFS,
        sin_coeffs: Sequence[float] = BLOB_SIN_COEFFS,
    ) -> Domain:
        """Planar star-shaped domain with a smooth radial Fourier boundary."""
        c = np.asarray(center, dtype=float)
        if c.size != 2:
            msg = "Blob domains are planar"
            raise WardropValidationError(msg, field_name="center")
        angles = np.linspace(0.0, 2.0 * np.pi, 4096, endpoint=False)
        profile = scale * _blob_profile(angles, cos_coeffs, sin_coeffs)
        if np.any(profile <= 0):
            msg = "Blob radial profile must stay positive"
            raise WardropValidationError(msg, field_name="cos_coeffs")
        r_max = float(profile.max())
        # Periodic trapezoid rule for 1/2 * int r(phi)^2 dphi
        area = float(0.5 * np.mean(profile**2) * 2.0 * np.pi)

        def predicate(points: np.ndarray) -> np.ndarray:
            offsets = points - c
            phi = np.arctan2(offsets[:, 1], offsets[:, 0])
            limit = scale * _blob_profile(phi, cos_coeffs, sin_coeffs)
            return np.linalg.norm(offsets, axis=1) <= limit * (1.0 + _BOUNDARY_TOL)

        return cls(
            dimension=2,
            lower=tuple(c - r_max),
            upper=tuple(c + r_max),
            predicate=predicate,
            kind="blob",
            convex=False,
            area=area,
            params={
                "center": c.tolist(),
                "scale": float(scale),
                "cos_coeffs": list(cos_coeffs),
                "sin_coeffs": list(sin_coeffs),
            },
        )

    @classmethod
    def from_spec(cls, spec: str | dict[str, Any]) -> Domain:
        """Build a domain from ``box:lo..,hi..``, ``disk:c..,r``, ``blob:cx,cy,scale``.

        A dict ``{"kind": ..., **params}`` as produced by :meth:`to_spec` is
        also accepted.

        Raises:
            WardropValidationError: If the specification cannot be parsed
        """
        if isinstance(spec, dict):
            params = {k: v for k, v in spec.items() if k != "kind"}
            kind = spec.get("kind")
            if kind == "box":
                return cls.box(params["lower"], params["upper"])
            if kind == "disk":
                return cls.disk(params["center"], params["radius"])
            if kind == "blob":
                return cls.blob(**params)
            msg = f"Unknown domain kind: {kind}"
            raise WardropValidationError(msg, field_name="kind", invalid_value=str(kind))

        match = re.fullmatch(r"\s*(box|disk|blob)\s*:\s*(.*)", spec)
        if not match:
            msg = f"Cannot parse domain specification: {spec!r}"
            raise WardropValidationError(msg, field_name="domain")
        kind, body = match.groups()
        try:
            values = [float(v) for v in body.split(",") if v.strip()]
        except ValueError as e:
            msg = f"Non-numeric domain parameter in {spec!r}"
            raise WardropValidationError(msg, field_name="domain") from e

        if kind == "box":
            if len(values) < 4 or len(values) % 2:
                msg = "box needs lower and upper corners"
                raise WardropValidationError(msg, field_name="domain", invalid_value=spec)
            half = len(values) // 2
            return cls.box(values[:half], values[half:])
        if kind == "disk":
            if len(values) < 3:
                msg = "disk needs a center and a radius"
                raise WardropValidationError(msg, field_name="domain", invalid_value=spec)
            return cls.disk(values[:-1], values[-1])
        if len(values) not in (2, 3):
            msg = "blob needs a center and an optional scale"
            raise WardropValidationError(msg, field_name="domain", invalid_value=spec)
        return cls.blob(values[:2], *values[2:])

    def to_spec(self) -> dict[str, Any]:
        """Serialisable description accepted by :meth:`from_spec`."""
        return {"kind": self.kind, **self.params}

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Membership of points (n, d); always False outside the bounding box."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo, hi = np.array(self.lower), np.array(self.upper)
        in_box = np.all((pts >= lo - _BOUNDARY_TOL) & (pts <= hi + _BOUNDARY_TOL), axis=1)
        result = np.zeros(pts.shape[0], dtype=bool)
        if np.any(in_box):
            result[in_box] = self.predicate(pts[in_box])
        return result

    def segments_inside(
        self, tails: np.ndarray, heads: np.ndarray, samples: int = 8
    ) -> np.ndarray:
        """Test [tail, head] inclusion by sampling.

        Convex domains only need the endpoints and the midpoint; other
        domains are also sampled at ``samples`` interior points.
        """
        fractions = [0.0, 0.5, 1.0]
        if not self.convex:
            fractions = [0.0, 1.0, *list(np.arange(1, samples + 1) / (samples + 1))]
        inside = np.ones(tails.shape[0], dtype=bool)
        for s in fractions:
            inside &= self.contains(tails + s * (heads - tails))
        return inside


@dataclass(frozen=True, eq=False)
class DirectionFamily:
    """Directions v_k: closure(Omega) -> S^{d-1} and volume coefficients c_k > 0.

    ``directions`` and ``coefficients`` are either constant arrays of shape
    (N, d) and (N,) or callables mapping points (n, d) to (n, N, d) and
    (n, N).
    """

    dimension: int
    directions: np.ndarray | Callable[[np.ndarray], np.ndarray]
    coefficients: np.ndarray | Callable[[np.ndarray], np.ndarray]
    tag: FamilyTag = FamilyTag.CUSTOM
    holder_exponent: float = 1.0
    size: int = 0

    def __post_init__(self) -> None:
        """Validate constant directions and coefficients."""
        if callable(self.directions):
            if self.size <= 0:
                msg = "Callable direction families must declare their size"
                raise WardropValidationError(msg, field_name="size")
            return
        directions = np.asarray(self.directions, dtype=float)
        coefficients = np.broadcast_to(
            np.asarray(self.coefficients, dtype=float), directions.shape[:1]
        ).copy()
        if directions.ndim != 2 or directions.shape[1] != self.dimension:
            msg = "Directions must have shape (N, d)"
            raise WardropValidationError(msg, field_name="directions")
        norms = np.linalg.norm(directions, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-10):
            msg = "Direction vectors must be unit vectors"
            raise WardropValidationError(
                msg, field_name="directions", invalid_value=float(np.max(np.abs(norms - 1.0)))
            )
        if np.any(coefficients <= 0):
            msg = "Volume coefficients must be positive"
            raise WardropValidationError(
                msg, field_name="coefficients", invalid_value=float(coefficients.min())
            )
        directions.setflags(write=False)
        coefficients.setflags(write=False)
        object.__setattr__(self, "directions", directions)
        object.__setattr__(self, "coefficients", coefficients)
        object.__setattr__(self, "size", directions.shape[0])

    @property
    def is_constant(self) -> bool:
        """True when directions do not depend on x."""
        return not callable(self.directions)

    def vectors(self, x: np.ndarray) -> np.ndarray:
        """Directions at points (n, d) as an (n, N, d) array."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if callable(self.directions):
            return np.asarray(self.directions(pts), dtype=float)
        return np.broadcast_to(self.directions, (pts.shape[0], *self.directions.shape))

    def volume_coefficients(self, x: np.ndarray) -> np.ndarray:
        """Coefficients at points (n, d) as an (n, N) array."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if callable(self.coefficients):
            return np.asarray(self.coefficients(pts), dtype=float)
        return np.broadcast_to(self.coefficients, (pts.shape[0], self.size))

    def check(self, points: np.ndarray, tol: float = 1e-10) -> tuple[float, float]:
        """Sampled invariants: (max unit-norm defect, min coefficient).

        Raises:
            WardropValidationError: If a sampled vector is not unit or a
                coefficient is not positive
        """
        vectors = self.vectors(points)
        defect = float(np.max(np.abs(np.linalg.norm(vectors, axis=2) - 1.0)))
        min_coefficient = float(np.min(self.volume_coefficients(points)))
        if defect > tol:
            msg = "Direction family is not unit-sphere valued"
            raise WardropValidationError(msg, field_name="directions", invalid_value=defect)
        if min_coefficient <= 0:
            msg = "Volume coefficients must be positive"
            raise WardropValidationError(
                msg, field_name="coefficients", invalid_value=min_coefficient
            )
        return defect, min_coefficient

    @classmethod
    def cartesian(cls, dimension: int = 2) -> DirectionFamily:
        """Axis directions: +e_j for class j, -e_j for class d + j."""
        eye = np.eye(dimension)
        return cls(
            dimension=dimension,
            directions=np.vstack([eye, -eye]),
            coefficients=np.full(2 * dimension, CARTESIAN_COEFFICIENT),
            tag=FamilyTag.CARTESIAN,
        )

    @classmethod
    def _sixfold(cls, tag: FamilyTag, coefficient: float) -> DirectionFamily:
        angles = np.pi / 6.0 + np.arange(6) * np.pi / 3.0
        return cls(
            dimension=2,
            directions=np.column_stack([np.cos(angles), np.sin(angles)]),
            coefficients=np.full(6, coefficient),
            tag=tag,
        )

    @classmethod
    def triangular(cls) -> DirectionFamily:
        """Six directions at angles pi/6 + k pi/3, c_t = 2/sqrt(3)."""
        return cls._sixfold(FamilyTag.TRIANGULAR, TRIANGULAR_COEFFICIENT)

    @classmethod
    def hexagonal(cls) -> DirectionFamily:
        """Six directions at angles pi/6 + k pi/3, c_h = 2/(3 sqrt(3))."""
        return cls._sixfold(FamilyTag.HEXAGONAL, HEXAGONAL_COEFFICIENT)

    @classmethod
    def for_tag(cls, tag: FamilyTag | str, dimension: int = 2) -> DirectionFamily:
        """Built-in family for a tag."""
        tag = FamilyTag(tag)
        if tag is FamilyTag.CARTESIAN:
            return cls.cartesian(dimension)
        if tag is FamilyTag.TRIANGULAR:
            return cls.triangular()
        if tag is FamilyTag.HEXAGONAL:
            return cls.hexagonal()
        msg = "Custom families have no built-in directions"
        raise WardropValidationError(msg, field_name="family_tag", invalid_value=tag.value)


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable epsilon-network: nodes, arcs (tail, head, class) and metadata.

    Arc vectors are reconstructed from endpoints. Node indices are the
    positions in ``nodes``; arc indices the positions in ``tails``.
    """

    epsilon: float
    nodes: np.ndarray
    tails: np.ndarray
    heads: np.ndarray
    classes: np.ndarray
    family: DirectionFamily
    tag: FamilyTag = FamilyTag.CUSTOM
    domain: Domain | None = None

    def __post_init__(self) -> None:
        """Validate array shapes and freeze arrays."""
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        tails = np.asarray(self.tails, dtype=np.int64).reshape(-1)
        heads = np.asarray(self.heads, dtype=np.int64).reshape(-1)
        classes = np.asarray(self.classes, dtype=np.int64).reshape(-1)
        if self.epsilon <= 0:
            msg = "epsilon must be positive"
            raise NetworkError(msg, family=self.tag.value, epsilon=self.epsilon)
        if not (tails.size == heads.size == classes.size):
            msg = "tails, heads and classes must have the same length"
            raise NetworkError(msg, family=self.tag.value)
        if tails.size and (
            min(tails.min(), heads.min()) < 0
            or max(tails.max(), heads.max()) >= nodes.shape[0]
        ):
            msg = "Arc endpoints reference unknown nodes"
            raise NetworkError(msg, family=self.tag.value)
        if tails.size and (classes.min() < 0 or classes.max() >= self.family.size):
            msg = "Arc classes must lie in 0..N-1"
            raise NetworkError(msg, family=self.tag.value)
        if np.any(tails == heads):
            msg = "Arcs must join distinct nodes"
            raise NetworkError(msg, family=self.tag.value)
        for name, array in (("nodes", nodes), ("tails", tails), ("heads", heads), ("classes", classes)):
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @property
    def dimension(self) -> int:
        """Ambient dimension d."""
        return int(self.nodes.shape[1])

    @property
    def n_nodes(self) -> int:
        """Number of nodes."""
        return int(self.nodes.shape[0])

    @property
    def n_arcs(self) -> int:
        """Number of arcs."""
        return int(self.tails.size)

    @cached_property
    def edge_vectors(self) -> np.ndarray:
        """Arc vectors e = head - tail, shape (n_arcs, d)."""
        return self.nodes[self.heads] - self.nodes[self.tails]

    @cached_property
    def lengths(self) -> np.ndarray:
        """Arc lengths |e|."""
        return np.linalg.norm(self.edge_vectors, axis=1)

    @cached_property
    def unit_vectors(self) -> np.ndarray:
        """Arc directions e / |e|."""
        return self.edge_vectors / self.lengths[:, None]

    @cached_property
    def tail_points(self) -> np.ndarray:
        """Positions x of arc tails."""
        return self.nodes[self.tails]

    @cached_property
    def out_arcs(self) -> tuple[np.ndarray, ...]:
        """Outgoing arc ids per node, ordered by (head id, arc id)."""
        order = np.lexsort((np.arange(self.n_arcs), self.heads, self.tails))
        counts = np.bincount(self.tails, minlength=self.n_nodes)
        return tuple(np.split(order, np.cumsum(counts)[:-1]))

    @cached_property
    def adjacency(self) -> tuple[tuple[tuple[int, int], ...], ...]:
        """Outgoing (arc id, head id) pairs per node as plain ints."""
        heads = self.heads.tolist()
        return tuple(
            tuple((int(arc), heads[arc]) for arc in arcs) for arcs in self.out_arcs
        )

    @cached_property
    def arc_lookup(self) -> dict[tuple[int, int], int]:
        """Smallest arc id joining (tail, head)."""
        lookup: dict[tuple[int, int], int] = {}
        for arc in range(self.n_arcs - 1, -1, -1):
            lookup[(int(self.tails[arc]), int(self.heads[arc]))] = arc
        return lookup

    @cached_property
    def class_counts(self) -> np.ndarray:
        """Number of arcs per direction class."""
        return np.bincount(self.classes, minlength=self.family.size)

    def nearest_node(self, point: Sequence[float]) -> int:
        """Index of the node closest to a point (lowest index on ties)."""
        distances = np.linalg.norm(self.nodes - np.asarray(point, dtype=float), axis=1)
        return int(np.argmin(distances))

    def arcs_of(self, nodes: Sequence[int]) -> tuple[int, ...]:
        """Arc ids along a node sequence.

        Raises:
            PathError: If consecutive nodes are not joined by an arc
        """
        node_tuple = tuple(int(n) for n in nodes)
        if len(node_tuple) < 2:
            msg = "A path needs at least two nodes"
            raise PathError(msg, node_tuple)
        arcs = []
        for tail, head in zip(node_tuple[:-1], node_tuple[1:], strict=True):
            arc = self.arc_lookup.get((tail, head))
            if arc is None:
                msg = f"No arc from node {tail} to node {head}"
                raise PathError(msg, node_tuple)
            arcs.append(arc)
        return tuple(arcs)

    def nodes_of(self, arcs: Sequence[int]) -> tuple[int, ...]:
        """Node sequence visited by a sequence of arc ids."""
        if not arcs:
            return ()
        return (int(self.tails[arcs[0]]), *(int(self.heads[a]) for a in arcs))

    def to_dict(self) -> NetworkDump:
        """JSON interchange representation."""
        directions: dict[str, Any] = {"N": self.family.size, "family_tag": self.tag.value}
        if self.family.is_constant and self.tag is FamilyTag.CUSTOM:
            directions["vectors"] = np.asarray(self.family.directions).tolist()
            directions["coefficients"] = np.asarray(self.family.coefficients).tolist()
        dump: NetworkDump = {
            "epsilon": float(self.epsilon),
            "d": self.dimension,
            "nodes": self.nodes.tolist(),
            "arcs": np.column_stack([self.tails, self.heads, self.classes]).tolist(),
            "directions": directions,
        }
        return dump

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Network:
        """Rebuild a network from its JSON interchange representation.

        Raises:
            NetworkError: If required keys are missing
        """
        try:
            epsilon = float(data["epsilon"])
            dimension = int(data["d"])
            nodes = np.asarray(data["nodes"], dtype=float).reshape(-1, dimension)
            arcs = np.asarray(data["arcs"], dtype=np.int64).reshape(-1, 3)
            directions = data.get("directions", {})
        except (KeyError, TypeError, ValueError) as e:
            msg = f"Malformed network data: {e}"
            raise NetworkError(msg) from e
        tag = FamilyTag(directions.get("family_tag", FamilyTag.CUSTOM.value))
        if tag is FamilyTag.CUSTOM:
            return build_custom(
                nodes,
                arcs,
                epsilon,
                vectors=directions.get("vectors"),
                coefficients=directions.get("coefficients"),
                n_classes=directions.get("N"),
            )
        return cls(
            epsilon=epsilon,
            nodes=nodes,
            tails=arcs[:, 0],
            heads=arcs[:, 1],
            classes=arcs[:, 2],
            family=DirectionFamily.for_tag(tag, dimension),
            tag=tag,
        )


@dataclass(frozen=True)
class _LatticeMove:
    delta: tuple[int, ...]
    target: int
    klass: int


def _lattice_network(
    domain: Domain,
    epsilon: float,
    family: DirectionFamily,
    basis: np.ndarray,
    offsets: list[np.ndarray],
    moves: list[list[_LatticeMove]],
    config: NetworkConfig,
) -> Network:
    """Clip a periodic lattice to a domain.

    ``basis`` rows are the lattice vectors, ``offsets[s]`` the origin of
    sublattice s and ``moves[s]`` its outgoing arcs. Nodes are identified by
    integer keys (s, i_1, ..., i_d) and numbered in key order.
    """
    d = domain.dimension
    lo, hi = np.array(domain.lower), np.array(domain.upper)
    corners = np.array(np.meshgrid(*zip(lo, hi, strict=True), indexing="ij")).reshape(d, -1).T
    inverse = np.linalg.inv(basis.T)

    keys: list[tuple[int, ...]] = []
    positions: list[np.ndarray] = []
    for sub, offset in enumerate(offsets):
        coords = (corners - offset) @ inverse.T
        ranges = [
            np.arange(math.floor(coords[:, j].min()) - 1, math.ceil(coords[:, j].max()) + 2)
            for j in range(d)
        ]
        grid = np.array(np.meshgrid(*ranges, indexing="ij")).reshape(d, -1).T
        points = offset + grid @ basis
        inside = domain.contains(points)
        keys.extend((sub, *map(int, row)) for row in grid[inside])
        positions.append(points[inside])

    if not keys:
        msg = "No lattice node lies inside the domain"
        raise EmptyNetworkError(msg, family=family.tag.value, epsilon=epsilon)

    all_points = np.vstack(positions)
    order = sorted(range(len(keys)), key=keys.__getitem__)
    keys = [keys[i] for i in order]
    all_points = all_points[order]
    index = {key: i for i, key in enumerate(keys)}

    tails, heads, classes = [], [], []
    for i, key in enumerate(keys):
        sub, coords = key[0], key[1:]
        for move in moves[sub]:
            target = (move.target, *(c + dc for c, dc in zip(coords, move.delta, strict=True)))
            j = index.get(target)
            if j is not None:
                tails.append(i)
                heads.append(j)
                classes.append(move.klass)

    tails_arr = np.asarray(tails, dtype=np.int64)
    heads_arr = np.asarray(heads, dtype=np.int64)
    classes_arr = np.asarray(classes, dtype=np.int64)
    if tails_arr.size:
        keep = domain.segments_inside(
            all_points[tails_arr], all_points[heads_arr], config.segment_samples
        )
        tails_arr, heads_arr, classes_arr = tails_arr[keep], heads_arr[keep], classes_arr[keep]

    # Nodes without outgoing arcs carry no flow; dropping them can strand
    # arcs pointing at them, so repeat until stable.
    alive = np.ones(len(keys), dtype=bool)
    while True:
        has_out = np.zeros(len(keys), dtype=bool)
        has_out[tails_arr] = True
        newly_dead = alive & ~has_out
        if not newly_dead.any():
            break
        alive &= has_out
        keep = alive[tails_arr] & alive[heads_arr]
        tails_arr, heads_arr, classes_arr = tails_arr[keep], heads_arr[keep], classes_arr[keep]

    if not alive.any():
        msg = "No arc of the lattice fits inside the domain"
        raise EmptyNetworkError(msg, family=family.tag.value, epsilon=epsilon)

    renumber = np.cumsum(alive) - 1
    order_arcs = np.lexsort((classes_arr, renumber[tails_arr]))
    network = Network(
        epsilon=epsilon,
        nodes=all_points[alive],
        tails=renumber[tails_arr][order_arcs],
        heads=renumber[heads_arr][order_arcs],
        classes=classes_arr[order_arcs],
        family=family,
        tag=family.tag,
        domain=domain,
    )
    logger.debug(
        "Built %s network: eps=%g, %d nodes, %d arcs",
        family.tag.value,
        epsilon,
        network.n_nodes,
        network.n_arcs,
    )
    return network


def build_cartesian(
    domain: Domain, epsilon: float, config: NetworkConfig | dict[str, Any] | None = None
) -> Network:
    """Cartesian grid at spacing epsilon, arcs in both orientations along each axis.

    Raises:
        EmptyNetworkError: If no grid node lies in the domain
    """
    _check_epsilon(epsilon, FamilyTag.CARTESIAN)
    d = domain.dimension
    family = DirectionFamily.cartesian(d)
    moves = []
    for j in range(d):
        unit = tuple(int(j == i) for i in range(d))
        moves.append(_LatticeMove(unit, 0, j))
        moves.append(_LatticeMove(tuple(-u for u in unit), 0, d + j))
    return _lattice_network(
        domain,
        epsilon,
        family,
        epsilon * np.eye(d),
        [np.zeros(d)],
        [moves],
        resolve_config(DEFAULT_NETWORK_CONFIG, config),
    )


def build_triangular(
    domain: Domain, epsilon: float, config: NetworkConfig | dict[str, Any] | None = None
) -> Network:
    """Triangular lattice with six arc directions pi/6 + k pi/3.

    Raises:
        EmptyNetworkError: If no lattice node lies in the domain
    """
    _check_epsilon(epsilon, FamilyTag.TRIANGULAR)
    _check_planar(domain, FamilyTag.TRIANGULAR)
    basis = epsilon * np.array([[math.sqrt(3.0) / 2.0, 0.5], [0.0, 1.0]])
    deltas = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]
    moves = [_LatticeMove(delta, 0, k) for k, delta in enumerate(deltas)]
    return _lattice_network(
        domain,
        epsilon,
        DirectionFamily.triangular(),
        basis,
        [np.zeros(2)],
        [moves],
        resolve_config(DEFAULT_NETWORK_CONFIG, config),
    )


def build_hexagonal(
    domain: Domain, epsilon: float, config: NetworkConfig | dict[str, Any] | None = None
) -> Network:
    """Honeycomb lattice; each node has three outgoing arcs.

    Sublattice A uses classes 0, 2, 4 (angles pi/6, 5pi/6, 3pi/2) and
    sublattice B classes 1, 3, 5.

    Raises:
        EmptyNetworkError: If no lattice node lies in the domain
    """
    _check_epsilon(epsilon, FamilyTag.HEXAGONAL)
    _check_planar(domain, FamilyTag.HEXAGONAL)
    root3 = math.sqrt(3.0)
    basis = epsilon * np.array([[root3, 0.0], [root3 / 2.0, 1.5]])
    offsets = [np.zeros(2), epsilon * np.array([root3 / 2.0, 0.5])]
    moves = [
        [_LatticeMove((0, 0), 1, 0), _LatticeMove((-1, 0), 1, 2), _LatticeMove((0, -1), 1, 4)],
        [_LatticeMove((0, 1), 0, 1), _LatticeMove((0, 0), 0, 3), _LatticeMove((1, 0), 0, 5)],
    ]
    return _lattice_network(
        domain,
        epsilon,
        DirectionFamily.hexagonal(),
        basis,
        offsets,
        moves,
        resolve_config(DEFAULT_NETWORK_CONFIG, config),
    )


BUILDERS: dict[FamilyTag, Callable[..., Network]] = {
    FamilyTag.CARTESIAN: build_cartesian,
    FamilyTag.TRIANGULAR: build_triangular,
    FamilyTag.HEXAGONAL: build_hexagonal,
}


def build_network(
    tag: FamilyTag | str,
    domain: Domain,
    epsilon: float,
    config: NetworkConfig | dict[str, Any] | None = None,
) -> Network:
    """Dispatch to the builder of a lattice family."""
    family_tag = FamilyTag(tag)
    if family_tag not in BUILDERS:
        msg = "Custom networks are imported, not generated"
        raise NetworkError(msg, family=family_tag.value, epsilon=epsilon)
    return BUILDERS[family_tag](domain, epsilon, config)


def build_custom(
    nodes: np.ndarray | Sequence[Sequence[float]],
    arcs: np.ndarray | Sequence[Sequence[int]],
    epsilon: float,
    vectors: Sequence[Sequence[float]] | None = None,
    coefficients: Sequence[float] | None = None,
    n_classes: int | None = None,
    domain: Domain | None = None,
) -> Network:
    """Import an explicit arc list ``[[tail, head, class], ...]``.

    Without declared direction ``vectors``, class k gets the mean unit
    direction of its arcs (unit coefficient); validators then audit the
    result.
    """
    node_array = np.atleast_2d(np.asarray(nodes, dtype=float))
    arc_array = np.asarray(arcs, dtype=np.int64).reshape(-1, 3)
    d = node_array.shape[1]
    if vectors is None:
        size = int(n_classes or (arc_array[:, 2].max() + 1 if arc_array.size else 1))
        edge = node_array[arc_array[:, 1]] - node_array[arc_array[:, 0]]
        unit = edge / np.linalg.norm(edge, axis=1, keepdims=True)
        directions = np.zeros((size, d))
        directions[:, 0] = 1.0
        for k in range(size):
            members = unit[arc_array[:, 2] == k]
            if members.size:
                mean = members.mean(axis=0)
                norm = np.linalg.norm(mean)
                if norm > 0:
                    directions[k] = mean / norm
    else:
        directions = np.asarray(vectors, dtype=float)
    family = DirectionFamily(
        dimension=d,
        directions=directions,
        coefficients=np.ones(directions.shape[0]) if coefficients is None else np.asarray(coefficients),
        tag=FamilyTag.CUSTOM,
    )
    return Network(
        epsilon=float(epsilon),
        nodes=node_array,
        tails=arc_array[:, 0],
        heads=arc_array[:, 1],
        classes=arc_array[:, 2],
        family=family,
        tag=FamilyTag.CUSTOM,
        domain=domain,
    )


def _check_epsilon(epsilon: float, tag: FamilyTag) -> None:
    if not epsilon > 0:
        msg = "epsilon must be positive"
        raise NetworkError(msg, family=tag.value, epsilon=epsilon)


def _check_planar(domain: Domain, tag: FamilyTag) -> None:
    if domain.dimension != 2:
        msg = f"{tag.value} lattices are planar"
        raise NetworkError(msg, family=tag.value)


def direction_measure_sum(network: Network, phi: TestFunction | None = None) -> float:
    """Discrete direction-measure pairing sum over arcs of |e|^d phi(x, e/|e|)."""
    weights = network.lengths ** network.dimension
    if phi is None:
        return float(weights.sum())
    values = np.asarray(phi(network.tail_points, network.unit_vectors), dtype=float)
    return float(np.sum(weights * values))


@dataclass(frozen=True)
class ValidationReport:
    """Structural audit of a network (report only)."""

    min_length: float
    max_length: float
    lower_constant: float
    upper_ratio: float
    length_bound_ok: bool
    class_counts: tuple[int, ...]
    partition_ok: bool
    reverse_arcs_ok: bool
    segments_inside: bool | None
    direction_sum: float
    direction_integral: float | None
    direction_error: float | None

    @property
    def passed(self) -> bool:
        """All structural checks hold."""
        return self.length_bound_ok and self.partition_ok and self.segments_inside is not False

    def to_dict(self) -> dict[str, Any]:
        """JSON-friendly view."""
        return {
            "min_length": self.min_length,
            "max_length": self.max_length,
            "lower_constant": self.lower_constant,
            "upper_ratio": self.upper_ratio,
            "length_bound_ok": self.length_bound_ok,
            "class_counts": list(self.class_counts),
            "partition_ok": self.partition_ok,
            "reverse_arcs_ok": self.reverse_arcs_ok,
            "segments_inside": self.segments_inside,
            "direction_sum": self.direction_sum,
            "direction_integral": self.direction_integral,
            "direction_error": self.direction_error,
            "passed": self.passed,
        }


def validate_hypotheses(
    network: Network,
    phi: TestFunction | None = None,
    theta: ThetaMeasure | None = None,
    config: NetworkConfig | dict[str, Any] | None = None,
) -> ValidationReport:
    """Audit arc-length bounds, class partition and the direction measure.

    Args:
        network: Network to audit
        phi: Test function phi(x, v) on points (n, d) and unit vectors
            (n, d); defaults to the constant 1
        theta: Quadrature of the limit direction measure; built from the
            network's domain when omitted
        config: Network configuration overrides

    Returns:
        Validation report; failing checks also emit a
        ``WardropValidationWarning``
    """
    cfg = resolve_config(DEFAULT_NETWORK_CONFIG, config)
    if network.n_arcs == 0:
        msg = "Cannot validate a network without arcs"
        raise NetworkError(msg, family=network.tag.value, epsilon=network.epsilon)

    lengths = network.lengths
    eps = network.epsilon
    lower_constant = float(lengths.min() / eps)
    upper_ratio = float(lengths.max() / eps)
    length_bound_ok = (
        lower_constant >= cfg.arc_length_constant * (1.0 - cfg.length_rtol)
        and upper_ratio <= 1.0 + cfg.length_rtol
    )

    counts = network.class_counts
    partition_ok = int(counts.sum()) == network.n_arcs and counts.size == network.family.size

    lookup = network.arc_lookup
    reverse_arcs_ok = all(
        (int(h), int(t)) in lookup for t, h in zip(network.tails, network.heads, strict=True)
    )

    segments_inside: bool | None = None
    if network.domain is not None:
        segments_inside = bool(
            network.domain.segments_inside(
                network.nodes[network.tails], network.nodes[network.heads], cfg.segment_samples
            ).all()
        )

    direction_sum = direction_measure_sum(network, phi)
    direction_integral: float | None = None
    if theta is None and network.domain is not None:
        from pywardrop.core.continuum import ThetaMeasure  # noqa: PLC0415

        theta = ThetaMeasure.build(network.family, network.domain)
    if theta is not None:
        direction_integral = theta.integrate_directions(phi)
    direction_error = (
        None if direction_integral is None else direction_sum - direction_integral
    )

    report = ValidationReport(
        min_length=float(lengths.min()),
        max_length=float(lengths.max()),
        lower_constant=lower_constant,
        upper_ratio=upper_ratio,
        length_bound_ok=length_bound_ok,
        class_counts=tuple(int(c) for c in counts),
        partition_ok=partition_ok,
        reverse_arcs_ok=reverse_arcs_ok,
        segments_inside=segments_inside,
        direction_sum=direction_sum,
        direction_integral=direction_integral,
        direction_error=direction_error,
    )
    if not report.passed:
        msg = (
            f"Network fails structural checks (length bound: {length_bound_ok}, "
            f"partition: {partition_ok}, segments inside: {segments_inside})"
        )
        warnings.warn(msg, WardropValidationWarning, stacklevel=2)
    return report
