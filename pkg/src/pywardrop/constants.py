"""Constants and configuration for congested-network computations."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from enum import Enum
from typing import Any, TypedDict, TypeVar


class FamilyTag(Enum):
    """Lattice families a network can be generated from."""

    CARTESIAN = "cartesian"
    TRIANGULAR = "triangular"
    HEXAGONAL = "hexagonal"
    CUSTOM = "custom"


# Volume coefficients c_k of the three regular planar families; they are
# the same for every direction class k.
CARTESIAN_COEFFICIENT = 1.0
TRIANGULAR_COEFFICIENT = 2.0 / math.sqrt(3.0)
HEXAGONAL_COEFFICIENT = 2.0 / (3.0 * math.sqrt(3.0))

# Area of the lattice cell attached to one node, in units of epsilon**d
NODE_CELL_AREA = {
    FamilyTag.CARTESIAN: 1.0,
    FamilyTag.TRIANGULAR: math.sqrt(3.0) / 2.0,
    FamilyTag.HEXAGONAL: 3.0 * math.sqrt(3.0) / 4.0,
}

# Radial Fourier profile of the default smooth blob domain:
# r(phi) = scale * (c0 + sum_n a_n cos(n phi) + b_n sin(n phi))
BLOB_COS_COEFFS = (2.36, 0.38, -0.42, 0.21)
BLOB_SIN_COEFFS = (0.0, 1.16, 0.0, 0.54)


class NetworkDump(TypedDict):
    """JSON interchange layout of a network."""

    epsilon: float
    d: int
    nodes: list[list[float]]
    arcs: list[list[int]]
    directions: dict[str, Any]


class PathDump(TypedDict):
    """One carried path of a flow dump."""

    nodes: list[int]
    arcs: list[int]
    flow: float


class FlowDump(TypedDict):
    """JSON interchange layout of a flow."""

    arc_masses: list[float]
    paths: list[PathDump]


class AtomDump(TypedDict):
    """One atom of a generalized-curve measure dump."""

    nodes: list[int]
    rho_knots: list[float]
    rho: list[list[float]]
    weight: float


class MeasureDump(TypedDict):
    """JSON interchange layout of a generalized-curve measure."""

    atoms: list[AtomDump]


class DualReportDump(TypedDict):
    """Output of the dual check command."""

    I0: float
    I1: float
    J: float
    primal: float
    gap_abs: float
    gap_rel: float


@dataclass(frozen=True)
class NetworkConfig:
    """Configuration for network generation and validation."""

    # Lower arc-length constant C in C*eps <= |e| <= eps
    arc_length_constant: float = 0.25

    # Interior samples used to test segment inclusion in non-convex domains
    segment_samples: int = 8

    # Relative tolerance on arc lengths
    length_rtol: float = 1e-9


@dataclass(frozen=True)
class CongestionConfig:
    """Configuration for congestion-cost evaluation and certification."""

    # Absolute tolerance of numeric G and H
    numeric_tol: float = 1e-10

    # Sample grid for growth certificates
    growth_t_max: float = 100.0
    growth_samples: int = 2001

    # Allowed deviation of the log-log slope of H from p at the grid tail
    growth_slope_tol: float = 0.1


@dataclass(frozen=True)
class SolverConfig:
    """Configuration for the Frank-Wolfe equilibrium solvers."""

    max_iters: int = 5000
    rel_gap_tol: float = 1e-6

    # Tolerance on the exact line-search step
    line_search_tol: float = 1e-12

    # Pairwise shifts between stored paths of the same OD pair
    equilibrate: bool = True
    equilibration_tol: float = 1e-12
    max_shifts: int = 64

    # Relative tolerance of the conservation bookkeeping checks
    conservation_rtol: float = 1e-12


@dataclass(frozen=True)
class ContinuumConfig:
    """Configuration for continuum-limit evaluations."""

    # Midpoint quadrature step over the domain
    quadrature_step: float = 1.0 / 64.0

    # Largest family size solved by exhaustive basis enumeration
    enumeration_limit: int = 10

    # Sampled unit directions for cone-separation estimates
    cone_directions_2d: int = 512
    cone_directions_nd: int = 2048

    # Gauss-Legendre points per curve piece
    gauss_points: int = 5

    # Sub-samples per axis for boundary cells of the quadrature
    subcell_samples: int = 4


DEFAULT_NETWORK_CONFIG = NetworkConfig()
DEFAULT_CONGESTION_CONFIG = CongestionConfig()
DEFAULT_SOLVER_CONFIG = SolverConfig()
DEFAULT_CONTINUUM_CONFIG = ContinuumConfig()

ConfigT = TypeVar("ConfigT", NetworkConfig, CongestionConfig, SolverConfig, ContinuumConfig)


def resolve_config(default: ConfigT, overrides: ConfigT | dict[str, Any] | None) -> ConfigT:
    """Merge optional overrides into a default configuration.

    Args:
        default: Default configuration instance
        overrides: A configuration of the same type, a dict of field
            overrides (unknown keys are ignored) or None

    Returns:
        Resolved configuration
    """
    if overrides is None:
        return default
    if isinstance(overrides, type(default)):
        return overrides
    known = {f.name for f in fields(default)}
    config_dict = {key: value for key, value in overrides.items() if key in known}  # type: ignore[union-attr]
    return replace(default, **config_dict)
