"""PyWardrop - Wardrop equilibria on epsilon-scaled congested networks.

This package builds lattice networks at a length scale eps, computes their
Wardrop equilibria for a transport plan (or, in the long-term variant, for
supply and demand marginals), certifies them through the Beckmann and dual
formulations, and probes what happens as eps goes to zero.

Main functionality:
    - build_network(): cartesian, triangular and hexagonal networks
    - solve_beckmann() / solve_longterm(): Frank-Wolfe equilibrium solvers
    - wardrop_certify() / duality_gap(): equilibrium certificates
    - J_limit(), phi_xi(), c_xi(): continuum-limit functionals
    - build_Q_eps(), m_Q(): path measures of solved flows
    - run_gamma_study() / run_measure_study(): eps-refinement studies
    - Custom exceptions for comprehensive error handling

Example:
    >>> import pywardrop
    >>> domain = pywardrop.Domain.box([0, 0], [1, 1])
    >>> network = pywardrop.build_network("cartesian", domain, 0.25)
    >>> model = pywardrop.CongestionModel.power_law(2.0, 1.0, 1.0, network.family.size)
    >>> plan = pywardrop.TransportPlan.single(0, network.n_nodes - 1, 1.0)
    >>> flow = pywardrop.solve_beckmann(network, model, plan)
    >>> pywardrop.duality_gap(network, model, plan, flow).gap_rel < 1e-4
    True
"""

from __future__ import annotations

# Public API exports
from .api.loaders import (
    read_experiment,
    read_flow,
    read_marginals,
    read_model,
    read_network,
    read_plan,
    write_flow,
    write_network,
)
from .constants import (
    DEFAULT_CONGESTION_CONFIG,
    DEFAULT_CONTINUUM_CONFIG,
    DEFAULT_NETWORK_CONFIG,
    DEFAULT_SOLVER_CONFIG,
    CongestionConfig,
    ContinuumConfig,
    FamilyTag,
    NetworkConfig,
    SolverConfig,
)
from .core.assignment import (
    FlowState,
    TransportPlan,
    shortest_path,
    solve_beckmann,
    wardrop_certify,
)
from .core.congestion import CongestionModel, G_eval, H_eval, g_eval, growth_certify, rescale
from .core.continuum import (
    GammaMeasure,
    ThetaMeasure,
    XiField,
    J_limit,
    c_xi,
    decompose,
    holder_probe,
    phi_xi,
    weak_convergence_probe,
)
from .core.dual import J_eps, MetricState, duality_gap
from .core.gencurves import (
    GeneralizedCurveMeasure,
    build_Q_eps,
    lift_path,
    m_Q,
    reduce_decomposition,
    reparameterize,
)
from .core.longterm import MarginalPair, dual_longterm_value, ot_subproblem, solve_longterm
from .core.network import (
    DirectionFamily,
    Domain,
    Network,
    build_cartesian,
    build_hexagonal,
    build_network,
    build_triangular,
    validate_hypotheses,
)
from .exceptions import (
    DecompositionError,
    DisconnectedError,
    EmptyNetworkError,
    IterationLimitError,
    ModelError,
    NetworkError,
    TransportError,
    UnreachableODError,
    UnsupportedFormatError,
    WardropError,
    WardropFileError,
    WardropValidationError,
    WardropValidationWarning,
)
from .studies.harness import ExperimentConfig, run_gamma_study, run_measure_study

# Version information
__version__ = "0.1.0"
__author__ = "Grayson Bellamy"
__email__ = "gbellamy@umd.edu"

# Define public API
__all__ = [
    "DEFAULT_CONGESTION_CONFIG",
    "DEFAULT_CONTINUUM_CONFIG",
    "DEFAULT_NETWORK_CONFIG",
    "DEFAULT_SOLVER_CONFIG",
    "CongestionConfig",
    "CongestionModel",
    "ContinuumConfig",
    "DecompositionError",
    "DirectionFamily",
    "DisconnectedError",
    "Domain",
    "EmptyNetworkError",
    "ExperimentConfig",
    "FamilyTag",
    "FlowState",
    "G_eval",
    "GammaMeasure",
    "GeneralizedCurveMeasure",
    "H_eval",
    "IterationLimitError",
    "J_eps",
    "J_limit",
    "MarginalPair",
    "MetricState",
    "ModelError",
    "Network",
    "NetworkConfig",
    "NetworkError",
    "SolverConfig",
    "ThetaMeasure",
    "TransportError",
    "TransportPlan",
    "UnreachableODError",
    "UnsupportedFormatError",
    "WardropError",
    "WardropFileError",
    "WardropValidationError",
    "WardropValidationWarning",
    "XiField",
    "__author__",
    "__email__",
    "__version__",
    "build_Q_eps",
    "build_cartesian",
    "build_hexagonal",
    "build_network",
    "build_triangular",
    "c_xi",
    "decompose",
    "dual_longterm_value",
    "duality_gap",
    "g_eval",
    "growth_certify",
    "holder_probe",
    "lift_path",
    "m_Q",
    "ot_subproblem",
    "phi_xi",
    "read_experiment",
    "read_flow",
    "read_marginals",
    "read_model",
    "read_network",
    "read_plan",
    "reduce_decomposition",
    "reparameterize",
    "rescale",
    "run_gamma_study",
    "run_measure_study",
    "shortest_path",
    "solve_beckmann",
    "solve_longterm",
    "validate_hypotheses",
    "wardrop_certify",
    "weak_convergence_probe",
    "write_flow",
    "write_network",
]
