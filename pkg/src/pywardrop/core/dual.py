"""Dual functionals of the Beckmann problem and the discrete duality gap."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from pywardrop.constants import DualReportDump
from pywardrop.core.assignment import FlowState, TransportPlan, shortest_paths
from pywardrop.core.congestion import ArcCongestion, CongestionModel
from pywardrop.core.network import Network
from pywardrop.exceptions import UnreachableODError, WardropValidationError

logger = logging.getLogger(__name__)

GAP_FLOOR = 1e-30


@dataclass(frozen=True, eq=False)
class MetricState:
    """Rescaled arc metric xi(x, e) >= 0 on a network."""

    xi: np.ndarray
    epsilon: float
    p: float
    norm_p: float

    @classmethod
    def build(cls, network: Network, xi: np.ndarray, p: float) -> MetricState:
        """Wrap per-arc values and cache the discrete norm ||xi||_{eps,p}.

        Raises:
            WardropValidationError: If a value is negative or the length is
                not the arc count
        """
        values = np.asarray(xi, dtype=float).copy()
        if values.shape != (network.n_arcs,):
            msg = "Metric needs one value per arc"
            raise WardropValidationError(msg, field_name="xi", invalid_value=values.size)
        if np.any(values < 0):
            msg = "Metric values must be nonnegative"
            raise WardropValidationError(msg, field_name="xi", invalid_value=float(values.min()))
        values.setflags(write=False)
        return cls(
            xi=values,
            epsilon=network.epsilon,
            p=float(p),
            norm_p=discrete_norm(network, values, p),
        )

    def arc_weights(self, network: Network) -> np.ndarray:
        """Arc times |e|^(d/2) xi used by the minimal-time functional."""
        return network.lengths ** (network.dimension / 2.0) * self.xi


def discrete_norm(network: Network, xi: np.ndarray, p: float) -> float:
    """||xi||_{eps,p} = (sum |e|^d xi^p)^(1/p)."""
    weights = network.lengths**network.dimension
    return float(np.sum(weights * np.asarray(xi, dtype=float) ** p) ** (1.0 / p))


def xi_from_flow(network: Network, model: CongestionModel, flow: FlowState) -> MetricState:
    """Primal-dual map xi(x, e) = g(x, e/|e|, m(x, e) / |e|^(d/2))."""
    bound = ArcCongestion.bind(model, network)
    return MetricState.build(network, bound.xi(flow.arc_masses), model.p)


def minimal_time(
    network: Network, plan: TransportPlan, weights: np.ndarray
) -> float:
    """sum gamma(x, y) T(x, y) for arc weights ``weights``.

    Raises:
        UnreachableODError: If a positive-mass pair is disconnected
    """
    trees = shortest_paths(network, weights, plan.unique_sources())
    total = 0.0
    for (x, y), mass in plan.pairs():
        label = float(trees[x].labels[y])
        if not np.isfinite(label):
            msg = "Positive mass between disconnected nodes"
            raise UnreachableODError(msg, source=x, sink=y, mass=mass)
        total += mass * label
    return total


def J_eps(
    network: Network,
    model: CongestionModel,
    plan: TransportPlan,
    metric: MetricState,
) -> tuple[float, float, float]:
    """Discrete dual functional J = I0 - I1.

    I0 = sum |e|^d H(x, e/|e|, xi) and I1 = sum gamma T, with T computed
    by shortest paths under arc weights |e|^(d/2) xi.

    Returns:
        (J, I0, I1)
    """
    bound = ArcCongestion.bind(model, network)
    I0 = float(bound.conjugate(metric.xi).sum())
    I1 = minimal_time(network, plan, metric.arc_weights(network))
    return I0 - I1, I0, I1


@dataclass(frozen=True)
class DualityReport:
    """Primal and dual values at a flow."""

    I0: float
    I1: float
    J: float
    primal: float
    gap_abs: float
    gap_rel: float

    def to_dict(self) -> DualReportDump:
        """JSON-friendly view."""
        return {
            "I0": self.I0,
            "I1": self.I1,
            "J": self.J,
            "primal": self.primal,
            "gap_abs": self.gap_abs,
            "gap_rel": self.gap_rel,
        }


def duality_gap(
    network: Network,
    model: CongestionModel,
    plan: TransportPlan,
    flow: FlowState,
) -> DualityReport:
    """Gap J(xi(m)) + sum G^eps(m) between the dual and primal values.

    The gap is nonnegative for feasible flows and vanishes at the optimum.
    The relative gap divides by sum G^eps, floored at 1e-30.
    """
    bound = ArcCongestion.bind(model, network)
    primal = float(bound.costs(flow.arc_masses).sum())
    metric = MetricState.build(network, bound.xi(flow.arc_masses), model.p)
    J, I0, I1 = J_eps(network, model, plan, metric)
    gap = J + primal
    report = DualityReport(
        I0=I0,
        I1=I1,
        J=J,
        primal=primal,
        gap_abs=gap,
        gap_rel=gap / max(abs(primal), GAP_FLOOR),
    )
    logger.debug("Duality gap %.3e (relative %.3e)", report.gap_abs, report.gap_rel)
    return report
