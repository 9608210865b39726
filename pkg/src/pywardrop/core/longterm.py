"""Long-term equilibria: only the supply and demand marginals are prescribed.

The transport plan becomes an unknown. Each Frank-Wolfe step solves an
optimal transport problem between the marginals for the current
minimal-time costs (network simplex from POT), then loads the optimal plan
on shortest paths.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import ot

from pywardrop.constants import DEFAULT_SOLVER_CONFIG, SolverConfig, resolve_config
from pywardrop.core.assignment import (
    ArcPath,
    FlowState,
    ODPair,
    TransportPlan,
    equilibrate_paths,
    flow_snapshot,
    line_search,
    path_arc_masses,
    relative_gap,
    route_plan,
    shortest_paths,
)
from pywardrop.core.congestion import ArcCongestion, CongestionModel
from pywardrop.core.dual import MetricState
from pywardrop.core.network import DirectionFamily, Network
from pywardrop.exceptions import (
    IterationLimitError,
    NegativeMassError,
    TransportError,
    WardropValidationError,
)

logger = logging.getLogger(__name__)

BALANCE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class MarginalPair:
    """Supply f_minus and demand f_plus on network nodes."""

    f_minus: dict[int, float]
    f_plus: dict[int, float]

    def __post_init__(self) -> None:
        """Drop zero entries and check signs and balance."""
        for name in ("f_minus", "f_plus"):
            side = {int(k): float(v) for k, v in getattr(self, name).items()}
            if any(v < 0 for v in side.values()):
                msg = f"{name} masses must be nonnegative"
                raise NegativeMassError(msg, field_name=name, invalid_value=min(side.values()))
            object.__setattr__(self, name, {k: side[k] for k in sorted(side) if side[k] > 0})
        supply, demand = self.total_minus, self.total_plus
        if abs(supply - demand) > BALANCE_RTOL * max(1.0, supply, demand):
            msg = f"Marginals are unbalanced: {supply} != {demand}"
            raise WardropValidationError(msg, field_name="marginals", invalid_value=supply - demand)

    @classmethod
    def dirac(cls, source: int, sink: int, mass: float = 1.0) -> MarginalPair:
        """Single source and single sink."""
        return cls(f_minus={source: mass}, f_plus={sink: mass})

    @property
    def total_minus(self) -> float:
        """Total supply."""
        return float(sum(self.f_minus.values()))

    @property
    def total_plus(self) -> float:
        """Total demand."""
        return float(sum(self.f_plus.values()))

    def scaled(self, factor: float) -> MarginalPair:
        """Both marginals multiplied by ``factor``."""
        return MarginalPair(
            f_minus={k: v * factor for k, v in self.f_minus.items()},
            f_plus={k: v * factor for k, v in self.f_plus.items()},
        )

    def check_nodes(self, network: Network) -> None:
        """Ensure every referenced node exists."""
        nodes = list(self.f_minus) + list(self.f_plus)
        if nodes and (min(nodes) < 0 or max(nodes) >= network.n_nodes):
            msg = "Marginals reference nodes outside the network"
            raise WardropValidationError(msg, field_name="node", invalid_value=max(nodes))

    @classmethod
    def from_plan(cls, plan: TransportPlan) -> MarginalPair:
        """Marginals of a transport plan."""
        minus: dict[int, float] = {}
        plus: dict[int, float] = {}
        for (x, y), mass in plan.pairs():
            minus[x] = minus.get(x, 0.0) + mass
            plus[y] = plus.get(y, 0.0) + mass
        return cls(f_minus=minus, f_plus=plus)


@dataclass(frozen=True, eq=False)
class TransportSolution:
    """Optimal plan between the marginals and its cost sum gamma T."""

    plan: TransportPlan
    value: float


def cost_matrix(
    network: Network, times: np.ndarray, sources: Sequence[int], sinks: Sequence[int]
) -> np.ndarray:
    """Minimal times T(x, y) between the given nodes (+inf if unreachable)."""
    trees = shortest_paths(network, times, sources)
    return np.array([[trees[x].labels[y] for y in sinks] for x in sources], dtype=float).reshape(
        len(sources), len(sinks)
    )


def ot_subproblem(
    network: Network, times: np.ndarray, marginals: MarginalPair
) -> TransportSolution:
    """Cheapest plan with marginals (f_minus, f_plus) for minimal-time costs.

    Raises:
        TransportError: If a positive-mass sink is unreachable from every
            positive-mass source, or the optimum needs a disconnected pair
    """
    marginals.check_nodes(network)
    sources = list(marginals.f_minus)
    sinks = list(marginals.f_plus)
    if not sources:
        return TransportSolution(plan=TransportPlan.empty(), value=0.0)

    costs = cost_matrix(network, times, sources, sinks)
    finite = np.isfinite(costs)
    stranded = [sinks[j] for j in np.flatnonzero(~finite.any(axis=0))]
    if stranded:
        msg = f"Sinks {stranded} are unreachable from every source"
        raise TransportError(msg)

    # Disconnected pairs get a prohibitive finite cost
    big = (float(costs[finite].max(initial=0.0)) + 1.0) * 1e6
    matrix = np.where(finite, costs, big)
    a = np.array([marginals.f_minus[x] for x in sources])
    b = np.array([marginals.f_plus[y] for y in sinks])
    b = b * (a.sum() / b.sum())
    gamma = ot.emd(a, b, matrix, numItermax=1_000_000)

    used = gamma > 0
    if np.any(used & ~finite):
        msg = "Marginals cannot be coupled along network paths"
        raise TransportError(msg)
    rows, cols = np.nonzero(used)
    plan = TransportPlan(
        sources=np.asarray(sources, dtype=np.int64)[rows],
        sinks=np.asarray(sinks, dtype=np.int64)[cols],
        masses=gamma[rows, cols],
    )
    value = float(np.sum(gamma[used] * costs[used]))
    return TransportSolution(plan=plan, value=value)


@dataclass(frozen=True, eq=False)
class LongTermSolution:
    """Equilibrium flow and the plan it carries."""

    flow: FlowState
    plan: TransportPlan


def _carried_plan(od_flows: Mapping[ODPair, Mapping[ArcPath, float]]) -> TransportPlan:
    return TransportPlan.from_mapping({od: float(sum(paths.values())) for od, paths in od_flows.items()})


def solve_longterm(
    network: Network,
    model: CongestionModel,
    marginals: MarginalPair,
    config: SolverConfig | dict[str, Any] | None = None,
) -> LongTermSolution:
    """Minimise sum G^eps(m) over flows whose plan has the given marginals.

    Frank-Wolfe whose linearised step is an optimal transport problem
    followed by all-or-nothing loading. The relative gap is
    (sum m t - OT value) / OT value.

    Raises:
        IterationLimitError: If ``max_iters`` is reached first; ``best``
            holds the best :class:`LongTermSolution`
        TransportError: As :func:`ot_subproblem`
    """
    cfg = resolve_config(DEFAULT_SOLVER_CONFIG, config)
    model.require_positive_free_flow()
    marginals.check_nodes(network)
    bound = ArcCongestion.bind(model, network)
    sources = list(marginals.f_minus)

    if not sources:
        flow = flow_snapshot(network, {}, 0, 0.0, [0.0], converged=True)
        return LongTermSolution(flow=flow, plan=TransportPlan.empty())

    def load(plan: TransportPlan, times: np.ndarray) -> dict[ODPair, ArcPath]:
        trees = shortest_paths(network, times, sources)
        routes, _ = route_plan(trees, plan)
        return routes

    times = bound.free_flow_times()
    initial = ot_subproblem(network, times, marginals).plan
    routes = load(initial, times)
    od_flows: dict[ODPair, dict[ArcPath, float]] = {
        od: {routes[od]: mass} for od, mass in initial.pairs()
    }
    masses = path_arc_masses(network.n_arcs, od_flows)
    history = [float(bound.costs(masses).sum())]

    best: LongTermSolution | None = None
    best_gap = np.inf
    for iteration in range(1, cfg.max_iters + 1):
        times = bound.times(masses)
        solution = ot_subproblem(network, times, marginals)
        gap = relative_gap(float(np.dot(masses, times)), solution.value)
        logger.debug(
            "Long-term iteration %d: objective=%.12g, relative gap=%.3e",
            iteration,
            history[-1],
            gap,
        )
        if gap < best_gap:
            best_gap = gap
            best = LongTermSolution(
                flow=flow_snapshot(network, od_flows, iteration, gap, history),
                plan=_carried_plan(od_flows),
            )
        if gap <= cfg.rel_gap_tol:
            flow = flow_snapshot(network, od_flows, iteration, gap, history, converged=True)
            logger.info(
                "Long-term equilibrium reached after %d iterations (relative gap %.3e)",
                iteration,
                gap,
            )
            return LongTermSolution(flow=flow, plan=_carried_plan(od_flows))

        routes = load(solution.plan, times)
        target = path_arc_masses(
            network.n_arcs, {od: {routes[od]: mass} for od, mass in solution.plan.pairs()}
        )
        step = line_search(bound, masses, target - masses, 1.0, cfg.line_search_tol)
        if step > 0.0:
            if step >= 1.0:
                od_flows = {}
            else:
                for paths in od_flows.values():
                    for path in paths:
                        paths[path] *= 1.0 - step
            for od, mass in solution.plan.pairs():
                paths = od_flows.setdefault(od, {})
                paths[routes[od]] = paths.get(routes[od], 0.0) + step * mass
            masses = path_arc_masses(network.n_arcs, od_flows)

        if cfg.equilibrate:
            equilibrate_paths(bound, masses, od_flows, cfg)
            masses = path_arc_masses(network.n_arcs, od_flows)
        history.append(float(bound.costs(masses).sum()))

    msg = "Long-term Frank-Wolfe stopped before reaching the gap tolerance"
    raise IterationLimitError(msg, iterations=cfg.max_iters, relative_gap=float(best_gap), best=best)


def dual_longterm_value(
    network: Network,
    model: CongestionModel,
    marginals: MarginalPair,
    metric: MetricState,
) -> tuple[float, float, float]:
    """F(xi) = I0(xi) - F1(xi), F1 the OT value under weights |e|^(d/2) xi.

    Returns:
        (F, I0, F1)
    """
    bound = ArcCongestion.bind(model, network)
    I0 = float(bound.conjugate(metric.xi).sum())
    F1 = ot_subproblem(network, metric.arc_weights(network), marginals).value
    return I0 - F1, I0, F1


def ot_certificate(
    network: Network, model: CongestionModel, solution: LongTermSolution
) -> float:
    """Relative excess of the carried plan over the OT optimum at the final times."""
    times = ArcCongestion.bind(model, network).times(solution.flow.arc_masses)
    marginals = MarginalPair.from_plan(solution.plan)
    optimum = ot_subproblem(network, times, marginals).value
    trees = shortest_paths(network, times, list(marginals.f_minus))
    carried = sum(mass * float(trees[x].labels[y]) for (x, y), mass in solution.plan.pairs())
    return (carried - optimum) / max(abs(optimum), 1e-30)


def g_star(
    model: CongestionModel,
    family: DirectionFamily,
    x: np.ndarray | Sequence[float],
    z: np.ndarray | Sequence[float],
) -> float | np.ndarray:
    """Closed form sum_k (b_k / p) (z . v_k - delta_k c_k)_+^p, b_k = (a_k c_k)^(-1/(q-1)).

    Diagnostic evaluator for power-law models; ``x`` and ``z`` are a point
    and a vector, or arrays of shape (n, d).
    """
    if model.custom_g is not None:
        msg = "The closed-form dual integrand needs a power-law model"
        raise WardropValidationError(msg, field_name="custom_g")
    model.require_classes(family.size)
    points = np.asarray(x, dtype=float)
    single = points.ndim == 1
    points = np.atleast_2d(points)
    vectors_z = np.broadcast_to(np.atleast_2d(np.asarray(z, dtype=float)), points.shape)
    vectors = family.vectors(points)
    coefficients = family.volume_coefficients(points)
    n, N = coefficients.shape
    a = np.asarray(model.weights(np.repeat(points, N, axis=0), np.tile(np.arange(N), n))).reshape(n, N)
    delta = np.asarray(model.delta)[None, :]
    b = (a * coefficients) ** (-1.0 / (model.q - 1.0))
    excess = np.maximum(np.einsum("nd,nkd->nk", vectors_z, vectors) - delta * coefficients, 0.0)
    values = np.sum(b / model.p * excess**model.p, axis=1)
    return float(values[0]) if single else values
