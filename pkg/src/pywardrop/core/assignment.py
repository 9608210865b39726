"""Transport plans, flows, shortest paths and the Beckmann/Wardrop solver.

Flows are path based: every origin-destination (OD) pair keeps the loop-free
paths it uses, stored as tuples of arc ids, together with their flows. Arc
masses are always the sum of the path flows through each arc.
"""

from __future__ import annotations

import logging
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from heapq import heappop, heappush
from typing import Any

import numpy as np
from scipy import optimize

from pywardrop.constants import (
    DEFAULT_SOLVER_CONFIG,
    FlowDump,
    PathDump,
    SolverConfig,
    resolve_config,
)
from pywardrop.core.congestion import ArcCongestion, CongestionModel
from pywardrop.core.network import Network
from pywardrop.exceptions import (
    IterationLimitError,
    NegativeMassError,
    UnreachableODError,
    WardropValidationError,
)

logger = logging.getLogger(__name__)

ODPair = tuple[int, int]
ArcPath = tuple[int, ...]


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Masses gamma(x, y) >= 0 to send from node x to node y.

    Entries are merged per pair, sorted by (source, sink) and zero masses
    are dropped. Masses are raw; no epsilon rescaling is applied here.
    """

    sources: np.ndarray
    sinks: np.ndarray
    masses: np.ndarray

    def __post_init__(self) -> None:
        """Merge duplicates, sort entries and validate masses."""
        sources = np.asarray(self.sources, dtype=np.int64).reshape(-1)
        sinks = np.asarray(self.sinks, dtype=np.int64).reshape(-1)
        masses = np.asarray(self.masses, dtype=float).reshape(-1)
        if not (sources.size == sinks.size == masses.size):
            msg = "Plan columns must have the same length"
            raise WardropValidationError(msg, field_name="plan")
        if np.any(masses < 0):
            msg = "Plan masses must be nonnegative"
            raise NegativeMassError(msg, field_name="mass", invalid_value=float(masses.min()))
        if np.any(sources < 0) or np.any(sinks < 0):
            msg = "Plan node ids must be nonnegative"
            raise WardropValidationError(msg, field_name="node")

        merged: dict[ODPair, float] = {}
        for x, y, mass in zip(sources.tolist(), sinks.tolist(), masses.tolist(), strict=True):
            merged[(x, y)] = merged.get((x, y), 0.0) + mass
        pairs = sorted(pair for pair, mass in merged.items() if mass > 0)
        for name, values, dtype in (
            ("sources", [x for x, _ in pairs], np.int64),
            ("sinks", [y for _, y in pairs], np.int64),
            ("masses", [merged[pair] for pair in pairs], float),
        ):
            array = np.asarray(values, dtype=dtype)
            array.setflags(write=False)
            object.__setattr__(self, name, array)

    @classmethod
    def from_mapping(cls, entries: Mapping[ODPair, float]) -> TransportPlan:
        """Build from ``{(x, y): mass}``."""
        pairs = list(entries.items())
        return cls(
            sources=np.array([x for (x, _), _ in pairs], dtype=np.int64),
            sinks=np.array([y for (_, y), _ in pairs], dtype=np.int64),
            masses=np.array([mass for _, mass in pairs], dtype=float),
        )

    @classmethod
    def single(cls, source: int, sink: int, mass: float) -> TransportPlan:
        """One OD pair."""
        return cls.from_mapping({(source, sink): mass})

    @classmethod
    def empty(cls) -> TransportPlan:
        """The zero plan."""
        return cls.from_mapping({})

    def __len__(self) -> int:
        """Number of OD pairs with positive mass."""
        return int(self.masses.size)

    @property
    def total(self) -> float:
        """Total mass."""
        return float(self.masses.sum())

    def pairs(self) -> Iterator[tuple[ODPair, float]]:
        """Iterate ((x, y), mass)."""
        for x, y, mass in zip(self.sources.tolist(), self.sinks.tolist(), self.masses.tolist(), strict=True):
            yield (x, y), mass

    def as_mapping(self) -> dict[ODPair, float]:
        """``{(x, y): mass}`` view."""
        return dict(self.pairs())

    def unique_sources(self) -> list[int]:
        """Sorted source ids."""
        return sorted(set(self.sources.tolist()))

    def scaled(self, factor: float) -> TransportPlan:
        """Plan with every mass multiplied by ``factor``."""
        return TransportPlan(self.sources, self.sinks, self.masses * factor)

    def check_nodes(self, network: Network) -> None:
        """Ensure every referenced node exists.

        Raises:
            WardropValidationError: If a node id is out of range
        """
        if len(self) and max(int(self.sources.max()), int(self.sinks.max())) >= network.n_nodes:
            msg = "Plan references nodes outside the network"
            raise WardropValidationError(
                msg, field_name="node", invalid_value=max(int(self.sources.max()), int(self.sinks.max()))
            )


@dataclass(frozen=True)
class SolverInfo:
    """Convergence record of an equilibrium solve."""

    iterations: int
    relative_gap: float
    objective: float
    converged: bool
    objective_history: tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class FlowState:
    """Arc masses m and path flows w, grouped by OD pair."""

    arc_masses: np.ndarray
    od_flows: dict[ODPair, dict[ArcPath, float]] = field(default_factory=dict)
    info: SolverInfo | None = None

    @classmethod
    def zero(cls, network: Network) -> FlowState:
        """The empty flow."""
        return cls(arc_masses=np.zeros(network.n_arcs))

    @classmethod
    def from_paths(
        cls,
        network: Network,
        od_flows: Mapping[ODPair, Mapping[ArcPath, float]],
        info: SolverInfo | None = None,
    ) -> FlowState:
        """Build from path flows; arc masses are their sums."""
        flows = {
            od: {tuple(int(a) for a in path): float(w) for path, w in paths.items() if w > 0}
            for od, paths in od_flows.items()
        }
        flows = {od: paths for od, paths in flows.items() if paths}
        return cls(arc_masses=path_arc_masses(network.n_arcs, flows), od_flows=flows, info=info)

    def paths(self) -> Iterator[tuple[ODPair, ArcPath, float]]:
        """Iterate (od, arcs, flow) in OD then insertion order."""
        for od in sorted(self.od_flows):
            for path, flow in self.od_flows[od].items():
                yield od, path, flow

    @property
    def n_paths(self) -> int:
        """Number of carried paths."""
        return sum(len(paths) for paths in self.od_flows.values())

    def od_totals(self) -> dict[ODPair, float]:
        """Mass carried per OD pair."""
        return {od: float(sum(paths.values())) for od, paths in self.od_flows.items()}

    def conservation_residuals(self, plan: TransportPlan, n_arcs: int) -> tuple[float, float]:
        """Largest relative OD-mass and arc-mass bookkeeping errors."""
        totals = self.od_totals()
        od_error = 0.0
        for od, mass in plan.pairs():
            od_error = max(od_error, abs(totals.get(od, 0.0) - mass) / mass)
        extra = set(totals) - set(plan.as_mapping())
        if extra:
            od_error = max(od_error, max(totals[od] for od in extra))
        recomputed = path_arc_masses(n_arcs, self.od_flows)
        scale = max(float(np.max(np.abs(recomputed), initial=0.0)), 1e-300)
        arc_error = float(np.max(np.abs(recomputed - self.arc_masses), initial=0.0)) / scale
        return od_error, arc_error

    def check_conservation(
        self, plan: TransportPlan, n_arcs: int, rtol: float = DEFAULT_SOLVER_CONFIG.conservation_rtol
    ) -> None:
        """Verify OD masses and arc masses match the path flows.

        Raises:
            WardropValidationError: If either residual exceeds ``rtol``
        """
        od_error, arc_error = self.conservation_residuals(plan, n_arcs)
        if od_error > rtol:
            msg = "Path flows do not carry the plan masses"
            raise WardropValidationError(msg, field_name="od_flows", invalid_value=od_error)
        if arc_error > rtol:
            msg = "Arc masses differ from summed path flows"
            raise WardropValidationError(msg, field_name="arc_masses", invalid_value=arc_error)

    def to_dict(self, network: Network) -> FlowDump:
        """JSON interchange representation."""
        paths: list[PathDump] = []
        for (x, _), path, flow in self.paths():
            nodes = list(network.nodes_of(path)) if path else [x]
            paths.append({"nodes": nodes, "arcs": list(path), "flow": flow})
        return {"arc_masses": self.arc_masses.tolist(), "paths": paths}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], network: Network) -> FlowState:
        """Rebuild from :meth:`to_dict` output; ``arcs`` may be omitted."""
        od_flows: dict[ODPair, dict[ArcPath, float]] = {}
        for entry in data.get("paths", []):
            nodes = [int(n) for n in entry["nodes"]]
            arcs = (
                tuple(int(a) for a in entry["arcs"])
                if "arcs" in entry
                else (network.arcs_of(nodes) if len(nodes) > 1 else ())
            )
            od = (nodes[0], nodes[-1])
            bucket = od_flows.setdefault(od, {})
            bucket[arcs] = bucket.get(arcs, 0.0) + float(entry["flow"])
        if "arc_masses" in data and not od_flows:
            return cls(arc_masses=np.asarray(data["arc_masses"], dtype=float))
        return cls.from_paths(network, od_flows)


def path_arc_masses(n_arcs: int, od_flows: Mapping[ODPair, Mapping[ArcPath, float]]) -> np.ndarray:
    """Arc masses m(x, e) = sum of w over the paths through (x, e)."""
    arcs: list[int] = []
    weights: list[float] = []
    for paths in od_flows.values():
        for path, flow in paths.items():
            arcs.extend(path)
            weights.extend([flow] * len(path))
    if not arcs:
        return np.zeros(n_arcs)
    return np.bincount(np.asarray(arcs, dtype=np.int64), weights=weights, minlength=n_arcs)


@dataclass(frozen=True, eq=False)
class ShortestPathTree:
    """Labels T(y) from one source and the predecessor arc of every node."""

    network: Network
    source: int
    labels: np.ndarray
    pred_arc: np.ndarray

    def reachable(self, node: int) -> bool:
        """True when the node has a finite label."""
        return bool(np.isfinite(self.labels[node]))

    def path_arcs(self, target: int) -> ArcPath:
        """Arc ids of the tree path to ``target`` (empty for the source).

        Raises:
            UnreachableODError: If the target is unreachable
        """
        if not self.reachable(target):
            msg = "Target is unreachable from the source"
            raise UnreachableODError(msg, source=self.source, sink=target)
        arcs: list[int] = []
        node = target
        tails = self.network.tails
        while node != self.source:
            arc = int(self.pred_arc[node])
            arcs.append(arc)
            node = int(tails[arc])
        return tuple(reversed(arcs))

    def path_nodes(self, target: int) -> tuple[int, ...]:
        """Node sequence of the tree path to ``target``."""
        arcs = self.path_arcs(target)
        return self.network.nodes_of(arcs) if arcs else (self.source,)


def shortest_path(network: Network, times: np.ndarray, source: int) -> ShortestPathTree:
    """Dijkstra from ``source`` with nonnegative arc times.

    Heap entries are ordered by (distance, node id). Among paths of equal
    length the lexicographically smallest node sequence wins, then the
    smaller arc id for parallel arcs. Unreachable nodes get +inf.
    """
    times_list = np.asarray(times, dtype=float).tolist()
    if times_list and min(times_list) < 0:
        msg = "Arc times must be nonnegative"
        raise WardropValidationError(msg, field_name="times", invalid_value=min(times_list))
    n = network.n_nodes
    adjacency = network.adjacency
    tails = network.tails.tolist()
    dist = [float("inf")] * n
    pred = [-1] * n
    done = [False] * n

    def nodes_to(node: int) -> list[int]:
        sequence = [node]
        while node != source:
            node = tails[pred[node]]
            sequence.append(node)
        sequence.reverse()
        return sequence

    dist[source] = 0.0
    heap: list[tuple[float, int]] = [(0.0, source)]
    while heap:
        d, u = heappop(heap)
        if done[u] or d > dist[u]:
            continue
        done[u] = True
        for arc, v in adjacency[u]:
            if done[v]:
                continue
            candidate = d + times_list[arc]
            if candidate < dist[v]:
                dist[v] = candidate
                pred[v] = arc
                heappush(heap, (candidate, v))
            elif candidate == dist[v]:
                current = tails[pred[v]]
                if current == u:
                    if arc < pred[v]:
                        pred[v] = arc
                elif nodes_to(u) < nodes_to(current):
                    pred[v] = arc

    return ShortestPathTree(
        network=network,
        source=source,
        labels=np.asarray(dist),
        pred_arc=np.asarray(pred, dtype=np.int64),
    )


def shortest_paths(
    network: Network, times: np.ndarray, sources: Sequence[int]
) -> dict[int, ShortestPathTree]:
    """One tree per distinct source."""
    return {int(s): shortest_path(network, times, int(s)) for s in sorted(set(sources))}


def route_plan(
    trees: Mapping[int, ShortestPathTree], plan: TransportPlan
) -> tuple[dict[ODPair, ArcPath], float]:
    """Shortest path per OD pair and the lower bound sum gamma T."""
    routes: dict[ODPair, ArcPath] = {}
    lower = 0.0
    for (x, y), mass in plan.pairs():
        tree = trees[x]
        if not tree.reachable(y):
            msg = "Positive mass between disconnected nodes"
            raise UnreachableODError(msg, source=x, sink=y, mass=mass)
        routes[(x, y)] = tree.path_arcs(y)
        lower += mass * float(tree.labels[y])
    return routes, lower


def all_or_nothing(network: Network, plan: TransportPlan, times: np.ndarray) -> FlowState:
    """Load every OD mass on one shortest path.

    Raises:
        UnreachableODError: If a positive-mass sink is unreachable
    """
    plan.check_nodes(network)
    trees = shortest_paths(network, times, plan.unique_sources())
    routes, _ = route_plan(trees, plan)
    return FlowState.from_paths(
        network, {od: {routes[od]: mass} for od, mass in plan.pairs()}
    )


def line_search(
    bound: ArcCongestion,
    masses: np.ndarray,
    direction: np.ndarray,
    upper: float,
    xtol: float,
) -> float:
    """Exact minimiser on [0, upper] of s -> sum G^eps(m + s d)."""
    arcs = np.flatnonzero(direction)
    if arcs.size == 0:
        return 0.0
    base = masses[arcs]
    step = direction[arcs]

    def slope(s: float) -> float:
        return float(np.dot(bound.times_on(arcs, base + s * step), step))

    if slope(0.0) >= 0.0:
        return 0.0
    if slope(upper) <= 0.0:
        return upper
    return float(optimize.bisect(slope, 0.0, upper, xtol=xtol))


def _path_time(bound: ArcCongestion, masses: np.ndarray, path: ArcPath) -> float:
    if not path:
        return 0.0
    arcs = np.asarray(path, dtype=np.int64)
    return float(bound.times_on(arcs, masses[arcs]).sum())


def equilibrate_paths(
    bound: ArcCongestion,
    masses: np.ndarray,
    od_flows: dict[ODPair, dict[ArcPath, float]],
    cfg: SolverConfig,
) -> int:
    """Shift flow from the slowest to the fastest stored path of each OD pair.

    Each shift is an exact line search, so the objective never increases
    and OD masses are preserved. Updates ``masses`` and ``od_flows`` in
    place and returns the number of shifts.
    """
    shifts = 0
    n_arcs = masses.size
    for od in sorted(od_flows):
        paths = od_flows[od]
        for _ in range(cfg.max_shifts):
            if len(paths) < 2:
                break
            timed = sorted((_path_time(bound, masses, p), p) for p in paths)
            fast_time, fast = timed[0]
            slow_time, slow = timed[-1]
            if slow_time - fast_time <= cfg.equilibration_tol * max(fast_time, 1e-300):
                break
            direction = np.zeros(n_arcs)
            np.add.at(direction, np.asarray(fast, dtype=np.int64), 1.0)
            np.add.at(direction, np.asarray(slow, dtype=np.int64), -1.0)
            amount = paths[slow]
            delta = line_search(bound, masses, direction, amount, cfg.line_search_tol * max(amount, 1.0))
            if delta <= 0.0:
                break
            masses += delta * direction
            np.maximum(masses, 0.0, out=masses)
            remaining = amount - delta
            if remaining <= cfg.equilibration_tol * amount:
                del paths[slow]
                paths[fast] += remaining
            else:
                paths[slow] = remaining
            paths[fast] += delta
            shifts += 1
    return shifts


def relative_gap(primal_term: float, lower: float) -> float:
    """(sum m t - sum gamma T) / sum gamma T."""
    if lower <= 0.0:
        return max(primal_term - lower, 0.0)
    return (primal_term - lower) / lower


def solve_beckmann(
    network: Network,
    model: CongestionModel,
    plan: TransportPlan,
    config: SolverConfig | dict[str, Any] | None = None,
) -> FlowState:
    """Wardrop equilibrium as the minimiser of sum G^eps(m) over feasible flows.

    Path-based Frank-Wolfe with exact line search. With
    ``config.equilibrate`` each iteration also balances the stored paths of
    every OD pair, which removes the slow paths Frank-Wolfe leaves behind.

    Args:
        network: Network to load
        model: Congestion model with positive free-flow constants
        plan: OD masses
        config: Solver configuration overrides

    Returns:
        Flow whose ``info`` records iterations, relative gap and objective

    Raises:
        IterationLimitError: If ``max_iters`` is reached first; ``best``
            holds the iterate with the smallest gap
        UnreachableODError: If an OD pair is disconnected
    """
    cfg = resolve_config(DEFAULT_SOLVER_CONFIG, config)
    model.require_positive_free_flow()
    plan.check_nodes(network)
    bound = ArcCongestion.bind(model, network)

    if len(plan) == 0:
        return FlowState(
            arc_masses=np.zeros(network.n_arcs),
            info=SolverInfo(iterations=0, relative_gap=0.0, objective=0.0, converged=True),
        )

    sources = plan.unique_sources()
    trees = shortest_paths(network, bound.free_flow_times(), sources)
    routes, _ = route_plan(trees, plan)
    od_flows: dict[ODPair, dict[ArcPath, float]] = {
        od: {routes[od]: mass} for od, mass in plan.pairs()
    }
    masses = path_arc_masses(network.n_arcs, od_flows)
    history: list[float] = [float(bound.costs(masses).sum())]

    best: FlowState | None = None
    best_gap = np.inf
    gap = np.inf
    for iteration in range(1, cfg.max_iters + 1):
        times = bound.times(masses)
        trees = shortest_paths(network, times, sources)
        routes, lower = route_plan(trees, plan)
        gap = relative_gap(float(np.dot(masses, times)), lower)
        logger.debug(
            "Frank-Wolfe iteration %d: objective=%.12g, relative gap=%.3e, paths=%d",
            iteration,
            history[-1],
            gap,
            sum(len(p) for p in od_flows.values()),
        )
        if gap < best_gap:
            best_gap = gap
            best = flow_snapshot(network, od_flows, iteration, gap, history)
        if gap <= cfg.rel_gap_tol:
            flow = flow_snapshot(network, od_flows, iteration, gap, history, converged=True)
            logger.info(
                "Equilibrium reached after %d iterations (relative gap %.3e, objective %.12g)",
                iteration,
                gap,
                history[-1],
            )
            return flow

        target = path_arc_masses(
            network.n_arcs, {od: {routes[od]: mass} for od, mass in plan.pairs()}
        )
        step = line_search(bound, masses, target - masses, 1.0, cfg.line_search_tol)
        if step > 0.0:
            for od, mass in plan.pairs():
                paths = od_flows[od]
                if step >= 1.0:
                    paths.clear()
                else:
                    for path in paths:
                        paths[path] *= 1.0 - step
                paths[routes[od]] = paths.get(routes[od], 0.0) + step * mass
            masses = path_arc_masses(network.n_arcs, od_flows)

        if cfg.equilibrate:
            equilibrate_paths(bound, masses, od_flows, cfg)
            masses = path_arc_masses(network.n_arcs, od_flows)
        history.append(float(bound.costs(masses).sum()))

    msg = "Frank-Wolfe stopped before reaching the gap tolerance"
    raise IterationLimitError(msg, iterations=cfg.max_iters, relative_gap=float(best_gap), best=best)


def flow_snapshot(
    network: Network,
    od_flows: dict[ODPair, dict[ArcPath, float]],
    iteration: int,
    gap: float,
    history: list[float],
    converged: bool = False,
) -> FlowState:
    """Flow state of the current path flows with its solver record."""
    info = SolverInfo(
        iterations=iteration,
        relative_gap=float(gap),
        objective=history[-1],
        converged=converged,
        objective_history=tuple(history),
    )
    return FlowState.from_paths(network, {od: dict(paths) for od, paths in od_flows.items()}, info)


def beckmann_objective(model: CongestionModel, network: Network, flow: FlowState) -> float:
    """sum over arcs of G^eps(x, e, m(x, e))."""
    return float(ArcCongestion.bind(model, network).costs(flow.arc_masses).sum())


@dataclass(frozen=True)
class CertReport:
    """Wardrop certificate: every used path is (nearly) a shortest path."""

    passed: bool
    tol: float
    worst_violation: float
    worst_pair: ODPair | None
    spreads: dict[ODPair, float]
    n_paths: int

    def to_dict(self) -> dict[str, Any]:
        """JSON-friendly view."""
        return {
            "passed": self.passed,
            "tol": self.tol,
            "worst_violation": self.worst_violation,
            "worst_pair": list(self.worst_pair) if self.worst_pair else None,
            "max_spread": max(self.spreads.values(), default=0.0),
            "n_paths": self.n_paths,
        }


def wardrop_certify(
    network: Network,
    model: CongestionModel,
    flow: FlowState,
    plan: TransportPlan,
    tol: float = 1e-3,
) -> CertReport:
    """Check that every path with positive flow satisfies tau <= T (1 + tol).

    Report only: the relative violation max(tau / T - 1) and the spread of
    used-path times are returned per OD pair.
    """
    bound = ArcCongestion.bind(model, network)
    times = bound.times(flow.arc_masses)
    sources = sorted({x for x, _ in flow.od_flows} | set(plan.unique_sources()))
    trees = shortest_paths(network, times, sources)

    worst, worst_pair = 0.0, None
    spreads: dict[ODPair, float] = {}
    n_paths = 0
    for (x, y), paths in sorted(flow.od_flows.items()):
        label = float(trees[x].labels[y])
        used = [float(times[list(path)].sum()) if path else 0.0 for path, w in paths.items() if w > 0]
        if not used:
            continue
        n_paths += len(used)
        spreads[(x, y)] = max(used) - min(used)
        violation = (max(used) - label) / label if label > 0 else max(used)
        if violation > worst:
            worst, worst_pair = violation, (x, y)

    report = CertReport(
        passed=worst <= tol,
        tol=tol,
        worst_violation=worst,
        worst_pair=worst_pair,
        spreads=spreads,
        n_paths=n_paths,
    )
    logger.debug("Wardrop certificate: passed=%s worst=%.3e", report.passed, worst)
    return report
