"""Epsilon-refinement studies of discrete equilibria.

A study builds the network of every scale in a decreasing list, discretises
the same continuous transport plan on it, solves for the equilibrium and
records one table row per scale:

- ``run_gamma_study`` tracks min J^eps = -sum G^eps(m*), the discrete norm
  of the equilibrium metric, successive differences and their empirical
  order, and weak-convergence residuals of the metric.
- ``run_measure_study`` builds the path measure Q^eps of every solved flow
  and tracks its pairings with smooth metric fields, the Beckmann objective
  at the binned density and the endpoint marginal.

Every row is certified (Wardrop condition and duality gap) before it is
recorded; rows that fail are kept and marked. Runtimes go to the log only,
so identical configurations produce identical tables.
"""

from __future__ import annotations

import json
import logging
import math
import time
import warnings
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pyarrow as pa

from pywardrop.constants import FamilyTag
from pywardrop.core.assignment import FlowState, TransportPlan, solve_beckmann, wardrop_certify
from pywardrop.core.congestion import ArcCongestion, CongestionModel
from pywardrop.core.continuum import (
    TEST_FUNCTIONS,
    ThetaMeasure,
    XiField,
    sample_domain,
    weak_convergence_probe,
)
from pywardrop.core.dual import GAP_FLOOR, MetricState, duality_gap, xi_from_flow
from pywardrop.core.gencurves import beckmann_density_objective, build_Q_eps, m_Q, pushforward
from pywardrop.core.longterm import MarginalPair, dual_longterm_value, solve_longterm
from pywardrop.core.network import Domain, Network, build_network
from pywardrop.exceptions import (
    IterationLimitError,
    WardropError,
    WardropValidationError,
    WardropValidationWarning,
)
from pywardrop.utils import get_metadata, hash_payload, set_metadata

logger = logging.getLogger(__name__)

ConvergenceTable = pa.Table

PLAN_KINDS = ("atoms", "separable", "random")

# Two successive differences are needed for one empirical order
MIN_SCALES = 3

# Gaussian sources and sinks are truncated at this many standard deviations
GAUSSIAN_CUTOFF = 3.0

DEFAULT_XI_FIELDS: dict[str, dict[str, Any]] = {
    "one": {"const": 1.0},
    "quadratic": {"classes": [[[[0, 0], 1.0], [[2, 0], 0.5], [[0, 2], 0.5]]]},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a refinement study needs.

    ``plan`` is one of

    - ``{"kind": "atoms", "atoms": [{"x": [...], "y": [...], "mass": m}]}``
    - ``{"kind": "separable", "mass": m, "source": S, "sink": S}`` with
      ``S = {"point": [...]}`` or ``{"gaussian": {"center": [...], "sigma": s}}``
    - ``{"kind": "random", "pairs": n, "mass": m}``, n pairs drawn from the
      domain with ``seed``
    """

    family: FamilyTag
    domain: str | dict[str, Any]
    epsilons: tuple[float, ...]
    model: dict[str, Any]
    plan: dict[str, Any]
    longterm: bool = False
    solver: dict[str, Any] = field(default_factory=dict)
    continuum: dict[str, Any] = field(default_factory=dict)
    test_functions: tuple[str, ...] = tuple(TEST_FUNCTIONS)
    xi_fields: dict[str, dict[str, Any]] = field(default_factory=lambda: dict(DEFAULT_XI_FIELDS))
    cert_tol: float = 1e-3
    duality_tol: float = 1e-4
    output_csv: str | None = None
    output_json: str | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        """Validate scales, plan kind and test functions."""
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or any(e <= 0 for e in eps):
            msg = "Scales must be positive"
            raise WardropValidationError(msg, field_name="epsilons", invalid_value=str(list(eps)))
        if any(b >= a for a, b in zip(eps, eps[1:], strict=False)):
            msg = "Scales must be strictly decreasing"
            raise WardropValidationError(msg, field_name="epsilons", invalid_value=str(list(eps)))
        if len(eps) < MIN_SCALES:
            msg = f"Refinement studies need at least {MIN_SCALES} scales"
            raise WardropValidationError(msg, field_name="epsilons", invalid_value=str(list(eps)))
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "family", FamilyTag(self.family))
        kind = self.plan.get("kind", "atoms")
        if kind not in PLAN_KINDS:
            msg = f"Unknown plan kind: {kind}"
            raise WardropValidationError(msg, field_name="plan.kind", invalid_value=str(kind))
        unknown = [name for name in self.test_functions if name not in TEST_FUNCTIONS]
        if unknown:
            msg = f"Unknown test functions: {', '.join(unknown)}"
            raise WardropValidationError(msg, field_name="test_functions")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ExperimentConfig:
        """Build from the JSON layout written by :meth:`to_dict`.

        Raises:
            WardropValidationError: If a required key is missing
        """
        try:
            outputs = data.get("outputs", {})
            tolerances = data.get("tolerances", {})
            return cls(
                family=FamilyTag(data["family"]),
                domain=data["domain"],
                epsilons=tuple(data["epsilons"]),
                model=dict(data["model"]),
                plan=dict(data["plan"]),
                longterm=bool(data.get("longterm", False)),
                solver=dict(data.get("solver", {})),
                continuum=dict(data.get("continuum", {})),
                test_functions=tuple(data.get("test_functions", TEST_FUNCTIONS)),
                xi_fields=dict(data.get("xi_fields", DEFAULT_XI_FIELDS)),
                cert_tol=float(tolerances.get("cert", 1e-3)),
                duality_tol=float(tolerances.get("duality", 1e-4)),
                output_csv=outputs.get("csv"),
                output_json=outputs.get("json"),
                seed=int(data.get("seed", 0)),
            )
        except KeyError as e:
            msg = f"Experiment configuration is missing {e}"
            raise WardropValidationError(msg, field_name=str(e.args[0])) from e
        except ValueError as e:
            msg = f"Invalid experiment configuration: {e}"
            raise WardropValidationError(msg, field_name="config") from e

    def to_dict(self) -> dict[str, Any]:
        """JSON layout accepted by :meth:`from_dict`."""
        return {
            "family": self.family.value,
            "domain": self.domain,
            "epsilons": list(self.epsilons),
            "model": self.model,
            "plan": self.plan,
            "longterm": self.longterm,
            "solver": self.solver,
            "continuum": self.continuum,
            "test_functions": list(self.test_functions),
            "xi_fields": self.xi_fields,
            "tolerances": {"cert": self.cert_tol, "duality": self.duality_tol},
            "outputs": {"csv": self.output_csv, "json": self.output_json},
            "seed": self.seed,
        }

    @property
    def config_hash(self) -> str:
        """Fingerprint of the configuration, excluding output paths."""
        payload = self.to_dict()
        payload.pop("outputs")
        return hash_payload(payload)

    def build_domain(self) -> Domain:
        """Domain of the study."""
        return Domain.from_spec(self.domain)


def _source_weights(spec: Mapping[str, Any], network: Network) -> dict[int, float]:
    """Probability weights of one side of a separable plan on the nodes."""
    if "point" in spec:
        return {network.nearest_node(spec["point"]): 1.0}
    if "gaussian" not in spec:
        msg = "Plan sides need 'point' or 'gaussian'"
        raise WardropValidationError(msg, field_name="plan")
    gaussian = spec["gaussian"]
    center = np.asarray(gaussian["center"], dtype=float)
    sigma = float(gaussian["sigma"])
    cutoff = float(gaussian.get("cutoff", GAUSSIAN_CUTOFF))
    distances = np.linalg.norm(network.nodes - center, axis=1)
    inside = np.flatnonzero(distances <= cutoff * sigma)
    if inside.size == 0:
        return {network.nearest_node(center): 1.0}
    # Lattice cells all have the same volume, so normalising the sampled
    # density gives the cell masses of the truncated Gaussian
    density = np.exp(-0.5 * (distances[inside] / sigma) ** 2)
    density = density / density.sum()
    return {int(node): float(w) for node, w in zip(inside, density, strict=True)}


def discretize_plan(
    spec: Mapping[str, Any], network: Network, seed: int = 0
) -> TransportPlan:
    """Sample a continuous transport plan on the nodes of ``network``.

    Cell masses are multiplied by eps^(1 - d/2) so that eps^(d/2 - 1)
    gamma^eps keeps the total mass of the continuous plan at every scale.

    Raises:
        WardropValidationError: If the plan block is malformed
    """
    factor = network.epsilon ** (1.0 - network.dimension / 2.0)
    kind = spec.get("kind", "atoms")
    entries: dict[tuple[int, int], float] = {}
    try:
        if kind == "atoms":
            for atom in spec.get("atoms", []):
                od = (network.nearest_node(atom["x"]), network.nearest_node(atom["y"]))
                entries[od] = entries.get(od, 0.0) + factor * float(atom["mass"])
        elif kind == "separable":
            total = float(spec.get("mass", 1.0))
            sources = _source_weights(spec["source"], network)
            sinks = _source_weights(spec["sink"], network)
            for x, wx in sources.items():
                for y, wy in sinks.items():
                    entries[(x, y)] = factor * total * wx * wy
        else:
            if network.domain is None:
                msg = "Random plans need a network with a domain"
                raise WardropValidationError(msg, field_name="plan.kind", invalid_value=kind)
            rng = np.random.default_rng(seed)
            count = int(spec.get("pairs", 1))
            points = sample_domain(network.domain, 2 * count, rng)
            mass = factor * float(spec.get("mass", 1.0)) / count
            for x, y in zip(points[:count], points[count:], strict=True):
                od = (network.nearest_node(x), network.nearest_node(y))
                entries[od] = entries.get(od, 0.0) + mass
    except (KeyError, TypeError, ValueError) as e:
        msg = f"Malformed plan specification: {e}"
        raise WardropValidationError(msg, field_name="plan") from e
    return TransportPlan.from_mapping(entries)


@dataclass(frozen=True, eq=False)
class _Row:
    """Solved and certified scale of a study."""

    network: Network
    model: CongestionModel
    plan: TransportPlan
    flow: FlowState
    primal: float
    duality_gap: float
    cert_violation: float
    certified: bool
    status: str
    metric: MetricState


def _solve_row(config: ExperimentConfig, domain: Domain, epsilon: float) -> _Row:
    """Build, solve and certify one scale."""
    network = build_network(config.family, domain, epsilon)
    model = CongestionModel.from_config(config.model, network.family.size)
    plan = discretize_plan(config.plan, network, config.seed)
    status = "ok"

    try:
        if config.longterm:
            solution = solve_longterm(network, model, MarginalPair.from_plan(plan), config.solver)
            flow, carried = solution.flow, solution.plan
        else:
            flow, carried = solve_beckmann(network, model, plan, config.solver), plan
    except IterationLimitError as e:
        if e.best is None:
            raise
        logger.warning("Row eps=%g stopped at the iteration limit; using the best iterate", epsilon)
        status = "iteration_limit"
        if config.longterm:
            flow, carried = e.best.flow, e.best.plan
        else:
            flow, carried = e.best, plan

    metric = xi_from_flow(network, model, flow)
    primal = float(ArcCongestion.bind(model, network).costs(flow.arc_masses).sum())
    if config.longterm:
        F, _, _ = dual_longterm_value(network, model, MarginalPair.from_plan(plan), metric)
        gap = (F + primal) / max(abs(primal), GAP_FLOOR)
    else:
        gap = duality_gap(network, model, plan, flow).gap_rel
    cert = wardrop_certify(network, model, flow, carried, tol=config.cert_tol)

    certified = cert.passed and abs(gap) <= config.duality_tol
    if not certified:
        warnings.warn(
            f"Row eps={epsilon} failed certification (violation {cert.worst_violation:.3e}, "
            f"duality gap {gap:.3e})",
            WardropValidationWarning,
            stacklevel=3,
        )
        if status == "ok":
            status = "uncertified"
    return _Row(
        network=network,
        model=model,
        plan=carried,
        flow=flow,
        primal=primal,
        duality_gap=float(gap),
        cert_violation=cert.worst_violation,
        certified=certified,
        status=status,
        metric=metric,
    )


def _run_rows(
    config: ExperimentConfig, study: str
) -> list[tuple[float, _Row | None, str]]:
    """Solve every scale in order; a failing scale becomes an error entry."""
    domain = config.build_domain()
    results: list[tuple[float, _Row | None, str]] = []
    for epsilon in config.epsilons:
        start = time.perf_counter()
        try:
            row = _solve_row(config, domain, epsilon)
        except WardropError as e:
            logger.error("Row eps=%g of the %s study failed: %s", epsilon, study, e)
            results.append((epsilon, None, f"error: {type(e).__name__}"))
            continue
        logger.info(
            "%s study row eps=%g: %d arcs, %d OD pairs, %.3fs, status %s",
            study,
            epsilon,
            row.network.n_arcs,
            len(row.plan),
            time.perf_counter() - start,
            row.status,
        )
        results.append((epsilon, row, row.status))
    return results


def _successive(values: Sequence[float]) -> tuple[list[float], list[float]]:
    """Successive differences |v_i - v_{i-1}| and orders log2(D_{i-1} / D_i)."""
    deltas: list[float] = [math.nan]
    orders: list[float] = [math.nan]
    for i in range(1, len(values)):
        delta = abs(values[i] - values[i - 1])
        deltas.append(delta)
        previous = deltas[i - 1]
        if np.isfinite(previous) and np.isfinite(delta) and previous > 0 and delta > 0:
            orders.append(math.log2(previous / delta))
        else:
            orders.append(math.nan)
    return deltas, orders


def run_gamma_study(config: ExperimentConfig) -> ConvergenceTable:
    """Convergence of min J^eps and of the equilibrium metric along the scales.

    Rows whose solve raised are kept with NaN values and an ``error: ...``
    status; the remaining rows are still computed.
    """
    results = _run_rows(config, "gamma")

    min_J = [-row.primal if row else math.nan for _, row, _ in results]
    deltas, orders = _successive(min_J)

    solved = [row for _, row, _ in results if row is not None]
    weak: dict[tuple[float, str], float | None] = {}
    if solved:
        probe = weak_convergence_probe(
            [(row.network, row.metric) for row in solved],
            None,
            {name: TEST_FUNCTIONS[name] for name in config.test_functions},
        )
        for eps, name, residual in zip(
            probe["epsilon"].to_pylist(),
            probe["test_function"].to_pylist(),
            probe["residual"].to_pylist(),
            strict=True,
        ):
            weak[(eps, name)] = residual

    columns: dict[str, list[Any]] = {
        "epsilon": [],
        "n_nodes": [],
        "n_arcs": [],
        "n_od": [],
        "min_J": min_J,
        "delta": deltas,
        "order": orders,
        "norm_p": [],
        "solver_gap": [],
        "iterations": [],
        "duality_gap": [],
        "cert_violation": [],
        "certified": [],
        "status": [],
    }
    for eps, row, status in results:
        columns["epsilon"].append(eps)
        columns["n_nodes"].append(row.network.n_nodes if row else None)
        columns["n_arcs"].append(row.network.n_arcs if row else None)
        columns["n_od"].append(len(row.plan) if row else None)
        columns["norm_p"].append(row.metric.norm_p if row else math.nan)
        columns["solver_gap"].append(row.flow.info.relative_gap if row and row.flow.info else math.nan)
        columns["iterations"].append(row.flow.info.iterations if row and row.flow.info else None)
        columns["duality_gap"].append(row.duality_gap if row else math.nan)
        columns["cert_violation"].append(row.cert_violation if row else math.nan)
        columns["certified"].append(row.certified if row else False)
        columns["status"].append(status)
    for name in config.test_functions:
        columns[f"weak_{name}"] = [
            (v if (v := weak.get((eps, name))) is not None else math.nan) for eps, _, _ in results
        ]

    table = pa.table(columns, schema=_schema(columns))
    return set_metadata(
        table,
        tbl_meta={
            "study": "gamma",
            "config_hash": config.config_hash,
            "family": config.family.value,
            "longterm": config.longterm,
        },
    )


def _xi_field(spec: Mapping[str, Any], n_classes: int) -> XiField:
    """Metric field of a measure study; a single class entry is broadcast."""
    spec = dict(spec)
    if "classes" in spec and len(spec["classes"]) == 1:
        spec["classes"] = list(spec["classes"]) * n_classes
    return XiField.from_config(spec, n_classes)


def _marginal_error(plan: TransportPlan, endpoints: Mapping[tuple[int, int], float], factor: float) -> float:
    """Largest gap between the endpoint marginal and the rescaled plan."""
    expected = {od: factor * mass for od, mass in plan.pairs() if od[0] != od[1]}
    keys = set(expected) | set(endpoints)
    return max((abs(expected.get(k, 0.0) - endpoints.get(k, 0.0)) for k in keys), default=0.0)


def run_measure_study(config: ExperimentConfig) -> pa.Table:
    """Path measures Q^eps of the solved flows along the scales.

    Per row: total weight, the pairing with xi = 1 next to the arc-sum
    eps^(d/2-1) sum |e| m it must equal, pairings with the configured
    metric fields and their successive differences, the Beckmann objective
    at the binned density, and the endpoint-marginal error against the
    rescaled plan.
    """
    results = _run_rows(config, "measure")
    theta: ThetaMeasure | None = None

    columns: dict[str, list[Any]] = {
        "epsilon": [],
        "n_atoms": [],
        "total_weight": [],
        "pairing_one": [],
        "arc_sum": [],
        "bookkeeping_error": [],
        "beckmann_density": [],
        "marginal_error": [],
        "certified": [],
        "status": [],
    }
    pairings: dict[str, list[float]] = {name: [] for name in config.xi_fields}

    for eps, row, status in results:
        columns["epsilon"].append(eps)
        columns["certified"].append(row.certified if row else False)
        columns["status"].append(status)
        if row is None:
            columns["n_atoms"].append(None)
            for key in (
                "total_weight",
                "pairing_one",
                "arc_sum",
                "bookkeeping_error",
                "beckmann_density",
                "marginal_error",
            ):
                columns[key].append(math.nan)
            for values in pairings.values():
                values.append(math.nan)
            continue

        network, family = row.network, row.network.family
        factor = network.epsilon ** (network.dimension / 2.0 - 1.0)
        measure = build_Q_eps(network, row.flow)
        one = m_Q(family, measure, XiField.constant(1.0, family.size), config.continuum)
        arc_sum = factor * float(np.dot(network.lengths, row.flow.arc_masses))
        if theta is None:
            theta = ThetaMeasure.build(family, config.build_domain(), config.continuum)

        columns["n_atoms"].append(len(measure.atoms))
        columns["total_weight"].append(measure.total_weight)
        columns["pairing_one"].append(one)
        columns["arc_sum"].append(arc_sum)
        columns["bookkeeping_error"].append(abs(one - arc_sum))
        columns["beckmann_density"].append(
            beckmann_density_objective(family, row.model, measure, theta)
        )
        columns["marginal_error"].append(_marginal_error(row.plan, pushforward(measure), factor))
        for name, spec in config.xi_fields.items():
            pairings[name].append(m_Q(family, measure, _xi_field(spec, family.size), config.continuum))

    for name, values in pairings.items():
        deltas, _ = _successive(values)
        columns[f"pairing_{name}"] = values
        columns[f"pairing_delta_{name}"] = deltas

    table = pa.table(columns, schema=_schema(columns))
    return set_metadata(
        table,
        tbl_meta={
            "study": "measure",
            "config_hash": config.config_hash,
            "family": config.family.value,
            "xi_fields": sorted(config.xi_fields),
        },
    )


_INT_COLUMNS = frozenset({"n_nodes", "n_arcs", "n_od", "iterations", "n_atoms"})


def _schema(columns: Mapping[str, list[Any]]) -> pa.Schema:
    types: list[tuple[str, pa.DataType]] = []
    for name in columns:
        if name in _INT_COLUMNS:
            types.append((name, pa.int64()))
        elif name == "certified":
            types.append((name, pa.bool_()))
        elif name == "status":
            types.append((name, pa.string()))
        else:
            types.append((name, pa.float64()))
    return pa.schema(types)


def _finite_or_none(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def summarize(table: pa.Table) -> dict[str, Any]:
    """JSON summary of a study table.

    ``deltas_decreasing`` tells whether the successive differences of the
    main quantity (min_J or the first metric pairing) strictly decrease.
    """
    metadata = get_metadata(table)
    rows = [{k: _finite_or_none(v) for k, v in row.items()} for row in table.to_pylist()]
    delta_column = "delta" if "delta" in table.column_names else next(
        (name for name in table.column_names if name.startswith("pairing_delta_")), None
    )
    deltas = (
        [d for d in table[delta_column].to_pylist() if d is not None and math.isfinite(d)]
        if delta_column
        else []
    )
    return {
        **metadata,
        "n_rows": table.num_rows,
        "all_certified": all(table["certified"].to_pylist()),
        "deltas_decreasing": all(b < a for a, b in zip(deltas, deltas[1:], strict=False)),
        "rows": rows,
    }


def write_outputs(
    table: pa.Table, csv_path: str | Path | None = None, json_path: str | Path | None = None
) -> None:
    """Write a study table as CSV (polars) and its summary as sorted JSON."""
    if csv_path is not None:
        import polars as pl  # noqa: PLC0415

        Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
        pl.from_arrow(table).write_csv(csv_path)  # type: ignore[union-attr]
        logger.info("Wrote study table to %s", csv_path)
    if json_path is not None:
        Path(json_path).parent.mkdir(parents=True, exist_ok=True)
        with Path(json_path).open("w", encoding="utf-8") as f:
            json.dump(summarize(table), f, indent=2, sort_keys=True)
            f.write("\n")
        logger.info("Wrote study summary to %s", json_path)


STUDIES: dict[str, Callable[[ExperimentConfig], pa.Table]] = {
    "gamma": run_gamma_study,
    "measure": run_measure_study,
}
