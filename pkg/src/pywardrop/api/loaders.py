"""Readers and writers for the pywardrop interchange formats.

JSON files hold networks, congestion models, flows, path measures, metric
fields, continuous transport plans and experiment configurations. Transport
plans and marginals are CSV tables read with polars; text encodings are
detected with chardet.
"""

from __future__ import annotations

import dataclasses
import json
from collections.abc import Callable
from pathlib import Path
from typing import Any, TypeVar

import polars as pl

from pywardrop.core.assignment import FlowState, TransportPlan
from pywardrop.core.congestion import CongestionModel
from pywardrop.core.continuum import GammaMeasure, XiField
from pywardrop.core.gencurves import GeneralizedCurveMeasure
from pywardrop.core.longterm import MarginalPair
from pywardrop.core.network import Domain, Network
from pywardrop.exceptions import (
    UnsupportedFormatError,
    WardropError,
    WardropFileError,
    WardropValidationError,
)
from pywardrop.studies.harness import ExperimentConfig
from pywardrop.utils import read_text

T = TypeVar("T")

PLAN_COLUMNS = ("x_id", "y_id", "mass")
MARGINAL_COLUMNS = ("node_id", "mass", "side")
MARGINAL_SIDES = ("minus", "plus")


def _read(file_path: str | Path, what: str, suffixes: tuple[str, ...], build: Callable[[Path], T]) -> T:
    """Open ``file_path`` and build an object from it.

    Package errors propagate unchanged; anything else is wrapped in a
    :class:`WardropError` naming the file.
    """
    path = Path(file_path)
    if path.suffix.lower() not in suffixes:
        msg = f"Unsupported {what} file extension"
        raise UnsupportedFormatError(
            msg, str(path), detected_format=path.suffix or None, supported_formats=list(suffixes)
        )
    if not path.is_file():
        msg = f"{what.capitalize()} file not found"
        raise WardropFileError(msg, str(path), operation="read")
    try:
        return build(path)
    except WardropError:
        raise
    except Exception as e:
        msg = f"Unexpected error reading {what} file: {e}"
        raise WardropError(msg, str(path)) from e


def _load_json(path: Path) -> Any:
    try:
        return json.loads(read_text(path))
    except json.JSONDecodeError as e:
        msg = f"Invalid JSON: {e.msg} at line {e.lineno}"
        raise WardropFileError(msg, str(path), operation="decode") from e


def _load_csv(path: Path, columns: tuple[str, ...]) -> pl.DataFrame:
    text = read_text(path)
    frame = pl.read_csv(text.encode("utf-8"))
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        msg = f"Missing CSV columns: {', '.join(missing)}"
        raise WardropValidationError(msg, str(path), field_name="columns")
    return frame


def write_json(data: Any, file_path: str | Path) -> None:
    """Write ``data`` as indented JSON with sorted keys.

    Raises:
        WardropFileError: If the file cannot be written
    """
    path = Path(file_path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        msg = f"Cannot write file: {e}"
        raise WardropFileError(msg, str(path), operation="write") from e


def read_network(file_path: str | Path) -> Network:
    """Read a network dump, with its domain when the dump records one."""

    def build(path: Path) -> Network:
        data = _load_json(path)
        network = Network.from_dict(data)
        if "domain" in data:
            network = dataclasses.replace(network, domain=Domain.from_spec(data["domain"]))
        return network

    return _read(file_path, "network", (".json",), build)


def write_network(network: Network, file_path: str | Path) -> None:
    """Write a network dump."""
    data: dict[str, Any] = dict(network.to_dict())
    if network.domain is not None:
        data["domain"] = network.domain.to_spec()
    write_json(data, file_path)


def read_model(file_path: str | Path, n_classes: int | None = None) -> CongestionModel:
    """Read a congestion model block ``{q, classes: [...]}``."""
    return _read(
        file_path,
        "model",
        (".json",),
        lambda path: CongestionModel.from_config(_load_json(path), n_classes),
    )


def write_model(model: CongestionModel, file_path: str | Path) -> None:
    """Write a congestion model block."""
    write_json(model.to_config(), file_path)


def read_plan(file_path: str | Path) -> TransportPlan:
    """Read a discrete plan from CSV rows ``x_id,y_id,mass``.

    Repeated pairs are summed.
    """

    def build(path: Path) -> TransportPlan:
        frame = _load_csv(path, PLAN_COLUMNS)
        entries: dict[tuple[int, int], float] = {}
        for x, y, mass in frame.select(PLAN_COLUMNS).iter_rows():
            entries[(int(x), int(y))] = entries.get((int(x), int(y)), 0.0) + float(mass)
        return TransportPlan.from_mapping(entries)

    return _read(file_path, "plan", (".csv",), build)


def write_plan(plan: TransportPlan, file_path: str | Path) -> None:
    """Write a discrete plan as CSV."""
    frame = pl.DataFrame(
        {
            "x_id": plan.sources.tolist(),
            "y_id": plan.sinks.tolist(),
            "mass": plan.masses.tolist(),
        },
        schema={"x_id": pl.Int64, "y_id": pl.Int64, "mass": pl.Float64},
    )
    Path(file_path).parent.mkdir(parents=True, exist_ok=True)
    frame.write_csv(file_path)


def read_marginals(file_path: str | Path) -> MarginalPair:
    """Read marginals from CSV rows ``node_id,mass,side`` with side minus or plus."""

    def build(path: Path) -> MarginalPair:
        frame = _load_csv(path, MARGINAL_COLUMNS)
        sides: dict[str, dict[int, float]] = {side: {} for side in MARGINAL_SIDES}
        for node, mass, side in frame.select(MARGINAL_COLUMNS).iter_rows():
            key = str(side).strip().lower()
            if key not in sides:
                msg = "Marginal side must be 'minus' or 'plus'"
                raise WardropValidationError(msg, str(path), field_name="side", invalid_value=str(side))
            sides[key][int(node)] = sides[key].get(int(node), 0.0) + float(mass)
        return MarginalPair(f_minus=sides["minus"], f_plus=sides["plus"])

    return _read(file_path, "marginals", (".csv",), build)


def write_marginals(marginals: MarginalPair, file_path: str | Path) -> None:
    """Write marginals as CSV, supply rows first."""
    rows = [(node, mass, "minus") for node, mass in marginals.f_minus.items()]
    rows += [(node, mass, "plus") for node, mass in marginals.f_plus.items()]
    frame = pl.DataFrame(
        rows,
        schema={"node_id": pl.Int64, "mass": pl.Float64, "side": pl.String},
        orient="row",
    )
    Path(file_path).parent.mkdir(parents=True, exist_ok=True)
    frame.write_csv(file_path)


def read_flow(file_path: str | Path, network: Network) -> FlowState:
    """Read a flow dump for ``network``."""
    return _read(file_path, "flow", (".json",), lambda path: FlowState.from_dict(_load_json(path), network))


def write_flow(flow: FlowState, network: Network, file_path: str | Path) -> None:
    """Write a flow dump."""
    write_json(flow.to_dict(network), file_path)


def read_measure(file_path: str | Path, network: Network) -> GeneralizedCurveMeasure:
    """Read a path measure dump for ``network``."""
    return _read(
        file_path,
        "measure",
        (".json",),
        lambda path: GeneralizedCurveMeasure.from_dict(_load_json(path), network),
    )


def write_measure(measure: GeneralizedCurveMeasure, file_path: str | Path) -> None:
    """Write a path measure dump."""
    write_json(measure.to_dict(), file_path)


def read_xi_field(file_path: str | Path, n_classes: int | None = None) -> XiField:
    """Read a metric field (constant, per-class polynomials or a grid)."""
    return _read(
        file_path, "xi", (".json",), lambda path: XiField.from_config(_load_json(path), n_classes)
    )


def read_gamma(file_path: str | Path) -> GammaMeasure:
    """Read a finitely supported continuous plan ``{atoms: [{x, y, mass}]}``."""
    return _read(file_path, "gamma", (".json",), lambda path: GammaMeasure.from_config(_load_json(path)))


def read_experiment(file_path: str | Path) -> ExperimentConfig:
    """Read an experiment configuration.

    Relative output paths are resolved against the configuration file.
    """

    def build(path: Path) -> ExperimentConfig:
        config = ExperimentConfig.from_dict(_load_json(path))
        outputs = {
            name: str(path.parent / value) if value and not Path(value).is_absolute() else value
            for name, value in (("output_csv", config.output_csv), ("output_json", config.output_json))
        }
        return dataclasses.replace(config, **outputs)

    return _read(file_path, "experiment", (".json",), build)
