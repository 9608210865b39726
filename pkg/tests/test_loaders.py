"""Tests for the interchange-format readers and writers."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from pywardrop.api.loaders import (
    read_experiment,
    read_flow,
    read_gamma,
    read_marginals,
    read_measure,
    read_model,
    read_network,
    read_plan,
    read_xi_field,
    write_flow,
    write_json,
    write_marginals,
    write_measure,
    write_model,
    write_network,
    write_plan,
)
from pywardrop.core.assignment import TransportPlan, all_or_nothing
from pywardrop.core.congestion import CongestionModel
from pywardrop.core.gencurves import build_Q_eps
from pywardrop.core.longterm import MarginalPair
from pywardrop.core.network import Network
from pywardrop.exceptions import (
    UnsupportedFormatError,
    WardropError,
    WardropFileError,
    WardropValidationError,
)


class TestNetworkFiles:
    """Test network dumps."""

    def test_round_trip_keeps_domain(self, grid3: Network, tmp_path: Path) -> None:
        """Arcs, classes and the domain survive a write/read cycle."""
        path = tmp_path / "net.json"
        write_network(grid3, path)
        again = read_network(path)
        np.testing.assert_array_equal(again.tails, grid3.tails)
        np.testing.assert_array_equal(again.classes, grid3.classes)
        np.testing.assert_allclose(again.nodes, grid3.nodes)
        assert again.domain is not None
        assert again.domain.kind == "box"

    def test_unsupported_extension(self, tmp_path: Path) -> None:
        """Only JSON networks are accepted."""
        path = tmp_path / "net.yaml"
        path.write_text("{}", encoding="utf-8")
        with pytest.raises(UnsupportedFormatError) as exc_info:
            read_network(path)
        assert exc_info.value.supported_formats == [".json"]

    def test_missing_file(self, tmp_path: Path) -> None:
        """Missing files name themselves."""
        with pytest.raises(WardropFileError) as exc_info:
            read_network(tmp_path / "absent.json")
        assert exc_info.value.file_path == str(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path: Path) -> None:
        """Broken JSON is a decode error."""
        path = tmp_path / "net.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(WardropFileError, match="Invalid JSON"):
            read_network(path)

    def test_malformed_dump(self, tmp_path: Path) -> None:
        """Structurally wrong dumps raise package errors."""
        path = tmp_path / "net.json"
        write_json({"nodes": [[0, 0]]}, path)
        with pytest.raises(WardropError):
            read_network(path)


class TestPlanFiles:
    """Test plan and marginal CSV files."""

    def test_plan_round_trip(self, tmp_path: Path) -> None:
        """Plans keep their pairs and masses."""
        plan = TransportPlan.from_mapping({(0, 8): 1.5, (2, 6): 0.25})
        path = tmp_path / "plans" / "plan.csv"
        write_plan(plan, path)
        assert read_plan(path).as_mapping() == plan.as_mapping()

    def test_repeated_pairs_are_summed(self, tmp_path: Path) -> None:
        """Duplicate rows accumulate."""
        path = tmp_path / "plan.csv"
        path.write_text("x_id,y_id,mass\n0,8,1.0\n0,8,0.5\n", encoding="utf-8")
        assert read_plan(path).as_mapping() == {(0, 8): 1.5}

    def test_missing_columns(self, tmp_path: Path) -> None:
        """All three columns are required."""
        path = tmp_path / "plan.csv"
        path.write_text("x_id,mass\n0,1.0\n", encoding="utf-8")
        with pytest.raises(WardropValidationError, match="y_id"):
            read_plan(path)

    def test_byte_order_mark(self, tmp_path: Path) -> None:
        """A UTF-8 byte order mark does not leak into the header."""
        path = tmp_path / "plan.csv"
        path.write_bytes("x_id,y_id,mass\n0,8,1.0\n".encode("utf-8-sig"))
        assert read_plan(path).total == pytest.approx(1.0)

    def test_marginals_round_trip(self, tmp_path: Path) -> None:
        """Both sides come back."""
        marginals = MarginalPair(f_minus={0: 1.0, 2: 1.0}, f_plus={8: 2.0})
        path = tmp_path / "marginals.csv"
        write_marginals(marginals, path)
        again = read_marginals(path)
        assert again.f_minus == marginals.f_minus
        assert again.f_plus == marginals.f_plus

    def test_marginals_bad_side(self, tmp_path: Path) -> None:
        """Sides are minus or plus."""
        path = tmp_path / "marginals.csv"
        path.write_text("node_id,mass,side\n0,1.0,source\n", encoding="utf-8")
        with pytest.raises(WardropValidationError):
            read_marginals(path)

    def test_marginals_unbalanced(self, tmp_path: Path) -> None:
        """Balance is checked on read."""
        path = tmp_path / "marginals.csv"
        path.write_text("node_id,mass,side\n0,1.0,minus\n8,2.0,plus\n", encoding="utf-8")
        with pytest.raises(WardropValidationError):
            read_marginals(path)


class TestModelAndFlowFiles:
    """Test congestion models, flows and measures."""

    def test_model_round_trip(self, quadratic_model: CongestionModel, tmp_path: Path) -> None:
        """Models keep exponent and class constants."""
        path = tmp_path / "model.json"
        write_model(quadratic_model, path)
        again = read_model(path, 4)
        assert again.q == quadratic_model.q
        assert again.delta == quadratic_model.delta

    def test_single_class_broadcast(self, tmp_path: Path) -> None:
        """One class entry covers the family."""
        path = tmp_path / "model.json"
        write_json({"q": 3.0, "classes": [{"a_const": 2.0, "delta": 0.5}]}, path)
        assert read_model(path, 6).n_classes == 6

    def test_flow_round_trip(self, grid3: Network, corner_plan: TransportPlan, tmp_path: Path) -> None:
        """Flows keep path flows and arc masses."""
        flow = all_or_nothing(grid3, corner_plan, np.ones(grid3.n_arcs))
        path = tmp_path / "flow.json"
        write_flow(flow, grid3, path)
        again = read_flow(path, grid3)
        np.testing.assert_allclose(again.arc_masses, flow.arc_masses)
        assert again.od_flows == flow.od_flows

    def test_measure_round_trip(self, grid3: Network, corner_plan: TransportPlan, tmp_path: Path) -> None:
        """Measures keep their atoms."""
        measure = build_Q_eps(grid3, all_or_nothing(grid3, corner_plan, np.ones(grid3.n_arcs)))
        path = tmp_path / "measure.json"
        write_measure(measure, path)
        again = read_measure(path, grid3)
        assert len(again) == len(measure)
        assert again.total_weight == pytest.approx(measure.total_weight)

    def test_xi_and_gamma(self, tmp_path: Path) -> None:
        """Metric fields and continuous plans read from JSON."""
        xi_path = tmp_path / "xi.json"
        gamma_path = tmp_path / "gamma.json"
        write_json({"const": 2.0}, xi_path)
        write_json({"atoms": [{"x": [0, 0], "y": [1, 1], "mass": 0.5}]}, gamma_path)
        xi = read_xi_field(xi_path, 4)
        assert xi.n_classes == 4
        assert read_gamma(gamma_path).masses.tolist() == [0.5]


class TestExperimentFiles:
    """Test experiment configuration files."""

    def test_relative_outputs(self, experiment_dict: dict, tmp_path: Path) -> None:
        """Relative output paths resolve against the configuration folder."""
        path = tmp_path / "studies" / "exp.json"
        write_json({**experiment_dict, "outputs": {"csv": "out/table.csv", "json": "/abs/summary.json"}}, path)
        config = read_experiment(path)
        assert config.output_csv == str(tmp_path / "studies" / "out" / "table.csv")
        assert config.output_json == "/abs/summary.json"

    def test_written_json_is_sorted(self, tmp_path: Path) -> None:
        """write_json sorts keys and creates folders."""
        path = tmp_path / "a" / "b.json"
        write_json({"b": 1, "a": 2}, path)
        text = path.read_text(encoding="utf-8")
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text) == {"a": 2, "b": 1}
