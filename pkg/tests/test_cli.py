"""Tests for the command-line interface."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any
from unittest.mock import MagicMock, patch

import pytest

from pywardrop.api.cli import main
from pywardrop.api.loaders import write_json, write_marginals, write_model, write_plan
from pywardrop.core.assignment import TransportPlan
from pywardrop.core.congestion import CongestionModel
from pywardrop.core.longterm import MarginalPair


@pytest.fixture
def workspace(tmp_path: Path, quadratic_model: CongestionModel) -> Path:
    """Folder with a 3x3 network, a model and a corner plan."""
    main(["netgen", "--family", "cartesian", "--epsilon", "0.5", "--out", str(tmp_path / "net.json")])
    write_model(quadratic_model, tmp_path / "model.json")
    write_plan(TransportPlan.single(0, 8, 1.0), tmp_path / "plan.csv")
    return tmp_path


def _printed_json(mock_print: MagicMock) -> Any:
    return json.loads(mock_print.call_args[0][0])


class TestNetgen:
    """Test network generation."""

    @patch("builtins.print")
    def test_stdout(self, mock_print: MagicMock) -> None:
        """Without --out the dump is printed, domain included."""
        main(["netgen", "--family", "triangular", "--epsilon", "0.5"])
        data = _printed_json(mock_print)
        assert data["directions"]["family_tag"] == "triangular"
        assert data["domain"]["kind"] == "box"

    def test_file(self, workspace: Path) -> None:
        """--out writes a readable dump."""
        data = json.loads((workspace / "net.json").read_text(encoding="utf-8"))
        assert len(data["nodes"]) == 9
        assert len(data["arcs"]) == 24

    def test_unknown_family(self) -> None:
        """argparse rejects families it does not know."""
        with pytest.raises(SystemExit):
            main(["netgen", "--family", "custom", "--epsilon", "0.5"])


class TestSolveCommands:
    """Test solve, dualcheck and validate."""

    def test_solve_and_dualcheck(self, workspace: Path) -> None:
        """The flow written by solve closes the duality gap."""
        net, model, plan = (str(workspace / name) for name in ("net.json", "model.json", "plan.csv"))
        main(["solve", "--net", net, "--model", model, "--plan", plan, "--tol", "1e-9",
              "--out", str(workspace / "flow.json"), "--summary", str(workspace / "summary.json")])
        summary = json.loads((workspace / "summary.json").read_text(encoding="utf-8"))
        assert summary["certificate"]["passed"]
        assert summary["relative_gap"] <= 1e-9

        main(["dualcheck", "--net", net, "--model", model, "--plan", plan,
              "--flow", str(workspace / "flow.json"), "--out", str(workspace / "dual.json")])
        report = json.loads((workspace / "dual.json").read_text(encoding="utf-8"))
        assert abs(report["gap_rel"]) <= 1e-6

    @patch("builtins.print")
    def test_validate(self, mock_print: MagicMock, workspace: Path) -> None:
        """The structural audit passes on generated lattices."""
        main(["validate", "--net", str(workspace / "net.json")])
        report = _printed_json(mock_print)
        assert report["passed"]
        assert report["direction_error"] == pytest.approx(2.0)

    @patch("builtins.print")
    def test_solve_lt(self, mock_print: MagicMock, workspace: Path) -> None:
        """solve-lt reports the transport certificate and writes the plan."""
        write_marginals(MarginalPair(f_minus={0: 1.0, 2: 1.0}, f_plus={6: 1.0, 8: 1.0}), workspace / "marginals.csv")
        main(["solve-lt", "--net", str(workspace / "net.json"), "--model", str(workspace / "model.json"),
              "--marginals", str(workspace / "marginals.csv"), "--tol", "1e-8",
              "--plan-out", str(workspace / "coupling.csv")])
        summary = _printed_json(mock_print)
        assert summary["n_od"] == 2
        assert summary["ot_excess"] <= 1e-6
        assert (workspace / "coupling.csv").is_file()


class TestContinuumCommands:
    """Test climit and study."""

    @patch("builtins.print")
    def test_climit(self, mock_print: MagicMock, tmp_path: Path, quadratic_model: CongestionModel) -> None:
        """xi = delta leaves only the path cost term."""
        write_model(quadratic_model, tmp_path / "model.json")
        write_json({"const": 1.0}, tmp_path / "xi.json")
        write_json({"atoms": [{"x": [0, 0], "y": [1, 1], "mass": 1.0}]}, tmp_path / "gamma.json")
        main(["climit", "--family", "cartesian", "--model", str(tmp_path / "model.json"),
              "--xi", str(tmp_path / "xi.json"), "--gamma", str(tmp_path / "gamma.json"),
              "--h", "0.125", "--quadrature-step", "0.125"])
        result = _printed_json(mock_print)
        assert result["I0"] == 0.0
        assert result["J"] == pytest.approx(-2.0)

    def test_study(self, tmp_path: Path, experiment_dict: dict[str, Any]) -> None:
        """Studies write the outputs named in their configuration."""
        write_json({**experiment_dict, "outputs": {"csv": "gamma.csv", "json": "gamma.json"}}, tmp_path / "exp.json")
        with patch("builtins.print") as mock_print:
            main(["study", "--config", str(tmp_path / "exp.json")])
        assert (tmp_path / "gamma.csv").is_file()
        summary = json.loads((tmp_path / "gamma.json").read_text(encoding="utf-8"))
        assert summary["study"] == "gamma"
        assert any("Summary written to" in call[0][0] for call in mock_print.call_args_list)


class TestErrors:
    """Test error reporting."""

    def test_missing_file(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Package errors print one line and exit with status 1."""
        with pytest.raises(SystemExit) as exc_info:
            main(["validate", "--net", str(tmp_path / "absent.json")])
        assert exc_info.value.code == 1
        assert capsys.readouterr().err.startswith("Error: Network file not found")

    def test_unexpected_error(self, workspace: Path, capsys: pytest.CaptureFixture[str]) -> None:
        """Other exceptions are reported as unexpected."""
        with patch("pywardrop.api.cli.read_network", side_effect=RuntimeError("boom")):
            with pytest.raises(SystemExit):
                main(["validate", "--net", str(workspace / "net.json")])
        assert "Unexpected error: boom" in capsys.readouterr().err
