"""The ``pywardrop`` command-line interface."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from collections.abc import Sequence
from typing import Any

from pywardrop.api.loaders import (
    read_experiment,
    read_flow,
    read_gamma,
    read_marginals,
    read_model,
    read_network,
    read_plan,
    read_xi_field,
    write_flow,
    write_json,
    write_network,
    write_plan,
)
from pywardrop.constants import FamilyTag
from pywardrop.core.assignment import solve_beckmann, wardrop_certify
from pywardrop.core.continuum import TEST_FUNCTIONS, J_limit
from pywardrop.core.dual import duality_gap
from pywardrop.core.longterm import ot_certificate, solve_longterm
from pywardrop.core.network import (
    DirectionFamily,
    Domain,
    Network,
    build_network,
    validate_hypotheses,
)
from pywardrop.exceptions import WardropError
from pywardrop.studies.harness import STUDIES, summarize, write_outputs

STUDY_EPILOG = """\
Continuous plans are sampled on the nodes of each network: every (x, y)
node pair receives density * cell_volume**2 * eps**(1 - d/2), so that
eps**(d/2 - 1) * gamma_eps keeps the mass of the continuous plan.
Point sources snap to the nearest node; Gaussian sources are truncated at
three standard deviations and renormalised.
"""


def _emit(data: Any, output: str | None) -> None:
    """Write JSON to ``output`` or print it, keys sorted."""
    if output:
        write_json(data, output)
        print(f"Data written to {output}")
    else:
        print(json.dumps(data, indent=2, sort_keys=True))


def _netgen(args: argparse.Namespace) -> None:
    domain = Domain.from_spec(args.domain)
    network = build_network(args.family, domain, args.epsilon)
    if args.out:
        write_network(network, args.out)
        print(f"Network written to {args.out} ({network.n_nodes} nodes, {network.n_arcs} arcs)")
    else:
        data = dict(network.to_dict())
        data["domain"] = domain.to_spec()
        print(json.dumps(data, sort_keys=True))


def _validate(args: argparse.Namespace) -> None:
    network = read_network(args.net)
    if args.domain:
        network = _with_domain(network, Domain.from_spec(args.domain))
    report = validate_hypotheses(network, TEST_FUNCTIONS[args.phi])
    _emit(report.to_dict(), args.out)


def _with_domain(network: Network, domain: Domain) -> Network:
    return dataclasses.replace(network, domain=domain)


def _solve(args: argparse.Namespace) -> None:
    network = read_network(args.net)
    model = read_model(args.model, network.family.size)
    plan = read_plan(args.plan)
    flow = solve_beckmann(network, model, plan, {"rel_gap_tol": args.tol, "max_iters": args.max_iters})
    cert = wardrop_certify(network, model, flow, plan)
    if args.out:
        write_flow(flow, network, args.out)
    info = flow.info
    _emit(
        {
            "iterations": info.iterations if info else 0,
            "relative_gap": info.relative_gap if info else 0.0,
            "objective": info.objective if info else 0.0,
            "n_paths": flow.n_paths,
            "certificate": cert.to_dict(),
        },
        args.summary,
    )


def _dualcheck(args: argparse.Namespace) -> None:
    network = read_network(args.net)
    model = read_model(args.model, network.family.size)
    plan = read_plan(args.plan)
    flow = read_flow(args.flow, network)
    _emit(duality_gap(network, model, plan, flow).to_dict(), args.out)


def _climit(args: argparse.Namespace) -> None:
    family = DirectionFamily.for_tag(args.family)
    domain = Domain.from_spec(args.domain)
    model = read_model(args.model, family.size)
    xi = read_xi_field(args.xi, family.size)
    gamma = read_gamma(args.gamma)
    J, I0, I1 = J_limit(
        family, model, xi, gamma, args.h, domain, config={"quadrature_step": args.quadrature_step}
    )
    _emit({"I0": I0, "I1": I1, "J": J}, args.out)


def _solve_lt(args: argparse.Namespace) -> None:
    network = read_network(args.net)
    model = read_model(args.model, network.family.size)
    marginals = read_marginals(args.marginals)
    solution = solve_longterm(
        network, model, marginals, {"rel_gap_tol": args.tol, "max_iters": args.max_iters}
    )
    if args.out:
        write_flow(solution.flow, network, args.out)
    if args.plan_out:
        write_plan(solution.plan, args.plan_out)
    info = solution.flow.info
    _emit(
        {
            "iterations": info.iterations if info else 0,
            "relative_gap": info.relative_gap if info else 0.0,
            "objective": info.objective if info else 0.0,
            "n_od": len(solution.plan),
            "ot_excess": ot_certificate(network, model, solution) if len(solution.plan) else 0.0,
        },
        args.summary,
    )


def _study(args: argparse.Namespace) -> None:
    config = read_experiment(args.config)
    table = STUDIES[args.kind](config)
    csv_path = args.csv or config.output_csv
    json_path = args.json or config.output_json
    write_outputs(table, csv_path, json_path)
    if csv_path:
        print(f"Table written to {csv_path}")
    if json_path:
        print(f"Summary written to {json_path}")
    else:
        print(json.dumps(summarize(table), indent=2, sort_keys=True))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pywardrop", description="Wardrop equilibria on epsilon-scaled congested networks"
    )
    parser.add_argument(
        "--verbose", "-v", action="count", default=0, help="Log progress (-vv for solver iterations)"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    netgen = commands.add_parser("netgen", help="Generate a lattice network")
    netgen.add_argument(
        "--family",
        required=True,
        choices=[tag.value for tag in FamilyTag if tag is not FamilyTag.CUSTOM],
    )
    netgen.add_argument("--epsilon", type=float, required=True, help="Lattice spacing")
    netgen.add_argument(
        "--domain", default="box:0,0,1,1", help="box:lo..,hi.. | disk:c..,r | blob:cx,cy[,scale]"
    )
    netgen.add_argument("--out", help="Output network file (default: print to stdout)")
    netgen.set_defaults(handler=_netgen)

    validate = commands.add_parser("validate", help="Audit the structural hypotheses of a network")
    validate.add_argument("--net", required=True)
    validate.add_argument("--domain", help="Domain override for the direction-measure check")
    validate.add_argument("--phi", default="one", choices=sorted(TEST_FUNCTIONS))
    validate.add_argument("--out", help="Output report file")
    validate.set_defaults(handler=_validate)

    solve = commands.add_parser("solve", help="Solve for the Wardrop equilibrium of a plan")
    solve.add_argument("--net", required=True)
    solve.add_argument("--model", required=True)
    solve.add_argument("--plan", required=True, help="CSV with columns x_id,y_id,mass")
    solve.add_argument("--tol", type=float, default=1e-6, help="Relative gap tolerance")
    solve.add_argument("--max-iters", type=int, default=5000)
    solve.add_argument("--out", help="Output flow file")
    solve.add_argument("--summary", help="Output summary file (default: print to stdout)")
    solve.set_defaults(handler=_solve)

    dualcheck = commands.add_parser("dualcheck", help="Duality gap of a flow")
    dualcheck.add_argument("--net", required=True)
    dualcheck.add_argument("--model", required=True)
    dualcheck.add_argument("--plan", required=True)
    dualcheck.add_argument("--flow", required=True)
    dualcheck.add_argument("--out", help="Output report file")
    dualcheck.set_defaults(handler=_dualcheck)

    climit = commands.add_parser("climit", help="Evaluate the limit dual functional")
    climit.add_argument(
        "--family", required=True, choices=[tag.value for tag in FamilyTag if tag is not FamilyTag.CUSTOM]
    )
    climit.add_argument("--domain", default="box:0,0,1,1")
    climit.add_argument("--model", required=True)
    climit.add_argument("--xi", required=True)
    climit.add_argument("--gamma", required=True)
    climit.add_argument("--h", type=float, required=True, help="Auxiliary graph spacing")
    climit.add_argument("--quadrature-step", type=float, default=1.0 / 64.0)
    climit.add_argument("--out", help="Output report file")
    climit.set_defaults(handler=_climit)

    solve_lt = commands.add_parser("solve-lt", help="Solve the long-term problem between marginals")
    solve_lt.add_argument("--net", required=True)
    solve_lt.add_argument("--model", required=True)
    solve_lt.add_argument("--marginals", required=True, help="CSV with columns node_id,mass,side")
    solve_lt.add_argument("--tol", type=float, default=1e-6)
    solve_lt.add_argument("--max-iters", type=int, default=5000)
    solve_lt.add_argument("--out", help="Output flow file")
    solve_lt.add_argument("--plan-out", help="Output plan CSV")
    solve_lt.add_argument("--summary", help="Output summary file (default: print to stdout)")
    solve_lt.set_defaults(handler=_solve_lt)

    study = commands.add_parser(
        "study",
        help="Run an epsilon-refinement study",
        epilog=STUDY_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    study.add_argument("--config", required=True)
    study.add_argument("--kind", default="gamma", choices=sorted(STUDIES))
    study.add_argument("--csv", help="Output table (overrides the configuration)")
    study.add_argument("--json", help="Output summary (overrides the configuration)")
    study.set_defaults(handler=_study)

    return parser


def main(argv: Sequence[str] | None = None) -> None:
    """Command-line entry point.

    Usage:
        pywardrop [-v] <command> [options]
    """
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.verbose:
        logging.basicConfig(
            level=logging.DEBUG if args.verbose > 1 else logging.INFO,
            format="%(asctime)s %(name)s %(levelname)s: %(message)s",
        )

    try:
        args.handler(args)
    except WardropError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)
    except Exception as e:
        print(f"Unexpected error: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
