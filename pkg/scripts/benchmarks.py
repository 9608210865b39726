#!/usr/bin/env python3
"""
Performance benchmarks for PyWardrop.

This script times the equilibrium solvers on refining cartesian grids to
catch major regressions.
"""

import argparse
import sys
import time
from pathlib import Path

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

try:
    from pywardrop import CongestionModel, Domain, TransportPlan, build_network, solve_beckmann
    from pywardrop.core.longterm import MarginalPair, solve_longterm
except ImportError:
    print("Warning: pywardrop not installed or not in path")
    print("Skipping performance benchmarks")
    sys.exit(0)


def benchmark_solve(epsilon: float, longterm: bool, runs: int = 3) -> float:
    """Average wall time of one corner-to-corner solve at scale epsilon."""
    network = build_network("cartesian", Domain.box([0, 0], [1, 1]), epsilon)
    model = CongestionModel.power_law(2.0, 1.0, 1.0, network.family.size)
    sink = network.n_nodes - 1
    times = []

    for _ in range(runs):
        start_time = time.perf_counter()
        try:
            if longterm:
                solve_longterm(network, model, MarginalPair.dirac(0, sink), {"rel_gap_tol": 1e-6})
            else:
                solve_beckmann(network, model, TransportPlan.single(0, sink, 1.0), {"rel_gap_tol": 1e-6})
            end_time = time.perf_counter()
            times.append(end_time - start_time)
        except Exception as e:
            print(f"Error solving at epsilon={epsilon}: {e}")
            return float("inf")

    return sum(times) / len(times)


def main():
    """Run performance benchmarks."""
    parser = argparse.ArgumentParser(description="Run PyWardrop performance benchmarks")
    parser.add_argument("--runs", type=int, default=3, help="Number of runs per test")
    parser.add_argument("--levels", type=int, default=3, help="Number of halvings of epsilon")
    args = parser.parse_args()

    print(f"Running PyWardrop performance benchmarks ({args.runs} runs each)")
    print("=" * 60)

    total_time = 0.0
    for longterm in (False, True):
        label = "solve_longterm" if longterm else "solve_beckmann"
        for level in range(args.levels):
            epsilon = 0.25 / 2**level
            avg_time = benchmark_solve(epsilon, longterm, args.runs)
            print(f"{label} at epsilon={epsilon}")
            if avg_time != float("inf"):
                print(f"  Average solve time: {avg_time:.4f} seconds")
                total_time += avg_time
            else:
                print("  Status: FAILED")

    print(f"\nTotal time: {total_time:.4f} seconds")
    print("\nPerformance benchmark completed successfully")


if __name__ == "__main__":
    main()
