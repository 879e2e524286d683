"""Amplitude by curvature sweep of the two-color CRGS problem, with the Gaussian baseline for scale."""

import argparse
import time

from crgs.gateset import GateSetSpec, build_graph, gaussian_library_trajectories, pareto_sweep, summed_susceptibility
from crgs.solver import SolverConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--amplitudes", type=float, nargs="+", default=[0.05, 0.1, 0.2])
    ap.add_argument("--curvatures", type=float, nargs="+", default=[1e-4, 2e-4, 4e-4])
    ap.add_argument("--knots", type=int, default=50)
    ap.add_argument("--regularization", type=float, default=1e-3)
    ap.add_argument("--substeps", type=int, default=0)
    args = ap.parse_args()
    spec = GateSetSpec()
    graph = build_graph(spec, ["red", "blue"])
    gauss = summed_susceptibility(graph, gaussian_library_trajectories(spec, graph, args.knots))
    print(f"gaussian summed susceptibility {gauss:.4f}")
    t0 = time.perf_counter()

    def show(c):
        print(f"{time.perf_counter() - t0:6.0f}s  a={c.amplitude:<5g} c={c.curvature:<7g} objective={c.objective:.3e} "
              f"summed={c.summed_susceptibility:.3e} F_min={c.min_fidelity:.6f} {c.message}", flush=True)

    pareto_sweep(spec, graph, args.amplitudes, args.curvatures, 0.9999, SolverConfig(regularization=args.regularization),
                 args.knots, args.regularization, callback=show, substeps=args.substeps)


if __name__ == "__main__":
    main()
