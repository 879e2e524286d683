"""XY4 idle scans on two coupled qubits: damped-oscillation fits for the Gaussian and a CRGS library."""

import argparse

from crgs.experiments import xy4_scan
from crgs.experiments.xy4 import aggregate_zz_rate
from crgs.gateset import PulseLibrary, gaussian_library
from crgs.pulsesim import Simulator, default_device


def report(name, lib, zeta, reps, shots, seed):
    sim = Simulator(default_device(2, [(0, 1)], zz_ghz=zeta), lib)
    scan = xy4_scan(sim, reps, shots=shots, seed=seed)
    free, pinned = scan.fit(), scan.fit(fix_J_zero=True)
    rate = aggregate_zz_rate(lib, [sim.color_of(0), sim.color_of(1)], zeta)
    print(f"{name:9s} aggregate {rate:8.4f}  J {free.J:8.4f} +- {free.J_err:.4f}  gamma {free.gamma:.4f}  "
          f"residual ratio (J=0 / free) {pinned.residual / free.residual:.3f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("library", help="CRGS library JSON")
    ap.add_argument("--zeta", type=float, default=2e-4, help="ZZ strength in GHz")
    ap.add_argument("--max-reps", type=int, default=60)
    ap.add_argument("--shots", type=int, default=2048)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    reps = range(args.max_reps + 1)
    print("rates in rad/us")
    report("gaussian", gaussian_library(), args.zeta, reps, args.shots, args.seed)
    report("crgs", PulseLibrary.load(args.library), args.zeta, reps, args.shots, args.seed)


if __name__ == "__main__":
    main()
