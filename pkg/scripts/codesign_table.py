"""One-repetition TFIM fidelity for Gaussian and CRGS gate sets across coupling scales."""

import argparse

from crgs.experiments import TfimConfig, codesign_sweep
from crgs.gateset import PulseLibrary, gaussian_library
from crgs.pulsesim import default_device


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("crgs", help="CRGS library JSON")
    ap.add_argument("detuning", help="detuning-robust library JSON (its c0:sx drives the robust echo)")
    ap.add_argument("--zeta", type=float, default=None, help="pin ZZ in GHz; default derives it from the coupling")
    ap.add_argument("--factors", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    args = ap.parse_args()
    cfg = TfimConfig(4, repetitions=1)
    model = default_device(4, cfg.edges, zz_ghz=args.zeta)
    env = PulseLibrary.load(args.detuning).get("c0", "sx").samples(0)
    libs = {"gaussian": gaussian_library(), "crgs": PulseLibrary.load(args.crgs)}
    rows = codesign_sweep(model, libs, args.factors, cfg, env)
    print(f"{'factor':>6} {'gate set':>9} {'ecr':>7} {'fidelity':>9} {'limit':>7}")
    for r in rows:
        print(f"{r.factor:6.2f} {r.gate_set:>9} {r.ecr:>7} {r.fidelity:9.4f} {r.decoherence_limit:7.4f}")


if __name__ == "__main__":
    main()
