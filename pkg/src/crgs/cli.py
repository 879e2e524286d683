"""Batch front-end: ``crgs {optimize,sweep,simulate,benchmark,calibrate} --config run.yaml``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
non-convergence. Every output is a CSV table or a YAML report written under
``--out``; reruns with the same config produce identical files.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from .config import ConfigError, RunConfig, load_config
from .gateset import (
    CrgsBounds,
    GateSetSpec,
    PulseLibrary,
    build_crgs_problem,
    build_graph,
    default_gates,
    detuning_robust_problem,
    export_library,
    gaussian_library,
    gaussian_library_trajectories,
    pareto_sweep,
    solve_crgs,
    square_library,
)
from .layout import color_layout, preset
from .pulsesim.circuit import CircuitParseError, parse_circuit
from .pulsesim.device import DeviceModel, default_device
from .pulsesim.engine import FragmentError, LibraryError, Simulator
from .solver import SolverConfig

log = logging.getLogger("crgs")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
COLOR_NAMES = ("red", "blue", "green", "yellow")
CSV_COLUMNS = ("protocol", "parameter", "value", "std")


class CommandError(RuntimeError):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


# io --------------------------------------------------------------------------


def _plain(x):
    """Convert numpy scalars/arrays (recursively) to YAML-safe builtins."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def write_csv(path: Path, rows: list, columns=None) -> Path:
    columns = list(columns or (rows[0].keys() if rows else CSV_COLUMNS))
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])
    return path


def write_yaml(path: Path, data: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(_plain(data), sort_keys=False))
    return path


# shared builders ----------------------------------------------------------------


def gate_spec(cfg: RunConfig) -> GateSetSpec:
    return GateSetSpec(default_gates(cfg.gate_set.duration_ns))


def color_names(coloring: dict) -> list:
    n = max(coloring.values(), default=0) + 1
    if n > len(COLOR_NAMES):
        raise CommandError(f"layout needs {n} colors; at most {len(COLOR_NAMES)} are supported")
    return list(COLOR_NAMES[:n])


def build_device(cfg: RunConfig) -> DeviceModel:
    layout = preset(cfg.layout)
    if cfg.device.path is not None:
        model = DeviceModel.load(cfg.resolve(cfg.device.path))
        if model.n_qubits != layout.n_qubits:
            raise CommandError(f"device model has {model.n_qubits} qubits but layout {cfg.layout} has {layout.n_qubits}")
        return model
    model = default_device(layout.n_qubits, layout.edges, cfg.device.zz_ghz, cfg.device.detuning_ghz)
    return model.scaled(cfg.device.coupling_scale) if cfg.device.coupling_scale != 1.0 else model


def load_library(cfg: RunConfig, name: str | None = None) -> PulseLibrary:
    name = name or cfg.library
    if name is None:
        raise CommandError("this subcommand needs 'library' (a path, 'gaussian' or 'square')")
    if name == "gaussian":
        return gaussian_library(gate_spec(cfg), color_names(color_layout(preset(cfg.layout))), cfg.gate_set.knots)
    if name == "square":
        return square_library(gate_spec(cfg))
    return PulseLibrary.load(cfg.resolve(name))


def solver_config(cfg: RunConfig) -> SolverConfig:
    g, s = cfg.gate_set, cfg.solver
    return SolverConfig(
        fidelity=g.fidelity, regularization=g.regularization, max_outer=s.max_outer, tolerance=s.tolerance, inner_maxiter=s.inner_maxiter, seed=cfg.seed
    )


# subcommands ----------------------------------------------------------------------


def cmd_optimize(cfg: RunConfig, out: Path) -> int:
    g = cfg.gate_set
    spec = gate_spec(cfg)
    layout = preset(cfg.layout)
    coloring = color_layout(layout)
    bounds = CrgsBounds(g.amplitude_rad_per_ns, g.curvature_rad_per_ns3)
    meta = {"kind": g.mode, "layout": cfg.layout, "coloring": {int(q): int(c) for q, c in coloring.items()}}
    if g.mode == "gaussian":
        graph = build_graph(spec, color_names(coloring), g.edges)
        trajs = gaussian_library_trajectories(spec, graph, g.knots)
        lib = export_library(spec, graph, trajs, meta)
        report = {"mode": "gaussian", "converged": True, "solve": None}
        code = EXIT_OK
    else:
        if g.mode == "crgs":
            graph = build_graph(spec, color_names(coloring), g.edges)
            cp = build_crgs_problem(spec, graph, bounds, g.fidelity, g.regularization, g.knots, substeps=g.substeps)
        elif g.mode == "detuning":
            cp = detuning_robust_problem(spec, bounds, g.detuning_rad_per_ns, fidelity=g.fidelity, regularization=g.regularization, knots=g.knots)
            graph = cp.graph
        else:
            raise CommandError(f"gate_set.mode must be crgs, detuning or gaussian (got {g.mode!r})")
        res = solve_crgs(cp, solver_config(cfg))
        lib = export_library(spec, graph, res.trajectories, meta)
        report = {"mode": g.mode, "converged": res.report.converged, "solve": res.report.to_dict()}
        report["solve"]["fidelities"] = res.fidelities()
        code = EXIT_OK if res.report.converged else EXIT_NUMERIC
    report.update(
        {
            "layout": cfg.layout,
            "seed": cfg.seed,
            "bounds": {"amplitude_rad_per_ns": bounds.amplitude, "curvature_rad_per_ns3": bounds.curvature},
            "entries": sorted(lib.entries),
            "summed_susceptibility": float(sum(r["value"] for r in lib.audit)),
            "edges": lib.audit,
        }
    )
    lib.save(out / "library.json")
    write_yaml(out / "report.yaml", report)
    log.info("library with %d entries written to %s", len(lib.entries), out)
    return code


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    sw = cfg.sweep
    if sw.kind == "bounds":
        if not sw.amplitudes_rad_per_ns or not sw.curvatures_rad_per_ns3:
            raise CommandError("sweep.amplitudes_rad_per_ns and sweep.curvatures_rad_per_ns3 must be nonempty")
        spec = gate_spec(cfg)
        graph = build_graph(spec, color_names(color_layout(preset(cfg.layout))), cfg.gate_set.edges)
        cells = pareto_sweep(
            spec,
            graph,
            [float(a) for a in sw.amplitudes_rad_per_ns],
            [float(c) for c in sw.curvatures_rad_per_ns3],
            cfg.gate_set.fidelity,
            solver_config(cfg),
            cfg.gate_set.knots,
            substeps=cfg.gate_set.substeps,
            workers=cfg.workers,
        )
        write_csv(out / "sweep.csv", [c.row() for c in cells])
        return EXIT_OK
    if sw.kind == "codesign":
        from .experiments.codesign import codesign_sweep
        from .experiments.protocols import TfimConfig

        if not sw.factors:
            raise CommandError("sweep.factors must be nonempty")
        if not sw.libraries:
            raise CommandError("sweep.libraries must name at least one gate set")
        if sw.robust_library is None:
            raise CommandError("sweep.robust_library is required for the robust-ECR rows")
        libraries = {name: load_library(cfg, path) for name, path in sw.libraries.items()}
        color, _, gate = sw.robust_entry.partition(":")
        try:
            envelope = load_library(cfg, sw.robust_library).get(color, gate).samples(0)
        except KeyError as exc:
            raise CommandError(f"robust entry {sw.robust_entry}: {exc}") from None
        model = build_device(cfg)
        b = cfg.benchmark
        tcfg = TfimConfig(model.n_qubits, b.tfim_g_rad, b.tfim_h_rad, b.tfim_dt, 1)
        rows = codesign_sweep(model, libraries, sw.factors, tcfg, envelope, cfg.workers)
        write_csv(out / "codesign.csv", [r.row() for r in rows])
        return EXIT_OK
    raise CommandError(f"sweep.kind must be bounds or codesign (got {sw.kind!r})")


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    if cfg.simulate.circuit is None:
        raise CommandError("simulate.circuit is required")
    model = build_device(cfg)
    try:
        circ = parse_circuit(cfg.resolve(cfg.simulate.circuit).read_text(), model.n_qubits)
    except CircuitParseError as exc:
        raise CommandError(f"{cfg.simulate.circuit}: {exc}") from None
    sim = Simulator(model, load_library(cfg), noise=cfg.simulate.noise)
    res = sim.run(circ, cfg.simulate.mode)
    n = model.n_qubits
    if cfg.simulate.mode == "density":
        probs = np.clip(np.real(np.diag(res.state)), 0.0, None)
    else:
        probs = np.abs(res.state[:, 0]) ** 2
    probs = probs / probs.sum()
    rows = [{"protocol": "simulate", "parameter": format(k, f"0{n}b"), "value": float(p), "std": ""} for k, p in enumerate(probs)]
    write_csv(out / "populations.csv", rows, CSV_COLUMNS)
    ideal = np.abs(circ.unitary()[:, 0]) ** 2
    write_yaml(
        out / "simulate.yaml",
        {"mode": cfg.simulate.mode, "moments": res.log, "ideal_total_variation": float(0.5 * np.abs(ideal - probs).sum())},
    )
    return EXIT_OK


def _repetitions(values) -> list:
    return [int(v) for v in values]


def cmd_benchmark(cfg: RunConfig, out: Path) -> int:
    from .experiments import benchmarks, xy4
    from .experiments.protocols import TfimConfig

    b = cfg.benchmark
    model = build_device(cfg)
    lib = load_library(cfg)
    sim = Simulator(model, lib)
    if b.protocol == "xy4":
        scan = xy4.xy4_scan(sim, _repetitions(b.repetitions), b.shots, cfg.seed)
        free, pinned = scan.fit(False), scan.fit(True)
        rows = [{"protocol": "xy4", "parameter": r["parameter"], "value": r["value"], "std": r["std"]} for r in scan.rows()]
        write_csv(out / "xy4.csv", rows, CSV_COLUMNS)
        report = {
            "protocol": "xy4",
            "times_us": scan.times_us,
            "free": {"gamma_per_us": free.gamma, "gamma_err": free.gamma_err, "J_rad_per_us": free.J, "J_err": free.J_err, "residual": free.residual},
            "J_fixed_zero": {"gamma_per_us": pinned.gamma, "gamma_err": pinned.gamma_err, "residual": pinned.residual},
            "residual_ratio": pinned.residual / free.residual if free.residual > 0 else None,
        }
        if model.n_qubits == 2 and model.edges:
            zeta = model.zz(model.edges[0])
            colors = [sim.color_of(0), sim.color_of(1)]
            report["aggregate_zz_rate_rad_per_us"] = xy4.aggregate_zz_rate(lib, colors, zeta)
        write_yaml(out / "xy4_fit.yaml", report)
        return EXIT_OK
    if b.protocol in ("rc", "rb"):
        qubits = None if b.protocol == "rc" else [0]
        res = benchmarks.random_clifford_benchmark(sim, b.lengths, b.circuits, b.shots, cfg.seed, qubits)
        rows = res.rows(b.protocol)
        write_csv(out / f"{b.protocol}.csv", rows, CSV_COLUMNS)
        fits = {f"q{q}": {"a": f.a, "p": f.p, "b": f.b, "p_err": f.p_err, "epc": f.epc, "epc_err": f.epc_err, "ok": f.ok} for q, f in enumerate(res.fits)}
        write_yaml(out / f"{b.protocol}_fit.yaml", {"protocol": b.protocol, "lengths": res.lengths, "fits": fits})
        return EXIT_OK
    if b.protocol == "tfim":
        tcfg = TfimConfig(model.n_qubits, b.tfim_g_rad, b.tfim_h_rad, b.tfim_dt, 1)
        res = benchmarks.tfim_kl_benchmark(sim, tcfg, _repetitions(b.repetitions), b.shots, cfg.seed, b.bootstrap)
        rows = [{"protocol": "tfim", "parameter": n, "value": k, "std": s} for n, k, s in zip(res.repetitions, res.kl, res.std)]
        write_csv(out / "tfim.csv", rows, CSV_COLUMNS)
        write_yaml(out / "tfim_report.yaml", {"protocol": "tfim", "repetitions": res.repetitions, "kl": res.kl, "std": res.std, "uniform_kl": res.reference_kl})
        return EXIT_OK
    raise CommandError(f"benchmark.protocol must be xy4, rc, rb or tfim (got {b.protocol!r})")


def cmd_calibrate(cfg: RunConfig, out: Path) -> int:
    from .experiments.calibration import CalibrationError, VirtualHardware, fine_calibrate, rough_calibrate, unit_envelope

    c = cfg.calibrate
    lib = load_library(cfg)
    model = build_device(cfg)
    hw = VirtualHardware(model, 0, c.noise)
    if c.entries:
        keys = list(c.entries)
    else:
        keys = [k for k in sorted(lib.entries) if not lib.gates.get(k.split(":", 1)[1], {}).get("fixed", False)]
    status = EXIT_OK
    summary = {}
    for i, key in enumerate(keys):
        if key not in lib.entries:
            raise CommandError(f"library has no entry {key!r}")
        z = lib.entries[key]
        gate = key.split(":", 1)[1]
        theta = float(lib.gates.get(gate, {}).get("angle_rad", np.nan))
        samples = z.samples(0)
        peak = float(np.max(np.abs(samples)))
        env = unit_envelope(samples)
        a_pi = peak * np.pi / theta
        amps = np.linspace(0.0, 4 * a_pi, c.amplitude_points)
        name = key.replace(":", "_")
        try:
            rec = rough_calibrate(hw, env, z.duration, amps, theta, c.shots, cfg.seed + 100 * i)
            rec.a_fine = rec.a_rough * (1 + c.initial_error)
            rec = fine_calibrate(hw, env, z.duration, rec, c.max_iterations, c.tolerance_rad, c.shots, cfg.seed + 100 * i + 1)
        except CalibrationError as exc:
            write_yaml(out / f"calibration_{name}.yaml", {"entry": key, "error": str(exc), "diagnostics": exc.diagnostics})
            log.error("calibration of %s failed: %s", key, exc)
            status = EXIT_NUMERIC
            continue
        data = {"entry": key, "nominal_amplitude": peak, **rec.to_dict()}
        write_yaml(out / f"calibration_{name}.yaml", data)
        summary[key] = {"scale": rec.a_fine / peak, "converged": rec.converged}
        if not rec.converged:
            status = EXIT_NUMERIC
    lib.metadata["calibration"] = summary
    lib.save(out / "library_calibrated.json")
    return status


COMMANDS = {
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
    "calibrate": cmd_calibrate,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crgs", description="Crosstalk-robust gate sets: optimize, sweep, simulate, benchmark, calibrate.")
    p.add_argument("subcommand", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, metavar="PATH", help="YAML run configuration")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides config)")
    p.add_argument("--seed", type=int, help="random seed (overrides config)")
    p.add_argument("--workers", type=int, help="worker processes (overrides config)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.subcommand, {"out": args.out, "seed": args.seed, "workers": args.workers})
        out = Path(args.out) if args.out else cfg.resolve(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.subcommand](cfg, out)
    except (ConfigError, CommandError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return getattr(exc, "code", EXIT_CONFIG)
    except (LibraryError, FragmentError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
