"""Run configuration: YAML documents whose numeric keys carry their unit as a suffix.

Unknown keys, wrong types and missing paths raise :class:`ConfigError`
with the line of the offending entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

SUBCOMMANDS = ("optimize", "sweep", "simulate", "benchmark", "calibrate")


class ConfigError(ValueError):
    pass


def _compose_lines(text: str) -> dict:
    """Map dotted key paths to 1-based line numbers."""
    lines = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}.{k.value}" if prefix else str(k.value)
                lines[path] = k.start_mark.line + 1
                walk(v, path)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                lines[f"{prefix}[{i}]"] = v.start_mark.line + 1
                walk(v, f"{prefix}[{i}]")

    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if root is not None:
        walk(root, "")
    return lines


@dataclass
class SolverSection:
    max_outer: int = 60
    tolerance: float = 1e-8
    inner_maxiter: int = 3000


@dataclass
class GateSetSection:
    mode: str = "crgs"  # crgs | detuning | gaussian
    edges: str = "all"
    duration_ns: float = 240.0
    fidelity: float = 0.9999
    knots: int = 50
    regularization: float = 1e-3  # edge terms are ~1e-4; larger r swamps them
    amplitude_rad_per_ns: float = 0.2
    curvature_rad_per_ns3: float = 4e-4
    detuning_rad_per_ns: float = 0.06283185307179587
    substeps: int = 8  # frames per interval in the edge terms; 0 = knots only


@dataclass
class SweepSection:
    kind: str = "bounds"  # bounds | codesign
    amplitudes_rad_per_ns: list = field(default_factory=lambda: [0.05, 0.1, 0.2])
    curvatures_rad_per_ns3: list = field(default_factory=lambda: [1e-4, 2e-4, 4e-4])
    factors: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    libraries: dict = field(default_factory=dict)  # name -> path or "gaussian"
    robust_library: str | None = None
    robust_entry: str = "c0:sx"


@dataclass
class SimulateSection:
    circuit: str | None = None
    mode: str = "density"
    noise: bool = True


@dataclass
class BenchmarkSection:
    protocol: str = "xy4"  # xy4 | rc | rb | tfim
    repetitions: list = field(default_factory=lambda: list(range(0, 201, 20)))
    lengths: list = field(default_factory=lambda: [1, 5, 10, 20, 50, 100])
    circuits: int = 5
    shots: int = 2048
    bootstrap: int = 1000
    rb_decay: float = 0.999
    tfim_dt: float = 0.05
    tfim_g_rad: float = 6.283185307179586
    tfim_h_rad: float = 6.283185307179586


@dataclass
class CalibrateSection:
    entries: list = field(default_factory=list)  # "color:gate"; empty = every driven entry
    amplitude_points: int = 41
    max_iterations: int = 5
    tolerance_rad: float = 1e-3
    initial_error: float = 0.0
    shots: int | None = None
    noise: bool = True


@dataclass
class DeviceSection:
    path: str | None = None
    zz_ghz: float | None = 2e-4
    detuning_ghz: float = 0.0
    coupling_scale: float = 1.0


@dataclass
class RunConfig:
    subcommand: str
    layout: str = "chain:2"
    seed: int = 0
    workers: int = 1
    out: str = "out"
    library: str | None = None
    device: DeviceSection = field(default_factory=DeviceSection)
    gate_set: GateSetSection = field(default_factory=GateSetSection)
    solver: SolverSection = field(default_factory=SolverSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    benchmark: BenchmarkSection = field(default_factory=BenchmarkSection)
    calibrate: CalibrateSection = field(default_factory=CalibrateSection)
    base_dir: Path = field(default_factory=Path.cwd)

    def resolve(self, p: str | None) -> Path | None:
        if p is None:
            return None
        path = Path(p)
        return path if path.is_absolute() else self.base_dir / path


SECTIONS = {
    "device": DeviceSection,
    "gate_set": GateSetSection,
    "solver": SolverSection,
    "sweep": SweepSection,
    "simulate": SimulateSection,
    "benchmark": BenchmarkSection,
    "calibrate": CalibrateSection,
}
TOP = {"subcommand": str, "layout": str, "seed": int, "workers": int, "out": str, "library": str}
PATH_KEYS = {"library", "device.path", "simulate.circuit", "sweep.robust_library"}
BUILTIN_LIBRARIES = {"gaussian", "square"}


def _coerce(value, default, where):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise TypeError(f"{where} must be true or false")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"{where} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"{where} must be a number")
        return float(value)
    if isinstance(default, list):
        if isinstance(value, dict) and {"start", "stop"} <= set(value) <= {"start", "stop", "step"}:
            # inclusive integer range
            try:
                return list(range(int(value["start"]), int(value["stop"]) + 1, int(value.get("step", 1))))
            except (TypeError, ValueError):
                raise TypeError(f"{where}: range bounds must be integers") from None
        if not isinstance(value, list):
            raise TypeError(f"{where} must be a list or a start/stop/step range")
        return value
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise TypeError(f"{where} must be a mapping")
        return value
    if isinstance(default, str) and not isinstance(value, str):
        raise TypeError(f"{where} must be a string")
    return value


def load_config(path, subcommand: str | None = None, overrides: dict | None = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such config file")
    text = path.read_text()
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}: " if mark is not None else ""
        raise ConfigError(f"{path}: {where}{getattr(exc, 'problem', None) or exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: line 1: top level must be a mapping")
    return config_from_dict(data, path, subcommand, overrides, _compose_lines(text))


def config_from_dict(data: dict, path=None, subcommand=None, overrides=None, lines=None) -> RunConfig:
    lines = lines or {}
    src = str(path) if path is not None else "<config>"

    def fail(key, msg):
        ln = lines.get(key)
        raise ConfigError(f"{src}: line {ln}: {msg}" if ln else f"{src}: {msg}")

    sub = subcommand or data.get("subcommand")
    if sub not in SUBCOMMANDS:
        fail("subcommand", f"subcommand must be one of {', '.join(SUBCOMMANDS)}")
    base = Path(path).parent if path is not None else Path.cwd()
    cfg = RunConfig(sub, base_dir=base)
    for key, value in data.items():
        if key in SECTIONS:
            if not isinstance(value, dict):
                fail(key, f"section '{key}' must be a mapping")
            section = getattr(cfg, key)
            known = {f.name: f for f in fields(section)}
            for k, v in value.items():
                if k not in known:
                    fail(f"{key}.{k}", f"unknown key '{key}.{k}' (expected one of {', '.join(known)})")
                try:
                    setattr(section, k, _coerce(v, getattr(section, k), f"{key}.{k}"))
                except TypeError as exc:
                    fail(f"{key}.{k}", str(exc))
        elif key in TOP:
            if key == "subcommand":
                continue
            try:
                setattr(cfg, key, _coerce(value, getattr(cfg, key), key))
            except TypeError as exc:
                fail(key, str(exc))
        else:
            fail(key, f"unknown key '{key}'")
    for k, v in (overrides or {}).items():
        if v is not None:
            setattr(cfg, k, v)
    if cfg.workers < 1:
        fail("workers", "workers must be at least 1")
    for key in PATH_KEYS:
        section, _, name = key.rpartition(".")
        holder = getattr(cfg, section) if section else cfg
        value = getattr(holder, name)
        if value is None or value in BUILTIN_LIBRARIES:
            continue
        if not cfg.resolve(value).exists():
            fail(key, f"{key}: path '{value}' does not exist")
    for name, value in cfg.sweep.libraries.items():
        if value not in BUILTIN_LIBRARIES and not cfg.resolve(value).exists():
            fail(f"sweep.libraries.{name}", f"sweep.libraries.{name}: path '{value}' does not exist")
    return cfg
