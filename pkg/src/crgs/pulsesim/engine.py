"""Pulse-level evolution of small transmon registers in the rotating frame.

Qubits are two-level. The Hamiltonian (rad/ns) is::

    H(t) = sum_q a_q(t)/2 (cos phi X_q + sin phi Y_q) + pi*detuning_q Z_q
         + sum_edges 2 pi zeta Z_i Z_j + (cross-resonance terms while an ECR plays)

Density evolution integrates the Lindblad equation with amplitude damping
and pure dephasing by fixed-step fourth-order Runge-Kutta. Controls are
piecewise constant, so on each constant interval the RK4 update is the
matrix polynomial ``1 + hL + (hL)^2/2 + (hL)^3/6 + (hL)^4/24``, applied
``n`` times by repeated squaring.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from ..layout import LayoutGraph, color_layout
from ..quantum import I2, SIGMA_MINUS, SX, SY, SZ, embed_operator, matexp_skew, rz
from .circuit import Circuit, Gate, MomentSchedule, transpile_to_moments
from .device import DeviceModel

log = logging.getLogger(__name__)

MAX_STEP_NS = 0.1
MAX_FRAGMENT = 4
MAX_FRAGMENT_HARD = 6
CR_SAMPLE_NS = 10.0


class FragmentError(ValueError):
    """A simulated fragment would exceed the dense-simulation limit."""


class LibraryError(KeyError):
    """A gate cannot be resolved in the pulse library."""


@dataclass
class DriveSegment:
    samples: np.ndarray  # rad/ns, uniform piecewise-constant grid
    start: float
    duration: float
    phase: float = 0.0

    def __post_init__(self):
        self.samples = np.atleast_1d(np.asarray(self.samples, dtype=float))
        if self.duration <= 0 or self.samples.size == 0:
            raise ValueError("drive segments need a positive duration and at least one sample")

    @property
    def spacing(self) -> float:
        return self.duration / self.samples.size

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class CRSegment:
    control: int
    target: int
    samples: np.ndarray  # CR amplitude, rad/ns
    rotary: np.ndarray  # target rotary amplitude multiplying X_t, rad/ns
    start: float
    duration: float

    def __post_init__(self):
        self.samples = np.atleast_1d(np.asarray(self.samples, dtype=float))
        self.rotary = np.atleast_1d(np.asarray(self.rotary, dtype=float))
        if self.rotary.shape != self.samples.shape:
            raise ValueError("rotary and CR sample grids must match")

    @property
    def spacing(self) -> float:
        return self.duration / self.samples.size

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class PulseSchedule:
    n_qubits: int
    drives: dict = field(default_factory=dict)  # qubit -> [DriveSegment]
    cr: list = field(default_factory=list)
    duration: float = 0.0

    def __post_init__(self):
        for q, segs in self.drives.items():
            segs.sort(key=lambda s: s.start)
            for a, b in zip(segs, segs[1:]):
                if b.start < a.end - 1e-9:
                    raise ValueError(f"overlapping segments on qubit {q}")
        end = max([s.end for segs in self.drives.values() for s in segs] + [c.end for c in self.cr] + [0.0])
        self.duration = max(self.duration, end)

    def add_drive(self, q: int, seg: DriveSegment) -> None:
        self.drives.setdefault(q, []).append(seg)
        self.__post_init__()

    def breakpoints(self, extra=()) -> np.ndarray:
        pts = {0.0, self.duration}
        for segs in self.drives.values():
            for s in segs:
                pts.update(s.start + s.spacing * np.arange(s.samples.size + 1))
        for c in self.cr:
            pts.update(c.start + c.spacing * np.arange(c.samples.size + 1))
        pts.update(float(t) for t in extra)
        pts = np.array(sorted(p for p in pts if 0.0 <= p <= self.duration))
        keep = np.concatenate([[True], np.diff(pts) > 1e-9])
        return pts[keep]


@dataclass
class DensityState:
    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        d = self.matrix.shape[0]
        if self.matrix.shape != (d, d) or d & (d - 1):
            raise ValueError("density matrix must be square with power-of-two dimension")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    @property
    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.conj().T))))

    def populations(self) -> np.ndarray:
        p = np.clip(np.real(np.diag(self.matrix)), 0.0, None)
        return p / p.sum()

    @classmethod
    def pure(cls, psi) -> "DensityState":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def ground(cls, n_qubits: int) -> "DensityState":
        m = np.zeros((2**n_qubits, 2**n_qubits), dtype=complex)
        m[0, 0] = 1.0
        return cls(m)


# local operator algebra ------------------------------------------------------------


def _op(single: np.ndarray, q: int, n: int) -> np.ndarray:
    return embed_operator(single, [q], n)


def lindblad_generator(h: np.ndarray, collapse) -> np.ndarray:
    """Superoperator ``L`` with ``vec(d rho/dt) = L vec(rho)`` for row-major vec."""
    d = h.shape[0]
    eye = np.eye(d)
    out = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for c in collapse:
        cdc = c.conj().T @ c
        out += np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
    return out


def rk4_interval(gen: np.ndarray, duration: float, max_step: float = MAX_STEP_NS) -> np.ndarray:
    """Exact RK4 map for a constant linear generator over ``duration``."""
    n = max(1, int(np.ceil(duration / max_step - 1e-12)))
    hl = (duration / n) * gen
    eye = np.eye(gen.shape[0], dtype=complex)
    hl2 = hl @ hl
    step = eye + hl + hl2 / 2 + hl2 @ hl / 6 + hl2 @ hl2 / 24
    return np.linalg.matrix_power(step, n)


def apply_unitary(state: np.ndarray, u: np.ndarray, qubits, n: int) -> np.ndarray:
    """Left-multiply the first (2**n) axis of ``state`` by ``u`` acting on ``qubits``."""
    k = len(qubits)
    rest = state.shape[1:]
    t = state.reshape((2,) * n + rest)
    ut = u.reshape((2,) * (2 * k))
    out = np.tensordot(ut, t, axes=(list(range(k, 2 * k)), list(qubits)))
    # tensordot puts the k output axes first; move them back into place
    out = np.moveaxis(out, list(range(k)), list(qubits))
    return out.reshape(state.shape)


def apply_superop(rho: np.ndarray, s: np.ndarray, qubits, n: int) -> np.ndarray:
    k = len(qubits)
    t = rho.reshape((2,) * (2 * n))
    st = s.reshape((2,) * (4 * k))
    in_axes = list(range(2 * k, 4 * k))
    rho_axes = list(qubits) + [n + q for q in qubits]
    out = np.tensordot(st, t, axes=(in_axes, rho_axes))
    out = np.moveaxis(out, list(range(2 * k)), rho_axes)
    return out.reshape(rho.shape)


def conjugate(rho: np.ndarray, u: np.ndarray, qubits, n: int) -> np.ndarray:
    left = apply_unitary(rho, u, qubits, n)
    return apply_unitary(left.conj().T, u, qubits, n).conj().T


# fragment propagators ----------------------------------------------------------------


class FragmentModel:
    """Operators of the sub-register ``qubits`` of ``model``.

    Schedules passed to :meth:`propagate` address qubits by their local
    index (position in ``qubits``).
    """

    def __init__(self, model: DeviceModel, qubits, noise: bool = True, detuning: bool = True):
        self.model = model
        self.qubits = list(qubits)
        k = len(self.qubits)
        if k > MAX_FRAGMENT_HARD:
            raise FragmentError(f"fragment of {k} qubits exceeds the dense limit")
        self.k = k
        local = {q: j for j, q in enumerate(self.qubits)}
        d = 2**k
        self.static = np.zeros((d, d), dtype=complex)
        if detuning:
            for q in self.qubits:
                self.static += model.detuning_rad(q) * _op(SZ, local[q], k)
        for e in model.edges:
            if e.i in local and e.j in local:
                zz = model.zz_rad(e)
                if zz:
                    self.static += zz * embed_operator(np.kron(SZ, SZ), [local[e.i], local[e.j]], k)
        self.xs = [_op(SX, j, k) for j in range(k)]
        self.ys = [_op(SY, j, k) for j in range(k)]
        self._zx = {}
        self.collapse = []
        if noise:
            for j, q in enumerate(self.qubits):
                p = model.qubits[q]
                if p.gamma1 > 0:
                    self.collapse.append(np.sqrt(p.gamma1) * _op(SIGMA_MINUS, j, k))
                if p.gamma_phi > 0:
                    self.collapse.append(np.sqrt(p.gamma_phi / 2) * _op(SZ, j, k))

    def hamiltonian(self, schedule: PulseSchedule, t: float) -> np.ndarray:
        h = self.static.copy()
        for j, segs in schedule.drives.items():
            for s in segs:
                if s.start <= t < s.end:
                    a = s.samples[min(int((t - s.start) / s.spacing), s.samples.size - 1)]
                    h += 0.5 * a * (np.cos(s.phase) * self.xs[j] + np.sin(s.phase) * self.ys[j])
        for c in schedule.cr:
            if not (c.start <= t < c.end):
                continue
            idx = min(int((t - c.start) / c.spacing), c.samples.size - 1)
            kix, kzx = cr_coefficients(self.model, self.qubits[c.control], self.qubits[c.target])
            key = (c.control, c.target)
            if key not in self._zx:
                self._zx[key] = embed_operator(np.kron(SZ, SX), [c.control, c.target], self.k)
            h += c.samples[idx] * (-kix * self.xs[c.target] + kzx * self._zx[key]) + c.rotary[idx] * self.xs[c.target]
        return h

    def propagate(self, schedule: PulseSchedule, mode: str, record=()):
        """Propagator over the whole schedule (unitary or superoperator), plus maps at ``record`` times."""
        pts = schedule.breakpoints(record)
        d = 2**self.k
        total = np.eye(d if mode == "unitary" else d * d, dtype=complex)
        record = sorted(record)
        snaps = {r: total.copy() for r in record if r <= 0.0}
        for t0, t1 in zip(pts[:-1], pts[1:]):
            h = self.hamiltonian(schedule, 0.5 * (t0 + t1))
            if mode == "unitary":
                step = matexp_skew(h, t1 - t0)
            else:
                step = rk4_interval(lindblad_generator(h, self.collapse), t1 - t0)
            total = step @ total
            for r in record:
                if abs(r - t1) < 1e-9:
                    snaps[r] = total.copy()
        return total, snaps


def cr_coefficients(model: DeviceModel, control: int, target: int) -> tuple[float, float]:
    """(IX, ZX) coefficients per unit CR amplitude from the leading-order effective model."""
    try:
        e = model.edge(control, target)
    except KeyError:
        raise ValueError(f"no coupling between {control} and {target}") from None
    delta = e.qubit_detuning_ghz if e.i == control else -e.qubit_detuning_ghz
    if abs(delta) < 1e-12:
        raise ValueError("degenerate cross-resonance: control and target are resonant")
    alpha = model.qubits[control].anharmonicity_ghz
    if abs(delta + alpha) < 1e-12:
        raise ValueError("cross-resonance coefficient has a pole")
    J = model.coupling(e)
    kix = J / (delta + alpha)
    return kix, kix * alpha / delta


# evolution entry points ------------------------------------------------------------------


@dataclass
class Evolution:
    final: DensityState
    times: list
    states: list


def evolve_density(model: DeviceModel, schedule: PulseSchedule, rho0, noise: bool = True, record=(), detuning: bool = True) -> Evolution:
    """Integrate the Lindblad equation for the full register of ``schedule``."""
    rho = rho0.matrix if isinstance(rho0, DensityState) else np.asarray(rho0, dtype=complex)
    n = schedule.n_qubits
    if rho.shape != (2**n, 2**n):
        raise ValueError("initial state does not match the schedule register")
    if n > MAX_FRAGMENT_HARD:
        raise FragmentError(f"{n}-qubit register exceeds the dense limit; simulate moment by moment")
    frag = FragmentModel(model, range(n), noise, detuning)
    total, snaps = frag.propagate(schedule, "density", record)
    d = 2**n

    def act(s):
        return (s @ rho.reshape(d * d)).reshape(d, d)

    times = sorted(snaps)
    return Evolution(DensityState(act(total)), times, [DensityState(act(snaps[t])) for t in times])


def evolve_unitary(model: DeviceModel, schedule: PulseSchedule, detuning: bool = True) -> np.ndarray:
    frag = FragmentModel(model, range(schedule.n_qubits), False, detuning)
    return frag.propagate(schedule, "unitary")[0]


# schedules for gates ----------------------------------------------------------------------


def flat_top_gaussian(duration: float, spacing: float = CR_SAMPLE_NS, rise: float | None = None) -> np.ndarray:
    """Unit-height flat-top envelope with Gaussian edges, sampled at segment midpoints."""
    n = max(4, int(round(duration / spacing)))
    t = (np.arange(n) + 0.5) * duration / n
    rise = min(0.25 * duration, 40.0) if rise is None else rise
    sigma = rise / 2
    env = np.ones(n)
    left = t < rise
    right = t > duration - rise
    env[left] = np.exp(-0.5 * ((t[left] - rise) / sigma) ** 2)
    env[right] = np.exp(-0.5 * ((t[right] - duration + rise) / sigma) ** 2)
    return env


def gaussian_samples(angle: float, duration: float, n: int = 16) -> np.ndarray:
    t = (np.arange(n) + 0.5) * duration / n
    sigma = duration / 6
    env = np.exp(-0.5 * ((t - duration / 2) / sigma) ** 2)
    return env * angle / (env.sum() * duration / n)


def ecr_schedule(model: DeviceModel, edge, robust: bool = False, envelope: np.ndarray | None = None, n_qubits: int | None = None) -> PulseSchedule:
    """CR(+) | echo X on the control | CR(-), with a rotary tone cancelling the target's X term.

    Each half accumulates a ZX angle of pi/8 (coefficient times area), so the
    sequence implements ``X_c exp(-i pi/4 Z_c X_t)``. The total duration is
    ``model.ecr_duration`` (inverse in the coupling scale). ``robust=True``
    replaces the flat-top envelope by ``envelope`` (a sampled single-qubit
    pulse) stretched to the same half duration.
    """
    control, target = edge
    kix, kzx = cr_coefficients(model, control, target)
    n = n_qubits or model.n_qubits
    total = model.ecr_duration
    echo = model.echo_fraction * total
    half = 0.5 * (total - echo)
    if robust:
        if envelope is None:
            raise ValueError("robust ECR needs a sampled envelope")
        shape = np.asarray(envelope, dtype=float)
    else:
        shape = flat_top_gaussian(half)
    area = shape.sum() * half / shape.size
    if abs(area) < 1e-15:
        raise ValueError("CR envelope has zero area")
    amp = shape * (np.pi / 8) / (kzx * area)
    rot = amp * kix
    sched = PulseSchedule(n)
    sched.cr.append(CRSegment(control, target, amp, rot, 0.0, half))
    sched.add_drive(control, DriveSegment(gaussian_samples(np.pi, echo), half, echo))
    sched.cr.append(CRSegment(control, target, -amp, -rot, half + echo, half))
    sched.duration = total
    return sched


# circuit simulation -----------------------------------------------------------------------


def default_coloring(model: DeviceModel) -> dict:
    g = LayoutGraph(model.n_qubits, tuple((e.i, e.j) for e in model.edges))
    return color_layout(g)


@dataclass
class CircuitResult:
    mode: str
    state: np.ndarray  # unitary (mode="unitary") or density matrix
    log: list
    schedule: MomentSchedule

    @property
    def density(self) -> DensityState:
        if self.mode != "density":
            raise ValueError("unitary-mode result has no density matrix")
        return DensityState(self.state)


class Simulator:
    """Moment-by-moment circuit simulation against a pulse library.

    ``library`` maps ``(color label, gate)`` to trajectories (a
    :class:`crgs.gateset.PulseLibrary`). Qubit colors come from
    ``coloring`` (qubit -> color index), defaulting to a coloring of the
    device's coupling graph; color indices select library colors in order.
    """

    def __init__(
        self,
        model: DeviceModel,
        library,
        coloring: dict | None = None,
        robust_ecr: bool = False,
        ecr_envelope: np.ndarray | None = None,
        noise: bool = True,
        detuning: bool = True,
        max_fragment: int = MAX_FRAGMENT,
        cache: dict | None = None,
    ):
        self.model = model
        self.library = library
        self.coloring = coloring if coloring is not None else default_coloring(model)
        self.robust_ecr = robust_ecr
        self.ecr_envelope = ecr_envelope
        self.noise = noise
        self.detuning = detuning
        self.max_fragment = max_fragment
        # propagators keyed by pulse content; share only between simulators of one device model
        self._cache = {} if cache is None else cache
        self.colors = list(library.metadata.get("colors") or library.colors)

    def color_of(self, q: int):
        if len(self.colors) == 1:
            return self.colors[0]
        return self.colors[self.coloring.get(q, 0) % len(self.colors)]

    def gate_pulse(self, q: int, name: str):
        try:
            z = self.library.get(self.color_of(q), name)
        except KeyError as exc:
            raise LibraryError(str(exc)) from None
        return z.samples(0), z.duration

    def moment_schedule(self, moment) -> PulseSchedule:
        n = self.model.n_qubits
        sched = PulseSchedule(n)
        for g in moment.gates:
            if g.name == "ecr":
                ecr = ecr_schedule(self.model, g.qubits, self.robust_ecr, self.ecr_envelope, n)
                for q, segs in ecr.drives.items():
                    for s in segs:
                        sched.add_drive(q, s)
                sched.cr.extend(ecr.cr)
                sched.duration = max(sched.duration, ecr.duration)
            else:
                q = g.qubits[0]
                samples, dur = self.gate_pulse(q, g.name)
                sched.add_drive(q, DriveSegment(samples, 0.0, dur))
        return sched

    def fragments(self, moment) -> list[list[int]]:
        n = self.model.n_qubits
        if n <= self.max_fragment:
            return [list(range(n))]
        active = sorted(moment.qubits)
        adj = {q: set() for q in range(n)}
        for e in self.model.edges:
            adj[e.i].add(e.j)
            adj[e.j].add(e.i)
        # active qubits plus their idle neighbours, merged through shared couplings
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        member = set(active)
        for q in active:
            for v in adj[q]:
                member.add(v)
                parent[find(v)] = find(q)
        for g in moment.gates:
            if len(g.qubits) == 2:
                parent[find(g.qubits[1])] = find(g.qubits[0])
        groups = {}
        for q in sorted(member):
            groups.setdefault(find(q), []).append(q)
        frags = list(groups.values())
        for f in frags:
            if len(f) > self.max_fragment:
                raise FragmentError(f"moment fragment {f} has {len(f)} qubits; limit is {self.max_fragment}")
        idle = [q for q in range(n) if q not in member]
        frags.extend([q] for q in idle)
        return frags

    def _key(self, frag, sched: PulseSchedule, mode: str) -> str:
        h = hashlib.sha1()
        h.update(repr((tuple(frag), mode, round(sched.duration, 12), self.noise, self.detuning)).encode())
        for q in frag:
            for s in sched.drives.get(q, []):
                h.update(repr((q, s.start, s.duration, s.phase)).encode())
                h.update(s.samples.tobytes())
        for c in sched.cr:
            if c.control in frag:
                h.update(repr((c.control, c.target, c.start, c.duration)).encode())
                h.update(c.samples.tobytes())
                h.update(c.rotary.tobytes())
        return h.hexdigest()

    def fragment_propagator(self, frag, sched: PulseSchedule, mode: str) -> np.ndarray:
        key = self._key(frag, sched, mode)
        if key not in self._cache:
            fm = FragmentModel(self.model, frag, self.noise and mode == "density", self.detuning)
            pos = {q: j for j, q in enumerate(frag)}
            local = PulseSchedule(len(frag), duration=sched.duration)
            for q in frag:
                for s in sched.drives.get(q, []):
                    local.drives.setdefault(pos[q], []).append(s)
            for c in sched.cr:
                if c.control in pos:
                    local.cr.append(CRSegment(pos[c.control], pos[c.target], c.samples, c.rotary, c.start, c.duration))
            self._cache[key] = fm.propagate(local, mode)[0]
        return self._cache[key]

    def _cross_fragment_zz(self, frags, duration: float) -> list:
        """ZZ couplings whose endpoints fall in different fragments, as exact diagonal phases."""
        where = {q: k for k, f in enumerate(frags) for q in f}
        out = []
        for e in self.model.edges:
            if where[e.i] != where[e.j]:
                zz = self.model.zz_rad(e)
                if zz:
                    out.append(((e.i, e.j), matexp_skew(zz * np.kron(SZ, SZ), duration)))
        return out

    def run(self, circuit: Circuit, mode: str = "density", rho0=None) -> CircuitResult:
        if mode not in ("density", "unitary"):
            raise ValueError(f"unknown mode {mode!r}")
        n = circuit.n_qubits
        if n != self.model.n_qubits:
            raise ValueError("circuit and device sizes differ")
        sched = transpile_to_moments(circuit, self.model)
        if mode == "unitary":
            state = np.eye(2**n, dtype=complex)
        elif rho0 is None:
            state = DensityState.ground(n).matrix
        else:
            state = (rho0.matrix if isinstance(rho0, DensityState) else np.asarray(rho0, dtype=complex)).copy()
        log_rows = []
        for m in sched.moments:
            if m.kind == "virtual":
                for g in m.gates:
                    state = self._apply_u(state, rz(g.angle), g.qubits, n, mode)
                log_rows.append({"kind": "virtual", "duration_ns": 0.0, "gates": [g.text() for g in m.gates]})
                continue
            ps = self.moment_schedule(m)
            frags = self.fragments(m)
            for f in frags:
                prop = self.fragment_propagator(f, ps, mode)
                if mode == "unitary":
                    state = apply_unitary(state, prop, f, n)
                else:
                    state = apply_superop(state, prop, f, n)
            for qubits, u in self._cross_fragment_zz(frags, ps.duration):
                state = self._apply_u(state, u, qubits, n, mode)
            log_rows.append({"kind": m.kind, "duration_ns": ps.duration, "gates": [g.text() for g in m.gates], "fragments": frags})
        return CircuitResult(mode, state, log_rows, sched)

    @staticmethod
    def _apply_u(state, u, qubits, n, mode):
        if mode == "unitary":
            return apply_unitary(state, u, qubits, n)
        return conjugate(state, u, qubits, n)


def simulate_circuit(circuit: Circuit, model: DeviceModel, library, mode: str = "density", **kw) -> CircuitResult:
    sim_kw = {k: kw.pop(k) for k in list(kw) if k in ("coloring", "robust_ecr", "ecr_envelope", "noise", "detuning", "max_fragment", "cache")}
    return Simulator(model, library, **sim_kw).run(circuit, mode, **kw)


def state_fidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    psi = np.asarray(psi, dtype=complex)
    return float(np.real(psi.conj() @ rho @ psi))


def unitary_fidelity(u: np.ndarray, target: np.ndarray) -> float:
    return float(abs(np.trace(u.conj().T @ target)) / u.shape[0])


def plus_state(n: int) -> np.ndarray:
    return np.full(2**n, 2 ** (-n / 2), dtype=complex)
