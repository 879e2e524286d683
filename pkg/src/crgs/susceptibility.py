"""Pairwise crosstalk susceptibility computed from single-qubit trajectories."""

from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

from .quantum import PAULIS, embed_operator, expm_frechet_skew
from .trajectory import ControlTrajectory, susceptibility_of_unitaries, toggled_operator


def _check_grids(zi: ControlTrajectory, zj: ControlTrajectory):
    if zi.T != zj.T or not np.allclose(zi.timesteps, zj.timesteps, rtol=1e-12, atol=0.0):
        raise ValueError("pairwise susceptibility needs identical knot grids; pad the shorter gate first")


def _frames(u: np.ndarray, label: str) -> np.ndarray:
    d = u.shape[-1]
    if d != 2:
        raise ValueError("pairwise terms act on single-qubit trajectories")
    return toggled_operator(u, PAULIS[label]).reshape(u.shape[0], d * d)


def pairwise_value_and_grads(ui: np.ndarray, uj: np.ndarray, pair=("Z", "Z"), weights=None):
    """Value and unitary gradients of the pairwise term for raw unitary stacks.

    ``weights`` (summing to one) replace the uniform ``1/T`` knot average.
    """
    A, B = pair
    T = ui.shape[0]
    w = np.full(T, 1.0 / T) if weights is None else np.asarray(weights, dtype=float)
    vi = _frames(ui, A)
    vj = _frames(uj, B)
    c = (vi * w[:, None]).T @ vj
    value = 0.25 * float(np.sum(np.abs(c) ** 2))

    def grad(u, sigma, v_other, cmat):
        q = (w[:, None] * (v_other @ cmat.conj().T)).reshape(T, 2, 2)
        return 0.5 * (sigma @ u @ (q.conj() + np.swapaxes(q, -1, -2)))

    gi = grad(ui, PAULIS[A], vj, c)
    gj = grad(uj, PAULIS[B], vi, c.T)
    return value, gi, gj


def interval_samples(system, z: ControlTrajectory, substeps: int):
    """Unitaries at the midpoints of ``substeps`` equal slices of every interval.

    Returns ``(W, E, dE, tau_weights)``: ``W[k, s] = E[k, s] U_k`` with
    ``E[k, s] = exp(-i tau_s H(a_k))``, ``dE[c]`` its derivative along drive
    ``c``, and per-sample durations.
    """
    h = z.timesteps[:-1]
    tau = h[:, None] * (np.arange(substeps) + 0.5)[None, :] / substeps
    ham = system.hamiltonian(z.a[:-1])[:, None]
    drives = np.stack(system.drives)[:, None, None]
    e, de = expm_frechet_skew(ham, tau, drives)
    w = e @ z.unitaries[:-1, None]
    return w, e, de, np.repeat(h[:, None] / substeps, substeps, axis=1)


def pairwise_continuous(zi: ControlTrajectory, zj: ControlTrajectory, system, pair=("Z", "Z"), substeps: int = 8):
    """Time-averaged pairwise susceptibility with frames resolved inside each interval.

    The knot sum only sees the toggling frame at the knots; here every
    interval is sliced ``substeps`` times using its exact propagator, so
    cancellation has to hold in continuous time. The shorter gate idles at its
    final unitary. Returns ``(value, {"U", "a"} grads for i, same for j)``.
    """
    if not np.allclose(zi.timesteps[0], zj.timesteps[0], rtol=1e-12, atol=0.0):
        raise ValueError("pairwise susceptibility needs a common time step")
    parts = [interval_samples(system, z, substeps) for z in (zi, zj)]
    n = max(p[0].shape[0] for p in parts)
    flat = []
    for z, (w, _, _, dur) in zip((zi, zj), parts):
        k = w.shape[0]
        wf = w.reshape(-1, 2, 2)
        df = dur.ravel()
        if k < n:
            tail = (n - k) * substeps
            wf = np.concatenate([wf, np.repeat(z.unitaries[-1:], tail, axis=0)])
            df = np.concatenate([df, np.full(tail, z.timesteps[0] / substeps)])
        flat.append((wf, df))
    weights = flat[0][1] / flat[0][1].sum()
    value, gi, gj = pairwise_value_and_grads(flat[0][0], flat[1][0], pair, weights)
    grads = []
    for z, (w, e, de, _), g in zip((zi, zj), parts, (gi, gj)):
        k = w.shape[0]
        gw = g[: k * substeps].reshape(w.shape)
        gu = np.zeros_like(z.unitaries)
        gu[:-1] = np.einsum("ksji,ksjl->kil", e.conj(), gw)
        gu[-1] = g[k * substeps :].sum(axis=0)
        ga = np.zeros_like(z.a)
        for c in range(de.shape[0]):
            dw = de[c] @ z.unitaries[:-1, None]
            ga[:-1, c] = np.real(np.sum(gw.conj() * dw, axis=(1, 2, 3)))
        grads.append({"U": gu, "a": ga})
    return value, grads[0], grads[1]


def pairwise_susceptibility(zi: ControlTrajectory, zj: ControlTrajectory, pair=("Z", "Z")) -> float:
    """Crosstalk susceptibility of one edge from the two crosstalk-free trajectories.

    ``Re (1/4)(1/T^2) sum_{t,t'} Tr[s_A(t) s_A(t')] Tr[s_B(t) s_B(t')]`` where
    ``s_A(t) = U_t^dag sigma_A U_t`` on qubit ``i`` and likewise on ``j``.
    """
    _check_grids(zi, zj)
    value, _, _ = pairwise_value_and_grads(zi.unitaries, zj.unitaries, pair)
    return value


def pairwise_bruteforce(zi: ControlTrajectory, zj: ControlTrajectory, pair=("Z", "Z")) -> float:
    """Literal double sum over knot pairs; an independent check of :func:`pairwise_susceptibility`."""
    _check_grids(zi, zj)
    si = toggled_operator(zi.unitaries, PAULIS[pair[0]])
    sj = toggled_operator(zj.unitaries, PAULIS[pair[1]])
    ki = np.real(np.einsum("tab,sba->ts", si, si))
    kj = np.real(np.einsum("tab,sba->ts", sj, sj))
    T = zi.T
    return float(np.sum(ki * kj) / (4.0 * T * T))


def composite_unitaries(trajectories: Sequence[ControlTrajectory]) -> np.ndarray:
    """Knot-wise tensor products ``U_t = U_t^(0) x U_t^(1) x ...``."""
    T = trajectories[0].T
    if any(z.T != T for z in trajectories):
        raise ValueError("trajectories must share a knot grid")
    return np.stack([reduce(np.kron, [z.unitaries[t] for z in trajectories]) for t in range(T)])


def crosstalk_hamiltonian(n: int, edges, pair=("Z", "Z")) -> np.ndarray:
    h = np.zeros((2**n, 2**n), dtype=complex)
    op = np.kron(PAULIS[pair[0]], PAULIS[pair[1]])
    for i, j in edges:
        h += embed_operator(op, [i, j], n)
    return h


MAX_FACTORIZATION_VERTICES = 4


def factorization_check(trajectories: Sequence[ControlTrajectory], edges, pair=("Z", "Z")) -> float:
    """``|R(full composite; sum of edge terms) - sum_edges pairwise|``."""
    n = len(trajectories)
    if n > MAX_FACTORIZATION_VERTICES:
        raise ValueError(f"factorization check materializes 2^{n} dimensions; at most 4 vertices allowed")
    edges = [tuple(e) for e in edges]
    for i, j in edges:
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValueError(f"invalid edge {(i, j)}")
    full = susceptibility_of_unitaries(composite_unitaries(trajectories), crosstalk_hamiltonian(n, edges, pair))
    local = sum(pairwise_susceptibility(trajectories[i], trajectories[j], pair) for i, j in edges)
    return abs(full - local)


def pad_unitaries(u: np.ndarray, knots: int) -> np.ndarray:
    """Idle continuation: hold the final unitary for the extra knots."""
    if u.shape[0] >= knots:
        return u
    extra = np.repeat(u[-1:], knots - u.shape[0], axis=0)
    return np.concatenate([u, extra], axis=0)


def pad_trajectory(z: ControlTrajectory, knots: int) -> ControlTrajectory:
    """Zero-drive continuation of ``z`` out to ``knots`` knots on the same step."""
    if z.T >= knots:
        return z
    extra = knots - z.T
    zeros = np.zeros((extra, z.n_channels))
    dt = np.concatenate([z.timesteps, np.full(extra, z.timesteps[-1])])
    return ControlTrajectory(
        pad_unitaries(z.unitaries, knots),
        np.vstack([z.a, zeros]),
        np.vstack([z.da, zeros]),
        np.vstack([z.dda, zeros]),
        dt,
        {},
        z.free_timesteps,
        dict(z.metadata),
    )
