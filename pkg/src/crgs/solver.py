"""Augmented Lagrangian method for bound-constrained smooth programs.

Solves::

    min f(x)  s.t.  c(x) = 0,  g(x) <= 0,  lower <= x <= upper

Equalities and inequalities use the Powell-Hestenes-Rockafellar augmented
Lagrangian; box constraints are left to the inner L-BFGS-B solve, which keeps
iterates inside the box by projection. Variables whose lower and upper bound
coincide are frozen and never shown to the inner solver.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize

log = logging.getLogger(__name__)

# (value, vjp) where vjp(y) returns J^T y
ConstraintFn = Callable[[np.ndarray], tuple]


@dataclass
class SolverConfig:
    """Knobs for :func:`augmented_lagrangian` and the trajectory templates."""

    fidelity: float = 0.9999
    regularization: float = 0.01
    max_outer: int = 60
    tolerance: float = 1e-8
    penalty_init: float = 10.0
    penalty_growth: float = 2.0
    required_decrease: float = 0.25
    max_penalty: float = 1e10
    inner_maxiter: int = 3000
    inner_gtol: float = 1e-10
    restore_below: float = 1e-4
    restore_rtol: float = 0.05  # early stop only if restoring moves the objective by less than this
    seed: int = 0

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if not 0.0 <= self.fidelity <= 1.0:
            raise ValueError("required fidelity must lie in [0, 1]")
        if self.regularization < 0:
            raise ValueError("regularization weight must be nonnegative")
        if self.penalty_growth <= 1.0:
            raise ValueError("penalty growth factor must exceed 1")


@dataclass
class SolveReport:
    objective: float
    violation: float
    fidelities: list
    iterations: int
    converged: bool
    message: str = ""
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "objective": self.objective,
            "violation": self.violation,
            "fidelities": list(self.fidelities),
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
            "history": self.history,
        }


@dataclass
class NLP:
    x0: np.ndarray
    objective: Callable[[np.ndarray], tuple]
    lower: np.ndarray
    upper: np.ndarray
    equality: ConstraintFn | None = None
    inequality: ConstraintFn | None = None
    scale: np.ndarray | None = None

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        n = self.x0.size
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if np.any(self.lower > self.upper):
            raise ValueError("infeasible bounds: lower exceeds upper")
        self.scale = np.ones(n) if self.scale is None else np.asarray(self.scale, dtype=float)
        if np.any(self.scale <= 0):
            raise ValueError("variable scales must be positive")


@dataclass
class ALResult:
    x: np.ndarray
    objective: float
    violation: float
    iterations: int
    converged: bool
    multipliers_eq: np.ndarray
    multipliers_ineq: np.ndarray
    history: list


def _empty(_x):
    return np.zeros(0), (lambda y: 0.0)


def violation_of(c: np.ndarray, g: np.ndarray) -> float:
    v = 0.0
    if c.size:
        v = max(v, float(np.max(np.abs(c))))
    if g.size:
        v = max(v, float(np.max(g, initial=0.0)))
    return v


def augmented_lagrangian(nlp: NLP, cfg: SolverConfig, callback=None, restore=None) -> ALResult:
    """Outer multiplier loop around bound-constrained L-BFGS-B solves.

    ``restore(x) -> (x_feasible, violation)`` optionally projects a nearly
    feasible iterate onto the constraint set (e.g. by re-integrating the
    dynamics). Once the raw violation drops below ``cfg.restore_below`` and
    the restored point meets ``cfg.tolerance``, the restored point is
    accepted and the loop stops.
    """
    eq = nlp.equality or _empty
    ineq = nlp.inequality or _empty
    fixed = nlp.lower == nlp.upper
    free = ~fixed
    s = nlp.scale[free]

    x = np.clip(nlp.x0, nlp.lower, nlp.upper)
    c0, _ = eq(x)
    g0, _ = ineq(x)
    lam = np.zeros(c0.size)
    nu = np.zeros(g0.size)
    mu = cfg.penalty_init
    bounds = list(zip(nlp.lower[free] / s, nlp.upper[free] / s))

    def full(y):
        xx = x.copy()
        xx[free] = y * s
        return xx

    def lagrangian(y):
        xx = full(y)
        f, gf = nlp.objective(xx)
        c, c_vjp = eq(xx)
        g, g_vjp = ineq(xx)
        val = f
        grad = np.array(gf, dtype=float, copy=True)
        if c.size:
            w = lam + mu * c
            val += lam @ c + 0.5 * mu * (c @ c)
            grad = grad + c_vjp(w)
        if g.size:
            shifted = np.maximum(0.0, nu + mu * g)
            val += (shifted @ shifted - nu @ nu) / (2 * mu)
            grad = grad + g_vjp(shifted)
        return val, grad[free] * s

    history = []
    best = None
    prev_violation = np.inf
    converged = False
    it = 0
    for it in range(1, cfg.max_outer + 1):
        res = minimize(
            lagrangian,
            x[free] / s,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": cfg.inner_maxiter, "gtol": cfg.inner_gtol, "ftol": 1e-15, "maxcor": 20},
        )
        x = full(res.x)
        f, _ = nlp.objective(x)
        c, _ = eq(x)
        g, _ = ineq(x)
        viol = violation_of(c, g)
        history.append(
            {"iteration": it, "objective": float(f), "violation": viol, "penalty": mu, "inner_iterations": int(res.nit)}
        )
        log.debug("AL outer %d: f=%.6e viol=%.3e mu=%.1e nit=%d", it, f, viol, mu, res.nit)
        if callback is not None:
            callback(x, history[-1])
        candidate = None
        settled = False
        if viol <= cfg.tolerance:
            candidate = (x.copy(), float(f), viol)
            settled = res.success or np.max(np.abs(res.jac), initial=0.0) < 1e-6
        elif restore is not None and viol <= cfg.restore_below:
            xr, vr = restore(x)
            log.debug("restore: violation %.3e -> %.3e", viol, vr)
            if vr <= cfg.tolerance:
                fr = float(nlp.objective(xr)[0])
                candidate = (xr, fr, vr)
                settled = abs(fr - f) <= cfg.restore_rtol * max(abs(f), 1e-12)
        accepted = candidate is not None and (best is None or candidate[1] <= best[1])
        history[-1]["accepted"] = accepted
        if accepted:
            best = candidate
        if candidate is not None and settled:
            converged = True
            break
        if viol <= cfg.required_decrease * prev_violation or viol <= cfg.tolerance:
            lam = lam + mu * c
            nu = np.maximum(0.0, nu + mu * g)
            prev_violation = viol
        else:
            mu = min(mu * cfg.penalty_growth, cfg.max_penalty)

    if best is not None:
        x = best[0]
        converged = True
    f, _ = nlp.objective(x)
    c, _ = eq(x)
    g, _ = ineq(x)
    return ALResult(x, float(f), violation_of(c, g), it, converged, lam, nu, history)


def check_gradient(fun: Callable, x: np.ndarray, k: int = 5, step: float = 1e-6, seed: int = 0, free=None) -> float:
    """Worst relative error between analytic and central-difference directional derivatives.

    ``fun(x)`` returns ``(value, gradient)``; ``value`` may be a scalar or a
    vector, in which case ``gradient`` is a callable VJP and every output
    component is checked through random output weights.
    """
    if k < 1:
        raise ValueError("need at least one direction")
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    worst = 0.0
    for _ in range(k):
        d = rng.normal(size=x.size)
        if free is not None:
            d = d * free
        d /= np.linalg.norm(d) or 1.0
        v0, g0 = fun(x)
        if np.ndim(v0) == 0:
            analytic = float(np.dot(g0, d))
            fp, _ = fun(x + step * d)
            fm, _ = fun(x - step * d)
            numeric = (fp - fm) / (2 * step)
        else:
            w = rng.normal(size=np.size(v0))
            analytic = float(np.dot(g0(w), d))
            fp, _ = fun(x + step * d)
            fm, _ = fun(x - step * d)
            numeric = float(w @ (np.asarray(fp) - np.asarray(fm))) / (2 * step)
        denom = max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst
