"""Shot sampling, decay fits and distribution distances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

N_STARTS = 8


@dataclass
class ShotDistribution:
    n_qubits: int
    counts: dict  # bitstring -> count
    shots: int

    def __post_init__(self):
        if self.shots <= 0:
            raise ValueError("need a positive shot count")
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts must sum to the shot total")

    def vector(self) -> np.ndarray:
        out = np.zeros(2**self.n_qubits)
        for b, k in self.counts.items():
            out[int(b, 2)] = k
        return out

    def probabilities(self) -> np.ndarray:
        return self.vector() / self.shots

    def probability(self, bitstring: str) -> float:
        return self.counts.get(bitstring, 0) / self.shots

    def std(self, bitstring: str) -> float:
        """Normal approximation to the binomial."""
        p = self.probability(bitstring)
        return float(np.sqrt(p * (1 - p) / self.shots))


def _check_probabilities(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0 or p.size & (p.size - 1):
        raise ValueError("probabilities must be a vector of length 2**n")
    if np.any(p < -1e-12) or abs(p.sum() - 1) > 1e-9:
        raise ValueError("probabilities must be nonnegative and sum to 1")
    return np.clip(p, 0.0, None) / np.clip(p, 0.0, None).sum()


def sample_shots(probabilities, shots: int, seed: int) -> ShotDistribution:
    p = _check_probabilities(probabilities)
    if shots <= 0:
        raise ValueError("need a positive shot count")
    n = int(np.log2(p.size))
    draws = np.random.default_rng(seed).multinomial(shots, p)
    counts = {format(k, f"0{n}b"): int(c) for k, c in enumerate(draws) if c}
    return ShotDistribution(n, counts, shots)


# fits -------------------------------------------------------------------------------


def _standard_errors(res, n_params: int, absolute: bool = False) -> np.ndarray:
    jac = res.jac
    dof = max(1, res.fun.size - n_params)
    s2 = 1.0 if absolute else float(res.fun @ res.fun) / dof
    jtj = jac.T @ jac
    if np.linalg.cond(jtj) > 1e14:
        raise np.linalg.LinAlgError("singular Jacobian")
    return np.sqrt(np.clip(np.diag(np.linalg.inv(jtj)) * s2, 0.0, None))


@dataclass
class DdFit:
    gamma: float  # 1/us
    J: float  # rad/us
    gamma_err: float
    J_err: float
    fixed_J: bool
    residual: float  # residual norm
    ok: bool = True
    message: str = ""

    def model(self, t) -> np.ndarray:
        return dd_model(np.asarray(t, dtype=float), self.gamma, self.J)


def dd_model(t, gamma, J):
    return 0.5 * (1 + np.exp(-gamma * t) * np.cos(J * t))


def _frequency_guesses(t, y) -> list:
    t = np.asarray(t, float)
    span = t.max() - t.min()
    if span <= 0:
        return [0.0]
    dt = np.min(np.diff(np.sort(t))) if t.size > 1 else span
    nyq = np.pi / max(dt, 1e-12)
    grid = np.linspace(0.0, nyq, 512)
    yc = y - y.mean()
    power = np.abs(np.exp(-1j * np.outer(grid, t)) @ yc)
    peak = grid[int(np.argmax(power))]
    guesses = [0.0, peak, 0.5 * peak, 1.5 * peak, 2 * np.pi / span, 0.25 * nyq, 0.5 * nyq, 0.75 * nyq]
    return guesses[:N_STARTS]


def _fold_alias(J: float, t) -> float:
    """Map ``J`` into the Nyquist band of a uniform time grid (aliases fit identically)."""
    d = np.diff(np.sort(t))
    if d.size == 0 or np.ptp(d) > 1e-9 * d.max():
        return J
    w = 2 * np.pi / d[0]
    J = J % w
    return min(J, w - J)


def fit_dd(times, populations, fix_J_zero: bool = False) -> DdFit:
    """Least-squares fit of ``(1 + exp(-gamma t) cos(J t)) / 2`` (t in us).

    Levenberg-Marquardt from ``N_STARTS`` frequency initializations; the
    lowest-residual fit with ``gamma >= 0`` wins.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(populations, dtype=float)
    if t.size < 4 or t.shape != y.shape:
        raise ValueError("need at least four matching (time, population) points")
    span = max(t.max() - t.min(), 1e-12)
    # initial decay from the envelope of 2y-1
    env = np.clip(np.abs(2 * y - 1), 1e-6, 1.0)
    g0 = max(0.0, -np.polyfit(t, np.log(env), 1)[0]) if np.ptp(t) > 0 else 0.0

    best = None
    starts = [0.0] if fix_J_zero else _frequency_guesses(t, y)
    for J0 in starts:
        for gam0 in (g0, 1.0 / span):
            if fix_J_zero:
                fun = lambda p: dd_model(t, p[0], 0.0) - y  # noqa: E731
                x0 = [gam0]
            else:
                fun = lambda p: dd_model(t, p[0], p[1]) - y  # noqa: E731
                x0 = [gam0, J0]
            try:
                res = least_squares(fun, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000)
            except ValueError:
                continue
            gam = res.x[0]
            if gam < -1e-9:
                continue
            rss = float(res.fun @ res.fun)
            if best is None or rss < best[0] - 1e-18:
                best = (rss, res)
    if best is None:
        return DdFit(np.nan, np.nan, np.nan, np.nan, fix_J_zero, np.inf, False, "no admissible fit")
    rss, res = best
    gam = max(0.0, float(res.x[0]))
    J = 0.0 if fix_J_zero else _fold_alias(abs(float(res.x[1])), t)
    try:
        errs = _standard_errors(res, res.x.size)
    except np.linalg.LinAlgError:
        if rss < 1e-20:
            return DdFit(gam, J, 0.0, 0.0, fix_J_zero, float(np.sqrt(rss)), True, "exact fit")
        return DdFit(gam, J, np.nan, np.nan, fix_J_zero, float(np.sqrt(rss)), False, "singular Jacobian")
    return DdFit(gam, J, float(errs[0]), 0.0 if fix_J_zero else float(errs[1]), fix_J_zero, float(np.sqrt(rss)))


@dataclass
class RbFit:
    a: float
    p: float
    b: float
    a_err: float
    p_err: float
    b_err: float
    residual: float
    ok: bool = True
    message: str = ""

    @property
    def epc(self) -> float:
        return (1 - self.p) / 2

    @property
    def epc_err(self) -> float:
        return self.p_err / 2


def rb_model(m, a, p, b):
    with np.errstate(over="ignore"):  # trial p > 1 during the fit
        return a * p ** np.asarray(m, dtype=float) + b


def fit_rb(lengths, survival, sigma=None, shots: int | None = None) -> RbFit:
    """Fit ``a p^m + b``.

    ``sigma`` gives known per-point standard deviations; with ``shots`` the
    binomial deviations are taken from the fitted model and the fit is
    repeated once. Known deviations are treated as absolute when forming
    standard errors.
    """
    m = np.asarray(lengths, dtype=float)
    y = np.asarray(survival, dtype=float)
    if np.unique(m).size < 3 or m.shape != y.shape:
        raise ValueError("need at least three distinct lengths")
    if np.ptp(y) < 1e-12:
        # no decay at all: p = 1, the split between a and b is unidentifiable
        return RbFit(0.5, 1.0, float(y[0]) - 0.5, 0.0, 0.0, 0.0, 0.0, True, "constant survival")
    excess = np.clip(y - 0.5, 1e-6, None)
    slope = np.polyfit(m, np.log(excess), 1)[0]
    p0 = float(np.clip(np.exp(slope), 0.5, 1 - 1e-9))
    starts = [[0.5, pp, 0.5] for pp in (p0, 0.99, 0.999, 0.9)]

    def run(w, starts):
        best = None
        for x0 in starts:
            res = least_squares(lambda q: w * (rb_model(m, *q) - y), x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000)
            rss = float(res.fun @ res.fun)
            if 0.0 <= res.x[1] <= 1.0 + 1e-9 and (best is None or rss < best[0]):
                best = (rss, res)
        return best

    absolute = sigma is not None or shots is not None
    w = np.ones_like(y) if sigma is None else 1.0 / np.maximum(np.asarray(sigma, float), 1e-12)
    if shots is not None and sigma is None:
        first = run(w, starts)
        if first is not None:
            mu = np.clip(rb_model(m, *first[1].x), 0.5 / shots, 1 - 0.5 / shots)
            w = 1.0 / np.sqrt(mu * (1 - mu) / shots)
            starts = [first[1].x] + starts
    best = run(w, starts)
    if best is None:
        return RbFit(*([np.nan] * 6), np.inf, False, "decay parameter outside [0, 1]")
    rss, res = best
    try:
        errs = _standard_errors(res, 3, absolute)
    except np.linalg.LinAlgError:
        return RbFit(*map(float, res.x), np.nan, np.nan, np.nan, float(np.sqrt(rss)), False, "singular Jacobian")
    a, p, b = map(float, res.x)
    return RbFit(a, min(p, 1.0), b, *map(float, errs), float(np.sqrt(rss)))


def sinusoid_fit(x, y, model, starts) -> tuple:
    """Generic one-parameter multi-start LM fit; returns (param, residual norm)."""
    best = None
    for s in starts:
        res = least_squares(lambda q: model(x, q[0]) - y, [s], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        rss = float(res.fun @ res.fun)
        if best is None or rss < best[0] - 1e-15 or (abs(rss - best[0]) <= 1e-15 and abs(res.x[0]) < abs(best[1])):
            best = (rss, float(res.x[0]))
    return best[1], float(np.sqrt(best[0]))


# distances --------------------------------------------------------------------------

PSEUDO_COUNT = 0.5
IDEAL_FLOOR = 1e-12


def kl_divergence(p, q, pseudo_count: float = PSEUDO_COUNT) -> float:
    """KL(p_hat || q) with ``pseudo_count`` added to every outcome of ``p`` and ``q`` floored."""
    q = np.maximum(np.asarray(q, dtype=float), IDEAL_FLOOR)
    if isinstance(p, ShotDistribution):
        counts = p.vector()
    else:
        counts = np.asarray(p, dtype=float)
    if counts.shape != q.shape:
        raise ValueError("distributions live on different outcome spaces")
    c = counts + pseudo_count
    ph = c / c.sum()
    mask = ph > 0
    return float(max(0.0, np.sum(ph[mask] * np.log(ph[mask] / q[mask]))))


def bootstrap_kl(dist: ShotDistribution, q, iterations: int = 1000, seed: int = 0, pseudo_count: float = PSEUDO_COUNT) -> float:
    """Std of the KL statistic over resampled shots (multinomial resampling of the counts)."""
    rng = np.random.default_rng(seed)
    counts = dist.vector()
    p = counts / counts.sum()
    stats = [kl_divergence(rng.multinomial(dist.shots, p).astype(float), q, pseudo_count) for _ in range(iterations)]
    return float(np.std(stats))


def ground_population(probabilities) -> float:
    return float(np.asarray(probabilities)[0])


@dataclass
class FitReport:
    protocol: str
    parameters: dict
    errors: dict
    residual: float
    ok: bool
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "parameters": self.parameters,
            "errors": self.errors,
            "residual_norm": self.residual,
            "ok": self.ok,
            **self.extra,
        }
