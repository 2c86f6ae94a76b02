"""Least-squares fits of the weight-update law and of short-term decay."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .model import DEPRESS, POTENTIATE, normalize_polarity, shape_function


class FitError(RuntimeError):
    """A fit is degenerate or did not converge; ``last`` holds the final iterate if any."""

    def __init__(self, message: str, last=None):
        super().__init__(message)
        self.last = last


class NonMonotoneWarning(UserWarning):
    """Trace direction reverses beyond the noise estimate."""


@dataclass
class NonlinearityFit:
    nu: float
    g_min: float
    g_max: float
    residual: float  # RMS, S
    polarity: str

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _projection(nu: float, x: np.ndarray, g: np.ndarray):
    """Best ``alpha + beta * f_nu(x)`` for fixed ``nu``: coefficients and sum of squares."""
    f = shape_function(x, nu)
    A = np.column_stack([np.ones_like(x), f])
    coef, *_ = np.linalg.lstsq(A, g, rcond=None)
    r = g - A @ coef
    return coef, float(r @ r)


def fit_nonlinearity(trace, polarity: Optional[str] = None, nu_bounds=(-30.0, 30.0)) -> NonlinearityFit:
    """Fit the update law to one monotone branch.

    ``trace`` is an array of conductances starting at the branch origin (or
    a :class:`~ecram_twin.synapse.metrics.PulseTrace`, whose longest run of
    ``polarity`` is used).  Readings are placed at equally spaced normalised
    pulse numbers.  The linear amplitude is eliminated analytically and
    ``nu`` found by a bounded scalar search.
    """
    from .metrics import PulseTrace

    if isinstance(trace, PulseTrace):
        pol = normalize_polarity(polarity or POTENTIATE)
        g = trace.branch(pol)
        if g is None:
            raise FitError(f"trace has no {pol} pulses")
    else:
        g = np.asarray(trace, dtype=float)
        pol = None if polarity is None else normalize_polarity(polarity)
    g = np.asarray(g, dtype=float)
    if g.size < 5:
        raise FitError("need at least 5 points to fit the nonlinearity")
    span = g[-1] - g[0]
    scale = np.max(np.abs(g))
    if not abs(span) > 1e-12 * scale:
        raise FitError("trace has no net conductance change; fit is singular")
    if pol is None:
        pol = POTENTIATE if span > 0 else DEPRESS
    steps = np.diff(g)
    wrong = np.sign(steps) != np.sign(span)
    if np.any(wrong & (np.abs(steps) > 3 * np.median(np.abs(steps)) + 1e-15 * scale)):
        warnings.warn("trace is not monotone beyond noise", NonMonotoneWarning, stacklevel=2)

    x = np.linspace(0.0, 1.0, g.size)
    # Depression runs g_max -> g_min along the mirrored law, i.e. alpha + beta f with beta < 0.
    gs = (g - g[0]) / span
    grid = np.linspace(nu_bounds[0], nu_bounds[1], 241)
    sse = np.array([_projection(nu, x, gs)[1] for nu in grid])
    k = int(np.argmin(sse))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    if lo == hi:
        hi = lo + 1e-6
    res = minimize_scalar(lambda nu: _projection(nu, x, gs)[1], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12, "maxiter": 500})
    nu = float(res.x)
    if abs(nu) < 1e-10:
        nu = 0.0
    coef, ss = _projection(nu, x, gs)
    alpha = g[0] + span * coef[0]
    beta = span * coef[1]
    if pol == POTENTIATE:
        g_min, g_max = alpha, alpha + beta
    else:
        g_max, g_min = alpha, alpha + beta
    rms = float(np.sqrt(ss / g.size)) * abs(span)
    return NonlinearityFit(nu, float(g_min), float(g_max), rms, pol)


# ---------------------------------------------------------------------------
# Short-term decay
# ---------------------------------------------------------------------------


@dataclass
class StpFit:
    """``P(t_off) = C1 exp(-t_off / tau) + P0`` with ``C1``, ``P0`` in percent and ``tau`` in s."""

    C1: float
    tau: float
    P0: float
    residual: float = 0.0  # RMS, percent
    covariance: np.ndarray = field(default_factory=lambda: np.full((3, 3), np.nan))
    iterations: int = 0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    def predict(self, t_off):
        return self.C1 * np.exp(-np.asarray(t_off, dtype=float) / self.tau) + self.P0

    def to_dict(self) -> dict:
        cov = np.asarray(self.covariance, dtype=float)
        return {
            "params": {"C1_percent": self.C1, "tau_s": self.tau, "P0_percent": self.P0},
            "residual": self.residual,
            "covariance": [[None if not np.isfinite(v) else float(v) for v in row] for row in cov],
            "iterations": self.iterations,
        }


def stp_model(t_off, C1: float, tau: float, P0: float):
    return C1 * np.exp(-np.asarray(t_off, dtype=float) / tau) + P0


def fit_stp_decay(t_off: Sequence[float], P: Sequence[float], max_iter: int = 200, tol: float = 1e-14) -> StpFit:
    """Damped Gauss-Newton (Levenberg-Marquardt) fit of single-exponential decay.

    ``tau`` is iterated in log space so it stays positive.  Starts from
    ``C1 = P(min t_off) - P(max t_off)``, ``tau = median(t_off)``,
    ``P0 = P(max t_off)``.
    """
    t = np.asarray(t_off, dtype=float)
    y = np.asarray(P, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t_off and P must be 1-D arrays of equal length")
    if t.size < 4:
        raise FitError("need at least 4 points")
    if np.any(t < 0) or not np.all(np.isfinite(t)) or not np.all(np.isfinite(y)):
        raise ValueError("t_off must be non-negative and all values finite")
    yscale = max(np.max(np.abs(y)), 1e-300)
    if np.ptp(y) <= 1e-12 * yscale:
        raise FitError("constant data: decay time is unidentifiable (C1 = 0)", last=(0.0, np.nan, float(y.mean())))
    if np.ptp(t) == 0:
        raise FitError("all t_off equal: decay time is unidentifiable")

    order = np.argsort(t)
    theta = np.array([y[order[0]] - y[order[-1]], np.log(np.median(t[t > 0]) if np.any(t > 0) else 1.0),
                      y[order[-1]]])

    def residuals(th):
        return stp_model(t, th[0], np.exp(th[1]), th[2]) - y

    def jacobian(th):
        tau = np.exp(th[1])
        e = np.exp(-t / tau)
        return np.column_stack([e, th[0] * e * t / tau, np.ones_like(t)])

    r = residuals(theta)
    cost = float(r @ r)
    lam = 1e-3
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        J = jacobian(theta)
        JTJ = J.T @ J
        g = J.T @ r
        if np.max(np.abs(g)) <= tol * max(1.0, yscale) ** 2 * 1e-6 or cost <= (1e-15 * yscale) ** 2 * t.size:
            converged = True
            break
        improved = False
        for _ in range(40):
            A = JTJ + lam * np.diag(np.maximum(np.diag(JTJ), 1e-300))
            try:
                step = -np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            trial = theta + step
            r_new = residuals(trial)
            c_new = float(r_new @ r_new)
            if np.isfinite(c_new) and c_new < cost:
                rel = np.max(np.abs(step) / (np.abs(theta) + 1e-12))
                theta, r, cost_old, cost = trial, r_new, cost, c_new
                lam = max(lam / 3, 1e-15)
                improved = True
                break
            lam *= 4
        if not improved:
            converged = True  # no descent direction left: at a (local) minimum
            break
        if rel < tol or (cost_old - cost) <= tol * cost_old:
            converged = True
            break
    if not converged:
        raise FitError(f"STP fit did not converge in {max_iter} iterations",
                       last=(theta[0], float(np.exp(theta[1])), theta[2]))
    C1, tau, P0 = float(theta[0]), float(np.exp(theta[1])), float(theta[2])
    if abs(C1) <= 1e-12 * yscale:
        raise FitError("fitted amplitude vanishes: decay time is unidentifiable", last=(C1, tau, P0))
    e = np.exp(-t / tau)
    Jp = np.column_stack([e, C1 * e * t / tau**2, np.ones_like(t)])
    dof = t.size - 3
    cov = np.full((3, 3), np.nan)
    if dof > 0:
        s2 = cost / dof
        try:
            cov = s2 * np.linalg.inv(Jp.T @ Jp)
        except np.linalg.LinAlgError:
            pass
    return StpFit(C1, tau, P0, float(np.sqrt(cost / t.size)), cov, it)
