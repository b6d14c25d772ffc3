"""Numerical kernels: Frank-Wolfe on the simplex, LP wrappers, concave ascent."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, minimize

FW_TOL = 1e-8
FW_MAX_ITER = 10_000


@dataclass
class FWResult:
    w: np.ndarray
    value: float
    gap: float
    iterations: int
    converged: bool


def _line_search(grad, w, d, t_max, iters=60):
    """Maximize a concave function along ``w + t d`` on ``[0, t_max]`` by bisection on the slope."""
    slope = float(grad(w + t_max * d) @ d)
    if slope >= 0:
        return t_max
    lo, hi = 0.0, t_max
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        s = float(grad(w + mid * d) @ d)
        if s > 0:
            lo = mid
        elif s < 0 or np.isnan(s):
            hi = mid
        else:
            return mid
        if hi - lo <= 1e-16 * max(1.0, t_max):
            break
    return lo


def frank_wolfe_simplex(objective, gradient, dim, tol=FW_TOL, max_iter=FW_MAX_ITER, start=None) -> FWResult:
    """Maximize a concave function over the probability simplex with away steps.

    Parameters
    ----------
    objective : callable
        ``w -> float``; concave on the simplex.
    gradient : callable
        ``w -> ndarray`` supergradient.
    dim : int
        Dimension of the simplex.
    tol : float
        Stop once the Frank-Wolfe duality gap ``max_i g_i - <g, w>`` is below this.
    max_iter : int
    start : ndarray, optional
        Initial point; defaults to the barycenter.

    Returns
    -------
    FWResult
    """
    w = np.full(dim, 1.0 / dim) if start is None else np.array(start, dtype=float)
    gap = np.inf
    for k in range(max_iter + 1):
        g = gradient(w)
        s = int(np.argmax(g))
        gap = float(g[s] - g @ w)
        if gap <= tol:
            return FWResult(w, float(objective(w)), gap, k, True)
        if k == max_iter:
            break
        active = np.flatnonzero(w > 0)
        v = int(active[np.argmin(g[active])])
        away_gap = float(g @ w - g[v])
        if gap >= away_gap or w[v] >= 1.0:
            d = -w.copy()
            d[s] += 1.0
            t_max, drop = 1.0, None
        else:
            d = w.copy()
            d[v] -= 1.0
            t_max, drop = w[v] / (1.0 - w[v]), v
        t = _line_search(gradient, w, d, t_max)
        w = w + t * d
        if drop is not None and t >= t_max:
            w[drop] = 0.0
        w = np.clip(w, 0.0, None)
        w /= w.sum()
    return FWResult(w, float(objective(w)), gap, max_iter, False)


@dataclass
class LPResult:
    status: str  # "optimal", "unbounded", "infeasible", "error"
    x: np.ndarray | None
    value: float
    ray: np.ndarray | None = None


def lp_maximize(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=(None, None)) -> LPResult:
    """Maximize ``c @ x`` subject to linear constraints (HiGHS)."""
    c = np.asarray(c, dtype=float)
    res = linprog(-c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status == 0:
        return LPResult("optimal", res.x, float(-res.fun))
    if res.status == 3:
        return LPResult("unbounded", None, np.inf)
    if res.status == 2:
        return LPResult("infeasible", None, -np.inf)
    return LPResult("error", None, np.nan)


def concave_ascent(objective, x0, gradient=None, bounds=None, gtol=1e-12, maxiter=20_000):
    """Maximize a smooth concave function with L-BFGS(-B); returns ``(value, x, converged)``."""
    fun = lambda z: -objective(z)
    jac = (lambda z: -gradient(z)) if gradient is not None else None
    res = minimize(fun, np.asarray(x0, dtype=float), jac=jac, method="L-BFGS-B", bounds=bounds,
                   options={"gtol": gtol, "ftol": 1e-15, "maxiter": maxiter, "maxcor": 30})
    return float(-res.fun), res.x, bool(res.success)
