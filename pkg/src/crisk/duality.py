"""Fenchel conjugates, robust representation and attainment of risk measures.

Dual variables ``y`` follow the sign convention ``y <= 0``, ``E[y|F] = -1``.
Internally each block works with probability weights ``w_i = -pbar_i y_i``
on the simplex of its atoms, so that ``E[xy|F]_b = -<w, x_b>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import singledispatch

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import xlogy

from . import solvers
from .conditional import cond_expectation
from .errors import ConvergenceError, InfeasibleError
from .l0 import check_rv
from .measure_algebra import SubAlgebra
from .risk import AVaR, CustomRisk, EntropicRisk, PenaltyRisk, RiskMeasure, WorstCaseRisk

ADMISSIBILITY_TOL = 1e-9
ATTAINMENT_TOL = 1e-8
ASCENT_RADIUS = 50.0


def admissible_blocks(alg: SubAlgebra, y, tol: float = ADMISSIBILITY_TOL) -> np.ndarray:
    """Blocks where ``y <= 0`` and ``E[y|F] = -1`` hold within ``tol``."""
    y = check_rv(alg, y, "y")
    nonpos = np.array([np.all(y[list(b)] <= tol) for b in alg.blocks])
    mean_ok = np.abs(cond_expectation(alg, y) + 1.0) <= tol
    return nonpos & mean_ok


def weights_from_dual(alg: SubAlgebra, y) -> np.ndarray:
    return -alg.cond_probs * check_rv(alg, y, "y")


def dual_from_weights(alg: SubAlgebra, w) -> np.ndarray:
    return -np.asarray(w, dtype=float) / alg.cond_probs


# --- per-kind penalties ---------------------------------------------------

@singledispatch
def block_penalty(rho: RiskMeasure, b: int, w: np.ndarray) -> float:
    """``alpha_b(w)``, the conjugate restricted to block ``b`` at admissible weights."""
    return _ascent_penalty(rho, b, w)


@block_penalty.register
def _(rho: EntropicRisk, b, w):
    pbar = rho.alg.cond_probs[list(rho.alg.blocks[b])]
    return float(np.sum(xlogy(w, w) - xlogy(w, pbar)) / rho.gamma)


@block_penalty.register
def _(rho: WorstCaseRisk, b, w):
    return 0.0


@block_penalty.register
def _(rho: AVaR, b, w):
    pbar = rho.alg.cond_probs[list(rho.alg.blocks[b])]
    return 0.0 if np.all(w <= pbar / rho.lam + ADMISSIBILITY_TOL) else np.inf


@block_penalty.register
def _(rho: PenaltyRisk, b, w):
    return rho.block_penalty(b, w)


def _block_objective(rho: RiskMeasure, b: int, w: np.ndarray):
    idx = list(rho.alg.blocks[b])

    def value(z):
        x = np.zeros(rho.alg.n)
        x[idx] = z
        return -w @ z - rho(x)[b]

    return value


def _ascent_penalty(rho: RiskMeasure, b: int, w: np.ndarray, radius: float = ASCENT_RADIUS,
                    tol: float = 1e-6) -> float:
    """``sup_x -<w, x_b> - rho_b(x)`` by bounded ascent; +inf when doubling the box keeps paying off."""
    f = _block_objective(rho, b, w)
    size = len(rho.alg.blocks[b])
    v1, z1, _ = solvers.concave_ascent(f, np.zeros(size), bounds=[(-radius, radius)] * size)
    v2, _, _ = solvers.concave_ascent(f, z1, bounds=[(-2 * radius, 2 * radius)] * size)
    if not (np.isfinite(v1) and np.isfinite(v2)):
        raise ConvergenceError(f"conjugate ascent produced a non-finite value on block {b}", block=b)
    if v2 - v1 > max(tol, tol * abs(v1)):
        return np.inf
    return max(v1, v2)


def conjugate(rho: RiskMeasure, y) -> np.ndarray:
    """``rho*(y) = esssup_x E[xy|F] - rho(x)`` per block; +inf off the admissible set."""
    alg = rho.alg
    y = check_rv(alg, y, "y")
    ok = admissible_blocks(alg, y)
    # admissibility tolerates y slightly above 0; such weights are clipped to the simplex face
    w = np.clip(weights_from_dual(alg, y), 0.0, None)
    out = np.full(alg.m, np.inf)
    for b in np.flatnonzero(ok):
        out[b] = block_penalty(rho, int(b), w[list(alg.blocks[b])])
    return out


# --- per-kind block maximization -------------------------------------------

@singledispatch
def block_maximize(rho: RiskMeasure, b: int, loss: np.ndarray):
    """Solve ``max_w <loss, w> - alpha_b(w)``; returns value, weights, iterations, certificate."""
    return _supergradient_witness(rho, b, loss)


@block_maximize.register
def _(rho: EntropicRisk, b, loss):
    pbar = rho.alg.cond_probs[list(rho.alg.blocks[b])]
    z = rho.gamma * loss
    w = pbar * np.exp(z - z.max())
    w /= w.sum()
    value = float(loss @ w - block_penalty(rho, b, w))
    return value, w, 0, {"method": "closed_form", "density": "pbar*exp(-gamma x)/Z"}


@block_maximize.register
def _(rho: WorstCaseRisk, b, loss):
    j = int(np.argmax(loss))
    w = np.zeros(loss.size)
    w[j] = 1.0
    return float(loss[j]), w, 0, {"method": "vertex", "vertex": int(rho.alg.blocks[b][j])}


@block_maximize.register
def _(rho: AVaR, b, loss):
    # fractional knapsack: fill the largest losses up to the cap pbar/lambda
    atoms = rho.alg.blocks[b]
    cap = rho.alg.cond_probs[list(atoms)] / rho.lam
    order = np.argsort(-loss, kind="stable")
    w = np.zeros(loss.size)
    left = 1.0
    saturated, fractional = [], None
    for j in order:
        if left <= 0:
            break
        take = min(cap[j], left)
        w[j] = take
        left -= take
        if take == cap[j]:
            saturated.append(int(atoms[j]))
        else:
            fractional = int(atoms[j])
    if left > 1e-12:
        # rounding left the budget short; the last atom absorbs it
        w[order[-1]] += left
    value = float(loss @ w)
    return value, w, 0, {"method": "lp_basis", "saturated": saturated, "fractional": fractional}


@block_maximize.register
def _(rho: PenaltyRisk, b, loss):
    return rho.block_solve(b, loss)


def _numeric_gradient(rho: RiskMeasure, x: np.ndarray, b: int, h: float = 1e-6) -> np.ndarray:
    idx = list(rho.alg.blocks[b])
    pts = np.repeat(x[None, :], 2 * len(idx), axis=0)
    for k, i in enumerate(idx):
        pts[2 * k, i] += h
        pts[2 * k + 1, i] -= h
    vals = rho(pts)[:, b]
    return (vals[0::2] - vals[1::2]) / (2 * h)


def _supergradient_witness(rho: RiskMeasure, b: int, loss: np.ndarray):
    """Witness ``w = -grad rho_b(x)`` for evaluator-only measures.

    The penalty at the witness is computed by an independent ascent, so the
    reported gap is a genuine check of the representation.
    """
    idx = list(rho.alg.blocks[b])
    x = np.zeros(rho.alg.n)
    x[idx] = -loss
    w = np.clip(-_numeric_gradient(rho, x, b), 0.0, None)
    if w.sum() <= 0:
        raise InfeasibleError(f"no supergradient witness on block {b}", block=b)
    w /= w.sum()
    alpha = _ascent_penalty(rho, b, w)
    if not np.isfinite(alpha):
        raise InfeasibleError(f"penalty is +inf at the witness on block {b}", block=b)
    return float(loss @ w - alpha), w, 1, {"method": "supergradient", "penalty": alpha}


@dataclass
class RepresentationResult:
    value: np.ndarray
    maximizer: np.ndarray
    weights: np.ndarray
    gap: np.ndarray
    iterations: list[int]
    certificates: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "value": self.value.tolist(),
            "maximizer": self.maximizer.tolist(),
            "weights": self.weights.tolist(),
            "gap": self.gap.tolist(),
            "iterations": list(self.iterations),
            "certificates": self.certificates,
        }


def represent(rho: RiskMeasure, x) -> RepresentationResult:
    """Robust representation of ``rho(x)``: the maximizing density per block and the gap to ``rho(x)``."""
    alg = rho.alg
    x = check_rv(alg, x)
    value = np.empty(alg.m)
    w = np.empty(alg.n)
    iters, certs = [], []
    for b, blk in enumerate(alg.blocks):
        idx = list(blk)
        v, wb, it, cert = block_maximize(rho, b, -x[idx])
        value[b] = v
        w[idx] = wb
        iters.append(int(it))
        certs.append(cert)
    gap = np.abs(value - rho(x))
    return RepresentationResult(value, dual_from_weights(alg, w), w, gap, iters, certs)


@dataclass
class AttainmentResult:
    attained: np.ndarray
    witness: np.ndarray | None
    residual: np.ndarray
    certificates: list[dict]

    def to_json(self) -> dict:
        return {
            "attained": self.attained.tolist(),
            "witness": None if self.witness is None else self.witness.tolist(),
            "residual": self.residual.tolist(),
            "certificates": self.certificates,
        }


def attainment_check(rho: RiskMeasure, x, tol: float = ATTAINMENT_TOL) -> AttainmentResult:
    """Verify ``rho(x) = E[xy|F] - rho*(y)`` at the representation maximizer.

    The conjugate at the witness is recomputed from scratch, so the residual does
    not just echo the solver's own objective value.
    """
    alg = rho.alg
    x = check_rv(alg, x)
    rep = represent(rho, x)
    y = rep.maximizer
    achieved = cond_expectation(alg, x * y) - conjugate(rho, y)
    residual = np.abs(achieved - rho(x))
    residual = np.where(np.isnan(residual), np.inf, residual)
    attained = residual <= tol
    return AttainmentResult(attained, y if attained.any() else None, residual, rep.certificates)


# --- scalarization -----------------------------------------------------------

class ScalarizedRisk:
    """The static functional ``x -> E_P[rho(x)]``."""

    def __init__(self, rho: RiskMeasure):
        self.rho = rho
        self.alg = rho.alg

    def __call__(self, x) -> np.ndarray:
        return self.rho(x) @ self.alg.block_probs

    def gradient(self, x) -> np.ndarray:
        grad = getattr(self.rho, "gradient", None)
        x = np.asarray(x, dtype=float)
        if grad is not None:
            return grad(x) * self.alg.block_probs[self.alg.atom_block]
        return _scalar_numeric_grad(self, x)

    def conjugate(self, y) -> tuple[float, bool]:
        """``sup_x E[xy] - E[rho(x)]`` by unconstrained concave ascent from zero."""
        y = check_rv(self.alg, y, "y")
        py = self.alg.probs * y
        value, _, ok = solvers.concave_ascent(lambda x: py @ x - self(x), np.zeros(self.alg.n),
                                              gradient=lambda x: py - self.gradient(x))
        return value, ok


def _scalar_numeric_grad(f: ScalarizedRisk, x, h=1e-6):
    n = x.size
    pts = np.concatenate([x + h * np.eye(n), x - h * np.eye(n)])
    vals = f(pts)
    return (vals[:n] - vals[n:]) / (2 * h)


def scalarize(rho: RiskMeasure) -> ScalarizedRisk:
    return ScalarizedRisk(rho)


@dataclass
class ScalarIdentityReport:
    samples: int
    residuals: list[float]
    tolerance: float

    @property
    def max_residual(self) -> float:
        return max(self.residuals) if self.residuals else 0.0

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance

    def to_json(self):
        return {"samples": self.samples, "max_residual": self.max_residual,
                "tolerance": self.tolerance, "passed": self.passed}


def sample_admissible(alg: SubAlgebra, rng: np.random.Generator) -> np.ndarray:
    """A random admissible dual variable (Dirichlet(1) weights on every block)."""
    w = np.empty(alg.n)
    for b in alg.blocks:
        w[list(b)] = rng.dirichlet(np.ones(len(b)))
    return dual_from_weights(alg, w)


def scalar_conjugate_identity_check(rho: RiskMeasure, samples: int = 20, seed: int = 0,
                                    tol: float = 1e-6) -> ScalarIdentityReport:
    """Compare ``E_P[rho*(y)]`` with the conjugate of the scalarized functional."""
    rng = np.random.default_rng(seed)
    scal = scalarize(rho)
    residuals = []
    for _ in range(samples):
        y = sample_admissible(rho.alg, rng)
        lhs = float(conjugate(rho, y) @ rho.alg.block_probs)
        rhs, _ = scal.conjugate(y)
        residuals.append(abs(lhs - rhs))
    return ScalarIdentityReport(samples, residuals, tol)


# --- sublevel sets of the penalty --------------------------------------------

@dataclass
class SublevelReport:
    nonempty: np.ndarray
    bounded: np.ndarray
    diameter: np.ndarray
    min_penalty: np.ndarray
    directions: int

    def to_json(self):
        return {"nonempty": self.nonempty.tolist(), "bounded": self.bounded.tolist(),
                "diameter": self.diameter.tolist(), "min_penalty": self.min_penalty.tolist(),
                "directions": self.directions}


def _probe_directions(size: int, rng: np.random.Generator, count: int) -> np.ndarray:
    """Unit directions in the hyperplane ``sum w = 0``."""
    if size == 1:
        return np.zeros((0, 1))
    if size == 2:
        return np.array([[1.0, -1.0]]) / np.sqrt(2.0)
    basis = np.linalg.svd(np.eye(size) - 1.0 / size)[0][:, : size - 1]
    if size == 3:
        theta = np.linspace(0.0, np.pi, count, endpoint=False)
        coords = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    else:
        coords = rng.normal(size=(count, size - 1))
        coords /= np.linalg.norm(coords, axis=1, keepdims=True)
    dirs = coords @ basis.T
    pairs = []
    for i in range(size):
        for j in range(i + 1, size):
            d = np.zeros(size)
            d[i], d[j] = 1.0, -1.0
            pairs.append(d / np.sqrt(2.0))
    return np.vstack([dirs, pairs])


def _support(rho: RiskMeasure, b: int, d: np.ndarray, c: float) -> float:
    """``max <d, w>`` over ``{alpha_b <= c}`` via ``min_mu mu (c + rho_b(-d/mu))``."""
    idx = list(rho.alg.blocks[b])

    def rho_b(v):
        x = np.zeros(rho.alg.n)
        x[idx] = v
        return rho(x)[b]

    def h(log_mu):
        mu = np.exp(log_mu)
        return mu * (c + rho_b(-d / mu))

    res = minimize_scalar(h, bounds=(-20.0, 20.0), method="bounded", options={"xatol": 1e-10})
    return float(min(res.fun, h(-20.0), h(20.0), np.max(d)))


def sublevel_diagnostics(rho: RiskMeasure, c, directions: int = 180, seed: int = 0) -> SublevelReport:
    """Nonemptiness and diameter of ``{w : alpha_b(w) <= c_b}`` on each block.

    The set is nonempty iff ``c_b >= min alpha_b = -rho_b(0)``. The Euclidean
    diameter is the largest width ``h(d) + h(-d)`` over probe directions, with
    the support function ``h`` obtained from ``rho`` itself.
    """
    alg = rho.alg
    c = np.asarray(c, dtype=float).reshape(alg.m)
    rng = np.random.default_rng(seed)
    min_pen = -rho(np.zeros(alg.n))
    nonempty = c >= min_pen - 1e-12
    diam = np.zeros(alg.m)
    count = 0
    for b, blk in enumerate(alg.blocks):
        if not nonempty[b]:
            diam[b] = np.nan
            continue
        dirs = _probe_directions(len(blk), rng, directions)
        count = max(count, len(dirs))
        widths = [_support(rho, b, d, c[b]) + _support(rho, b, -d, c[b]) for d in dirs]
        diam[b] = max(0.0, max(widths, default=0.0))
    return SublevelReport(nonempty, np.ones(alg.m, dtype=bool), diam, min_pen, count)
