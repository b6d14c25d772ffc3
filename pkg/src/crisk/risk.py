"""Conditional convex risk measures and an axiom checker.

Every measure is bound to a ``SubAlgebra`` and maps random variables of shape
``(..., n)`` to conditional scalars of shape ``(..., m)``.
"""

from __future__ import annotations

import importlib
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp, xlogy

from . import solvers
from .conditional import cond_norm
from .errors import ConvergenceError, InfeasibleError, ParameterError, ValidationError
from .l0 import as_rv, block_apply, check_cond, check_rv
from .measure_algebra import SubAlgebra

VALUE_RANGE = 10.0
VERTEX_ENUM_CAP = 20_000  # active-set combinations tried before falling back to one LP per row


class RiskMeasure:
    """Base class. Subclasses implement ``evaluate`` for batched inputs."""

    kind = "abstract"

    def __init__(self, alg: SubAlgebra, name: str | None = None):
        self.alg = alg
        self.name = name or self.kind

    def evaluate(self, x) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(x)

    def to_json(self) -> dict:
        return {"kind": self.kind}

    def __repr__(self):
        params = {k: v for k, v in self.to_json().items() if k != "kind"}
        inner = ", ".join(f"{k}={v!r}" for k, v in params.items())
        return f"{type(self).__name__}({inner})"


class EntropicRisk(RiskMeasure):
    """``(1/gamma) log E[exp(-gamma x) | F]``."""

    kind = "entropic"

    def __init__(self, alg, gamma: float = 1.0, name=None):
        if not gamma > 0 or not np.isfinite(gamma):
            raise ParameterError(f"entropic risk needs gamma > 0, got {gamma}")
        super().__init__(alg, name)
        self.gamma = float(gamma)

    def evaluate(self, x):
        x = check_rv(self.alg, x)
        g = self.gamma
        pbar = self.alg.cond_probs
        return block_apply(self.alg, -g * x,
                           lambda v, k: logsumexp(v, b=pbar[list(self.alg.blocks[k])], axis=-1) / g)

    def gibbs_weights(self, x) -> np.ndarray:
        """Per-block probabilities proportional to ``pbar_i exp(-gamma x_i)``."""
        x = check_rv(self.alg, x)
        z = -self.gamma * x
        out = np.empty_like(z)
        for b in self.alg.blocks:
            idx = list(b)
            zb = z[..., idx] - z[..., idx].max(axis=-1, keepdims=True)
            wb = self.alg.cond_probs[idx] * np.exp(zb)
            out[..., idx] = wb / wb.sum(axis=-1, keepdims=True)
        return out

    def gradient(self, x) -> np.ndarray:
        """d rho_b / d x_i for the block containing atom i (zero elsewhere)."""
        return -self.gibbs_weights(x)

    def to_json(self):
        return {"kind": self.kind, "gamma": self.gamma}


class WorstCaseRisk(RiskMeasure):
    """Blockwise maximum loss ``max_{i in b} -x_i``."""

    kind = "worst_case"

    def evaluate(self, x):
        x = check_rv(self.alg, x)
        return block_apply(self.alg, -x, lambda v, _: v.max(axis=-1))


class AVaR(RiskMeasure):
    """Average value at risk at level ``lam`` (``lam = 1`` is the conditional mean loss).

    Evaluated through the Rockafellar-Uryasev minimization, whose minimizer is the
    upper ``lam``-quantile of the loss; the quantile comes from a stable sort.
    """

    kind = "avar"

    def __init__(self, alg, lam: float = 0.05, name=None):
        if not 0.0 < lam <= 1.0:
            raise ParameterError(f"AVaR level must lie in (0, 1], got {lam}")
        super().__init__(alg, name)
        self.lam = float(lam)

    def _block(self, loss, k):
        idx = list(self.alg.blocks[k])
        pbar = self.alg.cond_probs[idx]
        order = np.argsort(-loss, axis=-1, kind="stable")
        sorted_loss = np.take_along_axis(loss, order, axis=-1)
        cum = np.cumsum(pbar[order], axis=-1)
        cum[..., -1] = np.inf
        k_star = np.argmax(cum >= self.lam, axis=-1)
        t = np.take_along_axis(sorted_loss, k_star[..., None], axis=-1)
        excess = np.maximum(loss - t, 0.0) @ pbar
        return t[..., 0] + excess / self.lam

    def evaluate(self, x):
        x = check_rv(self.alg, x)
        return block_apply(self.alg, -x, self._block)

    def to_json(self):
        return {"kind": self.kind, "lambda": self.lam}


class PenaltyOracle:
    """Per-block penalty ``alpha_b(w)`` on the simplex of block weights."""

    form = "abstract"

    def __init__(self, alg: SubAlgebra, tol: float = solvers.FW_TOL):
        self.alg = alg
        self.tol = tol

    def value(self, b: int, w) -> float:
        raise NotImplementedError

    def maximize(self, b: int, loss) -> tuple[float, np.ndarray, int, dict]:
        """``max_w <loss, w> - alpha_b(w)`` over the simplex: value, maximizer, iterations, certificate."""
        raise NotImplementedError

    def minimum(self, b: int) -> float:
        return -self.maximize(b, np.zeros(len(self.alg.blocks[b])))[0]

    def to_json(self) -> dict:
        return {"form": self.form}


class PolyhedralPenalty(PenaltyOracle):
    """``alpha_b(w) = max_k <a_k, w> + c_k`` on an optional polyhedral domain, +inf off it.

    ``pieces[b]`` is a list of ``(a, c)``; ``domain[b]`` a list of ``(a, beta)``
    meaning ``<a, w> <= beta``.
    """

    form = "polyhedral"

    def __init__(self, alg, pieces, domain=None, tol=1e-9):
        super().__init__(alg, tol)
        if len(pieces) != alg.m:
            raise ValidationError(f"{len(pieces)} penalty blocks for {alg.m} blocks", field="blocks")
        self.pieces = []
        self.domain = []
        for b in range(alg.m):
            size = len(alg.blocks[b])
            pcs = pieces[b]
            if not pcs:
                raise ValidationError(f"penalty block {b} has no affine pieces", field="pieces", index=b)
            A = np.array([np.asarray(a, dtype=float) for a, _ in pcs])
            c = np.array([float(cc) for _, cc in pcs])
            if A.shape != (len(pcs), size):
                raise ValidationError(f"penalty block {b}: slopes must have length {size}",
                                      field="pieces", index=b)
            self.pieces.append((A, c))
            dom = (domain or [None] * alg.m)[b] or []
            D = np.array([np.asarray(a, dtype=float) for a, _ in dom]).reshape(len(dom), size)
            beta = np.array([float(bb) for _, bb in dom])
            self.domain.append((D, beta))
        self._vertex_cache = {}

    def value(self, b, w):
        w = np.asarray(w, dtype=float)
        D, beta = self.domain[b]
        if D.size and np.any(D @ w > beta + self.tol):
            return np.inf
        A, c = self.pieces[b]
        return float(np.max(A @ w + c))

    def vertices(self, b) -> np.ndarray | None:
        """Vertices ``(w, t)`` of the epigraph of the penalty over the simplex, or None past the cap.

        The optimum of ``<loss, w> - t`` is attained at one of them, so
        evaluation reduces to a max over this finite set.
        """
        if b in self._vertex_cache:
            return self._vertex_cache[b]
        A, c = self.pieces[b]
        D, beta = self.domain[b]
        size = A.shape[1]
        G = np.vstack([np.hstack([A, -np.ones((len(A), 1))]),
                       np.hstack([D, np.zeros((len(D), 1))]),
                       np.hstack([-np.eye(size), np.zeros((size, 1))])])
        h = np.concatenate([-c, beta, np.zeros(size)])
        eq = np.append(np.ones(size), 0.0)
        verts = None
        if math.comb(len(G), size) <= VERTEX_ENUM_CAP:
            found = []
            for rows in itertools.combinations(range(len(G)), size):
                M = np.vstack([G[list(rows)], eq])
                if abs(np.linalg.det(M)) < 1e-12:
                    continue
                z = np.linalg.solve(M, np.append(h[list(rows)], 1.0))
                if np.all(G @ z <= h + 1e-9 * (1 + np.abs(h))):
                    found.append(z)
            if not found:
                raise InfeasibleError(f"penalty is +inf on the whole simplex of block {b}", block=b)
            verts = np.unique(np.round(np.array(found), 12), axis=0)
        self._vertex_cache[b] = verts
        return verts

    def batch_maximize(self, b, losses) -> np.ndarray | None:
        """Values of ``max_w <loss, w> - alpha_b(w)`` for a stack of losses, None if enumeration was capped."""
        V = self.vertices(b)
        if V is None:
            return None
        return np.max(np.asarray(losses) @ V[:, :-1].T - V[:, -1], axis=-1)

    def maximize(self, b, loss):
        A, c = self.pieces[b]
        D, beta = self.domain[b]
        size = A.shape[1]
        # variables (w, t): maximize <loss, w> - t with t >= A w + c
        obj = np.append(np.asarray(loss, dtype=float), -1.0)
        A_ub = np.hstack([A, -np.ones((A.shape[0], 1))])
        b_ub = -c
        if D.size:
            A_ub = np.vstack([A_ub, np.hstack([D, np.zeros((D.shape[0], 1))])])
            b_ub = np.concatenate([b_ub, beta])
        A_eq = np.append(np.ones(size), 0.0)[None, :]
        bounds = [(0, None)] * size + [(None, None)]
        res = solvers.lp_maximize(obj, A_ub, b_ub, A_eq, [1.0], bounds)
        if res.status == "infeasible":
            raise InfeasibleError(f"penalty is +inf on the whole simplex of block {b}", block=b)
        if res.status != "optimal":
            raise ConvergenceError(f"penalty LP on block {b} ended with status {res.status}", block=b)
        w = np.clip(res.x[:size], 0.0, None)
        w /= w.sum()
        value = float(np.asarray(loss) @ w - self.value(b, w))
        active = [int(k) for k in np.flatnonzero(np.abs(A @ w + c - np.max(A @ w + c)) <= 1e-9)]
        return value, w, 1, {"method": "lp", "active_pieces": active}

    def to_json(self):
        return {
            "form": self.form,
            "blocks": [
                {"pieces": [{"a": a.tolist(), "c": float(cc)} for a, cc in zip(*self.pieces[b])],
                 "domain": [{"a": a.tolist(), "b": float(bb)} for a, bb in zip(*self.domain[b])]}
                for b in range(self.alg.m)
            ],
        }

    @classmethod
    def from_json(cls, alg, data: dict):
        blocks = data.get("blocks")
        if not isinstance(blocks, list):
            raise ValidationError("polyhedral penalty needs a 'blocks' list", field="measures.blocks")
        pieces, domain = [], []
        for k, blk in enumerate(blocks):
            try:
                pieces.append([(p["a"], p["c"]) for p in blk["pieces"]])
                domain.append([(h["a"], h["b"]) for h in blk.get("domain", [])])
            except (KeyError, TypeError):
                raise ValidationError(f"malformed penalty block {k}", field="measures.blocks",
                                      index=k) from None
        return cls(alg, pieces, domain)


class SmoothPenalty(PenaltyOracle):
    """Differentiable penalty maximized by Frank-Wolfe with away steps.

    ``value_fn(b, w)`` and ``grad_fn(b, w)`` must be finite on the relative
    interior of the simplex; the gradient may diverge on its boundary.
    """

    form = "smooth"

    def __init__(self, alg, value_fn: Callable, grad_fn: Callable, tol=solvers.FW_TOL,
                 max_iter=solvers.FW_MAX_ITER, label="smooth"):
        super().__init__(alg, tol)
        self.value_fn = value_fn
        self.grad_fn = grad_fn
        self.max_iter = max_iter
        self.label = label

    @classmethod
    def relative_entropy(cls, alg, gamma=1.0, **kw):
        """``(1/gamma) KL(w || pbar_b)``, the penalty of the entropic measure."""
        def value(b, w):
            pbar = alg.cond_probs[list(alg.blocks[b])]
            return float(np.sum(xlogy(w, w) - xlogy(w, pbar)) / gamma)

        def grad(b, w):
            pbar = alg.cond_probs[list(alg.blocks[b])]
            with np.errstate(divide="ignore"):
                return (np.log(np.maximum(w, 1e-300)) - np.log(pbar) + 1.0) / gamma

        return cls(alg, value, grad, label=f"relative_entropy(gamma={gamma})", **kw)

    def value(self, b, w):
        return float(self.value_fn(b, np.asarray(w, dtype=float)))

    def maximize(self, b, loss):
        loss = np.asarray(loss, dtype=float)
        res = solvers.frank_wolfe_simplex(
            lambda w: loss @ w - self.value_fn(b, w),
            lambda w: loss - self.grad_fn(b, w),
            loss.size, tol=self.tol, max_iter=self.max_iter)
        if not res.converged:
            raise ConvergenceError(f"Frank-Wolfe did not reach gap {self.tol} on block {b}",
                                   block=b, residual=res.gap)
        return res.value, res.w, res.iterations, {"method": "frank_wolfe", "fw_gap": res.gap}

    def to_json(self):
        return {"form": self.form, "label": self.label}


class PenaltyRisk(RiskMeasure):
    """``rho_b(x) = sup_w E_w[-x] - alpha_b(w)`` for a user-supplied penalty."""

    kind = "penalty"

    def __init__(self, alg, oracle: PenaltyOracle, normalize: bool = False, name=None):
        super().__init__(alg, name)
        self.oracle = oracle
        self.normalize = normalize
        self._offset = np.array([oracle.minimum(b) for b in range(alg.m)]) if normalize else np.zeros(alg.m)

    def block_penalty(self, b, w) -> float:
        return self.oracle.value(b, w) - self._offset[b]

    def block_solve(self, b, loss):
        value, w, iters, cert = self.oracle.maximize(b, loss)
        return value + self._offset[b], w, iters, cert

    def evaluate(self, x):
        x = check_rv(self.alg, x)
        flat = x.reshape(-1, self.alg.n)
        out = np.empty((flat.shape[0], self.alg.m))
        batch = getattr(self.oracle, "batch_maximize", None)
        for b, blk in enumerate(self.alg.blocks):
            vals = batch(b, -flat[:, list(blk)]) if batch else None
            if vals is not None:
                out[:, b] = vals + self._offset[b]
                continue
            for r, row in enumerate(flat):
                out[r, b] = self.block_solve(b, -row[list(blk)])[0]
        return out.reshape(x.shape[:-1] + (self.alg.m,))

    def to_json(self):
        return {"kind": self.kind, "normalize": self.normalize, **self.oracle.to_json()}


class CustomRisk(RiskMeasure):
    """Wraps ``fn(alg, x) -> conditional scalar``.

    With ``vectorized=False`` the function is called once per row of a batch.
    """

    kind = "custom"

    def __init__(self, alg, fn: Callable, name=None, vectorized=True, source=None):
        super().__init__(alg, name or getattr(fn, "__name__", "custom"))
        self.fn = fn
        self.vectorized = vectorized
        self.source = source

    def evaluate(self, x):
        x = check_rv(self.alg, x)
        if self.vectorized:
            return check_cond(self.alg, self.fn(self.alg, x), self.name)
        flat = x.reshape(-1, self.alg.n)
        out = np.stack([check_cond(self.alg, self.fn(self.alg, row), self.name) for row in flat])
        return out.reshape(x.shape[:-1] + (self.alg.m,))

    def to_json(self):
        out = {"kind": self.kind}
        if self.source:
            out["callable"] = self.source
        return out


def from_json(alg: SubAlgebra, data: dict, name: str | None = None) -> RiskMeasure:
    """Build a measure from ``{"kind": "entropic", "gamma": 1.0}`` and friends."""
    if not isinstance(data, dict) or "kind" not in data:
        raise ValidationError("risk measure spec needs a 'kind'", field="measures.kind")
    kind = data["kind"]
    try:
        if kind == "entropic":
            return EntropicRisk(alg, float(data.get("gamma", 1.0)), name=name)
        if kind == "worst_case":
            return WorstCaseRisk(alg, name=name)
        if kind == "avar":
            return AVaR(alg, float(data.get("lambda", data.get("lam", 0.05))), name=name)
    except ParameterError as exc:
        raise ValidationError(str(exc), field="measures." + kind) from None
    if kind == "penalty":
        form = data.get("form", "polyhedral")
        if form != "polyhedral":
            raise ValidationError(f"penalty form {form!r} cannot be loaded from JSON",
                                  field="measures.form")
        return PenaltyRisk(alg, PolyhedralPenalty.from_json(alg, data),
                           normalize=bool(data.get("normalize", False)), name=name)
    if kind == "custom":
        target = data.get("callable")
        if not isinstance(target, str) or ":" not in target:
            raise ValidationError("custom measure needs 'callable': 'module:function'",
                                  field="measures.callable")
        mod, _, attr = target.partition(":")
        try:
            fn = getattr(importlib.import_module(mod), attr)
        except (ImportError, AttributeError) as exc:
            raise ValidationError(f"cannot import {target}: {exc}", field="measures.callable") from None
        return CustomRisk(alg, fn, name=name, vectorized=bool(data.get("vectorized", True)),
                          source=target)
    raise ValidationError(f"unknown risk measure kind {kind!r}", field="measures.kind")


def cash_shift(rho: RiskMeasure, x, eta) -> np.ndarray:
    """``rho(x + eta)`` for a conditional scalar ``eta``."""
    return rho(check_rv(rho.alg, x) + as_rv(rho.alg, eta))


# --- axiom checking -------------------------------------------------------

AXIOM_TOLERANCES = {
    "monotonicity": 1e-12,
    "cash_invariance": 1e-12,
    "convexity": 1e-10,
    "conditional_convexity": 1e-10,
    "locality": 1e-12,
    "lipschitz": 1e-10,
}


@dataclass
class AxiomResult:
    passed: bool
    worst_violation: float
    tolerance: float


@dataclass
class AxiomReport:
    measure: str
    trials: int
    seed: int
    results: dict[str, AxiomResult] = field(default_factory=dict)
    rho_zero: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def failed_axioms(self) -> list[str]:
        return [k for k, r in self.results.items() if not r.passed]

    def to_json(self) -> dict:
        return {
            "measure": self.measure,
            "trials": self.trials,
            "seed": self.seed,
            "passed": self.passed,
            "rho_zero": self.rho_zero,
            "axioms": {k: {"passed": r.passed, "worst_violation": r.worst_violation,
                           "tolerance": r.tolerance} for k, r in self.results.items()},
        }


def _worst(v) -> float:
    v = np.asarray(v, dtype=float)
    if np.any(np.isnan(v)):
        return np.inf
    return float(max(0.0, v.max()))


def check_axioms(rho: RiskMeasure, trials: int = 1000, seed: int = 0,
                 tolerances: dict | None = None) -> AxiomReport:
    """Test the risk-measure axioms on random inputs.

    Atom values are drawn uniformly from ``[-10, 10]``. Failures are reported,
    never raised.
    """
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    tol = dict(AXIOM_TOLERANCES, **(tolerances or {}))
    alg = rho.alg
    n, m = alg.n, alg.m
    rng = np.random.default_rng(seed)
    x = rng.uniform(-VALUE_RANGE, VALUE_RANGE, (trials, n))
    y = rng.uniform(-VALUE_RANGE, VALUE_RANGE, (trials, n))
    bump = rng.uniform(0.0, VALUE_RANGE, (trials, n)) * (rng.random((trials, n)) < 0.5)
    eta = rng.uniform(-VALUE_RANGE, VALUE_RANGE, (trials, m))
    r = rng.uniform(0.0, 1.0, (trials, 1))
    r_cond = rng.uniform(0.0, 1.0, (trials, m))
    masks = rng.random((trials, m)) < 0.5

    rx, ry = rho(x), rho(y)
    report = AxiomReport(rho.name, trials, seed, rho_zero=[float(v) for v in rho(np.zeros(n))])

    def record(name, violation):
        w = _worst(violation)
        report.results[name] = AxiomResult(w <= tol[name], w, tol[name])

    record("monotonicity", rho(x + bump) - rx)
    record("cash_invariance", np.abs(rho(x + as_rv(alg, eta)) - (rx - eta)))
    record("convexity", rho(r * x + (1 - r) * y) - (r * rx + (1 - r) * ry))
    rc = as_rv(alg, r_cond)
    record("conditional_convexity",
           rho(rc * x + (1 - rc) * y) - (r_cond * rx + (1 - r_cond) * ry))
    ind = masks.astype(float)
    record("locality", np.abs(ind * rx - ind * rho(as_rv(alg, ind) * x)))
    record("lipschitz", np.abs(rx - ry) - cond_norm(alg, x - y, np.inf))
    return report
