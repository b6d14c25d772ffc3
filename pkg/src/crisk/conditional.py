"""Conditional expectation, conditional Lp norms, and seminorm balls."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import DimensionError, ParameterError, UnknownNameError, ValidationError
from .l0 import block_apply, block_max, check_cond, check_rv
from .measure_algebra import SubAlgebra

Seminorm = Callable[[SubAlgebra, np.ndarray], np.ndarray]


def cond_expectation(alg: SubAlgebra, x) -> np.ndarray:
    """E[x | F] as one value per block.

    Parameters
    ----------
    alg : SubAlgebra
        The conditioning partition.
    x : array_like, shape (..., n)
        Random variable(s).

    Returns
    -------
    ndarray, shape (..., m)
    """
    x = check_rv(alg, x)
    weighted = x * alg.cond_probs
    return block_apply(alg, weighted, lambda v, _: v.sum(axis=-1))


def _check_p(p: float) -> float:
    p = float(p)
    if np.isnan(p) or p < 1.0:
        raise ParameterError(f"norm exponent must be in [1, inf], got {p}")
    return p


def cond_norm(alg: SubAlgebra, x, p: float = 2.0) -> np.ndarray:
    """Conditional Lp norm ``E[|x|^p | F]^(1/p)``; blockwise max of ``|x|`` for ``p = inf``."""
    p = _check_p(p)
    x = check_rv(alg, x)
    if np.isinf(p):
        return block_max(alg, np.abs(x))
    if p == 1.0:
        return cond_expectation(alg, np.abs(x))
    # scale per block before powering so large entries do not overflow
    scale = block_max(alg, np.abs(x))
    safe = np.where(scale > 0, scale, 1.0)
    r = np.abs(x) / safe[..., alg.atom_block]
    return safe * cond_expectation(alg, r ** p) ** (1.0 / p) * (scale > 0)


def conjugate_exponent(q: float) -> float:
    q = float(q)
    if np.isinf(q):
        return 1.0
    if q == 1.0:
        return np.inf
    return q / (q - 1.0)


def holder_extremal(alg: SubAlgebra, y, q: float) -> np.ndarray:
    """A maximizer of ``E[xy|F]`` over the conditional unit ball of the conjugate norm.

    For ``q < inf`` this is ``sign(y) (|y| / ||y|F||_q)^(q-1)``; for ``q = inf``
    the whole L1 budget sits on the first atom of each block where ``|y|`` peaks.
    """
    y = check_rv(alg, y, "y")
    if np.isinf(q):
        flat = y.reshape(-1, alg.n)
        x = np.zeros_like(flat)
        for row, out in zip(flat, x):
            for b in alg.blocks:
                j = b[int(np.argmax(np.abs(row[list(b)])))]
                out[j] = np.sign(row[j]) / alg.cond_probs[j]
        return x.reshape(y.shape)
    nq = cond_norm(alg, y, q)
    safe = np.where(nq > 0, nq, 1.0)
    r = np.abs(y) / safe[..., alg.atom_block]
    return np.sign(y) * r ** (q - 1.0)


def cond_dual_norm(alg: SubAlgebra, y, q: float) -> np.ndarray:
    """Norm of ``x -> E[xy|F]`` on the conditional L^p unit ball, ``1/p + 1/q = 1``.

    Evaluated at the Hölder extremal, so it is an attained supremum rather than
    a closed-form shortcut.
    """
    q = float(q)
    if np.isnan(q) or q <= 1.0:
        raise ParameterError(f"dual exponent must be in (1, inf], got {q}")
    y = check_rv(alg, y, "y")
    x = holder_extremal(alg, y, q)
    return cond_expectation(alg, x * y)


def _lp_seminorm(p: float) -> Seminorm:
    def seminorm(alg, x):
        return cond_norm(alg, x, p)
    seminorm.__name__ = f"L{p:g}"
    return seminorm


DEFAULT_SEMINORMS: dict[str, Seminorm] = {
    "L1": _lp_seminorm(1.0),
    "L2": _lp_seminorm(2.0),
    "Linf": _lp_seminorm(np.inf),
}


@dataclass(frozen=True, eq=False)
class CondSeminormBall:
    """``{x : sum_k 1_{a_k} max_{F_k} ||x|| <= radius}`` with one seminorm family per block."""

    seminorm_ids: tuple[tuple[str, ...], ...]
    radius: np.ndarray

    def __post_init__(self):
        ids = tuple(tuple(family) for family in self.seminorm_ids)
        radius = np.asarray(self.radius, dtype=float).ravel()
        if len(ids) != radius.size:
            raise DimensionError(f"{len(ids)} seminorm families for {radius.size} radii")
        for k, family in enumerate(ids):
            if not family:
                raise ValidationError(f"block {k} has an empty seminorm family",
                                      field="seminorm_ids", index=k)
        if not np.all(radius > 0):
            raise ValidationError("ball radius must be strictly positive on every block",
                                  field="radius", index=int(np.argmin(radius > 0)))
        radius.setflags(write=False)
        object.__setattr__(self, "seminorm_ids", ids)
        object.__setattr__(self, "radius", radius)

    @classmethod
    def uniform(cls, alg: SubAlgebra, ids, radius=1.0) -> "CondSeminormBall":
        ids = (ids,) if isinstance(ids, str) else tuple(ids)
        return cls((ids,) * alg.m, np.broadcast_to(np.asarray(radius, dtype=float), (alg.m,)))


def _family_values(alg: SubAlgebra, x, ball: CondSeminormBall, norms: Mapping[str, Seminorm]) -> np.ndarray:
    if len(ball.seminorm_ids) != alg.m:
        raise DimensionError(f"ball has {len(ball.seminorm_ids)} blocks, algebra has {alg.m}")
    x = check_rv(alg, x)
    cache = {}
    out = np.zeros(x.shape[:-1] + (alg.m,))
    for b, family in enumerate(ball.seminorm_ids):
        vals = []
        for sid in family:
            if sid not in cache:
                if sid not in norms:
                    raise UnknownNameError("seminorm", sid, norms)
                cache[sid] = check_cond(alg, norms[sid](alg, x), sid)
            vals.append(cache[sid][..., b])
        out[..., b] = np.max(vals, axis=0)
    return out


def ball_member_blocks(alg: SubAlgebra, x, ball: CondSeminormBall,
                       norms: Mapping[str, Seminorm] | None = None) -> np.ndarray:
    """Blockwise membership of ``x`` in ``ball``."""
    vals = _family_values(alg, x, ball, DEFAULT_SEMINORMS if norms is None else norms)
    return vals <= ball.radius


def ball_member(alg: SubAlgebra, x, ball: CondSeminormBall,
                norms: Mapping[str, Seminorm] | None = None) -> bool:
    return bool(np.all(ball_member_blocks(alg, x, ball, norms)))


def gauge(alg: SubAlgebra, x, ball: CondSeminormBall,
          norms: Mapping[str, Seminorm] | None = None) -> np.ndarray:
    """Minkowski functional of the ball, blockwise."""
    vals = _family_values(alg, x, ball, DEFAULT_SEMINORMS if norms is None else norms)
    return vals / ball.radius
