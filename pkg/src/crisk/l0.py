"""Random variables over a ``SubAlgebra`` and their module structure.

Random variables (elements of L0(E)) are plain float arrays of length ``n``;
conditional scalars (L0(F)) are arrays of length ``m``, one entry per block.
Extended conditional scalars use IEEE infinities, with ``0 * inf == 0``.
All functions accept a leading batch axis where that makes sense.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, EmptySetError, EnumerationCapError, ValidationError
from .measure_algebra import Condition, PartitionOfUnity, SubAlgebra, validate_partition

ENUMERATION_CAP = 10**6


def check_rv(alg: SubAlgebra, x, name="x") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (alg.n,):
        raise DimensionError(f"{name} has trailing size {x.shape[-1:]}, expected ({alg.n},)")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} has non-finite entries", field=name)
    return x


def check_cond(alg: SubAlgebra, s, name="s") -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.shape[-1:] != (alg.m,):
        raise DimensionError(f"{name} has trailing size {s.shape[-1:]}, expected ({alg.m},)")
    return s


def _check_condition(alg: SubAlgebra, a: Condition):
    if a.m != alg.m:
        raise DimensionError(f"condition over {a.m} blocks, algebra has {alg.m}")


def as_rv(alg: SubAlgebra, s) -> np.ndarray:
    """Expand a conditional scalar to the block-constant random variable."""
    s = check_cond(alg, s)
    return s[..., alg.atom_block]


def is_F_measurable(alg: SubAlgebra, x) -> bool:
    """True when ``x`` is constant on every block (exact comparison)."""
    x = check_rv(alg, x)
    return all(np.all(x[..., list(b)] == x[..., b[:1]]) for b in alg.blocks)


def add(alg: SubAlgebra, x, y) -> np.ndarray:
    return check_rv(alg, x) + check_rv(alg, y, "y")


def scalar_mul(alg: SubAlgebra, s, x) -> np.ndarray:
    """Module action of a conditional scalar on a random variable."""
    return as_rv(alg, s) * check_rv(alg, x)


def indicator_mul(alg: SubAlgebra, a: Condition, x) -> np.ndarray:
    """``1_a x``: zero the atoms lying in blocks outside ``a``."""
    _check_condition(alg, a)
    return scalar_mul(alg, a.indicator(), x)


def ext_mul(s, t) -> np.ndarray:
    """Product of extended scalars with the convention 0 * (+-inf) = 0."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    with np.errstate(invalid="ignore"):
        out = s * t
    return np.where((s == 0) | (t == 0), 0.0, out)


def concatenate(alg: SubAlgebra, xs: Sequence, parts: PartitionOfUnity | Sequence[Condition]) -> np.ndarray:
    """The unique random variable agreeing with ``xs[k]`` on the atoms of ``parts[k]``."""
    if not isinstance(parts, PartitionOfUnity):
        parts = validate_partition(parts, alg.m)
    if len(xs) != len(parts):
        raise DimensionError(f"{len(xs)} elements for {len(parts)} parts")
    for a in parts:
        _check_condition(alg, a)
    out = np.zeros(alg.n)
    for x, a in zip(xs, parts):
        x = check_rv(alg, x)
        sel = np.asarray(a.mask)[alg.atom_block]
        out[sel] = x[sel]
    return out


def _generator_array(alg: SubAlgebra, generators) -> np.ndarray:
    if len(generators) == 0:
        raise EmptySetError("no generators given")
    return np.stack([check_rv(alg, g, "generator") for g in generators])


def stable_hull_member(alg: SubAlgebra, generators, q) -> bool:
    """Whether ``q`` is a concatenation of generators (block by block, exact)."""
    gens = _generator_array(alg, generators)
    q = check_rv(alg, q, "q")
    for b in alg.blocks:
        idx = list(b)
        if not np.any(np.all(gens[:, idx] == q[idx], axis=1)):
            return False
    return True


def stable_hull_enumerate(alg: SubAlgebra, generators, cap: int = ENUMERATION_CAP) -> list[np.ndarray]:
    """All blockwise selections from the generators, deduplicated, in lexicographic order."""
    gens = _generator_array(alg, generators)
    if len(gens) ** alg.m > cap:
        raise EnumerationCapError(f"{len(gens)}**{alg.m} selections exceed the cap {cap}")
    slices = []
    for b in alg.blocks:
        idx = list(b)
        seen = []
        for g in gens:
            piece = tuple(g[idx])
            if piece not in seen:
                seen.append(piece)
        slices.append(seen)
    out = []
    for choice in itertools.product(*slices):
        x = np.empty(alg.n)
        for b, piece in zip(alg.blocks, choice):
            x[list(b)] = piece
        out.append(x)
    return out


def ess_sup_set(H) -> np.ndarray:
    if len(H) == 0:
        raise EmptySetError("essential supremum of an empty family")
    return np.max(np.stack([np.asarray(h, dtype=float) for h in H]), axis=0)


def ess_inf_set(H) -> np.ndarray:
    if len(H) == 0:
        raise EmptySetError("essential infimum of an empty family")
    return np.min(np.stack([np.asarray(h, dtype=float) for h in H]), axis=0)


@dataclass(frozen=True, eq=False)
class EventuallyPeriodicSeq:
    """``prefix[0], ..., prefix[-1], cycle[0], ..., cycle[-1], cycle[0], ...``"""

    prefix: tuple
    cycle: tuple

    def __post_init__(self):
        prefix = tuple(np.asarray(v, dtype=float) for v in self.prefix)
        cycle = tuple(np.asarray(v, dtype=float) for v in self.cycle)
        if not cycle:
            raise EmptySetError("the cycle of an eventually periodic sequence must be nonempty")
        shape = cycle[0].shape
        for v in prefix + cycle:
            if v.shape != shape:
                raise DimensionError(f"sequence members of shapes {shape} and {v.shape}")
        object.__setattr__(self, "prefix", prefix)
        object.__setattr__(self, "cycle", cycle)

    def __getitem__(self, k: int) -> np.ndarray:
        if k < len(self.prefix):
            return self.prefix[k]
        return self.cycle[(k - len(self.prefix)) % len(self.cycle)]

    def members(self) -> tuple:
        """Distinct positions of the sequence: prefix followed by one period."""
        return self.prefix + self.cycle


def seq_limsup(s: EventuallyPeriodicSeq) -> np.ndarray:
    return np.max(np.stack(s.cycle), axis=0)


def seq_liminf(s: EventuallyPeriodicSeq) -> np.ndarray:
    return np.min(np.stack(s.cycle), axis=0)


class Order(enum.Enum):
    EQUAL = "equal"
    LEQ = "leq"
    GEQ = "geq"
    INCOMPARABLE = "incomparable"


def as_order(x, y) -> Order:
    """Almost-sure order between two vectors of the same length."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionError(f"cannot compare shapes {x.shape} and {y.shape}")
    le = bool(np.all(x <= y))
    ge = bool(np.all(x >= y))
    if le and ge:
        return Order.EQUAL
    if le:
        return Order.LEQ
    if ge:
        return Order.GEQ
    return Order.INCOMPARABLE


def block_apply(alg: SubAlgebra, x, func) -> np.ndarray:
    """Apply ``func(slice, block)`` to each block slice ``x[..., b]``, stacking the results."""
    x = np.asarray(x, dtype=float)
    return np.stack([func(x[..., list(b)], k) for k, b in enumerate(alg.blocks)], axis=-1)


def block_max(alg: SubAlgebra, x) -> np.ndarray:
    return block_apply(alg, x, lambda v, _: v.max(axis=-1))


def block_min(alg: SubAlgebra, x) -> np.ndarray:
    return block_apply(alg, x, lambda v, _: v.min(axis=-1))
