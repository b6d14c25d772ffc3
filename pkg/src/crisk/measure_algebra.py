"""Finite probability spaces, the atoms of a sub-sigma-algebra, and the
Boolean algebra of conditions built on top of them.

A ``SubAlgebra`` partitions the atoms of a ``ProbSpace`` into blocks. The
measure algebra of the coarse sigma-algebra is then the power set of the
blocks, and a ``Condition`` is a mask over blocks.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import CoverError, DimensionError, OverlapError, ValidationError

PROB_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ProbSpace:
    """Atoms with strictly positive probabilities summing to one."""

    probs: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        p = np.array(self.probs, dtype=float).ravel()
        if p.size < 1:
            raise ValidationError("a probability space needs at least one atom", field="atoms")
        for i, pi in enumerate(p):
            if not np.isfinite(pi) or pi <= 0.0:
                raise ValidationError(f"atom {i} has non-positive probability {pi!r}",
                                      field="atoms.prob", index=i)
        if abs(p.sum() - 1.0) > PROB_SUM_TOL:
            raise ValidationError(f"atom probabilities sum to {p.sum()!r}, not 1",
                                  field="atoms.prob")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        labels = tuple(str(s) for s in self.labels) or tuple(f"w{i}" for i in range(p.size))
        if len(labels) != p.size:
            raise ValidationError(f"{len(labels)} labels for {p.size} atoms", field="atoms.label")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.probs.size

    @classmethod
    def uniform(cls, n: int) -> "ProbSpace":
        return cls(np.full(n, 1.0 / n))


@dataclass(frozen=True, eq=False)
class SubAlgebra:
    """Partition of the atoms of ``space`` into blocks (atoms of the coarse algebra)."""

    space: ProbSpace
    blocks: tuple[tuple[int, ...], ...]
    atom_block: np.ndarray = field(init=False, repr=False)
    block_probs: np.ndarray = field(init=False, repr=False)
    cond_probs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.space.n
        blocks = tuple(tuple(int(i) for i in b) for b in self.blocks)
        owner = np.full(n, -1, dtype=np.intp)
        for k, b in enumerate(blocks):
            if not b:
                raise ValidationError(f"block {k} is empty", field="blocks", index=k)
            for i in b:
                if not 0 <= i < n:
                    raise DimensionError(f"block {k} references atom {i} outside 0..{n - 1}", index=i)
                if owner[i] >= 0:
                    raise ValidationError(f"atom {i} appears in blocks {owner[i]} and {k}",
                                          field="blocks", index=i)
                owner[i] = k
        missing = np.flatnonzero(owner < 0)
        if missing.size:
            raise ValidationError(f"atom {missing[0]} is not covered by any block",
                                  field="blocks", index=int(missing[0]))
        owner.setflags(write=False)
        bp = np.bincount(owner, weights=self.space.probs, minlength=len(blocks))
        bp.setflags(write=False)
        cp = self.space.probs / bp[owner]
        cp.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "atom_block", owner)
        object.__setattr__(self, "block_probs", bp)
        object.__setattr__(self, "cond_probs", cp)

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def probs(self) -> np.ndarray:
        return self.space.probs

    @property
    def block_sizes(self) -> list[int]:
        return [len(b) for b in self.blocks]

    def block_index(self, b: int) -> np.ndarray:
        return np.asarray(self.blocks[b], dtype=np.intp)

    @classmethod
    def trivial(cls, space: ProbSpace) -> "SubAlgebra":
        return cls(space, (tuple(range(space.n)),))

    @classmethod
    def discrete(cls, space: ProbSpace) -> "SubAlgebra":
        return cls(space, tuple((i,) for i in range(space.n)))

    @classmethod
    def from_json(cls, data: dict) -> "SubAlgebra":
        """Build from ``{"atoms": [{"label", "prob"}], "blocks": [[...]]}``."""
        try:
            atoms = data["atoms"]
        except (KeyError, TypeError):
            raise ValidationError("missing 'atoms'", field="atoms") from None
        if not isinstance(atoms, list):
            raise ValidationError("'atoms' must be a list", field="atoms")
        probs, labels = [], []
        for i, a in enumerate(atoms):
            if not isinstance(a, dict) or "prob" not in a:
                raise ValidationError(f"atom {i} has no 'prob'", field="atoms.prob", index=i)
            try:
                probs.append(float(a["prob"]))
            except (TypeError, ValueError):
                raise ValidationError(f"atom {i} prob is not a number", field="atoms.prob",
                                      index=i) from None
            labels.append(str(a.get("label", f"w{i}")))
        space = ProbSpace(np.array(probs), tuple(labels))
        blocks = data.get("blocks")
        if blocks is None:
            return cls.trivial(space)
        if not isinstance(blocks, list) or not all(isinstance(b, list) for b in blocks):
            raise ValidationError("'blocks' must be a list of index lists", field="blocks")
        for k, b in enumerate(blocks):
            for i in b:
                if not isinstance(i, int) or isinstance(i, bool):
                    raise ValidationError(f"block {k} has non-integer entry {i!r}",
                                          field="blocks", index=k)
        return cls(space, tuple(tuple(b) for b in blocks))

    def to_json(self) -> dict:
        return {
            "atoms": [{"label": lab, "prob": float(p)}
                      for lab, p in zip(self.space.labels, self.space.probs)],
            "blocks": [list(b) for b in self.blocks],
        }


@dataclass(frozen=True)
class Condition:
    """An element of the measure algebra: a set of blocks."""

    mask: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "mask", tuple(bool(v) for v in self.mask))

    @property
    def m(self) -> int:
        return len(self.mask)

    @classmethod
    def one(cls, m: int) -> "Condition":
        return cls((True,) * m)

    @classmethod
    def zero(cls, m: int) -> "Condition":
        return cls((False,) * m)

    @classmethod
    def of_blocks(cls, m: int, blocks: Iterable[int]) -> "Condition":
        chosen = set(blocks)
        for b in chosen:
            if not 0 <= b < m:
                raise DimensionError(f"block {b} outside 0..{m - 1}", index=b)
        return cls(tuple(k in chosen for k in range(m)))

    def indicator(self) -> np.ndarray:
        """Indicator as a conditional scalar (one 0/1 value per block)."""
        return np.array(self.mask, dtype=float)

    def is_zero(self) -> bool:
        return not any(self.mask)

    def is_one(self) -> bool:
        return all(self.mask)

    def blocks(self) -> list[int]:
        return [k for k, v in enumerate(self.mask) if v]

    def __and__(self, other):
        return meet(self, other)

    def __or__(self, other):
        return join(self, other)

    def __invert__(self):
        return complement(self)


def _check_same(a: Condition, b: Condition):
    if a.m != b.m:
        raise DimensionError(f"conditions over {a.m} and {b.m} blocks")


def meet(a: Condition, b: Condition) -> Condition:
    _check_same(a, b)
    return Condition(tuple(x and y for x, y in zip(a.mask, b.mask)))


def join(a: Condition, b: Condition) -> Condition:
    _check_same(a, b)
    return Condition(tuple(x or y for x, y in zip(a.mask, b.mask)))


def complement(a: Condition) -> Condition:
    return Condition(tuple(not x for x in a.mask))


@dataclass(frozen=True)
class PartitionOfUnity:
    """Pairwise disjoint conditions joining to 1. Zero parts are allowed."""

    parts: tuple[Condition, ...]

    @property
    def m(self) -> int:
        return self.parts[0].m

    def __len__(self):
        return len(self.parts)

    def __iter__(self):
        return iter(self.parts)


def validate_partition(parts: Sequence[Condition], m: int | None = None) -> PartitionOfUnity:
    """Check that ``parts`` is a partition of unity and wrap it.

    Raises ``OverlapError`` when two parts meet nontrivially and ``CoverError``
    when their join is not the unit condition.
    """
    parts = tuple(parts)
    if not parts:
        raise CoverError("an empty family cannot cover 1")
    width = parts[0].m if m is None else m
    for k, a in enumerate(parts):
        if a.m != width:
            raise DimensionError(f"part {k} has {a.m} blocks, expected {width}", index=k)
    covered = Condition.zero(width)
    for k, a in enumerate(parts):
        overlap = meet(covered, a)
        if not overlap.is_zero():
            raise OverlapError(f"part {k} overlaps earlier parts on blocks {overlap.blocks()}")
        covered = join(covered, a)
    if not covered.is_one():
        raise CoverError(f"blocks {complement(covered).blocks()} are not covered")
    return PartitionOfUnity(parts)


_RELATIONS = {
    ">": operator.gt, ">=": operator.ge, "≥": operator.ge,
    "<": operator.lt, "<=": operator.le, "≤": operator.le,
    "==": operator.eq, "=": operator.eq, "!=": operator.ne, "≠": operator.ne,
}


def condition_from_predicate(s, relation: str, threshold: float) -> Condition:
    """Blocks on which the conditional scalar ``s`` satisfies ``s <relation> threshold``."""
    try:
        op = _RELATIONS[relation]
    except KeyError:
        raise ValueError(f"unknown relation {relation!r}") from None
    values = np.asarray(s, dtype=float)
    return Condition(tuple(op(values, threshold).tolist()))
