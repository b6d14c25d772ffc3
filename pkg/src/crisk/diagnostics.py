"""Attainment and compactness diagnostics on block polytopes, plus the
sup-limsup check and a Fatou/Lebesgue harness for risk measures.

A stable subset of a finite product of blocks is just one set per block, so
every check here runs block by block and merges reports in block order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import solvers
from .conditional import cond_norm
from .errors import DimensionError, InfeasibleError, ValidationError
from .l0 import EventuallyPeriodicSeq, check_rv, seq_limsup
from .measure_algebra import SubAlgebra
from .risk import RiskMeasure

LP_TOL = 1e-9
RESOLUTION_CAP = 5_000  # active-set combinations tried before falling back to one LP per functional


@dataclass(frozen=True, eq=False)
class BlockSet:
    """One block of a polytope: V-representation or H-representation ``A w <= beta``."""

    vertices: np.ndarray | None = None
    A: np.ndarray | None = None
    beta: np.ndarray | None = None

    def __post_init__(self):
        if (self.vertices is None) == (self.A is None):
            raise ValidationError("give exactly one of vertices or halfspaces", field="polytopes")
        if self.vertices is not None:
            V = np.atleast_2d(np.asarray(self.vertices, dtype=float))
            if V.shape[0] == 0:
                raise ValidationError("a V-representation needs at least one vertex",
                                      field="polytopes.vertices")
            object.__setattr__(self, "vertices", V)
        else:
            A = np.asarray(self.A, dtype=float)
            beta = np.asarray(self.beta, dtype=float).ravel()
            if A.ndim != 2 or A.shape[0] != beta.size:
                raise ValidationError("halfspace normals and offsets disagree in count",
                                      field="polytopes.halfspaces")
            object.__setattr__(self, "A", A)
            object.__setattr__(self, "beta", beta)

    @property
    def dim(self) -> int:
        return (self.vertices if self.vertices is not None else self.A).shape[1]

    @property
    def is_vrep(self) -> bool:
        return self.vertices is not None

    def contains(self, w, tol=LP_TOL) -> bool:
        w = np.asarray(w, dtype=float)
        if self.is_vrep:
            k = self.vertices.shape[0]
            res = solvers.lp_maximize(np.zeros(k), A_eq=np.vstack([self.vertices.T, np.ones(k)]),
                                      b_eq=np.append(w, 1.0), bounds=(0, None))
            return res.status == "optimal"
        return bool(np.all(self.A @ w <= self.beta + tol))

    @cached_property
    def resolution(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Vertices and extreme rays of a pointed H-representation, or None.

        None means the block is a V-representation, contains a line, or has too
        many active-set combinations to enumerate.
        """
        if self.is_vrep:
            return None
        A, beta, dim = self.A, self.beta, self.dim
        if np.linalg.matrix_rank(A) < dim or math.comb(len(A), dim) > RESOLUTION_CAP:
            return None
        slack = LP_TOL * (1.0 + np.abs(beta))
        verts = []
        for rows in itertools.combinations(range(len(A)), dim):
            M = A[list(rows)]
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            v = np.linalg.solve(M, beta[list(rows)])
            if np.all(A @ v <= beta + slack):
                verts.append(v)
        rays = []
        for rows in itertools.combinations(range(len(A)), dim - 1):
            _, sv, Vt = np.linalg.svd(A[list(rows)].reshape(dim - 1, dim))
            if dim > 1 and sv[-1] < 1e-12:
                continue
            r = Vt[-1]
            for cand in (r, -r):
                if np.all(A @ cand <= LP_TOL):
                    rays.append(cand)
        if not verts:
            return None
        V = np.unique(np.round(np.array(verts), 12), axis=0)
        R = np.unique(np.round(np.array(rays), 12), axis=0) if rays else np.zeros((0, dim))
        return V, R


@dataclass(frozen=True, eq=False)
class BlockPolytope:
    blocks: tuple[BlockSet, ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        for k, blk in enumerate(self.blocks):
            if not blk.is_vrep:
                res = solvers.lp_maximize(np.zeros(blk.dim), blk.A, blk.beta)
                if res.status == "infeasible":
                    raise InfeasibleError(f"polytope block {k} is empty", block=k)

    @property
    def bounded(self) -> list[bool]:
        return [recession_ray(blk) is None for blk in self.blocks]

    @classmethod
    def from_json(cls, items: list, m: int | None = None) -> "BlockPolytope":
        """``[{"block": k, "vertices": [[...]]} | {"block": k, "halfspaces": [{"a", "b"}]}]``"""
        by_block = {}
        for item in items:
            if not isinstance(item, dict) or "block" not in item:
                raise ValidationError("polytope entries need a 'block' index", field="polytopes.block")
            k = item["block"]
            if k in by_block:
                raise ValidationError(f"block {k} given twice", field="polytopes.block", index=k)
            if "vertices" in item:
                by_block[k] = BlockSet(vertices=item["vertices"])
            elif "halfspaces" in item:
                hs = item["halfspaces"]
                by_block[k] = BlockSet(A=np.array([h["a"] for h in hs], dtype=float).reshape(len(hs), -1),
                                       beta=[h["b"] for h in hs])
            else:
                raise ValidationError(f"block {k} has neither vertices nor halfspaces",
                                      field="polytopes", index=k)
        m = len(by_block) if m is None else m
        if sorted(by_block) != list(range(m)):
            raise DimensionError(f"polytope blocks {sorted(by_block)} do not match 0..{m - 1}")
        return cls(tuple(by_block[k] for k in range(m)))

    def to_json(self) -> list:
        out = []
        for k, blk in enumerate(self.blocks):
            if blk.is_vrep:
                out.append({"block": k, "vertices": blk.vertices.tolist()})
            else:
                out.append({"block": k, "halfspaces": [{"a": a.tolist(), "b": float(b)}
                                                       for a, b in zip(blk.A, blk.beta)]})
        return out


def _cone_ray(A: np.ndarray, dim: int, tol=LP_TOL, objective=None) -> np.ndarray | None:
    """A nonzero ``d`` with ``A d <= 0`` in the unit box, or None when the cone is trivial."""
    A = A.reshape(-1, dim)
    b = np.zeros(A.shape[0])
    probes = [objective] if objective is not None else [s * e for e in np.eye(dim) for s in (1.0, -1.0)]
    for c in probes:
        res = solvers.lp_maximize(c, A if A.size else None, b if A.size else None, bounds=(-1, 1))
        if res.status == "optimal" and res.value > tol:
            return res.x
    return None


def recession_ray(blk: BlockSet, tol=LP_TOL) -> np.ndarray | None:
    if blk.is_vrep:
        return None
    return _cone_ray(blk.A, blk.dim, tol)


@dataclass
class FunctionalResult:
    attained: bool
    value: float
    witness: np.ndarray | None = None
    ray: np.ndarray | None = None

    def to_json(self):
        return {"attained": self.attained, "value": self.value,
                "witness": None if self.witness is None else self.witness.tolist(),
                "ray": None if self.ray is None else self.ray.tolist()}


def _maximize_on(blk: BlockSet, c: np.ndarray) -> FunctionalResult:
    if blk.is_vrep:
        vals = blk.vertices @ c
        j = int(np.argmax(vals))
        return FunctionalResult(True, float(vals[j]), blk.vertices[j].copy())
    resolved = blk.resolution
    if resolved is not None:
        V, R = resolved
        if len(R):
            slopes = R @ c
            k = int(np.argmax(slopes))
            if slopes[k] > LP_TOL:
                return FunctionalResult(False, np.inf, ray=R[k].copy())
        vals = V @ c
        j = int(np.argmax(vals))
        return FunctionalResult(True, float(vals[j]), V[j].copy())
    res = solvers.lp_maximize(c, blk.A, blk.beta)
    if res.status == "optimal":
        return FunctionalResult(True, res.value, res.x)
    ray = _cone_ray(blk.A, blk.dim, objective=c)
    if ray is None:
        raise InfeasibleError(f"LP ended with status {res.status} but no ray exists")
    return FunctionalResult(False, np.inf, ray=ray)


@dataclass
class JamesBlockReport:
    compact: bool
    ray: np.ndarray | None
    results: list[FunctionalResult]
    certifying: FunctionalResult | None = None

    @property
    def all_attained(self) -> bool:
        return all(r.attained for r in self.results)

    @property
    def discrepancy(self) -> bool:
        if self.compact:
            return not self.all_attained
        return self.certifying is None or self.certifying.attained


@dataclass
class JamesReport:
    blocks: list[JamesBlockReport]

    @property
    def compact(self) -> bool:
        return all(b.compact for b in self.blocks)

    @property
    def all_attained(self) -> bool:
        return all(b.all_attained for b in self.blocks)

    @property
    def discrepancies(self) -> list[int]:
        return [k for k, b in enumerate(self.blocks) if b.discrepancy]

    @property
    def verdict(self) -> str:
        return "compact" if self.compact else "not_compact"

    def to_json(self):
        return {
            "verdict": self.verdict,
            "compact": self.compact,
            "all_attained": self.all_attained,
            "discrepancies": self.discrepancies,
            "blocks": [{
                "compact": b.compact,
                "recession_ray": None if b.ray is None else b.ray.tolist(),
                "attained": [r.attained for r in b.results],
                "results": [r.to_json() for r in b.results],
                "certifying_functional": None if b.certifying is None else b.certifying.to_json(),
            } for b in self.blocks],
        }


def _split_functionals(alg: SubAlgebra | None, functionals, dims):
    F = np.atleast_2d(np.asarray(functionals, dtype=float))
    if alg is None:
        if F.shape[1] != sum(dims):
            raise DimensionError(f"functionals of length {F.shape[1]} for blocks of total size {sum(dims)}")
        cuts = np.cumsum([0] + list(dims))
        return [F[:, cuts[k]:cuts[k + 1]] for k in range(len(dims))]
    check_rv(alg, F, "functionals")
    if [len(b) for b in alg.blocks] != list(dims):
        raise DimensionError(f"polytope block dimensions {list(dims)} differ from block sizes")
    return [F[:, list(b)] for b in alg.blocks]


def james_check(K: BlockPolytope, functionals, alg: SubAlgebra | None = None) -> JamesReport:
    """Attainment of every functional on every block versus boundedness of the block.

    Boundedness is decided independently through the recession cone. When a
    block is unbounded, a recession direction is also tried as a functional;
    it must fail to attain its supremum.
    """
    per_block = _split_functionals(alg, functionals, [blk.dim for blk in K.blocks])
    reports = []
    for blk, F in zip(K.blocks, per_block):
        ray = recession_ray(blk)
        results = [_maximize_on(blk, c) for c in F]
        certifying = None if ray is None else _maximize_on(blk, ray / np.linalg.norm(ray))
        reports.append(JamesBlockReport(ray is None, ray, results, certifying))
    return JamesReport(reports)


@dataclass(frozen=True, eq=False)
class ProperConvexBlockFn:
    """Per block: ``f_b(x) = max_k <a_k, x> + c_k`` on ``{D x <= beta}`` (+inf off it)."""

    slopes: tuple
    offsets: tuple
    domain_A: tuple
    domain_b: tuple

    @classmethod
    def build(cls, pieces, domain=None):
        """``pieces[b] = [(a, c), ...]``; ``domain[b] = [(a, beta), ...]`` or None."""
        slopes, offsets, DA, Db = [], [], [], []
        domain = domain or [None] * len(pieces)
        for b, pcs in enumerate(pieces):
            if not pcs:
                raise ValidationError(f"block {b} needs at least one affine piece", field="pieces", index=b)
            A = np.array([a for a, _ in pcs], dtype=float)
            slopes.append(A)
            offsets.append(np.array([c for _, c in pcs], dtype=float))
            dom = domain[b] or []
            DA.append(np.array([a for a, _ in dom], dtype=float).reshape(len(dom), A.shape[1]))
            Db.append(np.array([bb for _, bb in dom], dtype=float))
        fn = cls(tuple(slopes), tuple(offsets), tuple(DA), tuple(Db))
        for b in range(len(slopes)):
            if DA[b].size:
                res = solvers.lp_maximize(np.zeros(DA[b].shape[1]), DA[b], Db[b])
                if res.status == "infeasible":
                    raise InfeasibleError(f"function is improper: empty domain on block {b}", block=b)
        return fn

    @classmethod
    def from_json(cls, data: list):
        """``[{"block": k, "pieces": [{"a", "c"}], "domain": [{"a", "b"}]}]``; ``block`` defaults to list order."""
        by_block = {}
        for k, blk in enumerate(data):
            try:
                b = blk.get("block", k)
                entry = ([(p["a"], p["c"]) for p in blk["pieces"]],
                         [(h["a"], h["b"]) for h in blk.get("domain", [])])
            except (KeyError, TypeError, AttributeError):
                raise ValidationError(f"malformed function block {k}", field="functions", index=k) from None
            if b in by_block:
                raise ValidationError(f"block {b} given twice", field="functions.block", index=k)
            by_block[b] = entry
        if sorted(by_block) != list(range(len(by_block))):
            raise DimensionError(f"function blocks {sorted(by_block)} do not match 0..{len(by_block) - 1}")
        ordered = [by_block[b] for b in range(len(by_block))]
        return cls.build([e[0] for e in ordered], [e[1] for e in ordered])

    def to_json(self):
        return [{"block": k,
                 "pieces": [{"a": a.tolist(), "c": float(c)} for a, c in zip(A, cc)],
                 "domain": [{"a": a.tolist(), "b": float(b)} for a, b in zip(D, bb)]}
                for k, (A, cc, D, bb) in enumerate(zip(self.slopes, self.offsets, self.domain_A, self.domain_b))]

    @property
    def dims(self) -> list[int]:
        return [A.shape[1] for A in self.slopes]

    def value(self, b: int, x) -> float:
        x = np.asarray(x, dtype=float)
        D, beta = self.domain_A[b], self.domain_b[b]
        if D.size and np.any(D @ x > beta + LP_TOL):
            return np.inf
        return float(np.max(self.slopes[b] @ x + self.offsets[b]))


@dataclass
class PerturbedBlockReport:
    sublevels_bounded: bool
    ray: np.ndarray | None
    results: list[FunctionalResult]

    @property
    def all_attained(self):
        return all(r.attained for r in self.results)

    @property
    def unattained(self) -> list[int]:
        return [i for i, r in enumerate(self.results) if not r.attained]

    @property
    def consistent(self) -> bool:
        return self.sublevels_bounded or not self.all_attained


@dataclass
class PerturbedReport:
    blocks: list[PerturbedBlockReport]

    @property
    def consistent(self) -> bool:
        return all(b.consistent for b in self.blocks)

    def to_json(self):
        return {
            "consistent": self.consistent,
            "blocks": [{
                "sublevels_bounded": b.sublevels_bounded,
                "recession_ray": None if b.ray is None else b.ray.tolist(),
                "all_attained": b.all_attained,
                "counterexample_functionals": b.unattained,
                "results": [r.to_json() for r in b.results],
            } for b in self.blocks],
        }


def james_perturbed_check(f: ProperConvexBlockFn, functionals, alg: SubAlgebra | None = None) -> PerturbedReport:
    """``sup_x <c, x> - f(x)`` per block and functional, against boundedness of the sublevel sets of ``f``."""
    per_block = _split_functionals(alg, functionals, f.dims)
    reports = []
    for b, F in enumerate(per_block):
        A, cc, D, beta = f.slopes[b], f.offsets[b], f.domain_A[b], f.domain_b[b]
        d = A.shape[1]
        # epigraph variables (x, t): t >= A x + cc
        A_ub = np.hstack([A, -np.ones((A.shape[0], 1))])
        b_ub = -cc
        if D.size:
            A_ub = np.vstack([A_ub, np.hstack([D, np.zeros((D.shape[0], 1))])])
            b_ub = np.concatenate([b_ub, beta])
        results = []
        for c in F:
            obj = np.append(c, -1.0)
            res = solvers.lp_maximize(obj, A_ub, b_ub)
            if res.status == "optimal":
                results.append(FunctionalResult(True, res.value, res.x[:d]))
            else:
                ray = _cone_ray(A_ub, d + 1, objective=obj)
                results.append(FunctionalResult(False, np.inf, ray=None if ray is None else ray[:d]))
        cone = np.vstack([A, D]) if D.size else A
        ray = _cone_ray(cone, d)
        reports.append(PerturbedBlockReport(ray is None, ray, results))
    return PerturbedReport(reports)


# --- sup-limsup -------------------------------------------------------------

SIMONS_GRID = 4  # finite supports use weights in steps of 1/4
SIMONS_RATIOS = (0.5, 0.9)
SIMONS_MAX_SUPPORT = 4


@dataclass
class SimonsReport:
    lhs: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray
    samples: int
    passed_samples: int
    first_failure: dict | None = None

    @property
    def hypothesis_pass_rate(self) -> float:
        return self.passed_samples / self.samples if self.samples else 1.0

    @property
    def hypothesis_ok(self) -> bool:
        return self.passed_samples == self.samples

    @property
    def equality_holds(self) -> bool:
        return bool(np.all(self.residual == 0.0))

    @property
    def verdict(self) -> str:
        if self.hypothesis_ok:
            return "equality" if self.equality_holds else "theorem_violation"
        return "hypothesis_violation"

    def to_json(self):
        return {"verdict": self.verdict, "lhs": self.lhs.tolist(), "rhs": self.rhs.tolist(),
                "residual": self.residual.tolist(), "samples": self.samples,
                "hypothesis_pass_rate": self.hypothesis_pass_rate,
                "equality_holds": self.equality_holds, "first_failure": self.first_failure,
                "note": "hypothesis checked on sampled sigma-convex combinations only"}


def _compositions(total: int, parts: int):
    for cuts in itertools.combinations(range(1, total), parts - 1):
        bounds = (0,) + cuts + (total,)
        yield [bounds[i + 1] - bounds[i] for i in range(parts)]


def sigma_convex_samples(seq: EventuallyPeriodicSeq, grid: int = SIMONS_GRID,
                         max_support: int = SIMONS_MAX_SUPPORT, ratios=SIMONS_RATIOS):
    """Yield ``(description, g)`` for the sampled countable convex combinations of the sequence."""
    members = seq.members()
    P, L = len(seq.prefix), len(seq.cycle)
    for size in range(1, max_support + 1):
        for support in itertools.combinations(range(len(members)), size):
            for comp in _compositions(grid, size):
                g = sum((c / grid) * members[i] for c, i in zip(comp, support))
                yield {"type": "finite", "support": list(support), "weights": [c / grid for c in comp]}, g
    for rho in ratios:
        for start in range(len(members)):
            g = np.zeros_like(members[0])
            for j in range(start, P):
                g = g + (1 - rho) * rho ** (j - start) * members[j]
            s0 = max(start, P)
            head = (1 - rho) * rho ** (s0 - start) / (1 - rho ** L)
            off = s0 - P
            for t in range(L):
                g = g + head * rho ** t * seq.cycle[(off + t) % L]
            yield {"type": "geometric", "start": start, "ratio": rho}, g


def simons_check(seq: EventuallyPeriodicSeq, subset, tol: float = 1e-12, **sampling) -> SimonsReport:
    """Both sides of ``sup_E limsup f_n = sup_C limsup f_n`` and a sampled check of the hypothesis.

    Parameters
    ----------
    seq : EventuallyPeriodicSeq
        Members are value tables of shape ``(D, m)``: the function values at the
        ``D`` domain points, one column per block.
    subset : sequence of int, or sequence of sequences
        Domain points forming ``C``; a list of lists gives one subset per block.
    """
    table = seq.cycle[0]
    if table.ndim == 1:
        seq = EventuallyPeriodicSeq(tuple(t[:, None] for t in seq.prefix),
                                    tuple(t[:, None] for t in seq.cycle))
        table = seq.cycle[0]
    D, m = table.shape
    subset = list(subset)
    per_block = subset if subset and isinstance(subset[0], (list, tuple, np.ndarray)) else [subset] * m
    if len(per_block) != m:
        raise DimensionError(f"{len(per_block)} subsets for {m} blocks")
    for C in per_block:
        if not C or any(not 0 <= i < D for i in C):
            raise DimensionError(f"subset {list(C)} is empty or leaves the domain 0..{D - 1}")

    def sup_on(g, b, pts=None):
        col = g[:, b] if pts is None else g[list(pts), b]
        return col.max()

    limsup = seq_limsup(seq)
    lhs = np.array([sup_on(limsup, b) for b in range(m)])
    rhs = np.array([sup_on(limsup, b, per_block[b]) for b in range(m)])
    samples = passed = 0
    first = None
    for desc, g in sigma_convex_samples(seq, **sampling):
        samples += 1
        gap = [sup_on(g, b) - sup_on(g, b, per_block[b]) for b in range(m)]
        if max(gap) <= tol:
            passed += 1
        elif first is None:
            first = dict(desc, blocks=[b for b in range(m) if gap[b] > tol])
    return SimonsReport(lhs, rhs, lhs - rhs, samples, passed, first)


# --- Fatou / Lebesgue harness ----------------------------------------------------

FATOU_TOL = 1e-9
LEBESGUE_TOL = 1e-7
PERTURBATIONS = ("constant", "harmonic", "alternating", "geometric", "random")


@dataclass
class PerturbationSpec:
    kind: str = "harmonic"
    direction: np.ndarray | None = None
    seed: int = 0
    terms: int = 41
    tail: int = 5

    def __post_init__(self):
        if self.kind not in PERTURBATIONS:
            raise ValidationError(f"unknown perturbation {self.kind!r}; choose from {PERTURBATIONS}",
                                  field="perturbation")


@dataclass
class FatouReport:
    indices: list[int]
    values: np.ndarray
    rho_x: np.ndarray
    liminf: np.ndarray
    limit: np.ndarray
    lipschitz_ok: bool
    fatou_ok: bool
    lebesgue_ok: bool
    fatou_tol: float = FATOU_TOL
    lebesgue_tol: float = LEBESGUE_TOL

    @property
    def passed(self) -> bool:
        return self.lipschitz_ok and self.fatou_ok and self.lebesgue_ok

    def to_json(self):
        return {"passed": self.passed, "fatou": self.fatou_ok, "lebesgue": self.lebesgue_ok,
                "lipschitz_envelope": self.lipschitz_ok, "rho_x": self.rho_x.tolist(),
                "liminf_estimate": self.liminf.tolist(), "limit_estimate": self.limit.tolist(),
                "indices": self.indices, "tolerances": {"fatou": self.fatou_tol, "lebesgue": self.lebesgue_tol}}


def perturbed_sequence(x: np.ndarray, spec: PerturbationSpec):
    """Terms ``x_n`` at ``n = 2^k + (k mod 2)``, so both parities occur."""
    rng = np.random.default_rng(spec.seed)
    e = np.ones_like(x) if spec.direction is None else np.asarray(spec.direction, dtype=float)
    indices, terms = [], []
    for k in range(spec.terms):
        n = 2 ** k + (k % 2)
        if spec.kind == "constant":
            step = 0.0 * e
        elif spec.kind == "harmonic":
            step = e / n
        elif spec.kind == "alternating":
            step = (-1) ** n * e / n
        elif spec.kind == "geometric":
            step = e * 2.0 ** (-min(n, 1074))
        else:
            step = rng.uniform(-1.0, 1.0, x.shape) / n
        indices.append(n)
        terms.append(x + step)
    return indices, np.array(terms)


def fatou_lebesgue_harness(rho: RiskMeasure, x, spec: PerturbationSpec | None = None,
                           fatou_tol: float = FATOU_TOL, lebesgue_tol: float = LEBESGUE_TOL) -> FatouReport:
    """Evaluate ``rho`` along a bounded sequence converging to ``x`` and check lower semicontinuity and continuity."""
    spec = spec or PerturbationSpec()
    x = check_rv(rho.alg, x)
    indices, xs = perturbed_sequence(x, spec)
    vals = rho(xs)
    rx = rho(x)
    envelope = cond_norm(rho.alg, xs - x, np.inf)
    lipschitz_ok = bool(np.all(np.abs(vals - rx) <= envelope + 1e-10))
    tail = vals[-spec.tail:]
    liminf = tail.min(axis=0)
    limit = vals[-1]
    fatou_ok = bool(np.all(liminf >= rx - fatou_tol))
    lebesgue_ok = bool(np.all(np.abs(tail - rx) <= lebesgue_tol))
    return FatouReport(indices, vals, rx, liminf, limit, lipschitz_ok, fatou_ok, lebesgue_ok,
                       fatou_tol, lebesgue_tol)
