from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

from crisk.measure_algebra import ProbSpace, SubAlgebra

ROOT = Path(__file__).resolve().parents[1]


def random_alg(rng: np.random.Generator, n_max: int = 12, m_max: int = 4) -> SubAlgebra:
    """A random space with n <= n_max atoms split into m <= m_max nonempty blocks."""
    m = int(rng.integers(1, m_max + 1))
    n = int(rng.integers(max(m, 2), n_max + 1))
    p = rng.uniform(0.2, 1.0, n)
    p /= p.sum()
    p[-1] = 1.0 - p[:-1].sum()
    perm = rng.permutation(n)
    cuts = np.sort(rng.choice(np.arange(1, n), m - 1, replace=False)) if m > 1 else []
    blocks = [sorted(int(i) for i in part) for part in np.split(perm, cuts)]
    return SubAlgebra(ProbSpace(p), blocks)


def four_atom() -> SubAlgebra:
    """Uniform quarters with blocks {0,1}, {2,3}."""
    return SubAlgebra(ProbSpace.uniform(4), [[0, 1], [2, 3]])


@pytest.fixture
def alg4():
    return four_atom()


@st.composite
def algebras(draw, n_max=8, m_max=4):
    seed = draw(st.integers(0, 2**32 - 1))
    return random_alg(np.random.default_rng(seed), n_max, m_max)


def positions(alg, lo=-10.0, hi=10.0):
    return st.lists(st.floats(lo, hi, allow_nan=False), min_size=alg.n, max_size=alg.n).map(np.array)


def bounded_polytope(rng: np.random.Generator, dim: int, vrep: bool):
    """A random bounded block: vertex cloud, or box plus random cuts through the interior."""
    from crisk.diagnostics import BlockSet
    if vrep:
        return BlockSet(vertices=rng.normal(size=(5, dim)))
    box = np.vstack([np.eye(dim), -np.eye(dim)])
    cuts = rng.normal(size=(3, dim))
    A = np.vstack([box, cuts])
    beta = np.concatenate([rng.uniform(0.5, 2.0, 2 * dim), rng.uniform(0.1, 1.0, 3)])
    return BlockSet(A=A, beta=beta)


def unbounded_polyhedron(rng: np.random.Generator, dim: int):
    """Halfspaces whose normals all point away from a random direction d, so d recedes."""
    from crisk.diagnostics import BlockSet
    d = rng.normal(size=dim)
    d /= np.linalg.norm(d)
    A = rng.normal(size=(dim + 2, dim))
    A -= np.outer(A @ d + rng.uniform(0.2, 1.0, dim + 2), d)  # now A d < 0 row by row
    return BlockSet(A=A, beta=rng.uniform(0.1, 1.0, dim + 2)), d


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
