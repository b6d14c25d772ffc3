import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crisk.solvers import concave_ascent, frank_wolfe_simplex, lp_maximize


def test_fw_linear_objective_reaches_vertex():
    c = np.array([0.2, 1.5, -0.3])
    res = frank_wolfe_simplex(lambda w: c @ w, lambda w: c, 3)
    assert res.converged
    np.testing.assert_allclose(res.w, [0, 1, 0], atol=1e-12)
    assert res.value == pytest.approx(1.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fw_entropy_regularized_matches_gibbs(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(2, 6))
    c, p = rng.normal(size=dim) * 3, rng.dirichlet(np.ones(dim))

    def f(w):
        pos = w > 0
        return c @ w - np.sum(w[pos] * np.log(w[pos] / p[pos]))

    def g(w):
        return c - np.log(np.maximum(w, 1e-300) / p) - 1

    res = frank_wolfe_simplex(f, g, dim)
    gibbs = p * np.exp(c - c.max())
    gibbs /= gibbs.sum()
    assert res.converged and res.gap <= 1e-8
    assert res.value == pytest.approx(np.log(p @ np.exp(c)), abs=1e-8)
    np.testing.assert_allclose(res.w, gibbs, atol=1e-4)


def test_fw_away_steps_reach_face():
    # optimum on an edge; the gap certifies the objective, the iterate is only sqrt-close
    target = np.array([0.3, 0.7, 0.0])
    res = frank_wolfe_simplex(lambda w: -np.sum((w - target) ** 2), lambda w: -2 * (w - target), 3)
    assert res.converged
    assert res.value >= -res.gap - 1e-12
    np.testing.assert_allclose(res.w, target, atol=1e-4)
    assert res.iterations < 1000


def test_lp_statuses():
    c = np.array([1.0, 1.0])
    opt = lp_maximize(c, A_ub=np.eye(2), b_ub=[1, 2], bounds=(0, None))
    assert opt.status == "optimal" and opt.value == pytest.approx(3.0)
    unb = lp_maximize(c, A_ub=-np.eye(2), b_ub=[0, 0])
    assert unb.status == "unbounded"
    inf = lp_maximize(c, A_ub=np.array([[1.0, 0], [-1.0, 0]]), b_ub=[-1, -1])
    assert inf.status == "infeasible"


def test_concave_ascent_quadratic():
    val, x, ok = concave_ascent(lambda x: -np.sum((x - 2.0) ** 2), np.zeros(3),
                                gradient=lambda x: -2 * (x - 2.0))
    assert ok
    assert val == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(x, 2.0, atol=1e-6)
