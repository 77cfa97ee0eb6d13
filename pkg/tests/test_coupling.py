"""Block Gauss-Seidel driver behavior on small algebraic systems."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from coupleduq.coupling import (
    BgsConfig,
    BgsDivergenceError,
    BgsNonConvergenceError,
    ModuleOperator,
    bgs_solve,
)
from coupleduq.gpc import Gramian


def linear_module(a, b, c, param_dim=1):
    """Module computing u = a + B v + C xi (a direct linear solve)."""
    a = np.atleast_1d(np.asarray(a, float))
    b = np.atleast_2d(np.asarray(b, float))
    c = np.atleast_2d(np.asarray(c, float))

    def solve(own, partner, params):
        return a + b @ partner + c @ params

    return ModuleOperator(
        state_dim=a.size, param_dim=param_dim,
        gramian=Gramian.identity(a.size), solve=solve,
    )


class TestBgsSolve:
    def test_decoupled_converges_in_one_sweep(self):
        m1 = linear_module([2.0], [[0.0]], [[1.0]])
        m2 = linear_module([-1.0], [[0.0]], [[0.5]])
        res = bgs_solve(m1, m2, [0.3], [0.4], cfg=BgsConfig(relaxation=1.0, tol=1e-12))
        assert res.iterations <= 2
        assert_allclose(res.u1, [2.3])
        assert_allclose(res.u2, [-0.8])

    def test_fixed_point_of_symmetric_pair(self):
        # u1 = 0.5 u2 + 1, u2 = 0.5 u1 + 1 has the closed-form fixed point (2, 2)
        m1 = linear_module([1.0], [[0.5]], [[0.0]])
        m2 = linear_module([1.0], [[0.5]], [[0.0]])
        res = bgs_solve(m1, m2, [0.0], [0.0],
                        cfg=BgsConfig(relaxation=1.0, tol=1e-12))
        assert_allclose(res.u1, [2.0], atol=1e-10)
        assert_allclose(res.u2, [2.0], atol=1e-10)

    def test_relaxation_one_matches_unrelaxed_bitwise(self):
        m1 = linear_module([1.0, 0.5], 0.3 * np.eye(2), np.zeros((2, 1)))
        m2 = linear_module([0.0, 1.0], -0.4 * np.eye(2), np.zeros((2, 1)))

        def manual_bgs(iters):
            u1 = np.zeros(2)
            u2 = np.zeros(2)
            for _ in range(iters):
                u1 = m1.solve(u1, u2, np.zeros(1))
                u2 = m2.solve(u2, u1, np.zeros(1))
            return u1, u2

        res = bgs_solve(m1, m2, [0.0], [0.0],
                        cfg=BgsConfig(relaxation=1.0, tol=1e-13, max_iters=50))
        ref1, ref2 = manual_bgs(res.iterations)
        assert np.array_equal(res.u1, ref1)
        assert np.array_equal(res.u2, ref2)

    def test_determinism(self):
        m1 = linear_module([1.0], [[0.6]], [[2.0]])
        m2 = linear_module([-0.5], [[0.3]], [[1.0]])
        r1 = bgs_solve(m1, m2, [0.2], [-0.1], cfg=BgsConfig())
        r2 = bgs_solve(m1, m2, [0.2], [-0.1], cfg=BgsConfig())
        assert np.array_equal(r1.u1, r2.u1)
        assert r1.residual_history == r2.residual_history

    def test_fixed_point_consistency(self):
        # one extra sweep from the converged state moves it less than tol
        m1 = linear_module([1.0], [[0.7]], [[0.0]])
        m2 = linear_module([2.0], [[-0.4]], [[0.0]])
        cfg = BgsConfig(relaxation=0.9, tol=1e-10, max_iters=500)
        res = bgs_solve(m1, m2, [0.0], [0.0], cfg=cfg)
        u1_next = m1.solve(res.u1, m2.coupling_of(res.u2), np.zeros(1))
        g = m1.gramian
        assert g.norm(u1_next - res.u1) <= cfg.tol * (1 + g.norm(res.u1)) * 10

    def test_interface_functions(self):
        # partner sees only the first component through the interface map
        sel = np.array([[1.0, 0.0]])

        def solve1(own, partner, params):
            return np.array([0.5 * partner[0] + 1.0, 3.0])

        def solve2(own, partner, params):
            return np.array([0.25 * partner[0], -1.0])

        m1 = ModuleOperator(2, 1, Gramian.identity(2), solve1,
                            interface=lambda u: sel @ u, interface_dim=1)
        m2 = ModuleOperator(2, 1, Gramian.identity(2), solve2,
                            interface=lambda u: sel @ u, interface_dim=1)
        res = bgs_solve(m1, m2, [0.0], [0.0], cfg=BgsConfig(relaxation=1.0, tol=1e-13))
        # fixed point: a = 0.5*(0.25 a) + 1 -> a = 8/7
        assert_allclose(res.u1[0], 8.0 / 7.0, atol=1e-10)
        assert_allclose(res.u2[0], 2.0 / 7.0, atol=1e-10)

    def test_divergence_raises(self):
        m1 = linear_module([1e200], [[1e200]], [[0.0]])
        m2 = linear_module([1e200], [[1e200]], [[0.0]])
        with np.errstate(over="ignore"), pytest.raises(BgsDivergenceError) as err:
            bgs_solve(m1, m2, [0.0], [0.0], cfg=BgsConfig(relaxation=1.0))
        assert err.value.iteration >= 1

    def test_non_convergence_carries_iterate(self):
        m1 = linear_module([1.0], [[0.999]], [[0.0]])
        m2 = linear_module([1.0], [[0.999]], [[0.0]])
        with pytest.raises(BgsNonConvergenceError) as err:
            bgs_solve(m1, m2, [0.0], [0.0],
                      cfg=BgsConfig(relaxation=1.0, tol=1e-14, max_iters=3))
        u1, u2 = err.value.states
        assert np.isfinite(u1).all() and np.isfinite(u2).all()


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            BgsConfig(relaxation=0.0)
        with pytest.raises(ValueError):
            BgsConfig(relaxation=1.2)
        with pytest.raises(ValueError):
            BgsConfig(tol=-1.0)

    def test_interface_requires_dim(self):
        with pytest.raises(ValueError):
            ModuleOperator(1, 1, Gramian.identity(1), lambda *a: np.zeros(1),
                           interface=lambda u: u)
