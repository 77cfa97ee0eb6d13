"""Small dense linear coupled systems for testing and demonstration.

Each module returns an affine response ``u_i = a_i + B_i v_partner + C_i xi_i``,
so the coupled fixed point has the closed form
``u_1 = (I - B_1 B_2)^{-1} (a_1 + B_1 a_2 + C_1 xi_1 + B_1 C_2 xi_2)`` and the
exact solution is linear in the parameters.
"""

from __future__ import annotations

import numpy as np

from ..coupling import ModuleOperator
from ..gpc import Gramian
from ..nisp import CoupledProblem


def _contractive(rng, rows, cols, scale):
    mat = rng.normal(size=(rows, cols))
    norm = np.linalg.norm(mat, 2)
    return scale * mat / norm if norm > 0 else mat


def linear_problem(n1: int = 3, n2: int = 2, s1: int = 1, s2: int = 1,
                   coupling: float = 0.4, seed: int = 0,
                   feed_forward: bool = False) -> CoupledProblem:
    """Random contractive linear pair; ``feed_forward`` zeroes B1 so module 1
    depends on its parameters only and the loop converges in two sweeps."""
    rng = np.random.default_rng(seed)
    a1 = rng.normal(size=n1)
    a2 = rng.normal(size=n2)
    b1 = np.zeros((n1, n2)) if feed_forward else _contractive(rng, n1, n2, coupling)
    b2 = _contractive(rng, n2, n1, coupling)
    c1 = rng.normal(size=(n1, s1))
    c2 = rng.normal(size=(n2, s2))

    def solve1(own, partner, params):
        return a1 + b1 @ partner + c1 @ params

    def solve2(own, partner, params):
        return a2 + b2 @ partner + c2 @ params

    m1 = ModuleOperator(n1, s1, Gramian.identity(n1), solve1)
    m2 = ModuleOperator(n2, s2, Gramian.identity(n2), solve2)
    problem = CoupledProblem(m1=m1, m2=m2, s1=s1, s2=s2, name="linear-synthetic")
    problem.exact = _exact_solution(a1, a2, b1, b2, c1, c2)  # type: ignore[attr-defined]
    return problem


def _exact_solution(a1, a2, b1, b2, c1, c2):
    n1 = a1.size
    n2 = a2.size
    inv1 = np.linalg.inv(np.eye(n1) - b1 @ b2)

    def exact(xi1, xi2):
        u1 = inv1 @ (a1 + b1 @ a2 + c1 @ np.atleast_1d(xi1) + b1 @ c2 @ np.atleast_1d(xi2))
        u2 = a2 + b2 @ u1 + c2 @ np.atleast_1d(xi2)
        return u1, u2

    return exact
