"""Basis and quadrature construction on the uniform hypercube."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from coupleduq import chaos


def jacobi_eig_oracle(n):
    """Brute-force dense eigendecomposition of the Legendre Jacobi matrix."""
    diag, off = chaos.legendre_recurrence(n)
    J = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    vals, vecs = np.linalg.eigh(J)
    return vals, vecs[0] ** 2


class TestGolubWelsch:
    def test_one_node(self):
        rule = chaos.golub_welsch(1)
        assert_allclose(rule.nodes, [0.0])
        assert_allclose(rule.weights, [1.0])

    def test_two_nodes_analytic(self):
        rule = chaos.golub_welsch(2)
        assert_allclose(rule.nodes, [-1 / math.sqrt(3), 1 / math.sqrt(3)], atol=1e-15)
        assert_allclose(rule.weights, [0.5, 0.5], atol=1e-15)

    def test_three_nodes_analytic(self):
        rule = chaos.golub_welsch(3)
        root = math.sqrt(3.0 / 5.0)
        assert_allclose(rule.nodes, [-root, 0.0, root], atol=1e-14)
        assert_allclose(rule.weights, [5 / 18, 8 / 18, 5 / 18], atol=1e-14)

    @pytest.mark.parametrize("n", [2, 4, 7, 11])
    def test_against_dense_eig_oracle(self, n):
        rule = chaos.golub_welsch(n)
        nodes, weights = jacobi_eig_oracle(n)
        assert_allclose(rule.nodes, nodes, atol=1e-13)
        assert_allclose(rule.weights, weights, atol=1e-13)

    @pytest.mark.parametrize("n", [1, 2, 3, 5, 9])
    def test_polynomial_exactness(self, n):
        # exact through degree 2n - 1 against analytic uniform moments
        rule = chaos.golub_welsch(n)
        for k in range(2 * n):
            exact = 0.0 if k % 2 else 1.0 / (k + 1)
            assert abs(rule.weights @ rule.nodes**k - exact) < 1e-14

    def test_invalid_count(self):
        with pytest.raises(ValueError):
            chaos.golub_welsch(0)

    def test_symmetrized_rule_has_exact_zero(self):
        rule = chaos.legendre_rule(5)
        assert rule.nodes[2] == 0.0
        assert_allclose(rule.nodes, -rule.nodes[::-1], atol=0)


class TestTotalDegreeIndices:
    def test_counts_match_binomial(self):
        assert len(chaos.total_degree_indices(6, 4)) == 210
        for s in range(1, 11):
            for p in range(0, 9):
                assert len(chaos.total_degree_indices(s, p)) == math.comb(p + s, s)

    def test_order_zero(self):
        idx = chaos.total_degree_indices(4, 0)
        assert idx.shape == (1, 4)
        assert np.all(idx == 0)

    def test_graded_lex_tie_break(self):
        idx = chaos.total_degree_indices(2, 1)
        assert idx.tolist() == [[0, 0], [0, 1], [1, 0]]

    def test_sorted_by_total_degree(self):
        idx = chaos.total_degree_indices(3, 5)
        degrees = idx.sum(axis=1)
        assert np.all(np.diff(degrees) >= 0)
        assert np.all(idx[0] == 0)

    def test_rejects_absurd_sizes(self):
        with pytest.raises(ValueError):
            chaos.total_degree_indices(40, 30)


class TestBasisEvaluation:
    def test_component_zero_is_one(self):
        basis = chaos.TotalDegreeBasis.build(3, 3)
        rng = np.random.default_rng(0)
        pts = rng.uniform(-1, 1, size=(20, 3))
        vals = basis.eval_at(pts)
        assert_allclose(vals[:, 0], 1.0, atol=0)

    def test_degree_one_orthonormal_legendre(self):
        # Gram-Schmidt on {1, x} under the uniform density gives sqrt(3) x
        basis = chaos.TotalDegreeBasis.build(1, 1)
        assert_allclose(basis.eval_one([1.0])[1], math.sqrt(3.0), rtol=1e-14)

    def test_mixed_index_at_corner(self):
        basis = chaos.TotalDegreeBasis.build(2, 2)
        j = next(
            k for k, a in enumerate(basis.indices) if a.tolist() == [1, 1]
        )
        assert_allclose(basis.eval_one([1.0, 1.0])[j], 3.0, rtol=1e-14)

    def test_domain_check(self):
        basis = chaos.TotalDegreeBasis.build(2, 1)
        with pytest.raises(chaos.DomainError):
            basis.eval_one([1.5, 0.0])
        vals = basis.eval_one([1.5, 0.0], check_domain=False)
        assert np.all(np.isfinite(vals))

    def test_discrete_orthonormality(self):
        # tensor rule of level q >= p integrates psi_a psi_b exactly
        basis = chaos.TotalDegreeBasis.build(3, 4)
        rule = chaos.tensor_quadrature(3, 4)
        psi = basis.eval_at(rule.nodes)
        gram = (psi * rule.weights[:, None]).T @ psi
        assert_allclose(gram, np.eye(basis.size), atol=1e-12)


class TestTensorQuadrature:
    def test_two_by_two(self):
        rule = chaos.tensor_quadrature(2, 1)
        assert len(rule) == 4
        assert_allclose(rule.weights, 0.25)

    def test_midpoint(self):
        rule = chaos.tensor_quadrature(1, 0)
        assert_allclose(rule.nodes, [[0.0]])
        assert_allclose(rule.weights, [1.0])

    def test_count_three_cubed(self):
        assert len(chaos.tensor_quadrature(3, 2)) == 27

    def test_node_cap(self):
        with pytest.raises(chaos.QuadratureSizeError):
            chaos.tensor_quadrature(12, 6)


def monomial_exactness_violation(rule, degree):
    """Worst absolute integration error over all monomials of total degree <= degree."""
    indices = chaos.total_degree_indices(rule.dim, degree)
    vals = chaos.monomial_matrix(rule.nodes, indices)
    approx = rule.weights @ vals
    exact = np.array([chaos.uniform_monomial_moment(a) for a in indices])
    return np.max(np.abs(approx - exact))


class TestSmolyakQuadrature:
    def test_degenerates_to_univariate(self):
        for q in range(4):
            sm = chaos.smolyak_quadrature(1, q)
            gl = chaos.legendre_rule(q + 1)
            assert_allclose(sm.nodes[:, 0], gl.nodes, atol=1e-15)
            assert_allclose(sm.weights, gl.weights, atol=1e-15)

    def test_sparser_than_tensor(self):
        sm = chaos.smolyak_quadrature(6, 2)
        assert len(sm) < 3**6
        assert monomial_exactness_violation(sm, 5) < 1e-12

    def test_paper_scale_cardinalities(self):
        # same ballpark as the reference tables; exactness is the contract
        assert len(chaos.smolyak_quadrature(6, 2)) == 85
        assert len(chaos.smolyak_quadrature(6, 3)) == 389

    def test_weights_sum_to_one(self):
        rule = chaos.smolyak_quadrature(4, 3)
        assert abs(rule.weights.sum() - 1.0) < 1e-12

    def test_negative_weights_appear(self):
        rule = chaos.smolyak_quadrature(3, 2)
        assert rule.weights.min() < 0

    @settings(max_examples=20, deadline=None)
    @given(s=st.integers(1, 4), q=st.integers(0, 3))
    def test_exactness_property(self, s, q):
        rule = chaos.smolyak_quadrature(s, q)
        assert monomial_exactness_violation(rule, 2 * q + 1) < 1e-12


class TestSerialization:
    def test_csv_roundtrip(self, tmp_path):
        rule = chaos.smolyak_quadrature(2, 2)
        path = tmp_path / "rule.csv"
        rule.to_csv(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert_allclose(data[:, :2], rule.nodes)
        assert_allclose(data[:, 2], rule.weights)
