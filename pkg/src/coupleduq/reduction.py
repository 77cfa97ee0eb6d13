"""Per-iteration dimension and order reduction for coupled spectral propagation.

Given the stacked gPC coefficients of everything entering one module (its own
state, the partner's coupling input, its local parameters), this module

* truncates a Gramian-weighted SVD of the stacked fluctuation into a small set
  of uncorrelated reduced variables (a discrete Karhunen-Loeve expansion),
* orthonormalizes monomials of those reduced variables through a signed
  eigen-factorization of their moment matrix, robust to the negative weights
  of sparse grids,
* compresses the pulled-back global quadrature rule to few nodes by a pair of
  pivoted QR factorizations that preserve all monomial moments up to a target
  degree, and
* projects and lifts coefficient matrices between the reduced and the global
  representation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .chaos import QuadratureRule, TotalDegreeBasis, monomial_matrix, total_degree_indices
from .gpc import CoeffMatrix, Gramian, weighted_frobenius

SVD_RANK_TOL = 1e-12
QR_PIVOT_TOL = 1e-10


class DegenerateBasisError(RuntimeError):
    """Every moment-matrix eigenvalue fell below the rank threshold."""


class NumericalRankError(RuntimeError):
    """Triangular solve hit a numerically singular factor; loosen qr_tol."""


# ---------------------------------------------------------------------------
# stacked inputs and dimension reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StackedInput:
    """Vertically stacked coefficient matrices [own; partner; params]."""

    coeff: np.ndarray
    gramian: Gramian
    block_sizes: tuple[int, int, int]

    def __post_init__(self):
        if sum(self.block_sizes) != self.coeff.shape[0]:
            raise ValueError("block sizes do not sum to the stacked row count")

    @property
    def rows(self) -> int:
        return self.coeff.shape[0]


def stack_inputs(own: CoeffMatrix, partner: CoeffMatrix, params: CoeffMatrix,
                 own_gramian: Gramian, partner_gramian: Gramian) -> StackedInput:
    """Stack [own; partner; params] with the block-diagonal Gramian.

    The parameter block always carries the identity weight.
    """
    cols = {own.data.shape[1], partner.data.shape[1], params.data.shape[1]}
    if len(cols) != 1:
        raise ValueError(f"stacked blocks have mismatched column counts {cols}")
    coeff = np.vstack([own.data, partner.data, params.data])
    gram = Gramian.block_diag(
        [own_gramian, partner_gramian, Gramian.identity(params.data.shape[0])]
    )
    return StackedInput(
        coeff=coeff, gramian=gram,
        block_sizes=(own.data.shape[0], partner.data.shape[0], params.data.shape[0]),
    )


@dataclass(frozen=True)
class KlReduction:
    """Truncated affine representation ``z(theta) = mean + map @ theta``.

    ``theta_rows`` holds the gPC coefficient rows of the retained reduced
    variables (one row per variable, a leading zero in column 0, so
    ``theta_j(xi) = theta_rows[j] @ psi(xi)``).  ``singular_values`` keeps the
    full spectrum for error bookkeeping.
    """

    mean: np.ndarray
    map: np.ndarray
    theta_rows: np.ndarray
    singular_values: np.ndarray
    d: int
    block_sizes: tuple[int, int, int]
    degenerate: bool = False

    def affine_blocks(self):
        """Per-block (mean, map) pieces: own state, partner input, parameters."""
        out = []
        start = 0
        for size in self.block_sizes:
            out.append((self.mean[start:start + size], self.map[start:start + size]))
            start += size
        return out

    def theta_at(self, psi_at_nodes: np.ndarray) -> np.ndarray:
        """Reduced-variable values at quadrature nodes, shape (Q, d)."""
        return psi_at_nodes @ self.theta_rows.T

    def input_at(self, theta: np.ndarray) -> np.ndarray:
        """Stacked input vector at one reduced-space point."""
        return self.mean + self.map @ theta

    def tail_energy(self) -> float:
        """Sum of squared discarded singular values (exact truncation error)."""
        return float((self.singular_values[self.d:] ** 2).sum())

    def to_json(self) -> str:
        return json.dumps({
            "d": self.d,
            "degenerate": self.degenerate,
            "block_sizes": list(self.block_sizes),
            "singular_values": self.singular_values.tolist(),
            "mean": self.mean.tolist(),
            "map": self.map.tolist(),
            "theta_rows": self.theta_rows.tolist(),
        })


def dimension_reduce(stacked: StackedInput, eps_dim: float,
                     rank_tol: float = SVD_RANK_TOL) -> KlReduction:
    """Gramian-weighted SVD truncation of the stacked fluctuation.

    Drops column 0 of the stack, scales by the Gramian square root, computes
    the SVD, and keeps the smallest ``d`` with relative tail energy
    ``sqrt(sum_{j>d} s_j^2 / sum_j s_j^2) <= eps_dim``.  A zero fluctuation is
    flagged degenerate with a single all-zero reduced variable so downstream
    drivers can short-circuit to a deterministic solve.
    """
    if not 0.0 < eps_dim < 1.0:
        raise ValueError("eps_dim must lie in (0, 1)")
    fluct = stacked.coeff[:, 1:]
    cols = fluct.shape[1]
    weighted = stacked.gramian.sqrt_apply(fluct)
    try:
        u_mat, sigma, vt = np.linalg.svd(weighted, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("SVD of the stacked fluctuation failed") from exc
    total = float((sigma ** 2).sum())
    if total == 0.0 or sigma[0] < rank_tol:
        theta_rows = np.zeros((1, cols + 1))
        return KlReduction(
            mean=stacked.coeff[:, 0].copy(),
            map=np.zeros((stacked.rows, 1)),
            theta_rows=theta_rows,
            singular_values=sigma,
            d=1, block_sizes=stacked.block_sizes, degenerate=True,
        )
    tails = np.concatenate([np.cumsum((sigma ** 2)[::-1])[::-1][1:], [0.0]])
    ratios = np.sqrt(tails / total)
    d = int(np.argmax(ratios <= eps_dim)) + 1
    directions = stacked.gramian.sqrt_solve(u_mat[:, :d])
    zmap = directions * sigma[:d]
    theta_rows = np.hstack([np.zeros((d, 1)), vt[:d, :]])
    return KlReduction(
        mean=stacked.coeff[:, 0].copy(), map=zmap, theta_rows=theta_rows,
        singular_values=sigma, d=d, block_sizes=stacked.block_sizes,
    )


def theta_at_nodes(kl: KlReduction, psi_at_nodes: np.ndarray) -> np.ndarray:
    return kl.theta_at(psi_at_nodes)


def reduced_input_at(kl: KlReduction, theta: np.ndarray) -> np.ndarray:
    return kl.input_at(theta)


# ---------------------------------------------------------------------------
# data-driven orthonormal bases on the reduced variables
# ---------------------------------------------------------------------------

def build_hankel(theta_nodes: np.ndarray, weights: np.ndarray,
                 indices: np.ndarray) -> np.ndarray:
    """Quadrature moment matrix of the monomials ``sum_j w_j m(t_j) m(t_j)^T``.

    Symmetrized to kill roundoff; may be indefinite when sparse-grid weights
    are negative.
    """
    mono = monomial_matrix(theta_nodes, indices)
    hankel = (mono * weights[:, None]).T @ mono
    return 0.5 * (hankel + hankel.T)


@dataclass(frozen=True)
class ReducedBasis:
    """Orthonormal-up-to-sign polynomial basis on the reduced variables.

    ``transform`` maps the monomial vector to basis values; ``signs`` is the
    diagonal of the +/-1 matrix absorbing negative moment-matrix eigenvalues,
    so the discrete orthogonality reads ``sum_j w_j phi phi^T = diag(signs)``.
    """

    d: int
    order: int
    monomial_indices: np.ndarray
    transform: np.ndarray
    signs: np.ndarray
    node_evals: np.ndarray

    @property
    def size(self) -> int:
        return self.transform.shape[0]

    def eval_at(self, theta_points: np.ndarray) -> np.ndarray:
        return monomial_matrix(theta_points, self.monomial_indices) @ self.transform.T


def reduced_basis(theta_nodes: np.ndarray, weights: np.ndarray, d: int, order: int,
                  rank_tol: float = SVD_RANK_TOL,
                  hankel: np.ndarray | None = None) -> ReducedBasis:
    """Signed eigen-factorization basis from the monomial moment matrix.

    The symmetric eigendecomposition ``H = V diag(lam) V^T`` yields the signed
    factorization with ``signs = sign(lam)`` and scales ``|lam|``; eigenpairs
    with ``|lam| <= rank_tol * max|lam|`` are discarded.  Basis values are
    ``diag(|lam|)^(-1/2) V^T m(theta)``.
    """
    indices = total_degree_indices(d, order)
    if hankel is None:
        hankel = build_hankel(theta_nodes, weights, indices)
    lam, vecs = np.linalg.eigh(hankel)
    keep = np.abs(lam) > rank_tol * np.abs(lam).max() if lam.size else np.array([], bool)
    if not np.any(keep):
        raise DegenerateBasisError(
            "all moment-matrix eigenvalues below the rank threshold"
        )
    # stable descending-magnitude order keeps ties (e.g. H = I) untouched
    order_idx = np.argsort(-np.abs(lam), kind="stable")
    order_idx = order_idx[keep[order_idx]]
    lam = lam[order_idx]
    vecs = vecs[:, order_idx]
    transform = (vecs / np.sqrt(np.abs(lam))).T
    signs = np.sign(lam)
    node_evals = monomial_matrix(theta_nodes, indices) @ transform.T
    return ReducedBasis(
        d=d, order=order, monomial_indices=indices,
        transform=transform, signs=signs, node_evals=node_evals,
    )


# ---------------------------------------------------------------------------
# sparse quadrature extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SparseQuadrature:
    """Few-node reweighting of the global rule preserving monomial moments."""

    active_indices: np.ndarray
    weights: np.ndarray
    rank: int
    degree: int
    moment_residual: float

    def __len__(self) -> int:
        return self.active_indices.size

    def to_json(self) -> str:
        return json.dumps({
            "active_indices": self.active_indices.tolist(),
            "weights": self.weights.tolist(),
            "rank": self.rank,
            "degree": self.degree,
            "moment_residual": self.moment_residual,
        })


def optimal_quadrature(theta_nodes: np.ndarray, weights: np.ndarray, d: int,
                       degree: int, qr_tol: float = QR_PIVOT_TOL) -> SparseQuadrature:
    """Sparse weights matching all monomial moments up to ``degree``.

    Pivoted QR of the transposed Vandermonde matrix reveals its numerical
    rank ``r``; a second pivoted QR on the orthogonal factor picks at most
    ``r`` nodes, and a triangular solve reweights them so the compressed rule
    reproduces every retained moment of the dense rule.
    """
    indices = total_degree_indices(d, degree)
    vander = monomial_matrix(theta_nodes, indices)  # (Q, N+1): rows are nodes
    q1, r1, _ = scipy.linalg.qr(vander, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r1))
    if diag.size == 0 or diag[0] == 0.0:
        raise NumericalRankError("moment system has numerical rank zero")
    rank = int(np.sum(diag > qr_tol * diag[0]))
    if rank == 0:
        raise NumericalRankError("pivot threshold rejected every moment row")
    q_r = q1[:, :rank]  # (Q, r)
    q2, r2, piv = scipy.linalg.qr(q_r.T, mode="economic", pivoting=True)
    r_lead = r2[:, :rank]
    lead_diag = np.abs(np.diag(r_lead))
    if np.any(lead_diag < 1e3 * np.finfo(float).tiny):
        raise NumericalRankError(
            "numerically singular triangular factor; consider loosening qr_tol"
        )
    rhs = r2 @ weights[piv]
    coeffs = scipy.linalg.solve_triangular(r_lead, rhs, lower=False)
    sparse_w = np.zeros(weights.size)
    sparse_w[piv[:rank]] = coeffs
    active = np.flatnonzero(sparse_w)
    residual = float(np.max(np.abs(vander.T @ sparse_w - vander.T @ weights)))
    return SparseQuadrature(
        active_indices=active, weights=sparse_w[active], rank=rank,
        degree=degree, moment_residual=residual,
    )


# ---------------------------------------------------------------------------
# reduced projection and lifting
# ---------------------------------------------------------------------------

def reduced_project(samples: np.ndarray, sq: SparseQuadrature,
                    rb: ReducedBasis) -> np.ndarray:
    """Project samples at the active nodes onto the reduced basis.

    ``samples`` has one row per active node.  Returns the reduced coefficient
    matrix ``sum_j w_j u_j phi(theta_j)^T S`` with the trailing sign matrix.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] != len(sq):
        raise ValueError("one sample per active node required")
    phi = rb.node_evals[sq.active_indices]
    return ((samples * sq.weights[:, None]).T @ phi) * rb.signs


def lift_to_global(reduced: np.ndarray, rb: ReducedBasis, rule: QuadratureRule,
                   basis: TotalDegreeBasis,
                   psi_at_nodes: np.ndarray | None = None) -> CoeffMatrix:
    """Global coefficients ``sum_j w_j (U_red phi(theta_j)) psi(xi_j)^T``."""
    psi = basis.eval_at(rule.nodes) if psi_at_nodes is None else psi_at_nodes
    data = reduced @ (rb.node_evals * rule.weights[:, None]).T @ psi
    return CoeffMatrix(data=data, basis=basis)


def select_order(p_tilde: int, lifted_low: CoeffMatrix, lifted_high: CoeffMatrix,
                 gramian: Gramian, eps_ord: float, cap: int) -> int:
    """Increment the reduced order when the two lifted projections disagree.

    Returns ``p_tilde + 1`` iff ``||U_high - U_low||_G > eps_ord ||U_high||_G``
    and the cap allows it, else ``p_tilde``.
    """
    if p_tilde >= cap:
        return p_tilde
    gap = weighted_frobenius(lifted_high.data - lifted_low.data, gramian)
    scale = weighted_frobenius(lifted_high, gramian)
    return p_tilde + 1 if gap > eps_ord * scale else p_tilde
