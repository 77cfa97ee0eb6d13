"""Polynomial-chaos coefficient matrices: projection, moments, norms, sampling.

A surrogate is stored as a coefficient matrix ``U`` of shape ``(n, P+1)``
against a :class:`~coupleduq.chaos.TotalDegreeBasis`; evaluating it at a
parameter point is the matrix-vector product ``U @ psi(xi)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .chaos import QuadratureRule, TotalDegreeBasis


class Gramian:
    """SPD weight matrix defining a discrete solution norm.

    Stored as ``None`` (identity), a 1-D array (diagonal), or a dense/sparse
    SPD matrix.  Symmetry is required within 1e-12 and the Cholesky
    factorization must succeed.
    """

    def __init__(self, matrix, dim: int):
        self.dim = dim
        self._chol_upper = None
        if matrix is None:
            self.matrix = None
        elif np.ndim(matrix) == 1:
            vals = np.asarray(matrix, dtype=float)
            if vals.size != dim or np.any(vals <= 0):
                raise ValueError("diagonal Gramian needs positive entries of length dim")
            self.matrix = vals
        else:
            if scipy.sparse.issparse(matrix):
                matrix = matrix.toarray()
            mat = np.asarray(matrix, dtype=float)
            if mat.shape != (dim, dim):
                raise ValueError(f"Gramian shape {mat.shape} != ({dim}, {dim})")
            if np.max(np.abs(mat - mat.T)) > 1e-12 * max(1.0, np.max(np.abs(mat))):
                raise ValueError("Gramian is not symmetric within 1e-12")
            self.matrix = 0.5 * (mat + mat.T)
            self._chol_upper = scipy.linalg.cholesky(self.matrix)  # raises if not SPD

    @classmethod
    def identity(cls, dim: int) -> "Gramian":
        return cls(None, dim)

    @classmethod
    def diagonal(cls, values) -> "Gramian":
        values = np.asarray(values, dtype=float)
        return cls(values, values.size)

    @classmethod
    def scaled_identity(cls, scale: float, dim: int) -> "Gramian":
        return cls(np.full(dim, float(scale)), dim)

    @classmethod
    def block_diag(cls, parts: list["Gramian"]) -> "Gramian":
        dim = sum(p.dim for p in parts)
        if all(p.matrix is None for p in parts):
            return cls.identity(dim)
        if all(p.matrix is None or p.matrix.ndim == 1 for p in parts):
            diag = np.concatenate(
                [np.ones(p.dim) if p.matrix is None else p.matrix for p in parts]
            )
            return cls(diag, dim)
        return cls(scipy.linalg.block_diag(*[p.dense() for p in parts]), dim)

    def dense(self) -> np.ndarray:
        if self.matrix is None:
            return np.eye(self.dim)
        if self.matrix.ndim == 1:
            return np.diag(self.matrix)
        return self.matrix

    def apply(self, vec_or_mat: np.ndarray) -> np.ndarray:
        if self.matrix is None:
            return vec_or_mat
        if self.matrix.ndim == 1:
            return (vec_or_mat.T * self.matrix).T
        return self.matrix @ vec_or_mat

    def sqrt_apply(self, mat: np.ndarray) -> np.ndarray:
        """Left-multiply by a factor ``F`` with ``F.T @ F == G``."""
        if self.matrix is None:
            return mat
        if self.matrix.ndim == 1:
            return (mat.T * np.sqrt(self.matrix)).T
        return self._chol_upper @ mat

    def sqrt_solve(self, mat: np.ndarray) -> np.ndarray:
        """Solve ``F @ x = mat`` for the same factor used by :meth:`sqrt_apply`."""
        if self.matrix is None:
            return mat
        if self.matrix.ndim == 1:
            return (mat.T / np.sqrt(self.matrix)).T
        return scipy.linalg.solve_triangular(self._chol_upper, mat, lower=False)

    def norm(self, vec: np.ndarray) -> float:
        return float(np.sqrt(max(vec @ self.apply(vec), 0.0)))


@dataclass(frozen=True)
class CoeffMatrix:
    """gPC coefficient matrix paired with its basis descriptor."""

    data: np.ndarray
    basis: TotalDegreeBasis

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[1] != self.basis.size:
            raise ValueError(
                f"coefficient matrix has {self.data.shape} entries, basis has "
                f"{self.basis.size} polynomials"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("coefficient matrix contains non-finite entries")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def to_csv(self, path):
        np.savetxt(path, self.data, delimiter=",")

    def header(self) -> dict:
        return {"n": self.n, "p": self.basis.order, "s": self.basis.dim}


def project(samples, rule: QuadratureRule, basis: TotalDegreeBasis,
            psi_at_nodes: np.ndarray | None = None) -> CoeffMatrix:
    """Spectral projection ``U = sum_j w_j u(xi_j) psi(xi_j)^T``.

    ``samples`` holds one solution vector per quadrature node, shape (Q, n).
    Accumulation follows node-index order, so repeated runs are bit-identical.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] != len(rule):
        raise ValueError(
            f"{samples.shape[0]} sample vectors for a rule with {len(rule)} nodes"
        )
    psi = basis.eval_at(rule.nodes) if psi_at_nodes is None else psi_at_nodes
    data = (samples * rule.weights[:, None]).T @ psi
    return CoeffMatrix(data=data, basis=basis)


def evaluate(c: CoeffMatrix, xi) -> np.ndarray:
    """Surrogate value ``U @ psi(xi)`` at a single point."""
    return c.data @ c.basis.eval_one(xi)


def evaluate_at(c: CoeffMatrix, points, check_domain=True) -> np.ndarray:
    """Surrogate values at a stack of points, shape (Q, n)."""
    return c.basis.eval_at(points, check_domain=check_domain) @ c.data.T


def mean(c: CoeffMatrix) -> np.ndarray:
    return c.data[:, 0].copy()


def covariance(c: CoeffMatrix) -> np.ndarray:
    cov = c.data @ c.data.T - np.outer(c.data[:, 0], c.data[:, 0])
    return 0.5 * (cov + cov.T)


def std(c: CoeffMatrix) -> np.ndarray:
    """Componentwise standard deviation from the non-mean coefficients."""
    return np.sqrt(np.maximum((c.data[:, 1:] ** 2).sum(axis=1), 0.0))


def weighted_frobenius(data_or_coeff, gramian: Gramian) -> float:
    """``sqrt(trace(U^T G U))``."""
    data = data_or_coeff.data if isinstance(data_or_coeff, CoeffMatrix) else data_or_coeff
    return float(np.linalg.norm(gramian.sqrt_apply(data)))


def mean_square_error(a: CoeffMatrix, b: CoeffMatrix, gramian: Gramian,
                      rule: QuadratureRule | None = None) -> float:
    """Root-mean-square surrogate difference in the G-weighted norm.

    With ``rule`` given, evaluates ``sqrt(sum_j w_j ||(A-B) psi(xi_j)||_G^2)``;
    otherwise uses the Parseval shortcut ``||A - B||_G`` (exact for
    orthonormal bases and exact rules, cross-checked in the test suite).
    """
    if a.basis is not b.basis and a.basis.size != b.basis.size:
        raise ValueError("coefficient matrices live on different bases")
    diff = a.data - b.data
    if rule is None:
        return weighted_frobenius(diff, gramian)
    psi = a.basis.eval_at(rule.nodes)
    vals = psi @ diff.T  # (Q, n)
    sq = np.einsum("qn,qn->q", vals, gramian.apply(vals.T).T)
    return float(np.sqrt(max(rule.weights @ sq, 0.0)))


def sample_surrogate(c: CoeffMatrix, count: int, seed: int) -> np.ndarray:
    """Evaluate the surrogate at ``count`` i.i.d. uniform parameter draws."""
    if count < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-1.0, 1.0, size=(count, c.basis.dim))
    return evaluate_at(c, xi, check_domain=False)


@dataclass(frozen=True)
class DensityEstimate:
    """Gaussian-kernel density of a scalar quantity on a fixed grid."""

    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def __post_init__(self):
        integral = np.trapezoid(self.density, self.grid)
        if not 0.98 <= integral <= 1.02:
            raise ValueError(f"density integrates to {integral:.4f}, expected ~1")


def kde(samples, grid=None, bandwidth: float | None = None,
        grid_points: int = 512) -> DensityEstimate:
    """Gaussian KDE with the Silverman bandwidth ``1.06 sigma N^(-1/5)``."""
    samples = np.asarray(samples, dtype=float).ravel()
    n = samples.size
    if n < 2:
        raise ValueError("need at least two samples for a density estimate")
    sigma = samples.std()
    if bandwidth is None:
        bandwidth = 1.06 * sigma * n ** (-0.2)
    if bandwidth < 1e-12:
        warnings.warn("degenerate samples: clamping KDE bandwidth to 1e-12")
        bandwidth = 1e-12
    if grid is None:
        pad = 3.5 * bandwidth + 1e-12
        grid = np.linspace(samples.min() - pad, samples.max() + pad, grid_points)
    else:
        grid = np.asarray(grid, dtype=float)
    density = np.zeros_like(grid)
    norm = 1.0 / (n * bandwidth * np.sqrt(2.0 * np.pi))
    for start in range(0, n, 20000):  # chunked to bound the broadcast buffer
        block = samples[start:start + 20000]
        z = (grid[:, None] - block[None, :]) / bandwidth
        density += norm * np.exp(-0.5 * z * z).sum(axis=1)
    return DensityEstimate(grid=grid, density=density, bandwidth=float(bandwidth))
