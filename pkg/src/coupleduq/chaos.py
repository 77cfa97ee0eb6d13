"""Orthonormal polynomial bases and quadrature rules on the uniform hypercube.

Everything here lives on the parameter domain ``[-1, 1]**s`` equipped with the
uniform product probability density ``2**-s``.  Univariate building blocks are
Legendre polynomials normalized to unit variance under that density; the
multivariate basis is the total-degree tensor construction, and quadrature
rules are either full tensor grids or Smolyak combinations of non-nested
Gauss-Legendre rules with linear growth (level ``l`` uses ``l + 1`` nodes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import eigh_tridiagonal

#: Hard cap on the node count of any constructed rule.
MAX_RULE_NODES = 5_000_000

#: Hard cap on the size of a total-degree index set.
MAX_BASIS_TERMS = 10_000_000

_DEDUP_DECIMALS = 12


class QuadratureSizeError(RuntimeError):
    """Requested rule exceeds the configured node cap."""


class DomainError(ValueError):
    """A point lies outside the parameter domain ``[-1, 1]**s``."""


# ---------------------------------------------------------------------------
# univariate machinery
# ---------------------------------------------------------------------------

def legendre_recurrence(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Jacobi-matrix coefficients of the first ``n`` Legendre polynomials.

    Returns ``(diag, offdiag)`` of the symmetric tridiagonal Jacobi matrix for
    the polynomials orthonormal under the uniform probability density on
    ``[-1, 1]``; ``diag`` has length ``n`` and ``offdiag`` length ``n - 1``.
    """
    if n < 1:
        raise ValueError(f"need at least one recurrence term, got n={n}")
    k = np.arange(1, n, dtype=float)
    offdiag = k / np.sqrt(4.0 * k * k - 1.0)
    return np.zeros(n), offdiag


@dataclass(frozen=True)
class UnivariateRule:
    """Gauss rule for a probability density: weights are positive, sum to 1."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if abs(self.weights.sum() - 1.0) > 1e-14:
            raise ValueError("univariate weights must sum to 1")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("univariate nodes must be strictly increasing")


def golub_welsch(n: int, recurrence=legendre_recurrence) -> UnivariateRule:
    """Gauss rule with ``n`` nodes from a three-term recurrence.

    Nodes are the eigenvalues of the symmetric Jacobi matrix; the weight of
    node ``j`` is the squared first component of its eigenvector, which sums
    to one for a probability density.
    """
    if n < 1:
        raise ValueError(f"node count must be positive, got {n}")
    diag, offdiag = recurrence(n)
    if n == 1:
        return UnivariateRule(nodes=diag.copy(), weights=np.ones(1))
    try:
        nodes, vecs = eigh_tridiagonal(diag, offdiag)
    except Exception as exc:  # pragma: no cover - LAPACK failure is exotic
        raise RuntimeError(f"Jacobi eigendecomposition failed for n={n}") from exc
    weights = vecs[0, :] ** 2
    weights = weights / weights.sum()
    return UnivariateRule(nodes=nodes, weights=weights)


def legendre_rule(n: int) -> UnivariateRule:
    """Symmetrized Gauss-Legendre rule so shared nodes match bitwise.

    Gauss-Legendre nodes come in exact +/- pairs with equal weights; the
    eigen-solver only delivers this up to roundoff.  Symmetrizing makes the
    midpoint of odd rules exactly 0.0, so Smolyak deduplication across levels
    merges exact duplicates.
    """
    rule = golub_welsch(n)
    nodes = 0.5 * (rule.nodes - rule.nodes[::-1])
    weights = 0.5 * (rule.weights + rule.weights[::-1])
    return UnivariateRule(nodes=nodes, weights=weights / weights.sum())


def orthonormal_values(x, degree: int, recurrence=legendre_recurrence) -> np.ndarray:
    """Evaluate orthonormal polynomials 0..degree at ``x``; shape (..., degree+1)."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (degree + 1,))
    out[..., 0] = 1.0
    if degree == 0:
        return out
    diag, offdiag = legendre_like_coeffs(degree + 1, recurrence)
    out[..., 1] = (x - diag[0]) / offdiag[0]
    for k in range(1, degree):
        out[..., k + 1] = (
            (x - diag[k]) * out[..., k] - offdiag[k - 1] * out[..., k - 1]
        ) / offdiag[k]
    return out


def legendre_like_coeffs(n, recurrence):
    diag, offdiag = recurrence(n)
    if len(offdiag) != n - 1:
        raise ValueError("recurrence returned inconsistent coefficient lengths")
    return diag, offdiag


# ---------------------------------------------------------------------------
# total-degree multi-indices
# ---------------------------------------------------------------------------

def total_degree_indices(s: int, p: int) -> np.ndarray:
    """All multi-indices in ``N_0^s`` with total degree <= p.

    Sorted by total degree, ties broken lexicographically on the exponent
    tuple.  Row count is ``C(p + s, s)``.
    """
    if s < 1:
        raise ValueError(f"dimension must be positive, got s={s}")
    if p < 0:
        raise ValueError(f"order must be non-negative, got p={p}")
    count = math.comb(p + s, s)
    if count > MAX_BASIS_TERMS:
        raise ValueError(f"index set of size {count} exceeds cap {MAX_BASIS_TERMS}")
    rows = []
    for degree in range(p + 1):
        rows.extend(_compositions(degree, s))
    return np.array(rows, dtype=np.int64).reshape(count, s)


def _compositions(total, parts):
    """Weak compositions of ``total`` into ``parts`` slots, lexicographic."""
    if parts == 1:
        yield (total,)
        return
    # stars and bars: bar positions chosen in lexicographic order give
    # lexicographic compositions
    for bars in combinations(range(total + parts - 1), parts - 1):
        comp = []
        prev = -1
        for b in bars:
            comp.append(b - prev - 1)
            prev = b
        comp.append(total + parts - 2 - prev)
        yield tuple(comp)


def monomial_matrix(points: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Evaluate monomials ``prod_k x_k**a_k`` at each point; shape (Q, len(indices))."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    q, s = points.shape
    max_deg = int(indices.max()) if indices.size else 0
    # per-coordinate power tables, then gather-product over coordinates
    powers = np.ones((s, q, max_deg + 1))
    for d in range(1, max_deg + 1):
        powers[:, :, d] = powers[:, :, d - 1] * points.T
    out = np.ones((q, indices.shape[0]))
    for k in range(s):
        out *= powers[k][:, indices[:, k]]
    return out


def uniform_monomial_moment(alpha) -> float:
    """Exact moment of a monomial under the uniform product density."""
    m = 1.0
    for a in alpha:
        if a % 2 == 1:
            return 0.0
        m /= a + 1
    return m


# ---------------------------------------------------------------------------
# multivariate basis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TotalDegreeBasis:
    """Total-degree orthonormal polynomial basis on ``[-1, 1]**s``."""

    dim: int
    order: int
    indices: np.ndarray

    @classmethod
    def build(cls, s: int, p: int) -> "TotalDegreeBasis":
        return cls(dim=s, order=p, indices=total_degree_indices(s, p))

    @property
    def size(self) -> int:
        """Number of basis polynomials, ``P + 1``."""
        return self.indices.shape[0]

    def eval_at(self, points, check_domain: bool = True) -> np.ndarray:
        """Basis values at one point or a stack of points; shape (Q, P+1)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dim:
            raise ValueError(
                f"points have dimension {points.shape[1]}, basis expects {self.dim}"
            )
        if check_domain and np.any(np.abs(points) > 1.0 + 1e-12):
            raise DomainError("point outside [-1, 1]^s; pass check_domain=False to skip")
        table = orthonormal_values(points, self.order)  # (Q, s, p+1)
        out = np.ones((points.shape[0], self.size))
        for k in range(self.dim):
            out *= table[:, k, self.indices[:, k]]
        return out

    def eval_one(self, xi, check_domain: bool = True) -> np.ndarray:
        return self.eval_at(xi, check_domain=check_domain)[0]


# ---------------------------------------------------------------------------
# quadrature rules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights on ``[-1, 1]**s``; Smolyak weights may be negative."""

    nodes: np.ndarray
    weights: np.ndarray
    dim: int
    level: int
    kind: str

    def __post_init__(self):
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("quadrature weights must sum to 1 within 1e-12")
        if np.any(np.abs(self.nodes) > 1.0 + 1e-12):
            raise ValueError("quadrature node outside [-1, 1]^s")

    def __len__(self) -> int:
        return self.weights.size

    def to_csv(self, path):
        data = np.column_stack([self.nodes, self.weights])
        header = ",".join([f"x{k}" for k in range(self.dim)] + ["weight"])
        np.savetxt(path, data, delimiter=",", header=header, comments="")


def tensor_quadrature(s: int, q: int) -> QuadratureRule:
    """Full tensor grid of ``q + 1``-node Gauss-Legendre rules: Q = (q+1)**s."""
    if s < 1 or q < 0:
        raise ValueError(f"invalid tensor rule parameters s={s}, q={q}")
    count = (q + 1) ** s
    if count > MAX_RULE_NODES:
        raise QuadratureSizeError(f"tensor rule would have {count} nodes")
    rule1d = legendre_rule(q + 1)
    grids = np.meshgrid(*([rule1d.nodes] * s), indexing="ij")
    nodes = np.column_stack([g.ravel() for g in grids])
    wgrids = np.meshgrid(*([rule1d.weights] * s), indexing="ij")
    weights = np.ones(count)
    for w in wgrids:
        weights *= w.ravel()
    return QuadratureRule(nodes=nodes, weights=weights, dim=s, level=q, kind="tensor")


def smolyak_quadrature(s: int, q: int) -> QuadratureRule:
    """Smolyak combination of Gauss-Legendre rules, exact for total degree <= 2q+1.

    Uses the combination formula over level multi-indices ``|l|_1 <= q`` with
    the linear-growth map ``l -> l + 1`` nodes.  Coinciding nodes from
    different tensor blocks are merged (coordinates equal within 1e-12) with
    weights summed.
    """
    if s < 1 or q < 0:
        raise ValueError(f"invalid Smolyak rule parameters s={s}, q={q}")
    if s == 1:
        rule = legendre_rule(q + 1)
        return QuadratureRule(
            nodes=rule.nodes[:, None], weights=rule.weights.copy(),
            dim=1, level=q, kind="smolyak",
        )
    rules1d = [legendre_rule(l + 1) for l in range(q + 1)]
    bucket: dict[tuple, tuple[np.ndarray, float]] = {}
    total = 0
    for t in range(max(0, q - s + 1), q + 1):
        coeff = (-1.0) ** (q - t) * math.comb(s - 1, q - t)
        for levels in _compositions(t, s):
            node_grids = np.meshgrid(*[rules1d[l].nodes for l in levels], indexing="ij")
            w_grids = np.meshgrid(*[rules1d[l].weights for l in levels], indexing="ij")
            pts = np.column_stack([g.ravel() for g in node_grids])
            wts = np.ones(pts.shape[0]) * coeff
            for w in w_grids:
                wts *= w.ravel()
            total += pts.shape[0]
            if total > MAX_RULE_NODES:
                raise QuadratureSizeError("Smolyak construction exceeds node cap")
            keys = np.round(pts, _DEDUP_DECIMALS)
            for key, pt, w in zip(map(tuple, keys), pts, wts):
                if key in bucket:
                    bucket[key] = (bucket[key][0], bucket[key][1] + w)
                else:
                    bucket[key] = (pt, w)
    keys = sorted(bucket.keys())
    nodes = np.array([bucket[k][0] for k in keys])
    weights = np.array([bucket[k][1] for k in keys])
    return QuadratureRule(nodes=nodes, weights=weights, dim=s, level=q, kind="smolyak")
