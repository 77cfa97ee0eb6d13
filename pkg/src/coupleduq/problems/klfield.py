"""Truncated Karhunen-Loeve random fields with exponential covariance.

The 1-D building blocks on an interval of unit length centered at the origin
are trigonometric modes ``cos(zeta_j t)`` (odd ``j``) and ``sin(zeta_j t)``
(even ``j``) whose frequencies solve ``l * zeta + tan(zeta / 2) = 0``, scaled
so each mode carries its eigenvalue ``2l / (1 + l^2 zeta^2)``.  Tensor fields
flatten the per-coordinate modes into a single index ordered by decreasing
eigenvalue product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SQRT3 = math.sqrt(3.0)


class RootBracketError(RuntimeError):
    """Bisection bracket failed to change sign."""


def kl_roots(corr_len: float, count: int) -> np.ndarray:
    """First positive roots of ``l*zeta + tan(zeta/2) = 0``, ascending.

    The j-th root lies in ``((2j-1) pi, (2j+1) pi)``.  Bisection runs on the
    pole-free reformulation ``zeta/2 - j pi + arctan(l zeta) = 0`` and a
    Newton polish localizes the root to machine precision; the defining
    residual is checked against 1e-10 (its conditioning grows like
    ``1 + l^2 zeta^2``, so 1e-12 is unreachable for large roots).
    """
    if corr_len <= 0:
        raise ValueError("correlation length must be positive")
    roots = np.empty(count)
    for j in range(1, count + 1):
        lo, hi = (2 * j - 1) * math.pi, (2 * j + 1) * math.pi

        def phi(z):
            return 0.5 * z - j * math.pi + math.atan(corr_len * z)

        flo, fhi = phi(lo), phi(hi)
        if flo > 0 or fhi < 0:  # pragma: no cover - analytic signs
            raise RootBracketError(f"no sign change in bracket for root {j}")
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if phi(mid) <= 0:
                lo = mid
            else:
                hi = mid
        z = 0.5 * (lo + hi)
        for _ in range(6):
            step = phi(z) / (0.5 + corr_len / (1.0 + (corr_len * z) ** 2))
            z -= step
            if abs(step) < 1e-15 * z:
                break
        # the tan-form residual is amplified by ~1 + (l z)^2 near the root
        cond = 1.0 + (corr_len * z) ** 2
        if abs(corr_len * z + math.tan(0.5 * z)) > max(1e-10, 1e-13 * cond * z):
            raise RootBracketError(f"root {j} residual too large")
        roots[j - 1] = z
    return roots


def eigenvalue(corr_len: float, zeta) -> np.ndarray:
    return 2.0 * corr_len / (1.0 + (corr_len * zeta) ** 2)


def _mode_1d(corr_len, zeta, j, t, deriv=0):
    """Scaled 1-D mode (eigenvalue absorbed); odd j cosine, even j sine."""
    zeta = float(zeta)
    amp = 2.0 * math.sqrt(corr_len * zeta / (1.0 + (corr_len * zeta) ** 2))
    if j % 2 == 1:
        amp /= math.sqrt(zeta + math.sin(zeta))
        base = [np.cos, lambda v: -np.sin(v), lambda v: -np.cos(v)][deriv]
        sign = 1.0
    else:
        amp /= math.sqrt(zeta - math.sin(zeta))
        base = [np.sin, np.cos, lambda v: -np.sin(v)][deriv]
        sign = 1.0
    return sign * amp * zeta**deriv * base(zeta * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class KlField:
    """Mean plus a finite sum of scaled spatial modes times uniform variables.

    ``field(x, xi) = mean + sqrt(3) * delta * sum_k gamma_k(x) * xi_k`` with
    ``xi ~ U[-1, 1]^terms``; the ``sqrt(3)`` restores unit variance.
    """

    mean: float
    delta: float
    corr_len: float
    terms: int
    intervals: tuple[tuple[float, float], ...]
    roots: np.ndarray
    index_map: np.ndarray

    @classmethod
    def build(cls, mean: float, delta: float, corr_len: float, terms: int,
              intervals) -> "KlField":
        intervals = tuple((float(a), float(b)) for a, b in intervals)
        ndim = len(intervals)
        for a, b in intervals:
            if abs((b - a) - 1.0) > 1e-12:
                raise ValueError("eigenfunctions assume unit-length intervals")
        roots = kl_roots(corr_len, terms)
        lam = eigenvalue(corr_len, roots)
        candidates = np.stack(
            np.meshgrid(*([np.arange(1, terms + 1)] * ndim), indexing="ij"),
            axis=-1,
        ).reshape(-1, ndim)
        products = lam[candidates - 1].prod(axis=1)
        order = sorted(
            range(len(candidates)),
            key=lambda k: (-products[k], candidates[k].sum(), tuple(candidates[k])),
        )
        index_map = candidates[order[:terms]]
        return cls(mean=float(mean), delta=float(delta), corr_len=float(corr_len),
                   terms=terms, intervals=intervals, roots=roots,
                   index_map=index_map)

    @property
    def ndim(self) -> int:
        return len(self.intervals)

    def _centered(self, x):
        x = np.asarray(x, dtype=float)
        if self.ndim == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        centers = np.array([0.5 * (a + b) for a, b in self.intervals])
        return x - centers

    def modes(self, x) -> np.ndarray:
        """All flattened modes ``gamma_k`` at points ``x``; shape (..., terms)."""
        t = self._centered(x)
        out = np.ones(t.shape[:-1] + (self.terms,))
        for axis in range(self.ndim):
            for k, modes in enumerate(self.index_map):
                j = int(modes[axis])
                out[..., k] *= _mode_1d(self.corr_len, self.roots[j - 1], j,
                                        t[..., axis])
        return out

    def __call__(self, x, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return self.mean + SQRT3 * self.delta * self.modes(x) @ xi

    def fluctuation_coeffs(self, x) -> np.ndarray:
        """Coefficients of each xi_k in the field value, shape (..., terms)."""
        return SQRT3 * self.delta * self.modes(x)

    def grad_modes(self, x) -> np.ndarray:
        """Spatial gradient of every mode, shape (..., ndim, terms)."""
        t = self._centered(x)
        out = np.ones(t.shape[:-1] + (self.ndim, self.terms))
        for axis in range(self.ndim):
            for k, modes in enumerate(self.index_map):
                j = int(modes[axis])
                for g_axis in range(self.ndim):
                    deriv = 1 if g_axis == axis else 0
                    out[..., g_axis, k] *= _mode_1d(
                        self.corr_len, self.roots[j - 1], j, t[..., axis], deriv)
        return out

    def gradient(self, x, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return SQRT3 * self.delta * self.grad_modes(x) @ xi

    def deriv_1d(self, x, xi, order: int) -> np.ndarray:
        """Derivative of a 1-D field along its single coordinate."""
        if self.ndim != 1:
            raise ValueError("deriv_1d applies to 1-D fields only")
        t = self._centered(x)[..., 0]
        xi = np.asarray(xi, dtype=float)
        vals = np.stack([
            _mode_1d(self.corr_len, self.roots[j - 1], int(j), t, order)
            for j in self.index_map[:, 0]
        ], axis=-1)
        out = SQRT3 * self.delta * vals @ xi
        if order == 0:
            out = out + self.mean
        return out
