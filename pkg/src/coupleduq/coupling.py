"""Module operators and the deterministic block Gauss-Seidel driver.

A module is one physics block: it maps (own state, partner coupling input,
local parameters) to an updated state, optionally exposing an interface
function that extracts the coupling variables the partner consumes.  The BGS
driver alternates the two modules, relaxing the exchanged coupling variables,
until both state updates fall below tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .gpc import Gramian


class BgsDivergenceError(RuntimeError):
    """A state became non-finite; carries the iteration index."""

    def __init__(self, iteration: int):
        super().__init__(f"non-finite state at BGS iteration {iteration}")
        self.iteration = iteration


class BgsNonConvergenceError(RuntimeError):
    """Iteration budget exhausted; carries the last iterate."""

    def __init__(self, max_iters: int, states):
        super().__init__(f"BGS did not converge within {max_iters} iterations")
        self.states = states


@dataclass
class ModuleOperator:
    """One solver component of a two-module coupled system.

    ``solve(own, partner, params)`` must be deterministic and return a vector
    of length ``state_dim``.  When ``interface`` is set, the partner receives
    ``interface(state)`` instead of the state itself; ``interface_gramian``
    weighs that coupling stream when it is stacked into reduction inputs.
    """

    state_dim: int
    param_dim: int
    gramian: Gramian
    solve: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    interface: Optional[Callable[[np.ndarray], np.ndarray]] = None
    interface_dim: Optional[int] = None
    interface_gramian: Optional[Gramian] = None

    def __post_init__(self):
        if self.interface is not None and self.interface_dim is None:
            raise ValueError("interface_dim required when an interface is given")
        if self.interface is not None and self.interface_gramian is None:
            self.interface_gramian = Gramian.identity(self.interface_dim)

    def coupling_of(self, state: np.ndarray) -> np.ndarray:
        return self.interface(state) if self.interface is not None else state

    @property
    def coupling_dim(self) -> int:
        return self.interface_dim if self.interface is not None else self.state_dim

    @property
    def coupling_gramian(self) -> Gramian:
        if self.interface is not None:
            return self.interface_gramian
        return self.gramian


@dataclass
class BgsConfig:
    relaxation: float = 0.9
    tol: float = 1e-6
    max_iters: int = 200

    def __post_init__(self):
        if not 0.0 < self.relaxation <= 1.0:
            raise ValueError("relaxation must lie in (0, 1]")
        if self.tol <= 0 or self.max_iters < 1:
            raise ValueError("tolerance and iteration budget must be positive")


@dataclass
class BgsResult:
    u1: np.ndarray
    u2: np.ndarray
    iterations: int
    residual_history: list = field(default_factory=list)


def _relax(omega: float, new: np.ndarray, old: np.ndarray) -> np.ndarray:
    if omega == 1.0:
        return new
    return omega * new + (1.0 - omega) * old


def bgs_solve(m1: ModuleOperator, m2: ModuleOperator, xi1, xi2,
              u1_init=None, u2_init=None, cfg: BgsConfig | None = None) -> BgsResult:
    """Relaxed block Gauss-Seidel fixed point of the coupled pair.

    Sweep order: module 1 consumes the previous coupling output of module 2,
    module 2 consumes the fresh output of module 1.  Relaxation acts on the
    exchanged coupling variables only.  Convergence requires the G-weighted
    state update of both modules to satisfy ``||du|| <= tol * (1 + ||u||)``.
    """
    cfg = cfg or BgsConfig()
    xi1 = np.asarray(xi1, dtype=float)
    xi2 = np.asarray(xi2, dtype=float)
    u1 = np.zeros(m1.state_dim) if u1_init is None else np.asarray(u1_init, float).copy()
    u2 = np.zeros(m2.state_dim) if u2_init is None else np.asarray(u2_init, float).copy()
    v1 = m1.coupling_of(u1)
    v2 = m2.coupling_of(u2)
    history = []
    for it in range(1, cfg.max_iters + 1):
        u1_new = m1.solve(u1, v2, xi1)
        v1 = _relax(cfg.relaxation, m1.coupling_of(u1_new), v1)
        u2_new = m2.solve(u2, v1, xi2)
        v2 = _relax(cfg.relaxation, m2.coupling_of(u2_new), v2)
        if not (np.all(np.isfinite(u1_new)) and np.all(np.isfinite(u2_new))):
            raise BgsDivergenceError(it)
        d1 = m1.gramian.norm(u1_new - u1) / (1.0 + m1.gramian.norm(u1_new))
        d2 = m2.gramian.norm(u2_new - u2) / (1.0 + m2.gramian.norm(u2_new))
        history.append((d1, d2))
        u1, u2 = u1_new, u2_new
        if d1 <= cfg.tol and d2 <= cfg.tol:
            return BgsResult(u1=u1, u2=u2, iterations=it, residual_history=history)
    raise BgsNonConvergenceError(cfg.max_iters, (u1, u2))
