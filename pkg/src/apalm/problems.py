"""Nonlinear systems G(u, lambda) = 0 with derivatives, plus built-in benchmarks.

The built-in problems are small stand-ins with closed-form solution paths,
used both as fixtures and as analytic oracles in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class DimensionError(ValueError):
    """Input vector does not match the problem's number of unknowns."""


class UnknownProblemError(ValueError):
    """Requested builtin problem name is not registered."""


@dataclass(frozen=True)
class SolutionPoint:
    """One point w = (u, lambda) on a solution branch."""

    u: np.ndarray
    lam: float

    def __post_init__(self):
        object.__setattr__(self, "u", np.atleast_1d(np.asarray(self.u, dtype=float)))
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def n_dof(self) -> int:
        return self.u.shape[0]


@dataclass(frozen=True)
class ProblemDef:
    """A nonlinear system G(u, lambda) = 0 with its derivatives.

    For proportional loading, G = N(u) - lambda * P, d/dlambda G = -P is
    constant and load_norm_sq = P^T P. Problems that are not of proportional
    form supply d/dlambda G and load_norm_sq explicitly; the arc-length
    algebra only needs K, dG/dlambda and P^T P.
    """

    n_dof: int
    residual_fn: Callable[[np.ndarray, float], np.ndarray]
    jacobian_u_fn: Callable[[np.ndarray, float], np.ndarray]
    jacobian_lambda_fn: Callable[[np.ndarray, float], np.ndarray]
    load_norm_sq: float
    name: str = "custom"

    def __post_init__(self):
        if self.n_dof < 1:
            raise ValueError("n_dof must be positive")
        if self.load_norm_sq < 0:
            raise ValueError("load_norm_sq must be non-negative")

    def _check(self, w: SolutionPoint) -> None:
        if w.n_dof != self.n_dof:
            raise DimensionError(
                f"expected {self.n_dof} unknowns, got {w.n_dof}"
            )

    def residual(self, w: SolutionPoint) -> np.ndarray:
        """Evaluate G(u, lambda)."""
        self._check(w)
        return np.asarray(self.residual_fn(w.u, w.lam), dtype=float).reshape(self.n_dof)

    def jacobian_u(self, w: SolutionPoint) -> np.ndarray:
        """Evaluate the tangent stiffness K = dG/du."""
        self._check(w)
        K = np.asarray(self.jacobian_u_fn(w.u, w.lam), dtype=float)
        return K.reshape(self.n_dof, self.n_dof)

    def jacobian_lambda(self, w: SolutionPoint) -> np.ndarray:
        """Evaluate dG/dlambda (equals -P for proportional loading)."""
        self._check(w)
        return np.asarray(self.jacobian_lambda_fn(w.u, w.lam), dtype=float).reshape(
            self.n_dof
        )


def _linear1d(k: float = 1.0, P: float = 1.0) -> ProblemDef:
    return ProblemDef(
        n_dof=1,
        residual_fn=lambda u, lam: np.array([k * u[0] - lam * P]),
        jacobian_u_fn=lambda u, lam: np.array([[k]]),
        jacobian_lambda_fn=lambda u, lam: np.array([-P]),
        load_norm_sq=P * P,
        name="linear1d",
    )


def _cubic1d() -> ProblemDef:
    # Path lambda = u^3 - 3u, limit points at (u, lambda) = (-1, 2), (1, -2).
    return ProblemDef(
        n_dof=1,
        residual_fn=lambda u, lam: np.array([u[0] ** 3 - 3.0 * u[0] - lam]),
        jacobian_u_fn=lambda u, lam: np.array([[3.0 * u[0] ** 2 - 3.0]]),
        jacobian_lambda_fn=lambda u, lam: np.array([-1.0]),
        load_norm_sq=1.0,
        name="cubic1d",
    )


def _pitchfork() -> ProblemDef:
    # Primary branch u = 0, secondary branch u^2 = lambda - 1,
    # bifurcation at lambda = 1. Not of proportional form: dG/dlambda = -u,
    # so the metric weight P^T P = 1 is supplied explicitly.
    return ProblemDef(
        n_dof=1,
        residual_fn=lambda u, lam: np.array([u[0] ** 3 - (lam - 1.0) * u[0]]),
        jacobian_u_fn=lambda u, lam: np.array([[3.0 * u[0] ** 2 - (lam - 1.0)]]),
        jacobian_lambda_fn=lambda u, lam: np.array([-u[0]]),
        load_norm_sq=1.0,
        name="pitchfork",
    )


def _springchain(n: int = 8, c: float = 0.5) -> ProblemDef:
    """Chain of n cubic springs with nearest-neighbour coupling c.

    G_i = u_i^3 - 3 u_i + c (2 u_i - u_{i-1} - u_{i+1}) - lambda,
    with the out-of-range neighbour terms dropped at the chain ends.
    """
    n = int(n)
    if n < 1:
        raise ValueError("springchain needs n >= 1")

    def residual(u, lam):
        g = u**3 - 3.0 * u + 2.0 * c * u - lam
        g[:-1] -= c * u[1:]
        g[1:] -= c * u[:-1]
        return g

    def jacobian_u(u, lam):
        K = np.diag(3.0 * u**2 - 3.0 + 2.0 * c)
        off = -c * np.ones(n - 1)
        K += np.diag(off, 1) + np.diag(off, -1)
        return K

    return ProblemDef(
        n_dof=n,
        residual_fn=residual,
        jacobian_u_fn=jacobian_u,
        jacobian_lambda_fn=lambda u, lam: -np.ones(n),
        load_norm_sq=float(n),
        name=f"springchain({n})",
    )


_BUILTINS: dict[str, Callable[..., ProblemDef]] = {
    "linear1d": _linear1d,
    "cubic1d": _cubic1d,
    "pitchfork": _pitchfork,
    "springchain": _springchain,
}


def make_builtin(name: str, **params) -> ProblemDef:
    """Construct a built-in benchmark problem by name."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise UnknownProblemError(
            f"unknown problem {name!r}; available: {sorted(_BUILTINS)}"
        ) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise UnknownProblemError(f"bad parameters for {name!r}: {exc}") from None


def builtin_names() -> list[str]:
    return sorted(_BUILTINS)
