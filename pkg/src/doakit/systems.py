"""Dynamical systems: builtin benchmarks, the user DSL, and jet lifting.

The lift of a state x stacks x with the total time derivatives of the
vector field along the trajectory through x:

    z    = [x, g0(x), g1(x), ..., g_{d-1}(x)]
    zdot = [g0(x), g1(x), ..., g_d(x)]

where g0 = f and g_{i+1} = d/dt g_i along the flow.  The derivatives are
obtained by propagating a truncated Taylor expansion of the trajectory
through the right-hand side, which is exact for the rational expression
class of the DSL.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Literal, Mapping

import numpy as np

from . import expr
from .expr import EvaluationError, ExpressionError
from .jets import Jet, JetDivisionError

__all__ = [
    "DynamicalSystem",
    "LiftedSample",
    "LiftedSet",
    "LiftError",
    "parse_system",
    "builtin",
    "BUILTIN_NAMES",
    "lift",
    "lift_set",
]

Label = Literal["stable", "unstable", "counterexample"]

_EQUILIBRIUM_TOL = 1e-12


class LiftError(ArithmeticError):
    """Lifting failed, typically a jet division by zero at some state."""


@dataclass(frozen=True)
class DynamicalSystem:
    """An autonomous ODE x' = f(x) with equilibrium at the origin."""

    name: str
    n: int
    rhs: tuple[expr.Expr, ...]
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.rhs) != self.n:
            raise ExpressionError(
                f"system has {len(self.rhs)} components, expected {self.n}", self.source, 0
            )
        f0 = self(np.zeros(self.n))
        if np.max(np.abs(f0)) > _EQUILIBRIUM_TOL:
            raise ValueError(
                f"vector field of {self.name!r} is nonzero at the origin: f(0) = {f0.tolist()}"
            )

    @property
    def source(self) -> str:
        return "; ".join(expr.pretty(c) for c in self.rhs)

    def content_hash(self) -> str:
        h = hashlib.sha256(f"{self.name}|{self.n}|{self.source}".encode())
        return h.hexdigest()

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate f at one state (n,) or a batch (..., n)."""
        x = np.asarray(x, dtype=float)
        env = [x[..., i] for i in range(self.n)]
        comps = [np.broadcast_to(np.asarray(c.evaluate(env), dtype=float), x.shape[:-1]) for c in self.rhs]
        return np.stack(comps, axis=-1)


def parse_system(
    source: str,
    n: int,
    params: Mapping[str, float] | None = None,
    name: str = "user",
) -> DynamicalSystem:
    """Parse a semicolon-separated vector field into a DynamicalSystem.

    Parameters are substituted and folded into constants.  The component
    count must equal n, and f(0) = 0 is validated.
    """
    if n < 1:
        raise ValueError("state dimension must be positive")
    comps = expr.parse_components(source, n, params)
    if len(comps) != n:
        raise ExpressionError(
            f"expected {n} components separated by ';', got {len(comps)}", source, len(source)
        )
    return DynamicalSystem(name=name, n=n, rhs=tuple(comps), params=dict(params or {}))


_BUILTIN_SPECS = {
    # Van der Pol oscillator (time-reversed form with a stable origin).
    "vdp2": (2, "x2; -2*x1 - 3*x2 + x1^2*x2", {}),
    # Planar system with polynomial cross terms.
    "ex2_2d": (2, "-x1 + x1*x2^2; x1 - x2 + x1^2*x2 - x1*x2^2", {}),
    # Planar system with a rational term and an asymmetric stable region.
    "ex3_2d": (2, "x2 + p1*x1/(x2^2 + 1); -x1 - x2 + p2*x1^2", {"p1": 0.5, "p2": 0.5}),
    # Three-state extension of ex3_2d.
    "sys3d": (
        3,
        "x2 + p3*x3 + p1*x1/(x2^2 + 1); -x1 - x2 + p2*x1^2; p3*(-2*x1 - 2*x3 - x1^2)",
        {"p1": 0.5, "p2": 0.5, "p3": 0.5},
    ),
    # vdp2 driving sys3d through the -x4 coupling in the second component.
    "sys5d": (
        5,
        "x2; -2*x1 - 3*x2 + x1^2*x2 - x4; "
        "x4 + p3*x5 + p1*x3/(x4^2 + 1); -x3 - x4 + p2*x3^2; p3*(-2*x3 - 2*x5 - x3^2)",
        {"p1": 0.5, "p2": 0.5, "p3": 0.5},
    ),
}

BUILTIN_NAMES = tuple(_BUILTIN_SPECS)


def builtin(name: str) -> DynamicalSystem:
    """Return a builtin benchmark system by name."""
    try:
        n, source, params = _BUILTIN_SPECS[name]
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; available: {', '.join(BUILTIN_NAMES)}") from None
    return parse_system(source, n, params, name=name)


@dataclass(frozen=True)
class LiftedSample:
    """A state with its lifted features cached for constraint assembly."""

    x: np.ndarray
    z: np.ndarray
    zdot: np.ndarray
    label: Label = "stable"


@dataclass(frozen=True)
class LiftedSet:
    """Batched lifts: row k of x/z/zdot belongs to one sample."""

    x: np.ndarray      # (N, n)
    z: np.ndarray      # (N, p)
    zdot: np.ndarray   # (N, p)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.z.shape[1]


def _trajectory_jets(sys: DynamicalSystem, X: np.ndarray, order: int) -> np.ndarray:
    """Taylor coefficients of the trajectory through each row of X.

    Returns C with shape (order+1, N, n) where x(t) = sum_k C[k] t^k.
    The recurrence (k+1) C[k+1] = [f(x(t))]_k is applied one order at a
    time, so each coefficient only depends on the ones already known.
    """
    N, n = X.shape
    C = np.zeros((order + 1, N, n))
    C[0] = X
    for k in range(order):
        env = [Jet(C[: k + 1, :, i]) for i in range(n)]
        try:
            f_comps = [c.evaluate(env) for c in sys.rhs]
        except (JetDivisionError, EvaluationError) as err:
            raise LiftError(f"lift failed for {sys.name!r}: {err}") from err
        for i, fj in enumerate(f_comps):
            if isinstance(fj, Jet):
                ck = fj.coefficient(k)
            else:  # component is constant in time (e.g. rhs component 0)
                ck = np.broadcast_to(np.asarray(fj, dtype=float), (N,)) if k == 0 else np.zeros(N)
            C[k + 1, :, i] = ck / (k + 1)
    return C


def lift_set(sys: DynamicalSystem, X: np.ndarray, d: int) -> LiftedSet:
    """Lift a batch of states (N, n) to order d."""
    if d < 1:
        raise ValueError("lift order d must be >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    C = _trajectory_jets(sys, X, d + 1)
    # g_i(x) = (i+1)! C[i+1]; z stacks x, g_0..g_{d-1}; zdot stacks g_0..g_d.
    g = [math.factorial(i + 1) * C[i + 1] for i in range(d + 1)]
    z = np.concatenate([X] + g[:d], axis=1)
    zdot = np.concatenate(g, axis=1)
    return LiftedSet(x=X, z=z, zdot=zdot)


def lift(sys: DynamicalSystem, x: np.ndarray, d: int, label: Label = "stable") -> LiftedSample:
    """Lift a single state to order d."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if x.shape[1] != sys.n:
        raise ValueError(f"state has dimension {x.shape[1]}, system has n={sys.n}")
    try:
        ls = lift_set(sys, x, d)
    except LiftError as err:
        raise LiftError(f"{err} at state {x[0].tolist()}") from None
    return LiftedSample(x=x[0], z=ls.z[0], zdot=ls.zdot[0], label=label)
