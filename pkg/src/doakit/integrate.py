"""Vectorized ODE integration for trajectory classification.

Integrates a whole batch of initial conditions at once; every trajectory
carries its own adaptive step size and retires independently when it
converges, escapes, times out, or the stepper fails.  Classification
does not store trajectories, only outcomes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .systems import DynamicalSystem

__all__ = ["StopRule", "BatchResult", "simulate_batch", "STABLE", "DIVERGED", "TIMEOUT", "STEP_FAIL"]

log = logging.getLogger(__name__)

STABLE, DIVERGED, TIMEOUT, STEP_FAIL = 0, 1, 2, 3

# Dormand-Prince 5(4) tableau; 5th-order solution is propagated.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4


@dataclass(frozen=True)
class StopRule:
    """Radii and horizon that retire a trajectory."""

    r_converge: float
    r_escape: float
    t_max: float


@dataclass
class BatchResult:
    status: np.ndarray   # per-trajectory code (STABLE/DIVERGED/TIMEOUT/STEP_FAIL)
    t_end: np.ndarray
    x_end: np.ndarray
    n_steps: int

    @property
    def stable(self) -> np.ndarray:
        return self.status == STABLE


def _check_events(x, t, status, rule):
    """Return updated status for freshly stepped states (NaN-safe)."""
    norms = np.linalg.norm(x, axis=1)
    bad = ~np.isfinite(norms)
    status = np.where(bad, DIVERGED, status)
    norms = np.where(bad, np.inf, norms)
    status = np.where((status < 0) & (norms <= rule.r_converge), STABLE, status)
    status = np.where((status < 0) & (norms >= rule.r_escape), DIVERGED, status)
    status = np.where((status < 0) & (t >= rule.t_max), TIMEOUT, status)
    return status


def _rhs(sys: DynamicalSystem, x: np.ndarray) -> np.ndarray:
    fx = sys(x)
    return np.where(np.isfinite(fx), fx, np.inf)


def simulate_batch(
    sys: DynamicalSystem,
    x0: np.ndarray,
    rule: StopRule,
    *,
    method: str = "rk45_adaptive",
    rel_tol: float = 1e-8,
    abs_tol: float = 1e-10,
    step: float = 1e-2,
    max_steps: int = 2_000_000,
) -> BatchResult:
    """Integrate all rows of x0 until every trajectory retires."""
    X = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    B = X.shape[0]
    t = np.zeros(B)
    status = np.full(B, -1, dtype=np.int8)  # -1 = still running
    status = _check_events(X, t, status, rule)

    if method == "rk4_fixed":
        return _run_rk4(sys, X, t, status, rule, step, max_steps)
    if method != "rk45_adaptive":
        raise ValueError(f"unknown integrator {method!r}")

    # Initial step from the local derivative scale.
    f0 = _rhs(sys, X)
    scale = abs_tol + rel_tol * np.linalg.norm(X, axis=1)
    fnorm = np.linalg.norm(f0, axis=1)
    h = np.where(fnorm > 0, 0.01 * np.maximum(np.linalg.norm(X, axis=1), scale) / np.maximum(fnorm, 1e-300), rule.t_max / 100)
    h = np.clip(h, 1e-8 * rule.t_max, rule.t_max / 10)
    h_floor = 1e-13 * rule.t_max

    n_iter = 0
    step_fail_count = 0
    while True:
        active = np.flatnonzero(status < 0)
        if active.size == 0 or n_iter >= max_steps:
            break
        n_iter += 1
        xa = X[active]
        ha = np.minimum(h[active], rule.t_max - t[active])[:, None]

        k = np.empty((7, xa.shape[0], xa.shape[1]))
        k[0] = _rhs(sys, xa)
        for s in range(1, 7):
            incr = sum(_DP_A[s][j] * k[j] for j in range(s))
            k[s] = _rhs(sys, xa + ha * incr)
        x_new = xa + ha * np.einsum("s,sbn->bn", _DP_B5, k)
        err_vec = ha * np.einsum("s,sbn->bn", _DP_E, k)

        tol_scale = abs_tol + rel_tol * np.maximum(np.abs(xa), np.abs(x_new))
        with np.errstate(invalid="ignore", divide="ignore"):
            err = np.sqrt(np.mean((err_vec / tol_scale) ** 2, axis=1))
        err = np.where(np.isfinite(err), err, np.inf)

        accept = err <= 1.0
        acc_idx = active[accept]
        if acc_idx.size:
            t[acc_idx] = t[acc_idx] + ha[accept, 0]
            X[acc_idx] = x_new[accept]
            status[acc_idx] = _check_events(X[acc_idx], t[acc_idx], status[acc_idx], rule)

        # Standard controller with growth/shrink clamps.
        with np.errstate(divide="ignore"):
            factor = 0.9 * np.power(np.maximum(err, 1e-300), -0.2)
        factor = np.clip(factor, 0.2, 5.0)
        factor = np.where(accept, factor, np.minimum(factor, 1.0))
        h[active] = np.clip(ha[:, 0] * factor, 0.0, rule.t_max / 2)

        dead = active[(h[active] < h_floor) & (status[active] < 0)]
        if dead.size:
            status[dead] = STEP_FAIL
            step_fail_count += dead.size

    still = status < 0
    if np.any(still):  # max_steps safety valve
        status[still] = STEP_FAIL
        step_fail_count += int(still.sum())
    if step_fail_count:
        log.warning("%d trajectories retired on integrator step failure", step_fail_count)
    return BatchResult(status=status, t_end=t, x_end=X, n_steps=n_iter)


def _run_rk4(sys, X, t, status, rule, step, max_steps):
    n_iter = 0
    while True:
        active = np.flatnonzero(status < 0)
        if active.size == 0 or n_iter >= max_steps:
            break
        n_iter += 1
        xa = X[active]
        ha = np.minimum(step, rule.t_max - t[active])[:, None]
        k1 = _rhs(sys, xa)
        k2 = _rhs(sys, xa + 0.5 * ha * k1)
        k3 = _rhs(sys, xa + 0.5 * ha * k2)
        k4 = _rhs(sys, xa + ha * k3)
        X[active] = xa + ha / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t[active] = t[active] + ha[:, 0]
        status[active] = _check_events(X[active], t[active], status[active], rule)
    still = status < 0
    if np.any(still):
        status[still] = STEP_FAIL
    return BatchResult(status=status, t_end=t, x_end=X, n_steps=n_iter)
