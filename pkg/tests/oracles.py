"""Independent numerical oracles used by the test suite.

Everything here deliberately avoids the package's own jet, integrator,
and solver code paths: trajectories come from scipy, derivatives from
Richardson-extrapolated finite differences, LP optima from vertex
enumeration, and QP optima from projected gradient descent.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.integrate import solve_ivp

_OFFS = np.arange(-6, 7).astype(float)
_VINV = np.linalg.inv(np.vander(_OFFS, 13, increasing=True))


def _trajectory_nodes(f, x0, h):
    ts = _OFFS * h
    x0 = np.asarray(x0, float)
    out = np.empty((len(ts), x0.size))
    out[6] = x0
    for slots, tt in (([5, 4, 3, 2, 1, 0], ts[:6][::-1]), ([7, 8, 9, 10, 11, 12], ts[7:])):
        sol = solve_ivp(lambda t, x: f(x), (0, tt[-1]), x0, t_eval=tt,
                        rtol=1e-13, atol=1e-16, method="DOP853")
        if (not sol.success or sol.y.shape[1] != len(tt)
                or not np.all(np.isfinite(sol.y)) or np.max(np.abs(sol.y)) > 1e7):
            return None
        for j, idx in enumerate(slots):
            out[idx] = sol.y[:, j]
    return out


def _fd_stencil(f, x0, d, h):
    for _ in range(60):
        pts = _trajectory_nodes(f, x0, h)
        if pts is not None:
            break
        h *= 0.5
    G = np.array([f(p) for p in pts])
    coef = _VINV @ G
    return [coef[i] * math.factorial(i) / h**i for i in range(d + 1)], h


def flow_derivatives_fd(f, x0, d):
    """d^i/dt^i f(x(t)) at t = 0 for i = 0..d, via Richardson-extrapolated
    finite differences along a high-accuracy simulated trajectory."""
    x0 = np.asarray(x0, float)
    sigma = (np.linalg.norm(f(x0)) + 1.0) / (np.linalg.norm(x0) + 1.0)
    h = 0.05 / max(sigma, 0.2)
    for _ in range(2):
        est, h = _fd_stencil(f, x0, d, h)
        g0 = np.linalg.norm(est[0]) + 1.0
        sigma = max((np.linalg.norm(est[i]) / g0) ** (1.0 / i) for i in range(1, d + 1))
        h = min(h, 0.08 / max(sigma, 0.2))
    A1, h = _fd_stencil(f, x0, d, h)
    A2, _ = _fd_stencil(f, x0, d, h / 2)
    A3, _ = _fd_stencil(f, x0, d, h / 4)
    out = []
    for i in range(d + 1):
        d12 = np.linalg.norm(A1[i] - A2[i])
        d23 = np.linalg.norm(A2[i] - A3[i])
        if d23 <= 1e-300 or d12 <= d23:
            out.append(A3[i])
            continue
        order = np.log2(d12 / d23)
        out.append(A3[i] + (A3[i] - A2[i]) / (2.0**order - 1.0))
    return out


def lp_optimum_by_vertex_enumeration(c, A, b, nonneg=None):
    """Best objective over all basic feasible points (bounded LPs only)."""
    c = np.asarray(c, float)
    A = np.asarray(A, float)
    b = np.asarray(b, float)
    n = c.size
    if nonneg is not None and np.any(nonneg):
        A = np.vstack([A, -np.eye(n)[np.asarray(nonneg, bool)]])
        b = np.concatenate([b, np.zeros(int(np.sum(nonneg)))])
    best = np.inf
    best_x = None
    for comb in itertools.combinations(range(A.shape[0]), n):
        sub = A[list(comb)]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, b[list(comb)])
        if np.all(A @ x <= b + 1e-9):
            val = float(c @ x)
            if val < best:
                best, best_x = val, x
    return best, best_x


def box_qp_projected_gradient(c, q, x0, lo, hi, iters=100_000, tol=5e-14):
    """Minimize c'x + 1/2 q (x - x0)^2 over a box by projected gradient."""
    c = np.asarray(c, float)
    q = np.asarray(q, float)
    x = np.clip(np.asarray(x0, float), lo, hi)
    step = 1.0 / q.max()
    for _ in range(iters):
        x_new = np.clip(x - step * (c + q * (x - x0)), lo, hi)
        if np.max(np.abs(x_new - x)) < tol:
            return x_new
        x = x_new
    return x


def simulate_to_origin(f, x0, t_max=100.0, r_conv=1e-2, r_escape=1e3):
    """Reference classification with scipy's integrator."""
    x0 = np.asarray(x0, float)

    def hit_ball(t, x):
        return np.linalg.norm(x) - r_conv

    hit_ball.terminal = True

    def escaped(t, x):
        return np.linalg.norm(x) - r_escape

    escaped.terminal = True

    sol = solve_ivp(lambda t, x: f(x), (0.0, t_max), x0, events=[hit_ball, escaped],
                    rtol=1e-9, atol=1e-12, method="DOP853")
    return len(sol.t_events[0]) > 0
