"""Sparse inequality-form LP/QP representation and a bundled solver.

Problems are stored as

    minimize    c'x + 1/2 sum_i q_i (x_i - x0_i)^2
    subject to  A x <= b,   x_i >= 0 for i in the nonneg mask,

with q = None for plain LPs.  The bundled solver is a Mehrotra-style
predictor-corrector interior-point method on the slack form
A x + s = b; the Newton systems are condensed to normal equations
M = Q + D_z + A' D_s A, which stay sparse because learner rows touch
few variables each.  Any external backend accepting this form can be
substituted through the same entry points.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = ["LinearProgram", "SolveResult", "SolverTolerances", "solve_lp", "solve_qp_diag", "dump_lp", "load_lp"]

log = logging.getLogger(__name__)

_DENSE_CUTOFF = 400  # below this many variables the normal matrix is densified


@dataclass(frozen=True)
class LinearProgram:
    """Immutable problem data; treat all arrays as read-only."""

    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    nonneg: np.ndarray | None = None     # per-variable sign restriction
    q: np.ndarray | None = None          # strictly positive proximal diagonal
    x0: np.ndarray | None = None         # proximal center (defaults to 0)
    shared_rows: np.ndarray | None = None  # rows replicated into every consensus block

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        A = sp.csr_matrix(self.A) if not sp.issparse(self.A) else self.A.tocsr()
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if A.shape != (b.size, c.size):
            raise ValueError(f"inconsistent dimensions: A {A.shape}, b {b.size}, c {c.size}")
        for name in ("nonneg", "shared_rows"):
            v = getattr(self, name)
            if v is not None:
                object.__setattr__(self, name, np.asarray(v, dtype=bool))
        if self.nonneg is not None and self.nonneg.size != c.size:
            raise ValueError("nonneg mask length must match variable count")
        if self.shared_rows is not None and self.shared_rows.size != b.size:
            raise ValueError("shared_rows mask length must match row count")
        if self.q is not None:
            q = np.asarray(self.q, dtype=float)
            if q.size != c.size:
                raise ValueError("q length must match variable count")
            if np.any(q <= 0):
                raise ValueError("q must be strictly positive where present")
            object.__setattr__(self, "q", q)
        if self.x0 is not None:
            object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))

    @property
    def n_opt(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    @property
    def nnz(self) -> int:
        return int(self.A.nnz)

    def objective(self, x: np.ndarray) -> float:
        val = float(self.c @ x)
        if self.q is not None:
            x0 = self.x0 if self.x0 is not None else 0.0
            val += 0.5 * float(self.q @ (x - x0) ** 2)
        return val


@dataclass(frozen=True)
class SolverTolerances:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iters: int = 200


@dataclass
class SolveResult:
    status: str                 # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray
    obj: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    message: str = ""
    certificate: np.ndarray | None = None   # Farkas ray when infeasible
    iterates: list | None = None
    history: list | None = None             # consensus residual trail (ADMM)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def solve_lp(lp: LinearProgram, tol: SolverTolerances | None = None, *, collect_iterates: bool = False) -> SolveResult:
    """Solve a linear program with the bundled interior-point method."""
    if lp.q is not None:
        raise ValueError("lp carries a quadratic term; use solve_qp_diag")
    return _solve(lp, tol or SolverTolerances(), collect_iterates)


def solve_qp_diag(lp: LinearProgram, tol: SolverTolerances | None = None, *, collect_iterates: bool = False) -> SolveResult:
    """Solve a diagonal-proximal QP (strictly convex; unique minimizer)."""
    if lp.q is None:
        raise ValueError("solve_qp_diag requires the quadratic diagonal q")
    return _solve(lp, tol or SolverTolerances(), collect_iterates)


# ----------------------------------------------------------------------------
# interior-point engine


def _ruiz_scaling(A: sp.csr_matrix, iters: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Iterative inf-norm equilibration; returns row/col scale vectors."""
    m, n = A.shape
    r = np.ones(m)
    c = np.ones(n)
    W = A.copy()
    for _ in range(iters):
        row_max = np.asarray(abs(W).max(axis=1).todense()).ravel()
        row_s = 1.0 / np.sqrt(np.maximum(row_max, 1e-12))
        W = sp.diags(row_s) @ W
        col_max = np.asarray(abs(W).max(axis=0).todense()).ravel()
        col_s = 1.0 / np.sqrt(np.maximum(col_max, 1e-12))
        W = W @ sp.diags(col_s)
        r *= row_s
        c *= col_s
    return r, c


class _Normal:
    """Factorization helper for M = diag(d0) + A' diag(ds) A."""

    def __init__(self, A: sp.csr_matrix):
        self.A = A
        self.n = A.shape[1]
        self.dense = self.n <= _DENSE_CUTOFF
        self.Ad = A.toarray() if self.dense else None
        self.At = None if self.dense else A.T.tocsr()

    def factor(self, d0: np.ndarray, ds: np.ndarray, reg: float):
        """Return a solver for M rhs with two rounds of refinement."""
        if self.dense:
            M = (self.Ad.T * ds) @ self.Ad
            M[np.diag_indices_from(M)] += d0 + reg
            try:
                chol = sla.cho_factor(M, check_finite=False)
            except np.linalg.LinAlgError:
                return None
            base = lambda rhs: sla.cho_solve(chol, rhs, check_finite=False)
        else:
            M = (self.At @ sp.diags(ds) @ self.A).tocsc()
            M = M + sp.diags(d0 + reg)
            try:
                lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A")
            except RuntimeError:
                return None
            base = lu.solve

        def solve(rhs):
            dx = base(rhs)
            for _ in range(2):
                r = rhs - M @ dx
                dx = dx + base(r)
            return dx

        return solve


def _solve(lp: LinearProgram, tol: SolverTolerances, collect_iterates: bool) -> SolveResult:
    n = lp.n_opt
    nonneg = lp.nonneg if lp.nonneg is not None else np.zeros(n, dtype=bool)
    x0 = lp.x0 if lp.x0 is not None else np.zeros(n)
    q = lp.q

    # Drop identically-zero rows; a zero row with negative rhs is a
    # trivially infeasible certificate.
    row_nnz = np.diff(lp.A.indptr)
    row_abs = np.asarray(np.abs(lp.A).sum(axis=1)).ravel()
    zero_rows = (row_nnz == 0) | (row_abs == 0.0)
    if np.any(zero_rows & (lp.b < 0)):
        i = int(np.flatnonzero(zero_rows & (lp.b < 0))[0])
        cert = np.zeros(lp.n_rows)
        cert[i] = 1.0
        return SolveResult("infeasible", np.zeros(n), np.inf, np.inf, 0.0, 0.0, 0,
                           message=f"row {i} is empty with negative rhs", certificate=cert)
    keep = ~zero_rows
    A_full = lp.A
    A = A_full[keep].tocsr()
    b = lp.b[keep]
    m = b.size

    if m == 0:
        return _solve_unconstrained(lp, nonneg, x0, q, n)

    # Equilibrate in a scaled copy; residuals are always checked against
    # the original data, so scaling never changes what "solved" means.
    rsc, csc_ = _ruiz_scaling(A)
    As = (sp.diags(rsc) @ A @ sp.diags(csc_)).tocsr()
    bs = rsc * b
    cs = csc_ * lp.c
    qs = None if q is None else q * csc_**2
    x0s = x0 / csc_

    normal = _Normal(As)
    N_idx = np.flatnonzero(nonneg)
    nN = N_idx.size

    # Starting point.
    x = x0s.copy() if q is not None else np.zeros(n)
    x[N_idx] = np.maximum(x[N_idx], 1.0)
    s_hat = bs - As @ x
    s = np.maximum(s_hat, 0.1 * max(1.0, float(np.abs(s_hat).max(initial=1.0))))
    y = np.ones(m)
    z = np.ones(n)
    z[~nonneg] = 0.0

    b_scale = 1.0 + float(np.abs(lp.b).max(initial=0.0))
    c_scale = 1.0 + float(np.abs(lp.c).max(initial=0.0))
    best = None
    stall = 0
    balance = None  # ties the barrier to the infeasibility norm
    iterates = [] if collect_iterates else None
    status, message = "iteration_limit", "maximum iterations reached"
    it = 0

    def original_metrics(x, y, z):
        xo = csc_ * x
        yo = rsc * y
        grad = lp.c.copy()
        if q is not None:
            grad += q * (xo - x0)
        viol_p = float(np.maximum(A @ xo - b, 0.0).max(initial=0.0)) / b_scale
        rd = grad + A.T @ yo
        dual_viol = 0.0
        if np.any(~nonneg):
            dual_viol = float(np.abs(rd[~nonneg]).max(initial=0.0))
        if nN:
            dual_viol = max(dual_viol, float(np.maximum(-rd[N_idx], 0.0).max(initial=0.0)))
        dual_viol /= c_scale
        comp = float(s @ y + x[N_idx] @ z[N_idx])
        objv = lp.objective(xo)
        gap = comp / (1.0 + abs(objv))
        return xo, yo, viol_p, dual_viol, gap, objv

    for it in range(1, tol.max_iters + 1):
        xo, yo, viol_p, dual_viol, gap, objv = original_metrics(x, y, z)
        if iterates is not None:
            dual_obj = -float(b @ yo)
            iterates.append({
                "iter": it - 1, "obj": objv, "dual_obj": dual_obj,
                "primal_residual": viol_p, "dual_residual": dual_viol, "gap": gap,
            })
        metric = max(viol_p, dual_viol, gap)
        if best is None or metric < best[0]:
            best = (metric, xo.copy(), viol_p, dual_viol, gap, objv)
            stall = 0
        else:
            stall += 1
        if viol_p <= tol.feas_tol and dual_viol <= tol.feas_tol and gap <= tol.gap_tol:
            status, message = "optimal", ""
            break
        if stall >= 30:
            status, message = "iteration_limit", "no further progress"
            break
        if objv < -1e14 * c_scale and viol_p <= 1e-6:
            status, message = "unbounded", "objective diverged to -inf"
            break
        if np.abs(xo).max(initial=0.0) > 1e15:
            status, message = "iteration_limit", "iterates diverged (rank-deficient columns?)"
            break
        if np.abs(yo).sum() > 1e10:
            cert = _farkas_certificate(A_full[keep], lp.b[keep], nonneg, yo)
            if cert is not None:
                full_cert = np.zeros(lp.n_rows)
                full_cert[keep] = cert
                return SolveResult("infeasible", xo, objv, viol_p, dual_viol, gap, it,
                                   message="Farkas certificate found", certificate=full_cert)

        # KKT residuals in the scaled space.
        grad_s = cs.copy()
        if qs is not None:
            grad_s += qs * (x - x0s)
        r_d = grad_s + As.T @ y - z
        r_p = As @ x + s - bs
        mu = (s @ y + x[N_idx] @ z[N_idx]) / (m + nN) if (m + nN) else 0.0
        resid_inf = max(float(np.abs(r_p).max(initial=0.0)), float(np.abs(r_d).max(initial=0.0)))
        if balance is None:
            balance = mu / max(resid_inf, 1e-12)

        d0 = np.zeros(n)
        if qs is not None:
            d0 += qs
        with np.errstate(divide="ignore", over="ignore"):
            d0[N_idx] += np.minimum(z[N_idx] / x[N_idx], 1e16)
            ds = np.minimum(y / s, 1e16)
        reg = 1e-10 * (1.0 + float(ds.max(initial=0.0)))
        solve = None
        for bump in range(5):
            solve = normal.factor(d0, ds, reg * 10.0**bump)
            if solve is not None:
                break
        if solve is None:
            status, message = "iteration_limit", "normal equations factorization broke down"
            break

        def newton(rc_ys, rc_zx):
            rhs = -r_d + As.T @ ((rc_ys - y * r_p) / s)
            if nN:
                rhs[N_idx] -= rc_zx / x[N_idx]
            dx = solve(rhs)
            # one refinement pass against the full KKT reduction
            ds_ = -r_p - As @ dx
            dy = (-rc_ys - y * ds_) / s
            dz = np.zeros(n)
            if nN:
                dz[N_idx] = (-rc_zx - z[N_idx] * dx[N_idx]) / x[N_idx]
            return dx, ds_, dy, dz

        # Predictor.
        dx_a, ds_a, dy_a, dz_a = newton(y * s, z[N_idx] * x[N_idx] if nN else np.zeros(0))
        a_p = _max_step(s, ds_a, x[N_idx], dx_a[N_idx] if nN else np.zeros(0))
        a_d = _max_step(y, dy_a, z[N_idx], dz_a[N_idx] if nN else np.zeros(0))
        mu_aff = ((s + a_p * ds_a) @ (y + a_d * dy_a))
        if nN:
            mu_aff += (x[N_idx] + a_p * dx_a[N_idx]) @ (z[N_idx] + a_d * dz_a[N_idx])
        mu_aff /= (m + nN)
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.1
        # Keep the barrier from collapsing ahead of feasibility; once the
        # products shrink far below the residuals the Newton directions
        # lose all accuracy in 1/s terms.
        mu_t = max(sigma * mu, min(0.01 * balance * resid_inf, mu))

        # Corrector.
        rc_ys = y * s + ds_a * dy_a - mu_t
        rc_zx = (z[N_idx] * x[N_idx] + dx_a[N_idx] * dz_a[N_idx] - mu_t) if nN else np.zeros(0)
        dx, ds_, dy, dz = newton(rc_ys, rc_zx)

        a_p = _max_step(s, ds_, x[N_idx], dx[N_idx] if nN else np.zeros(0))
        a_d = _max_step(y, dy, z[N_idx], dz[N_idx] if nN else np.zeros(0))
        taum = 0.99995 if max(viol_p, dual_viol, gap) < 1e-5 else 0.995
        x = x + taum * a_p * dx
        s = s + taum * a_p * ds_
        y = y + taum * a_d * dy
        z = z + taum * a_d * dz
        s = np.maximum(s, 1e-300)
        if nN:
            x[N_idx] = np.maximum(x[N_idx], 1e-300)
            z[N_idx] = np.maximum(z[N_idx], 1e-300)

    xo, yo, viol_p, dual_viol, gap, objv = original_metrics(x, y, z)
    metric = max(viol_p, dual_viol, gap)
    if status != "optimal" and best is not None and best[0] < metric:
        _, xo, viol_p, dual_viol, gap, objv = best
    if status == "iteration_limit" and viol_p <= tol.feas_tol and dual_viol <= tol.feas_tol and gap <= tol.gap_tol:
        status, message = "optimal", ""
    return SolveResult(status, xo, objv, viol_p, dual_viol, gap, it, message=message, iterates=iterates)


def _max_step(s, ds, xn, dxn) -> float:
    alpha = 1.0
    neg = ds < 0
    if np.any(neg):
        alpha = min(alpha, float(np.min(-s[neg] / ds[neg])))
    neg = dxn < 0
    if np.any(neg):
        alpha = min(alpha, float(np.min(-xn[neg] / dxn[neg])))
    return alpha


def _farkas_certificate(A, b, nonneg, y) -> np.ndarray | None:
    """Check y >= 0 for a ray proving A x <= b, x_N >= 0 empty."""
    norm = np.abs(y).sum()
    if norm <= 0:
        return None
    yh = np.maximum(y, 0.0) / norm
    v = A.T @ yh
    ok_free = np.abs(v[~nonneg]).max(initial=0.0) <= 1e-8
    ok_nonneg = v[nonneg].min(initial=0.0) >= -1e-8
    if ok_free and ok_nonneg and b @ yh < -1e-10:
        return yh
    return None


def _solve_unconstrained(lp, nonneg, x0, q, n) -> SolveResult:
    """No rows: closed-form separable solution (or unboundedness)."""
    if q is not None:
        x = x0 - lp.c / q
        x[nonneg] = np.maximum(x[nonneg], 0.0)
        return SolveResult("optimal", x, lp.objective(x), 0.0, 0.0, 0.0, 0)
    free_bad = np.any(lp.c[~nonneg] != 0.0)
    nn_bad = np.any(lp.c[nonneg] < 0.0)
    if free_bad or nn_bad:
        return SolveResult("unbounded", np.zeros(n), -np.inf, 0.0, 0.0, 0.0, 0,
                           message="no constraints and descent direction exists")
    return SolveResult("optimal", np.zeros(n), 0.0, 0.0, 0.0, 0.0, 0)


# ----------------------------------------------------------------------------
# plain-text sparse triplet dump (for cross-checking with external solvers)


def dump_lp(lp: LinearProgram, path: str | Path) -> Path:
    """Write the problem in a line-oriented sparse triplet format.

    Lines: ``dims m n``, then ``c j v``, ``A i j v``, ``b i v``,
    ``nonneg j``, ``q j v``, ``x0 j v``, ``shared i`` entries
    (zero-based indices, full float precision).
    """
    path = Path(path)
    coo = lp.A.tocoo()
    with open(path, "w") as fh:
        fh.write(f"dims {lp.n_rows} {lp.n_opt}\n")
        for j in np.flatnonzero(lp.c):
            fh.write(f"c {j} {lp.c[j]:.17g}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"A {i} {j} {v:.17g}\n")
        for i in np.flatnonzero(lp.b):
            fh.write(f"b {i} {lp.b[i]:.17g}\n")
        if lp.nonneg is not None:
            for j in np.flatnonzero(lp.nonneg):
                fh.write(f"nonneg {j}\n")
        if lp.q is not None:
            for j in range(lp.n_opt):
                fh.write(f"q {j} {lp.q[j]:.17g}\n")
        if lp.x0 is not None:
            for j in np.flatnonzero(lp.x0):
                fh.write(f"x0 {j} {lp.x0[j]:.17g}\n")
        if lp.shared_rows is not None:
            for i in np.flatnonzero(lp.shared_rows):
                fh.write(f"shared {i}\n")
    return path


def load_lp(path: str | Path) -> LinearProgram:
    """Read a problem written by dump_lp."""
    rows, cols, vals = [], [], []
    c = b = None
    nonneg = q = x0 = shared = None
    m = n = 0
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            tag = parts[0]
            if tag == "dims":
                m, n = int(parts[1]), int(parts[2])
                c, b = np.zeros(n), np.zeros(m)
            elif tag == "c":
                c[int(parts[1])] = float(parts[2])
            elif tag == "A":
                rows.append(int(parts[1])); cols.append(int(parts[2])); vals.append(float(parts[3]))
            elif tag == "b":
                b[int(parts[1])] = float(parts[2])
            elif tag == "nonneg":
                if nonneg is None:
                    nonneg = np.zeros(n, dtype=bool)
                nonneg[int(parts[1])] = True
            elif tag == "q":
                if q is None:
                    q = np.zeros(n)
                q[int(parts[1])] = float(parts[2])
            elif tag == "x0":
                if x0 is None:
                    x0 = np.zeros(n)
                x0[int(parts[1])] = float(parts[2])
            elif tag == "shared":
                if shared is None:
                    shared = np.zeros(m, dtype=bool)
                shared[int(parts[1])] = True
            else:
                raise ValueError(f"unknown record {tag!r} in {path}")
    A = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
    return LinearProgram(c=c, A=A, b=b, nonneg=nonneg, q=q, x0=x0, shared_rows=shared)
