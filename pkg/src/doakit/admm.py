"""Consensus ADMM for the learner optimization.

The constraint set is split into blocks that each keep the rows shared
by every block (slack signs, positivity, exclusion) plus a contiguous
slice of the per-sample rows.  Every iteration solves the m proximal
subproblems, averages the copies into the consensus vector, and updates
the scaled duals; iteration stops when both residual norms fall under
the tolerance.  Each block charges 1/m of the original cost so that the
consensus objective is directly comparable to a direct solve.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lpcore import LinearProgram, SolveResult, SolverTolerances, solve_qp_diag

__all__ = ["AdmmConfig", "ConsensusState", "split", "admm_solve", "residuals", "save_history"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdmmConfig:
    m: int = 2
    rho: float = 1.0
    eps_bar: float = 1e-4     # residual tolerance, relative to sqrt(n_opt * m)
    max_iters: int = 500
    adaptive_rho: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.rho <= 0 or self.eps_bar <= 0:
            raise ValueError("rho and eps_bar must be positive")


@dataclass
class ConsensusState:
    """One iteration's worth of consensus data.

    z_consensus is the single averaged vector; the replicated matrix
    view is recovered with z_tilde().
    """

    xi: np.ndarray            # (m, n_opt) block copies
    z_consensus: np.ndarray   # (n_opt,)
    z_prev: np.ndarray        # consensus vector of the previous iteration
    u: np.ndarray             # (m, n_opt) scaled duals
    rho: float
    iter: int
    r_norm: float = 0.0
    s_norm: float = 0.0

    @property
    def m(self) -> int:
        return self.xi.shape[0]

    def z_tilde(self) -> np.ndarray:
        return np.tile(self.z_consensus, (self.m, 1))


def residuals(state: ConsensusState) -> tuple[float, float]:
    """Frobenius norms of the stacked primal and dual residuals."""
    r = float(np.linalg.norm(state.xi - state.z_consensus[None, :]))
    s = float(state.rho * np.sqrt(state.m) * np.linalg.norm(state.z_consensus - state.z_prev))
    return r, s


def split(lp: LinearProgram, m: int) -> list[LinearProgram]:
    """Partition the rows into m blocks (shared rows replicated).

    Rows flagged in lp.shared_rows go into every block; the remaining
    rows are divided into m contiguous slices whose sizes differ by at
    most one.  With m = 1 the original program is returned unchanged.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return [lp]
    shared = lp.shared_rows if lp.shared_rows is not None else np.zeros(lp.n_rows, dtype=bool)
    divisible = np.flatnonzero(~shared)
    if m > divisible.size:
        raise ValueError(f"cannot split {divisible.size} divisible rows into {m} blocks")
    shared_idx = np.flatnonzero(shared)
    blocks = []
    for part in np.array_split(divisible, m):
        rows = np.sort(np.concatenate([part, shared_idx]))
        blocks.append(
            LinearProgram(
                c=lp.c,
                A=lp.A[rows],
                b=lp.b[rows],
                nonneg=lp.nonneg,
            )
        )
    return blocks


def admm_solve(
    lp: LinearProgram,
    cfg: AdmmConfig,
    tol: SolverTolerances | None = None,
    *,
    collect_state: bool = False,
) -> SolveResult:
    """Solve the program by consensus splitting.

    Returns the consensus vector; primal_residual/dual_residual carry
    the final consensus residual norms and history carries the trail of
    (iter, r_norm, s_norm, objective) tuples.
    """
    if lp.q is not None:
        raise ValueError("admm_solve expects a linear objective")
    sub_tol = tol or SolverTolerances()
    blocks = split(lp, cfg.m)
    n = lp.n_opt
    m = cfg.m
    zbar = np.zeros(n)
    u = np.zeros((m, n))
    xi = np.zeros((m, n))
    rho = cfg.rho
    c_block = lp.c / m
    threshold = cfg.eps_bar * np.sqrt(n * m)
    history = []
    status, message = "iteration_limit", "consensus residuals above tolerance"
    state = None
    it = 0

    def solve_block(args):
        block, x_center = args
        sub = dataclasses.replace(block, c=c_block, q=np.full(n, rho), x0=x_center)
        return solve_qp_diag(sub, sub_tol)

    for it in range(1, cfg.max_iters + 1):
        jobs = [(blocks[i], zbar - u[i]) for i in range(m)]
        if cfg.threads > 1 and m > 1:
            with ThreadPoolExecutor(max_workers=min(cfg.threads, m)) as pool:
                results = list(pool.map(solve_block, jobs))
        else:
            results = [solve_block(j) for j in jobs]
        for i, res in enumerate(results):
            if res.status == "infeasible":
                return SolveResult("infeasible", zbar, np.inf, np.inf, 0.0, 0.0, it,
                                   message=f"block {i} is infeasible", certificate=res.certificate,
                                   history=history)
            xi[i] = res.x

        z_prev = zbar
        zbar = np.mean(xi + u, axis=0)
        u += xi - zbar[None, :]
        state = ConsensusState(xi=xi.copy() if collect_state else xi, z_consensus=zbar,
                               z_prev=z_prev, u=u, rho=rho, iter=it)
        r, s = residuals(state)
        state.r_norm, state.s_norm = r, s
        obj = float(lp.c @ zbar)
        history.append((it, r, s, obj))
        if r <= threshold and s <= threshold:
            status, message = "optimal", ""
            break
        if cfg.adaptive_rho and s > 0:
            if r > 10.0 * s:
                rho *= 2.0
                u *= 0.5
            elif s > 10.0 * r:
                rho *= 0.5
                u *= 2.0

    r, s, obj = (history[-1][1], history[-1][2], history[-1][3]) if history else (0.0, 0.0, 0.0)
    log.info("admm: %s after %d iterations (r=%.3e s=%.3e obj=%.6g)", status, it, r, s, obj)
    res = SolveResult(status, zbar, obj, r, s, 0.0, it, message=message, history=history)
    return res


def save_history(res: SolveResult, path: str | Path) -> Path:
    """Write the consensus residual trail as CSV."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("iter,r_norm,s_norm,objective\n")
        for it, r, s, obj in res.history or []:
            fh.write(f"{it},{r:.17g},{s:.17g},{obj:.17g}\n")
    return path
