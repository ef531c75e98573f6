"""The l1 learner: fit a lifted quadratic function separating the samples.

With z the lifted features, the candidate is V(x) = z'Pz for a symmetric
P.  Both V and its flow derivative are linear in P at a fixed state, so
separating stable from unstable samples at the level V = 1 is a linear
program over (P, alpha):

    minimize  sum(alpha)
    s.t.      V(x)  <= 1 + alpha_i          stable samples
              V(x)  >= eps |x|^2            stable samples
              Vdot(x) <= alpha_i - eps |x|^2  stable samples
              V(x)  >= 1 + delta            unstable samples
              alpha >= 0

A zero slack marks a stable sample captured by the level set; the l1
objective maximizes how many there are.  Counterexamples fed back by the
verifier get the same rows as stable samples.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .lpcore import LinearProgram, SolveResult, SolverTolerances, solve_lp
from .sampling import SampleSet
from .systems import DynamicalSystem, LiftedSample, LiftedSet, lift_set

__all__ = [
    "LearnerConfig",
    "LyapunovCandidate",
    "LearnerError",
    "eval_V",
    "eval_Vdot",
    "assemble",
    "learn",
    "save_candidate",
    "load_candidate",
]

log = logging.getLogger(__name__)

ALPHA_ZERO_TOL = 1e-6


class LearnerError(RuntimeError):
    pass


@dataclass(frozen=True)
class LearnerConfig:
    epsilon: float = 1e-3   # positivity / decay margin
    delta: float = 0.1      # exclusion margin for unstable samples
    level: float = 1.0      # fixed; the level set scale is absorbed by P

    def __post_init__(self):
        if self.epsilon <= 0 or self.delta <= 0:
            raise ValueError("epsilon and delta must be positive")


@dataclass(frozen=True)
class LyapunovCandidate:
    """Symmetric coefficient matrix of a lifted quadratic candidate."""

    P: np.ndarray
    d: int
    alpha: np.ndarray | None = None
    objective: float | None = None

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        P = 0.5 * (P + P.T)  # stored symmetric exactly
        object.__setattr__(self, "P", P)

    @property
    def p(self) -> int:
        return self.P.shape[0]

    @property
    def n(self) -> int:
        return self.p // (self.d + 1)

    @property
    def covered(self) -> int:
        """Samples inside the level set at the optimum (zero slack)."""
        if self.alpha is None:
            return 0
        return int(np.sum(self.alpha <= ALPHA_ZERO_TOL))

    def V(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.einsum("...i,ij,...j->...", z, self.P, z)

    def Vdot(self, z: np.ndarray, zdot: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        zdot = np.asarray(zdot, dtype=float)
        return 2.0 * np.einsum("...i,ij,...j->...", zdot, self.P, z)


def eval_V(cand: LyapunovCandidate, s: LiftedSample) -> float:
    return float(cand.V(s.z))


def eval_Vdot(cand: LyapunovCandidate, s: LiftedSample) -> float:
    return float(cand.Vdot(s.z, s.zdot))


def triangle_indices(p: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Upper-triangle index pair arrays and the off-diagonal doubling."""
    iu, ju = np.triu_indices(p)
    factor = np.where(iu == ju, 1.0, 2.0)
    return iu, ju, factor


def value_rows(Z: np.ndarray) -> np.ndarray:
    """Rows r with r . vec_triu(P) = z'Pz for each z."""
    p = Z.shape[1]
    iu, ju, factor = triangle_indices(p)
    return factor * Z[:, iu] * Z[:, ju]


def derivative_rows(Z: np.ndarray, Zdot: np.ndarray) -> np.ndarray:
    """Rows r with r . vec_triu(P) = zdot'Pz + z'Pzdot for each sample."""
    p = Z.shape[1]
    iu, ju, factor = triangle_indices(p)
    return factor * (Z[:, iu] * Zdot[:, ju] + Z[:, ju] * Zdot[:, iu])


def matrix_from_triangle(vec: np.ndarray, p: int) -> np.ndarray:
    iu, ju, _ = triangle_indices(p)
    P = np.zeros((p, p))
    P[iu, ju] = vec
    P[ju, iu] = vec
    return P


def assemble(stable: LiftedSet, unstable: LiftedSet, cfg: LearnerConfig) -> LinearProgram:
    """Build the learner LP over (vec_triu(P), alpha).

    Row order: level rows and decay rows for the stable samples first
    (these are the ones consensus blocks divide up), then the positivity
    and exclusion rows shared by every block.  Slack nonnegativity is a
    variable sign restriction, not a row.
    """
    n0 = len(stable)
    if n0 < 1:
        raise LearnerError("no stable samples: the learner needs at least one")
    p = stable.p
    tri = p * (p + 1) // 2
    n_opt = tri + n0

    V_s = value_rows(stable.z)
    Vd_s = derivative_rows(stable.z, stable.zdot)
    sq_s = np.sum(stable.x**2, axis=1)
    eye = sp.identity(n0, format="csr")

    # V(x) - alpha <= 1
    level = sp.hstack([sp.csr_matrix(V_s), -eye], format="csr")
    b_level = np.ones(n0)
    # Vdot(x) - alpha <= -eps |x|^2
    decay = sp.hstack([sp.csr_matrix(Vd_s), -eye], format="csr")
    b_decay = -cfg.epsilon * sq_s
    # -V(x) <= -eps |x|^2
    posdef = sp.hstack([sp.csr_matrix(-V_s), sp.csr_matrix((n0, n0))], format="csr")
    b_posdef = -cfg.epsilon * sq_s

    blocks = [level, decay, posdef]
    bs = [b_level, b_decay, b_posdef]
    n_inf = len(unstable) if unstable is not None else 0
    if n_inf:
        V_u = value_rows(unstable.z)
        exclude = sp.hstack([sp.csr_matrix(-V_u), sp.csr_matrix((n_inf, n0))], format="csr")
        blocks.append(exclude)
        bs.append(-(1.0 + cfg.delta) * np.ones(n_inf))

    A = sp.vstack(blocks, format="csr")
    b = np.concatenate(bs)
    c = np.concatenate([np.zeros(tri), np.ones(n0)])
    nonneg = np.concatenate([np.zeros(tri, dtype=bool), np.ones(n0, dtype=bool)])
    shared = np.ones(A.shape[0], dtype=bool)
    shared[: 2 * n0] = False  # per-sample rows, divisible across blocks
    return LinearProgram(c=c, A=A, b=b, nonneg=nonneg, shared_rows=shared)


def _reduce_feature_rank(
    lp: LinearProgram, stable: LiftedSet, unstable: LiftedSet | None
) -> tuple[LinearProgram, np.ndarray | None]:
    """Whiten the quadratic-feature block and drop its null directions.

    Lift components can satisfy exact identities (a component of f equal
    to a state variable makes two z entries coincide for every x), which
    leaves null columns in the LP and an unbounded optimal face; and the
    surviving feature columns span many orders of magnitude, which both
    the interior-point method and consensus splitting dislike.  Solving
    in the normalized eigenbasis of the feature Gram matrix fixes both
    without changing the learned function: x_P = B w.
    """
    rows = [value_rows(stable.z), derivative_rows(stable.z, stable.zdot)]
    if unstable is not None and len(unstable):
        rows.append(value_rows(unstable.z))
    R = np.vstack(rows)
    # Balance column scales first, then rank-reveal on the Gram spectrum
    # (tri x tri, cheap).  Exact identities survive the scaling as exact
    # nulls; everything else sits many orders of magnitude above eps.
    norms = np.linalg.norm(R, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    Rn = R / norms
    G = Rn.T @ Rn
    w, U = np.linalg.eigh(G)
    cutoff = 1e-13 * max(w[-1], 1.0)
    keep = w > cutoff
    scale = 1.0 / np.sqrt(np.maximum(w[keep], cutoff))
    B = (U[:, keep] * scale[None, :]) / norms[:, None]
    tri = B.shape[0]
    A_P = lp.A[:, :tri]
    A_alpha = lp.A[:, tri:]
    A_red = sp.hstack([sp.csr_matrix(A_P @ B), A_alpha], format="csr")
    reduced = LinearProgram(
        c=np.concatenate([B.T @ lp.c[:tri], lp.c[tri:]]),
        A=A_red,
        b=lp.b,
        nonneg=np.concatenate([np.zeros(B.shape[1], dtype=bool), lp.nonneg[tri:]]),
        shared_rows=lp.shared_rows,
    )
    if not np.all(keep):
        log.info("feature whitening: %d -> %d quadratic coefficients", tri, B.shape[1])
    return reduced, B


def learn(
    sys: DynamicalSystem,
    samples: SampleSet,
    d: int,
    cfg: LearnerConfig,
    *,
    counterexamples: np.ndarray | None = None,
    tol: SolverTolerances | None = None,
    admm_cfg=None,
) -> LyapunovCandidate:
    """Lift the dataset, assemble the LP, and solve for a candidate.

    Counterexamples are appended to the stable block and receive the
    same rows (their slack can absorb a level-set exclusion).  Passing
    an AdmmConfig solves the LP by consensus splitting instead of the
    direct method.
    """
    X0 = samples.stable
    if counterexamples is not None and len(counterexamples):
        X0 = np.vstack([X0, np.asarray(counterexamples, dtype=float)])
    if X0.shape[0] < 1:
        raise LearnerError("no stable samples: the learner needs at least one")
    stable = lift_set(sys, X0, d)
    unstable = lift_set(sys, samples.unstable, d) if samples.n_unstable else None

    lp = assemble(stable, unstable, cfg)
    lp, basis = _reduce_feature_rank(lp, stable, unstable)
    if admm_cfg is not None:
        from .admm import admm_solve

        res = admm_solve(lp, admm_cfg, tol=tol)
    else:
        res = solve_lp(lp, tol)
    if res.status == "infeasible":
        raise LearnerError(
            "learner optimization reported infeasible; raise the lift order d "
            "or solve with consensus splitting (admm)"
        )
    if res.status not in ("optimal", "iteration_limit"):
        raise LearnerError(f"learner solve failed: {res.status} ({res.message})")
    if res.status == "iteration_limit":
        log.warning("learner solve hit the iteration limit (residuals %.2e/%.2e, gap %.2e)",
                    res.primal_residual, res.dual_residual, res.gap)

    p = stable.p
    tri = p * (p + 1) // 2
    n_red = lp.n_opt - (len(stable))
    vec = res.x[:n_red] if basis is None else basis @ res.x[:n_red]
    P = matrix_from_triangle(vec, p)
    alpha = np.maximum(res.x[n_red:], 0.0)
    cand = LyapunovCandidate(P=P, d=d, alpha=alpha, objective=float(res.obj))
    log.info("learner: objective %.6g, %d/%d samples inside the level set",
             res.obj, cand.covered, len(stable))
    return cand


def save_candidate(
    cand: LyapunovCandidate,
    path: str | Path,
    *,
    config: LearnerConfig | None = None,
    dataset_hash: str | None = None,
) -> Path:
    """Write the candidate as JSON (upper triangle of P, row-major)."""
    path = Path(path)
    iu, ju, _ = triangle_indices(cand.p)
    payload = {
        "n": cand.n,
        "d": cand.d,
        "p": cand.p,
        "P_upper": cand.P[iu, ju].tolist(),
        "objective": cand.objective,
        "alpha": None if cand.alpha is None else cand.alpha.tolist(),
        "config": None if config is None else {"epsilon": config.epsilon, "delta": config.delta},
        "dataset_hash": dataset_hash,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return path


def load_candidate(path: str | Path) -> LyapunovCandidate:
    with open(path) as fh:
        payload = json.load(fh)
    p = int(payload["p"])
    P = matrix_from_triangle(np.asarray(payload["P_upper"], dtype=float), p)
    alpha = payload.get("alpha")
    return LyapunovCandidate(
        P=P,
        d=int(payload["d"]),
        alpha=None if alpha is None else np.asarray(alpha, dtype=float),
        objective=payload.get("objective"),
    )
