"""Between-sample verification of a candidate by local optimization.

Two searches over the punctured sublevel set {V <= 1} minus a small
origin ball: maximize the flow derivative of V (worst decay violation)
and minimize V itself (worst positivity violation).  Both run as a
batched multi-start projected ascent/descent with central-difference
gradients; the level constraint is handled by an exact penalty, the
origin puncture by projection, and the box by clipping.  A dense grid
audit at twice the training resolution is folded into the extrema
before a candidate is accepted, so a "verified" answer never rests on
local search alone.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .learner import LyapunovCandidate
from .sampling import Roi, grid
from .systems import DynamicalSystem, lift_set

__all__ = ["VerifierConfig", "VerifierResult", "verify", "counterexample"]

log = logging.getLogger(__name__)

_EVAL_CHUNK = 200_000


@dataclass(frozen=True)
class VerifierConfig:
    n_starts: int = 64                 # random starts inside the level set
    r0: float | None = None            # origin puncture; None = 1e-3 * half-diagonal
    fd_step: float = 1e-6              # central-difference step scale
    max_inner_iters: int = 150
    local_tol: float = 1e-10           # step-size convergence threshold
    restrict_to_roi: bool = True       # False searches a 2x inflated box
    box_inflate: float = 2.0
    audit_points_per_dim: int | None = None  # None = 2x the training grid
    penalty: float = 1e4

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.r0 is not None and self.r0 <= 0:
            raise ValueError("r0 must be positive")


@dataclass
class VerifierResult:
    gamma_star: float          # max of Vdot over the punctured level set
    eta_star: float            # min of V over the punctured level set
    argmax_x: np.ndarray | None
    argmin_x: np.ndarray | None
    verified: bool
    starts_used: int
    degenerate: bool = False   # no point of {V <= 1} in the search domain
    trace: dict | None = None

    def to_dict(self) -> dict:
        return {
            "gamma_star": self.gamma_star,
            "eta_star": self.eta_star,
            "argmax_x": None if self.argmax_x is None else self.argmax_x.tolist(),
            "argmin_x": None if self.argmin_x is None else self.argmin_x.tolist(),
            "verified": self.verified,
            "starts_used": self.starts_used,
            "degenerate": self.degenerate,
        }


def counterexample(res: VerifierResult) -> np.ndarray | None:
    """The state to feed back to the learner, following the branch order
    decay-violation first, positivity-violation second."""
    if res.verified:
        raise ValueError("counterexample() called on a verified result")
    if res.gamma_star >= 0.0 and res.argmax_x is not None:
        return res.argmax_x
    if res.eta_star <= 0.0 and res.argmin_x is not None:
        return res.argmin_x
    return None


def _eval_chunked(sys, cand, X, want_vdot=True):
    """V (and Vdot) over a large batch without building huge lift arrays."""
    Vs, Vds = [], []
    for start in range(0, X.shape[0], _EVAL_CHUNK):
        ls = lift_set(sys, X[start : start + _EVAL_CHUNK], cand.d)
        Vs.append(cand.V(ls.z))
        if want_vdot:
            Vds.append(cand.Vdot(ls.z, ls.zdot))
    V = np.concatenate(Vs) if Vs else np.zeros(0)
    Vd = np.concatenate(Vds) if want_vdot and Vds else None
    return V, Vd


def _sample_level_set(sys, cand, box_lo, box_hi, count, rng, max_chunks=400):
    """Uniform points of {V <= 1} inside the box by chunked rejection.

    The accepted sequence is a deterministic function of the RNG stream,
    so a longer request reproduces any shorter one as its prefix.
    """
    accepted = []
    have = 0
    for _ in range(max_chunks):
        if have >= count:
            break
        block = rng.uniform(box_lo, box_hi, size=(256, box_lo.size))
        V, _ = _eval_chunked(sys, cand, block, want_vdot=False)
        good = block[V <= 1.0]
        if len(good):
            accepted.append(good)
            have += len(good)
    if not accepted:
        return np.zeros((0, box_lo.size))
    return np.vstack(accepted)[:count]


def _project_domain(X, box_lo, box_hi, r0):
    """Clip to the box, then push anything inside the puncture out to it."""
    X = np.clip(X, box_lo, box_hi)
    norms = np.linalg.norm(X, axis=1)
    inside = norms < r0
    if np.any(inside):
        idx = np.flatnonzero(inside)
        for i in idx:
            v = X[i]
            nv = norms[i]
            if nv == 0.0:
                v = np.full(v.size, r0 / np.sqrt(v.size))
            else:
                v = v * (r0 / nv)
            X[i] = np.clip(v, box_lo, box_hi)
    return X


def _ascend(sys, cand, X0, box_lo, box_hi, r0, cfg, mode):
    """Batched projected local search.

    mode "gamma": maximize Vdot with an exact penalty on V > 1.
    mode "eta":   minimize V (descent keeps the level constraint).
    Rows evolve independently, so a union of starts dominates a subset.
    """
    S, n = X0.shape
    if S == 0:
        return X0
    X = X0.copy()
    step = 0.02 * float(np.min(box_hi - box_lo)) * np.ones(S)
    # exact penalty sized against the derivative scale seen at the starts
    if mode == "gamma":
        _, Vd0 = _eval_chunked(sys, cand, X0)
        mu_scalar = cfg.penalty * (1.0 + float(np.abs(Vd0).max(initial=0.0)))
    else:
        mu_scalar = 0.0
    mu = np.full(S, mu_scalar)

    def phi(pts, mu_rows):
        V, Vd = _eval_chunked(sys, cand, pts, want_vdot=(mode == "gamma"))
        if mode == "gamma":
            return Vd - mu_rows * np.maximum(V - 1.0, 0.0)
        return -V

    alive = np.ones(S, dtype=bool)
    f_cur = phi(X, mu)
    for _ in range(cfg.max_inner_iters):
        if not np.any(alive):
            break
        idx = np.flatnonzero(alive)
        Xa = X[idx]
        h = cfg.fd_step * (1.0 + np.linalg.norm(Xa, axis=1))
        # central differences, one batched evaluation for all coordinates
        probes = np.empty((2 * n, len(idx), n))
        for j in range(n):
            probes[2 * j] = Xa
            probes[2 * j][:, j] += h
            probes[2 * j + 1] = Xa
            probes[2 * j + 1][:, j] -= h
        vals = phi(probes.reshape(-1, n), np.tile(mu[idx], 2 * n))
        vals = vals.reshape(2 * n, len(idx))
        g = np.stack([(vals[2 * j] - vals[2 * j + 1]) / (2 * h) for j in range(n)], axis=1)
        gn = np.linalg.norm(g, axis=1)
        gn = np.where(gn > 0, gn, 1.0)
        cand_X = _project_domain(Xa + (step[idx] / gn)[:, None] * g, box_lo, box_hi, r0)
        f_new = phi(cand_X, mu[idx])
        better = f_new > f_cur[idx] + 1e-15
        take = idx[better]
        X[take] = cand_X[better]
        f_cur[take] = f_new[better]
        step[take] = np.minimum(step[take] * 1.3, 0.25 * float(np.min(box_hi - box_lo)))
        shrink = idx[~better]
        step[shrink] *= 0.5
        scale = 1.0 + np.linalg.norm(X[idx], axis=1)
        alive[idx] = step[idx] > cfg.local_tol * scale
    return X


def verify(
    sys: DynamicalSystem,
    cand: LyapunovCandidate,
    roi: Roi,
    cfg: VerifierConfig,
    *,
    starts: np.ndarray | None = None,
    train_grid: int | None = None,
    rng: np.random.Generator | None = None,
    collect_trace: bool = False,
) -> VerifierResult:
    """Search the punctured level set for violations of the candidate.

    ``starts`` carries the zero-slack stable samples plus any previous
    counterexamples; random interior starts and the dense audit grid are
    added here.
    """
    rng = rng or np.random.default_rng(0)
    if cfg.restrict_to_roi:
        box_lo, box_hi = roi.lower, roi.upper
    else:
        box_lo, box_hi = cfg.box_inflate * roi.lower, cfg.box_inflate * roi.upper
    r0 = cfg.r0 if cfg.r0 is not None else 1e-3 * roi.half_diagonal

    pool = []
    if starts is not None and len(starts):
        pool.append(np.asarray(starts, dtype=float))
    pool.append(_sample_level_set(sys, cand, box_lo, box_hi, cfg.n_starts, rng))
    X0 = np.vstack(pool) if pool else np.zeros((0, sys.n))
    X0 = _project_domain(X0.copy(), box_lo, box_hi, r0)
    V0, _ = _eval_chunked(sys, cand, X0, want_vdot=False)
    X0 = X0[V0 <= 1.0 + 1e-9]
    n_starts_used = X0.shape[0]

    # Dense audit grid at twice the training resolution.
    audit_ppd = cfg.audit_points_per_dim or (2 * train_grid if train_grid else 33)
    audit_roi = Roi(box_lo, box_hi)
    Xg = grid(audit_roi, audit_ppd)
    Vg, _ = _eval_chunked(sys, cand, Xg, want_vdot=False)
    gmask = (Vg <= 1.0) & (np.linalg.norm(Xg, axis=1) >= r0)
    Xg_in = Xg[gmask]

    if n_starts_used == 0 and Xg_in.shape[0] == 0:
        log.warning("verifier: level set empty inside the search domain")
        return VerifierResult(np.nan, np.nan, None, None, False, 0, degenerate=True)

    cand_pts = [Xg_in] if Xg_in.shape[0] else []
    if n_starts_used:
        Xg_max = _ascend(sys, cand, X0, box_lo, box_hi, r0, cfg, "gamma")
        Xg_min = _ascend(sys, cand, X0, box_lo, box_hi, r0, cfg, "eta")
        cand_pts.extend([X0, Xg_max, Xg_min])
    P = np.vstack(cand_pts)
    V, Vd = _eval_chunked(sys, cand, P)
    feas = (V <= 1.0 + 1e-9) & (np.linalg.norm(P, axis=1) >= r0 * (1 - 1e-12))
    P, V, Vd = P[feas], V[feas], Vd[feas]
    if P.shape[0] == 0:
        return VerifierResult(np.nan, np.nan, None, None, False, n_starts_used, degenerate=True)

    i_max = int(np.argmax(Vd))
    i_min = int(np.argmin(V))
    gamma = float(Vd[i_max])
    eta = float(V[i_min])
    verified = bool(gamma < 0.0 and eta > 0.0)
    trace = None
    if collect_trace:
        trace = {
            "starts": n_starts_used,
            "audit_points_per_dim": audit_ppd,
            "audit_points_in_set": int(Xg_in.shape[0]),
            "gamma_star": gamma,
            "eta_star": eta,
        }
    log.info("verifier: gamma*=%.3e eta*=%.3e (%s)", gamma, eta, "accepted" if verified else "rejected")
    return VerifierResult(
        gamma_star=gamma,
        eta_star=eta,
        argmax_x=P[i_max].copy(),
        argmin_x=P[i_min].copy(),
        verified=verified,
        starts_used=n_starts_used,
        trace=trace,
    )


def save_trace(res: VerifierResult, path: str | Path) -> Path:
    path = Path(path)
    payload = res.to_dict()
    payload["trace"] = res.trace
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return path
