"""The learner-verifier loop, volume estimates, and run reports.

A run builds the labeled dataset, alternates learner and verifier while
feeding counterexamples back into the stable set, and on acceptance
estimates the level-set volume (Monte Carlo over the box), the
simulated stable volume on a dense grid, and an empirical soundness
audit (simulate points drawn from the level set and count how many
actually reach the origin).
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .admm import AdmmConfig
from .learner import ALPHA_ZERO_TOL, LearnerConfig, LearnerError, LyapunovCandidate, learn
from .lpcore import SolverTolerances
from .sampling import Roi, SampleSet, SimConfig, build_dataset, grid
from .systems import DynamicalSystem, builtin, lift_set, parse_system
from .verifier import VerifierConfig, VerifierResult, counterexample, verify
from .integrate import STABLE, simulate_batch

__all__ = [
    "RunConfig",
    "RunReport",
    "run",
    "volume",
    "true_doa_volume",
    "soundness_audit",
    "export_contour",
    "save_contour_csv",
]

log = logging.getLogger(__name__)

_MC_CHUNK = 100_000
_DEDUP_TOL = 1e-9


@dataclass(frozen=True)
class RunConfig:
    """Everything one estimation run depends on."""

    system: str                       # builtin name or DSL source text
    roi_lower: tuple
    roi_upper: tuple
    n_g: int = 30
    d: int = 1
    epsilon: float = 1e-3
    delta: float = 0.1
    i_max: int = 50
    system_n: int | None = None       # required for DSL sources
    system_params: dict = field(default_factory=dict)
    sim: SimConfig = field(default_factory=SimConfig)
    verifier: VerifierConfig = field(default_factory=VerifierConfig)
    admm_m: int | None = None         # None = direct learner solve
    admm_rho: float = 1.0
    admm_eps_bar: float = 1e-4
    admm_max_iters: int = 500
    volume_samples: int = 1_000_000
    audit_samples: int = 1000
    true_doa_points_per_dim: int = 0  # 0 skips the simulated volume
    seed: int = 0
    route_counterexamples_by_simulation: bool = False

    def __post_init__(self):
        if self.i_max < 1:
            raise ValueError("i_max must be >= 1")
        if self.volume_samples < 10_000:
            raise ValueError("volume_samples must be at least 10000")

    def make_system(self) -> DynamicalSystem:
        from .systems import BUILTIN_NAMES

        if self.system in BUILTIN_NAMES:
            return builtin(self.system)
        if self.system_n is None:
            raise ValueError("system_n is required for a DSL system source")
        return parse_system(self.system, self.system_n, self.system_params)

    def make_roi(self) -> Roi:
        return Roi(np.asarray(self.roi_lower, dtype=float), np.asarray(self.roi_upper, dtype=float))

    def admm_config(self) -> AdmmConfig | None:
        if self.admm_m is None:
            return None
        return AdmmConfig(m=self.admm_m, rho=self.admm_rho, eps_bar=self.admm_eps_bar,
                          max_iters=self.admm_max_iters)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["sim"] = self.sim.to_dict()
        d["verifier"] = dataclasses.asdict(self.verifier)
        return d


@dataclass
class RunReport:
    config: dict
    verified: bool
    iterations_used: int
    history: list                      # per-iteration gamma*/eta*/counterexample
    candidate: dict | None
    dataset_counts: dict
    estimated_volume: float | None = None
    volume_std_error: float | None = None
    true_doa_volume: float | None = None
    audit_pass_rate: float | None = None
    timings: dict = field(default_factory=dict)

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(dataclasses.asdict(self), indent=2, allow_nan=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def _mc_fraction(predicate, roi: Roi, M: int, rng: np.random.Generator) -> tuple[float, float]:
    """Monte Carlo fraction of the box where predicate holds, with s.e."""
    hits = 0
    done = 0
    while done < M:
        k = min(_MC_CHUNK, M - done)
        pts = rng.uniform(roi.lower, roi.upper, size=(k, roi.n))
        hits += int(np.count_nonzero(predicate(pts)))
        done += k
    frac = hits / M
    se = float(np.sqrt(max(frac * (1.0 - frac), 0.0) / M))
    return frac, se


def volume(
    cand: LyapunovCandidate,
    roi: Roi,
    M: int,
    seed: int | np.random.Generator = 0,
    *,
    sys: DynamicalSystem,
) -> tuple[float, float]:
    """Monte Carlo volume of {V <= 1} inside the box, with standard error."""
    if M < 10_000:
        raise ValueError("volume estimation needs at least 10000 samples")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    def inside(pts):
        ls = lift_set(sys, pts, cand.d)
        return cand.V(ls.z) <= 1.0

    frac, se = _mc_fraction(inside, roi, M, rng)
    return roi.volume * frac, roi.volume * se


def true_doa_volume(sys: DynamicalSystem, roi: Roi, n_g: int, cfg: SimConfig) -> float:
    """Stable fraction of a dense simulation grid times the box volume."""
    ds = build_dataset(sys, roi, n_g, cfg)
    return roi.volume * ds.n_stable / ds.size


def soundness_audit(
    sys: DynamicalSystem,
    cand: LyapunovCandidate,
    roi: Roi,
    M_audit: int,
    cfg: SimConfig,
    seed: int | np.random.Generator = 0,
) -> float:
    """Fraction of uniformly drawn level-set points that converge.

    Points are drawn uniformly from {V <= 1} inside the box by rejection
    and simulated with the classification thresholds; a valid candidate
    should send essentially all of them to the origin.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pts = []
    have = 0
    for _ in range(2000):
        if have >= M_audit:
            break
        block = rng.uniform(roi.lower, roi.upper, size=(4096, roi.n))
        ls = lift_set(sys, block, cand.d)
        good = block[cand.V(ls.z) <= 1.0]
        if len(good):
            pts.append(good)
            have += len(good)
    if have == 0:
        log.warning("soundness audit: level set too small to sample")
        return 0.0
    X = np.vstack(pts)[:M_audit]
    res = simulate_batch(sys, X, cfg.stop_rule(roi), method=cfg.integrator,
                         rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol, step=cfg.step)
    return float(np.mean(res.status == STABLE))


def run(cfg: RunConfig) -> RunReport:
    """Execute the full estimation loop and assemble the report."""
    t_start = time.perf_counter()
    sys = cfg.make_system()
    roi = cfg.make_roi()
    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    rng_verify = np.random.default_rng(seeds[0])
    rng_volume = np.random.default_rng(seeds[1])
    rng_audit = np.random.default_rng(seeds[2])
    timings = {}

    t0 = time.perf_counter()
    samples = build_dataset(sys, roi, cfg.n_g, cfg.sim)
    timings["sample_s"] = time.perf_counter() - t0
    if samples.n_stable == 0:
        raise LearnerError("no stable samples in the dataset; check the ROI and thresholds")

    learner_cfg = LearnerConfig(epsilon=cfg.epsilon, delta=cfg.delta)
    admm_cfg = cfg.admm_config()
    ces: list[np.ndarray] = []
    history = []
    cand = None
    result = None
    verified = False
    timings["learn_s"] = 0.0
    timings["verify_s"] = 0.0
    iterations = 0

    for i in range(cfg.i_max):
        iterations = i + 1
        t0 = time.perf_counter()
        ce_arr = np.array(ces) if ces else None
        cand = learn(sys, samples, cfg.d, learner_cfg, counterexamples=ce_arr, admm_cfg=admm_cfg)
        timings["learn_s"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        n_stable_total = samples.n_stable + len(ces)
        stable_all = samples.stable if not ces else np.vstack([samples.stable, np.array(ces)])
        starts = stable_all[cand.alpha[:n_stable_total] <= ALPHA_ZERO_TOL]
        if ces:
            starts = np.vstack([starts, np.array(ces)])
        result = verify(sys, cand, roi, cfg.verifier, starts=starts,
                        train_grid=cfg.n_g, rng=rng_verify)
        timings["verify_s"] += time.perf_counter() - t0

        entry = {"iteration": iterations, "gamma_star": result.gamma_star,
                 "eta_star": result.eta_star, "counterexample": None}
        if result.verified:
            verified = True
            history.append(entry)
            break
        ce = counterexample(result)
        if ce is None:
            log.warning("verifier rejected the candidate without a usable counterexample")
            history.append(entry)
            break
        existing = np.vstack([stable_all, samples.unstable]) if samples.n_unstable else stable_all
        dists = np.linalg.norm(existing - ce, axis=1)
        if float(dists.min(initial=np.inf)) <= _DEDUP_TOL:
            log.warning("counterexample duplicates an existing sample; stopping")
            history.append(entry)
            break
        if cfg.route_counterexamples_by_simulation:
            from .sampling import classify

            if classify(sys, ce, cfg.sim, roi) == "unstable":
                samples = dataclasses.replace(samples, unstable=np.vstack([samples.unstable, ce]))
                entry["counterexample"] = ce.tolist()
                history.append(entry)
                continue
        ces.append(np.asarray(ce, dtype=float))
        entry["counterexample"] = ce.tolist()
        history.append(entry)

    report = RunReport(
        config=cfg.to_dict(),
        verified=verified,
        iterations_used=iterations,
        history=history,
        candidate=None,
        dataset_counts={"N": samples.size + len(ces), "N0": samples.n_stable + len(ces),
                        "Ninf": samples.n_unstable},
    )
    if verified and cand is not None:
        from .learner import save_candidate, triangle_indices

        iu, ju, _ = triangle_indices(cand.p)
        report.candidate = {
            "n": cand.n, "d": cand.d, "p": cand.p,
            "P_upper": cand.P[iu, ju].tolist(),
            "objective": cand.objective,
            "covered": cand.covered,
        }
        t0 = time.perf_counter()
        vol, se = volume(cand, roi, cfg.volume_samples, rng_volume, sys=sys)
        report.estimated_volume = vol
        report.volume_std_error = se
        timings["volume_s"] = time.perf_counter() - t0
        if cfg.true_doa_points_per_dim:
            t0 = time.perf_counter()
            report.true_doa_volume = true_doa_volume(sys, roi, cfg.true_doa_points_per_dim, cfg.sim)
            timings["true_volume_s"] = time.perf_counter() - t0
        if cfg.audit_samples:
            t0 = time.perf_counter()
            report.audit_pass_rate = soundness_audit(sys, cand, roi, cfg.audit_samples,
                                                     cfg.sim, rng_audit)
            timings["audit_s"] = time.perf_counter() - t0
    timings["total_s"] = time.perf_counter() - t_start
    report.timings = timings
    return report


# ----------------------------------------------------------------------------
# level-set contour extraction (marching squares on a 2-D slice)

_SEGMENT_TABLE = {
    1: [("left", "bottom")],
    2: [("bottom", "right")],
    3: [("left", "right")],
    4: [("top", "right")],
    5: [("left", "top"), ("bottom", "right")],
    6: [("top", "bottom")],
    7: [("left", "top")],
    8: [("left", "top")],
    9: [("top", "bottom")],
    10: [("left", "bottom"), ("top", "right")],
    11: [("top", "right")],
    12: [("left", "right")],
    13: [("bottom", "right")],
    14: [("left", "bottom")],
}


def _interp(p1, p2, v1, v2, level):
    t = 0.5 if v2 == v1 else (level - v1) / (v2 - v1)
    return (p1[0] + t * (p2[0] - p1[0]), p1[1] + t * (p2[1] - p1[1]))


def _marching_squares(xs, ys, F, level):
    """Line segments of {F = level} on the grid (xs x ys)."""
    segs = []
    for i in range(len(xs) - 1):
        for j in range(len(ys) - 1):
            v = [F[i, j], F[i + 1, j], F[i + 1, j + 1], F[i, j + 1]]  # bl, br, tr, tl
            if not np.all(np.isfinite(v)):
                continue
            case = (v[0] < level) | ((v[1] < level) << 1) | ((v[2] < level) << 2) | ((v[3] < level) << 3)
            case = int(case)
            if case in (0, 15):
                continue
            corners = {
                "bl": (xs[i], ys[j]), "br": (xs[i + 1], ys[j]),
                "tr": (xs[i + 1], ys[j + 1]), "tl": (xs[i], ys[j + 1]),
            }
            vals = {"bl": v[0], "br": v[1], "tr": v[2], "tl": v[3]}
            edge_pts = {
                "bottom": _interp(corners["bl"], corners["br"], vals["bl"], vals["br"], level),
                "right": _interp(corners["br"], corners["tr"], vals["br"], vals["tr"], level),
                "top": _interp(corners["tl"], corners["tr"], vals["tl"], vals["tr"], level),
                "left": _interp(corners["bl"], corners["tl"], vals["bl"], vals["tl"], level),
            }
            table_case = case
            if case in (5, 10):
                # saddle cell: the centre value picks the topology
                center = 0.25 * sum(v)
                if center >= level:
                    table_case = 15 - case
            for e1, e2 in _SEGMENT_TABLE[table_case]:
                segs.append((edge_pts[e1], edge_pts[e2]))
    return segs


def _chain_segments(segs, tol=1e-9):
    """Join segments that share endpoints into polylines."""
    def key(pt):
        return (round(pt[0] / tol), round(pt[1] / tol))

    remaining = {idx: s for idx, s in enumerate(segs)}
    by_end = {}
    for idx, (a, b) in remaining.items():
        by_end.setdefault(key(a), []).append(idx)
        by_end.setdefault(key(b), []).append(idx)
    polylines = []
    while remaining:
        idx, (a, b) = next(iter(remaining.items()))
        del remaining[idx]
        line = [a, b]
        for _ in range(2):  # extend forward, then flip and extend again
            while True:
                k = key(line[-1])
                nxt = [j for j in by_end.get(k, []) if j in remaining]
                if not nxt:
                    break
                j = nxt[0]
                a2, b2 = remaining.pop(j)
                line.append(b2 if key(a2) == k else a2)
            line.reverse()
        polylines.append(np.array(line))
    return polylines


def export_contour(
    cand: LyapunovCandidate,
    roi: Roi,
    *,
    sys: DynamicalSystem,
    axes: tuple[int, int] = (0, 1),
    fixed: np.ndarray | None = None,
    resolution: int = 200,
    level: float = 1.0,
) -> list[np.ndarray]:
    """Polylines of {V = level} on a 2-D slice of the box.

    axes selects the two free coordinates; every other coordinate is
    held at the corresponding entry of ``fixed`` (default 0).
    """
    i, j = axes
    n = roi.n
    if i == j or not (0 <= i < n and 0 <= j < n):
        raise ValueError("axes must be two distinct coordinate indices")
    base = np.zeros(n) if fixed is None else np.asarray(fixed, dtype=float).copy()
    xs = np.linspace(roi.lower[i], roi.upper[i], resolution)
    ys = np.linspace(roi.lower[j], roi.upper[j], resolution)
    XX, YY = np.meshgrid(xs, ys, indexing="ij")
    pts = np.tile(base, (XX.size, 1))
    pts[:, i] = XX.ravel()
    pts[:, j] = YY.ravel()
    ls = lift_set(sys, pts, cand.d)
    F = cand.V(ls.z).reshape(XX.shape)
    segs = _marching_squares(xs, ys, F, level)
    if not segs:
        log.warning("contour export: the level set does not intersect this slice")
        return []
    return _chain_segments(segs)


def save_contour_csv(polylines: list[np.ndarray], path: str | Path, axes: tuple[int, int] = (0, 1)) -> Path:
    path = Path(path)
    i, j = axes
    with open(path, "w") as fh:
        fh.write(f"polyline,x{i + 1},x{j + 1}\n")
        for pid, line in enumerate(polylines):
            for x, y in line:
                fh.write(f"{pid},{x:.17g},{y:.17g}\n")
    return path
