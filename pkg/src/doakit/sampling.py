"""ROI gridding, trajectory classification, and the labeled dataset.

Every grid point is used as an initial condition and simulated until it
either converges into a small ball around the origin (stable) or leaves
a large escape radius / runs out the horizon (unstable).  Horizon
timeouts count as unstable, which keeps the learned level set on the
conservative side.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .integrate import STABLE, StopRule, simulate_batch
from .systems import DynamicalSystem

__all__ = ["Roi", "SimConfig", "SampleSet", "grid", "classify", "build_dataset", "save_dataset", "load_dataset"]

log = logging.getLogger(__name__)

MAX_GRID_POINTS = 100_000_000
_CHUNK = 8192


@dataclass(frozen=True)
class Roi:
    """Axis-aligned box of interest; the origin must lie strictly inside."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float)
        upper = np.asarray(self.upper, dtype=float)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("roi bounds must be two vectors of equal length")
        if not np.all(lower < upper):
            raise ValueError("roi requires lower < upper in every coordinate")
        if not (np.all(lower < 0.0) and np.all(upper > 0.0)):
            raise ValueError("roi must contain the origin strictly inside")

    @property
    def n(self) -> int:
        return self.lower.size

    @property
    def half_diagonal(self) -> float:
        return 0.5 * float(np.linalg.norm(self.upper - self.lower))

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower) & (x <= self.upper), axis=-1)

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True)
class SimConfig:
    """Simulation thresholds used to label initial conditions.

    r_conv = None uses 1e-2 of the ROI half-diagonal.  r_div multiplies
    the ROI half-diagonal to obtain the escape radius.
    """

    integrator: str = "rk45_adaptive"
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    step: float = 1e-2
    t_max: float = 100.0
    r_conv: float | None = None
    r_div: float = 2.0

    def __post_init__(self):
        if self.t_max <= 0:
            raise ValueError("t_max must be positive")
        if self.r_conv is not None and self.r_conv <= 0:
            raise ValueError("r_conv must be positive")
        if self.r_div <= 1:
            raise ValueError("r_div must exceed 1")

    def stop_rule(self, roi: Roi) -> StopRule:
        r_conv = self.r_conv if self.r_conv is not None else 1e-2 * roi.half_diagonal
        return StopRule(r_converge=r_conv, r_escape=self.r_div * roi.half_diagonal, t_max=self.t_max)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class SampleSet:
    """The labeled dataset: stable and unstable states in grid order."""

    stable: np.ndarray    # (N0, n)
    unstable: np.ndarray  # (Ninf, n)
    roi: Roi
    grid_points_per_dim: int

    @property
    def n(self) -> int:
        return self.roi.n

    @property
    def n_stable(self) -> int:
        return self.stable.shape[0]

    @property
    def n_unstable(self) -> int:
        return self.unstable.shape[0]

    @property
    def size(self) -> int:
        return self.n_stable + self.n_unstable


def grid(roi: Roi, n_g: int) -> np.ndarray:
    """Uniform lattice over the ROI, both endpoints included per axis.

    Points are returned in lexicographic order (first coordinate varies
    slowest).
    """
    if n_g < 2:
        raise ValueError("need at least 2 grid points per dimension")
    if n_g ** roi.n > MAX_GRID_POINTS:
        raise ValueError(f"grid of {n_g}^{roi.n} points exceeds the {MAX_GRID_POINTS:.0e} limit")
    axes = [np.linspace(roi.lower[i], roi.upper[i], n_g) for i in range(roi.n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, roi.n)


def classify(sys: DynamicalSystem, x0: np.ndarray, cfg: SimConfig, roi: Roi) -> str:
    """Label one initial condition as 'stable' or 'unstable'."""
    res = simulate_batch(
        sys,
        np.asarray(x0, dtype=float).reshape(1, -1),
        cfg.stop_rule(roi),
        method=cfg.integrator,
        rel_tol=cfg.rel_tol,
        abs_tol=cfg.abs_tol,
        step=cfg.step,
    )
    return "stable" if res.status[0] == STABLE else "unstable"


def _classify_batch(sys: DynamicalSystem, X: np.ndarray, cfg: SimConfig, roi: Roi) -> np.ndarray:
    rule = cfg.stop_rule(roi)
    flags = np.empty(X.shape[0], dtype=bool)
    for start in range(0, X.shape[0], _CHUNK):
        chunk = X[start : start + _CHUNK]
        res = simulate_batch(
            sys, chunk, rule,
            method=cfg.integrator, rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol, step=cfg.step,
        )
        flags[start : start + _CHUNK] = res.stable
    return flags


def build_dataset(sys: DynamicalSystem, roi: Roi, n_g: int, cfg: SimConfig) -> SampleSet:
    """Grid the ROI and classify every point; deterministic grid order."""
    if roi.n != sys.n:
        raise ValueError(f"roi dimension {roi.n} does not match system dimension {sys.n}")
    X = grid(roi, n_g)
    stable_mask = _classify_batch(sys, X, cfg, roi)
    log.info(
        "dataset for %s: %d samples, %d stable / %d unstable",
        sys.name, X.shape[0], int(stable_mask.sum()), int((~stable_mask).sum()),
    )
    return SampleSet(
        stable=X[stable_mask],
        unstable=X[~stable_mask],
        roi=roi,
        grid_points_per_dim=n_g,
    )


def save_dataset(samples: SampleSet, path: str | Path, sys: DynamicalSystem, cfg: SimConfig) -> tuple[Path, Path]:
    """Write the dataset CSV plus a JSON sidecar with the run metadata.

    CSV columns are x1..xn and label (0 = stable, 1 = unstable), rows in
    lexicographic (grid) order with full float precision so reloads are
    bit-exact.
    """
    path = Path(path)
    X = np.vstack([samples.stable, samples.unstable]) if samples.size else np.empty((0, samples.n))
    flags = np.concatenate([np.ones(samples.n_stable, bool), np.zeros(samples.n_unstable, bool)])
    order = np.lexsort(tuple(X[:, i] for i in reversed(range(samples.n)))) if samples.size else np.array([], int)
    X, flags = X[order], flags[order]
    header = ",".join([f"x{i + 1}" for i in range(samples.n)] + ["label"])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row, ok in zip(X, flags):
            fields = [f"{v:.17g}" for v in row] + ["0" if ok else "1"]
            fh.write(",".join(fields) + "\n")
    sidecar = path.with_suffix(".json")
    meta = {
        "roi": samples.roi.to_dict(),
        "grid_points_per_dim": samples.grid_points_per_dim,
        "sim": cfg.to_dict(),
        "system": {"name": sys.name, "n": sys.n, "hash": sys.content_hash()},
        "counts": {"stable": samples.n_stable, "unstable": samples.n_unstable},
    }
    with open(sidecar, "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    return path, sidecar


def load_dataset(path: str | Path) -> tuple[SampleSet, dict]:
    """Load a dataset CSV (+ sidecar) back into a SampleSet."""
    path = Path(path)
    with open(path.with_suffix(".json")) as fh:
        meta = json.load(fh)
    roi = Roi(np.array(meta["roi"]["lower"]), np.array(meta["roi"]["upper"]))
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    X, labels = raw[:, :-1], raw[:, -1]
    samples = SampleSet(
        stable=X[labels == 0],
        unstable=X[labels == 1],
        roi=roi,
        grid_points_per_dim=int(meta["grid_points_per_dim"]),
    )
    return samples, meta
